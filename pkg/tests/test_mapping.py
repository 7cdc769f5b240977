"""Tests for the sliding voxel map: raycasting, fusion, inflation queries."""

import numpy as np
import pytest

from safeflight.mapping import FREE, OCCUPIED, UNKNOWN, VoxelMap, VoxelState


def exact_cells(m, o, e):
    """Oracle: the limit of infinitely dense point sampling of the segment.

    Splits [0, 1] at every lattice-plane crossing; each open piece lies in a
    single cell, read off its midpoint. Endpoints sampled directly.
    """
    o = np.asarray(o, float)
    e = np.asarray(e, float)
    d = e - o
    ts = {0.0, 1.0}
    for ax in range(3):
        if d[ax] == 0.0:
            continue
        k0 = int(np.floor((min(o[ax], e[ax]) - m.lower[ax]) / m.resolution)) - 1
        k1 = int(np.ceil((max(o[ax], e[ax]) - m.lower[ax]) / m.resolution)) + 1
        for k in range(k0, k1 + 1):
            t = (m.lower[ax] + k * m.resolution - o[ax]) / d[ax]
            if 0.0 < t < 1.0:
                ts.add(float(t))
    ts = sorted(ts)
    cells = set()
    for a, b in zip(ts[:-1], ts[1:]):
        idx = m.world_to_voxel(o + 0.5 * (a + b) * d)
        if idx is not None:
            cells.add(idx)
    for p in (o, e):
        idx = m.world_to_voxel(p)
        if idx is not None:
            cells.add(idx)
    return cells


class TestRaycast:
    def test_matches_exact_sampling_limit(self):
        """Traversal must touch exactly the cells the segment passes through."""
        rng = np.random.default_rng(21)
        m = VoxelMap(center=(0, 0, 0), dims=(20, 20, 20), resolution=0.25)
        lo, hi = m.lower, m.upper
        for k in range(200):
            # mix of interior and boundary-crossing segments
            o = rng.uniform(lo - 0.5, hi + 0.5)
            e = rng.uniform(lo - 0.5, hi + 0.5)
            if k % 3 == 0:
                o = rng.uniform(lo + 0.1, hi - 0.1)
            got, reached = m.ray_cells(o, e)
            assert set(got) == exact_cells(m, o, e), (k, o, e)
            assert reached == (m.world_to_voxel(e) is not None), (k, o, e)
            # visit order has no duplicates
            assert len(got) == len(set(got))

    def test_sampled_points_always_covered(self):
        # every finite sample of the segment must land in a visited cell
        rng = np.random.default_rng(31)
        m = VoxelMap(center=(0, 0, 0), dims=(16, 16, 16), resolution=0.25)
        for _ in range(50):
            o = rng.uniform(m.lower + 0.05, m.upper - 0.05)
            e = rng.uniform(m.lower + 0.05, m.upper - 0.05)
            got, _ = m.ray_cells(o, e)
            got = set(got)
            for t in np.linspace(0.0, 1.0, 500):
                idx = m.world_to_voxel(o + t * (e - o))
                assert idx in got, (o, e, t)

    def test_axis_aligned_and_degenerate(self):
        m = VoxelMap(center=(0, 0, 0), dims=(8, 8, 8), resolution=0.5)
        got, reached = m.ray_cells((-1.9, 0.1, 0.1), (1.9, 0.1, 0.1))
        assert reached
        assert got == [(i, 4, 4) for i in range(8)]
        # zero-length ray: just the containing cell
        got, reached = m.ray_cells((0.1, 0.1, 0.1), (0.1, 0.1, 0.1))
        assert got == [(4, 4, 4)] and reached

    def test_corner_tie_steps_diagonally(self):
        # diagonal through exact cell corners must not visit side cells,
        # mirroring how floor() classifies points on the corner itself
        m = VoxelMap(center=(0, 0, 0), dims=(8, 8, 8), resolution=0.5)
        got, reached = m.ray_cells((-1.75, -1.75, 0.25), (1.75, 1.75, 0.25))
        assert reached
        assert got == [(i, i, 4) for i in range(8)]

    def test_updates_mark_free_then_occupied(self):
        m = VoxelMap(center=(0, 0, 0), dims=(12, 12, 12), resolution=0.25)
        assert m.raycast_update((0.01, 0.01, 0.01), (1.2, 0.01, 0.01), True)
        cells, reached = m.ray_cells((0.01, 0.01, 0.01), (1.2, 0.01, 0.01))
        assert reached
        for c in cells[:-1]:
            assert m.cells[c] == FREE
        assert m.cells[cells[-1]] == OCCUPIED
        # a miss ray marks its endpoint cell free as well
        m2 = VoxelMap(center=(0, 0, 0), dims=(12, 12, 12), resolution=0.25)
        m2.raycast_update((0.01, 0.01, 0.01), (1.2, 0.01, 0.01), False)
        cells2, _ = m2.ray_cells((0.01, 0.01, 0.01), (1.2, 0.01, 0.01))
        for c in cells2:
            assert m2.cells[c] == FREE

    def test_origin_outside_rejected(self):
        m = VoxelMap(center=(0, 0, 0), dims=(8, 8, 8), resolution=0.25)
        assert not m.raycast_update((50.0, 0.0, 0.0), (0.0, 0.0, 0.0), False)
        assert np.all(m.cells == UNKNOWN)

    def test_occupied_is_sticky(self):
        m = VoxelMap(center=(0, 0, 0), dims=(12, 12, 12), resolution=0.25)
        m.raycast_update((0.01, 0.01, 0.01), (1.0, 0.01, 0.01), True)
        hit_cell = m.world_to_voxel((1.0, 0.01, 0.01))
        assert m.cells[hit_cell] == OCCUPIED
        # later miss ray straight through the same cell cannot clear it
        m.raycast_update((0.01, 0.01, 0.01), (1.4, 0.01, 0.01), False)
        assert m.cells[hit_cell] == OCCUPIED

    def test_frame_occupied_wins_within_frame(self):
        # hit endpoint and a crossing miss ray in one frame: order must not matter
        for order in (0, 1):
            m = VoxelMap(center=(0, 0, 0), dims=(12, 12, 12), resolution=0.25)
            ends = np.array([[1.0, 0.01, 0.01], [1.4, 0.01, 0.01]])
            hits = np.array([True, False])
            if order:
                ends, hits = ends[::-1].copy(), hits[::-1].copy()
            assert m.apply_frame((0.01, 0.01, 0.01), ends, hits)
            assert m.cells[m.world_to_voxel((1.0, 0.01, 0.01))] == OCCUPIED


def brute_classify(m, p, radius):
    """Oracle: scan every lattice cell whose center could be within radius.

    The containing cell always counts, whatever the radius.
    """
    p = np.asarray(p, float)
    base = np.floor((p - m.lower) / m.resolution).astype(int)
    r_cells = int(np.ceil(radius / m.resolution)) + 2
    found_unknown = False
    for dx in range(-r_cells, r_cells + 1):
        for dy in range(-r_cells, r_cells + 1):
            for dz in range(-r_cells, r_cells + 1):
                idx = base + np.array([dx, dy, dz])
                center = m.lower + (idx + 0.5) * m.resolution
                own = dx == 0 and dy == 0 and dz == 0
                if not own and np.linalg.norm(center - p) > radius + 1e-12:
                    continue
                if np.all(idx >= 0) and np.all(idx < m.dims):
                    s = m.cells[tuple(idx)]
                    if s == OCCUPIED:
                        return OCCUPIED
                    if s == UNKNOWN:
                        found_unknown = True
                else:
                    found_unknown = True
    return UNKNOWN if found_unknown else FREE


def random_map(rng, dims=(14, 14, 10), res=0.25):
    m = VoxelMap(center=(0, 0, 0), dims=dims, resolution=res,
                 inflation_radius=0.3)
    states = rng.choice([UNKNOWN, FREE, OCCUPIED], size=dims,
                        p=[0.25, 0.6, 0.15]).astype(np.uint8)
    m.cells[:] = states
    m._cache.clear()
    return m


class TestClassify:
    def test_matches_brute_force(self):
        rng = np.random.default_rng(22)
        for _ in range(6):
            m = random_map(rng)
            for radius in (0.3, 0.55):
                pts = rng.uniform(m.lower - 0.3, m.upper + 0.3, size=(40, 3))
                for p in pts:
                    got = m.classify_inflated(p, radius)
                    want = brute_classify(m, p, radius)
                    assert got == want, (p, radius)

    def test_precedence_occupied_over_unknown(self):
        m = VoxelMap(center=(0, 0, 0), dims=(8, 8, 8), resolution=0.25,
                     inflation_radius=0.3)
        m.cells[:] = FREE
        m.set_state((4, 4, 4), OCCUPIED)
        m.set_state((5, 4, 4), UNKNOWN)
        p = m.voxel_center((4, 4, 4)) + np.array([0.12, 0.0, 0.0])
        assert m.classify_inflated(p) == OCCUPIED

    def test_outside_map_is_unknown(self):
        m = VoxelMap(center=(0, 0, 0), dims=(8, 8, 8), resolution=0.25)
        m.cells[:] = FREE
        assert m.classify_inflated((100.0, 0.0, 0.0)) == UNKNOWN
        # free interior point whose inflation ball pokes out of the map
        edge = m.upper - 0.05
        assert m.classify_inflated(edge) == UNKNOWN

    def test_radius_override_widens(self):
        m = VoxelMap(center=(0, 0, 0), dims=(12, 12, 12), resolution=0.25,
                     inflation_radius=0.2)
        m.cells[:] = FREE
        m.set_state((9, 6, 6), OCCUPIED)
        p = m.voxel_center((6, 6, 6))
        assert m.classify_inflated(p) == FREE
        assert m.classify_inflated(p, radius=1.0) == OCCUPIED

    def test_monotone_in_radius(self):
        # growing the radius can only move a point toward occupied/unknown
        severity = {FREE: 0, UNKNOWN: 1, OCCUPIED: 2}
        rng = np.random.default_rng(23)
        m = random_map(rng)
        radii = [0.0, 0.2, 0.4, 0.7]
        for p in rng.uniform(m.lower + 0.8, m.upper - 0.8, size=(25, 3)):
            occ_seen = False
            prev_occ = -1
            levels = [m.classify_inflated(p, r) for r in radii]
            occ_rank = [1 if s == OCCUPIED else 0 for s in levels]
            assert occ_rank == sorted(occ_rank), (p, levels)

    def test_classify_points_batch(self):
        rng = np.random.default_rng(24)
        m = random_map(rng)
        pts = rng.uniform(m.lower, m.upper, size=(30, 3))
        batch = m.classify_points(pts)
        single = [m.classify_inflated(p) for p in pts]
        assert list(batch) == single


class TestSegmentClassify:
    def test_detects_wall(self):
        m = VoxelMap(center=(0, 0, 0), dims=(16, 16, 8), resolution=0.25,
                     inflation_radius=0.1)
        m.cells[:] = FREE
        m.cells[8, :, :] = OCCUPIED
        m._cache.clear()
        assert m.segment_classify((-1.5, 0.1, 0.1), (1.5, 0.1, 0.1), {OCCUPIED})
        assert not m.segment_classify((-1.5, 0.1, 0.1), (-0.9, 0.1, 0.1), {OCCUPIED})

    def test_detects_unknown_pocket(self):
        m = VoxelMap(center=(0, 0, 0), dims=(16, 16, 8), resolution=0.25,
                     inflation_radius=0.1)
        m.cells[:] = FREE
        m.cells[10, 8, 4] = UNKNOWN
        m._cache.clear()
        p = m.voxel_center((10, 8, 4))
        assert m.segment_classify(p - [0.6, 0, 0], p + [0.6, 0, 0],
                                  {UNKNOWN, OCCUPIED})
        assert not m.segment_classify(p - [0.6, 0, 0], p + [0.6, 0, 0], {OCCUPIED})


class TestRecenter:
    def test_shift_preserves_overlap(self):
        rng = np.random.default_rng(25)
        m = random_map(rng, dims=(10, 10, 10))
        before = m.cells.copy()
        old_center = m.center.copy()
        m.recenter(old_center + np.array([0.5, -0.25, 0.0]))
        shift = np.array([2, -1, 0])
        np.testing.assert_array_equal(
            (m.center - old_center) / m.resolution, shift)
        for ix in range(10):
            for iy in range(10):
                src = np.array([ix, iy, 0]) + shift
                if np.all(src >= 0) and np.all(src < 10):
                    assert m.cells[ix, iy, 0] == before[tuple(src)]
                else:
                    assert m.cells[ix, iy, 0] == UNKNOWN

    def test_small_move_is_noop(self):
        rng = np.random.default_rng(26)
        m = random_map(rng)
        before = m.cells.copy()
        m.recenter(m.center + 0.4 * m.resolution)
        np.testing.assert_array_equal(m.cells, before)

    def test_world_positions_survive_shift(self):
        # the same world point keeps its state when it stays in the window
        m = VoxelMap(center=(0, 0, 0), dims=(12, 12, 12), resolution=0.25)
        m.raycast_update((0.01, 0.01, 0.01), (1.0, 0.01, 0.01), True)
        p_occ = np.array([1.0, 0.01, 0.01])
        assert m.classify_inflated(p_occ, radius=0.0) == OCCUPIED
        m.recenter((0.75, 0.0, 0.0))
        assert m.classify_inflated(p_occ, radius=0.0) == OCCUPIED


class TestGeometry:
    def test_world_to_voxel_examples(self):
        m = VoxelMap(center=(0, 0, 0), dims=(8, 8, 8), resolution=0.5)
        assert np.allclose(m.lower, [-2.0, -2.0, -2.0])
        assert m.world_to_voxel((-2.0, -2.0, -2.0)) == (0, 0, 0)
        assert m.world_to_voxel((0.0, 0.0, 0.0)) == (4, 4, 4)  # boundary -> upper cell
        assert m.world_to_voxel((1.99, -0.01, 0.49)) == (7, 3, 4)
        assert m.world_to_voxel((2.0, 0.0, 0.0)) is None
        assert m.world_to_voxel((-2.01, 0.0, 0.0)) is None
        np.testing.assert_allclose(m.voxel_center((0, 0, 0)), [-1.75] * 3)

    def test_center_snaps_to_lattice(self):
        m = VoxelMap(center=(0.13, -0.11, 0.0), dims=(8, 8, 8), resolution=0.25)
        np.testing.assert_allclose(m.center, [0.25, 0.0, 0.0])

    def test_rejects_bad_params(self):
        with pytest.raises(ValueError):
            VoxelMap(dims=(0, 8, 8))
        with pytest.raises(ValueError):
            VoxelMap(resolution=0.0)
        with pytest.raises(ValueError):
            VoxelMap(inflation_radius=-0.1)


class TestMasksAndSnapshots:
    def test_masks_match_brute_force(self):
        rng = np.random.default_rng(27)
        m = random_map(rng, dims=(9, 9, 7))
        radius = 0.5
        occ, unk = m.inflated_masks(radius)
        r_cells = int(np.ceil(radius / m.resolution)) + 1
        for ix in range(9):
            for iy in range(9):
                for iz in range(7):
                    want_occ = False
                    want_unk = False
                    for dx in range(-r_cells, r_cells + 1):
                        for dy in range(-r_cells, r_cells + 1):
                            for dz in range(-r_cells, r_cells + 1):
                                if (dx * dx + dy * dy + dz * dz) * m.resolution ** 2 \
                                        > radius ** 2 + 1e-12:
                                    continue
                                j = (ix + dx, iy + dy, iz + dz)
                                if all(0 <= j[k] < m.dims[k] for k in range(3)):
                                    if m.cells[j] == OCCUPIED:
                                        want_occ = True
                                    elif m.cells[j] == UNKNOWN:
                                        want_unk = True
                                else:
                                    want_unk = True
                    assert occ[ix, iy, iz] == want_occ, (ix, iy, iz)
                    assert unk[ix, iy, iz] == want_unk, (ix, iy, iz)

    def test_masks_cached_until_update(self):
        rng = np.random.default_rng(28)
        m = random_map(rng)
        occ1, _ = m.inflated_masks(0.3)
        occ2, _ = m.inflated_masks(0.3)
        assert occ1 is occ2
        m.set_state((0, 0, 0), OCCUPIED)
        occ3, _ = m.inflated_masks(0.3)
        assert occ3 is not occ1

    def test_snapshot_is_independent(self):
        rng = np.random.default_rng(29)
        m = random_map(rng)
        snap = m.snapshot()
        before = snap.cells.copy()
        m.raycast_update(m.center, m.center + np.array([1.0, 0.0, 0.0]), True)
        np.testing.assert_array_equal(snap.cells, before)


def test_dump_slices_golden():
    m = VoxelMap(center=(0, 0, 0), dims=(3, 2, 1), resolution=0.5)
    m.set_state((0, 0, 0), FREE)
    m.set_state((1, 0, 0), OCCUPIED)
    m.set_state((2, 1, 0), FREE)
    expected = "z=0\n??.\n.#?\n"
    assert m.dump_slices() == expected


def test_state_constants():
    assert VoxelState.UNKNOWN == 0
    assert VoxelState.FREE == 1
    assert VoxelState.OCCUPIED == 2
