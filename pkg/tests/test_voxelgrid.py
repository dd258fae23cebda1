import numpy as np
import pytest

from spikeyolo.errors import OutOfRoi
from spikeyolo.pointcloud import Point, PointCloud, round_trip_time
from spikeyolo.voxelgrid import (
    DEFAULT_GRID,
    GridSpec,
    NO_SPIKE,
    SpikeTensor,
    TensorFormatError,
    load_tensor,
    save_tensor,
    tensor_from_bytes,
    tensor_to_bytes,
    voxel_index,
    voxel_indices,
    voxelize,
)

SMALL = GridSpec(dims=(8, 8, 4))


class TestGridSpec:
    def test_default_cell_sizes(self):
        dx, dy, dz = DEFAULT_GRID.cell_size
        assert dx == 0.078125
        assert dy == 0.078125
        assert dz == pytest.approx(4.0 / 21.0, rel=1e-15)

    def test_default_dims(self):
        assert DEFAULT_GRID.dims == (768, 1024, 21)

    def test_max_round_trip_covers_roi(self):
        # the far corner with |z| largest is (60, +-40, -2.73)
        t_max = DEFAULT_GRID.max_round_trip
        assert t_max == pytest.approx(4.814176050408451e-07, rel=1e-12)
        assert t_max >= round_trip_time(Point(60, 40, 1.27))

    def test_bad_dims(self):
        with pytest.raises(ValueError):
            GridSpec(dims=(0, 8, 4))


class TestVoxelIndex:
    def test_origin_cell(self):
        assert voxel_index(Point(0.04, -39.96, -2.68)) == (0, 0, 0)

    def test_far_corner_cell(self):
        assert voxel_index(Point(59.999, 39.999, 1.269)) == (767, 1023, 20)

    def test_boundary_excluded(self):
        with pytest.raises(OutOfRoi):
            voxel_index(Point(60.0, 0.0, 0.0))

    def test_indices_in_range(self):
        rng = np.random.default_rng(2)
        xyz = rng.uniform([0, -40, -2.73], [60, 40, 1.27], size=(500, 3))
        xyz = xyz[DEFAULT_GRID.roi.contains(xyz)]
        idx = voxel_indices(xyz, DEFAULT_GRID)
        assert (idx >= 0).all()
        assert (idx < np.array(DEFAULT_GRID.dims)).all()


def small_cloud(rows):
    return PointCloud(np.asarray(rows, dtype=np.float32))


class TestVoxelize:
    def test_empty_cloud_paper_literal(self):
        t = voxelize(small_cloud(np.zeros((0, 4))), SMALL)
        assert (t.values == 0.0).all()

    def test_empty_cloud_sentinel(self):
        t = voxelize(small_cloud(np.zeros((0, 4))), SMALL, empty_mode="sentinel")
        assert np.isinf(t.values).all()

    def test_single_point(self):
        p = (10.0, 5.0, 0.0, 0.3)
        t = voxelize(small_cloud([p]), SMALL)
        idx = voxel_index(Point(*p[:3]), SMALL)
        expected = round_trip_time(Point(np.float32(p[0]), np.float32(p[1]), np.float32(p[2])))
        assert t.values[idx] == pytest.approx(expected, rel=1e-12)
        rest = t.values.copy()
        rest[idx] = 0.0
        assert (rest == 0.0).all()

    def test_two_points_same_voxel_membership_and_determinism(self):
        a = (10.0, 5.0, 0.0, 0.1)
        b = (10.01, 5.01, 0.01, 0.9)
        cloud = small_cloud([a, b])
        idx = voxel_index(Point(*a[:3]), SMALL)
        assert voxel_index(Point(*b[:3]), SMALL) == idx
        candidates = {
            round_trip_time(Point(*np.asarray(a[:3], dtype=np.float32))),
            round_trip_time(Point(*np.asarray(b[:3], dtype=np.float32))),
        }
        t1 = voxelize(cloud, SMALL, seed=42)
        t2 = voxelize(cloud, SMALL, seed=42)
        assert t1.values[idx] in candidates
        assert np.array_equal(t1.values, t2.values)

    def test_membership_oracle(self):
        rng = np.random.default_rng(3)
        pts = rng.uniform([0, -40, -2.73, 0], [60, 40, 1.27, 1], size=(400, 4)).astype(np.float32)
        cloud = small_cloud(pts)
        t = voxelize(cloud, SMALL, seed=9)
        idx = voxel_indices(cloud.xyz, SMALL)
        by_voxel = {}
        for row, (i, j, k) in zip(cloud.xyzr, idx):
            by_voxel.setdefault((i, j, k), []).append(
                round_trip_time(Point(row[0], row[1], row[2]))
            )
        for (i, j, k), times in by_voxel.items():
            assert any(t.values[i, j, k] == pytest.approx(v, rel=1e-12) for v in times)
        occupied = set(by_voxel)
        for flat in range(t.values.size):
            ijk = np.unravel_index(flat, t.values.shape)
            if tuple(int(v) for v in ijk) not in occupied:
                assert t.values[ijk] == 0.0

    def test_order_independence(self):
        rng = np.random.default_rng(4)
        pts = rng.uniform([0, -40, -2.73, 0], [60, 40, 1.27, 1], size=(300, 4)).astype(np.float32)
        cloud = small_cloud(pts)
        shuffled = small_cloud(pts[rng.permutation(len(pts))])
        t1 = voxelize(cloud, SMALL, seed=5)
        t2 = voxelize(shuffled, SMALL, seed=5)
        assert np.array_equal(t1.values, t2.values)

    def test_normalized_range(self):
        rng = np.random.default_rng(5)
        pts = rng.uniform([0, -40, -2.73, 0], [60, 40, 1.27, 1], size=(200, 4)).astype(np.float32)
        t = voxelize(small_cloud(pts), SMALL, normalize=True, empty_mode="sentinel")
        finite = t.values[np.isfinite(t.values)]
        assert (finite >= 0.0).all()
        assert (finite <= 1.0).all()

    def test_unfiltered_point_rejected(self):
        with pytest.raises(OutOfRoi):
            voxelize(small_cloud([(61.0, 0.0, 0.0, 0.0)]), SMALL)

    def test_bad_mode(self):
        with pytest.raises(ValueError):
            voxelize(small_cloud(np.zeros((0, 4))), SMALL, empty_mode="avg")


class TestTensorFile:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(6)
        values = rng.uniform(0, 2, size=(8, 8, 4)).astype(np.float32).astype(np.float64)
        values[0, 0, 0] = NO_SPIKE
        t = SpikeTensor(values)
        path = tmp_path / "t.spkt"
        save_tensor(t, path)
        back = load_tensor(path)
        assert np.array_equal(back.values, values)
        assert tensor_to_bytes(back) == path.read_bytes()

    def test_header_contents(self):
        blob = tensor_to_bytes(SpikeTensor(np.zeros((2, 3, 4))))
        assert blob[:4] == b"SPKT"
        assert len(blob) == 16 + 4 * 24

    def test_bad_magic(self):
        blob = bytearray(tensor_to_bytes(SpikeTensor(np.zeros((2, 2, 2)))))
        blob[:4] = b"XXXX"
        with pytest.raises(TensorFormatError):
            tensor_from_bytes(bytes(blob))

    def test_bad_version(self):
        blob = bytearray(tensor_to_bytes(SpikeTensor(np.zeros((2, 2, 2)))))
        blob[4] = 9
        with pytest.raises(TensorFormatError):
            tensor_from_bytes(bytes(blob))

    def test_truncated(self):
        blob = tensor_to_bytes(SpikeTensor(np.zeros((2, 2, 2))))
        with pytest.raises(TensorFormatError):
            tensor_from_bytes(blob[:-4])

    def test_validate_rejects_nan(self):
        t = SpikeTensor(np.zeros((2, 2, 2)))
        t.values[0, 0, 0] = np.nan
        with pytest.raises(ValueError):
            t.validate()
