import math

import numpy as np
import pytest

from vanishnet.data import (
    ImageSample,
    augment,
    build_target,
    gaussian_target,
    grid_target,
    read_annotations,
    render_road_scene,
    resize_with_annotation,
    save_dataset,
    load_dataset,
    synth_dataset,
    write_annotations,
)
from vanishnet.heads import GridPrediction, Scale, decode


def _sample(w=640, h=640, vp=(320.0, 320.0)):
    return ImageSample(image=np.zeros((h, w, 3), dtype=np.uint8), vp=vp, id="t")


class TestResize:
    def test_uniform_halving(self):
        out = resize_with_annotation(_sample(640, 640, (320.0, 320.0)), 320)
        assert out.vp == (160.0, 160.0)
        assert out.image.shape == (320, 320, 3)

    def test_per_axis_scaling(self):
        out = resize_with_annotation(_sample(640, 320, (320.0, 160.0)), 320)
        assert out.vp == (160.0, 160.0)

    def test_right_edge_maps_inside(self):
        for w in (640, 321, 1000):
            out = resize_with_annotation(_sample(w, 480, (w - 1.0, 479.0)), 320)
            assert 0 <= out.vp[0] < 320
            assert 0 <= out.vp[1] < 320

    def test_degenerate_image_rejected(self):
        bad = ImageSample(image=np.zeros((0, 10, 3), dtype=np.uint8), vp=(0, 0), id="x")
        with pytest.raises(ValueError):
            resize_with_annotation(bad, 320)


class TestGaussianTarget:
    def test_peak_is_one_at_center_cell(self):
        hm = gaussian_target((40.0, 80.0), 320, Scale.QUARTER)
        assert hm[20, 10] == 1.0
        assert hm.max() == 1.0

    def test_value_at_three_cells_distance(self):
        hm = gaussian_target((40.0, 40.0), 320, Scale.QUARTER, std=3.0)
        assert hm[10, 13] == pytest.approx(math.exp(-0.5), abs=1e-12)

    def test_mass_below_untruncated_gaussian(self):
        hm = gaussian_target((160.0, 160.0), 320, Scale.QUARTER, std=3.0)
        assert hm.sum() < 2 * math.pi * 3.0 ** 2  # 56.55

    def test_radially_symmetric(self):
        # center on an exact cell so equidistant cells are exactly symmetric
        hm = gaussian_target((160.0, 160.0), 320, Scale.HALF, std=3.0)
        cy = cx = 80
        for dr, dc in [(0, 5), (3, 4), (1, 2)]:
            ref = hm[cy + dr, cx + dc]
            for r, c in [(cy - dr, cx + dc), (cy + dr, cx - dc), (cy - dr, cx - dc),
                         (cy + dc, cx + dr), (cy - dc, cx - dr)]:
                assert abs(hm[r, c] - ref) < 1e-12

    def test_truncated_beyond_three_std(self):
        hm = gaussian_target((160.0, 160.0), 320, Scale.QUARTER, std=3.0)
        assert hm[40, 40 + 10] == 0.0  # 10 cells > 3 * std = 9
        assert hm[40, 40 + 9] > 0.0

    def test_point_outside_rejected(self):
        with pytest.raises(ValueError):
            gaussian_target((321.0, 10.0), 320, Scale.QUARTER)


class TestGridTarget:
    def test_inverse_of_decode_example(self):
        cell, offsets = grid_target((21.0, 41.0), 2.0)
        assert cell == (20, 10)
        assert offsets == (0.5, 0.5)

    def test_origin(self):
        cell, offsets = grid_target((0.0, 0.0), 2.0)
        assert cell == (0, 0)
        assert offsets == (0.0, 0.0)

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            grid_target((-1.0, 5.0), 2.0)
        with pytest.raises(ValueError):
            grid_target((65.0, 5.0), 2.0, grid=32)

    def test_round_trip_through_decode_exact(self):
        # 32 grid-spanning cell centers: logit 0 inverts sigmoid exactly
        size, cell_size = 64, 2.0
        grid = int(size / cell_size)
        points = [((2 * k + 1) % grid, (7 * k + 3) % grid) for k in range(32)]
        for row, col in points:
            vp = ((col + 0.5) * cell_size, (row + 0.5) * cell_size)
            cell, offsets = grid_target(vp, cell_size, grid=grid)
            conf = np.full((grid, grid), -10.0)
            conf[cell] = 10.0
            logits = np.zeros((grid, grid))
            pred = decode(GridPrediction(conf, logits, logits), cell_size)
            assert (pred.x, pred.y) == vp
            assert pred.cell == cell

    def test_round_trip_arbitrary_offsets_near_exact(self, rng):
        size, cell_size = 64, 2.0
        grid = int(size / cell_size)
        for _ in range(200):
            vp = tuple(rng.uniform(0.05, size - 0.05, size=2))
            cell, (ox, oy) = grid_target(vp, cell_size, grid=grid)
            conf = np.full((grid, grid), -10.0)
            conf[cell] = 10.0
            lx = np.zeros((grid, grid))
            ly = np.zeros((grid, grid))
            lx[cell] = math.log(ox / (1 - ox)) if 0 < ox < 1 else 0.0
            ly[cell] = math.log(oy / (1 - oy)) if 0 < oy < 1 else 0.0
            pred = decode(GridPrediction(conf, lx, ly), cell_size)
            assert pred.x == pytest.approx(vp[0], abs=1e-9)
            assert pred.y == pytest.approx(vp[1], abs=1e-9)


class TestAugment:
    def test_double_flip_restores_x(self, rng):
        sample = _sample(100, 80, (30.0, 40.0))
        once = augment(sample, rng, flip=True, angle=0.0)
        twice = augment(once, rng, flip=True, angle=0.0)
        assert twice.vp[0] == sample.vp[0]

    def test_identity_when_no_flip_no_rotation(self, rng):
        sample = _sample(100, 80, (30.0, 40.0))
        out = augment(sample, rng, flip=False, angle=0.0)
        assert out.vp == sample.vp
        assert (out.image == sample.image).all()

    def test_quarter_turn_fixes_center(self, rng):
        w = h = 101
        center = ((w - 1) / 2.0, (h - 1) / 2.0)
        sample = _sample(w, h, center)
        out = augment(sample, rng, flip=False, angle=90.0)
        assert out.vp[0] == pytest.approx(center[0], abs=1e-9)
        assert out.vp[1] == pytest.approx(center[1], abs=1e-9)

    def test_annotation_stays_in_bounds(self):
        for seed in range(50):
            rng = np.random.default_rng(seed)
            vp = (rng.uniform(0, 99), rng.uniform(0, 79))
            out = augment(_sample(100, 80, vp), rng)
            assert 0 <= out.vp[0] < 100
            assert 0 <= out.vp[1] < 80

    def test_deterministic_given_seed(self):
        sample = _sample(64, 64, (10.0, 20.0))
        a = augment(sample, np.random.default_rng(5))
        b = augment(sample, np.random.default_rng(5))
        assert a.vp == b.vp
        assert (a.image == b.image).all()


class TestSynthDataset:
    def test_points_strictly_inside(self):
        for sample in synth_dataset(8, seed=3):
            assert 0 < sample.vp[0] < sample.width
            assert 0 < sample.vp[1] < sample.height

    def test_lines_intersect_at_annotation(self):
        for seed in range(6):
            scene = render_road_scene(np.random.default_rng(seed), size=160)
            (x0, y0), (x1, y1) = scene.line_a
            (u0, v0), (u1, v1) = scene.line_b
            a = np.array([[y1 - y0, -(x1 - x0)], [v1 - v0, -(u1 - u0)]])
            b = np.array([(y1 - y0) * x0 - (x1 - x0) * y0,
                          (v1 - v0) * u0 - (u1 - u0) * v0])
            ix, iy = np.linalg.solve(a, b)
            assert math.hypot(ix - scene.vp[0], iy - scene.vp[1]) < 0.5

    def test_bit_identical_under_seed(self):
        a = synth_dataset(4, seed=11)
        b = synth_dataset(4, seed=11)
        for sa, sb in zip(a, b):
            assert sa.id == sb.id and sa.vp == sb.vp
            assert (sa.image == sb.image).all()

    def test_sample_independent_of_total_count(self):
        # sample i only depends on (seed, i), not on how many were requested
        few = synth_dataset(2, seed=9)
        many = synth_dataset(5, seed=9)
        assert (few[1].image == many[1].image).all()
        assert few[1].vp == many[1].vp

    def test_rejects_nonpositive_count(self):
        with pytest.raises(ValueError):
            synth_dataset(0, seed=0)


class TestAnnotations:
    def test_round_trip_identical(self, tmp_path):
        records = [("a", "a.png", 12.25, 99.5),
                   ("b", "sub/b.jpg", 0.1234567890123, 45.0)]
        path = tmp_path / "ann.tsv"
        write_annotations(path, records)
        assert read_annotations(path) == records
        raw = path.read_bytes()
        assert b"\r" not in raw and raw.endswith(b"\n")

    def test_malformed_line_rejected(self, tmp_path):
        path = tmp_path / "bad.tsv"
        path.write_text("id only two\tfields\n", encoding="utf-8")
        with pytest.raises(ValueError):
            read_annotations(path)

    def test_dataset_save_load_round_trip(self, tmp_path):
        samples = synth_dataset(3, seed=1, size=64)
        ann = save_dataset(samples, tmp_path / "ds")
        loaded = load_dataset(ann)
        assert [s.id for s in loaded] == [s.id for s in samples]
        for a, b in zip(loaded, samples):
            assert a.vp == b.vp
            assert (a.image == b.image).all()


def test_build_target_peaks_and_offsets():
    sample = ImageSample(image=np.zeros((64, 64, 3), np.uint8), vp=(21.0, 41.0), id="t")
    target = build_target(sample, 64, Scale.HALF)
    assert target.heatmap_q.shape == (16, 16)
    assert target.heatmap_h.shape == (32, 32)
    assert target.heatmap_q[10, 5] == 1.0  # cell containing (21, 41) at stride 4
    assert target.heatmap_h[20, 10] == 1.0
    assert target.vp_cell == (20, 10)
    assert target.offsets == (0.5, 0.5)
