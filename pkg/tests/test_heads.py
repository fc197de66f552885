import numpy as np
import pytest
import torch

from vanishnet.heads import (
    CoordHead,
    GridPrediction,
    QuarterHead,
    Upsampler,
    UpsampleVariant,
    decode,
    decode_heatmap_argmax,
)


def _grid(conf, ox=None, oy=None):
    conf = np.asarray(conf, dtype=np.float64)
    if ox is None:
        ox = np.zeros_like(conf)
    if oy is None:
        oy = np.zeros_like(conf)
    return GridPrediction(conf, np.asarray(ox, float), np.asarray(oy, float))


@pytest.mark.parametrize("variant", list(UpsampleVariant))
@pytest.mark.parametrize("size", [40, 80])
def test_upsample_doubles_spatial_size(variant, size):
    torch.manual_seed(0)
    up = Upsampler(feature_channels=6, variant=variant).eval()
    low = torch.randn(1, 1, size, size)
    feats = torch.randn(1, 6, size, size)
    with torch.no_grad():
        heatmap, fused = up(low, feats)
    assert heatmap.shape == (1, 1, 2 * size, 2 * size)
    assert fused.shape == (1, 7, 2 * size, 2 * size)


def test_upsample_rejects_mismatched_sizes():
    up = Upsampler(feature_channels=4, variant=UpsampleVariant.UPU)
    with pytest.raises(ValueError):
        up(torch.randn(1, 1, 8, 8), torch.randn(1, 4, 16, 16))


def test_upsample_rejects_unknown_variant():
    with pytest.raises(ValueError):
        Upsampler(feature_channels=4, variant="bilinear")


def test_up_projection_matches_hand_composition():
    torch.manual_seed(3)
    up = Upsampler(feature_channels=4, variant=UpsampleVariant.UPU).eval()
    body = up.body
    x = torch.cat([torch.randn(1, 4, 12, 12), torch.randn(1, 1, 12, 12)], dim=1)
    with torch.no_grad():
        h0 = body.up1(x)
        l0 = body.down(h0)
        manual = h0 + body.up2(l0 - x)
        assert torch.equal(body(x), manual)


def test_quarter_head_shape_and_determinism():
    torch.manual_seed(0)
    head = QuarterHead(48).eval()
    x = torch.randn(1, 48, 80, 80)
    with torch.no_grad():
        a = head(x)
        b = head(x)
    assert a.shape == (1, 1, 80, 80)
    assert torch.equal(a, b)


def test_coord_head_shape_and_zero_weights():
    head = CoordHead(8).eval()
    with torch.no_grad():
        for p in head.parameters():
            p.zero_()
        out = head(torch.randn(1, 8, 16, 16))
    assert out.shape == (1, 3, 16, 16)
    assert torch.equal(out, torch.zeros_like(out))


def _finite_difference(head, x, scalar_fn, n_coords=3, h=1e-6, seed=0):
    """Central finite differences of scalar_fn(head(x)) at random weight coords."""
    rng = np.random.default_rng(seed)
    params = [p for p in head.parameters() if p.requires_grad]
    loss = scalar_fn(head(x))
    grads = torch.autograd.grad(loss, params)
    checks = []
    for _ in range(n_coords):
        pi = int(rng.integers(len(params)))
        flat = params[pi].detach().view(-1)
        ci = int(rng.integers(flat.numel()))
        orig = flat[ci].item()
        with torch.no_grad():
            flat[ci] = orig + h
            up = scalar_fn(head(x)).item()
            flat[ci] = orig - h
            down = scalar_fn(head(x)).item()
            flat[ci] = orig
        fd = (up - down) / (2 * h)
        auto = grads[pi].view(-1)[ci].item()
        checks.append((auto, fd))
    return checks


@pytest.mark.parametrize("make_head,channels", [
    (lambda: QuarterHead(5), 5),
    (lambda: CoordHead(5), 5),
])
def test_head_gradients_match_finite_differences(make_head, channels):
    torch.manual_seed(11)
    head = make_head().double().eval()
    x = torch.randn(1, channels, 8, 8, dtype=torch.float64)
    for auto, fd in _finite_difference(head, x, lambda y: y.mean()):
        assert abs(auto - fd) <= 1e-3 * max(abs(auto), abs(fd), 1e-8)


def test_decode_example_cell_center():
    conf = np.full((40, 40), -4.0)
    conf[20, 10] = 2.0
    pred = decode(_grid(conf), cell_size=2.0)
    assert (pred.x, pred.y) == (21.0, 41.0)
    assert pred.cell == (20, 10)
    assert 0 < pred.confidence < 1


def test_decode_large_offsets_stay_inside_cell():
    conf = np.zeros((4, 4))
    conf[1, 2] = 5.0
    ox = np.full((4, 4), 30.0)
    oy = np.full((4, 4), -30.0)
    pred = decode(_grid(conf, ox, oy), cell_size=2.0)
    assert 2 * 2 < pred.x < 2 * 3  # approaches, never reaches the far corner
    assert 2 * 1 < pred.y < 2 * 2


def test_decode_tie_breaks_to_lowest_row_major_index():
    pred = decode(_grid(np.zeros((5, 5))), cell_size=2.0)
    assert pred.cell == (0, 0)


def test_decode_empty_grid_rejected():
    with pytest.raises(ValueError):
        decode(_grid(np.zeros((0, 0))), cell_size=2.0)


def test_decode_containment_randomized(rng):
    for _ in range(1000):
        h, w = int(rng.integers(1, 12)), int(rng.integers(1, 12))
        g = _grid(rng.normal(0, 4, (h, w)), rng.normal(0, 4, (h, w)), rng.normal(0, 4, (h, w)))
        cell_size = float(rng.choice([1.0, 2.0, 4.0]))
        pred = decode(g, cell_size)
        r, c = pred.cell
        assert c * cell_size < pred.x < (c + 1) * cell_size
        assert r * cell_size < pred.y < (r + 1) * cell_size
        assert c <= pred.x / cell_size < c + 1
        assert r <= pred.y / cell_size < r + 1


def test_decode_monotone_in_offset(rng):
    conf = rng.normal(0, 1, (6, 6))
    oy = rng.normal(0, 1, (6, 6))
    last_x = -1.0
    for logit in np.linspace(-6, 6, 25):
        ox = np.full((6, 6), logit)
        pred = decode(_grid(conf, ox, oy), cell_size=2.0)
        assert pred.x >= last_x
        last_x = pred.x


def test_decode_argmax_invariant_to_constant_shift(rng):
    conf = rng.normal(0, 2, (7, 9))
    base = decode(_grid(conf), cell_size=2.0)
    shifted = decode(_grid(conf + 3.7), cell_size=2.0)
    assert base.cell == shifted.cell


def test_heatmap_argmax_decode_uses_cell_centers():
    half = np.zeros((160, 160))
    half[40, 80] = 1.0
    pred = decode_heatmap_argmax(half, stride=2)
    assert (pred.x, pred.y) == (161.0, 81.0)

    quarter = np.zeros((80, 80))
    quarter[7, 11] = 1.0
    pred_q = decode_heatmap_argmax(quarter, stride=4)
    assert (pred_q.x, pred_q.y) == (11 * 4 + 2.0, 7 * 4 + 2.0)


def test_head_outputs_finite_for_finite_inputs(tiny_model, tiny_config):
    torch.manual_seed(0)
    x = torch.randn(1, 3, tiny_config.input_size, tiny_config.input_size) * 10
    tiny_model.eval()
    with torch.no_grad():
        out = tiny_model(x)
    for t in (out.heatmap_q, out.heatmap_h, out.grid):
        assert torch.isfinite(t).all()
