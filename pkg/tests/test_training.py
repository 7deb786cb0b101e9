import csv
import logging

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hexrecon.errors import DataError, NumericalError
from hexrecon.harness.scene import Scene, View
from hexrecon.hexmesh import icosphere
from hexrecon.training import (LOG_COLUMNS, AdamState, LossWarning, TrainConfig, adam_step,
                               format_config, load_config, loss_mask, loss_normal, loss_rgb,
                               parse_config, total_loss, train, write_log)
from hexrecon.training.loop import check_ray_density, view_schedule

from oracles import central_diff, rel_err

TINY = dict(coarse_iters=2, total_iters=4, remesh_iters=(2,), decay_iters=(2,), hidden=(16, 16))


# -- losses ------------------------------------------------------------------
def test_rgb_examples(rng):
    ref = rng.uniform(0, 0.8, size=(5, 6, 3))
    mask = rng.uniform(size=(5, 6)) < 0.6
    assert loss_rgb(ref, ref, mask)[0] == 0
    assert loss_rgb(ref + 0.1, ref, mask)[0] == pytest.approx(0.3, abs=1e-12)
    # pixels outside the mask do not count
    out = ref.copy()
    out[~mask] += 5
    assert loss_rgb(out, ref, mask)[0] == 0


def test_mask_examples():
    t = np.zeros((4, 4))
    t[:2] = 1
    assert loss_mask(t, t)[0] == 0
    assert loss_mask(1 - t, t)[0] == 1
    half = t.copy()
    half[1] = 0
    assert loss_mask(half, t)[0] == pytest.approx(0.5)


def test_normal_examples():
    n = np.zeros((2, 2, 3))
    n[..., 2] = 1
    mask = np.ones((2, 2), bool)
    assert loss_normal(n, n, mask)[0] == 0
    assert loss_normal(-n, n, mask)[0] == pytest.approx(2.0)


@pytest.mark.parametrize("which", ["rgb", "normal", "mask"])
def test_loss_gradients(rng, which):
    a = rng.uniform(size=(2, 2, 3))
    b = rng.uniform(size=(2, 2, 3))
    mask = np.ones((2, 2), bool)
    if which == "rgb":
        f = lambda: loss_rgb(a, b, mask)
    elif which == "normal":
        b /= np.linalg.norm(b, axis=-1, keepdims=True)
        f = lambda: loss_normal(a, b, mask)
    else:
        a, b = rng.uniform(0.2, 0.8, size=(2, 2)), (rng.uniform(size=(2, 2)) < 0.5).astype(float)
        f = lambda: loss_mask(a, b)
    assert rel_err(f()[1], central_diff(lambda: f()[0], a, 1e-7)) < 1e-8


def test_loss_warnings():
    z = np.zeros((3, 3, 3))
    with pytest.warns(LossWarning, match="empty foreground"):
        assert loss_rgb(z, z, np.zeros((3, 3), bool))[0] == 0
    with pytest.warns(LossWarning, match="empty union"):
        assert loss_mask(z[..., 0], z[..., 0])[0] == 0
    t = np.zeros((3, 3, 3))
    t[..., 2] = 2.0
    with pytest.warns(LossWarning, match="renormalizing"):
        v, _ = loss_normal(t / 2, t, np.ones((3, 3), bool))
    assert v == 0
    with pytest.raises(ValueError):
        loss_rgb(z, z[:2], np.ones((3, 3), bool))


# -- Adam --------------------------------------------------------------------
@settings(max_examples=30, deadline=None)
@given(st.floats(1e-3, 1e3), st.sampled_from([-1.0, 1.0]), st.floats(1e-4, 1e-1))
def test_adam_first_step_is_signed_lr(mag, sign, lr):
    p = {"w": np.array([0.5, -2.0, 3.0])}
    before = p["w"].copy()
    adam_step(AdamState(), p, {"w": np.full(3, sign * mag)}, lr)
    np.testing.assert_allclose(p["w"] - before, -lr * sign, rtol=0, atol=1e-6)


def test_adam_zero_gradient_is_identity():
    p = {"w": np.arange(5.0)}
    s = AdamState()
    for _ in range(20):
        adam_step(s, p, {"w": np.zeros(5)}, 0.1)
    np.testing.assert_array_equal(p["w"], np.arange(5.0))


def test_adam_skips_non_finite(caplog):
    p = {"a": np.ones(2), "b": np.ones(2)}
    s = AdamState()
    with caplog.at_level(logging.WARNING):
        n = adam_step(s, p, {"a": np.array([np.nan, 1.0]), "b": np.ones(2)}, 0.1)
    assert n == 1 and s.skipped == 1 and "a" in caplog.text
    np.testing.assert_array_equal(p["a"], 1.0)
    assert "a" not in s.m and s.step["b"] == 1


def test_adam_reset_restarts_bias_correction():
    p = {"w": np.zeros(1)}
    s = AdamState()
    for _ in range(5):
        adam_step(s, p, {"w": np.ones(1)}, 0.1)
    s.reset("w")
    before = p["w"].copy()
    adam_step(s, p, {"w": -np.ones(1) * 7}, 0.1)
    np.testing.assert_allclose(p["w"] - before, 0.1, rtol=1e-6)
    assert s.step["w"] == 1


def test_adam_shape_change_reinitializes():
    s = AdamState()
    adam_step(s, {"w": np.zeros(2)}, {"w": np.ones(2)}, 0.1)
    p = {"w": np.zeros(8)}
    adam_step(s, p, {"w": np.ones(8)}, 0.1)
    assert s.m["w"].shape == (8,) and s.step["w"] == 1


# -- total loss --------------------------------------------------------------
ZERO = {"rgb": 0.0, "mask": 0.0, "normal": 0.0, "hex": 0.0}


def test_total_loss_weights():
    cfg = TrainConfig()
    assert total_loss("coarse", ZERO, cfg)[0] == 0
    assert total_loss("coarse", {**ZERO, "hex": 0.7}, cfg)[0] == pytest.approx(2 * 0.7)
    assert total_loss("fine", {**ZERO, "mask": 0.3}, cfg)[0] == pytest.approx(50 * 0.3)
    assert total_loss("fine", {**ZERO, "hex": 0.3}, cfg)[0] == pytest.approx(4 * 0.3)
    # fine stage ignores normals entirely
    assert total_loss("fine", {**ZERO, "normal": 9.0}, cfg)[0] == 0
    assert total_loss("fine", {**ZERO, "normal": None}, cfg)[0] == 0
    with pytest.raises(DataError, match="normal"):
        total_loss("coarse", {**ZERO, "normal": None}, cfg)
    with pytest.raises(ValueError):
        total_loss("medium", ZERO, cfg)


def test_total_loss_gradients_combine(rng):
    g = {t: {"positions": rng.normal(size=(4, 3))} for t in ZERO}
    parts = {"rgb": 0.1, "mask": 0.2, "normal": 0.3, "hex": 0.4}
    total, out = total_loss("coarse", parts, TrainConfig(), g)
    assert total == pytest.approx(0.1 + 2 * 0.4 + 50 * (0.2 + 0.3))
    expect = g["rgb"]["positions"] + 2 * g["hex"]["positions"] + 50 * (g["mask"]["positions"]
                                                                      + g["normal"]["positions"])
    np.testing.assert_allclose(out["positions"], expect, rtol=1e-14)
    _, zero = total_loss("coarse", ZERO, TrainConfig(), {t: {"x": np.zeros(2)} for t in ZERO})
    assert not zero["x"].any()


@settings(max_examples=30)
@given(st.floats(0.01, 100), st.floats(0, 10), st.floats(0, 10))
def test_lambda1_enters_linearly(lam, lh, rgb):
    parts = {**ZERO, "rgb": rgb, "hex": lh}
    a = total_loss("coarse", parts, TrainConfig(lambda1=lam))[0]
    b = total_loss("coarse", parts, TrainConfig(lambda1=2 * lam))[0]
    assert b - a == pytest.approx(lam * lh, rel=1e-12, abs=1e-12)


# -- config ------------------------------------------------------------------
def test_config_round_trip(tmp_path):
    cfg = TrainConfig(lambda1=1.5, remesh_iters=(3, 9), hidden=(32, 32), resolution=64,
                      include_raw=False)
    assert parse_config(format_config(cfg)) == cfg
    assert parse_config(format_config(TrainConfig())) == TrainConfig()
    p = tmp_path / "c.txt"
    p.write_text("# comment\nlr = 0.01  # inline\nremesh_iters = 10, 20\n")
    c = load_config(p)
    assert c.lr == 0.01 and c.remesh_iters == (10, 20)


def test_config_errors(tmp_path):
    with pytest.raises(DataError, match="unknown key 'lamda1'"):
        parse_config("lamda1 = 3")
    with pytest.raises(DataError, match="lr"):
        parse_config("lr = fast")
    with pytest.raises(DataError, match="sorted"):
        parse_config("remesh_iters = 200 100")
    with pytest.raises(DataError, match="not found"):
        load_config(tmp_path / "none.txt")
    with pytest.raises(ValueError):
        TrainConfig(lambda2=-1)
    with pytest.raises(ValueError):
        TrainConfig(coarse_iters=10, total_iters=5)


# -- loop --------------------------------------------------------------------
def test_view_schedule():
    a = view_schedule(7, 3)
    assert sorted(a) == list(range(7))
    assert np.array_equal(a, view_schedule(7, 3))


@pytest.fixture(scope="module")
def tiny_run(small_sphere_scene):
    scene, _ = small_sphere_scene
    init = icosphere(2, 1.05)
    return scene, init, train(scene, init, TrainConfig(**TINY))


def test_log_contents(tiny_run, tmp_path):
    _, init, r = tiny_run
    assert [row["iter"] for row in r.log] == [1, 2, 3, 4]
    assert all(tuple(row) == LOG_COLUMNS for row in r.log)
    assert [row["stage"] for row in r.log] == ["coarse", "coarse", "fine", "fine"]
    assert r.log[1]["n_faces"] == init.n_faces
    assert r.log[2]["n_faces"] == 4 * r.log[1]["n_faces"]
    assert r.mesh.n_faces == 4 * init.n_faces
    assert r.log[1]["lr"] == 1e-3 and r.log[2]["lr"] == 5e-4
    path = tmp_path / "log.csv"
    write_log(r.log, path)
    rows = list(csv.DictReader(path.open()))
    assert tuple(rows[0]) == LOG_COLUMNS and len(rows) == 4
    assert float(rows[3]["total"]) == r.log[3]["total"]


def test_stage_switch_drops_normal_term(tiny_run):
    cfg = TrainConfig(**TINY)
    for row in tiny_run[2].log:
        w_h = cfg.lambda1 if row["stage"] == "coarse" else cfg.lambda1_prime
        expect = row["L_rgb"] + w_h * row["L_h"] + cfg.lambda2 * row["L_mask"]
        if row["stage"] == "coarse":
            expect += cfg.lambda2 * row["L_normal"]
        assert row["total"] == pytest.approx(expect, rel=1e-12)


def test_training_is_bitwise_deterministic(tiny_run):
    scene, init, r = tiny_run
    again = train(scene, init, TrainConfig(**TINY))
    assert again.log == r.log
    assert again.mesh.positions.tobytes() == r.mesh.positions.tobytes()
    assert again.params.flat().tobytes() == r.params.flat().tobytes()


def test_zero_iterations_returns_copies(small_sphere_scene):
    scene, _ = small_sphere_scene
    init = icosphere(1)
    r = train(scene, init, TrainConfig(total_iters=0, coarse_iters=0))
    assert r.log == []
    np.testing.assert_array_equal(r.mesh.positions, init.positions)
    assert r.mesh.positions is not init.positions


def test_non_finite_inputs_and_losses(small_sphere_scene):
    scene, _ = small_sphere_scene
    init = icosphere(2, 1.05)
    init.positions[0] = np.nan
    with pytest.raises(DataError, match="non-finite positions"):
        train(scene, init, TrainConfig(**TINY))
    init.positions = icosphere(2).positions * 1e200 + [1e201, 0, 0]
    with pytest.raises(NumericalError, match="iteration 1: loss term hex is"):
        train(scene, init, TrainConfig(**TINY))


def test_coarse_stage_requires_normals(small_sphere_scene):
    scene, _ = small_sphere_scene
    bare = Scene([View(v.index, v.image, v.mask, v.camera, None) for v in scene.views])
    with pytest.raises(DataError, match="normal maps"):
        train(bare, icosphere(2), TrainConfig(**TINY))
    r = train(bare, icosphere(2), TrainConfig(**{**TINY, "coarse_iters": 0, "total_iters": 1}))
    assert np.isnan(r.log[0]["L_normal"])


def test_ray_density_warning(small_sphere_scene, caplog):
    view = small_sphere_scene[0].views[0]          # 32 x 32 = 1024 rays
    with caplog.at_level(logging.WARNING):
        assert not check_ray_density(icosphere(3), view)      # 642 vertices
        assert check_ray_density(icosphere(4), view)          # 2562 vertices
    assert "2562 vertices but a training view only 1024 rays" in caplog.text
