import json
import shutil

import numpy as np
import pytest
from scipy import integrate

from hexrecon.errors import DataError
from hexrecon.geometry import look_at
from hexrecon.harness import (Texture, chamfer, export_mesh, generate_synthetic, iou, load_mesh,
                              load_scene, oracle_shader, psnr, render_view, save_scene)
from hexrecon.hexmesh import icosahedron, icosphere
from hexrecon.shader import init_params


# -- scene I/O ---------------------------------------------------------------
@pytest.fixture(scope="module")
def saved_scene(tmp_path_factory, small_sphere_scene):
    scene, _ = small_sphere_scene
    return scene, save_scene(scene, tmp_path_factory.mktemp("scene") / "s")


def copy_scene(saved, tmp_path, n=3):
    dst = tmp_path / "s"
    shutil.copytree(saved, dst)
    doc = json.loads((dst / "cameras.json").read_text())
    doc["views"] = doc["views"][:n]
    (dst / "cameras.json").write_text(json.dumps(doc))
    for sub in ("images", "masks", "normals"):
        for p in sorted((dst / sub).glob("*.png"))[n:]:
            p.unlink()
    return dst


def test_scene_round_trip(saved_scene):
    scene, path = saved_scene
    back = load_scene(path)
    assert len(back) == len(scene) and back.gt_mesh is not None
    for a, b in zip(scene.views, back.views):
        assert a.index == b.index
        np.testing.assert_array_equal(a.mask, b.mask)
        assert np.abs(a.image - b.image).max() <= 0.5 / 255 + 1e-12
        np.testing.assert_allclose(a.normals, b.normals, atol=1e-4)
        np.testing.assert_allclose(np.linalg.norm(b.normals, axis=-1), 1, atol=1e-12)
        np.testing.assert_allclose(a.camera.K, b.camera.K)
        np.testing.assert_allclose(a.camera.world_to_camera, b.camera.world_to_camera)
    assert (path / "images" / "000.png").is_file()


def test_three_view_directory(saved_scene, tmp_path):
    path = copy_scene(saved_scene[1], tmp_path)
    assert len(load_scene(path)) == 3


def test_missing_normals_give_none(saved_scene, tmp_path):
    path = copy_scene(saved_scene[1], tmp_path)
    shutil.rmtree(path / "normals")
    s = load_scene(path)
    assert not s.has_normals and all(v.normals is None for v in s.views)


def test_image_without_camera_is_named(saved_scene, tmp_path):
    path = copy_scene(saved_scene[1], tmp_path)
    doc = json.loads((path / "cameras.json").read_text())
    doc["views"] = doc["views"][:2]
    (path / "cameras.json").write_text(json.dumps(doc))
    with pytest.raises(DataError, match="002.png: no camera entry"):
        load_scene(path)


def test_size_mismatch_is_named(saved_scene, tmp_path):
    path = copy_scene(saved_scene[1], tmp_path)
    shutil.copy(path / "masks" / "000.png", path / "masks" / "001.png")
    doc = json.loads((path / "cameras.json").read_text())
    doc["views"][1]["width"] = 40
    (path / "cameras.json").write_text(json.dumps(doc))
    with pytest.raises(DataError, match="001.png: size 32x32 does not match camera 40x32"):
        load_scene(path)


def test_malformed_inputs(saved_scene, tmp_path):
    path = copy_scene(saved_scene[1], tmp_path)
    (path / "images" / "001.png").write_bytes(b"not a png")
    with pytest.raises(DataError, match="001.png: unreadable PNG"):
        load_scene(path)
    (path / "cameras.json").write_text("{")
    with pytest.raises(DataError, match="malformed camera file"):
        load_scene(path)
    with pytest.raises(DataError, match="not found"):
        load_scene(tmp_path / "nowhere")


# -- synthetic scenes --------------------------------------------------------
def test_synthetic_sphere_views(small_sphere_scene):
    scene, _ = small_sphere_scene
    for v in scene.views:
        assert v.mask.any()
        np.testing.assert_allclose(np.linalg.norm(v.normals, axis=-1), 1, atol=1e-12)
        assert v.image.min() >= 0 and v.image.max() <= 1


def test_synthetic_is_deterministic():
    a, _ = generate_synthetic("blob", 4, 24, 3, gt_level=2)
    b, _ = generate_synthetic("blob", 4, 24, 3, gt_level=2)
    for u, v in zip(a.views, b.views):
        assert u.image.tobytes() == v.image.tobytes() and u.normals.tobytes() == v.normals.tobytes()


def test_torus_ground_truth_has_genus_one():
    _, gt = generate_synthetic("torus", 4, 8, 0, gt_level=3)
    assert gt.euler_characteristic() == 0 and gt.is_closed()


def test_synthetic_argument_checks():
    with pytest.raises(ValueError, match="at least 4"):
        generate_synthetic("sphere", 3, 16)
    with pytest.raises(ValueError, match="unknown shape"):
        generate_synthetic("cube", 4, 16)


@pytest.mark.parametrize("shape", ["sphere", "blob"])
def test_oracle_shader_reproduces_images(shape):
    scene, gt = generate_synthetic(shape, 4, 64, 0, gt_level=6)
    f = oracle_shader(Texture.from_seed(0))
    for v in scene.views[:2]:
        img, _ = render_view(gt, f, v.camera)
        assert psnr(img, v.image) > 35


# -- rendering ---------------------------------------------------------------
def test_coverage_matches_analytic_mask():
    scene, gt = generate_synthetic("sphere", 4, 256, 0, gt_level=6)
    _, cov = render_view(gt, init_params(0), scene.views[0].camera)
    assert iou(cov > 0.5, scene.views[0].mask) > 0.99


def test_camera_looking_away_is_black():
    cam = look_at([0, 0, 3.0], [0, 0, 6.0], [0, 1.0, 0], 20, 20, 16, 16)
    img, cov = render_view(icosphere(2), init_params(0), cam)
    assert not img.any() and not cov.any()


def test_render_is_deterministic(small_sphere_scene):
    scene, gt = small_sphere_scene
    p = init_params(1)
    a = render_view(gt, p, scene.views[2].camera)
    b = render_view(gt, p, scene.views[2].camera)
    assert a[0].tobytes() == b[0].tobytes() and a[1].tobytes() == b[1].tobytes()


# -- metrics -----------------------------------------------------------------
def offset_sphere_oracle(delta):
    """Mean distance from the unit sphere to a copy shifted by ``delta``, by quadrature."""
    f = lambda t: abs(np.sqrt(1 - 2 * delta * np.cos(t) + delta * delta) - 1) * np.sin(t) / 2
    return integrate.quad(f, 0, np.pi, points=[np.pi / 2])[0]


def test_chamfer_identical():
    m = icosphere(3)
    assert chamfer(m, m, 5000, 0) < 1e-6


def test_chamfer_symmetric():
    a, b = icosphere(3), icosphere(2, 1.2)
    b.positions += [0.1, 0, 0.05]
    assert chamfer(a, b, 4000, 5) == chamfer(b, a, 4000, 5)


def test_chamfer_offset_spheres():
    a = icosphere(5)
    b = icosphere(5)
    b.positions += [0, 0, 0.1]
    expect = offset_sphere_oracle(0.1)
    assert expect == pytest.approx(0.05, rel=0.01)
    assert chamfer(a, b, 100_000, 0) == pytest.approx(expect, rel=0.10)


def test_chamfer_empty_mesh():
    from hexrecon.hexmesh import HexMesh
    empty = HexMesh(np.zeros((0, 3)), np.zeros((0, 3), int))
    with pytest.raises(DataError):
        chamfer(empty, icosphere(1))


def test_psnr_values():
    a = np.full((4, 4, 3), 0.3)
    assert psnr(a + 0.1, a) == pytest.approx(20.0)
    assert psnr(a, a) == 99.0
    assert psnr(np.ones_like(a), np.zeros_like(a)) == pytest.approx(0.0)
    mask = np.zeros((4, 4), bool)
    mask[0, 0] = True
    b = a.copy()
    b[1:] = 0.9
    assert psnr(a + 0.1 * mask[..., None], b, mask) == pytest.approx(20.0)
    with pytest.raises(DataError, match="empty mask"):
        psnr(a, a, np.zeros((4, 4), bool))


def test_iou():
    a = np.zeros((4, 4), bool)
    a[:2] = True
    b = np.zeros((4, 4), bool)
    b[1:3] = True
    assert iou(a, b) == pytest.approx(1 / 3)
    assert iou(a, a) == 1


# -- export ------------------------------------------------------------------
def test_export_obj(tmp_path):
    p = export_mesh(icosahedron(), tmp_path / "ico.obj")
    lines = p.read_text().splitlines()
    assert sum(l.startswith("v ") for l in lines) == 12
    assert sum(l.startswith("f ") for l in lines) == 20
    back = load_mesh(p)
    np.testing.assert_allclose(back.positions, icosahedron().positions, atol=1e-6)
    np.testing.assert_array_equal(back.faces, icosahedron().faces)


def test_export_ply_bitwise(tmp_path, rng):
    m = icosphere(2)
    m.positions += 1e-3 * rng.normal(size=m.positions.shape)
    back = load_mesh(export_mesh(m, tmp_path / "m.ply"))
    assert back.positions.tobytes() == m.positions.tobytes()
    np.testing.assert_array_equal(back.faces, m.faces)


def test_export_bad_directory(tmp_path):
    with pytest.raises(DataError, match="does not exist"):
        export_mesh(icosahedron(), tmp_path / "no" / "ico.obj")
