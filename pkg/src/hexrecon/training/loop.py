"""Staged optimization of vertex positions, vertex features and shader weights.

Iterations are numbered from 1.  Iterations ``1 .. coarse_iters`` use the coarse
objective (with normal supervision), later ones the fine objective.  Subdivision
and learning-rate decay take effect after the iterations listed in the config,
so the log row of a remesh iteration still shows the pre-remesh mesh.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..errors import DataError, NumericalError
from ..geometry import build_bvh, refit_bvh
from ..geometry.bvh import Bvh
from ..hexmesh import HexMesh, subdivide
from ..hexmesh.regularizer import build_K
from ..hexmesh.remesh import tangential_relax
from ..shader import MlpParams, PosEncConfig, init_params, input_dim
from .config import TrainConfig
from .losses import loss_mask, loss_normal, loss_rgb
from .optim import AdamState, adam_step
from .render import Rendered, render_backward, render_forward

log = logging.getLogger(__name__)

LOG_COLUMNS = ("iter", "stage", "L_rgb", "L_mask", "L_normal", "L_h", "total", "lr",
               "n_vertices", "n_faces")
TERMS = ("rgb", "mask", "normal", "hex")


def loss_weights(stage: str, config: TrainConfig) -> dict[str, float]:
    if stage == "coarse":
        return {"rgb": 1.0, "hex": config.lambda1, "mask": config.lambda2, "normal": config.lambda2}
    if stage == "fine":
        return {"rgb": 1.0, "hex": config.lambda1_prime, "mask": config.lambda2, "normal": 0.0}
    raise ValueError(f"unknown stage {stage!r}")


def total_loss(stage: str, parts: dict[str, float], config: TrainConfig,
               grads: dict[str, dict[str, np.ndarray]] | None = None):
    """Weighted sum of the loss terms and, when ``grads`` is given, of their gradients.

    ``parts`` maps ``rgb``/``mask``/``normal``/``hex`` to values (``normal`` may be
    ``None`` in the fine stage); ``grads`` maps the same names to
    ``{tensor name: gradient}`` dictionaries.
    """
    w = loss_weights(stage, config)
    if stage == "coarse" and parts.get("normal") is None:
        raise DataError("coarse stage needs normal maps (L_normal is missing)")
    total = 0.0
    out: dict[str, np.ndarray] = {}
    for term in TERMS:
        v = parts.get(term)
        if v is None or w[term] == 0.0:
            continue
        total += w[term] * v
        if grads is not None and term in grads:
            for name, g in grads[term].items():
                if name in out:
                    out[name] = out[name] + w[term] * g
                else:
                    out[name] = w[term] * g
    return total, out


@dataclass
class Objective:
    total: float
    parts: dict
    grads: dict
    render: Rendered


def objective(mesh: HexMesh, params: MlpParams, view, stage: str, config: TrainConfig,
              bvh: Bvh | None = None, need_grad: bool = True) -> Objective:
    """Loss terms, weighted total and gradients for one view.

    Gradients are keyed ``positions``, ``features`` and the shader tensor names.
    """
    r = render_forward(mesh, params, view.camera, bvh)
    hit = r.hit_mask
    l_rgb, g_rgb = loss_rgb(r.rgb, view.image, hit)
    l_mask, g_cov = loss_mask(r.coverage.image, view.mask)
    l_nrm = g_nrm = None
    if view.normals is not None:
        l_nrm, g_nrm = loss_normal(r.normals, view.normals, hit & view.mask)
    K = build_K(mesh)
    Kp = K @ mesh.positions
    l_h = float(np.einsum("ij,ij->", mesh.positions, Kp))
    parts = {"rgb": l_rgb, "mask": l_mask, "normal": l_nrm, "hex": l_h}
    total, _ = total_loss(stage, parts, config)
    grads = {}
    if need_grad:
        w = loss_weights(stage, config)
        g_n = w["normal"] * g_nrm if (g_nrm is not None and w["normal"]) else None
        g_pos, g_feat, g_par = render_backward(mesh, params, r, g_rgb=w["rgb"] * g_rgb,
                                               g_normal=g_n, g_coverage=w["mask"] * g_cov)
        g_pos += w["hex"] * 2.0 * Kp
        grads = {"positions": g_pos, "features": g_feat, **g_par}
    return Objective(total, parts, grads, r)


@dataclass
class TrainResult:
    mesh: HexMesh
    params: MlpParams
    log: list = field(default_factory=list)


def remesh_event(mesh: HexMesh, relax_passes: int = 1) -> HexMesh:
    """Midpoint subdivision followed by count-preserving tangential relaxation."""
    fine = subdivide(mesh)
    if relax_passes > 0:
        fine = tangential_relax(fine, reference=fine.copy(), passes=relax_passes)
    return fine


def make_params(mesh: HexMesh, config: TrainConfig) -> MlpParams:
    enc = PosEncConfig(config.level_x, config.level_d, config.include_raw)
    widths = [input_dim(enc, mesh.feat_dim), *config.hidden, 3]
    return init_params(config.seed, widths, enc, feat_dim=mesh.feat_dim)


def check_ray_density(mesh: HexMesh, view) -> bool:
    """Warn when the mesh has more vertices than one training view has rays.

    Beyond that point most vertices receive no image gradient in a given
    iteration.  Returns True when the warning was issued.
    """
    n_rays = view.camera.width * view.camera.height
    if mesh.n_vertices <= n_rays:
        return False
    log.warning("mesh has %d vertices but a training view only %d rays; consider a higher "
                "training resolution", mesh.n_vertices, n_rays)
    return True


def view_schedule(n_views: int, seed: int) -> np.ndarray:
    """Round-robin order over a seeded permutation of the training views."""
    return np.random.default_rng(seed).permutation(n_views)


def train(scene, init_mesh: HexMesh, config: TrainConfig | None = None,
          params: MlpParams | None = None,
          callback: Callable[[int, HexMesh, MlpParams], None] | None = None) -> TrainResult:
    """Optimize ``init_mesh`` and a fresh shader against ``scene``.

    The lowest-index ``holdout_fraction`` of views is excluded.  ``callback`` runs after
    every iteration (after any remesh event) with ``(iteration, mesh, params)``.
    """
    config = config or TrainConfig()
    for name in ("positions", "features"):
        if not np.all(np.isfinite(getattr(init_mesh, name))):
            raise DataError(f"initial mesh has non-finite {name}")
    mesh = init_mesh.copy()
    params = params.copy() if params is not None else make_params(mesh, config)
    if config.total_iters == 0:
        return TrainResult(mesh, params, [])
    train_scene, _ = scene.split(config.holdout_fraction)
    train_scene = train_scene.resized(config.resolution)
    views = train_scene.views
    if not views:
        raise DataError("no training views left after the hold-out split")
    if config.coarse_iters > 0 and not train_scene.has_normals:
        raise DataError("coarse stage needs normal maps for every training view")
    order = view_schedule(len(views), config.seed)
    state = AdamState()
    lr = config.lr
    bvh = build_bvh(mesh)
    check_ray_density(mesh, views[0])
    rows = []
    for it in range(1, config.total_iters + 1):
        stage = "coarse" if it <= config.coarse_iters else "fine"
        view = views[order[(it - 1) % len(views)]]
        obj = objective(mesh, params, view, stage, config, bvh)
        for name, v in list(obj.parts.items()) + [("total", obj.total)]:
            if v is not None and not math.isfinite(v):
                raise NumericalError(f"iteration {it}: loss term {name} is {v}")
        rows.append({"iter": it, "stage": stage, "L_rgb": obj.parts["rgb"],
                     "L_mask": obj.parts["mask"],
                     "L_normal": obj.parts["normal"] if obj.parts["normal"] is not None else float("nan"),
                     "L_h": obj.parts["hex"], "total": obj.total, "lr": lr,
                     "n_vertices": mesh.n_vertices, "n_faces": mesh.n_faces})
        tensors = {"positions": mesh.positions, "features": mesh.features, **params.tensors()}
        adam_step(state, tensors, obj.grads, lr)
        for name, t in tensors.items():
            if not np.all(np.isfinite(t)):
                raise NumericalError(f"iteration {it}: {name} became non-finite after the update")
        if it in config.remesh_iters:
            mesh = remesh_event(mesh, config.relax_passes)
            state.reset("positions", "features")
            bvh = build_bvh(mesh)
            log.info("iteration %d: subdivided to %d vertices", it, mesh.n_vertices)
            check_ray_density(mesh, views[0])
        else:
            refit_bvh(bvh, mesh)
        if it in config.decay_iters:
            lr *= config.decay_factor
        if callback is not None:
            callback(it, mesh, params)
    return TrainResult(mesh, params, rows)


def write_log(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=LOG_COLUMNS)
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(float(v)) if isinstance(v, float) else v) for k, v in r.items()})
