"""Per-point color network ``rgb = c(x, n, h, d)`` with a hand-written backward pass.

Position and view direction are positionally encoded; normal and feature vector
enter raw.  The network is a ReLU multilayer perceptron with a logistic output,
evaluated in float64 on batches of points.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError
from .hexmesh.mesh import DEFAULT_FEAT_DIM

DEFAULT_HIDDEN = (128, 128, 128, 128)


@dataclass(frozen=True)
class PosEncConfig:
    level_x: int = 3
    level_d: int = 0
    include_raw: bool = True

    def __post_init__(self):
        if self.level_x < 0 or self.level_d < 0:
            raise ValueError("encoding levels must be >= 0")

    def dim(self, level: int) -> int:
        return 3 * (int(self.include_raw) + 2 * level)


def encoded_dim(level: int, include_raw: bool = True) -> int:
    return 3 * (int(include_raw) + 2 * level)


def positional_encode(p, level: int, include_raw: bool = True) -> np.ndarray:
    """``[p, sin(2^0 pi p), cos(2^0 pi p), ..., sin(2^(L-1) pi p), cos(2^(L-1) pi p)]``."""
    if level < 0:
        raise ValueError("level must be >= 0")
    p = np.asarray(p, dtype=np.float64)
    parts = [p] if include_raw else []
    for k in range(level):
        a = (2.0 ** k) * np.pi * p
        parts += [np.sin(a), np.cos(a)]
    if not parts:
        return np.zeros(p.shape[:-1] + (0,))
    return np.concatenate(parts, axis=-1)


def positional_encode_backward(p, level: int, include_raw: bool, g_enc) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    g = np.zeros_like(p)
    o = 0
    if include_raw:
        g += g_enc[..., 0:3]
        o = 3
    for k in range(level):
        w = (2.0 ** k) * np.pi
        a = w * p
        g += w * np.cos(a) * g_enc[..., o:o + 3]
        g -= w * np.sin(a) * g_enc[..., o + 3:o + 6]
        o += 6
    return g


def input_dim(encoding: PosEncConfig, feat_dim: int) -> int:
    return encoding.dim(encoding.level_x) + 3 + feat_dim + encoding.dim(encoding.level_d)


@dataclass
class MlpParams:
    weights: list
    biases: list
    encoding: PosEncConfig = field(default_factory=PosEncConfig)
    feat_dim: int = DEFAULT_FEAT_DIM
    seed: int | None = None

    @property
    def widths(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    def tensors(self) -> dict[str, np.ndarray]:
        """Named views of every parameter array (shared memory, for the optimizer)."""
        out = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            out[f"W{i}"] = w
            out[f"b{i}"] = b
        return out

    def copy(self) -> MlpParams:
        return MlpParams([w.copy() for w in self.weights], [b.copy() for b in self.biases],
                         self.encoding, self.feat_dim, self.seed)

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for w, b in zip(self.weights, self.biases) for a in (w, b)])


def init_params(seed: int, widths=None, encoding: PosEncConfig | None = None,
                feat_dim: int = DEFAULT_FEAT_DIM, zero_last: bool = False) -> MlpParams:
    """Fan-in scaled uniform weights, zero biases; deterministic in ``seed``.

    ``widths`` is the full layer list ``[in, hidden..., 3]``; the default uses four
    hidden layers of 128.  ``widths[0]`` must equal the encoded input size.
    """
    encoding = encoding or PosEncConfig()
    din = input_dim(encoding, feat_dim)
    if widths is None:
        widths = [din, *DEFAULT_HIDDEN, 3]
    widths = [int(w) for w in widths]
    if widths[0] != din:
        raise ValueError(f"first width {widths[0]} does not match encoded input dim {din}")
    if widths[-1] != 3:
        raise ValueError("output width must be 3")
    rng = np.random.default_rng(seed)
    ws, bs = [], []
    for i, (a, b) in enumerate(zip(widths[:-1], widths[1:])):
        last = i == len(widths) - 2
        bound = np.sqrt((3.0 if last else 6.0) / a)
        w = rng.uniform(-bound, bound, size=(a, b))
        if last and zero_last:
            w[:] = 0.0
        ws.append(w)
        bs.append(np.zeros(b))
    return MlpParams(ws, bs, encoding, feat_dim, seed)


@dataclass
class ShadeCache:
    x: np.ndarray
    d: np.ndarray
    acts: list      # layer inputs a_0 .. a_{L-1}
    pre: list       # hidden pre-activations
    rgb: np.ndarray


def _check_finite(**arrays):
    for name, a in arrays.items():
        if not np.all(np.isfinite(a)):
            raise DataError(f"non-finite values in shader input {name!r}")


def build_input(params: MlpParams, x, n, h, d) -> np.ndarray:
    e = params.encoding
    return np.concatenate([positional_encode(x, e.level_x, e.include_raw), n, h,
                           positional_encode(d, e.level_d, e.include_raw)], axis=-1)


def shade_forward(params: MlpParams, x, n, h, d) -> ShadeCache:
    x, n, h, d = (np.atleast_2d(np.asarray(a, dtype=np.float64)) for a in (x, n, h, d))
    _check_finite(x_m=x, n_m=n, h_m=h, d=d)
    if h.shape[1] != params.feat_dim:
        raise DataError(f"feature width {h.shape[1]} != shader feat_dim {params.feat_dim}")
    a = build_input(params, x, n, h, d)
    acts, pre = [], []
    L = len(params.weights)
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        acts.append(a)
        z = a @ w + b
        if i < L - 1:
            pre.append(z)
            a = np.maximum(z, 0.0)
        else:
            a = 1.0 / (1.0 + np.exp(-z))
    return ShadeCache(x, d, acts, pre, a)


def shade(params: MlpParams, x_m, n_m, h_m, d) -> np.ndarray:
    """RGB in ``(0, 1)`` for one point (1-D inputs) or a batch (2-D inputs)."""
    single = np.ndim(x_m) == 1
    rgb = shade_forward(params, x_m, n_m, h_m, d).rgb
    return rgb[0] if single else rgb


def shade_backward(params: MlpParams, cache: ShadeCache, g_rgb):
    """Reverse-mode pass.

    Returns
    -------
    grads : dict
        ``W{i}``/``b{i}`` gradients, same keys as :meth:`MlpParams.tensors`.
    g_x, g_n, g_h, g_d : ndarray
        Input gradients.  ``g_d`` is zero by contract: the view direction is data.
    """
    g = np.atleast_2d(np.asarray(g_rgb, dtype=np.float64))
    s = cache.rgb
    gz = g * s * (1.0 - s)
    grads = {}
    L = len(params.weights)
    for i in range(L - 1, -1, -1):
        a = cache.acts[i]
        grads[f"W{i}"] = a.T @ gz
        grads[f"b{i}"] = gz.sum(axis=0)
        ga = gz @ params.weights[i].T
        if i > 0:
            gz = ga * (cache.pre[i - 1] > 0)
    e = params.encoding
    dx = e.dim(e.level_x)
    fd = params.feat_dim
    g_x = positional_encode_backward(cache.x, e.level_x, e.include_raw, ga[:, :dx])
    g_n = ga[:, dx:dx + 3]
    g_h = ga[:, dx + 3:dx + 3 + fd]
    g_d = np.zeros_like(cache.d)
    return grads, g_x, g_n, g_h, g_d


def save_checkpoint(params: MlpParams, path) -> Path:
    """Flat little-endian float64 blob plus a JSON sidecar (``<path>.json``)."""
    path = Path(path)
    params.flat().astype("<f8").tofile(path)
    meta = {"widths": params.widths, "encoding": asdict(params.encoding),
            "feat_dim": params.feat_dim, "seed": params.seed}
    Path(str(path) + ".json").write_text(json.dumps(meta, indent=2))
    return path


def load_checkpoint(path) -> MlpParams:
    path = Path(path)
    side = Path(str(path) + ".json")
    if not path.is_file() or not side.is_file():
        raise DataError(f"checkpoint {path} or its sidecar {side} is missing")
    try:
        meta = json.loads(side.read_text())
        widths = [int(w) for w in meta["widths"]]
        enc = PosEncConfig(**meta["encoding"])
        feat_dim = int(meta["feat_dim"])
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed checkpoint sidecar {side}: {exc}") from exc
    flat = np.fromfile(path, dtype="<f8")
    need = sum(a * b + b for a, b in zip(widths[:-1], widths[1:]))
    if len(flat) != need:
        raise DataError(f"{path}: expected {need} float64 values, found {len(flat)}")
    if widths[0] != input_dim(enc, feat_dim):
        raise DataError(f"{side}: widths[0] inconsistent with encoding and feat_dim")
    ws, bs, o = [], [], 0
    for a, b in zip(widths[:-1], widths[1:]):
        ws.append(flat[o:o + a * b].reshape(a, b).astype(np.float64))
        o += a * b
        bs.append(flat[o:o + b].astype(np.float64))
        o += b
    return MlpParams(ws, bs, enc, feat_dim, meta.get("seed"))
