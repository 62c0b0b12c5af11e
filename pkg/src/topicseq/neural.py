"""Token encoder and single-layer bidirectional GRU with a dense emission head.

All forward functions run in the dtype of the parameters (float32 for
trained models, float64 for gradient checks). Backward passes are written out
by hand; there is no autodiff dependency.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .exceptions import InvalidInputError, InvalidStateError

LOOKUP = "trainable-lookup"
PRECOMPUTED = "precomputed-file"

EMBEDDING_MAGIC = b"TPEM"
EMBEDDING_VERSION = 1

GATES = ("z", "r", "h")


@dataclass
class EncoderConfig:
    mode: str = LOOKUP
    embed_dim: int = 128
    vocab_size: int | None = None
    file_path: str | None = None

    def __post_init__(self):
        if self.embed_dim < 1:
            raise InvalidInputError(f"embed_dim must be >= 1, got {self.embed_dim}")
        if self.mode == LOOKUP:
            if not self.vocab_size or self.vocab_size < 1:
                raise InvalidInputError("lookup mode needs a positive vocab_size")
            if self.file_path is not None:
                raise InvalidInputError("lookup mode does not take a file_path")
        elif self.mode == PRECOMPUTED:
            if self.file_path is None:
                raise InvalidInputError("precomputed mode needs a file_path")
        else:
            raise InvalidInputError(f"unknown encoder mode {self.mode!r}")


def glorot(rng, shape, dtype=np.float32):
    r = np.sqrt(6.0 / (shape[0] + shape[1]))
    return rng.uniform(-r, r, size=shape).astype(dtype)


@dataclass
class GruDirection:
    W_z: np.ndarray
    W_r: np.ndarray
    W_h: np.ndarray
    U_z: np.ndarray
    U_r: np.ndarray
    U_h: np.ndarray
    b_z: np.ndarray
    b_r: np.ndarray
    b_h: np.ndarray

    @classmethod
    def init(cls, embed_dim, hidden_dim, rng, dtype=np.float32):
        kw = {}
        for g in GATES:
            kw[f"W_{g}"] = glorot(rng, (hidden_dim, embed_dim), dtype)
            kw[f"U_{g}"] = glorot(rng, (hidden_dim, hidden_dim), dtype)
            kw[f"b_{g}"] = np.zeros(hidden_dim, dtype=dtype)
        return cls(**kw)

    @classmethod
    def zeros(cls, embed_dim, hidden_dim, dtype=np.float64):
        kw = {}
        for g in GATES:
            kw[f"W_{g}"] = np.zeros((hidden_dim, embed_dim), dtype)
            kw[f"U_{g}"] = np.zeros((hidden_dim, hidden_dim), dtype)
            kw[f"b_{g}"] = np.zeros(hidden_dim, dtype)
        return cls(**kw)


@dataclass
class GruParams:
    fwd: GruDirection
    bwd: GruDirection
    proj_W: np.ndarray
    proj_b: np.ndarray

    def __post_init__(self):
        H, D = self.fwd.W_z.shape
        for d in (self.fwd, self.bwd):
            for g in GATES:
                if getattr(d, f"W_{g}").shape != (H, D):
                    raise InvalidInputError(f"W_{g} shape mismatch")
                if getattr(d, f"U_{g}").shape != (H, H):
                    raise InvalidInputError(f"U_{g} shape mismatch")
                if getattr(d, f"b_{g}").shape != (H,):
                    raise InvalidInputError(f"b_{g} shape mismatch")
        K = self.proj_W.shape[0]
        if self.proj_W.shape != (K, 2 * H) or self.proj_b.shape != (K,):
            raise InvalidInputError(
                f"projection shapes {self.proj_W.shape}, {self.proj_b.shape} do not match hidden_dim {H}"
            )

    @property
    def hidden_dim(self) -> int:
        return self.fwd.W_z.shape[0]

    @property
    def embed_dim(self) -> int:
        return self.fwd.W_z.shape[1]

    @property
    def n_tags(self) -> int:
        return self.proj_W.shape[0]

    @classmethod
    def init(cls, embed_dim, hidden_dim, n_tags, rng=None, dtype=np.float32):
        rng = np.random.default_rng(rng)
        return cls(
            GruDirection.init(embed_dim, hidden_dim, rng, dtype),
            GruDirection.init(embed_dim, hidden_dim, rng, dtype),
            glorot(rng, (n_tags, 2 * hidden_dim), dtype),
            np.zeros(n_tags, dtype=dtype),
        )

    def tensors(self) -> dict:
        """Flat ``name -> array`` view (arrays are shared, not copied)."""
        out = {}
        for prefix, d in (("fwd", self.fwd), ("bwd", self.bwd)):
            for f in fields(GruDirection):
                out[f"{prefix}.{f.name}"] = getattr(d, f.name)
        out["proj_W"] = self.proj_W
        out["proj_b"] = self.proj_b
        return out

    @classmethod
    def from_tensors(cls, tensors: dict) -> "GruParams":
        dirs = {}
        for prefix in ("fwd", "bwd"):
            dirs[prefix] = GruDirection(
                **{f.name: tensors[f"{prefix}.{f.name}"] for f in fields(GruDirection)}
            )
        return cls(dirs["fwd"], dirs["bwd"], tensors["proj_W"], tensors["proj_b"])

    def astype(self, dtype) -> "GruParams":
        return GruParams.from_tensors({k: v.astype(dtype) for k, v in self.tensors().items()})


# -- encoder ---------------------------------------------------------------


def write_embedding_file(path, table) -> None:
    table = np.ascontiguousarray(table, dtype="<f4")
    if table.ndim != 2:
        raise InvalidInputError("embedding table must be 2-D")
    count, dim = table.shape
    with open(path, "wb") as fh:
        fh.write(EMBEDDING_MAGIC + struct.pack("<III", EMBEDDING_VERSION, count, dim))
        fh.write(table.tobytes())


def read_embedding_file(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < 16 or data[:4] != EMBEDDING_MAGIC:
        raise InvalidInputError(f"{path}: not an embedding file")
    version, count, dim = struct.unpack("<III", data[4:16])
    if version != EMBEDDING_VERSION:
        raise InvalidInputError(f"{path}: unsupported embedding file version {version}")
    expected = 16 + 4 * count * dim
    if len(data) != expected:
        raise InvalidInputError(f"{path}: expected {expected} bytes, found {len(data)}")
    return np.frombuffer(data, dtype="<f4", offset=16).reshape(count, dim).astype(np.float32)


def encode(piece_ids, cfg: EncoderConfig, table: np.ndarray) -> np.ndarray:
    """Look up one embedding row per id.

    ``table`` is the trainable lookup matrix in lookup mode or the frozen
    table read from ``cfg.file_path`` in precomputed mode.
    """
    ids = np.asarray(piece_ids, dtype=np.int64)
    if ids.ndim != 1:
        raise InvalidInputError("piece_ids must be one-dimensional")
    if table.shape[1] != cfg.embed_dim:
        raise InvalidInputError(f"table width {table.shape[1]} != embed_dim {cfg.embed_dim}")
    n = table.shape[0]
    if ids.size and (ids.min() < 0 or ids.max() >= n):
        bad = ids[(ids < 0) | (ids >= n)][0]
        raise InvalidInputError(f"piece id {bad} not in embedding table of {n} rows")
    return table[ids]


# -- Bi-GRU -----------------------------------------------------------------


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _run_direction(X, d: GruDirection):
    T = X.shape[0]
    H = d.W_z.shape[0]
    xz = X @ d.W_z.T + d.b_z
    xr = X @ d.W_r.T + d.b_r
    xh = X @ d.W_h.T + d.b_h
    dtype = xz.dtype
    hs = np.zeros((T + 1, H), dtype)  # hs[0] is h_0
    zs = np.empty((T, H), dtype)
    rs = np.empty((T, H), dtype)
    cands = np.empty((T, H), dtype)
    for t in range(T):
        h_prev = hs[t]
        z = _sigmoid(xz[t] + d.U_z @ h_prev)
        r = _sigmoid(xr[t] + d.U_r @ h_prev)
        c = np.tanh(xh[t] + d.U_h @ (r * h_prev))
        hs[t + 1] = (1.0 - z) * h_prev + z * c
        zs[t], rs[t], cands[t] = z, r, c
    return hs, zs, rs, cands


@dataclass
class ForwardCache:
    X: np.ndarray
    fwd: tuple
    bwd: tuple
    H: np.ndarray
    params: GruParams
    piece_ids: np.ndarray | None = None


def _check_input(X, p: GruParams):
    X = np.asarray(X)
    if X.ndim != 2 or X.shape[1] != p.embed_dim:
        raise InvalidInputError(f"input of shape {X.shape} does not match embed_dim {p.embed_dim}")
    if X.shape[0] < 1:
        raise InvalidInputError("empty input sequence")
    return X.astype(p.fwd.W_z.dtype, copy=False)


def bigru_forward(X, p: GruParams, return_cache: bool = False):
    """Run both GRU directions from a zero state and concatenate their outputs.

    Returns a ``T x 2H`` matrix whose row ``t`` is ``[forward h_t, backward h_t]``,
    plus a :class:`ForwardCache` when ``return_cache`` is set.
    """
    X = _check_input(X, p)
    f = _run_direction(X, p.fwd)
    b = _run_direction(X[::-1], p.bwd)
    H = np.concatenate([f[0][1:], b[0][1:][::-1]], axis=1)
    if return_cache:
        return H, ForwardCache(X, f, b, H, p)
    return H


def emissions(H, p: GruParams) -> np.ndarray:
    """Affine projection of Bi-GRU outputs to per-tag scores."""
    H = np.asarray(H)
    if H.ndim != 2 or H.shape[1] != 2 * p.hidden_dim:
        raise InvalidInputError(f"hidden matrix of shape {H.shape} does not match 2*{p.hidden_dim}")
    return H @ p.proj_W.T + p.proj_b


def forward(piece_ids, cfg: EncoderConfig, table, p: GruParams):
    """Encoder, Bi-GRU and projection in one call; returns ``(E, cache)``."""
    X = encode(piece_ids, cfg, table)
    H, cache = bigru_forward(X, p, return_cache=True)
    cache.piece_ids = np.asarray(piece_ids, dtype=np.int64)
    return emissions(H, p), cache


def _backprop_direction(dH, X, d: GruDirection, state):
    hs, zs, rs, cands = state
    T, Hd = zs.shape
    dtype = zs.dtype
    da_z = np.empty((T, Hd), dtype)
    da_r = np.empty((T, Hd), dtype)
    da_h = np.empty((T, Hd), dtype)
    dh_next = np.zeros(Hd, dtype)
    UzT, UrT, UhT = d.U_z.T, d.U_r.T, d.U_h.T
    for t in range(T - 1, -1, -1):
        h_prev = hs[t]
        z, r, c = zs[t], rs[t], cands[t]
        dh = dH[t] + dh_next
        dc = dh * z
        ah = dc * (1.0 - c * c)
        drh = UhT @ ah
        dr = drh * h_prev
        az = dh * (c - h_prev) * z * (1.0 - z)
        ar = dr * r * (1.0 - r)
        dh_next = dh * (1.0 - z) + drh * r + UzT @ az + UrT @ ar
        da_z[t], da_r[t], da_h[t] = az, ar, ah
    h_prev_all = hs[:-1]
    grads = {
        "W_z": da_z.T @ X,
        "W_r": da_r.T @ X,
        "W_h": da_h.T @ X,
        "U_z": da_z.T @ h_prev_all,
        "U_r": da_r.T @ h_prev_all,
        "U_h": da_h.T @ (rs * h_prev_all),
        "b_z": da_z.sum(axis=0),
        "b_r": da_r.sum(axis=0),
        "b_h": da_h.sum(axis=0),
    }
    dX = da_z @ d.W_z + da_r @ d.W_r + da_h @ d.W_h
    return grads, dX


def backward(dE, cache: ForwardCache | None) -> dict:
    """Gradients of a scalar loss given its gradient with respect to the emissions.

    Returns a dict keyed like :meth:`GruParams.tensors` plus ``"X"`` (gradient
    with respect to the encoder output rows). When the cache came from
    :func:`forward`, ``"piece_ids"`` is included so the caller can scatter
    ``"X"`` into a lookup table.
    """
    if cache is None:
        raise InvalidStateError("backward called without a forward cache")
    p = cache.params
    dE = np.asarray(dE, dtype=cache.H.dtype)
    if dE.shape != (cache.H.shape[0], p.n_tags):
        raise InvalidInputError(f"upstream gradient shape {dE.shape} does not match emissions")
    Hd = p.hidden_dim
    grads = {"proj_W": dE.T @ cache.H, "proj_b": dE.sum(axis=0)}
    dH = dE @ p.proj_W
    gf, dXf = _backprop_direction(dH[:, :Hd], cache.X, p.fwd, cache.fwd)
    gb, dXb = _backprop_direction(dH[::-1, Hd:], cache.X[::-1], p.bwd, cache.bwd)
    for k, v in gf.items():
        grads[f"fwd.{k}"] = v
    for k, v in gb.items():
        grads[f"bwd.{k}"] = v
    grads["X"] = dXf + dXb[::-1]
    if cache.piece_ids is not None:
        grads["piece_ids"] = cache.piece_ids
    return grads
