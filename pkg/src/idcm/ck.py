"""The efficient selection scorer (CK): embeddings, a single window-3
convolution for local context, cosine match matrix, Gaussian kernel
pooling, and a linear layer over the kernel features.

Scoring one (query, passage) pair:

    x      = embed(tokens)                (optionally projected, CKS variant)
    y_t    = sum_tau x[t+tau-1] @ Wc[tau] + bc     (zero-padded ends)
    yhat   = y / sqrt(|y|^2 + eps)
    M[i,j] = yhat_q[i] . yhat_p[j]
    K[k]   = exp(-(M - mu_k)^2 / (2 sigma_k^2))
    s[k,i] = sum over real passage positions j of K[k,i,j]
    F[k]   = sum over real query positions i of log(1 + s[k,i])
    score  = F . w_k + bias

log(1 + s) keeps the pooling finite when a query token matches nothing.
All math runs in float64; checkpoints store float32 tensors.

`ck_backward` returns exact analytic gradients for every trainable
parameter; the PAD embedding row is pinned at zero and receives zero
gradient.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass
from typing import Optional

import numpy as np

from idcm.config import CascadeConfig, ConfigError
from idcm.corpus import PAD_ID

NORM_EPS = 1e-12

_MAGIC = b"IDCMCKPT"
_VERSION = 1


@dataclass
class KernelBank:
    """Gaussian kernel centers and widths; mus strictly descending in [-1, 1]."""

    mus: np.ndarray
    sigmas: np.ndarray

    def __post_init__(self) -> None:
        self.mus = np.asarray(self.mus, dtype=np.float64)
        self.sigmas = np.asarray(self.sigmas, dtype=np.float64)
        if self.mus.shape != self.sigmas.shape or self.mus.ndim != 1:
            raise ConfigError("kernel mus and sigmas must be 1-d and of equal length")
        if np.any(np.diff(self.mus) >= 0):
            raise ConfigError("kernel mus must be strictly descending")
        if np.any(np.abs(self.mus) > 1.0):
            raise ConfigError("kernel mus must lie in [-1, 1]")
        if np.any(self.sigmas <= 0):
            raise ConfigError("kernel sigmas must be positive")

    @property
    def count(self) -> int:
        return len(self.mus)

    @classmethod
    def from_config(cls, config: CascadeConfig) -> "KernelBank":
        return cls(np.asarray(config.kernel_mus), np.asarray(config.kernel_sigmas))


@dataclass
class CkModel:
    """All trainable parameters of the selection scorer."""

    embeddings: np.ndarray  # (vocab_size, d_emb)
    conv_kernel: np.ndarray  # (3, d_in, d_out)
    conv_bias: np.ndarray  # (d_out,)
    w_k: np.ndarray  # (kernel count,)
    w_k_bias: np.ndarray  # (1,)
    kernel_bank: KernelBank
    pre_projection: Optional[np.ndarray] = None  # (d_emb, d_proj), CKS variant

    @property
    def vocab_size(self) -> int:
        return self.embeddings.shape[0]

    def parameters(self) -> dict[str, np.ndarray]:
        params = {
            "embeddings": self.embeddings,
            "conv_kernel": self.conv_kernel,
            "conv_bias": self.conv_bias,
            "w_k": self.w_k,
            "w_k_bias": self.w_k_bias,
        }
        if self.pre_projection is not None:
            params["pre_projection"] = self.pre_projection
        return params

    def copy(self) -> "CkModel":
        return CkModel(
            embeddings=self.embeddings.copy(),
            conv_kernel=self.conv_kernel.copy(),
            conv_bias=self.conv_bias.copy(),
            w_k=self.w_k.copy(),
            w_k_bias=self.w_k_bias.copy(),
            kernel_bank=KernelBank(self.kernel_bank.mus.copy(), self.kernel_bank.sigmas.copy()),
            pre_projection=None if self.pre_projection is None else self.pre_projection.copy(),
        )


@dataclass
class CkScore:
    """Scalar score plus the per-kernel pooled features for diagnostics."""

    value: float
    features: np.ndarray


def init_ck(config: CascadeConfig, vocab_size: int, rng_seed: int) -> CkModel:
    """Seeded initialization: embeddings uniform in [-0.1, 0.1], convolution
    fan-in-scaled uniform, kernel weights zero.  The PAD embedding row is
    all-zero and stays that way through training.
    """
    if vocab_size < 2:
        raise ConfigError("vocab_size must cover at least PAD and OOV")
    rng = np.random.default_rng(rng_seed)
    d_in = config.conv_in_dim
    embeddings = rng.uniform(-0.1, 0.1, size=(vocab_size, config.d_emb))
    embeddings[PAD_ID] = 0.0
    pre_projection = None
    if config.d_proj:
        bound = 1.0 / np.sqrt(config.d_emb)
        pre_projection = rng.uniform(-bound, bound, size=(config.d_emb, config.d_proj))
    bound = 1.0 / np.sqrt(3 * d_in)
    conv_kernel = rng.uniform(-bound, bound, size=(3, d_in, config.d_out))
    conv_bias = rng.uniform(-bound, bound, size=config.d_out)
    bank = KernelBank.from_config(config)
    return CkModel(
        embeddings=embeddings,
        conv_kernel=conv_kernel,
        conv_bias=conv_bias,
        w_k=np.zeros(bank.count),
        w_k_bias=np.zeros(1),
        kernel_bank=bank,
        pre_projection=pre_projection,
    )


def _as_ids_and_mask(tokens, mask) -> tuple[np.ndarray, np.ndarray]:
    ids = np.asarray(tokens, dtype=np.int64)
    if mask is None:
        mask = ids != PAD_ID
    else:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != ids.shape:
            raise ValueError(f"mask shape {mask.shape} does not match tokens {ids.shape}")
    return ids, mask


def _contextualize(model: CkModel, ids: np.ndarray):
    """Embedding lookup, optional projection, window-3 convolution.

    `ids` has shape (B, L); returns (x_pre, x, y) where x is the conv input
    and y the same-length conv output (ends zero-padded).
    """
    x_pre = model.embeddings[ids]  # (B, L, d_emb)
    if model.pre_projection is not None:
        x = x_pre @ model.pre_projection
    else:
        x = x_pre
    batch, length, d_in = x.shape
    xp = np.zeros((batch, length + 2, d_in))
    xp[:, 1 : length + 1] = x
    y = np.tensordot(xp[:, 0:length], model.conv_kernel[0], axes=([2], [0]))
    y += np.tensordot(xp[:, 1 : length + 1], model.conv_kernel[1], axes=([2], [0]))
    y += np.tensordot(xp[:, 2 : length + 2], model.conv_kernel[2], axes=([2], [0]))
    y += model.conv_bias
    return x_pre, xp, y


def _normalize(y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    norm = np.sqrt(np.sum(y * y, axis=-1, keepdims=True) + NORM_EPS)
    return y / norm, norm


def forward_windows(
    model: CkModel,
    query_tokens,
    passage_tokens,
    query_mask=None,
    passage_mask=None,
    need_cache: bool = False,
):
    """Score a batch of passages against one query.

    `passage_tokens` has shape (B, Lp); returns (scores (B,), features
    (B, n_kernels), cache).  The cache feeds `backward_windows`.
    """
    q_ids, q_mask = _as_ids_and_mask(query_tokens, query_mask)
    p_ids = np.asarray(passage_tokens, dtype=np.int64)
    if p_ids.ndim == 1:
        p_ids = p_ids[None, :]
    if passage_mask is None:
        p_mask = p_ids != PAD_ID
    else:
        p_mask = np.asarray(passage_mask, dtype=bool)
        if p_mask.ndim == 1:
            p_mask = p_mask[None, :]
        if p_mask.shape != p_ids.shape:
            raise ValueError(f"passage mask shape {p_mask.shape} does not match tokens {p_ids.shape}")
    if q_ids.ndim != 1:
        raise ValueError("query_tokens must be 1-d")
    if not q_mask.any():
        raise ValueError("query has no real tokens after masking")
    if not bool(p_mask.any(axis=1).all()):
        bad = int(np.argmin(p_mask.any(axis=1)))
        raise ValueError(f"passage {bad} has no real tokens after masking")

    xq_pre, xq_padded, yq = _contextualize(model, q_ids[None, :])
    xp_pre, xp_padded, yp = _contextualize(model, p_ids)
    yq_hat, q_norm = _normalize(yq)
    yp_hat, p_norm = _normalize(yp)

    cosine = np.einsum("id,bjd->bij", yq_hat[0], yp_hat)  # (B, Lq, Lp)
    mus = model.kernel_bank.mus[None, :, None, None]
    sigmas = model.kernel_bank.sigmas[None, :, None, None]
    diff = cosine[:, None, :, :] - mus
    kernels = np.exp(-(diff * diff) / (2.0 * sigmas * sigmas))  # (B, K, Lq, Lp)

    p_maskf = p_mask.astype(np.float64)
    q_maskf = q_mask.astype(np.float64)
    kernel_sums = np.einsum("bkij,bj->bki", kernels, p_maskf)
    saturated = np.log1p(kernel_sums)
    features = np.einsum("bki,i->bk", saturated, q_maskf)
    scores = features @ model.w_k + model.w_k_bias[0]

    cache = None
    if need_cache:
        cache = {
            "q_ids": q_ids,
            "p_ids": p_ids,
            "q_maskf": q_maskf,
            "p_maskf": p_maskf,
            "xq_pre": xq_pre,
            "xp_pre": xp_pre,
            "xq_padded": xq_padded,
            "xp_padded": xp_padded,
            "yq_hat": yq_hat,
            "yp_hat": yp_hat,
            "q_norm": q_norm,
            "p_norm": p_norm,
            "cosine": cosine,
            "kernels": kernels,
            "kernel_sums": kernel_sums,
            "features": features,
        }
    return scores, features, cache


def _conv_backward(model: CkModel, x_padded: np.ndarray, dy: np.ndarray, grads: dict) -> np.ndarray:
    """Gradient of the convolution; returns d loss / d conv-input."""
    batch, padded_len, _ = x_padded.shape
    length = padded_len - 2
    dxp = np.zeros_like(x_padded)
    for tau in range(3):
        grads["conv_kernel"][tau] += np.einsum("bld,ble->de", x_padded[:, tau : tau + length], dy)
        dxp[:, tau : tau + length] += dy @ model.conv_kernel[tau].T
    grads["conv_bias"] += dy.sum(axis=(0, 1))
    return dxp[:, 1 : length + 1]


def backward_windows(model: CkModel, cache: dict, upstream) -> dict[str, np.ndarray]:
    """Analytic gradients of `sum_b upstream[b] * score[b]` for every
    trainable parameter.  The PAD embedding row gets zero gradient."""
    upstream = np.asarray(upstream, dtype=np.float64)
    grads = {name: np.zeros_like(arr) for name, arr in model.parameters().items()}

    features = cache["features"]
    grads["w_k"] += upstream @ features
    grads["w_k_bias"][0] += upstream.sum()

    d_features = upstream[:, None] * model.w_k[None, :]  # (B, K)
    d_saturated = d_features[:, :, None] * cache["q_maskf"][None, None, :]
    d_sums = d_saturated / (1.0 + cache["kernel_sums"])
    d_kernels = d_sums[:, :, :, None] * cache["p_maskf"][:, None, None, :]

    mus = model.kernel_bank.mus[None, :, None, None]
    sigmas = model.kernel_bank.sigmas[None, :, None, None]
    diff = cache["cosine"][:, None, :, :] - mus
    d_cosine = np.einsum("bkij->bij", d_kernels * cache["kernels"] * (-diff / (sigmas * sigmas)))

    yq_hat, yp_hat = cache["yq_hat"], cache["yp_hat"]
    d_yq_hat = np.einsum("bij,bjd->id", d_cosine, yp_hat)[None, :, :]
    d_yp_hat = np.einsum("bij,id->bjd", d_cosine, yq_hat[0])

    def through_norm(y_hat, norm, d_hat):
        radial = np.sum(y_hat * d_hat, axis=-1, keepdims=True)
        return (d_hat - y_hat * radial) / norm

    d_yq = through_norm(yq_hat, cache["q_norm"], d_yq_hat)
    d_yp = through_norm(yp_hat, cache["p_norm"], d_yp_hat)

    d_xq = _conv_backward(model, cache["xq_padded"], d_yq, grads)
    d_xp = _conv_backward(model, cache["xp_padded"], d_yp, grads)

    if model.pre_projection is not None:
        grads["pre_projection"] += np.einsum("bld,ble->de", cache["xq_pre"], d_xq)
        grads["pre_projection"] += np.einsum("bld,ble->de", cache["xp_pre"], d_xp)
        d_xq = d_xq @ model.pre_projection.T
        d_xp = d_xp @ model.pre_projection.T

    np.add.at(grads["embeddings"], cache["q_ids"], d_xq[0])
    np.add.at(grads["embeddings"], cache["p_ids"].reshape(-1), d_xp.reshape(-1, d_xp.shape[-1]))
    grads["embeddings"][PAD_ID] = 0.0
    return grads


def ck_forward(model: CkModel, query_tokens, passage_tokens, query_mask=None, passage_mask=None) -> CkScore:
    """Score one (query, passage) pair."""
    scores, features, _ = forward_windows(
        model, query_tokens, passage_tokens, query_mask, passage_mask
    )
    value = float(scores[0])
    if not np.isfinite(value):
        raise FloatingPointError(f"non-finite score {value}")
    return CkScore(value=value, features=features[0])


def ck_backward(
    model: CkModel,
    query_tokens,
    passage_tokens,
    upstream_gradient: float,
    query_mask=None,
    passage_mask=None,
) -> dict[str, np.ndarray]:
    """Gradients of `upstream_gradient * score` w.r.t. every parameter."""
    _, _, cache = forward_windows(
        model, query_tokens, passage_tokens, query_mask, passage_mask, need_cache=True
    )
    return backward_windows(model, cache, np.asarray([upstream_gradient], dtype=np.float64))


# --- checkpoint container -------------------------------------------------
#
# Layout: magic, u32 version, u64 json length + config snapshot (JSON),
# u32 tensor count, then per tensor: u16 name length + name, u8 ndim,
# ndim * u64 dims, row-major little-endian float32 data.  Loading and
# re-saving a checkpoint reproduces it byte for byte.


def _write_tensor(buf: io.BytesIO, name: str, arr: np.ndarray) -> None:
    encoded = name.encode("utf-8")
    buf.write(struct.pack("<H", len(encoded)))
    buf.write(encoded)
    buf.write(struct.pack("<B", arr.ndim))
    for dim in arr.shape:
        buf.write(struct.pack("<Q", dim))
    buf.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def _read_exact(handle, n: int) -> bytes:
    data = handle.read(n)
    if len(data) != n:
        raise ValueError("truncated checkpoint")
    return data


def _read_tensor(handle) -> tuple[str, np.ndarray]:
    (name_len,) = struct.unpack("<H", _read_exact(handle, 2))
    name = _read_exact(handle, name_len).decode("utf-8")
    (ndim,) = struct.unpack("<B", _read_exact(handle, 1))
    shape = tuple(struct.unpack("<Q", _read_exact(handle, 8))[0] for _ in range(ndim))
    count = int(np.prod(shape)) if shape else 1
    data = np.frombuffer(_read_exact(handle, 4 * count), dtype="<f4").reshape(shape)
    return name, data.astype(np.float64)


def save_checkpoint(model: CkModel, config: CascadeConfig, path: str, vocab_size: int | None = None) -> None:
    snapshot = config.snapshot()
    snapshot["vocab_size"] = vocab_size if vocab_size is not None else model.vocab_size
    payload = json.dumps(snapshot, sort_keys=True).encode("utf-8")
    buf = io.BytesIO()
    buf.write(_MAGIC)
    buf.write(struct.pack("<I", _VERSION))
    buf.write(struct.pack("<Q", len(payload)))
    buf.write(payload)
    tensors = dict(model.parameters())
    tensors["kernel_mus"] = model.kernel_bank.mus
    tensors["kernel_sigmas"] = model.kernel_bank.sigmas
    buf.write(struct.pack("<I", len(tensors)))
    for name in sorted(tensors):
        _write_tensor(buf, name, tensors[name])
    from idcm.iohelpers import atomic_write

    with atomic_write(path, "wb") as handle:
        handle.write(buf.getvalue())


def load_checkpoint(path: str) -> tuple[CkModel, dict]:
    with open(path, "rb") as handle:
        if _read_exact(handle, len(_MAGIC)) != _MAGIC:
            raise ValueError(f"{path}: not a model checkpoint")
        (version,) = struct.unpack("<I", _read_exact(handle, 4))
        if version != _VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        (json_len,) = struct.unpack("<Q", _read_exact(handle, 8))
        snapshot = json.loads(_read_exact(handle, json_len).decode("utf-8"))
        (count,) = struct.unpack("<I", _read_exact(handle, 4))
        tensors = dict(_read_tensor(handle) for _ in range(count))
    required = {"embeddings", "conv_kernel", "conv_bias", "w_k", "w_k_bias", "kernel_mus", "kernel_sigmas"}
    missing = required - tensors.keys()
    if missing:
        raise ValueError(f"{path}: checkpoint missing tensors {sorted(missing)}")
    model = CkModel(
        embeddings=tensors["embeddings"],
        conv_kernel=tensors["conv_kernel"],
        conv_bias=tensors["conv_bias"],
        w_k=tensors["w_k"],
        w_k_bias=tensors["w_k_bias"],
        kernel_bank=KernelBank(tensors["kernel_mus"], tensors["kernel_sigmas"]),
        pre_projection=tensors.get("pre_projection"),
    )
    return model, snapshot
