"""Minimal differentiable kernel for the projection heads.

One head maps an input vector (768-d text embedding or 3200-bin spectrum)
to the 64-d joint space: dense -> GELU -> dense -> dropout -> skip add
(from the first dense output) -> layer norm. Forward passes cache every
intermediate so the reverse pass can produce exact gradients; an Adam
optimizer and a finite-difference gradient checker round out the kernel.

Everything runs in 64-bit floats so the 1e-4 gradient-check tolerance is
meaningful. Functions accept a single vector or a batch (rows = samples).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf

OUT_DIM = 64
LN_EPS = 1e-5

_PARAM_ORDER = ("W1", "b1", "W2", "b2", "ln_gain", "ln_bias")


def gelu(x: np.ndarray) -> np.ndarray:
    """Exact-erf GELU: 0.5 * x * (1 + erf(x / sqrt(2)))."""
    x = np.asarray(x, dtype=float)
    return 0.5 * x * (1.0 + erf(x / math.sqrt(2.0)))


def gelu_grad(x: np.ndarray) -> np.ndarray:
    """d GELU / dx = Phi(x) + x * phi(x) with the standard normal cdf/pdf."""
    x = np.asarray(x, dtype=float)
    cdf = 0.5 * (1.0 + erf(x / math.sqrt(2.0)))
    pdf = np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
    return cdf + x * pdf


def layer_norm(
    x: np.ndarray, gain: np.ndarray, bias: np.ndarray, eps: float = LN_EPS
) -> np.ndarray:
    """Per-row layer norm with population variance: gain * (x - mu)/sqrt(var + eps) + bias."""
    x = np.asarray(x, dtype=float)
    squeeze = x.ndim == 1
    rows = np.atleast_2d(x)
    mean = rows.mean(axis=1, keepdims=True)
    var = rows.var(axis=1, keepdims=True)
    out = gain * (rows - mean) / np.sqrt(var + eps) + bias
    return out[0] if squeeze else out


@dataclass
class ProjectionHead:
    """Trainable two-layer skip network into the 64-d joint space."""

    in_dim: int
    out_dim: int
    W1: np.ndarray  # (out_dim, in_dim)
    b1: np.ndarray  # (out_dim,)
    W2: np.ndarray  # (out_dim, out_dim)
    b2: np.ndarray  # (out_dim,)
    ln_gain: np.ndarray  # (out_dim,)
    ln_bias: np.ndarray  # (out_dim,)
    dropout_rate: float = 0.1

    def params(self) -> dict[str, np.ndarray]:
        """Live references to the parameter arrays, in a fixed order."""
        return {name: getattr(self, name) for name in _PARAM_ORDER}


def init_head(
    in_dim: int,
    seed: int | np.random.SeedSequence,
    out_dim: int = OUT_DIM,
    dropout_rate: float = 0.1,
) -> ProjectionHead:
    """Glorot-uniform weights, zero biases, unit norm gains."""
    if not 0.0 <= dropout_rate < 1.0:
        raise ValueError("dropout_rate must be in [0, 1)")
    rng = np.random.default_rng(seed)
    limit1 = math.sqrt(6.0 / (in_dim + out_dim))
    limit2 = math.sqrt(6.0 / (out_dim + out_dim))
    return ProjectionHead(
        in_dim=in_dim,
        out_dim=out_dim,
        W1=rng.uniform(-limit1, limit1, (out_dim, in_dim)),
        b1=np.zeros(out_dim),
        W2=rng.uniform(-limit2, limit2, (out_dim, out_dim)),
        b2=np.zeros(out_dim),
        ln_gain=np.ones(out_dim),
        ln_bias=np.zeros(out_dim),
        dropout_rate=dropout_rate,
    )


@dataclass
class ForwardCache:
    """Intermediates of one head forward pass, consumed by head_backward."""

    x: np.ndarray  # (B, in_dim)
    pre_act: np.ndarray  # (B, out) first dense output, also the skip branch
    hidden: np.ndarray  # (B, out) gelu(pre_act)
    pre_drop: np.ndarray  # (B, out) second dense output
    drop_mask: np.ndarray | None  # (B, out) inverted-scaled mask, None in infer
    pre_norm: np.ndarray  # (B, out) skip sum fed to layer norm
    mean: np.ndarray  # (B, 1)
    inv_std: np.ndarray  # (B, 1)
    x_hat: np.ndarray  # (B, out) normalized pre_norm
    single: bool  # input was a single vector


def head_forward(
    head: ProjectionHead,
    x: np.ndarray,
    train: bool = False,
    rng: np.random.Generator | None = None,
    dropout_mask: np.ndarray | None = None,
) -> tuple[np.ndarray, ForwardCache]:
    """Run the head on a vector or batch; returns projections and the cache.

    In train mode dropout draws an inverted-scaled mask from `rng`
    (or reuses `dropout_mask`, for gradient checks against a fixed mask).
    Infer mode is deterministic.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    rows = np.atleast_2d(x)
    if rows.shape[1] != head.in_dim:
        raise ValueError(
            f"input has {rows.shape[1]} features, head expects {head.in_dim}"
        )
    pre_act = rows @ head.W1.T + head.b1
    hidden = gelu(pre_act)
    pre_drop = hidden @ head.W2.T + head.b2
    mask = None
    dropped = pre_drop
    if train and head.dropout_rate > 0.0:
        if dropout_mask is not None:
            mask = dropout_mask
        else:
            if rng is None:
                raise ValueError("train mode with dropout requires an rng")
            keep = rng.random(pre_drop.shape) >= head.dropout_rate
            mask = keep / (1.0 - head.dropout_rate)
        dropped = pre_drop * mask
    pre_norm = pre_act + dropped
    mean = pre_norm.mean(axis=1, keepdims=True)
    var = pre_norm.var(axis=1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + LN_EPS)
    x_hat = (pre_norm - mean) * inv_std
    z = head.ln_gain * x_hat + head.ln_bias
    cache = ForwardCache(
        x=rows,
        pre_act=pre_act,
        hidden=hidden,
        pre_drop=pre_drop,
        drop_mask=mask,
        pre_norm=pre_norm,
        mean=mean,
        inv_std=inv_std,
        x_hat=x_hat,
        single=single,
    )
    return (z[0] if single else z), cache


def head_backward(
    head: ProjectionHead, cache: ForwardCache, upstream: np.ndarray
) -> tuple[dict[str, np.ndarray], np.ndarray]:
    """Exact gradients of sum(z * upstream) w.r.t. parameters and input.

    Honors the dropout mask recorded in the cache. Parameter gradients are
    summed over batch rows in index order.
    """
    upstream = np.asarray(upstream, dtype=float)
    u = np.atleast_2d(upstream)
    if u.shape != cache.x_hat.shape or cache.x.shape[1] != head.in_dim:
        raise ValueError("cache/upstream shapes do not match this head")

    d_gain = (u * cache.x_hat).sum(axis=0)
    d_bias = u.sum(axis=0)
    d_xhat = u * head.ln_gain
    # Layer-norm backward with population variance:
    # ds = inv_std * (d_xhat - mean(d_xhat) - x_hat * mean(d_xhat * x_hat))
    d_pre_norm = cache.inv_std * (
        d_xhat
        - d_xhat.mean(axis=1, keepdims=True)
        - cache.x_hat * (d_xhat * cache.x_hat).mean(axis=1, keepdims=True)
    )
    d_drop = d_pre_norm
    d_pre_drop = d_drop * cache.drop_mask if cache.drop_mask is not None else d_drop
    d_W2 = d_pre_drop.T @ cache.hidden
    d_b2 = d_pre_drop.sum(axis=0)
    d_hidden = d_pre_drop @ head.W2
    d_pre_act = d_pre_norm + d_hidden * gelu_grad(cache.pre_act)  # skip + main path
    d_W1 = d_pre_act.T @ cache.x
    d_b1 = d_pre_act.sum(axis=0)
    d_x = d_pre_act @ head.W1
    grads = {
        "W1": d_W1,
        "b1": d_b1,
        "W2": d_W2,
        "b2": d_b2,
        "ln_gain": d_gain,
        "ln_bias": d_bias,
    }
    return grads, (d_x[0] if cache.single else d_x)


def l2_normalize_rows(z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Unit-normalize each row; returns (normalized, norms) for the backward."""
    rows = np.atleast_2d(np.asarray(z, dtype=float))
    norms = np.linalg.norm(rows, axis=1, keepdims=True)
    return rows / norms, norms


def l2_normalize_backward(
    normalized: np.ndarray, norms: np.ndarray, upstream: np.ndarray
) -> np.ndarray:
    """Backward of row normalization: project out the radial component."""
    radial = (normalized * upstream).sum(axis=1, keepdims=True)
    return (upstream - normalized * radial) / norms


@dataclass
class AdamState:
    """Adaptive-moment optimizer state for one parameter group."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def optimizer_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
) -> None:
    """One in-place Adam update with bias correction."""
    for name, grad in grads.items():
        if not np.all(np.isfinite(grad)):
            raise FloatingPointError(f"non-finite gradient in parameter block {name!r}")
    state.step += 1
    t = state.step
    for name, param in params.items():
        grad = grads[name]
        m = state.m.setdefault(name, np.zeros_like(param))
        v = state.v.setdefault(name, np.zeros_like(param))
        m *= state.beta1
        m += (1.0 - state.beta1) * grad
        v *= state.beta2
        v += (1.0 - state.beta2) * grad * grad
        m_hat = m / (1.0 - state.beta1**t)
        v_hat = v / (1.0 - state.beta2**t)
        param -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)


def flatten_params(head: ProjectionHead) -> np.ndarray:
    return np.concatenate([head.params()[name].ravel() for name in _PARAM_ORDER])


def assign_params(head: ProjectionHead, flat: np.ndarray) -> None:
    """Write a flat vector back into the head's parameter arrays."""
    offset = 0
    for name in _PARAM_ORDER:
        param = head.params()[name]
        param[...] = flat[offset : offset + param.size].reshape(param.shape)
        offset += param.size
    if offset != flat.size:
        raise ValueError(f"expected {offset} values, got {flat.size}")


def grad_check(
    loss_and_grad,
    params: np.ndarray,
    h: float = 1e-4,
    seed: int = 0,
    sample_fraction: float = 0.01,
    min_coords: int = 100,
    loss_fn=None,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    `loss_and_grad(flat_params) -> (loss, flat_grad)` must be pure. A
    seeded random subsample of coordinates (1% of the parameters, at
    least 100) is checked; the relative error for one coordinate is
    |g_analytic - g_fd| / max(1e-8, |g_analytic| + |g_fd|).

    Difference evaluations only need the loss; pass `loss_fn` when a
    cheaper gradient-free path exists.
    """
    params = np.asarray(params, dtype=float)
    _, grad = loss_and_grad(params)
    if loss_fn is None:
        loss_fn = lambda p: loss_and_grad(p)[0]  # noqa: E731
    n = params.size
    k = min(n, max(min_coords, math.ceil(sample_fraction * n)))
    coords = np.random.default_rng(seed).choice(n, size=k, replace=False)
    worst = 0.0
    for i in coords:
        bumped = params.copy()
        bumped[i] = params[i] + h
        loss_plus = loss_fn(bumped)
        bumped[i] = params[i] - h
        loss_minus = loss_fn(bumped)
        fd = (loss_plus - loss_minus) / (2.0 * h)
        rel = abs(grad[i] - fd) / max(1e-8, abs(grad[i]) + abs(fd))
        worst = max(worst, rel)
    return worst
