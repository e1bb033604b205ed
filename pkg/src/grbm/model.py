"""Gaussian-Bernoulli RBM parameters, energies, conditionals, and exact oracles.

The model couples real-valued visible units v (length N) to binary hidden
units h (length M) through the energy

    E(v, h) = 1/2 ((v - mu) / sigma)^T ((v - mu) / sigma)
              - (v / sigma^2)^T W h - b^T h

with all divisions elementwise.  Summing the Boltzmann weights over h gives
the marginal energy of v in closed form (a softplus over the hidden
pre-activations), which is what the Langevin sampler and the marginal
training path operate on.

Every function here is a pure function of its arguments (plus an explicit
``rng`` where sampling is involved) and accepts either a single state vector
or a batch stacked along the first axis.  All arithmetic is float64.
"""

from __future__ import annotations

import struct

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, logsumexp

from .exceptions import CapabilityError, DimensionError, FormatError

CHECKPOINT_MAGIC = b"GRBM"
CHECKPOINT_VERSION = 1

# 2^20 log-sum-exp terms is the largest exact partition we evaluate.
EXACT_MAX_HIDDEN = 20
_ENUM_CHUNK = 1 << 16


@dataclass
class GRBMParams:
    """Learnable parameters theta = {W, b, mu, log sigma^2}.

    Attributes:
        W: weight matrix, shape (n_visible, n_hidden).
        b: hidden bias, shape (n_hidden,).
        mu: visible mean, shape (n_visible,).
        log_sigma2: elementwise natural log of the visible variances,
            shape (n_visible,).  The log reparameterization keeps the
            variances strictly positive during learning.
    """

    W: np.ndarray
    b: np.ndarray
    mu: np.ndarray
    log_sigma2: np.ndarray

    def __post_init__(self):
        self.W = np.atleast_2d(np.asarray(self.W, dtype=np.float64))
        self.b = np.asarray(self.b, dtype=np.float64).ravel()
        self.mu = np.asarray(self.mu, dtype=np.float64).ravel()
        self.log_sigma2 = np.asarray(self.log_sigma2, dtype=np.float64).ravel()
        n, m = self.W.shape
        if self.mu.shape != (n,) or self.log_sigma2.shape != (n,):
            raise DimensionError(
                f"mu/log_sigma2 must have length {n} to match W with {n} rows"
            )
        if self.b.shape != (m,):
            raise DimensionError(f"b must have length {m} to match W with {m} columns")
        for name in ("W", "b", "mu", "log_sigma2"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"non-finite entries in parameter {name}")

    @property
    def n_visible(self) -> int:
        return self.W.shape[0]

    @property
    def n_hidden(self) -> int:
        return self.W.shape[1]

    @property
    def sigma2(self) -> np.ndarray:
        return np.exp(self.log_sigma2)

    @property
    def sigma(self) -> np.ndarray:
        return np.exp(0.5 * self.log_sigma2)

    def copy(self) -> "GRBMParams":
        return GRBMParams(
            self.W.copy(), self.b.copy(), self.mu.copy(), self.log_sigma2.copy()
        )


def init_params(
    n_visible: int,
    n_hidden: int,
    rng: np.random.Generator,
    visible_mean: np.ndarray | None = None,
    weight_scale: float = 0.01,
) -> GRBMParams:
    """Fresh parameters: small random weights, zero bias, unit variance.

    ``visible_mean`` seeds mu (the dataset mean; zero for standardized data).
    """
    w = weight_scale * rng.standard_normal((n_visible, n_hidden))
    mu = np.zeros(n_visible) if visible_mean is None else np.asarray(visible_mean, float)
    return GRBMParams(w, np.zeros(n_hidden), mu, np.zeros(n_visible))


def _as_batch(x, length: int, name: str) -> tuple[np.ndarray, bool]:
    """Coerce to a (batch, length) float64 array; report if input was 1-D."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        if arr.shape[0] != length:
            raise DimensionError(f"{name} has length {arr.shape[0]}, expected {length}")
        return arr[None, :], True
    if arr.ndim == 2:
        if arr.shape[1] != length:
            raise DimensionError(
                f"{name} has row length {arr.shape[1]}, expected {length}"
            )
        return arr, False
    raise DimensionError(f"{name} must be 1-D or 2-D, got ndim={arr.ndim}")


def _paired_batches(params: GRBMParams, v, h) -> tuple[np.ndarray, np.ndarray, bool]:
    vb, v_single = _as_batch(v, params.n_visible, "v")
    hb, h_single = _as_batch(h, params.n_hidden, "h")
    if vb.shape[0] != hb.shape[0]:
        raise DimensionError(
            f"v batch size {vb.shape[0]} != h batch size {hb.shape[0]}"
        )
    return vb, hb, v_single and h_single


def hidden_logits(params: GRBMParams, v) -> np.ndarray:
    """Pre-activation of the hidden units: W^T (v / sigma^2) + b."""
    vb, single = _as_batch(v, params.n_visible, "v")
    z = (vb / params.sigma2) @ params.W + params.b
    return z[0] if single else z


def energy(params: GRBMParams, v, h):
    """Joint energy E(v, h).

    Args:
        params: model parameters.
        v: visible state, shape (N,) or (batch, N).
        h: binary hidden state, shape (M,) or (batch, M).

    Returns:
        Scalar for 1-D inputs, else an array of per-row energies.
    """
    vb, hb, single = _paired_batches(params, v, h)
    sigma2 = params.sigma2
    diff = vb - params.mu
    quad = 0.5 * np.sum(diff * diff / sigma2, axis=1)
    interaction = np.sum((vb / sigma2) * (hb @ params.W.T), axis=1)
    bias = hb @ params.b
    e = quad - interaction - bias
    return float(e[0]) if single else e


def marginal_energy(params: GRBMParams, v):
    """Marginal energy of the visible units, with h summed out.

    Equals the quadratic visible term minus a softplus over the hidden
    pre-activations.  The softplus is evaluated as logaddexp(0, x), which
    is max(x, 0) + log1p(exp(-|x|)) and safe for large |x|.
    """
    vb, single = _as_batch(v, params.n_visible, "v")
    sigma2 = params.sigma2
    diff = vb - params.mu
    quad = 0.5 * np.sum(diff * diff / sigma2, axis=1)
    z = (vb / sigma2) @ params.W + params.b
    e = quad - np.sum(np.logaddexp(0.0, z), axis=1)
    return float(e[0]) if single else e


def marginal_energy_grad_v(params: GRBMParams, v):
    """Gradient of the marginal energy with respect to v."""
    vb, single = _as_batch(v, params.n_visible, "v")
    sigma2 = params.sigma2
    z = (vb / sigma2) @ params.W + params.b
    g = (vb - params.mu) / sigma2 - (expit(z) @ params.W.T) / sigma2
    return g[0] if single else g


def energy_grad_v(params: GRBMParams, v, h):
    """Gradient of the joint energy with respect to v: (v - mu - W h) / sigma^2."""
    vb, hb, single = _paired_batches(params, v, h)
    g = (vb - params.mu - hb @ params.W.T) / params.sigma2
    return g[0] if single else g


def hidden_probs(params: GRBMParams, v):
    """Conditional activation probabilities p(h_j = 1 | v), elementwise sigmoid."""
    z = hidden_logits(params, v)
    return expit(z)


def hidden_log_prob(params: GRBMParams, v, h):
    """Log-mass of a binary hidden state under p(h | v), in the log domain.

    Uses log sigmoid(z) = -softplus(-z) so saturated units do not overflow.
    """
    vb, hb, single = _paired_batches(params, v, h)
    z = (vb / params.sigma2) @ params.W + params.b
    lp = -np.sum(hb * np.logaddexp(0.0, -z) + (1.0 - hb) * np.logaddexp(0.0, z), axis=1)
    return float(lp[0]) if single else lp


def sample_h_given_v(params: GRBMParams, v, rng: np.random.Generator):
    """Draw h ~ p(h | v); each unit is an independent Bernoulli."""
    p = hidden_probs(params, v)
    return (rng.random(p.shape) < p).astype(np.float64)


def sample_v_given_h(params: GRBMParams, h, rng: np.random.Generator):
    """Draw v ~ N(mu + W h, diag(sigma^2))."""
    hb, single = _as_batch(h, params.n_hidden, "h")
    mean = params.mu + hb @ params.W.T
    v = mean + params.sigma * rng.standard_normal(mean.shape)
    return v[0] if single else v


def reconstruction_mean(params: GRBMParams, v):
    """Deterministic up-down pass: mu + W p(h | v)."""
    vb, single = _as_batch(v, params.n_visible, "v")
    r = params.mu + hidden_probs(params, vb) @ params.W.T
    return r[0] if single else r


def enumerate_hidden_states(n_hidden: int) -> np.ndarray:
    """All 2^M binary hidden configurations as a (2^M, M) float array."""
    if n_hidden > EXACT_MAX_HIDDEN:
        raise CapabilityError(
            f"enumerating 2^{n_hidden} hidden states exceeds the M <= "
            f"{EXACT_MAX_HIDDEN} limit"
        )
    codes = np.arange(1 << n_hidden, dtype=np.int64)
    return ((codes[:, None] >> np.arange(n_hidden)) & 1).astype(np.float64)


def exact_hidden_log_weights(params: GRBMParams) -> np.ndarray:
    """Log of the v-integrated Boltzmann weight of every hidden configuration.

    For fixed h the Gaussian integral over v is available in closed form,
    leaving (up to a shared constant) log w(h) = b^T h + mu^T (W h) / sigma^2
    + 1/2 (W h)^T (W h / sigma^2).  Normalizing these weights gives the exact
    marginal p(h) of a small model.
    """
    m = params.n_hidden
    if m > EXACT_MAX_HIDDEN:
        raise CapabilityError(
            f"2^{m} hidden configurations exceed the M <= {EXACT_MAX_HIDDEN} limit"
        )
    sigma2 = params.sigma2
    mu_scaled = params.mu / sigma2
    out = np.empty(1 << m)
    for start in range(0, 1 << m, _ENUM_CHUNK):
        codes = np.arange(start, min(start + _ENUM_CHUNK, 1 << m), dtype=np.int64)
        h = ((codes[:, None] >> np.arange(m)) & 1).astype(np.float64)
        u = h @ params.W.T
        out[start : start + h.shape[0]] = (
            h @ params.b + u @ mu_scaled + 0.5 * np.sum(u * u / sigma2, axis=1)
        )
    return out


def exact_log_partition(params: GRBMParams) -> float:
    """Exact log Z by analytic v-integration and enumeration over h.

    Guarded at M <= 20 (2^M log-sum-exp terms).
    """
    log_w = exact_hidden_log_weights(params)
    n = params.n_visible
    gauss_const = 0.5 * n * np.log(2.0 * np.pi) + 0.5 * np.sum(params.log_sigma2)
    return float(gauss_const + logsumexp(log_w))


def exact_log_likelihood(params: GRBMParams, data) -> float:
    """Mean log-density of the data under the exactly normalized model.

    ``data`` is a sample matrix or anything with a ``samples`` attribute.
    """
    samples = getattr(data, "samples", data)
    log_z = exact_log_partition(params)
    return float(np.mean(-marginal_energy(params, samples)) - log_z)


def exact_model_sample(
    params: GRBMParams, n_samples: int, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Draw exact (v, h) pairs from a small model: h categorically, then v | h."""
    log_w = exact_hidden_log_weights(params)
    p = np.exp(log_w - logsumexp(log_w))
    p /= p.sum()
    idx = rng.choice(p.shape[0], size=n_samples, p=p)
    h = ((idx[:, None] >> np.arange(params.n_hidden)) & 1).astype(np.float64)
    v = params.mu + h @ params.W.T + params.sigma * rng.standard_normal(
        (n_samples, params.n_visible)
    )
    return v, h


def save_checkpoint(
    path,
    params: GRBMParams,
    standardize_mean: np.ndarray | None = None,
    standardize_std: np.ndarray | None = None,
) -> None:
    """Write a checkpoint file.

    Layout: magic "GRBM", format version u32, N u32, M u32 (all little
    endian), then W row-major, b, mu, log sigma^2 as little-endian float64,
    then a presence flag byte followed, when set, by the standardization
    mean and std vectors (length N each).
    """
    if (standardize_mean is None) != (standardize_std is None):
        raise ValueError("standardize_mean and standardize_std must be given together")
    n, m = params.n_visible, params.n_hidden
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<III", CHECKPOINT_VERSION, n, m))
        for arr in (params.W, params.b, params.mu, params.log_sigma2):
            f.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        if standardize_mean is None:
            f.write(b"\x00")
        else:
            mean = np.asarray(standardize_mean, dtype="<f8").ravel()
            std = np.asarray(standardize_std, dtype="<f8").ravel()
            if mean.shape != (n,) or std.shape != (n,):
                raise DimensionError("standardization vectors must have length N")
            f.write(b"\x01")
            f.write(mean.tobytes())
            f.write(std.tobytes())


def load_checkpoint(path) -> tuple[GRBMParams, np.ndarray | None, np.ndarray | None]:
    """Read a checkpoint written by :func:`save_checkpoint`."""
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != CHECKPOINT_MAGIC:
        raise FormatError(
            f"bad checkpoint magic {blob[:4]!r}, expected {CHECKPOINT_MAGIC!r}",
            offset=0,
        )
    if len(blob) < 16:
        raise FormatError("checkpoint truncated in header", offset=len(blob))
    version, n, m = struct.unpack_from("<III", blob, 4)
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"unsupported checkpoint version {version}", offset=4)
    offset = 16

    def take(count: int) -> np.ndarray:
        nonlocal offset
        nbytes = 8 * count
        if offset + nbytes > len(blob):
            raise FormatError("checkpoint truncated in payload", offset=offset)
        out = np.frombuffer(blob, dtype="<f8", count=count, offset=offset).astype(
            np.float64
        )
        offset += nbytes
        return out

    w = take(n * m).reshape(n, m)
    b = take(m)
    mu = take(n)
    log_sigma2 = take(n)
    if offset >= len(blob):
        raise FormatError("checkpoint missing standardization flag", offset=offset)
    flag = blob[offset]
    offset += 1
    mean = std = None
    if flag == 1:
        mean = take(n)
        std = take(n)
    elif flag != 0:
        raise FormatError(f"bad standardization flag {flag}", offset=offset - 1)
    if offset != len(blob):
        raise FormatError("trailing bytes after checkpoint payload", offset=offset)
    return GRBMParams(w, b, mu, log_sigma2), mean, std
