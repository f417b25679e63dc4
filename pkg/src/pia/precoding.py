"""Block-diagonalization precoding with joint water-filling.

All batch routines accept channels of shape ``(..., K, N, M)`` and work
on every leading index independently, so a whole swarm or a whole set
of drops can be processed in one call.
"""

from typing import NamedTuple, Tuple

import numpy as np

from .channel import ChannelSet

__all__ = [
    "RANK_RTOL",
    "InsufficientAntennasError",
    "WaterFill",
    "PrecoderSet",
    "null_space_basis",
    "waterfill",
    "bd_precoders",
    "bd_batch",
    "user_rate",
    "user_rates_batch",
    "sum_rate",
    "sum_rate_batch",
]

RANK_RTOL = 1e-12
# Max number of channel sets per LAPACK batch; keeps the M x M
# right-singular-vector stacks at a few MB.
_CHUNK = 256


class InsufficientAntennasError(ValueError):
    """The interference null space is empty (M < N K)."""


def null_space_basis(hbar: np.ndarray, rtol: float = RANK_RTOL) -> np.ndarray:
    """Orthonormal basis of the null space of ``hbar``, shape ``(M, m0)``.

    Singular values at or below ``rtol`` times the largest one are treated
    as zero.
    """
    hbar = np.atleast_2d(np.asarray(hbar))
    cols = hbar.shape[1]
    if hbar.shape[0] == 0:
        return np.eye(cols, dtype=complex)
    _, s, vh = np.linalg.svd(hbar, full_matrices=True)
    rank = int(np.sum(s > rtol * s[0])) if s.size and s[0] > 0 else 0
    if rank >= cols:
        raise InsufficientAntennasError(
            f"stacked interference channel {hbar.shape} has full column "
            "rank; need M >= N K")
    return vh[rank:].conj().T


class WaterFill(NamedTuple):
    powers: np.ndarray
    level: np.ndarray  # nan where every gain is zero


def waterfill(gains, p_max) -> WaterFill:
    """Optimal powers ``max(0, mu - 1/g)`` summing to ``p_max``.

    Works along the last axis; ``p_max`` broadcasts against the leading
    axes. The water level comes from the sorted thresholds in a single
    pass. Zero gains get zero power; if all gains are zero, all powers
    are zero and the level is ``nan``.
    """
    g = np.asarray(gains, dtype=float)
    if np.any(g < 0) or not np.all(np.isfinite(g)):
        raise ValueError("gains must be finite and non-negative")
    p_max = np.asarray(p_max, dtype=float)
    if np.any(p_max <= 0):
        raise ValueError("p_max must be positive")
    # Solve with gains scaled to max 1 so that 1/g cannot overflow:
    # powers(g, p) = powers(g / c, c p) / c.
    scale = g.max(axis=-1, initial=0.0)
    safe = np.where(scale > 0, scale, 1.0)
    gs = g / safe[..., None]
    budget = p_max * safe
    with np.errstate(divide="ignore", over="ignore"):
        inv = np.where(gs > 0, 1.0 / np.where(gs > 0, gs, 1.0), np.inf)
    inv_sorted = np.sort(inv, axis=-1)
    n = np.arange(1, g.shape[-1] + 1)
    with np.errstate(invalid="ignore"):
        levels = (budget[..., None] + np.cumsum(inv_sorted, axis=-1)) / n
        active = levels > inv_sorted
    # the strongest stream is always active, even if budget << 1/g rounds away
    active[..., 0] = np.isfinite(inv_sorted[..., 0])
    count = active.sum(axis=-1)
    idx = np.maximum(count - 1, 0)[..., None]
    mean_inv = np.take_along_axis(np.cumsum(np.where(active, inv_sorted, 0.0), axis=-1),
                                  idx, axis=-1)[..., 0] / np.maximum(count, 1)
    threshold = np.take_along_axis(inv_sorted, idx, axis=-1)[..., 0]
    # d_k = budget / |A| + (mean_A(1/g) - 1/g_k), written to avoid mu - 1/g cancellation
    with np.errstate(invalid="ignore"):
        on = np.isfinite(inv) & (inv <= threshold[..., None]) & (count[..., None] > 0)
        powers = np.where(on, (budget / np.maximum(count, 1))[..., None]
                          + (mean_inv[..., None] - np.where(on, inv, 0.0)), 0.0)
        powers = np.maximum(powers, 0.0)
        # spread the rounding residue evenly so the budget is met to the last ulp
        n_on = np.maximum(on.sum(axis=-1), 1)
        powers = np.where(on, powers + ((budget - powers.sum(axis=-1)) / n_on)[..., None], 0.0)
    mu = np.where(count > 0, budget / np.maximum(count, 1) + mean_inv, np.nan)
    powers = powers / safe[..., None]
    with np.errstate(over="ignore"):  # the level may exceed float range for subnormal gains
        mu = mu / safe
    return WaterFill(powers, mu)


class PrecoderSet(NamedTuple):
    """BD precoders for one or many channel sets.

    ``w`` has shape ``(..., K, M, N)``; user ``i`` uses the first
    ``streams[..., i]`` columns, the rest are zero. ``powers`` and
    ``gains`` (singular values of the projected channels) have shape
    ``(..., K, N)``.
    """

    w: np.ndarray
    powers: np.ndarray
    gains: np.ndarray
    streams: np.ndarray

    def user(self, i: int) -> np.ndarray:
        """Precoder of user ``i`` trimmed to its ``n_i`` streams."""
        if self.w.ndim != 3:
            raise ValueError("user() needs an unbatched precoder set")
        return self.w[i][:, : int(self.streams[i])]


def _others_index(k):
    return np.array([[j for j in range(k) if j != i] for i in range(k)], dtype=int)


def _bd_core(h, noise_var, p_max, rtol):
    k, n, m = h.shape[-3:]
    batch = h.shape[:-3]
    if k > 1:
        hbar = h[..., _others_index(k), :, :].reshape(batch + (k, (k - 1) * n, m))
        _, s, vh = np.linalg.svd(hbar, full_matrices=True)
        smax = s[..., :1]
        rank = np.sum((s > rtol * smax) & (smax > 0), axis=-1)
        if np.any(rank >= m):
            raise InsufficientAntennasError(
                f"empty interference null space (M={m}, N={n}, K={k}); need M >= N K")
        keep = np.arange(m) >= rank[..., None]                    # (..., K, M)
        v0 = vh.conj().swapaxes(-1, -2) * keep[..., None, :]      # (..., K, M, M)
    else:
        rank = np.zeros(batch + (1,), dtype=int)
        v0 = np.broadcast_to(np.eye(m, dtype=complex), batch + (1, m, m))
    eff = h @ v0                                                  # (..., K, N, M)
    _, sig, vh1 = np.linalg.svd(eff, full_matrices=False)
    streams = np.minimum(n, m - rank)
    sig = np.where(np.arange(n) < streams[..., None], sig, 0.0)
    t = v0 @ vh1.conj().swapaxes(-1, -2)                          # (..., K, M, N)
    g = (sig ** 2 / noise_var).reshape(batch + (k * n,))
    powers = waterfill(g, np.broadcast_to(p_max, batch)).powers.reshape(batch + (k, n))
    w = t * np.sqrt(powers)[..., None, :]
    return PrecoderSet(w, powers, sig, streams)


def bd_batch(h: np.ndarray, noise_var: float, p_max: float,
             rtol: float = RANK_RTOL) -> PrecoderSet:
    """BD precoders for channels of shape ``(..., K, N, M)``."""
    h = np.asarray(h, dtype=complex)
    if not np.all(np.isfinite(h)):
        raise ValueError("channel entries must be finite")
    k, n, m = h.shape[-3:]
    if m < n * k:
        raise InsufficientAntennasError(f"need M >= N K, got M={m}, N={n}, K={k}")
    batch = h.shape[:-3]
    flat = h.reshape((-1, k, n, m))
    parts = [_bd_core(flat[s:s + _CHUNK], noise_var, p_max, rtol)
             for s in range(0, flat.shape[0], _CHUNK)]
    return PrecoderSet(*(np.concatenate(arrs).reshape(batch + arrs[0].shape[1:])
                         for arrs in zip(*parts)))


def bd_precoders(channels, noise_var: float, p_max: float,
                 rtol: float = RANK_RTOL) -> PrecoderSet:
    """Block-diagonalization precoders for one channel set.

    Each user's precoder lives in the null space of the other users'
    stacked channels. Within that space the projected channel is
    diagonalized by an SVD, and the resulting ``K * N`` streams share
    ``p_max`` by joint water-filling.
    """
    h = channels.h if isinstance(channels, ChannelSet) else np.asarray(channels)
    return bd_batch(h, noise_var, p_max, rtol)


def user_rates_batch(h: np.ndarray, w: np.ndarray, noise_var: float) -> np.ndarray:
    """``log2 det(I + H_i W_i W_i^H H_i^H / noise_var)`` for every user.

    ``h`` is ``(..., K, N, M)`` and ``w`` is ``(..., K, M, S)``; the
    determinant is taken in the ``S x S`` Gram form.
    """
    hw = np.asarray(h) @ np.asarray(w)
    gram = hw.conj().swapaxes(-1, -2) @ hw / noise_var
    eig = np.linalg.eigvalsh(gram)
    return np.sum(np.log2(1.0 + np.maximum(eig, 0.0)), axis=-1)


def user_rate(h_i: np.ndarray, w_i: np.ndarray, noise_var: float) -> float:
    h_i = np.asarray(h_i)
    w_i = np.asarray(w_i)
    if not (np.all(np.isfinite(h_i)) and np.all(np.isfinite(w_i))):
        raise ValueError("non-finite channel or precoder")
    if w_i.shape[-1] == 0:
        return 0.0
    return float(user_rates_batch(h_i[None], w_i[None], noise_var)[0])


def sum_rate_batch(h: np.ndarray, noise_var: float, p_max: float) -> np.ndarray:
    """Sum rate (bit/s/Hz) for channels of shape ``(..., K, N, M)``."""
    h = np.asarray(h, dtype=complex)
    batch = h.shape[:-3]
    flat = h.reshape((-1,) + h.shape[-3:])
    out = np.empty(flat.shape[0])
    for s in range(0, flat.shape[0], _CHUNK):
        part = flat[s:s + _CHUNK]
        pre = bd_batch(part, noise_var, p_max)
        out[s:s + _CHUNK] = user_rates_batch(part, pre.w, noise_var).sum(axis=-1)
    return out.reshape(batch)


def sum_rate(channels, noise_var: float, p_max: float) -> Tuple[float, np.ndarray]:
    """Sum rate and per-user rates for one channel set."""
    h = channels.h if isinstance(channels, ChannelSet) else np.asarray(channels)
    pre = bd_batch(h, noise_var, p_max)
    rates = user_rates_batch(h, pre.w, noise_var)
    return float(rates.sum()), rates
