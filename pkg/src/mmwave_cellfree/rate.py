"""Downlink log-det rates, interference covariances and network power models.

Power allocations are arrays ``eta`` of shape (M, K) in watts, zero outside
the association.  Rates are computed in bit/s/Hz internally and scaled by the
bandwidth where a bit/s figure is asked for.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .protocol import PrecoderSet


class RateError(ArithmeticError):
    pass


@dataclass(frozen=True)
class GainTensor:
    """B[k, l, m] = L_k^H H_{k,m}^H Q_{l,m}, stacked as (K, K, M, P, P)."""

    B: np.ndarray
    noise: np.ndarray  # (K, P, P): sigma_z^2 L_k^H L_k
    mask: np.ndarray  # (M, K)
    bandwidth: float = 1.0

    @property
    def shape(self) -> tuple[int, int, int]:
        K, _, M, P, _ = self.B.shape
        return K, M, P


def effective_gains(H: np.ndarray, L: np.ndarray, precoders: PrecoderSet, noise_power: float,
                    bandwidth: float = 1.0) -> GainTensor:
    """Project true channels through combiners and precoders.

    ``H`` must hold the true channels, whatever CSI the precoders were built from.
    """
    S = H @ L
    B = np.einsum("kmap,lmaq->klmpq", S.conj(), precoders.Q)
    K = H.shape[0]
    noise = np.broadcast_to(noise_power * (L.T @ L), (K,) + (L.shape[1],) * 2).astype(complex)
    return GainTensor(B, noise, precoders.mask.copy(), float(bandwidth))


def stream_matrices(gains: GainTensor, eta: np.ndarray) -> np.ndarray:
    """A[k, l] = sum_m sqrt(eta[m, l]) B[k, l, m], shape (K, K, P, P)."""
    return np.einsum("ml,klmpq->klpq", np.sqrt(eta), gains.B)


def _outer(A: np.ndarray) -> np.ndarray:
    return A @ np.conj(np.swapaxes(A, -1, -2))


def covariances(gains: GainTensor, eta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Interference-plus-noise R_k and total T_k = R_k + A_kk A_kk^H for all k."""
    AAh = _outer(stream_matrices(gains, eta))
    K = AAh.shape[0]
    own = AAh[np.arange(K), np.arange(K)]
    # T is built as R + own so that own == 0 gives T == R bit for bit
    off = 1.0 - np.eye(K)
    R = gains.noise + np.einsum("kl,klpq->kpq", off, AAh)
    return R, R + own


def interference_covariance(gains: GainTensor, eta: np.ndarray, k: int) -> np.ndarray:
    return covariances(gains, eta)[0][k]


def logdet2(X: np.ndarray) -> np.ndarray:
    """log2 det of Hermitian positive-definite matrices via Cholesky."""
    X = 0.5 * (X + np.conj(np.swapaxes(X, -1, -2)))
    try:
        C = np.linalg.cholesky(X)
    except np.linalg.LinAlgError as exc:
        raise RateError(f"covariance is not positive definite: {exc}") from None
    return 2.0 * np.sum(np.log2(np.abs(np.diagonal(C, axis1=-2, axis2=-1))), axis=-1)


def ase_per_hz(gains: GainTensor, eta: np.ndarray) -> np.ndarray:
    """Per-user ASE in bit/s/Hz, difference-of-log-det form."""
    R, T = covariances(gains, eta)
    r = logdet2(T) - logdet2(R)
    bad = ~np.isfinite(r)
    if bad.any():
        raise RateError(f"non-finite rate for user {int(np.flatnonzero(bad)[0])}")
    return np.maximum(r, 0.0)


def ase_per_hz_ratio_form(gains: GainTensor, eta: np.ndarray) -> np.ndarray:
    """Same rates via log2 det(I + R^{-1} A_kk A_kk^H); kept as an independent check."""
    A = stream_matrices(gains, eta)
    K, _, P, _ = A.shape
    own = A[np.arange(K), np.arange(K)]
    R = gains.noise.copy()
    for k in range(K):
        for l in range(K):
            if l != k:
                R[k] += A[k, l] @ A[k, l].conj().T
    X = np.eye(P) + np.linalg.solve(R, own @ np.conj(np.swapaxes(own, -1, -2)))
    _, logabs = np.linalg.slogdet(X)
    return np.real(logabs) / np.log(2.0)


def user_ase(gains: GainTensor, eta: np.ndarray, k: int, bandwidth: float | None = None) -> float:
    """ASE of user ``k`` in bit/s."""
    bw = gains.bandwidth if bandwidth is None else bandwidth
    return float(bw * ase_per_hz(gains, eta)[k])


def g_split(gains: GainTensor, eta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """log2 det(T_k) and log2 det(R_k) per user (bit/s/Hz); their difference is the ASE."""
    R, T = covariances(gains, eta)
    return logdet2(T), logdet2(R)


@dataclass(frozen=True)
class PowerModel:
    kind: str = "basic"  # "basic" | "idle_aware"
    delta: float = 1.0
    p_circuit: float | np.ndarray = 1.0
    idle_fraction: float = 0.5

    def __post_init__(self):
        if self.kind not in ("basic", "idle_aware"):
            raise ValueError(f"unknown power model {self.kind!r}")
        if self.delta < 1:
            raise ValueError("amplifier inefficiency delta must be >= 1")
        if np.any(np.asarray(self.p_circuit) <= 0):
            raise ValueError("circuit power must be positive")
        if not 0 < self.idle_fraction <= 1:
            raise ValueError("idle_fraction must lie in (0, 1]")

    def circuit(self, radiated: np.ndarray) -> np.ndarray:
        """Per-AP circuit power given per-AP radiated power."""
        pc = np.broadcast_to(np.asarray(self.p_circuit, dtype=float), radiated.shape)
        if self.kind == "basic":
            return pc.copy()
        return np.where(radiated > 0, pc, self.idle_fraction * pc)


def power_consumed(eta: np.ndarray, model: PowerModel) -> float:
    """Total network power in watts: amplifier draw plus circuit power."""
    radiated = eta.sum(axis=1)
    return float(np.sum(model.delta * radiated + model.circuit(radiated)))


def gee(gains: GainTensor, eta: np.ndarray, model: PowerModel,
        bandwidth: float | None = None) -> tuple[float, float]:
    """Global energy efficiency in Mbit/J and sum-ASE in bit/s/Hz."""
    bw = gains.bandwidth if bandwidth is None else bandwidth
    sum_ase = float(ase_per_hz(gains, eta).sum())
    return bw * sum_ase / power_consumed(eta, model) / 1e6, sum_ase


def is_feasible(eta: np.ndarray, mask: np.ndarray, pmax, slack: float = 1e-9) -> bool:
    pmax = np.broadcast_to(np.asarray(pmax, dtype=float), (eta.shape[0],))
    return bool(np.all(eta >= 0) and np.all(eta[~mask] == 0) and np.all(eta.sum(axis=1) <= pmax + slack))


def average_user_rate(sum_ase_bit_s_hz: float, bandwidth: float, num_users: int) -> float:
    """Mean per-user throughput in bit/s implied by a sum-ASE figure."""
    return sum_ase_bit_s_hz * bandwidth / num_users
