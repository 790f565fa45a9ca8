"""MS combining, uplink training, AP-MS association and downlink precoding.

Array conventions used throughout the package::

    H      (K, M, n_ap, n_ms)   true channels
    S      (K, M, n_ap, P)      effective channels H_{k,m} L_k (or estimates)
    mask   (M, K) bool          mask[m, k] is True iff AP m serves user k
    Q      (K, M, n_ap, P)      precoders, zero where mask[m, k] is False
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .scenario import ScenarioConfig, Stream, stream


class SingularGramError(np.linalg.LinAlgError):
    pass


def ms_combiner(n_ms: int, p: int) -> np.ndarray:
    """0-1 combiner I_P kron 1_{n_ms/P}: antenna groups summed per stream."""
    if p < 1 or n_ms % p:
        raise ValueError(f"multiplexing order {p} must divide n_ms={n_ms}")
    return np.kron(np.eye(p), np.ones((n_ms // p, 1)))


def _sylvester(order: int) -> np.ndarray:
    h = np.ones((1, 1))
    while h.shape[0] < order:
        h = np.block([[h, h], [h, -h]])
    return h


def generate_pilots(K: int, p: int, tau_p: int, rng: np.random.Generator,
                    orthogonal_across_users: bool = False) -> np.ndarray:
    """Binary pilot matrices Phi_k, shape (K, P, tau_p), with Phi_k Phi_k^H = I.

    Rows come from a Sylvester-Hadamard pattern repeated over blocks and
    scrambled by a random +-1 sequence, so each user's rows are orthogonal
    while different users' sequences are random.  With
    ``orthogonal_across_users`` all K*P rows are mutually orthogonal.
    """
    if tau_p < p:
        raise ValueError(f"pilot length tau_p={tau_p} shorter than multiplexing order P={p}")
    n_rows = K * p if orthogonal_across_users else p
    if orthogonal_across_users and n_rows > tau_p:
        raise ValueError(f"cannot draw K*P={n_rows} orthogonal pilots of length tau_p={tau_p}")
    order = 1
    while order < n_rows:
        order *= 2
    if tau_p % order:
        raise ValueError(f"tau_p={tau_p} must be a multiple of {order} for {n_rows} orthogonal binary rows")
    pattern = np.repeat(_sylvester(order), tau_p // order, axis=1)
    scale = 1.0 / np.sqrt(tau_p)
    if orthogonal_across_users:
        rows = rng.permutation(order)[:n_rows]
        signs = rng.choice([-1.0, 1.0], size=tau_p)
        return (pattern[rows] * signs * scale).reshape(K, p, tau_p)
    phi = np.empty((K, p, tau_p))
    for k in range(K):
        rows = rng.permutation(order)[:p]
        phi[k] = pattern[rows] * rng.choice([-1.0, 1.0], size=tau_p) * scale
    return phi


@dataclass(frozen=True)
class EffectiveChannelSet:
    S: np.ndarray  # (K, M, n_ap, P)
    flavor: str  # "true" | "estimated"


def effective_channels(H: np.ndarray, L: np.ndarray) -> EffectiveChannelSet:
    return EffectiveChannelSet(H @ L, "true")


def uplink_train(H: np.ndarray, L: np.ndarray, pilots: np.ndarray, p_ul, noise_power: float,
                 rng: np.random.Generator | None) -> EffectiveChannelSet:
    """Correlate the received training block with each user's pilot.

    ``rng=None`` (or zero noise power) gives noiseless training.
    """
    K, M, n_ap, _ = H.shape
    tau_p = pilots.shape[-1]
    sqrt_p = np.sqrt(np.broadcast_to(np.asarray(p_ul, dtype=float), (K,)))
    S = H @ L
    Y = np.einsum("k,kmap,kpt->mat", sqrt_p, S, pilots)
    if rng is not None and noise_power > 0:
        W = rng.standard_normal((M, n_ap, tau_p)) + 1j * rng.standard_normal((M, n_ap, tau_p))
        Y = Y + np.sqrt(noise_power / 2.0) * W
    S_hat = np.einsum("mat,kpt->kmap", Y, pilots.conj()) / sqrt_p[:, None, None, None]
    return EffectiveChannelSet(S_hat, "estimated")


@dataclass(frozen=True)
class Association:
    mask: np.ndarray  # (M, K) bool

    @property
    def num_aps(self) -> int:
        return self.mask.shape[0]

    @property
    def num_ms(self) -> int:
        return self.mask.shape[1]

    def served_by(self, m: int) -> tuple[int, ...]:
        """K(m): users served by AP m, ascending."""
        return tuple(np.flatnonzero(self.mask[m]).tolist())

    def servers(self, k: int) -> tuple[int, ...]:
        """M(k): APs serving user k, ascending."""
        return tuple(np.flatnonzero(self.mask[:, k]).tolist())


def associate(metric: np.ndarray, mode: str, n: int | None = None) -> Association:
    """Pick K(m) for every AP.

    ``metric`` holds per-(k, m) channel matrices (K, M, ...); in UC mode AP m
    keeps the ``n`` users with the largest Frobenius norms (ties to the lower
    index).  CF mode serves everybody everywhere.
    """
    K, M = metric.shape[:2]
    if mode == "cf":
        return Association(np.ones((M, K), dtype=bool))
    if mode != "uc":
        raise ValueError(f"unknown association mode {mode!r}")
    if n is None or not 1 <= n <= K:
        raise ValueError(f"UC cluster size must lie in [1, K={K}] (got {n})")
    norms = np.sqrt(np.sum(np.abs(metric.reshape(K, M, -1)) ** 2, axis=-1))  # (K, M)
    order = np.argsort(-norms.T, axis=1, kind="stable")[:, :n]
    mask = np.zeros((M, K), dtype=bool)
    np.put_along_axis(mask, order, True, axis=1)
    return Association(mask)


@dataclass
class PrecoderSet:
    Q: np.ndarray  # (K, M, n_ap, P)
    mask: np.ndarray  # (M, K)
    kind: str = "fd"
    analog: dict[int, np.ndarray] = field(default_factory=dict)
    digital: dict[int, np.ndarray] = field(default_factory=dict)
    residuals: dict[int, list[float]] = field(default_factory=dict)


def _normalize(Q: np.ndarray) -> np.ndarray:
    norms = np.sqrt(np.sum(np.abs(Q) ** 2, axis=(-2, -1), keepdims=True))
    return np.divide(Q, norms, out=np.zeros_like(Q), where=norms > 0)


def _ridge_solve(G: np.ndarray, rhs: np.ndarray, ridge_rel: float) -> np.ndarray:
    n = G.shape[0]
    eps = ridge_rel * np.trace(G).real / n
    if eps == 0:
        rank = np.linalg.matrix_rank(G)
        if rank < n:
            raise SingularGramError(f"ZF Gram matrix is rank deficient (rank {rank} < n_ap={n}) and ridge is 0")
    return np.linalg.solve(G + eps * np.eye(n), rhs)


def zf_precoders(eff: EffectiveChannelSet, assoc: Association, ridge_rel: float = 1e-9,
                 scope: str = "global") -> PrecoderSet:
    """Regularized zero-forcing precoders with unit-trace normalization.

    ``scope="global"`` inverts the Gram of all users' channels at all APs,
    ``"per_ap"`` only the channels seen at the precoding AP.
    """
    S = eff.S
    K, M, n_ap, p = S.shape
    if scope == "global":
        G = np.einsum("kmap,kmbp->ab", S, S.conj())
        X = _ridge_solve(G, S.transpose(2, 0, 1, 3).reshape(n_ap, -1), ridge_rel)
        Q = X.reshape(n_ap, K, M, p).transpose(1, 2, 0, 3)
    elif scope == "per_ap":
        Q = np.empty_like(S)
        for m in range(M):
            Sm = S[:, m]  # (K, n_ap, P)
            G = np.einsum("kap,kbp->ab", Sm, Sm.conj())
            X = _ridge_solve(G, Sm.transpose(1, 0, 2).reshape(n_ap, -1), ridge_rel)
            Q[:, m] = X.reshape(n_ap, K, p).transpose(1, 0, 2)
    else:
        raise ValueError(f"unknown ZF scope {scope!r}")
    Q = _normalize(Q) * assoc.mask.T[:, :, None, None]
    return PrecoderSet(Q, assoc.mask.copy(), "fd")


def dft_analog(n_ap: int, n_rf: int) -> np.ndarray:
    """First ``n_rf`` columns of the unitary DFT matrix (constant modulus)."""
    idx = np.arange(n_ap)
    return np.exp(-2j * np.pi * np.outer(idx, np.arange(n_rf)) / n_ap) / np.sqrt(n_ap)


def hybrid_factorize(F: np.ndarray, n_rf: int, sweeps: int = 20,
                     rng: np.random.Generator | None = None,
                     init: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray, list[float]]:
    """Block-coordinate descent for F ~= W_RF W_BB with |W_RF[i, j]| = 1/sqrt(n_ap).

    The digital block is the least-squares solution given W_RF; the analog
    block is updated one column at a time, each entry set to the phase that
    exactly minimizes the residual with everything else fixed (rows of W_RF
    decouple).  ``residuals[0]`` is the error after the first digital step,
    followed by one entry per sweep; the sequence is non-increasing.
    """
    n_ap = F.shape[0]
    if not 1 <= n_rf <= n_ap:
        raise ValueError(f"n_rf must lie in [1, {n_ap}] (got {n_rf})")
    if sweeps < 1:
        raise ValueError("need at least one BCD sweep")
    amp = 1.0 / np.sqrt(n_ap)
    if init is not None:
        W_rf = np.array(init, dtype=complex)
    else:
        rng = rng if rng is not None else np.random.default_rng()
        W_rf = amp * np.exp(2j * np.pi * rng.random((n_ap, n_rf)))

    def digital(W):
        return np.linalg.lstsq(W, F, rcond=None)[0]

    W_bb = digital(W_rf)
    history = [float(np.linalg.norm(F - W_rf @ W_bb))]
    for _ in range(sweeps):
        E = F - W_rf @ W_bb
        for j in range(n_rf):
            b = W_bb[j]
            E += np.outer(W_rf[:, j], b)
            corr = E @ b.conj()
            mag = np.abs(corr)
            # any phase is optimal where corr == 0; keep the old one
            W_rf[:, j] = np.where(mag > 0, amp * corr / np.maximum(mag, np.finfo(float).tiny), W_rf[:, j])
            E -= np.outer(W_rf[:, j], b)
        W_bb = digital(W_rf)
        history.append(float(np.linalg.norm(F - W_rf @ W_bb)))
    return W_rf, W_bb, history


def hybridize(fd: PrecoderSet, n_rf: int, sweeps: int, cfg: ScenarioConfig, drop: int) -> PrecoderSet:
    """Replace each AP's FD precoders by their hybrid approximation."""
    K, M, n_ap, p = fd.Q.shape
    Q = np.zeros_like(fd.Q)
    out = PrecoderSet(Q, fd.mask.copy(), "hybrid")
    for m in range(M):
        users = np.flatnonzero(fd.mask[m])
        if users.size == 0:
            continue
        F = fd.Q[users, m].transpose(1, 0, 2).reshape(n_ap, -1)
        rng = stream(cfg.master_seed, drop, Stream.HYBRID, m)
        W_rf, W_bb, hist = hybrid_factorize(F, n_rf, sweeps, rng)
        approx = (W_rf @ W_bb).reshape(n_ap, users.size, p).transpose(1, 0, 2)
        Q[users, m] = _normalize(approx)
        out.analog[m], out.digital[m], out.residuals[m] = W_rf, W_bb, hist
    return out
