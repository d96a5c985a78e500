"""Exact stationary second-moment analysis.

The process is put into the companion state space of its rewrite without
instantaneous effects, the stationary state covariance is obtained from the
discrete Lyapunov equation, and cross/conditional covariances between
arbitrary finite sets of endogenous nodes are read off the autocovariance
table. Under the Gaussian module contract, conditional covariances are exact
Schur complements and zero conditional covariance is conditional independence.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import ModelError
from .graphs import ENDOGENOUS, SeparationQuery, TimedNode
from .model import VarmaSpec, remove_instantaneous, require_valid

LYAPUNOV_DIRECT_MAX_DIM = 60
LYAPUNOV_RESIDUAL_RTOL = 1e-10
PINV_RTOL = 1e-10
CI_DEFAULT_TOL = 1e-7


def _solve_lyapunov_direct(f: np.ndarray, q: np.ndarray) -> np.ndarray:
    n = f.shape[0]
    lhs = np.eye(n * n) - np.kron(f, f)
    sigma = np.linalg.solve(lhs, q.reshape(-1)).reshape(n, n)
    return (sigma + sigma.T) / 2.0


def _solve_lyapunov_doubling(f: np.ndarray, q: np.ndarray, tol: float = 1e-12,
                             max_iter: int = 200) -> np.ndarray:
    # Smith doubling: converges quadratically for spectral radius < 1.
    sigma = q.copy()
    a = f.copy()
    for _ in range(max_iter):
        nxt = sigma + a @ sigma @ a.T
        a = a @ a
        if np.linalg.norm(nxt - sigma, "fro") <= tol * max(1.0, np.linalg.norm(nxt, "fro")):
            sigma = nxt
            break
        sigma = nxt
    return (sigma + sigma.T) / 2.0


class AutocovarianceTable:
    """Lazily grown table of Cov(S_t, S_(t-h)); thread-safe extension."""

    def __init__(self, f: np.ndarray, sigma_z: np.ndarray, d: int):
        self._f = f
        self._d = d
        self._blocks = [sigma_z]
        self._lock = threading.Lock()

    @property
    def horizon(self) -> int:
        return len(self._blocks) - 1

    def gamma_s(self, h: int) -> np.ndarray:
        if h < 0:
            return self.gamma_s(-h).T
        if h > self.horizon:
            with self._lock:
                while h > self.horizon:
                    self._blocks.append(self._f @ self._blocks[-1])
        return self._blocks[h][: self._d, : self._d]


class StateSpaceForm:
    """Companion state space of the rewrite without instantaneous effects.

    The state stacks max(p,1) lags of S and q lags of eps; the stationary
    state covariance solves Sigma_z = F Sigma_z F^T + G Gamma G^T, by direct
    Kronecker vectorization up to state dimension 60 and by doubling
    iteration above. The solve residual is checked to 1e-10 relative.
    """

    def __init__(self, spec: VarmaSpec):
        require_valid(spec, allow_zero_variance=True)
        self.spec = spec
        d = spec.d
        rw = remove_instantaneous(spec)
        p_blocks = max(spec.p, 1)
        q_blocks = spec.q
        n = d * (p_blocks + q_blocks)

        f = np.zeros((n, n))
        for k in range(1, spec.p + 1):
            f[:d, (k - 1) * d:k * d] = rw.ar[k - 1]
        for l in range(1, spec.q + 1):
            col = (p_blocks + l - 1) * d
            f[:d, col:col + d] = rw.ma_eps[l - 1]
        for i in range(1, p_blocks):
            f[i * d:(i + 1) * d, (i - 1) * d:i * d] = np.eye(d)
        for i in range(1, q_blocks):
            row = (p_blocks + i) * d
            col = (p_blocks + i - 1) * d
            f[row:row + d, col:col + d] = np.eye(d)

        g = np.zeros((n, d))
        g[:d] = rw.ice
        if q_blocks:
            g[p_blocks * d:(p_blocks + 1) * d] = np.eye(d)

        q_mat = g @ np.diag(spec.gamma) @ g.T
        if n <= LYAPUNOV_DIRECT_MAX_DIM:
            sigma_z = _solve_lyapunov_direct(f, q_mat)
        else:
            sigma_z = _solve_lyapunov_doubling(f, q_mat)

        denom = max(np.linalg.norm(sigma_z, "fro"), np.finfo(float).tiny)
        residual = np.linalg.norm(sigma_z - f @ sigma_z @ f.T - q_mat, "fro") / denom
        if residual > LYAPUNOV_RESIDUAL_RTOL:
            raise ModelError(
                f"Lyapunov solve residual {residual:.3g} exceeds {LYAPUNOV_RESIDUAL_RTOL}")

        self.d = d
        self.f = f
        self.g_load = g
        self.sigma_z = sigma_z
        self.residual = float(residual)
        self.table = AutocovarianceTable(f, sigma_z, d)

    def autocov(self, h: int) -> np.ndarray:
        """Cov(S_t, S_(t-h)); negative h returns the transpose block."""
        return self.table.gamma_s(h)


def solve_stationary(spec: VarmaSpec) -> StateSpaceForm:
    return StateSpaceForm(spec)


def _check_endogenous(nodes: Iterable[TimedNode]) -> tuple[TimedNode, ...]:
    nodes = tuple(nodes)
    for v in nodes:
        if v.kind != ENDOGENOUS:
            raise ModelError(
                f"population covariances are over endogenous nodes; got {v!r}")
    return nodes


@dataclass(frozen=True)
class NodeSetCovariance:
    u: tuple[TimedNode, ...]
    v: tuple[TimedNode, ...]
    matrix: np.ndarray


def cross_covariance(ss: StateSpaceForm, u: Sequence[TimedNode],
                     v: Sequence[TimedNode]) -> NodeSetCovariance:
    """Cov(U, V) for ordered endogenous node lists, from the stationary law."""
    u = _check_endogenous(u)
    v = _check_endogenous(v)
    mat = np.empty((len(u), len(v)))
    for i, a in enumerate(u):
        for j, b in enumerate(v):
            mat[i, j] = ss.autocov(a.time - b.time)[a.component, b.component]
    return NodeSetCovariance(u, v, mat)


def conditional_covariance(ss: StateSpaceForm, a: Sequence[TimedNode],
                           c: Sequence[TimedNode],
                           b: Sequence[TimedNode] = ()) -> np.ndarray:
    """Cov(A, C | B) of the Gaussian stationary law (Schur complement).

    With B empty this is the plain cross covariance. Singular values of
    Cov(B, B) below 1e-10 of the largest are treated as zero.
    """
    a = _check_endogenous(a)
    c = _check_endogenous(c)
    b = _check_endogenous(b)
    overlap = (set(a) | set(c)) & set(b)
    if overlap:
        raise ModelError(f"conditioning set overlaps a/c nodes: {sorted(overlap)}")
    s_ac = cross_covariance(ss, a, c).matrix
    if not b:
        return s_ac
    s_ab = cross_covariance(ss, a, b).matrix
    s_cb = cross_covariance(ss, c, b).matrix
    s_bb = cross_covariance(ss, b, b).matrix
    return s_ac - s_ab @ np.linalg.pinv(s_bb, rcond=PINV_RTOL, hermitian=True) @ s_cb.T


@dataclass(frozen=True)
class CiVerdict:
    independent: bool
    max_abs_correlation: float
    degenerate: bool
    tol: float

    def __bool__(self) -> bool:
        return self.independent


def population_ci(ss: StateSpaceForm, query: SeparationQuery,
                  tol: float = CI_DEFAULT_TOL) -> CiVerdict:
    """Population conditional-independence verdict for Gaussian innovations.

    Each entry of Cov(A, C | B) is compared against tol times the product of
    the two conditional standard deviations (the squared geometric mean), i.e.
    the conditional correlation must fall below tol. Nodes whose conditional
    variance vanishes are degenerate: their entries count as independent and
    the verdict is flagged.

    For non-Gaussian innovations m-separation still forces these covariances
    to zero, but zero covariance then no longer certifies independence; the
    verdict is only an independence statement under Gaussianity.
    """
    stacked = (*query.a, *query.c)
    cond = conditional_covariance(ss, stacked, stacked, query.b)
    na = len(query.a)
    cross = cond[:na, na:]
    variances = np.diag(cond).copy()

    floors = np.empty(len(stacked))
    for idx, v in enumerate(stacked):
        uncond = ss.autocov(0)[v.component, v.component]
        floors[idx] = 1e-10 * max(uncond, np.finfo(float).tiny)
    degenerate_node = variances <= floors

    degenerate = False
    max_corr = 0.0
    independent = True
    for i in range(na):
        for j in range(len(query.c)):
            if degenerate_node[i] or degenerate_node[na + j]:
                degenerate = True
                continue
            corr = abs(cross[i, j]) / np.sqrt(variances[i] * variances[na + j])
            max_corr = max(max_corr, corr)
            if corr >= tol:
                independent = False
    return CiVerdict(independent, float(max_corr), degenerate, tol)
