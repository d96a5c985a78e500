"""VARMA(p,q) process specifications with instantaneous effects.

A process is given by coefficient matrices A0..Ap (A0 holds the instantaneous
effects, with acyclic support), MA matrices B1..Bq, and independent innovation
variances gamma. The module provides validity checking, the canonical
rewrites (instantaneous-effect elimination, total-instantaneous-effect matrix,
doubled-dimension VAR embedding) and finite full-time graph windows, both as
DAGs over (endogenous, innovation) nodes and as marginalized ADMGs over the
endogenous nodes only.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import ModelError
from .graphs import (
    DirectedMixedGraph,
    endo,
    innov,
    latent_project,
)

STABILITY_MARGIN = 1e-8


def _as_matrix(m, d, what):
    arr = np.asarray(m, dtype=float)
    if arr.shape != (d, d):
        raise ModelError(f"{what} must be {d}x{d}, got shape {arr.shape}")
    return arr


class VarmaSpec:
    """Process definition: S_t = A0 S_t + sum_k Ak S_(t-k) + eps_t + sum_l Bl eps_(t-l).

    Parameters
    ----------
    a : sequence of (d, d) arrays
        Lag matrices A0..Ap; ``a[0]`` carries the instantaneous effects and
        must have a zero diagonal.
    b : sequence of (d, d) arrays
        MA matrices B1..Bq (may be empty).
    gamma : length-d array
        Innovation variances (diagonal of the innovation covariance).
    names : optional component names, used for display only.

    Shape errors raise immediately; stability and acyclicity are checked by
    :func:`validate`. Instances are immutable after construction.
    """

    def __init__(self, a: Sequence, b: Sequence = (), gamma: Sequence = None, names=None):
        if len(a) < 1:
            raise ModelError("need at least A0")
        d = np.asarray(a[0], dtype=float).shape[0]
        self.d = d
        self.a = tuple(_as_matrix(m, d, f"A{k}") for k, m in enumerate(a))
        self.b = tuple(_as_matrix(m, d, f"B{l + 1}") for l, m in enumerate(b))
        self.p = len(self.a) - 1
        self.q = len(self.b)
        if gamma is None:
            gamma = np.ones(d)
        self.gamma = np.asarray(gamma, dtype=float)
        if self.gamma.shape != (d,):
            raise ModelError(f"gamma must have length {d}, got shape {self.gamma.shape}")
        if np.any(self.gamma < 0):
            raise ModelError("gamma entries must be non-negative")
        self.names = tuple(names) if names is not None else None
        if self.names is not None and len(self.names) != d:
            raise ModelError(f"names must have length {d}")
        for arr in (*self.a, *self.b, self.gamma):
            arr.setflags(write=False)

    def __repr__(self):
        return f"VarmaSpec(d={self.d}, p={self.p}, q={self.q})"

    @property
    def max_lag(self) -> int:
        return max(self.p, self.q)

    def component_name(self, i: int) -> str:
        return self.names[i] if self.names else f"S{i}"


def instantaneous_order(a0: np.ndarray):
    """Topological order of the instantaneous DAG (edge j→i iff A0[i,j] != 0).

    Returns None when the support graph is cyclic.
    """
    d = a0.shape[0]
    children = {j: [i for i in range(d) if a0[i, j] != 0] for j in range(d)}
    indeg = {i: sum(1 for j in range(d) if a0[i, j] != 0) for i in range(d)}
    order, queue = [], sorted(i for i in range(d) if indeg[i] == 0)
    while queue:
        j = queue.pop(0)
        order.append(j)
        for i in children[j]:
            indeg[i] -= 1
            if indeg[i] == 0:
                queue.append(i)
        queue.sort()
    return tuple(order) if len(order) == d else None


def companion_matrix(ar_mats: Sequence[np.ndarray]) -> np.ndarray:
    """Companion form of a VAR lag polynomial (matrices for lags 1..p)."""
    p = len(ar_mats)
    if p == 0:
        return np.zeros((0, 0))
    d = ar_mats[0].shape[0]
    comp = np.zeros((d * p, d * p))
    for k, m in enumerate(ar_mats):
        comp[:d, k * d:(k + 1) * d] = m
    if p > 1:
        comp[d:, :-d] = np.eye(d * (p - 1))
    return comp


@dataclass(frozen=True)
class ValidationReport:
    instantaneous_acyclic: bool
    topological_order: Optional[tuple[int, ...]]
    spectral_radius: float
    gamma_positive: bool
    gamma_nonnegative: bool
    passed: bool
    messages: tuple[str, ...]

    def to_dict(self):
        return {
            "instantaneous_acyclic": self.instantaneous_acyclic,
            "topological_order": list(self.topological_order) if self.topological_order else None,
            "spectral_radius": self.spectral_radius,
            "gamma_positive": self.gamma_positive,
            "passed": self.passed,
            "messages": list(self.messages),
        }


def validate(spec: VarmaSpec, allow_zero_variance: bool = False) -> ValidationReport:
    """Check instantaneous acyclicity, stability and innovation variances.

    The stability clause requires every root of
    det((I - A0) λ^p - A1 λ^(p-1) - ... - Ap) to satisfy |λ| < 1; it is
    checked through the companion matrix of (I - A0)^(-1) Ak with a margin of
    1e-8 on the spectral radius.
    """
    messages = []
    a0 = spec.a[0]
    if np.any(np.diag(a0) != 0):
        messages.append("diag(A0) must be zero")
        order = None
    else:
        order = instantaneous_order(a0)
        if order is None:
            messages.append("instantaneous effect graph has a cycle")
    acyclic = order is not None

    radius = float("inf")
    if acyclic and spec.p > 0:
        ice = ice_matrix(a0)
        comp = companion_matrix([ice @ ak for ak in spec.a[1:]])
        radius = float(np.max(np.abs(np.linalg.eigvals(comp)))) if comp.size else 0.0
    elif acyclic:
        radius = 0.0
    if radius >= 1 - STABILITY_MARGIN:
        messages.append(f"unstable: companion spectral radius {radius:.6g} >= 1 - 1e-8")

    gamma_pos = bool(np.all(spec.gamma > 0))
    gamma_nonneg = bool(np.all(spec.gamma >= 0))
    if not gamma_pos and not allow_zero_variance:
        messages.append("gamma entries must be strictly positive")
    passed = (
        acyclic
        and radius < 1 - STABILITY_MARGIN
        and (gamma_pos or (allow_zero_variance and gamma_nonneg))
    )
    return ValidationReport(
        instantaneous_acyclic=acyclic,
        topological_order=order,
        spectral_radius=radius,
        gamma_positive=gamma_pos,
        gamma_nonnegative=gamma_nonneg,
        passed=passed,
        messages=tuple(messages),
    )


def require_valid(spec: VarmaSpec, allow_zero_variance: bool = False) -> None:
    report = validate(spec, allow_zero_variance=allow_zero_variance)
    if not report.passed:
        raise ModelError("invalid process specification: " + "; ".join(report.messages))


def ice_matrix(a0: np.ndarray) -> np.ndarray:
    """(I - A0)^(-1), the matrix of total instantaneous causal effects.

    Entry (i, j) is the sum over all directed paths from component j to
    component i in the instantaneous DAG of the products of edge
    coefficients, with ones on the diagonal. Computed by forward substitution
    in topological order so that entries without a connecting path are exact
    floating-point zeros.
    """
    a0 = np.asarray(a0, dtype=float)
    d = a0.shape[0]
    if np.any(np.diag(a0) != 0):
        raise ModelError("diag(A0) must be zero")
    order = instantaneous_order(a0)
    if order is None:
        raise ModelError("instantaneous effect graph has a cycle")
    ice = np.zeros((d, d))
    for i in order:
        ice[i, i] = 1.0
        for j in np.nonzero(a0[i])[0]:
            ice[i] += a0[i, j] * ice[j]
    return ice


@dataclass(frozen=True)
class RewrittenVarSpec:
    """Equivalent representation without instantaneous effects.

    ``ar`` holds C A1..C Ap (C = (I - A0)^(-1)); ``ma_eps`` holds C B1..C Bq,
    the MA loadings when the equation is written against the original
    innovations (with contemporaneous loading C); ``ma_delta`` holds
    C Bl C^(-1), the loadings against delta_t = C eps_t; ``sigma_delta`` is
    Var(delta_t) = C Gamma C^T.
    """

    ice: np.ndarray
    ar: tuple[np.ndarray, ...]
    ma_eps: tuple[np.ndarray, ...]
    ma_delta: tuple[np.ndarray, ...]
    sigma_delta: np.ndarray
    topological_order: tuple[int, ...]


def remove_instantaneous(spec: VarmaSpec) -> RewrittenVarSpec:
    """Rewrite the process without instantaneous effects (distribution kept)."""
    require_valid(spec, allow_zero_variance=True)
    a0 = spec.a[0]
    ice = ice_matrix(a0)
    inv_ice = np.eye(spec.d) - a0
    return RewrittenVarSpec(
        ice=ice,
        ar=tuple(ice @ ak for ak in spec.a[1:]),
        ma_eps=tuple(ice @ bl for bl in spec.b),
        ma_delta=tuple(ice @ bl @ inv_ice for bl in spec.b),
        sigma_delta=ice @ np.diag(spec.gamma) @ ice.T,
        topological_order=instantaneous_order(a0),
    )


def embed_as_var(spec: VarmaSpec) -> VarmaSpec:
    """Embed the VARMA(p,q) as a 2d-dimensional VAR(max(p,q)) on (S_t, eps_t).

    The first d components follow the original process, the last d reproduce
    the innovations; their own innovations are degenerate at zero (variance
    exactly 0, flagged by validate, accepted by the stationary solver). The
    instantaneous block carries A0 together with the unit loading of eps_t on
    S_t, so the embedded full-time DAG is the VARMA full-time DAG.
    """
    require_valid(spec, allow_zero_variance=True)
    d, p, q = spec.d, spec.p, spec.q
    ell = max(p, q)
    zero = np.zeros((d, d))
    c0 = np.block([[spec.a[0], np.eye(d)], [zero, zero]])
    lags = []
    for k in range(1, ell + 1):
        ak = spec.a[k] if k <= p else zero
        bk = spec.b[k - 1] if k <= q else zero
        lags.append(np.block([[ak, bk], [zero, zero]]))
    gamma = np.concatenate([np.zeros(d), spec.gamma])
    names = None
    if spec.names:
        names = [*spec.names, *[f"eps({n})" for n in spec.names]]
    return VarmaSpec([c0, *lags], (), gamma, names=names)


@dataclass(frozen=True)
class GraphWindow:
    """A finite time slice of a full-time graph."""

    spec: VarmaSpec
    t_min: int
    t_max: int
    include_innovations: bool
    graph: DirectedMixedGraph
    marginalized: bool = False


def _structural_window(d, t_min, t_max, ar_mats, eps_loadings, include_innovations):
    """Window of the full-time graph of S_t = sum_k AR_k S_(t-k) + sum_l L_l eps_(t-l).

    ``ar_mats[k]`` is the lag-k endogenous coefficient matrix (k = 0 means
    instantaneous); ``eps_loadings[l]`` the lag-l innovation loading. An edge
    exists iff its stored coefficient is non-zero, exactly.
    """
    nodes = [endo(i, t) for t in range(t_min, t_max + 1) for i in range(d)]
    if include_innovations:
        nodes += [innov(i, t) for t in range(t_min, t_max + 1) for i in range(d)]
    directed = []
    for t in range(t_min, t_max + 1):
        for k, mat in enumerate(ar_mats):
            if t - k < t_min:
                continue
            for i in range(d):
                for j in range(d):
                    if mat[i, j] != 0:
                        directed.append((endo(j, t - k), endo(i, t), float(mat[i, j])))
        if include_innovations:
            for l, mat in enumerate(eps_loadings):
                if t - l < t_min:
                    continue
                for i in range(d):
                    for j in range(d):
                        if mat[i, j] != 0:
                            directed.append((innov(j, t - l), endo(i, t), float(mat[i, j])))
    return DirectedMixedGraph(nodes, directed)


def full_time_window(
    spec: VarmaSpec, t_min: int, t_max: int, include_innovations: bool = False
) -> GraphWindow:
    """Finite window of the process's full-time DAG.

    Endogenous edges come from the A matrices (lag 0 included); with
    innovations, eps_t^i feeds S_t^i with unit coefficient and eps_(t-l)^j
    feeds S_t^i iff (Bl)[i,j] != 0.
    """
    if t_min > t_max:
        raise ModelError(f"invalid window [{t_min}, {t_max}]")
    require_valid(spec, allow_zero_variance=True)
    loadings = [np.eye(spec.d), *spec.b]
    graph = _structural_window(
        spec.d, t_min, t_max, spec.a, loadings, include_innovations
    )
    return GraphWindow(spec, t_min, t_max, include_innovations, graph)


def rewritten_full_time_window(
    spec: VarmaSpec, t_min: int, t_max: int, include_innovations: bool = True
) -> GraphWindow:
    """Window of the full-time DAG of the rewrite without instantaneous effects.

    The rewrite keeps the original innovations: the contemporaneous loading is
    C = (I - A0)^(-1) and the lag-l loading is C Bl; endogenous lags are C Ak.
    """
    if t_min > t_max:
        raise ModelError(f"invalid window [{t_min}, {t_max}]")
    rw = remove_instantaneous(spec)
    ar = [np.zeros((spec.d, spec.d)), *rw.ar]
    loadings = [rw.ice, *rw.ma_eps]
    graph = _structural_window(spec.d, t_min, t_max, ar, loadings, include_innovations)
    return GraphWindow(spec, t_min, t_max, include_innovations, graph)


def marginalized_admg_window(
    spec: VarmaSpec, t_min: int, t_max: int, rewritten: bool = False
) -> GraphWindow:
    """Window of the full-time marginalized ADMG over endogenous nodes.

    Builds the full-time DAG over a window widened max(p,q)+1 steps to the
    left, latent-projects over the endogenous nodes, and crops back to
    [t_min, t_max]. Every projected edge spans at most max(p,q) lags (directed
    edges come from the A matrices; bi-directed endpoints are children of one
    innovation), so the crop equals the infinitely repeated structure and
    windows are translation invariant.
    """
    if t_min > t_max:
        raise ModelError(f"invalid window [{t_min}, {t_max}]")
    pad = spec.max_lag + 1
    builder = rewritten_full_time_window if rewritten else full_time_window
    wide = builder(spec, t_min - pad, t_max, include_innovations=True)
    endogenous = [v for v in wide.graph.nodes if v.kind == "endogenous"]
    projected = latent_project(wide.graph, endogenous)
    cropped = projected.subgraph(v for v in projected.nodes if v.time >= t_min)
    return GraphWindow(spec, t_min, t_max, False, cropped, marginalized=True)


# -- JSON model format --------------------------------------------------------

def spec_to_json(spec: VarmaSpec) -> dict:
    out = {
        "d": spec.d,
        "p": spec.p,
        "q": spec.q,
        "A": [m.tolist() for m in spec.a],
        "B": [m.tolist() for m in spec.b],
        "gamma": spec.gamma.tolist(),
    }
    if spec.names:
        out["names"] = list(spec.names)
    return out


def spec_from_json(data: dict) -> VarmaSpec:
    try:
        a = data["A"]
        gamma = data.get("gamma")
        b = data.get("B", [])
    except (KeyError, TypeError) as exc:
        raise ModelError(f"malformed model JSON: {exc}") from exc
    spec = VarmaSpec(a, b, gamma, names=data.get("names"))
    for key, actual in (("d", spec.d), ("p", spec.p), ("q", spec.q)):
        if key in data and int(data[key]) != actual:
            raise ModelError(f"model JSON claims {key}={data[key]} but matrices give {actual}")
    return spec


def load_spec(path: str) -> VarmaSpec:
    with open(path, "r", encoding="utf-8") as fh:
        return spec_from_json(json.load(fh))


def save_spec(spec: VarmaSpec, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(spec_to_json(spec), fh, indent=2)
        fh.write("\n")
