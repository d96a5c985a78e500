"""Instrumental-variable identification and estimation of total causal effects.

Identification solves the population moment equation
E[Cov(Y - beta X, I | B)] = 0 with conditional covariances from the exact
stationary law; estimation evaluates the closed-form weighted estimator on
residualized lagged observation blocks and is consistent whenever the
graph-side conditions hold.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .errors import EstimationError, ModelError, UnderIdentifiedError
from .graphs import ENDOGENOUS, TimedNode, endo
from .model import VarmaSpec, require_valid
from .effects import IvConditionReport, check_iv_conditions, _query_sets
from .stationary import conditional_covariance, solve_stationary

RANK_RTOL = 1e-8


def _node_ref(v: TimedNode) -> dict:
    return {"component": v.component, "lag": v.time}


def _node_from_ref(d: dict) -> TimedNode:
    return endo(int(d["component"]), int(d["lag"]))


@dataclass(frozen=True)
class IvQuery:
    """Target y, treatments x, instruments i, conditioning set b, weight W."""

    y: TimedNode
    x_set: tuple[TimedNode, ...]
    i_set: tuple[TimedNode, ...]
    b_set: tuple[TimedNode, ...] = ()
    weight: Optional[np.ndarray] = None

    def __init__(self, y, x_set, i_set, b_set=(), weight=None):
        x_set, i_set, b_set = _query_sets(y, x_set, i_set, b_set)
        if not x_set or not i_set:
            raise ModelError("x and i sets must be non-empty")
        if weight is not None:
            weight = np.asarray(weight, dtype=float)
            k = len(i_set)
            if weight.shape != (k, k):
                raise ModelError(f"weight must be {k}x{k}")
            if not np.allclose(weight, weight.T, atol=1e-12):
                raise ModelError("weight must be symmetric")
            if np.min(np.linalg.eigvalsh(weight)) <= 0:
                raise ModelError("weight must be positive definite")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "x_set", x_set)
        object.__setattr__(self, "i_set", i_set)
        object.__setattr__(self, "b_set", b_set)
        object.__setattr__(self, "weight", weight)

    def weight_or_identity(self) -> np.ndarray:
        return np.eye(len(self.i_set)) if self.weight is None else self.weight

    def to_dict(self) -> dict:
        out = {
            "y": _node_ref(self.y),
            "x": [_node_ref(v) for v in self.x_set],
            "i": [_node_ref(v) for v in self.i_set],
            "b": [_node_ref(v) for v in self.b_set],
        }
        if self.weight is not None:
            out["weight"] = self.weight.tolist()
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "IvQuery":
        return cls(
            _node_from_ref(data["y"]),
            [_node_from_ref(d) for d in data["x"]],
            [_node_from_ref(d) for d in data["i"]],
            [_node_from_ref(d) for d in data.get("b", [])],
            weight=data.get("weight"),
        )


@dataclass(frozen=True)
class IvResult:
    beta: np.ndarray
    moment_residual: float
    conditions: Optional[IvConditionReport]
    sample_size: Union[int, str]

    def to_dict(self) -> dict:
        return {
            "beta": self.beta.tolist(),
            "moment_residual": self.moment_residual,
            "conditions": self.conditions.to_dict() if self.conditions else None,
            "sample_size": self.sample_size,
        }


def _weighted_solve(s_yi: np.ndarray, s_xi: np.ndarray, w: np.ndarray):
    inner = s_xi @ w @ s_xi.T
    cond = np.linalg.cond(inner)
    if not np.isfinite(cond) or cond > 1e12:
        raise EstimationError(
            f"moment matrix E[r_X r_I'] W E[r_I r_X'] is singular "
            f"(condition number {cond:.3g})")
    beta = np.linalg.solve(inner.T, (s_yi @ w @ s_xi.T).T).T
    residual = float(np.max(np.abs(s_yi - beta @ s_xi)))
    return np.asarray(beta).reshape(-1), residual


def identify_population(spec: VarmaSpec, query: IvQuery,
                        check_conditions: bool = True,
                        rank_rtol: float = RANK_RTOL) -> IvResult:
    """Solve beta · E[Cov(X,I|B)] = E[Cov(Y,I|B)] from the stationary law.

    With full row rank the solution is unique; rank deficiency raises
    :class:`UnderIdentifiedError` carrying the rank found. When
    ``check_conditions`` is set the result carries the full graph-side
    condition report.
    """
    require_valid(spec, allow_zero_variance=True)
    ss = solve_stationary(spec)
    s_xi = conditional_covariance(ss, query.x_set, query.i_set, query.b_set)
    s_yi = conditional_covariance(ss, (query.y,), query.i_set, query.b_set)

    svals = np.linalg.svd(s_xi, compute_uv=False)
    cutoff = rank_rtol * max(svals[0] if svals.size else 0.0, np.finfo(float).tiny)
    rank = int(np.sum(svals > cutoff))
    if rank < len(query.x_set):
        raise UnderIdentifiedError(
            f"E[Cov(X,I|B)] has rank {rank} < dim(X) = {len(query.x_set)}; "
            "the total causal effect is under-identified",
            rank=rank, required=len(query.x_set))

    beta, residual = _weighted_solve(s_yi, s_xi, query.weight_or_identity())
    conditions = None
    if check_conditions:
        conditions = check_iv_conditions(
            spec, query.y, query.x_set, query.i_set, query.b_set)
    return IvResult(beta, residual, conditions, "population")


def lagged_design(data: np.ndarray, nodes: Sequence[TimedNode]) -> np.ndarray:
    """Observation matrix for nodes given as (component, lag) references.

    Row t of the result stacks data[t + time(v), component(v)] over the nodes,
    for every anchor t where all references fall inside the series; the first
    max-lag-span rows are dropped.
    """
    data = np.asarray(data, dtype=float)
    if data.ndim == 1:
        data = data[:, None]
    n, d = data.shape
    nodes = tuple(nodes)
    for v in nodes:
        if v.kind != ENDOGENOUS:
            raise ModelError(f"data designs are over endogenous nodes; got {v!r}")
        if not 0 <= v.component < d:
            raise ModelError(f"component {v.component} outside data with {d} columns")
    times = [v.time for v in nodes]
    t_hi = max(times)
    span = t_hi - min(times)
    n_eff = n - span
    if n_eff <= 0:
        raise EstimationError(f"series of length {n} too short for lag span {span}")
    # anchor the latest reference on rows span..n-1
    out = np.empty((n_eff, len(nodes)))
    for j, v in enumerate(nodes):
        offset = v.time - t_hi  # <= 0
        start = span + offset
        out[:, j] = data[start:start + n_eff, v.component]
    return out


def _residualize(block: np.ndarray, controls: Optional[np.ndarray]) -> np.ndarray:
    if controls is None or controls.shape[1] == 0:
        return block
    coef, *_ = np.linalg.lstsq(controls, block, rcond=None)
    return block - controls @ coef


def estimate_from_data(data: np.ndarray, query: IvQuery) -> IvResult:
    """Closed-form weighted IV estimate from an observed series.

    Builds lagged blocks for Y, X, I, B from overlapping windows, centers
    them, replaces each block by its OLS residuals on B (centering only when B
    is empty), and evaluates
    beta = E^[r_Y r_I'] W E^[r_I r_X'] (E^[r_X r_I'] W E^[r_I r_X'])^(-1).

    Linear residualization equals the conditional expectation on B under the
    Gaussian stationary law; for non-Gaussian innovations it is only the best
    linear approximation, and the estimator targets the linearly-residualized
    moment equation.
    """
    data = np.asarray(data, dtype=float)
    if data.ndim == 1:
        data = data[:, None]
    nodes = (query.y, *query.x_set, *query.i_set, *query.b_set)
    design = lagged_design(data, nodes)
    n_eff = design.shape[0]
    n_regressors = len(query.x_set) + len(query.b_set)
    if n_eff <= n_regressors + 1:
        raise EstimationError(
            f"{n_eff} usable rows are too few for {n_regressors} regressors")
    design = design - design.mean(axis=0)

    ny, nx, ni = 1, len(query.x_set), len(query.i_set)
    y_block = design[:, :ny]
    x_block = design[:, ny:ny + nx]
    i_block = design[:, ny + nx:ny + nx + ni]
    b_block = design[:, ny + nx + ni:]
    controls = b_block if b_block.shape[1] else None

    r_y = _residualize(y_block, controls)
    r_x = _residualize(x_block, controls)
    r_i = _residualize(i_block, controls)

    s_yi = r_y.T @ r_i / n_eff
    s_xi = r_x.T @ r_i / n_eff
    beta, residual = _weighted_solve(s_yi, s_xi, query.weight_or_identity())
    return IvResult(beta, residual, None, int(n_eff))
