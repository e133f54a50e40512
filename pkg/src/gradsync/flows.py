"""Consensus flow catalog: energies and right-hand sides.

Six flows over a weighted graph, all of the form "each agent follows
a tangent field built from its neighbors":

    intrinsic            x_i' = sum_j w_ij log_{x_i}(x_j)
                         (steepest descent of V, needs log_map)
    extrinsic            X_i' = -Pi_i sum_j w_ij (X_i - X_j)
                         (steepest descent of U)
    extrinsic-constnorm  X_i' = Pi_i sum_j w_ij X_j
                         (identical to extrinsic on constant-norm
                         kinds; every catalog kind qualifies)
    stiefel              S_i' = S_i skew(S_i^T A_i) + (I - S_i S_i^T) A_i,
                         A_i = sum_j w_ij S_j   (orthonormal columns)
    orthogonal           Q_i' = 2 Q_i skew(Q_i^T sum_j w_ij Q_j)
                         (square case; the literal factor 2 makes this
                         the negative gradient of 2U, and 2U is what
                         gradient checks must differentiate)
    lifted-stiefel       state R_i = [S_i | s_i] in O(n); S follows the
                         stiefel flow on the first n-1 columns, the
                         last column is slaved:
                         s_i' = 2 skew(A_i S_i^T) s_i = -S_i A_i^T s_i
                         (the factor keeps d/dt(S_i^T s_i) = 0, so the
                         combined matrix stays orthogonal)

V is the geodesic disagreement, U the chordal one; both are half the
weighted edge sum of squared distances.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from . import manifolds as mf
from .errors import CapabilityError, FeasibilityError, InjectivityError, PreconditionError
from .graphs import WeightedGraph
from .manifolds import ManifoldKind, ManifoldPoint, TangentVector


class FlowKind(str, enum.Enum):
    INTRINSIC = "intrinsic"
    EXTRINSIC = "extrinsic"
    EXTRINSIC_CONSTNORM = "extrinsic-constnorm"
    STIEFEL_CANONICAL = "stiefel"
    ORTHOGONAL_GROUP = "orthogonal"
    LIFTED_STIEFEL = "lifted-stiefel"

    def __str__(self) -> str:
        return self.value

    @classmethod
    def parse(cls, text: str) -> "FlowKind":
        try:
            return cls(text.strip().lower())
        except ValueError:
            names = ", ".join(k.value for k in cls)
            raise CapabilityError(f"unknown flow {text!r} (known: {names})") from None


@dataclass(frozen=True, eq=False)
class Configuration:
    """N agents on a common manifold, stored as a stacked array.

    ``values`` has shape (N, rows, cols); each slice is validated
    against the kind's constraint on construction.
    """

    kind: ManifoldKind
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 3 or v.shape[1:] != self.kind.shape:
            raise FeasibilityError(
                f"configuration for {self.kind} needs shape (N, {self.kind.shape[0]},"
                f" {self.kind.shape[1]}), got {v.shape}"
            )
        if v.shape[0] < 1:
            raise FeasibilityError("configuration needs at least one agent")
        v = v.copy()
        for i in range(v.shape[0]):
            res = mf.feasibility_residual(self.kind, v[i])
            if not np.isfinite(res) or res > mf.FEASIBILITY_TOL:
                raise FeasibilityError(
                    f"agent {i} violates the {self.kind} constraint (residual {res:.3e})"
                )
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n_agents(self) -> int:
        return self.values.shape[0]

    def point(self, i: int) -> ManifoldPoint:
        return ManifoldPoint(self.kind, self.values[i])

    @property
    def points(self) -> list[ManifoldPoint]:
        return [self.point(i) for i in range(self.n_agents)]

    @classmethod
    def from_points(cls, points) -> "Configuration":
        points = list(points)
        if not points:
            raise FeasibilityError("configuration needs at least one agent")
        kind = points[0].kind
        if any(p.kind != kind for p in points):
            raise FeasibilityError("all agents must share one manifold kind")
        return cls(kind, np.stack([p.value for p in points]))

    @classmethod
    def consensus(cls, point: ManifoldPoint, n: int) -> "Configuration":
        return cls(point.kind, np.repeat(point.value[None, :, :], n, axis=0))

    @classmethod
    def random(cls, kind: ManifoldKind, n: int, rng: np.random.Generator) -> "Configuration":
        return cls(kind, np.stack([mf.sample_uniform(kind, rng).value for _ in range(n)]))


def twisted_state(n: int, q: int, offset: float = 0.0) -> Configuration:
    """Circle configuration at angles 2*pi*q*i/n + offset (winding q)."""
    if n < 1:
        raise PreconditionError("twisted state needs n >= 1")
    ang = 2.0 * np.pi * q * np.arange(n) / n + offset
    vals = np.stack([np.cos(ang), np.sin(ang)], axis=1)[:, :, None]
    return Configuration(ManifoldKind.circle(), vals)


# ----------------------------------------------------------------------
# compatibility
# ----------------------------------------------------------------------


def _has_geodesic_calculus(kind: ManifoldKind) -> bool:
    if kind.family == "stiefel":
        p, n = kind.params
        return p == 1 or p == n
    return True


def is_compatible(flow: FlowKind, kind: ManifoldKind) -> bool:
    if flow == FlowKind.INTRINSIC:
        return _has_geodesic_calculus(kind)
    if flow in (FlowKind.EXTRINSIC, FlowKind.EXTRINSIC_CONSTNORM):
        return True
    if flow == FlowKind.STIEFEL_CANONICAL:
        return kind.family != "torus"
    return kind.family in ("so", "o")  # orthogonal / lifted-stiefel


def require_compatible(flow: FlowKind, kind: ManifoldKind) -> None:
    if not is_compatible(flow, kind):
        raise CapabilityError(f"{flow} flow unsupported on {kind}")


def _check_pair(cfg: Configuration, graph: WeightedGraph) -> None:
    if cfg.n_agents != graph.n_vertices:
        raise PreconditionError(
            f"configuration has {cfg.n_agents} agents but the graph has"
            f" {graph.n_vertices} vertices"
        )


# ----------------------------------------------------------------------
# energies
# ----------------------------------------------------------------------


def _V_array(kind: ManifoldKind, values: np.ndarray, graph: WeightedGraph) -> float:
    total = 0.0
    for i, j, w in graph.edges:
        d = mf._geodesic_arr(kind, values[i], values[j])
        total += w * d * d
    return 0.5 * total


def _U_array(values: np.ndarray, graph: WeightedGraph) -> float:
    ei, ej, w = graph.arrays
    diff = values[ei] - values[ej]
    return 0.5 * float(np.sum(w * np.sum(diff * diff, axis=(1, 2))))


def disagreement_V(cfg: Configuration, graph: WeightedGraph) -> float:
    """Geodesic disagreement: half the weighted edge sum of d_g^2."""
    _check_pair(cfg, graph)
    return _V_array(cfg.kind, cfg.values, graph)


def disagreement_U(cfg: Configuration, graph: WeightedGraph) -> float:
    """Chordal disagreement: half the weighted edge sum of ||X_i - X_j||_F^2."""
    _check_pair(cfg, graph)
    return _U_array(cfg.values, graph)


def _split_columns(kind: ManifoldKind) -> int:
    # lifted state [S | s]: S = first n-1 columns of an O(n) matrix
    n = kind.shape[0]
    if kind.family not in ("so", "o") or n < 2:
        raise CapabilityError(f"lifted-stiefel flow unsupported on {kind}")
    return n - 1


def _matching_energy_array(
    flow: FlowKind, kind: ManifoldKind, values: np.ndarray, graph: WeightedGraph
) -> float:
    if flow == FlowKind.INTRINSIC:
        return _V_array(kind, values, graph)
    if flow in (FlowKind.EXTRINSIC, FlowKind.EXTRINSIC_CONSTNORM, FlowKind.STIEFEL_CANONICAL):
        return _U_array(values, graph)
    if flow == FlowKind.ORTHOGONAL_GROUP:
        return 2.0 * _U_array(values, graph)
    m = _split_columns(kind)
    return _U_array(values[:, :, :m], graph)


def matching_energy(flow: FlowKind, cfg: Configuration, graph: WeightedGraph) -> float:
    """The Lyapunov function that the given flow descends.

    V for the intrinsic flow; U for the extrinsic/const-norm/stiefel
    flows; 2U for the orthogonal-group flow (its rhs carries a literal
    factor 2, so it is minus the gradient of the doubled energy); U
    restricted to the first n-1 columns for the lifted flow.
    """
    _check_pair(cfg, graph)
    return _matching_energy_array(flow, cfg.kind, cfg.values, graph)


def matching_energy_label(flow: FlowKind) -> str:
    return {
        FlowKind.INTRINSIC: "V",
        FlowKind.EXTRINSIC: "U",
        FlowKind.EXTRINSIC_CONSTNORM: "U",
        FlowKind.STIEFEL_CANONICAL: "U",
        FlowKind.ORTHOGONAL_GROUP: "2U",
        FlowKind.LIFTED_STIEFEL: "U_cols",
    }[flow]


# ----------------------------------------------------------------------
# right-hand sides
# ----------------------------------------------------------------------


def _neighbor_sum(values: np.ndarray, graph: WeightedGraph) -> np.ndarray:
    ei, ej, w = graph.arrays
    acc = np.zeros_like(values)
    wcol = w[:, None, None]
    np.add.at(acc, ei, wcol * values[ej])
    np.add.at(acc, ej, wcol * values[ei])
    return acc


def _neighbor_diff_sum(values: np.ndarray, graph: WeightedGraph) -> np.ndarray:
    ei, ej, w = graph.arrays
    acc = np.zeros_like(values)
    d = w[:, None, None] * (values[ej] - values[ei])
    np.add.at(acc, ei, d)
    np.add.at(acc, ej, -d)
    return acc


def _project_batch(kind: ManifoldKind, x: np.ndarray, a: np.ndarray) -> np.ndarray:
    if kind.family == "torus":
        bx = x.reshape(x.shape[0], -1, 2)
        ba = a.reshape(a.shape[0], -1, 2)
        dots = np.sum(bx * ba, axis=2, keepdims=True)
        return (ba - dots * bx).reshape(x.shape)
    xt = x.transpose(0, 2, 1)
    b = xt @ a
    return x @ ((b - b.transpose(0, 2, 1)) / 2.0) + (a - x @ (xt @ a))


def _rhs_array(flow: FlowKind, kind: ManifoldKind, values: np.ndarray, graph: WeightedGraph) -> np.ndarray:
    """Flow field on the raw (N, rows, cols) stack.

    Formulas are evaluated as written, which extends them smoothly to
    a neighborhood of the manifold; integrators rely on that when
    sampling Runge-Kutta stage points.
    """
    if flow == FlowKind.INTRINSIC:
        out = np.zeros_like(values)
        for i, j, w in graph.edges:
            try:
                out[i] += w * mf._log_arr(kind, values[i], values[j])
                out[j] += w * mf._log_arr(kind, values[j], values[i])
            except InjectivityError as err:
                err.args = (f"{err.args[0]} (edge ({i}, {j}))",)
                err.edge = (i, j)
                raise
        return out
    if flow == FlowKind.EXTRINSIC:
        return _project_batch(kind, values, _neighbor_diff_sum(values, graph))
    if flow == FlowKind.EXTRINSIC_CONSTNORM:
        return _project_batch(kind, values, _neighbor_sum(values, graph))
    if flow == FlowKind.STIEFEL_CANONICAL:
        a = _neighbor_sum(values, graph)
        xt = values.transpose(0, 2, 1)
        b = xt @ a
        return values @ ((b - b.transpose(0, 2, 1)) / 2.0) + (a - values @ b)
    if flow == FlowKind.ORTHOGONAL_GROUP:
        a = _neighbor_sum(values, graph)
        b = values.transpose(0, 2, 1) @ a
        return values @ (b - b.transpose(0, 2, 1))
    # lifted-stiefel
    m = _split_columns(kind)
    s_part = values[:, :, :m]
    last = values[:, :, m:]
    a = _neighbor_sum(s_part, graph)
    b = s_part.transpose(0, 2, 1) @ a
    ds = s_part @ ((b - b.transpose(0, 2, 1)) / 2.0) + last @ (last.transpose(0, 2, 1) @ a)
    c = a @ s_part.transpose(0, 2, 1)
    dlast = (c - c.transpose(0, 2, 1)) @ last
    return np.concatenate([ds, dlast], axis=2)


def rhs(flow: FlowKind, cfg: Configuration, graph: WeightedGraph) -> list[TangentVector]:
    """Per-agent tangent velocities of ``flow`` at ``cfg``.

    Raises CapabilityError on an incompatible (flow, kind) pair and
    InjectivityError (with the offending edge attached) when the
    intrinsic flow meets a neighbor pair at the log_map boundary.
    """
    require_compatible(flow, cfg.kind)
    _check_pair(cfg, graph)
    vals = _rhs_array(flow, cfg.kind, cfg.values, graph)
    return [TangentVector(cfg.point(i), vals[i]) for i in range(cfg.n_agents)]


def gradient_residual(cfg: Configuration, graph: WeightedGraph, flow: FlowKind) -> float:
    """max_i ||rhs_i||_F, the stationarity defect of ``cfg`` under ``flow``."""
    require_compatible(flow, cfg.kind)
    _check_pair(cfg, graph)
    vals = _rhs_array(flow, cfg.kind, cfg.values, graph)
    return float(np.max(np.sqrt(np.sum(vals * vals, axis=(1, 2)))))


# ----------------------------------------------------------------------
# circle reduction and the square-case comparison
# ----------------------------------------------------------------------


def kuramoto_reduction_check(
    cfg: Configuration, graph: WeightedGraph, flow: FlowKind = FlowKind.EXTRINSIC
) -> float:
    """Max deviation between the circle flow and its phase reduction.

    On the circle the projection flows reduce to the Kuramoto model
    with identical oscillators: theta_i' = sum_j w_ij sin(theta_j -
    theta_i).  Returns the largest absolute difference between the
    angular speed of ``rhs`` and the Kuramoto field over the agents.
    """
    if cfg.kind != ManifoldKind.circle():
        raise CapabilityError("kuramoto_reduction_check is defined on the circle")
    if flow not in (FlowKind.EXTRINSIC, FlowKind.EXTRINSIC_CONSTNORM):
        raise CapabilityError("the Kuramoto reduction applies to the projection flows")
    _check_pair(cfg, graph)
    vals = _rhs_array(flow, cfg.kind, cfg.values, graph)
    x = cfg.values[:, :, 0]
    v = vals[:, :, 0]
    # angular speed = <v, J x>
    speed = x[:, 0] * v[:, 1] - x[:, 1] * v[:, 0]
    theta = np.arctan2(x[:, 1], x[:, 0])
    kuramoto = np.zeros_like(speed)
    for i, j, w in graph.edges:
        s = w * np.sin(theta[j] - theta[i])
        kuramoto[i] += s
        kuramoto[j] -= s
    return float(np.max(np.abs(speed - kuramoto)))


@dataclass(frozen=True)
class SquareCaseComparison:
    """Divergence between the orthogonal-group and lifted flows."""

    max_divergence: float
    t_at_max: float
    horizon: float
    n: int
    flows_may_coincide: bool  # n == 2 is degenerate; report, don't assert


def compare_square_flows(
    initial: Configuration, graph: WeightedGraph, horizon: float, step: float = 1e-2
) -> SquareCaseComparison:
    """Integrate the orthogonal-group and lifted flows side by side.

    Both start from the same O(n)/SO(n) configuration and run the full
    horizon (early exits disabled); the divergence is the largest
    per-agent chordal distance over the shared sample times.  The two
    flows genuinely differ for n >= 3; for n = 2 they may coincide,
    which the report flags instead of asserting anything.
    """
    from .integrate import IntegratorSettings, integrate

    if initial.kind.family not in ("so", "o"):
        raise CapabilityError("square-case comparison needs an so:n or o:n configuration")
    settings = IntegratorSettings(
        step=step,
        horizon=horizon,
        consensus_epsilon=1e-300,
        stall_tolerance=1e-300,
        record_stride=1,
    )
    rec_a = integrate(FlowKind.ORTHOGONAL_GROUP, initial, graph, settings)
    rec_b = integrate(FlowKind.LIFTED_STIEFEL, initial, graph, settings)
    n_common = min(len(rec_a.config_times), len(rec_b.config_times))
    div = 0.0
    t_at = 0.0
    for idx in range(n_common):
        d = rec_a.configs[idx] - rec_b.configs[idx]
        m = float(np.max(np.sqrt(np.sum(d * d, axis=(1, 2)))))
        if m > div:
            div, t_at = m, rec_a.config_times[idx]
    return SquareCaseComparison(
        max_divergence=div,
        t_at_max=t_at,
        horizon=horizon,
        n=initial.kind.shape[0],
        flows_may_coincide=initial.kind.shape[0] == 2,
    )
