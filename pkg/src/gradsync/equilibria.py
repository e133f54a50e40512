"""Non-consensus equilibria on closed geodesics.

Three pieces:

  * solve_eqp: the equality-constrained QP
        min (1/2) sum_i w_i d_i^2   s.t.  sum_i d_i = L
    in closed form (stationarity gives w_i d_i = -lambda, so the
    spacings are proportional to 1/w_i);
  * build_S_configuration: place N agents along a closed geodesic of
    winding q at the EQP arc-length spacings, which makes the cycle
    configuration a critical point of the geodesic disagreement;
  * stability_probe: finite-difference Hessian of the flow's energy
    on an orthonormal tangent frame, plus perturbed trajectories
    classified as returning to the equilibrium's orbit or escaping to
    consensus.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import manifolds as mf
from .errors import ConfigError, PreconditionError
from .flows import (
    Configuration,
    FlowKind,
    _matching_energy_array,
    gradient_residual,
    require_compatible,
)
from .graphs import WeightedGraph
from .integrate import IntegratorSettings, Outcome, integrate
from .manifolds import ManifoldKind, ManifoldPoint

__all__ = [
    "EqpSolution",
    "solve_eqp",
    "ClosedGeodesicSpec",
    "build_S_configuration",
    "gradient_residual",
    "StabilityReport",
    "stability_probe",
]


@dataclass(frozen=True)
class EqpSolution:
    """Spacings, Lagrange multiplier and objective of the spacing QP."""

    spacings: np.ndarray
    multiplier: float
    objective: float


def solve_eqp(total_length: float, weights) -> EqpSolution:
    """Optimal arc-length spacings for given edge weights.

    Closed form: d_i = L * (1/w_i) / sum_j (1/w_j), with multiplier
    lambda = -L / sum_j (1/w_j) (so w_i d_i + lambda = 0) and
    objective L^2 / (2 sum_j (1/w_j)).
    """
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 1 or w.size < 1:
        raise ConfigError("weights must be a non-empty 1-d sequence")
    if not np.all(w > 0.0):
        raise ConfigError("EQP weights must be strictly positive")
    if not (total_length > 0.0 and np.isfinite(total_length)):
        raise ConfigError("total length must be positive")
    inv = 1.0 / w
    s = float(inv.sum())
    d = total_length * inv / s
    lam = -total_length / s
    objective = 0.5 * total_length**2 / s
    return EqpSolution(spacings=d, multiplier=float(lam), objective=float(objective))


@dataclass(frozen=True)
class ClosedGeodesicSpec:
    """A closed geodesic loop on the circle or flat torus.

    ``winding`` is (q,) on the circle and an integer vector (one entry
    per factor, not all zero) on torus:k.  The loop is parametrized by
    arc length; its total length is 2*pi*||winding||_2.
    """

    kind: ManifoldKind
    winding: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "winding", tuple(int(q) for q in self.winding))
        fam = self.kind.family
        if fam == "circle":
            if len(self.winding) != 1:
                raise ConfigError("circle winding is a single integer")
        elif fam == "torus":
            if len(self.winding) != self.kind.params[0]:
                raise ConfigError(
                    f"torus:{self.kind.params[0]} winding needs {self.kind.params[0]} integers"
                )
        else:
            raise ConfigError(f"closed-geodesic construction not available on {self.kind}")
        if all(q == 0 for q in self.winding):
            raise ConfigError("winding must be nonzero")

    @property
    def length(self) -> float:
        return float(2.0 * np.pi * np.linalg.norm(self.winding))

    def point_at(self, s: float) -> ManifoldPoint:
        """Arc-length parametrization gamma(s); gamma(length) = gamma(0)."""
        m = np.asarray(self.winding, dtype=np.float64)
        ang = 2.0 * np.pi * m * s / self.length
        value = np.stack([np.cos(ang), np.sin(ang)], axis=1).reshape(-1, 1)
        return ManifoldPoint(self.kind, value)


def build_S_configuration(
    spec: ClosedGeodesicSpec, weights, offset: float = 0.0
) -> Configuration:
    """Agents on the loop at cumulative EQP spacings.

    Agent i sits at arc position offset + d_0 + ... + d_{i-1}; the
    last spacing d_{N-1} closes the loop because the spacings sum to
    its length.  Each spacing must stay strictly below the injectivity
    radius, otherwise the construction's equilibrium argument (and the
    meaning of the spacings as geodesic distances) breaks down.
    """
    weights = np.asarray(weights, dtype=np.float64)
    n = weights.size
    if n < 3:
        raise PreconditionError("the closed-geodesic construction needs at least 3 agents")
    sol = solve_eqp(spec.length, weights)
    radius = mf.injectivity_radius(spec.kind)
    if not np.all(sol.spacings < radius):
        worst = float(np.max(sol.spacings))
        raise PreconditionError(
            f"spacing {worst:.6g} reaches the injectivity radius {radius:.6g};"
            " increase N or rebalance the weights"
        )
    positions = offset + np.concatenate([[0.0], np.cumsum(sol.spacings[:-1])])
    return Configuration.from_points([spec.point_at(float(s)) for s in positions])


# ----------------------------------------------------------------------
# stability probe
# ----------------------------------------------------------------------


@dataclass
class StabilityReport:
    """Spectral and trajectory evidence about an equilibrium.

    ``classification`` is "strict-saddle" when an eigenvalue sits
    below -1e-6, "stable" when everything else is explained by the
    expected symmetry zero modes, and "inconclusive" when extra
    near-zero modes appear (marginal cases).
    """

    residual: float
    hessian_eigs: np.ndarray
    min_eig: float
    n_zero_modes: int
    expected_zero_modes: int
    classification: str
    return_fraction: float
    consensus_fraction: float
    n_directions: int
    delta: float

    def to_dict(self) -> dict:
        return {
            "residual": self.residual,
            "hessian_eigs": [float(v) for v in self.hessian_eigs],
            "return_fraction": self.return_fraction,
            "consensus_fraction": self.consensus_fraction,
            "min_eig": self.min_eig,
            "n_zero_modes": self.n_zero_modes,
            "expected_zero_modes": self.expected_zero_modes,
            "classification": self.classification,
            "n_directions": self.n_directions,
            "delta": self.delta,
        }


_NEGATIVE_TOL = 1e-6  # separates zero modes from genuine negatives


def _is_consensus_config(cfg: Configuration) -> bool:
    spread = cfg.values - cfg.values[:1]
    return float(np.max(np.abs(spread))) <= 1e-9


def _default_zero_modes(cfg: Configuration) -> int:
    """Dimension of the obvious symmetry orbit through ``cfg``.

    Consensus configurations move freely along the manifold (dim M
    zero modes); a configuration on a circle/torus can slide under
    the global rotation torus; on o:n/so:n left translation acts
    freely.  Other kinds get 0 (callers can pass their own count).
    """
    if _is_consensus_config(cfg):
        return cfg.kind.dim
    fam = cfg.kind.family
    if fam == "circle":
        return 1
    if fam == "torus":
        return cfg.kind.params[0]
    if fam in ("so", "o"):
        return cfg.kind.dim
    return 0


def _perturbed_values(kind: ManifoldKind, base: np.ndarray, coords) -> np.ndarray:
    out = base.copy()
    for (agent, direction), c in coords:
        out[agent] = out[agent] + c * direction
    for i in range(out.shape[0]):
        out[i] = mf._retract_arr(kind, out[i])
    return out


def _distance_to_orbit(ref: Configuration, final_values: np.ndarray) -> float:
    """Max per-agent distance from ``final_values`` to the orbit of ``ref``.

    Consensus references measure the spread of the final state around
    its own polar mean (distance to the consensus set); circle/torus
    references are aligned by the per-factor circular-mean offset
    before comparing; other kinds compare unaligned (conservative).
    """
    kind = ref.kind
    if _is_consensus_config(ref):
        center = mf._retract_arr(kind, np.mean(final_values, axis=0))
        d = final_values - center[None]
        return float(np.max(np.sqrt(np.sum(d * d, axis=(1, 2)))))
    if kind.family in ("circle", "torus"):
        ref_ang = np.stack([mf._torus_angles(v) for v in ref.values])
        fin_ang = np.stack([mf._torus_angles(v) for v in final_values])
        delta = mf._wrap_angle(fin_ang - ref_ang)
        offset = np.arctan2(
            np.sin(delta).sum(axis=0), np.cos(delta).sum(axis=0)
        )
        residual = mf._wrap_angle(delta - offset[None, :])
        return float(np.max(np.sqrt(np.sum(residual * residual, axis=1))))
    d = final_values - ref.values
    return float(np.max(np.sqrt(np.sum(d * d, axis=(1, 2)))))


def stability_probe(
    cfg: Configuration,
    graph: WeightedGraph,
    flow: FlowKind,
    n_directions: int = 20,
    delta: float = 1e-2,
    fd_step: float = 1e-3,
    settings: IntegratorSettings | None = None,
    expected_zero_modes: int | None = None,
    seed: int = 0,
    workers: int = 1,
) -> StabilityReport:
    """Probe an equilibrium of ``flow`` spectrally and dynamically.

    Requires gradient_residual(cfg) <= 1e-8.  The Hessian of the
    flow's matching energy is taken by central second differences of
    step ``fd_step`` along an orthonormal tangent frame (retraction-
    based perturbations; at a critical point the result is retraction
    independent).  ``n_directions`` random tangent perturbations of
    per-agent norm ``delta`` are then integrated; endpoints within
    ``delta`` of the equilibrium's orbit count as returned, consensus
    endpoints as escaped.
    """
    require_compatible(flow, cfg.kind)
    residual = gradient_residual(cfg, graph, flow)
    if residual > 1e-8:
        raise PreconditionError(
            f"stability_probe needs an equilibrium: gradient residual {residual:.3e} > 1e-8"
        )
    if settings is None:
        settings = IntegratorSettings()
    if delta <= 0.0:
        raise ConfigError("delta must be positive")
    kind = cfg.kind

    # --- finite-difference Hessian on the product tangent frame -----
    frame = []
    for agent in range(cfg.n_agents):
        for b in mf.tangent_basis(cfg.point(agent)):
            frame.append((agent, b))
    dim = len(frame)
    base = cfg.values

    def energy_at(coords) -> float:
        vals = _perturbed_values(kind, base, coords)
        return _matching_energy_array(flow, kind, vals, graph)

    e0 = _matching_energy_array(flow, kind, base, graph)
    hess = np.empty((dim, dim))
    eps = fd_step
    for a in range(dim):
        fa = frame[a]
        e_plus = energy_at([(fa, eps)])
        e_minus = energy_at([(fa, -eps)])
        hess[a, a] = (e_plus - 2.0 * e0 + e_minus) / (eps * eps)
        for b2 in range(a + 1, dim):
            fb = frame[b2]
            epp = energy_at([(fa, eps), (fb, eps)])
            epm = energy_at([(fa, eps), (fb, -eps)])
            emp = energy_at([(fa, -eps), (fb, eps)])
            emm = energy_at([(fa, -eps), (fb, -eps)])
            val = (epp - epm - emp + emm) / (4.0 * eps * eps)
            hess[a, b2] = val
            hess[b2, a] = val
    eigs = np.linalg.eigvalsh((hess + hess.T) / 2.0)
    min_eig = float(eigs[0])
    n_zero = int(np.sum(np.abs(eigs) <= _NEGATIVE_TOL))
    expected = (
        _default_zero_modes(cfg) if expected_zero_modes is None else int(expected_zero_modes)
    )
    if min_eig < -_NEGATIVE_TOL:
        classification = "strict-saddle"
    elif n_zero > expected:
        classification = "inconclusive"
    else:
        classification = "stable"

    # --- perturbed trajectories --------------------------------------
    # a tighter consensus epsilon keeps "reached consensus" endpoints
    # from being confused with "returned within delta of the orbit"
    probe_settings = IntegratorSettings(
        step=settings.step,
        horizon=settings.horizon,
        retraction=settings.retraction,
        consensus_epsilon=min(settings.consensus_epsilon, delta / 4.0),
        stall_tolerance=settings.stall_tolerance,
        record_stride=max(1, settings.n_steps),
    )

    def run_direction(idx: int) -> str:
        rng = np.random.Generator(
            np.random.Philox(key=np.array([seed, idx], dtype=np.uint64))
        )
        vals = base.copy()
        for agent in range(cfg.n_agents):
            v = mf.random_tangent(cfg.point(agent), rng, norm=delta)
            vals[agent] = mf._retract_arr(kind, vals[agent] + v.value)
        rec = integrate(flow, Configuration(kind, vals), graph, probe_settings)
        if _distance_to_orbit(cfg, rec.final.values) <= delta:
            return "returned"
        if rec.outcome == Outcome.CONSENSUS:
            return "consensus"
        return "other"

    if n_directions > 0:
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                labels = list(pool.map(run_direction, range(n_directions)))
        else:
            labels = [run_direction(i) for i in range(n_directions)]
        returned = labels.count("returned") / n_directions
        escaped = labels.count("consensus") / n_directions
    else:
        returned = 0.0
        escaped = 0.0

    return StabilityReport(
        residual=float(residual),
        hessian_eigs=eigs,
        min_eig=min_eig,
        n_zero_modes=n_zero,
        expected_zero_modes=expected,
        classification=classification,
        return_fraction=float(returned),
        consensus_fraction=float(escaped),
        n_directions=n_directions,
        delta=delta,
    )
