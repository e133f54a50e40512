"""Monte Carlo estimation of the consensus basin measure.

Each trial draws an i.i.d.-uniform initial configuration, integrates
the chosen flow and classifies the endpoint.  Trials use independent
counter-based random streams keyed (master_seed, trial_index), and
outcomes aggregate as integer counts, so estimates are bit-identical
for any worker count.  Trials that hit a numerical blow-up count as
non-consensus and are surfaced in the outcome counts, never dropped.

The flagship product is the (p, n) grid of consensus fractions for
Stiefel(p, n) under the canonical flow on a 5-cycle; cells with
2n/3 - 1 < p <= n - 2 sit in the theoretically obstructed band and
are marked in the rendered table.
"""

from __future__ import annotations

import os
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from . import manifolds as mf
from .errors import CapabilityError, ConfigError, NumericalBlowupError
from .flows import Configuration, FlowKind, _matching_energy_array, require_compatible, twisted_state
from .graphs import WeightedGraph, cycle, require_connected
from .integrate import IntegratorSettings, Outcome, integrate
from .manifolds import ManifoldKind

_OUTCOME_KEYS = (
    Outcome.CONSENSUS.value,
    Outcome.NONCONSENSUS.value,
    Outcome.HORIZON.value,
    "NumericalBlowup",
)


def wilson_halfwidth(successes: int, trials: int, z: float = 1.959963984540054) -> float:
    """Halfwidth of the 95% Wilson score interval for a proportion."""
    if trials < 1:
        raise ConfigError("trials must be >= 1")
    if not 0 <= successes <= trials:
        raise ConfigError("successes must lie in [0, trials]")
    p = successes / trials
    z2 = z * z
    return float(
        (z / (1.0 + z2 / trials)) * np.sqrt(p * (1.0 - p) / trials + z2 / (4.0 * trials**2))
    )


@dataclass(frozen=True)
class BasinExperiment:
    """One basin-measure estimation job."""

    kind: ManifoldKind
    flow: FlowKind
    graph: WeightedGraph
    trials: int
    seed: int = 0
    settings: IntegratorSettings = field(default_factory=IntegratorSettings)
    workers: int = 0  # 0 -> GRADSYNC_WORKERS or 1

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        require_compatible(self.flow, self.kind)
        require_connected(self.graph)


@dataclass(frozen=True)
class BasinEstimate:
    """Estimated consensus fraction with a Wilson 95% halfwidth."""

    kind_spec: str
    flow: str
    n_agents: int
    trials: int
    successes: int
    mu_hat: float
    halfwidth: float
    outcome_counts: dict
    seed: int

    def to_dict(self) -> dict:
        return {
            "manifold": self.kind_spec,
            "flow": self.flow,
            "n_agents": self.n_agents,
            "trials": self.trials,
            "successes": self.successes,
            "mu_hat": self.mu_hat,
            "halfwidth": self.halfwidth,
            "outcome_counts": dict(self.outcome_counts),
            "seed": self.seed,
        }


def trial_rng(master_seed: int, index: int) -> np.random.Generator:
    """Independent per-trial stream: Philox keyed (master_seed, index)."""
    key = np.array([master_seed, index], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def sample_initial(kind: ManifoldKind, n_agents: int, rng: np.random.Generator) -> np.ndarray:
    return np.stack([mf.sample_uniform(kind, rng).value for _ in range(n_agents)])


def _classify_trial(exp: BasinExperiment, index: int) -> int:
    rng = trial_rng(exp.seed, index)
    x0 = sample_initial(exp.kind, exp.graph.n_vertices, rng)
    factor2 = kernels.kernel_mode(exp.flow, exp.kind)
    s = exp.settings
    if factor2 is not None:
        ei, ej, w = exp.graph.arrays
        _, code, _ = kernels.integrate_orthonormal(
            x0, ei, ej, w, s.step, s.n_steps, s.consensus_epsilon, s.stall_tolerance, factor2
        )
        return int(code)
    try:
        rec = integrate(exp.flow, Configuration(exp.kind, x0), exp.graph, s)
    except NumericalBlowupError:
        return kernels.OUTCOME_BLOWUP
    return {
        Outcome.CONSENSUS: kernels.OUTCOME_CONSENSUS,
        Outcome.NONCONSENSUS: kernels.OUTCOME_STALL,
        Outcome.HORIZON: kernels.OUTCOME_HORIZON,
    }[rec.outcome]


def _resolve_workers(workers: int) -> int:
    if workers and workers > 0:
        return workers
    env = os.environ.get("GRADSYNC_WORKERS", "").strip()
    if env:
        try:
            val = int(env)
        except ValueError:
            raise ConfigError(f"GRADSYNC_WORKERS must be an integer, got {env!r}") from None
        if val > 0:
            return val
    return 1


def run_basin(exp: BasinExperiment) -> BasinEstimate:
    """Estimate the consensus fraction of ``exp`` trial by trial."""
    workers = _resolve_workers(exp.workers)
    indices = range(exp.trials)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            codes = Counter(pool.map(lambda k: _classify_trial(exp, k), indices))
    else:
        codes = Counter(_classify_trial(exp, k) for k in indices)
    counts = {
        _OUTCOME_KEYS[0]: codes.get(kernels.OUTCOME_CONSENSUS, 0),
        _OUTCOME_KEYS[1]: codes.get(kernels.OUTCOME_STALL, 0),
        _OUTCOME_KEYS[2]: codes.get(kernels.OUTCOME_HORIZON, 0),
        _OUTCOME_KEYS[3]: codes.get(kernels.OUTCOME_BLOWUP, 0),
    }
    successes = counts[Outcome.CONSENSUS.value]
    return BasinEstimate(
        kind_spec=exp.kind.spec_string,
        flow=exp.flow.value,
        n_agents=exp.graph.n_vertices,
        trials=exp.trials,
        successes=successes,
        mu_hat=successes / exp.trials,
        halfwidth=wilson_halfwidth(successes, exp.trials),
        outcome_counts=counts,
        seed=exp.seed,
    )


# ----------------------------------------------------------------------
# the (p, n) grid
# ----------------------------------------------------------------------


def obstructed_cell(p: int, n: int) -> bool:
    """Band where the consensus obstruction theorem applies."""
    return (2.0 * n / 3.0 - 1.0) < p <= (n - 2)


def table1(
    pmax: int,
    nmax: int,
    trials: int,
    seed: int = 0,
    workers: int = 0,
    settings: IntegratorSettings | None = None,
    n_agents: int = 5,
) -> list[tuple[int, int, BasinEstimate]]:
    """Consensus-fraction grid over Stiefel(p, n), canonical flow, cycle graph.

    Returns (p, n, estimate) for every cell with p <= pmax, n <= nmax,
    p <= n and n >= 2, in row-major order.
    """
    if pmax < 1 or nmax < 2:
        raise ConfigError("grid needs pmax >= 1 and nmax >= 2")
    if settings is None:
        settings = IntegratorSettings()
    graph = cycle(n_agents)
    out = []
    for p in range(1, pmax + 1):
        for n in range(max(2, p), nmax + 1):
            exp = BasinExperiment(
                kind=ManifoldKind.stiefel(p, n),
                flow=FlowKind.STIEFEL_CANONICAL,
                graph=graph,
                trials=trials,
                seed=seed,
                settings=settings,
                workers=workers,
            )
            out.append((p, n, run_basin(exp)))
    return out


def table1_csv(cells, path: str) -> None:
    """Write grid cells with header ``p,n,mu_hat,halfwidth,M,seed``."""
    with open(path, "w") as fh:
        fh.write("p,n,mu_hat,halfwidth,M,seed\n")
        for p, n, est in cells:
            fh.write(
                f"{p},{n},{est.mu_hat!r},{est.halfwidth!r},{est.trials},{est.seed}\n"
            )


def format_table1(cells) -> str:
    """Aligned text grid; * marks the obstructed band 2n/3 - 1 < p <= n - 2."""
    by_cell = {(p, n): est for p, n, est in cells}
    ps = sorted({p for p, _, _ in cells})
    ns = sorted({n for _, n, _ in cells})
    width = 8
    lines = ["mu_hat of consensus, Stiefel(p, n) rows p / cols n"]
    header = "p\\n".rjust(4) + "".join(str(n).rjust(width) for n in ns)
    lines.append(header)
    for p in ps:
        row = [str(p).rjust(4)]
        for n in ns:
            est = by_cell.get((p, n))
            if est is None:
                row.append("-".rjust(width))
            else:
                mark = "*" if obstructed_cell(p, n) else " "
                row.append(f"{est.mu_hat:.2f}{mark}".rjust(width))
        lines.append("".join(row))
    lines.append("(* = obstructed band 2n/3 - 1 < p <= n - 2)")
    return "\n".join(lines)


# ----------------------------------------------------------------------
# obstruction demonstration
# ----------------------------------------------------------------------


def _plane_rotation_stack(n: int, angles: np.ndarray) -> np.ndarray:
    """Rotations by ``angles`` in the (0, 1) coordinate plane of R^n."""
    out = np.repeat(np.eye(n)[None], angles.size, axis=0)
    out[:, 0, 0] = np.cos(angles)
    out[:, 0, 1] = -np.sin(angles)
    out[:, 1, 0] = np.sin(angles)
    out[:, 1, 1] = np.cos(angles)
    return out


def _base_winding_configuration(kind: ManifoldKind, n_agents: int, winding) -> Configuration:
    fam = kind.family
    if fam == "circle":
        if int(winding) == 0:
            raise ConfigError("winding must be nonzero")
        return twisted_state(n_agents, int(winding))
    if fam == "torus":
        from .equilibria import ClosedGeodesicSpec, build_S_configuration

        spec = ClosedGeodesicSpec(kind, tuple(winding))
        return build_S_configuration(spec, np.ones(n_agents))
    if fam in ("so", "o"):
        q = int(winding)
        if q == 0:
            raise ConfigError("winding must be nonzero")
        ang = 2.0 * np.pi * q * np.arange(n_agents) / n_agents
        return Configuration(kind, _plane_rotation_stack(kind.shape[0], ang))
    raise CapabilityError(f"obstruction demo not available on {kind}")


def obstruction_demo(
    kind: ManifoldKind,
    n_agents: int,
    winding,
    delta: float,
    flow: FlowKind = FlowKind.EXTRINSIC,
    seed: int = 0,
    settings: IntegratorSettings | None = None,
) -> dict:
    """Start near a winding configuration and report where the flow ends.

    Builds the equally/EQP-spaced state along the closed geodesic of
    the given winding (circle q, torus winding vector, so:n/o:n
    rotation loop in the (0,1) plane), kicks every agent by a random
    tangent vector of norm ``delta`` (none when delta = 0), integrates
    and reports outcome plus final energy.
    """
    if settings is None:
        settings = IntegratorSettings()
    require_compatible(flow, kind)
    base = _base_winding_configuration(kind, n_agents, winding)
    vals = base.values.copy()
    if delta < 0.0:
        raise ConfigError("delta must be >= 0")
    if delta > 0.0:
        rng = trial_rng(seed, 0)
        for i in range(n_agents):
            v = mf.random_tangent(base.point(i), rng, norm=delta)
            vals[i] = mf._retract_arr(kind, vals[i] + v.value)

    graph = cycle(n_agents)
    factor2 = kernels.kernel_mode(flow, kind)
    if factor2 is not None:
        ei, ej, w = graph.arrays
        xf, code, steps = kernels.integrate_orthonormal(
            vals,
            ei,
            ej,
            w,
            settings.step,
            settings.n_steps,
            settings.consensus_epsilon,
            settings.stall_tolerance,
            factor2,
        )
        if code == kernels.OUTCOME_BLOWUP:
            raise NumericalBlowupError("obstruction demo trajectory blew up")
        outcome = {
            kernels.OUTCOME_CONSENSUS: Outcome.CONSENSUS,
            kernels.OUTCOME_STALL: Outcome.NONCONSENSUS,
            kernels.OUTCOME_HORIZON: Outcome.HORIZON,
        }[code]
        final_energy = _matching_energy_array(flow, kind, xf, graph)
        t_final = steps * settings.step
    else:
        rec = integrate(flow, Configuration(kind, vals), graph, settings)
        outcome = rec.outcome
        final_energy = rec.final_energy
        steps = rec.steps
        t_final = rec.t_final
    return {
        "outcome": outcome.value,
        "final_energy": float(final_energy),
        "t_final": float(t_final),
        "steps": int(steps),
        "manifold": kind.spec_string,
        "flow": flow.value,
        "n_agents": n_agents,
        "winding": list(np.atleast_1d(winding).astype(int).tolist()),
        "delta": delta,
        "seed": seed,
    }
