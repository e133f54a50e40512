"""Reference integrator: fixed-step RK4 with post-step retraction.

The right-hand sides extend smoothly off the manifold, so Runge-Kutta
stages are evaluated in ambient space and the full step is pulled
back by the polar retraction; the scheme keeps its classical order
while feasibility drift stays at retraction precision.  The intrinsic
flow is the exception: its stages are evaluated at retracted points,
because log_map needs (near-)feasible arguments.

Early exits:
  * Consensus, as soon as half the largest edge chordal distance
    drops below ``consensus_epsilon``;
  * NonConsensusEquilibrium, when the largest agent rhs norm falls
    below ``stall_tolerance`` while the consensus test still fails.
Otherwise the horizon is exhausted.

This loop records trajectories and works for every flow; the Monte
Carlo driver uses the compiled kernel (same scheme, no recording)
where possible.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass

import numpy as np

from . import manifolds as mf
from .errors import (
    CapabilityError,
    ConfigError,
    InjectivityError,
    IntegrationError,
    NumericalBlowupError,
)
from .flows import (
    Configuration,
    FlowKind,
    _matching_energy_array,
    _rhs_array,
    matching_energy_label,
    require_compatible,
)
from .graphs import WeightedGraph
from .manifolds import ManifoldKind


class Outcome(str, enum.Enum):
    CONSENSUS = "Consensus"
    NONCONSENSUS = "NonConsensusEquilibrium"
    HORIZON = "HorizonExhausted"

    def __str__(self) -> str:
        return self.value


_KERNEL_OUTCOMES = {
    0: Outcome.CONSENSUS,
    1: Outcome.NONCONSENSUS,
    2: Outcome.HORIZON,
}


@dataclass(frozen=True)
class IntegratorSettings:
    """Fixed-step integration parameters.

    ``record_stride`` controls how often full configurations are kept
    (energies and edge statistics are recorded every step); the final
    state is always included.
    """

    step: float = 1e-2
    horizon: float = 100.0
    retraction: str = "polar"
    consensus_epsilon: float = 1e-2
    stall_tolerance: float = 1e-8
    record_stride: int = 10

    def __post_init__(self):
        if not (self.step > 0.0 and np.isfinite(self.step)):
            raise ConfigError("step must be positive")
        if not (self.horizon > 0.0 and np.isfinite(self.horizon)):
            raise ConfigError("horizon must be positive")
        if not self.consensus_epsilon > 0.0:
            raise ConfigError("consensus_epsilon must be positive")
        if not self.stall_tolerance > 0.0:
            raise ConfigError("stall_tolerance must be positive")
        if self.retraction not in ("polar", "exp"):
            raise ConfigError(f"retraction must be 'polar' or 'exp', got {self.retraction!r}")
        if int(self.record_stride) < 1:
            raise ConfigError("record_stride must be >= 1")

    @property
    def n_steps(self) -> int:
        return max(1, int(np.ceil(self.horizon / self.step - 1e-9)))


@dataclass
class TrajectoryRecord:
    """Integration output: outcome plus per-step series.

    ``times``/``energies``/``max_edge_chords`` cover every completed
    step (including t = 0); ``configs`` holds strided snapshots at
    ``config_times``, always ending with the final state.
    """

    flow: FlowKind
    outcome: Outcome
    times: np.ndarray
    energies: np.ndarray
    max_edge_chords: np.ndarray
    config_times: np.ndarray
    configs: np.ndarray
    final: Configuration
    steps: int
    t_final: float
    energy_label: str

    @property
    def final_energy(self) -> float:
        return float(self.energies[-1])

    def summary(self) -> dict:
        return {
            "outcome": self.outcome.value,
            "final_energy": self.final_energy,
            "t_final": self.t_final,
            "steps": self.steps,
        }


def max_edge_chord(cfg: Configuration, graph: WeightedGraph) -> float:
    """Largest chordal distance over the graph's edges."""
    ei, ej, _ = graph.arrays
    if ei.shape[0] == 0:
        return 0.0
    d = cfg.values[ei] - cfg.values[ej]
    return float(np.max(np.sqrt(np.sum(d * d, axis=(1, 2)))))


def check_consensus(cfg: Configuration, graph: WeightedGraph, epsilon: float = 1e-2) -> bool:
    """Consensus stop test: half the max edge chordal distance < epsilon."""
    return 0.5 * max_edge_chord(cfg, graph) < epsilon


def _half_max_edge_arr(values: np.ndarray, ei, ej) -> float:
    if ei.shape[0] == 0:
        return 0.0
    d = values[ei] - values[ej]
    return 0.5 * float(np.max(np.sqrt(np.sum(d * d, axis=(1, 2)))))


def _retract_stack(kind: ManifoldKind, values: np.ndarray) -> np.ndarray:
    out = np.empty_like(values)
    for i in range(values.shape[0]):
        out[i] = mf._retract_arr(kind, values[i])
    return out


def _exp_retract_stack(kind: ManifoldKind, base: np.ndarray, delta: np.ndarray) -> np.ndarray:
    out = np.empty_like(base)
    for i in range(base.shape[0]):
        out[i] = mf._exp_retract_arr(kind, base[i], delta[i])
    return out


def integrate(
    flow: FlowKind,
    initial: Configuration,
    graph: WeightedGraph,
    settings: IntegratorSettings | None = None,
) -> TrajectoryRecord:
    """Integrate ``flow`` from ``initial`` over ``graph``.

    Raises IntegrationError (carrying time and edge) if the intrinsic
    flow hits the log_map domain boundary mid-trajectory, and
    NumericalBlowupError on non-finite state.
    """
    if settings is None:
        settings = IntegratorSettings()
    require_compatible(flow, initial.kind)
    if initial.n_agents != graph.n_vertices:
        raise ConfigError(
            f"configuration has {initial.n_agents} agents, graph has {graph.n_vertices} vertices"
        )
    kind = initial.kind
    if settings.retraction == "exp":
        # needs the exponential map
        if kind.family == "stiefel" and kind.params[0] not in (1, kind.params[1]):
            raise CapabilityError(f"exp-based retraction unavailable on {kind}")

    ei, ej, _ = graph.arrays
    h = settings.step
    n_steps = settings.n_steps
    stride = int(settings.record_stride)
    retract_stages = flow == FlowKind.INTRINSIC

    x = initial.values.copy()
    times = [0.0]
    energies = [_matching_energy_array(flow, kind, x, graph)]
    chords = [2.0 * _half_max_edge_arr(x, ei, ej)]
    config_times = [0.0]
    snapshots = [x.copy()]
    outcome = Outcome.HORIZON
    steps = 0

    def _field(values: np.ndarray, t: float) -> np.ndarray:
        try:
            return _rhs_array(flow, kind, values, graph)
        except InjectivityError as err:
            raise IntegrationError(
                f"intrinsic flow left the log_map domain at t={t:.6g}: {err}",
                t=t,
                edge=getattr(err, "edge", None),
            ) from err

    if 0.5 * chords[0] < settings.consensus_epsilon:
        outcome = Outcome.CONSENSUS
    else:
        for it in range(n_steps):
            t = it * h
            k1 = _field(x, t)
            if float(np.max(np.sqrt(np.sum(k1 * k1, axis=(1, 2))))) < settings.stall_tolerance:
                outcome = Outcome.NONCONSENSUS
                break
            if retract_stages:
                k2 = _field(_retract_stack(kind, x + (0.5 * h) * k1), t)
                k3 = _field(_retract_stack(kind, x + (0.5 * h) * k2), t)
                k4 = _field(_retract_stack(kind, x + h * k3), t)
            else:
                k2 = _field(x + (0.5 * h) * k1, t)
                k3 = _field(x + (0.5 * h) * k2, t)
                k4 = _field(x + h * k3, t)
            delta = (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if not np.all(np.isfinite(delta)):
                raise NumericalBlowupError(f"non-finite update at t={t:.6g}")
            if settings.retraction == "exp":
                x = _exp_retract_stack(kind, x, delta)
            else:
                x = _retract_stack(kind, x + delta)
            steps = it + 1
            if not np.all(np.isfinite(x)):
                raise NumericalBlowupError(f"non-finite state at t={steps * h:.6g}")
            times.append(steps * h)
            energies.append(_matching_energy_array(flow, kind, x, graph))
            half = _half_max_edge_arr(x, ei, ej)
            chords.append(2.0 * half)
            if steps % stride == 0:
                config_times.append(steps * h)
                snapshots.append(x.copy())
            if half < settings.consensus_epsilon:
                outcome = Outcome.CONSENSUS
                break

    if not config_times or config_times[-1] != steps * h:
        config_times.append(steps * h)
        snapshots.append(x.copy())

    final = Configuration(kind, x)
    return TrajectoryRecord(
        flow=flow,
        outcome=outcome,
        times=np.asarray(times),
        energies=np.asarray(energies),
        max_edge_chords=np.asarray(chords),
        config_times=np.asarray(config_times),
        configs=np.stack(snapshots),
        final=final,
        steps=steps,
        t_final=steps * h,
        energy_label=matching_energy_label(flow),
    )


# ----------------------------------------------------------------------
# trajectory output
# ----------------------------------------------------------------------


def trajectory_header(kind: ManifoldKind) -> str:
    rows, cols = kind.shape
    entries = ",".join(f"x{q}" for q in range(rows * cols))
    return f"t,agent,{entries},energy"


def write_trajectory_csv(record: TrajectoryRecord, path: str) -> None:
    """One row per (recorded time, agent); agents are 1-indexed.

    Header: ``t,agent,x0,...,x{r*c-1},energy`` with matrix entries
    flattened row-major; the energy column repeats the configuration's
    energy on each of its agent rows.
    """
    kind = record.final.kind
    time_to_idx = {float(t): i for i, t in enumerate(record.times)}
    with open(path, "w") as fh:
        fh.write(trajectory_header(kind) + "\n")
        for snap_idx, t in enumerate(record.config_times):
            energy = record.energies[time_to_idx[float(t)]]
            snap = record.configs[snap_idx]
            for agent in range(snap.shape[0]):
                flat = ",".join(repr(float(v)) for v in snap[agent].ravel())
                fh.write(f"{float(t)!r},{agent + 1},{flat},{float(energy)!r}\n")


def write_summary_json(record: TrajectoryRecord, path: str, metadata: dict | None = None) -> None:
    doc = record.summary()
    if metadata:
        doc["metadata"] = metadata
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
