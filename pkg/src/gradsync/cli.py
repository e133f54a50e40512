"""Command-line interface.

Subcommands:
  simulate    integrate one flow and write trajectory.csv + summary.json
  basin       Monte Carlo consensus-basin estimation (single cell or grid)
  equilibria  closed-geodesic equilibrium construction + stability probe
  selftest    fast built-in invariant sweep

Exit codes: simulate returns 0 on Consensus, 2 on
NonConsensusEquilibrium, 3 on HorizonExhausted; any usage or runtime
error exits 1.  Agents and vertices are printed 1-indexed; seeds are
always echoed in the JSON metadata.
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import json
import os
import sys
from dataclasses import dataclass

import numpy as np

from . import kernels
from . import manifolds as mf
from .equilibria import (
    ClosedGeodesicSpec,
    build_S_configuration,
    solve_eqp,
    stability_probe,
)
from .errors import ConfigError, GradsyncError
from .flows import (
    Configuration,
    FlowKind,
    gradient_residual,
    require_compatible,
    twisted_state,
)
from .graphs import from_spec as graph_from_spec
from .integrate import (
    IntegratorSettings,
    Outcome,
    integrate,
    write_summary_json,
    write_trajectory_csv,
)
from .manifolds import ManifoldKind
from .montecarlo import (
    BasinExperiment,
    format_table1,
    run_basin,
    table1,
    table1_csv,
    trial_rng,
)

_EXIT_BY_OUTCOME = {
    Outcome.CONSENSUS: 0,
    Outcome.NONCONSENSUS: 2,
    Outcome.HORIZON: 3,
}


@dataclass
class RunConfig:
    """Flat bag of every CLI knob; serializable to an INI file.

    Keys in the file mirror the flag names (dashes for underscores),
    one ``[run]`` section.  Round trip through to_file/from_file is
    field-identical.
    """

    command: str = "simulate"
    manifold: str = "circle"
    flow: str = "extrinsic"
    graph: str = "cycle:5"
    init: str = "random"
    seed: int = 0
    step: float = 1e-2
    horizon: float = 100.0
    consensus_epsilon: float = 1e-2
    stall_tolerance: float = 1e-8
    retraction: str = "polar"
    record_stride: int = 10
    trials: int = 500
    workers: int = 0
    table1: bool = False
    pmax: int = 1
    nmax: int = 2
    n: int = 10
    winding: str = "1"
    weights: str = ""
    directions: int = 20
    delta: float = 1e-2
    fd_step: float = 1e-3
    offset: float = 0.0
    outdir: str = "gradsync-out"

    def to_file(self, path: str) -> None:
        parser = configparser.ConfigParser()
        parser["run"] = {
            f.name.replace("_", "-"): self._render(getattr(self, f.name))
            for f in dataclasses.fields(self)
        }
        with open(path, "w") as fh:
            parser.write(fh)

    @staticmethod
    def _render(value) -> str:
        if isinstance(value, bool):
            return "true" if value else "false"
        if isinstance(value, float):
            return repr(value)
        return str(value)

    @classmethod
    def from_file(cls, path: str) -> "RunConfig":
        parser = configparser.ConfigParser()
        if not parser.read(path):
            raise ConfigError(f"cannot read config file {path!r}")
        if "run" not in parser:
            raise ConfigError(f"{path}: missing [run] section")
        section = parser["run"]
        known = {f.name.replace("_", "-"): f for f in dataclasses.fields(cls)}
        kwargs = {}
        for key, raw in section.items():
            if key not in known:
                raise ConfigError(f"{path}: unknown key {key!r} in [run]")
            f = known[key]
            try:
                if f.type in ("int", int):
                    kwargs[f.name] = int(raw)
                elif f.type in ("float", float):
                    kwargs[f.name] = float(raw)
                elif f.type in ("bool", bool):
                    if raw.lower() not in ("true", "false"):
                        raise ValueError(raw)
                    kwargs[f.name] = raw.lower() == "true"
                else:
                    kwargs[f.name] = raw
            except ValueError:
                raise ConfigError(f"{path}: bad value {raw!r} for key {key!r}") from None
        return cls(**kwargs)


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; the contract reserves 2 for
    # NonConsensusEquilibrium, so remap to 1
    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit(self._fail(message))

    @staticmethod
    def _fail(message) -> int:
        print(f"error: {message}", file=sys.stderr)
        return 1


def _build_parser() -> argparse.ArgumentParser:
    top = _Parser(prog="gradsync", description=__doc__.splitlines()[0])
    sub = top.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="INI file with a [run] section; flags override it")
        p.add_argument("--manifold", help="circle | sphere:n | stiefel:p:n | so:n | o:n | torus:k")
        p.add_argument("--flow", help="intrinsic | extrinsic | extrinsic-constnorm | stiefel | orthogonal | lifted-stiefel")
        p.add_argument("--graph", help="cycle:N | circulant:N:d | complete:N | edge-list file")
        p.add_argument("--seed", type=int)
        p.add_argument("--step", type=float)
        p.add_argument("--horizon", type=float)
        p.add_argument("--consensus-epsilon", type=float, dest="consensus_epsilon")
        p.add_argument("--stall-tolerance", type=float, dest="stall_tolerance")
        p.add_argument("--retraction", choices=["polar", "exp"])
        p.add_argument("--record-stride", type=int, dest="record_stride")
        p.add_argument("--workers", type=int)
        p.add_argument("--outdir")

    sim = sub.add_parser("simulate", help="integrate one flow")
    add_common(sim)
    sim.add_argument("--init", help="random | twisted:q | sset | path to .npy stack")
    sim.add_argument("--winding", help="sset loop: integer (circle) or comma list (torus)")
    sim.add_argument("--weights", help="sset spacing weights: comma list (default: unit)")
    sim.add_argument("--offset", type=float, help="sset arc-length offset")

    bas = sub.add_parser("basin", help="Monte Carlo basin estimation")
    add_common(bas)
    bas.add_argument("--trials", type=int)
    bas.add_argument("--table1", action="store_true", default=None,
                     help="run the Stiefel(p, n) grid instead of a single cell")
    bas.add_argument("--pmax", type=int)
    bas.add_argument("--nmax", type=int)

    eq = sub.add_parser("equilibria", help="closed-geodesic equilibria + stability probe")
    add_common(eq)
    eq.add_argument("--n", type=int, help="number of agents")
    eq.add_argument("--winding", help="integer (circle) or comma list (torus)")
    eq.add_argument("--weights", help="comma list of edge weights (default: unit)")
    eq.add_argument("--directions", type=int)
    eq.add_argument("--delta", type=float)
    eq.add_argument("--fd-step", type=float, dest="fd_step")
    eq.add_argument("--offset", type=float)

    sub.add_parser("selftest", help="fast invariant sweep")
    return top


def _merge_config(args: argparse.Namespace) -> RunConfig:
    if getattr(args, "config", None):
        cfg = RunConfig.from_file(args.config)
    else:
        cfg = RunConfig()
    cfg.command = args.command
    for f in dataclasses.fields(RunConfig):
        if hasattr(args, f.name):
            val = getattr(args, f.name)
            if val is not None:
                setattr(cfg, f.name, val)
    return cfg


def _settings(cfg: RunConfig) -> IntegratorSettings:
    return IntegratorSettings(
        step=cfg.step,
        horizon=cfg.horizon,
        retraction=cfg.retraction,
        consensus_epsilon=cfg.consensus_epsilon,
        stall_tolerance=cfg.stall_tolerance,
        record_stride=cfg.record_stride,
    )


def _parse_winding(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in str(text).split(","))
    except ValueError:
        raise ConfigError(f"winding must be comma-separated integers, got {text!r}") from None


def _parse_weights(text: str, n: int) -> np.ndarray:
    if not text:
        return np.ones(n)
    try:
        w = np.asarray([float(v) for v in text.split(",")])
    except ValueError:
        raise ConfigError(f"weights must be comma-separated reals, got {text!r}") from None
    if w.size != n:
        raise ConfigError(f"expected {n} weights, got {w.size}")
    return w


def _initial_configuration(cfg: RunConfig, kind: ManifoldKind, n_agents: int) -> Configuration:
    init = cfg.init.strip()
    if init == "random":
        rng = trial_rng(cfg.seed, 0)
        return Configuration(
            kind, np.stack([mf.sample_uniform(kind, rng).value for _ in range(n_agents)])
        )
    if init.startswith("twisted:"):
        if kind != ManifoldKind.circle():
            raise ConfigError("twisted:q initial conditions are circle-only")
        try:
            q = int(init.split(":", 1)[1])
        except ValueError:
            raise ConfigError(f"bad twisted spec {init!r}") from None
        return twisted_state(n_agents, q)
    if init == "sset":
        spec = ClosedGeodesicSpec(kind, _parse_winding(cfg.winding))
        return build_S_configuration(spec, _parse_weights(cfg.weights, n_agents), cfg.offset)
    if os.path.exists(init):
        arr = np.load(init, allow_pickle=False)
        return Configuration(kind, arr)
    raise ConfigError(f"unknown --init {init!r} (random | twisted:q | sset | .npy path)")


def _outdir(cfg: RunConfig) -> str:
    os.makedirs(cfg.outdir, exist_ok=True)
    return cfg.outdir


def _metadata(cfg: RunConfig) -> dict:
    return {
        "seed": cfg.seed,
        "manifold": cfg.manifold,
        "flow": cfg.flow,
        "graph": cfg.graph,
        "backend": kernels.BACKEND,
    }


def _cmd_simulate(cfg: RunConfig) -> int:
    kind = ManifoldKind.parse(cfg.manifold)
    flow = FlowKind.parse(cfg.flow)
    require_compatible(flow, kind)
    graph = graph_from_spec(cfg.graph)
    initial = _initial_configuration(cfg, kind, graph.n_vertices)
    record = integrate(flow, initial, graph, _settings(cfg))
    out = _outdir(cfg)
    csv_path = os.path.join(out, "trajectory.csv")
    json_path = os.path.join(out, "summary.json")
    write_trajectory_csv(record, csv_path)
    meta = _metadata(cfg)
    meta["init"] = cfg.init
    write_summary_json(record, json_path, metadata=meta)
    s = record.summary()
    print(
        f"outcome={s['outcome']} final_energy={s['final_energy']:.12g} "
        f"t_final={s['t_final']:.6g} steps={s['steps']}"
    )
    print(f"wrote {csv_path} and {json_path}")
    return _EXIT_BY_OUTCOME[record.outcome]


def _cmd_basin(cfg: RunConfig) -> int:
    out = _outdir(cfg)
    if cfg.table1:
        cells = table1(
            pmax=cfg.pmax,
            nmax=cfg.nmax,
            trials=cfg.trials,
            seed=cfg.seed,
            workers=cfg.workers,
            settings=_settings(cfg),
        )
        path = os.path.join(out, "table1.csv")
        table1_csv(cells, path)
        print(format_table1(cells))
        print(f"wrote {path}")
        return 0
    kind = ManifoldKind.parse(cfg.manifold)
    flow = FlowKind.parse(cfg.flow)
    graph = graph_from_spec(cfg.graph)
    est = run_basin(
        BasinExperiment(
            kind=kind,
            flow=flow,
            graph=graph,
            trials=cfg.trials,
            seed=cfg.seed,
            settings=_settings(cfg),
            workers=cfg.workers,
        )
    )
    doc = est.to_dict()
    doc["metadata"] = _metadata(cfg)
    path = os.path.join(out, "basin.json")
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
    print(
        f"mu_hat={est.mu_hat:.4f} +- {est.halfwidth:.4f} (Wilson 95%), "
        f"successes={est.successes}/{est.trials}, outcomes={est.outcome_counts}"
    )
    print(f"wrote {path}")
    return 0


def _cmd_equilibria(cfg: RunConfig) -> int:
    kind = ManifoldKind.parse(cfg.manifold)
    flow = FlowKind.parse(cfg.flow)
    require_compatible(flow, kind)
    winding = _parse_winding(cfg.winding)
    weights = _parse_weights(cfg.weights, cfg.n)
    spec = ClosedGeodesicSpec(kind, winding)
    sol = solve_eqp(spec.length, weights)
    config = build_S_configuration(spec, weights, cfg.offset)
    # the construction is cycle-specific: edge (i, i+1 mod n) with weight w_i
    from .graphs import cycle as cycle_graph

    graph = cycle_graph(cfg.n, weights)
    residual = gradient_residual(config, graph, flow)
    report = stability_probe(
        config,
        graph,
        flow,
        n_directions=cfg.directions,
        delta=cfg.delta,
        fd_step=cfg.fd_step,
        settings=_settings(cfg),
        seed=cfg.seed,
        workers=max(1, cfg.workers),
    )
    doc = report.to_dict()
    doc["spacings"] = [float(v) for v in sol.spacings]
    doc["objective"] = sol.objective
    doc["multiplier"] = sol.multiplier
    doc["metadata"] = {**_metadata(cfg), "graph": f"cycle:{cfg.n}"}
    out = _outdir(cfg)
    path = os.path.join(out, "equilibria.json")
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
    print(
        f"residual={residual:.3e} min_eig={report.min_eig:.6g} "
        f"classification={report.classification} "
        f"return_fraction={report.return_fraction:.2f} "
        f"consensus_fraction={report.consensus_fraction:.2f}"
    )
    print(f"wrote {path}")
    return 0


def _cmd_selftest() -> int:
    import time

    from .montecarlo import wilson_halfwidth

    failures = 0

    def check(name, fn):
        nonlocal failures
        t0 = time.perf_counter()
        try:
            fn()
            dt = time.perf_counter() - t0
            print(f"selftest: {name} ... ok ({dt:.2f}s)")
        except Exception as exc:  # noqa: BLE001 - report and count
            failures += 1
            print(f"selftest: {name} ... FAIL ({exc})")

    rng = np.random.Generator(np.random.Philox(key=np.array([7, 0], dtype=np.uint64)))

    def projection_invariants():
        for spec in ("circle", "sphere:3", "stiefel:2:4", "so:3", "torus:2"):
            kind = ManifoldKind.parse(spec)
            x = mf.sample_uniform(kind, rng)
            a = rng.standard_normal(kind.shape)
            v = mf.project(x, a)
            v2 = mf.project(x, v.value)
            assert np.linalg.norm(v.value - v2.value) < 1e-12, spec

    def exp_log_roundtrip():
        for spec in ("circle", "sphere:2", "so:3", "torus:2", "o:3"):
            kind = ManifoldKind.parse(spec)
            x = mf.sample_uniform(kind, rng)
            v = mf.random_tangent(x, rng, norm=0.5 * mf.injectivity_radius(kind))
            y = mf.exp_map(x, v)
            w = mf.log_map(x, y)
            assert np.linalg.norm(v.value - w.value) < 1e-8, spec

    def sphere_stiefel_match():
        a = mf.sample_uniform(ManifoldKind.sphere(2), rng)
        b = mf.ManifoldPoint(ManifoldKind.stiefel(1, 3), a.value)
        amb = rng.standard_normal((3, 1))
        va = mf.project(a, amb).value
        vb = mf.project(b, amb).value
        assert np.array_equal(va, vb)

    def eqp_closed_form():
        sol = solve_eqp(2.0 * np.pi, [1.0, 2.0, 4.0])
        assert abs(float(np.sum(sol.spacings)) - 2.0 * np.pi) < 1e-12
        kkt = np.asarray([1.0, 2.0, 4.0]) * sol.spacings + sol.multiplier
        assert np.max(np.abs(kkt)) < 1e-12

    def kuramoto_identity():
        from .flows import kuramoto_reduction_check
        from .graphs import cycle as cycle_graph

        cfgc = Configuration.random(ManifoldKind.circle(), 6, rng)
        dev = kuramoto_reduction_check(cfgc, cycle_graph(6))
        assert dev < 1e-12, dev

    def backend_agreement():
        from .graphs import cycle as cycle_graph

        g = cycle_graph(5)
        ei, ej, w = g.arrays
        x0 = np.stack(
            [mf.sample_uniform(ManifoldKind.stiefel(2, 3), rng).value for _ in range(5)]
        )
        results = []
        for name in kernels.available_backends():
            mod = kernels.get_backend(name)
            results.append(mod.integrate_orthonormal(x0, ei, ej, w, 1e-2, 2000, 1e-2, 1e-8, False))
        if len(results) == 2:
            (xa, ca, sa), (xb, cb, sb) = results
            assert ca == cb and sa == sb
            assert float(np.max(np.abs(xa - xb))) < 1e-9

    def determinism():
        from .graphs import cycle as cycle_graph

        base = dict(
            kind=ManifoldKind.circle(),
            flow=FlowKind.EXTRINSIC,
            graph=cycle_graph(4),
            trials=40,
            seed=11,
        )
        a = run_basin(BasinExperiment(workers=1, **base))
        b = run_basin(BasinExperiment(workers=3, **base))
        assert a.successes == b.successes
        assert wilson_halfwidth(a.successes, a.trials) == a.halfwidth

    check("projection idempotent", projection_invariants)
    check("exp/log round trip", exp_log_roundtrip)
    check("sphere == stiefel(1, n+1)", sphere_stiefel_match)
    check("EQP closed form / KKT", eqp_closed_form)
    check("Kuramoto reduction", kuramoto_identity)
    check("kernel backends agree", backend_agreement)
    check("worker-count determinism", determinism)
    print(f"selftest backend: {kernels.BACKEND}")
    if failures:
        print(f"selftest: {failures} check(s) FAILED")
        return 1
    print("selftest: all checks passed")
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "selftest":
            return _cmd_selftest()
        cfg = _merge_config(args)
        if args.command == "simulate":
            return _cmd_simulate(cfg)
        if args.command == "basin":
            return _cmd_basin(cfg)
        return _cmd_equilibria(cfg)
    except GradsyncError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:
        return int(exc.code or 0)


if __name__ == "__main__":
    sys.exit(main())
