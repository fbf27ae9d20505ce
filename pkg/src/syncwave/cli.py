"""Scenario-driven command line: check, reduce, simulate, spectrum, rate.

Scenarios are TOML files; coupling matrices can be inline nested arrays or
paths to CSV files relative to the config.  All outputs are deterministic
for a fixed config and seed: the seed is recorded in the run manifest of
every output directory.

Exit codes: 0 when the requested conditions hold, 1 when they fail (or an
asserted decay verdict is contradicted), 2 for usage or config errors.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import csvio, diagnostics
from .algebra import (
    CompatibilityError,
    GroupPartition,
    InvalidPartitionError,
    MatrixDomainError,
    beta_matrix,
    build_sync_matrix,
    check_cp_compatibility,
    check_strong_compatibility,
    rank_diagnostics,
    reduce_system,
)
from .integrator import IntegrationError, SimConfig, State, simulate
from .models import AssemblyError, CoupledSystem, ModelSpec, assemble, couple

N_RANDOM_MODES = 10


class ConfigError(ValueError):
    """Scenario file missing or malformed."""


@dataclass
class Scenario:
    """Fully resolved scenario: partition, couplings, model, run setup."""

    name: str
    partition: GroupPartition
    a: np.ndarray
    d: np.ndarray
    model_spec: ModelSpec
    sim: SimConfig
    initial_kind: str = "random"                  # random | fields | synchronized
    seed: int = 0
    fields: tuple[str, ...] = ()
    epsilon: float = 0.0
    out_dir: Path = Path("out")
    expect: str | None = None                     # decay | no_decay
    export_matrices: bool = False


def _matrix_from(value, base: Path, what: str) -> np.ndarray:
    if isinstance(value, str):
        path = Path(value)
        if not path.is_absolute():
            path = base / path
        if not path.exists():
            raise ConfigError(f"{what}: CSV file {path} not found")
        return csvio.load_matrix(path)
    try:
        return np.asarray(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{what}: expected a nested array or CSV path") from exc


def load_scenario(path, seed_override: int | None = None, out_override=None) -> Scenario:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} not found")
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    base = path.parent

    try:
        part = GroupPartition(raw["partition"]["sizes"])
    except KeyError as exc:
        raise ConfigError("config needs [partition] with a 'sizes' list") from exc
    except InvalidPartitionError as exc:
        raise ConfigError(str(exc)) from exc

    coupling = raw.get("coupling", {})
    if "A" not in coupling or "D" not in coupling:
        raise ConfigError("config needs [coupling] with matrices 'A' and 'D'")
    a = _matrix_from(coupling["A"], base, "coupling.A")
    d = _matrix_from(coupling["D"], base, "coupling.D")

    model_raw = raw.get("model", {})
    try:
        model_spec = ModelSpec(
            kind=model_raw.get("kind", "wave_boundary"),
            elements=int(model_raw.get("elements", 64)),
            damping_region=tuple(model_raw.get("damping_region", (0.25, 0.25))),
            damping_floor=float(model_raw.get("damping_floor", 1.0)),
        )
    except AssemblyError as exc:
        raise ConfigError(str(exc)) from exc

    sim_raw = raw.get("sim", {})
    try:
        sim = SimConfig(
            dt=float(sim_raw.get("dt", 1e-3)),
            horizon=float(sim_raw.get("T", 40.0)),
            stride=int(sim_raw.get("stride", 10)),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    init_raw = raw.get("initial", {})
    kind = init_raw.get("kind", "random")
    if kind not in ("random", "fields", "synchronized"):
        raise ConfigError(f"initial.kind {kind!r} not one of random, fields, synchronized")
    fields = tuple(init_raw.get("fields", ()))
    if kind in ("fields", "synchronized") and len(fields) != part.p:
        raise ConfigError(
            f"initial.fields needs one entry per group ({part.p}), got {len(fields)}"
        )
    seed = int(init_raw.get("seed", 0))
    if seed_override is not None:
        seed = seed_override
    epsilon = float(init_raw.get("epsilon", 0.0))

    out_raw = raw.get("output", {})
    out_dir = Path(out_override) if out_override is not None else Path(
        out_raw.get("directory", path.stem + "_out")
    )
    if not out_dir.is_absolute():
        out_dir = base / out_dir

    expect = raw.get("verdict", {}).get("expect")
    if expect not in (None, "decay", "no_decay"):
        raise ConfigError(f"verdict.expect {expect!r} not one of decay, no_decay")

    return Scenario(
        name=raw.get("name", path.stem),
        partition=part,
        a=a,
        d=d,
        model_spec=model_spec,
        sim=sim,
        initial_kind=kind,
        seed=seed,
        fields=fields,
        epsilon=epsilon,
        out_dir=out_dir,
        expect=expect,
    )


# ---------------------------------------------------------------------------
# Initial data
# ---------------------------------------------------------------------------

_FIELD_DERIVS = {
    "bump": (
        lambda x: 16.0 * x**2 * (1.0 - x) ** 2,
        lambda x: 32.0 * x * (1.0 - x) * (1.0 - 2.0 * x),
    ),
    "zero": (lambda x: np.zeros_like(x), lambda x: np.zeros_like(x)),
}


def _field_fn(name: str):
    name = name.strip()
    if name in _FIELD_DERIVS:
        return _FIELD_DERIVS[name]
    parts = name.split()
    if len(parts) == 2 and parts[0] == "sine":
        k = int(parts[1])
        return (
            lambda x: np.sin(k * np.pi * x),
            lambda x: k * np.pi * np.cos(k * np.pi * x),
        )
    raise ConfigError(f"unknown initial field {name!r}; use 'sine k', 'bump' or 'zero'")


def _interpolate(model, fn, dfn) -> np.ndarray:
    """Nodal interpolant of a scalar field on the retained DOFs."""
    vals = np.empty(model.dof)
    for i, label in enumerate(model.labels):
        x = model.coords[i]
        vals[i] = dfn(x) if label.startswith("ux@") else fn(x)
    return vals


def random_modal_data(system: CoupledSystem, seed: int) -> State:
    """Unit-energy random data on the lowest mesh eigenmodes per component."""
    model = system.model
    n = system.n_components
    rng = np.random.default_rng(seed)
    lam, modes = scipy.linalg.eigh(model.stiffness, model.mass)
    m = min(N_RANDOM_MODES, model.dof)
    cu = rng.uniform(-1.0, 1.0, size=(n, m))
    cv = rng.uniform(-1.0, 1.0, size=(n, m))
    u = (modes[:, :m] @ cu.T).reshape(-1)       # (dof, N) -> flat node-major
    v = (modes[:, :m] @ cv.T).reshape(-1)
    state = State(u=u, v=v, t=0.0)
    from .integrator import full_energy

    e = full_energy(system, state.u, state.v)
    if e <= 0.0:
        raise ConfigError("random initial data has zero energy; check the seed")
    scale = 1.0 / np.sqrt(e)
    return State(u=state.u * scale, v=state.v * scale, t=0.0)


def initial_state(scenario: Scenario, system: CoupledSystem) -> State:
    model = system.model
    part = scenario.partition
    n = part.n_components
    if scenario.initial_kind == "random":
        return random_modal_data(system, scenario.seed)

    u2 = np.zeros((model.dof, n))
    for r, sl in enumerate(part.group_slices()):
        fn, dfn = _field_fn(scenario.fields[r])
        profile = _interpolate(model, fn, dfn)
        for k in range(sl.start, sl.stop):
            u2[:, k] = profile
    u = u2.reshape(-1)
    v = np.zeros_like(u)
    if scenario.initial_kind == "fields":
        return State(u=u, v=v, t=0.0)

    # synchronized: add a unit-energy non-synchronized perturbation scaled
    # by epsilon, with the groupwise-agreement component projected out.
    pert = random_modal_data(system, scenario.seed)
    sr = build_sync_matrix(part)
    proj = sr.cp.T @ np.linalg.inv(sr.cp @ sr.cp.T) @ sr.cp
    pu = (pert.u.reshape(-1, n) @ proj.T).reshape(-1)
    pv = (pert.v.reshape(-1, n) @ proj.T).reshape(-1)
    from .integrator import full_energy

    e = full_energy(system, pu, pv)
    if e > 0.0:
        scale = scenario.epsilon / np.sqrt(e)
        u = u + scale * pu
        v = v + scale * pv
    return State(u=u, v=v, t=0.0)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def _write_manifest(scenario: Scenario, command: str) -> None:
    scenario.out_dir.mkdir(parents=True, exist_ok=True)
    lines = [
        f"scenario: {scenario.name}",
        f"command: {command}",
        f"seed: {scenario.seed}",
        f"partition: {list(scenario.partition.sizes)}",
        f"model: {scenario.model_spec.kind} elements={scenario.model_spec.elements}",
        f"dt: {scenario.sim.dt:.17g}",
        f"T: {scenario.sim.horizon:.17g}",
    ]
    (scenario.out_dir / "manifest.txt").write_text("\n".join(lines) + "\n")


def _maybe_export_matrices(scenario: Scenario, model) -> None:
    if not scenario.export_matrices:
        return
    csvio.save_matrix(scenario.out_dir / "M_h.csv", model.mass)
    csvio.save_matrix(scenario.out_dir / "K_h.csv", model.stiffness)
    csvio.save_matrix(scenario.out_dir / "G_h.csv", model.damping_form)


def cmd_check(scenario: Scenario) -> int:
    """Compatibility and rank conditions; exit 0 iff all hold."""
    _write_manifest(scenario, "check")
    part = scenario.partition
    n, p = part.n_components, part.p
    rep_a = check_cp_compatibility(scenario.a, part)
    rep_d = check_strong_compatibility(scenario.d, part)
    ranks = rank_diagnostics(scenario.a, scenario.d, part)
    rank_r = (
        int(np.linalg.matrix_rank(rep_d.r_factor)) if rep_d.r_factor is not None else 0
    )
    ok = rep_a.compatible and rep_d.strong and rank_r == n - p

    lines = [f"scenario: {scenario.name}", f"seed: {scenario.seed}"]
    lines.append(f"compatibility(A): {'pass' if rep_a.compatible else 'FAIL'}"
                 f" residual={rep_a.residual:.6e}")
    if not rep_a.compatible:
        sr = build_sync_matrix(part)
        norms = [float(np.linalg.norm(sr.cp @ (scenario.a @ e))) for e in sr.kernel]
        lines.append(f"  violated: C_p-compatibility: A e_{int(np.argmax(norms)) + 1} "
                     "leaves the agreement kernel")
    lines.append("alpha block sums:")
    for row in rep_a.alpha:
        lines.append("  " + " ".join(f"{x: .12g}" for x in row))
    lines.append(f"strong compatibility(D): {'pass' if rep_d.strong else 'FAIL'}"
                 f" residual={rep_d.residual:.6e}")
    if not rep_d.strong:
        sr = build_sync_matrix(part)
        norms = [float(np.linalg.norm(scenario.d @ e)) for e in sr.kernel]
        lines.append(f"  violated: strong C_p-compatibility: D e_{int(np.argmax(norms)) + 1} != 0")
    lines.append(f"rank(R): {rank_r} (needs {n - p})")
    lines.append(f"rank(D): {ranks.rank_d}  rank(CpD): {ranks.rank_cpd}  "
                 f"minimal_rank_ok: {ranks.minimal_rank_ok}")
    lines.append(f"biorthogonal: {ranks.biorthogonal}  kalman_rank: {ranks.kalman_rank}")
    lines.append(f"verdict: {'conditions hold' if ok else 'conditions FAIL'}")
    report = "\n".join(lines) + "\n"
    (scenario.out_dir / "check.txt").write_text(report)
    sys.stdout.write(report)

    rows = [
        ("compatible_A", float(rep_a.compatible)),
        ("strong_D", float(rep_d.strong)),
        ("rank_R", float(rank_r)),
        ("rank_D", float(ranks.rank_d)),
        ("rank_CpD", float(ranks.rank_cpd)),
        ("minimal_rank_ok", float(ranks.minimal_rank_ok)),
        ("biorthogonal", float(ranks.biorthogonal)),
        ("kalman_rank", float(ranks.kalman_rank)),
        ("conditions_hold", float(ok)),
    ]
    with open(scenario.out_dir / "check.csv", "w", newline="\n") as fh:
        fh.write("condition,value\n")
        for name, val in rows:
            fh.write(f"{name},{csvio.FMT % val}\n")
    return 0 if ok else 1


def cmd_reduce(scenario: Scenario) -> int:
    """Write the reduced and limit matrices as CSV."""
    _write_manifest(scenario, "reduce")
    red = reduce_system(scenario.a, scenario.d, scenario.partition)
    csvio.save_matrix(scenario.out_dir / "A_reduced.csv", red.a_reduced)
    csvio.save_matrix(scenario.out_dir / "D_reduced.csv", red.d_reduced)
    csvio.save_matrix(scenario.out_dir / "R.csv", red.r_factor)
    csvio.save_matrix(scenario.out_dir / "B.csv", red.beta)
    sys.stdout.write(f"reduced matrices written to {scenario.out_dir}\n")
    return 0


def _observers(scenario: Scenario, system: CoupledSystem, sr, beta):
    model = system.model

    def total(state):
        return sync_error_total(state, sr, model)

    obs = {"sync_total": total}
    for r in range(scenario.partition.p):
        obs[f"sync_group_{r + 1}"] = _group_observer(sr, model, r)
    obs["limit_energy"] = lambda state: diagnostics.limit_energy(
        diagnostics.synchronized_state(state.u, sr)[0],
        diagnostics.synchronized_state(state.v, sr)[0],
        beta,
        model,
    )
    obs["pinning_residual"] = lambda state: diagnostics.pinning_residual(state.u, sr)
    return obs


def sync_error_total(state, sr, model) -> float:
    total, _ = diagnostics.sync_error(state.u, state.v, sr, model)
    return total


def _group_observer(sr, model, r):
    def value(state):
        _, per_group = diagnostics.sync_error(state.u, state.v, sr, model)
        return float(per_group[r])

    return value


def cmd_simulate(scenario: Scenario) -> int:
    """Assemble, couple, integrate; write the trajectory CSV and verdict."""
    _write_manifest(scenario, "simulate")
    model = assemble(scenario.model_spec)
    system = couple(model, scenario.a, scenario.d)
    _maybe_export_matrices(scenario, model)
    sr = build_sync_matrix(scenario.partition)
    rep_a = check_cp_compatibility(scenario.a, scenario.partition)
    beta = (
        beta_matrix(scenario.a, scenario.partition)
        if rep_a.compatible
        else np.zeros((scenario.partition.p,) * 2)
    )
    init = initial_state(scenario, system)
    traj = simulate(system, init, scenario.sim, _observers(scenario, system, sr, beta))

    header = ["t", "sync_total"]
    cols = [traj.times, traj.columns["sync_total"]]
    for r in range(scenario.partition.p):
        header.append(f"sync_group_{r + 1}")
        cols.append(traj.columns[f"sync_group_{r + 1}"])
    header += ["full_energy", "limit_energy", "pinning_residual"]
    cols += [
        traj.columns["full_energy"],
        traj.columns["limit_energy"],
        traj.columns["pinning_residual"],
    ]
    csvio.save_table(scenario.out_dir / "trajectory.csv", header, cols)
    _write_plot_script(scenario.out_dir, header)

    sync = traj.columns["sync_total"]
    t_end = scenario.sim.horizon
    window = (t_end / 4.0, t_end)
    ratio = float(sync[-1] / sync[0]) if sync[0] > 0.0 else 0.0
    try:
        fit = diagnostics.fit_decay(traj.times, sync, window)
        fit_line = (
            f"omega: {fit.omega:.12g}\nM_const: {fit.m_const:.12g}\n"
            f"r_squared: {fit.r_squared:.12g}\nwindow: {fit.window[0]:g} {fit.window[1]:g}"
        )
        decay_observed = fit.omega > 0.0 and fit.r_squared >= 0.9
    except diagnostics.InsufficientDataError as exc:
        fit = None
        fit_line = f"fit: insufficient data ({exc})"
        decay_observed = False

    no_decay = ratio >= 0.1
    if decay_observed:
        verdict = "exponential decay observed"
    elif no_decay:
        verdict = "no uniform decay"
    else:
        verdict = "inconclusive"

    from .integrator import max_energy_growth

    growth = max_energy_growth(traj)
    lines = [
        f"scenario: {scenario.name}",
        f"seed: {scenario.seed}",
        f"verdict: {verdict}",
        fit_line,
        f"sync_ratio: {ratio:.12g}",
        f"max_energy_growth_per_step: {growth:.12g}",
        "note: fitted rates are mesh- and norm-dependent; no continuum rate is claimed",
    ]
    report = "\n".join(lines) + "\n"
    (scenario.out_dir / "verdict.txt").write_text(report)
    sys.stdout.write(report)

    if scenario.expect == "decay" and verdict != "exponential decay observed":
        return 1
    if scenario.expect == "no_decay" and verdict != "no uniform decay":
        return 1
    return 0


def cmd_spectrum(scenario: Scenario) -> int:
    """Generator eigenvalues as CSV plus the spectral abscissa."""
    _write_manifest(scenario, "spectrum")
    model = assemble(scenario.model_spec)
    system = couple(model, scenario.a, scenario.d)
    _maybe_export_matrices(scenario, model)
    rep = diagnostics.spectrum(system)
    with open(scenario.out_dir / "spectrum.csv", "w", newline="\n") as fh:
        fh.write("re,im\n")
        for lam in rep.eigenvalues:
            fh.write(f"{csvio.FMT % lam.real},{csvio.FMT % lam.imag}\n")
    report = (
        f"scenario: {scenario.name}\nseed: {scenario.seed}\n"
        f"abscissa: {rep.abscissa:.12g}\n"
        f"near_imaginary_count: {rep.near_imaginary_count}\n"
    )
    (scenario.out_dir / "spectrum.txt").write_text(report)
    sys.stdout.write(report)
    return 0


def cmd_rate(args) -> int:
    """Re-fit a decay rate from an existing trajectory CSV."""
    header, data = csvio.load_table(args.trajectory)
    if args.column not in header:
        raise ConfigError(f"column {args.column!r} not in {header}")
    times = data[:, header.index("t")]
    values = data[:, header.index(args.column)]
    window = tuple(args.window) if args.window else None
    fit = diagnostics.fit_decay(times, values, window)
    sys.stdout.write(
        f"column: {args.column}\nomega: {fit.omega:.12g}\nM_const: {fit.m_const:.12g}\n"
        f"r_squared: {fit.r_squared:.12g}\nwindow: {fit.window[0]:g} {fit.window[1]:g}\n"
        f"samples: {fit.samples}\n"
    )
    return 0


def _write_plot_script(out_dir: Path, header: list[str]) -> None:
    lines = [
        "# gnuplot script for the trajectory written alongside",
        "set datafile separator ','",
        "set logscale y",
        "set xlabel 't'",
        "set key autotitle columnhead",
        "plot " + ", ".join(
            f"'trajectory.csv' using 1:{i + 1} with lines"
            for i, name in enumerate(header) if name != "t"
        ),
    ]
    (out_dir / "plot.gp").write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="syncwave",
        description="Group-synchronization checks and simulations for coupled "
                    "damped second-order systems",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_scenario_args(p):
        p.add_argument("--config", required=True, nargs="+", help="scenario TOML file(s)")
        p.add_argument("--out", default=None, help="output directory (single config only)")
        p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
        p.add_argument("--export-matrices", action="store_true",
                       help="also write the assembled model matrices as CSV")
        p.add_argument("--jobs", type=int, default=1,
                       help="run multiple configs in parallel")

    for name, doc in (
        ("check", "verify compatibility and rank conditions"),
        ("reduce", "write reduced and limit matrices"),
        ("simulate", "run the time integration and fit the decay"),
        ("spectrum", "compute the generator spectrum"),
    ):
        p = sub.add_parser(name, help=doc)
        add_scenario_args(p)

    p = sub.add_parser("rate", help="re-fit a decay rate from a trajectory CSV")
    p.add_argument("--trajectory", required=True, help="trajectory CSV file")
    p.add_argument("--column", default="sync_total", help="column to fit")
    p.add_argument("--window", type=float, nargs=2, default=None,
                   metavar=("T0", "T1"), help="fit window")
    return parser


_COMMANDS = {
    "check": cmd_check,
    "reduce": cmd_reduce,
    "simulate": cmd_simulate,
    "spectrum": cmd_spectrum,
}


def _run_one(command: str, config: str, args) -> int:
    scenario = load_scenario(config, seed_override=args.seed, out_override=args.out)
    scenario.export_matrices = args.export_matrices
    return _COMMANDS[command](scenario)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "rate":
            return cmd_rate(args)
        configs = args.config
        if args.out is not None and len(configs) > 1:
            raise ConfigError("--out is only valid with a single --config")
        if args.jobs > 1 and len(configs) > 1:
            with concurrent.futures.ProcessPoolExecutor(max_workers=args.jobs) as pool:
                codes = list(pool.map(_run_one_star,
                                      [(args.command, c, args) for c in configs]))
            return max(codes)
        codes = [_run_one(args.command, c, args) for c in configs]
        return max(codes)
    except (ConfigError, FileNotFoundError, OSError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2
    except (CompatibilityError, MatrixDomainError, AssemblyError,
            InvalidPartitionError, diagnostics.SizeCapError,
            diagnostics.InsufficientDataError, IntegrationError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1


def _run_one_star(packed) -> int:
    return _run_one(*packed)


if __name__ == "__main__":
    sys.exit(main())
