"""Command-line front end: ``telepassive check|sweep|simulate|scatter``.

Exit codes: 0 passive / success, 2 passivity violated or run diverged,
1 any error (bad arguments, unreadable or invalid config, I/O).
"""

from __future__ import annotations

import argparse
import math
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import freq, sim
from .model import (
    SIDES,
    DelayConfig,
    ForceSegment,
    LAW_TYPES,
    RobotParams,
    SamplingConfig,
    Scenario,
    ScenarioError,
    TerminationModel,
    WallMode,
    WallModel,
    validate_scenario,
)

EXIT_OK, EXIT_ERROR, EXIT_VIOLATED = 0, 1, 2


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None, key: str | None = None):
        self.line, self.key = line, key
        where = f"line {line}: " if line is not None else ""
        super().__init__(where + message)


# --- config file ------------------------------------------------------------

_SCALAR_KEYS = {
    "master.mass", "master.damping", "slave.mass", "slave.damping",
    "operator.stiffness", "operator.damping",
    "operator.force.start", "operator.force.end", "operator.force.magnitude",
    "wall.position", "wall.stiffness",
    "sampling.period", "sampling.alpha",
    "delay.t1", "delay.t2", "delay.nu", "duration",
}
_INT_KEYS = {"sampling.substeps"}
_STR_KEYS = {"wall.mode", "controller.type"}

# controller keys accepted per law; shared names fan out to both sides
_LAW_KEYS = {
    "p_like": {"K": ("K_m", "K_s"), "L": ("L_m", "L_s")},
    "pd_like": {"K": ("K_m", "K_s"), "gamma": ("gamma_m", "gamma_s")},
    "pd_dissipation": {},
}
_ALL_CONTROLLER_FIELDS = {"K", "L", "gamma", "K_m", "K_s", "L_m", "L_s", "Kd", "Kp", "Kv", "Peps", "gamma_m", "gamma_s"}

KNOWN_KEYS = _SCALAR_KEYS | _INT_KEYS | _STR_KEYS | {f"controller.{k}" for k in _ALL_CONTROLLER_FIELDS}


def _law_fields(kind: str) -> tuple[str, ...]:
    return tuple(LAW_TYPES[kind].__dataclass_fields__)


def _parse_value(key: str, raw: str, line: int):
    if key in _STR_KEYS:
        return raw
    try:
        if key in _INT_KEYS:
            return int(raw)
        value = float(raw)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as a number", line, key) from None
    if not math.isfinite(value):
        raise ConfigError(f"{key}: value must be finite", line, key)
    return value


def read_config_text(text: str) -> dict[str, tuple[object, int]]:
    """Parse ``section.key = value`` lines into ``{key: (value, line)}``."""
    entries: dict[str, tuple[object, int]] = {}
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {line!r}", lineno)
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in KNOWN_KEYS:
            raise ConfigError(f"unknown key {key!r}", lineno, key)
        if key in entries:
            raise ConfigError(f"duplicate key {key!r}", lineno, key)
        if not raw:
            raise ConfigError(f"{key}: missing value", lineno, key)
        entries[key] = (_parse_value(key, raw, lineno), lineno)
    return entries


def _build_law(entries) -> tuple[object, set[str]]:
    kind, _ = entries.get("controller.type", ("p_like", None))
    if kind not in LAW_TYPES:
        line = entries["controller.type"][1]
        raise ConfigError(f"controller.type must be one of {sorted(LAW_TYPES)}", line, "controller.type")
    fields = _law_fields(kind)
    shared = _LAW_KEYS[kind]
    values: dict[str, float] = {}
    given: set[str] = set()
    for key, (value, line) in entries.items():
        if not key.startswith("controller.") or key == "controller.type":
            continue
        name = key.split(".", 1)[1]
        if name in shared:
            for target in shared[name]:
                values.setdefault(target, value)
                given.add(target)
        elif name in fields:
            given.add(name)
        else:
            raise ConfigError(f"{key} does not apply to controller.type = {kind}", line, key)
    # per-side keys override shared ones regardless of order
    for name in fields:
        if f"controller.{name}" in entries:
            values[name] = entries[f"controller.{name}"][0]
    return LAW_TYPES[kind](**values), given


def scenario_from_entries(entries) -> tuple[Scenario, list[str]]:
    """Build a validated scenario; also return the dump keys left at their defaults."""
    base = Scenario()
    get = lambda key, default: entries[key][0] if key in entries else default  # noqa: E731

    law, law_given = _build_law(entries)
    default_seg = base.operator.exogenous_force[0]
    seg = ForceSegment(
        get("operator.force.start", default_seg.start),
        get("operator.force.end", default_seg.end),
        get("operator.force.magnitude", default_seg.magnitude),
    )
    mode_raw = get("wall.mode", base.environment.mode.value)
    try:
        mode = WallMode(mode_raw)
    except ValueError:
        line = entries["wall.mode"][1]
        raise ConfigError(f"wall.mode must be one of {[m.value for m in WallMode]}", line, "wall.mode") from None

    sc = Scenario(
        master=RobotParams(get("master.mass", base.master.mass), get("master.damping", base.master.damping)),
        slave=RobotParams(get("slave.mass", base.slave.mass), get("slave.damping", base.slave.damping)),
        operator=TerminationModel(
            stiffness=get("operator.stiffness", base.operator.stiffness),
            damping=get("operator.damping", base.operator.damping),
            exogenous_force=(seg,),
        ),
        environment=WallModel(
            contact_position=get("wall.position", base.environment.contact_position),
            stiffness=get("wall.stiffness", base.environment.stiffness),
            mode=mode,
        ),
        law=law,
        sampling=SamplingConfig(
            period=get("sampling.period", base.sampling.period),
            alpha=get("sampling.alpha", base.sampling.alpha),
            substeps=get("sampling.substeps", base.sampling.substeps),
        ),
        delay=DelayConfig(get("delay.t1", 0.0), get("delay.t2", 0.0), get("delay.nu", 0.0)),
        duration=get("duration", base.duration),
    )
    try:
        validate_scenario(sc)
    except ScenarioError as exc:
        # point each violation at its line when the key came from the file
        msgs = []
        for err in exc.errors:
            key = err.split(":")[0].split(" ")[0]
            line = entries.get(key, (None, None))[1]
            msgs.append(f"line {line}: {err}" if line else err)
        raise ScenarioError(msgs) from None

    dumped = dump_entries(sc)
    defaulted = [
        k for k in dumped
        if k not in entries and not (k.startswith("controller.") and k.split(".", 1)[1] in law_given)
    ]
    return sc, defaulted


def parse_config(path) -> Scenario:
    """Read a scenario file; missing keys take the documented defaults."""
    return load_config(path)[0]


def load_config(path) -> tuple[Scenario, list[str]]:
    text = Path(path).read_text(encoding="utf-8")
    return scenario_from_entries(read_config_text(text))


def dump_entries(sc: Scenario) -> dict[str, object]:
    """Canonical flat key/value view of a scenario (single force segment)."""
    if len(sc.operator.exogenous_force) > 1:
        raise ValueError("config files carry a single operator force segment")
    seg = sc.operator.exogenous_force[0] if sc.operator.exogenous_force else ForceSegment(0.0, 1.0, 0.0)
    out: dict[str, object] = {
        "master.mass": sc.master.mass,
        "master.damping": sc.master.damping,
        "slave.mass": sc.slave.mass,
        "slave.damping": sc.slave.damping,
        "operator.stiffness": sc.operator.stiffness,
        "operator.damping": sc.operator.damping,
        "operator.force.start": seg.start,
        "operator.force.end": seg.end,
        "operator.force.magnitude": seg.magnitude,
        "wall.position": sc.environment.contact_position,
        "wall.stiffness": sc.environment.stiffness,
        "wall.mode": sc.environment.mode.value,
        "controller.type": sc.law.kind,
    }
    for name in _law_fields(sc.law.kind):
        out[f"controller.{name}"] = getattr(sc.law, name)
    out.update({
        "sampling.period": sc.sampling.period,
        "sampling.alpha": sc.sampling.alpha,
        "sampling.substeps": sc.sampling.substeps,
        "delay.t1": sc.delay.t1,
        "delay.t2": sc.delay.t2,
        "delay.nu": sc.delay.nu,
        "duration": sc.duration,
    })
    return out


def _fmt_value(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def dump_config(sc: Scenario) -> str:
    return "".join(f"{k} = {_fmt_value(v)}\n" for k, v in dump_entries(sc).items())


def bundled_scenarios() -> list[str]:
    return sorted(p.name for p in resources.files("telepassive").joinpath("scenarios").iterdir() if p.name.endswith(".cfg"))


def resolve_config_path(name: str) -> Path:
    """Filesystem path, or the name of a bundled scenario (with or without ``.cfg``)."""
    p = Path(name)
    if p.exists():
        return p
    bundled = resources.files("telepassive").joinpath("scenarios")
    for candidate in (name, f"{name}.cfg", p.name):
        ref = bundled.joinpath(candidate)
        if ref.is_file():
            return Path(str(ref))
    raise ConfigError(f"config file not found: {name}")


# --- commands ---------------------------------------------------------------


def _load(args) -> tuple[Scenario, list[str]]:
    if args.config:
        entries = read_config_text(resolve_config_path(args.config).read_text(encoding="utf-8"))
    else:
        entries = {}
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, raw = (s.strip() for s in item.split("=", 1))
        if key not in KNOWN_KEYS:
            raise ConfigError(f"--set: unknown key {key!r}", key=key)
        entries[key] = (_parse_value(key, raw, 0), None)
    if args.force_magnitude is not None:
        entries["operator.force.magnitude"] = (float(args.force_magnitude), None)
    sc, defaulted = scenario_from_entries(entries)
    if args.dump_config:
        Path(args.dump_config).write_text(dump_config(sc), encoding="utf-8")
    return sc, defaulted


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _grid(args, T: float) -> freq.FrequencyGrid:
    return freq.FrequencyGrid.default(T, points=args.grid_points, omega_min=args.omega_min)


def _header(args, sc: Scenario, defaulted: list[str]) -> list[str]:
    lines = [f"# scenario {args.config or '(defaults)'}  hash {sim.scenario_hash(sc)}"]
    for k, v in dump_entries(sc).items():
        tag = "  (default)" if k in defaulted else ""
        lines.append(f"#   {k} = {_fmt_value(v)}{tag}")
    return lines


def _emit(lines: list[str], out: Path | None, name: str) -> None:
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if out is not None:
        (out / name).write_text(text, encoding="utf-8")


def _reports(sc: Scenario, grid: freq.FrequencyGrid) -> list[freq.PassivityReport]:
    T, alpha = sc.sampling.period, sc.sampling.alpha
    return [
        freq.passivity_margin_sweep(sc.law, side, T, alpha, grid, getattr(sc, side))
        for side in SIDES
    ]


def cmd_check(args) -> int:
    sc, defaulted = _load(args)
    T = sc.sampling.period
    reports = _reports(sc, _grid(args, T))
    lines = _header(args, sc, defaulted)
    for r in reports:
        lines += [
            f"[{r.side}] robot damping        {r.robot_damping!r}",
            f"[{r.side}] sweep sup            {r.sweep_sup!r} at omega={r.sweep_argmax_omega!r} rad/s",
            f"[{r.side}] closed-form bound    {r.closed_form_bound!r}",
            f"[{r.side}] margins              sweep {r.sweep_margin!r}, closed form {r.closed_form_margin!r}",
            f"[{r.side}] passive by sweep     {'yes' if r.passive_by_sweep else 'NO'}",
            f"[{r.side}] passive closed form  {'yes' if r.passive_by_closed_form else 'NO'}",
            f"[{r.side}] discrepancy_flag     {'RAISED' if r.discrepancy_flag else 'no'}",
        ]
    for g in freq.check_gain_conditions(sc.law, sc.delay):
        lines.append(f"[gain] {g}")
    wall = sc.environment
    if wall.mode is WallMode.SPRING:
        b_min = freq.virtual_wall_bound(wall.stiffness, 0.0, T)
        lines.append(
            f"[wall] sampled virtual-wall damping bound K T/2 + B = {b_min!r} "
            f"(slave damping {sc.slave.damping!r}; informational, the wall is simulated as continuous)"
        )
    passive = all(r.passive_by_sweep for r in reports)
    lines.append(f"verdict: {'PASSIVE' if passive else 'VIOLATED'}")
    out = _out_dir(args) if args.out else None
    _emit(lines, out, "check_report.txt")
    return EXIT_OK if passive else EXIT_VIOLATED


def _coupling(sc: Scenario, kind: str):
    T, alpha = sc.sampling.period, sc.sampling.alpha
    if kind == "continuous":
        return [freq.continuous_coupling(sc.law, side, alpha) for side in SIDES]
    return [freq.sampled_coupling(sc.law, side, T, alpha) for side in SIDES]


def cmd_sweep(args) -> int:
    sc, _ = _load(args)
    out = _out_dir(args)
    grid = _grid(args, sc.sampling.period)
    reports = _reports(sc, grid)
    with open(out / "rhs.csv", "w", encoding="utf-8", newline="") as fh:
        sim.write_csv(fh, ("omega", "rhs_master", "rhs_slave"), freq.sweep_rows(reports))
    scat = freq.scattering_sweep(grid, sc.master, sc.slave, *_coupling(sc, args.coupling), convention=args.z_convention)
    with open(out / "sigma.csv", "w", encoding="utf-8", newline="") as fh:
        sim.write_csv(fh, ("omega", "sigma_max"), ((s.omega, s.sigma_max) for s in scat.samples))
    passive = all(r.passive_by_sweep for r in reports)
    for r in reports:
        print(f"{r.side}: sup {r.sweep_sup!r} at omega={r.sweep_argmax_omega!r}, damping {r.robot_damping!r}")
    print(f"scattering ({args.coupling}): max sigma {scat.worst_sigma!r} at omega={scat.worst_omega!r}")
    print(f"verdict: {'PASSIVE' if passive else 'VIOLATED'}")
    return EXIT_OK if passive else EXIT_VIOLATED


def cmd_scatter(args) -> int:
    sc, _ = _load(args)
    out = _out_dir(args)
    grid = _grid(args, sc.sampling.period)
    scat = freq.scattering_sweep(grid, sc.master, sc.slave, *_coupling(sc, args.coupling), convention=args.z_convention)
    header = ["omega", "sigma_max"]
    for name in ("S11", "S12", "S21", "S22"):
        header += [f"{name}_re", f"{name}_im"]
    rows = []
    for s in scat.samples:
        entries = s.S.ravel()
        rows.append([s.omega, s.sigma_max, *np.column_stack([entries.real, entries.imag]).ravel()])
    with open(out / "scatter.csv", "w", encoding="utf-8", newline="") as fh:
        sim.write_csv(fh, header, rows)
    print(f"scattering ({args.coupling}, {args.z_convention}): max sigma {scat.worst_sigma!r} at omega={scat.worst_omega!r}")
    print(f"verdict: {'PASSIVE' if scat.passive else 'VIOLATED'}")
    return EXIT_OK if scat.passive else EXIT_VIOLATED


def cmd_simulate(args) -> int:
    sc, defaulted = _load(args)
    out = _out_dir(args)
    try:
        trace = sim.run_simulation(sc)
    except sim.DivergenceError as exc:
        print(f"diverged: blow-up at t={exc.time!r} s", file=sys.stderr)
        return EXIT_VIOLATED
    with open(out / "trace.csv", "w", encoding="utf-8", newline="") as fh:
        trace.to_csv(fh)
    exo = [sc.operator.force_at(t) for t in trace.t.tolist()]
    plots = {
        "operator_force.csv": (("t", "F_h_star", "F_h"), zip(trace.t, exo, trace.F_h)),
        "positions.csv": (("t", "q_m", "q_s"), zip(trace.t, trace.q_m, trace.q_s)),
        "forces.csv": (("t", "F_m", "F_s"), zip(trace.t, trace.F_m, trace.F_s)),
    }
    for name, (header, rows) in plots.items():
        with open(out / name, "w", encoding="utf-8", newline="") as fh:
            sim.write_csv(fh, header, rows)
    metrics = sim.tracking_metrics(trace)
    energy = sim.energy_monitor(trace)
    lines = _header(args, sc, defaulted) + [
        f"samples                 {len(trace)}",
        f"max |position error|    {metrics.max_abs_position_error!r}",
        f"final position error    {metrics.final_position_error!r}",
        f"max |force error|       {metrics.max_abs_force_error!r}",
        f"min cumulative energy   {energy.min_energy!r}",
        f"energy passive (>= -{energy.threshold!r})  {'yes' if energy.passive else 'NO'}",
    ]
    _emit(lines, out, "metrics.txt")
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="telepassive", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    commands = {
        "check": (cmd_check, "passivity report per side (closed form vs sweep)"),
        "sweep": (cmd_sweep, "write the damping-condition sweep and sigma_max CSVs"),
        "simulate": (cmd_simulate, "run the sampled-data simulation"),
        "scatter": (cmd_scatter, "scattering-matrix sweep"),
    }
    for name, (func, help_text) in commands.items():
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(func=func)
        p.add_argument("--config", help="scenario file or bundled scenario name")
        p.add_argument("--out", default=None if name == "check" else "telepassive_out", help="output directory")
        p.add_argument("--grid-points", type=int, default=2000)
        p.add_argument("--omega-min", type=float, default=1e-3)
        p.add_argument("--force-magnitude", type=float, default=None)
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
        p.add_argument("--dump-config", metavar="FILE", help="write the effective scenario as a config file")
        p.add_argument("--coupling", choices=("sampled", "continuous"), default="sampled")
        p.add_argument("--z-convention", choices=("impedance", "reciprocal"), default="impedance")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # --help exits 0, usage errors 1
        return int(exc.code or 0) if exc.code in (0, EXIT_ERROR) else EXIT_ERROR
    try:
        return args.func(args)
    except (ConfigError, ScenarioError, OSError, ValueError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
