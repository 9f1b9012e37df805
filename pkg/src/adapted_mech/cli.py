"""Command line driver: check | derive | integrate | verify | sweep.

System definitions are TOML files:

    [system]
    name = "oscillator"          # optional
    dim = 1
    kind = "hamiltonian"         # or "lagrangian"
    scalar = "0.5*(x1^2 + y1^2)" # H or L over x1..xn, y1..yn and params

    [connection]                 # optional; omitted means N = 0
    N = [["0"]]                  # dim x dim, row major, N[i][j]

    [params]                     # optional
    c = 0.5

    [dynamics]                   # optional
    mode = "paper"               # hamiltonian: paper | frame-consistent
                                 # lagrangian: coefficient-matching | euler-lagrange

    [integrate]                  # required by integrate/sweep
    t0 = 0.0
    t1 = 6.283185307179586
    method = "rk4"               # rk4 | rk45
    step = 1e-3                  # rk4
    # rtol = 1e-10               # rk45
    # atol = 1e-10
    x0 = [1.0]
    y0 = [0.0]
    sample_stride = 1

Exit codes: 0 success, 1 verification failure, 2 configuration error,
3 numerical failure.  All reals are serialized with 17 significant digits
so a written trajectory re-reads bit-exactly.
"""

from __future__ import annotations

import argparse
import itertools
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:              # Python 3.10
    import tomli as tomllib

from . import hamiltonian as ham
from . import lagrangian as lag
from .expr import ExprError, Expression, parse, print_expression
from .frame import BundlePoint, Connection
from .integrate import IntegratorConfig, Trajectory, integrate, sweep
from .verify import all_passed, run_suite

__all__ = ["main", "entrypoint", "ConfigError", "load_system", "SystemConfig"]

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

LAGRANGIAN_MODES = ("coefficient-matching", "euler-lagrange")
HAMILTONIAN_MODES = ("paper", "frame-consistent")

DEFAULT_SEED_ENV = "ADAPTED_MECH_SEED"


class ConfigError(Exception):
    pass


def _fmt(value: float) -> str:
    return format(float(value), ".17g")


@dataclass
class SystemConfig:
    path: str
    name: str
    kind: str
    n: int
    scalar: Expression
    scalar_text: str
    connection: Connection
    connection_texts: list[list[str]]
    params: dict[str, float]
    mode: str
    t0: float = 0.0
    t1: float | None = None
    method: str = "rk4"
    step: float = 1e-3
    rtol: float = 1e-10
    atol: float = 1e-10
    initial_step: float | None = None
    sample_stride: int = 1
    x0: list[float] = field(default_factory=list)
    y0: list[float] = field(default_factory=list)

    def integrator_config(self) -> IntegratorConfig:
        if self.t1 is None:
            raise ConfigError(f"{self.path}: [integrate] t1 is required")
        if not self.x0 or not self.y0:
            raise ConfigError(f"{self.path}: [integrate] x0 and y0 are required")
        cfg = IntegratorConfig(t0=self.t0, t1=self.t1, method=self.method,
                               step=self.step, rtol=self.rtol, atol=self.atol,
                               initial_step=self.initial_step,
                               sample_stride=self.sample_stride)
        try:
            cfg.validate()
        except ValueError as e:
            raise ConfigError(f"{self.path}: {e}") from e
        return cfg

    def initial_point(self) -> BundlePoint:
        return BundlePoint(self.x0, self.y0)


def _require(table: Mapping, key: str, kind, where: str, path: str):
    if key not in table:
        raise ConfigError(f"{path}: missing {where}.{key}")
    value = table[key]
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: {where}.{key} must be a number")
        return float(value)
    if not isinstance(value, kind):
        raise ConfigError(f"{path}: {where}.{key} must be {kind.__name__}")
    return value


def _optional_number(table: Mapping, key: str, default, where: str, path: str):
    if key not in table:
        return default
    return _require(table, key, float, where, path)


def load_system(path: str | Path) -> SystemConfig:
    path = str(path)
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError as e:
        raise ConfigError(f"{path}: {e.strerror}") from e
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"{path}: {e}") from e

    system = data.get("system")
    if not isinstance(system, dict):
        raise ConfigError(f"{path}: missing [system] table")
    n = _require(system, "dim", int, "[system]", path)
    if isinstance(n, bool) or n < 1:
        raise ConfigError(f"{path}: [system].dim must be a positive integer")
    kind = _require(system, "kind", str, "[system]", path)
    if kind not in ("lagrangian", "hamiltonian"):
        raise ConfigError(f"{path}: [system].kind must be lagrangian or hamiltonian")
    scalar_text = _require(system, "scalar", str, "[system]", path)
    name = system.get("name", Path(path).stem)

    params_raw = data.get("params", {})
    if not isinstance(params_raw, dict):
        raise ConfigError(f"{path}: [params] must be a table")
    params: dict[str, float] = {}
    for key, value in params_raw.items():
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: [params].{key} must be a number")
        params[key] = float(value)

    try:
        scalar = parse(scalar_text, n, params)
    except ExprError as e:
        raise ConfigError(f"{path}: [system].scalar: {e}") from e

    conn_table = data.get("connection", {})
    if not isinstance(conn_table, dict):
        raise ConfigError(f"{path}: [connection] must be a table")
    texts = conn_table.get("N")
    if texts is None:
        texts = [["0"] * n for _ in range(n)]
    if (not isinstance(texts, list) or len(texts) != n
            or any(not isinstance(r, list) or len(r) != n for r in texts)
            or any(not isinstance(c, str) for r in texts for c in r)):
        raise ConfigError(f"{path}: connection must be {n}x{n} expression texts")
    try:
        connection = Connection.from_texts(texts, n, params)
    except ExprError as e:
        raise ConfigError(f"{path}: [connection]: {e}") from e

    dynamics = data.get("dynamics", {})
    if not isinstance(dynamics, dict):
        raise ConfigError(f"{path}: [dynamics] must be a table")
    legal = LAGRANGIAN_MODES if kind == "lagrangian" else HAMILTONIAN_MODES
    mode = dynamics.get("mode", legal[0])
    if mode not in legal:
        raise ConfigError(
            f"{path}: [dynamics].mode must be one of {', '.join(legal)} "
            f"for a {kind} system (got {mode!r})")

    cfg = SystemConfig(path=path, name=name, kind=kind, n=n, scalar=scalar,
                       scalar_text=scalar_text, connection=connection,
                       connection_texts=[list(r) for r in texts],
                       params=params, mode=mode)

    table = data.get("integrate", {})
    if not isinstance(table, dict):
        raise ConfigError(f"{path}: [integrate] must be a table")
    if table:
        cfg.t0 = _optional_number(table, "t0", 0.0, "[integrate]", path)
        if "t1" in table:
            cfg.t1 = _require(table, "t1", float, "[integrate]", path)
        method = table.get("method", "rk4")
        if method not in ("rk4", "rk45"):
            raise ConfigError(f"{path}: [integrate].method must be rk4 or rk45")
        cfg.method = method
        cfg.step = _optional_number(table, "step", 1e-3, "[integrate]", path)
        cfg.rtol = _optional_number(table, "rtol", 1e-10, "[integrate]", path)
        cfg.atol = _optional_number(table, "atol", 1e-10, "[integrate]", path)
        cfg.initial_step = _optional_number(table, "initial_step", None,
                                            "[integrate]", path)
        stride = table.get("sample_stride", 1)
        if isinstance(stride, bool) or not isinstance(stride, int) or stride < 1:
            raise ConfigError(f"{path}: [integrate].sample_stride must be a "
                              "positive integer")
        cfg.sample_stride = stride
        for axis in ("x0", "y0"):
            if axis in table:
                vec = table[axis]
                if (not isinstance(vec, list) or len(vec) != n
                        or any(isinstance(v, bool) or not isinstance(v, (int, float))
                               for v in vec)):
                    raise ConfigError(f"{path}: [integrate].{axis} must be a "
                                      f"list of {n} numbers")
                setattr(cfg, axis, [float(v) for v in vec])
    return cfg


def build_system(cfg: SystemConfig, params: Mapping[str, float] | None = None):
    params = dict(params if params is not None else cfg.params)
    if cfg.kind == "lagrangian":
        return lag.LagrangianSystem(cfg.n, cfg.scalar, cfg.connection, params)
    return ham.HamiltonianSystem(cfg.n, cfg.scalar, cfg.connection, params,
                                 mode=cfg.mode)


def make_rule(cfg: SystemConfig, system) -> Callable[[BundlePoint], np.ndarray]:
    if cfg.kind == "lagrangian":
        if cfg.mode == "coefficient-matching":
            return lag.rhs_coefficient_matching(system)
        return lag.rhs_euler_lagrange(system)
    return ham.rhs(system)


def make_diagnostics(cfg: SystemConfig, system) -> dict[str, Callable]:
    if cfg.kind == "lagrangian":
        return {
            "energy": lambda p: lag.lagrangian_energy(system, p),
            # no analytic drift law exists on the Lagrangian side
            "drift_rate": lambda p: 0.0,
            "residual": lambda p: lag.el_form_residual(system, p),
        }
    return {
        "energy": system.energy,
        "drift_rate": lambda p: ham.energy_drift_rate(system, p),
        "residual": lambda p: ham.dynamics_residual(system, p),
    }


# --- commands ----------------------------------------------------------------

def cmd_check(args) -> int:
    try:
        cfg = load_system(args.file)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"system {cfg.name}: kind={cfg.kind} dim={cfg.n} mode={cfg.mode}")
    print(f"scalar = {print_expression(cfg.scalar)}")
    for i, row in enumerate(cfg.connection.entries):
        rendered = ", ".join(print_expression(e) for e in row)
        print(f"N[{i + 1}][*] = [{rendered}]")
    for key in sorted(cfg.params):
        print(f"param {key} = {_fmt(cfg.params[key])}")
    if cfg.t1 is not None:
        print(f"integrate: {cfg.method} t in [{_fmt(cfg.t0)}, {_fmt(cfg.t1)}] "
              f"x0={cfg.x0} y0={cfg.y0}")
    return EXIT_OK


def _parse_at(text: str, n: int) -> BundlePoint:
    try:
        values = [float(v) for v in text.split(",")]
    except ValueError as e:
        raise ConfigError(f"--at: {e}") from e
    if len(values) != 2 * n:
        raise ConfigError(f"--at needs {2 * n} comma-separated values "
                          f"(x1..x{n},y1..y{n})")
    return BundlePoint(values[:n], values[n:])


def cmd_derive(args) -> int:
    try:
        cfg = load_system(args.file)
        point = _parse_at(args.at, cfg.n)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    system = build_system(cfg)
    rule = make_rule(cfg, system)
    try:
        velocity = rule(point)
        if cfg.kind == "lagrangian":
            if cfg.mode == "coefficient-matching":
                cond = lag.semispray_solve(system, point).cond
            else:
                cond = lag.euler_lagrange_condition(system, point)
            energy = lag.lagrangian_energy(system, point)
            residual = lag.el_form_residual(system, point)
            extras = [f"condition_number = {_fmt(cond)}"]
        else:
            energy = system.energy(point)
            residual = ham.dynamics_residual(system, point)
            extras = [f"drift_rate = {_fmt(ham.energy_drift_rate(system, point))}"]
    except (lag.DegenerateLagrangian, ExprError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    print(f"rhs = ({', '.join(_fmt(v) for v in velocity)})")
    print(f"energy = {_fmt(energy)}")
    for line in extras:
        print(line)
    print(f"residual = {_fmt(residual)}")
    return EXIT_OK


def _write_csv(path: str | Path, n: int, traj: Trajectory) -> None:
    names = ["energy", "drift_rate", "residual"]
    header = (["t"] + [f"x{i}" for i in range(1, n + 1)]
              + [f"y{i}" for i in range(1, n + 1)] + names)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for k in range(len(traj.times)):
            row = [traj.times[k], *traj.states[k]]
            row += [traj.diagnostics[name][k] for name in names]
            fh.write(",".join(_fmt(v) for v in row) + "\n")
        if not traj.completed:
            fh.write(f"# aborted: {traj.abort_reason} at t={_fmt(traj.abort_time)}\n")


_PLOT_TEMPLATE = '''\
#!/usr/bin/env python3
"""Reproduce the trajectory figure for {name} from its CSV export."""
import csv
from pathlib import Path

DATA = Path(__file__).resolve().parent / {csv_name!r}

rows = []
with open(DATA) as fh:
    reader = csv.reader(fh)
    header = next(reader)
    for row in reader:
        if row and not row[0].startswith("#"):
            rows.append([float(v) for v in row])

columns = {{name: [r[i] for r in rows] for i, name in enumerate(header)}}

import matplotlib.pyplot as plt

fig, (left, right) = plt.subplots(1, 2, figsize=(10, 4))
left.plot(columns["x1"], columns["y1"])
left.set_xlabel("x1"); left.set_ylabel("y1"); left.set_title("phase portrait")
right.plot(columns["t"], columns["energy"])
right.set_xlabel("t"); right.set_ylabel("energy"); right.set_title("energy")
fig.suptitle({name!r})
fig.tight_layout()
out = Path(__file__).with_suffix(".png")
fig.savefig(out, dpi=150)
print(f"wrote {{out}}")
'''


def cmd_integrate(args) -> int:
    try:
        cfg = load_system(args.file)
        icfg = cfg.integrator_config()
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    system = build_system(cfg)
    traj = integrate(make_rule(cfg, system), cfg.initial_point(), icfg,
                     make_diagnostics(cfg, system))
    _write_csv(args.out, cfg.n, traj)
    if args.plot:
        script = _PLOT_TEMPLATE.format(name=cfg.name,
                                       csv_name=Path(args.out).name)
        Path(args.plot).write_text(script, encoding="utf-8")
    if not traj.completed:
        print(f"aborted: {traj.abort_reason} at t={_fmt(traj.abort_time)}",
              file=sys.stderr)
        return EXIT_NUMERIC
    print(f"wrote {args.out} ({len(traj.times)} samples)")
    return EXIT_OK


def _default_seed() -> int:
    raw = os.environ.get(DEFAULT_SEED_ENV)
    if raw is None:
        return 42
    try:
        return int(raw)
    except ValueError:
        return 42


def cmd_verify(args) -> int:
    try:
        dims = tuple(sorted({int(v) for v in args.dims.split(",")}))
    except ValueError:
        print("error: --dims must be comma-separated integers", file=sys.stderr)
        return EXIT_CONFIG
    if any(d < 1 for d in dims):
        print("error: dimensions must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    seed = args.seed if args.seed is not None else _default_seed()
    if seed < 0:
        print("error: --seed must be non-negative", file=sys.stderr)
        return EXIT_CONFIG
    results = run_suite(seed=seed, dims=dims)
    payload = json.dumps([r.to_json() for r in results], indent=2)
    if args.out:
        Path(args.out).write_text(payload + "\n", encoding="utf-8")
    else:
        print(payload)
    ok = all_passed(results)
    for r in results:
        if r.passed is False:
            print(f"FAIL {r.name} n={r.n} max_error={r.max_error:.3e} "
                  f"tolerance={r.tolerance:.3e}", file=sys.stderr)
    return EXIT_OK if ok else EXIT_VERIFY_FAILED


def _parse_grid(spec: str, cfg: SystemConfig) -> list[tuple[str, list[float]]]:
    axes: list[tuple[str, list[float]]] = []
    for clause in spec.split(";"):
        clause = clause.strip()
        if not clause:
            continue
        if "=" not in clause:
            raise ConfigError(f"--grid clause {clause!r} must look like "
                              "name=start:stop:count")
        name, _, rhs = clause.partition("=")
        name = name.strip()
        parts = rhs.split(":")
        try:
            if len(parts) == 1:
                values = [float(parts[0])]
            elif len(parts) == 3:
                count = int(parts[2])
                if count < 1:
                    raise ValueError("count must be >= 1")
                values = list(np.linspace(float(parts[0]), float(parts[1]), count))
            else:
                raise ValueError("expected start:stop:count")
        except ValueError as e:
            raise ConfigError(f"--grid clause {clause!r}: {e}") from e
        if name.startswith(("x0[", "y0[")) and name.endswith("]"):
            index = int(name[3:-1])
            if not 1 <= index <= cfg.n:
                raise ConfigError(f"--grid: component {name!r} out of range")
        elif name not in cfg.params:
            raise ConfigError(f"--grid: {name!r} is neither a declared parameter "
                              "nor an x0[i]/y0[i] component")
        axes.append((name, values))
    if not axes:
        raise ConfigError("--grid produced no axes")
    return axes


def cmd_sweep(args) -> int:
    try:
        cfg = load_system(args.file)
        icfg = cfg.integrator_config()
        axes = _parse_grid(args.grid, cfg)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG

    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)

    names = [name for name, _ in axes]
    combos = list(itertools.product(*(values for _, values in axes)))
    items = []
    for combo in combos:
        overrides = dict(zip(names, combo))
        x0 = list(cfg.x0)
        y0 = list(cfg.y0)
        params = dict(cfg.params)
        for key, value in overrides.items():
            if key.startswith("x0["):
                x0[int(key[3:-1]) - 1] = value
            elif key.startswith("y0["):
                y0[int(key[3:-1]) - 1] = value
            else:
                params[key] = value
        items.append((BundlePoint(x0, y0), params))

    def factory(params: Mapping[str, float]):
        system = build_system(cfg, params)
        return make_rule(cfg, system), make_diagnostics(cfg, system)

    trajectories = sweep(factory, items, icfg)

    index = []
    any_completed = False
    for k, traj in enumerate(trajectories):
        csv_name = f"run_{k:03d}.csv"
        _write_csv(outdir / csv_name, cfg.n, traj)
        entry = {
            "index": k,
            "overrides": {name: combos[k][i] for i, name in enumerate(names)},
            "status": traj.status,
            "csv": csv_name,
        }
        if not traj.completed:
            entry["abort_reason"] = traj.abort_reason
            entry["abort_time"] = traj.abort_time
        else:
            any_completed = True
        index.append(entry)
    (outdir / "index.json").write_text(json.dumps(index, indent=2) + "\n",
                                       encoding="utf-8")
    print(f"wrote {len(trajectories)} runs to {outdir}")
    return EXIT_OK if any_completed else EXIT_NUMERIC


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="adapted-mech",
        description="Mechanics on the adapted frame of a nonlinear connection")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check", help="validate a system file and echo it")
    p.add_argument("file")
    p.set_defaults(handler=cmd_check)

    p = sub.add_parser("derive", help="evaluate the dynamics at one point")
    p.add_argument("file")
    p.add_argument("--at", required=True,
                   help="comma-separated point x1..xn,y1..yn")
    p.set_defaults(handler=cmd_derive)

    p = sub.add_parser("integrate", help="integrate a trajectory to CSV")
    p.add_argument("file")
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--plot", help="also write a plot script next to the CSV")
    p.set_defaults(handler=cmd_integrate)

    p = sub.add_parser("verify", help="run the randomized invariant suite")
    p.add_argument("--seed", type=int, default=None,
                   help=f"RNG seed (default: ${DEFAULT_SEED_ENV} or 42)")
    p.add_argument("--dims", default="1,2,3", help="comma-separated dimensions")
    p.add_argument("--out", help="write the JSON report here instead of stdout")
    p.set_defaults(handler=cmd_verify)

    p = sub.add_parser("sweep", help="integrate a cartesian grid of runs")
    p.add_argument("file")
    p.add_argument("--grid", required=True,
                   help="clauses name=start:stop:count joined by ';' "
                        "(names: params or x0[i]/y0[i])")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(handler=cmd_sweep)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
