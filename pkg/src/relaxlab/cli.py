"""Command-line entry point.

Subcommands::

    relaxlab analyze   --builtin p_system --params 2,1
    relaxlab kernel    --builtin p_system --params 1,0
    relaxlab simulate  --builtin p_system --params 1,0 --t-final 50
    relaxlab compare   --chapman-enskog --mu 0.3
    relaxlab report

Every subcommand writes into ``--out`` (default ``relaxlab_out``):
``report.json`` holds one section per subcommand, ``*.csv`` hold series
and ``fields/`` holds binary snapshots.  ``manifest.json`` lists every
artifact with its SHA-256 hash.  Exit codes: 0 when every requested check
passes, 1 on a failed check, 2 on usage or configuration errors.

Configuration file (YAML, passed with ``--file``)::

    system:
      builtin: p_system        # or give matrices instead:
      params: [2, 1]
      # m: 1
      # n1: 1
      # n2: 1
      # A: [[[0, 1], [4, 0]]]  # list of m row-major n x n matrices
      # B: [[0, 0], [1, -1]]
      # A0: [[1, 1], [1, 4]]
    grid: {n: 2048, l: 128}
    time: {t_final: 50, dt: 0.0625}
    analysis: {cutoff_a: 0.25, mu: 0.3, delta: 0.05, fit_window: [12.5, 50]}
    out: relaxlab_out
    seed: 0

Command-line flags override file values.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from .asymptotics_lab import build_chapman_enskog, compare_chapman_enskog, compare_to_linear
from .cd_transform import CDSystem, to_cd_form
from .fourier_solver import check_wave_cone
from .green_kernel_1d import BLOCKS, kernel_fields, measure_remainder
from .grid import Grid
from .nonlinear_sim import Trajectory, bump_data, cfl_limit, measure_solution_decay, simulate
from .sk_analyzer import estimate_dissipation_constant
from .spectral_expansion import check_expansion_residuals, expand_infinity, expand_zero
from .system_model import BUILTIN_NAMES, RawSystem, assemble_symbol, make_builtin, validate_h1

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
DEFAULT_OUT = "relaxlab_out"


class ConfigError(Exception):
    """Invalid configuration; the message carries ``file:line:column`` when known."""


# ---------------------------------------------------------------------------
# configuration

_SCHEMA = {
    "system": {"builtin": str, "params": list, "m": int, "n1": int, "n2": int,
               "A": list, "B": list, "A0": list, "gamma": float},
    "grid": {"n": int, "l": float},
    "time": {"t_final": float, "dt": float},
    "analysis": {"cutoff_a": float, "mu": float, "delta": float, "fit_window": list},
    "out": str,
    "seed": int,
}


@dataclass
class RunConfig:
    command: str
    builtin: Optional[str] = None
    params: tuple = ()
    matrices: Optional[dict] = None
    gamma: Optional[float] = None
    grid_n: Optional[int] = None
    domain_l: Optional[float] = None
    t_final: Optional[float] = None
    dt: Optional[float] = None
    cutoff_a: Optional[float] = None
    mu: float = 0.3
    delta: float = 0.05
    fit_window: Optional[tuple] = None
    out: str = DEFAULT_OUT
    seed: int = 0
    chapman_enskog: bool = False
    source: Optional[str] = None
    anchors: dict = field(default_factory=dict, repr=False)

    def system_dict(self) -> dict:
        if self.builtin is not None:
            out = {"builtin": self.builtin, "params": [float(p) for p in self.params]}
            if self.gamma is not None:
                out["gamma"] = float(self.gamma)
            return out
        return dict(self.matrices or {})

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("anchors")
        d.pop("source")
        d.pop("builtin")
        d.pop("params")
        d.pop("matrices")
        d.pop("gamma")
        d["system"] = self.system_dict()
        d["fit_window"] = None if self.fit_window is None else list(self.fit_window)
        return d


def _where(path: str, node) -> str:
    m = node.start_mark
    return f"{path}:{m.line + 1}:{m.column + 1}"


def _type_ok(value, kind) -> bool:
    if kind is float:
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if kind is int:
        return isinstance(value, int) and not isinstance(value, bool)
    return isinstance(value, kind)


def _validate(path: str, node, data, schema, anchors, prefix=""):
    if not isinstance(node, yaml.MappingNode) or not isinstance(data, dict):
        raise ConfigError(f"{_where(path, node)}: expected a mapping")
    for knode, vnode in node.value:
        key = knode.value
        if key not in schema:
            raise ConfigError(f"{_where(path, knode)}: unknown key {prefix}{key}")
        kind = schema[key]
        anchors[prefix + key] = _where(path, vnode)
        if isinstance(kind, dict):
            _validate(path, vnode, data[key], kind, anchors, prefix + key + ".")
        elif not _type_ok(data[key], kind):
            raise ConfigError(f"{_where(path, vnode)}: {prefix}{key} must be of type "
                              f"{kind.__name__}")


def load_config_file(path: str) -> tuple:
    """Parse and schema-check a YAML run file; returns ``(data, anchors)``."""
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"{path}: no such file")
    text = p.read_text()
    try:
        node = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        loc = f"{path}:{mark.line + 1}:{mark.column + 1}" if mark else path
        raise ConfigError(f"{loc}: {getattr(exc, 'problem', exc)}") from None
    if node is None:
        raise ConfigError(f"{path}:1:1: empty configuration")
    anchors = {}
    _validate(path, node, data, _SCHEMA, anchors)
    return data, anchors


def _floats(text: str, what: str) -> tuple:
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise ConfigError(f"--{what}: expected comma-separated numbers, got {text!r}") from None


def build_config(args) -> RunConfig:
    cfg = RunConfig(command=args.command)
    if getattr(args, "file", None):
        data, anchors = load_config_file(args.file)
        cfg.source, cfg.anchors = args.file, anchors
        sysd = data.get("system", {}) or {}
        if "builtin" in sysd:
            cfg.builtin = sysd["builtin"]
            cfg.params = tuple(sysd.get("params", ()))
            cfg.gamma = sysd.get("gamma")
        elif sysd:
            cfg.matrices = sysd
        g = data.get("grid", {}) or {}
        cfg.grid_n, cfg.domain_l = g.get("n"), g.get("l")
        t = data.get("time", {}) or {}
        cfg.t_final, cfg.dt = t.get("t_final"), t.get("dt")
        a = data.get("analysis", {}) or {}
        cfg.cutoff_a = a.get("cutoff_a")
        cfg.mu = a.get("mu", cfg.mu)
        cfg.delta = a.get("delta", cfg.delta)
        if "fit_window" in a:
            cfg.fit_window = tuple(a["fit_window"])
        cfg.out = data.get("out", cfg.out)
        cfg.seed = data.get("seed", cfg.seed)
    if getattr(args, "builtin", None):
        cfg.builtin, cfg.matrices = args.builtin, None
        cfg.params = ()
    if getattr(args, "params", None) is not None:
        cfg.params = _floats(args.params, "params")
    for name in ("grid_n", "domain_l", "t_final", "dt", "cutoff_a", "mu", "delta", "seed"):
        v = getattr(args, name, None)
        if v is not None:
            setattr(cfg, name, v)
    if getattr(args, "fit_window", None):
        cfg.fit_window = _floats(args.fit_window, "fit-window")
    if cfg.fit_window is not None and (len(cfg.fit_window) != 2
                                       or not 0 < cfg.fit_window[0] < cfg.fit_window[1]):
        raise ConfigError("fit window must be two increasing positive times")
    if getattr(args, "out", None):
        cfg.out = args.out
    cfg.chapman_enskog = bool(getattr(args, "chapman_enskog", False))
    return cfg


def build_system(cfg: RunConfig) -> RawSystem:
    """Instantiate the system described by the configuration."""
    anchor = cfg.anchors.get("system", cfg.source or "system")
    if cfg.builtin is not None:
        if cfg.builtin not in BUILTIN_NAMES:
            raise ConfigError(f"{cfg.anchors.get('system.builtin', 'builtin')}: unknown "
                              f"builtin {cfg.builtin!r}; choose from {list(BUILTIN_NAMES)}")
        kw = {"gamma": cfg.gamma} if cfg.gamma is not None else {}
        try:
            return make_builtin(cfg.builtin, cfg.params, **kw)
        except (ValueError, TypeError, IndexError) as exc:
            raise ConfigError(f"{anchor}: {exc}") from None
    if not cfg.matrices:
        raise ConfigError("no system given: use --builtin or a system section in --file")
    d = cfg.matrices
    missing = [k for k in ("m", "n1", "n2", "A", "B", "A0") if k not in d]
    if missing:
        raise ConfigError(f"{anchor}: system section lacks {missing}")
    try:
        A = [np.array(a, dtype=float) for a in d["A"]]
        return RawSystem(d["m"], d["n1"], d["n2"], tuple(A), np.array(d["B"], float),
                         np.array(d["A0"], float), name="custom")
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{anchor}: {exc}") from None


# ---------------------------------------------------------------------------
# reports

def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _dumps(obj) -> str:
    return json.dumps(obj, default=_jsonable, sort_keys=True, indent=2) + "\n"


def write_report(results: dict, directory) -> Path:
    """Merge ``results`` into ``report.json`` and refresh the manifest.

    ``results`` maps section names to JSON-ready dictionaries.  A section
    may carry ``"_files": {relative_name: text}`` with extra artifacts
    (CSV series, text summaries); they are written next to the report.
    The manifest lists every file in the directory with its SHA-256 hash,
    so outputs of several subcommands accumulate as a union.
    """
    d = Path(directory)
    try:
        d.mkdir(parents=True, exist_ok=True)
        report = d / "report.json"
        merged = json.loads(report.read_text()) if report.exists() else {}
        for name, section in results.items():
            section = dict(section)
            for rel, text in section.pop("_files", {}).items():
                target = d / rel
                target.parent.mkdir(parents=True, exist_ok=True)
                target.write_text(text)
            merged[name] = section
        if results or report.exists():
            report.write_text(_dumps(merged))
        entries = {}
        for f in sorted(d.rglob("*")):
            if f.is_file() and f.name != "manifest.json":
                entries[f.relative_to(d).as_posix()] = hashlib.sha256(f.read_bytes()).hexdigest()
        manifest = d / "manifest.json"
        manifest.write_text(_dumps({"artifacts": entries}))
    except OSError as exc:
        raise OSError(f"cannot write report into {d}: {exc}") from exc
    return manifest


# ---------------------------------------------------------------------------
# subcommands

def _grid_defaults(cfg: RunConfig, m: int) -> tuple:
    N = cfg.grid_n or (2048 if m == 1 else 256)
    L = cfg.domain_l or (128.0 if m == 1 else 104.0)
    T = cfg.t_final or (50.0 if m == 1 else 40.0)
    return N, float(L), float(T)


def cmd_analyze(cfg: RunConfig) -> tuple:
    sys_ = build_system(cfg)
    h1 = validate_h1(sys_)
    section = {"config": cfg.to_dict(), "h1": h1.to_dict()}
    lines = [f"H1 {'holds' if h1.passes else 'fails'}"]
    if not h1.passes:
        section["pass"] = False
        section["_files"] = {"analysis.txt": "\n".join(lines) + "\n"}
        return {"analyze": section}, False, lines
    M, cd = to_cd_form(sys_)
    section["cd_form"] = cd.to_dict()
    section["cd_form"]["Btilde"] = cd.B.tolist()
    section["cd_form"]["MtM_minus_A0inv"] = float(
        np.max(np.abs(M.T @ M - np.linalg.inv(sys_.A0))))
    sk = estimate_dissipation_constant(cd)
    section["sk"] = sk.to_dict()
    lines.append(f"SK {'holds' if sk.holds else 'fails'}; c estimate {sk.c_estimate:.6g}")
    ok = h1.passes and sk.holds
    if sk.holds:
        zeta = np.eye(cd.m)[0]
        ez, ei = expand_zero(cd, zeta), expand_infinity(cd, zeta)
        rz = check_expansion_residuals(cd, zeta, np.geomspace(1e-3, 3e-2, 8), "zero", ez)
        ri = check_expansion_residuals(cd, zeta, np.geomspace(1e2, 1e4, 8), "infinity", ei)
        section["expansion"] = {"zero": ez.summary(), "infinity": ei.summary(),
                                "P1": ez.P1.real.tolist(),
                                "residuals_zero": rz.to_dict(),
                                "residuals_infinity": ri.to_dict()}
        for fam in ez.families:
            cs = ", ".join(f"{s.c.real:.6g}" for s in fam.subfamilies)
            lines.append(f"zero family lambda1={fam.lambda1:.6g}: c = {cs}")
        for fam in ei.families:
            bs = ", ".join(f"{s.b.real:.6g}" for s in fam.subfamilies)
            lines.append(f"infinity family lambda={fam.lam:.6g}: b = {bs}")
        lines.append(f"residual checks: zero {'pass' if rz.passes else 'fail'}, "
                     f"infinity {'pass' if ri.passes else 'fail'}")
        ok = ok and rz.passes and ri.passes
    # randomized consistency checks driven by the seed
    rng = np.random.default_rng(cfg.seed)
    xis = rng.normal(size=(8, sys_.m))
    sym = max(float(np.max(np.abs(assemble_symbol(sys_, x) + assemble_symbol(sys_, -x)
                                  - 2 * sys_.B))) for x in xis)
    cdsym = max(float(np.max(np.abs(cd.A_of(x) - cd.A_of(x).T))) for x in xis)
    section["randomized_checks"] = {"seed": cfg.seed, "symbol_parity": sym,
                                    "cd_symmetry": cdsym}
    ok = ok and sym <= 1e-12 and cdsym <= 1e-10
    section["pass"] = bool(ok)
    section["_files"] = {"analysis.txt": "\n".join(lines) + "\n"}
    return {"analyze": section}, bool(ok), lines


def cmd_kernel(cfg: RunConfig) -> tuple:
    sys_ = build_system(cfg)
    _, cd = to_cd_form(sys_)
    if cd.m != 1:
        raise ConfigError("kernel evaluation is one-dimensional")
    N = cfg.grid_n or 2**14
    L = float(cfg.domain_l or 200.0)
    T = float(cfg.t_final or 50.0)
    t_list = np.geomspace(min(5.0, T / 10), T, 12)
    try:
        fit = measure_remainder(cd, t_list, N, L)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    rows = ["block,t,sup"]
    for b in BLOCKS:
        rows += [f"{b},{t:.17g},{v:.17g}" for t, v in zip(fit.times, fit.sup[b])]
    x, G, Kc, R, _, _ = kernel_fields(cd, T, N, L)
    n = cd.n
    head = ["x"] + [f"{w}_{i}{j}" for w in ("G", "K", "R") for i in range(n) for j in range(n)]
    body = [",".join(head)]
    for k in range(len(x)):
        vals = [x[k]] + list(G[k].ravel()) + list(Kc[k].ravel()) + list(R[k].ravel())
        body.append(",".join(f"{v:.17g}" for v in vals))
    section = {"config": cfg.to_dict(), "remainder": fit.to_dict(), "pass": fit.all_pass,
               "_files": {"remainder.csv": "\n".join(rows) + "\n",
                          "kernel.csv": "\n".join(body) + "\n"}}
    lines = [f"block {b}: fitted {fit.exponents[b]:+.3f} target {fit.targets[b]:+.2f} "
             f"{'PASS' if fit.passes(b) else 'FAIL'}" for b in BLOCKS]
    return {"kernel": section}, fit.all_pass, lines


def cmd_simulate(cfg: RunConfig) -> tuple:
    sys_ = build_system(cfg)
    _, cd = to_cd_form(sys_)
    N, L, T = _grid_defaults(cfg, cd.m)
    try:
        grid = Grid(cd.m, N, L)
        check_wave_cone(cd, grid, T)
        dt = cfg.dt or 0.5 * cfl_limit(cd, grid)
        traj = simulate(cd, bump_data(cd, grid, cfg.delta), T, dt)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    out = Path(cfg.out)
    traj.save(out)
    rep = measure_solution_decay(traj, window=cfg.fit_window)
    section = {"config": cfg.to_dict(), "decay": rep.summary(), "pass": rep.passed,
               "_files": {"decay.csv": rep.csv_text()}}
    return {"simulate": section}, rep.passed, rep.table().splitlines()


def _stored_config(out: Path) -> dict:
    report = out / "report.json"
    if not (out / "trajectory.json").exists() or not report.exists():
        raise ConfigError(f"{out}: no stored trajectory; run simulate first")
    data = json.loads(report.read_text())
    if "simulate" not in data:
        raise ConfigError(f"{out}/report.json: no simulate section")
    return data["simulate"]["config"]


def cmd_compare(cfg: RunConfig) -> tuple:
    out = Path(cfg.out)
    stored = _stored_config(out)
    if cfg.builtin is None and cfg.matrices is None:
        sysd = stored["system"]
        if "builtin" in sysd:
            cfg.builtin, cfg.params = sysd["builtin"], tuple(sysd["params"])
            cfg.gamma = sysd.get("gamma")
        else:
            cfg.matrices = sysd
    sys_ = build_system(cfg)
    _, cd = to_cd_form(sys_)
    traj = Trajectory.load(out, cd)
    window = cfg.fit_window or (tuple(stored["fit_window"]) if stored.get("fit_window") else None)
    try:
        if cfg.chapman_enskog:
            ops = build_chapman_enskog(cd)
            rep = compare_chapman_enskog(traj, ops, cfg.mu, window=window)
            name = "compare_chapman_enskog"
        else:
            rep = compare_to_linear(traj, cd, window=window, cutoff=cfg.cutoff_a)
            name = "compare_linear"
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    section = {"config": cfg.to_dict(), "decay": rep.summary(), "pass": rep.passed,
               "_files": {f"{name}.csv": rep.csv_text()}}
    return {name: section}, rep.passed, rep.table().splitlines()


CRITERIA = {
    "analyze": "C-D form, SK condition and spectral expansions",
    "kernel": "one-dimensional remainder rates",
    "simulate": "nonlinear decay rates",
    "compare_linear": "comparison with the linearized evolution",
    "compare_chapman_enskog": "comparison with the Chapman-Enskog solution",
}


def cmd_report(cfg: RunConfig) -> tuple:
    report = Path(cfg.out) / "report.json"
    if not report.exists():
        raise ConfigError(f"{report}: nothing to aggregate")
    data = json.loads(report.read_text())
    summary = {name: bool(data[name].get("pass", False)) for name in CRITERIA if name in data}
    if not summary:
        raise ConfigError(f"{report}: no subcommand sections")
    lines = [f"{'PASS' if ok else 'FAIL'}  {name}: {CRITERIA[name]}"
             for name, ok in summary.items()]
    section = {"criteria": summary, "pass": all(summary.values()),
               "_files": {"summary.txt": "\n".join(lines) + "\n"}}
    return {"summary": section}, all(summary.values()), lines


COMMANDS = {"analyze": cmd_analyze, "kernel": cmd_kernel, "simulate": cmd_simulate,
            "compare": cmd_compare, "report": cmd_report}


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="relaxlab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--builtin", choices=BUILTIN_NAMES)
        p.add_argument("--params", help="comma-separated parameters, e.g. 2,1")
        p.add_argument("--file", help="YAML run file")
        p.add_argument("--grid-n", dest="grid_n", type=int)
        p.add_argument("--domain-l", dest="domain_l", type=float)
        p.add_argument("--t-final", "--T", dest="t_final", type=float)
        p.add_argument("--dt", type=float)
        p.add_argument("--cutoff-a", dest="cutoff_a", type=float)
        p.add_argument("--mu", type=float)
        p.add_argument("--delta", type=float)
        p.add_argument("--fit-window", dest="fit_window", help="t0,t1")
        p.add_argument("--out")
        p.add_argument("--seed", type=int)
        p.add_argument("--chapman-enskog", dest="chapman_enskog", action="store_true")
    return parser


def run(argv=None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        cfg = build_config(args)
        results, ok, lines = COMMANDS[cfg.command](cfg)
        write_report(results, cfg.out)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    for line in lines:
        print(line)
    return EXIT_OK if ok else EXIT_FAIL


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
