"""Command-line front end.

Three commands: ``simulate`` writes an empirical-field CSV, ``verify``
runs one named checker and writes a JSON report, ``clt`` runs a convergence
harness.  Every run can emit a manifest echoing the fully resolved
configuration; ``rerun`` replays a manifest and reproduces the reports
(timing field aside) byte-for-byte.

Configuration: flat key-value files with sections (INI style), overridden
by flags; flags win.  Exit codes: 0 all checks passed, 1 a check failed,
2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import json
import sys
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import __version__, parallel
from .engine import evaluate_field, export_field_csv
from .errors import ConfigError, DomainError, WeplabError
from .limits import check_distance_monotone, dg0_upper_bound_check, weight_drift_check
from .models import ProcessModel, TimeGrid, parse_model, sample_paths
from .verifiers import (BoundReport, ProbeResult, borell_check, chaining_ab_check,
                        clt_covariance_convergence, clt_marginal_test, clt_sup_comparison,
                        envelope_check, feller_sandwich, l_condition_estimate,
                        lemma_l_check, lemma_m_check, lemma_y_check,
                        prop_d1_d2_check, slowly_varying_check, wl_estimate)
from .weights import WeightSpec, dyadic_sum, integral_condition, parse_weight

CHECK_NAMES = ("wl", "l-cond", "integral", "dyadic", "envelope", "feller", "borell",
               "slowly-varying", "lemma-y", "lemma-m", "lemma-l", "d1", "d2",
               "chaining-ab", "monotone-d", "dg0-upper", "weight-drift")

CLT_MODES = ("marginal", "cov", "sup")


@dataclass
class RunConfig:
    """Fully resolved run parameters; serialized verbatim into manifests."""

    model: Optional[str] = None
    weight: str = "const:1"
    gamma: Optional[float] = None
    unchecked: bool = False
    a: float = 1.0
    b: float = 2.0
    time_points: int = 129
    level_points: int = 33
    clip: float = 1e-3
    theta: float = 5.0
    n: int = 10_000
    reps: int = 2000
    seed: int = 0
    workers: int = 0          # 0 means: use WEPLAB_WORKERS or 1
    t: float = 1.5
    y: float = 0.3
    n_list: str = "1000,100000"
    times: str = "1,1.25,1.5,2"
    levels: str = "0.2,0.4,0.5,0.8"
    c_values: str = "0.25,1,4"

    def resolved_workers(self) -> int:
        return self.workers if self.workers > 0 else parallel.default_workers()

    def grid(self) -> TimeGrid:
        return TimeGrid.uniform(self.a, self.b, self.time_points)

    def weight_spec(self) -> WeightSpec:
        return parse_weight(self.weight, gamma=self.gamma, unchecked=self.unchecked)

    def model_spec(self) -> ProcessModel:
        if self.model is None:
            raise ConfigError("--model is required for this command")
        return parse_model(self.model)

    def float_list(self, name: str) -> list[float]:
        raw = getattr(self, name)
        try:
            return [float(v) for v in str(raw).split(",") if v.strip()]
        except ValueError as exc:
            raise ConfigError(f"bad numeric list for {name}: {raw!r}") from exc

    def int_list(self, name: str) -> list[int]:
        return [int(v) for v in self.float_list(name)]


_BOOL_FIELDS = {"unchecked"}
_CONFIG_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}


def load_config_file(path: str) -> dict:
    """Read a flat key-value file with sections; unknown keys are rejected."""
    parser = configparser.ConfigParser()
    try:
        with open(path, "r", encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"config parse error in {path}: {exc}") from exc
    values: dict = {}
    for section in parser.sections():
        for key, raw in parser.items(section):
            name = key.replace("-", "_")
            if name not in _CONFIG_FIELDS:
                raise ConfigError(f"unknown config key {key!r} in [{section}] of {path}")
            if name in values:
                raise ConfigError(f"duplicate config key {key!r} in {path}")
            values[name] = raw
    return values


def _coerce(name: str, raw):
    field = _CONFIG_FIELDS[name]
    if raw is None:
        return None
    if name in _BOOL_FIELDS:
        if isinstance(raw, bool):
            return raw
        return str(raw).strip().lower() in ("1", "true", "yes", "on")
    base = field.type
    try:
        if base in ("int", int):
            return int(str(raw))
        if base in ("float", float) or base == "Optional[float]":
            return float(str(raw))
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {raw!r}") from exc
    return str(raw)


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """defaults < config file < explicit flags."""
    values: dict = {}
    if getattr(args, "config", None):
        for key, raw in load_config_file(args.config).items():
            values[key] = _coerce(key, raw)
    for name in _CONFIG_FIELDS:
        flag_val = getattr(args, name, None)
        if flag_val is not None:
            values[name] = _coerce(name, flag_val)
    return RunConfig(**values)


# ---------------------------------------------------------------------------
# verify dispatch
# ---------------------------------------------------------------------------

def _wrap_rows(check: str, rows, n: int, seed: int) -> BoundReport:
    return BoundReport(check, tuple(rows), n, seed, 0)


def _run_integral(cfg: RunConfig) -> BoundReport:
    w = cfg.weight_spec()
    verdict = integral_condition(w, cfg.float_list("c_values"))
    rows = [ProbeResult({"c": e.c}, e.value, e.error, None, None, e.finite)
            for e in verdict.entries]
    return _wrap_rows("integral", rows, 0, cfg.seed)


def _run_dyadic(cfg: RunConfig) -> BoundReport:
    w = cfg.weight_spec()
    rows = []
    for theta in (1e-4, 1e-2, 0.2 * w.gamma):
        short = dyadic_sum(w, theta, 60)
        full = dyadic_sum(w, theta, 200)
        settled = full.ratio - short.ratio <= 0.01 * full.ratio
        rows.append(ProbeResult({"theta": theta, "terms": 200}, full.ratio, None,
                                None, None, settled and full.ratio >= short.ratio))
        if w.sv_kind == "const" and w.sv_param == 1.0:
            # pure power: geometric series in closed form, partial and limit
            r = 4.0 ** (-w.alpha)
            partial = (1.0 - r ** 60) / (1.0 - r)
            limit = 1.0 / (1.0 - r)
            rows.append(ProbeResult({"theta": theta, "terms": 60, "part": "closed-form"},
                                    short.ratio, None, partial, None,
                                    abs(short.ratio - partial) <= 1e-10))
            rows.append(ProbeResult({"theta": theta, "terms": 200, "part": "limit"},
                                    full.ratio, None, limit, None,
                                    abs(full.ratio - limit) <= 1e-10))
    return _wrap_rows("dyadic", rows, 0, cfg.seed)


def _run_monotone_d(cfg: RunConfig) -> BoundReport:
    w = cfg.weight_spec()
    rng = parallel.derive_rng(cfg.seed, 97)
    triples = np.sort(rng.uniform(1e-6, w.gamma, size=(1000, 3)), axis=1)
    report = check_distance_monotone(w, [tuple(t) for t in triples])
    row = ProbeResult({"triples": 1000, "violation": report.violation}, None, None, None,
                      None, report.passed)
    return _wrap_rows("monotone-d", [row], 0, cfg.seed)


def _run_weight_drift(cfg: RunConfig) -> BoundReport:
    w = cfg.weight_spec()
    rng = parallel.derive_rng(cfg.seed, 98)
    pairs = rng.uniform(1e-6, w.gamma, size=(1000, 2))
    report = weight_drift_check(w, [tuple(p) for p in pairs])
    row = ProbeResult({"pairs": 1000, "violation": report.violation}, None, None, None,
                      None, report.passed)
    return _wrap_rows("weight-drift", [row], 0, cfg.seed)


def _run_dg0_upper(cfg: RunConfig) -> BoundReport:
    model = cfg.model_spec()
    w = cfg.weight_spec()
    grid = cfg.grid()
    wl = wl_estimate(model, w, cfg.theta, n=cfg.n, seed=cfg.seed, grid=grid,
                     workers=cfg.resolved_workers())
    ts = np.linspace(cfg.a, cfg.b, 5)
    xs = (0.2, 0.5, 0.8)
    probes = [(s, x, t, y) for s in ts for t in ts for x in xs for y in xs]
    report = dg0_upper_bound_check(model, w, wl.l_hat, probes, theta=cfg.theta)
    rows = [ProbeResult({"stat": "l_hat"}, wl.l_hat, None, None, None, True),
            ProbeResult({"probes": len(probes), "violation": report.violation},
                        None, None, None, None, report.passed)]
    return _wrap_rows("dg0-upper", rows, cfg.n, cfg.seed)


def _run_d1_or_d2(cfg: RunConfig, event: str) -> BoundReport:
    full = prop_d1_d2_check(n=cfg.n, seed=cfg.seed, grid=cfg.grid(),
                            workers=cfg.resolved_workers())
    rows = [p for p in full.probes
            if p.coords.get("event") in (event, None) or "stat" in p.coords]
    return BoundReport(event, tuple(rows), full.n, full.seed, full.wall_ms)


def run_check(check: str, cfg: RunConfig) -> BoundReport:
    workers = cfg.resolved_workers()
    if check == "wl":
        return wl_estimate(cfg.model_spec(), cfg.weight_spec(), cfg.theta, n=cfg.n,
                           seed=cfg.seed, grid=cfg.grid(), workers=workers).to_bound_report()
    if check == "l-cond":
        probes = [(cfg.t, e) for e in (0.55, 0.7, 1.1)]
        return l_condition_estimate(cfg.model_spec(), cfg.theta, probes, n=cfg.n,
                                    seed=cfg.seed, grid=cfg.grid(), workers=workers)
    if check == "integral":
        return _run_integral(cfg)
    if check == "dyadic":
        return _run_dyadic(cfg)
    if check == "envelope":
        return envelope_check(cfg.model_spec(), cfg.weight_spec(), n=cfg.n, seed=cfg.seed,
                              grid=cfg.grid(), workers=workers)
    if check == "feller":
        return feller_sandwich()
    if check == "borell":
        return borell_check(n=cfg.n, seed=cfg.seed, grid=cfg.grid(), workers=workers)
    if check == "slowly-varying":
        return slowly_varying_check(cfg.weight_spec())
    if check == "lemma-y":
        return lemma_y_check()
    if check == "lemma-m":
        return lemma_m_check(n=max(cfg.n, 1000), seed=cfg.seed, grid=cfg.grid(),
                             workers=workers)
    if check == "lemma-l":
        return lemma_l_check(n=cfg.n, seed=cfg.seed, grid=cfg.grid(), workers=workers)
    if check == "d1":
        return _run_d1_or_d2(cfg, "d1")
    if check == "d2":
        return _run_d1_or_d2(cfg, "d2")
    if check == "chaining-ab":
        return chaining_ab_check(cfg.model_spec(), cfg.weight_spec(), cfg.theta, n=cfg.n,
                                 seed=cfg.seed, grid=cfg.grid(), workers=workers)
    if check == "monotone-d":
        return _run_monotone_d(cfg)
    if check == "dg0-upper":
        return _run_dg0_upper(cfg)
    if check == "weight-drift":
        return _run_weight_drift(cfg)
    raise ConfigError(f"unknown check {check!r}")


def run_clt(mode: str, cfg: RunConfig):
    """Returns (BoundReport, csv_rows, csv_header)."""
    workers = cfg.resolved_workers()
    model = cfg.model_spec()
    w = cfg.weight_spec()
    if mode == "marginal":
        res = clt_marginal_test(model, w, cfg.t, cfg.y, cfg.n, cfg.reps, cfg.seed, workers)
        rows = [(r, float(v)) for r, v in enumerate(res.values)]
        return res.to_bound_report(), rows, "rep,nu"
    if mode == "cov":
        cells = [(t, y) for t in cfg.float_list("times") for y in cfg.float_list("levels")]
        res = clt_covariance_convergence(model, w, cells, cfg.int_list("n_list"),
                                         cfg.reps, cfg.seed, workers=workers)
        rows = list(zip(res.n_list, res.distances))
        return res.to_bound_report(), rows, "n,frobenius_distance"
    if mode == "sup":
        res = clt_sup_comparison(model, w, cfg.float_list("times"), cfg.float_list("levels"),
                                 cfg.n, cfg.reps, cfg.seed, workers)
        rows = [(r, float(e), float(l)) for r, (e, l) in
                enumerate(zip(res.empirical_sups, res.limit_sups))]
        return res.to_bound_report(), rows, "rep,empirical_sup,limit_sup"
    raise ConfigError(f"unknown clt mode {mode!r}")


# ---------------------------------------------------------------------------
# output plumbing
# ---------------------------------------------------------------------------

def write_json(obj: dict, path: Optional[str]) -> None:
    text = json.dumps(obj, sort_keys=True, indent=2) + "\n"
    if path:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def write_csv(rows, header: str, path: str) -> None:
    lines = [f"# weplab clt v{__version__}", header]
    lines += [",".join(repr(float(v)) if isinstance(v, float) else str(v) for v in row)
              for row in rows]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def write_manifest(path: str, command: str, sub: Optional[str], cfg: RunConfig,
                   outputs: dict) -> None:
    manifest = {
        "artifact": "weplab",
        "version": __version__,
        "command": command,
        "subcommand": sub,
        "config": dataclasses.asdict(cfg),
        "outputs": outputs,
        "seed": cfg.seed,
    }
    write_json(manifest, path)


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key-value config file; flags win")
    p.add_argument("--model", help="bm-copula | dependent | iid-time | atomic:<mass>@<loc>")
    p.add_argument("--weight", help="const:<v> | pow:<a>[:logpow:<b>|:expsqrt:<c>]")
    p.add_argument("--gamma", type=float, help="monotonicity window override")
    p.add_argument("--unchecked", action="store_const", const=True, default=None,
                   help="skip weight validation (negative tests)")
    p.add_argument("--a", type=float, help="grid start (> 0)")
    p.add_argument("--b", type=float, help="grid end")
    p.add_argument("--time-points", dest="time_points", type=int)
    p.add_argument("--level-points", dest="level_points", type=int)
    p.add_argument("--clip", type=float, help="level clip delta")
    p.add_argument("--theta", type=float, help="time metric exponent (> 4)")
    p.add_argument("--n", type=int, help="paths per run")
    p.add_argument("--reps", type=int, help="replications")
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int, help="worker count (default $WEPLAB_WORKERS or 1)")
    p.add_argument("--t", type=float, help="probe time")
    p.add_argument("--y", type=float, help="probe level")
    p.add_argument("--n-list", dest="n_list", help="comma list of sample sizes (clt cov)")
    p.add_argument("--times", help="comma list of probe times")
    p.add_argument("--levels", help="comma list of probe levels")
    p.add_argument("--c-values", dest="c_values", help="comma list of integral constants")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="weplab",
        description="simulate weighted empirical fields and verify their limit bounds")
    p.add_argument("--version", action="version", version=f"weplab {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="sample paths and write the field CSV")
    _add_config_flags(sim)
    sim.add_argument("--out", default="field.csv", help="field CSV path")
    sim.add_argument("--manifest", help="manifest JSON path")

    ver = sub.add_parser("verify", help="run one verifier and write a JSON report")
    ver.add_argument("check", choices=CHECK_NAMES)
    _add_config_flags(ver)
    ver.add_argument("--out", help="report JSON path (default: stdout)")
    ver.add_argument("--manifest", help="manifest JSON path")

    clt = sub.add_parser("clt", help="run a CLT harness")
    clt.add_argument("mode", choices=CLT_MODES)
    _add_config_flags(clt)
    clt.add_argument("--out", help="report JSON path (default: stdout)")
    clt.add_argument("--csv", help="per-replication CSV path")
    clt.add_argument("--manifest", help="manifest JSON path")

    rer = sub.add_parser("rerun", help="replay a recorded manifest")
    rer.add_argument("--manifest", required=True)
    return p


def _cmd_simulate(cfg: RunConfig, out: str, manifest: Optional[str]) -> int:
    if cfg.model is None:
        raise ConfigError("--model is required for simulate")
    grid = cfg.grid()
    w = cfg.weight_spec()
    batch = sample_paths(cfg.model_spec(), grid, cfg.n, cfg.seed, cfg.resolved_workers())
    levels = np.linspace(cfg.clip, 1.0 - cfg.clip, cfg.level_points)
    field = evaluate_field(batch, levels, w, clip=cfg.clip, workers=cfg.resolved_workers())
    export_field_csv(field, out)
    if manifest:
        write_manifest(manifest, "simulate", None, cfg, {"out": out})
    return 0


def _cmd_verify(check: str, cfg: RunConfig, out: Optional[str],
                manifest: Optional[str]) -> int:
    report = run_check(check, cfg)
    write_json(report.to_json(), out)
    if manifest:
        write_manifest(manifest, "verify", check, cfg, {"out": out})
    return 0 if report.passed else 1


def _cmd_clt(mode: str, cfg: RunConfig, out: Optional[str], csv: Optional[str],
             manifest: Optional[str]) -> int:
    report, rows, header = run_clt(mode, cfg)
    write_json(report.to_json(), out)
    if csv:
        write_csv(rows, header, csv)
    if manifest:
        write_manifest(manifest, "clt", mode, cfg, {"out": out, "csv": csv})
    return 0 if report.passed else 1


def _cmd_rerun(manifest_path: str) -> int:
    try:
        with open(manifest_path, "r", encoding="utf-8") as fh:
            manifest = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot load manifest {manifest_path}: {exc}") from exc
    try:
        cfg = RunConfig(**manifest["config"])
        command = manifest["command"]
        sub = manifest.get("subcommand")
        outputs = manifest.get("outputs", {})
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"malformed manifest {manifest_path}: {exc}") from exc
    if command == "simulate":
        return _cmd_simulate(cfg, outputs.get("out", "field.csv"), None)
    if command == "verify":
        return _cmd_verify(sub, cfg, outputs.get("out"), None)
    if command == "clt":
        return _cmd_clt(sub, cfg, outputs.get("out"), outputs.get("csv"), None)
    raise ConfigError(f"manifest carries unknown command {command!r}")


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "rerun":
            return _cmd_rerun(args.manifest)
        cfg = resolve_config(args)
        if args.command == "simulate":
            return _cmd_simulate(cfg, args.out, args.manifest)
        if args.command == "verify":
            return _cmd_verify(args.check, cfg, args.out, args.manifest)
        if args.command == "clt":
            return _cmd_clt(args.mode, cfg, args.out, args.csv, args.manifest)
        parser.error(f"unknown command {args.command!r}")
    except (ConfigError, DomainError) as exc:
        print(f"weplab: error: {exc}", file=sys.stderr)
        return 2
    except WeplabError as exc:
        print(f"weplab: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
