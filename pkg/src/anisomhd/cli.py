"""Command-line entry point: ``anisomhd <subcommand> [--config FILE] [flags]``."""
from __future__ import annotations

import argparse
import json
import math
import sys
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import diagnostics as diag
from . import inequalities as ineq
from .kernel import PhysicalParams, bound_audit
from .propagator import CATALOG, DecayConfig, decay_catalog_run, write_series_csv, write_summary_csv
from .solver import Grid, divergence_residual, init_random_smooth, integrate, write_checkpoint

SUBCOMMANDS = ("kernel_audit", "linear_decay", "nonlinear_run", "inequality_suite")

# canonical dotted key -> RunConfig attribute
KEYS = {
    "run.subcommand": "subcommand",
    "physics.mu": "mu",
    "physics.eta": "eta",
    "solver.grid": "grid",
    "solver.dt": "dt",
    "solver.t_final": "t_final",
    "solver.amplitude": "amplitude",
    "solver.slope": "slope",
    "quadrature.preset": "quadrature",
    "fit.t_min": "fit_t_min",
    "fit.t_max": "fit_t_max",
    "decay.catalog": "catalog",
    "audit.samples_per_tag": "audit_samples",
    "suite.agmon_samples": "agmon_samples",
    "run.seed": "seed",
    "run.out": "out",
}
ALIASES = {attr: key for key, attr in KEYS.items()}
ALIASES.update({key.split(".", 1)[1]: key for key in KEYS})


class ConfigError(ValueError):
    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass(frozen=True)
class RunConfig:
    subcommand: str = "kernel_audit"
    mu: float = 1.0
    eta: float = 1.0
    grid: int = 32
    dt: float = 1e-3
    t_final: float = 1.0
    amplitude: float = 1e-3
    slope: float = 6.0
    quadrature: str = "default"
    fit_t_min: float = 50.0
    fit_t_max: float = 2000.0
    catalog: tuple[str, ...] = tuple(CATALOG)
    audit_samples: int = 100_000
    agmon_samples: int = 1000
    seed: int = 42
    out: str = "out"

    @property
    def params(self) -> PhysicalParams:
        return PhysicalParams(self.mu, self.eta)

    def canonical(self) -> str:
        lines = []
        for key in sorted(KEYS):
            v = getattr(self, KEYS[key])
            if isinstance(v, tuple):
                text = ",".join(v)
            elif isinstance(v, float):
                text = repr(v)
            else:
                text = str(v)
            lines.append(f"{key} = {text}")
        return "\n".join(lines) + "\n"


_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key: str, attr: str, raw):
    kind = _TYPES[attr]
    try:
        if kind == "float":
            v = float(raw)
            if not math.isfinite(v):
                raise ValueError
            return v
        if kind == "int":
            if isinstance(raw, float) or (isinstance(raw, str) and not raw.strip().lstrip("+-").isdigit()):
                raise ValueError
            return int(raw)
        if kind.startswith("tuple"):
            items = raw if isinstance(raw, (list, tuple)) else str(raw).split(",")
            return tuple(s.strip() for s in items if s.strip())
        return str(raw).strip()
    except (TypeError, ValueError):
        raise ConfigError(key, f"expected {kind}, got {raw!r}") from None


def _validate(cfg: RunConfig) -> RunConfig:
    checks = [
        ("physics.mu", cfg.mu > 0, "must be > 0"),
        ("physics.eta", cfg.eta > 0, "must be > 0"),
        ("solver.grid", cfg.grid > 0 and cfg.grid % 2 == 0, "must be a positive even integer"),
        ("solver.dt", cfg.dt > 0, "must be > 0"),
        ("solver.t_final", cfg.t_final >= 0, "must be >= 0"),
        ("solver.amplitude", cfg.amplitude >= 0, "must be >= 0"),
        ("fit.t_min", 0 < cfg.fit_t_min < cfg.fit_t_max, "need 0 < t_min < t_max"),
        ("run.subcommand", cfg.subcommand in SUBCOMMANDS, f"must be one of {SUBCOMMANDS}"),
        ("audit.samples_per_tag", cfg.audit_samples > 0, "must be > 0"),
        ("suite.agmon_samples", cfg.agmon_samples > 0, "must be > 0"),
        ("run.seed", 0 <= cfg.seed < 2**64, "must be a 64-bit unsigned integer"),
    ]
    for key, ok, msg in checks:
        if not ok:
            raise ConfigError(key, msg)
    unknown = [c for c in cfg.catalog if c not in CATALOG]
    if unknown:
        raise ConfigError("decay.catalog", f"unknown entries {unknown}")
    from .propagator import QUADRATURE_PRESETS

    if cfg.quadrature not in QUADRATURE_PRESETS:
        raise ConfigError("quadrature.preset", f"unknown preset {cfg.quadrature!r}")
    return cfg


def read_config_text(text: str) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment; ``[section]`` headers prefix keys."""
    out = {}
    section = ""
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", f"expected key = value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        out[f"{section}.{key}" if section and "." not in key else key] = value
    return out


def _canonical_key(key: str) -> str:
    if key in KEYS:
        return key
    if key in ALIASES:
        return ALIASES[key]
    raise ConfigError(key, "unknown configuration key")


def parse_config(file=None, overrides: dict | None = None, text: str | None = None) -> RunConfig:
    """Defaults, then the config file (or ``text``), then ``overrides``; later wins."""
    values: dict = {}
    if file is not None:
        text = Path(file).read_text()
    for source in (read_config_text(text) if text else {}), (overrides or {}):
        for key, raw in source.items():
            if raw is None:
                continue
            ck = _canonical_key(key)
            values[KEYS[ck]] = _coerce(ck, KEYS[ck], raw)
    return _validate(replace(RunConfig(), **values))


# ---------------------------------------------------------------------------
# subcommands; each returns a list of result dicts {name, status, metric, threshold, hard}


def _result(name, metric, threshold, passed, hard=True):
    return {
        "name": name,
        "status": "pass" if passed else "fail",
        "metric": float(metric),
        "threshold": float(threshold),
        "hard": hard,
    }


def run_kernel_audit(cfg: RunConfig, out: Path) -> list[dict]:
    audit = bound_audit(cfg.audit_samples, cfg.seed, cfg.params)
    results = []
    rows = ["name,checked,violations,hard,worst_excess"]
    for name, e in audit.per_bound.items():
        rows.append(f"{name},{e['checked']},{e['violations']},{str(e['hard']).lower()},{float(e['worst_excess'])!r}")
        results.append(_result(name, e["violations"], 0, e["violations"] == 0, e["hard"]))
    for tag, n in audit.per_tag.items():
        results.append(_result(f"samples_{tag}", n, cfg.audit_samples, n >= cfg.audit_samples))
    (out / "kernel_audit.csv").write_text("\n".join(rows) + "\n")
    return results


def run_linear_decay(cfg: RunConfig, out: Path) -> list[dict]:
    dc = DecayConfig(
        params=cfg.params,
        quadrature=cfg.quadrature,
        fit_window=(cfg.fit_t_min, cfg.fit_t_max),
        t_range=(min(10.0, cfg.fit_t_min), cfg.fit_t_max),
        catalog=cfg.catalog,
    )
    series = decay_catalog_run(dc)
    write_series_csv(out / "decay_series.csv", series)
    write_summary_csv(out / "decay_summary.csv", series)
    res = []
    for s in series:
        res.append(_result(s.label, s.abs_error, ineq.EXPONENT_TOL, s.abs_error <= ineq.EXPONENT_TOL))
        res.append(_result(f"{s.label}_quadrature_shell", float(s.truncated), 0, not s.truncated))
    return res


def run_nonlinear(cfg: RunConfig, out: Path) -> list[dict]:
    grid = Grid.cube(cfg.grid)
    p = cfg.params
    state = init_random_smooth(grid, cfg.seed, cfg.amplitude, cfg.slope)
    ledger = diag.EnergyLedger(p)
    diag.energy_ledger_update(ledger, state)
    h3_0 = ledger.samples[0].h3
    worst = {"div": divergence_residual(state), "u1": max(diag.u1_inequality_ratio(state, k) for k in (1, 2, 3))}

    def observe(st):
        diag.energy_ledger_update(ledger, st)
        worst["div"] = max(worst["div"], divergence_residual(st))
        worst["u1"] = max(worst["u1"], max(diag.u1_inequality_ratio(st, k) for k in (1, 2, 3)))

    state = integrate(state, p, cfg.dt, cfg.t_final, callback=observe,
                      monitor=lambda st: diag.sobolev_norm(st, 3))
    ledger.write_csv(out / "energy_ledger.csv")
    ledger.write_json(out / "energy_summary.json")
    write_checkpoint(out / "final.chk", state, p)
    bal = float(np.abs(ledger.balance_residual).max())
    h3_ratio = float(ledger.h3.max() / h3_0) if h3_0 > 0 else 0.0
    return [
        _result("divergence_residual", worst["div"], 1e-10, worst["div"] <= 1e-10),
        _result("l2_balance_residual", bal, 1e-6, bal <= 1e-6),
        _result("h3_growth", h3_ratio, 2.0, h3_ratio <= 2.0),
        _result("u1_derivative_inequality", worst["u1"], 1.0, worst["u1"] <= 1.0),
    ]


def run_inequality_suite(cfg: RunConfig, out: Path) -> list[dict]:
    suites = []
    samples, box = ineq.agmon_samples(cfg.agmon_samples, cfg.seed)
    suites.append(ineq.check_agmon_1d(samples, box))
    trip, box3 = ineq.product_samples(12, 3, cfg.seed)
    suites.append(ineq.check_triple_product(trip, box3))
    quad, box3 = ineq.product_samples(12, 4, cfg.seed + 1)
    suites.append(ineq.check_quadruple_product(quad, box3, (0, 2)))
    # Minkowski ordering on every product-suite field; the result holds the worst ratio
    worst = 0.0
    n = 0
    g = Grid(*box3.n, *box3.length)
    for tup in trip + quad:
        for f in tup:
            a, b = diag.mixed_norm_l2x1_l1x23(f, g), diag.mixed_norm_l1x23_l2x1(f, g)
            worst = max(worst, a / b)
            n += 1
    suites.append(ineq.InequalityResult("minkowski_ordering", n, worst, 1.0 + 1e-10))
    suites += ineq.convolution_sweep("ID")
    suites += ineq.convolution_sweep("ED")
    ineq.write_results_csv(out / "inequality_suite.csv", suites)
    return [_result(r.name, r.worst_ratio, r.threshold, r.passed) for r in suites]


RUNNERS = {
    "kernel_audit": run_kernel_audit,
    "linear_decay": run_linear_decay,
    "nonlinear_run": run_nonlinear,
    "inequality_suite": run_inequality_suite,
}


def versions() -> dict:
    import platform

    import scipy

    return {"python": platform.python_version(), "numpy": np.__version__, "scipy": scipy.__version__}


def run(cfg: RunConfig) -> int:
    """Execute ``cfg.subcommand``; write CSVs and manifest.json; return the exit status."""
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(cfg.canonical())
    start = time.perf_counter()
    results = RUNNERS[cfg.subcommand](cfg, out)
    wall = time.perf_counter() - start
    failures = [r["name"] for r in results if r["hard"] and r["status"] == "fail"]
    manifest = {
        "config": {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(cfg).items()},
        "versions": versions(),
        "results": [{k: r[k] for k in ("name", "status", "metric", "threshold")} for r in results],
        "hard_failures": failures,
        "wall_seconds": wall,
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    return 1 if failures else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="anisomhd", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name.replace("_", "-"))
        sp.add_argument("--config", help="key = value configuration file")
        sp.add_argument("--mu", type=float)
        sp.add_argument("--eta", type=float)
        sp.add_argument("--grid", type=int)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out")
        sp.add_argument("--t-final", dest="t_final", type=float)
        sp.add_argument("--dt", type=float)
        sp.add_argument("--catalog", help="comma-separated catalog entries")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {k: getattr(args, k) for k in ("mu", "eta", "grid", "seed", "out", "t_final", "dt", "catalog")}
    overrides["subcommand"] = args.command.replace("-", "_")
    try:
        cfg = parse_config(args.config, overrides)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    status = run(cfg)
    if status:
        manifest = json.loads((Path(cfg.out) / "manifest.json").read_text())
        print(json.dumps({"hard_failures": manifest["hard_failures"]}), file=sys.stderr)
    return status


if __name__ == "__main__":
    sys.exit(main())
