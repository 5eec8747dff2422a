"""Command-line interface.

Subcommands: ``fit`` (estimate a series from CSV), ``bootstrap`` (residual
bootstrap MSE around a fit), ``simulate`` (canned or custom Monte Carlo
designs), ``risk`` (asymptotic risk curves over a noncentrality grid) and
``verify`` (the Gaussian-identity Monte Carlo suite).

Runs are driven by a JSON config file plus flag overrides; unknown config
keys are rejected.  Every artifact is written atomically (temp file then
rename) with deterministic formatting, so a rerun with the same config and
seed is byte-identical.  Exit codes: 0 ok, 2 config error, 3 numerical
failure, 4 verification failure.
"""

from __future__ import annotations

import argparse
import copy
import dataclasses
import json
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, KTooSmall, SteinbreakError
from .estimators import (
    build_plugin_matrices,
    fit_restricted,
    fit_unrestricted,
    make_james_stein,
    make_positive_part,
    residuals_of,
    shrinkage_estimate,
    wald_distance,
)
from .model import RegressionData, Restriction, build_design, read_series_csv
from .risk import (
    adr_james_stein,
    adr_positive_part,
    adr_restricted,
    adr_unrestricted,
    dominance_check,
    empirical_noncentrality,
    make_scaffold,
    make_weight,
    random_dominant_scaffold,
    scaffold_at_delta,
)
from .segmentation import (
    METHOD_EXHAUSTIVE,
    METHOD_REFINE,
    SearchConfig,
    SegmentMoments,
    find_breaks_restricted,
    find_breaks_unrestricted,
)
from .simulation import (
    SimDesign,
    build_case1,
    build_case2,
    histogram_rows,
    rmse_rows,
    run_monte_carlo,
)
from .stein_oracle import run_verification_suite

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_VERIFY = 4

_SEARCH_ALIASES = {
    "exhaustive": METHOD_EXHAUSTIVE,
    "refine": METHOD_REFINE,
    METHOD_REFINE: METHOD_REFINE,
}

# key -> (type, default); REQUIRED means the key must be present.
REQUIRED = object()

# One schema serves fit and bootstrap so a single config file drives both
# (fit simply ignores the bootstrap replicate count).
_FIT_KEYS = {
    "csv": (str, REQUIRED),
    "m": (int, 1),
    "basis": (str, "none"),
    "restriction": (dict, REQUIRED),
    "min_seg_frac": (float, 0.05),
    "omega": (str, "hc0"),
    "hac_bandwidth": (int, None),
    "restricted_search": (str, "exhaustive"),
    "exhaustive_budget": (int, 200_000),
    "shrink_partition": (str, "ue"),
    "estimators": (list, ["ue", "re", "js", "pp"]),
    "bootstrap_b": (int, 500),
    "seed": (int, 0),
    "out": (str, "out"),
}

SCHEMAS: dict[str, dict] = {
    "fit": dict(_FIT_KEYS),
    "bootstrap": dict(_FIT_KEYS),
    "simulate": {
        "case": (int, None),
        "t": (int, 100),
        "reps": (int, 1000),
        "sigma2_grid": (list, [1.0, 1.5, 2.0]),
        "restricted_search": (str, "refine"),
        "redraw_regressors": (bool, True),
        "min_seg_frac": (float, 0.05),
        "m": (int, None),
        "q": (int, None),
        "true_breaks": (list, None),
        "delta0": (list, None),
        "restriction": (dict, None),
        "seed": (int, 0),
        "out": (str, "out"),
    },
    "risk": {
        "scaffold": (dict, {"kind": "random-dominant", "n": 8, "k": 4}),
        "w_star": (list, None),
        "delta_start": (float, 0.0),
        "delta_stop": (float, 20.0),
        "delta_points": (int, 41),
        "mu_direction": (list, None),
        "seed": (int, 0),
        "out": (str, "out"),
    },
    "verify": {
        "n_samples": (int, 1_000_000),
        "n_setups": (int, 5),
        "negative_control": (bool, True),
        "seed": (int, 2),
        "out": (str, "out"),
    },
}

_FLAG_TO_KEY = {
    "seed": "seed",
    "out": "out",
    "case": "case",
    "t": "t",
    "reps": "reps",
    "bootstrap_b": "bootstrap_b",
    "omega": "omega",
    "restricted_search": "restricted_search",
    "csv": "csv",
}


@dataclass
class RunConfig:
    """Validated configuration for one subcommand."""

    subcommand: str
    values: dict

    @classmethod
    def from_dict(cls, subcommand: str, raw: dict) -> "RunConfig":
        if subcommand not in SCHEMAS:
            raise ConfigError(f"unknown subcommand {subcommand!r}")
        schema = SCHEMAS[subcommand]
        unknown = sorted(set(raw) - set(schema))
        if unknown:
            raise ConfigError(f"unknown config keys for {subcommand}: {unknown}")
        values = {}
        for key, (typ, default) in schema.items():
            if key in raw:
                value = raw[key]
                if value is not None and typ is float and isinstance(value, int):
                    value = float(value)
                if value is not None and not isinstance(value, typ):
                    raise ConfigError(
                        f"config key {key!r} must be {typ.__name__}, got {type(value).__name__}"
                    )
                values[key] = copy.deepcopy(value)
            elif default is REQUIRED:
                raise ConfigError(f"config key {key!r} is required for {subcommand}")
            else:
                values[key] = copy.deepcopy(default)
        return cls(subcommand=subcommand, values=values)

    def to_dict(self) -> dict:
        out = {"subcommand": self.subcommand}
        for key in SCHEMAS[self.subcommand]:
            out[key] = self.values[key]
        return out


# ---------------------------------------------------------------------------
# Deterministic artifact writing


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def atomic_write_text(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    atomic_write_text(path, "\n".join(lines) + "\n")


def write_manifest(out_dir: Path, cfg: RunConfig) -> None:
    record = {
        "config": cfg.to_dict(),
        "package": "steinbreak",
        "version": __version__,
    }
    atomic_write_text(out_dir / "manifest.json", json.dumps(record, sort_keys=True, indent=2) + "\n")


# ---------------------------------------------------------------------------
# Model building blocks shared by fit and bootstrap


def power_trend_basis(n_obs: int) -> np.ndarray:
    """Regressors (1, u, u^1.5, u^2) with u = t/T.

    Scaling time to (0, 1] keeps the segment Gram matrices well conditioned
    at century-length samples; it only rescales the trend coefficients and
    leaves break dates and the zero-restriction on the curvature terms
    unchanged.
    """
    u = np.arange(1, n_obs + 1) / n_obs
    return np.column_stack([np.ones(n_obs), u, u**1.5, u**2])


def restriction_from_spec(spec: dict, m: int, q: int) -> Restriction:
    """Build a restriction from an explicit matrix or a named pattern.

    Patterns: ``linear-trend`` (zero the u^1.5 and u^2 coefficients in every
    segment; needs q = 4), ``equal-segments`` (all q coefficients equal
    between two segments), ``zero-segment`` (all q coefficients of one
    segment are zero).
    """
    n = (m + 1) * q
    if "matrix" in spec:
        unknown = sorted(set(spec) - {"matrix", "rhs"})
        if unknown:
            raise ConfigError(f"unknown restriction keys: {unknown}")
        matrix = np.asarray(spec["matrix"], dtype=float)
        rhs = np.asarray(spec.get("rhs", np.zeros(matrix.shape[0])), dtype=float)
        return Restriction(matrix=matrix, rhs=rhs)
    if "pattern" not in spec:
        raise ConfigError("restriction needs either 'matrix' or 'pattern'")
    pattern = spec["pattern"]
    if pattern == "linear-trend":
        unknown = sorted(set(spec) - {"pattern"})
        if unknown:
            raise ConfigError(f"unknown restriction keys: {unknown}")
        if q != 4:
            raise ConfigError("linear-trend restriction needs the 4-column trend basis")
        rows = []
        for seg in range(m + 1):
            for coef in (2, 3):
                row = np.zeros(n)
                row[seg * q + coef] = 1.0
                rows.append(row)
        return Restriction(matrix=np.array(rows), rhs=np.zeros(len(rows)))
    if pattern == "equal-segments":
        unknown = sorted(set(spec) - {"pattern", "segments"})
        if unknown:
            raise ConfigError(f"unknown restriction keys: {unknown}")
        try:
            i, j = (int(v) for v in spec["segments"])
        except (KeyError, TypeError, ValueError):
            raise ConfigError("equal-segments needs 'segments': [i, j]") from None
        if not (1 <= i <= m + 1 and 1 <= j <= m + 1 and i != j):
            raise ConfigError(f"segments must be distinct and in 1..{m + 1}")
        rows = np.zeros((q, n))
        for coef in range(q):
            rows[coef, (i - 1) * q + coef] = 1.0
            rows[coef, (j - 1) * q + coef] = -1.0
        return Restriction(matrix=rows, rhs=np.zeros(q))
    if pattern == "zero-segment":
        unknown = sorted(set(spec) - {"pattern", "segment"})
        if unknown:
            raise ConfigError(f"unknown restriction keys: {unknown}")
        try:
            i = int(spec["segment"])
        except (KeyError, TypeError, ValueError):
            raise ConfigError("zero-segment needs 'segment': i") from None
        if not 1 <= i <= m + 1:
            raise ConfigError(f"segment must be in 1..{m + 1}")
        rows = np.zeros((q, n))
        for coef in range(q):
            rows[coef, (i - 1) * q + coef] = 1.0
        return Restriction(matrix=rows, rhs=np.zeros(q))
    raise ConfigError(f"unknown restriction pattern {pattern!r}")


def _load_fit_data(cfg: RunConfig) -> RegressionData:
    _, y, z = read_series_csv(cfg.values["csv"])
    if cfg.values["basis"] == "power-trend":
        z = power_trend_basis(len(y))
    elif cfg.values["basis"] != "none":
        raise ConfigError(f"unknown basis {cfg.values['basis']!r}")
    elif z is None:
        raise ConfigError("CSV has no regressor columns and no basis was requested")
    return RegressionData(y=y, z=z)


def _fit_pipeline(cfg: RunConfig, data: RegressionData) -> dict:
    """Breaks, fits, plug-ins and shrinkage estimates for one dataset."""
    v = cfg.values
    m, q = v["m"], data.n_regressors
    restriction = restriction_from_spec(v["restriction"], m, q)
    method = _SEARCH_ALIASES.get(v["restricted_search"])
    if method is None:
        raise ConfigError(f"unknown restricted_search {v['restricted_search']!r}")
    stats = SegmentMoments(data)
    cfg_dp = SearchConfig(m=m, min_seg_frac=v["min_seg_frac"])
    cfg_re = SearchConfig(
        m=m,
        min_seg_frac=v["min_seg_frac"],
        method=method,
        exhaustive_budget=v["exhaustive_budget"],
    )
    ue_search = find_breaks_unrestricted(data, cfg_dp, stats=stats)
    re_search = find_breaks_restricted(data, restriction, cfg_re, stats=stats)
    ue_fit = fit_unrestricted(data, ue_search.partition)
    re_fit = fit_restricted(data, re_search.partition, restriction)

    shrink_part = ue_search.partition if v["shrink_partition"] == "ue" else re_search.partition
    ue_at_shrink = ue_fit if shrink_part == ue_search.partition else fit_unrestricted(data, shrink_part)
    re_at_shrink = re_fit if shrink_part == re_search.partition else fit_restricted(data, shrink_part, restriction)
    design = build_design(data, shrink_part)
    plugin = build_plugin_matrices(
        design,
        residuals_of(data, ue_at_shrink),
        restriction,
        method=v["omega"],
        bandwidth=v["hac_bandwidth"],
    )
    psi = wald_distance(ue_at_shrink, re_at_shrink, plugin, data.n_obs)
    estimates = {"ue": ue_fit, "re": re_fit}
    k = restriction.k
    wanted = v["estimators"]
    if "js" in wanted:
        estimates["js"] = shrinkage_estimate(
            ue_at_shrink, re_at_shrink, plugin, make_james_stein(k), data.n_obs
        )
    if "pp" in wanted:
        estimates["pp"] = shrinkage_estimate(
            ue_at_shrink, re_at_shrink, plugin, make_positive_part(k), data.n_obs
        )
    return {
        "restriction": restriction,
        "ue_search": ue_search,
        "re_search": re_search,
        "estimates": estimates,
        "psi": psi,
        "k": k,
        "plugin": plugin,
    }


# ---------------------------------------------------------------------------
# Subcommands


def cmd_fit(cfg: RunConfig) -> int:
    data = _load_fit_data(cfg)
    out = Path(cfg.values["out"])
    out.mkdir(parents=True, exist_ok=True)
    result = _fit_pipeline(cfg, data)
    n = (cfg.values["m"] + 1) * data.n_regressors
    rows = []
    for name in cfg.values["estimators"]:
        est = result["estimates"].get(name)
        if est is not None:
            rows.append([name] + [float(v) for v in est.delta])
    write_csv(out / "estimates.csv", ["estimator"] + [f"coef_{i + 1}" for i in range(n)], rows)
    break_rows = []
    for label, search in (("ue", result["ue_search"]), ("re", result["re_search"])):
        for j, b in enumerate(search.partition.breaks):
            break_rows.append([label, j + 1, int(b)])
    write_csv(out / "breaks.csv", ["search", "break_index", "time"], break_rows)
    stat_rows = [
        ["k", result["k"]],
        ["psi", float(result["psi"])],
        ["delta_hat", empirical_noncentrality(result["psi"], result["k"])],
        ["T", data.n_obs],
        ["q", data.n_regressors],
        ["m", cfg.values["m"]],
        ["ssr_ue", float(result["estimates"]["ue"].ssr)],
        ["ssr_re", float(result["estimates"]["re"].ssr)],
        ["omega_method", result["plugin"].omega_method],
        ["restricted_is_global", result["re_search"].is_global],
    ]
    write_csv(out / "fit_stats.csv", ["key", "value"], stat_rows)
    write_manifest(out, cfg)
    print(f"wrote {out}/estimates.csv, breaks.csv, fit_stats.csv")
    return EXIT_OK


def cmd_bootstrap(cfg: RunConfig) -> int:
    data = _load_fit_data(cfg)
    out = Path(cfg.values["out"])
    out.mkdir(parents=True, exist_ok=True)
    base = _fit_pipeline(cfg, data)
    resid = residuals_of(data, base["estimates"]["ue"])
    fitted = data.y - resid
    centered = resid - resid.mean()
    n_b = cfg.values["bootstrap_b"]
    seed = cfg.values["seed"]
    names = list(cfg.values["estimators"])
    sums = {name: 0.0 for name in names}
    failures = 0
    for b in range(n_b):
        rng = np.random.default_rng(np.random.SeedSequence((seed, b)))
        u_star = rng.choice(centered, size=data.n_obs, replace=True)
        data_b = RegressionData(y=fitted + u_star, z=data.z)
        try:
            rerun = _fit_pipeline(cfg, data_b)
        except SteinbreakError:
            failures += 1
            continue
        for name in names:
            diff = rerun["estimates"][name].delta - base["estimates"][name].delta
            sums[name] += float(diff @ diff)
    n_ok = n_b - failures
    if n_ok == 0:
        raise SteinbreakError("all bootstrap replicates failed")
    mse = {name: sums[name] / n_ok for name in names}
    series = Path(cfg.values["csv"]).stem
    header = ["series", "changepoints_ue", "changepoints_re"]
    row = [
        series,
        "|".join(str(b) for b in base["ue_search"].partition.breaks),
        "|".join(str(b) for b in base["re_search"].partition.breaks),
    ]
    for name in names:
        header.append(f"mse_{name}")
        row.append(float(mse[name]))
    header += ["n_fail", "b"]
    row += [failures, n_b]
    write_csv(out / "table1.csv", header, [row])
    write_manifest(out, cfg)
    print(f"wrote {out}/table1.csv")
    return EXIT_OK


def _design_from_config(cfg: RunConfig) -> SimDesign:
    v = cfg.values
    search = _SEARCH_ALIASES.get(v["restricted_search"])
    if search is None:
        raise ConfigError(f"unknown restricted_search {v['restricted_search']!r}")
    common = dict(
        n_reps=v["reps"],
        seed=v["seed"],
    )
    if v["case"] in (1, 2):
        builder = build_case1 if v["case"] == 1 else build_case2
        design = builder(n_obs=v["t"], **common)
    elif v["case"] is None:
        needed = ("m", "q", "true_breaks", "delta0", "restriction")
        missing = [key for key in needed if v[key] is None]
        if missing:
            raise ConfigError(f"custom design needs keys {missing}")
        restriction = restriction_from_spec(v["restriction"], v["m"], v["q"])
        design = SimDesign(
            m=v["m"],
            q=v["q"],
            n_obs=v["t"],
            true_breaks=tuple(int(b) for b in v["true_breaks"]),
            delta0=np.asarray(v["delta0"], dtype=float),
            restriction=restriction,
            **common,
        )
    else:
        raise ConfigError(f"case must be 1, 2 or null, got {v['case']}")
    return dataclasses.replace(
        design,
        sigma2_grid=tuple(float(s) for s in v["sigma2_grid"]),
        restricted_search=search,
        redraw_regressors=v["redraw_regressors"],
        min_seg_frac=v["min_seg_frac"],
    )


def cmd_simulate(cfg: RunConfig) -> int:
    design = _design_from_config(cfg)
    out = Path(cfg.values["out"])
    out.mkdir(parents=True, exist_ok=True)
    result = run_monte_carlo(design)
    write_csv(
        out / "rmse.csv",
        ["sigma2", "estimator", "rmse", "n_fail"],
        [[r["sigma2"], r["estimator"], float(r["rmse"]), r["n_fail"]] for r in rmse_rows(result)],
    )
    write_csv(
        out / "break_histogram.csv",
        ["case", "T", "search", "sigma2", "break_index", "estimated_time", "count"],
        [
            [r["case"], r["T"], r["search"], r["sigma2"], r["break_index"], r["estimated_time"], r["count"]]
            for r in histogram_rows(result)
        ],
    )
    write_manifest(out, cfg)
    if result.flagged:
        print("warning: failure rate above 1% at some noise level")
    print(f"wrote {out}/rmse.csv, break_histogram.csv")
    return EXIT_OK


def cmd_risk(cfg: RunConfig) -> int:
    v = cfg.values
    spec = v["scaffold"]
    kind = spec.get("kind", "random-dominant")
    out = Path(v["out"])
    out.mkdir(parents=True, exist_ok=True)
    if kind == "random-dominant":
        unknown = sorted(set(spec) - {"kind", "n", "k"})
        if unknown:
            raise ConfigError(f"unknown scaffold keys: {unknown}")
        scaffold, weight = random_dominant_scaffold(
            int(spec.get("n", 8)), int(spec.get("k", 4)), v["seed"]
        )
    elif kind == "explicit":
        unknown = sorted(set(spec) - {"kind", "gamma", "omega", "matrix", "rhs"})
        if unknown:
            raise ConfigError(f"unknown scaffold keys: {unknown}")
        try:
            gamma = np.asarray(spec["gamma"], dtype=float)
            omega = np.asarray(spec["omega"], dtype=float)
            matrix = np.asarray(spec["matrix"], dtype=float)
        except KeyError as exc:
            raise ConfigError(f"explicit scaffold needs key {exc}") from None
        rhs = np.asarray(spec.get("rhs", np.zeros(matrix.shape[0])), dtype=float)
        restriction = Restriction(matrix=matrix, rhs=rhs)
        mu = np.ones(restriction.k)
        scaffold = make_scaffold(gamma, omega, restriction, mu)
        w_star = None if v["w_star"] is None else np.asarray(v["w_star"], dtype=float)
        weight = make_weight(scaffold.a, w_star)
    else:
        raise ConfigError(f"unknown scaffold kind {kind!r}")
    if scaffold.k <= 2:
        raise KTooSmall(f"risk curves need k > 2, got k={scaffold.k}")
    direction = None if v["mu_direction"] is None else np.asarray(v["mu_direction"], dtype=float)
    grid = np.linspace(v["delta_start"], v["delta_stop"], v["delta_points"])
    holds = dominance_check(scaffold, weight).holds
    rows = []
    for delta in grid:
        sc = scaffold_at_delta(scaffold, float(delta), direction=direction)
        rows.append(
            [
                float(delta),
                adr_unrestricted(sc, weight),
                adr_restricted(sc, weight),
                adr_james_stein(sc, weight),
                adr_positive_part(sc, weight),
                holds,
            ]
        )
    write_csv(
        out / "adr_curves.csv",
        ["delta", "adr_ue", "adr_re", "adr_js", "adr_pp", "dominance_holds"],
        rows,
    )
    write_manifest(out, cfg)
    print(f"wrote {out}/adr_curves.csv")
    return EXIT_OK


def cmd_verify(cfg: RunConfig) -> int:
    v = cfg.values
    out = Path(v["out"])
    out.mkdir(parents=True, exist_ok=True)
    entries = run_verification_suite(
        n_samples=v["n_samples"],
        seed=v["seed"],
        n_setups=v["n_setups"],
        include_negative_control=v["negative_control"],
    )
    rows = []
    any_bad = False
    for entry in entries:
        status = "ok" if entry.ok else "FAIL"
        any_bad = any_bad or not entry.ok
        rows.append(
            [
                entry.setup_index,
                entry.identity,
                entry.h_name,
                float(entry.check.sigma_excess()),
                float(entry.check.max_abs_err),
                "fail" if entry.expect_fail else "pass",
                status,
            ]
        )
        tag = "negative-control " if entry.expect_fail else ""
        print(
            f"{status}: {tag}setup {entry.setup_index} {entry.identity} {entry.h_name} "
            f"({entry.check.sigma_excess():.2f} sigma)"
        )
    write_csv(
        out / "verify_report.csv",
        ["setup", "identity", "h", "sigma_excess", "max_abs_err", "expected", "status"],
        rows,
    )
    write_manifest(out, cfg)
    return EXIT_VERIFY if any_bad else EXIT_OK


# ---------------------------------------------------------------------------
# Entry point


_COMMANDS = {
    "fit": cmd_fit,
    "bootstrap": cmd_bootstrap,
    "simulate": cmd_simulate,
    "risk": cmd_risk,
    "verify": cmd_verify,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="steinbreak",
        description="Break-point regression with Stein-rule shrinkage estimators",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=str, default=None, help="JSON config file")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", type=str, default=None)
        if name in ("fit", "bootstrap"):
            p.add_argument("--csv", type=str, default=None)
            p.add_argument("--omega", choices=["hc0", "hac"], default=None)
            p.add_argument(
                "--restricted-search",
                dest="restricted_search",
                choices=["exhaustive", "refine"],
                default=None,
            )
        if name == "bootstrap":
            p.add_argument("--bootstrap-b", dest="bootstrap_b", type=int, default=None)
        if name == "simulate":
            p.add_argument("--case", type=int, choices=[1, 2], default=None)
            p.add_argument("--t", type=int, default=None)
            p.add_argument("--reps", type=int, default=None)
            p.add_argument(
                "--restricted-search",
                dest="restricted_search",
                choices=["exhaustive", "refine"],
                default=None,
            )
        if name == "verify":
            p.add_argument("--n-samples", dest="n_samples", type=int, default=None)
    return parser


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    raw: dict = {}
    if args.config is not None:
        try:
            raw = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config file: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config file must hold a JSON object")
        raw.pop("subcommand", None)
    for flag in ("n_samples",):
        if getattr(args, flag, None) is not None:
            raw[flag] = getattr(args, flag)
    for flag, key in _FLAG_TO_KEY.items():
        if getattr(args, flag, None) is not None:
            raw[key] = getattr(args, flag)
    return RunConfig.from_dict(args.subcommand, raw)


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = _config_from_args(args)
        return _COMMANDS[args.subcommand](cfg)
    except ConfigError as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return EXIT_CONFIG
    except SteinbreakError as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
