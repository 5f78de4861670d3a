"""Batch command-line front door.

Commands: design | calibrate | simulate | table.  Flags may be seeded from
a flat key=value config file (section prefixes chart.*, cov.*, scenario.*);
explicit flags override file values.  Output is CSV on stdout or --out,
with one leading '#' comment carrying the run metadata.  Exit codes:
0 success, 1 computation failure, 2 usage error.
"""

import argparse
import math
import sys

from . import __version__
from .charts import ChartConfig, VARIANTS
from .covariance import CovModel, build_model
from .design import (CalibrationError, calibrate_by_simulation, design_mma,
                     optimal_mewma, solve_glrt_threshold,
                     solve_mcusum_threshold, solve_mewma_threshold,
                     solve_mma_threshold, sr_thresholds)
from .simulate import (CSV_COLUMNS, DEFAULT_HORIZON, MeanPattern, Scenario,
                       chart_param_string, estimate_arl0, estimate_detection,
                       reproduce_table)

_CONFIG_KEYS = {
    "seed": int, "reps": int, "threads": int, "out": str,
    "chart.variant": str, "chart.beta": float, "chart.threshold": float,
    "chart.window": int, "chart.k_ref": float, "chart.mode": str,
    "chart.mode_param": float,
    "cov.kind": str, "cov.n": int, "cov.sigma_e2": float, "cov.theta": float,
    "cov.gamma": str,
    "scenario.nu": int, "scenario.pattern": str, "scenario.strength": float,
    "scenario.k": int, "scenario.horizon": int,
}

# config-file key -> argparse dest
_KEY_TO_DEST = {k: k.replace(".", "_") for k in _CONFIG_KEYS}


def _read_config_file(path: str) -> dict:
    values = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value, got {raw.strip()!r}")
            key, val = (part.strip() for part in line.split("=", 1))
            if key not in _CONFIG_KEYS:
                raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
            values[_KEY_TO_DEST[key]] = _CONFIG_KEYS[key](val)
    return values


def _chart_flags(parser):
    g = parser.add_argument_group("chart")
    g.add_argument("--variant", dest="chart_variant", choices=VARIANTS)
    g.add_argument("--beta", dest="chart_beta", type=float)
    g.add_argument("--threshold", dest="chart_threshold", type=float)
    g.add_argument("--window", dest="chart_window", type=int)
    g.add_argument("--k-ref", dest="chart_k_ref", type=float)
    g.add_argument("--mode", dest="chart_mode", choices=("none", "hard", "soft"))
    g.add_argument("--mode-param", dest="chart_mode_param", type=float)


def _cov_flags(parser):
    g = parser.add_argument_group("covariance")
    g.add_argument("--cov", dest="cov_kind", choices=("identity", "intraclass", "loading"))
    g.add_argument("--n", dest="cov_n", type=int)
    g.add_argument("--sigma-e2", dest="cov_sigma_e2", type=float)
    g.add_argument("--theta", dest="cov_theta", type=float)
    g.add_argument("--gamma", dest="cov_gamma", help="comma-separated loading vector")


def _scenario_flags(parser):
    g = parser.add_argument_group("scenario")
    g.add_argument("--nu", dest="scenario_nu", type=int,
                   help="change point; omit for a null run")
    g.add_argument("--pattern", dest="scenario_pattern",
                   choices=("single_channel", "uniform", "k_sparse", "harmonic"))
    g.add_argument("--strength", dest="scenario_strength", type=float)
    g.add_argument("--k-changed", dest="scenario_k", type=int)
    g.add_argument("--horizon", dest="scenario_horizon", type=int)


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value config file")
    common.add_argument("--seed", type=int)
    common.add_argument("--reps", type=int)
    common.add_argument("--threads", type=int)
    common.add_argument("--out", help="CSV output path (default stdout)")

    parser = argparse.ArgumentParser(
        prog="seqwatch",
        description="design, calibrate and simulate sequential detection charts")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("design", parents=[common],
                       help="closed-form / quadrature threshold design")
    p.add_argument("--chart", required=True,
                   choices=("mewma", "mma", "glrt", "mcusum", "sr"))
    p.add_argument("--arl0", type=float, required=True)
    p.add_argument("--beta", type=float)
    p.add_argument("--signal2", type=float,
                   help="reference Mahalanobis signal strength squared")
    p.add_argument("--window", type=int)
    p.add_argument("--delta", type=float, help="reference signal norm")
    p.add_argument("--n", type=int, required=True)

    p = sub.add_parser("calibrate", parents=[common],
                       help="tune a threshold by simulation")
    _chart_flags(p)
    _cov_flags(p)
    p.add_argument("--arl0", type=float, required=True)

    p = sub.add_parser("simulate", parents=[common],
                       help="estimate ARL0 or FAR/SADDT for one configuration")
    _chart_flags(p)
    _cov_flags(p)
    _scenario_flags(p)

    p = sub.add_parser("table", parents=[common],
                       help="reproduce a published comparison table")
    p.add_argument("--id", dest="table_id", type=int, required=True,
                   choices=(1, 2, 3, 4, 5))
    return parser


def _merged(args, parser) -> dict:
    """Config-file values overridden by explicit flags."""
    merged = {}
    if getattr(args, "config", None):
        try:
            merged.update(_read_config_file(args.config))
        except (OSError, ValueError) as exc:
            parser.error(str(exc))
    for key, val in vars(args).items():
        if val is not None:
            merged[key] = val
    return merged


def _build_chart(values, parser) -> ChartConfig:
    if "chart_variant" not in values:
        parser.error("chart.variant is required")
    if "chart_threshold" not in values:
        parser.error("chart.threshold is required")
    try:
        return ChartConfig(
            variant=values["chart_variant"],
            threshold=values["chart_threshold"],
            beta=values.get("chart_beta"),
            window=values.get("chart_window"),
            k_ref=values.get("chart_k_ref"),
            threshold_mode=values.get("chart_mode", "none"),
            mode_param=values.get("chart_mode_param", 0.0),
        )
    except ValueError as exc:
        parser.error(str(exc))


def _build_model(values, parser) -> CovModel:
    if "cov_n" not in values:
        parser.error("cov.n is required")
    gamma = values.get("cov_gamma")
    if isinstance(gamma, str):
        gamma = [float(tok) for tok in gamma.split(",") if tok.strip()]
    try:
        return build_model(
            kind=values.get("cov_kind", "identity"),
            n=values["cov_n"],
            sigma_e2=values.get("cov_sigma_e2", 1.0),
            theta=values.get("cov_theta", 0.0),
            gamma=gamma,
        )
    except ValueError as exc:
        parser.error(str(exc))


def _build_pattern(values, parser) -> MeanPattern | None:
    kind = values.get("scenario_pattern")
    if kind is None:
        return None
    try:
        return MeanPattern(kind=kind,
                           strength=values.get("scenario_strength", 0.0),
                           k=values.get("scenario_k", 0))
    except ValueError as exc:
        parser.error(str(exc))


def parse_args(argv):
    """Parse flags (and config file) into a validated run description.

    Returns a dict with everything ``execute`` needs; raises SystemExit(2)
    on any usage problem, before any computation starts.
    """
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.error("a command is required (design | calibrate | simulate | table)")
    values = _merged(args, parser)
    cfg = {
        "command": args.command,
        "seed": values.get("seed", 0),
        "reps": values.get("reps", 10_000),
        "threads": values.get("threads"),
        "out": values.get("out"),
    }
    if args.command == "design":
        cfg.update(chart_kind=values["chart"], n=values["n"], arl0=values["arl0"],
                   beta=values.get("beta"), signal2=values.get("signal2"),
                   window=values.get("window"), delta=values.get("delta"))
        if cfg["arl0"] <= 1.0:
            parser.error("--arl0 must exceed 1")
    elif args.command in ("calibrate", "simulate"):
        chart = _build_chart(values, parser)
        model = _build_model(values, parser)
        if chart.threshold_mode != "none" and model.kind != "identity":
            parser.error("hard/soft thresholding requires the identity covariance")
        cfg.update(chart=chart, model=model)
        if args.command == "calibrate":
            cfg["arl0"] = values["arl0"]
            if cfg["reps"] < 1000:
                parser.error("calibrate needs --reps >= 1000")
        else:
            nu = values.get("scenario_nu")
            pattern = _build_pattern(values, parser)
            if nu is not None and pattern is None:
                parser.error("scenario.pattern is required when scenario.nu is set")
            cfg.update(nu=nu, pattern=pattern,
                       horizon=values.get("scenario_horizon", DEFAULT_HORIZON))
    else:
        cfg["table_id"] = values["table_id"]
    return cfg


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def _emit(lines, out):
    text = "\n".join(lines) + "\n"
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _meta_line(cfg) -> str:
    return (f"# seqwatch {__version__} command={cfg['command']} "
            f"seed={cfg['seed']} reps={cfg['reps']}")


def _design_rows(cfg) -> list[dict]:
    kind, n, arl0 = cfg["chart_kind"], cfg["n"], cfg["arl0"]
    if kind == "mewma":
        if cfg.get("beta") is not None:
            beta = cfg["beta"]
            b = solve_mewma_threshold(n, beta, arl0, corrected=True)
            b_raw = solve_mewma_threshold(n, beta, arl0, corrected=False)
            params = (f"n={n};beta={beta:g};b={b:.6g};b_raw={b_raw:.6g};"
                      f"threshold={b * b * beta / (2 - beta):.6g}")
            return [{"chart": "mewma", "params": params, "predicted_arl0": arl0,
                     "predicted_saddt": None, "method": "quadrature"}]
        if cfg.get("signal2") is None:
            raise ValueError("design mewma needs --beta or --signal2")
        res = optimal_mewma(n, arl0, cfg["signal2"])
        params = ";".join(f"{k}={v:.6g}" for k, v in res.params.items())
        return [{"chart": res.chart, "params": f"n={n};" + params,
                 "predicted_arl0": res.predicted_arl0,
                 "predicted_saddt": res.predicted_saddt, "method": res.method}]
    if kind == "mma":
        if cfg.get("window") is not None:
            h = solve_mma_threshold(n, cfg["window"], arl0)
            params = f"n={n};window={cfg['window']};h={h:.6g};threshold={h * h:.6g}"
            return [{"chart": "mma", "params": params, "predicted_arl0": arl0,
                     "predicted_saddt": None, "method": "closed_form"}]
        if cfg.get("signal2") is None:
            raise ValueError("design mma needs --window or --signal2")
        res = design_mma(n, arl0, cfg["signal2"])
        params = ";".join(f"{k}={v:.6g}" for k, v in res.params.items())
        return [{"chart": res.chart, "params": f"n={n};" + params,
                 "predicted_arl0": res.predicted_arl0,
                 "predicted_saddt": res.predicted_saddt, "method": res.method}]
    if kind == "glrt":
        if cfg.get("window") is None:
            raise ValueError("design glrt needs --window")
        b = solve_glrt_threshold(n, cfg["window"], arl0)
        params = (f"n={n};window={cfg['window']};b={b:.6g};"
                  f"threshold={b * b:.6g};note=calibration_recommended")
        return [{"chart": "glrt", "params": params, "predicted_arl0": arl0,
                 "predicted_saddt": None, "method": "closed_form"}]
    if kind == "mcusum":
        if cfg.get("delta") is None:
            raise ValueError("design mcusum needs --delta")
        d = solve_mcusum_threshold(n, cfg["delta"], arl0)
        params = (f"n={n};k_ref={cfg['delta']:g};threshold={d:.6g};"
                  f"note=formula_underestimates_use_calibrate")
        return [{"chart": "mcusum_windowed", "params": params,
                 "predicted_arl0": arl0, "predicted_saddt": None,
                 "method": "closed_form"}]
    if cfg.get("delta") is None:
        raise ValueError("design sr needs --delta")
    b_mix, b_sum = sr_thresholds(n, arl0, cfg["delta"])
    params = (f"n={n};delta={cfg['delta']:g};B_mixture={b_mix:.6g};"
              f"B_sum={b_sum:.6g}")
    return [{"chart": "sr", "params": params, "predicted_arl0": arl0,
             "predicted_saddt": None, "method": "closed_form"}]


_DESIGN_COLUMNS = ("chart", "params", "predicted_arl0", "predicted_saddt", "method")


def _summary_row(cfg, summary, pattern_kind, mu_label, kk) -> dict:
    return {
        "table_id": None, "chart": cfg["chart"].variant,
        "variant_params": chart_param_string(cfg["chart"], cfg["model"],
                                             pattern_kind, cfg["seed"],
                                             nu=cfg.get("nu")),
        "theta": cfg["model"].theta, "K": kk, "mu": mu_label,
        "reps": cfg["reps"], "arl0": summary.arl0, "arl0_se": summary.arl0_se,
        "far": summary.far, "saddt": summary.saddt,
        "saddt_se": summary.saddt_se, "censored": summary.censored,
    }


def execute(cfg) -> int:
    """Run a parsed command; returns the process exit code."""
    try:
        if cfg["command"] == "design":
            rows = _design_rows(cfg)
            lines = [_meta_line(cfg), ",".join(_DESIGN_COLUMNS)]
            lines += [",".join(_fmt(r[c]) for c in _DESIGN_COLUMNS) for r in rows]
            _emit(lines, cfg["out"])
            return 0
        if cfg["command"] == "calibrate":
            res = calibrate_by_simulation(cfg["chart"], cfg["model"], cfg["arl0"],
                                          reps=cfg["reps"], seed=cfg["seed"],
                                          threads=cfg["threads"])
            params = ";".join(f"{k}={v:.8g}" for k, v in res.params.items())
            lines = [_meta_line(cfg), ",".join(_DESIGN_COLUMNS),
                     ",".join(_fmt(v) for v in
                              (res.chart, params, res.predicted_arl0,
                               res.predicted_saddt, res.method))]
            _emit(lines, cfg["out"])
            return 0
        if cfg["command"] == "simulate":
            if cfg.get("nu") is None:
                summary = estimate_arl0(cfg["chart"], cfg["model"], cfg["reps"],
                                        cfg["seed"], threads=cfg["threads"],
                                        horizon=cfg["horizon"])
                row = _summary_row(cfg, summary, "null", 0.0, None)
            else:
                scen = Scenario(n=cfg["model"].n, nu=cfg["nu"],
                                pattern=cfg["pattern"], model=cfg["model"],
                                horizon=cfg["horizon"])
                summary = estimate_detection(cfg["chart"], scen, cfg["reps"],
                                             cfg["seed"], threads=cfg["threads"])
                pat = cfg["pattern"]
                row = _summary_row(cfg, summary, pat.kind, pat.strength,
                                   pat.k if pat.kind == "k_sparse" else None)
            lines = [_meta_line(cfg), ",".join(CSV_COLUMNS),
                     ",".join(_fmt(row[c]) for c in CSV_COLUMNS)]
            _emit(lines, cfg["out"])
            return 0
        rows = reproduce_table(cfg["table_id"], reps=cfg["reps"],
                               seed=cfg["seed"], threads=cfg["threads"])
        lines = [_meta_line(cfg), ",".join(CSV_COLUMNS)]
        lines += [",".join(_fmt(r[c]) for c in CSV_COLUMNS) for r in rows]
        _emit(lines, cfg["out"])
        return 0
    except (CalibrationError, ValueError, ArithmeticError) as exc:
        print(f"seqwatch: error: {exc}", file=sys.stderr)
        return 1


def config_from_row(row: dict, reps: int | None = None) -> dict:
    """Rebuild an executable simulate config from one table CSV row.

    Inverse of the ``variant_params`` encoding, so any emitted row can be
    re-run standalone and must reproduce its numbers.
    """
    params = dict(item.split("=", 1) for item in row["variant_params"].split(";"))
    chart = ChartConfig(
        variant=params["variant"],
        threshold=float(params["threshold"]),
        beta=float(params["beta"]) if "beta" in params else None,
        window=int(params["window"]) if "window" in params else None,
        k_ref=float(params["k_ref"]) if "k_ref" in params else None,
        threshold_mode=params.get("mode", "none"),
        mode_param=float(params.get("mode_param", 0.0)),
    )
    n = int(params["n"])
    model = build_model(params["cov"], n, float(params["sigma_e2"]),
                        theta=float(row["theta"]) if row["theta"] not in (None, "") else 0.0)
    pattern_kind = params["pattern"]
    if pattern_kind == "null":
        nu, pattern = None, None
    else:
        nu = int(params["nu"])
        kk = row["K"]
        pattern = MeanPattern(kind=pattern_kind, strength=float(row["mu"]),
                              k=int(kk) if kk not in (None, "") else 0)
    return {
        "command": "simulate", "seed": int(params["seed"]),
        "reps": int(reps if reps is not None else row["reps"]),
        "threads": None, "out": None, "chart": chart, "model": model,
        "nu": nu, "pattern": pattern, "horizon": DEFAULT_HORIZON,
    }


def main(argv=None) -> int:
    cfg = parse_args(sys.argv[1:] if argv is None else argv)
    return execute(cfg)


if __name__ == "__main__":
    sys.exit(main())
