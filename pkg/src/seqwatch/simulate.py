"""Monte-Carlo engine: change-point scenarios, stopping times, and the
comparison-table harnesses.

Every replication draws from its own counter-based random substream keyed
by (master seed, replication index), so results are identical for any
thread count or execution order.  Per-replication stopping times come
from the active kernel backend (compiled, or the pure-Python fallback).
"""

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _backend
from .charts import ChartConfig
from .covariance import (CovModel, build_model, factor_direction,
                         marginal_variance)
from .design import solve_mewma_threshold

DEFAULT_HORIZON = 100_000

_MASK64 = (1 << 64) - 1


def _rep_generator(seed: int, rep: int) -> np.random.Generator:
    """Counter-based substream for one replication: key = (seed, rep)."""
    key = ((seed & _MASK64) << 64) | (rep & _MASK64)
    return np.random.Generator(np.random.Philox(key=key))


def _resolve_threads(threads: int | None) -> int:
    if threads is not None:
        return max(1, int(threads))
    env = os.environ.get("SEQWATCH_THREADS", "")
    return max(1, int(env)) if env else 1


# ---------------------------------------------------------------------------
# Scenarios
# ---------------------------------------------------------------------------

_PATTERNS = ("single_channel", "uniform", "k_sparse", "harmonic")


@dataclass(frozen=True)
class MeanPattern:
    """Post-change mean shape.

    ``strength`` is the Euclidean norm of the mean vector for
    single_channel / uniform / harmonic, and the per-channel shift for
    k_sparse (where ``k`` channels change; default the first k).
    """

    kind: str
    strength: float
    k: int = 0
    channels: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.kind not in _PATTERNS:
            raise ValueError(f"unknown mean pattern {self.kind!r}")
        if self.strength < 0.0:
            raise ValueError("strength must be >= 0")
        if self.kind == "k_sparse" and self.k < 1:
            raise ValueError("k_sparse requires k >= 1")

    def vector(self, n: int) -> np.ndarray:
        mu = np.zeros(n)
        if self.kind == "single_channel":
            mu[0] = self.strength
        elif self.kind == "uniform":
            mu[:] = self.strength / math.sqrt(n)
        elif self.kind == "harmonic":
            v = 1.0 / np.arange(1.0, n + 1.0)
            mu = self.strength * v / np.linalg.norm(v)
        else:
            if self.k > n:
                raise ValueError(f"k = {self.k} exceeds channel count {n}")
            ch = self.channels if self.channels is not None else tuple(range(self.k))
            if len(ch) != self.k:
                raise ValueError("channels must list exactly k indices")
            mu[list(ch)] = self.strength
        return mu


def single_channel(strength: float) -> MeanPattern:
    return MeanPattern("single_channel", strength)


def uniform(strength: float) -> MeanPattern:
    return MeanPattern("uniform", strength)


def k_sparse(k: int, value: float, channels=None) -> MeanPattern:
    return MeanPattern("k_sparse", value, k=k,
                       channels=tuple(channels) if channels is not None else None)


def harmonic(strength: float) -> MeanPattern:
    return MeanPattern("harmonic", strength)


@dataclass(frozen=True)
class Scenario:
    """One change-point experiment: when the change happens and what it is.

    ``nu = None`` encodes a pure null run (no change ever).  Runs are
    censored at ``horizon`` steps.
    """

    n: int
    nu: int | None
    pattern: MeanPattern | None
    model: CovModel
    horizon: int = DEFAULT_HORIZON

    def __post_init__(self):
        if self.model.n != self.n:
            raise ValueError("scenario and covariance model disagree on N")
        if self.nu is not None and self.nu < 0:
            raise ValueError("nu must be >= 0 (or None for a null run)")
        if self.nu is not None and self.pattern is None:
            raise ValueError("a change scenario needs a mean pattern")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")

    def mean_vector(self) -> np.ndarray:
        if self.nu is None or self.pattern is None:
            return np.zeros(self.n)
        return self.pattern.vector(self.n)


@dataclass(frozen=True)
class Summary:
    """Monte-Carlo estimates with standard errors.

    Null runs fill arl0/arl0_se; change runs fill far/saddt/saddt_se.
    ``detections`` counts the runs a reported mean is based on; estimates
    are None when no run qualified.
    """

    reps: int
    censored: int
    arl0: float | None = None
    arl0_se: float | None = None
    far: float | None = None
    saddt: float | None = None
    saddt_se: float | None = None
    detections: int = 0


# ---------------------------------------------------------------------------
# Kernel dispatch
# ---------------------------------------------------------------------------

def _qf_params(model: CovModel):
    n = model.n
    if model.theta == 0.0 or model.kind == "identity":
        return model.sigma_e2, 0.0, np.zeros(n)
    if model.kind == "intraclass":
        return model.sigma_e2, model.rho / n, np.ones(n)
    return model.sigma_e2, model.rho, np.ascontiguousarray(model.gamma)


def _samp_params(model: CovModel):
    g = factor_direction(model)
    if g is None:
        return 0, math.sqrt(model.sigma_e2), 0.0, np.zeros(model.n)
    return 1, math.sqrt(model.sigma_e2), math.sqrt(model.sigma_a2), np.ascontiguousarray(g)


_STAT_MODES = {"none": 0, "hard": 1, "soft": 2}
_ADAPTIVE_MODES = {"adaptive_cusum": 0, "adaptive_sr": 1, "adaptive_sum_sr": 2}


def _make_runner(cfg: ChartConfig, model: CovModel, kernels=None):
    """Bind a (gen, mu, nu, horizon) -> (tau, nu_hat) callable for cfg."""
    k = kernels if kernels is not None else _backend.kernels
    if cfg.threshold_mode != "none" and model.kind != "identity":
        raise ValueError("hard/soft thresholding assumes an identity covariance model")
    samp_kind, sqrt_e, sqrt_a, g_samp = _samp_params(model)
    qf_sig2, qf_coef, g_qf = _qf_params(model)
    v = cfg.variant
    thr = cfg.threshold

    if v in ("mewma", "mewma0"):
        mode = _STAT_MODES[cfg.threshold_mode]
        if v == "mewma0":
            qf_sig2, qf_coef = marginal_variance(model), 0.0
        beta, param = cfg.beta, cfg.mode_param

        def run(gen, mu, nu, horizon):
            return k.run_ewma(gen, beta, thr, mode, param, samp_kind, sqrt_e,
                              sqrt_a, g_samp, qf_sig2, qf_coef, g_qf,
                              mu, nu, horizon), None
    elif v == "mma":
        mode = _STAT_MODES[cfg.threshold_mode]
        w, param = cfg.window, cfg.mode_param

        def run(gen, mu, nu, horizon):
            return k.run_ma(gen, w, thr, mode, param, samp_kind, sqrt_e,
                            sqrt_a, g_samp, qf_sig2, qf_coef, g_qf,
                            mu, nu, horizon), None
    elif v in ("mcusum_windowed", "glrt"):
        squared = 1 if v == "glrt" else 0
        cap, kref = cfg.window, cfg.k_ref if v == "mcusum_windowed" else 0.0

        def run(gen, mu, nu, horizon):
            return k.run_scan(gen, cap, kref, thr, squared, samp_kind, sqrt_e,
                              sqrt_a, g_samp, qf_sig2, qf_coef, g_qf,
                              mu, nu, horizon), None
    elif v == "mcusum_recursive":
        kref = cfg.k_ref

        def run(gen, mu, nu, horizon):
            return k.run_mc1(gen, kref, thr, samp_kind, sqrt_e, sqrt_a,
                             g_samp, qf_sig2, qf_coef, g_qf, mu, nu, horizon)
    elif v in ("sr_mixture", "sum_sr"):
        sum_mode = 1 if v == "sum_sr" else 0
        delta = cfg.k_ref

        def run(gen, mu, nu, horizon):
            return k.run_sr(gen, delta, thr, sum_mode, samp_kind, sqrt_e,
                            sqrt_a, g_samp, mu, nu, horizon), None
    else:
        mode = _ADAPTIVE_MODES[v]
        beta = cfg.beta

        def run(gen, mu, nu, horizon):
            return k.run_adaptive(gen, beta, thr, mode, samp_kind, sqrt_e,
                                  sqrt_a, g_samp, mu, nu, horizon), None
    return run


def _run_taus(cfg: ChartConfig, model: CovModel, pattern: MeanPattern | None,
              nu: int | None, horizon: int, reps: int, seed: int,
              threads: int | None = None, kernels=None) -> np.ndarray:
    """Stopping times for ``reps`` replications; 0 marks a censored run."""
    runner = _make_runner(cfg, model, kernels)
    mu = np.ascontiguousarray(
        pattern.vector(model.n) if (pattern is not None and nu is not None)
        else np.zeros(model.n))
    nu_eff = horizon if nu is None else int(nu)
    taus = np.zeros(reps, dtype=np.int64)
    nthreads = _resolve_threads(threads)

    def work(lo, hi):
        for rep in range(lo, hi):
            tau, _ = runner(_rep_generator(seed, rep), mu, nu_eff, horizon)
            taus[rep] = tau

    if nthreads == 1 or reps < 2 * nthreads:
        work(0, reps)
    else:
        bounds = np.linspace(0, reps, 4 * nthreads + 1).astype(int)
        with ThreadPoolExecutor(max_workers=nthreads) as pool:
            futures = [pool.submit(work, int(a), int(b))
                       for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
            for f in futures:
                f.result()
    return taus


# ---------------------------------------------------------------------------
# Estimators
# ---------------------------------------------------------------------------

def run_once(cfg: ChartConfig, scenario: Scenario, seed: int,
             rep: int = 0) -> tuple[int | None, bool]:
    """One replication: (alarm step or None if censored, alarmed at/before nu)."""
    runner = _make_runner(cfg, scenario.model)
    mu = np.ascontiguousarray(scenario.mean_vector())
    nu_eff = scenario.horizon if scenario.nu is None else scenario.nu
    tau, _ = runner(_rep_generator(seed, rep), mu, nu_eff, scenario.horizon)
    if tau == 0:
        return None, False
    pre = scenario.nu is not None and tau <= scenario.nu
    return int(tau), pre


def _mean_se(values: np.ndarray) -> tuple[float | None, float | None]:
    if values.size == 0:
        return None, None
    mean = float(values.mean())
    se = float(values.std(ddof=1) / math.sqrt(values.size)) if values.size > 1 else None
    return mean, se


def estimate_arl0(cfg: ChartConfig, model: CovModel, reps: int, seed: int,
                  threads: int | None = None,
                  horizon: int = DEFAULT_HORIZON) -> Summary:
    """In-control average run length from null runs (no change ever)."""
    if reps < 2:
        raise ValueError("reps must be at least 2")
    taus = _run_taus(cfg, model, None, None, horizon, reps, seed, threads)
    obs = taus[taus > 0].astype(np.float64)
    arl0, se = _mean_se(obs)
    return Summary(reps=reps, censored=int(reps - obs.size),
                   arl0=arl0, arl0_se=se, detections=int(obs.size))


def estimate_detection(cfg: ChartConfig, scenario: Scenario, reps: int,
                       seed: int, threads: int | None = None) -> Summary:
    """False-alarm rate and conditional detection delay past the change.

    FAR is the fraction of runs alarming at or before nu; the delay is
    averaged over non-censored runs that alarmed after nu.
    """
    if scenario.nu is None:
        raise ValueError("estimate_detection needs a finite change point")
    taus = _run_taus(cfg, scenario.model, scenario.pattern, scenario.nu,
                     scenario.horizon, reps, seed, threads)
    alarmed = taus > 0
    far = float(np.mean(alarmed & (taus <= scenario.nu)))
    det = alarmed & (taus > scenario.nu)
    delays = (taus[det] - scenario.nu).astype(np.float64)
    saddt, se = _mean_se(delays)
    return Summary(reps=reps, censored=int(reps - alarmed.sum()), far=far,
                   saddt=saddt, saddt_se=se, detections=int(det.sum()))


# ---------------------------------------------------------------------------
# Table harnesses
# ---------------------------------------------------------------------------

CSV_COLUMNS = ("table_id", "chart", "variant_params", "theta", "K", "mu",
               "reps", "arl0", "arl0_se", "far", "saddt", "saddt_se", "censored")

_MU_GRID = (0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0)

# sigma_a^2 levels with sigma_e^2 chosen so each channel has unit variance
_INTRACLASS_LEVELS = tuple(
    (s_a2, 1.0 - s_a2 / 10.0) for s_a2 in (0.0, 1.0, 2.0, 3.0, 4.0, 5.0))


def chart_param_string(cfg: ChartConfig, model: CovModel, pattern_kind: str,
                       seed: int, nu: int | None = None) -> str:
    """Canonical key=value;... encoding of a table cell's configuration."""
    parts = [f"variant={cfg.variant}", f"n={model.n}", f"threshold={cfg.threshold!r}"]
    if cfg.beta is not None:
        parts.append(f"beta={cfg.beta!r}")
    if cfg.window is not None:
        parts.append(f"window={cfg.window}")
    if cfg.k_ref is not None:
        parts.append(f"k_ref={cfg.k_ref!r}")
    if cfg.threshold_mode != "none":
        parts.append(f"mode={cfg.threshold_mode}")
        parts.append(f"mode_param={cfg.mode_param!r}")
    parts.append(f"cov={model.kind}")
    parts.append(f"sigma_e2={model.sigma_e2!r}")
    parts.append(f"pattern={pattern_kind}")
    if nu is not None and pattern_kind != "null":
        parts.append(f"nu={nu}")
    parts.append(f"seed={seed}")
    return ";".join(parts)


def _null_row(table_id, label, cfg, model, reps, seed, threads):
    s = estimate_arl0(cfg, model, reps, seed, threads)
    return {
        "table_id": table_id, "chart": label,
        "variant_params": chart_param_string(cfg, model, "null", seed),
        "theta": model.theta, "K": None, "mu": 0.0, "reps": reps,
        "arl0": s.arl0, "arl0_se": s.arl0_se, "far": None,
        "saddt": None, "saddt_se": None, "censored": s.censored,
    }


def _cell_row(table_id, label, cfg, model, pattern, kk, mu_label, reps, seed,
              threads, nu=100):
    scen = Scenario(n=model.n, nu=nu, pattern=pattern, model=model)
    s = estimate_detection(cfg, scen, reps, seed, threads)
    return {
        "table_id": table_id, "chart": label,
        "variant_params": chart_param_string(cfg, model, pattern.kind, seed, nu=nu),
        "theta": model.theta, "K": kk, "mu": mu_label, "reps": reps,
        "arl0": None, "arl0_se": None, "far": s.far,
        "saddt": s.saddt, "saddt_se": s.saddt_se, "censored": s.censored,
    }


def _intraclass_model(s_a2: float, s_e2: float, n: int = 10) -> CovModel:
    return build_model("intraclass", n, s_e2, theta=s_a2 / s_e2)


def _table_1_or_2(table_id, reps, seed, threads):
    variant = "mewma0" if table_id == 1 else "mewma"
    n = 10
    rows = []
    for beta in (0.01, 0.05, 0.1):
        b = solve_mewma_threshold(n, beta, 1000.0)
        thr = b * b * beta / (2.0 - beta)
        cfg = ChartConfig(variant=variant, threshold=thr, beta=beta)
        label = f"{variant}_beta{beta:g}"
        for s_a2, s_e2 in _INTRACLASS_LEVELS:
            model = _intraclass_model(s_a2, s_e2, n)
            rows.append(_null_row(table_id, label, cfg, model, reps, seed, threads))
            for mu in (0.2, 0.3, 0.5, 0.6, 0.8, 0.9, 1.0):
                rows.append(_cell_row(table_id, label, cfg, model,
                                      k_sparse(n, mu), n, mu, reps, seed, threads))
    return rows


# the fixed comparison setups at N = 20, target ARL0 = 1000
_T3_CHARTS = (
    ("ewma", ChartConfig("mewma", threshold=1.07, beta=0.05)),
    ("ma", ChartConfig("mma", threshold=2.1125, window=20)),
    ("glrt", ChartConfig("glrt", threshold=7.08 ** 2, window=20)),
    ("cusum", ChartConfig("mcusum_windowed", threshold=24.15, window=20, k_ref=0.5)),
    ("rcusum", ChartConfig("mcusum_recursive", threshold=31.0, k_ref=0.5)),
    ("sr", ChartConfig("sr_mixture", threshold=747.29, k_ref=0.5 / math.sqrt(20.0))),
)

_T4_CHARTS = (
    ("ewma", ChartConfig("mewma", threshold=1.07, beta=0.05)),
    ("ewma_hard", ChartConfig("mewma", threshold=0.39, beta=0.05,
                              threshold_mode="hard", mode_param=0.5)),
    ("ewma_soft", ChartConfig("mewma", threshold=0.115, beta=0.05,
                              threshold_mode="soft", mode_param=9.0)),
    ("ma", ChartConfig("mma", threshold=2.1125, window=20)),
    ("ma_hard", ChartConfig("mma", threshold=1.26, window=20,
                            threshold_mode="hard", mode_param=0.5)),
    ("sum_sr", ChartConfig("sum_sr", threshold=14945.83, k_ref=0.5)),
    ("sr", ChartConfig("sr_mixture", threshold=747.29, k_ref=0.5 / math.sqrt(20.0))),
)

_T5_CHARTS = (
    ("ewma", ChartConfig("mewma", threshold=1.07, beta=0.05)),
    ("a_sr", ChartConfig("adaptive_sr", threshold=545.0, beta=0.05)),
    ("a_cusum", ChartConfig("adaptive_cusum", threshold=4.6, beta=0.05)),
    ("a_sum_sr", ChartConfig("adaptive_sum_sr", threshold=15050.0, beta=0.05)),
)


def _table_3(reps, seed, threads):
    model = build_model("identity", 20, 1.0)
    rows = []
    for label, cfg in _T3_CHARTS:
        rows.append(_null_row(3, label, cfg, model, reps, seed, threads))
        patterns = [("i", single_channel), ("ii", uniform)]
        if label == "sr":
            patterns.append(("harmonic", harmonic))
        for _, make in patterns:
            for mu in _MU_GRID:
                rows.append(_cell_row(3, label, cfg, model, make(mu), None,
                                      mu, reps, seed, threads))
    return rows


def _table_4_or_5(table_id, reps, seed, threads):
    model = build_model("identity", 20, 1.0)
    charts = _T4_CHARTS if table_id == 4 else _T5_CHARTS
    kgrid = (1, 2, 3, 5) if table_id == 4 else (1, 2, 3, 5, 10)
    rows = []
    for label, cfg in charts:
        rows.append(_null_row(table_id, label, cfg, model, reps, seed, threads))
        for mu in _MU_GRID:
            for kk in kgrid:
                rows.append(_cell_row(table_id, label, cfg, model,
                                      k_sparse(kk, mu), kk, mu, reps, seed, threads))
    return rows


def reproduce_table(table_id: int, reps: int = 10_000, seed: int = 0,
                    threads: int | None = None) -> list[dict]:
    """Re-run one of the published comparison tables; returns CSV-ready rows.

    Cells are estimated independently with the master seed, so any subset
    of rows matches a full run.
    """
    if table_id in (1, 2):
        return _table_1_or_2(table_id, reps, seed, threads)
    if table_id == 3:
        return _table_3(reps, seed, threads)
    if table_id in (4, 5):
        return _table_4_or_5(table_id, reps, seed, threads)
    raise ValueError(f"table_id must be in 1..5, got {table_id}")
