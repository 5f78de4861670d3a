"""Run-length design: in-control ARL approximations, delay predictions,
optimal tuning parameters, and simulation-based threshold calibration.

Conventions used throughout:

* ``rho_plus`` is the boundary-overshoot correction constant 0.5826 for
  discrete-time crossings of a continuous boundary.
* Signal strength enters as the Mahalanobis square ``delta' Sigma^{-1}
  delta``; delay predictions are reported per true signal strength and
  return ``math.inf`` when the chart cannot detect that signal at first
  order (the "inefficient" regime).
* ARL formulas are asymptotic; the windowed-CUSUM formula in particular
  underestimates badly at moderate dimension, so its threshold design
  defers to ``calibrate_by_simulation``.
"""

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy import integrate, optimize, special

from .charts import ChartConfig
from .covariance import CovModel

INEFFICIENT = math.inf


@dataclass(frozen=True)
class DesignConstants:
    rho_plus: float = 0.5826
    k_star: float = 0.5117
    c_star: float = 2.4554


CONSTANTS = DesignConstants()
RHO_PLUS = CONSTANTS.rho_plus


@dataclass(frozen=True)
class DesignResult:
    """Tuned chart parameters with their predicted operating figures.

    ``predicted_saddt`` is ``math.inf`` when the chart is inefficient for
    the given signal and ``None`` when no delay prediction applies.
    """

    chart: str
    params: dict
    predicted_arl0: float
    predicted_saddt: float | None
    method: str


class CalibrationError(RuntimeError):
    """Simulation calibration failed to bracket or converge."""


# ---------------------------------------------------------------------------
# EWMA chart: in-control ARL and optimal design
# ---------------------------------------------------------------------------

def _corrected_limit(b: float, beta: float) -> float:
    return b + RHO_PLUS * beta / math.sqrt(beta / (2.0 - beta))


def _ewma_integrand(x: float, a: float) -> float:
    # x^{-a} e^x * (lower incomplete gamma)(a, x); -> 1/a as x -> 0
    if x < 1e-8:
        return math.exp(x) / a * (1.0 - a * x / (a + 1.0))
    return math.exp(x) * special.gammainc(a, x) * special.gamma(a) * x ** (-a)


def arl0_mewma(n: int, beta: float, b: float, corrected: bool = True,
               form: str = "integral", quad_tol: float = 1e-6) -> float:
    """In-control ARL of the EWMA quadratic-form chart with limit ``b``.

    The chart alarms when Y' Sigma^{-1} Y exceeds b^2 beta/(2-beta).  The
    run length is approximated through the scale/speed measure of the
    limiting squared-radius diffusion; ``corrected`` applies the
    overshoot adjustment to ``b`` first.  ``form="closed"`` drops the
    incomplete-gamma deficit in the inner integral and is an explicit
    formula; the integral form is the accurate one.
    """
    if not 0.0 < beta < 1.0:
        raise ValueError("beta must be in (0, 1)")
    if b <= 0.0:
        raise ValueError("b must be positive")
    bstar = _corrected_limit(b, beta) if corrected else b
    a = 0.5 * n
    upper = 0.5 * bstar * bstar
    denom = -2.0 * math.log1p(-beta)
    if form == "closed":
        val = math.exp(
            math.lgamma(a) - a * math.log(upper) + upper - math.log(denom)
        )
        return val
    if form != "integral":
        raise ValueError(f"form must be 'integral' or 'closed', got {form!r}")
    val, _ = integrate.quad(_ewma_integrand, 0.0, upper, args=(a,),
                            epsrel=quad_tol, epsabs=0.0, limit=200)
    return max(val / denom, 1.0)


def solve_mewma_threshold(n: int, beta: float, target_arl0: float,
                          corrected: bool = True) -> float:
    """Limit ``b`` whose (integral-form) ARL equals ``target_arl0``.

    With ``corrected=True`` this returns the usable chart limit; with
    ``corrected=False`` the uncorrected solution, which exceeds the
    corrected one by exactly the overshoot term.
    """
    if target_arl0 <= 1.0:
        raise ValueError("target_arl0 must exceed 1")

    def f(b):
        return arl0_mewma(n, beta, b, corrected=corrected) - target_arl0

    lo, hi = 0.1, 20.0
    if f(lo) > 0.0 or f(hi) < 0.0:
        raise ValueError("target ARL not bracketed by b in [0.1, 20]")
    return float(optimize.brentq(f, lo, hi, xtol=1e-10, rtol=1e-12))


def kstar_cstar(tol: float = 1e-6) -> tuple[float, float]:
    """Argmin and minimum of g(k) = -ln(1 - sqrt(k)) / k on (0, 1).

    Golden-section search; g is unimodal there (blows up at both ends).
    """
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = 1e-12, 1.0 - 1e-12

    def g(k):
        return -math.log1p(-math.sqrt(k)) / k

    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    gc, gd = g(c), g(d)
    while b - a > tol:
        if gc < gd:
            b, d, gd = d, c, gc
            c = b - invphi * (b - a)
            gc = g(c)
        else:
            a, c, gc = c, d, gd
            d = a + invphi * (b - a)
            gd = g(d)
    k = 0.5 * (a + b)
    return k, g(k)


def optimal_mewma(n: int, target_arl0: float, signal2: float) -> DesignResult:
    """First-order optimal (b, beta) for a known signal strength.

    ``signal2`` is the reference Mahalanobis square delta' Sigma^{-1}
    delta.  The optimal weight scales as k_star * signal2 / ln(ARL0); the
    predicted delay is c_star * ln(ARL0) / signal2.
    """
    if signal2 <= 0.0:
        raise ValueError("signal2 must be positive")
    if target_arl0 <= math.e:
        raise ValueError("target_arl0 must exceed e")
    log_arl = math.log(target_arl0)
    bstar = math.sqrt(2.0 * log_arl)
    beta = CONSTANTS.k_star * signal2 / log_arl
    if beta > 1.0:
        warnings.warn("optimal EWMA weight exceeds 1; capping at 1 "
                      "(signal too strong for the asymptotic design)")
        beta = 1.0
    saddt = CONSTANTS.c_star * log_arl / signal2
    params = {"b": bstar, "beta": beta,
              "threshold": bstar * bstar * beta / (2.0 - beta)}
    return DesignResult("mewma", params, target_arl0, saddt, "closed_form")


def saddt_mewma(beta: float, b: float, signal2: float) -> float:
    """Stationary delay of an EWMA chart at true signal strength ``signal2``.

    Returns inf when k = beta b^2 / (2 signal2) >= 1, i.e. the chart's
    boundary outruns the post-change drift.
    """
    if not 0.0 < beta < 1.0:
        raise ValueError("beta must be in (0, 1)")
    if b <= 0.0 or signal2 <= 0.0:
        raise ValueError("b and signal2 must be positive")
    k = beta * b * b / (2.0 * signal2)
    if k >= 1.0:
        return INEFFICIENT
    return -math.log1p(-math.sqrt(k)) / beta


# ---------------------------------------------------------------------------
# Moving-average chart
# ---------------------------------------------------------------------------

def _log_arl0_mma(n: int, w: int, h: float) -> float:
    a = 0.5 * n
    z = 0.5 * h * h * w
    return (math.log(w) + math.lgamma(a) - math.log(2.0)
            - a * math.log(z) + z + math.sqrt(2.0) * RHO_PLUS * h)


def arl0_mma(n: int, w: int, h: float) -> float:
    """In-control ARL of the window-w moving-average chart with limit h."""
    if w < 1 or h <= 0.0:
        raise ValueError("w >= 1 and h > 0 required")
    log_val = _log_arl0_mma(n, w, h)
    return math.exp(log_val) if log_val < 700.0 else math.inf


def solve_mma_threshold(n: int, w: int, target_arl0: float) -> float:
    """Limit h with arl0_mma equal to the target (monotone region h^2 > n/w)."""
    lo = math.sqrt(n / w) * 1.0001
    hi = 20.0
    log_target = math.log(target_arl0)
    f = lambda h: _log_arl0_mma(n, w, h) - log_target
    if f(lo) > 0.0:
        raise ValueError("target ARL below the chart's minimum in the valid region")
    return float(optimize.brentq(f, lo, hi, xtol=1e-10, rtol=1e-12))


def design_mma(n: int, target_arl0: float, signal2: float) -> DesignResult:
    """Optimal (h, w) for a reference signal: h^2 = signal2, w = SADDT."""
    if signal2 <= 0.0 or target_arl0 <= 1.0:
        raise ValueError("positive signal2 and target_arl0 > 1 required")
    log_arl = math.log(target_arl0)
    h = math.sqrt(signal2)
    w = 2.0 * log_arl / signal2
    params = {"h": h, "threshold": h * h, "window": w}
    return DesignResult("mma", params, target_arl0, w, "closed_form")


def saddt_mma(ref_signal2: float, true_signal2: float, arl0: float) -> float:
    """Delay of the optimally designed MA chart at the true signal.

    Inefficient (inf) when the true strength falls below the reference the
    window was sized for.
    """
    if true_signal2 < ref_signal2:
        return INEFFICIENT
    return 2.0 * math.log(arl0) / true_signal2


# ---------------------------------------------------------------------------
# Windowed CUSUM chart
# ---------------------------------------------------------------------------

def _log_arl0_mcusum(n: int, delta_norm: float, d: float) -> float:
    m = 0.5 * (n - 1)
    return (-m * math.log(4.0 * delta_norm * d)
            + math.lgamma(n - 1) - math.lgamma(m)
            + math.log(2.0) - 2.0 * math.log(delta_norm)
            + delta_norm * (d + 2.0 * RHO_PLUS))


def arl0_mcusum(n: int, delta_norm: float, d: float) -> float:
    """Asymptotic in-control ARL of the windowed CUSUM scan.

    Known to underestimate by orders of magnitude at moderate N and the
    thresholds used in practice; kept as the stated formula, with design
    delegated to simulation calibration.
    """
    if delta_norm <= 0.0 or d <= 0.0:
        raise ValueError("delta_norm and d must be positive")
    log_val = _log_arl0_mcusum(n, delta_norm, d)
    return math.exp(log_val) if log_val < 700.0 else math.inf


def solve_mcusum_threshold(n: int, delta_norm: float, target_arl0: float) -> float:
    """Invert arl0_mcusum in d on its increasing branch d > (n-1)/(2 delta).

    Inherits the formula's bias; prefer calibrate_by_simulation for usable
    thresholds."""
    log_target = math.log(target_arl0)
    f = lambda d: _log_arl0_mcusum(n, delta_norm, d) - log_target
    lo = 0.5 * (n - 1) / delta_norm  # where the formula turns increasing
    hi = lo + (log_target + 50.0) / delta_norm
    if f(lo) > 0.0:
        raise ValueError("target ARL below the formula's minimum over d")
    return float(optimize.brentq(f, lo, hi, xtol=1e-9, rtol=1e-12))


def saddt_mcusum(delta_norm: float, mu_norm: float, arl0: float) -> float:
    """Delay of the windowed CUSUM with reference ||delta|| at true ||mu||."""
    if delta_norm <= 0.0 or arl0 <= 1.0:
        raise ValueError("positive delta_norm and arl0 > 1 required")
    if mu_norm <= 0.5 * delta_norm:
        return INEFFICIENT
    return math.log(arl0) / (delta_norm * (mu_norm - 0.5 * delta_norm))


# ---------------------------------------------------------------------------
# GLRT scan chart
# ---------------------------------------------------------------------------

def glrt_tail_integral(u0: float) -> float:
    """Closed form of the scan-overdraw tail integral.

    integral_{u0}^inf (u/2) exp(-2 rho_plus u) du
      = (1/2) exp(-2 rho_plus u0) (u0 / (2 rho_plus) + 1 / (4 rho_plus^2)).
    """
    a = 2.0 * RHO_PLUS
    return 0.5 * math.exp(-a * u0) * (u0 / a + 1.0 / (a * a))


def _log_arl0_glrt(n: int, b: float, window_cap: int) -> float:
    a = 0.5 * n
    z = 0.5 * b * b
    return (math.lgamma(a) - math.log(2.0) - a * math.log(z) + z
            - math.log(glrt_tail_integral(b / math.sqrt(window_cap))))


def arl0_glrt(n: int, b: float, window_cap: int) -> float:
    """In-control ARL of the window-capped likelihood-ratio scan."""
    if b <= 0.0 or window_cap < 1:
        raise ValueError("b > 0 and window_cap >= 1 required")
    log_val = _log_arl0_glrt(n, b, window_cap)
    return math.exp(log_val) if log_val < 700.0 else math.inf


def solve_glrt_threshold(n: int, window_cap: int, target_arl0: float) -> float:
    """Invert arl0_glrt in b on the monotone region b > sqrt(n)."""
    lo = math.sqrt(n) + 0.05
    hi = 25.0
    log_target = math.log(target_arl0)
    f = lambda b: _log_arl0_glrt(n, b, window_cap) - log_target
    if f(lo) > 0.0:
        raise ValueError("target ARL below the formula's value at b = sqrt(n)")
    return float(optimize.brentq(f, lo, hi, xtol=1e-10, rtol=1e-12))


def saddt_glrt(mu_norm2: float, arl0: float) -> float:
    """Delay of the likelihood-ratio scan: 2 ln(ARL0) / ||mu||^2."""
    if mu_norm2 <= 0.0 or arl0 <= 1.0:
        raise ValueError("positive mu_norm2 and arl0 > 1 required")
    return 2.0 * math.log(arl0) / mu_norm2


# ---------------------------------------------------------------------------
# Shiryayev-Roberts thresholds
# ---------------------------------------------------------------------------

def sr_thresholds(n: int, target_arl0: float, delta: float) -> tuple[float, float]:
    """Alarm limits B for the mixture and the sum-of-N S-R charts.

    ``delta`` is the effective one-dimensional reference drift of the
    mixture recursion (per-channel reference times sqrt(N)) and the
    per-channel reference of the summed recursions; both limits discount
    the target by the overshoot factor exp(-delta rho_plus).
    """
    if target_arl0 <= 1.0 or delta < 0.0:
        raise ValueError("target_arl0 > 1 and delta >= 0 required")
    b_mixture = target_arl0 * math.exp(-delta * RHO_PLUS)
    return b_mixture, n * b_mixture


# ---------------------------------------------------------------------------
# Simulation calibration
# ---------------------------------------------------------------------------

def calibrate_by_simulation(cfg: ChartConfig, model: CovModel, target_arl0: float,
                            reps: int = 4000, seed: int = 0, threads: int | None = None,
                            max_rounds: int = 40) -> DesignResult:
    """Tune ``cfg.threshold`` so the simulated in-control ARL hits the target.

    Uses common random numbers (the same seed for every evaluation), which
    makes the estimated ARL a nondecreasing step function of the threshold,
    and bisects geometrically from ``cfg.threshold`` until the estimate is
    within two standard errors of the target.  Runs are truncated at
    10 x target, a negligible bias at the target itself; the truncated
    mean stays monotone, so bracketing decisions remain sound far from it.

    Deterministic given (cfg, model, target, reps, seed).
    """
    from . import simulate  # local import: simulate pulls in the kernel backend

    if reps < 1000:
        raise ValueError("reps must be at least 1000 for calibration")
    horizon = int(10 * target_arl0)
    coarse = max(1000, reps // 4)

    def evaluate(threshold, nreps):
        taus = simulate._run_taus(replace(cfg, threshold=threshold), model,
                                  None, None, horizon, nreps, seed, threads)
        taus = np.where(taus == 0, horizon, taus).astype(np.float64)
        return float(taus.mean()), float(taus.std(ddof=1) / math.sqrt(nreps))

    rounds = 0

    def spend(threshold, nreps):
        nonlocal rounds
        rounds += 1
        if rounds > max_rounds:
            raise CalibrationError(
                f"no convergence after {max_rounds} evaluations "
                f"(last threshold {threshold:g})")
        return evaluate(threshold, nreps)

    thr = cfg.threshold
    est, _ = spend(thr, coarse)
    lo = hi = thr
    if est < target_arl0:
        lo_est = est
        while est < target_arl0:
            lo, lo_est = hi, est
            hi *= 2.0
            est, _ = spend(hi, coarse)
    else:
        while est >= target_arl0:
            hi = lo
            lo /= 2.0
            est, _ = spend(lo, coarse)

    best = None
    while True:
        thr = math.sqrt(lo * hi)
        est, se = spend(thr, reps)
        best = (thr, est, se)
        if abs(est - target_arl0) <= 2.0 * se:
            break
        if est < target_arl0:
            lo = thr
        else:
            hi = thr

    thr, est, se = best
    params = {"threshold": thr, "arl0_se": se}
    return DesignResult(cfg.variant, params, est, None, "simulation")
