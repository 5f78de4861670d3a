"""Online sequential detection charts, one observation at a time.

Every variant exposes the same contract: feed a length-N observation,
get back the current statistic, its alarm limit, and whether the limit
was exceeded.  Thresholds are stored pre-transformed in the same
parameterization the charts compare against (e.g. the EWMA family stores
b^2 * beta / (2 - beta), the scan family stores d or b^2), so a step is
always ``statistic > threshold``.

These implementations favor clarity over speed; the Monte-Carlo engine
uses the compiled kernels in ``_kernels`` which are tested against this
module step for step.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .covariance import CovModel, marginal_variance, quad_form

VARIANTS = (
    "mewma",
    "mewma0",
    "mma",
    "mcusum_windowed",
    "mcusum_recursive",
    "glrt",
    "sr_mixture",
    "sum_sr",
    "adaptive_cusum",
    "adaptive_sr",
    "adaptive_sum_sr",
)

_EWMA_FAMILY = ("mewma", "mewma0")
_WINDOWED = ("mma", "mcusum_windowed", "glrt")
_NEEDS_BETA = ("mewma", "mewma0", "adaptive_cusum", "adaptive_sr", "adaptive_sum_sr")
_NEEDS_KREF = ("mcusum_windowed", "mcusum_recursive", "sr_mixture", "sum_sr")
_THRESHOLD_MODES = ("none", "hard", "soft")


@dataclass(frozen=True)
class ChartConfig:
    """Immutable chart parameterization.

    threshold semantics per variant: b^2 beta/(2-beta) for the EWMA family,
    h^2 for MMA, d for the windowed CUSUM scan, h1 for the recursive CUSUM,
    b^2 for the GLRT scan, B for the S-R family, c for the adaptive CUSUM;
    hard/soft EWMA reinterpret it as c^2 / d^2.  ``mode_param`` is the trim
    level s (hard) or the no-change/change odds ratio q (soft).
    """

    variant: str
    threshold: float
    beta: float | None = None
    window: int | None = None
    k_ref: float | None = None
    threshold_mode: str = "none"
    mode_param: float = 0.0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown chart variant {self.variant!r}")
        if not self.threshold > 0.0:
            raise ValueError("threshold must be positive")
        if self.variant.startswith("adaptive") and self.beta is None:
            object.__setattr__(self, "beta", 0.05)  # default estimator weight
        if self.variant in _NEEDS_BETA:
            if self.beta is None or not 0.0 < self.beta <= 1.0:
                raise ValueError(f"{self.variant} requires beta in (0, 1]")
        if self.variant in _WINDOWED:
            if self.window is None or self.window < 1:
                raise ValueError(f"{self.variant} requires window >= 1")
        if self.variant in _NEEDS_KREF:
            if self.k_ref is None or not self.k_ref > 0.0:
                raise ValueError(f"{self.variant} requires k_ref > 0")
        if self.threshold_mode not in _THRESHOLD_MODES:
            raise ValueError(f"unknown threshold_mode {self.threshold_mode!r}")
        if self.threshold_mode != "none":
            if self.variant not in ("mewma", "mma"):
                raise ValueError("hard/soft thresholding applies to mewma and mma only")
            if self.variant == "mma" and self.threshold_mode == "soft":
                raise ValueError("soft thresholding is defined for mewma only")
            if self.mode_param < 0.0:
                raise ValueError("mode_param must be >= 0")


@dataclass
class ChartState:
    """Mutable per-chart running state; single-owner, never shared."""

    n: int
    t: int = 0
    y: np.ndarray | None = None          # EWMA vector / adaptive mean estimate
    ring: np.ndarray | None = None       # (cap, n) most recent observations
    ring_pos: int = 0
    ring_len: int = 0
    winsum: np.ndarray | None = None     # running window sum (MMA)
    run_sum: np.ndarray | None = None    # cumulative sum since nu_hat (recursive CUSUM)
    nu_hat: int = 0
    r: float = 0.0                       # scalar S-R statistic / adaptive S-R
    r_vec: np.ndarray | None = None      # per-channel S-R statistics
    w_stat: float = 0.0                  # adaptive CUSUM statistic


@dataclass(frozen=True)
class StepOutcome:
    statistic: float
    threshold: float
    alarmed: bool
    nu_hat: int | None = None
    argmax_window: int | None = None


def new_state(cfg: ChartConfig, n: int) -> ChartState:
    """Allocate the state the given variant needs, all zeroed."""
    state = ChartState(n=n)
    v = cfg.variant
    if v in _EWMA_FAMILY or v.startswith("adaptive"):
        state.y = np.zeros(n)
    if v in _WINDOWED:
        state.ring = np.zeros((cfg.window, n))
    if v == "mma":
        state.winsum = np.zeros(n)
    if v == "mcusum_recursive":
        state.run_sum = np.zeros(n)
    if v in ("sum_sr", "adaptive_sum_sr"):
        state.r_vec = np.zeros(n)
    return state


def reset(state: ChartState) -> None:
    """Restore the freshly-built condition: t = 0, all statistics zero."""
    state.t = 0
    state.ring_pos = 0
    state.ring_len = 0
    state.nu_hat = 0
    state.r = 0.0
    state.w_stat = 0.0
    for arr in (state.y, state.ring, state.winsum, state.run_sum, state.r_vec):
        if arr is not None:
            arr[...] = 0.0


def _check_x(state: ChartState, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (state.n,):
        raise ValueError(f"observation must have length {state.n}, got shape {x.shape}")
    return x


def _require_identity(cfg: ChartConfig, model: CovModel) -> None:
    if cfg.threshold_mode != "none" and model.kind != "identity":
        raise ValueError("hard/soft thresholding assumes an identity covariance model")


def _ring_push(state: ChartState, x: np.ndarray) -> None:
    cap = state.ring.shape[0]
    state.ring[state.ring_pos] = x
    state.ring_pos = (state.ring_pos + 1) % cap
    state.ring_len = min(state.ring_len + 1, cap)


def _ring_recent(state: ChartState, w: int) -> np.ndarray:
    # rows for the last w observations, oldest first
    cap = state.ring.shape[0]
    idx = (state.ring_pos - w + np.arange(w)) % cap
    return state.ring[idx]


def hard_stat(y: np.ndarray, s: float) -> float:
    """Sum of squared components exceeding the trim level s in magnitude."""
    m = np.abs(y) > s
    return float(np.sum(y[m] * y[m]))


def soft_stat(y: np.ndarray, q: float) -> float:
    """Odds-weighted sum of squares: weight = 1 / (1 + q exp(-y^2/2)).

    Written with the decaying exponential so large components cannot
    overflow exp(y^2/2).
    """
    y2 = y * y
    w = 1.0 / (1.0 + q * np.exp(-0.5 * y2))
    return float(np.sum(w * y2))


def ewma_step(state: ChartState, x, cfg: ChartConfig, model: CovModel) -> StepOutcome:
    """EWMA family: plain quadratic-form, dependence-blind, hard, or soft."""
    if cfg.variant not in _EWMA_FAMILY:
        raise ValueError(f"ewma_step does not handle {cfg.variant!r}")
    x = _check_x(state, x)
    _require_identity(cfg, model)
    b = cfg.beta
    state.y *= 1.0 - b
    state.y += b * x
    state.t += 1
    if cfg.threshold_mode == "hard":
        stat = hard_stat(state.y, cfg.mode_param)
    elif cfg.threshold_mode == "soft":
        stat = soft_stat(state.y, cfg.mode_param)
    elif cfg.variant == "mewma":
        stat = quad_form(model, state.y)
    else:
        stat = float(state.y @ state.y) / marginal_variance(model)
    return StepOutcome(stat, cfg.threshold, stat > cfg.threshold)


def ma_step(state: ChartState, x, cfg: ChartConfig, model: CovModel) -> StepOutcome:
    """Moving-average chart over a window of w observations.

    No alarm can fire before the first full window; the statistic is
    reported as 0 during warm-up.
    """
    if cfg.variant != "mma":
        raise ValueError(f"ma_step does not handle {cfg.variant!r}")
    x = _check_x(state, x)
    _require_identity(cfg, model)
    w = cfg.window
    oldest = state.ring[state.ring_pos] if state.ring_len == w else 0.0
    state.winsum += x - oldest
    _ring_push(state, x)
    state.t += 1
    if state.ring_len < w:
        return StepOutcome(0.0, cfg.threshold, False)
    xbar = state.winsum / w
    if cfg.threshold_mode == "hard":
        stat = hard_stat(xbar, cfg.mode_param)
    else:
        stat = quad_form(model, xbar)
    return StepOutcome(stat, cfg.threshold, stat > cfg.threshold)


def _window_scan(state: ChartState, x, cfg: ChartConfig, model: CovModel, squared: bool):
    x = _check_x(state, x)
    _ring_push(state, x)
    state.t += 1
    wmax = min(cfg.window, state.ring_len)
    rows = _ring_recent(state, wmax)   # oldest first; rows[-w:] = last w obs
    best = -math.inf
    best_w = 1
    s = np.zeros(state.n)
    for w in range(1, wmax + 1):
        s += rows[wmax - w]
        q = quad_form(model, s)
        if squared:
            cand = q / w
        else:
            cand = math.sqrt(q) - 0.5 * cfg.k_ref * w
        if cand > best:
            best = cand
            best_w = w
    return best, best_w


def cusum_windowed_step(state: ChartState, x, cfg: ChartConfig, model: CovModel) -> StepOutcome:
    """Window-restricted CUSUM: max over w <= W of w(|xbar|_Sigma - k/2)."""
    if cfg.variant != "mcusum_windowed":
        raise ValueError(f"cusum_windowed_step does not handle {cfg.variant!r}")
    stat, best_w = _window_scan(state, x, cfg, model, squared=False)
    return StepOutcome(stat, cfg.threshold, stat > cfg.threshold, argmax_window=best_w)


def glrt_step(state: ChartState, x, cfg: ChartConfig, model: CovModel) -> StepOutcome:
    """Window-scanned likelihood-ratio chart: max over w of w * xbar' Sigma^{-1} xbar."""
    if cfg.variant != "glrt":
        raise ValueError(f"glrt_step does not handle {cfg.variant!r}")
    stat, best_w = _window_scan(state, x, cfg, model, squared=True)
    return StepOutcome(stat, cfg.threshold, stat > cfg.threshold, argmax_window=best_w)


def cusum_recursive_step(state: ChartState, x, cfg: ChartConfig, model: CovModel) -> StepOutcome:
    """Recursive CUSUM with running change-point estimate.

    Keeps the cumulative sum since the current estimate nu_hat; when the
    statistic hits zero the estimate resets to the present step, which
    restarts the sum.  The reported nu_hat is the estimate that will be in
    force at the next step, so it can be read off directly at alarm time.
    """
    if cfg.variant != "mcusum_recursive":
        raise ValueError(f"cusum_recursive_step does not handle {cfg.variant!r}")
    x = _check_x(state, x)
    state.run_sum += x
    state.t += 1
    stat = math.sqrt(quad_form(model, state.run_sum)) - 0.5 * cfg.k_ref * (state.t - state.nu_hat)
    if stat <= 0.0:
        stat = 0.0
        state.nu_hat = state.t
        state.run_sum[...] = 0.0
    return StepOutcome(stat, cfg.threshold, stat > cfg.threshold, nu_hat=state.nu_hat)


def sr_step(state: ChartState, x, cfg: ChartConfig, model: CovModel) -> StepOutcome:
    """Shiryayev-Roberts recursions, R_0 = 0.

    ``sr_mixture`` drives one scalar recursion with the same per-channel
    reference k_ref on every channel; ``sum_sr`` runs N independent scalar
    recursions and alarms on their sum.
    """
    x = _check_x(state, x)
    d = cfg.k_ref
    state.t += 1
    if cfg.variant == "sr_mixture":
        g = d * float(np.sum(x - 0.5 * d))
        state.r = (1.0 + state.r) * math.exp(g)
        stat = state.r
    elif cfg.variant == "sum_sr":
        state.r_vec = (1.0 + state.r_vec) * np.exp(d * (x - 0.5 * d))
        stat = float(state.r_vec.sum())
    else:
        raise ValueError(f"sr_step does not handle {cfg.variant!r}")
    return StepOutcome(stat, cfg.threshold, stat > cfg.threshold)


def adaptive_step(state: ChartState, x, cfg: ChartConfig, model: CovModel) -> StepOutcome:
    """CUSUM / S-R recursions driven by an EWMA estimate of the mean.

    The step statistic uses the estimate from the previous step; the
    estimate is updated afterwards.  With mu_hat_0 = 0 the first increment
    is exactly zero.
    """
    x = _check_x(state, x)
    mu = state.y
    state.t += 1
    if cfg.variant == "adaptive_cusum":
        g = float(mu @ (x - 0.5 * mu))
        state.w_stat = max(0.0, state.w_stat + g)
        stat = state.w_stat
    elif cfg.variant == "adaptive_sr":
        g = float(mu @ (x - 0.5 * mu))
        state.r = (1.0 + state.r) * math.exp(g)
        stat = state.r
    elif cfg.variant == "adaptive_sum_sr":
        state.r_vec = (1.0 + state.r_vec) * np.exp(mu * (x - 0.5 * mu))
        stat = float(state.r_vec.sum())
    else:
        raise ValueError(f"adaptive_step does not handle {cfg.variant!r}")
    b = cfg.beta
    state.y *= 1.0 - b
    state.y += b * x
    return StepOutcome(stat, cfg.threshold, stat > cfg.threshold)


_DISPATCH = {
    "mewma": ewma_step,
    "mewma0": ewma_step,
    "mma": ma_step,
    "mcusum_windowed": cusum_windowed_step,
    "mcusum_recursive": cusum_recursive_step,
    "glrt": glrt_step,
    "sr_mixture": sr_step,
    "sum_sr": sr_step,
    "adaptive_cusum": adaptive_step,
    "adaptive_sr": adaptive_step,
    "adaptive_sum_sr": adaptive_step,
}


def step(state: ChartState, x, cfg: ChartConfig, model: CovModel) -> StepOutcome:
    """Dispatch one observation to the configured variant."""
    return _DISPATCH[cfg.variant](state, x, cfg, model)
