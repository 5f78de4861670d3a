import math

import numpy as np
import pytest
from scipy import integrate

from seqwatch import (CONSTANTS, CalibrationError, ChartConfig, arl0_glrt,
                      arl0_mcusum, arl0_mewma, arl0_mma, build_model,
                      calibrate_by_simulation, design_mma, glrt_tail_integral,
                      kstar_cstar, optimal_mewma, saddt_glrt, saddt_mcusum,
                      saddt_mewma, saddt_mma, solve_glrt_threshold,
                      solve_mcusum_threshold, solve_mewma_threshold,
                      solve_mma_threshold, sr_thresholds)


def test_kstar_cstar_values_and_local_min():
    k, c = kstar_cstar()
    assert k == pytest.approx(0.5117, abs=1e-3)
    assert c == pytest.approx(2.4554, abs=1e-3)
    g = lambda x: -math.log(1.0 - math.sqrt(x)) / x
    assert g(k - 1e-3) > c
    assert g(k + 1e-3) > c
    assert g(0.25) == pytest.approx(2.772589, abs=1e-5)
    # log singularity: g grows without bound as k -> 1
    assert g(0.9) > c and g(1.0 - 1e-6) > g(0.9) and g(1.0 - 1e-12) > g(1.0 - 1e-6)


def test_mewma_threshold_reproduces_known_design_points():
    # (beta, corrected limit, uncorrected limit); uncorrected only pinned
    # where the reference reports both
    cases = [(0.01, 4.64, 4.73), (0.05, 5.14, None), (0.1, 5.276, None)]
    for beta, b_expect, raw_expect in cases:
        b = solve_mewma_threshold(10, beta, 1000.0, corrected=True)
        assert b == pytest.approx(b_expect, rel=0.01)
        if raw_expect is not None:
            raw = solve_mewma_threshold(10, beta, 1000.0, corrected=False)
            assert raw == pytest.approx(raw_expect, rel=0.01)


def test_mewma_threshold_n20_scaled_form():
    b = solve_mewma_threshold(20, 0.05, 1000.0)
    assert b * b * 0.05 / 1.95 == pytest.approx(1.07, rel=0.03)


def test_arl0_mewma_roundtrip_and_correction_identity():
    for n, beta in ((10, 0.01), (20, 0.05), (5, 0.1)):
        b = solve_mewma_threshold(n, beta, 1000.0)
        assert arl0_mewma(n, beta, b) == pytest.approx(1000.0, rel=1e-4)
        raw = solve_mewma_threshold(n, beta, 1000.0, corrected=False)
        corr = CONSTANTS.rho_plus * beta / math.sqrt(beta / (2.0 - beta))
        assert raw == pytest.approx(b + corr, abs=1e-8)


def test_arl0_mewma_integral_exceeds_closed_form():
    for n, beta, b in ((10, 0.01, 4.6451), (20, 0.05, 6.46), (10, 0.05, 5.2)):
        assert b * b / 2.0 > n / 2.0
        integral = arl0_mewma(n, beta, b, form="integral")
        closed = arl0_mewma(n, beta, b, form="closed")
        assert integral > closed


def test_arl0_mewma_monotone_in_b_and_beta():
    arls = [arl0_mewma(10, 0.05, b) for b in (4.0, 4.5, 5.0, 5.5)]
    assert all(x < y for x, y in zip(arls, arls[1:]))
    arls = [arl0_mewma(10, beta, 5.0) for beta in (0.01, 0.05, 0.1, 0.2)]
    assert all(x > y for x, y in zip(arls, arls[1:]))


def test_arl0_mewma_quadrature_self_consistency():
    a = arl0_mewma(20, 0.05, 6.46, quad_tol=1e-6)
    b = arl0_mewma(20, 0.05, 6.46, quad_tol=5e-7)
    assert abs(a - b) / a < 1e-4


def test_arl0_mewma_validation():
    with pytest.raises(ValueError):
        arl0_mewma(10, 1.5, 5.0)
    with pytest.raises(ValueError):
        arl0_mewma(10, 0.05, -1.0)
    with pytest.raises(ValueError):
        arl0_mewma(10, 0.05, 5.0, form="nope")
    with pytest.raises(ValueError):
        solve_mewma_threshold(10, 0.05, 0.5)


def test_optimal_mewma_formula_values():
    res = optimal_mewma(20, 1000.0, 1.0)
    assert res.params["beta"] == pytest.approx(0.0741, abs=2e-4)
    assert res.params["b"] == pytest.approx(3.717, abs=1e-3)
    assert res.predicted_saddt == pytest.approx(16.96, abs=0.01)
    assert res.method == "closed_form"

    # doubling the signal halves the predicted delay exactly
    half = optimal_mewma(20, 1000.0, 2.0)
    assert half.predicted_saddt == pytest.approx(res.predicted_saddt / 2.0)

    with pytest.warns(UserWarning):
        capped = optimal_mewma(20, 1000.0, 1e6)
    assert capped.params["beta"] == 1.0


def test_saddt_mewma_values_and_inefficiency():
    # at k = k_star and beta = 0.05 the delay is -ln(1 - sqrt(k*)) / beta
    k = CONSTANTS.k_star
    signal2 = 0.05 * 1.0 / (2.0 * k)
    assert saddt_mewma(0.05, 1.0, signal2) == pytest.approx(25.13, abs=0.01)
    # k >= 1 is undetectable at first order
    assert math.isinf(saddt_mewma(0.05, 1.0, 0.05 / 2.0 * 0.999))
    assert saddt_mewma(0.05, 1.0, 0.05 / 2.0 / 0.999) > 0


def test_saddt_mewma_increases_with_intraclass_correlation():
    # equal per-channel shift: signal2 = c^2 N (1 - rho) / sigma_e^2
    n, c = 10, 0.5
    prev = 0.0
    for theta in (0.0, 1.0, 2.5, 6.0):
        m = build_model("intraclass", n, 1.0, theta=theta)
        signal2 = c * c * n * (1.0 - m.rho)
        s = saddt_mewma(0.05, 3.0, signal2)
        assert s > prev
        prev = s


def test_arl0_mma_known_point_and_monotonicity():
    val = arl0_mma(20, 20, math.sqrt(2.1125))
    assert val == pytest.approx(1014.7157, rel=1e-6)   # frozen quadrature-free formula value
    assert abs(val - 1000.0) / 1000.0 < 0.15
    arls = [arl0_mma(20, 20, h) for h in (1.3, 1.45, 1.6, 1.8)]
    assert all(x < y for x, y in zip(arls, arls[1:]))


def test_solve_mma_threshold_near_reference_setup():
    h = solve_mma_threshold(20, 20, 1000.0)
    assert h * h == pytest.approx(2.1125, rel=0.05)
    assert arl0_mma(20, 20, h) == pytest.approx(1000.0, rel=1e-6)


def test_design_mma_and_inefficiency():
    res = design_mma(20, 1000.0, 1.0)
    assert res.params["h"] == pytest.approx(1.0)
    assert res.params["window"] == pytest.approx(2.0 * math.log(1000.0), rel=1e-12)
    assert res.predicted_saddt == pytest.approx(13.8155, abs=1e-3)
    assert math.isinf(saddt_mma(1.0, 0.8, 1000.0))
    assert saddt_mma(1.0, 2.0, 1000.0) == pytest.approx(math.log(1000.0), rel=1e-12)


def test_mcusum_formulas():
    assert saddt_mcusum(0.5, 1.0, 1000.0) == pytest.approx(18.4207, abs=1e-3)
    assert math.isinf(saddt_mcusum(0.5, 0.25, 1000.0))
    assert math.isinf(saddt_mcusum(0.5, 0.2499, 1000.0))
    # the asymptotic formula is far from the simulated operating point at
    # N=20: regression-pin its own value, which underestimates 1000 badly
    assert arl0_mcusum(20, 0.5, 24.15) == pytest.approx(13.5658, abs=1e-3)
    d = solve_mcusum_threshold(20, 0.5, 1000.0)
    assert arl0_mcusum(20, 0.5, d) == pytest.approx(1000.0, rel=1e-6)


def test_glrt_tail_closed_form_vs_quadrature():
    for u0 in (0.5, 7.08 / math.sqrt(20.0), 3.0):
        quad, _ = integrate.quad(
            lambda u: 0.5 * u * math.exp(-2.0 * CONSTANTS.rho_plus * u), u0, np.inf)
        assert glrt_tail_integral(u0) == pytest.approx(quad, rel=1e-10)


def test_arl0_glrt_known_point_and_window_monotonicity():
    val = arl0_glrt(20, 7.08, 20)
    assert val == pytest.approx(859.224, rel=1e-5)     # frozen formula value
    assert abs(val - 1000.0) / 1000.0 < 0.25
    arls = [arl0_glrt(20, 7.08, w) for w in (5, 10, 20, 100, 10_000)]
    assert all(x > y for x, y in zip(arls, arls[1:]))  # wider scan alarms sooner
    arls_b = [arl0_glrt(20, b, 20) for b in (6.0, 6.5, 7.0, 7.5)]
    assert all(x < y for x, y in zip(arls_b, arls_b[1:]))


def test_solve_glrt_threshold_anchor():
    b = solve_glrt_threshold(20, 20, 1000.0)
    assert 6.6 <= b <= 7.6
    assert arl0_glrt(20, b, 20) == pytest.approx(1000.0, rel=1e-6)


def test_saddt_glrt():
    assert saddt_glrt(4.0, 1000.0) == pytest.approx(3.4539, abs=1e-3)


def test_sr_thresholds_reference_values():
    b_mix, b_sum = sr_thresholds(20, 1000.0, 0.5)
    assert b_mix == pytest.approx(747.29, rel=1e-4)
    assert b_sum == pytest.approx(14945.83, rel=1e-4)
    b_mix0, b_sum0 = sr_thresholds(20, 1000.0, 0.0)
    assert b_mix0 == 1000.0
    assert b_sum0 == 20_000.0


def test_saddt_predictions_decrease_in_signal():
    grids = np.linspace(1.0, 4.0, 6)
    for fn in (lambda s: saddt_mewma(0.05, 3.0, s),
               lambda s: saddt_mma(1.0, s, 1000.0),
               lambda s: saddt_glrt(s, 1000.0),
               lambda s: saddt_mcusum(0.5, math.sqrt(s), 1000.0)):
        vals = [fn(s) for s in grids]
        assert all(x > y for x, y in zip(vals, vals[1:]))


def test_calibrate_by_simulation_small_case():
    model = build_model("identity", 5, 1.0)
    cfg = ChartConfig("mewma", threshold=0.5, beta=0.2)
    res = calibrate_by_simulation(cfg, model, 150.0, reps=1500, seed=3)
    assert res.method == "simulation"
    assert abs(res.predicted_arl0 - 150.0) <= 2.0 * res.params["arl0_se"]
    # deterministic given the seed
    res2 = calibrate_by_simulation(cfg, model, 150.0, reps=1500, seed=3)
    assert res2.params["threshold"] == res.params["threshold"]
    assert res2.predicted_arl0 == res.predicted_arl0
    with pytest.raises(ValueError):
        calibrate_by_simulation(cfg, model, 150.0, reps=500, seed=3)


def test_calibrate_nonconvergence_raises():
    model = build_model("identity", 3, 1.0)
    cfg = ChartConfig("mewma", threshold=1e-6, beta=0.2)
    with pytest.raises(CalibrationError):
        calibrate_by_simulation(cfg, model, 50.0, reps=1000, seed=1,
                                max_rounds=2)
