import numpy as np
import pytest

from seqwatch import build_model, dense, marginal_variance, quad_form
from seqwatch.covariance import sample_shock, sample_shock_block


def _random_model(rng):
    kind = rng.choice(["identity", "intraclass", "loading"])
    n = int(rng.integers(1, 51))
    sigma_e2 = float(rng.uniform(0.2, 3.0))
    if kind == "identity":
        return build_model("identity", n, sigma_e2)
    theta = float(rng.uniform(0.0, 8.0))
    if kind == "intraclass":
        return build_model("intraclass", n, sigma_e2, theta=theta)
    g = rng.standard_normal(n)
    g /= np.linalg.norm(g)
    return build_model("loading", n, sigma_e2, theta=theta, gamma=g)


def test_build_intraclass_unit_marginal():
    # sigma_e^2 = 0.9 with sigma_a^2 = 1 gives unit per-channel variance
    m = build_model("intraclass", 10, 0.9, theta=1.0 / 0.9)
    assert m.sigma_e2 + m.sigma_a2 / 10 == pytest.approx(1.0, abs=1e-12)
    assert m.rho == pytest.approx((1 / 0.9) / (1 + 1 / 0.9), abs=1e-15)
    assert marginal_variance(m) == pytest.approx(1.0, abs=1e-12)


def test_build_identity():
    m = build_model("identity", 20, 1.0)
    assert m.rho == 0.0
    sigma, inv, det = dense(m)
    assert np.array_equal(sigma, np.eye(20))
    assert det == 1.0


def test_build_loading_dense():
    m = build_model("loading", 2, 1.0, theta=1.0, gamma=[1.0, 0.0])
    assert m.rho == pytest.approx(0.5)
    sigma, inv, det = dense(m)
    assert np.allclose(sigma, np.diag([2.0, 1.0]))
    assert det == pytest.approx(2.0)


def test_build_rejections():
    with pytest.raises(ValueError):
        build_model("identity", 5, 0.0)
    with pytest.raises(ValueError):
        build_model("intraclass", 5, 1.0, theta=-0.1)
    with pytest.raises(ValueError):
        build_model("identity", 5, 1.0, theta=1.0)
    with pytest.raises(ValueError):
        build_model("loading", 3, 1.0, theta=1.0)  # gamma missing
    with pytest.raises(ValueError):
        build_model("loading", 3, 1.0, theta=1.0, gamma=[1.0, 0.0])  # length
    with pytest.raises(ValueError):
        build_model("loading", 2, 1.0, theta=1.0, gamma=[1.0, 1.0])  # norm
    with pytest.raises(ValueError):
        build_model("intraclass", 2, 1.0, theta=1.0, gamma=[1.0, 0.0])
    with pytest.raises(ValueError):
        build_model("unknown", 2, 1.0)


def test_gamma_renormalized_within_tolerance():
    g = np.array([1.0 + 5e-10, 0.0])
    m = build_model("loading", 2, 1.0, theta=1.0, gamma=g)
    assert np.linalg.norm(m.gamma) == pytest.approx(1.0, abs=1e-15)


def test_quad_form_examples():
    ident = build_model("identity", 2, 1.0)
    assert quad_form(ident, [3.0, 4.0]) == pytest.approx(25.0)

    intra = build_model("intraclass", 2, 1.0, theta=1.0)
    # oracle: invert the dense Sigma = [[1.5, .5], [.5, 1.5]]
    sigma = np.array([[1.5, 0.5], [0.5, 1.5]])
    v = np.array([1.0, 1.0])
    expect = v @ np.linalg.inv(sigma) @ v
    assert expect == pytest.approx(1.0)
    assert quad_form(intra, v) == pytest.approx(expect, rel=1e-12)

    load = build_model("loading", 2, 1.0, theta=1.0, gamma=[1.0, 0.0])
    expect = v @ np.linalg.inv(np.diag([2.0, 1.0])) @ v
    assert expect == pytest.approx(1.5)
    assert quad_form(load, v) == pytest.approx(expect, rel=1e-12)


def test_quad_form_length_check():
    m = build_model("identity", 3, 1.0)
    with pytest.raises(ValueError):
        quad_form(m, [1.0, 2.0])


def test_dense_intraclass_det():
    m = build_model("intraclass", 2, 1.0, theta=1.0)
    _, _, det = dense(m)
    assert det == pytest.approx(2.0)
    with pytest.raises(ValueError):
        dense(build_model("identity", 2001, 1.0))


def test_sylvester_identity_random_models():
    rng = np.random.default_rng(20240517)
    for _ in range(40):
        m = _random_model(rng)
        sigma, inv, det = dense(m)
        err = np.max(np.abs(sigma @ inv - np.eye(m.n)))
        assert err <= 1e-10
        assert det == pytest.approx(np.linalg.det(sigma), rel=1e-8)


def test_quad_form_matches_dense_oracle():
    rng = np.random.default_rng(7)
    for _ in range(60):
        m = _random_model(rng)
        _, inv, _ = dense(m)
        v = rng.standard_normal(m.n) * rng.uniform(0.1, 10)
        expect = float(v @ inv @ v)
        got = quad_form(m, v)
        assert abs(got - expect) <= 1e-9 * (1.0 + abs(got))


def test_quad_form_positive_definite():
    rng = np.random.default_rng(99)
    for _ in range(60):
        m = _random_model(rng)
        v = rng.standard_normal(m.n)
        while not np.any(v):
            v = rng.standard_normal(m.n)
        assert quad_form(m, v) > 0.0
        assert quad_form(m, np.zeros(m.n)) == 0.0


def test_theta_zero_collapses_to_identity():
    intra = build_model("intraclass", 6, 1.3, theta=0.0)
    load = build_model("loading", 6, 1.3, theta=0.0,
                       gamma=np.ones(6) / np.sqrt(6))
    ident = build_model("identity", 6, 1.3)
    rng = np.random.default_rng(3)
    v = rng.standard_normal(6)
    assert quad_form(intra, v) == quad_form(ident, v)
    assert quad_form(load, v) == quad_form(ident, v)


@pytest.mark.parametrize("kind,kwargs,label", [
    ("identity", dict(sigma_e2=1.0), "identity"),
    ("intraclass", dict(sigma_e2=0.5, theta=10.0), "intraclass"),
    ("loading", dict(sigma_e2=1.0, theta=1.0, gamma=[1.0, 0.0]), "loading"),
])
def test_sample_shock_moments(kind, kwargs, label):
    n = 10 if kind != "loading" else 2
    if kind == "loading":
        kwargs = dict(kwargs)
    m = build_model(kind, n, **kwargs)
    rng = np.random.default_rng(2024)
    draws = sample_shock_block(m, rng, 100_000)
    sigma, _, _ = dense(m)
    emp = np.cov(draws, rowvar=False)
    # se of a sample covariance entry
    mm = draws.shape[0]
    for i in range(n):
        for j in range(n):
            se = np.sqrt((sigma[i, i] * sigma[j, j] + sigma[i, j] ** 2) / mm)
            assert abs(emp[i, j] - sigma[i, j]) <= 5 * se
    if kind == "intraclass":
        # unit channel variance by construction: 0.5 + 5/10
        assert np.allclose(np.diag(sigma), 1.0)


def test_sample_shock_single_draw_matches_block():
    m = build_model("intraclass", 4, 1.0, theta=2.0)
    g1 = np.random.Generator(np.random.Philox(key=11))
    g2 = np.random.Generator(np.random.Philox(key=11))
    one = sample_shock(m, g1)
    block = sample_shock_block(m, g2, 3)
    assert np.array_equal(one, block[0])
