"""Covariance models for cross-sectionally dependent Gaussian panels.

Three structures are supported, all with O(N) algebra so no dense N x N
matrix is ever materialized on the hot path:

* ``identity``    -- Sigma = sigma_e^2 * I
* ``intraclass``  -- Sigma = sigma_e^2 * (I + (theta/N) * J), equicorrelated
                     channels driven by one shared factor
* ``loading``     -- Sigma = sigma_e^2 * (I + theta * g g^T) for a unit
                     loading vector g

Inverses and determinants come from the rank-one update identities, and
sampling uses the generative factor form (shared factor + idiosyncratic
noise) rather than a matrix square root.
"""

from dataclasses import dataclass, field

import numpy as np

KINDS = ("identity", "intraclass", "loading")

_GAMMA_NORM_TOL = 1e-9  # unit-norm slack accepted for loading vectors
_DENSE_N_GUARD = 2000   # refuse accidental huge dense allocations


@dataclass(frozen=True)
class CovModel:
    """Validated covariance structure; immutable and thread-safe to share."""

    kind: str
    n: int
    sigma_e2: float
    theta: float
    gamma: np.ndarray | None = None
    rho: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "rho", self.theta / (1.0 + self.theta))

    @property
    def sigma_a2(self) -> float:
        """Shared-factor variance theta * sigma_e^2."""
        return self.theta * self.sigma_e2


def build_model(kind: str, n: int, sigma_e2: float, theta: float = 0.0,
                gamma=None) -> CovModel:
    """Validate parameters and return a covariance model.

    ``gamma`` is required exactly for ``loading`` and must have unit
    Euclidean norm within 1e-9 (it is renormalized to machine precision).
    ``identity`` requires theta == 0.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown covariance kind {kind!r}; expected one of {KINDS}")
    n = int(n)
    if n < 1:
        raise ValueError("channel count n must be >= 1")
    sigma_e2 = float(sigma_e2)
    if not sigma_e2 > 0.0:
        raise ValueError("sigma_e2 must be positive")
    theta = float(theta)
    if theta < 0.0:
        raise ValueError("theta must be >= 0")
    if kind == "identity" and theta != 0.0:
        raise ValueError("identity model requires theta == 0")
    if kind == "loading":
        if gamma is None:
            raise ValueError("loading model requires a gamma vector")
        g = np.asarray(gamma, dtype=np.float64).copy()
        if g.shape != (n,):
            raise ValueError(f"gamma must have length {n}, got shape {g.shape}")
        norm = float(np.linalg.norm(g))
        if abs(norm - 1.0) > _GAMMA_NORM_TOL:
            raise ValueError(f"gamma must have unit norm (|norm-1| = {abs(norm-1.0):.2e})")
        g /= norm
        g.setflags(write=False)
    else:
        if gamma is not None:
            raise ValueError(f"gamma is only meaningful for the loading model, not {kind!r}")
        g = None
    return CovModel(kind=kind, n=n, sigma_e2=sigma_e2, theta=theta, gamma=g)


def quad_form(model: CovModel, v) -> float:
    """v^T Sigma^{-1} v in O(N), without forming Sigma^{-1}."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (model.n,):
        raise ValueError(f"vector must have length {model.n}, got shape {v.shape}")
    vv = float(v @ v)
    if model.kind == "identity" or model.theta == 0.0:
        return vv / model.sigma_e2
    if model.kind == "intraclass":
        s = float(v.sum())
        return (vv - (model.rho / model.n) * s * s) / model.sigma_e2
    s = float(model.gamma @ v)
    return (vv - model.rho * s * s) / model.sigma_e2


def marginal_variance(model: CovModel) -> float:
    """Average per-channel variance trace(Sigma)/N.

    This is the scale a dependence-blind chart sees: sigma_e^2 (1 + theta/N)
    for both factor models (gamma has unit norm), sigma_e^2 for identity.
    """
    return model.sigma_e2 * (1.0 + model.theta / model.n)


def factor_direction(model: CovModel) -> np.ndarray | None:
    """Unit vector multiplying the shared factor, or None for identity."""
    if model.kind == "identity" or model.theta == 0.0:
        return None
    if model.kind == "intraclass":
        return np.full(model.n, 1.0 / np.sqrt(model.n))
    return np.asarray(model.gamma, dtype=np.float64)


def sample_shock_block(model: CovModel, rng: np.random.Generator, m: int) -> np.ndarray:
    """Draw ``m`` noise vectors Z ~ N(0, Sigma) as an (m, N) array.

    Stream layout is fixed: each step consumes N idiosyncratic normals
    followed by one factor normal (factor models only).  Chunked calls on
    the same generator produce the same sequence as one large call.
    """
    n = model.n
    sd_e = np.sqrt(model.sigma_e2)
    g = factor_direction(model)
    if g is None:
        return sd_e * rng.standard_normal((m, n))
    raw = rng.standard_normal((m, n + 1))
    sd_a = np.sqrt(model.sigma_a2)
    return sd_e * raw[:, :n] + np.outer(sd_a * raw[:, n], g)


def sample_shock(model: CovModel, rng: np.random.Generator) -> np.ndarray:
    """One draw of Z ~ N(0, Sigma) via the factor construction."""
    return sample_shock_block(model, rng, 1)[0]


def dense(model: CovModel):
    """Explicit (Sigma, Sigma^{-1}, det Sigma) for testing and small N.

    The determinant uses the closed form sigma_e^{2N} (1 + theta).
    """
    n = model.n
    if n > _DENSE_N_GUARD:
        raise ValueError(f"dense() refused for n = {n} > {_DENSE_N_GUARD}")
    s2 = model.sigma_e2
    eye = np.eye(n)
    if model.kind == "identity" or model.theta == 0.0:
        sigma = s2 * eye
        inv = eye / s2
    elif model.kind == "intraclass":
        j = np.ones((n, n))
        sigma = s2 * (eye + (model.theta / n) * j)
        inv = (eye - (model.rho / n) * j) / s2
    else:
        gg = np.outer(model.gamma, model.gamma)
        sigma = s2 * (eye + model.theta * gg)
        inv = (eye - model.rho * gg) / s2
    det = s2 ** n * (1.0 + model.theta)
    return sigma, inv, det
