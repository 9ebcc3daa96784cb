"""Differentially private release of layered estimates via the Laplace mechanism.

The estimate's sensitivity follows from uniform stability: every sampled
coalition of size ``k`` moves by at most ``2 gamma_k`` when one other point
changes, and averaging over layers gives

    sens = L^2 kappa^2 / (n lam) * H_{n-1}.

Because a query reads any given point only with probability ``p`` (see
:func:`strata_shap.layered.data_touch_bound`), amplification by subsampling
lets a mechanism with local budget ``eps0 = ln((e^eps - 1)/p + 1)`` meet
``eps`` overall, so the noise scale is ``sens / eps0``. One call is one
release; budgets across repeated queries are the caller's to compose.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import digamma

from .core import ShapleyError, ShapleyEstimate
from .layered import _rng, data_touch_bound, layered_estimate_all

NOISE_STREAM = 2


class CertificateMismatchError(ShapleyError):
    pass


def harmonic(m):
    """``H_m = sum_{k=1}^m 1/k``."""
    if m < 1:
        return 0.0
    if m < 10_000:
        return math.fsum(1.0 / k for k in range(1, m + 1))
    return float(digamma(m + 1) + np.euler_gamma)


def sensitivity(n, L, kappa, lam):
    """``L^2 kappa^2 H_{n-1} / (n lam)``."""
    if int(n) != n or n < 2:
        raise ShapleyError(f"n must be an integer >= 2, got {n}")
    if not (L > 0 and kappa > 0 and lam > 0):
        raise ShapleyError("L, kappa and lam must be positive")
    return L**2 * kappa**2 / (n * lam) * harmonic(int(n) - 1)


def noise_scale(sens, epsilon, p):
    """Laplace scale ``sens / ln((e^eps - 1)/p + 1)``; equals ``sens / eps`` at ``p = 1``."""
    if not sens > 0:
        raise ShapleyError("sensitivity must be positive")
    if not epsilon > 0:
        raise ShapleyError("epsilon must be positive")
    if not 0 < p <= 1:
        raise ShapleyError("sampling probability must lie in (0, 1]")
    if epsilon > 1.0:
        # (e^eps - 1)/p + 1 = (e^eps / p) (1 + (p - 1) e^-eps), finite for any eps
        eps0 = epsilon - math.log(p) + math.log1p((p - 1.0) * math.exp(-epsilon))
    else:
        eps0 = math.log1p(math.expm1(epsilon) / p)
    return sens / eps0


def laplace_from_uniform(u, scale):
    """Inverse CDF of Laplace(0, scale) at ``u + 1/2`` for ``u`` in (-1/2, 1/2)."""
    u = np.asarray(u, dtype=np.float64)
    return -scale * np.sign(u) * np.log1p(-2.0 * np.abs(u))


def laplace_sample(scale, rng, size=None):
    """Draw Laplace(0, scale) noise; ``rng`` is a Generator or an integer seed."""
    if not scale > 0:
        raise ShapleyError("scale must be positive")
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    u = rng.random(size) - 0.5
    out = laplace_from_uniform(u, scale)
    return float(out) if size is None else out


@dataclass(frozen=True)
class PrivacyParams:
    """Budget and stability constants for one release, with the derived noise."""

    epsilon: float
    L: float
    kappa: float
    lam: float
    p: float
    sensitivity: float
    sigma: float = field(init=False)

    def __post_init__(self):
        if not 0 < self.p <= 1:
            raise ShapleyError("sampling probability must lie in (0, 1]")
        object.__setattr__(self, "sigma", noise_scale(self.sensitivity, self.epsilon, self.p))

    @property
    def amplified(self):
        return self.p < 1.0

    @classmethod
    def derive(cls, n, alpha, beta, c, epsilon, L, kappa, lam):
        if not epsilon > 0:
            raise ShapleyError("epsilon must be positive")
        p = data_touch_bound(n, alpha, beta, c)
        return cls(float(epsilon), float(L), float(kappa), float(lam), p, sensitivity(n, L, kappa, lam))

    @classmethod
    def for_value_function(cls, v, alpha, beta, c, epsilon):
        cert = v.certificate
        if cert is None:
            raise CertificateMismatchError("value function carries no stability certificate")
        return cls.derive(v.n, alpha, beta, c, epsilon, cert.L, cert.kappa, cert.lam)

    def record(self):
        return {
            "epsilon": self.epsilon,
            "sigma": self.sigma,
            "p": self.p,
            "sens": self.sensitivity,
            "L": self.L,
            "kappa": self.kappa,
            "lambda": self.lam,
            "amplified": self.amplified,
        }


def _check_certificate(v, params):
    cert = v.certificate
    if cert is None:
        raise CertificateMismatchError("value function carries no stability certificate")
    if not cert.matches(params.L, params.kappa, params.lam):
        raise CertificateMismatchError(
            f"value function certifies (L={cert.L}, kappa={cert.kappa}, lam={cert.lam}) "
            f"but privacy params use (L={params.L}, kappa={params.kappa}, lam={params.lam})"
        )


def private_layered_all(v, alpha, beta, params, c=None, seed=0, points=None):
    """Layered estimates plus independent Laplace(sigma) noise per point.

    Noise for point ``i`` comes from its own stream derived from ``(seed, i)``.
    """
    _check_certificate(v, params)
    est = layered_estimate_all(v, alpha, beta, c, seed, points=points)
    noise = np.array([laplace_sample(params.sigma, _rng(seed, i, NOISE_STREAM)) for i in est.points])
    metadata = dict(est.metadata)
    metadata["non_private"] = est.values.tolist()
    metadata["privacy"] = params.record()
    out = ShapleyEstimate(
        values=est.values + noise,
        points=est.points,
        method="layered-private",
        evaluations_used=est.evaluations_used,
        points_touched=est.points_touched,
        n=est.n,
        metadata=metadata,
    )
    out.non_private = est.values
    return out


def private_layered_estimate(v, i, alpha, beta, params, c=None, seed=0):
    """Private value of one point; the estimate's metadata keeps the noise record."""
    return private_layered_all(v, alpha, beta, params, c, seed, points=[i])
