"""Normal-distribution kernels.

Univariate CDF and quantile, the bivariate CDF, rectangle probabilities of
``N_p(0, Sigma)`` by randomized quasi-Monte Carlo, and the Gaussian copula.

The scalar kernels are numba-jitted so the sampler and the estimators can
call them from compiled loops. ``std_normal_quantile`` returns ``-inf`` at 0
and ``+inf`` at 1.
"""

import math
import warnings
from dataclasses import dataclass

import numba
import numpy as np
from scipy.special import ndtr, ndtri
from scipy.stats import qmc

SQRT2 = math.sqrt(2.0)
TWO_PI = 2.0 * math.pi


@numba.njit(cache=True)
def std_normal_cdf(x):
    return 0.5 * math.erfc(-x / SQRT2)


@numba.njit(cache=True)
def _ppnd16(p):
    # Wichura's AS241, good to about 1e-16 relative.
    q = p - 0.5
    if abs(q) <= 0.425:
        r = 0.180625 - q * q
        num = (((((((2509.0809287301226727 * r + 33430.575583588128105) * r
                    + 67265.770927008700853) * r + 45921.953931549871457) * r
                  + 13731.693765509461125) * r + 1971.5909503065514427) * r
                + 133.14166789178437745) * r + 3.387132872796366608)
        den = (((((((5226.495278852545925 * r + 28729.085735721942674) * r
                    + 39307.89580009271061) * r + 21213.794301586595867) * r
                  + 5394.1960214247511077) * r + 687.1870074920579083) * r
                + 42.313330701600911252) * r + 1.0)
        return q * num / den
    r = p if q < 0.0 else 1.0 - p
    r = math.sqrt(-math.log(r))
    if r <= 5.0:
        r -= 1.6
        num = (((((((7.7454501427834140764e-4 * r + 0.0227238449892691845833) * r
                    + 0.24178072517745061177) * r + 1.27045825245236838258) * r
                  + 3.64784832476320460504) * r + 5.7694972214606914055) * r
                + 4.6303378461565452959) * r + 1.42343711074968357734)
        den = (((((((1.05075007164441684324e-9 * r + 5.475938084995344946e-4) * r
                    + 0.0151986665636164571966) * r + 0.14810397642748007459) * r
                  + 0.68976733498510000455) * r + 1.6763848301838038494) * r
                + 2.05319162663775882187) * r + 1.0)
    else:
        r -= 5.0
        num = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r
                    + 0.0012426609473880784386) * r + 0.026532189526576123093) * r
                  + 0.29656057182850489123) * r + 1.7848265399172913358) * r
                + 5.4637849111641143699) * r + 6.6579046435011037772)
        den = (((((((2.04426310338993978564e-15 * r + 1.4215117583164458887e-7) * r
                    + 1.8463183175100546818e-5) * r + 7.868691311456132591e-4) * r
                  + 0.0148753612908506148525) * r + 0.13692988092273580531) * r
                + 0.59983220655588793769) * r + 1.0)
    val = num / den
    return -val if q < 0.0 else val


@numba.njit(cache=True)
def std_normal_quantile(u):
    if u <= 0.0:
        return -np.inf
    if u >= 1.0:
        return np.inf
    return _ppnd16(u)


# Gauss-Legendre nodes/weights on [-1, 1] (positive half) for the BVN integral.
_GL_X = (
    np.array([0.9324695142031522, 0.6612093864662647, 0.2386191860831970]),
    np.array([0.9815606342467191, 0.9041172563704750, 0.7699026741943050,
              0.5873179542866171, 0.3678314989981802, 0.1252334085114692]),
    np.array([0.9931285991850949, 0.9639719272779138, 0.9122344282513259,
              0.8391169718222188, 0.7463319064601508, 0.6360536807265150,
              0.5108670019508271, 0.3737060887154196, 0.2277858511416451,
              0.07652652113349733]),
)
_GL_W = (
    np.array([0.1713244923791705, 0.3607615730481384, 0.4679139345726904]),
    np.array([0.04717533638651177, 0.1069393259953183, 0.1600783285433464,
              0.2031674267230659, 0.2334925365383547, 0.2491470458134029]),
    np.array([0.01761400713915212, 0.04060142980038694, 0.06267204833410906,
              0.08327674157670475, 0.1019301198172404, 0.1181945319615184,
              0.1316886384491766, 0.1420961093183821, 0.1491729864726037,
              0.1527533871307259]),
)
_GL_X0, _GL_X1, _GL_X2 = _GL_X
_GL_W0, _GL_W1, _GL_W2 = _GL_W


@numba.njit(cache=True)
def _bvnu(dh, dk, r):
    """Upper orthant P(X > dh, Y > dk) for a standard bivariate normal (Genz)."""
    if dh == np.inf or dk == np.inf:
        return 0.0
    if dh == -np.inf:
        if dk == -np.inf:
            return 1.0
        return std_normal_cdf(-dk)
    if dk == -np.inf:
        return std_normal_cdf(-dh)
    ar = abs(r)
    if ar < 0.3:
        xs, ws = _GL_X0, _GL_W0
    elif ar < 0.75:
        xs, ws = _GL_X1, _GL_W1
    else:
        xs, ws = _GL_X2, _GL_W2
    h = dh
    k = dk
    hk = h * k
    bvn = 0.0
    if ar < 0.925:
        hs = (h * h + k * k) / 2.0
        asr = math.asin(r) / 2.0
        for i in range(xs.shape[0]):
            for sgn in (-1.0, 1.0):
                sn = math.sin(asr * (1.0 + sgn * xs[i]))
                bvn += ws[i] * math.exp((sn * hk - hs) / (1.0 - sn * sn))
        bvn = bvn * asr / TWO_PI + std_normal_cdf(-h) * std_normal_cdf(-k)
    else:
        if r < 0.0:
            k = -k
            hk = -hk
        if ar < 1.0:
            a_s = (1.0 - r) * (1.0 + r)
            a = math.sqrt(a_s)
            bs = (h - k) ** 2
            c = (4.0 - hk) / 8.0
            d = (12.0 - hk) / 80.0
            asr = -(bs / a_s + hk) / 2.0
            if asr > -100.0:
                bvn = a * math.exp(asr) * (1.0 - c * (bs - a_s) * (1.0 - d * bs) / 3.0
                                           + c * d * a_s * a_s)
            if hk > -100.0:
                b = math.sqrt(bs)
                sp = math.sqrt(TWO_PI) * std_normal_cdf(-b / a)
                bvn -= math.exp(-hk / 2.0) * sp * b * (1.0 - c * bs * (1.0 - d * bs) / 3.0)
            a = a / 2.0
            acc = 0.0
            for i in range(xs.shape[0]):
                for sgn in (-1.0, 1.0):
                    x = 1.0 + sgn * xs[i]
                    xs2 = (a * x) ** 2
                    asr = -(bs / xs2 + hk) / 2.0
                    if asr > -100.0:
                        sp = 1.0 + c * xs2 * (1.0 + 5.0 * d * xs2)
                        rs = math.sqrt(1.0 - xs2)
                        ep = math.exp(-(hk / 2.0) * xs2 / (1.0 + rs) ** 2) / rs
                        acc += ws[i] * math.exp(asr) * (sp - ep)
            bvn = (a * acc - bvn) / TWO_PI
        if r > 0.0:
            bvn += std_normal_cdf(-max(h, k))
        elif h >= k:
            bvn = -bvn
        else:
            if h < 0.0:
                lo = std_normal_cdf(k) - std_normal_cdf(h)
            else:
                lo = std_normal_cdf(-h) - std_normal_cdf(-k)
            bvn = lo - bvn
    return min(1.0, max(0.0, bvn))


@numba.njit(cache=True)
def bivariate_normal_cdf(h, k, rho):
    """P(X <= h, Y <= k) for standard normals with correlation ``rho``."""
    return _bvnu(-h, -k, rho)


@numba.vectorize(["float64(float64, float64, float64)"], cache=True)
def bivariate_normal_cdf_vec(h, k, rho):
    return _bvnu(-h, -k, rho)


@dataclass
class MVNResult:
    probability: float
    error: float
    converged: bool
    singular: bool = False


def _factor(sigma):
    """Cholesky factor with eigenvalue clamping for near-singular input."""
    sigma = np.asarray(sigma, dtype=float)
    evals = np.linalg.eigvalsh(sigma)
    if evals[0] < -1e-10:
        raise ValueError(f"covariance is not PSD (smallest eigenvalue {evals[0]:.3g})")
    try:
        return np.linalg.cholesky(sigma), False
    except np.linalg.LinAlgError:
        w, v = np.linalg.eigh(sigma)
        w = np.maximum(w, 1e-12)
        return np.linalg.cholesky((v * w) @ v.T), True


def _reorder(sigma, upper):
    """Order variables by increasing expected truncation mass (Genz-Bretz)."""
    p = len(upper)
    sigma = sigma.copy()
    b = upper.copy()
    perm = np.arange(p)
    chol = np.zeros((p, p))
    y = np.zeros(p)
    for i in range(p):
        best, best_mass = i, np.inf
        for j in range(i, p):
            s = sigma[j, j] - chol[j, :i] @ chol[j, :i]
            s = math.sqrt(max(s, 1e-300))
            mass = std_normal_cdf((b[j] - chol[j, :i] @ y[:i]) / s)
            if mass < best_mass:
                best, best_mass = j, mass
        if best != i:
            for arr in (b, perm):
                arr[[i, best]] = arr[[best, i]]
            sigma[[i, best], :] = sigma[[best, i], :]
            sigma[:, [i, best]] = sigma[:, [best, i]]
            chol[[i, best], :i] = chol[[best, i], :i]
        d = sigma[i, i] - chol[i, :i] @ chol[i, :i]
        chol[i, i] = math.sqrt(max(d, 1e-24))
        for j in range(i + 1, p):
            chol[j, i] = (sigma[j, i] - chol[j, :i] @ chol[i, :i]) / chol[i, i]
        # conditional mean of the chosen variable given it lies below its limit
        t = (b[i] - chol[i, :i] @ y[:i]) / chol[i, i]
        mass = std_normal_cdf(t)
        y[i] = -math.exp(-0.5 * t * t) / math.sqrt(TWO_PI) / mass if mass > 1e-300 else t
        if not np.isfinite(y[i]):
            y[i] = 0.0
    return sigma, b, perm


def _sov_batch(chol, b, w):
    """Separation-of-variables integrand at points ``w`` (m x (p-1))."""
    m = w.shape[0]
    p = len(b)
    y = np.zeros((m, p))
    e = np.full(m, ndtr(b[0] / chol[0, 0]))
    f = e.copy()
    for i in range(1, p):
        y[:, i - 1] = ndtri(np.clip(w[:, i - 1] * e, 1e-300, 1.0 - 1e-16))
        s = y[:, :i] @ chol[i, :i]
        e = ndtr((b[i] - s) / chol[i, i])
        f = f * e
    return f


def mvn_cdf(upper, sigma, tol=1e-4, rng=None, n_random=10, max_points=2**17):
    """Lower-orthant probability ``P(Z <= upper)`` for ``Z ~ N_p(0, sigma)``.

    Uses the Genz separation-of-variables transform on the unit cube with
    scrambled Sobol points. ``n_random`` independent scramblings give the
    error estimate (3 standard errors); points are doubled until the
    estimate drops below ``tol`` or ``max_points`` per scrambling is hit.

    Returns
    -------
    MVNResult
    """
    upper = np.asarray(upper, dtype=float).ravel()
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    p = len(upper)
    if sigma.shape != (p, p):
        raise ValueError("upper and sigma dimensions disagree")
    if np.any(np.isnan(upper)):
        raise ValueError("NaN upper limit")
    if np.any(upper == -np.inf):
        _factor(sigma)
        return MVNResult(0.0, 0.0, True)
    keep = upper < np.inf
    if not keep.any():
        _factor(sigma)
        return MVNResult(1.0, 0.0, True)
    upper = upper[keep]
    sigma = sigma[np.ix_(keep, keep)]
    p = len(upper)
    _, singular = _factor(sigma)
    sd = np.sqrt(np.diag(sigma))
    if p == 1:
        return MVNResult(float(std_normal_cdf(upper[0] / sd[0])), 0.0, True, singular)
    if p == 2:
        r = sigma[0, 1] / (sd[0] * sd[1])
        val = bivariate_normal_cdf(upper[0] / sd[0], upper[1] / sd[1], min(1.0, max(-1.0, r)))
        return MVNResult(float(val), 1e-15, True, singular)
    off = sigma - np.diag(np.diag(sigma))
    if not off.any():
        return MVNResult(float(np.prod(ndtr(upper / sd))), 0.0, True, singular)

    sig_o, b, _ = _reorder(sigma, upper)
    chol, sing2 = _factor(sig_o)
    if singular or sing2:
        warnings.warn("near-singular covariance clamped before factorization",
                      RuntimeWarning, stacklevel=2)
    rng = np.random.default_rng(rng)
    m = 2**9
    while True:
        vals = np.empty(n_random)
        for r in range(n_random):
            pts = qmc.Sobol(p - 1, scramble=True, seed=rng).random(m)
            vals[r] = _sov_batch(chol, b, pts).mean()
        est = float(vals.mean())
        err = float(3.0 * vals.std(ddof=1) / math.sqrt(n_random))
        if err <= tol or m >= max_points:
            return MVNResult(min(1.0, max(0.0, est)), err, err <= tol, singular or sing2)
        m *= 2


def gaussian_copula(u, sigma, tol=1e-4, rng=None):
    """Gaussian copula ``C(u | sigma)``; returns an :class:`MVNResult`."""
    u = np.asarray(u, dtype=float).ravel()
    if np.any((u < 0) | (u > 1)):
        raise ValueError("copula arguments must lie in [0, 1]")
    if np.any(u == 0.0):
        return MVNResult(0.0, 0.0, True)
    z = np.array([std_normal_quantile(x) for x in u])
    return mvn_cdf(z, sigma, tol=tol, rng=rng)

