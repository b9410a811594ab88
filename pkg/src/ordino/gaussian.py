"""Univariate and bivariate standard normal primitives.

The bivariate CDF follows Genz's BVNU routine (Drezner-Wesolowsky style
Gauss-Legendre integration over the correlation, with the asymptotic
expansion of the high-correlation branch). Everything is vectorised over
numpy arrays with broadcasting.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import integrate, special

TWO_PI = 2.0 * math.pi
_SQRT_2PI = math.sqrt(TWO_PI)

# Gauss-Legendre half-rules on [0, 1]: nodes x_i and weights w_i, mirrored to
# [0, 2] as 1 -/+ x_i below.
_GL6 = (
    np.array([0.9324695142031522, 0.6612093864662647, 0.2386191860831970]),
    np.array([0.1713244923791705, 0.3607615730481384, 0.4679139345726904]),
)
_GL12 = (
    np.array([0.9815606342467191, 0.9041172563704750, 0.7699026741943050,
              0.5873179542866171, 0.3678314989981802, 0.1252334085114692]),
    np.array([0.04717533638651177, 0.1069393259953183, 0.1600783285433464,
              0.2031674267230659, 0.2334925365383547, 0.2491470458134029]),
)
_GL20 = (
    np.array([0.9931285991850949, 0.9639719272779138, 0.9122344282513259,
              0.8391169718222188, 0.7463319064601508, 0.6360536807265150,
              0.5108670019508271, 0.3737060887154196, 0.2277858511416451,
              0.07652652113349733]),
    np.array([0.01761400713915212, 0.04060142980038694, 0.06267204833410906,
              0.08327674157670475, 0.1019301198172404, 0.1181945319615184,
              0.1316886384491766, 0.1420961093183821, 0.1491729864726037,
              0.1527533871307259]),
)


def _mirror(rule):
    x, w = rule
    return np.concatenate([1.0 - x, 1.0 + x]), np.concatenate([w, w])


_RULES = {6: _mirror(_GL6), 12: _mirror(_GL12), 20: _mirror(_GL20)}


def std_normal_cdf(z):
    """Standard normal CDF, accepting +/-inf."""
    return special.ndtr(z)


def std_normal_pdf(z):
    z = np.asarray(z, dtype=float)
    return np.exp(-0.5 * z * z) / _SQRT_2PI


def std_normal_inv_cdf(p):
    """Inverse of :func:`std_normal_cdf` on the open unit interval."""
    arr = np.asarray(p, dtype=float)
    if np.any(~((arr > 0.0) & (arr < 1.0))):
        raise ValueError("probability must lie strictly inside (0, 1)")
    out = special.ndtri(arr)
    return float(out) if np.ndim(p) == 0 else out


def _check_rho(rho):
    r = np.asarray(rho, dtype=float)
    if np.any(~(np.abs(r) < 1.0)):
        raise ValueError("correlation must satisfy |rho| < 1")
    return r


def _bvnu_moderate(h, k, r, n_nodes):
    # P(X > h, Y > k) for |r| < 0.925
    x, w = _RULES[n_nodes]
    hk = h * k
    hs = 0.5 * (h * h + k * k)
    if np.ndim(r) == 0:
        asr = 0.5 * math.asin(r)
        sn = np.sin(asr * x)[None, :]
    else:
        asr = 0.5 * np.arcsin(r)
        sn = np.sin(asr[:, None] * x[None, :])
    terms = np.exp((sn * hk[:, None] - hs[:, None]) / (1.0 - sn * sn))
    bvn = terms @ w if np.ndim(r) == 0 else np.sum(terms * w[None, :], axis=1)
    return bvn * asr / TWO_PI + special.ndtr(-h) * special.ndtr(-k)


def _bvnu_high(h, k, r):
    # P(X > h, Y > k) for 0.925 <= |r| < 1
    x, w = _RULES[20]
    neg = r < 0
    k = np.where(neg, -k, k)
    hk = h * k
    as_ = 1.0 - r * r
    a = np.sqrt(as_)
    bs = (h - k) ** 2
    asr = -0.5 * (bs / as_ + hk)
    c = (4.0 - hk) / 8.0
    d = (12.0 - hk) / 80.0
    with np.errstate(over="ignore", under="ignore"):
        bvn = np.where(
            asr > -100.0,
            a * np.exp(np.maximum(asr, -100.0))
            * (1.0 - c * (bs - as_) * (1.0 - d * bs) / 3.0 + c * d * as_ * as_),
            0.0,
        )
        b = np.sqrt(bs)
        sp = _SQRT_2PI * special.ndtr(-b / a)
        tail = np.exp(-0.5 * np.maximum(hk, -100.0)) * sp * b * (1.0 - c * bs * (1.0 - d * bs) / 3.0)
        bvn = bvn - np.where(hk > -100.0, tail, 0.0)
        half = 0.5 * a
        xs = (half[:, None] * x[None, :]) ** 2
        asr2 = -0.5 * (bs[:, None] / xs + hk[:, None])
        keep = asr2 > -100.0
        sp2 = 1.0 + c[:, None] * xs * (1.0 + 5.0 * d[:, None] * xs)
        rs = np.sqrt(1.0 - xs)
        ep = np.exp(-(hk[:, None] / 2.0) * xs / (1.0 + rs) ** 2) / rs
        quad = np.where(keep, np.exp(np.maximum(asr2, -100.0)) * (sp2 - ep), 0.0)
    bvn = (half * np.sum(quad * w[None, :], axis=1) - bvn) / TWO_PI
    pos = r > 0
    out = np.empty_like(bvn)
    out[pos] = bvn[pos] + special.ndtr(-np.maximum(h[pos], k[pos]))
    m = ~pos
    hm, km, bm = h[m], k[m], bvn[m]
    lower = np.where(hm < 0, special.ndtr(km) - special.ndtr(hm),
                     special.ndtr(-hm) - special.ndtr(-km))
    out[m] = np.where(hm >= km, -bm, lower - bm)
    return out


def _bvnu(h, k, r):
    if np.ndim(r) == 0:
        ar = abs(r)
        if r == 0.0:
            out = special.ndtr(-h) * special.ndtr(-k)
        elif ar < 0.925:
            out = _bvnu_moderate(h, k, r, 6 if ar < 0.3 else 12 if ar < 0.75 else 20)
        else:
            out = _bvnu_high(h, k, np.full(h.shape, r))
        return np.clip(out, 0.0, 1.0)
    out = np.empty_like(h)
    ar = np.abs(r)
    zero = r == 0.0
    out[zero] = special.ndtr(-h[zero]) * special.ndtr(-k[zero])
    bands = [
        (~zero & (ar < 0.3), 6),
        (~zero & (ar >= 0.3) & (ar < 0.75), 12),
        ((ar >= 0.75) & (ar < 0.925), 20),
    ]
    for mask, n in bands:
        if np.any(mask):
            out[mask] = _bvnu_moderate(h[mask], k[mask], r[mask], n)
    high = ar >= 0.925
    if np.any(high):
        out[high] = _bvnu_high(h[high], k[high], r[high])
    return np.clip(out, 0.0, 1.0)


def bvn_cdf(a, b, rho):
    """Bivariate standard normal CDF ``P(X <= a, Y <= b)`` with correlation rho.

    Arguments broadcast against each other. Infinite limits short-circuit to
    the univariate marginal or to 0/1 before any quadrature.
    """
    r = _check_rho(rho)
    scalar_r = r.ndim == 0
    a, b, r = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(b, dtype=float), r)
    shape = a.shape
    a, b, r = a.ravel(), b.ravel(), r.ravel()
    out = np.zeros(a.shape)
    lo = (a == -np.inf) | (b == -np.inf)
    a_top = (a == np.inf) & ~lo
    b_top = (b == np.inf) & ~lo & ~a_top
    out[a_top] = special.ndtr(b[a_top])
    out[b_top] = special.ndtr(a[b_top])
    fin = ~(lo | a_top | b_top)
    if np.any(fin):
        out[fin] = _bvnu(-a[fin], -b[fin], float(r[0]) if scalar_r else r[fin])
    out = out.reshape(shape)
    return float(out) if out.ndim == 0 else out


def bvn_pdf(a, b, rho):
    r = _check_rho(rho)
    s2 = 1.0 - r * r
    q = (a * a - 2.0 * r * a * b + b * b) / s2
    return np.exp(-0.5 * q) / (TWO_PI * np.sqrt(s2))


def bvn_cdf_with_grad(a, b, rho):
    """Return ``(F, dF/da, dF/db, dF/drho)`` for arrays of limits and scalar rho.

    Uses dF/da = phi(a) Phi((b - rho a)/sqrt(1 - rho^2)) and the Plackett
    identity dF/drho = phi_2(a, b; rho). Infinite limits give the exact
    limiting derivatives (zero along an infinite coordinate).
    """
    r = float(_check_rho(rho))
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    F = bvn_cdf(a, b, r)
    F = np.asarray(F, dtype=float)
    Fa = np.zeros(F.shape)
    Fb = np.zeros(F.shape)
    Fr = np.zeros(F.shape)
    lo = (a == -np.inf) | (b == -np.inf)
    a_top = (a == np.inf) & ~lo
    b_top = (b == np.inf) & ~lo
    both = a_top & b_top
    only_a = a_top & ~both
    only_b = b_top & ~both
    Fb[only_a] = std_normal_pdf(b[only_a])
    Fa[only_b] = std_normal_pdf(a[only_b])
    fin = ~(lo | a_top | b_top)
    if np.any(fin):
        af, bf = a[fin], b[fin]
        s = math.sqrt(1.0 - r * r)
        Fa[fin] = std_normal_pdf(af) * special.ndtr((bf - r * af) / s)
        Fb[fin] = std_normal_pdf(bf) * special.ndtr((af - r * bf) / s)
        Fr[fin] = bvn_pdf(af, bf, r)
    return F, Fa, Fb, Fr


def bvn_cdf_oracle(a, b, rho, box=8.5):
    """Slow reference value of the bivariate CDF for tests.

    Integrates the explicit joint density over ``[-box, min(a, box)] x
    [-box, min(b, box)]``. The inner integral over the second coordinate is
    taken in closed form through the conditional normal law, the outer one
    by adaptive Gauss-Kronrod quadrature. Independent of the
    correlation-space integration used by :func:`bvn_cdf`.
    """
    r = float(_check_rho(rho))
    a = float(a)
    b = float(b)
    if a == -np.inf or b == -np.inf:
        return 0.0
    hi_a = min(a, box)
    hi_b = min(b, box)
    if hi_a <= -box or hi_b <= -box:
        return 0.0
    s = math.sqrt(1.0 - r * r)

    def inner(x):
        # P(-box < Y <= hi_b | X = x)
        mu = r * x
        return special.ndtr((hi_b - mu) / s) - special.ndtr((-box - mu) / s)

    def integrand(x):
        return math.exp(-0.5 * x * x) / _SQRT_2PI * inner(x)

    # split at the conditional-mean crossing points to help the adaptive rule
    pts = sorted({p for p in (0.0, hi_b / r if r else 0.0) if -box < p < hi_a})
    val, _ = integrate.quad(integrand, -box, hi_a, points=pts or None,
                            epsabs=1e-14, epsrel=1e-13, limit=200)
    return val


def sample_bvn(rho, rng, size=None):
    """Draw correlated standard normal pairs ``(e1, e2)``.

    ``e1 = z1`` and ``e2 = rho z1 + sqrt(1 - rho^2) z2`` with ``z1``, ``z2``
    independent standard normals from ``rng``. With ``size=None`` a single
    pair of floats is returned, otherwise two arrays of that size.
    """
    r = float(_check_rho(rho))
    n = 1 if size is None else size
    z = rng.standard_normal((2, n))
    e1 = z[0]
    e2 = r * z[0] + math.sqrt(1.0 - r * r) * z[1]
    if size is None:
        return float(e1[0]), float(e2[0])
    return e1, e2
