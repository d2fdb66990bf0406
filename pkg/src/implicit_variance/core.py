"""Distributions, Gaussian special functions and the tail integrals of the model.

Every quantity here is a function of a single group: the true quality ``W``
follows a :class:`QualityDistribution` and the estimate is
``W_hat = W + sigma_G * eps`` with standard normal ``eps``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import special

NO_CUT = -math.inf
"""Second-stage threshold meaning "keep everyone" (one-stage selection)."""

SQRT_2PI = math.sqrt(2.0 * math.pi)

# Probabilities used to place quadrature breakpoints on any distribution.
_LADDER = (1e-15, 1e-12, 1e-9, 1e-6, 1e-4, 1e-3, 1e-2, 0.05, 0.1, 0.2, 0.3,
           0.4, 0.5)


class DomainError(ValueError):
    pass


class UnsupportedClosedForm(NotImplementedError):
    pass


class IntegrationError(RuntimeError):
    def __init__(self, message, achieved):
        super().__init__(f"{message} (achieved error estimate {achieved:.3g})")
        self.achieved = achieved


# --------------------------------------------------------------------------
# standard normal


def norm_pdf(u):
    u = np.asarray(u, dtype=float)
    return np.exp(-0.5 * u * u) / SQRT_2PI


def std_normal(kind, u):
    """pdf, cdf, ccdf or quantile of N(0, 1)."""
    if kind == "pdf":
        return norm_pdf(u)[()]
    if kind == "cdf":
        return special.ndtr(u)
    if kind == "ccdf":
        return special.ndtr(-np.asarray(u, dtype=float))[()]
    if kind == "quantile":
        q = np.asarray(u, dtype=float)
        if np.any((q <= 0.0) | (q >= 1.0)) or np.any(np.isnan(q)):
            raise DomainError(f"normal quantile needs a probability in (0, 1), got {u!r}")
        return special.ndtri(q)[()]
    raise ValueError(f"unknown kind {kind!r}")


def J(u):
    """Integral of the normal cdf from -inf to ``u``, i.e. ``u*Phi(u) + phi(u)``."""
    u = np.asarray(u, dtype=float)
    out = np.empty_like(u)
    pos = u >= 0
    up = u[pos]
    out[pos] = up * special.ndtr(up) + norm_pdf(up)
    un = u[~pos]
    # left tail: phi(u) * (1 - |u| * Mills(|u|)) avoids the u*Phi(u) + phi(u) cancellation
    mills = math.sqrt(math.pi / 2.0) * special.erfcx(-un / math.sqrt(2.0))
    out[~pos] = norm_pdf(un) * (1.0 + un * mills)
    return out[()]


# --------------------------------------------------------------------------
# quality distributions


class QualityDistribution:
    """Common interface of the latent-quality laws.

    Subclasses provide ``pdf``, ``cdf``, ``sf``, ``ppf``, ``isf``, ``mean`` and
    ``support``; everything else is derived.
    """

    def support(self) -> tuple[float, float]:
        raise NotImplementedError

    def effective_support(self) -> tuple[float, float]:
        lo, hi = self.support()
        if not math.isfinite(lo):
            lo = float(self.ppf(1e-16))
        if not math.isfinite(hi):
            hi = float(self.isf(1e-16))
        return lo, hi

    def breakpoints(self) -> np.ndarray:
        lo, hi = self.effective_support()
        probs = np.array(_LADDER)
        pts = np.concatenate([[lo, hi], self.ppf(probs), self.isf(probs)])
        pts = pts[np.isfinite(pts)]
        return np.unique(np.clip(pts, lo, hi))

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        """Inverse-cdf sampling; the uniforms never hit 0 or 1."""
        u = (rng.integers(0, 2**53, size=size) + 0.5) / 2.0**53
        return self.ppf(u)

    def sf(self, w):
        return 1.0 - self.cdf(w)

    def isf(self, q):
        return self.ppf(1.0 - np.asarray(q, dtype=float))


@dataclass(frozen=True)
class Normal(QualityDistribution):
    mu: float = 0.0
    sigma: float = 1.0

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("Normal needs sigma > 0")

    def support(self):
        return -math.inf, math.inf

    def effective_support(self):
        return self.mu - 12.0 * self.sigma, self.mu + 12.0 * self.sigma

    def pdf(self, w):
        return norm_pdf((np.asarray(w, dtype=float) - self.mu) / self.sigma) / self.sigma

    def cdf(self, w):
        return special.ndtr((np.asarray(w, dtype=float) - self.mu) / self.sigma)

    def sf(self, w):
        return special.ndtr((self.mu - np.asarray(w, dtype=float)) / self.sigma)

    def ppf(self, q):
        return self.mu + self.sigma * special.ndtri(q)

    def isf(self, q):
        return self.mu - self.sigma * special.ndtri(q)

    @property
    def mean(self):
        return self.mu


@dataclass(frozen=True)
class Pareto(QualityDistribution):
    """Power law with density ``shape * scale**shape / w**(shape + 1)`` on ``[scale, inf)``."""

    scale: float = 1.0
    shape: float = 3.0

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError("Pareto needs scale > 0")
        if not self.shape > 1:
            raise ValueError("Pareto needs shape > 1 for a finite mean")

    def support(self):
        return self.scale, math.inf

    def effective_support(self):
        k = self.shape
        # tail of the first moment beyond hi is k/(k-1) * scale * q**((k-1)/k) <= 1e-13
        q = (1e-13 * (k - 1.0) / (k * self.scale)) ** (k / (k - 1.0))
        q = min(max(q, 1e-300), 1e-16)
        return self.scale, float(self.isf(q))

    def breakpoints(self):
        lo, hi = self.effective_support()
        geo = lo * np.sqrt(10.0) ** np.arange(0, int(2 * math.log10(hi / lo)) + 1)
        return np.unique(np.concatenate([super().breakpoints(), geo[geo < hi]]))

    def pdf(self, w):
        w = np.asarray(w, dtype=float)
        inside = w >= self.scale
        ws = np.where(inside, w, self.scale)
        return np.where(inside, self.shape * self.scale**self.shape / ws ** (self.shape + 1), 0.0)

    def cdf(self, w):
        return 1.0 - self.sf(w)

    def sf(self, w):
        w = np.asarray(w, dtype=float)
        return np.where(w > self.scale, (self.scale / np.maximum(w, self.scale)) ** self.shape, 1.0)

    def ppf(self, q):
        return self.scale * (1.0 - np.asarray(q, dtype=float)) ** (-1.0 / self.shape)

    def isf(self, q):
        return self.scale * np.asarray(q, dtype=float) ** (-1.0 / self.shape)

    @property
    def mean(self):
        return self.shape * self.scale / (self.shape - 1.0)


@dataclass(frozen=True)
class Uniform(QualityDistribution):
    a: float = 0.0
    b: float = 1.0

    def __post_init__(self):
        if not self.a < self.b:
            raise ValueError("Uniform needs a < b")

    def support(self):
        return self.a, self.b

    def pdf(self, w):
        w = np.asarray(w, dtype=float)
        return np.where((w >= self.a) & (w <= self.b), 1.0 / (self.b - self.a), 0.0)

    def cdf(self, w):
        return np.clip((np.asarray(w, dtype=float) - self.a) / (self.b - self.a), 0.0, 1.0)

    def sf(self, w):
        return np.clip((self.b - np.asarray(w, dtype=float)) / (self.b - self.a), 0.0, 1.0)

    def ppf(self, q):
        return self.a + (self.b - self.a) * np.asarray(q, dtype=float)

    def isf(self, q):
        return self.b - (self.b - self.a) * np.asarray(q, dtype=float)

    @property
    def mean(self):
        return 0.5 * (self.a + self.b)


@dataclass(frozen=True)
class Beta(QualityDistribution):
    """Beta(shape1, shape2) on ``[loc, loc + scale]``."""

    shape1: float = 2.0
    shape2: float = 2.0
    loc: float = 0.0
    scale: float = 1.0

    def __post_init__(self):
        if not (self.shape1 > 0 and self.shape2 > 0 and self.scale > 0):
            raise ValueError("Beta needs positive shapes and scale")

    def support(self):
        return self.loc, self.loc + self.scale

    def pdf(self, w):
        z = (np.asarray(w, dtype=float) - self.loc) / self.scale
        inside = (z > 0) & (z < 1)
        zc = np.where(inside, z, 0.5)
        logp = ((self.shape1 - 1) * np.log(zc) + (self.shape2 - 1) * np.log1p(-zc)
                - special.betaln(self.shape1, self.shape2))
        return np.where(inside, np.exp(logp) / self.scale, 0.0)

    def cdf(self, w):
        z = np.clip((np.asarray(w, dtype=float) - self.loc) / self.scale, 0.0, 1.0)
        return special.betainc(self.shape1, self.shape2, z)

    def sf(self, w):
        z = np.clip((np.asarray(w, dtype=float) - self.loc) / self.scale, 0.0, 1.0)
        return special.betainc(self.shape2, self.shape1, 1.0 - z)

    def ppf(self, q):
        return self.loc + self.scale * special.betaincinv(self.shape1, self.shape2, q)

    def isf(self, q):
        return self.loc + self.scale * (1.0 - special.betaincinv(self.shape2, self.shape1, q))

    @property
    def mean(self):
        return self.loc + self.scale * self.shape1 / (self.shape1 + self.shape2)


@dataclass(frozen=True)
class GaussianMixture(QualityDistribution):
    """Finite mixture; ``components`` is a sequence of ``(weight, mu, sigma)``."""

    components: tuple

    def __post_init__(self):
        comps = tuple((float(w), float(m), float(s)) for w, m, s in self.components)
        if not comps:
            raise ValueError("GaussianMixture needs at least one component")
        if any(w <= 0 or s <= 0 for w, _, s in comps):
            raise ValueError("mixture weights and sigmas must be positive")
        if abs(sum(w for w, _, _ in comps) - 1.0) > 1e-12:
            raise ValueError("mixture weights must sum to 1")
        object.__setattr__(self, "components", comps)

    @property
    def _arrays(self):
        w, m, s = (np.array(c) for c in zip(*self.components))
        return w, m, s

    def support(self):
        return -math.inf, math.inf

    def effective_support(self):
        _, m, s = self._arrays
        return float(np.min(m - 12 * s)), float(np.max(m + 12 * s))

    def breakpoints(self):
        _, m, s = self._arrays
        extra = (m[:, None] + s[:, None] * np.array([-8.0, -4.0, -2.0, 0.0, 2.0, 4.0, 8.0])).ravel()
        return np.unique(np.concatenate([super().breakpoints(), extra]))

    def _mix(self, fn, w):
        x = np.asarray(w, dtype=float)
        weights, m, s = self._arrays
        out = np.zeros_like(x)
        for wt, mu, sd in zip(weights, m, s):
            out = out + wt * fn((x - mu) / sd, sd)
        return out

    def pdf(self, w):
        return self._mix(lambda z, sd: norm_pdf(z) / sd, w)

    def cdf(self, w):
        return self._mix(lambda z, sd: special.ndtr(z), w)

    def sf(self, w):
        return self._mix(lambda z, sd: special.ndtr(-z), w)

    def _invert(self, fn, target, increasing):
        target = np.asarray(target, dtype=float)
        lo_s, hi_s = self.effective_support()
        lo = np.full(target.shape, lo_s - 30.0 * (hi_s - lo_s))
        hi = np.full(target.shape, hi_s + 30.0 * (hi_s - lo_s))
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            below = fn(mid) < target if increasing else fn(mid) > target
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
            if np.all(hi - lo <= 4e-16 * np.maximum(1.0, np.abs(mid))):
                break
        return 0.5 * (lo + hi)

    def ppf(self, q):
        return self._invert(self.cdf, q, increasing=True)

    def isf(self, q):
        return self._invert(self.sf, q, increasing=False)

    @property
    def mean(self):
        weights, m, _ = self._arrays
        return float(weights @ m)


# --------------------------------------------------------------------------
# adaptive Gauss-Kronrod quadrature

_XGK = np.array([
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.0])
_WGK = np.array([
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714])
_WG = np.array([
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327])

NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])
KRONROD_WEIGHTS = np.concatenate([_WGK[:-1], _WGK[::-1]])
GAUSS_WEIGHTS = np.zeros(15)
GAUSS_WEIGHTS[[1, 3, 5, 7, 9, 11, 13]] = np.concatenate([_WG[:-1], _WG[::-1]])


def integrate(f: Callable, breakpoints: Sequence[float], epsabs=1e-12, epsrel=1e-10,
              max_levels=20):
    """Globally adaptive 7/15-point Gauss-Kronrod over consecutive breakpoints.

    ``f`` must accept an array of abscissae of any shape and return either the
    same shape or ``(m, *shape)`` for ``m`` simultaneous integrands. The
    Kronrod/Gauss disagreement is the error estimate; intervals holding too
    much of it are bisected, at most ``max_levels`` times.
    """
    pts = np.unique(np.asarray(breakpoints, dtype=float))
    a, b = pts[:-1], pts[1:]
    if a.size == 0:
        return 0.0
    done = 0.0
    done_err = 0.0
    for level in range(max_levels + 1):
        half = 0.5 * (b - a)
        x = 0.5 * (a + b)[:, None] + half[:, None] * NODES
        fx = np.asarray(f(x), dtype=float)
        k = (fx @ KRONROD_WEIGHTS) * half
        g = (fx @ GAUSS_WEIGHTS) * half
        # QUADPACK's pessimistic rescaling of |K - G|
        mean = (k / (2.0 * half))[..., None]
        resasc = (np.abs(fx - mean) @ KRONROD_WEIGHTS) * half
        resabs = (np.abs(fx) @ KRONROD_WEIGHTS) * half
        err = np.abs(k - g)
        with np.errstate(divide="ignore", invalid="ignore"):
            scaled = resasc * np.minimum(1.0, (200.0 * err / resasc) ** 1.5)
        err = np.where((resasc > 0) & (err > 0), scaled, err)
        err = np.maximum(err, 50.0 * np.finfo(float).eps * resabs)
        if err.ndim > 1:
            err = err.max(axis=0)
        scale = np.abs(np.sum(k, axis=-1) + done)
        tol = max(epsabs, epsrel * float(np.max(scale)))
        if done_err + err.sum() <= tol:
            total = done + np.sum(k, axis=-1)
            return total if np.ndim(total) else float(total)
        if level == max_levels:
            raise IntegrationError("quadrature did not converge", done_err + float(err.sum()))
        # each round may spend at most half of the remaining error budget
        ok = err <= 0.5 * max(tol - done_err, 0.0) / err.size
        done = done + np.sum(k[..., ok], axis=-1)
        done_err += float(np.sum(err[ok]))
        a, b = a[~ok], b[~ok]
        mid = 0.5 * (a + b)
        a, b = np.concatenate([a, mid]), np.concatenate([mid, b])
    raise AssertionError("unreachable")


# --------------------------------------------------------------------------
# the estimate given the group


@dataclass(frozen=True)
class GroupNoise:
    """Standard deviations of the estimation noise of groups A and B.

    The usual labelling has ``sigma_A > sigma_B``; equal values are accepted.
    """

    sigma_A: float
    sigma_B: float

    def __post_init__(self):
        if self.sigma_A < 0 or self.sigma_B < 0:
            raise ValueError("noise standard deviations must be nonnegative")

    def of(self, group: str) -> float:
        if group == "A":
            return self.sigma_A
        if group == "B":
            return self.sigma_B
        raise ValueError(f"group must be 'A' or 'B', got {group!r}")

    def swapped(self) -> "GroupNoise":
        return GroupNoise(self.sigma_B, self.sigma_A)


@dataclass(frozen=True)
class PosteriorParams:
    mu: float
    sigma: float


def estimate_law(dist: QualityDistribution, noise: GroupNoise, group: str):
    """Mean and standard deviation of the estimate of a ``group`` candidate."""
    if not isinstance(dist, Normal):
        raise UnsupportedClosedForm("the estimate law is only closed-form for Normal quality")
    s = noise.of(group)
    return dist.mu, math.sqrt(dist.sigma**2 + s**2)


def posterior_mean(w_hat, sigma_G, mu_W, sigma_W):
    shrink = sigma_W**2 / (sigma_G**2 + sigma_W**2)
    return shrink * w_hat + (1.0 - shrink) * mu_W


def posterior_params(theta_hat, sigma_G, mu_W, sigma_W) -> PosteriorParams:
    """Law of ``W`` given ``W_hat = theta_hat`` for Normal quality."""
    v = sigma_G**2 + sigma_W**2
    mu = (mu_W * sigma_G**2 + theta_hat * sigma_W**2) / v
    return PosteriorParams(mu, math.sqrt(sigma_G**2 * sigma_W**2 / v))


def _owens_t(h, a):
    if math.isinf(a):
        return math.copysign(0.5 * float(special.ndtr(-abs(h))), a)
    return float(special.owens_t(h, a))


def bvn_upper(h, k, rho):
    """P(X >= h, Y >= k) for a standard bivariate normal with correlation ``rho``."""
    if h == -math.inf:
        return float(special.ndtr(-k))
    if k == -math.inf:
        return float(special.ndtr(-h))
    if rho >= 1.0:
        return float(special.ndtr(-max(h, k)))
    # lower orthant at (-h, -k); Owen's T representation
    x, y = -h, -k
    r = math.sqrt((1.0 - rho) * (1.0 + rho))
    if x == 0.0 and y == 0.0:
        return 0.25 + math.asin(rho) / (2.0 * math.pi)
    ax = (y - rho * x) / (x * r) if x != 0.0 else math.copysign(math.inf, y)
    ay = (x - rho * y) / (y * r) if y != 0.0 else math.copysign(math.inf, x)
    beta = 0.0 if (x * y > 0 or (x * y == 0 and x + y >= 0)) else 0.5
    val = 0.5 * (special.ndtr(x) + special.ndtr(y)) - _owens_t(x, ax) - _owens_t(y, ay) - beta
    return min(max(float(val), 0.0), 1.0)


def _quad_bounds(dist, theta_hat, sigma_G, theta):
    lo, hi = dist.effective_support()
    if theta > lo:
        lo = theta
    pts = [lo, hi, *dist.breakpoints()]
    if math.isfinite(theta_hat) and sigma_G > 0:
        pts.extend(theta_hat + sigma_G * np.array([-16, -8, -4, -2, -1, 0, 1, 2, 4, 8, 16.0]))
    pts = np.asarray(pts, dtype=float)
    return np.unique(pts[(pts >= lo) & (pts <= hi)])


def _tail_integrals(theta_hat, theta, sigma_G, dist, epsabs=1e-12):
    """(P, M) = integrals over w >= theta of p(w) * ccdf((theta_hat - w)/sigma_G) and w times that."""
    bounds = _quad_bounds(dist, theta_hat, sigma_G, theta)
    if bounds.size < 2:
        return 0.0, 0.0

    def f(w):
        base = dist.pdf(w) * special.ndtr((w - theta_hat) / sigma_G)
        return np.stack([base, w * base])

    p, m = integrate(f, bounds, epsabs=epsabs)
    return min(max(p, 0.0), 1.0), m


def joint_tail(theta_hat, theta, sigma_G, dist: QualityDistribution, method="auto"):
    """P(W_hat >= theta_hat, W >= theta) for one group.

    ``theta`` may be :data:`NO_CUT`. ``method`` is ``"auto"`` (closed form
    for Normal quality, quadrature otherwise) or ``"quad"``.
    """
    if theta_hat == -math.inf:
        return float(dist.sf(theta)) if theta != NO_CUT else 1.0
    if sigma_G == 0:
        return float(dist.sf(max(theta_hat, theta)))
    if method == "auto" and isinstance(dist, Normal):
        s = math.hypot(dist.sigma, sigma_G)
        h = (theta - dist.mu) / dist.sigma
        k = (theta_hat - dist.mu) / s
        return bvn_upper(h, k, dist.sigma / s)
    return _tail_integrals(theta_hat, theta, sigma_G, dist)[0]


def _partial_mean(t, dist):
    """Integral of w * p(w) over w >= t."""
    if isinstance(dist, Normal):
        if t == -math.inf:
            return dist.mu
        z = (t - dist.mu) / dist.sigma
        return dist.mu * float(special.ndtr(-z)) + dist.sigma * float(norm_pdf(z))
    lo, hi = dist.effective_support()
    lo = max(lo, t)
    pts = dist.breakpoints()
    pts = np.concatenate([[lo, hi], pts[(pts > lo) & (pts < hi)]])
    if lo >= hi:
        return 0.0
    return integrate(lambda w: w * dist.pdf(w), pts)


def tail_quality_mass(theta_hat, theta, sigma_G, dist: QualityDistribution, method="auto"):
    """E[W ; W_hat >= theta_hat, W >= theta] for one group (unnormalised)."""
    if theta_hat == -math.inf or sigma_G == 0:
        t = theta if theta_hat == -math.inf else max(theta_hat, theta)
        return _partial_mean(t, dist)
    if method == "auto" and isinstance(dist, Normal):
        mu, sw = dist.mu, dist.sigma
        y = joint_tail(theta_hat, theta, sigma_G, dist)
        s = math.hypot(sw, sigma_G)
        post = posterior_params(theta_hat, sigma_G, mu, sw)
        dens_hat = float(norm_pdf((theta_hat - mu) / s)) / s
        out = mu * y
        if theta == NO_CUT:
            out += sw**2 * dens_hat
        else:
            out += sw**2 * float(dist.pdf(theta)) * float(special.ndtr((theta - theta_hat) / sigma_G))
            out += sw**2 * dens_hat * float(special.ndtr((post.mu - theta) / post.sigma))
        return out
    return _tail_integrals(theta_hat, theta, sigma_G, dist)[1]


def estimate_density(theta_hat, sigma_G, dist: QualityDistribution):
    """Density of the estimate at ``theta_hat``."""
    if isinstance(dist, Normal):
        s = math.hypot(dist.sigma, sigma_G)
        return float(norm_pdf((theta_hat - dist.mu) / s)) / s
    if sigma_G == 0:
        return float(dist.pdf(theta_hat))
    return _conditional_integrals(theta_hat, sigma_G, dist, NO_CUT)[0]


def _conditional_integrals(theta_hat, sigma_G, dist, theta):
    """Integrals of p(w) phi_G, w p(w) phi_G and (w - theta)+ p(w) phi_G."""
    lo, hi = dist.effective_support()
    pts = np.asarray([lo, hi, *dist.breakpoints(),
                      *(theta_hat + sigma_G * np.array([-16, -8, -4, -2, -1, 0, 1, 2, 4, 8, 16.0]))])
    if theta != NO_CUT:
        pts = np.append(pts, theta)
    pts = np.unique(pts[(pts >= lo) & (pts <= hi)])
    cut = theta if theta != NO_CUT else -math.inf

    def f(w):
        base = dist.pdf(w) * norm_pdf((w - theta_hat) / sigma_G) / sigma_G
        return np.stack([base, w * base, np.maximum(w - cut, 0.0) * base if cut != -math.inf else w * base])

    return integrate(f, pts, epsabs=1e-14, epsrel=1e-11)


def conditional_mean(theta_hat, sigma_G, dist: QualityDistribution, method="auto"):
    """E[W | W_hat = theta_hat]."""
    if sigma_G == 0:
        return float(theta_hat)
    if method == "auto" and isinstance(dist, Normal):
        return posterior_mean(theta_hat, sigma_G, dist.mu, dist.sigma)
    d, m, _ = _conditional_integrals(theta_hat, sigma_G, dist, NO_CUT)
    if d <= 0:
        raise IntegrationError("estimate density vanishes at the threshold", 0.0)
    return m / d


def conditional_excess(theta_hat, theta, sigma_G, dist: QualityDistribution, method="auto"):
    """E[(W - theta)+ | W_hat = theta_hat]."""
    if sigma_G == 0:
        return max(float(theta_hat) - theta, 0.0)
    if method == "auto" and isinstance(dist, Normal):
        post = posterior_params(theta_hat, sigma_G, dist.mu, dist.sigma)
        return post.sigma * float(J((post.mu - theta) / post.sigma))
    d, _, e = _conditional_integrals(theta_hat, sigma_G, dist, theta)
    if d <= 0:
        raise IntegrationError("estimate density vanishes at the threshold", 0.0)
    return e / d
