"""Bubbles, radial correction profiles and whole-space bubble integrals.

The bubble is U_{L,Q}(x) = (L / (L^2 + |x-Q|^2))^{(n-2)/2}, which solves
-Delta U = n(n-2) U^{(n+2)/(n-2)} in R^n.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import gamma, lgamma, pi

import numpy as np
from scipy import integrate

__all__ = [
    "sphere_area",
    "c_n",
    "Bubble",
    "eval_bubble",
    "eval_bubble_derivs",
    "RadialProfile",
    "solve_psi_bar",
    "solve_psi6",
    "psi_bar_exact",
    "dpsi_bar_exact",
    "psi6_exact",
    "dpsi6_exact",
    "dpsi_bar_over_r",
    "dpsi6_over_r",
    "radial_integral",
    "bubble_integrals",
    "gram_constants",
    "gram_cross_term",
    "gram_identity",
    "beta_oracles",
    "log_constant_reference",
    "ProfileAccuracyError",
]


class ProfileAccuracyError(RuntimeError):
    """A profile failed its own asymptotic stabilization check."""


def sphere_area(k: int) -> float:
    """Area of the unit sphere S^k in R^{k+1}."""
    return 2.0 * pi ** ((k + 1) / 2) / gamma((k + 1) / 2)


def c_n(n: int) -> float:
    """(n-2)|S^{n-1}|, the constant with -Delta(c_n^{-1}|x|^{2-n}) = delta."""
    return (n - 2) * sphere_area(n - 1)


# ---------------------------------------------------------------------------
# bubble


@dataclass(frozen=True)
class Bubble:
    n: int
    lam: float
    center: tuple = ()

    def __post_init__(self):
        if self.n < 3:
            raise ValueError("dimension must be >= 3")
        if not (self.lam > 0 and np.isfinite(self.lam)):
            raise ValueError("bubble scale must be positive and finite")
        c = tuple(float(v) for v in self.center) or (0.0,) * self.n
        if len(c) != self.n:
            raise ValueError("center has wrong dimension")
        object.__setattr__(self, "center", c)

    @property
    def m(self) -> float:
        return (self.n - 2) / 2.0


def _offsets(b: Bubble, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != b.n:
        raise ValueError(f"points must have trailing dimension {b.n}")
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite coordinates")
    return x - np.asarray(b.center)


def eval_bubble(b: Bubble, x) -> np.ndarray:
    d = _offsets(b, x)
    r2 = np.sum(d * d, axis=-1)
    return (b.lam / (b.lam**2 + r2)) ** b.m


def eval_bubble_derivs(b: Bubble, x):
    """Return (dU/dLambda, dU/dQ) at x; dU/dQ has the shape of x."""
    d = _offsets(b, x)
    r2 = np.sum(d * d, axis=-1)
    den = b.lam**2 + r2
    u = (b.lam / den) ** b.m
    d_lam = b.m * u * (r2 - b.lam**2) / (b.lam * den)
    d_q = (2.0 * b.m * u / den)[..., None] * d
    return d_lam, d_q


# ---------------------------------------------------------------------------
# closed forms, used as oracles and by the ansatz


def psi_bar_exact(r):
    """Radial solution of Delta P + (1+r^2)^{-1} = 0 in R^4 with P(0) = 1."""
    r = np.asarray(r, dtype=float)
    r2 = r * r
    out = np.empty_like(r2)
    small = r2 < 1e-4
    t = r2[small]
    out[small] = 1.0 - t / 8 + t**2 / 24 - t**3 / 48 + t**4 / 80
    t = r2[~small]
    lg = np.log1p(t)
    out[~small] = 1.25 - 0.25 * lg - lg / (4.0 * t)
    return out


def dpsi_bar_exact(r):
    r = np.asarray(r, dtype=float)
    r2 = r * r
    out = np.empty_like(r2)
    small = r2 < 1e-2
    t = r2[small]
    out[small] = -r[small] * (0.25 - t / 6 + t**2 / 8 - t**3 / 10 + t**4 / 12 - t**5 / 14 + t**6 / 16)
    t = r2[~small]
    out[~small] = -(0.5 * t - 0.5 * np.log1p(t)) / (r[~small] * t)
    return out


def dpsi_bar_over_r(r):
    """Psi_bar'(r) / r, regular at r = 0."""
    r = np.asarray(r, dtype=float)
    t = r * r
    out = np.empty_like(t)
    small = t < 1e-2
    ts = t[small]
    out[small] = -(0.25 - ts / 6 + ts**2 / 8 - ts**3 / 10 + ts**4 / 12 - ts**5 / 14 + ts**6 / 16)
    tl = t[~small]
    out[~small] = -(0.5 * tl - 0.5 * np.log1p(tl)) / (tl * tl)
    return out


def dpsi6_over_r(r):
    """Psi_6'(r) / r, regular at r = 0."""
    r = np.asarray(r, dtype=float)
    t = r * r
    out = np.empty_like(t)
    small = t < 1e-2
    x = t[small]
    ks = np.arange(3, 20)
    coef = ((-1.0) ** (ks + 1)) * (ks - 2) / ks
    out[small] = -0.5 * np.sum(coef[None, :] * x[:, None] ** (ks - 3)[None, :], axis=1)
    out[~small] = -_a6(r[~small]) / t[~small] ** 3
    return out


def _a6(t):
    """int_0^t s^5 (1+s^2)^{-2} ds."""
    t = np.asarray(t, dtype=float)
    t2 = t * t
    out = np.empty_like(t2)
    small = t2 < 1e-2
    x = t2[small]
    # series of (x - 2 ln(1+x) + x/(1+x))/2 = sum_{k>=3} (-1)^{k+1}(k-2) x^k / (2k)... summed directly
    ks = np.arange(3, 20)
    coef = ((-1.0) ** (ks + 1)) * (ks - 2) / ks
    out[small] = 0.5 * np.sum(coef[None, :] * x[:, None] ** ks[None, :], axis=1)
    x = t2[~small]
    out[~small] = 0.5 * (x - 2.0 * np.log1p(x) + x / (1.0 + x))
    return out


def psi6_exact(r):
    """Decaying radial solution of Delta P + (1+r^2)^{-2} = 0 in R^6."""
    r = np.asarray(r, dtype=float)
    r2 = r * r
    out = np.empty_like(r2)
    small = r2 < 1e-2
    x = r2[small]
    # (x - ln(1+x)) / (4 x^2) = sum_{k>=2} (-1)^k x^{k-2} / (4k)
    ks = np.arange(2, 20)
    coef = ((-1.0) ** ks) / (4.0 * ks)
    out[small] = np.sum(coef[None, :] * x[:, None] ** (ks - 2)[None, :], axis=1)
    x = r2[~small]
    out[~small] = (x - np.log1p(x)) / (4.0 * x * x)
    return out


def dpsi6_exact(r):
    r = np.asarray(r, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = -_a6(r) / r**5
    return np.where(r == 0, 0.0, out)


# ---------------------------------------------------------------------------
# tabulated profiles

_GL_X, _GL_W = np.polynomial.legendre.leggauss(10)


def _panel_nodes(a, b):
    """Gauss-Legendre nodes/weights on each panel [a_i, b_i]; arrays of shape (panels, 10)."""
    half = 0.5 * (b - a)[:, None]
    mid = 0.5 * (b + a)[:, None]
    return mid + half * _GL_X[None, :], half * _GL_W[None, :]


@dataclass(frozen=True)
class RadialProfile:
    n: int
    r: np.ndarray
    values: np.ndarray
    derivs: np.ndarray
    asym: dict = field(default_factory=dict)

    def __call__(self, rr):
        """Cubic Hermite interpolation on the log grid; r below the grid uses the first node."""
        from scipy.interpolate import CubicHermiteSpline

        spline = CubicHermiteSpline(self.r, self.values, self.derivs)
        rr = np.asarray(rr, dtype=float)
        return spline(np.clip(rr, self.r[0], self.r[-1]))

    def to_csv(self, path) -> None:
        data = np.column_stack([self.r, self.values, self.derivs])
        np.savetxt(path, data, delimiter=",", header="r,value,derivative", comments="", fmt="%.17g")


def _geometric_grid(r_min: float, r_max: float, nodes: int) -> np.ndarray:
    return np.geomspace(r_min, r_max, nodes)


def _cumulative(f, r: np.ndarray) -> np.ndarray:
    """Integral of f from r[0] to each r[i] by composite 10-point Gauss-Legendre."""
    x, w = _panel_nodes(r[:-1], r[1:])
    panels = np.sum(w * f(x), axis=1)
    return np.concatenate([[0.0], np.cumsum(panels)])


def solve_psi_bar(r_min: float = 1e-6, r_max: float = 1e4, nodes: int = 2048) -> RadialProfile:
    """Build the n=4 profile from its first-order quadrature Psi' = -r^{-3}(r^2/2 - ln(1+r^2)/2)."""
    if r_max < 1e4:
        raise ProfileAccuracyError("r_max below 1e4 cannot pin the log constant")
    r = _geometric_grid(r_min, r_max, nodes)
    d = dpsi_bar_exact(r)
    # [0, r_min]: Psi' ~ -r/4
    vals = 1.0 - r_min**2 / 8 + _cumulative(dpsi_bar_exact, r)
    shifted = vals + 0.5 * np.log(r)

    # two-radius elimination of the c*(ln r + 1/2)/r^2 tail
    i1, i2 = np.searchsorted(r, 1e3), nodes - 1
    r1, r2 = r[i1], r[i2]
    g1, g2 = (np.log(r1) + 0.5) / r1**2, (np.log(r2) + 0.5) / r2**2
    c = (shifted[i2] - shifted[i1]) / (g2 - g1)
    const = shifted[i2] - c * g2
    drift = abs(shifted[i2] - shifted[i1])
    if drift > 1e-4:
        raise ProfileAccuracyError(f"log constant drift {drift:.3g} exceeds 1e-4")
    return RadialProfile(4, r, vals, d, {"log_slope": -0.5, "I": const, "drift": drift})


def solve_psi6(r_min: float = 1e-6, r_max: float = 1e4, nodes: int = 2048) -> RadialProfile:
    """Build the n=6 profile from the double integral int_r^inf t^{-5} int_0^t s^5 (1+s^2)^{-2}."""
    r = _geometric_grid(r_min, r_max, nodes)
    inner_f = lambda s: s**5 / (1.0 + s * s) ** 2  # noqa: E731

    # inner integral A(t) at the grid and at the outer Gauss nodes
    a_grid = r_min**6 / 6.0 + _cumulative(inner_f, r)
    x, w = _panel_nodes(r[:-1], r[1:])
    sub_x, sub_w = _panel_nodes(np.repeat(r[:-1], 10), x.ravel())
    a_nodes = a_grid[:-1, None] + np.sum(sub_w * inner_f(sub_x), axis=1).reshape(x.shape)
    panels = np.sum(w * a_nodes / x**5, axis=1)

    # tail beyond r_max; A is given there by its closed form
    tail, _ = integrate.quad(lambda t: float(_a6(np.array([t]))[0]) / t**5, r_max, np.inf,
                             epsabs=0.0, epsrel=1e-13, limit=200)
    vals = tail + np.concatenate([np.cumsum(panels[::-1])[::-1], [0.0]])
    d = -a_grid / r**5
    lead = 4.0 * r[-1] ** 2 * vals[-1]
    # t^{-5} A(t) ~ t/6 below the grid
    origin = vals[0] + r_min**2 / 12.0
    return RadialProfile(6, r, vals, d, {"r2_coeff": 0.25, "lead_at_rmax": lead, "value_at_0": origin})


# ---------------------------------------------------------------------------
# whole-space integrals


def radial_integral(f, n: int, epsrel: float = 1e-13) -> float:
    """|S^{n-1}| int_0^inf f(r) r^{n-1} dr, adaptive quadrature split at r = 1."""
    g = lambda r: f(r) * r ** (n - 1)  # noqa: E731
    a, _ = integrate.quad(g, 0.0, 1.0, epsabs=1e-15, epsrel=epsrel, limit=200)
    b, _ = integrate.quad(g, 1.0, np.inf, epsabs=1e-15, epsrel=epsrel, limit=200)
    return sphere_area(n - 1) * (a + b)


def _u(n):
    m = (n - 2) / 2.0
    return lambda r: (1.0 + r * r) ** (-m)


def bubble_integrals(n: int) -> dict:
    """Whole-space integrals of the unit bubble U = (1+r^2)^{-(n-2)/2} in R^n."""
    if n not in (4, 6):
        raise ValueError("n must be 4 or 6")
    u = _u(n)
    crit = 2.0 * n / (n - 2)
    p = (n + 2) / (n - 2)
    out = {
        "U^crit": radial_integral(lambda r: u(r) ** crit, n),
        "U^p": radial_integral(lambda r: u(r) ** p, n),
        "grad_U^2": radial_integral(lambda r: ((n - 2) * r * u(r) ** (n / (n - 2))) ** 2, n),
    }
    if n == 4:
        out["U^3_psi_bar"] = radial_integral(lambda r: u(r) ** 3 * float(psi_bar_exact(np.array([r]))[0]), n)
    else:
        out["U^2"] = radial_integral(lambda r: u(r) ** 2, n)
        out["U^2_psi"] = radial_integral(lambda r: u(r) ** 2 * float(psi6_exact(np.array([r]))[0]), n)
    return out


def beta_oracles(n: int) -> dict:
    """The same integrals from beta functions: int r^{a}(1+r^2)^{-b} dr = B((a+1)/2, b-(a+1)/2)/2."""
    def half_beta(a, b):
        x, y = (a + 1) / 2.0, b - (a + 1) / 2.0
        return 0.5 * np.exp(lgamma(x) + lgamma(y) - lgamma(x + y))

    s = sphere_area(n - 1)
    m = (n - 2) / 2.0
    out = {
        "U^crit": s * half_beta(n - 1, n),
        "U^p": s * half_beta(n - 1, m * (n + 2) / (n - 2)),
        "grad_U^2": s * (n - 2) ** 2 * half_beta(n + 1, n),
    }
    if n == 6:
        out["U^2"] = s * half_beta(5, 4)
    return out


def gram_constants(n: int) -> tuple:
    """(gamma0, gamma1): Dirichlet energies of dU/dLambda and dU/dy_1 at Lambda = 1."""
    if n not in (4, 6):
        raise ValueError("n must be 4 or 6")
    m = (n - 2) / 2.0

    def f_prime(r):
        # f = m (r^2 - 1) / (1+r^2)^{m+1}
        q = 1.0 + r * r
        return m * (2 * r * q - (m + 1) * (r * r - 1) * 2 * r) / q ** (m + 2)

    def h(r):
        # h = -U'(r) = 2 m r (1+r^2)^{-m-1}
        return 2 * m * r * (1.0 + r * r) ** (-m - 1)

    def h_prime(r):
        q = 1.0 + r * r
        return 2 * m * (q - 2 * (m + 1) * r * r) / q ** (m + 2)

    g0 = radial_integral(lambda r: f_prime(r) ** 2, n)
    g1 = radial_integral(lambda r: h_prime(r) ** 2 + (n - 1) * h(r) ** 2 / (r * r) if r > 0 else 0.0, n) / n
    return g0, g1


def gram_cross_term(n: int) -> float:
    """int grad(dU/dLambda) . grad(dU/dy_1) over R^n, by (radius, polar angle) quadrature."""
    m = (n - 2) / 2.0
    s_low = sphere_area(n - 2)

    def integrand(theta, r):
        q = 1.0 + r * r
        fp = m * (2 * r * q - (m + 1) * (r * r - 1) * 2 * r) / q ** (m + 2)
        h = 2 * m * r * q ** (-m - 1)
        hp = 2 * m * (q - 2 * (m + 1) * r * r) / q ** (m + 2)
        # grad(f(r)) . grad(h(r) cos(theta)) = f' h' cos(theta)
        return fp * hp * np.cos(theta) * np.sin(theta) ** (n - 2) * r ** (n - 1)

    val, _ = integrate.dblquad(integrand, 0.0, 60.0, 0.0, pi, epsabs=1e-13)
    return s_low * val


def gram_identity(n: int) -> tuple:
    """(gamma0, gamma1) again from n(n+2) int U^{4/(n-2)} Y^2, an independent route."""
    m = (n - 2) / 2.0
    w = lambda r: n * (n + 2) * (1.0 + r * r) ** (-2.0)  # noqa: E731
    f = lambda r: m * (r * r - 1) / (1.0 + r * r) ** (m + 1)  # noqa: E731
    h = lambda r: 2 * m * r * (1.0 + r * r) ** (-m - 1)  # noqa: E731
    return radial_integral(lambda r: w(r) * f(r) ** 2, n), radial_integral(lambda r: w(r) * h(r) ** 2, n) / n


def log_constant_reference() -> float:
    """High-precision value of lim (Psi_bar(r) + ln(r)/2), by mpmath quadrature of Psi_bar'."""
    import mpmath as mp

    with mp.workdps(30):
        dp = lambda t: -(t * t / 2 - mp.log1p(t * t) / 2) / t**3 + 1 / (2 * t) * (t > 1)  # noqa: E731
        val = 1 + mp.quad(dp, [0, 1, 10, 100, mp.inf])
        return float(val)
