"""Energy of the approximate solution and the reduced functionals.

J[W] = 1/2 int |grad W|^2 + mu eps^2 / 2 int W^2 - (n-2)^2 / 2 int |W|^{2n/(n-2)}
over Omega_eps.  On a ball with the bubble at the center every piece of W is
radial and J reduces to one-dimensional integrals, evaluated here in extended
precision.  Off-center configurations use the axisymmetric double-precision
rule of the ansatz module.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import log, pi, sqrt

import mpmath as mp
import numpy as np
from scipy import integrate

from .ansatz import AnsatzField, BlowupParams, assemble, half_plane_rule
from .green import DomainSpec, green_field, quartic_potential
from .profiles import bubble_integrals, c_n, sphere_area

__all__ = [
    "RadialAnsatz",
    "EnergyBreakdown",
    "EnergyAccuracyError",
    "j_eps_quadrature",
    "j_eps_radial",
    "j_expansion",
    "leading_exact",
    "expansion_remainder",
    "k_eps4",
    "f_eps4",
    "k_eps6",
    "k_eps6_ab",
    "eta_lambda_polynomial",
    "inverse_power_integral",
    "appendix_terms",
]

DPS = 40


class EnergyAccuracyError(RuntimeError):
    """A quadrature error estimate exceeds the requested tolerance."""


# ---------------------------------------------------------------------------
# radial closed forms in extended precision


def _psi_bar(y):
    t = y * y
    if t < mp.mpf("1e-8"):
        return 1 - t / 8 + t * t / 24, y * (-mp.mpf(1) / 4 + t / 6 - t * t / 8)
    lg = mp.log1p(t)
    return mp.mpf(5) / 4 - lg / 4 - lg / (4 * t), y * (lg - t) / (2 * t * t)


def _psi6(y):
    t = y * y
    if t < mp.mpf("1e-8"):
        return mp.mpf(1) / 8 - t / 12 + t * t / 16, 2 * y * (-mp.mpf(1) / 12 + t / 8)
    lg = mp.log1p(t)
    val = (t - lg) / (4 * t * t)
    der = 2 * y * (t / (1 + t) - 2 * (t - lg) / t) / (4 * t * t)
    return val, der


class RadialAnsatz:
    """W and its pieces as functions of rho = |z| on a ball with Q at the center."""

    def __init__(self, p: BlowupParams):
        dom = p.domain
        if dom.shape != "ball" or np.any(np.asarray(p.Q) != 0):
            raise ValueError("the radial path needs a ball with the bubble at its center")
        mp.mp.dps = DPS
        n = p.n
        self.p = p
        self.n = n
        self.m = mp.mpf(n - 2) / 2
        self.eps = mp.mpf(p.eps)
        self.lam = mp.mpf(p.lam)
        self.R0 = mp.mpf(dom.radius)
        self.vol = self.R0**n * 2 * mp.pi ** (mp.mpf(n) / 2) / mp.gamma(mp.mpf(n) / 2) / n
        self.cn = (n - 2) * 2 * mp.pi ** (mp.mpf(n) / 2) / mp.gamma(mp.mpf(n) / 2)
        if n == 4:
            self.mu = mp.sqrt(mp.mpf(p.c1) / -mp.log(self.eps))
            self.eta = mp.mpf(0)
        else:
            self.mu = self.eps
            self.eta = mp.mpf(p.eta)
        self.A = self.cn / self.mu * self.eps ** (n - 4) * self.lam**self.m
        if n == 4:
            self.T = self.cn * self.lam * self.eps**2 / (self.mu * self.vol)
        else:
            self.T = self.eta * self.eps**3
        R0 = self.R0
        self.a0 = (R0**2 / (2 * (n - 2)) + R0**2 / (2 * (n + 2))) / self.vol
        self.delta = mp.mpf(p.delta)
        self.alpha = self.m
        # l = 0 screened mode normalized to unit slope at R0, times the constant Neumann data
        self._D0 = R0 / (2 * (self.alpha + 1)) * mp.hyp0f1(self.alpha + 2, R0 * R0 / 4)
        self.h0 = self._neumann_constant()

    # pieces -------------------------------------------------------------

    def U(self, rho):
        return (self.lam / (self.lam**2 + rho * rho)) ** self.m

    def dU(self, rho):
        return -2 * self.m * rho * self.U(rho) / (self.lam**2 + rho * rho)

    def Psi(self, rho):
        y = rho / self.lam
        if self.n == 4:
            v, d = _psi_bar(y)
            return self.lam / 2 * mp.log(1 / (self.lam * self.eps)) + self.lam * v, d
        v, d = _psi6(y)
        return v, d / self.lam

    def H(self, rho):
        x = self.eps * rho
        return -x * x / (2 * self.n * self.vol) + self.a0, -self.eps * x / (self.n * self.vol)

    def _neumann_constant(self):
        rb = self.R0 / self.eps
        lam, m = self.lam, self.m
        V1 = -2 * m * lam**m * rb * ((lam**2 + rb * rb) ** (-m - 1) - rb ** (-2 * m - 2))
        _, P1 = self.Psi(rb)
        return -(V1 - self.mu * self.eps**2 * P1) / (self.mu * self.eps**3)

    def r(self, x):
        """(r, r', r'') of the correction at physical radius x."""
        a, D = self.alpha, self._D0
        z = x * x / 4
        F1 = mp.hyp0f1(a + 1, z)
        F2 = mp.hyp0f1(a + 2, z)
        v = self.h0 * F1 / D
        d = self.h0 * x / (2 * (a + 1)) * F2 / D
        dd = v - (self.n - 1) / x * d if x > 0 else v / self.n
        return v, d, dd

    def chi(self, x):
        """(chi, chi', chi'') in the physical radius."""
        w = self.delta / 4
        s = (self.R0 - x - w) / w
        if s <= 0:
            return mp.mpf(1), mp.mpf(0), mp.mpf(0)
        if s >= 1:
            return mp.mpf(0), mp.mpf(0), mp.mpf(0)
        v = 1 - s**3 * (10 - 15 * s + 6 * s * s)
        ds = -30 * s * s * (1 - s) ** 2
        dds = -60 * s * (1 - s) * (1 - 2 * s)
        return v, -ds / w, dds / w**2

    def Rchi(self, rho):
        """(R chi, d/drho, Delta_z (R chi)) at z-radius rho."""
        x = self.eps * rho
        r, dr, _ = self.r(x)
        c, dc, ddc = self.chi(x)
        lap_chi = ddc + (self.n - 1) / x * dc if x > 0 else mp.mpf(0)
        lap = self.eps**2 * (c * r + 2 * dr * dc + r * lap_chi)
        return r * c, self.eps * (dr * c + r * dc), lap

    def Uhat(self, rho):
        psi, dpsi = self.Psi(rho)
        h, dh = self.H(rho)
        rc, drc, _ = self.Rchi(rho)
        return -psi - self.A * h + rc, -dpsi - self.A * dh + drc

    def W(self, rho):
        uh, duh = self.Uhat(rho)
        k = self.mu * self.eps**2
        return self.U(rho) + k * uh + self.T, self.dU(rho) + k * duh

    def lap_Rchi(self, rho):
        return self.Rchi(rho)[2]

    # integration ------------------------------------------------------------

    def breakpoints(self):
        rb = self.R0 / self.eps
        pts = [mp.mpf(0)]
        s = self.lam / 4
        while s < rb:
            pts.append(s)
            s *= 4
        for f in (mp.mpf(1) / 2, mp.mpf(1) / 4):
            pts.append((self.R0 - f * self.delta) / self.eps)
        pts.append(rb)
        return sorted(set(v for v in pts if v <= rb))

    def integrate(self, f):
        """int over Omega_eps of a radial integrand f(rho)."""
        area = 2 * mp.pi ** (mp.mpf(self.n) / 2) / mp.gamma(mp.mpf(self.n) / 2)
        g = lambda rho: f(rho) * rho ** (self.n - 1)
        return area * mp.quad(g, self.breakpoints())


def j_eps_radial(p: BlowupParams) -> mp.mpf:
    """J[W] on a ball with the bubble at the center, in extended precision."""
    ra = RadialAnsatz(p)
    n = p.n
    k = ra.mu * ra.eps**2
    crit = mp.mpf(2 * n) / (n - 2)
    coef = mp.mpf((n - 2) ** 2) / 2

    def density(rho):
        w, dw = ra.W(rho)
        return dw * dw / 2 + k * w * w / 2 - coef * abs(w) ** crit

    return ra.integrate(density)


def j_eps_quadrature(field_: AnsatzField | BlowupParams, tol: float | None = None) -> dict:
    """J[W] with an error estimate.

    A ball with the bubble at the center uses the extended-precision radial
    path; other ball configurations use the axisymmetric rule at two
    resolutions, the difference being the error estimate.
    """
    p = field_.params if isinstance(field_, AnsatzField) else field_
    if p.domain.shape == "ball" and not np.any(np.asarray(p.Q)):
        with mp.workdps(DPS):
            v = j_eps_radial(p)
            v2 = _j_radial_coarse(p)
        out = {"value": float(v), "error": float(abs(v - v2)), "path": "radial"}
    else:
        f = field_ if isinstance(field_, AnsatzField) else assemble(p)
        fine = _j_axisymmetric(f, 48, 16)
        coarse = _j_axisymmetric(f, 32, 12)
        out = {"value": fine, "error": abs(fine - coarse), "path": "axisymmetric"}
    out["flagged"] = bool(tol is not None and out["error"] > tol)
    return out


def _j_radial_coarse(p):
    with mp.workdps(DPS - 15):
        return j_eps_radial(p)


def _j_axisymmetric(f: AnsatzField, n_phi, per_panel):
    p = f.params
    n = p.n
    pts, w, _ = half_plane_rule(p, n_phi, per_panel)
    W = f.W(pts)
    g = f.grad_W(pts)
    dens = 0.5 * np.sum(g * g, axis=-1) + 0.5 * p.mu * p.eps**2 * W * W
    dens -= (n - 2) ** 2 / 2 * np.abs(W) ** (2 * n / (n - 2))
    return float(np.sum(w * dens))


# ---------------------------------------------------------------------------
# displayed expansions


def leading_exact(n: int) -> mp.mpf:
    """2 int U^4 = pi^2/3 (n = 4) and 4 int U^3 = pi^3/15 (n = 6) in extended precision."""
    return mp.pi**2 / 3 if n == 4 else mp.pi**3 / 15


def expansion_remainder(p: BlowupParams, drop_quartic: bool = False) -> float:
    """J[W] minus its displayed expansion, formed in extended precision (ball, center)."""
    exp_ = j_expansion(p)
    terms = dict(exp_["terms"])
    if drop_quartic:
        terms.pop("quartic", None)
    with mp.workdps(DPS):
        return float(j_eps_radial(p) - leading_exact(p.n) - mp.fsum(mp.mpf(v) for v in terms.values()))


def _leading(n):
    ints = bubble_integrals(n)
    return 2 * ints["U^crit"] if n == 4 else 4 * ints["U^crit"]


def eta_lambda_polynomial(eta: float, lam: float, vol: float) -> float:
    """1/2 eta^2 |Omega| - c6 Lambda^2 eta + c6 Lambda^2 / 48 - 8 eta^3 |Omega|."""
    c6 = c_n(6)
    return 0.5 * eta**2 * vol - c6 * lam**2 * eta + c6 * lam**2 / 48 - 8 * eta**3 * vol


def inverse_power_integral(domain: DomainSpec, Q, power: float, shift: float = 0.0) -> float:
    """int_Omega (shift^2 + |x-Q|^2)^{-power/2} dx on a ball, by rays from Q."""
    if domain.shape != "ball":
        if domain.n == 6 and power == 4 and shift == 0.0:
            return quartic_potential(domain, Q)
        raise NotImplementedError("inverse power integrals are implemented for balls")
    n = domain.n
    Q = np.asarray(Q, dtype=float)
    q = float(np.sqrt(Q @ Q))
    R = domain.radius

    def radial(rho):
        if shift == 0.0:
            return rho ** (n - power) / (n - power)
        val, _ = integrate.quad(lambda s: s ** (n - 1) * (shift**2 + s * s) ** (-power / 2), 0, rho,
                                epsabs=0, epsrel=1e-13, limit=200)
        return val

    if q == 0.0:
        return sphere_area(n - 1) * radial(R)

    def ray(phi):
        c = q * np.cos(phi)
        rho = -c + np.sqrt(c * c + R * R - q * q)
        return radial(rho) * np.sin(phi) ** (n - 2)

    val, _ = integrate.quad(ray, 0.0, np.pi, epsabs=0.0, epsrel=1e-12, limit=200)
    return sphere_area(n - 2) * val


def j_expansion(p: BlowupParams, robin: float | None = None) -> dict:
    """The displayed small-eps expansion of J[W] with its individual terms."""
    n, eps, lam = p.n, p.eps, p.lam
    dom = p.domain
    vol = dom.volume
    if robin is None:
        robin = green_field(dom, p.Q).robin
    lead = _leading(n)
    if n == 4:
        c4 = c_n(4)
        k = sqrt(p.c1 / -log(eps))
        terms = {
            "log": c4 * lam**2 / 4 * eps**2 * k * log(1 / (lam * eps)),
            "volume": -(c4**2) * lam**2 / (2 * vol) * eps**2 / k,
            "robin": 0.5 * c4**2 * lam**2 * eps**2 * robin,
        }
    else:
        c6 = c_n(6)
        quart = inverse_power_integral(dom, p.Q, 4)
        terms = {
            "eta_lambda": eta_lambda_polynomial(p.eta, lam, vol) * eps**3,
            "robin": 0.5 * c6**2 * lam**4 * eps**4 * robin,
            "quartic": 0.5 * (p.eta - c6 * lam**2 / vol) * eps**4 * lam**2 * quart,
        }
    return {"leading": lead, "terms": terms, "value": lead + sum(terms.values())}


# ---------------------------------------------------------------------------
# reduced functionals


def f_eps4(lam, eps: float, c1: float, vol: float):
    """The Lambda-only part of the n = 4 reduced energy."""
    c4 = c_n(4)
    lam = np.asarray(lam, dtype=float)
    return 0.25 * c4 * lam**2 * np.log(1 / (lam * eps)) * (c1 / -log(eps)) - c4**2 * lam**2 / (2 * vol)


def k_eps4(lam, robin, eps: float, c1: float, vol: float):
    """Displayed n = 4 reduced energy; robin is H(Q,Q) (scalar or array)."""
    c4 = c_n(4)
    lam = np.asarray(lam, dtype=float)
    return f_eps4(lam, eps, c1, vol) + 0.5 * c4**2 * lam**2 * np.asarray(robin) * sqrt(c1 / -log(eps))


def k_eps6(lam, eta, robin, quartic, eps: float, vol: float):
    """Displayed n = 6 reduced energy; quartic is int |x-Q|^{-4}."""
    c6 = c_n(6)
    lam = np.asarray(lam, dtype=float)
    eta = np.asarray(eta, dtype=float)
    return (eta_lambda_polynomial(eta, lam, vol) + 0.5 * c6**2 * lam**4 * np.asarray(robin) * eps
            + 0.5 * (eta - c6 * lam**2 / vol) * eps * lam**2 * np.asarray(quartic))


def k_eps6_ab(a, b, F, eps: float, vol: float):
    """Truncated (a, b) form: |Omega|/6912 + [F(Q) - (8a^3 + ab)|Omega|] eps."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return vol / 6912 + (np.asarray(F) - (8 * a**3 + a * b) * vol) * eps


def lam_eta_from_ab(a, b, eps: float, vol: float):
    """eta = 1/48 + a eps^{1/3}, c6 Lambda^2 / |Omega| = 1/96 + b eps^{2/3}."""
    eta = 1 / 48 + a * eps ** (1 / 3)
    lam = np.sqrt((1 / 96 + b * eps ** (2 / 3)) * vol / c_n(6))
    return lam, eta


__all__.append("lam_eta_from_ab")


# ---------------------------------------------------------------------------
# itemized energy identities


@dataclass
class EnergyBreakdown:
    quadrature: float
    expansion: float
    leading: float
    terms: dict = field(default_factory=dict)
    exact_remainder: float | None = None

    @property
    def remainder(self) -> float:
        """quadrature - expansion, from the extended-precision values when available."""
        if self.exact_remainder is not None:
            return self.exact_remainder
        return self.quadrature - self.expansion

    def to_dict(self) -> dict:
        return {
            "quadrature": self.quadrature,
            "expansion": self.expansion,
            "leading": self.leading,
            "remainder": self.remainder,
            "terms": self.terms,
        }


def _term(quad, closed, order):
    quad, closed = float(quad), float(closed)
    return {"quadrature": quad, "closed_form": closed, "difference": quad - closed, "order": float(order),
            "scaled": abs(quad - closed) / float(order)}


def appendix_terms(p: BlowupParams, robin: float | None = None) -> EnergyBreakdown:
    """Each intermediate identity of the energy expansion, by radial quadrature vs its closed form.

    "order" is the displayed error order with unit constant and "scaled" is
    |difference| / order.
    """
    with mp.workdps(DPS):
        return _appendix_terms(p, robin)


def _appendix_terms(p, robin):
    ra = RadialAnsatz(p)
    n, dom = p.n, p.domain
    eps, lam, vol = p.eps, p.lam, dom.volume
    if robin is None:
        robin = green_field(dom, p.Q).robin
    W = lambda rho: ra.W(rho)[0]
    U = ra.U
    Uhat = lambda rho: ra.Uhat(rho)[0]
    terms = {}
    ints = bubble_integrals(n)
    if n == 4:
        c4 = c_n(4)
        k = sqrt(p.c1 / -log(eps))
        L = log(1 / (lam * eps))
        inv2 = inverse_power_integral(dom, p.Q, 2)
        inv2s = inverse_power_integral(dom, p.Q, 2, shift=eps * lam)
        terms["U3W"] = _term(
            ra.integrate(lambda r: U(r) ** 3 * W(r)),
            ints["U^crit"] + c4**2 * lam**2 / (8 * vol) * eps**2 / k - c4 * lam**2 / 16 * L * eps**2 * k
            - c4**2 * lam**2 / 8 * eps**2 * robin,
            eps**2 * k * lam**2 + eps**4 / k)
        terms["UhatW"] = _term(
            eps**4 * k**2 * ra.integrate(lambda r: Uhat(r) * W(r)),
            c4 * lam**2 / vol * eps**2 * inv2,
            eps**2 * k * lam**2)
        terms["lapRchiW"] = _term(
            ra.integrate(lambda r: ra.lap_Rchi(r) * W(r)),
            c4 * lam**2 / (k * vol) * inv2s,
            lam**2 + eps**2 * -log(eps))
        terms["W4"] = _term(
            ra.integrate(lambda r: W(r) ** 4),
            ints["U^crit"] - c4 * lam**2 / 4 * eps**2 * k * L - c4**2 * lam**2 / 2 * eps**2 * robin
            + c4**2 * lam**2 / (2 * vol) * eps**2 / k,
            eps**2 * k * lam**2 + eps**4 / k**4)
    else:
        c6 = c_n(6)
        eta = p.eta
        quart = inverse_power_integral(dom, p.Q, 4)
        e5 = eps**5
        terms["U2W"] = _term(
            ra.integrate(lambda r: U(r) ** 2 * W(r)),
            ints["U^crit"] + c6 * eta * lam**2 * eps**3 / 24 - c6**2 * lam**4 * eps**4 * robin / 24
            - c6 * lam**2 * eps**3 / 576,
            e5)
        terms["UhatW"] = _term(
            eps**6 * ra.integrate(lambda r: Uhat(r) * W(r)),
            -eta * lam**2 * eps**4 * quart,
            e5)
        terms["lapRchiW"] = _term(
            -(eps**3) * ra.integrate(lambda r: ra.lap_Rchi(r) * W(r)),
            eta * lam**2 * eps**4 * quart,
            e5)
        tilt = eta - c6 * lam**2 / vol
        terms["tail"] = _term(
            eps**6 * tilt * ra.integrate(W),
            (eta**2 * vol - c6 * eta * lam**2) * eps**3 + tilt * eps**4 * lam**2 * quart,
            e5)

        def dirichlet(rho):
            w, dw = ra.W(rho)
            return dw * dw / 2 + eps**3 * w * w / 2

        terms["dirichlet"] = _term(
            ra.integrate(dirichlet),
            12 * ints["U^crit"] + (0.5 * eta**2 * vol - c6 * lam**2 / 48) * eps**3
            - c6**2 * lam**4 / 2 * robin * eps**4 + 0.5 * tilt * eps**4 * lam**2 * quart,
            e5)
        terms["W3"] = _term(
            ra.integrate(lambda r: W(r) ** 3),
            ints["U^crit"] + c6 * eta * lam**2 * eps**3 / 8 - c6 * lam**2 * eps**3 / 192 + eta**3 * vol * eps**3
            - c6**2 * lam**4 * robin * eps**4 / 8,
            e5)
    exp_ = j_expansion(p, robin)
    jq = j_eps_radial(p)
    out = EnergyBreakdown(float(jq), exp_["value"], exp_["leading"], terms)
    out.exact_remainder = float(jq - leading_exact(n) - mp.fsum(mp.mpf(v) for v in exp_["terms"].values()))
    return out
