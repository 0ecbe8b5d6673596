"""Approximate blow-up solutions W on the rescaled domain Omega_eps = Omega / eps.

Coordinates: z in Omega_eps, x = eps z in Omega, Qbar = Q / eps.  With
m = (n-2)/2 and A = c_n mu^{-1} eps^{n-4} Lambda^m the field is

    W = U + mu eps^2 Uhat + T,
    Uhat = -Psi - A H(eps z, Q) + R chi(eps z),

where U is the bubble centered at Qbar, Psi the radial correction solving
Delta Psi = -U, T a constant and R a screened-harmonic boundary correction
that makes the normal derivative of W vanish on a ball.  R is computed in
x-coordinates as r(x) = R(x / eps), which solves Delta r = r.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import exp, lgamma, log, pi, sqrt

import numpy as np
from scipy import special

from .green import DomainSpec, GreenAccuracyError, GreenField, green_field
from .profiles import (
    c_n,
    dpsi6_exact,
    dpsi6_over_r,
    dpsi_bar_exact,
    dpsi_bar_over_r,
    psi6_exact,
    psi_bar_exact,
    sphere_area,
)

__all__ = [
    "BlowupParams",
    "blowup_params",
    "in_parameter_box",
    "eps_from_mu",
    "AnsatzField",
    "assemble",
    "ZonalScreenedField",
    "solve_boundary_correction",
    "Cutoff",
    "residual",
    "weighted_norm",
    "norm_samples",
    "half_plane_rule",
    "gram_matrix",
    "bracket",
]

CORRECTION_TOL = 1e-8
MAX_DEGREE = 200


# ---------------------------------------------------------------------------
# parameters


@dataclass(frozen=True)
class BlowupParams:
    domain: DomainSpec
    eps: float
    lam: float
    Q: tuple
    eta: float = 0.0
    delta: float = 0.0
    c1: float = 0.0

    @property
    def n(self) -> int:
        return self.domain.n

    @property
    def m(self) -> float:
        return (self.n - 2) / 2.0

    @property
    def mu(self) -> float:
        if self.n == 4:
            return sqrt(self.c1 / -log(self.eps))
        return self.eps

    @property
    def Qbar(self) -> np.ndarray:
        return np.asarray(self.Q) / self.eps

    @property
    def amplitude(self) -> float:
        """A = c_n mu^{-1} eps^{n-4} Lambda^m, the weight of H in Uhat."""
        return c_n(self.n) / self.mu * self.eps ** (self.n - 4) * self.lam**self.m

    @property
    def tail(self) -> float:
        """The constant T added to W."""
        if self.n == 4:
            return c_n(4) * self.lam * self.eps**2 / (self.mu * self.domain.volume)
        return self.eta * self.eps**3


def blowup_params(domain: DomainSpec, eps: float, lam=None, Q=None, eta=None, delta=None, c1=None) -> BlowupParams:
    """Validated parameters with the centered defaults for Lambda, eta and c1."""
    n = domain.n
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    Q = np.asarray(domain.center if Q is None else Q, dtype=float)
    if Q.shape != (n,) or not domain.contains(Q):
        raise ValueError("Q must be an interior point of the domain")
    dist = float(domain.distance_to_boundary(Q))
    delta = 0.4 * dist if delta is None else float(delta)
    if not 0 < delta < dist:
        raise ValueError("cutoff width must be positive and below d(Q, boundary)")
    vol = domain.volume
    if n == 4:
        c1 = 2 * c_n(4) / vol if c1 is None else float(c1)
        if c1 <= 0:
            raise ValueError("c1 must be positive")
        lam = exp(-0.5) if lam is None else float(lam)
        eta = 0.0
    else:
        c1 = 0.0
        lam = sqrt(vol / (96 * c_n(6))) if lam is None else float(lam)
        eta = 1 / 48 if eta is None else float(eta)
    if not lam > 0:
        raise ValueError("Lambda must be positive")
    return BlowupParams(domain, float(eps), lam, tuple(Q), eta, delta, c1)


def eps_from_mu(mu: float, c1: float) -> float:
    """Inverse of mu = (c1 / -ln eps)^{1/2}."""
    return exp(-c1 / mu**2)


def in_parameter_box(p: BlowupParams, beta: float = 0.3, lam_width: float = 1.0, eta_width: float = 1.0) -> bool:
    """Whether (Lambda, eta) lie in the admissible box for the reduction."""
    if p.n == 4:
        if not 0 < beta < 1 / 3:
            raise ValueError("beta must lie in (0, 1/3)")
        lo = exp(-0.5) * p.eps**beta
        hi = exp(-0.5) * p.eps**-beta
        return lo <= p.lam <= hi
    s = p.domain.volume / c_n(6)
    w = lam_width * p.eps ** (2 / 3)
    lam_ok = 1 / 96 - w <= p.lam**2 / s <= 1 / 96 + w
    eta_ok = abs(p.eta - 1 / 48) <= eta_width * p.eps ** (1 / 3)
    return lam_ok and eta_ok


# ---------------------------------------------------------------------------
# cutoff


@dataclass(frozen=True)
class Cutoff:
    """chi = 1 within delta/4 of the boundary, 0 beyond delta/2, quintic in between."""

    domain: DomainSpec
    delta: float

    def _s(self, x):
        d = self.domain.distance_to_boundary(x)
        w = self.delta / 4
        return np.clip((d - w) / w, 0.0, 1.0), w

    def value(self, x):
        s, _ = self._s(x)
        return 1.0 - s**3 * (10 - 15 * s + 6 * s * s)

    def derivatives(self, x):
        """(chi, grad chi, Laplacian chi) in x-coordinates; ball only for the derivatives."""
        x = np.asarray(x, dtype=float)
        s, w = self._s(x)
        chi = 1.0 - s**3 * (10 - 15 * s + 6 * s * s)
        d1 = -30 * s * s * (1 - s) ** 2 / w
        d2 = -60 * s * (1 - s) * (1 - 2 * s) / w**2
        if self.domain.shape != "ball":
            inside = (s > 0) & (s < 1)
            if np.any(inside):
                raise NotImplementedError("cutoff derivatives are implemented for balls")
            return chi, np.zeros_like(x), np.zeros_like(chi)
        r = np.sqrt(np.sum(x * x, axis=-1))
        rs = np.where(r > 0, r, 1.0)
        xhat = x / rs[..., None]
        n = x.shape[-1]
        grad = (-d1)[..., None] * xhat
        lap = d2 - d1 * (n - 1) / rs
        return chi, grad, lap


# ---------------------------------------------------------------------------
# screened zonal fields


@dataclass
class ZonalScreenedField:
    """r(x) = sum_l h_l phi_l(|x|) C_l^alpha(xhat . axis) with Delta r = r.

    phi_l is the regular radial solution normalized by phi_l'(R0) = 1, so h_l
    are the zonal coefficients of the Neumann data on |x| = R0.
    """

    n: int
    R0: float
    axis: np.ndarray
    coeffs: np.ndarray
    tail: float = 0.0

    @property
    def alpha(self) -> float:
        return (self.n - 2) / 2.0

    def with_axis(self, axis) -> "ZonalScreenedField":
        return ZonalScreenedField(self.n, self.R0, np.asarray(axis, dtype=float), self.coeffs, self.tail)

    def _denominators(self):
        R0, a = self.R0, self.alpha
        l = np.arange(len(self.coeffs))
        nu = l + a
        z0 = R0 * R0 / 4
        return (l / R0) * special.hyp0f1(nu + 1, z0) + R0 / (2 * (nu + 1)) * special.hyp0f1(nu + 2, z0)

    def value_grad(self, x):
        x = np.asarray(x, dtype=float)
        R0, a = self.R0, self.alpha
        r = np.sqrt(np.sum(x * x, axis=-1))
        tiny = r < 1e-300
        rs = np.where(tiny, 1.0, r)
        xhat = np.where(tiny[..., None], self.axis, x / rs[..., None])
        t = np.clip(np.sum(xhat * self.axis, axis=-1), -1.0, 1.0)
        z = r * r / 4
        rr = r / R0
        D = self._denominators()
        val = np.zeros_like(r)
        radial = np.zeros_like(r)
        tangential = np.zeros_like(r)
        pow_prev = np.zeros_like(r)  # rr^{l-1}
        pow_l = np.ones_like(r)  # rr^l
        for l, h in enumerate(self.coeffs):
            if l > 0:
                pow_prev = pow_l
                pow_l = pow_l * rr
            if h == 0.0:
                continue
            nu = l + a
            F1 = special.hyp0f1(nu + 1, z)
            C = special.eval_gegenbauer(l, a, t)
            phi = pow_l * F1 / D[l]
            val += h * phi * C
            if l == 0:
                dphi = pow_l * r / (2 * (nu + 1)) * special.hyp0f1(nu + 2, z) / D[l]
                radial += h * dphi * C
                continue
            F2 = special.hyp0f1(nu + 2, z)
            dphi = (l * pow_prev / R0 * F1 + pow_l * r / (2 * (nu + 1)) * F2) / D[l]
            phi_over_r = pow_prev / R0 * F1 / D[l]
            dC = 2 * a * special.eval_gegenbauer(l - 1, a + 1, t)
            radial += h * dphi * C
            tangential += h * phi_over_r * dC
        grad = radial[..., None] * xhat + tangential[..., None] * (self.axis - t[..., None] * xhat)
        return val, grad


def _orthonormal_pair(n, Q):
    """axis = Qhat (e_1 if Q = 0) and a unit vector orthogonal to it."""
    Q = np.asarray(Q, dtype=float)
    nq = np.linalg.norm(Q)
    axis = Q / nq if nq > 0 else np.eye(n)[0]
    k = int(np.argmin(np.abs(axis)))
    b = np.eye(n)[k] - axis[k] * axis
    return axis, b / np.linalg.norm(b)


def _project_zonal(n, values, t, w, lmax):
    a = (n - 2) / 2.0
    out = np.empty(lmax + 1)
    for l in range(lmax + 1):
        C = special.eval_gegenbauer(l, a, t)
        log_norm = log(pi) + (1 - 2 * a) * log(2.0) + lgamma(l + 2 * a) - lgamma(l + 1) - log(l + a) - 2 * lgamma(a)
        out[l] = np.sum(w * values * C) / exp(log_norm)
    return out


def _truncate(n, R0, coeffs):
    """Drop the decayed tail; raise if the data is not resolved within MAX_DEGREE."""
    a = (n - 2) / 2.0
    l = np.arange(len(coeffs))
    env = np.abs(coeffs) * special.eval_gegenbauer(l, a, 1.0) * np.abs(
        ZonalScreenedField(n, R0, np.eye(n)[0], coeffs)._denominators() ** -1
        * special.hyp0f1(l + a + 1, R0 * R0 / 4))
    total = env.sum()
    if total == 0.0:
        return coeffs[:1] * 0.0, 0.0
    tails = np.cumsum(env[::-1])[::-1]
    if tails[-10] > CORRECTION_TOL * total:
        raise GreenAccuracyError(
            f"boundary correction tail {tails[-10] / total:.2e} exceeds {CORRECTION_TOL:g}; Q is too close to the boundary")
    L = int(np.argmax(tails <= CORRECTION_TOL * 1e-2 * total))
    return coeffs[: max(L, 1)].copy(), float(tails[L] / total) if L < len(tails) else 0.0


# Neumann data for r:  d_nu r = -g / (mu eps^3), g = d_nu_z [U - Lambda^m rho^{2-n}] - mu eps^2 d_nu_z Psi.
# The H piece has been replaced by the kernel using d_nu G = 0.


def _psi_radial(p, rho):
    """(Psi_rho, Psi_rhorho, dPsi_rho/dLambda) for the scaled correction profile."""
    lam, n = p.lam, p.n
    y = rho / lam
    Urho = (lam / (lam**2 + rho**2)) ** p.m
    if n == 4:
        d1 = dpsi_bar_exact(y)
        q = dpsi_bar_over_r(y)
        dd = -1.0 / (1 + y * y) - 3 * q
        d_lam = -dd * y / lam
    else:
        d1 = dpsi6_exact(y) / lam
        q = dpsi6_over_r(y)
        dd = -1.0 / (1 + y * y) ** 2 - 5 * q
        d_lam = -dd * y / lam**2 - dpsi6_exact(y) / lam**2
    d2 = -Urho - (n - 1) / rho * d1
    return d1, d2, d_lam


def _difference_radial(p, rho):
    """V = U - Lambda^m rho^{-2m}: (V', V'', dV'/dLambda) without cancellation."""
    lam, m, n = p.lam, p.m, p.n
    V1 = -2 * m * lam**m * rho ** (-2 * m - 1) * np.expm1(-(m + 1) * np.log1p(lam**2 / rho**2))
    U = (lam / (lam**2 + rho**2)) ** m
    V2 = -(n - 1) / rho * V1 - n * (n - 2) * U ** ((n + 2) / (n - 2))
    V1_lam = m / lam * V1 + 4 * m * (m + 1) * lam ** (m + 1) * rho * (lam**2 + rho**2) ** (-m - 2)
    return V1, V2, V1_lam


def _neumann_data(p: BlowupParams, x, which, e=None):
    eps, mu = p.eps, p.mu
    Q = np.asarray(p.Q)
    d = x - Q
    dn = np.sqrt(np.sum(d * d, axis=-1))
    xhat = x / np.sqrt(np.sum(x * x, axis=-1))[..., None]
    s = np.sum(d * xhat, axis=-1) / dn
    rho = dn / eps
    V1, V2, V1_lam = _difference_radial(p, rho)
    P1, P2, P1_lam = _psi_radial(p, rho)
    scale = -1.0 / (mu * eps**3)
    if which == "base":
        return scale * (V1 - mu * eps**2 * P1) * s
    if which == "lam":
        return scale * (V1_lam - mu * eps**2 * P1_lam) * s
    if which == "Q":
        de = np.sum(d * e, axis=-1)
        rho_e = -de / (eps * dn)
        s_e = -np.sum(xhat * e, axis=-1) / dn + np.sum(d * xhat, axis=-1) * de / dn**3
        Phi = V1 - mu * eps**2 * P1
        dPhi = V2 - mu * eps**2 * P2
        return scale * (dPhi * rho_e * s + Phi * s_e)
    raise ValueError(which)


@dataclass
class BoundaryCorrection:
    """r and its parameter derivatives as screened zonal fields about Qhat."""

    axis: np.ndarray
    base: ZonalScreenedField
    d_lam: ZonalScreenedField
    d_axial: ZonalScreenedField  # derivative in the physical Q along axis
    Qnorm: float
    fd_step: float

    def value_grad(self, x):
        return self.base.value_grad(x)

    def d_lam_value_grad(self, x):
        return self.d_lam.value_grad(x)

    def d_Q_value_grad(self, x, e):
        """Derivative in the physical Q along the unit vector e."""
        e = np.asarray(e, dtype=float)
        ca = float(e @ self.axis)
        perp = e - ca * self.axis
        pn = np.linalg.norm(perp)
        v, g = self.d_axial.value_grad(x)
        v, g = ca * v, ca * g
        if pn < 1e-14:
            return v, g
        b = perp / pn
        if self.Qnorm == 0.0:
            vb, gb = self.d_axial.with_axis(b).value_grad(x)
            return v + pn * vb, g + pn * gb
        vb = self._rotation_derivative(x, b)
        h = self.fd_step
        n = x.shape[-1]
        gb = np.empty_like(x)
        for k in range(n):
            step = np.zeros(n)
            step[k] = h
            gb[..., k] = (self._rotation_derivative(x + step, b) - self._rotation_derivative(x - step, b)) / (2 * h)
        return v + pn * vb, g + pn * gb

    def _rotation_derivative(self, x, b):
        # moving Q along b rotates the configuration about the origin
        _, g = self.base.value_grad(x)
        gen = np.sum(x * self.axis, axis=-1)[..., None] * b - np.sum(x * b, axis=-1)[..., None] * self.axis
        return -np.sum(gen * g, axis=-1) / self.Qnorm


def solve_boundary_correction(p: BlowupParams, lmax: int = MAX_DEGREE) -> BoundaryCorrection:
    """Expand the Neumann data of r in zonal harmonics about Qhat on the ball."""
    dom = p.domain
    if dom.shape != "ball":
        raise NotImplementedError("the boundary correction is implemented for balls")
    n, R0 = p.n, dom.radius
    a = (n - 2) / 2.0
    axis, b = _orthonormal_pair(n, p.Q)
    t, w = special.roots_gegenbauer(lmax + 40, a)
    x = R0 * (t[:, None] * axis + np.sqrt(1 - t * t)[:, None] * b)

    def build(values):
        coeffs, tail = _truncate(n, R0, _project_zonal(n, values, t, w, lmax))
        return ZonalScreenedField(n, R0, axis, coeffs, tail)

    return BoundaryCorrection(
        axis=axis,
        base=build(_neumann_data(p, x, "base")),
        d_lam=build(_neumann_data(p, x, "lam")),
        d_axial=build(_neumann_data(p, x, "Q", axis)),
        Qnorm=float(np.linalg.norm(p.Q)),
        fd_step=1e-5 * R0,
    )


# ---------------------------------------------------------------------------
# the assembled field


def bracket(z, Qbar):
    """<z - Qbar> = (1 + |z - Qbar|^2)^{1/2}."""
    d = np.asarray(z, dtype=float) - Qbar
    return np.sqrt(1 + np.sum(d * d, axis=-1))


@dataclass
class AnsatzField:
    params: BlowupParams
    green: GreenField
    correction: BoundaryCorrection | None
    cutoff: Cutoff = field(repr=False)

    @property
    def use_correction(self) -> bool:
        return self.correction is not None

    # -- pieces ------------------------------------------------------------

    def _radial(self, z):
        p = self.params
        z = np.asarray(z, dtype=float)
        d = z - p.Qbar
        rho2 = np.sum(d * d, axis=-1)
        return z, d, rho2

    def pieces(self, z) -> dict:
        """Every additive piece of W at z; W = U + mu eps^2 Uhat + T."""
        p = self.params
        z, d, rho2 = self._radial(z)
        lam, eps = p.lam, p.eps
        y = np.sqrt(rho2) / lam
        U = (lam / (lam**2 + rho2)) ** p.m
        if p.n == 4:
            Psi = 0.5 * lam * log(1 / (lam * eps)) + lam * psi_bar_exact(y)
        else:
            Psi = psi6_exact(y)
        x = eps * z
        Hterm = p.amplitude * self.green.H(x)
        if self.use_correction:
            r, _ = self.correction.value_grad(x)
            Rchi = r * self.cutoff.value(x)
        else:
            Rchi = np.zeros_like(U)
        Uhat = -Psi - Hterm + Rchi
        T = p.tail
        W = U + p.mu * eps**2 * Uhat + T
        return {"U": U, "Psi": Psi, "AH": Hterm, "Rchi": Rchi, "Uhat": Uhat, "T": T + 0 * U, "W": W}

    def W(self, z):
        return self.pieces(z)["W"]

    def grad_W(self, z):
        p = self.params
        z, d, rho2 = self._radial(z)
        lam, eps, mu = p.lam, p.eps, p.mu
        U = (lam / (lam**2 + rho2)) ** p.m
        gU = (-2 * p.m * U / (lam**2 + rho2))[..., None] * d
        y = np.sqrt(rho2) / lam
        if p.n == 4:
            gPsi = (dpsi_bar_over_r(y) / lam)[..., None] * d
        else:
            gPsi = (dpsi6_over_r(y) / lam**2)[..., None] * d
        x = eps * z
        gH = p.amplitude * eps * self.green.grad_H(x)
        g = -gPsi - gH
        if self.use_correction:
            r, gr = self.correction.value_grad(x)
            chi, gchi, _ = self.cutoff.derivatives(x)
            g = g + eps * (gr * chi[..., None] + r[..., None] * gchi)
        return gU + mu * eps**2 * g

    def _delta_rchi(self, x, r, gr):
        """Delta_z (R chi) at z = x / eps."""
        chi, gchi, lchi = self.cutoff.derivatives(x)
        return self.params.eps**2 * (chi * r + 2 * np.sum(gr * gchi, axis=-1) + r * lchi)

    def laplacian_W(self, z):
        """Delta W from -Delta U = n(n-2)U^p, Delta Psi = -U, Delta_x H = -1/|Omega|, Delta r = r."""
        p = self.params
        pc = self.pieces(z)
        lam, eps, mu, n = p.lam, p.eps, p.mu, p.n
        x = eps * np.asarray(z, dtype=float)
        lap_Uhat = pc["U"] + p.amplitude * eps**2 / p.domain.volume
        if self.use_correction:
            r, gr = self.correction.value_grad(x)
            lap_Uhat = lap_Uhat + self._delta_rchi(x, r, gr)
        return -n * (n - 2) * pc["U"] ** ((n + 2) / (n - 2)) + mu * eps**2 * lap_Uhat

    def residual(self, z):
        """S[W] = -Delta W + mu eps^2 W - n(n-2) W_+^p, arranged to avoid cancellation."""
        p = self.params
        pc = self.pieces(z)
        eps, mu, n = p.eps, p.mu, p.n
        U, W = pc["U"], pc["W"]
        dW = W - U
        if n == 4:
            nonlin = np.where(W > 0, -dW * (3 * U * U + 3 * U * dW + dW * dW), U**3)
        else:
            nonlin = np.where(W > 0, -dW * (2 * U + dW), U**2)
        S = n * (n - 2) * nonlin + mu**2 * eps**4 * pc["Uhat"]
        if self.use_correction:
            x = eps * np.asarray(z, dtype=float)
            r, gr = self.correction.value_grad(x)
            S = S - mu * eps**2 * self._delta_rchi(x, r, gr)
        if n == 6:
            S = S + eps**6 * (p.eta - c_n(6) * p.lam**2 / p.domain.volume)
        return S

    # -- parameter derivatives -------------------------------------------

    def _d_pieces(self, z, which, e=None):
        """(dU, dUhat, dT, dA/A, (dr, dgrad r)) for one parameter."""
        p = self.params
        z, d, rho2 = self._radial(z)
        lam, eps = p.lam, p.eps
        den = lam**2 + rho2
        U = (lam / den) ** p.m
        y = np.sqrt(rho2) / lam
        x = eps * z
        if which == "lam":
            dU = p.m * U * (rho2 - lam**2) / (lam * den)
            if p.n == 4:
                dPsi = 0.5 * log(1 / (lam * eps)) - 0.5 + psi_bar_exact(y) - y * dpsi_bar_exact(y)
                dT = p.tail / lam
            else:
                dPsi = -y * dpsi6_exact(y) / lam
                dT = 0.0
            dlogA = p.m / lam
            dAH = dlogA * p.amplitude * self.green.H(x)
            dr = self.correction.d_lam_value_grad(x) if self.use_correction else None
        elif which == "Q":
            e = np.asarray(e, dtype=float)
            de = np.sum(d * e, axis=-1)
            dU = 2 * p.m * U * de / den
            if p.n == 4:
                dPsi = -dpsi_bar_over_r(y) * de / lam
            else:
                dPsi = -dpsi6_over_r(y) * de / lam**2
            dT = 0.0
            dlogA = 0.0
            dAH = p.amplitude * eps * (self.green.grad_Q_H(x) @ e)
            if self.use_correction:
                v, g = self.correction.d_Q_value_grad(x, e)
                dr = (eps * v, eps * g)
            else:
                dr = None
        else:
            raise ValueError(which)
        dUhat = -dPsi - dAH
        if dr is not None:
            dUhat = dUhat + dr[0] * self.cutoff.value(x)
        return U, dU, dUhat, dT, dlogA, dr, x

    def dW(self, z, which, e=None):
        """Derivative of W in Lambda ("lam"), Qbar along e ("Q") or eta ("eta")."""
        p = self.params
        if which == "eta":
            if p.n != 6:
                raise ValueError("eta is a parameter only for n = 6")
            return np.full(np.shape(z)[:-1], p.eps**3)
        _, dU, dUhat, dT, *_ = self._d_pieces(z, which, e)
        return dU + p.mu * p.eps**2 * dUhat + dT

    def Z(self, z, which, e=None):
        """-Delta Y + mu eps^2 Y for Y = dW in the given parameter."""
        p = self.params
        eps, mu, n = p.eps, p.mu, p.n
        if which == "eta":
            if n != 6:
                raise ValueError("eta is a parameter only for n = 6")
            return np.full(np.shape(z)[:-1], mu * eps**2 * eps**3)
        U, dU, dUhat, dT, dlogA, dr, x = self._d_pieces(z, which, e)
        pw = (n + 2) / (n - 2)
        out = n * (n - 2) * pw * U ** (pw - 1) * dU + mu**2 * eps**4 * dUhat
        if dr is not None:
            out = out - mu * eps**2 * self._delta_rchi(x, dr[0], dr[1])
        out = out + mu * eps**2 * (dT - dlogA * p.amplitude * eps**2 / p.domain.volume)
        return out

    def normal_derivative(self, z):
        """d_nu W at points z on the boundary of the rescaled ball."""
        if self.params.domain.shape != "ball":
            raise NotImplementedError("normal derivative sampling is implemented for balls")
        z = np.asarray(z, dtype=float)
        nu = z / np.sqrt(np.sum(z * z, axis=-1))[..., None]
        return np.sum(self.grad_W(z) * nu, axis=-1)


def assemble(params: BlowupParams, green: GreenField | None = None, use_correction: bool | None = None) -> AnsatzField:
    """Build W for the given parameters; the correction defaults to on for balls."""
    if green is None:
        green = green_field(params.domain, params.Q)
    if not np.allclose(green.Q, params.Q) or green.domain != params.domain:
        raise ValueError("Green function was built for a different source or domain")
    if use_correction is None:
        use_correction = params.domain.shape == "ball"
    corr = solve_boundary_correction(params) if use_correction else None
    return AnsatzField(params, green, corr, Cutoff(params.domain, params.delta))


def residual(field_: AnsatzField, z):
    return field_.residual(z)


# ---------------------------------------------------------------------------
# quadrature and sampling on Omega_eps


def _ray_length(p: BlowupParams, u, radius):
    """Distance from Qbar to the sphere |z| = radius along unit directions u."""
    c = u @ p.Qbar
    q2 = float(p.Qbar @ p.Qbar)
    return -c + np.sqrt(c * c + radius**2 - q2)


def half_plane_rule(p: BlowupParams, n_phi: int = 48, per_panel: int = 16):
    """Points and weights for integrals over the rescaled ball of fields symmetric about Qhat.

    Points lie in the plane spanned by (axis, b) through Qbar, written as
    Qbar + rho (cos phi axis + sin phi b); the weights carry
    |S^{n-2}| rho^{n-1} sin^{n-2} phi.  A field of the form f(rho, phi) (omega . e)
    with omega orthogonal to the axis integrates against another such field
    with the extra factor 1 / (n - 1) when evaluated at omega = b.
    """
    if p.domain.shape != "ball":
        raise NotImplementedError("quadrature over the rescaled domain is implemented for balls")
    n, eps, lam = p.n, p.eps, p.lam
    axis, b = _orthonormal_pair(n, p.Q)
    R0 = p.domain.radius
    tp, wp = np.polynomial.legendre.leggauss(n_phi)
    phi = 0.5 * pi * (tp + 1)
    wphi = 0.5 * pi * wp
    tr, wr = np.polynomial.legendre.leggauss(per_panel)
    pts, wts = [], []
    for ph, wph in zip(phi, wphi):
        u = np.cos(ph) * axis + np.sin(ph) * b
        rmax = float(_ray_length(p, u, R0 / eps))
        shell = [float(_ray_length(p, u, (R0 - f * p.delta) / eps)) for f in (0.5, 0.25)]
        breaks = [0.0]
        s = 0.25 * lam
        while s < rmax:
            breaks.append(s)
            s *= 4
        breaks = sorted(set([v for v in breaks if v < rmax] + [v for v in shell if 0 < v < rmax] + [rmax]))
        for a0, a1 in zip(breaks[:-1], breaks[1:]):
            rr = 0.5 * (a1 - a0) * (tr + 1) + a0
            w = 0.5 * (a1 - a0) * wr
            pts.append(p.Qbar + rr[:, None] * u)
            wts.append(w * rr ** (n - 1) * np.sin(ph) ** (n - 2) * wph)
    return np.vstack(pts), np.concatenate(wts) * sphere_area(n - 2), b


def norm_samples(p: BlowupParams, shells: int = 64, directions: int = 32, boundary: int = 500, seed: int = 0):
    """Structured sample of Omega_eps: radial shells about Qbar plus a boundary layer."""
    n, eps = p.n, p.eps
    rng = np.random.default_rng(seed)
    axis, _ = _orthonormal_pair(n, p.Q)
    u = rng.normal(size=(directions - 2, n))
    u = np.vstack([axis, -axis, u / np.linalg.norm(u, axis=1, keepdims=True)])
    if p.domain.shape == "ball":
        rmax = _ray_length(p, u, p.domain.radius / eps)
    else:
        L = np.asarray(p.domain.lengths) / eps
        with np.errstate(divide="ignore"):
            t_hi = np.where(u > 0, (L - p.Qbar) / u, np.inf)
            t_lo = np.where(u < 0, -p.Qbar / u, np.inf)
        rmax = np.min(np.minimum(t_hi, t_lo), axis=1)
    frac = np.geomspace(1e-3, 1.0, shells)
    frac[-1] = 1 - 1e-12
    inner = p.Qbar + (rmax[:, None, None] * frac[None, :, None]) * u[:, None, :]
    pts = [p.Qbar[None, :], inner.reshape(-1, n)]
    v = rng.normal(size=(boundary, n))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    depth = rng.uniform(0, 0.5 * p.delta, size=boundary)
    if p.domain.shape == "ball":
        pts.append(v * ((p.domain.radius - depth) / eps)[:, None])
    else:
        L = np.asarray(p.domain.lengths)
        y = rng.uniform(0, 1, size=(boundary, n)) * L
        face = rng.integers(0, n, size=boundary)
        side = rng.integers(0, 2, size=boundary)
        y[np.arange(boundary), face] = np.where(side == 1, L[face] - depth, depth)
        pts.append(y / eps)
    out = np.vstack(pts)
    return out[p.domain.contains(eps * out) | _on_ball_edge(p, out)]


def _on_ball_edge(p, z):
    if p.domain.shape != "ball":
        return np.zeros(len(z), dtype=bool)
    return np.abs(np.sqrt(np.sum((p.eps * z) ** 2, axis=-1)) - p.domain.radius) < 1e-9


_KINDS = {"star": 1, "starstar": 3, "tristar": 2, "quadstar": 4}


def weighted_norm(f, kind: str, p: BlowupParams, samples=None, rule=None) -> float:
    """Weighted sup norms about Qbar; "starstar" adds the scaled mean of f over Omega_eps.

    f is a callable of points (N, n).  The mean uses the half-plane rule, so f
    must be symmetric about the axis through Qbar for that term.
    """
    if kind not in _KINDS:
        raise ValueError(f"unknown norm {kind!r}")
    if (kind in ("star", "starstar")) != (p.n == 4):
        raise ValueError(f"norm {kind!r} does not belong to dimension {p.n}")
    z = norm_samples(p) if samples is None else np.asarray(samples, dtype=float)
    if len(z) == 0:
        raise ValueError("empty sample set")
    val = float(np.max(np.abs(bracket(z, p.Qbar) ** _KINDS[kind] * f(z))))
    if kind == "starstar":
        pts, w, _ = half_plane_rule(p) if rule is None else rule
        mean = float(np.sum(w * f(pts)) / np.sum(w))
        val += p.eps**-3 * sqrt(-log(p.eps)) * abs(mean)
    return val


def gram_matrix(field_: AnsatzField, rule=None) -> np.ndarray:
    """<Z_i, Y_j> over Omega_eps.

    Index 0 is Lambda, indices 1..n are Qbar in the frame (axis, b, ...) with
    axis = Qhat, and index n+1 is eta when n = 6.
    """
    p = field_.params
    n = p.n
    pts, w, b = half_plane_rule(p) if rule is None else rule
    axis = field_.correction.axis if field_.use_correction else _orthonormal_pair(n, p.Q)[0]
    sym = [("lam", None), ("Q", axis)] + ([("eta", None)] if n == 6 else [])
    Ys = [field_.dW(pts, *s) for s in sym]
    Zs = [field_.Z(pts, *s) for s in sym]
    Yb, Zb = field_.dW(pts, "Q", b), field_.Z(pts, "Q", b)
    size = n + 1 + (n == 6)
    G = np.zeros((size, size))
    index = [0, 1] + ([n + 1] if n == 6 else [])
    for i, Zi in zip(index, Zs):
        for j, Yj in zip(index, Ys):
            G[i, j] = np.sum(w * Zi * Yj)
    diag_perp = np.sum(w * Zb * Yb) / (n - 1)
    for k in range(2, n + 1):
        G[k, k] = diag_perp
    return G
