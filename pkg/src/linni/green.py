"""Neumann Green functions with a uniform background, for balls and boxes.

G solves -Delta_x G = delta_Q - 1/|Omega| with zero normal derivative and zero
mean over Omega.  H = K - G with K(r) = 1 / (c_n r^{n-2}) is smooth.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy import fft, integrate, special

from .profiles import c_n, sphere_area

__all__ = [
    "DomainSpec",
    "GreenField",
    "GreenAccuracyError",
    "ball",
    "box",
    "green_ball",
    "green_box",
    "green_field",
    "green_oracle_grid",
    "robin",
    "ball_center_robin",
    "quartic_potential",
    "f_landscape",
    "kernel",
    "compare_with_grid",
]

MAX_RATIO = 0.95
SERIES_TOL = 1e-10


class GreenAccuracyError(RuntimeError):
    """Requested evaluation cannot meet its truncation tolerance."""


@dataclass(frozen=True)
class DomainSpec:
    n: int
    shape: str  # "ball" (centered at 0) or "box" ([0, L_1] x ... x [0, L_n])
    radius: float = 1.0
    lengths: tuple = ()

    def __post_init__(self):
        if self.n not in (4, 6):
            raise ValueError("dimension must be 4 or 6")
        if self.shape == "box":
            lens = tuple(float(v) for v in self.lengths) or (1.0,) * self.n
            if len(lens) != self.n or min(lens) <= 0:
                raise ValueError("box needs n positive edge lengths")
            object.__setattr__(self, "lengths", lens)
        elif self.shape == "ball":
            if self.radius <= 0:
                raise ValueError("radius must be positive")
        else:
            raise ValueError(f"unknown shape {self.shape!r}")

    @property
    def volume(self) -> float:
        if self.shape == "ball":
            return self.radius**self.n * sphere_area(self.n - 1) / self.n
        return float(np.prod(self.lengths))

    @property
    def cn(self) -> float:
        return c_n(self.n)

    @property
    def center(self) -> np.ndarray:
        if self.shape == "ball":
            return np.zeros(self.n)
        return 0.5 * np.asarray(self.lengths)

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.shape == "ball":
            return np.sum(x * x, axis=-1) < self.radius**2
        return np.all((x > 0) & (x < np.asarray(self.lengths)), axis=-1)

    def distance_to_boundary(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.shape == "ball":
            return self.radius - np.sqrt(np.sum(x * x, axis=-1))
        L = np.asarray(self.lengths)
        return np.min(np.minimum(x, L - x), axis=-1)


def ball(n: int, radius: float = 1.0) -> DomainSpec:
    return DomainSpec(n, "ball", radius=radius)


def box(n: int, lengths=None) -> DomainSpec:
    return DomainSpec(n, "box", lengths=tuple(lengths) if lengths is not None else ())


def kernel(n: int, r):
    r = np.asarray(r, dtype=float)
    return 1.0 / (c_n(n) * r ** (n - 2))


def _kernel_grad(n, d):
    """Gradient in x of K(|x - Q|), d = x - Q."""
    r2 = np.sum(d * d, axis=-1)
    return (-(n - 2) / c_n(n) * r2 ** (-n / 2.0))[..., None] * d


@dataclass
class GreenField:
    """G, H and grad H for one source point; evaluators accept arrays of points (..., n)."""

    domain: DomainSpec
    Q: np.ndarray
    _H: object = field(repr=False)
    _gradH: object = field(repr=False)
    _gradQH: object = field(repr=False)
    error_estimate: float = 0.0

    def H(self, x):
        return self._H(np.asarray(x, dtype=float))

    def grad_H(self, x):
        return self._gradH(np.asarray(x, dtype=float))

    def grad_Q_H(self, x):
        """Gradient of H(x, Q) with respect to the source Q."""
        return self._gradQH(np.asarray(x, dtype=float))

    def G(self, x):
        x = np.asarray(x, dtype=float)
        d = x - self.Q
        return kernel(self.domain.n, np.sqrt(np.sum(d * d, axis=-1))) - self.H(x)

    @property
    def robin(self) -> float:
        return float(self.H(self.Q[None, :])[0])


# ---------------------------------------------------------------------------
# ball: zonal harmonic series


def _solid_gegenbauer(x, q, alpha, lmax):
    """F_l = |x|^l |q|^l C_l^alpha(xhat.qhat) for l = 0..lmax, with x-gradients.

    Uses l F_l = 2(l+alpha-1) w F_{l-1} - (l+2alpha-2) rho2 F_{l-2}, w = x.q,
    rho2 = |x|^2 |q|^2, which is polynomial and regular at x = 0.  x and q
    broadcast against each other.
    """
    x, q = np.broadcast_arrays(x, q)
    w = np.sum(x * q, axis=-1)
    q2 = np.sum(q * q, axis=-1)[..., None]
    rho2 = np.sum(x * x, axis=-1) * q2[..., 0]
    F = np.zeros((lmax + 1,) + w.shape)
    dF = np.zeros((lmax + 1,) + x.shape)
    F[0] = 1.0
    if lmax >= 1:
        F[1] = 2 * alpha * w
        dF[1] = 2 * alpha * q
    for l in range(2, lmax + 1):
        a = 2 * (l + alpha - 1)
        b = l + 2 * alpha - 2
        F[l] = (a * w * F[l - 1] - b * rho2 * F[l - 2]) / l
        dF[l] = (a * (q * F[l - 1][..., None] + w[..., None] * dF[l - 1])
                 - b * (2 * q2 * x * F[l - 2][..., None] + rho2[..., None] * dF[l - 2])) / l
    return F, dF


def _series_degree(s: float, n: int) -> int:
    """Smallest L with s^L (L+n)^{n-2} / (1-s) below the tolerance."""
    if s == 0.0:
        return 0
    L = 1
    while s**L * (L + n) ** (n - 2) / (1 - s) > SERIES_TOL:
        L += 1
    return L


def green_ball(n: int, R: float, Q) -> GreenField:
    dom = ball(n, R)
    Q = np.asarray(Q, dtype=float).reshape(-1)
    if Q.shape != (n,):
        raise ValueError("source has wrong dimension")
    ratio = float(np.sqrt(Q @ Q)) / R
    if ratio >= 1:
        raise ValueError("source outside the open ball")
    if ratio > MAX_RATIO:
        raise GreenAccuracyError(f"|Q|/R = {ratio:.3f} exceeds {MAX_RATIO}")
    vol = dom.volume
    cn = c_n(n)
    alpha = (n - 2) / 2.0
    L = _series_degree(ratio, n)
    ls = np.arange(1, L + 1)
    coef = -(ls + n - 2) / (ls * cn * R ** (2 * ls + n - 2))
    a0 = (R**2 / (2 * (n - 2)) - (Q @ Q) / (2 * n) + R**2 / (2 * (n + 2))) / vol
    tail = ratio ** (L + 1) * (L + 1 + n) ** (n - 2) / (1 - ratio) / (cn * R ** (n - 2))

    def H(x):
        r2 = np.sum(x * x, axis=-1)
        out = -r2 / (2 * n * vol) + a0
        if L:
            F, _ = _solid_gegenbauer(x, Q, alpha, L)
            out = out + np.tensordot(coef, F[1:], axes=1)
        return out

    def gradH(x):
        g = -x / (n * vol)
        if L:
            _, dF = _solid_gegenbauer(x, Q, alpha, L)
            g = g + np.tensordot(coef, dF[1:], axes=1)
        return g

    # Q-derivatives of the degree-l term decay one power slower, and the
    # l = 1 term survives at Q = 0
    LQ = L + 1
    lq = np.arange(1, LQ + 1)
    coefQ = -(lq + n - 2) / (lq * cn * R ** (2 * lq + n - 2))

    def gradQH(x):
        # F_l is symmetric under x <-> Q, so differentiate with roles swapped
        g = -np.broadcast_to(Q, x.shape) / (n * vol)
        _, dF = _solid_gegenbauer(np.broadcast_to(Q, x.shape), x, alpha, LQ)
        return g + np.tensordot(coefQ, dF[1:], axes=1)

    return GreenField(dom, Q, H, gradH, gradQH, tail)


# ---------------------------------------------------------------------------
# box: Ewald split of the Neumann heat kernel


def _box_images(q, lengths, dmax):
    """Neumann images of q (direct point excluded) within distance dmax of the box."""
    per_axis = []
    for qi, Li in zip(q, lengths):
        kmax = int(np.ceil(dmax / (2 * Li))) + 1
        pts = []
        for k in range(-kmax, kmax + 1):
            for sgn in (1.0, -1.0):
                p = sgn * qi + 2 * k * Li
                gap = max(0.0, -p, p - Li)
                if gap <= dmax:
                    pts.append((p, k == 0 and sgn > 0))
        per_axis.append(pts)
    imgs = []
    for combo in itertools.product(*per_axis):
        if all(flag for _, flag in combo):
            continue
        imgs.append([p for p, _ in combo])
    return np.array(imgs)


def _box_modes(lengths, kmax2):
    """Nonzero cosine multi-indices j with |k|^2 <= kmax2, built axis by axis."""
    J = np.zeros((1, 0), dtype=int)
    K2 = np.zeros(1)
    for L in lengths:
        js = np.arange(0, int(np.sqrt(kmax2) * L / np.pi) + 1)
        k2 = (js * np.pi / L) ** 2
        tot = K2[:, None] + k2[None, :]
        keep = tot <= kmax2
        rows, cols = np.nonzero(keep)
        J = np.column_stack([J[rows], js[cols]])
        K2 = tot[rows, cols]
    nz = K2 > 0
    return J[nz], K2[nz]


def green_box(n: int, lengths, Q, split: float | None = None, cut: float = 32.0) -> GreenField:
    """Ewald form with split time s0: image sum for s < s0, cosine modes for s > s0."""
    dom = box(n, lengths)
    L = np.asarray(dom.lengths)
    Q = np.asarray(Q, dtype=float).reshape(-1)
    if not dom.contains(Q):
        raise ValueError("source must be strictly inside the box")
    vol = dom.volume
    s0 = split if split is not None else 0.02 * float(np.min(L)) ** 2
    a = n / 2.0 - 1.0
    pref = special.gamma(a) / (4 * np.pi ** (n / 2.0))
    dmax = np.sqrt(4 * s0 * cut)
    images = _box_images(Q, L, dmax)
    J, K2 = _box_modes(L, cut / s0)
    kvec = J * np.pi / L
    eps = np.where(J == 0, 1.0, 2.0)
    mode_w = np.prod(eps, axis=1) * np.exp(-K2 * s0) / K2 / vol
    cq = np.prod(np.cos(kvec * Q), axis=1)
    # omitted terms: next image shell and next mode shell
    err = pref * special.gammaincc(a, cut) / dmax ** (n - 2) * 2 * n + np.exp(-cut) * s0 / vol * 2 * n

    if err > 1e-8:
        raise GreenAccuracyError(f"Ewald tail estimate {err:.2e} above 1e-8")

    def smooth_free(r2):
        # int_{s0}^inf (4 pi s)^{-n/2} exp(-r^2/4s) ds, regular at r = 0
        z = r2 / (4 * s0)
        with np.errstate(divide="ignore", invalid="ignore"):
            val = pref * special.gammainc(a, z) / r2 ** (a)
        small = z < 1e-8
        lim = 1.0 / (4 * np.pi ** (n / 2.0) * a) / (4 * s0) ** a
        return np.where(small, lim, val)

    def d_smooth_free(d, r2):
        # gradient of smooth_free(|d|^2) in d
        z = r2 / (4 * s0)
        with np.errstate(divide="ignore", invalid="ignore"):
            dz = np.exp(-z) * z ** (a - 1) / special.gamma(a) / (4 * s0)
            g = pref * (dz / r2**a - a * special.gammainc(a, z) / r2 ** (a + 1))
        lim = 1.0 / (4 * np.pi ** (n / 2.0) * a) / (4 * s0) ** a
        g = np.where(z < 1e-8, -lim * a / ((a + 1) * 4 * s0), g)
        return (2 * g)[..., None] * d

    def H(x):
        x = np.asarray(x, dtype=float)
        d = x - Q
        out = smooth_free(np.sum(d * d, axis=-1)) + s0 / vol
        flat = x.reshape(-1, n)
        res = np.empty(flat.shape[0])
        for i, xi in enumerate(flat):
            D2 = np.sum((xi - images) ** 2, axis=1)
            img = pref * special.gammaincc(a, D2 / (4 * s0)) / D2**a
            cx = np.prod(np.cos(kvec * xi), axis=1)
            res[i] = -np.sum(img) - np.sum(mode_w * cx * cq)
        return out + res.reshape(out.shape)

    def gradH(x):
        x = np.asarray(x, dtype=float)
        d = x - Q
        g = d_smooth_free(d, np.sum(d * d, axis=-1))
        flat = x.reshape(-1, n)
        res = np.empty_like(flat)
        for i, xi in enumerate(flat):
            dd = xi - images
            D2 = np.sum(dd * dd, axis=1)
            # d/dx of Gamma(a, D^2/4s0)/D^{2a}
            z = D2 / (4 * s0)
            fac = -np.exp(-z) * z ** (a - 1) / (4 * s0) / D2**a - a * special.gammaincc(a, z) * special.gamma(a) / D2 ** (a + 1)
            gi = pref / special.gamma(a) * np.sum((2 * fac)[:, None] * dd, axis=0)
            c = np.cos(kvec * xi)
            s = np.sin(kvec * xi)
            dcx = np.empty((len(K2), n))
            for j in range(n):
                others = np.prod(np.delete(c, j, axis=1), axis=1)
                dcx[:, j] = -kvec[:, j] * s[:, j] * others
            res[i] = -gi - np.sum((mode_w * cq)[:, None] * dcx, axis=0)
        return g + res.reshape(g.shape)

    def gradQH(x):
        # H(x, Q) = H(Q, x): swap roles via a fresh field at each x
        x = np.atleast_2d(np.asarray(x, dtype=float))
        flat = x.reshape(-1, n)
        out = np.array([green_box(n, L, xi, split=s0, cut=cut).grad_H(Q[None, :])[0] for xi in flat])
        return out.reshape(x.shape)

    return GreenField(dom, Q, H, gradH, gradQH, float(err))


def green_field(domain: DomainSpec, Q) -> GreenField:
    if domain.shape == "ball":
        return green_ball(domain.n, domain.radius, Q)
    return green_box(domain.n, domain.lengths, Q)


def robin(field_: GreenField) -> float:
    return field_.robin


def ball_center_robin(n: int, R: float = 1.0) -> float:
    """H(0,0) on B_R from the radial solution G = K(r) + r^2/(2n|Omega|) + C with zero mean.

    Integrating K and r^2 over the ball gives H(0,0) = -C = R^2 n / (|Omega| (n-2)(n+2)).
    """
    vol = ball(n, R).volume
    return R * R * n / (vol * (n - 2) * (n + 2))


# ---------------------------------------------------------------------------
# brute-force grid oracle


@dataclass
class GridGreen:
    domain: DomainSpec
    Q: np.ndarray
    h: np.ndarray
    values: np.ndarray  # G at cell centers

    def centers(self, idx) -> np.ndarray:
        return (np.asarray(idx) + 0.5) * self.h


def green_oracle_grid(domain: DomainSpec, Q, resolution: int, order: int = 4) -> GridGreen:
    """Cell-centered Neumann Laplacian (2nd or 4th order) diagonalized by DCT-II.

    Even reflection at the walls keeps both stencils diagonal in the cosine basis.
    The source is spread over the surrounding 2^n cell centers with multilinear
    weights; this reduces to a single unit cell mass when Q is a cell center.
    """
    if order not in (2, 4):
        raise ValueError("order must be 2 or 4")
    if domain.shape != "box":
        raise ValueError("grid oracle is defined on boxes")
    n = domain.n
    N = int(resolution)
    if N**n > 3e7:
        raise ValueError("grid too large")
    L = np.asarray(domain.lengths)
    h = L / N
    Q = np.asarray(Q, dtype=float)
    vol = domain.volume
    cell = np.prod(h)

    rhs = np.full((N,) * n, -1.0 / vol)
    pos = Q / h - 0.5
    base = np.floor(pos).astype(int)
    frac = pos - base
    for corner in itertools.product((0, 1), repeat=n):
        idx = base + np.array(corner)
        wgt = np.prod(np.where(np.array(corner) == 1, frac, 1 - frac))
        if wgt == 0:
            continue
        idx = np.clip(idx, 0, N - 1)
        rhs[tuple(idx)] += wgt / cell

    # -Delta_h G = rhs
    coef = fft.dctn(rhs, type=2, norm="ortho")
    eig = np.zeros((N,) * n)
    for ax in range(n):
        th = np.pi * np.arange(N) / N
        if order == 2:
            lam = (2 - 2 * np.cos(th)) / h[ax] ** 2
        else:
            lam = (2.5 - 8.0 / 3.0 * np.cos(th) + np.cos(2 * th) / 6.0) / h[ax] ** 2
        shape = [1] * n
        shape[ax] = N
        eig = eig + lam.reshape(shape)
    eig.flat[0] = 1.0
    coef /= eig
    coef.flat[0] = 0.0
    G = fft.idctn(coef, type=2, norm="ortho")
    return GridGreen(domain, Q, h, G)


def compare_with_grid(field_: GreenField, grid: GridGreen, min_cells: float = 5.0,
                      samples: int = 300, seed: int = 0) -> dict:
    """max |G_field - G_grid| / max |G_field| over random cell centers away from Q.

    G changes sign inside the box, so errors are measured against the sup of G
    on the compared set rather than pointwise.
    """
    n = grid.domain.n
    N = grid.values.shape[0]
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, N, size=(samples, n))
    x = grid.centers(idx)
    far = np.linalg.norm(x - grid.Q, axis=1) > min_cells * float(np.max(grid.h))
    x, idx = x[far], idx[far]
    if len(x) == 0:
        raise ValueError("no grid points far enough from the source")
    exact = field_.G(x)
    approx = grid.values[tuple(idx.T)]
    err = float(np.max(np.abs(exact - approx)) / np.max(np.abs(exact)))
    return {"rel_error": err, "points": int(len(x)),
            "median_pointwise": float(np.median(np.abs(exact - approx) / np.abs(exact)))}


# ---------------------------------------------------------------------------
# |x - Q|^{-4} potential and the n = 6 landscape


def quartic_potential(domain: DomainSpec, Q) -> float:
    """int_Omega |x - Q|^{-4} dx in R^6."""
    if domain.n != 6:
        raise ValueError("quartic potential is used in dimension 6")
    Q = np.asarray(Q, dtype=float)
    if domain.shape == "ball":
        # rays from Q: int over S^5 of rho(omega)^2 / 2, rho = distance to the sphere
        q = float(np.sqrt(Q @ Q))
        R = domain.radius

        def ray(phi):
            c = q * np.cos(phi)
            rho = -c + np.sqrt(c * c + R * R - q * q)
            return 0.5 * rho * rho * np.sin(phi) ** 4

        val, _ = integrate.quad(ray, 0.0, np.pi, epsabs=0.0, epsrel=1e-13, limit=200)
        return sphere_area(4) * val
    return _box_flux_potential(domain, Q)


def _box_flux_potential(domain, Q, nodes: int = 12, panels: int = 2) -> float:
    # |y|^{-4} = -Delta(|y|^{-2}) / 4 in R^6, so the integral is a boundary flux
    # of (x - Q).nu / (2 |x - Q|^4) over the twelve faces.
    L = np.asarray(domain.lengths)
    gx, gw = np.polynomial.legendre.leggauss(nodes)
    total = 0.0
    for ax in range(6):
        for side in (0.0, 1.0):
            others = [i for i in range(6) if i != ax]
            pts1, wts1 = [], []
            for i in others:
                edges = np.linspace(0, L[i], panels + 1)
                p = np.concatenate([0.5 * (b + a) + 0.5 * (b - a) * gx for a, b in zip(edges[:-1], edges[1:])])
                w = np.concatenate([0.5 * (b - a) * gw for a, b in zip(edges[:-1], edges[1:])])
                pts1.append(p)
                wts1.append(w)
            mesh = np.meshgrid(*pts1, indexing="ij")
            wmesh = np.meshgrid(*wts1, indexing="ij")
            w = np.prod(np.stack(wmesh), axis=0)
            x = np.empty(mesh[0].shape + (6,))
            for k, i in enumerate(others):
                x[..., i] = mesh[k]
            x[..., ax] = side * L[ax]
            d = x - Q
            nu = 1.0 if side else -1.0
            total += np.sum(w * nu * d[..., ax] / (2 * np.sum(d * d, axis=-1) ** 2))
    return float(total)


def f_landscape(domain: DomainSpec, Q) -> float:
    """F(Q) = |Omega| / 18432 (|Omega| H(Q,Q) + int |x-Q|^{-4} / c_6)."""
    if domain.n != 6:
        raise ValueError("F is defined in dimension 6")
    vol = domain.volume
    hqq = green_field(domain, Q).robin
    return vol / 18432.0 * (vol * hqq + quartic_potential(domain, Q) / c_n(6))
