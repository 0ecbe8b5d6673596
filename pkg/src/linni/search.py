"""Critical points of the reduced energies.

n = 4: the interior maximizer (Lambda*, Q*) of K(Lambda, Q) over the box
e^{-1/2} eps^beta <= Lambda <= e^{-1/2} eps^{-beta}, Q at distance > delta_4
from the boundary.

n = 6: the critical point of the truncated form
K(a, b, Q) = |Omega|/6912 + [F(Q) - (8a^3 + ab)|Omega|] eps
and a discrete check of the min-max inequalities that make it a critical value.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import exp, log, sqrt

import numpy as np
from scipy import optimize

from .energy import k_eps4, k_eps6, k_eps6_ab, f_eps4, lam_eta_from_ab
from .green import DomainSpec, f_landscape, green_field, quartic_potential
from .profiles import c_n

__all__ = [
    "SearchError",
    "BoundaryHitError",
    "SearchBox4",
    "SearchBox6",
    "q_lattice",
    "robin_at",
    "stationarity_oracle4",
    "find_max4",
    "boundary_rejection4",
    "find_saddle6",
    "minmax_certificate",
]


class SearchError(RuntimeError):
    """No critical point was found."""


class BoundaryHitError(SearchError):
    """The maximizer sits on a face of the search box."""

    def __init__(self, message, point):
        super().__init__(message)
        self.point = point


def robin_at(domain: DomainSpec, Q) -> float:
    return green_field(domain, np.asarray(Q, dtype=float)).robin


def q_lattice(domain: DomainSpec, margin: float, radial: int = 9, angular: int = 16, seed: int = 0) -> np.ndarray:
    """Source points at distance > margin from the boundary, center included."""
    n = domain.n
    rng = np.random.default_rng(seed)
    c = domain.center
    if domain.shape == "ball":
        rmax = domain.radius - margin
        if rmax <= 0:
            raise ValueError("margin leaves no interior points")
        u = rng.normal(size=(angular, n))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        radii = np.linspace(0, rmax, radial + 1)[1:]
        pts = [c[None, :]] + [c + r * u for r in radii]
        return np.vstack(pts)
    L = np.asarray(domain.lengths)
    if np.any(L <= 2 * margin):
        raise ValueError("margin leaves no interior points")
    g = margin + rng.uniform(0, 1, size=(radial * angular, n)) * (L - 2 * margin)
    return np.vstack([c[None, :], g])


# ---------------------------------------------------------------------------
# n = 4


@dataclass(frozen=True)
class SearchBox4:
    eps: float
    beta: float = 0.3
    delta4: float = 0.2

    def __post_init__(self):
        if not 0 < self.beta < 1 / 3:
            raise ValueError("beta must lie in (0, 1/3)")
        if not 0 < self.eps < 1:
            raise ValueError("eps must lie in (0, 1)")

    @property
    def lam_range(self) -> tuple:
        return exp(-0.5) * self.eps**self.beta, exp(-0.5) * self.eps**-self.beta


def stationarity_oracle4(eps: float, robin: float, c1: float, vol: float) -> float:
    """Lambda solving d/dLambda K = 0 for the displayed terms with c1 = 2 c4 / |Omega|.

    ln Lambda = -1/2 + H |Omega| (c1 (-ln eps))^{1/2}.
    """
    return exp(-0.5 + robin * vol * sqrt(c1 * -log(eps)))


def _maximize_robin(domain, start, margin):
    def neg(q):
        if domain.distance_to_boundary(q) <= margin:
            return 1e6
        return -robin_at(domain, q)

    res = optimize.minimize(neg, start, method="Nelder-Mead",
                            options={"xatol": 1e-9, "fatol": 1e-14, "maxiter": 4000})
    return res.x, -res.fun


def find_max4(domain: DomainSpec, box: SearchBox4, c1: float | None = None, robin_term: bool = True,
              lattice=None, grid: int = 201) -> dict:
    """Maximize the displayed n = 4 reduced energy over the box.

    With robin_term=False only the Lambda part F_eps is maximized.  Raises
    BoundaryHitError when the maximizer lies within 1% of a face.
    """
    if domain.n != 4:
        raise ValueError("find_max4 works in dimension 4")
    vol = domain.volume
    c1 = 2 * c_n(4) / vol if c1 is None else c1
    eps = box.eps
    lo, hi = box.lam_range
    lnl = np.linspace(log(lo), log(hi), grid)
    if not robin_term:
        vals = f_eps4(np.exp(lnl), eps, c1, vol)
        i = int(np.argmax(vals))
        a, b = lnl[max(i - 1, 0)], lnl[min(i + 1, grid - 1)]
        res = optimize.minimize_scalar(lambda t: -f_eps4(exp(t), eps, c1, vol), bounds=(a, b), method="bounded",
                                       options={"xatol": 1e-12})
        point = {"lam": exp(res.x), "Q": None, "value": -res.fun}
        _check_interior(res.x, log(lo), log(hi), None, None, point)
        return point
    pts = q_lattice(domain, box.delta4) if lattice is None else np.asarray(lattice)
    robins = np.array([robin_at(domain, q) for q in pts])
    table = k_eps4(np.exp(lnl)[None, :], robins[:, None], eps, c1, vol)
    qi, li = np.unravel_index(int(np.argmax(table)), table.shape)
    Q, H = _maximize_robin(domain, pts[qi], box.delta4)
    if H < robins[qi]:
        Q, H = pts[qi], robins[qi]
    a, b = lnl[max(li - 1, 0)], lnl[min(li + 1, grid - 1)]
    res = optimize.minimize_scalar(lambda t: -k_eps4(exp(t), H, eps, c1, vol), bounds=(a, b), method="bounded",
                                   options={"xatol": 1e-12})
    point = {"lam": exp(res.x), "Q": Q, "value": float(-res.fun), "robin": H,
             "oracle_lam": stationarity_oracle4(eps, H, c1, vol)}
    _check_interior(res.x, log(lo), log(hi), domain, box.delta4, point)
    return point


def _check_interior(t, a, b, domain, margin, point):
    span = b - a
    if min(t - a, b - t) < 0.01 * span:
        raise BoundaryHitError(f"Lambda maximizer {exp(t):.6g} is on a face of [{exp(a):.6g}, {exp(b):.6g}]", point)
    if domain is not None:
        d = float(domain.distance_to_boundary(point["Q"]))
        inner = (domain.radius if domain.shape == "ball" else min(domain.lengths) / 2) - margin
        if d - margin < 0.01 * inner:
            raise BoundaryHitError("Q maximizer is on the boundary of the admissible set", point)


def boundary_rejection4(domain: DomainSpec, box: SearchBox4, c1: float | None = None, lattice=None) -> dict:
    """The three inequalities showing the maximum is not on the boundary of the box."""
    vol = domain.volume
    c1 = 2 * c_n(4) / vol if c1 is None else c1
    eps, beta = box.eps, box.beta
    lo, hi = box.lam_range
    pts = q_lattice(domain, box.delta4) if lattice is None else np.asarray(lattice)
    robins = np.array([robin_at(domain, q) for q in pts])
    ip = int(np.argmax(robins))
    p_robin = robins[ip]
    lam_star = exp(-0.5)
    interior = float(k_eps4(lam_star, p_robin, eps, c1, vol))
    # samples on the boundary of the Q-set
    edge = _edge_points(domain, box.delta4, len(pts))
    edge_robins = np.array([robin_at(domain, q) for q in edge])
    lam_grid = np.exp(np.linspace(log(lo), log(hi), 41))
    on_edge = float(np.max(k_eps4(lam_grid[None, :], edge_robins[:, None], eps, c1, vol)))
    at_hi = k_eps4(hi, robins, eps, c1, vol)
    at_lo = k_eps4(lo, robins, eps, c1, vol)
    small = float(k_eps4(eps ** (beta / 2), p_robin, eps, c1, vol))
    checks = {
        "interior_beats_Q_edge": {"lhs": interior, "rhs": on_edge, "margin": interior - on_edge},
        "interior_beats_upper_face": {"lhs": interior, "rhs": float(np.max(at_hi)),
                                      "margin": interior - float(np.max(at_hi))},
        "upper_face_negative": {"value": float(np.max(at_hi)), "margin": -float(np.max(at_hi))},
        "small_lambda_beats_lower_face": {"lhs": small, "rhs": float(np.max(at_lo)),
                                          "margin": small - float(np.max(at_lo))},
    }
    checks["small_lambda_ratio"] = small / eps**beta / (beta * c_n(4) ** 2 / (4 * vol))
    checks["lower_face_ratio"] = float(np.max(at_lo)) / eps ** (2 * beta) / (beta * c_n(4) ** 2 / (2 * vol))
    checks["passed"] = all(v["margin"] > 0 for v in checks.values() if isinstance(v, dict))
    return checks


def _edge_points(domain, margin, count, seed=1):
    rng = np.random.default_rng(seed)
    n = domain.n
    if domain.shape == "ball":
        u = rng.normal(size=(count, n))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        return domain.center + (domain.radius - margin) * u
    L = np.asarray(domain.lengths)
    g = margin + rng.uniform(0, 1, size=(count, n)) * (L - 2 * margin)
    face = rng.integers(0, n, size=count)
    side = rng.integers(0, 2, size=count)
    g[np.arange(count), face] = np.where(side == 1, L[face] - margin, margin)
    return g


# ---------------------------------------------------------------------------
# n = 6


@dataclass
class SearchBox6:
    """Level constants of the min-max argument.

    B_r(0) is read as the closed disk of radius r in the (a, b) plane.
    """

    C0: float
    C1: float
    C2: float
    C3: float = 2e-5
    C4: float = 1e-3
    C5: float = 5e-5
    vol: float = 1.0
    eta6: float = 1.0
    lam6: float = 1.0
    violations: list = field(default_factory=list)

    def __post_init__(self):
        v = []
        if not self.C2 < self.C1 < self.C0:
            v.append("C2 < C1 < C0")
        if not 0 < self.C3 < self.C4 < self.eta6:
            v.append("0 < C3 < C4 < eta6")
        if not 0 < self.C3 < self.C5 < self.lam6:
            v.append("0 < C3 < C5 < Lambda6")
        if not 24 * self.C4**2 < self.C5:
            v.append("24 C4^2 < C5")
        if not self.C0 - self.C1 > (self.C6 + self.C7_bound) * self.vol:
            v.append("C0 - C1 > (C6 + C7) |Omega|")
        self.violations = v

    @property
    def valid(self) -> bool:
        return not self.violations

    @property
    def C6(self) -> float:
        return 8 * self.C4**3 + self.C4 * self.C5

    @property
    def C7_bound(self) -> float:
        return 8 * self.C3**3 + self.C3**2

    @classmethod
    def for_domain(cls, domain: DomainSpec, p0=None, **kw):
        p0 = domain.center if p0 is None else p0
        C0 = f_landscape(domain, p0)
        return cls(C0=C0, C1=kw.pop("C1", 0.9 * C0), C2=kw.pop("C2", 0.8 * C0), vol=domain.volume, **kw)


def _grad_hess(fun, x, h):
    k = len(x)
    g = np.zeros(k)
    Hm = np.zeros((k, k))
    f0 = fun(x)
    for i in range(k):
        e = np.zeros(k)
        e[i] = h
        fp, fm = fun(x + e), fun(x - e)
        g[i] = (fp - fm) / (2 * h)
        Hm[i, i] = (fp - 2 * f0 + fm) / h**2
        for j in range(i):
            e2 = np.zeros(k)
            e2[j] = h
            Hm[i, j] = Hm[j, i] = (fun(x + e + e2) - fun(x + e - e2) - fun(x - e + e2) + fun(x - e - e2)) / (4 * h * h)
    return g, Hm


def find_saddle6(domain: DomainSpec, eps: float, starts=None, tol: float = 1e-10, max_iter: int = 50,
                 lattice=None) -> dict:
    """Critical point of the truncated K(a, b, Q) by damped Newton from several starts.

    The (a, b) block is solved exactly: grad(8a^3 + ab) = (24a^2 + b, a) vanishes
    only at the origin.  The Q block runs damped Newton on grad F with
    finite-difference derivatives, started from the best lattice points.
    """
    if domain.n != 6:
        raise ValueError("find_saddle6 works in dimension 6")
    vol = domain.volume
    pts = q_lattice(domain, 0.3 * (domain.radius if domain.shape == "ball" else min(domain.lengths) / 2)) \
        if lattice is None else np.asarray(lattice)
    Fs = np.array([f_landscape(domain, q) for q in pts])
    order = np.argsort(Fs)[::-1]
    starts = [pts[i] for i in order[:3]] if starts is None else starts
    # (a, b): Newton on (24a^2 + b, a) from a generic start
    ab = np.array([0.01, -0.02])
    for _ in range(max_iter):
        a, b = ab
        r = np.array([24 * a * a + b, a])
        J = np.array([[48 * a, 1.0], [1.0, 0.0]])
        ab = ab - np.linalg.solve(J, r)
        if np.linalg.norm(r) < 1e-15:
            break
    h = 1e-3 * (domain.radius if domain.shape == "ball" else min(domain.lengths))
    best = None
    for q0 in starts:
        q = np.array(q0, dtype=float)
        ok = False
        for _ in range(max_iter):
            g, Hm = _grad_hess(lambda x: f_landscape(domain, x), q, h)
            if np.linalg.norm(g) < tol:
                ok = True
                break
            try:
                step = -np.linalg.solve(Hm, g)
            except np.linalg.LinAlgError:
                step = 0.1 * g
            t = 1.0
            f0 = f_landscape(domain, q)
            while t > 1e-6:
                cand = q + t * step
                if domain.contains(cand) and f_landscape(domain, cand) >= f0 - 1e-15:
                    break
                t /= 2
            q = q + t * step
            if np.linalg.norm(t * step) < 1e-12:
                g, _ = _grad_hess(lambda x: f_landscape(domain, x), q, h)
                ok = np.linalg.norm(g) < 1e-6
                break
        if ok:
            F = f_landscape(domain, q)
            if best is None or F > best["F"]:
                best = {"Q": q, "F": F, "grad_F": float(np.linalg.norm(g))}
    if best is None:
        raise SearchError("Newton did not converge from any start")
    a, b = ab
    value = float(k_eps6_ab(a, b, best["F"], eps, vol))
    grad_ab = np.array([-(24 * a * a + b) * vol * eps, -a * vol * eps])
    return {"a": float(a), "b": float(b), "Q": best["Q"], "F": best["F"], "value": value,
            "gradient_norm": float(np.hypot(np.linalg.norm(grad_ab), best["grad_F"] * eps))}


def _level_radius(domain, level, F_of_r, rmax):
    """Radius where the radial F of a ball crosses a level."""
    return optimize.brentq(lambda r: F_of_r(r) - level, 0.0, rmax, xtol=1e-12)


def minmax_certificate(domain: DomainSpec, eps: float, box: SearchBox6 | None = None, mesh: int = 9,
                       perturbations: int = 3, seed: int = 0, model: str = "truncated") -> dict:
    """Discrete check of the min-max inequalities on a ball.

    model="truncated" uses K(a, b, Q) of the (a, b) form; model="displayed"
    evaluates the Lambda-eta form at Lambda(b), eta(a).
    """
    if domain.shape != "ball" or domain.n != 6:
        raise NotImplementedError("the certificate is implemented for the six-dimensional ball")
    box = SearchBox6.for_domain(domain) if box is None else box
    vol = domain.volume
    R = domain.radius
    e1 = np.eye(6)[0]
    F_of_r = lambda r: f_landscape(domain, r * e1)
    r1 = _level_radius(domain, box.C1, F_of_r, 0.95 * R)
    r2 = _level_radius(domain, box.C2, F_of_r, 0.95 * R)

    def K(a, b, Q):
        if model == "truncated":
            return float(k_eps6_ab(a, b, f_landscape(domain, Q), eps, vol))
        lam, eta = lam_eta_from_ab(a, b, eps, vol)
        return float(k_eps6(lam, eta, robin_at(domain, Q), quartic_potential(domain, Q), eps, vol))

    base = vol / 6912
    lower_c = base + (box.C0 - box.C6 * vol) * eps
    upper_B0 = base + (box.C1 + box.C7_bound * vol) * eps
    upper_N2 = base + (box.C2 + box.C7_bound * vol) * eps
    # mesh of the (a, b) disk
    t = np.linspace(-1, 1, mesh)
    A, Bm = np.meshgrid(t, t, indexing="ij")
    inside = A**2 + Bm**2 <= 1
    disk = np.stack([A[inside], Bm[inside]], axis=1) * box.C3
    rng = np.random.default_rng(seed)
    dirs = rng.normal(size=(8, 6))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)

    def max_over_B(phi):
        best = -np.inf
        for a, b in disk:
            for rad in np.linspace(0, r1, 5):
                for u in dirs[:4] if rad > 0 else dirs[:1]:
                    best = max(best, K(*phi(a, b, rad * u)))
        return best

    def max_over_B0():
        return max(K(a, b, r1 * u) for a, b in disk for u in dirs)

    identity = lambda a, b, Q: (a, b, Q)
    maps = [identity]
    for k in range(perturbations):
        amp = rng.uniform(0.2, 0.8)
        w = rng.normal(size=6)
        w /= np.linalg.norm(w)

        def phi(a, b, Q, amp=amp, w=w):
            s = 1 - (np.linalg.norm(Q) / r1) ** 2  # vanishes on the boundary of N_{C1}
            Qn = Q + amp * s * r1 * 0.5 * w
            if np.linalg.norm(Qn) > r2:
                Qn = Qn * r2 / np.linalg.norm(Qn)
            return (a * (1 - 0.5 * s) + 0.5 * s * box.C4 * amp,
                    np.clip(b + 0.5 * s * box.C5 * amp, -box.C5, box.C5), Qn)

        maps.append(phi)
    maxima = [max_over_B(phi) for phi in maps]
    b0 = max_over_B0()
    on_N2 = max(K(a, b, r2 * u) for a in (-box.C4, 0.0, box.C4) for b in (-box.C5, 0.0, box.C5) for u in dirs)
    tangential_a = min(abs(-a * vol * eps) for a in (-box.C4, box.C4))
    tangential_b = min(abs(-(24 * a * a + b) * vol * eps) for a in np.linspace(-box.C4, box.C4, 21)
                       for b in (-box.C5, box.C5))
    ineq = {
        "lower_bound_c": min(maxima) - lower_c,
        "B0_below_c": lower_c - upper_B0,
        "B0_bound_holds": upper_B0 - b0,
        "N_C2_below_c": lower_c - max(on_N2, upper_N2),
        "tangent_on_a_faces": tangential_a,
        "tangent_on_b_faces": tangential_b,
    }
    return {
        "eps": eps,
        "model": model,
        "constants": {"C0": box.C0, "C1": box.C1, "C2": box.C2, "C3": box.C3, "C4": box.C4, "C5": box.C5,
                      "C6": box.C6, "C7_bound": box.C7_bound},
        "constant_violations": list(box.violations),
        "level_radii": {"C1": r1, "C2": r2},
        "inequalities": ineq,
        "passed": box.valid and all(v > 0 for v in ineq.values()),
    }
