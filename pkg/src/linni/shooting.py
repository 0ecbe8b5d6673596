"""Radial shooting for the Neumann problem u'' + (n-1)/r u' - mu u + kappa u^p = 0 on a ball.

kappa = 1 is the plain form, kappa = n(n-2) the normalized form.  Solutions of the
two forms differ by the factor (n(n-2))^{(n-2)/4}.

Two integrators are combined:

* direct: t = ln r, normalized by u(0), with a degree-4 Taylor start;
* matched (n = 4 only): for huge u(0) = 1/lambda the core is the bubble
  V0(s) = 1/(1 + s^2/8), s = r/lambda, plus mu lambda^2 V1(s) with
  Delta V1 + 3 V0^2 V1 = V0.  The rescaled u/lambda is then integrated from
  r_m to R, carrying ln(1/lambda) instead of u(0) itself.
"""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from math import exp, log

import numpy as np
from scipy import integrate, optimize, special

__all__ = [
    "ShootingProblem",
    "ShootingResult",
    "StiffnessError",
    "shoot",
    "terminal_slopes",
    "bracket_family",
    "find_nonconstant",
    "scan",
    "dichotomy_scan",
    "inner_corrector",
    "matched_root_oracle",
    "weak_residual",
    "DIRECT_MAX_RATIO",
    "MATCH_LOG_U0",
]

TAYLOR_RADIUS = 1e-4
BLOWUP_FACTOR = 1e6
SLOPE_TOL = 1e-9
DIRECT_MAX_RATIO = 1e12  # upper end of the direct family in u(0)/constant; n = 3 degrades past 1e21
MATCH_LOG_U0 = 14.0  # plain-form n = 4: ln u(0) from which the matched path is used
MATCH_RADIUS = 1e-4
INNER_SMAX = 1e8
N4_UPPER = 64.0  # n = 4 family reaches ln u(0) = N4_UPPER / mu^2


class StiffnessError(RuntimeError):
    """The integrator's step size collapsed."""


@dataclass(frozen=True)
class ShootingProblem:
    n: int
    mu: float
    R: float = 1.0
    normalized: bool = False

    def __post_init__(self):
        if self.n < 3:
            raise ValueError("dimension must be at least 3")
        if self.mu <= 0 or self.R <= 0:
            raise ValueError("mu and R must be positive")

    @property
    def p(self) -> float:
        return (self.n + 2) / (self.n - 2)

    @property
    def kappa(self) -> float:
        return float(self.n * (self.n - 2)) if self.normalized else 1.0

    @property
    def constant(self) -> float:
        return (self.mu / self.kappa) ** ((self.n - 2) / 4)

    @property
    def to_plain(self) -> float:
        """Factor taking a solution of this form to the plain form."""
        return self.kappa ** ((self.n - 2) / 4)

    def f(self, u):
        """Delta u = f(u)."""
        return self.mu * u - self.kappa * u**self.p


@dataclass
class ShootingResult:
    problem: ShootingProblem
    log_u0: float
    slope: float  # R u'(R) / u(R)
    classification: str
    path: str = ""
    r: np.ndarray = field(default_factory=lambda: np.zeros(0))
    profile: np.ndarray = field(default_factory=lambda: np.zeros(0))  # u / u(R)
    log_u_R: float = float("nan")
    weak_residual: float = float("nan")

    @property
    def u0(self) -> float:
        return exp(self.log_u0) if self.log_u0 < 700 else float("inf")

    @property
    def log_max_min(self) -> float:
        return self.log_u0 - self.log_u_R


# ---------------------------------------------------------------------------
# direct path


def _bubble(problem, u0):
    """a with U/u0 = (1 + a r^2)^{-(n-2)/2}, the exact solution of Delta U + kappa U^p = 0."""
    n = problem.n
    return problem.kappa * u0 ** (problem.p - 1) / (n * (n - 2))


def _bubble_minus_one(n, a, r):
    return np.expm1(-(n - 2) / 2 * np.log1p(a * r * r))


def _taylor_start(problem, u0):
    """r0 and the deviation psi = (u - U)/u0, r psi_r at r0 from u = u0 + a2 r^2 + a4 r^4."""
    n, p = problem.n, problem.p
    f0 = problem.f(u0)
    ell = np.where(f0 != 0, np.sqrt(u0 / np.maximum(np.abs(f0), 1e-300)), problem.R)
    r0 = TAYLOR_RADIUS * np.minimum(problem.R, ell)
    return r0, _deviation_series(problem, u0, np.min(r0))


def _deviation_series(problem, u0, r):
    n, p = problem.n, problem.p
    a2 = problem.f(u0) / (2 * n)
    a4 = (problem.mu - problem.kappa * p * u0 ** (p - 1)) * a2 / (4 * (n + 2))
    a = _bubble(problem, u0)
    # subtract the bubble's own series exactly; the remainder starts at mu r^2/(2n)
    psi = (a2 * r**2 + a4 * r**4) / u0 - _bubble_minus_one(n, a, r)
    dpsi = (2 * a2 * r**2 + 4 * a4 * r**4) / u0 + (n - 2) * a * r * r * (1 + a * r * r) ** (-n / 2)
    return psi, dpsi


def _direct(problem, u0, rtol, dense=False):
    """Integrate all u0 at once as deviations from the exact bubble.

    Writing u = U + u0 psi keeps the integration error proportional to the
    deviation rather than to u0, which the tail value u(R) needs when
    u0 is many decades above the constant solution.
    """
    u0 = np.atleast_1d(np.asarray(u0, dtype=float))
    k = u0.size
    n, p, mu, kappa = problem.n, problem.p, problem.mu, problem.kappa
    r0, (psi0, dpsi0) = _taylor_start(problem, u0)
    t0 = float(np.log(np.min(r0)))
    a = _bubble(problem, u0)
    cap = BLOWUP_FACTOR * np.maximum(u0, problem.constant) / u0
    gain = kappa * u0 ** (p - 1)

    def rhs(t, y):
        r2 = np.exp(2 * t)
        ub = (1 + a * r2) ** (-(n - 2) / 2)
        psi = y[:k]
        v = np.clip(ub + psi, 0.0, cap)
        # (ub + psi)^p - ub^p without cancellation while psi << ub
        ratio = np.clip(psi / ub, -1.0, None)
        with np.errstate(divide="ignore"):
            diff = np.where(v > 0, ub**p * np.expm1(p * np.log1p(ratio)), -ub**p)
        diff = np.where(v >= cap, v**p - ub**p, diff)
        w = y[k:]
        return np.concatenate([w, -(n - 2) * w + r2 * (mu * v - gain * diff)])

    atol = 1e-15 * np.minimum(1.0, problem.constant / u0)
    sol = integrate.solve_ivp(rhs, (t0, log(problem.R)), np.concatenate([psi0, dpsi0]), method="DOP853",
                              rtol=rtol, atol=np.concatenate([atol, atol]), dense_output=dense)
    if sol.status < 0:
        raise StiffnessError(sol.message)
    v = _total(problem, u0, a, sol.t, sol.y[:k], sol.y[k:])[0]
    crossed = np.any(v <= 0, axis=1)
    blown = np.any(v >= cap[:, None], axis=1)
    return sol, crossed, blown, k


def _total(problem, u0, a, t, psi, dpsi):
    """u/u0 and r u_r/u0 from the deviation variables."""
    n = problem.n
    a = np.atleast_1d(a)[:, None]
    r2 = np.exp(2 * np.atleast_1d(t))[None, :]
    ub = (1 + a * r2) ** (-(n - 2) / 2)
    dub = -(n - 2) * a * r2 * (1 + a * r2) ** (-n / 2)
    return ub + psi, dub + dpsi


def shoot(problem: ShootingProblem, u0: float, rtol: float = 1e-12) -> float:
    """u'(R) for the initial value u0.

    Returns -inf when u reaches zero and +inf when u exceeds 1e6 times
    max(u0, constant) before r = R.
    """
    if u0 <= 0:
        raise ValueError("u0 must be positive")
    sol, crossed, blown, k = _direct(problem, u0, rtol)
    if crossed[0]:
        return float("-inf")
    if blown[0]:
        return float("inf")
    _, w = _total(problem, u0, _bubble(problem, u0), sol.t[-1:], sol.y[:1, -1:], sol.y[1:, -1:])
    return float(w[0, 0] * u0 / problem.R)


# ---------------------------------------------------------------------------
# matched path (n = 4)


@lru_cache(maxsize=1)
def inner_corrector():
    """Dense V1 on [1e-4, INNER_SMAX] and c_inf = lim V1(s) - 4 ln s."""
    v0 = lambda s: 1 / (1 + s * s / 8)

    def rhs(t, y):
        s = exp(t)
        return [y[1], -2 * y[1] + s * s * (v0(s) - 3 * v0(s) ** 2 * y[0])]

    s0 = 1e-4
    sol = integrate.solve_ivp(rhs, (log(s0), log(INNER_SMAX)), [s0**2 / 8, s0**2 / 4], method="DOP853",
                              rtol=1e-13, atol=1e-15, dense_output=True)
    return sol.sol, float(sol.y[0, -1] - 4 * log(INNER_SMAX))


def _matched_start(log_lam, rm):
    dense, c_inf = inner_corrector()
    lam2 = np.exp(2 * log_lam)
    ln_s = log(rm) - log_lam
    inside = ln_s < log(INNER_SMAX)
    V = np.where(inside, 0.0, 4 * ln_s + c_inf)
    W = np.full_like(ln_s, 4.0)
    if np.any(inside):
        VW = dense(ln_s[inside])
        V[inside], W[inside] = VW[0], VW[1]
    return lam2, V, W


def _matched(problem, log_u0, rtol, dense=False):
    """Plain-form n = 4 shots for ln u(0) >= MATCH_LOG_U0 as the rescaled u / lambda."""
    log_u0 = np.atleast_1d(np.asarray(log_u0, dtype=float))
    k = log_u0.size
    mu, rm = problem.mu, MATCH_RADIUS * problem.R
    log_lam = -log_u0
    lam2, V, W = _matched_start(log_lam, rm)
    u = 8 / (8 * lam2 + rm**2) + mu * V
    w = -(rm**2 / 4) / (lam2 + rm**2 / 8) ** 2 + mu * W

    def rhs(t, y):
        uu = np.maximum(y[:k], 0.0)
        ww = y[k:]
        return np.concatenate([ww, -2 * ww + np.exp(2 * t) * (mu * uu - lam2 * uu**3)])

    sol = integrate.solve_ivp(rhs, (log(rm), log(problem.R)), np.concatenate([u, w]), method="DOP853",
                              rtol=rtol, atol=1e-12, dense_output=dense)
    if sol.status < 0:
        raise StiffnessError(sol.message)
    crossed = np.any(sol.y[:k] <= 0, axis=1)
    return sol, crossed, k, log_lam


def matched_root_oracle(mu: float, R: float = 1.0) -> float:
    """ln u(0) of the n = 4 plain-form root from leading-order matching.

    Outer solution a K1(sqrt(mu) r)/r + b I1(sqrt(mu) r)/r with a = 8 sqrt(mu);
    the Neumann condition fixes b, and matching the constant term with the inner
    4 mu (ln(r/lambda)) + mu c_inf gives ln(1/lambda).
    """
    _, c_inf = inner_corrector()
    k = mu**0.5
    a = 8 * k

    def d(fun, dfun):
        return (k * dfun(1, k * R) * R - fun(1, k * R)) / R**2

    b = -a * d(special.kv, special.kvp) / d(special.iv, special.ivp)
    return (b / (2 * k) - c_inf + 4 * log(k / 2) + 4 * np.euler_gamma - 2) / 4


# ---------------------------------------------------------------------------
# combined


def _use_matched(problem, log_u0):
    return problem.n == 4 and log_u0 + log(problem.to_plain) >= MATCH_LOG_U0


def terminal_slopes(problem: ShootingProblem, log_u0, rtol: float = 1e-12) -> np.ndarray:
    """R u'(R)/u(R) for each ln u(0); -inf if u reaches zero, +inf if it blows up."""
    log_u0 = np.atleast_1d(np.asarray(log_u0, dtype=float))
    out = np.empty(log_u0.size)
    shift = log(problem.to_plain)
    mask = np.array([_use_matched(problem, x) for x in log_u0], dtype=bool)
    if np.any(~mask):
        u0 = np.exp(log_u0[~mask])
        sol, crossed, blown, k = _direct(problem, u0, rtol)
        v, w = _total(problem, u0, _bubble(problem, u0), sol.t[-1:], sol.y[:k, -1:], sol.y[k:, -1:])
        s = w[:, 0] / v[:, 0]
        s = np.where(crossed, -np.inf, np.where(blown, np.inf, s))
        out[~mask] = s
    if np.any(mask):
        plain = problem if not problem.normalized else ShootingProblem(4, problem.mu, problem.R)
        sol, crossed, k, _ = _matched(plain, log_u0[mask] + shift, rtol)
        s = sol.y[k:, -1] / sol.y[:k, -1]
        out[mask] = np.where(crossed, -np.inf, s)
    return out


def bracket_family(problem: ShootingProblem, widen: float = 1.0, per_decade: int = 10) -> np.ndarray:
    """Grid of ln u(0) values scanned for sign changes.

    Direct part: u(0)/constant from 1e-3 to DIRECT_MAX_RATIO.  For n = 4 the
    matched part continues geometrically in ln u(0) up to N4_UPPER / mu^2.
    widen multiplies the upper endpoint and divides the lower one.
    """
    lc = log(problem.constant)
    lo = lc + log(1e-3) - log(widen)
    hi = lc + log(DIRECT_MAX_RATIO) + log(widen)
    if problem.n == 4:
        hi = min(hi, MATCH_LOG_U0 - log(problem.to_plain))
    count = int(np.ceil((hi - lo) / log(10) * per_decade)) + 1
    grid = np.linspace(lo, hi, count)
    if problem.n == 4:
        top = N4_UPPER / problem.mu**2 + log(widen)
        start = MATCH_LOG_U0 - log(problem.to_plain)
        if top > start:
            extra = np.geomspace(start, top, int(np.ceil(np.log(top / start) / np.log(1.02))) + 1)
            grid = np.concatenate([grid, extra[1:]])
    return grid


def _solve_root(problem, a, b, sa, sb, rtol):
    """Bisection until both ends are finite, then Brent."""
    g = lambda x: float(terminal_slopes(problem, [x], rtol)[0])
    for _ in range(200):
        if np.isfinite(sa) and np.isfinite(sb):
            break
        m = 0.5 * (a + b)
        sm = g(m)
        if np.sign(sm) == np.sign(sa):
            a, sa = m, sm
        else:
            b, sb = m, sm
    if sa == 0:
        return a
    if sb == 0:
        return b
    return optimize.brentq(g, a, b, xtol=1e-14 * max(1.0, abs(a)), rtol=1e-15, maxiter=500)


def find_nonconstant(problem: ShootingProblem, log_bracket, rtol: float = 1e-12) -> ShootingResult:
    """Root of the terminal slope between two values of ln u(0).

    The classification is nonconstant-found iff the root lies more than 1e-6
    (relative) away from the constant solution and meets |slope| < 1e-9.
    """
    a, b = sorted(float(x) for x in log_bracket)
    sa, sb = (float(terminal_slopes(problem, [x], rtol)[0]) for x in (a, b))
    if np.sign(sa) == np.sign(sb) and sa != 0 and sb != 0:
        return ShootingResult(problem, float("nan"), float("nan"), "none-found")
    x = _solve_root(problem, a, b, sa, sb, rtol)
    res = _profile(problem, x, rtol)
    far = abs(exp(min(x - log(problem.constant), 700)) - 1) > 1e-6
    ok = np.isfinite(res.slope) and abs(res.slope) < SLOPE_TOL and np.all(res.profile > 0)
    res.classification = "nonconstant-found" if far and ok else "none-found"
    return res


def _profile(problem, log_u0, rtol, samples=200):
    r = np.geomspace(MATCH_RADIUS * problem.R, problem.R, samples)
    if _use_matched(problem, log_u0):
        plain = problem if not problem.normalized else ShootingProblem(4, problem.mu, problem.R)
        sol, crossed, k, log_lam = _matched(plain, [log_u0 + log(problem.to_plain)], rtol, dense=True)
        y = sol.sol(np.log(r))
        u, w = y[0], y[1]
        log_u_R = float(np.log(u[-1]) + log_lam[0]) - log(problem.to_plain)
        path = "matched"
    else:
        u0 = exp(log_u0)
        sol, crossed, blown, k = _direct(problem, u0, rtol, dense=True)
        y = sol.sol(np.log(r))
        v, w = _total(problem, u0, _bubble(problem, u0), np.log(r), y[:1], y[1:])
        u, w = v[0] * u0, w[0] * u0
        log_u_R = float(np.log(u[-1])) if u[-1] > 0 else float("-inf")
        path = "direct"
    slope = float(w[-1] / u[-1])
    res = ShootingResult(problem, float(log_u0), slope, "", path, r, u / u[-1], log_u_R)
    res.weak_residual = weak_residual(problem, res, sol, path)
    return res


def weak_residual(problem, result, sol=None, path=None):
    """Relative defect of int r^{n-1} f(u) dr = [r^{n-1} u'] over the integrated range."""
    if sol is None:
        fresh = _profile(problem, result.log_u0, 1e-12)
        return fresh.weak_residual
    n, mu = problem.n, problem.mu
    t0, t1 = sol.t[0], sol.t[-1]
    if path == "matched":
        lam2 = np.exp(-2 * (result.log_u0 + log(problem.to_plain)))
        g = lambda u: mu * u - lam2 * u**3
        state = lambda t: sol.sol(t)
        nn = 4
    else:
        u0 = exp(result.log_u0)
        a = _bubble(problem, u0)
        g = lambda v: problem.f(v * u0) / u0

        def state(t):
            y = sol.sol(np.atleast_1d(t))
            v, w = _total(problem, u0, a, np.atleast_1d(t), y[:1], y[1:])
            return v[0], w[0]

        nn = n
    x, wts = np.polynomial.legendre.leggauss(8)
    lo, hi = sol.t[:-1], sol.t[1:]
    t = (0.5 * (hi - lo)[:, None] * (x + 1) + lo[:, None]).ravel()
    wt = (0.5 * (hi - lo)[:, None] * wts).ravel()
    vals = np.exp(nn * t) * g(state(t)[0])
    lhs = float(np.sum(wt * vals))
    size = float(np.sum(wt * np.abs(vals)))
    wa, wb = float(np.ravel(state(t0)[1])[0]), float(np.ravel(state(t1)[1])[0])
    # w = r du/dr, so r^{n-1} u' = r^{n-2} w
    flux = np.exp((nn - 2) * t1) * wb - np.exp((nn - 2) * t0) * wa
    return float(abs(lhs - flux) / max(size, abs(flux), 1e-300))


def scan(problem: ShootingProblem, widen: float = 1.0, rtol: float = 1e-12) -> dict:
    """Sign changes over the bracket family and the root of each."""
    grid = bracket_family(problem, widen)
    s = terminal_slopes(problem, grid, rtol)
    sg = np.sign(s)
    roots = []
    for i in np.nonzero(sg[:-1] != sg[1:])[0]:
        res = find_nonconstant(problem, (grid[i], grid[i + 1]), rtol)
        roots.append(res)
    found = [r for r in roots if r.classification == "nonconstant-found"]
    return {"grid": grid, "slopes": s, "roots": roots, "found": found}


def _cell(args):
    n, mu, R, widen, rtol = args
    problem = ShootingProblem(n, mu, R)
    try:
        out = scan(problem, widen, rtol)
    except StiffnessError as err:
        return {"n": n, "mu": mu, "classification": "error", "error": str(err)}
    found = out["found"]
    row = {"n": n, "mu": mu, "classification": "nonconstant-found" if found else "none-found",
           "roots": len(found), "sign_changes": len(out["roots"])}
    if found:
        best = found[0]
        row.update(log_u0=best.log_u0, log_ratio_to_constant=best.log_u0 - log(problem.constant),
                   slope=best.slope, log_max_min=best.log_max_min, weak_residual=best.weak_residual,
                   path=best.path)
    return row


def dichotomy_scan(n_list, mu_grid, R: float = 1.0, widen: float = 1.0, rtol: float = 1e-12,
                   jobs: int | None = None) -> list:
    """Classification table over dimensions and mu values (plain form)."""
    jobs = int(os.environ.get("LINNI_JOBS", "1")) if jobs is None else jobs
    tasks = [(int(n), float(mu), R, widen, rtol) for n in n_list for mu in mu_grid]
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as pool:
            return list(pool.map(_cell, tasks))
    return [_cell(t) for t in tasks]
