"""Closed-form and quadrature reference values for the Monte Carlo studies.

All integrals over [a, inf) go through :func:`integrate_to_infinity`: the
tail is mapped by ``v = exp(s)`` (power tails ``v**(1-beta)`` then decay like
``exp((2-beta) s)``), and pieces of doubling width are added until one falls
below the absolute tolerance.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize

from .errors import DivergentModelError, ParameterError, UnsupportedModelError
from .pointproc import ModelParams, NoiseSpec, PointPattern

ABS_TOL = 1e-10
METHOD = "adaptive-quadrature(doubling, abs_tol=1e-10)"

# Grid points within 3*sqrt(2)*s of the receiver, as counted in the bound
CLOSE_GRID_POINTS = 49


def integrate_to_infinity(f, lo: float = 0.0, tol: float = ABS_TOL, log_tail: bool = False,
                          first: float = 1.0, max_pieces: int = 400) -> float:
    """Integral of ``f`` over [lo, inf) by interval doubling.

    With ``log_tail`` the part beyond ``lo + first`` is integrated in
    ``s = log v``, which turns power-law tails into exponential ones.
    """
    def quad(g, a, b):
        val, _ = integrate.quad(g, a, b, epsabs=tol / 16, epsrel=1e-13, limit=400)
        return val

    if log_tail:
        head = quad(f, lo, lo + first)
        s0 = math.log(lo + first)
        return head + integrate_to_infinity(lambda s: f(math.exp(s)) * math.exp(s), s0, tol,
                                            log_tail=False, first=1.0, max_pieces=max_pieces)
    total, x, width = 0.0, lo, first
    for k in range(max_pieces):
        piece = quad(f, x, x + width)
        total += piece
        x += width
        width *= 2
        if k >= 2 and abs(piece) < tol and abs(f(x)) * width < tol:
            return total
    raise RuntimeError("quadrature did not converge on [lo, inf)")


def noise_laplace(noise: NoiseSpec):
    """xi -> E[exp(-xi W)] for the configured noise law."""
    if noise.kind == "off":
        return lambda xi: np.ones_like(np.asarray(xi, dtype=float)) if np.ndim(xi) else 1.0
    if noise.kind == "constant":
        return lambda xi: np.exp(-np.asarray(xi, dtype=float) * noise.level)
    return lambda xi: 1.0 / (1.0 + noise.level * np.asarray(xi, dtype=float))


def laplace_ef(xi, p: float):
    """Laplace transform of e*F' with e ~ Bernoulli(p), F' ~ Exp(1)."""
    return 1 - p + p / (1 + np.asarray(xi, dtype=float))


def _require_exponential(stream_or_none):
    if stream_or_none is not None and not getattr(stream_or_none, "exponential", True):
        raise UnsupportedModelError("closed forms need exponential fading")


def success_prob_given_pattern(pattern: PointPattern, params: ModelParams, i: int, j: int,
                               stream=None) -> float:
    """pi_ij(Phi): per-slot probability of the edge i -> j given the pattern."""
    _require_exponential(stream)
    if i == j:
        raise ParameterError("success probability needs two distinct nodes")
    return math.exp(_log_success_prob(pattern, params, i, j))


def _log_success_prob(pattern, params, i, j):
    p, T, beta = params.aloha_p, params.threshold, params.pathloss_beta
    d = pattern.distances_from(pattern.positions[j])
    dij = d[i]
    others = np.ones(len(pattern), dtype=bool)
    others[[i, j]] = False
    ratio = T * (dij / d[others]) ** beta
    lw = noise_laplace(params.noise)(T * params.fading_mu * (params.pathloss_a * dij) ** beta)
    return math.log(p * (1 - p)) + math.log(lw) + float(np.log(laplace_ef(ratio, p)).sum())


def grid_constant(s: float, beta: float) -> float:
    """(2 pi / s^2) * int_{sqrt2 s}^inf (t + sqrt2 s) t^-beta dt, by quadrature."""
    a = math.sqrt(2) * s
    val = integrate_to_infinity(lambda t: (t + a) * t ** -beta, a, log_tail=True)
    return 2 * math.pi / s ** 2 * val


@dataclass(frozen=True)
class LocalDelayMean:
    exact: float
    bound: float
    log_bound: float
    factors: dict = field(default_factory=dict)


def mean_local_delay_given_pattern(pattern: PointPattern, params: ModelParams, i: int, j: int,
                                   radius: float | None = None, center=None, with_bound: bool = True,
                                   stream=None) -> LocalDelayMean:
    """E[L_ij | Phi] = 1/pi_ij(Phi), and the three-factor bound for Poisson+Grid patterns.

    The bound needs both points inside the ball of ``radius`` around
    ``center`` (defaults: window centre and the smallest such radius).
    """
    _require_exponential(stream)
    log_pi = _log_success_prob(pattern, params, i, j)
    exact = math.exp(-log_pi)
    if not with_bound:
        return LocalDelayMean(exact, math.nan, math.nan)
    if params.grid_step is None or not (pattern.origins == "grid").any():
        raise UnsupportedModelError("the bound is stated for Poisson+Grid patterns")
    p, T, beta, mu, A = (params.aloha_p, params.threshold, params.pathloss_beta,
                         params.fading_mu, params.pathloss_a)
    c = pattern.window.center if center is None else np.asarray(center, dtype=float)
    r0 = pattern.distances_from(c)
    R = max(r0[i], r0[j]) if radius is None else float(radius)
    if r0[i] > R or r0[j] > R or R <= 0:
        raise ParameterError("both points must lie in the ball of the given radius")
    two_r_b = (2 * R) ** beta
    log_pre = -math.log(p * (1 - p)) - math.log(noise_laplace(params.noise)(T * mu * (A * 2 * R) ** beta))
    log_a = -CLOSE_GRID_POINTS * math.log(1 - p) + two_r_b * p * T * grid_constant(params.grid_step, beta)
    m_pts = pattern.origins != "grid"
    inner = m_pts & (r0 <= 2 * R)
    log_b = -int(inner.sum()) * math.log(1 - p)
    far = r0[m_pts & (r0 > 2 * R)] - R
    log_c = -float(np.log(1 - p + p * far ** beta / (far ** beta + T * two_r_b)).sum())
    log_bound = log_pre + log_a + log_b + log_c
    bound = math.exp(log_bound) if log_bound < 709 else math.inf
    return LocalDelayMean(exact, bound, log_bound,
                          {"prefactor": log_pre, "a": log_a, "b": log_b, "c": log_c, "radius": R})


def _poisson_only(params: ModelParams):
    if params.grid_step is not None:
        raise UnsupportedModelError("closed form available for the Poisson model only")
    if not params.lambda_m > 0:
        raise ParameterError("Poisson intensity must be positive")


def interference_integral(r: float, params: ModelParams) -> float:
    """int_0^inf v T l(r) / (l(v) + (1-p) T l(r)) dv, by quadrature."""
    T, p = params.threshold, params.aloha_p
    lr = float(params.pathloss(r))
    if lr == 0:
        return 0.0
    c = (1 - p) * T * lr
    A, beta = params.pathloss_a, params.pathloss_beta
    scale = c ** (1 / beta) / A
    return integrate_to_infinity(lambda v: v * T * lr / ((A * v) ** beta + c), 0.0,
                                 log_tail=True, first=scale)


def interference_integral_closed(r: float, params: ModelParams) -> float:
    """Same integral through int_0^inf u/(u^b + c) du = c^(2/b - 1) pi / (b sin(2 pi / b))."""
    T, p, A, beta = params.threshold, params.aloha_p, params.pathloss_a, params.pathloss_beta
    lr = float(params.pathloss(r))
    if lr == 0:
        return 0.0
    c = (1 - p) * T * lr
    return T * lr / A ** 2 * c ** (2 / beta - 1) * math.pi / (beta * math.sin(2 * math.pi / beta))


def mean_local_delay_poisson(r: float, params: ModelParams, stream=None) -> float:
    """E^{X,Y}[L_XY] for two Palm points at distance ``r`` of a Poisson pattern."""
    _require_exponential(stream)
    if params.pathloss_beta <= 2:
        raise DivergentModelError("mean local delay diverges for beta <= 2")
    _poisson_only(params)
    p, T, mu = params.aloha_p, params.threshold, params.fading_mu
    lr = float(params.pathloss(r))
    lw = noise_laplace(params.noise)(mu * lr * T)
    j = interference_integral(r, params)
    return math.exp(2 * math.pi * p * params.lambda_m * j) / (p * (1 - p) * lw)


def campbell_interference(eps: float, params: ModelParams) -> float:
    """Palm mean of the shot noise at the origin from transmitters beyond ``eps``."""
    beta, A = params.pathloss_beta, params.pathloss_a
    if eps <= 0:
        raise DivergentModelError("near-field shot noise mean diverges at eps = 0")
    if beta <= 2:
        raise DivergentModelError("shot noise mean diverges for beta <= 2")
    _poisson_only(params)
    return (2 * math.pi * params.aloha_p * params.lambda_m / params.fading_mu
            * eps ** (2 - beta) / (A ** beta * (beta - 2)))


def campbell_interference_quad(eps: float, params: ModelParams) -> float:
    if eps <= 0:
        raise DivergentModelError("near-field shot noise mean diverges at eps = 0")
    _poisson_only(params)
    val = integrate_to_infinity(lambda r: r / float(params.pathloss(r)), eps, log_tail=True)
    return 2 * math.pi * params.aloha_p * params.lambda_m / params.fading_mu * val


# --- SNR trial tail ---------------------------------------------------------

@dataclass(frozen=True)
class TailPoint:
    q: float
    exact: float
    lower_bound: float
    log_lower_bound: float
    reference: float
    v_q: float


@dataclass(frozen=True)
class TailCurve:
    q: np.ndarray
    exact: np.ndarray
    lower_bound: np.ndarray
    reference: np.ndarray
    K: float
    v_q: np.ndarray
    log_crossover: float


def _tail_constants(params: ModelParams):
    _poisson_only(params)
    if params.noise.kind == "off":
        return None
    if params.noise.kind != "constant":
        raise UnsupportedModelError("exact SNR trial tail needs constant noise")
    w = params.noise.level
    K = w * params.fading_mu * params.threshold * params.pathloss_a ** params.pathloss_beta
    return K, w


def tail_f(u, params: ModelParams):
    """f(u) = (1-p) exp(-K u^(beta/2)), the per-point SNR failure excess in the squared radius."""
    K, _ = _tail_constants(params)
    return (1 - params.aloha_p) * np.exp(-K * np.asarray(u, dtype=float) ** (params.pathloss_beta / 2))


def v_q(q: float, params: ModelParams) -> float:
    """Root of f(v) = 1/q; defined for q (1-p) > 1."""
    K, w = _tail_constants(params)
    arg = math.log(q * (1 - params.aloha_p))
    if arg <= 0:
        return math.nan
    beta = params.pathloss_beta
    return arg ** (2 / beta) / (params.pathloss_a ** 2 * (params.fading_mu * params.threshold * w) ** (2 / beta))


def _exact_log_survival(q: float, params: ModelParams, form: str = "squared") -> float:
    lam, p = params.lambda_m, params.aloha_p
    K, w = _tail_constants(params)
    beta, A, mu, T = params.pathloss_beta, params.pathloss_a, params.fading_mu, params.threshold

    def one_minus_pow(f):
        return -math.expm1(q * math.log1p(-f))

    if form == "radial":
        # 2 pi lam int (1 - (1 - (1-p) e^{-mu T w l(v)})^q) v dv
        g = lambda v: one_minus_pow((1 - p) * math.exp(-mu * T * w * (A * v) ** beta)) * v
        scale = (1 / K) ** (1 / beta)
        return -2 * math.pi * lam * integrate_to_infinity(g, 0.0, first=scale)
    # u = v^2 turns v dv into du / 2 and (A v)^beta into A^beta u^(beta/2)
    g = lambda u: one_minus_pow((1 - p) * math.exp(-K * u ** (beta / 2)))
    scale = (1 / K) ** (2 / beta)
    return -math.pi * lam * integrate_to_infinity(g, 0.0, first=scale)


def snr_trial_survival(q: float, params: ModelParams, form: str = "squared") -> TailPoint:
    """P0{SNR trials > q} for a Poisson pattern with constant noise, plus its asymptotic lower bound."""
    if q < 0:
        raise ParameterError("q must be non-negative")
    const = _tail_constants(params)
    ref = 1 / q if q > 0 else math.inf
    if const is None:
        exact = 1.0 if q < 1 else 0.0
        return TailPoint(q, exact, math.nan, math.nan, ref, math.nan)
    K, _ = const
    exact = 1.0 if q == 0 else math.exp(_exact_log_survival(q, params, form))
    vq = v_q(q, params) if q > 0 else math.nan
    log_lb = -math.pi * params.lambda_m * (vq + 1 / K)
    return TailPoint(q, exact, math.exp(log_lb) if math.isfinite(log_lb) else math.nan, log_lb, ref, vq)


def tail_crossover(params: ModelParams) -> float:
    """log Q beyond which exp(-pi lam (v_q + 1/K)) >= 1/q holds; found numerically."""
    K, w = _tail_constants(params)
    lam, p, beta = params.lambda_m, params.aloha_p, params.pathloss_beta
    scale = params.pathloss_a ** 2 * (params.fading_mu * params.threshold * w) ** (2 / beta)

    def gap(x):
        # log(lower bound) + log q, as a function of x = log q
        return x - math.pi * lam * ((math.log(1 - p) + x) ** (2 / beta) / scale + 1 / K)

    x0 = -math.log(1 - p) + 1e-12
    hi = max(1.0, 2 * x0)
    while gap(hi) <= 0:
        hi *= 2
        if hi > 1e12:
            raise RuntimeError("no crossover found")
    # gap is concave in x for beta > 2, so there is one sign change on [x0, hi]
    if gap(x0) > 0:
        return x0
    return optimize.brentq(gap, x0, hi, xtol=1e-12)


def snr_tail_curve(qs, params: ModelParams) -> TailCurve:
    pts = [snr_trial_survival(float(q), params) for q in qs]
    const = _tail_constants(params)
    return TailCurve(
        q=np.array([t.q for t in pts]),
        exact=np.array([t.exact for t in pts]),
        lower_bound=np.array([t.lower_bound for t in pts]),
        reference=np.array([t.reference for t in pts]),
        K=math.nan if const is None else const[0],
        v_q=np.array([t.v_q for t in pts]),
        log_crossover=math.nan if const is None else tail_crossover(params),
    )
