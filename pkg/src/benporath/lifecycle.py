"""Ben-Porath life-cycle model with an endogenous retirement age.

An individual chooses schooling ``s`` and retirement age ``R`` on a lifespan
``[0, T]``. The wage after schooling is ``exp(theta(s))``, consumption is
flat when the interest rate equals the discount rate, and the disutility of
work ``f(t) = kappa / (T - t)`` explodes at the end of life. War shocks enter
as

* ``Injury``: scales the disutility of work by ``kappa`` (optionally a wage
  factor and a shorter lifespan),
* ``Captivity``: removes ``x`` units of time from the start of the working
  span,
* ``Displacement``: at age ``d`` the log wage becomes
  ``theta_scale * theta(s) + log(lam)`` and wealth worth ``delta`` (valued at
  ``d``) is lost.

Solvers return the interior optimum of the first-order conditions
(``eq1_residual`` for schooling, ``eq2_residual`` for retirement). All
objects are immutable and every function is pure.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Union

import numpy as np
from scipy.special import expi

from . import numerics
from .exceptions import (
    DomainError,
    NegativeConsumption,
    NoInteriorSolution,
    NonFinite,
    NoSignChange,
)

EPS_T = 1e-6
"""Retirement is bracketed against ``T - EPS_T`` when work never stops paying."""


class Utility(enum.Enum):
    LOG = "log"

    def u(self, c):
        return np.log(c)

    def marginal(self, c):
        return 1.0 / c


class Disutility(enum.Enum):
    HYPERBOLIC = "hyperbolic"


@dataclass(frozen=True)
class Preferences:
    rho: float = 1.0
    r: float = 1.0
    T: float = 1.0
    utility: Utility = Utility.LOG

    def __post_init__(self):
        if not self.r > 0:
            raise DomainError("interest rate r must be positive")
        if not self.T > 0:
            raise DomainError("lifespan T must be positive")
        if not math.isclose(self.rho, self.r, rel_tol=0, abs_tol=1e-15):
            raise DomainError("only rho == r is supported (flat consumption)")
        if not isinstance(self.utility, Utility):
            object.__setattr__(self, "utility", Utility(self.utility))


@dataclass(frozen=True)
class LinearLearning:
    """Learning speed ``theta(s) = intercept + slope * s``."""

    slope: float
    intercept: float = 0.0

    def __call__(self, s):
        return self.intercept + self.slope * s

    def derivative(self, s):
        return self.slope + 0.0 * s


@dataclass(frozen=True)
class Technology:
    theta: Callable = field(default_factory=lambda: LinearLearning(1 / 0.3))
    theta_prime: Optional[Callable] = None
    disutility_scale: float = 1.0
    f_base: Disutility = Disutility.HYPERBOLIC

    def __post_init__(self):
        if self.theta_prime is None:
            deriv = getattr(self.theta, "derivative", None)
            if deriv is None:
                raise DomainError("theta_prime is required for a theta without .derivative")
            object.__setattr__(self, "theta_prime", deriv)
        if not self.disutility_scale >= 1:
            raise DomainError("disutility_scale must be >= 1")

    @classmethod
    def linear(cls, slope: float, disutility_scale: float = 1.0) -> "Technology":
        return cls(theta=LinearLearning(slope), disutility_scale=disutility_scale)

    def f(self, t, T: float):
        return self.disutility_scale / (T - t)

    def wage(self, s):
        return np.exp(self.theta(s))


@dataclass(frozen=True)
class Injury:
    kappa: float = 1.2
    wage_factor: float = 1.0
    lifespan: Optional[float] = None

    def __post_init__(self):
        if not self.kappa > 1:
            raise DomainError("injury kappa must exceed 1")
        if not 0 < self.wage_factor <= 1:
            raise DomainError("injury wage_factor must lie in (0, 1]")


@dataclass(frozen=True)
class Captivity:
    x: float = 0.1

    def __post_init__(self):
        if not self.x >= 0:
            raise DomainError("captivity duration x must be >= 0")


@dataclass(frozen=True)
class Displacement:
    lam: float = 1.0
    delta: float = 0.0
    d: float = 0.0
    theta_scale: float = 1.0

    def __post_init__(self):
        if not 0 < self.lam <= 1:
            raise DomainError("displacement wage factor lam must lie in (0, 1]")
        if not self.delta >= 0:
            raise DomainError("wealth loss delta must be >= 0")
        if not self.d >= 0:
            raise DomainError("displacement age d must be >= 0")
        if not 0 < self.theta_scale <= 1:
            raise DomainError("theta_scale must lie in (0, 1]")


ShockSpec = Union[Injury, Captivity, Displacement]
Shocks = Union[None, ShockSpec, Iterable[ShockSpec]]


@dataclass(frozen=True)
class LifeCyclePlan:
    s: float
    R: float
    c: float
    V: float
    corner: Optional[str] = None


@dataclass(frozen=True)
class PostDisplacementOutcome:
    c_d: float
    R_d: float
    immediate_exit: bool


def _as_tuple(shock: Shocks) -> tuple:
    if shock is None:
        return ()
    if isinstance(shock, (Injury, Captivity, Displacement)):
        return (shock,)
    return tuple(shock)


class _Env:
    """Constants of one (preferences, technology, shocks) combination.

    ``anticipate_displacement`` applies a displacement from labor-market
    entry onward (the ex-ante reading); otherwise the displacement is kept
    aside for the unexpected post-displacement problem.
    """

    def __init__(self, prefs: Preferences, tech: Technology, shock: Shocks = None,
                 anticipate_displacement: bool = True):
        shocks = _as_tuple(shock)
        self.prefs, self.tech = prefs, tech
        self.r = prefs.r
        self.rho = prefs.rho
        self.T = prefs.T
        self.kappa = tech.disutility_scale
        self.x = 0.0
        self.log_wage = 0.0
        self.displacement: Optional[Displacement] = None
        for sh in shocks:
            if isinstance(sh, Injury):
                self.kappa *= sh.kappa
                self.log_wage += math.log(sh.wage_factor)
                if sh.lifespan is not None:
                    self.T = min(self.T, sh.lifespan)
            elif isinstance(sh, Captivity):
                self.x += sh.x
            elif isinstance(sh, Displacement):
                if self.displacement is not None:
                    raise DomainError("at most one displacement per scenario")
                self.displacement = sh
            else:
                raise TypeError(f"unknown shock {sh!r}")
        if self.x >= self.T:
            raise DomainError("captivity duration must be shorter than the lifespan")
        if self.displacement is not None and not self.displacement.d < self.T:
            raise DomainError("displacement age d must lie in [0, T)")
        self.anticipated = self.displacement if anticipate_displacement else None
        self.annuity_T = (1.0 - math.exp(-self.r * self.T)) / self.r

    # technology under the scenario
    def theta(self, s):
        th = self.tech.theta(s) + self.log_wage
        dp = self.anticipated
        if dp is not None:
            th = dp.theta_scale * self.tech.theta(s) + math.log(dp.lam) + self.log_wage
        return th

    def theta_prime(self, s):
        scale = self.anticipated.theta_scale if self.anticipated is not None else 1.0
        return scale * self.tech.theta_prime(s)

    def f(self, t):
        return self.kappa / (self.T - t)

    def wealth_loss_pv(self):
        # time-0 present value of the anticipated wealth loss
        dp = self.anticipated
        return 0.0 if dp is None else dp.delta * math.exp(-self.r * dp.d)

    def consumption(self, s, R):
        r = self.r
        earn = np.exp(self.theta(s)) * (np.exp(-r * (s + self.x)) - np.exp(-r * R)) / r
        return (earn - self.wealth_loss_pv()) / self.annuity_T

    def eq1(self, s, R):
        r = self.r
        return 1.0 / self.theta_prime(s) - (1.0 - math.exp(-r * (R - self.x - s))) / r

    def marginal_benefit(self, s, R):
        c = self.consumption(s, R)
        if c <= 0:
            return math.inf
        return float(self.prefs.utility.marginal(c) * math.exp(self.theta(s)))

    def eq2(self, s, R):
        return self.f(R) - self.marginal_benefit(s, R)

    def eq2_grid(self, s, R):
        """``eq2`` over an array of retirement ages."""
        c = self.consumption(s, R)
        with np.errstate(divide="ignore", invalid="ignore"):
            mb = np.where(c > 0, self.prefs.utility.marginal(np.where(c > 0, c, 1.0)) * math.exp(self.theta(s)),
                          np.inf)
            return self.f(R) - mb

    def disutility_pv(self, R):
        # integral of e^{-rho t} kappa/(T - t) over [0, R]
        rho, T = self.rho, self.T
        R = np.asarray(R, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            val = np.exp(-rho * T) * (expi(rho * T) - expi(rho * (T - R)))
        return self.kappa * np.where(R >= T, np.inf, val)

    def utility_pv(self, c, t0=0.0, t1=None):
        t1 = self.T if t1 is None else t1
        weight = (math.exp(-self.rho * t0) - math.exp(-self.rho * t1)) / self.rho
        return weight * self.prefs.utility.u(c)

    def lifetime_utility(self, s, R):
        """Vectorised V(s, R); -inf where consumption is not positive."""
        s = np.asarray(s, dtype=float)
        R = np.asarray(R, dtype=float)
        c = self.consumption(s, R)
        feasible = (s >= 0) & (R >= s + self.x) & (R < self.T) & (c > 0)
        with np.errstate(divide="ignore", invalid="ignore"):
            v = self.utility_pv(np.where(feasible, c, 1.0)) - self.disutility_pv(np.where(feasible, R, 0.0))
        return np.where(feasible, v, -np.inf)

    def solve_R(self, s) -> tuple[float, Optional[str]]:
        """Smallest retirement age zeroing eq2 for given schooling."""
        lo = s + self.x
        hi = self.T - EPS_T
        if not lo < hi:
            raise NoInteriorSolution("working span is empty", diagnosis="no_working_span")
        g = lambda R: self.eq2(s, R)  # noqa: E731
        try:
            bracket = numerics.find_bracket(lambda R: self.eq2_grid(s, R), lo, hi, vectorized=True)
        except NoSignChange:
            if g(hi) < 0:
                return hi, "work_until_T"
            return lo, "never_work"
        return numerics.find_root(g, bracket), None


def _check_order(s, R, T, strict_T=False):
    if s < 0:
        raise DomainError(f"schooling s={s} must be >= 0")
    if s > R:
        raise DomainError(f"schooling s={s} exceeds retirement age R={R}")
    if R > T or (strict_T and R >= T):
        raise DomainError(f"retirement age R={R} beyond lifespan T={T}")


def consumption(prefs: Preferences, tech: Technology, s: float, R: float, shock: Shocks = None) -> float:
    """Flat consumption financed by earnings over ``[s + x, R]``.

    A displacement in ``shock`` is treated as known from labor-market entry:
    the displaced wage applies throughout and the wealth loss is annuitised.
    """
    env = _Env(prefs, tech, shock)
    _check_order(s, R, env.T)
    if R < s + env.x:
        raise DomainError(f"R={R} falls inside captivity ending at {s + env.x}")
    return float(env.consumption(s, R))


def lifetime_utility(prefs: Preferences, tech: Technology, s: float, R: float, shock: Shocks = None) -> float:
    env = _Env(prefs, tech, shock)
    _check_order(s, R, env.T, strict_T=True)
    if R < s + env.x:
        raise DomainError(f"R={R} falls inside captivity ending at {s + env.x}")
    c = env.consumption(s, R)
    if c == 0:
        raise NonFinite("log utility of zero consumption")
    if c < 0:
        raise NegativeConsumption(f"consumption {c} is negative", value=float(c))
    return float(env.lifetime_utility(s, R))


def lifetime_utility_surface(prefs: Preferences, tech: Technology, shock: Shocks = None):
    """Vectorised ``V(s, R)`` for brute-force search; infeasible nodes give -inf."""
    env = _Env(prefs, tech, shock)
    return env.lifetime_utility


def eq1_residual(prefs: Preferences, tech: Technology, s: float, R: float, x: float = 0.0,
                 shock: Shocks = None) -> float:
    """Marginal cost minus marginal benefit of schooling; zero at the optimum."""
    env = _Env(prefs, tech, shock)
    x_total = x + env.x
    if s < 0:
        raise DomainError("schooling must be >= 0")
    if not R > s + x_total:
        raise DomainError(f"eq1 requires R > s + x (R={R}, s={s}, x={x_total})")
    r = prefs.r
    return float(1.0 / env.theta_prime(s) - (1.0 - math.exp(-r * (R - x_total - s))) / r)


def eq2_residual(prefs: Preferences, tech: Technology, s: float, R: float, shock: Shocks = None) -> float:
    """Disutility of work at ``R`` minus the marginal utility of working there."""
    env = _Env(prefs, tech, shock)
    _check_order(s, R, env.T, strict_T=True)
    c = env.consumption(s, R)
    if c == 0:
        raise NonFinite("marginal utility is infinite at zero consumption")
    if c < 0:
        raise NegativeConsumption(f"consumption {c} is negative", value=float(c))
    return float(env.eq2(s, R))


def solve_ex_ante(prefs: Preferences, tech: Technology, shock: Shocks = None) -> LifeCyclePlan:
    """Jointly optimal schooling and retirement, shocks known in advance."""
    env = _Env(prefs, tech, shock)
    s_hi = env.T - env.x - 2 * EPS_T

    def h(s):
        R, corner = env.solve_R(s)
        if corner is not None:
            return math.nan
        return env.eq1(s, R)

    try:
        bracket = numerics.find_bracket(h, 0.0, s_hi)
    except NoSignChange:
        at0 = h(0.0)
        diagnosis = "schooling_corner_at_zero" if at0 > 0 else "schooling_exhausts_lifespan"
        raise NoInteriorSolution(
            f"no interior schooling optimum (eq1 residual at s=0: {at0:.6g})", diagnosis=diagnosis
        ) from None
    s = numerics.find_root(h, bracket)
    R, _ = env.solve_R(s)
    dp = env.displacement
    if dp is not None and dp.d > s:
        raise DomainError("ex-ante optimisation only covers displacement before labor-market entry")
    c = float(env.consumption(s, R))
    return LifeCyclePlan(s=s, R=R, c=c, V=float(env.lifetime_utility(s, R)))


def solve_ex_post(prefs: Preferences, tech: Technology, shock: Shocks, s_fixed: float) -> LifeCyclePlan:
    """Re-optimise retirement alone with schooling sunk at ``s_fixed``.

    Injuries and captivity are known before retirement is planned. A
    displacement arrives unexpectedly at age ``d``: the plan made without it
    is revised via :func:`solve_post_displacement_retirement`. A displacement
    after the planned retirement age leaves the plan unchanged.
    """
    env = _Env(prefs, tech, shock, anticipate_displacement=False)
    if s_fixed < 0 or s_fixed + env.x >= env.T:
        raise DomainError(f"s_fixed={s_fixed} outside the admissible range")
    R, corner = env.solve_R(s_fixed)
    c = float(env.consumption(s_fixed, R))
    V = float(env.lifetime_utility(s_fixed, R)) if corner != "never_work" else -math.inf
    plan = LifeCyclePlan(s=s_fixed, R=R, c=c, V=V, corner=corner)
    dp = env.displacement
    if dp is None or dp.d >= plan.R:
        return plan
    out = _post_displacement(env, plan, dp)
    V = (env.utility_pv(plan.c, 0.0, dp.d) + env.utility_pv(out.c_d, dp.d, env.T)
         - float(env.disutility_pv(out.R_d)))
    return LifeCyclePlan(s=s_fixed, R=out.R_d, c=out.c_d, V=float(V))


# --- unexpected displacement -------------------------------------------------

def _post_consumption(env: _Env, s, R_planned, c, dp: Displacement, R_d):
    """Post-displacement flat consumption from the displaced budget constraint.

    Assets carried into ``d`` plus displaced earnings over
    ``[max(s + x, d), R_d]`` minus the wealth loss finance ``c_d`` on ``[d, T]``.
    Vectorised over ``R_d``; may be negative.
    """
    r, T, d = env.r, env.T, dp.d
    e0 = s + env.x
    start = max(e0, d)
    w = math.exp(env.theta(s))
    w_d = math.exp(dp.theta_scale * env.tech.theta(s) + math.log(dp.lam) + env.log_wage)
    pre_earn = w * (math.exp(-r * e0) - math.exp(-r * start))
    pre_cons = c * (1.0 - math.exp(-r * d))
    R_d = np.asarray(R_d, dtype=float)
    post_earn = w_d * (math.exp(-r * start) - np.exp(-r * np.maximum(R_d, start)))
    loss = r * dp.delta * math.exp(-r * d)
    return (pre_earn - pre_cons + post_earn - loss) / (math.exp(-r * d) - math.exp(-r * T))


def post_displacement_consumption(prefs: Preferences, tech: Technology, s: float, R_planned: float,
                                  lam: float, delta: float, d: float, R_d: float,
                                  theta_scale: float = 1.0, shock: Shocks = None) -> float:
    """Consumption after an unexpected displacement at age ``d``.

    ``c`` is the flat consumption of the plan ``(s, R_planned)``. With
    ``d >= s`` this equals::

        c + (w_d - w) (e^{-rd} - e^{-rR}) / D + w_d (e^{-rR} - e^{-rR_d}) / D
          - r delta / (1 - e^{-r(T-d)}),       D = e^{-rd} - e^{-rT}

    Raises NegativeConsumption rather than clipping when the loss cannot be
    financed.
    """
    dp = Displacement(lam=lam, delta=delta, d=d, theta_scale=theta_scale)
    env = _Env(prefs, tech, shock, anticipate_displacement=False)
    _check_order(s, R_planned, env.T)
    if not d < env.T:
        raise DomainError("displacement age d must be below T")
    if not d <= R_planned:
        raise DomainError(f"displacement at d={d} after planned retirement R={R_planned}")
    if not d <= R_d <= env.T:
        raise DomainError(f"revised retirement R_d={R_d} outside [d, T]")
    c = float(env.consumption(s, R_planned))
    c_d = float(_post_consumption(env, s, R_planned, c, dp, R_d))
    if c_d <= 0:
        raise NegativeConsumption(f"post-displacement consumption {c_d:.6g} is not positive", value=c_d)
    return c_d


def _post_displacement(env: _Env, plan: LifeCyclePlan, dp: Displacement) -> PostDisplacementOutcome:
    s = plan.s
    w_d = math.exp(dp.theta_scale * env.tech.theta(s) + math.log(dp.lam) + env.log_wage)
    lo = max(dp.d, s + env.x)
    hi = env.T - EPS_T
    mu = env.prefs.utility.marginal

    def g(R_d):
        c_d = float(_post_consumption(env, s, plan.R, plan.c, dp, R_d))
        mb = math.inf if c_d <= 0 else float(mu(c_d)) * w_d
        return env.f(R_d) - mb

    def g_grid(R_d):
        c_d = _post_consumption(env, s, plan.R, plan.c, dp, R_d)
        with np.errstate(divide="ignore"):
            mb = np.where(c_d > 0, mu(np.where(c_d > 0, c_d, 1.0)) * w_d, np.inf)
        return env.f(R_d) - mb

    if g(lo) >= 0:
        R_d = lo
    else:
        try:
            R_d = numerics.find_root(g, numerics.find_bracket(g_grid, lo, hi, vectorized=True))
        except NoSignChange:
            R_d = hi
    c_d = float(_post_consumption(env, s, plan.R, plan.c, dp, R_d))
    if c_d <= 0:
        raise NegativeConsumption(
            f"displacement at d={dp.d} cannot be financed even working until T", value=c_d)
    return PostDisplacementOutcome(c_d=c_d, R_d=float(R_d), immediate_exit=bool(R_d == dp.d))


def solve_post_displacement_retirement(prefs: Preferences, tech: Technology, plan: LifeCyclePlan,
                                       lam: float, delta: float, d: float, theta_scale: float = 1.0,
                                       shock: Shocks = None) -> PostDisplacementOutcome:
    """Revised retirement age after an unexpected displacement at ``d``.

    Solves ``f(R_d) = u'(c_d(R_d)) w_d`` with ``c_d`` from the displaced
    budget constraint. If the marginal benefit of working at ``d`` already
    falls short of ``f(d)`` (with positive consumption), the worker exits at
    once and ``R_d = d``.
    """
    dp = Displacement(lam=lam, delta=delta, d=d, theta_scale=theta_scale)
    env = _Env(prefs, tech, shock, anticipate_displacement=False)
    if not plan.s <= d < env.T:
        raise DomainError(f"displacement age d={d} must lie in [s, T)")
    if not d < plan.R:
        raise DomainError(f"displacement at d={d} after planned retirement R={plan.R}")
    return _post_displacement(env, plan, dp)


def marginal_benefit_after_displacement(prefs: Preferences, tech: Technology, plan: LifeCyclePlan,
                                        dp: Displacement, R_d, shock: Shocks = None) -> np.ndarray:
    """``u'(c_d(R_d)) w_d`` over a grid of revised retirement ages; +inf where c_d <= 0."""
    env = _Env(prefs, tech, shock, anticipate_displacement=False)
    c_d = _post_consumption(env, plan.s, plan.R, plan.c, dp, R_d)
    w_d = math.exp(dp.theta_scale * env.tech.theta(plan.s) + math.log(dp.lam) + env.log_wage)
    with np.errstate(divide="ignore"):
        mb = np.where(c_d > 0, w_d / np.where(c_d > 0, c_d, 1.0), np.inf)
    return mb


def assets_at(prefs: Preferences, tech: Technology, plan: LifeCyclePlan, d: float, shock: Shocks = None) -> float:
    """Net financial wealth at age ``d`` under ``plan``, in time-``d`` units."""
    env = _Env(prefs, tech, shock, anticipate_displacement=False)
    r = env.r
    e0 = plan.s + env.x
    w = math.exp(env.theta(plan.s))
    earn = w * (math.exp(-r * e0) - math.exp(-r * min(max(d, e0), plan.R))) / r
    cons = plan.c * (1.0 - math.exp(-r * d)) / r
    return (earn - cons) * math.exp(r * d)


def delta_for_consumption_drop(prefs: Preferences, drop: float, d: float = 0.0) -> float:
    """Wealth loss at ``d`` whose annuity over ``[d, T]`` lowers consumption by ``drop``."""
    r, T = prefs.r, prefs.T
    return drop * (1.0 - math.exp(-r * (T - d))) / r
