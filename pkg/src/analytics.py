"""
Closed forms of the busy period and of the limiting waiting-time law.

f_rho(t) = sqrt(rho v 1/rho) / t * exp(-(lambda + mu) t) * I1(2 t sqrt(lambda mu)) is the
busy-period density (conditional on D < inf when rho > 1), so that

    (1 / (rho v 1)) * int_0^x f_rho = F_D(x) = P(D <= x)

in every regime. F_T(x) = [1/m + (1 - 1/m) F_D(x)] / C(T) on [0, T], with C(T) the
bracket at x = T.
"""

import logging
import math
from typing import Callable, Literal, Optional, Union

import numpy as np
import scipy.integrate
import scipy.special
from pydantic import BaseModel, ConfigDict, Field

from src.bessel import bessel_i1e
from src.config import settings
from src.errors import ParameterError, SeriesTruncationError
from src.model import Parameters, validate

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]

# [0, SMALL_T] is integrated from the series expansion of f_rho instead of sampling 1/t
SMALL_T = 1e-6


class AnalyticLaw(BaseModel):
    """Busy-period and limiting-law evaluators for one parameter set."""

    model_config = ConfigDict(frozen=True)

    params: Parameters
    series_tol: float = Field(default_factory=lambda: settings.series_tol, gt=0, lt=1)
    quad_tol: float = Field(default_factory=lambda: settings.quad_tol, gt=0, lt=1)
    switch_point: float = Field(default_factory=lambda: settings.switch_point, gt=0)
    max_terms: int = Field(default_factory=lambda: settings.max_series_terms, gt=0)

    @property
    def total_rate(self) -> float:
        return self.params.lam + self.params.mu

    @property
    def bessel_rate(self) -> float:
        """2 sqrt(lambda mu), the argument scale of I1."""
        return 2.0 * math.sqrt(self.params.lam * self.params.mu)

    @property
    def prefactor(self) -> float:
        rho = self.params.rho
        return math.sqrt(max(rho, 1.0 / rho))

    @property
    def density_at_zero(self) -> float:
        """f_rho(0+) = sqrt(rho v 1/rho) * sqrt(lambda mu) = max(lambda, mu)."""
        return max(self.params.lam, self.params.mu)

    @property
    def decay_rate(self) -> float:
        """(sqrt(lambda) - sqrt(mu))^2, the exponential tail rate of f_rho."""
        return (math.sqrt(self.params.lam) - math.sqrt(self.params.mu)) ** 2

    @property
    def tail_window(self) -> tuple[float, float]:
        """Fit window for the density tail: far out for lambda = mu, where decay is t^-3/2."""
        if self.params.critical:
            return settings.critical_window
        return settings.offcritical_window

    @property
    def finite_mass(self) -> float:
        """P(D < inf) = min(1, 1/rho)."""
        return min(1.0, 1.0 / self.params.rho)

    # --- density -----------------------------------------------------------------

    def density(self, t: float) -> float:
        if t < 0:
            raise ParameterError('t', "t must be nonnegative")
        if t == 0.0:
            return self.density_at_zero
        if math.isinf(t):
            return 0.0
        z = self.bessel_rate * t
        return (self.prefactor / t * bessel_i1e(z, self.switch_point)
                * math.exp(-self.decay_rate * t))

    def log_density(self, t: float) -> float:
        if t < 0:
            raise ParameterError('t', "t must be nonnegative")
        if t == 0.0:
            return math.log(self.density_at_zero)
        z = self.bessel_rate * t
        return (math.log(self.prefactor) - math.log(t)
                + math.log(bessel_i1e(z, self.switch_point))
                - self.decay_rate * t)

    # --- distribution function --------------------------------------------------

    def cdf_series(self, x: ArrayLike) -> ArrayLike:
        """
        F_D(x) = mu/(lambda+mu) * sum_m Cat_m p^m P(2m+1, (lambda+mu) x).

        Cat_m is the m-th Catalan number, p = lambda mu / (lambda+mu)^2 and P the
        regularised lower incomplete gamma function; each term is one integral of
        the series of the busy-period density. Summation stops once the remaining
        tail is below ``series_tol``: for 2m+1 > y the ratio of consecutive terms
        is at most r_m = 4p y^2 / ((2m+2)(2m+3)), which decreases in m, so the
        tail after term m is at most term_m * r_m / (1 - r_m).
        """
        scalar = np.ndim(x) == 0
        xs = np.atleast_1d(np.asarray(x, dtype=np.float64))
        if np.any(xs < 0) or np.any(np.isnan(xs)):
            raise ParameterError('x', "x must be nonnegative")

        out = np.zeros_like(xs)
        infinite = np.isinf(xs)
        out[infinite] = self.finite_mass
        finite = ~infinite
        if np.any(finite):
            out[finite] = self._sum_series(self.total_rate * xs[finite])
        np.clip(out, 0.0, 1.0, out=out)
        return float(out[0]) if scalar else out

    def _sum_series(self, y: np.ndarray) -> np.ndarray:
        lam, mu = self.params.lam, self.params.mu
        a = self.total_rate
        log_p = math.log(lam * mu) - 2.0 * math.log(a)
        log_c0 = math.log(mu / a)
        four_p = 4.0 * lam * mu / (a * a)
        y_max = float(np.max(y))
        total = np.zeros_like(y)
        bound = math.inf
        for m in range(self.max_terms):
            log_w = (scipy.special.gammaln(2 * m + 1) - scipy.special.gammaln(m + 1)
                     - scipy.special.gammaln(m + 2) + m * log_p + log_c0)
            term = math.exp(log_w) * scipy.special.gammainc(2 * m + 1, y)
            total += term
            if 2 * m + 1 > y_max:
                r = four_p * y_max * y_max / ((2 * m + 2) * (2 * m + 3))
                if r < 1.0:
                    bound = float(np.max(term)) * r / (1.0 - r)
                    if bound < self.series_tol:
                        logger.debug(f"Busy-period series: {m + 1} terms, tail bound {bound:.2e}")
                        return total
        raise SeriesTruncationError(
            f"busy-period series needed more than {self.max_terms} terms", bound
        )

    def integral(self, x: float) -> float:
        """int_0^x f_rho(t) dt by adaptive quadrature."""
        if x < 0:
            raise ParameterError('x', "x must be nonnegative")
        if math.isinf(x):
            return self.total_mass()
        eps = min(x, SMALL_T)
        head = self._small_t_integral(eps, 0.0)
        if x <= eps:
            return head
        body, _ = scipy.integrate.quad(self.density, eps, x, epsabs=self.quad_tol,
                                       epsrel=self.quad_tol, limit=500)
        return head + body

    def cdf_quad(self, x: float) -> float:
        """F_D(x) by quadrature of f_rho, normalised like :meth:`cdf_series`."""
        return self.integral(x) / max(self.params.rho, 1.0)

    def _small_t_integral(self, eps: float, s: float) -> float:
        """int_0^eps e^-st f_rho(t) dt from f_rho(t) = c0 e^-at (1 + lambda mu t^2 / 2 + ...)."""
        if eps <= 0:
            return 0.0
        c0 = self.density_at_zero
        b = self.total_rate + s
        lam_mu = self.params.lam * self.params.mu
        return c0 * (-math.expm1(-b * eps) / b + lam_mu * eps ** 3 / 6.0)

    def _half_line(self, fn: Callable[[float], float], s: float) -> float:
        """
        int_0^inf e^-st f_rho(t) dt, with fn(t) = e^-st f_rho(t).

        [1, inf) is mapped to (0, 1] by t = 1/v^2, which turns the t^-3/2 tail at
        criticality into a bounded integrand.
        """
        head = self._small_t_integral(SMALL_T, s)
        mid, _ = scipy.integrate.quad(fn, SMALL_T, 1.0, epsabs=self.quad_tol,
                                      epsrel=self.quad_tol, limit=500)

        def mapped(v: float) -> float:
            return fn(1.0 / (v * v)) * 2.0 / (v ** 3)

        tail, _ = scipy.integrate.quad(mapped, 0.0, 1.0, epsabs=self.quad_tol,
                                       epsrel=self.quad_tol, limit=500)
        return head + mid + tail

    def total_mass(self) -> float:
        """int_0^inf f_rho, which is 1 in every regime."""
        return self._half_line(self.density, 0.0)

    # --- Laplace transform ------------------------------------------------------

    def laplace(self, s: float) -> float:
        """
        Gamma(s) = [lambda + mu + s - sqrt((lambda + mu + s)^2 - 4 lambda mu)] / (2 lambda).

        Evaluated in the equivalent form 2 mu / (lambda + mu + s + sqrt(...)), free of
        cancellation.
        """
        if s < 0:
            raise ParameterError('s', "s must be nonnegative")
        b = self.total_rate + s
        root = math.sqrt(max(b * b - 4.0 * self.params.lam * self.params.mu, 0.0))
        return 2.0 * self.params.mu / (b + root)

    def laplace_numeric(self, s: float) -> float:
        """int_0^inf e^-st f_rho(t) dt; equals Gamma(s) for rho <= 1 and rho Gamma(s) above."""
        if s < 0:
            raise ParameterError('s', "s must be nonnegative")
        return self._half_line(lambda t: math.exp(-s * t) * self.density(t), s)

    # --- limiting waiting-time law ------------------------------------------------

    def _check_limit_inputs(self, m: float) -> None:
        if not self.params.finite_deadline:
            raise ParameterError('deadline', "the limiting law needs a finite deadline")
        if not m >= 1:
            raise ParameterError('m', "m must be at least 1")

    def _bracket(self, m: float, x: ArrayLike, method: str) -> ArrayLike:
        if method == 'series':
            busy = self.cdf_series(x)
        elif method == 'quad':
            busy = (np.vectorize(self.cdf_quad, otypes=[np.float64])(x)
                    if np.ndim(x) else self.cdf_quad(float(x)))
        else:
            raise ParameterError('method', f"unknown method {method!r}")
        return 1.0 / m + (1.0 - 1.0 / m) * busy

    def normalization_constant(self, m: float, method: str = 'series') -> float:
        """C(T): the bracket of F_T evaluated at x = T."""
        self._check_limit_inputs(m)
        return float(self._bracket(m, self.params.deadline, method))

    def limiting_atom(self, m: float) -> float:
        """F_T(0) = 1 / (m C(T))."""
        return (1.0 / m) / self.normalization_constant(m)

    def limiting_cdf(self, m: float, x: ArrayLike,
                     method: Literal['series', 'quad'] = 'series') -> ArrayLike:
        """F_T(x): 0 below 0, 1 above T, normalised bracket in between."""
        self._check_limit_inputs(m)
        T = self.params.deadline
        scalar = np.ndim(x) == 0
        xs = np.atleast_1d(np.asarray(x, dtype=np.float64))
        out = np.zeros_like(xs)
        out[xs > T] = 1.0
        inside = (xs >= 0) & (xs <= T)
        if np.any(inside):
            c = self.normalization_constant(m, method)
            out[inside] = np.asarray(self._bracket(m, xs[inside], method)) / c
            out[xs == T] = 1.0
        np.clip(out, 0.0, 1.0, out=out)
        return float(out[0]) if scalar else out

    def limiting_density(self, m: float, t: float) -> float:
        """Density of W_T on (0, T] (the atom at 0 excluded)."""
        self._check_limit_inputs(m)
        if not 0 < t <= self.params.deadline:
            return 0.0
        c = self.normalization_constant(m)
        return (1.0 - 1.0 / m) * self.density(t) / max(self.params.rho, 1.0) / c


def _law(params: Parameters, law: Optional[AnalyticLaw]) -> AnalyticLaw:
    if law is not None:
        return law
    return AnalyticLaw(params=validate(params))


def busy_density(params: Parameters, t: float, law: Optional[AnalyticLaw] = None) -> float:
    return _law(params, law).density(t)


def log_busy_density(params: Parameters, t: float, law: Optional[AnalyticLaw] = None) -> float:
    return _law(params, law).log_density(t)


def busy_cdf_series(params: Parameters, x: ArrayLike,
                    law: Optional[AnalyticLaw] = None) -> ArrayLike:
    """P(D <= x); the total mass is 1/rho when rho > 1."""
    return _law(params, law).cdf_series(x)


def busy_cdf_quad(params: Parameters, x: float, law: Optional[AnalyticLaw] = None) -> float:
    return _law(params, law).cdf_quad(x)


def laplace_gamma(params: Parameters, s: float) -> float:
    return _law(params, None).laplace(s)


def laplace_numeric(params: Parameters, s: float, law: Optional[AnalyticLaw] = None) -> float:
    return _law(params, law).laplace_numeric(s)


def total_mass(params: Parameters, law: Optional[AnalyticLaw] = None) -> float:
    return _law(params, law).total_mass()


def limiting_cdf(params: Parameters, m: float, x: ArrayLike,
                 law: Optional[AnalyticLaw] = None) -> ArrayLike:
    """
    Limiting CDF F_T of the waiting time of served customers.

    Args:
        params: experiment parameters (finite deadline)
        m: estimate of M = E[tau], at least 1
        x: point or array of points

    Returns:
        F_T(x), same shape as x
    """
    return _law(params, law).limiting_cdf(m, x)


def limiting_atom(params: Parameters, m: float, law: Optional[AnalyticLaw] = None) -> float:
    return _law(params, law).limiting_atom(m)
