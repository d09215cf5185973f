"""Scalar proximal kernels and their vectorised twins.

Every kernel is written once for arrays: a masked Newton (or Halley) loop
keeps iterating the entries that have not converged and counts iterations
per entry. The scalar functions wrap the array versions.
"""
import logging
import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Tuple

import numpy as np
from scipy.special import expit

from .errors import ConvergenceError, NumericalError, ValidationError

__all__ = (
    'MAX_ITERATIONS', 'ProxStats', 'LseSolution', 'LambertSolution', 'LseBenchmark',
    'lambert_w_exp', 'lambert_w_exp_array',
    'prox_lse2', 'prox_lse2_array', 'prox_lse2_benchmark',
    'prox_g1', 'prox_g1_pixel', 'prox_h1', 'prox_h1_pixel', 'prox_j1', 'prox_j1_pixel',
    'group_soft_threshold', 'project_nonneg',
)

log = logging.getLogger(__name__)

MAX_ITERATIONS = 100
# Newton steps below this magnitude count as converged
_STEP_TOL = 1e-16
# relative floor for steps that are pure rounding noise
_ROUNDOFF = 4 * np.finfo(np.float64).eps
_LOG_STEP_TOL = math.log(_STEP_TOL)
# below this W(exp(z)) is solved by Halley on w*exp(w) = exp(z)
_HALLEY_THRESHOLD = 0.12
# below this W(exp(z)) equals exp(z) in double precision
_TINY_Z = -40.0
_BELOW_ONE = np.nextafter(1.0, 0.0)


@dataclass(frozen=True)
class ProxStats:
    """Convergence report of a scalar kernel.

    Attributes:
    iterations (int): The number of Newton or Halley updates performed.
    residual (float): The magnitude of the last, rejected, step.
        Zero when the answer is closed form.

    """
    iterations: int
    residual: float


class LambertSolution(NamedTuple):
    w: np.ndarray
    iterations: np.ndarray
    residual: np.ndarray


class LseSolution(NamedTuple):
    x1: np.ndarray
    x2: np.ndarray
    lam: np.ndarray
    iterations: np.ndarray
    residual: np.ndarray


def _newton(
        w0: np.ndarray,
        step: Callable[[np.ndarray, np.ndarray], np.ndarray],
        tolerance: Callable[[np.ndarray], np.ndarray],
        kernel: str,
        bounds: Tuple[float, float] = (-np.inf, np.inf)):
    """Iterate w <- w - step(w) elementwise until every entry converged.

    step receives the active entries and their flat indices. An entry stops
    when its step is within tolerance or no longer changes it.

    Returns:
        Tuple[numpy.ndarray, numpy.ndarray, numpy.ndarray]:
            The solutions, the per-entry update counts and the last step sizes.

    Raises:
        ConvergenceError: Some entry is still moving after MAX_ITERATIONS.
        NumericalError: A step is not finite.

    """
    w = np.array(w0, dtype=np.float64)
    iterations = np.zeros(w.shape, dtype=np.int64)
    residual = np.zeros(w.shape)
    idx = np.arange(w.size)

    for count in range(MAX_ITERATIONS + 1):
        if idx.size == 0:
            break
        wa = w[idx]
        d = step(wa, idx)
        if not np.all(np.isfinite(d)):
            raise NumericalError(f'{kernel} produced a non-finite step')

        nxt = np.clip(wa - d, *bounds)
        done = (np.abs(d) <= tolerance(wa)) | (nxt == wa)
        residual[idx] = np.abs(d)

        # the last pass only checks convergence
        if count == MAX_ITERATIONS:
            idx = idx[~done]
            break
        w[idx] = nxt
        iterations[idx] += 1
        idx = idx[~done]

    if idx.size:
        raise ConvergenceError(kernel, int(iterations[idx].max()), float(residual[idx].max()))
    return w, iterations, residual


def _finite(name, *arrays):
    for arr in arrays:
        if not np.all(np.isfinite(arr)):
            raise ValidationError(f'{name} needs finite inputs')


def _positive(name, **values):
    for key, value in values.items():
        if not value > 0:
            raise ValidationError(f'{name}: {key} must be positive, got {value}')


def lambert_w_exp_array(z) -> LambertSolution:
    """Compute W(exp(z)) elementwise without forming exp(z).

    For z > 0.12 the root of log(w) + w = z is found by Newton's method,
    started at the asymptotic value z - log(z) when z >= 1 and at the
    lower bound exp(z)/(1 + exp(z)) below; both starts lie left of the
    root of a concave equation, so iterates increase monotonically.
    Otherwise Halley's method is run on w*exp(w) = t with t = exp(z),
    started at t/(1 + t), the Pade approximant of W at the origin.
    For z < -40, W(exp(z)) = exp(z) to double precision.

    Returns:
        LambertSolution: w, per-entry iteration counts and last step sizes.

    Raises:
        ValidationError: Some z is not finite.
        ConvergenceError: An entry needed more than MAX_ITERATIONS.

    """
    z = np.asarray(z, dtype=np.float64)
    _finite('lambert_w_exp', z)
    shape = z.shape
    flat = z.ravel()

    w = np.empty(flat.shape)
    iterations = np.zeros(flat.shape, dtype=np.int64)
    residual = np.zeros(flat.shape)

    large = flat > _HALLEY_THRESHOLD
    tiny = flat < _TINY_Z
    mid = ~large & ~tiny

    if large.any():
        zl = flat[large]
        w0 = np.where(zl >= 1.0, zl - np.log(zl), expit(zl))

        def log_step(wa, idx):
            return (np.log(wa) + wa - zl[idx]) / (1.0 / wa + 1.0)

        w[large], iterations[large], residual[large] = _newton(
            w0, log_step, lambda wa: _ROUNDOFF * np.abs(wa), 'lambert_w_exp')

    if mid.any():
        t = np.exp(flat[mid])
        w0 = t / (1.0 + t)

        def halley_step(wa, idx):
            ew = np.exp(wa)
            f = wa * ew - t[idx]
            wp1 = wa + 1.0
            return f / (ew * wp1 - (wa + 2.0) * f / (2.0 * wp1))

        w[mid], iterations[mid], residual[mid] = _newton(
            w0, halley_step, lambda wa: _ROUNDOFF * np.abs(wa), 'lambert_w_exp',
            bounds=(0.0, np.inf))

    w[tiny] = np.exp(flat[tiny])

    return LambertSolution(w.reshape(shape), iterations.reshape(shape), residual.reshape(shape))


def lambert_w_exp(z: float) -> Tuple[float, ProxStats]:
    """Compute w = W(exp(z)), the positive root of w*exp(w) = exp(z).

    See lambert_w_exp_array() for the method.

    Returns:
        Tuple[float, ProxStats]

    """
    sol = lambert_w_exp_array(np.array([z], dtype=np.float64))
    return float(sol.w[0]), ProxStats(int(sol.iterations[0]), float(sol.residual[0]))


def prox_lse2_array(y1, y2, a) -> LseSolution:
    """Elementwise prox of a*logsumexp in dimension 2.

    Returns the minimiser of a*log(exp(x1) + exp(x2)) + ||x - y||^2/2.
    On the branch y1 >= y2 (the other branch is handled by swapping)
    the minimiser is x = (y1 - a*lam, y2 - a*(1 - lam)) where lam is the
    root in [1/2, 1) of

        f(lam) = y2 - y1 - a + 2*a*lam - log(1 - lam) + log(lam).

    Newton's method started at 1/(1 + exp(y2 - y1)) - 1e-16 decreases
    monotonically to the root. If y2 - y1 + a < log(1e-16) the root is 1 to
    machine precision and x = (y1 - a, y2) is returned without iterating.

    The residual reported for saturated entries is the bound on 1 - lam.

    Raises:
        ValidationError: a < 0 or some input is not finite.
        ConvergenceError: An entry needed more than MAX_ITERATIONS.

    """
    y1, y2, a = np.broadcast_arrays(
        np.asarray(y1, dtype=np.float64),
        np.asarray(y2, dtype=np.float64),
        np.asarray(a, dtype=np.float64),
    )
    _finite('prox_lse2', y1, y2, a)
    if np.any(a < 0):
        raise ValidationError('prox_lse2 needs a >= 0')

    shape = y1.shape
    y1, y2, a = y1.ravel(), y2.ravel(), a.ravel()
    swap = y1 < y2
    hi = np.where(swap, y2, y1)
    lo = np.where(swap, y1, y2)
    delta = lo - hi

    lam = np.ones(hi.shape)
    iterations = np.zeros(hi.shape, dtype=np.int64)
    residual = np.zeros(hi.shape)

    zero = a == 0
    saturated = ~zero & (delta + a < _LOG_STEP_TOL)
    run = ~zero & ~saturated

    lam[zero] = expit(-delta[zero])
    residual[saturated] = expit(delta[saturated] + a[saturated])

    if run.any():
        dr, ar = delta[run], a[run]
        lam0 = np.maximum(expit(-dr) - _STEP_TOL, 0.5)

        def step(la, idx):
            d_, a_ = dr[idx], ar[idx]
            f = d_ - a_ + 2.0 * a_ * la + np.log(la) - np.log1p(-la)
            fp = 2.0 * a_ + 1.0 / (la * (1.0 - la))
            return f / fp

        lam[run], iterations[run], residual[run] = _newton(
            lam0, step, lambda la: np.maximum(_STEP_TOL, _ROUNDOFF * la), 'prox_lse2',
            bounds=(0.5, _BELOW_ONE))

    x_hi = hi - a * lam
    x_lo = lo - a * (1.0 - lam)
    x1 = np.where(swap, x_lo, x_hi)
    x2 = np.where(swap, x_hi, x_lo)

    return LseSolution(
        x1.reshape(shape), x2.reshape(shape), lam.reshape(shape),
        iterations.reshape(shape), residual.reshape(shape),
    )


def prox_lse2(y1: float, y2: float, a: float) -> Tuple[float, float, ProxStats]:
    """Compute prox_{a*lse}(y1, y2), see prox_lse2_array().

    Returns:
        Tuple[float, float, ProxStats]: x1, x2 and the Newton report.

    """
    sol = prox_lse2_array(np.array([y1], dtype=np.float64), y2, a)
    stats = ProxStats(int(sol.iterations[0]), float(sol.residual[0]))
    return float(sol.x1[0]), float(sol.x2[0]), stats


class LseBenchmark(NamedTuple):
    diff: np.ndarray
    a: np.ndarray
    sign: np.ndarray
    lam: np.ndarray
    iterations: np.ndarray
    residual: np.ndarray

    @property
    def max_iterations(self) -> int:
        return int(self.iterations.max())

    @property
    def mean_iterations(self) -> float:
        return float(self.iterations.mean())

    @property
    def max_residual(self) -> float:
        return float(self.residual.max())


def prox_lse2_benchmark(lo_exp: int = -10, hi_exp: int = 20) -> LseBenchmark:
    """Sweep prox_lse2 over a dyadic grid of |y1 - y2| and a.

    Both |y1 - y2| and a range over 2**lo_exp, ..., 2**hi_exp, and both
    signs of y1 - y2 are evaluated with y2 = 0 (the iteration only depends
    on the difference).

    Returns:
        LseBenchmark: One entry per grid cell, with lam in the y1 >= y2 frame.

    """
    values = 2.0 ** np.arange(lo_exp, hi_exp + 1)
    diff, a = np.meshgrid(values, values, indexing='ij')
    diff = np.concatenate([diff.ravel(), diff.ravel()])
    a = np.concatenate([a.ravel(), a.ravel()])
    sign = np.concatenate([np.ones(diff.size // 2), -np.ones(diff.size // 2)])

    sol = prox_lse2_array(sign * diff, 0.0, a)
    bench = LseBenchmark(diff, a, sign, sol.lam, sol.iterations, sol.residual)
    log.info(
        'prox_lse2 benchmark over %d cells: max %d iterations, mean %.2f',
        diff.size, bench.max_iterations, bench.mean_iterations)
    return bench


def _check_prox_args(name, gamma, c1, **nonneg):
    _positive(name, gamma=gamma, c1=c1)
    for key, value in nonneg.items():
        if np.any(np.asarray(value) < 0):
            raise ValidationError(f'{name}: {key} must be nonnegative')


def prox_g1(z1, z2, u1, u2, gamma: float, c1: float = 1.0) -> Tuple[np.ndarray, np.ndarray]:
    """Prox of the two-view warm start data term, elementwise.

    Minimises gamma*g(x) + ||x - z||^2/2 with

        g(x) = u1*x1/c1 + u2*x2/c1 + (u1 + u2)*lse(-x1/c1, -x2/c1).

    For c1 = 1 this is -prox_{a*lse}(gamma*u1 - z1, gamma*u2 - z2) with
    a = gamma*(u1 + u2); other c1 follow from
    prox_{gamma*G(./c1)}(z) = c1*prox_{(gamma/c1**2)*G}(z/c1).

    """
    _check_prox_args('prox_g1', gamma, c1, u1=u1, u2=u2)
    g = gamma / (c1 * c1)
    u1 = np.asarray(u1, dtype=np.float64)
    u2 = np.asarray(u2, dtype=np.float64)
    sol = prox_lse2_array(
        g * u1 - np.asarray(z1) / c1,
        g * u2 - np.asarray(z2) / c1,
        g * (u1 + u2),
    )
    return -c1 * sol.x1, -c1 * sol.x2


def prox_g1_pixel(z1: float, z2: float, u1: float, u2: float,
                  gamma: float, c1: float = 1.0) -> Tuple[float, float]:
    x1, x2 = prox_g1(z1, z2, u1, u2, gamma, c1)
    return float(x1), float(x2)


def prox_h1(z0, u, beta, gamma: float, c1: float = 1.0) -> np.ndarray:
    """Prox of the attenuation data term u*z/c1 + beta*exp(-z/c1), elementwise.

    For c1 = 1 the minimiser of gamma*u*z + gamma*beta*exp(-z) + (z - z0)^2/2
    is z = a + W(gamma*beta*exp(-a)) with a = z0 - gamma*u. The Lambert W
    argument is passed in log domain, log(gamma*beta) - a, so it never
    overflows. Entries with beta = 0 reduce to z = a.

    """
    _check_prox_args('prox_h1', gamma, c1, u=u, beta=beta)
    z0, u, beta = np.broadcast_arrays(
        np.asarray(z0, dtype=np.float64),
        np.asarray(u, dtype=np.float64),
        np.asarray(beta, dtype=np.float64),
    )
    shape = z0.shape
    z0, u, beta = z0.ravel(), u.ravel(), beta.ravel()
    g = gamma / (c1 * c1)
    shift = z0 / c1 - g * u
    out = shift.copy()

    lit = beta > 0
    if lit.any():
        w = lambert_w_exp_array(np.log(g * beta[lit]) - shift[lit]).w
        out[lit] += w
    return (c1 * out).reshape(shape)


def prox_h1_pixel(z0: float, u: float, beta: float, gamma: float, c1: float = 1.0) -> float:
    return float(prox_h1(z0, u, beta, gamma, c1))


def prox_j1(z0, a, u, gamma: float, c1: float = 1.0) -> np.ndarray:
    """Prox of the density data term, elementwise.

    Minimises (z - z0)^2/2 + gamma*(a*z/c1 - u*log(z/c1)) over z >= 0. The
    minimiser is the positive root of z^2 + b*z - gamma*u with
    b = gamma*a/c1 - z0; for b > 0 the root is evaluated in the
    cancellation-free form 2*gamma*u/(b + sqrt(b^2 + 4*gamma*u)).

    """
    _check_prox_args('prox_j1', gamma, c1, a=a, u=u)
    z0, a, u = np.broadcast_arrays(
        np.asarray(z0, dtype=np.float64),
        np.asarray(a, dtype=np.float64),
        np.asarray(u, dtype=np.float64),
    )
    shape = z0.shape
    z0, a, u = z0.ravel(), a.ravel(), u.ravel()
    b = gamma * a / c1 - z0
    disc = np.sqrt(b * b + 4.0 * gamma * u)

    out = np.empty(b.shape)
    pos = b > 0
    out[pos] = 2.0 * gamma * u[pos] / (b[pos] + disc[pos])
    out[~pos] = 0.5 * (disc[~pos] - b[~pos])
    return out.reshape(shape)


def prox_j1_pixel(z0: float, a: float, u: float, gamma: float, c1: float = 1.0) -> float:
    return float(prox_j1(z0, a, u, gamma, c1))


def group_soft_threshold(v, t: float, axis: int = 0) -> np.ndarray:
    """Shrink the groups of v along axis towards zero by t.

    Each group is scaled by max(0, 1 - t/||group||), so groups with a norm
    of at most t (including zero groups) vanish.

    Raises:
        ValidationError: t < 0.

    """
    if t < 0:
        raise ValidationError(f'threshold must be nonnegative, got {t}')
    v = np.asarray(v, dtype=np.float64)
    norm = np.sqrt(np.sum(v * v, axis=axis, keepdims=True))
    factor = np.zeros(norm.shape)
    big = norm > t
    factor[big] = 1.0 - t / norm[big]
    return v * factor


def project_nonneg(z):
    """Project onto the nonnegative orthant."""
    if np.ndim(z) == 0:
        return max(float(z), 0.0)
    return np.maximum(z, 0.0)
