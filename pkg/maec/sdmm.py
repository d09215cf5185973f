"""The simultaneous direction method of multipliers.

Solves min_x sum_i g_i(L_i x) given each L_i as a pair of matrix-free
maps and each g_i through its proximal operator. The x-update inverts
Q = sum_i L_i^T L_i by conjugate gradients.
"""
import logging
import math
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import NumericalError, ValidationError
from .iterators import SolverIterator
from .trace import Stage, TracePoint
from .utils import root_extent

__all__ = (
    'SplitTerm', 'SdmmState', 'CgInfo', 'SdmmIterator',
    'cg_solve', 'default_cg_maxit', 'sdmm_solve',
)

log = logging.getLogger(__name__)

LinearMap = Callable[[np.ndarray], np.ndarray]
ProxOracle = Callable[[np.ndarray, float], np.ndarray]


@dataclass(frozen=True)
class SplitTerm:
    """One g_i(L_i x) term of an SDMM problem.

    Attributes:
    apply (Callable): x -> L_i x.
    adjoint (Callable): y -> L_i^T y.
    prox (Callable): (v, gamma) -> prox_{gamma g_i}(v).
    weight (float): The balance constant c_i, already folded into
        apply, adjoint and prox by whoever built the term.
    name (str): Used in log and error messages.

    """
    apply: LinearMap
    adjoint: LinearMap
    prox: ProxOracle
    weight: float = 1.0
    name: str = ''

    def __post_init__(self):
        if not self.weight > 0:
            raise ValidationError(f'term weight must be positive, got {self.weight}')


@dataclass
class SdmmState:
    """The iterate of an SDMM run, owned by its SdmmIterator.

    Attributes:
    x (numpy.ndarray): The primal iterate.
    y (List[numpy.ndarray]): One auxiliary per term, in the term's range.
    z (List[numpy.ndarray]): One scaled dual per term.
    iteration (int): The number of completed iterations.
    primal_residual (float): max_i ||L_i x - y_i|| / (1 + ||y_i||),
        inf before the first iteration.
    cg_iterations (int): Total CG iterations spent so far.

    """
    x: np.ndarray
    y: List[np.ndarray]
    z: List[np.ndarray]
    iteration: int = 0
    primal_residual: float = math.inf
    cg_iterations: int = 0


@dataclass(frozen=True)
class CgInfo:
    """Outcome of cg_solve().

    Attributes:
    iterations (int): The CG iterations performed.
    residual (float): ||Q x - rhs|| / ||rhs|| at exit, from the recurrence.
    converged (bool): Whether the tolerance was reached within maxit.

    """
    iterations: int
    residual: float
    converged: bool


def default_cg_maxit(dims: Sequence[int]) -> int:
    """10 * n^(1/d), the default CG budget per x-update."""
    return max(1, int(math.ceil(10 * root_extent(tuple(dims)))))


def cg_solve(
        q_apply: LinearMap, rhs, x0, tol: float = 1e-10,
        maxit: Optional[int] = None) -> Tuple[np.ndarray, CgInfo]:
    """Solve Q x = rhs by conjugate gradients for a symmetric positive
    definite Q given as a map.

    Args:
        q_apply (Callable): x -> Q x.
        rhs (numpy.ndarray): The right hand side, of any shape.
        x0 (numpy.ndarray): The starting point.
        tol (float): Stop once ||Q x - rhs|| <= tol * ||rhs||.
        maxit (Optional[int]): The iteration cap,
            defaulting to default_cg_maxit(rhs.shape).

    Returns:
        Tuple[numpy.ndarray, CgInfo]

    Raises:
        ValidationError: tol <= 0 or shapes differ.
        NumericalError: Non-finite values or a non-positive curvature p^T Q p.

    """
    if not tol > 0:
        raise ValidationError(f'CG tolerance must be positive, got {tol}')
    rhs = np.asarray(rhs, dtype=np.float64)
    x = np.array(x0, dtype=np.float64)
    if x.shape != rhs.shape:
        raise ValidationError(f'CG start {x.shape} and right hand side {rhs.shape} differ in shape')
    if maxit is None:
        maxit = default_cg_maxit(rhs.shape)

    b_norm = float(np.linalg.norm(rhs))
    if not math.isfinite(b_norm):
        raise NumericalError('CG right hand side is not finite')
    if b_norm == 0:
        return np.zeros_like(rhs), CgInfo(0, 0.0, True)
    target = tol * b_norm

    r = rhs - q_apply(x)
    rr = float(np.vdot(r, r))
    if not math.isfinite(rr):
        raise NumericalError('CG residual is not finite')
    if math.sqrt(rr) <= target:
        return x, CgInfo(0, math.sqrt(rr) / b_norm, True)

    p = r.copy()
    for k in range(1, maxit + 1):
        qp = q_apply(p)
        curvature = float(np.vdot(p, qp))
        if not math.isfinite(curvature):
            raise NumericalError('CG encountered a non-finite operator value')
        if curvature <= 0:
            raise NumericalError('CG operator is not positive definite')

        step = rr / curvature
        x += step * p
        r -= step * qp
        rr_new = float(np.vdot(r, r))
        if not math.isfinite(rr_new):
            raise NumericalError('CG residual is not finite')
        if math.sqrt(rr_new) <= target:
            return x, CgInfo(k, math.sqrt(rr_new) / b_norm, True)

        p *= rr_new / rr
        p += r
        rr = rr_new

    residual = math.sqrt(rr) / b_norm
    log.warning('CG stopped at maxit=%d with relative residual %.3e', maxit, residual)
    return x, CgInfo(maxit, residual, False)


class SdmmIterator(SolverIterator):
    """Step through the SDMM iteration one x-update at a time.

    Each call to next() performs

        x  <- Q^-1 sum_i L_i^T (y_i - z_i)     (CG, warm started at x)
        s_i = L_i x
        y_i <- prox_{gamma g_i}(s_i + z_i)
        z_i <- z_i + s_i - y_i

    and returns a TracePoint. Iteration stops after `iters` updates or once
    the primal residual is within `residual_tol`. The current iterate is
    available as `state`.

    Args:
        terms (Sequence[SplitTerm]): The split terms, at least one.
        x0 (numpy.ndarray): The initial iterate, also the first CG start.
        gamma (float): The proximal step.
        iters (int): The maximum number of iterations.
        cg_tol (float): Relative residual tolerance of the x-update.
        cg_maxit (Optional[int]): CG iteration cap.
            Defaults to 10 * n^(1/d) of x0.
        residual_tol (float): Early exit threshold on the primal residual.
            0 disables the early exit.
        y0 (Optional[Sequence[numpy.ndarray]]):
            Initial auxiliaries, zero by default.
        z0 (Optional[Sequence[numpy.ndarray]]):
            Initial duals, zero by default.
        objective (Optional[Callable]): Evaluated on x after every
            iteration and recorded in the trace.
        stage (Optional[Stage]): Tag for the trace points.

    Raises:
        ValidationError: No terms, gamma <= 0, iters < 0 or auxiliaries
            whose shapes do not match the ranges of the terms.
        NumericalError: An iterate became non-finite.

    """
    def __init__(
            self, terms: Sequence[SplitTerm], x0, gamma: float = 1.0, iters: int = 500, *,
            cg_tol: float = 1e-10, cg_maxit: Optional[int] = None, residual_tol: float = 1e-9,
            y0: Optional[Sequence[np.ndarray]] = None, z0: Optional[Sequence[np.ndarray]] = None,
            objective: Optional[Callable[[np.ndarray], float]] = None,
            stage: Optional[Stage] = None):
        if not terms:
            raise ValidationError('SDMM needs at least one term')
        if not gamma > 0:
            raise ValidationError(f'gamma must be positive, got {gamma}')
        if iters < 0:
            raise ValidationError(f'iters must be nonnegative, got {iters}')

        x = np.array(x0, dtype=np.float64)
        if not np.all(np.isfinite(x)):
            raise ValidationError('x0 must be finite')

        self._terms = tuple(terms)
        self._gamma = gamma
        self._iters = iters
        self._cg_tol = cg_tol
        self._cg_maxit = default_cg_maxit(x.shape) if cg_maxit is None else cg_maxit
        self._residual_tol = residual_tol
        self._objective = objective
        self._stage = stage
        self._done = False

        ranges = [np.shape(t.apply(x)) for t in self._terms]
        self.state = SdmmState(
            x,
            self._auxiliaries(y0, ranges, 'y0'),
            self._auxiliaries(z0, ranges, 'z0'),
        )

    @staticmethod
    def _auxiliaries(given, ranges, name) -> List[np.ndarray]:
        if given is None:
            return [np.zeros(shape) for shape in ranges]
        given = [np.array(v, dtype=np.float64) for v in given]
        shapes = [v.shape for v in given]
        if shapes != ranges:
            raise ValidationError(f'{name} shapes {shapes} do not match term ranges {ranges}')
        return given

    def _q_apply(self, v):
        return sum(t.adjoint(t.apply(v)) for t in self._terms)

    def next(self) -> TracePoint:
        state = self.state
        if self._done or state.iteration >= self._iters:
            raise StopIteration

        rhs = sum(t.adjoint(y - z) for t, y, z in zip(self._terms, state.y, state.z))
        x, info = cg_solve(self._q_apply, rhs, state.x, self._cg_tol, self._cg_maxit)

        residual = 0.0
        for i, term in enumerate(self._terms):
            s = term.apply(x)
            y = np.asarray(term.prox(s + state.z[i], self._gamma), dtype=np.float64)
            z = state.z[i] + s - y
            if not (np.all(np.isfinite(y)) and np.all(np.isfinite(z))):
                raise NumericalError(f'SDMM term {term.name or i} produced non-finite values')
            residual = max(residual, float(np.linalg.norm(s - y) / (1.0 + np.linalg.norm(y))))
            state.y[i], state.z[i] = y, z

        state.x = x
        state.iteration += 1
        state.primal_residual = residual
        state.cg_iterations += info.iterations

        if residual <= self._residual_tol:
            self._done = True
            log.debug('SDMM reached residual %.3e after %d iterations', residual, state.iteration)
        elif state.iteration % 50 == 0:
            log.debug('SDMM iteration %d: residual %.3e, %d CG iterations',
                      state.iteration, residual, info.iterations)

        objective = None
        if self._objective is not None:
            objective = float(self._objective(x))

        return TracePoint(
            iteration=state.iteration,
            primal_residual=residual,
            objective=objective,
            stage=self._stage,
            cg_iterations=info.iterations,
        )


def sdmm_solve(
        terms: Sequence[SplitTerm], x0, gamma: float = 1.0, iters: int = 500, *,
        cg_tol: float = 1e-10, cg_maxit: Optional[int] = None, residual_tol: float = 1e-9,
        y0: Optional[Sequence[np.ndarray]] = None, z0: Optional[Sequence[np.ndarray]] = None,
        objective: Optional[Callable[[np.ndarray], float]] = None,
        stage: Optional[Stage] = None) -> Tuple[np.ndarray, List[TracePoint]]:
    """Run SDMM to completion. See SdmmIterator for the arguments.

    Returns:
        Tuple[numpy.ndarray, List[TracePoint]]: The final x and the trace.

    """
    it = SdmmIterator(
        terms, x0, gamma, iters,
        cg_tol=cg_tol, cg_maxit=cg_maxit, residual_tol=residual_tol,
        y0=y0, z0=z0, objective=objective, stage=stage,
    )
    trace = it.flatten()
    return it.state.x, trace
