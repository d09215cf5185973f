"""MAP estimation of attenuation and density from multiview counts.

The negative log posterior of counts u_j ~ Poisson(w * beta * exp(-A_j alpha))
with total variation priors is

    F(alpha, beta) = sum_j sum_i [lambda_j - u_j log lambda_j]
                     + lambda_alpha TV(alpha) + lambda_beta TV(beta)

restricted to alpha, beta >= 0. estimate() minimises it by alternation,
starting from the convex problem obtained by eliminating beta.
"""
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import logsumexp

from .config import SolverConfig
from .errors import ValidationError
from .fields import check_field, check_same_dims, snr_db
from .kernels import group_soft_threshold, project_nonneg, prox_g1, prox_h1, prox_j1
from .operators import Direction, div, grad, total_variation
from .sdmm import SdmmIterator, SplitTerm
from .simulate import ForwardModel
from .trace import Stage, TracePoint

__all__ = (
    'EstimationResult', 'objective_F', 'warm_start_objective', 'beta_closed_form',
    'warm_start_alpha', 'alpha_step', 'beta_step', 'estimate', 'direct_inversion',
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EstimationResult:
    """The outcome of estimate().

    Attributes:
    alpha_hat (numpy.ndarray): The attenuation estimate.
    beta_hat (numpy.ndarray): The density estimate.
    warm_start_alpha (numpy.ndarray): The attenuation of the warm start.
    objective_trace (List[float]): F after the warm start and after every
        accepted half-step.
    trace (List[TracePoint]): One point per half-step, rejected ones included.
    inner_trace (List[TracePoint]): Every SDMM iteration of every stage.
    config (SolverConfig): The resolved configuration.
    iterations (int): The total number of SDMM iterations.
    wall_seconds (float): The time spent in estimate().
    metrics (Dict[str, float]): snr_alpha_db and snr_beta_db
        when ground truth was given.

    """
    alpha_hat: np.ndarray
    beta_hat: np.ndarray
    warm_start_alpha: np.ndarray
    objective_trace: List[float]
    trace: List[TracePoint]
    inner_trace: List[TracePoint]
    config: SolverConfig
    iterations: int = 0
    wall_seconds: float = 0.0
    metrics: Dict[str, float] = field(default_factory=dict)


def _check_views(views, model: ForwardModel) -> List[np.ndarray]:
    views = [check_field(u, f'u{j + 1}', nonneg=True) for j, u in enumerate(views)]
    if len(views) != model.views:
        raise ValidationError(f'model has {model.views} views but {len(views)} count fields were given')
    check_same_dims(*views, names=[f'u{j + 1}' for j in range(len(views))])
    return views


def _resolved(cfg: Optional[SolverConfig], views) -> SolverConfig:
    return (cfg or SolverConfig()).resolve(views)


def objective_F(alpha, beta, views: Sequence[np.ndarray], model: ForwardModel,
                lambda_alpha: float = 0.0, lambda_beta: float = 0.0) -> float:
    """Evaluate the MAP objective F(alpha, beta).

    u log lambda is taken as 0 where u = 0 and lambda = 0.

    Returns:
        float: F, or +inf when alpha or beta is negative somewhere or
            a pixel with counts has zero intensity.

    Raises:
        ValidationError: Dims or the number of views do not match.

    """
    alpha = np.asarray(alpha, dtype=np.float64)
    beta = np.asarray(beta, dtype=np.float64)
    views = [np.asarray(u, dtype=np.float64) for u in views]
    if len(views) != model.views:
        raise ValidationError(f'model has {model.views} views but {len(views)} count fields were given')
    check_same_dims(alpha, beta, *views)
    if np.any(alpha < 0) or np.any(beta < 0):
        return math.inf

    source = model.weights(beta.shape) * beta
    total = 0.0
    for u, p in zip(views, model.path_integrals(alpha)):
        lam = source * np.exp(-p)
        counted = u > 0
        if np.any(lam[counted] == 0):
            return math.inf
        total += float(np.sum(lam)) - float(np.sum(u[counted] * np.log(lam[counted])))

    if lambda_alpha:
        total += lambda_alpha * total_variation(alpha)
    if lambda_beta:
        total += lambda_beta * total_variation(beta)
    return total


def warm_start_objective(alpha, views: Sequence[np.ndarray], model: ForwardModel,
                         lambda_alpha: float = 0.0) -> float:
    """The objective of the warm start, F with beta eliminated:

        sum_i sum_j u_j [(A_j alpha) + log sum_k exp(-(A_k alpha))]
        + lambda_alpha TV(alpha)

    Returns:
        float: The value, or +inf if alpha is negative somewhere.

    """
    alpha = np.asarray(alpha, dtype=np.float64)
    if np.any(alpha < 0):
        return math.inf
    paths = model.path_integrals(alpha)
    lse = logsumexp(-np.stack(paths), axis=0)
    total = sum(float(np.sum(np.asarray(u) * (p + lse))) for u, p in zip(views, paths))
    if lambda_alpha:
        total += lambda_alpha * total_variation(alpha)
    return total


def _attenuation_sum(alpha, model: ForwardModel) -> np.ndarray:
    """a = sum_j w * exp(-A_j alpha)."""
    w = model.weights(np.shape(alpha))
    return sum(w * np.exp(-p) for p in model.path_integrals(alpha))


def beta_closed_form(views: Sequence[np.ndarray], alpha, model: ForwardModel) -> np.ndarray:
    """The density minimising F for a fixed attenuation without TV:

        beta = sum_j u_j / sum_j w * exp(-A_j alpha)

    """
    alpha = check_field(alpha, 'alpha', nonneg=True)
    views = _check_views(views, model)
    check_same_dims(alpha, views[0], names=('alpha', 'u1'))
    a = _attenuation_sum(alpha, model)
    u = sum(views)
    return np.divide(u, a, out=np.zeros_like(u), where=a > 0)


def _tv_term(weight: float, threshold: float, name: str) -> SplitTerm:
    return SplitTerm(
        apply=lambda x: weight * grad(x),
        adjoint=lambda v: -weight * div(v),
        prox=lambda v, gamma: group_soft_threshold(v, gamma * threshold, axis=0),
        weight=weight,
        name=name,
    )


def _nonneg_term(weight: float) -> SplitTerm:
    return SplitTerm(
        apply=lambda x: weight * x,
        adjoint=lambda y: weight * y,
        prox=lambda v, gamma: project_nonneg(v),
        weight=weight,
        name='nonneg',
    )


def _run(terms, x0, gamma, iters, cfg: SolverConfig, stage: Stage, objective, warm: bool):
    y0 = [t.apply(x0) for t in terms] if warm else None
    it = SdmmIterator(
        terms, x0, gamma, iters,
        cg_tol=cfg.cg_tol, cg_maxit=cfg.cg_maxit, residual_tol=cfg.residual_tol,
        y0=y0, objective=objective, stage=stage,
    )
    trace = it.flatten()
    log.debug('%s stage: %d SDMM iterations, %d CG iterations, residual %.3e',
              stage.value, it.state.iteration, it.state.cg_iterations, it.state.primal_residual)
    return it.state, trace


def _constant_candidate(x: np.ndarray, objective, stage: Stage) -> np.ndarray:
    """Return the best nonnegative constant field if it scores lower than x.

    The objectives are convex, so when the minimiser is constant the scalar
    search below returns it exactly.
    """
    current = objective(x)
    if not math.isfinite(current):
        return x

    def phi(c):
        return objective(np.full(x.shape, c))

    hi = max(float(np.mean(x)), 1e-6)
    for _ in range(64):
        if phi(2.0 * hi) >= phi(hi):
            break
        hi *= 2.0
    else:
        return x

    res = minimize_scalar(phi, bounds=(0.0, 2.0 * hi), method='bounded', options={'xatol': 1e-10 * hi})
    best = min((0.0, float(res.x)), key=phi)
    value = phi(best)
    if value < current:
        log.info('%s stage: constant field %.6g lowers the objective from %.10g to %.10g',
                 stage.value, best, current, value)
        return np.full(x.shape, best)
    return x


def warm_start_alpha(views: Sequence[np.ndarray], model: ForwardModel,
                     cfg: Optional[SolverConfig] = None) -> Tuple[np.ndarray, List[TracePoint]]:
    """Solve the convex warm start problem in alpha by SDMM.

    The split terms are the stacked data term (c1 [A_1; A_2], prox_g1),
    the TV term (c2 grad, group soft thresholding by gamma lambda_alpha / c2)
    and the nonnegativity term (c3 I, projection).

    Returns:
        Tuple[numpy.ndarray, List[TracePoint]]: max(x, 0), or the best
            constant field when that scores lower, and the trace.

    Raises:
        ValidationError: The model does not have exactly two views.

    """
    views = _check_views(views, model)
    if model.views != 2:
        raise ValidationError(f'the warm start needs two views, got {model.views}')
    cfg = _resolved(cfg, views)
    u1, u2 = views
    first, second = model.operators
    c1 = cfg.c1

    data = SplitTerm(
        apply=lambda x: np.stack([c1 * first.apply(x), c1 * second.apply(x)]),
        adjoint=lambda y: c1 * (first.adjoint(y[0]) + second.adjoint(y[1])),
        prox=lambda v, gamma: np.stack(prox_g1(v[0], v[1], u1, u2, gamma, c1)),
        weight=c1,
        name='warm_start_data',
    )
    terms = [data]
    if cfg.lambda_alpha > 0:
        terms.append(_tv_term(cfg.c2, cfg.lambda_alpha / cfg.c2, 'tv_alpha'))
    terms.append(_nonneg_term(cfg.c3))

    def objective(x):
        return warm_start_objective(np.maximum(x, 0.0), views, model, cfg.lambda_alpha)

    log.info('Solving the warm start on %s with lambda_alpha=%g', 'x'.join(map(str, u1.shape)), cfg.lambda_alpha)
    state, trace = _run(
        terms, np.zeros(u1.shape), cfg.gamma, cfg.warm_start_iters, cfg,
        Stage.WARM_START, objective, warm=False,
    )
    alpha = _constant_candidate(np.maximum(state.x, 0.0), objective, Stage.WARM_START)
    return alpha, trace


def alpha_step(views: Sequence[np.ndarray], beta, model: ForwardModel,
               cfg: Optional[SolverConfig] = None,
               alpha0=None) -> Tuple[np.ndarray, List[TracePoint]]:
    """Minimise F(., beta) over alpha >= 0 by SDMM.

    Each view contributes a term c1 A_j with the prox of
    u_j z/c1 + w beta exp(-z/c1), solved through the Lambert W function.
    A single view is the lidar inversion.

    Args:
        alpha0 (Optional[numpy.ndarray]): A starting point. Its images
            under the split operators seed the auxiliaries.

    Returns:
        Tuple[numpy.ndarray, List[TracePoint]]: max(x, 0), or the best
            constant field when that scores lower, and the trace.

    """
    views = _check_views(views, model)
    beta = check_field(beta, 'beta', nonneg=True)
    check_same_dims(beta, views[0], names=('beta', 'u1'))
    cfg = _resolved(cfg, views)
    c1 = cfg.c1
    source = model.weights(beta.shape) * beta

    def data_term(op, u, j):
        return SplitTerm(
            apply=lambda x: c1 * op.apply(x),
            adjoint=lambda y: c1 * op.adjoint(y),
            prox=lambda v, gamma: prox_h1(v, u, source, gamma, c1),
            weight=c1,
            name=f'alpha_data_{j}',
        )

    terms = [data_term(op, u, j + 1) for j, (op, u) in enumerate(zip(model.operators, views))]
    if cfg.lambda_alpha > 0:
        terms.append(_tv_term(cfg.c2, cfg.lambda_alpha / cfg.c2, 'tv_alpha'))
    terms.append(_nonneg_term(cfg.c3))

    def objective(x):
        return objective_F(np.maximum(x, 0.0), beta, views, model, cfg.lambda_alpha, 0.0)

    warm = alpha0 is not None
    x0 = check_field(alpha0, 'alpha0', nonneg=True) if warm else np.zeros(beta.shape)
    state, trace = _run(terms, x0, cfg.gamma, cfg.alpha_iters, cfg, Stage.ALPHA, objective, warm)
    return _constant_candidate(np.maximum(state.x, 0.0), objective, Stage.ALPHA), trace


def beta_step(views: Sequence[np.ndarray], alpha, model: ForwardModel,
              cfg: Optional[SolverConfig] = None,
              beta0=None) -> Tuple[np.ndarray, List[TracePoint]]:
    """Minimise F(alpha, .) over beta >= 0, correcting and denoising at once.

    With a = sum_j w exp(-A_j alpha) and u = sum_j u_j this is
    sum_i a beta - u log beta + lambda_beta TV(beta). Without TV the
    closed form is returned. Otherwise SDMM runs on the terms (c1 I, prox_j1)
    and (c2_beta grad, group soft thresholding), started from beta0 or the
    closed form, and the data term auxiliary divided by c1 is returned.

    Returns:
        Tuple[numpy.ndarray, List[TracePoint]]: beta and the trace.

    """
    views = _check_views(views, model)
    alpha = check_field(alpha, 'alpha', nonneg=True)
    check_same_dims(alpha, views[0], names=('alpha', 'u1'))
    cfg = _resolved(cfg, views)

    a = _attenuation_sum(alpha, model)
    u = sum(views)
    closed = np.divide(u, a, out=np.zeros_like(u), where=a > 0)
    if cfg.lambda_beta == 0:
        return closed, []

    c1 = cfg.c1
    terms = [
        SplitTerm(
            apply=lambda x: c1 * x,
            adjoint=lambda y: c1 * y,
            prox=lambda v, gamma: prox_j1(v, a, u, gamma, c1),
            weight=c1,
            name='beta_data',
        ),
        _tv_term(cfg.c2_beta, cfg.lambda_beta / cfg.c2_beta, 'tv_beta'),
    ]

    def objective(x):
        x = np.maximum(x, 0.0)
        counted = u > 0
        if np.any(x[counted] == 0):
            return math.inf
        return (float(np.sum(a * x)) - float(np.sum(u[counted] * np.log(x[counted])))
                + cfg.lambda_beta * total_variation(x))

    x0 = closed if beta0 is None else check_field(beta0, 'beta0', nonneg=True)
    state, trace = _run(terms, x0, cfg.gamma_beta, cfg.beta_iters, cfg, Stage.BETA, objective, warm=True)
    return state.y[0] / c1, trace


def estimate(views: Sequence[np.ndarray], model: ForwardModel,
             cfg: Optional[SolverConfig] = None, *,
             truth_alpha=None, truth_beta=None) -> EstimationResult:
    """Estimate attenuation and density from two opposite views.

    Runs the warm start, one density correction, then cfg.nit rounds of
    (attenuation step, density step). F is evaluated after every half-step
    and a half-step that raises it is discarded with a warning, so the
    objective trace never increases.

    Args:
        views (Sequence[numpy.ndarray]): The counts u1 and u2.
        model (ForwardModel): A two-view model.
        cfg (Optional[SolverConfig]): The configuration, resolved here.
        truth_alpha (Optional[numpy.ndarray]): Enables snr_alpha_db.
        truth_beta (Optional[numpy.ndarray]): Enables snr_beta_db.

    Returns:
        EstimationResult

    """
    started = time.perf_counter()
    views = _check_views(views, model)
    cfg = _resolved(cfg, views)

    def F(alpha, beta):
        return objective_F(alpha, beta, views, model, cfg.lambda_alpha, cfg.lambda_beta)

    inner: List[TracePoint] = []
    outer: List[TracePoint] = []
    objective_trace: List[float] = []

    alpha_ws, trace = warm_start_alpha(views, model, cfg)
    inner += trace
    alpha = alpha_ws
    beta = beta_closed_form(views, alpha, model)
    current = F(alpha, beta)
    objective_trace.append(current)
    outer.append(TracePoint(0, objective=current, stage=Stage.WARM_START))
    log.info('Warm start done, F = %.10g', current)

    def half_step(stage, round_, candidate, trace):
        nonlocal current
        inner.extend(trace)
        value = F(*candidate)
        accepted = value <= current
        outer.append(TracePoint(round_, objective=value, stage=stage, accepted=accepted))
        if accepted:
            current = value
            objective_trace.append(value)
            return candidate
        log.warning('Round %d: %s step raised F from %.10g to %.10g, keeping the previous iterate',
                    round_, stage.value, current, value)
        return None

    beta_new, trace = beta_step(views, alpha, model, cfg, beta0=beta)
    beta = (half_step(Stage.BETA, 0, (alpha, beta_new), trace) or (alpha, beta))[1]

    for round_ in range(1, cfg.nit + 1):
        alpha_new, trace = alpha_step(views, beta, model, cfg, alpha0=alpha)
        alpha = (half_step(Stage.ALPHA, round_, (alpha_new, beta), trace) or (alpha, beta))[0]
        beta_new, trace = beta_step(views, alpha, model, cfg, beta0=beta)
        beta = (half_step(Stage.BETA, round_, (alpha, beta_new), trace) or (alpha, beta))[1]
        log.info('Round %d done, F = %.10g', round_, current)

    metrics = {}
    if truth_alpha is not None:
        metrics['snr_alpha_db'] = snr_db(alpha, truth_alpha)
    if truth_beta is not None:
        metrics['snr_beta_db'] = snr_db(beta, truth_beta)

    return EstimationResult(
        alpha_hat=alpha,
        beta_hat=beta,
        warm_start_alpha=alpha_ws,
        objective_trace=objective_trace,
        trace=outer,
        inner_trace=inner,
        config=cfg,
        iterations=len(inner),
        wall_seconds=time.perf_counter() - started,
        metrics=metrics,
    )


def direct_inversion(views: Sequence[np.ndarray], model: ForwardModel,
                     floor: float = 0.5) -> Tuple[np.ndarray, np.ndarray]:
    """Invert two opposite views pointwise, without any prior.

    With v = log((u2 + floor)/(u1 + floor)) = (A_1 - A_2) alpha, adjacent
    differences of v give alpha[i+1] + alpha[i], so alpha is estimated as
    half the forward difference of v (last entry replicated), clamped at 0,
    and beta = u1 exp(A_1 alpha) / w.

    Args:
        floor (float): Added to the counts before taking logs. 0 is only
            valid when every count is positive.

    Returns:
        Tuple[numpy.ndarray, numpy.ndarray]: alpha and beta.

    Raises:
        ValidationError: The views are not two opposite paths along one
            axis, or floor < 0.

    """
    views = _check_views(views, model)
    if model.views != 2:
        raise ValidationError(f'direct inversion needs two views, got {model.views}')
    first, second = model.operators
    if first.axis != second.axis or first.direction is second.direction:
        raise ValidationError('direct inversion needs two opposite paths along one axis')
    if floor < 0:
        raise ValidationError(f'floor must be nonnegative, got {floor}')

    u1, u2 = views
    axis = first.axis
    v = np.log((u2 + floor) / (u1 + floor))
    sign = 1.0 if first.direction is Direction.FORWARD else -1.0

    alpha = np.diff(v, axis=axis, append=np.take(v, [-1], axis=axis))
    if v.shape[axis] > 1:
        last = [slice(None)] * v.ndim
        prev = list(last)
        last[axis], prev[axis] = -1, -2
        alpha[tuple(last)] = alpha[tuple(prev)]
    alpha = np.maximum(sign * alpha / (2.0 * first.scale), 0.0)

    beta = u1 * np.exp(first.apply(alpha)) / model.weights(u1.shape)
    return alpha, beta
