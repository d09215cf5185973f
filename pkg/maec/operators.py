"""Discrete path integrals, the TV gradient pair and a spectral norm estimate."""
import enum
import logging
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ValidationError

__all__ = (
    'Direction', 'PathOperator', 'path_apply', 'path_adjoint',
    'grad', 'div', 'total_variation', 'power_iteration',
)

log = logging.getLogger(__name__)

LinearMap = Callable[[np.ndarray], np.ndarray]


class Direction(enum.Enum):
    """The direction light travels along the path axis."""
    FORWARD = 'forward'
    REVERSE = 'reverse'

    def __repr__(self):
        return '<{0.__class__.__name__}.{0.name}>'.format(self)


@dataclass(frozen=True)
class PathOperator:
    """An axis-aligned cumulative sum standing for a path integral.

    The forward operator on a 1D signal is the lower triangular all-ones
    matrix, i.e. the inclusive cumulative sum. The reverse operator is its
    mirror, summing inclusively from the far end.

    Attributes:
    axis (int): The axis light travels along.
    direction (Direction): Which end of the axis light enters from.
    scale (float): A positive factor applied to the sum, e.g. 1 + c
        when excitation and emission attenuations are proportional.

    """
    axis: int = 0
    direction: Direction = Direction.FORWARD
    scale: float = 1.0

    def __post_init__(self):
        if not isinstance(self.direction, Direction):
            object.__setattr__(self, 'direction', Direction(self.direction))
        if self.axis < 0:
            raise ValidationError(f'axis must be nonnegative, got {self.axis}')
        if not self.scale > 0:
            raise ValidationError(f'scale must be positive, got {self.scale}')

    def mirrored(self) -> 'PathOperator':
        """Return the operator travelling the opposite way."""
        other = Direction.REVERSE if self.direction is Direction.FORWARD else Direction.FORWARD
        return PathOperator(self.axis, other, self.scale)

    def apply(self, x: np.ndarray) -> np.ndarray:
        return path_apply(self, x)

    def adjoint(self, y: np.ndarray) -> np.ndarray:
        return path_adjoint(self, y)


def _check_axis(op: PathOperator, x: np.ndarray):
    if op.axis >= x.ndim:
        raise ValidationError(f'axis {op.axis} out of range for a {x.ndim}D field')


def _cumsum(x: np.ndarray, axis: int, reverse: bool) -> np.ndarray:
    if reverse:
        return np.flip(np.cumsum(np.flip(x, axis), axis=axis), axis)
    return np.cumsum(x, axis=axis)


def path_apply(op: PathOperator, x) -> np.ndarray:
    """Apply a path operator: y[i] = scale * sum of x over the path up to i."""
    x = np.asarray(x, dtype=np.float64)
    _check_axis(op, x)
    y = _cumsum(x, op.axis, op.direction is Direction.REVERSE)
    if op.scale != 1.0:
        y *= op.scale
    return y


def path_adjoint(op: PathOperator, y) -> np.ndarray:
    """Apply the transpose of a path operator.

    The adjoint of a forward sum is the reverse inclusive sum and vice versa.
    """
    y = np.asarray(y, dtype=np.float64)
    _check_axis(op, y)
    x = _cumsum(y, op.axis, op.direction is Direction.FORWARD)
    if op.scale != 1.0:
        x *= op.scale
    return x


def grad(x) -> np.ndarray:
    """Forward differences along every axis with a zero last difference.

    Returns:
        numpy.ndarray: A vector field of shape (d, *dims).

    """
    x = np.asarray(x, dtype=np.float64)
    out = np.zeros((x.ndim,) + x.shape)
    for k in range(x.ndim):
        lead = (slice(None),) * k
        out[(k,) + lead + (slice(None, -1),)] = np.diff(x, axis=k)
    return out


def div(v) -> np.ndarray:
    """Discrete divergence, the negative adjoint of grad()."""
    v = np.asarray(v, dtype=np.float64)
    d = v.shape[0]
    if v.ndim != d + 1:
        raise ValidationError(f'vector field with {d} components must have {d} dims, got shape {v.shape}')

    out = np.zeros(v.shape[1:])
    for k in range(d):
        p = v[k]
        n = p.shape[k]
        if n < 2:
            continue
        lead = (slice(None),) * k

        def at(s):
            return lead + (s,)

        out[at(0)] += p[at(0)]
        out[at(slice(1, -1))] += p[at(slice(1, -1))] - p[at(slice(0, -2))]
        out[at(-1)] -= p[at(-2)]
    return out


def total_variation(x) -> float:
    """Isotropic total variation: the sum of per-pixel gradient norms."""
    g = grad(x)
    return float(np.sum(np.sqrt(np.sum(g * g, axis=0))))


def power_iteration(
        apply: LinearMap, adjoint: LinearMap, dims: Sequence[int],
        iters: int = 50, seed: int = 0) -> float:
    """Estimate the spectral norm of a linear map from below.

    Runs power iteration on A^T A from a seeded random start. Every iterate
    x_k has unit norm, so ||A x_k|| is a lower bound of ||A||; the running
    maximum of these bounds is returned.

    Args:
        apply (Callable): x -> A x.
        adjoint (Callable): y -> A^T y.
        dims (Sequence[int]): The dims of the domain of A.
        iters (int): The number of power iterations, at least 1.
        seed (int): Seed of the Philox stream drawing the start vector.

    Returns:
        float: The estimate of ||A||_{2->2}.

    """
    if iters < 1:
        raise ValidationError('iters must be at least 1')
    rng = np.random.Generator(np.random.Philox(seed))
    x = rng.standard_normal(tuple(dims))
    x /= np.linalg.norm(x)

    estimate = 0.0
    for k in range(iters):
        ax = apply(x)
        estimate = max(estimate, float(np.linalg.norm(ax)))
        y = adjoint(ax)
        norm = np.linalg.norm(y)
        if norm == 0:
            break
        x = y / norm
    log.debug('Power iteration estimate %.6g after %d iterations', estimate, k + 1)
    return estimate
