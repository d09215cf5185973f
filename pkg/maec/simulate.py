"""Beer-Lambert forward model, Poisson sampling and synthetic phantoms."""
import enum
import logging
import math
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np
from scipy.special import gammaln

from .errors import ValidationError
from .fields import check_field, check_same_dims
from .operators import Direction, PathOperator

__all__ = (
    'ForwardModel', 'PhantomKind', 'intensity', 'poisson_sample', 'simulate_views', 'make_phantom',
    'SAMPLER_PARTITION', 'INVERSION_CUTOFF',
)

log = logging.getLogger(__name__)

# pixels per independent PRNG stream of poisson_sample()
SAMPLER_PARTITION = 4096
# below this mean, draws use inversion by sequential search
INVERSION_CUTOFF = 30.0
_INVERSION_CAP = 200


def _generator(seed: int, *key: int) -> np.random.Generator:
    """A Philox stream identified by (seed, key)."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=key)))


@dataclass(frozen=True)
class ForwardModel:
    """The multiview Beer-Lambert acquisition model.

    View j observes lambda_j = C * w * beta * exp(-A_j alpha) where A_j is
    the path operator of the view and w the optional lidar range weight
    1/(i + 1/2)^2 along the axis of the first operator.

    Attributes:
    operators (Tuple[PathOperator, ...]): One path operator per view.
    scale (float): The instrument constant C.
    range_squared (bool): Whether to apply the lidar range weight.

    """
    operators: Tuple[PathOperator, ...]
    scale: float = 1.0
    range_squared: bool = False

    def __post_init__(self):
        object.__setattr__(self, 'operators', tuple(self.operators))
        if not self.operators:
            raise ValidationError('a forward model needs at least one view')
        if not self.scale > 0:
            raise ValidationError(f'scale must be positive, got {self.scale}')

    @classmethod
    def bipath(cls, axis: int = 0, path_scale: float = 1.0, scale: float = 1.0) -> 'ForwardModel':
        """Two opposite views along one axis, the first entering from index 0."""
        first = PathOperator(axis, Direction.FORWARD, path_scale)
        return cls((first, first.mirrored()), scale)

    @classmethod
    def lidar(cls, axis: int = 0, scale: float = 1.0, range_squared: bool = True,
              path_scale: float = 1.0) -> 'ForwardModel':
        """A single view from index 0, range weighted by default."""
        return cls((PathOperator(axis, Direction.FORWARD, path_scale),), scale, range_squared)

    @property
    def views(self) -> int:
        return len(self.operators)

    def weights(self, dims: Sequence[int]) -> np.ndarray:
        """Return C * w broadcast to dims."""
        dims = tuple(dims)
        if not self.range_squared:
            return np.full(dims, float(self.scale))
        axis = self.operators[0].axis
        if axis >= len(dims):
            raise ValidationError(f'axis {axis} out of range for a {len(dims)}D field')
        r = np.arange(dims[axis], dtype=np.float64) + 0.5
        shape = [1] * len(dims)
        shape[axis] = dims[axis]
        w = (self.scale / (r * r)).reshape(shape)
        return np.broadcast_to(w, dims).copy()

    def path_integrals(self, alpha: np.ndarray) -> List[np.ndarray]:
        """Return A_j alpha for every view."""
        return [op.apply(alpha) for op in self.operators]


def intensity(model: ForwardModel, beta, alpha) -> List[np.ndarray]:
    """Noiseless intensities of every view of a model.

    Returns:
        List[numpy.ndarray]: lambda_j = C * w * beta * exp(-A_j alpha).

    Raises:
        ValidationError: beta or alpha is negative or their dims differ.

    """
    beta = check_field(beta, 'beta', nonneg=True)
    alpha = check_field(alpha, 'alpha', nonneg=True)
    check_same_dims(beta, alpha, names=('beta', 'alpha'))
    source = model.weights(beta.shape) * beta
    return [source * np.exp(-p) for p in model.path_integrals(alpha)]


def _inversion(lam: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    u = rng.random(lam.size)
    k = np.zeros(lam.size)
    p = np.exp(-lam)
    cdf = p.copy()
    active = u > cdf
    while active.any():
        k[active] += 1
        p[active] *= lam[active] / k[active]
        cdf[active] += p[active]
        active &= (u > cdf) & (k < _INVERSION_CAP)
    return k


def _ptrs(lam: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Hormann's transformed rejection with squeeze, for means >= 10."""
    slam = np.sqrt(lam)
    loglam = np.log(lam)
    b = 0.931 + 2.53 * slam
    a = -0.059 + 0.02483 * b
    invalpha = 1.1239 + 1.1328 / (b - 3.4)
    vr = 0.9277 - 3.6224 / (b - 2.0)

    out = np.empty(lam.size)
    pending = np.arange(lam.size)
    while pending.size:
        u = rng.random(pending.size) - 0.5
        v = rng.random(pending.size)
        us = 0.5 - np.abs(u)
        a_, b_ = a[pending], b[pending]
        k = np.floor((2.0 * a_ / us + b_) * u + lam[pending] + 0.43)

        fast = (us >= 0.07) & (v <= vr[pending])
        rejected = (k < 0) | ((us < 0.013) & (v > us))
        with np.errstate(divide='ignore'):
            log_v = np.log(v) + np.log(invalpha[pending]) - np.log(a_ / (us * us) + b_)
        kk = np.maximum(k, 0.0)
        slow = ~fast & ~rejected & (log_v <= -lam[pending] + kk * loglam[pending] - gammaln(kk + 1.0))

        accept = fast | slow
        out[pending[accept]] = k[accept]
        pending = pending[~accept]
    return out


def poisson_sample(lam, seed: int = 0, stream: int = 0,
                   partition: int = SAMPLER_PARTITION) -> np.ndarray:
    """Draw independent Poisson counts with the given means.

    The flat pixel index space is cut into chunks of `partition` pixels and
    chunk k draws from the Philox stream keyed by (seed, stream, k), so the
    counts only depend on the means, the seed, the stream and the partition
    size. Views of one acquisition use distinct streams. Means below
    INVERSION_CUTOFF use inversion by sequential search, larger means the
    PTRS transformed rejection method.

    Returns:
        numpy.ndarray: Integral float64 counts with the dims of lam.

    Raises:
        ValidationError: Some mean is negative or not finite.

    """
    lam = check_field(lam, 'lam', nonneg=True)
    if partition < 1:
        raise ValidationError(f'partition must be positive, got {partition}')

    flat = lam.ravel()
    counts = np.empty(flat.size)
    chunks = range(0, flat.size, partition)
    for k, start in enumerate(chunks):
        chunk = flat[start:start + partition]
        rng = _generator(seed, stream, k)
        out = np.empty(chunk.size)
        small = chunk < INVERSION_CUTOFF
        out[small] = _inversion(chunk[small], rng)
        if not small.all():
            out[~small] = _ptrs(chunk[~small], rng)
        counts[start:start + chunk.size] = out
    log.debug('Sampled %d Poisson counts in %d partitions', flat.size, len(chunks))
    return counts.reshape(lam.shape)


def simulate_views(model: ForwardModel, beta, alpha, seed: int = 0,
                   noiseless: bool = False) -> List[np.ndarray]:
    """Acquire every view of a model, view j sampling from stream j."""
    lams = intensity(model, beta, alpha)
    if noiseless:
        return lams
    return [poisson_sample(lam, seed, stream=j) for j, lam in enumerate(lams)]


class PhantomKind(enum.Enum):
    """The synthetic phantom families."""
    BLOCKS = 'blocks'
    DISKS = 'disks'
    STRIPES = 'stripes'

    def __repr__(self):
        return '<{0.__class__.__name__}.{0.name}>'.format(self)


def _blocks(dims, rng):
    extents = [max(1, n // 4) for n in dims]
    grid = [math.ceil(n / e) for n, e in zip(dims, extents)]
    count = math.prod(grid)
    levels = np.linspace(0.0, 1.0, count) if count > 1 else np.ones(1)
    levels = rng.permutation(levels).reshape(grid)
    index = np.ix_(*[np.arange(n) // e for n, e in zip(dims, extents)])
    return levels[index]


def _disks(dims, rng, count=6):
    field = np.zeros(dims)
    coords = np.indices(dims, dtype=np.float64)
    smallest = min(dims)
    for k in range(count):
        center = [rng.integers(0, n) for n in dims]
        radius = max(0.5, rng.uniform(0.1, 0.3) * smallest)
        dist2 = sum((c - x0) ** 2 for c, x0 in zip(coords, center))
        level = 1.0 if k == count - 1 else rng.uniform(0.2, 1.0)
        field[dist2 <= radius * radius] = level
    return field


def _stripes(dims, rng):
    n = dims[0]
    width = max(1, n // 8)
    profile = rng.uniform(0.25, 1.0, size=n // width + 1)[np.arange(n) // width]
    fine = n // 4
    if fine:
        # unit-width bands at the far end
        profile[n - fine:] = np.arange(fine) % 2
    profile = profile / profile.max()
    shape = [1] * len(dims)
    shape[0] = n
    return np.broadcast_to(profile.reshape(shape), dims).copy()


_PHANTOMS = {
    PhantomKind.BLOCKS: _blocks,
    PhantomKind.DISKS: _disks,
    PhantomKind.STRIPES: _stripes,
}


def make_phantom(kind, dims: Sequence[int], beta_max: float = 100.0,
                 alpha_max: float = 0.03, seed: int = 0) -> Tuple[np.ndarray, np.ndarray]:
    """Build a piecewise constant density and attenuation pair.

    Both fields are drawn from the same family with independent streams
    and scaled so that their maxima equal beta_max and alpha_max.

    Args:
        kind (Union[PhantomKind, str]): blocks, disks or stripes.
        dims (Sequence[int]): 1 to 3 positive extents.
        beta_max (float): The maximum density.
        alpha_max (float): The maximum attenuation.
        seed (int): The phantom seed.

    Returns:
        Tuple[numpy.ndarray, numpy.ndarray]: beta and alpha.

    Raises:
        ValidationError: Unknown kind, bad dims or non-positive maxima.

    """
    try:
        kind = PhantomKind(kind)
    except ValueError:
        raise ValidationError(f'unknown phantom kind {kind!r}') from None
    dims = tuple(int(n) for n in dims)
    if not 1 <= len(dims) <= 3 or any(n < 1 for n in dims):
        raise ValidationError(f'phantom dims must be 1 to 3 positive extents, got {dims}')
    if not (beta_max > 0 and alpha_max > 0):
        raise ValidationError('beta_max and alpha_max must be positive')

    build = _PHANTOMS[kind]
    beta = build(dims, _generator(seed, 0)) * beta_max
    alpha = build(dims, _generator(seed, 1)) * alpha_max
    return beta, alpha
