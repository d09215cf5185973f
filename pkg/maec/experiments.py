"""Parameter studies built on the estimation pipeline."""
import dataclasses
import logging
import math
import time
from dataclasses import dataclass
from typing import List, Optional, Sequence

from .config import SolverConfig
from .errors import ValidationError
from .estimators import estimate, warm_start_alpha
from .simulate import ForwardModel, make_phantom, simulate_views

__all__ = ('SweepRow', 'SWEEP_HEADER', 'sensitivity_sweep', 'sdmm_iteration_time')

log = logging.getLogger(__name__)

SWEEP_HEADER = ('beta_max', 'alpha_max', 'snr_alpha_db', 'snr_beta_db', 'wall_seconds')


@dataclass(frozen=True)
class SweepRow:
    beta_max: float
    alpha_max: float
    snr_alpha_db: float
    snr_beta_db: float
    wall_seconds: float

    def astuple(self):
        return dataclasses.astuple(self)


def sensitivity_sweep(
        beta_maxes: Sequence[float], alpha_maxes: Sequence[float], *,
        kind: str = 'stripes', dims: Sequence[int] = (64, 64),
        cfg: Optional[SolverConfig] = None, seed: int = 0) -> List[SweepRow]:
    """Run the two-step pipeline over a grid of density and attenuation
    amplitudes and score both estimates.

    Every grid cell uses the same phantom layout and noise seed, so rows
    only differ by the amplitudes.

    Returns:
        List[SweepRow]: One row per (beta_max, alpha_max), beta_max major.

    """
    if not beta_maxes or not alpha_maxes:
        raise ValidationError('the sweep needs at least one amplitude of each kind')
    model = ForwardModel.bipath()
    rows = []
    for beta_max in beta_maxes:
        for alpha_max in alpha_maxes:
            beta, alpha = make_phantom(kind, dims, beta_max, alpha_max, seed)
            views = simulate_views(model, beta, alpha, seed)
            result = estimate(views, model, cfg, truth_alpha=alpha, truth_beta=beta)
            row = SweepRow(
                float(beta_max), float(alpha_max),
                result.metrics['snr_alpha_db'], result.metrics['snr_beta_db'],
                result.wall_seconds,
            )
            log.info('Sweep beta_max=%g alpha_max=%g: SNR alpha %.2f dB, beta %.2f dB',
                     beta_max, alpha_max, row.snr_alpha_db, row.snr_beta_db)
            rows.append(row)
    return rows


def sdmm_iteration_time(n: int, iterations: int = 5, seed: int = 0) -> float:
    """Measure the wall time of one warm start SDMM iteration on n pixels.

    The problem is a blocks phantom on a grid as square as n allows.

    Returns:
        float: Seconds per iteration, averaged over `iterations`.

    """
    if n < 1 or iterations < 1:
        raise ValidationError('n and iterations must be positive')
    rows = math.isqrt(n)
    while n % rows:
        rows -= 1
    dims = (rows, n // rows)

    model = ForwardModel.bipath()
    beta, alpha = make_phantom('blocks', dims, seed=seed)
    views = simulate_views(model, beta, alpha, seed)
    cfg = SolverConfig(warm_start_iters=iterations, residual_tol=0.0)

    started = time.perf_counter()
    _, trace = warm_start_alpha(views, model, cfg)
    elapsed = time.perf_counter() - started
    seconds = elapsed / len(trace)
    log.info('n=%d: %.4g s per SDMM iteration', n, seconds)
    return seconds
