import dataclasses
import logging
from dataclasses import dataclass
from typing import Any, Dict, Optional, Sequence

import numpy as np

from .errors import ValidationError
from .mixins import MappingLoader
from .sdmm import default_cg_maxit
from .utils import root_extent

__all__ = ('SolverConfig',)

log = logging.getLogger(__name__)


def _optional_int(value):
    return None if value is None else int(value)


@dataclass(frozen=True)
class SolverConfig(MappingLoader):
    """Parameters of the estimators.

    Fields left as None are data dependent and filled in by resolve().

    Attributes:
    lambda_alpha (float): TV weight of the attenuation.
    lambda_beta (Optional[float]): TV weight of the density.
        Defaults to mean(u)^(-1/2) with u the summed views.
    gamma (float): The SDMM step of the attenuation subproblems.
    gamma_beta (Optional[float]): The SDMM step of the density subproblem.
        Defaults to max(1, mean(u) / m), the typical density scale.
    c1 (float): Balance constant of the data terms.
    c2 (Optional[float]): Balance constant of the attenuation gradient.
        Defaults to n^(1/d).
    c2_beta (float): Balance constant of the density gradient.
    c3 (float): Balance constant of the nonnegativity term.
    nit (int): The number of alternating rounds after the warm start
        and first density correction.
    warm_start_iters (int): SDMM iterations of the warm start.
    alpha_iters (int): SDMM iterations of each attenuation step.
    beta_iters (int): SDMM iterations of each density step.
    cg_tol (float): Relative tolerance of the CG x-updates.
    cg_maxit (Optional[int]): CG iterations per x-update.
        Defaults to 10 * n^(1/d).
    residual_tol (float): SDMM early exit threshold on the primal residual.
    seed (int): Seed recorded with the run.

    """
    __init_attrs = (
        {'name': 'lambda_alpha', 'type': float},
        {'name': 'lambda_beta', 'type': float},
        {'name': 'gamma', 'type': float},
        {'name': 'gamma_beta', 'type': float},
        {'name': 'c1', 'type': float},
        {'name': 'c2', 'type': float},
        {'name': 'c2_beta', 'type': float},
        {'name': 'c3', 'type': float},
        {'name': 'nit', 'type': int},
        {'name': 'warm_start_iters', 'type': int},
        {'name': 'alpha_iters', 'type': int},
        {'name': 'beta_iters', 'type': int},
        {'name': 'cg_tol', 'type': float},
        {'name': 'cg_maxit', 'type': _optional_int},
        {'name': 'residual_tol', 'type': float},
        {'name': 'seed', 'type': int},
    )

    lambda_alpha: float = 1.0
    lambda_beta: Optional[float] = None
    gamma: float = 1.0
    gamma_beta: Optional[float] = None
    c1: float = 1.0
    c2: Optional[float] = None
    c2_beta: float = 1.0
    c3: float = 1.0
    nit: int = 0
    warm_start_iters: int = 500
    alpha_iters: int = 500
    beta_iters: int = 300
    cg_tol: float = 1e-10
    cg_maxit: Optional[int] = None
    residual_tol: float = 1e-9
    seed: int = 0

    def __post_init__(self):
        def check(ok, message):
            if not ok:
                raise ValidationError(message)

        check(self.lambda_alpha >= 0, f'lambda_alpha must be nonnegative, got {self.lambda_alpha}')
        check(self.lambda_beta is None or self.lambda_beta >= 0,
              f'lambda_beta must be nonnegative, got {self.lambda_beta}')
        for name in ('gamma', 'c1', 'c2_beta', 'c3', 'cg_tol'):
            value = getattr(self, name)
            check(value > 0, f'{name} must be positive, got {value}')
        for name in ('gamma_beta', 'c2'):
            value = getattr(self, name)
            check(value is None or value > 0, f'{name} must be positive, got {value}')
        for name in ('nit', 'warm_start_iters', 'alpha_iters', 'beta_iters'):
            value = getattr(self, name)
            check(value >= 0, f'{name} must be nonnegative, got {value}')
        check(self.cg_maxit is None or self.cg_maxit >= 1, f'cg_maxit must be at least 1, got {self.cg_maxit}')
        check(self.residual_tol >= 0, f'residual_tol must be nonnegative, got {self.residual_tol}')

    @classmethod
    def from_mapping(cls, mapping: Dict[str, Any]) -> 'SolverConfig':
        """Build a config from a mapping such as the "config" entry of a
        run manifest. Missing keys keep their defaults."""
        return cls(**cls._load_attrs(mapping, cls.__init_attrs, required=False))

    def to_mapping(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)

    @property
    def is_resolved(self) -> bool:
        return None not in (self.lambda_beta, self.gamma_beta, self.c2, self.cg_maxit)

    def resolve(self, views: Sequence[np.ndarray]) -> 'SolverConfig':
        """Return a copy with every data dependent default made explicit.

        Args:
            views (Sequence[numpy.ndarray]): The count fields of the run.

        """
        if not views:
            raise ValidationError('at least one view is needed to resolve a config')
        dims = np.shape(views[0])
        mean_u = float(np.mean(sum(np.asarray(u, dtype=np.float64) for u in views)))

        auto = {
            'lambda_beta': mean_u ** -0.5 if mean_u > 0 else 0.0,
            'gamma_beta': max(1.0, mean_u / len(views)),
            'c2': root_extent(dims),
            'cg_maxit': default_cg_maxit(dims),
        }
        changes = {k: v for k, v in auto.items() if getattr(self, k) is None}
        if changes:
            log.debug('Resolved config defaults %s', changes)
        return dataclasses.replace(self, **changes)
