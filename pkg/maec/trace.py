import enum
from dataclasses import dataclass, fields
from typing import Iterable, Optional

from .fields import PathLike, write_csv

__all__ = ('Stage', 'TracePoint', 'TRACE_HEADER', 'write_trace_csv')


class Stage(enum.Enum):
    """The estimation stage a trace point belongs to."""
    WARM_START = 'warm_start'
    BETA = 'beta'
    ALPHA = 'alpha'

    def __repr__(self):
        return '<{0.__class__.__name__}.{0.name}>'.format(self)


@dataclass(frozen=True, repr=False)
class TracePoint:
    """One record of a solver trace.

    Inner SDMM traces carry one point per iteration. The outer trace of
    an estimate carries one point per half-step, with iteration set to
    the outer round.

    Attributes:
    iteration (int): The 1-based iteration or round number.
    primal_residual (Optional[float]): max_i ||L_i x - y_i|| / (1 + ||y_i||).
        None for outer trace points.
    objective (Optional[float]): The objective value when it was evaluated.
    stage (Optional[Stage]): The stage that produced this point.
    cg_iterations (Optional[int]): The CG iterations of the x-update.
    accepted (bool): False when an outer half-step raised the objective
        and was discarded.

    """
    iteration: int
    primal_residual: Optional[float] = None
    objective: Optional[float] = None
    stage: Optional[Stage] = None
    cg_iterations: Optional[int] = None
    accepted: bool = True

    def __repr__(self):
        return '{}({})'.format(
            self.__class__.__name__,
            ', '.join([
                f'{f.name}={getattr(self, f.name)!r}' for f in fields(self)
                if getattr(self, f.name) is not None
            ])
        )


TRACE_HEADER = ('stage', 'iteration', 'primal_residual', 'objective', 'cg_iterations', 'accepted')


def write_trace_csv(points: Iterable[TracePoint], path: PathLike):
    """Write trace points as CSV. Missing values are left empty."""
    def row(p: TracePoint):
        return (
            p.stage.value if p.stage is not None else '',
            p.iteration,
            '' if p.primal_residual is None else p.primal_residual,
            '' if p.objective is None else p.objective,
            '' if p.cg_iterations is None else p.cg_iterations,
            int(p.accepted),
        )

    write_csv((row(p) for p in points), TRACE_HEADER, path)
