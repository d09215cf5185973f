__all__ = ('SolverIterator',)


class SolverIterator:
    """Base class of step-wise solvers.

    Subclasses implement next(), returning one record per step and raising
    StopIteration when done.
    """
    def flatten(self):
        x = []
        for item in self:
            x.append(item)
        return x

    def next(self):
        raise NotImplementedError

    def __iter__(self):
        return self

    def __next__(self):
        return self.next()
