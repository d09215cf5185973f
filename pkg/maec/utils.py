import datetime
import math
from typing import Tuple

import dateutil.parser

from .errors import UsageError

__all__ = ('isoify_datetime', 'parse_datetime', 'utcnow', 'parse_size', 'root_extent')


def isoify_datetime(dt: datetime.datetime) -> str:
    """Turn a datetime into a ISO formatted string in UTC suitable
    for manifests."""
    dt = dt.astimezone(datetime.timezone.utc)
    return dt.replace(microsecond=0, tzinfo=None).isoformat() + 'Z'


def parse_datetime(date_string: str) -> datetime.datetime:
    """Parse a datetime written by isoify_datetime()."""
    dt = dateutil.parser.isoparse(date_string)
    if dt.tzinfo:
        return dt.astimezone(datetime.timezone.utc)
    return dt.replace(tzinfo=datetime.timezone.utc)


def utcnow() -> datetime.datetime:
    return datetime.datetime.now(datetime.timezone.utc)


def parse_size(size: str) -> Tuple[int, ...]:
    """Parse an extent string such as "64x64" or "32" into dims.

    Extents are listed in axis order, so "32x48" has 32 rows.

    Raises:
        UsageError: The string is not 1 to 3 positive integers joined by "x".

    """
    parts = str(size).lower().split('x')
    try:
        dims = tuple(int(p) for p in parts)
    except ValueError:
        raise UsageError(f'invalid size {size!r}, expected e.g. 64x64') from None
    if not 1 <= len(dims) <= 3 or any(n < 1 for n in dims):
        raise UsageError(f'invalid size {size!r}, expected 1 to 3 positive extents')
    return dims


def root_extent(dims: Tuple[int, ...]) -> float:
    """Return n^{1/d}, the geometric mean extent."""
    return math.prod(dims) ** (1.0 / len(dims))
