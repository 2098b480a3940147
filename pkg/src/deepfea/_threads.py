"""BLAS thread-pool control for the hot numeric loops.

The gemms issued by the rollout network and solver are far too small to gain
from BLAS threading; on small machines the pool overhead dominates by several
multiples, and pinning also keeps reductions bit-reproducible. threadpoolctl
is optional; without it this is a no-op.
"""

from contextlib import contextmanager

try:
    from threadpoolctl import threadpool_limits
except ImportError:  # pragma: no cover
    threadpool_limits = None


@contextmanager
def blas_threads(n: int = 1):
    if threadpool_limits is None:
        yield
    else:
        with threadpool_limits(limits=n):
            yield
