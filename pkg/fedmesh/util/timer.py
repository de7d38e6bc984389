from contextlib import contextmanager
from timeit import default_timer


@contextmanager
def elapsed_timer():
    """
    Context manager yielding a callable that returns the elapsed wall time in milliseconds. After the block exits the
    callable keeps returning the final duration.
    """
    start = default_timer()
    elapser = lambda: (default_timer() - start) * 1000.0
    yield lambda: elapser()
    end = default_timer()
    elapser = lambda: (end - start) * 1000.0
