import contextlib
import logging
import os
import threading
import time

from subshift.formatters import JSONFormatter
from subshift.validators import ValidationError

logger = logging.getLogger(__name__)

THREADS_ENV = 'SHAPSHIFT_THREADS'


class ExplainContext(object):
    """
    Context object passed to the parallel and reporting parts of the library.

    The context carries the formatter used for every json document, the
    resolved worker count and the master seed of a run, and collects timings
    while an explanation is produced so they can be written into the report.
    Timers may run on worker threads. Independent runs sharing one process
    (the rows of an evaluation) each get their own :meth:`fork`.

        Parameters:

            ``n_jobs``
                requested worker count; -1 means one per cpu. The value of the
                SHAPSHIFT_THREADS environment variable, when set, caps it.

            ``seed``
                master seed recorded in reports

            ``formatter``
                defaults to :class:`~subshift.formatters.JSONFormatter`
    """
    def __init__(self, n_jobs=-1, seed=0, formatter=None, environ=None):
        self.formatter = formatter or JSONFormatter()
        self.seed = seed
        self.n_jobs = resolve_n_jobs(n_jobs, os.environ if environ is None else environ)
        self.timings = {}
        self._lock = threading.Lock()

    def fork(self):
        """
        New context with the same formatter, worker count and seed and no
        timings.
        """
        return ExplainContext(n_jobs=self.n_jobs, seed=self.seed, formatter=self.formatter, environ={})

    @contextlib.contextmanager
    def timer(self, name):
        start = time.perf_counter()
        try:
            yield
        finally:
            elapsed = 1000.0 * (time.perf_counter() - start)
            with self._lock:
                self.timings[name] = self.timings.get(name, 0.0) + elapsed
            logger.debug('%s took %.1f ms', name, elapsed)


def resolve_n_jobs(n_jobs, environ):
    cpus = os.cpu_count() or 1
    if n_jobs is None or n_jobs == -1:
        n_jobs = cpus
    if n_jobs < 1:
        raise ValidationError('context', {'context.n_jobs': ['n_jobs must be -1 or >= 1']})

    cap = environ.get(THREADS_ENV)
    if cap:
        try:
            cap = int(cap)
        except ValueError:
            cap = 0
        if cap < 1:
            raise ValidationError('context', {THREADS_ENV: ['must be a positive integer']})
        n_jobs = min(n_jobs, cap)
    return n_jobs


def default_context(ctx=None):
    return ctx if ctx is not None else ExplainContext()
