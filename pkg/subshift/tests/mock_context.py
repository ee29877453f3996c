import contextlib

from mock import Mock

from subshift.formatters import JSONFormatter


def mock_context(n_jobs=1):
    @contextlib.contextmanager
    def timer(name):
        ctx.timed.append(name)
        yield

    ctx = Mock(name='context', spec=['fork'])
    ctx.formatter = JSONFormatter()
    ctx.n_jobs = n_jobs
    ctx.seed = 0
    ctx.timings = {}
    ctx.timed = []
    ctx.timer = timer
    ctx.fork.return_value = ctx
    return ctx
