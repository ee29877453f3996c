import logging
import pprint
import sys
from collections.abc import Mapping

LOG_FORMAT = '[%(funcName)s: %(filename)s:%(lineno)d] %(message)s'


def getLogger(name=None, stream=None, level=None):
    """
    Returns the named logger (``subshift`` by default) writing to ``stream``
    through a single handler, extended with ``logger.pprint(obj)`` which
    pretty prints obj at debug level.

    Calling it again for the same name only swaps the stream and level.
    """
    logger = logging.getLogger(name or 'subshift')
    handler = getattr(logger, '_subshift_handler', None)
    if handler is None:
        handler = logging.StreamHandler(stream=stream or sys.stderr)
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
        logger.addHandler(handler)
        logger._subshift_handler = handler
    elif stream is not None:
        handler.setStream(stream)
    if level is not None:
        logger.setLevel(level)

    def debug_pprint(obj):
        logger.debug('\n%s', pprint.pformat(obj), stacklevel=2)

    logger.pprint = debug_pprint
    return logger


def to_list(items):
    """
    Comma-delimited string (or a list) to a list of stripped, non-empty items.
    """
    if items is None:
        return []
    if isinstance(items, (list, tuple)):
        return list(items)
    return [item.strip() for item in str(items).split(',') if item.strip()]


class ParamsDict(Mapping):
    """
    Read-only view of command-line flags or a manifest row with typed
    getters. Empty strings count as missing, so an unset flag and an empty
    manifest cell behave alike.

        Parameters:

            ``params``
                mapping of parameter names to raw values
    """
    def __init__(self, params):
        self._params = dict(params)

    def __getitem__(self, key):
        return self._params[key]

    def __iter__(self):
        return iter(self._params)

    def __len__(self):
        return len(self._params)

    def __repr__(self):
        return 'ParamsDict({0!r})'.format(self._params)

    def get_as(self, key, type, default=None):
        value = self._params.get(key)
        if value is None or value == '':
            return default
        return type(value)

    def get_list(self, key):
        return to_list(self._params.get(key))
