import datetime
import json

import numpy as np
import pytz


class JSONFormatter(object):
    """
    Formatter reads and writes json documents (models, explanations, reports)
    while converting numpy values and timestamps to plain json types.

    Floats are written with repr precision so a value read back is bit-identical
    to the value written.
    """

    content_type = 'application/json'

    def now(self):
        return datetime.datetime.now(pytz.utc)

    def read_from(self, fp):
        return json.load(fp)

    def write_to(self, body_dict, fp, indent=2):
        json.dump(self.to_api_value(body_dict), fp, indent=indent, allow_nan=False)
        fp.write('\n')

    def dumps(self, body_dict, indent=2):
        return json.dumps(self.to_api_value(body_dict), indent=indent, allow_nan=False)

    def to_api_value(self, python_value):
        if isinstance(python_value, dict):
            return dict((str(k), self.to_api_value(v)) for k, v in python_value.items())
        if isinstance(python_value, (list, tuple)):
            return [self.to_api_value(v) for v in python_value]
        if isinstance(python_value, np.ndarray):
            return [self.to_api_value(v) for v in python_value.tolist()]
        if isinstance(python_value, np.bool_):
            return bool(python_value)
        if isinstance(python_value, np.integer):
            return int(python_value)
        if isinstance(python_value, np.floating):
            return float(python_value)
        if isinstance(python_value, datetime.datetime):
            # naive datetimes are taken to be UTC
            if not python_value.tzinfo:
                python_value = python_value.replace(tzinfo=pytz.UTC)
            return python_value.isoformat('T')
        if python_value is None or isinstance(python_value, (bool, int, float, str)):
            return python_value
        return str(python_value)
