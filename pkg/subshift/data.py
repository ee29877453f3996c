"""
Datasets, feature schemas and scalarisation.

Categorical features are one-hot expanded at load time, so everything
downstream only ever sees numeric columns and threshold tests of the form
``x[f] <= t``.
"""
import collections
import logging
import numbers

import numpy as np
import pandas as pd

from subshift.errors import EmptyPartitionError, ParseError, SchemaError
from subshift.formatters import JSONFormatter
from subshift.validators import FeatureSchemaValidator, ValidationError, validate

logger = logging.getLogger(__name__)

Feature = collections.namedtuple('Feature', ['name', 'kind', 'categories'])


class FeatureSchema(object):
    """
    Ordered list of input features.

        Parameters:

            ``features``
                iterable of :class:`Feature` or of dicts
                ``{"name", "kind", "categories"}`` as found in a schema file
    """
    def __init__(self, features):
        documents = [_feature_document(f) for f in features]
        errors = validate('schema', documents, [FeatureSchemaValidator()])
        if errors:
            raise ValidationError(documents, errors)
        self.features = tuple(
            Feature(d['name'], d.get('kind', 'numeric'),
                    tuple(str(c) for c in d['categories']) if d.get('categories') else None)
            for d in documents
        )

    @classmethod
    def numeric(cls, names):
        return cls([Feature(name, 'numeric', None) for name in names])

    @property
    def names(self):
        return [f.name for f in self.features]

    def __len__(self):
        return len(self.features)

    def __eq__(self, other):
        return isinstance(other, FeatureSchema) and self.features == other.features

    def __ne__(self, other):
        return not self == other

    def __repr__(self):
        return 'FeatureSchema({0!r})'.format(self.names)

    def feature(self, name):
        for f in self.features:
            if f.name == name:
                return f
        raise SchemaError(name, 'unknown feature "{0}"'.format(name))

    def column_names(self):
        """
        Names of the expanded columns: numeric features keep their name, a
        categorical feature ``color`` with categories red and blue becomes
        ``color=red`` and ``color=blue``.
        """
        names = []
        for f in self.features:
            if f.kind == 'categorical':
                names.extend('{0}={1}'.format(f.name, c) for c in f.categories)
            else:
                names.append(f.name)
        return names

    def column_slice(self, name):
        start = 0
        for f in self.features:
            width = len(f.categories) if f.kind == 'categorical' else 1
            if f.name == name:
                return slice(start, start + width)
            start += width
        raise SchemaError(name, 'unknown feature "{0}"'.format(name))

    def without(self, name):
        self.feature(name)
        return FeatureSchema([f for f in self.features if f.name != name])

    def to_document(self):
        document = []
        for f in self.features:
            d = {'name': f.name, 'kind': f.kind}
            if f.categories:
                d['categories'] = list(f.categories)
            document.append(d)
        return document


def _feature_document(feature):
    if isinstance(feature, Feature):
        d = {'name': feature.name, 'kind': feature.kind}
        if feature.categories is not None:
            d['categories'] = list(feature.categories)
        return d
    return feature


class Dataset(object):
    """
    Immutable columnar table of feature values for one distribution.

        Parameters:

            ``schema``
                the :class:`FeatureSchema` the rows conform to

            ``rows``
                N x d matrix of expanded (one-hot) feature values

            ``predictions``
                optional length-N vector of real model outputs f(x)

            ``labels``
                optional length-N vector of training targets
    """
    def __init__(self, schema, rows, predictions=None, labels=None):
        rows = np.array(rows, dtype=float, copy=True)
        if rows.ndim == 1:
            rows = rows.reshape(-1, 1)
        columns = schema.column_names()
        if rows.ndim != 2 or rows.shape[1] != len(columns):
            raise SchemaError('', 'expected {0} columns, got shape {1}'.format(len(columns), rows.shape))
        if rows.shape[0] < 1:
            raise SchemaError('', 'a dataset needs at least one row')
        if not np.all(np.isfinite(rows)):
            bad = int(np.where(~np.all(np.isfinite(rows), axis=1))[0][0])
            raise ParseError(bad, 'non-finite feature value in row {0}'.format(bad))
        rows.flags.writeable = False
        self.schema = schema
        self.rows = rows
        self.predictions = _frozen_vector(predictions, rows.shape[0], 'predictions', finite=True)
        self.labels = _frozen_vector(labels, rows.shape[0], 'labels', finite=False)

    def __len__(self):
        return self.rows.shape[0]

    def __repr__(self):
        return 'Dataset(n={0}, d={1})'.format(*self.rows.shape)

    @property
    def n_rows(self):
        return self.rows.shape[0]

    @property
    def n_columns(self):
        return self.rows.shape[1]

    @property
    def column_names(self):
        return self.schema.column_names()

    def column(self, name):
        return self.rows[:, self.column_names.index(name)]

    def select(self, mask):
        mask = np.asarray(mask)
        return Dataset(
            self.schema,
            self.rows[mask],
            predictions=None if self.predictions is None else self.predictions[mask],
            labels=None if self.labels is None else self.labels[mask],
        )

    def drop_feature(self, name):
        keep = np.ones(self.n_columns, dtype=bool)
        keep[self.schema.column_slice(name)] = False
        return Dataset(self.schema.without(name), self.rows[:, keep], self.predictions, self.labels)

    def with_predictions(self, predictions):
        return Dataset(self.schema, self.rows, predictions=predictions, labels=self.labels)

    def concat(self, other):
        if other.schema != self.schema:
            raise SchemaError('', 'cannot concatenate datasets with different schemas')

        def join(a, b):
            if a is None or b is None:
                return None
            return np.concatenate([a, b])

        return Dataset(
            self.schema,
            np.vstack([self.rows, other.rows]),
            predictions=join(self.predictions, other.predictions),
            labels=join(self.labels, other.labels),
        )


def _frozen_vector(values, n, name, finite):
    if values is None:
        return None
    values = np.array(values, copy=True)
    if values.ndim != 1 or values.shape[0] != n:
        raise SchemaError(name, '{0} must have length {1}'.format(name, n))
    if finite:
        values = values.astype(float)
        bad = np.where(~np.isfinite(values))[0]
        if len(bad):
            raise ParseError(int(bad[0]), 'non-finite {0} value in row {1}'.format(name, int(bad[0])))
    values.flags.writeable = False
    return values


class Scalariser(object):
    """
    Maps raw model outputs to reals so that a mean prediction is defined.

        Parameters:

            ``mode``
                ``identity`` (outputs already real) or ``class_indicator``
                (1.0 when the predicted label is one of ``target_classes``)

            ``target_classes``
                required for class_indicator
    """

    modes = ('identity', 'class_indicator')

    def __init__(self, mode='identity', target_classes=None):
        if mode not in self.modes:
            raise ValidationError(mode, {'scalariser.mode': ['must be identity or class_indicator']})
        if mode == 'class_indicator' and not target_classes:
            raise ValidationError(mode, {'scalariser.target_classes': ['class_indicator needs target classes']})
        self.mode = mode
        self.target_classes = frozenset(_label_key(c) for c in (target_classes or ()))

    def __repr__(self):
        return 'Scalariser({0!r}, {1!r})'.format(self.mode, sorted(self.target_classes))


def _label_key(value):
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, numbers.Integral):
        return str(int(value))
    if isinstance(value, numbers.Real) and float(value).is_integer():
        return str(int(value))
    return str(value).strip()


def _is_label_valued(values):
    if values.dtype.kind in 'biuUSO':
        if values.dtype.kind == 'O':
            return not any(isinstance(v, float) and not float(v).is_integer() for v in values)
        return True
    if values.dtype.kind == 'f':
        return bool(np.all(np.isfinite(values)) and np.all(np.floor(values) == values))
    return False


def scalarise(raw_outputs, scalariser):
    """
    Turns raw outputs into a real vector: unchanged for identity, 1.0 / 0.0
    label indicators for class_indicator.
    """
    values = np.asarray(raw_outputs)
    if scalariser.mode == 'identity':
        try:
            return values.astype(float)
        except (TypeError, ValueError):
            raise TypeError('identity scalarisation needs real outputs')
    if not _is_label_valued(values):
        raise TypeError('class_indicator scalarisation needs label-valued outputs')
    return np.array([1.0 if _label_key(v) in scalariser.target_classes else 0.0 for v in values])


def load_schema(path):
    """
    Reads a schema file: a json list of ``{name, kind, categories?}``.
    """
    with open(path) as fp:
        try:
            document = JSONFormatter().read_from(fp)
        except ValueError as e:
            raise SchemaError('', 'schema file {0} is not valid json: {1}'.format(path, e))
    return FeatureSchema(document)


def infer_schema(path, exclude=()):
    """
    Builds a schema from a csv header: columns that parse as numbers are
    numeric, everything else is categorical with sorted categories.
    """
    frame = _read_frame(path)
    features = []
    for name in frame.columns:
        if name in exclude:
            continue
        parsed = pd.to_numeric(frame[name], errors='coerce')
        if parsed.notna().all():
            features.append(Feature(name, 'numeric', None))
        else:
            features.append(Feature(name, 'categorical', tuple(sorted(set(frame[name])))))
    return FeatureSchema(features)


def _read_frame(path):
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding='utf-8')
    except pd.errors.EmptyDataError:
        raise ParseError(None, 'file {0} is empty'.format(path))
    if frame.shape[0] == 0:
        raise ParseError(None, 'file {0} has no data rows'.format(path))
    frame.columns = [c.strip() for c in frame.columns]
    return frame


def _parse_numeric(frame, name):
    raw = frame[name].str.strip()
    parsed = pd.to_numeric(raw, errors='coerce').to_numpy(dtype=float)
    bad = np.where(~np.isfinite(parsed))[0]
    if len(bad):
        row = int(bad[0])
        raise ParseError(row, 'column "{0}", row {1}: {2!r} is not a finite number'.format(name, row, raw.iloc[row]))
    return parsed


def load_csv(path, schema, prediction_column_name=None, label_column_name=None, scalariser=None):
    """
    Loads a csv file into a :class:`Dataset`.

    The header must hold the schema's feature names plus the optional
    prediction and label columns. Row order is preserved, categoricals are
    one-hot expanded. A prediction column holding class labels can be read by
    passing a class_indicator :class:`Scalariser`.
    """
    frame = _read_frame(path)
    expected = schema.names + [c for c in (prediction_column_name, label_column_name) if c]
    for name in expected:
        if name not in frame.columns:
            raise SchemaError(name, 'file {0} is missing column "{1}"'.format(path, name))
    for name in frame.columns:
        if name not in expected:
            raise SchemaError(name, 'file {0} has unexpected column "{1}"'.format(path, name))

    blocks = []
    for feature in schema.features:
        if feature.kind == 'categorical':
            values = frame[feature.name].str.strip()
            unknown = np.where(~values.isin(feature.categories).to_numpy())[0]
            if len(unknown):
                row = int(unknown[0])
                raise ParseError(row, 'column "{0}", row {1}: unknown category {2!r}'.format(
                    feature.name, row, values.iloc[row]))
            blocks.append(np.column_stack([(values == c).to_numpy(dtype=float) for c in feature.categories]))
        else:
            blocks.append(_parse_numeric(frame, feature.name).reshape(-1, 1))
    rows = np.hstack(blocks)

    predictions = None
    if prediction_column_name:
        if scalariser is not None and scalariser.mode == 'class_indicator':
            predictions = scalarise(frame[prediction_column_name].str.strip().to_numpy(dtype=object), scalariser)
        else:
            predictions = _parse_numeric(frame, prediction_column_name)

    labels = None
    if label_column_name:
        raw = frame[label_column_name].str.strip()
        parsed = pd.to_numeric(raw, errors='coerce')
        labels = parsed.to_numpy(dtype=float) if parsed.notna().all() else raw.to_numpy(dtype=object)

    logger.info('loaded %d rows x %d columns from %s', rows.shape[0], rows.shape[1], path)
    return Dataset(schema, rows, predictions=predictions, labels=labels)


def load_vector(path):
    """
    Reads a single-column csv (with header) of real values, e.g. a file of
    precomputed model predictions.
    """
    frame = _read_frame(path)
    if frame.shape[1] != 1:
        raise SchemaError('', 'file {0} must have exactly one column'.format(path))
    return _parse_numeric(frame, frame.columns[0])


def write_csv(path, data, prediction_column_name=None, label_column_name=None):
    """
    Writes a dataset back to csv in its schema form (categoricals collapsed
    back to their labels).
    """
    columns = collections.OrderedDict()
    for feature in data.schema.features:
        block = data.rows[:, data.schema.column_slice(feature.name)]
        if feature.kind == 'categorical':
            columns[feature.name] = [feature.categories[i] for i in np.argmax(block, axis=1)]
        else:
            columns[feature.name] = [repr(float(v)) for v in block[:, 0]]
    if prediction_column_name and data.predictions is not None:
        columns[prediction_column_name] = [repr(float(v)) for v in data.predictions]
    if label_column_name and data.labels is not None:
        columns[label_column_name] = [str(v) for v in data.labels]
    pd.DataFrame(columns).to_csv(path, index=False)


def partition_by_threshold(data, feature, threshold, drop_feature=False):
    """
    Splits a dataset in two simulated distributions: rows with
    ``feature <= threshold`` and rows with ``feature > threshold``.

        Parameters:

            ``drop_feature``
                remove the partitioning column from both outputs
    """
    spec = data.schema.feature(feature)
    if spec.kind != 'numeric':
        raise SchemaError(feature, 'partition feature "{0}" must be numeric'.format(feature))
    values = data.column(feature)
    left = values <= threshold
    if not left.any() or left.all():
        raise EmptyPartitionError('empty partition: threshold {0!r} leaves one side without rows'.format(threshold))
    low, high = data.select(left), data.select(~left)
    if drop_feature:
        low, high = low.drop_feature(feature), high.drop_feature(feature)
    logger.debug('partitioned %s at %r: %d / %d rows', feature, threshold, len(low), len(high))
    return low, high
