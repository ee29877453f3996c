import numbers


class ValidationError(Exception):
    def __init__(self, resource, errors):
        self.resource = resource
        self.errors = errors
        super(ValidationError, self).__init__(format_errors(errors))


def format_errors(errors):
    """
    Renders an error dict on a single line, keys sorted.
    """
    parts = []
    for key in sorted(errors):
        parts.append('{0}: {1}'.format(key, '; '.join(errors[key])))
    return ' | '.join(parts)


def validate(key, obj, validators):
    """
    Runs every validator over obj, collecting validation errors.

    Parameters:

        ``key``
            the dotted prefix under which errors are stored, e.g. "model"

        ``obj``
            the document or object to check; validators never modify it

        ``validators``
            an iterable of :class:`BaseValidator`

    Returns:

        a dict mapping dotted keys to lists of error messages, empty when obj
        is valid
    """
    error_dict = {}
    for validator in validators:
        validator.find_errors(error_dict, key, obj)
    return error_dict


def raise_if_invalid(key, obj, validators):
    errors = validate(key, obj, validators)
    if errors:
        raise ValidationError(obj, errors)
    return obj


class BaseValidator(object):
    """
    Validators check a document (a parsed json dict) or a configuration object
    and report every problem they find instead of stopping at the first one::

        errors = validate('model', document, [ModelDocumentValidator()])

        {
            'model.trees.0': ['cycle detected at node 0'],
            'model.trees.0.nodes.3': ['unknown field "gain"'],
        }

    A validator has a *find_errors* method which makes calls to the
    *check_value* method, and if errors are found, they are stored in the dict,
    keyed by the dotted name of the non-compliant part.
    """

    error_message = 'Validation failure message goes here'

    def __init__(self, *args, **kwargs):
        self.error_message = kwargs.pop('error_message', self.error_message)

    def _add_error(self, error_dict, key, error):
        if key in error_dict:
            error_dict[key].append(error)
        else:
            error_dict[key] = [error]

    def check_value(self, value):
        return False

    def find_errors(self, error_dict, key, obj):
        if not self.check_value(obj):
            self._add_error(error_dict, key, self.error_message)


########## Attribute validators ############


class AttributeValidator(BaseValidator):
    """
    Base class for validators of a single attribute of a configuration object
    (or key of a dict).

    Parameters:

        ``attribute``
            name of the attribute to check

        ``null``
            optional -- a None value is accepted
    """

    def __init__(self, attribute, null=False, **kwargs):
        self.attribute = attribute
        self.null = null
        super(AttributeValidator, self).__init__(**kwargs)

    def _get(self, obj):
        if isinstance(obj, dict):
            return obj.get(self.attribute)
        return getattr(obj, self.attribute, None)

    def find_errors(self, error_dict, key, obj):
        value = self._get(obj)
        name = key + '.' + self.attribute
        if value is None:
            if not self.null:
                self._add_error(error_dict, name, '{0} is required'.format(self.attribute))
            return
        if not self.check_value(value):
            self._add_error(error_dict, name, self.error_message)


class IntRangeValidator(AttributeValidator):
    """
    Test an integer attribute to make sure it falls within a given range
    (inclusive at both ends; None leaves a side open).
    """

    error_message = 'This value is out of range.'

    def __init__(self, attribute, min=None, max=None, **kwargs):
        self.min = min
        self.max = max
        super(IntRangeValidator, self).__init__(attribute, **kwargs)

    def check_value(self, value):
        if isinstance(value, bool) or not isinstance(value, numbers.Integral):
            return False
        if self.min is not None and value < self.min:
            return False
        if self.max is not None and value > self.max:
            return False
        return True


class FloatRangeValidator(AttributeValidator):
    """
    Test a real attribute against an interval; ``open_min`` / ``open_max``
    exclude the corresponding end point.
    """

    error_message = 'This value is out of range.'

    def __init__(self, attribute, min=None, max=None, open_min=False, open_max=False, **kwargs):
        self.min = min
        self.max = max
        self.open_min = open_min
        self.open_max = open_max
        super(FloatRangeValidator, self).__init__(attribute, **kwargs)

    def check_value(self, value):
        if isinstance(value, bool) or not isinstance(value, numbers.Real):
            return False
        if value != value:
            return False
        if self.min is not None:
            if value < self.min or (self.open_min and value == self.min):
                return False
        if self.max is not None:
            if value > self.max or (self.open_max and value == self.max):
                return False
        return True


class ChoiceValidator(AttributeValidator):

    error_message = 'This value is not one of the allowed choices.'

    def __init__(self, attribute, choices, **kwargs):
        self.choices = tuple(choices)
        kwargs.setdefault('error_message', 'must be one of: ' + ', '.join(str(c) for c in self.choices))
        super(ChoiceValidator, self).__init__(attribute, **kwargs)

    def check_value(self, value):
        return value in self.choices


class RequiredKeysValidator(BaseValidator):
    """
    Ensure that a dict has every one of the given keys.
    """

    error_message = 'This field is required'

    def __init__(self, *keys, **kwargs):
        self.keys = keys
        super(RequiredKeysValidator, self).__init__(**kwargs)

    def find_errors(self, error_dict, key, obj):
        if not isinstance(obj, dict):
            self._add_error(error_dict, key, 'expected an object')
            return
        for name in self.keys:
            if obj.get(name) in (None, ''):
                self._add_error(error_dict, key, self.error_message + ': ' + name)


########## Schema validators ############


class FeatureSchemaValidator(BaseValidator):
    """
    Validates a feature schema document: a list of
    ``{"name": ..., "kind": "numeric" | "categorical", "categories": [...]}``.
    """

    kinds = ('numeric', 'categorical')
    allowed_fields = ('name', 'kind', 'categories')

    def find_errors(self, error_dict, key, obj):
        if not isinstance(obj, (list, tuple)) or not obj:
            self._add_error(error_dict, key, 'expected a non-empty list of features')
            return
        seen = set()
        for i, feature in enumerate(obj):
            fkey = '{0}.{1}'.format(key, i)
            if not isinstance(feature, dict):
                self._add_error(error_dict, fkey, 'expected an object')
                continue
            for field in feature:
                if field not in self.allowed_fields:
                    self._add_error(error_dict, fkey, 'unknown field "{0}"'.format(field))
            name = feature.get('name')
            if not isinstance(name, str) or not name:
                self._add_error(error_dict, fkey, 'name is required')
            elif name in seen:
                self._add_error(error_dict, fkey, 'duplicate feature name "{0}"'.format(name))
            else:
                seen.add(name)
            kind = feature.get('kind', 'numeric')
            if kind not in self.kinds:
                self._add_error(error_dict, fkey, 'kind must be numeric or categorical')
            categories = feature.get('categories')
            if kind == 'categorical':
                if not isinstance(categories, (list, tuple)) or not categories:
                    self._add_error(error_dict, fkey, 'categorical feature needs at least one category')
                elif len(set(str(c) for c in categories)) != len(categories):
                    self._add_error(error_dict, fkey, 'duplicate categories')
            elif categories is not None:
                self._add_error(error_dict, fkey, 'numeric feature cannot list categories')


########## Model document validators ############


class TreeDocumentValidator(BaseValidator):
    """
    Validates a single tree of the model json format::

        {"nodes": [{"id", "feature", "threshold", "left", "right"}],
         "leaves": [{"id", "value"}],
         "root": id}

    Reports unknown fields, duplicate ids, dangling child references, cycles,
    orphan nodes and feature indices outside the model's dimension. Messages
    name the offending node ids.

    Parameters:

        ``n_features``
            optional -- dimension the feature indices must stay below
    """

    node_fields = ('id', 'feature', 'threshold', 'left', 'right')
    leaf_fields = ('id', 'value')
    tree_fields = ('nodes', 'leaves', 'root')

    def __init__(self, n_features=None, **kwargs):
        self.n_features = n_features
        super(TreeDocumentValidator, self).__init__(**kwargs)

    def find_errors(self, error_dict, key, obj):
        if not isinstance(obj, dict):
            self._add_error(error_dict, key, 'expected an object')
            return
        for field in obj:
            if field not in self.tree_fields:
                self._add_error(error_dict, key, 'unknown field "{0}"'.format(field))

        nodes = obj.get('nodes') or []
        leaves = obj.get('leaves') or []
        if not leaves:
            self._add_error(error_dict, key, 'a tree needs at least one leaf')
            return

        children = {}
        ids = set()
        for i, node in enumerate(nodes):
            nkey = '{0}.nodes.{1}'.format(key, i)
            if not self._check_fields(error_dict, nkey, node, self.node_fields):
                continue
            node_id = node['id']
            if node_id in ids:
                self._add_error(error_dict, nkey, 'duplicate id {0}'.format(node_id))
            ids.add(node_id)
            children[node_id] = (node['left'], node['right'])
            feature = node['feature']
            if isinstance(feature, bool) or not isinstance(feature, numbers.Integral) or feature < 0 or \
                    (self.n_features is not None and feature >= self.n_features):
                self._add_error(error_dict, nkey, 'node {0} has invalid feature index {1}'.format(node_id, feature))
            threshold = node['threshold']
            if isinstance(threshold, bool) or not isinstance(threshold, numbers.Real) or threshold != threshold:
                self._add_error(error_dict, nkey, 'node {0} has invalid threshold'.format(node_id))

        for i, leaf in enumerate(leaves):
            lkey = '{0}.leaves.{1}'.format(key, i)
            if not self._check_fields(error_dict, lkey, leaf, self.leaf_fields):
                continue
            if leaf['id'] in ids:
                self._add_error(error_dict, lkey, 'duplicate id {0}'.format(leaf['id']))
            ids.add(leaf['id'])
            value = leaf['value']
            if isinstance(value, bool) or not isinstance(value, numbers.Real) or value != value:
                self._add_error(error_dict, lkey, 'leaf {0} has invalid value'.format(leaf['id']))

        if key in error_dict:
            return

        root = obj.get('root')
        if root not in ids:
            self._add_error(error_dict, key, 'root {0} is not a node or leaf'.format(root))
            return

        for node_id, pair in children.items():
            for child in pair:
                if child not in ids:
                    self._add_error(error_dict, key, 'node {0} references unknown child {1}'.format(node_id, child))
        if key in error_dict:
            return

        # walk from the root; a second visit means a cycle or a shared child
        visited = set()
        stack = [root]
        while stack:
            current = stack.pop()
            if current in visited:
                self._add_error(error_dict, key, 'cycle detected at node {0}'.format(current))
                return
            visited.add(current)
            stack.extend(children.get(current, ()))

        orphans = sorted(ids - visited, key=str)
        if orphans:
            self._add_error(error_dict, key, 'orphan nodes: {0}'.format(', '.join(str(o) for o in orphans)))

    def _check_fields(self, error_dict, key, item, fields):
        if not isinstance(item, dict):
            self._add_error(error_dict, key, 'expected an object')
            return False
        ok = True
        for field in item:
            if field not in fields:
                self._add_error(error_dict, key, 'unknown field "{0}"'.format(field))
                ok = False
        for field in fields:
            if field not in item:
                self._add_error(error_dict, key, 'missing field "{0}"'.format(field))
                ok = False
        return ok


class ModelDocumentValidator(BaseValidator):
    """
    Validates a whole model json document, tree or ensemble.
    """

    model_fields = ('kind', 'feature_names', 'trees', 'weights', 'base_score', 'aggregation', 'ensemble_kind')

    def find_errors(self, error_dict, key, obj):
        if not isinstance(obj, dict):
            self._add_error(error_dict, key, 'expected an object')
            return
        for field in obj:
            if field not in self.model_fields:
                self._add_error(error_dict, key, 'unknown field "{0}"'.format(field))

        kind = obj.get('kind')
        if kind not in ('tree', 'ensemble'):
            self._add_error(error_dict, key + '.kind', 'must be tree or ensemble')

        names = obj.get('feature_names')
        if not isinstance(names, list) or not all(isinstance(n, str) for n in names):
            self._add_error(error_dict, key + '.feature_names', 'expected a list of names')
            names = None
        elif len(set(names)) != len(names):
            self._add_error(error_dict, key + '.feature_names', 'duplicate feature names')

        trees = obj.get('trees')
        if not isinstance(trees, list) or not trees:
            self._add_error(error_dict, key + '.trees', 'expected a non-empty list of trees')
            return
        if kind == 'tree' and len(trees) != 1:
            self._add_error(error_dict, key + '.trees', 'a tree document holds exactly one tree')

        tree_validator = TreeDocumentValidator(n_features=len(names) if names is not None else None)
        for i, tree in enumerate(trees):
            tree_validator.find_errors(error_dict, '{0}.trees.{1}'.format(key, i), tree)

        if kind == 'ensemble':
            EnsembleValidator().find_errors(error_dict, key, obj)


class EnsembleValidator(BaseValidator):
    """
    Checks the ensemble invariants: one weight per tree, a known aggregation,
    and equal weights under mean aggregation. Works on a model document or a
    :class:`~subshift.trees.TreeEnsemble`.
    """

    aggregations = ('mean', 'weighted_sum')
    kinds = ('random_forest', 'gradient_boosted', 'other')

    def find_errors(self, error_dict, key, obj):
        if isinstance(obj, dict):
            n_trees = len(obj.get('trees') or [])
            weights = obj.get('weights')
            aggregation = obj.get('aggregation')
            base_score = obj.get('base_score', 0.0)
            kind = obj.get('ensemble_kind', 'other')
        else:
            n_trees = len(obj.trees)
            weights = list(obj.tree_weights)
            aggregation = obj.aggregation
            base_score = obj.base_score
            kind = obj.kind

        if not isinstance(weights, (list, tuple)) or len(weights) != n_trees:
            self._add_error(error_dict, key + '.weights', 'expected one weight per tree')
        elif not all(isinstance(w, numbers.Real) and not isinstance(w, bool) and w == w for w in weights):
            self._add_error(error_dict, key + '.weights', 'weights must be finite reals')
        elif aggregation == 'mean' and len(set(weights)) > 1:
            self._add_error(error_dict, key + '.weights', 'mean aggregation requires equal weights')
        if aggregation not in self.aggregations:
            self._add_error(error_dict, key + '.aggregation', 'must be mean or weighted_sum')
        if isinstance(base_score, bool) or not isinstance(base_score, numbers.Real) or base_score != base_score:
            self._add_error(error_dict, key + '.base_score', 'must be a finite real')
        if kind not in self.kinds:
            self._add_error(error_dict, key + '.ensemble_kind', 'must be one of: ' + ', '.join(self.kinds))


########## Configuration validators ############


def learner_config_validators():
    return [
        IntRangeValidator('max_leaf_nodes', min=2),
        IntRangeValidator('min_samples_per_side', min=1),
        ChoiceValidator('impurity_kind', ('variance', 'gini', 'shift')),
        IntRangeValidator('n_estimators', min=1),
        FloatRangeValidator('feature_subsample', min=0.0, max=1.0, open_min=True, null=True),
        FloatRangeValidator('learning_rate', min=0.0),
        IntRangeValidator('seed', min=0, max=2 ** 64 - 1),
    ]


def manifest_row_validators():
    return [
        RequiredKeysValidator('data_p', 'data_q', 'schema'),
        ChoiceValidator('target', ('tree', 'ensemble', 'blackbox'), null=True),
    ]


def shapley_config_validators():
    return [
        IntRangeValidator('exact_limit', min=1, max=30),
        IntRangeValidator('kernel_budget', min=1, null=True),
        FloatRangeValidator('epsilon', min=0.0, open_min=True),
    ]


def ensemble_config_validators():
    return [
        IntRangeValidator('max_trees', min=1, null=True),
    ]


def surrogate_config_validators():
    return [
        IntRangeValidator('max_leaves', min=2),
        ChoiceValidator('impurity', ('shift', 'gini', 'variance')),
        IntRangeValidator('min_samples_per_side_per_distribution', min=1),
    ]


def proxy_simulation_config_validators():
    return [
        IntRangeValidator('depth', min=1, max=4),
        IntRangeValidator('n_repeats', min=1),
        IntRangeValidator('seed', min=0, max=2 ** 64 - 1),
        FloatRangeValidator('correlation', min=0.0, max=1.0),
    ]
