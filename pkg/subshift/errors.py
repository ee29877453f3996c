class SubshiftError(Exception):
    """
    General subshift error
    """
    pass


class SchemaError(SubshiftError):

    def __init__(self, column='', *args, **kwargs):
        self.column = column
        super(SchemaError, self).__init__(*args, **kwargs)


class ParseError(SubshiftError):

    def __init__(self, row=None, *args, **kwargs):
        self.row = row
        super(ParseError, self).__init__(*args, **kwargs)


class EmptyPartitionError(SubshiftError):
    pass


class UndefinedConditionalError(SubshiftError):
    """
    A split node was reached by zero rows under one of the distributions, so its
    conditional probability (and any analysis of the tree) is undefined.
    """

    def __init__(self, node_id=None, distribution='', *args, **kwargs):
        self.node_id = node_id
        self.distribution = distribution
        if not args:
            args = ('node {0} is reached by zero rows under {1}'.format(node_id, distribution),)
        super(UndefinedConditionalError, self).__init__(*args, **kwargs)


class FactorLimitError(SubshiftError):

    def __init__(self, n_factors=0, limit=0, *args, **kwargs):
        self.n_factors = n_factors
        self.limit = limit
        if not args:
            args = ('{0} factors exceed the exact limit of {1}; use the kernel method '
                    'or prune the tree with prune_regrow'.format(n_factors, limit),)
        super(FactorLimitError, self).__init__(*args, **kwargs)


class SingularSystemError(SubshiftError):
    pass


class RenormalisationError(SubshiftError):
    pass


class DegenerateReweightError(SubshiftError):

    def __init__(self, label='', *args, **kwargs):
        self.label = label
        if not args:
            args = ('cannot reweight {0}: zero denominator'.format(label),)
        super(DegenerateReweightError, self).__init__(*args, **kwargs)


class NoExplainableTreeError(SubshiftError):
    """
    Every scanned tree of an ensemble failed its analysis.
    """
    pass
