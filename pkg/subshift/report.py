"""
Explanation and evaluation documents, and the SVG bar chart.
"""
import hashlib
import logging
from xml.sax.saxutils import escape

import numpy as np

from subshift.formatters import JSONFormatter
from subshift.metrics import mann_whitney_u
from subshift.shapley import LEAFMEANS

logger = logging.getLogger(__name__)

VERSION = '1.0'

# keys left out of a document's digest because they change from run to run
VOLATILE_KEYS = ('created', 'timing_ms', 'digest')


def _path_document(conditional):
    return [{'feature': step.feature_index, 'threshold': step.threshold, 'branch': step.branch}
            for step in conditional.path]


def explanation_document(explanation, seed=None, timing_ms=None, created=None, scan=None, formatter=None):
    """
    Self-contained record of an explanation. ``scan``, when given, is the
    per-tree list of an ensemble explanation.
    """
    formatter = formatter or JSONFormatter()
    table = explanation.table
    factors = []
    for i, conditional in enumerate(table.conditionals):
        factors.append({
            'label': conditional.human_label,
            'node_id': conditional.node_id,
            'path': _path_document(conditional),
            'test': {'feature': conditional.test[0], 'threshold': conditional.test[1]},
            'p_prob': table.p_probs[i],
            'q_prob': table.q_probs[i],
            'sv': explanation.factor_svs[i],
        })
    document = {
        'version': VERSION,
        'method': explanation.method,
        'mu_p': explanation.mu_p,
        'mu_q': explanation.mu_q,
        'shift': explanation.shift,
        'factors': factors,
        'leafmeans_sv': explanation.leafmeans_sv,
        'percent_unexplained': explanation.percent_unexplained,
        'flags': list(explanation.flags),
        'timing_ms': timing_ms or {},
        'seed': explanation.seed if seed is None else seed,
        'created': created or formatter.now(),
        'metadata': explanation.metadata,
    }
    if scan is not None:
        document['scan'] = [dict(entry._asdict()) for entry in scan]
    document['digest'] = get_sha1(formatter, document)
    return document


def get_sha1(formatter, document):
    """
    Digest of a document without its volatile keys; two runs with the same
    inputs give the same digest.
    """
    stable = dict((k, v) for k, v in document.items() if k not in VOLATILE_KEYS)
    text = formatter.dumps(stable, indent=None)
    return hashlib.sha1(text.encode('utf-8')).hexdigest()


def write_document(document, path=None, stream=None, formatter=None):
    formatter = formatter or JSONFormatter()
    if path is None:
        formatter.write_to(document, stream)
        return None
    with open(path, 'w') as fp:
        formatter.write_to(document, fp)
    logger.info('wrote %s', path)
    return path


########## SVG ############


WIDTH = 800
BAR_HEIGHT = 40
LABEL_WIDTH = 380
POSITIVE = '#d6604d'
NEGATIVE = '#4393c3'
NEUTRAL = '#999999'


def _bars(explanation):
    bars = [(c.human_label, sv) for c, sv in zip(explanation.conditionals, explanation.factor_svs)]
    if explanation.leafmeans_sv is not None:
        label = LEAFMEANS
        if explanation.percent_unexplained is not None:
            label = '{0} ({1:.1f}% unexplained)'.format(LEAFMEANS, explanation.percent_unexplained)
        bars.append((label, explanation.leafmeans_sv))
    return bars


def svg_chart(explanation):
    """
    Horizontal bar chart of the Shapley values, one 40 px row per bar,
    diverging colours by sign. Conditionals carry their labels, the LeafMeans
    bar its PercentUnexplained.
    """
    bars = _bars(explanation)
    height = BAR_HEIGHT * max(1, len(bars))
    scale = max([abs(sv) for _, sv in bars] + [1e-300])
    half = (WIDTH - LABEL_WIDTH - 20) / 2.0
    axis = LABEL_WIDTH + 10 + half

    parts = [
        '<svg xmlns="http://www.w3.org/2000/svg" width="{0}" height="{1}" viewBox="0 0 {0} {1}">'.format(
            WIDTH, height),
        '<title>{0}</title>'.format(escape('shift {0!r}: {1!r} -> {2!r}'.format(
            explanation.shift, explanation.mu_p, explanation.mu_q))),
        '<line x1="{0:.2f}" y1="0" x2="{0:.2f}" y2="{1}" stroke="#333333" stroke-width="1"/>'.format(axis, height),
    ]
    for row, (label, sv) in enumerate(bars):
        y = row * BAR_HEIGHT
        length = half * abs(sv) / scale
        x = axis if sv >= 0 else axis - length
        colour = POSITIVE if sv > 0 else NEGATIVE if sv < 0 else NEUTRAL
        parts.append('<text x="{0}" y="{1}" font-family="sans-serif" font-size="12" text-anchor="end">{2}</text>'.format(
            LABEL_WIDTH, y + 25, escape(label)))
        parts.append('<rect x="{0:.2f}" y="{1}" width="{2:.2f}" height="{3}" fill="{4}"/>'.format(
            x, y + 8, length, BAR_HEIGHT - 16, colour))
        anchor, text_x = ('start', axis + length + 4) if sv >= 0 else ('end', axis - length - 4)
        parts.append('<text x="{0:.2f}" y="{1}" font-family="sans-serif" font-size="11" text-anchor="{2}">{3}</text>'.format(
            text_x, y + 25, anchor, escape(repr(float(sv)))))
    parts.append('</svg>')
    return '\n'.join(parts) + '\n'


def write_svg(explanation, path):
    with open(path, 'w') as fp:
        fp.write(svg_chart(explanation))
    logger.info('wrote %s', path)
    return path


########## Evaluation report ############


def _median(values):
    values = [v for v in values if v is not None]
    return float(np.median(values)) if values else None


def evaluation_report(rows, formatter=None):
    """
    Report over a manifest: the rows as given (failed rows carry ``error``)
    plus medians of every metric, pooled forward and backward faithfulness
    values, and the one-sided Mann-Whitney p-value that AUAC exceeds AUIAC.
    """
    formatter = formatter or JSONFormatter()
    succeeded = [row for row in rows if 'error' not in row]
    aggregates = {'n_rows': len(rows), 'n_succeeded': len(succeeded), 'n_failed': len(rows) - len(succeeded)}

    keys = sorted(set(k for row in succeeded for k, v in row.items()
                      if isinstance(v, (int, float)) and not isinstance(v, bool)))
    aggregates['medians'] = dict((key, _median([row.get(key) for row in succeeded])) for key in keys)

    pooled_r, pooled_auac, pooled_auiac = [], [], []
    for row in succeeded:
        for direction in ('forward', 'backward'):
            if row.get('r_faithfulness_' + direction) is not None:
                pooled_r.append(row['r_faithfulness_' + direction])
            auac, auiac = row.get('auac_' + direction), row.get('auiac_' + direction)
            if auac is not None and auiac is not None:
                pooled_auac.append(auac)
                pooled_auiac.append(auiac)
    aggregates['pooled_r_faithfulness'] = pooled_r
    aggregates['pooled_auac'] = pooled_auac
    aggregates['pooled_auiac'] = pooled_auiac
    aggregates['median_pooled_r_faithfulness'] = _median(pooled_r)
    aggregates['auac_exceeds_auiac'] = sum(1 for a, b in zip(pooled_auac, pooled_auiac) if a > b)
    aggregates['mwu_p_auac_gt_auiac'] = mann_whitney_u(pooled_auac, pooled_auiac) if pooled_auac else None

    return {
        'version': VERSION,
        'created': formatter.now(),
        'rows': rows,
        'aggregates': aggregates,
    }
