# -*- coding: utf-8 -*-
#
# subshift documentation build configuration file.
import os
import sys

sys.path.insert(0, os.path.abspath('..'))

extensions = ['sphinx.ext.autodoc', 'sphinx.ext.todo', 'sphinx.ext.viewcode', 'sphinx.ext.mathjax']

templates_path = ['_templates']
source_suffix = '.rst'
master_doc = 'index'

project = u'subshift'
copyright = u'2026, subshift contributors'

version = '0.1'
release = '0.1'

exclude_patterns = ['_build']
pygments_style = 'sphinx'
autodoc_member_order = 'bysource'

html_theme = 'default'
html_static_path = []
htmlhelp_basename = 'subshiftdoc'

latex_documents = [
    ('index', 'subshift.tex', u'subshift Documentation', u'subshift contributors', 'manual'),
]

man_pages = [
    ('index', 'subshift', u'subshift Documentation', [u'subshift contributors'], 1)
]
