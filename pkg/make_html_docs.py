#!/usr/bin/env python
import os
import subprocess

PROJECT_ROOT = os.path.abspath(os.path.dirname(__file__))
DOCS = os.path.join(PROJECT_ROOT, 'docs')

subprocess.call(['sphinx-build', '-b', 'html', DOCS, os.path.join(DOCS, '_build', 'html')])
subprocess.call(['open', 'index.html'], cwd=os.path.join(DOCS, '_build', 'html'))
