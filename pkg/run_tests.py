#!/usr/bin/env python
import sys
import os
import subprocess

PROJECT_ROOT = os.path.abspath(os.path.dirname(__file__))

args = ['nose2', '-s', PROJECT_ROOT]
args.extend(sys.argv[1:])
sys.exit(subprocess.call(args))
