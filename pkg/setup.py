#!/usr/bin/env python
# -*- coding: utf-8 -*-
from setuptools import setup
from setuptools import find_packages

version = '0.1'

setup(
    name='subshift',
    version=version,
    description='Explains shifts in mean model predictions with tree subgroup conditionals',
    license='MIT',
    python_requires='>=3.8',
    packages=find_packages(),
    install_requires=[
        'numpy>=1.20',
        'pandas',
        'scipy>=1.7',
        'joblib',
        'pytz',
    ],
    entry_points={
        'console_scripts': [
            'subshift = subshift.cli:main',
        ],
    },
    zip_safe=False,
    classifiers=[
        'Development Status :: 3 - Alpha',
        'Intended Audience :: Science/Research',
        'License :: OSI Approved :: MIT License',
        'Operating System :: OS Independent',
        'Programming Language :: Python',
        'Programming Language :: Python :: 3',
        'Topic :: Scientific/Engineering :: Artificial Intelligence',
    ]
)
