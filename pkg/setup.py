# -*- coding: utf-8 -*-

from setuptools import setup, find_packages

setup(
    name='cdpmil',
    version='0.1.0',
    packages=find_packages('.', exclude=['*.tests']),
    include_package_data=True,
    install_requires=['Django~=4.2', 'django-environ', 'numpy', 'scipy', 'scikit-learn', 'sentry-sdk'],
    entry_points={
        'console_scripts': ['cdpmil = cdpmil.cli:main'],
    },
    zip_safe=False,
)
