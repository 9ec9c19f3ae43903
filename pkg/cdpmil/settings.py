"""
Django settings for the cdpmil project.
"""

import os
import subprocess
import environ
import sentry_sdk
from sentry_sdk.integrations.django import DjangoIntegration
from django.core.exceptions import ImproperlyConfigured

root = environ.Path(__file__) - 2  # two folders back
BASE_DIR = root()

# Location of the fallback version file, used when no repository is available.
VERSION_FILE = os.path.join(BASE_DIR, 'VERSION')


def get_git_revision_hash():
    """
    We need a way to retrieve git revision hash for sentry reports
    """
    try:
        # We are not interested in gits complaints, stderr -> null
        git_hash = subprocess.check_output(['git', 'describe', '--tags', '--long', '--always'],
                                           stderr=subprocess.DEVNULL, encoding='utf8')
    # First is "git not found", second is most likely "no repository"
    except (FileNotFoundError, subprocess.CalledProcessError):
        try:
            with open(VERSION_FILE) as f:
                git_hash = f.readline()
        except FileNotFoundError:
            git_hash = "revision_not_available"

    return git_hash.rstrip()


env = environ.Env(
    DEBUG=(bool, False),
    SECRET_KEY=(str, 'cdpmil-has-no-web-surface'),
    SENTRY_DSN=(str, ''),
    SENTRY_ENVIRONMENT=(str, ''),
    CDPMIL_THREADS=(int, 0),
    TEST_PERFORMANCE=(bool, False),
)
environ.Env.read_env(os.path.join(BASE_DIR, '.env'))

DEBUG = env('DEBUG')
SECRET_KEY = env('SECRET_KEY')

# There is no database; models are files.
DATABASES = {}

INSTALLED_APPS = [
    'dirichlet',
    'mil',
]

if env('SENTRY_DSN'):
    sentry_sdk.init(
        dsn=env('SENTRY_DSN'),
        environment=env('SENTRY_ENVIRONMENT'),
        release=get_git_revision_hash(),
        integrations=[DjangoIntegration()]
    )

TEST_RUNNER = 'cdpmil.test_runner.PyTestShimRunner'
TEST_PERFORMANCE = env('TEST_PERFORMANCE')

USE_TZ = True

# Upper bound for the per-bag worker pool. 0 means one worker per CPU.
CDPMIL_THREADS = env('CDPMIL_THREADS')

# Defaults for every tunable of the pipeline. Run config files and command
# line flags override these, in that order.
CDPMIL_DEFAULTS = {
    'T': 10,
    'K': None,  # number of classes in the training labels
    'eta1': 1.0,
    'eta2': 1.0,
    'epochs': 10,
    'patience': 3,
    'max_iters': 200,
    'rel_tol': 1e-6,
    'lr': 1e-3,
    'inner_grad_steps': 1,
    'hidden': None,  # 2 * feature dimension
    'seed': 0,
    'pooling': 'dp',
    'project_dim': 32,
    'project_above': 64,
    'cache_aggregation': False,
    'raw_likelihood': False,
    'tumor_class': 1,
    'bag_rule': 'probability',
    'classifier': 'dp',
    'folds': 10,
}

# local_settings.py can be used to override environment-specific settings.
local_settings_path = os.path.join(BASE_DIR, "local_settings.py")
if os.path.exists(local_settings_path):
    with open(local_settings_path) as fp:
        code = compile(fp.read(), local_settings_path, 'exec')
    exec(code, globals(), locals())


#
# Validate config
#
if CDPMIL_THREADS < 0:
    raise ImproperlyConfigured("CDPMIL_THREADS must be zero or a positive worker count")
if CDPMIL_DEFAULTS['pooling'] not in ('dp', 'mean', 'max', 'kmeans'):
    raise ImproperlyConfigured("Unknown default pooling %r" % CDPMIL_DEFAULTS['pooling'])
