"""
Run configuration: `CDPMIL_DEFAULTS`, overridden by a `key = value` file,
overridden by explicit keyword arguments (the command line flags).
"""
import io
import logging
import re

import environ
from django.conf import settings

from mil.errors import ConfigurationError

log = logging.getLogger(__name__)

CONFIG_LINE = re.compile(r'\A([A-Za-z_][A-Za-z_0-9]*)\s*=\s*(.*?)\s*\Z')

# Keys whose default is None but take integers when set.
OPTIONAL_INTEGERS = ('K', 'hidden')

CHOICES = {
    'pooling': ('dp', 'mean', 'max', 'kmeans'),
    'bag_rule': ('probability', 'log'),
    'classifier': ('dp', 'mlp'),
}


def default_hyperparams():
    return dict(settings.CDPMIL_DEFAULTS)


def _value_type(key):
    if key in OPTIONAL_INTEGERS:
        return int
    return type(settings.CDPMIL_DEFAULTS[key])


def _isolated_env():
    # read_env writes into the class level ENVIRON; a throwaway subclass keeps os.environ untouched
    return type('RunConfigEnv', (environ.Env,), {'ENVIRON': {}})


def read_config_file(path):
    """
    Parse a run configuration file into typed values.

    :raises ConfigurationError: unreadable file, malformed line or unknown key
    """
    try:
        with open(path, encoding='utf-8') as fp:
            lines = fp.read().splitlines()
    except OSError as exc:
        raise ConfigurationError("Cannot read config file %s (%s)" % (path, exc.strerror))

    known = settings.CDPMIL_DEFAULTS
    normalized = []
    for number, line in enumerate(lines, start=1):
        line = line.strip()
        if not line or line.startswith('#'):
            continue
        match = CONFIG_LINE.match(line)
        if not match:
            raise ConfigurationError("Malformed line %d in %s: %r" % (number, path, line))
        key, value = match.groups()
        if key not in known:
            raise ConfigurationError("Unknown key %r on line %d of %s" % (key, number, path))
        normalized.append('%s=%s' % (key, value))

    env_class = _isolated_env()
    env_class.read_env(io.StringIO('\n'.join(normalized)), overwrite=True)
    env = env_class()
    values = {}
    for key in env_class.ENVIRON:
        values[key] = _typed_value(env, key, path)
    log.debug("Read %d settings from %s", len(values), path)
    return values


def _typed_value(env, key, path):
    raw = env.str(key)
    if key in OPTIONAL_INTEGERS and raw.lower() in ('', 'none'):
        return None
    getter = {bool: env.bool, int: env.int, float: env.float, str: env.str}[_value_type(key)]
    try:
        return getter(key)
    except ValueError:
        raise ConfigurationError("Invalid value %r for %s in %s" % (raw, key, path))


def validate_hyperparams(hp):
    def require(condition, message):
        if not condition:
            raise ConfigurationError(message)

    for key, options in CHOICES.items():
        require(hp[key] in options, "%s must be one of %s, got %r" % (key, ', '.join(options), hp[key]))
    for key in ('T', 'epochs', 'patience', 'max_iters', 'project_dim', 'project_above'):
        require(int(hp[key]) >= 1, "%s must be a positive integer, got %r" % (key, hp[key]))
    for key in OPTIONAL_INTEGERS:
        require(hp[key] is None or int(hp[key]) >= 1, "%s must be a positive integer, got %r" % (key, hp[key]))
    for key in ('eta1', 'eta2', 'rel_tol'):
        require(float(hp[key]) > 0, "%s must be positive, got %r" % (key, hp[key]))
    require(float(hp['lr']) >= 0, "lr must be nonnegative, got %r" % hp['lr'])
    require(int(hp['inner_grad_steps']) >= 0, "inner_grad_steps must be nonnegative")
    require(int(hp['folds']) >= 2, "folds must be at least 2, got %r" % hp['folds'])
    require(int(hp['tumor_class']) >= 0, "tumor_class must be a class index, got %r" % hp['tumor_class'])
    require(int(hp['project_dim']) <= int(hp['project_above']),
            "project_dim %r exceeds project_above %r" % (hp['project_dim'], hp['project_above']))


def resolve_hyperparams(overrides=None, config_path=None):
    """
    Merge the defaults, an optional config file and explicit overrides.

    Overrides whose value is None are treated as not given.
    """
    hp = default_hyperparams()
    if config_path:
        hp.update(read_config_file(config_path))
    for key, value in (overrides or {}).items():
        if key not in hp:
            raise ConfigurationError("Unknown setting %r" % key)
        if value is not None:
            hp[key] = value
    validate_hyperparams(hp)
    return hp
