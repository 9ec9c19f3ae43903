import contextlib
import logging
import sys

from django.conf import settings
from django.core.management import BaseCommand, CommandError

from dirichlet.errors import DirichletError
from mil.conf import resolve_hyperparams
from mil.errors import ConfigurationError, MilError

VERBOSITY_LEVELS = {0: logging.WARNING, 1: logging.INFO}


def configure_logging(logger="mil", level=logging.INFO, handler=None):
    logger = logging.getLogger(logger)
    logger.setLevel(level)
    if not handler:
        if any(getattr(h, 'cdpmil_console', False) for h in logger.handlers):
            return
        handler = logging.StreamHandler(stream=sys.stdout)
        handler.cdpmil_console = True
    handler.setFormatter(logging.Formatter(
        fmt="%(asctime)s - %(name)s - %(levelname)s: %(message)s",
        datefmt=logging.Formatter.default_time_format
    ))
    logger.addHandler(handler)


@contextlib.contextmanager
def translate_errors():
    """
    Turn library errors into CommandErrors: configuration problems exit
    with 1, data, format and numeric problems with 2.
    """
    try:
        yield
    except ConfigurationError as exc:
        raise CommandError(str(exc), returncode=1)
    except (MilError, DirichletError, OSError) as exc:
        raise CommandError(str(exc), returncode=2)


def add_training_arguments(parser):
    parser.add_argument('--config', help='Run configuration file of key = value lines')
    parser.add_argument('--T', type=int, help='Patch-level truncation')
    parser.add_argument('--K', type=int, help='Slide-level truncation (default: number of classes)')
    parser.add_argument('--eta1', type=float, help='Patch-level concentration')
    parser.add_argument('--eta2', type=float, help='Slide-level concentration')
    parser.add_argument('--epochs', type=int)
    parser.add_argument('--patience', type=int, help='Epochs without accuracy gain before stopping')
    parser.add_argument('--seed', type=int)
    parser.add_argument('--pooling', choices=('dp', 'mean', 'max', 'kmeans'))
    parser.add_argument('--bag-rule', choices=('probability', 'log'))
    parser.add_argument('--classifier', choices=('dp', 'mlp'), help='Centroid classifier (default: the slide-level DP)')
    parser.add_argument('--max-iters', type=int, help='Iteration cap of every DP fit')
    parser.add_argument('--rel-tol', type=float, help='Relative ELBO change that counts as converged')
    parser.add_argument('--lr', type=float, help='Encoder learning rate')
    parser.add_argument('--inner-grad-steps', type=int, help='Encoder gradient steps per iteration')
    parser.add_argument('--hidden', type=int, help='Encoder hidden width (default: twice the feature dimension)')
    parser.add_argument('--project-dim', type=int)
    parser.add_argument('--project-above', type=int)
    parser.add_argument('--cache-aggregation', action='store_true', default=None,
                        help='Pool the bags once instead of every epoch')


def hyperparams_from_options(options):
    overrides = {key: options[key] for key in settings.CDPMIL_DEFAULTS if key in options}
    return resolve_hyperparams(overrides, config_path=options.get('config'))


def open_output(path):
    return open(path, 'w', encoding='utf-8', newline='')


class CdpmilCommand(BaseCommand):
    """
    Base of the cdpmil commands: logging set up from the verbosity and
    library errors translated into exit codes. Subclasses implement `run`.
    """

    requires_system_checks = []

    def handle(self, *args, **options):
        level = VERBOSITY_LEVELS.get(options['verbosity'], logging.DEBUG)
        for logger in ('dirichlet', 'mil'):
            configure_logging(logger, level)
        with translate_errors():
            self.run(**options)

    def run(self, **options):
        raise NotImplementedError()
