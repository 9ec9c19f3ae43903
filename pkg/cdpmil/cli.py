"""
The `cdpmil` console script: `cdpmil <subcommand> [options]` runs the
matching `cdpmil_<subcommand>` management command.

Exit codes: 0 on success, 1 on usage and configuration errors, 2 on data,
format and numeric errors.
"""
import os
import sys

SUBCOMMANDS = {
    'synth': 'cdpmil_synth',
    'train': 'cdpmil_train',
    'predict': 'cdpmil_predict',
    'score-patches': 'cdpmil_score_patches',
    'ood': 'cdpmil_ood',
    'eval': 'cdpmil_eval',
    'crossval': 'cdpmil_crossval',
}

USAGE = "usage: cdpmil {%s} [options]\n" % ','.join(SUBCOMMANDS)


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    if argv and argv[0] in ('-h', '--help'):
        sys.stdout.write(USAGE)
        return 0
    if not argv or argv[0] not in SUBCOMMANDS:
        if argv:
            sys.stderr.write("cdpmil: unknown subcommand %r\n" % argv[0])
        sys.stderr.write(USAGE)
        return 1

    os.environ.setdefault("DJANGO_SETTINGS_MODULE", "cdpmil.settings")
    import django
    from django.core.management import CommandError, call_command
    django.setup()

    subcommand = argv[0]
    try:
        call_command(SUBCOMMANDS[subcommand], *argv[1:])
    except CommandError as exc:
        sys.stderr.write("cdpmil %s: %s\n" % (subcommand, exc))
        if exc.returncode == 1:
            sys.stderr.write("Try 'cdpmil %s --help'.\n" % subcommand)
        return exc.returncode
    except SystemExit as exc:
        # argparse exits after printing --help
        return exc.code or 0
    return 0


if __name__ == '__main__':
    sys.exit(main())
