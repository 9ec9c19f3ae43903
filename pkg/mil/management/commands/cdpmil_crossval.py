from mil.evaluation import cross_validate, summarize, write_table
from mil.formats import load_dataset
from mil.management.base import CdpmilCommand, add_training_arguments, hyperparams_from_options, open_output

METRICS = ('accuracy', 'macro_f1', 'auroc', 'aupr')


class Command(CdpmilCommand):
    help = 'Stratified K-fold cross-validation of the training pipeline'

    def add_arguments(self, parser):
        parser.add_argument('--data', required=True)
        parser.add_argument('--labels')
        parser.add_argument('--folds', type=int)
        parser.add_argument('--out', required=True)
        add_training_arguments(parser)

    def run(self, **options):
        hp = hyperparams_from_options(options)
        bags = load_dataset(options['data'], options['labels'])
        rows = cross_validate(bags, hp['folds'], hp, seed=hp['seed'])
        rows.append(dict(summarize(rows, METRICS), fold='mean'))
        with open_output(options['out']) as fp:
            write_table(rows, ('fold',) + METRICS, fp)
        self.stdout.write('Mean accuracy over %d folds: %.4f' % (hp['folds'], rows[-1]['accuracy']))
