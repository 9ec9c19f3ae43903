from mil.evaluation import run_ood_experiment, write_table
from mil.formats import load_dataset, load_model
from mil.management.base import CdpmilCommand, open_output
from mil.synthetic import shift_bags


class Command(CdpmilCommand):
    help = 'Score how well each uncertainty measure separates in-distribution from OOD bags'

    def add_arguments(self, parser):
        parser.add_argument('--in-data', required=True)
        parser.add_argument('--in-labels')
        parser.add_argument('--ood-data', help='OOD dataset directory (default: the in-distribution bags shifted)')
        parser.add_argument('--ood-labels')
        parser.add_argument('--shift', type=float, default=10.0,
                            help='Feature offset used when no OOD directory is given')
        parser.add_argument('--model', required=True)
        parser.add_argument('--out', required=True)

    def run(self, **options):
        model = load_model(options['model'])
        in_bags = load_dataset(options['in_data'], options['in_labels'], require_labels=False)
        if options['ood_data']:
            ood_bags = load_dataset(options['ood_data'], options['ood_labels'], require_labels=False)
        else:
            ood_bags = shift_bags(in_bags, options['shift'])
        rows = run_ood_experiment(in_bags, ood_bags, model)
        with open_output(options['out']) as fp:
            write_table(rows, ('measure', 'auroc', 'aupr'), fp)
        for row in rows:
            self.stdout.write('%-22s AUROC %.4f  AUPR %.4f' % (row['measure'], row['auroc'], row['aupr']))
