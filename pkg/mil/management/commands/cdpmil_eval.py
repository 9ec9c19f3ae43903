from mil.evaluation import evaluate_model, write_table
from mil.formats import load_dataset, load_model
from mil.management.base import CdpmilCommand, open_output


class Command(CdpmilCommand):
    help = 'Evaluate a model on a labelled dataset directory'

    def add_arguments(self, parser):
        parser.add_argument('--data', required=True)
        parser.add_argument('--labels')
        parser.add_argument('--model', required=True)
        parser.add_argument('--out', required=True)

    def run(self, **options):
        model = load_model(options['model'])
        bags = load_dataset(options['data'], options['labels'])
        metrics = evaluate_model(model, bags)
        rows = [{'metric': key, 'value': value} for key, value in metrics.items()]
        with open_output(options['out']) as fp:
            write_table(rows, ('metric', 'value'), fp)
        for row in rows:
            self.stdout.write('%s %.6f' % (row['metric'], row['value']))
