import csv

from mil.formats import load_dataset, load_model
from mil.management.base import CdpmilCommand, open_output
from mil.pipeline import predict_bags


class Command(CdpmilCommand):
    help = 'Classify the bags of a dataset directory'

    def add_arguments(self, parser):
        parser.add_argument('--data', required=True)
        parser.add_argument('--labels', help='Label table; bags are unlabelled when DATA/labels.tsv is absent too')
        parser.add_argument('--model', required=True)
        parser.add_argument('--out', required=True, help='Comma-separated predictions')

    def run(self, **options):
        model = load_model(options['model'])
        bags = load_dataset(options['data'], options['labels'], require_labels=False)
        predictions = predict_bags(bags, model)
        with open_output(options['out']) as fp:
            writer = csv.writer(fp, lineterminator='\n')
            writer.writerow(['bag_id', 'predicted'] + ['prob_%d' % c for c in range(model.n_classes)] + ['label'])
            for bag in bags:
                predicted, probs = predictions[bag.bag_id]
                label = '' if bag.label is None else bag.label
                writer.writerow([bag.bag_id, predicted] + ['%.6f' % p for p in probs] + [label])
        self.stdout.write('Predicted %d bags' % len(bags))
