from mil.evaluation import localization_auroc
from mil.formats import load_dataset, load_model
from mil.management.base import CdpmilCommand, open_output
from mil.synthetic import read_instance_labels
from mil.uncertainty import patch_scores, write_patch_scores
from mil.workers import map_bags


class Command(CdpmilCommand):
    help = 'Write per-instance likelihood scores for localization heatmaps'

    def add_arguments(self, parser):
        parser.add_argument('--data', required=True)
        parser.add_argument('--labels')
        parser.add_argument('--model', required=True)
        parser.add_argument('--out', required=True, help='Comma-separated patch score table')
        parser.add_argument('--raw-likelihood', action='store_true', default=None,
                            help='Score with the plain mixture likelihood, without tumor weighting')
        parser.add_argument('--tumor-class', type=int)
        parser.add_argument('--instances', help='Instance label table; reports the localization AUROC')

    def run(self, **options):
        model = load_model(options['model'])
        bags = load_dataset(options['data'], options['labels'], require_labels=False)
        raw, tumor_class = options['raw_likelihood'], options['tumor_class']
        results = map_bags(lambda bag: patch_scores(bag, model, raw, tumor_class), bags)
        reports = list(results.values())
        with open_output(options['out']) as fp:
            write_patch_scores(reports, fp)
        if options['instances']:
            value = localization_auroc(reports, read_instance_labels(options['instances']))
            self.stdout.write('Localization AUROC %.6f' % value)
