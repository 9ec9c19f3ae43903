from dirichlet.mixture import write_elbo_trace
from mil.formats import load_dataset, save_model
from mil.management.base import CdpmilCommand, add_training_arguments, hyperparams_from_options, open_output
from mil.pipeline import train


class Command(CdpmilCommand):
    help = 'Train a cascaded DP model on a labelled dataset directory'

    def add_arguments(self, parser):
        parser.add_argument('--data', required=True, help='Dataset directory of .fbag files')
        parser.add_argument('--labels', help='Label table (default: DATA/labels.tsv)')
        parser.add_argument('--validation-data', help='Dataset directory monitored for early stopping')
        parser.add_argument('--out', required=True, help='Model file to write')
        parser.add_argument('--elbo-trace', help='Write the slide-level ELBO trace of the returned epoch here')
        add_training_arguments(parser)

    def run(self, **options):
        hp = hyperparams_from_options(options)
        bags = load_dataset(options['data'], options['labels'])
        validation = None
        if options['validation_data']:
            validation = load_dataset(options['validation_data'])
        model = train(bags, hp, validation=validation)
        save_model(model, options['out'])
        if options['elbo_trace']:
            with open_output(options['elbo_trace']) as fp:
                write_elbo_trace(model.state, fp)
        last = model.history[-1] if model.history else {}
        self.stdout.write('Trained on %d bags in %d epochs, accuracy %.4f; model written to %s' % (
            len(bags), len(model.history), last.get('accuracy', float('nan')), options['out']))
