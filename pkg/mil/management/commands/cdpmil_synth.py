from mil.management.base import CdpmilCommand
from mil.synthetic import SynthConfig, generate_synthetic, write_synthetic


class Command(CdpmilCommand):
    help = 'Generate a synthetic multiple instance dataset with train/ and test/ splits'

    def add_arguments(self, parser):
        parser.add_argument('--out', required=True, help='Output directory')
        parser.add_argument('--n-bags', type=int, default=200)
        parser.add_argument('--test-fraction', type=float, default=0.2)
        parser.add_argument('--dim', type=int, default=8)
        parser.add_argument('--n-classes', type=int, default=2)
        parser.add_argument('--separation', type=float, default=8.0, help='Distance between means in instance stds')
        parser.add_argument('--min-instances', type=int, default=30)
        parser.add_argument('--max-instances', type=int, default=60)
        parser.add_argument('--min-tumor-fraction', type=float, default=0.05)
        parser.add_argument('--max-tumor-fraction', type=float, default=0.30)
        parser.add_argument('--seed', type=int, default=0)

    def run(self, **options):
        config = SynthConfig(
            n_bags=options['n_bags'],
            instances_per_bag=(options['min_instances'], options['max_instances']),
            dim=options['dim'],
            n_classes=options['n_classes'],
            tumor_fraction=(options['min_tumor_fraction'], options['max_tumor_fraction']),
            separation=options['separation'],
            test_fraction=options['test_fraction'],
            seed=options['seed'],
        )
        dataset = generate_synthetic(config)
        write_synthetic(options['out'], dataset)
        self.stdout.write('Wrote %d training and %d test bags to %s' % (
            len(dataset.train), len(dataset.test), options['out']))
