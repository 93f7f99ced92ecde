from django.core.management.base import BaseCommand, CommandError

from harness.outputs import write_summary
from harness.service import load_config, run_monte_carlo, with_overrides


class Command(BaseCommand):
    help = "Run a Monte Carlo experiment from a JSON config and write its CSV/JSON summary."

    def add_arguments(self, parser):
        parser.add_argument('--config', required=True, help="Path to the experiment config (JSON).")
        parser.add_argument('--reps', type=int, help="Override the number of replications.")
        parser.add_argument('--seed', type=int, help="Override the master seed.")
        parser.add_argument('--out', help="Override the output directory.")
        parser.add_argument('--n-jobs', type=int, dest='n_jobs', help="joblib workers (-1 for every core).")

    def handle(self, *args, **options):
        try:
            config = load_config(options['config'])
            config = with_overrides(config, replications=options['reps'], master_seed=options['seed'],
                                    output_dir=options['out'])
            summary = run_monte_carlo(config, n_jobs=options['n_jobs'])
            paths = write_summary(summary)
        except (ValueError, OSError) as e:
            raise CommandError(str(e)) from e
        for path in paths:
            self.stdout.write(self.style.SUCCESS(f"Wrote {path}"))
