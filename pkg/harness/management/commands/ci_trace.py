from django.core.management.base import BaseCommand, CommandError

from harness.exceptions import OutputError
from harness.service import load_config, trace_confidence_bounds


class Command(BaseCommand):
    help = ("Trace U_min under the Box and Aggregate priors, with every per-arm Box bound, "
            "round by round under uniform sampling. Writes CSV to --out or stdout.")

    def add_arguments(self, parser):
        parser.add_argument('--config', required=True, help="Path to the experiment config (JSON).")
        parser.add_argument('--rounds', type=int, required=True, help="Last round to trace.")
        parser.add_argument('--out', help="CSV file to write instead of stdout.")

    def handle(self, *args, **options):
        try:
            config = load_config(options['config'])
            frame = trace_confidence_bounds(config, options['rounds'])
        except ValueError as e:
            raise CommandError(str(e)) from e
        if options['out']:
            try:
                frame.to_csv(options['out'], index=False)
            except OSError as e:
                raise CommandError(str(OutputError(options['out'], f"Could not write trace: {e}"))) from e
            self.stdout.write(self.style.SUCCESS(f"Wrote {options['out']}"))
        else:
            self.stdout.write(frame.to_csv(index=False), ending='')
