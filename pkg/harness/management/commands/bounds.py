from django.core.management.base import BaseCommand, CommandError

from harness.service import load_config, summarize_bounds


class Command(BaseCommand):
    help = "Print T*, w* and the finite-delta lower bounds of a config's instance, one JSON report per delta."

    def add_arguments(self, parser):
        parser.add_argument('--config', required=True, help="Path to the experiment config (JSON).")

    def handle(self, *args, **options):
        try:
            config = load_config(options['config'])
            instance = config.instance.build()
            reports = [summarize_bounds(instance, delta) for delta in config.deltas]
        except ValueError as e:
            raise CommandError(str(e)) from e
        for report in reports:
            self.stdout.write(report.model_dump_json(indent=2))
