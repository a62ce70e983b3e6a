from pathlib import Path

from django.core.management.base import BaseCommand

from apps.benchmarks import cli
from apps.scheduling.scenario_files import check_document, read_document


class Command(BaseCommand):
    help = 'Validate a DAG or scenario file: schema, DAG structure and scenario checks'

    def add_arguments(self, parser):
        parser.add_argument('path', help='DAG or scenario JSON file')

    def handle(self, *args, **options):
        path = Path(options['path'])
        if not path.is_file():
            raise cli.usage_error(f'{path} does not exist')

        try:
            document = read_document(path)
        except ValueError as e:
            self.stderr.write(f'  [schema] {e}')
            raise cli.validation_error(f'{path}: 1 problem')

        scenario, report = check_document(document, path.stem)
        if not report.ok:
            for violation in report.violations:
                self.stderr.write(f'  [{violation.code}] {violation.subject}: {violation.message}')
            lines = '; '.join(f'[{v.code}] {v.message}' for v in report.violations)
            raise cli.validation_error(f'{path}: {len(report.violations)} problem(s): {lines}')

        self.stdout.write(
            self.style.SUCCESS(
                f'{path} is valid: {len(scenario.tasks)} task(s), '
                f'{sum(len(t.nodes) for t in scenario.tasks)} node(s), '
                f'{len(scenario.mutations)} mutation(s), horizon {scenario.horizon_us / 1000:g}ms'
            )
        )
