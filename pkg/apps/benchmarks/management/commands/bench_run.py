import logging
from dataclasses import replace

from django.core.management.base import BaseCommand

from apps.benchmarks import cli, conf
from apps.benchmarks.reports import FORMATS, render
from apps.benchmarks.runner import RunSpec, build_variants, record_run, run_sweep, write_artifacts
from apps.dags.exceptions import ScenarioInvalid, UnknownPlatform

logger = logging.getLogger('benchmarks')


class Command(BaseCommand):
    help = 'Run a scenario under several policies and seeds; write traces, reports, histograms and comparison tables'

    def add_arguments(self, parser):
        parser.add_argument('--scenario', required=True,
                            help='Scenario file (.json) or builtin such as minibench:xavier:tight or case:async-dependent')
        parser.add_argument('--policies', default='EDF,RED', help='Comma-separated: EDF, RED-FG, RED-IDA, RED')
        parser.add_argument('--seeds', default='0', help='Comma-separated non-negative seeds')
        parser.add_argument('--lambdas', help='QoE lambda grid, comma-separated')
        parser.add_argument('--qoe-lambda', type=float, help='Lambda whose QoE is stored with --record')
        parser.add_argument('--gamma', help='Merge window in ms; several comma-separated values run a sweep')
        parser.add_argument('--sync', help='periodic or on_demand (default: on_demand for RED, periodic otherwise)')
        parser.add_argument('--sync-interval', type=float, help='Periodic sync interval, ms')
        parser.add_argument('--sync-cost', type=float, help='Cost of one synchronization, ms')
        parser.add_argument('--decision-cost', type=float, help='Scheduling decision cost, ms')
        parser.add_argument('--drop-policy', help='drop_node, drop_job or never')
        parser.add_argument('--format', default='human', help='Comma-separated: csv, json, human')
        parser.add_argument('--output-dir', help='Where traces and reports are written')
        parser.add_argument('--deadline-scale', '--deadline-sweep', dest='deadline_steps', type=int,
                            nargs='?', const=6, default=0,
                            help='Sweep the minibenchmark deadline from tight to loose in N steps (default 6)')
        parser.add_argument('--bucket-ms', type=float, default=5.0, help='Response-time histogram bucket width, ms')
        parser.add_argument('--workers', type=int, help='Worker processes for the sweep')
        parser.add_argument('--record', action='store_true', help='Store the run in the database')
        parser.add_argument('--notes', default='', help='Free text stored with --record')

    def handle(self, *args, **options):
        spec = self._build_spec(options)

        try:
            variants = build_variants(spec)
        except UnknownPlatform as e:
            raise cli.usage_error(str(e))
        except ScenarioInvalid as e:
            for violation in e.violations:
                self.stderr.write(f'  {violation}')
            raise cli.validation_error(f'Scenario {spec.scenario} is invalid ({len(e.violations)} problem(s))')
        except ValueError as e:
            raise cli.usage_error(str(e))

        self.stdout.write(f'Running {spec.scenario}: {len(variants)} variant(s), '
                          f'{len(spec.policies)} policy(ies), {len(spec.seeds)} seed(s)')
        try:
            result = run_sweep(spec, variants)
        except ScenarioInvalid as e:
            raise cli.validation_error(f'Simulation rejected the scenario: {e}')
        written = write_artifacts(result)

        frame = result.comparison()
        self.stdout.write(render(frame, 'human' if 'human' in spec.formats else spec.formats[0]))

        if options['record']:
            bench_run = record_run(result, notes=options['notes'])
            self.stdout.write(f'Recorded run {bench_run.run_id}')

        self.stdout.write(
            self.style.SUCCESS(f'Wrote {len(written)} file(s) to {spec.output_dir}')
        )

    def _build_spec(self, options):
        policies = cli.parse_policies(options['policies'])
        seeds = cli.parse_seeds(options['seeds'])
        formats = cli.parse_formats(options['format'], FORMATS)
        lambdas = (cli.parse_numbers(options['lambdas'], '--lambdas')
                   if options['lambdas'] else tuple(conf.qoe_lambdas()))
        gammas = cli.parse_numbers(options['gamma'], '--gamma') if options['gamma'] else ()

        overrides = {}
        sync_cost = cli.non_negative_ms(options['sync_cost'], '--sync-cost')
        if sync_cost is not None:
            overrides['sync_cost_us'] = sync_cost
        decision_cost = cli.non_negative_ms(options['decision_cost'], '--decision-cost')
        if decision_cost is not None:
            overrides['decision_cost_us'] = decision_cost
        if options['sync_interval'] is not None:
            if options['sync_interval'] <= 0:
                raise cli.usage_error('--sync-interval must be > 0')
            overrides['sync_interval_us'] = cli.ms_to_us(options['sync_interval'])
        drop_policy = cli.parse_drop_policy(options['drop_policy'])
        if drop_policy is not None:
            overrides['drop_policy'] = drop_policy

        config = conf.scheduler_config(policies[0], **overrides)
        sync = cli.parse_sync(options['sync'], options['sync_interval'], config.sync_interval_us)
        if sync is not None:
            config = replace(config, sync=sync)

        workers = options['workers'] if options['workers'] is not None else conf.workers()
        if workers < 1:
            raise cli.usage_error('--workers must be >= 1')
        if options['deadline_steps'] < 0:
            raise cli.usage_error('--deadline-scale must be >= 0')
        if options['bucket_ms'] <= 0:
            raise cli.usage_error('--bucket-ms must be > 0')
        qoe_lambda = options['qoe_lambda'] if options['qoe_lambda'] is not None else conf.qoe_report_lambda()

        try:
            return RunSpec(
                scenario=options['scenario'],
                policies=policies,
                seeds=seeds,
                output_dir=options['output_dir'] or conf.output_dir(),
                formats=formats,
                lambdas=lambdas,
                time_unit_us=conf.qoe_time_unit_us(),
                config=config,
                gammas_us=tuple(cli.ms_to_us(g) for g in gammas),
                deadline_steps=options['deadline_steps'],
                workers=workers,
                refine=conf.refine_config(),
                bucket_ms=options['bucket_ms'],
                qoe_lambda=qoe_lambda,
            )
        except ValueError as e:
            raise cli.usage_error(str(e))
