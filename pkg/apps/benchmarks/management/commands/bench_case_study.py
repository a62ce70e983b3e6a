import logging
from dataclasses import replace
from pathlib import Path

import pandas as pd
from django.core.management.base import BaseCommand

from apps.benchmarks import cli, conf
from apps.benchmarks.metrics import Outcome, histogram, instances, jobs
from apps.benchmarks.reports import histogram_frame, phase_table, render
from apps.dags.exceptions import UnknownCaseStudy
from apps.scheduling.scenario_files import dump_scenario
from apps.scheduling.scenarios import CASE_STUDIES, generate_case_study
from apps.scheduling.simulator import run

logger = logging.getLogger('benchmarks')

PHASE_BOUNDARIES_US = (3_000_000, 6_000_000)


class Command(BaseCommand):
    help = 'Run a motivating case study and print its per-phase or histogram summary'

    def add_arguments(self, parser):
        parser.add_argument('which', help=f'One of: {", ".join(CASE_STUDIES)}')
        parser.add_argument('--policy', default='EDF', help='Scheduling policy (default EDF)')
        parser.add_argument('--seed', type=int, default=0)
        parser.add_argument('--bucket-ms', type=float, default=5.0, help='Histogram bucket width, ms')
        parser.add_argument('--format', default='human', help='csv, json or human')
        parser.add_argument('--output-dir', help='Where the scenario file, trace and tables are written')

    def handle(self, *args, **options):
        which = options['which']
        if which not in CASE_STUDIES:
            raise cli.usage_error(f'unknown case study {which!r}; expected one of {", ".join(CASE_STUDIES)}')
        policy = cli.parse_policies(options['policy'])[0]
        fmt = cli.parse_formats(options['format'], ('csv', 'json', 'human'))[0]
        if options['seed'] < 0:
            raise cli.usage_error('--seed must be >= 0')
        if options['bucket_ms'] <= 0:
            raise cli.usage_error('--bucket-ms must be > 0')

        output_dir = Path(options['output_dir'] or conf.output_dir()) / 'case_studies'
        output_dir.mkdir(parents=True, exist_ok=True)
        config = conf.scheduler_config(policy)

        if which == 'dynamic-workload':
            table = self._dynamic_workload(options['seed'], config, output_dir)
            name = 'dynamic-workload_phases'
        else:
            # the dependent and independent variants only mean something side by side
            table = self._async_pair(options['seed'], config, options['bucket_ms'], output_dir)
            name = 'async_histograms'

        (output_dir / f'{name}.csv').write_text(render(table, 'csv'), encoding='utf-8')
        self.stdout.write(render(table, fmt))
        self.stdout.write(self.style.SUCCESS(f'Case study {which} written to {output_dir}'))

    def _simulate(self, which, seed, config, output_dir):
        try:
            scenario = replace(generate_case_study(which, seed=seed), refine=conf.refine_config())
        except UnknownCaseStudy as e:
            raise cli.usage_error(str(e))
        dump_scenario(scenario, output_dir / f'{which}.json')
        trace = run(scenario, config)
        trace.write_jsonl(output_dir / f'{which}_{config.policy.value}_seed{seed}.jsonl')
        logger.info(f"Case study {which} under {config.policy.value}: {len(trace)} events")
        return trace

    def _dynamic_workload(self, seed, config, output_dir):
        trace = self._simulate('dynamic-workload', seed, config, output_dir)
        return phase_table(instances(trace), PHASE_BOUNDARIES_US)

    def _async_pair(self, seed, config, bucket_ms, output_dir):
        frames = []
        for which in ('async-dependent', 'async-independent'):
            trace = self._simulate(which, seed, config, output_dir)
            records = [r for r in jobs(trace) if r.task == 'B' and r.outcome != Outcome.CENSORED]
            times = [r.response_us / 1000 for r in records if r.outcome in (Outcome.ON_TIME, Outcome.LATE)]
            late = sum(1 for r in records if r.outcome == Outcome.LATE)
            dropped = sum(1 for r in records if r.outcome == Outcome.DROPPED)
            self.stdout.write(f'{which}: task B {len(records)} job(s), {late} late, {dropped} dropped')
            frames.append(histogram_frame(histogram(times, bucket_ms), which))
        return pd.concat(frames, ignore_index=True)
