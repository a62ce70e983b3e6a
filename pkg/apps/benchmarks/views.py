import logging

from django.contrib.auth.decorators import login_required
from django.http import JsonResponse
from django.views.decorators.http import require_GET

from apps.utils.paginator import CustomPaginator
from .models import BenchmarkRun

logger = logging.getLogger('benchmarks')

RUN_FIELDS = ('run_id', 'scenario', 'policies', 'seeds', 'status', 'output_dir', 'created_at')
RESULT_FIELDS = (
    'variant', 'policy', 'seed', 'mean_ms', 'p50_ms', 'p95_ms', 'p99_ms', 'max_ms',
    'miss_rate', 'drop_rate', 'qoe', 'qoe_lambda', 'sync_events', 'trace_path', 'trace_fingerprint',
)


@login_required
@require_GET
def run_list(request):
    """Stored benchmark runs, newest first, optionally filtered by scenario or status"""
    try:
        runs = BenchmarkRun.objects.all()

        scenario_filter = request.GET.get('scenario')
        status_filter = request.GET.get('status')
        if scenario_filter:
            runs = runs.filter(scenario=scenario_filter)
        if status_filter:
            runs = runs.filter(status=status_filter)

        paginator = CustomPaginator(
            runs,
            page=request.GET.get('page', 1),
            per_page=request.GET.get('per_page', 20),
            fields=RUN_FIELDS,
        )
        return JsonResponse(paginator.get_paginated_response())

    except Exception as e:
        logger.error(f"Listing benchmark runs failed: {e}", exc_info=True)
        return JsonResponse({'error': str(e)}, status=400)


@login_required
@require_GET
def run_detail(request, run_id):
    """One run with every per-(variant, policy, seed) result and its full report"""
    try:
        bench_run = BenchmarkRun.objects.get(run_id=run_id)
    except BenchmarkRun.DoesNotExist:
        return JsonResponse({'error': f'Benchmark run {run_id} not found'}, status=404)

    try:
        results = []
        for result in bench_run.results.all():
            row = {field: getattr(result, field) for field in RESULT_FIELDS}
            row['report'] = result.report
            results.append(row)

        return JsonResponse({
            'run_id': bench_run.run_id,
            'scenario': bench_run.scenario,
            'policies': bench_run.policy_list,
            'seeds': [int(s) for s in bench_run.seeds.split(',') if s],
            'status': bench_run.status,
            'output_dir': bench_run.output_dir,
            'created_at': bench_run.created_at.isoformat(),
            'notes': bench_run.notes or '',
            'results': results,
        })

    except Exception as e:
        logger.error(f"Loading benchmark run {run_id} failed: {e}", exc_info=True)
        return JsonResponse({'error': str(e)}, status=400)
