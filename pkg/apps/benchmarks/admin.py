from django.contrib import admin
from .models import BenchmarkRun, PolicyResult

class PolicyResultInline(admin.TabularInline):
    model = PolicyResult
    extra = 0
    readonly_fields = ['trace_fingerprint']
    fields = ['variant', 'policy', 'seed', 'mean_ms', 'p99_ms', 'miss_rate', 'drop_rate', 'qoe', 'qoe_lambda', 'sync_events', 'trace_fingerprint']

@admin.register(BenchmarkRun)
class BenchmarkRunAdmin(admin.ModelAdmin):
    list_display = ['run_id', 'scenario', 'policies', 'seeds', 'status', 'created_at']
    list_filter = ['status', 'scenario', 'created_at']
    search_fields = ['run_id', 'scenario', 'notes']
    readonly_fields = ['created_at']
    inlines = [PolicyResultInline]

    fieldsets = (
        ('Basic Information', {
            'fields': ('run_id', 'scenario', 'status')
        }),
        ('Sweep', {
            'fields': ('policies', 'seeds', 'output_dir', 'created_at')
        }),
        ('Additional Information', {
            'fields': ('notes',),
            'classes': ('collapse',)
        }),
    )

@admin.register(PolicyResult)
class PolicyResultAdmin(admin.ModelAdmin):
    list_display = ['run', 'variant', 'policy', 'seed', 'mean_ms', 'miss_rate', 'drop_rate', 'qoe', 'qoe_lambda']
    list_filter = ['policy', 'run__scenario']
    search_fields = ['run__run_id', 'variant']
    raw_id_fields = ['run']
