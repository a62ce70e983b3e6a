from django.db import models


class BenchmarkRun(models.Model):
    STATUS_CHOICES = [
        ('pending', 'Pending'),
        ('running', 'Running'),
        ('completed', 'Completed'),
        ('failed', 'Failed'),
    ]

    run_id = models.CharField(max_length=100, unique=True)
    scenario = models.CharField(max_length=255)
    policies = models.CharField(max_length=100, help_text="Comma-separated policy names")
    seeds = models.CharField(max_length=255, help_text="Comma-separated seeds")
    output_dir = models.CharField(max_length=500)
    status = models.CharField(max_length=20, choices=STATUS_CHOICES, default='pending')
    created_at = models.DateTimeField(auto_now_add=True)
    notes = models.TextField(blank=True, null=True)

    class Meta:
        ordering = ['-created_at']
        indexes = [
            models.Index(fields=['scenario', 'created_at'], name='bench_run_scenario_idx'),
            models.Index(fields=['status', 'created_at'], name='bench_run_status_idx'),
        ]

    def __str__(self):
        return f"{self.run_id} - {self.scenario}"

    @property
    def policy_list(self):
        return [p for p in self.policies.split(',') if p]


class PolicyResult(models.Model):
    run = models.ForeignKey(BenchmarkRun, on_delete=models.CASCADE, related_name='results')
    policy = models.CharField(max_length=20)
    seed = models.IntegerField(default=0)
    variant = models.CharField(max_length=100, blank=True, default='')

    # Response times of completed jobs, ms
    mean_ms = models.FloatField(null=True, blank=True)
    p50_ms = models.FloatField(null=True, blank=True)
    p95_ms = models.FloatField(null=True, blank=True)
    p99_ms = models.FloatField(null=True, blank=True)
    max_ms = models.FloatField(null=True, blank=True)

    miss_rate = models.FloatField(default=0)
    drop_rate = models.FloatField(default=0)
    # QoE at the one lambda named by qoe_lambda; the full grid lives in report
    qoe = models.FloatField(null=True, blank=True)
    qoe_lambda = models.FloatField(default=1.0)
    sync_events = models.IntegerField(default=0)

    trace_path = models.CharField(max_length=500, blank=True)
    trace_fingerprint = models.CharField(max_length=64, blank=True)
    report = models.JSONField(default=dict)

    class Meta:
        ordering = ['variant', 'policy', 'seed']
        unique_together = ['run', 'variant', 'policy', 'seed']

    def __str__(self):
        label = f"{self.variant} " if self.variant else ""
        return f"{self.run.run_id} - {label}{self.policy} seed {self.seed}"

    @property
    def combined_rate(self):
        return self.miss_rate + self.drop_rate
