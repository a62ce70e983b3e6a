# Generated by Django 4.2.25 on 2026-10-17 09:12

import django.db.models.deletion
from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='BenchmarkRun',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('run_id', models.CharField(max_length=100, unique=True)),
                ('scenario', models.CharField(max_length=255)),
                ('policies', models.CharField(help_text='Comma-separated policy names', max_length=100)),
                ('seeds', models.CharField(help_text='Comma-separated seeds', max_length=255)),
                ('output_dir', models.CharField(max_length=500)),
                ('status', models.CharField(choices=[('pending', 'Pending'), ('running', 'Running'), ('completed', 'Completed'), ('failed', 'Failed')], default='pending', max_length=20)),
                ('created_at', models.DateTimeField(auto_now_add=True)),
                ('notes', models.TextField(blank=True, null=True)),
            ],
            options={
                'ordering': ['-created_at'],
                'indexes': [models.Index(fields=['scenario', 'created_at'], name='bench_run_scenario_idx'), models.Index(fields=['status', 'created_at'], name='bench_run_status_idx')],
            },
        ),
        migrations.CreateModel(
            name='PolicyResult',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('policy', models.CharField(max_length=20)),
                ('seed', models.IntegerField(default=0)),
                ('variant', models.CharField(blank=True, default='', max_length=100)),
                ('mean_ms', models.FloatField(blank=True, null=True)),
                ('p50_ms', models.FloatField(blank=True, null=True)),
                ('p95_ms', models.FloatField(blank=True, null=True)),
                ('p99_ms', models.FloatField(blank=True, null=True)),
                ('max_ms', models.FloatField(blank=True, null=True)),
                ('miss_rate', models.FloatField(default=0)),
                ('drop_rate', models.FloatField(default=0)),
                ('qoe_mean', models.FloatField(blank=True, null=True)),
                ('sync_events', models.IntegerField(default=0)),
                ('trace_path', models.CharField(blank=True, max_length=500)),
                ('trace_fingerprint', models.CharField(blank=True, max_length=64)),
                ('report', models.JSONField(default=dict)),
                ('run', models.ForeignKey(on_delete=django.db.models.deletion.CASCADE, related_name='results', to='benchmarks.benchmarkrun')),
            ],
            options={
                'ordering': ['variant', 'policy', 'seed'],
                'unique_together': {('run', 'variant', 'policy', 'seed')},
            },
        ),
    ]
