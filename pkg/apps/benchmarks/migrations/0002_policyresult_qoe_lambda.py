# Generated by Django 4.2.25 on 2026-10-17 14:03

from django.db import migrations, models


class Migration(migrations.Migration):

    dependencies = [
        ('benchmarks', '0001_initial'),
    ]

    operations = [
        migrations.RenameField(
            model_name='policyresult',
            old_name='qoe_mean',
            new_name='qoe',
        ),
        migrations.AddField(
            model_name='policyresult',
            name='qoe_lambda',
            field=models.FloatField(default=1.0),
        ),
    ]
