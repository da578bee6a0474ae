# Generated by Django 5.1.2

from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='ScenarioRun',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('name', models.CharField(max_length=100)),
                ('strategy', models.CharField(max_length=30)),
                ('seed', models.PositiveIntegerField(default=0)),
                ('config_path', models.CharField(max_length=500)),
                ('output_dir', models.CharField(blank=True, max_length=500)),
                ('status', models.CharField(choices=[('running', 'Running'), ('succeeded', 'Succeeded'), ('failed', 'Failed')], default='running', max_length=20)),
                ('storage_cost', models.FloatField(blank=True, null=True)),
                ('read_cost', models.FloatField(blank=True, null=True)),
                ('write_cost', models.FloatField(blank=True, null=True)),
                ('association_cost', models.FloatField(blank=True, null=True)),
                ('total_cost', models.FloatField(blank=True, null=True)),
                ('mean_latency_ms', models.FloatField(blank=True, null=True)),
                ('latency_violations', models.PositiveIntegerField(blank=True, null=True)),
                ('wan_bytes', models.BigIntegerField(blank=True, null=True)),
                ('migration_ratio', models.FloatField(blank=True, null=True)),
                ('evicted_replicas', models.PositiveIntegerField(blank=True, null=True)),
                ('error', models.TextField(blank=True)),
                ('created_at', models.DateTimeField(auto_now_add=True)),
                ('finished_at', models.DateTimeField(blank=True, null=True)),
            ],
            options={
                'db_table': 'scenario_runs',
                'ordering': ['-created_at', '-id'],
            },
        ),
    ]
