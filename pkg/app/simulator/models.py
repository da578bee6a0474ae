from django.db import models


class ScenarioRun(models.Model):
    """One execution of a scenario file with its headline results"""
    STATUS_CHOICES = [
        ('running', 'Running'),
        ('succeeded', 'Succeeded'),
        ('failed', 'Failed'),
    ]

    name = models.CharField(max_length=100)
    strategy = models.CharField(max_length=30)
    seed = models.PositiveIntegerField(default=0)
    config_path = models.CharField(max_length=500)
    output_dir = models.CharField(max_length=500, blank=True)
    status = models.CharField(max_length=20, choices=STATUS_CHOICES, default='running')

    storage_cost = models.FloatField(null=True, blank=True)
    read_cost = models.FloatField(null=True, blank=True)
    write_cost = models.FloatField(null=True, blank=True)
    association_cost = models.FloatField(null=True, blank=True)
    total_cost = models.FloatField(null=True, blank=True)
    mean_latency_ms = models.FloatField(null=True, blank=True)
    latency_violations = models.PositiveIntegerField(null=True, blank=True)
    wan_bytes = models.BigIntegerField(null=True, blank=True)
    migration_ratio = models.FloatField(null=True, blank=True)
    evicted_replicas = models.PositiveIntegerField(null=True, blank=True)

    error = models.TextField(blank=True)
    created_at = models.DateTimeField(auto_now_add=True)
    finished_at = models.DateTimeField(null=True, blank=True)

    class Meta:
        db_table = 'scenario_runs'
        ordering = ['-created_at', '-id']

    def __str__(self):
        return f"{self.name} ({self.strategy}, seed {self.seed})"

    def costs(self):
        return {
            'C_S': self.storage_cost,
            'C_R': self.read_cost,
            'C_W': self.write_cost,
            'C_A': self.association_cost,
            'total': self.total_cost,
        }
