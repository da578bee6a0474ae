from django.contrib import admin
from .models import ScenarioRun


@admin.register(ScenarioRun)
class ScenarioRunAdmin(admin.ModelAdmin):
    list_display = ['id', 'name', 'strategy', 'seed', 'status', 'total_cost', 'mean_latency_ms', 'created_at']
    list_filter = ['strategy', 'status', 'created_at']
    search_fields = ['name', 'config_path']
    readonly_fields = ['created_at', 'finished_at']
    fieldsets = [
        ('Scenario', {
            'fields': ['name', 'strategy', 'seed', 'config_path', 'output_dir', 'status', 'error']
        }),
        ('Costs', {
            'fields': ['storage_cost', 'read_cost', 'write_cost', 'association_cost', 'total_cost']
        }),
        ('Performance', {
            'fields': ['mean_latency_ms', 'latency_violations', 'wan_bytes', 'migration_ratio', 'evicted_replicas']
        }),
        ('Metadata', {
            'fields': ['created_at', 'finished_at']
        }),
    ]
