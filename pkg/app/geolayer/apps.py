from django.apps import AppConfig


class GeolayerConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'geolayer'
    verbose_name = 'GeoLayer library'
