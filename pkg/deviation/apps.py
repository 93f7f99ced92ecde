from django.apps import AppConfig


class DeviationConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'deviation'
