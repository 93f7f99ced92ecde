from django.apps import AppConfig


class ExpfamConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'expfam'
