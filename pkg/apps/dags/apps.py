from django.apps import AppConfig


class DagsConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'apps.dags'
    verbose_name = 'DAG tasks'
