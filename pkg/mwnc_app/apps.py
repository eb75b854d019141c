from django.apps import AppConfig


class MwncAppConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'mwnc_app'
    verbose_name = 'Moving window network coding'
