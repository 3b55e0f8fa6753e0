from django.apps import AppConfig


class HeatkernelsConfig(AppConfig):
    default_auto_field = "django.db.models.BigAutoField"
    name = "heatkernels"
    verbose_name = "Heat kernel certification"
