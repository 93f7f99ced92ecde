from django.db import models
from django.utils.translation import gettext_lazy as _


class ExperimentRun(models.Model):
    class ProcessingStatus(models.TextChoices):
        PENDING = 'PENDING', _('Pending')
        PROCESSING = 'PROCESSING', _('Processing')
        COMPLETED = 'COMPLETED', _('Completed')
        FAILED = 'FAILED', _('Failed')

    name = models.CharField(max_length=255, blank=True, default="")
    config = models.JSONField(help_text="The submitted experiment config, as validated JSON.")
    processing_status = models.CharField(max_length=20, choices=ProcessingStatus.choices,
                                         default=ProcessingStatus.PENDING, db_index=True)
    processing_error = models.TextField(blank=True, null=True)
    async_task_id = models.CharField(max_length=255, blank=True, null=True, db_index=True)
    summary = models.JSONField(blank=True, null=True)
    created_at = models.DateTimeField(auto_now_add=True)
    updated_at = models.DateTimeField(auto_now=True)

    class Meta:
        ordering = ['-created_at']
        verbose_name = "Experiment Run"
        verbose_name_plural = "Experiment Runs"

    def __str__(self):
        name = (self.name[:30] + '...') if len(self.name) > 30 else self.name
        return f"Experiment '{name or self.pk}' (Status: {self.get_processing_status_display()})"
