from django.contrib import admin

from .models import ExperimentRun


@admin.register(ExperimentRun)
class ExperimentRunAdmin(admin.ModelAdmin):
    list_display = (
        'name',
        'processing_status',
        'async_task_id',
        'created_at',
        'updated_at',
    )
    list_filter = (
        'processing_status',
        'created_at',
    )
    search_fields = (
        'name',
        'async_task_id',
    )
    readonly_fields = (
        'created_at',
        'updated_at',
        'processing_error',
        'async_task_id',
        'summary',
    )
    fieldsets = (
        (None, {'fields': ('name', 'config')}),
        ('Processing Details', {'fields': ('processing_status', 'processing_error', 'async_task_id'), 'classes': ('collapse',)}),
        ('Results', {'fields': ('summary',)}),
        ('Timestamps', {'fields': ('created_at', 'updated_at'), 'classes': ('collapse',)}),
    )
