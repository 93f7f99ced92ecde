import logging
from typing import Optional

from celery import shared_task
from django.db import transaction
from django.utils import timezone

from .models import ExperimentRun
from .service import load_config, run_monte_carlo

logger = logging.getLogger(__name__)


def _mark_failed(run_id: int, task_id: str, message: str) -> None:
    try:
        with transaction.atomic():
            run = ExperimentRun.objects.select_for_update().get(id=run_id)
            if run.processing_status == ExperimentRun.ProcessingStatus.PROCESSING and run.async_task_id == task_id:
                run.processing_status = ExperimentRun.ProcessingStatus.FAILED
                run.processing_error = message[:1024]
                run.updated_at = timezone.now()
                run.save(update_fields=['processing_status', 'processing_error', 'updated_at'])
                logger.info(f"Task [{task_id}]: Marked ExperimentRun {run_id} as FAILED.")
            else:
                logger.warning(f"Task [{task_id}]: ExperimentRun {run_id} status was '{run.processing_status}' (Task ID: {run.async_task_id}) when the failure occurred. Not marking FAILED by this task.")
    except Exception as update_err:
        logger.error(f"Task [{task_id}]: CRITICAL - Failed to mark ExperimentRun {run_id} as FAILED: {update_err}", exc_info=True)


@shared_task(bind=True, max_retries=3, default_retry_delay=60, name='harness.tasks.run_experiment_task')
def run_experiment_task(self, run_id: int):
    """
    Celery task running a submitted experiment:
    1. Fetches the ExperimentRun and sets it to PROCESSING.
    2. Revalidates the stored config.
    3. Runs every replication serially in this worker.
    4. Stores the JSON summary and marks the run COMPLETED, or FAILED with the error.
    """
    task_id = self.request.id
    logger.info(f"Celery Task [{task_id}]: Starting ExperimentRun ID: {run_id}.")

    run: Optional[ExperimentRun] = None
    try:
        with transaction.atomic():
            run = ExperimentRun.objects.select_for_update().get(id=run_id)
            if run.processing_status == ExperimentRun.ProcessingStatus.COMPLETED:
                logger.warning(f"Task [{task_id}]: ExperimentRun {run_id} is already COMPLETED. Skipping.")
                return {"status": "skipped", "reason": "Experiment already completed"}
            if run.processing_status == ExperimentRun.ProcessingStatus.FAILED:
                logger.warning(f"Task [{task_id}]: ExperimentRun {run_id} previously FAILED. Skipping.")
                return {"status": "skipped", "reason": "Previously failed"}
            if run.processing_status == ExperimentRun.ProcessingStatus.PROCESSING and task_id != run.async_task_id:
                logger.warning(f"Task [{task_id}]: ExperimentRun {run_id} is already PROCESSING by task ({run.async_task_id}). Skipping.")
                return {"status": "skipped", "reason": "Already processing by another task"}
            run.processing_status = ExperimentRun.ProcessingStatus.PROCESSING
            run.processing_error = None
            run.async_task_id = task_id
            run.updated_at = timezone.now()
            run.save(update_fields=['processing_status', 'processing_error', 'async_task_id', 'updated_at'])
            logger.info(f"Task [{task_id}]: ExperimentRun {run_id} processing_status set to PROCESSING.")
    except ExperimentRun.DoesNotExist:
        logger.error(f"Task [{task_id}]: ExperimentRun with id {run_id} not found.")
        return {"status": "error", "reason": "Experiment run not found"}

    try:
        config = load_config(run.config)
        summary = run_monte_carlo(config, n_jobs=1)

        with transaction.atomic():
            run_final = ExperimentRun.objects.select_for_update().get(id=run_id)
            if not (run_final.processing_status == ExperimentRun.ProcessingStatus.PROCESSING and run_final.async_task_id == task_id):
                logger.warning(f"Task [{task_id}]: ExperimentRun {run_id} status changed to '{run_final.processing_status}' mid-run. Aborting result save.")
                return {"status": "aborted", "reason": "Experiment run status changed mid-task."}
            run_final.summary = summary.model_dump(mode='json')
            run_final.processing_status = ExperimentRun.ProcessingStatus.COMPLETED
            run_final.processing_error = None
            run_final.updated_at = timezone.now()
            run_final.save(update_fields=['summary', 'processing_status', 'processing_error', 'updated_at'])
            logger.info(f"Task [{task_id}]: ExperimentRun {run_id} COMPLETED with {len(summary.records)} records.")
        return {"status": "success", "run_id": run_id, "records": len(summary.records)}

    except (ConnectionError, OSError) as e:
        if self.request.retries >= self.max_retries:
            logger.error(f"Task [{task_id}]: Giving up on ExperimentRun {run_id} after {self.request.retries} retries: {e}", exc_info=True)
            _mark_failed(run_id, task_id, f"Experiment failed: {type(e).__name__}: {e}")
            raise
        logger.warning(f"Task [{task_id}]: Potentially retryable error for ExperimentRun {run_id}: {type(e).__name__}. Retrying...")
        raise self.retry(exc=e)

    except Exception as e:
        logger.error(f"Task [{task_id}]: Error while running ExperimentRun {run_id}: {type(e).__name__} - {e}", exc_info=True)
        _mark_failed(run_id, task_id, f"Experiment failed: {type(e).__name__}: {e}")
        return {"status": "error", "reason": f"Non-retryable error: {e}"}
