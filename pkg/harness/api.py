import logging

from django.db import transaction
from django.shortcuts import get_object_or_404
from ninja import Router
from ninja_jwt.authentication import JWTAuth

from .exceptions import ConfigError
from .models import ExperimentRun
from .schemas import ErrorDetail, ExperimentRunIn, ExperimentRunStatusOut, ExperimentSummary
from .service import check_rule_grid
from .tasks import run_experiment_task

router = Router(tags=["experiments"])
logger = logging.getLogger(__name__)


@router.post("/", response={202: ExperimentRunStatusOut, 400: ErrorDetail}, auth=JWTAuth(),
             summary="Submit Experiment",
             description="""
             Stores an experiment config and queues its Monte Carlo run.

             **Workflow:**
             1. Validates the `ExperimentConfig` (instance spec, rule grid, deltas, replications).
             2. Checks that every (rule, delta) cell can run, e.g. that the GLRT threshold is defined for K arms at that delta.
             3. Creates an `ExperimentRun` with status `PENDING` and **asynchronously queues** `run_experiment_task` via Celery.

             **On Success:** Returns `202 Accepted` with the run status. Poll `/{run_id}/` and fetch `/{run_id}/summary/` once `COMPLETED`.
             **On Failure:** Returns `400 Bad Request` if a rule cannot run or the task cannot be queued.
             """
             )
def submit_experiment(request, data: ExperimentRunIn):
    config = data.config
    try:
        check_rule_grid(config)
    except ConfigError as e:
        return 400, {"detail": str(e)}

    run = None
    try:
        with transaction.atomic():
            run = ExperimentRun.objects.create(name=config.name, config=config.model_dump(mode='json'),
                                               processing_status=ExperimentRun.ProcessingStatus.PENDING)
            logger.info(f"Created ExperimentRun {run.id} ('{config.name}'). Queueing experiment task.")
            task = run_experiment_task.delay(run.id)
            run.async_task_id = task.id
            run.save(update_fields=['async_task_id'])
            logger.info(f"ExperimentRun {run.id} queued with task ID: {task.id}")
        return 202, run
    except Exception as e:
        logger.error(f"Error creating ExperimentRun or queueing its task: {e}", exc_info=True)
        return 400, {"detail": f"Failed to create experiment run or queue its task: {e}"}


@router.get("/{run_id}/", response={200: ExperimentRunStatusOut, 404: ErrorDetail}, auth=JWTAuth(),
            summary="Get Experiment Status",
            description="""
            Current processing status of an experiment run (`PENDING`, `PROCESSING`, `COMPLETED`, `FAILED`),
            with `processing_error` set when it failed.
            """
            )
def get_experiment_status(request, run_id: int):
    run = get_object_or_404(ExperimentRun.objects.defer('config', 'summary'), id=run_id)
    return 200, run


@router.get("/{run_id}/summary/", response={200: ExperimentSummary, 404: ErrorDetail, 503: ErrorDetail}, auth=JWTAuth(),
            summary="Get Experiment Summary",
            description="""
            One record per (rule, delta) with mean stopping time, its standard error, error and inconclusive rates,
            mean per-arm sampling proportions and mean witness-subset size. The config is echoed for provenance.

            **On Failure:**
                - Returns `503 Service Unavailable` while the run is still `PENDING` or `PROCESSING`.
                - Returns `404 Not Found` if the run does not exist or has `FAILED`.
            """
            )
def get_experiment_summary(request, run_id: int):
    try:
        run = ExperimentRun.objects.get(id=run_id)
    except ExperimentRun.DoesNotExist:
        return 404, {"detail": f"Experiment run with id {run_id} not found"}

    if run.processing_status in (ExperimentRun.ProcessingStatus.PENDING, ExperimentRun.ProcessingStatus.PROCESSING):
        return 503, {"detail": f"Experiment run {run_id} is still {run.get_processing_status_display().lower()}."}
    if run.processing_status == ExperimentRun.ProcessingStatus.FAILED or run.summary is None:
        return 404, {"detail": f"Experiment run {run_id} has no summary: {run.processing_error or 'run failed'}"}
    return 200, run.summary
