import logging

from ninja import Router
from ninja_jwt.authentication import JWTAuth

from harness.schemas import BoundsReport, BoundsRequest, ErrorDetail
from harness.service import summarize_bounds

router = Router(tags=["oracle"])
logger = logging.getLogger(__name__)


@router.post("/bounds/", response={200: BoundsReport, 400: ErrorDetail}, auth=JWTAuth(),
             summary="Sample-Complexity Bounds",
             description="""
             Characteristic time T*, oracle weights w* and the finite-delta lower bounds (generic, min-draws and,
             below the threshold, boosted) of a bandit instance.

             **On Failure:** Returns `400 Bad Request` when the instance is invalid or its minimum equals the threshold.
             """
             )
def bounds(request, data: BoundsRequest):
    try:
        instance = data.instance.build()
        return 200, summarize_bounds(instance, data.delta)
    except ValueError as e:
        logger.warning(f"Bounds request rejected: {e}")
        return 400, {"detail": str(e)}
