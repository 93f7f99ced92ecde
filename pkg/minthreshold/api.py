from ninja_extra import NinjaExtraAPI
from ninja_jwt.controller import NinjaJWTDefaultController

from harness.api import router as experiments_router
from oracle.api import router as oracle_router

api = NinjaExtraAPI(title="minthreshold")

api.add_router("/experiments/", experiments_router)
api.add_router("/oracle/", oracle_router)

api.register_controllers(NinjaJWTDefaultController)


@api.get("/health", summary="Health Check", description="Simple endpoint to check if the API is running.")
def health(request):
    return {"status": "ok"}
