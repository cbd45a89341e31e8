import logging

from fastapi import FastAPI, HTTPException, Query, status
from fastapi.middleware.cors import CORSMiddleware

from app import __version__
from app.core.config import CORS_ORIGINS, LOG_LEVEL, QUADRATURE_NODES
from app.core.errors import GeometryError
from app.models import ExperimentConfig, LKCRequest
from app.services.atlas import parse_manifold
from app.services.curvature import pullback_lkc, reference_lkc
from app.services.embedding import realize
from app.services.gkf import DEFAULT_J_MAX, gkf_table, gmf_point
from app.services.gp_model import build_model
from app.services.harness import run_experiment
from app.services.outputs import json_safe
from app.services.seeding import replicate_seed

logging.basicConfig(level=LOG_LEVEL.upper())
logger = logging.getLogger("API")

app = FastAPI(title="gauss-embed", version=__version__)

app.add_middleware(
    CORSMiddleware,
    allow_origins=CORS_ORIGINS,
    allow_credentials=True,
    allow_methods=["GET", "POST", "OPTIONS"],
    allow_headers=["*"],
)


def bad_request(exc: GeometryError) -> HTTPException:
    logger.warning(f"Rejected request: {exc}")
    return HTTPException(status_code=status.HTTP_400_BAD_REQUEST, detail=str(exc))


@app.get("/gmf")
async def get_gmf(
    n: int = Query(1, ge=1, description="Codimension of the point."),
    jmax: int = Query(DEFAULT_J_MAX, ge=0, le=64),
):
    """Gaussian Minkowski functionals of {0} in R^n."""
    table = gmf_point(n, jmax)
    return {"n": n, "values": list(table.values)}


@app.get("/gkf-table")
def get_gkf_table(
    manifold: str = Query("sphere:1"),
    codim: int = Query(1, ge=1),
    nodes: int = Query(QUADRATURE_NODES, ge=4, le=256),
):
    """Expected LKCs of the preimage of a codimension-n subspace."""
    try:
        atlas = parse_manifold(manifold, nodes)
        rows = gkf_table(atlas, codim)
    except GeometryError as exc:
        raise bad_request(exc)
    return {"manifold": atlas.name, "codim": codim, "rows": [{"i": i, "expected_lkc": v} for i, v in rows]}


@app.post("/lkc")
def post_lkc(request: LKCRequest):
    """LKCs of the induced metric, or of one pullback realization."""
    try:
        atlas = parse_manifold(request.manifold, request.nodes)
        if request.metric == "reference":
            values = reference_lkc(atlas)
        else:
            model = build_model(atlas, request.waves, request.spectrum, request.seed)
            e = realize(model, request.k, replicate_seed(request.seed, request.k, 0))
            values = pullback_lkc(e, atlas)
    except GeometryError as exc:
        raise bad_request(exc)
    return {"manifold": atlas.name, "metric": request.metric, "lkc": values.to_list()}


@app.post("/experiments")
def post_experiment(cfg: ExperimentConfig):
    """Run an experiment synchronously and return its summary; no files are written."""
    try:
        result = run_experiment(cfg)
    except GeometryError as exc:
        raise bad_request(exc)
    return json_safe(result.summary)
