import os
from dotenv import load_dotenv

# .env in the working directory, if any, before reading GEOMC_* settings
load_dotenv()

# Experiment defaults (overridable from the environment or a .env file)
ROOT_SEED = int(os.getenv("GEOMC_ROOT_SEED", "20240101"))
NUM_WAVES = int(os.getenv("GEOMC_WAVES", "64"))
SPECTRUM = os.getenv("GEOMC_SPECTRUM", "uniform-shell")
QUADRATURE_NODES = int(os.getenv("GEOMC_NODES", "48"))
GRID_PER_AXIS = int(os.getenv("GEOMC_GRID", "64"))
THREADS = int(os.getenv("GEOMC_THREADS", "1"))
OUT_DIR = os.getenv("GEOMC_OUT_DIR", "results")
LOG_LEVEL = os.getenv("GEOMC_LOG_LEVEL", "INFO")

# Pullback LKC quadrature is doubled until successive results agree to
# LKC_REFINE_TOL (relative to max(1, |L_j|)) or reach LKC_MAX_NODES per axis
LKC_REFINE_TOL = float(os.getenv("GEOMC_LKC_TOL", "1e-6"))
LKC_MAX_NODES = int(os.getenv("GEOMC_LKC_MAX_NODES", "192"))

# Numerical thresholds
JACOBIAN_RANK_TOL = 1e-9
MOMENT_CONDITION_LIMIT = 1e6
METRIC_CONDITION_LIMIT = 1e12
QUADRATURE_TOL = 1e-8
ZERO_GRID_PER_AXIS = 128

# HTTP surface
CORS_ORIGINS = [
    origin.strip()
    for origin in os.getenv("GEOMC_CORS_ORIGINS", "http://localhost:5173,http://localhost").split(",")
    if origin.strip()
]
