"""Shared constants, defaults and scenario presets."""

from __future__ import annotations

import math

# likelihood
LOG_LIK_FLOOR = -1e300
SUM_R_TOLERANCE = 1e-12
LIKELIHOOD_RESIDUAL = "residual"
LIKELIHOOD_SQUARED_ERROR = "squared_error"
LIKELIHOOD_FORMS = (LIKELIHOOD_RESIDUAL, LIKELIHOOD_SQUARED_ERROR)

# prior
DEFAULT_PRIOR_MEAN = 0.0
DEFAULT_PRIOR_STD = 2.0

# synthetic grids
DEFAULT_M = 100
DEFAULT_FREQ_MIN_HZ = 1e-3
DEFAULT_SPAN_DECADES = 8.0

# gaussian process
JITTER_START = 1e-10
JITTER_FACTOR = 10.0
JITTER_MAX = 1e-4
GP_RESTARTS = 3
GP_MAX_FIT_POINTS = 400
LENGTHSCALE_BOUNDS = (1e-3, 1e3)
OUTPUT_SCALE_BOUNDS = (1e-8, 1e4)
PREDICT_CHUNK = 4096

# warping
RADICAND_TOLERANCE = 1e-15

# proposal, supersampling and recombination
ALL_PAIRS_LIMIT = 64
N_HEUR_CAP = 2048
N_SUPER = 10_000
DEFENSIVE_WEIGHT = 0.1
MIN_SUPER_ESS = 2.0

# basq engine
BATCH_SIZE = 100
MAX_ITERS = 25
CONV_TOL = 0.5
CONV_WINDOW = 3

# criteria
ELPD_SAMPLES = 1000
MIN_POSTERIOR_ESS = 10.0
ELPD_MIN_ESS = 100.0
POLISH_MAX_ITER = 400

# elliptical slice sampling
BURN_IN_FRACTION = 0.1
MAX_SHRINK = 100

# identifiability
N_IS = 1_000_000
N_NOISE_SAMPLES = 256
NOISY_JS_GRID = 4001
IDENTITY_BOUND = 50.0
IDENTITY_SHIFTS = (0.5, 1.0, 3.0)
IDENTITY_TOLERANCE = 1e-8

# evidence-ratio annotation, natural-log thresholds
JEFFREYS_SCALE = (
    (1.0, "not worth more than a bare mention"),
    (2.5, "substantial"),
    (5.0, "strong"),
    (math.inf, "decisive"),
)

# scenario presets: peak offsets are in ln(omega) units relative to the grid centre
PRESETS = {
    "easy": {
        "n_pairs": 2,
        "r_total": 0.0,
        "r": (0.3, 0.5),
        "peak_offsets": (-4.55, 4.55),
        "log_sigma2": -9.97,
    },
    "hard": {
        "n_pairs": 3,
        "r_total": 0.0,
        "r": (0.25, 0.3, 0.2),
        "peak_offsets": (-2.0, 1.0, 1.36),
        "log_sigma2": -1.6,
    },
}

# sensitivity sweep ranges
SWEEP_M = (25, 400)
SWEEP_R_TOTAL = (-2.0, 2.0)
SWEEP_R_PRIME = (-2.0, 2.0)
SWEEP_TAU_STD = (-2.0, 2.0)
SWEEP_LOG_SIGMA2 = (-10.0, -1.0)
SWEEP_SECOND_PAIR = {"r_prime": 1.0, "tau_std": 0.5}

# ablation: (log, sqrt, scaling)
ABLATION_CONFIGS = (
    (True, False, False),
    (False, True, False),
    (False, False, True),
    (True, False, True),
    (False, True, True),
    (True, True, True),
)

# CLI exit codes
EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4
