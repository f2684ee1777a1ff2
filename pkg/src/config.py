# src/config.py

# Configuration File Settings
CONFIG_SCHEMA_VERSION = 1
OUTPUT_DIR_ENV_VAR = 'SPRPT_OUTPUT_DIR'
DEFAULT_OUTPUT_DIR = 'results'
DEFAULT_OUTPUT_PREFIX = 'run'

# Length Bins
# Boundaries 0..512 split into 10 equal bins of 51.2 tokens each.
DEFAULT_BIN_LOWER = 0.0
DEFAULT_BIN_UPPER = 512.0
DEFAULT_BIN_COUNT = 10

# Simulation Settings
# 'continuous': preemptive single-server queue, real-valued sizes.
# 'batch': iteration-level token batching with a memory budget.
DEFAULT_SIM_MODE = 'continuous'
DEFAULT_WARMUP_FRACTION = 0.2
DEFAULT_REPLICATIONS = 1
DEFAULT_SEED = 12345

# Preemption Cost Options
# 'hold': a preempted job keeps its memory resident.
# 'discard': a preempted job frees its memory and recomputes it later.
DEFAULT_PREEMPTION_COST_MODE = 'hold'
DEFAULT_RECOMPUTE_RATE = 8  # tokens rebuilt per iteration

# Policy Settings
DEFAULT_POLICY = 'SPRPT_LP'
DEFAULT_PREEMPTION_FRACTION = 1.0  # C
DEFAULT_PREDICTION_SOURCE = 'static'
DEFAULT_BELIEF_ESTIMATE = 'argmax_midpoint'  # or 'expected'

# Synthetic Observation Model
DEFAULT_CONCENTRATION = 2.0
DEFAULT_MISLABEL_RATE = 0.2
DEFAULT_TRAJECTORY_MEMORY = 0.5
MIN_PREDICTION = 1e-6

# Quadrature Settings
DEFAULT_QUADRATURE_SCHEME = 'adaptive'
DEFAULT_REL_TOL = 1e-6
DEFAULT_ABS_TOL = 1e-10
DEFAULT_TAIL_MASS = 1e-8
DEFAULT_GAUSS_LEGENDRE_NODES = 16
DEFAULT_TABLE_POINTS = 600

# Sweep / Validation Settings
DEFAULT_CONFIDENCE_LEVEL = 0.95
DEFAULT_VALIDATION_TOLERANCE = 0.05
DEFAULT_RECYCLED_THRESHOLD = 'tagged'  # 'tagged' or 'own'
DEFAULT_SWEEP_WORKERS = 1

# Refinement Ensemble Settings
DEFAULT_REFINE_TRAJECTORIES = 1000
DEFAULT_REFINE_SIZE_SCALE = 100.0

# CLI Exit Codes
EXIT_OK = 0
EXIT_CONFIG_ERROR = 1
EXIT_TOLERANCE_FAILURE = 2
EXIT_RUNTIME_ERROR = 3
