from pathlib import Path

# Bundled scenario files, resolved relative to the repository root
SCENARIO_DIR = Path(__file__).resolve().parent.parent / "data" / "scenarios"
SCENARIO_SUFFIXES = (".yaml", ".yml")

DEFAULT_OUTPUT_DIR = "runs"
ENV_FILE = "./dkf.env"

ALGORITHMS = ("ckf", "a0", "a1", "a2")

# Spectral classification
UNIT_EIGENVALUE_TOL = 1e-9

# Covariance handling
CHOLESKY_PIVOT_TOL = 1e-12
# smallest eigenvalue allowed for an assembled S^c, relative to max(1, |S^c|)
PSD_TOL = 1e-9

# Minimum-time detection
SIGMA_THRESHOLD_NOISELESS = 1e-8
SIGMA_THRESHOLD_NOISY = 1e-4
KERNEL_NORMALIZATION_TOL = 1e-12
FINAL_VALUE_DENOMINATOR_TOL = 1e-12
ROOT_AT_ONE_TOL = 1e-9

# Exact detection
EXACT_FIELD_PRIME = 2 ** 61 - 1
FINAL_VALUE_START_PRECISION = 128
FINAL_VALUE_MAX_PRECISION = 1 << 15
FINAL_VALUE_AGREEMENT_BITS = 64

# Robust detection
LEMMA_CHECK_TOL = 1e-8
RHO_NOISE_FACTOR = 10.0

# Harness defaults
DEFAULT_PRIOR_SCALE = 10.0
DEFAULT_A0_TOLERANCE = 1e-3
DEFAULT_THEOREM_RHO = 1e-9
THEOREM_SLACK = 1e-10
STEP_SIZE_SAFETY = 0.9
SETTLING_TOLERANCE = 1e-6
