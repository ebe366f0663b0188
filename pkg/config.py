"""
Configuration file for Shrinkage Contrastive Clustering
"""

# Project
PROJECT_NAME = "shrinkcl"
THREADS_ENV_VAR = "SHRINKCL_THREADS"
RUN_DIR_ENV_VAR = "SHRINKCL_RUN_DIR"

# Preprocessing (count-data recipe)
DEFAULT_N_TOP_GENES = 2000

# Synthetic data
DEFAULT_SYNTH_CELLS = 1000
DEFAULT_SYNTH_GENES = 200
DEFAULT_SYNTH_CLUSTERS = 5
DEFAULT_CENTROID_SCALE = 1.0
DEFAULT_WITHIN_STD = 0.3
DEFAULT_DROPOUT_RATE = 0.3

# Augmentation
DEFAULT_MASK_FRACTION = 0.2
DEFAULT_NOISE_STD = 0.15  # post-standardization units

# Model architecture
DEFAULT_ENCODER_HIDDEN = [256]
DEFAULT_FEATURE_DIM = 64
DEFAULT_INSTANCE_HIDDEN = [64]
DEFAULT_INSTANCE_DIM = 32
DEFAULT_ACTIVATION = "relu"
DEFAULT_MOMENTUM = 0.99

# Losses
DEFAULT_TAU_I = 0.5
DEFAULT_TAU_C = 1.0
DEFAULT_ALPHA = 1.0
DEFAULT_BETA = 1.0
DEFAULT_ENTROPY_EPS = 1e-12
LOSS_TERMS = ("sure", "ins", "clu")

# K-means
DEFAULT_KMEANS_MAX_ITERS = 100
DEFAULT_KMEANS_TOL = 1e-6
DEFAULT_KMEANS_N_INIT = 10
DEFAULT_KMEANS_INIT = "kmeans++"

# Training
DEFAULT_EPOCHS = 400
DEFAULT_BATCH_SIZE = 256
DEFAULT_LEARNING_RATE = 1e-3
DEFAULT_ADAM_BETA1 = 0.9
DEFAULT_ADAM_BETA2 = 0.999
DEFAULT_ADAM_EPS = 1e-8
DEFAULT_EVAL_EVERY = 10
DEFAULT_SEED = 0

# Estimator bench
MIN_BENCH_TRIALS = 1000
DEFAULT_BENCH_TRIALS = 10000
DEFAULT_BENCH_DIMS = [3, 10, 50]
DEFAULT_BENCH_SIGMAS = [1.0]
DEFAULT_BENCH_TAUS = [0.5, 2.0, 100.0]
DEFAULT_BENCH_THETA_NORMS = [0.0, 1.0, 10.0]

# Robustness
DEFAULT_DOWNSAMPLE_RATES = [0.2, 0.5, 0.8]

# Output file names
OUTPUT_FILES = {
    "checkpoint": "checkpoint.json",
    "report": "report.json",
    "curves": "curves.csv",
    "assignments": "assignments.csv",
    "matrix": "matrix.csv",
    "labels": "labels.csv",
    "bench": "bench.json",
    "ablation": "ablation.csv",
    "ablation_summary": "ablation.json",
    "robustness": "robustness.csv",
    "noise_toggle": "noise_toggle.json",
}

# UI Configuration
PAGE_TITLE = "Shrinkage Contrastive Clustering"
PAGE_ICON = "🧬"
LAYOUT = "wide"

# Colours for loss curves
LOSS_COLORS = {
    "l_sure": "#0051BA",
    "l_ins": "#E91E63",
    "l_clu": "#4CAF50",
    "total": "#424242",
    "nmi": "#FF9800",
    "ari": "#9C27B0",
    "cos_gap": "#00A0DC",
}

# Colours for estimator bench bars
ESTIMATOR_COLORS = {
    "mle": "#9E9E9E",
    "js": "#2196F3",
    "js_plus": "#00BCD4",
    "map": "#4CAF50",
}

# Export Configuration
EXCEL_SHEET_NAMES = {
    "curves": "Training Curves",
    "assignments": "Assignments",
    "ablation": "Ablation",
    "robustness": "Robustness",
    "bench": "Estimator Risk",
}
