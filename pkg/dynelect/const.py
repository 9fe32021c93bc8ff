"""Constants for the dynelect simulator."""

DOMAIN = "dynelect"
VERSION = "1.0.0"

# Wire widths (bits)
TAG_BITS = 1
ID_BITS = 40
PHASE_COUNT_BITS = 16
TIMESTAMP_BITS = 32
DEFAULT_UNIFORM_BITS = 64

MAX_NODE_ID = (1 << ID_BITS) - 1

# Message tags
TAG_RANK = 0
TAG_BEEP = 1

# Schedule generators
GENERATOR_LOWER_BOUND = "lower-bound"
GENERATOR_CHURN = "churn"
GENERATOR_STATIC = "static"
GENERATORS = (GENERATOR_LOWER_BOUND, GENERATOR_CHURN, GENERATOR_STATIC)

# Epoch-round topologies for churn schedules
TOPOLOGY_COMPLETE_AT_EPOCH = "complete-at-epoch"
TOPOLOGY_RANDOM_CONNECTED_AT_EPOCH = "random-connected-at-epoch"
EPOCH_TOPOLOGIES = (TOPOLOGY_COMPLETE_AT_EPOCH, TOPOLOGY_RANDOM_CONNECTED_AT_EPOCH)

# Fixed topologies for static schedules
STATIC_TOPOLOGIES = ("complete", "path", "cycle", "star")

# Schedule certification
CERTIFIED_VERIFIED = "verified"
CERTIFIED_CONSTRUCTION = "construction"

# RNG stream tags, mixed with the schedule seed
STREAM_CHURN = 1
STREAM_IDS = 2
STREAM_TOPOLOGY = 3

MAX_TOPOLOGY_ATTEMPTS = 32

# File record types (line-delimited JSON envelopes ``{type, data}``)
RECORD_HEADER = "header"
RECORD_ROUND = "round"
RECORD_NODE = "node"
RECORD_VIOLATION = "violation"

SCHEDULE_FORMAT = "dynelect-schedule/1"
TRACE_FORMAT = "dynelect-trace/1"
SCHEDULE_SUFFIX = ".jsonl"

# Experiments
DEFAULT_BOUND_COEFFICIENT = 14
DEFAULT_CHURN_RATE = 0.5
DEFAULT_SEEDS = 100
DEFAULT_SEED_START = 0
DEFAULT_EPOCHS = 32
MIN_SCALING_SEEDS = 1000
MIN_SCALING_N_VALUES = 3
MIN_SCALING_D_VALUES = 2
DEFAULT_LOWER_BOUND_ROWS = 3

WORKERS_ENV = "DYNELECT_WORKERS"

# Exit codes
EXIT_OK = 0
EXIT_USAGE = 2
EXIT_PARSE = 3
EXIT_VALIDATION = 4
EXIT_VIOLATION = 5
EXIT_IO = 6
