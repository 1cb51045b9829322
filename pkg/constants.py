from enum import Enum, IntEnum


class ExitCode(IntEnum):
    OK = 0
    CONFIG_ERROR = 1
    GUARD_EXCEEDED = 2
    DOMINATION_VIOLATION = 3
    REPRODUCTION_MISMATCH = 4
    NON_FINITE = 5


EXIT_CODE_DESCRIPTION = {
    ExitCode.OK: "Completed successfully",
    ExitCode.CONFIG_ERROR: "Configuration or certificate hypotheses invalid",
    ExitCode.GUARD_EXCEEDED: "Certificate pair never proved useful within the guard",
    ExitCode.DOMINATION_VIOLATION: "Sequence not dominated by h(beta^k)",
    ExitCode.REPRODUCTION_MISMATCH: "Computed value differs from the reference value",
    ExitCode.NON_FINITE: "Orbit left the finite floating point range",
}


class OutputFormat(str, Enum):
    TABLE = "table"
    CSV = "csv"
    JSON = "json"


class CertificateKind(str, Enum):
    KL = "kl"
    LYAPUNOV = "lyapunov"


class LyapunovConstruction(str, Enum):
    DIRECT = "direct"
    CONTINUOUS = "continuous"


class RatioMode(str, Enum):
    CLOSED = "closed"
    ESTIMATE = "estimate"
    EXPLICIT = "explicit"


class SystemKind(str, Enum):
    BUILTIN = "builtin"
    AFFINE = "affine"
    POLYNOMIAL = "polynomial"


REPORT_SCHEMA_VERSION = 1
CONFIG_VERSION = 1

ESTIMATE_FLAG = "estimate, not certificate"

# Significant digits for human readable tables
TABLE_SIGNIFICANT_DIGITS = 6

# Relative tolerance used when comparing against published reference values
REFERENCE_REL_TOL = 1e-3
