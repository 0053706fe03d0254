"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 1, DataError -> 2,
DivergenceError -> 3. Plain ValueError is used for bad arguments to
library functions (dimension mismatches, out-of-range ratios, ...) and
also exits with code 1.
"""


class TmcdrError(Exception):
    """Base class for package-specific errors."""


class ConfigError(TmcdrError):
    """Invalid or unusable run configuration (unknown keys, bad values)."""


class DataError(TmcdrError):
    """Problem with input data: parse failures, empty datasets, bad splits."""


class SamplingError(DataError):
    """A sampler cannot produce the requested draw (e.g. no negative candidates)."""


class DivergenceError(TmcdrError):
    """Training produced non-finite values."""


class OracleError(TmcdrError):
    """A numerical probe (finite difference, Hessian product) hit non-finite values."""
