"""Exception types shared across the package."""


class ConfigError(ValueError):
    """A model, run, or plan configuration is invalid."""


class StaffingInfeasibleError(ConfigError):
    """Requested slack would make the arrival rate nonpositive."""


class HorizonError(ConfigError):
    """A raw path is too short for the requested scaled horizon."""
