"""Exception hierarchy shared by every stage of an audit.

The CLI maps each class to an exit code, so keep new errors inside it.
"""


class TrajFairError(Exception):
    """Base class. ``stage`` is filled in by the audit orchestrator."""

    stage = None

    def __str__(self):
        msg = super().__str__()
        if self.stage:
            return f"[{self.stage}] {msg}"
        return msg


class InputError(TrajFairError, ValueError):
    """Bad or inconsistent input data (files, tables, heatmaps)."""


class ConfigError(TrajFairError, ValueError):
    """Invalid audit configuration."""


class InvariantError(TrajFairError, RuntimeError):
    """An internal invariant was violated; indicates a bug."""
