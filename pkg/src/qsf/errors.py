"""Exception types raised by qsf."""


class MachineSpecError(ValueError):
    """A machine document or machine definition is malformed."""


class DegenerateMachineError(ValueError):
    """The machine is non-minimal or otherwise degenerate for the requested operation."""


class ConvergenceError(RuntimeError):
    """An iterative solver failed to converge."""


class DimensionCapError(ValueError):
    """A requested exact state would exceed the configured dimension cap."""
