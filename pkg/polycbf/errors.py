from typing import Optional


class PolyCbfError(Exception):
	"""Base class for every error raised by polycbf."""


class GeometryError(PolyCbfError, ValueError):
	"""A polygon, shape or pose violates one of its invariants."""

	def __init__(self, invariant: str, message: str) -> None:
		super().__init__(f"{invariant}: {message}")
		self.invariant = invariant


class ParameterError(PolyCbfError, ValueError):
	pass


class ModelError(PolyCbfError, ValueError):
	pass


class ConfigError(PolyCbfError, ValueError):
	pass


class SingularGradientError(PolyCbfError, ArithmeticError):
	pass


class DegenerateConstraintError(PolyCbfError, ArithmeticError):
	pass


class OverlapError(PolyCbfError, RuntimeError):
	"""Nearest boundary points are undefined because the polygons overlap."""


class ScenarioAbort(PolyCbfError, RuntimeError):
	def __init__(self, message: str, step: Optional[int] = None) -> None:
		prefix = f"step {step}: " if step is not None else ""
		super().__init__(prefix + message)
		self.step = step
