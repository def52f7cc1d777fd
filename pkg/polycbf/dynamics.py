import math
from dataclasses import dataclass
from typing import Callable, Tuple

import numpy as np

from .errors import ModelError, ParameterError


Derivative = Callable[[np.ndarray, np.ndarray], np.ndarray]


def _finite_state(values, size: int, what: str) -> np.ndarray:
	arr = np.asarray(values, dtype=float)
	if arr.shape != (size,):
		raise ModelError(f"{what} must have {size} entries, got shape {arr.shape}")
	if not np.all(np.isfinite(arr)):
		raise ModelError(f"{what} contains NaN or inf")
	return arr


@dataclass(frozen=True)
class UnicycleState:
	p_x: float
	p_y: float
	theta: float

	def to_array(self) -> np.ndarray:
		return _finite_state([self.p_x, self.p_y, self.theta], 3, "unicycle state")

	@classmethod
	def from_array(cls, x) -> "UnicycleState":
		a = _finite_state(x, 3, "unicycle state")
		return cls(float(a[0]), float(a[1]), float(a[2]))


@dataclass(frozen=True)
class CraneState:
	y: float
	z: float
	theta: float
	y_dot: float = 0.0
	z_dot: float = 0.0
	theta_dot: float = 0.0

	def to_array(self) -> np.ndarray:
		return _finite_state([self.y, self.z, self.theta, self.y_dot, self.z_dot, self.theta_dot], 6, "crane state")

	@classmethod
	def from_array(cls, x) -> "CraneState":
		return cls(*(float(v) for v in _finite_state(x, 6, "crane state")))


@dataclass(frozen=True)
class CraneModel:
	M: float = 10.0
	m: float = 5.0
	g: float = 9.8
	l: float = 0.7

	def __post_init__(self) -> None:
		for name in ("M", "m", "g", "l"):
			value = getattr(self, name)
			if not (math.isfinite(value) and value > 0):
				raise ModelError(f"crane parameter {name} must be positive, got {value!r}")


# unicycle

def unicycle_derivative(state: np.ndarray, u: np.ndarray) -> np.ndarray:
	theta = state[2]
	v, omega = u[0], u[1]
	return np.array([v * math.cos(theta), v * math.sin(theta), omega])


def unicycle_input_matrix(theta: float) -> np.ndarray:
	"""g(x) of the control-affine form xdot = g(x) u; the drift is zero."""
	return np.array([[math.cos(theta), 0.0], [math.sin(theta), 0.0], [0.0, 1.0]])


def unicycle_tracking_controller(state: np.ndarray, p_d, p_d_dot, K: np.ndarray, l_offset: float) -> np.ndarray:
	"""Offset-point tracking law (v, omega) = L R(theta)^T (-K (p - p_d) + p_d_dot)."""
	if l_offset == 0:
		raise ParameterError("l_offset must be nonzero")
	x = np.asarray(state, dtype=float)
	w = np.asarray(p_d_dot, dtype=float) - np.asarray(K) @ (x[:2] - np.asarray(p_d))
	c, s = math.cos(x[2]), math.sin(x[2])
	# R(theta)^T w, then L = diag(1, 1/l)
	return np.array([c * w[0] + s * w[1], (c * w[1] - s * w[0]) / l_offset])


@dataclass(frozen=True)
class EllipseReference:
	"""p_d(t) = (ax sin(rate t + phase), ay cos(rate t + phase)) and its time derivative."""

	ax: float
	ay: float
	rate: float
	phase: float = 0.0

	def __call__(self, t: float) -> Tuple[np.ndarray, np.ndarray]:
		arg = self.rate * t + self.phase
		s, c = math.sin(arg), math.cos(arg)
		return (
			np.array([self.ax * s, self.ay * c]),
			np.array([self.ax * self.rate * c, -self.ay * self.rate * s]),
		)


def ellipse_reference(ax: float, ay: float, rate: float, phase: float = 0.0) -> EllipseReference:
	return EllipseReference(ax, ay, rate, phase)


# crane

def crane_mass_matrix(theta: float, model: CraneModel) -> np.ndarray:
	mt = model.M + model.m
	ml = model.m * model.l
	c, s = math.cos(theta), math.sin(theta)
	return np.array([[mt, 0.0, ml * c], [0.0, mt, ml * s], [ml * c, ml * s, ml * model.l]])


def crane_derivative(state: np.ndarray, u: np.ndarray, model: CraneModel) -> np.ndarray:
	"""State (y, z, theta, ydot, zdot, thetadot) under cart forces (u_y, u_z)."""
	theta, yd, zd, td = state[2], state[3], state[4], state[5]
	c, s = math.cos(theta), math.sin(theta)
	mt = model.M + model.m
	ml = model.m * model.l
	r0 = u[0] + ml * td * td * s
	r1 = u[1] - mt * model.g - ml * td * td * c
	r2 = -ml * model.g * s
	# crane_mass_matrix eliminated by hand; the theta pivot is m l^2 M / (M + m)
	tdd = (mt * r2 - ml * (c * r0 + s * r1)) / (ml * model.M * model.l)
	return np.array([yd, zd, td, (r0 - ml * c * tdd) / mt, (r1 - ml * s * tdd) / mt, tdd])


def crane_to_transformed(state: np.ndarray, model: CraneModel) -> Tuple[np.ndarray, np.ndarray]:
	"""Container center and swing angle p, and their rates."""
	y, z, theta, yd, zd, td = state
	c, s = math.cos(theta), math.sin(theta)
	l = model.l
	return (
		np.array([y + l * s, z - l * c, theta]),
		np.array([yd + l * c * td, zd + l * s * td, td]),
	)


def crane_transformed_matrices(state: np.ndarray, model: CraneModel) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
	"""M_T, C_T, G_T, B_T of the container-center form M_T pddot + C_T pdot + G_T = B_T u."""
	theta, td = state[2], state[5]
	M, m, g, l = model.M, model.m, model.g, model.l
	c, s = math.cos(theta), math.sin(theta)
	M_T = np.array([
		[M + m, 0.0, -M * l * c],
		[0.0, M + m, -M * l * s],
		[-M * l * c, -M * l * s, M * l * l],
	])
	C_T = np.array([
		[0.0, 0.0, M * l * td * s],
		[0.0, 0.0, -M * l * td * c],
		[0.0, 0.0, 0.0],
	])
	G_T = np.array([0.0, (M + m) * g, -M * g * l * s])
	B_T = np.array([[1.0, 0.0], [0.0, 1.0], [-l * c, -l * s]])
	return M_T, C_T, G_T, B_T


def crane_derivative_transformed(state: np.ndarray, u: np.ndarray, model: CraneModel) -> np.ndarray:
	"""Same derivative as crane_derivative, solved in container coordinates and mapped back."""
	theta, yd, zd, td = state[2], state[3], state[4], state[5]
	M_T, C_T, G_T, B_T = crane_transformed_matrices(state, model)
	_, p_dot = crane_to_transformed(state, model)
	p_ddot = np.linalg.solve(M_T, B_T @ np.asarray(u, dtype=float) - C_T @ p_dot - G_T)
	c, s = math.cos(theta), math.sin(theta)
	l = model.l
	tdd = p_ddot[2]
	ydd = p_ddot[0] - l * (c * tdd - s * td * td)
	zdd = p_ddot[1] - l * (s * tdd + c * td * td)
	return np.array([yd, zd, td, ydd, zdd, tdd])


def crane_energy(state: np.ndarray, model: CraneModel) -> float:
	qd = np.asarray(state[3:], dtype=float)
	kinetic = 0.5 * float(qd @ crane_mass_matrix(state[2], model) @ qd)
	potential = (model.M + model.m) * model.g * state[1] - model.m * model.g * model.l * math.cos(state[2])
	return kinetic + potential


def crane_pd_controller(
	state: np.ndarray,
	target,
	Kp: np.ndarray,
	Kd: np.ndarray,
	lam: float,
	model: CraneModel,
) -> np.ndarray:
	"""Saturated PD law on the lambda-shifted point plus gravity feedforward."""
	y, z, theta, yd, zd, td = state
	c, s = math.cos(theta), math.sin(theta)
	chi = np.array([y + lam * s, z - lam * c])
	chi_d = np.array([target[0], target[1] - lam])
	chi_dot = np.array([yd + lam * td * c, zd + lam * td * s])
	u = -np.asarray(Kp) @ np.tanh(chi - chi_d) - np.asarray(Kd) @ np.tanh(chi_dot)
	u[1] += (model.M + model.m) * model.g
	return u


def rk4_step(f: Derivative, state: np.ndarray, u: np.ndarray, dt: float) -> np.ndarray:
	"""Classical Runge-Kutta step with u held over the step."""
	if not dt > 0:
		raise ParameterError(f"dt must be positive, got {dt!r}")
	x = np.asarray(state, dtype=float)
	k1 = f(x, u)
	k2 = f(x + 0.5 * dt * k1, u)
	k3 = f(x + 0.5 * dt * k2, u)
	k4 = f(x + dt * k3, u)
	return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
