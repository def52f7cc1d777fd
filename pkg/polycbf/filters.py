import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

from .barrier import BarrierEval, CbfParams, RigidPair
from .constants import DEFAULT_EPSILON, EPS_DISTORTION_REL, FILTER_SPLIT, SINGULAR_GRAD_NORM
from .dynamics import CraneModel, crane_to_transformed, crane_transformed_matrices
from .errors import DegenerateConstraintError, ModelError, ParameterError, SingularGradientError
from .geometry import PlanarPose, RigidPolygonShape


@dataclass(frozen=True)
class FilterConfig:
	alpha_gain: float
	epsilon: float = DEFAULT_EPSILON
	# each agent takes half of the class-K budget
	split: float = field(default=FILTER_SPLIT, init=False)

	def __post_init__(self) -> None:
		if not (math.isfinite(self.alpha_gain) and self.alpha_gain > 0):
			raise ParameterError(f"alpha_gain must be positive, got {self.alpha_gain!r}")
		if not (math.isfinite(self.epsilon) and self.epsilon >= 0):
			raise ParameterError(f"epsilon must be >= 0, got {self.epsilon!r}")


@dataclass(frozen=True)
class FilterResult:
	u_star: Tuple[np.ndarray, ...]
	eta: np.ndarray
	active: np.ndarray
	constraint_residual: float
	eps_distortion: bool = False

	@property
	def u(self) -> np.ndarray:
		return np.concatenate(self.u_star)


def _correct(u0: np.ndarray, c: np.ndarray, eta: float, epsilon: float, who: str) -> Tuple[np.ndarray, bool]:
	"""u0 + max(0, eta) c / (|c|^2 + epsilon), and whether epsilon moved the answer noticeably."""
	if eta <= 0:
		return u0.copy(), False
	cc = float(c @ c)
	if epsilon == 0 and math.sqrt(cc) < SINGULAR_GRAD_NORM:
		raise SingularGradientError(f"{who}: constraint gradient vanishes (norm {math.sqrt(cc):.3g}) while active")
	u = u0 + eta * c / (cc + epsilon)
	distorted = False
	if epsilon > 0 and cc > 0:
		exact = u0 + eta * c / cc
		distorted = float(np.linalg.norm(u - exact)) > EPS_DISTORTION_REL * max(float(np.linalg.norm(exact)), 1e-300)
	return u, distorted


def filter_control_affine(
	f: Sequence[np.ndarray],
	g: Sequence[np.ndarray],
	u0: Sequence[np.ndarray],
	barrier,
	cfg: FilterConfig,
	g_full_rank: bool = False,
) -> FilterResult:
	"""Per-agent closed-form solution of the split CBF-QP for xdot^a = f^a + g^a u^a.

	barrier needs value, grad_xi and grad_xj; a BarrierEval or a BaselineEval both work.
	g_full_rank skips the column-rank check for input matrices that have it by construction.
	"""
	budget = cfg.split * cfg.alpha_gain * barrier.value
	grads = (np.asarray(barrier.grad_xi, dtype=float), np.asarray(barrier.grad_xj, dtype=float))
	outs, etas, residuals = [], [], []
	distorted = False
	for who, f_a, g_a, u0_a, grad in zip(("agent i", "agent j"), f, g, u0, grads):
		g_a = np.asarray(g_a, dtype=float)
		u0_a = np.asarray(u0_a, dtype=float)
		if g_a.ndim != 2 or g_a.shape[0] != grad.shape[0] or g_a.shape[1] != u0_a.shape[0]:
			raise ParameterError(f"{who}: input matrix {g_a.shape} does not match state {grad.shape} and input {u0_a.shape}")
		if not g_full_rank and np.linalg.matrix_rank(g_a) < g_a.shape[1]:
			raise ParameterError(f"{who}: g^T g is not positive definite")
		drift = np.asarray(f_a, dtype=float)
		eta = -float(grad @ (drift + g_a @ u0_a)) - budget
		u, dist = _correct(u0_a, g_a.T @ grad, eta, cfg.epsilon, who)
		outs.append(u)
		etas.append(eta)
		residuals.append(float(grad @ (drift + g_a @ u)) + budget)
		distorted = distorted or dist
	eta_arr = np.array(etas)
	return FilterResult(tuple(outs), eta_arr, eta_arr > 0, min(residuals), distorted)


def filter_single_integrator(u0_i: np.ndarray, u0_j: np.ndarray, barrier, cfg: FilterConfig) -> FilterResult:
	n_i, n_j = len(barrier.grad_xi), len(barrier.grad_xj)
	return filter_control_affine(
		(np.zeros(n_i), np.zeros(n_j)),
		(np.eye(n_i), np.eye(n_j)),
		(u0_i, u0_j),
		barrier,
		cfg,
	)


def qp_kkt_solve(Q: np.ndarray, u0: np.ndarray, c: np.ndarray, d: float) -> np.ndarray:
	"""min (u-u0)^T Q (u-u0) s.t. c^T u >= d, by a dense active-set KKT solve."""
	u0 = np.asarray(u0, dtype=float)
	c = np.asarray(c, dtype=float)
	if float(c @ u0) >= d:
		return u0.copy()
	n = u0.shape[0]
	kkt = np.zeros((n + 1, n + 1))
	kkt[:n, :n] = 2.0 * np.asarray(Q, dtype=float)
	kkt[:n, n] = -c
	kkt[n, :n] = c
	rhs = np.concatenate([2.0 * np.asarray(Q, dtype=float) @ u0, [d]])
	return np.linalg.solve(kkt, rhs)[:n]


# crane

@dataclass(frozen=True)
class CraneFilterConfig:
	Q: np.ndarray
	alpha: float
	eta_gain: float
	epsilon: float = 0.0

	def __post_init__(self) -> None:
		Q = np.array(self.Q, dtype=float)
		if Q.shape != (2, 2) or not np.allclose(Q, Q.T):
			raise ParameterError(f"Q must be a symmetric 2x2 matrix, got {Q.tolist()}")
		try:
			np.linalg.cholesky(Q)
		except np.linalg.LinAlgError as e:
			raise ParameterError(f"Q must be positive definite: {e}") from e
		Q.setflags(write=False)
		object.__setattr__(self, "Q", Q)
		if not self.alpha > 0 or not self.eta_gain > 0:
			raise ParameterError(f"alpha and eta_gain must be positive, got {self.alpha!r}, {self.eta_gain!r}")
		if self.epsilon < 0:
			raise ParameterError(f"epsilon must be >= 0, got {self.epsilon!r}")


def crane_container_center(state: np.ndarray, model: CraneModel) -> np.ndarray:
	p, _ = crane_to_transformed(state, model)
	return p[:2]


def crane_pair(
	state: np.ndarray,
	obstacle_center,
	shapes: Tuple[RigidPolygonShape, RigidPolygonShape],
	model: CraneModel,
) -> RigidPair:
	"""Container and obstacle posed at their centers, both attitudes fixed at zero."""
	return RigidPair.at(
		shapes,
		PlanarPose(crane_container_center(state, model), 0.0),
		PlanarPose(np.asarray(obstacle_center, dtype=float), 0.0),
	)


def crane_barrier(
	state: np.ndarray,
	obstacle_center,
	shapes: Tuple[RigidPolygonShape, RigidPolygonShape],
	params: CbfParams,
	model: CraneModel,
) -> BarrierEval:
	"""hhat between container and obstacle, gradients in the two centers."""
	return crane_pair(state, obstacle_center, shapes, model).evaluate(params, translation_only=True)


def crane_energy_barrier(p_dot: np.ndarray, eta_gain: float, barrier, mass_matrix: np.ndarray) -> float:
	"""eta hhat - 1/2 pdot^T M_T pdot."""
	M = np.asarray(mass_matrix, dtype=float)
	if not np.array_equal(M, M.T):
		raise ModelError("M_T must be symmetric")
	try:
		np.linalg.cholesky(M)
	except np.linalg.LinAlgError as e:
		raise ModelError(f"M_T must be positive definite: {e}") from e
	p_dot = np.asarray(p_dot, dtype=float)
	return eta_gain * barrier.value - 0.5 * float(p_dot @ M @ p_dot)


def crane_energy_barrier_rate(
	u: np.ndarray,
	state: np.ndarray,
	obstacle_velocity,
	eta_gain: float,
	barrier,
	model: CraneModel,
) -> float:
	"""Time derivative of the energy barrier; the Coriolis term cancels by skew symmetry."""
	_, p_dot = crane_to_transformed(state, model)
	_, _, G_T, _ = crane_transformed_matrices(state, model)
	cart_velocity = np.asarray(state[3:5], dtype=float)
	feed = float(barrier.grad_xi @ p_dot[:2]) + float(barrier.grad_xj @ np.asarray(obstacle_velocity, dtype=float))
	return -float(cart_velocity @ np.asarray(u, dtype=float)) + eta_gain * feed + float(p_dot @ G_T)


def filter_crane(
	u0: np.ndarray,
	state: np.ndarray,
	obstacle_center,
	obstacle_velocity,
	shapes: Tuple[RigidPolygonShape, RigidPolygonShape],
	params: CbfParams,
	cfg: CraneFilterConfig,
	model: CraneModel,
	barrier: Optional[BarrierEval] = None,
) -> FilterResult:
	"""Weighted one-constraint QP: min (u-u0)^T Q (u-u0) s.t. phidot(u) >= -alpha phi."""
	if barrier is None:
		barrier = crane_barrier(state, obstacle_center, shapes, params, model)
	u0 = np.asarray(u0, dtype=float)
	M_T, _, _, _ = crane_transformed_matrices(state, model)
	_, p_dot = crane_to_transformed(state, model)
	phi = crane_energy_barrier(p_dot, cfg.eta_gain, barrier, M_T)

	c = -np.asarray(state[3:5], dtype=float)
	drift = crane_energy_barrier_rate(np.zeros(2), state, obstacle_velocity, cfg.eta_gain, barrier, model)
	d = -cfg.alpha * phi - drift
	slack = d - float(c @ u0)

	distorted = False
	if slack <= 0:
		u = u0.copy()
	else:
		if float(np.linalg.norm(c)) < SINGULAR_GRAD_NORM:
			raise DegenerateConstraintError(f"crane constraint is active (slack {slack:.3g}) but the cart is at rest")
		qc = np.linalg.solve(cfg.Q, c)
		denom = float(c @ qc)
		u = u0 + slack * qc / (denom + cfg.epsilon)
		if cfg.epsilon > 0:
			exact = u0 + slack * qc / denom
			distorted = float(np.linalg.norm(u - exact)) > EPS_DISTORTION_REL * max(float(np.linalg.norm(exact)), 1e-300)
	return FilterResult((u,), np.array([slack]), np.array([slack > 0]), float(c @ u) - d, distorted)
