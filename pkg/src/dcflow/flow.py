"""Integration of the fractional combinatorial Calabi flow ``du/dt = Delta^s (K - Kbar)``.

The state is a triangulation together with a conformal structure whose
factor ``u`` is the integrated variable.  Every accepted step records a
:class:`TraceRecord`; with surgery enabled the triangulation is flipped back
to (weighted) Delaunay after each accepted step.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (DCFlowError, DegenerateLength, DegenerateTriangle, InvalidTarget, InvalidU, NotPSD,
                     PreconditionViolated, StepFailure)
from .fractional import SpectralForm, apply_fractional_laplacian, spectral_decompose
from .geometry import MetricState, gauss_bonnet_residual
from .jacobian import JacobianL, curvature_and_jacobian, curvature_of
from .mesh import euler_characteristic
from .structure import DiscreteConformalStructure, edge_lengths, triangle_slack

__all__ = [
    "INTEGRATORS",
    "SURGERY_MODES",
    "FlowConfig",
    "Evaluation",
    "FlowState",
    "TraceRecord",
    "FlowResult",
    "validate_target",
    "uniform_target",
    "evaluate",
    "velocity",
    "step",
    "run_flow",
    "calabi_energy",
    "decay_rate",
    "expected_decay_rate",
    "potential_F",
    "conservation_monitor",
]

log = logging.getLogger(__name__)

INTEGRATORS = ("rk45", "rk4")
SURGERY_MODES = ("off", "delaunay", "weighted_delaunay")

# errors that make a trial point unusable; the step is retried with dt / 2
_TRIAL_ERRORS = (DegenerateLength, DegenerateTriangle, InvalidU, NotPSD, OverflowError, FloatingPointError)

# Dormand-Prince 5(4) tableau
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_B5 = np.array(_A[6] + (0.0,))
_B4 = np.array((5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40))
_E = _B5 - _B4


@dataclass(frozen=True)
class FlowConfig:
    """Flow parameters.

    ``target`` is the prescribed curvature per vertex.  ``delaunay_guard``
    (surgery off only) rejects trial steps that create a new Delaunay
    violation; ``None`` enables it for vertex scaling structures.
    """

    target: np.ndarray
    s: float = 1.0
    integrator: str = "rk45"
    dt_init: float = 0.01
    dt_min: float = 1e-10
    dt_max: float = 0.1
    rtol: float = 1e-8
    atol: float = 1e-10
    tol_curvature: float = 1e-8
    t_max: float = 1e3
    max_steps: int = 1_000_000
    surgery: str = "off"
    degeneracy_margin: float = 1e-9
    delaunay_guard: bool | None = None
    frozen_initial_curvature: bool = False
    project_sum: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "target", np.asarray(self.target, dtype=float).copy())
        if self.integrator not in INTEGRATORS:
            raise ValueError(f"integrator must be one of {INTEGRATORS}")
        if self.surgery not in SURGERY_MODES:
            raise ValueError(f"surgery must be one of {SURGERY_MODES}")
        if not (0 < self.dt_min <= self.dt_init) or self.dt_max < self.dt_min:
            raise ValueError("need 0 < dt_min <= dt_init and dt_min <= dt_max")
        if not math.isfinite(self.s):
            raise ValueError("s must be finite")


def uniform_target(mesh, background) -> np.ndarray:
    """``2 pi chi / N`` everywhere (Euclidean) or ``0`` everywhere (hyperbolic)."""
    n = mesh.num_vertices
    if getattr(background, "hyperbolic", background == "hyperbolic"):
        if euler_characteristic(mesh) >= 0:
            raise InvalidTarget("the uniform hyperbolic target 0 needs a surface of genus at least 2")
        return np.zeros(n)
    return np.full(n, 2.0 * np.pi * euler_characteristic(mesh) / n)


def validate_target(target, mesh, background) -> None:
    """Raise :class:`InvalidTarget` unless the target is admissible."""
    target = np.asarray(target, dtype=float)
    if target.shape != (mesh.num_vertices,):
        raise InvalidTarget(f"target has shape {target.shape}, expected ({mesh.num_vertices},)")
    if not np.isfinite(target).all():
        raise InvalidTarget("target must be finite")
    total = 2.0 * np.pi * euler_characteristic(mesh)
    if getattr(background, "hyperbolic", background == "hyperbolic"):
        if not target.sum() > total:
            raise InvalidTarget(f"hyperbolic target needs sum(Kbar) > 2 pi chi = {total:.12g}, got {target.sum():.12g}")
        if not (target < 2.0 * np.pi).all():
            raise InvalidTarget("hyperbolic target needs Kbar_i < 2 pi at every vertex")
    elif abs(target.sum() - total) > 1e-9:
        raise InvalidTarget(f"Euclidean target needs sum(Kbar) = 2 pi chi = {total:.12g}, got {target.sum():.12g}")


@dataclass
class Evaluation:
    """Everything derived from one ``(mesh, structure)`` pair."""

    metric: MetricState
    jacobian: JacobianL
    spectral: SpectralForm
    velocity: np.ndarray
    residual: float       # max |K - Kbar|
    calabi: float

    @property
    def K(self):
        return self.metric.K


def evaluate(mesh, dcs, config: FlowConfig, frozen_K=None) -> Evaluation:
    metric, jac = curvature_and_jacobian(mesh, dcs)
    spectrum = spectral_decompose(jac.matrix)
    diff = metric.K - config.target
    drive = diff if frozen_K is None else frozen_K - config.target
    v = apply_fractional_laplacian(spectrum, config.s, drive)
    if not np.isfinite(v).all():
        raise FloatingPointError("non-finite velocity")
    return Evaluation(metric, jac, spectrum, v, float(np.abs(diff).max()), float(diff @ diff))


@dataclass
class FlowState:
    t: float
    mesh: object
    dcs: DiscreteConformalStructure
    u0: np.ndarray
    evaluation: Evaluation | None = None

    @property
    def u(self) -> np.ndarray:
        return self.dcs.u

    @property
    def u_cum(self) -> np.ndarray:
        """Change of the conformal factor since ``t = 0``."""
        return self.dcs.u - self.u0

    @property
    def lengths(self) -> np.ndarray:
        return self.evaluation.metric.lengths if self.evaluation else edge_lengths(self.mesh, self.dcs)


def velocity(state: FlowState, config: FlowConfig) -> np.ndarray:
    return evaluate(state.mesh, state.dcs, config).velocity


@dataclass
class TraceRecord:
    t: float
    u: np.ndarray
    K: np.ndarray
    calabi_energy: float
    sum_u: float
    min_angle: float
    lambda_min: float      # smallest nonzero eigenvalue of L
    lambda_max: float
    gauss_bonnet: float
    residual: float
    flips: list = field(default_factory=list)
    dt: float = 0.0

    @property
    def num_flips(self) -> int:
        return len(self.flips)


@dataclass
class FlowResult:
    records: list
    status: str            # converged | t_max | max_steps | step_failure
    final_state: FlowState | None
    config: FlowConfig
    wall_time: float = 0.0
    message: str = ""

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    @property
    def flip_count(self) -> int:
        return sum(r.num_flips for r in self.records)

    @property
    def flip_events(self) -> list:
        return [ev for r in self.records for ev in r.flips]

    @property
    def final_u(self) -> np.ndarray:
        return self.records[-1].u

    @property
    def final_residual(self) -> float:
        return self.records[-1].residual

    @property
    def num_steps(self) -> int:
        return len(self.records) - 1

    def decay_rate(self) -> float:
        return decay_rate(self)

    def summary(self) -> dict:
        try:
            rate = self.decay_rate()
        except ValueError:
            rate = float("nan")
        return {
            "converged": self.converged,
            "status": self.status,
            "final_residual": self.final_residual,
            "fitted_rate": rate,
            "flip_count": self.flip_count,
            "steps": self.num_steps,
            "t_final": self.records[-1].t,
            "wall_time": self.wall_time,
        }


def calabi_energy(K, target) -> float:
    d = np.asarray(K, float) - np.asarray(target, float)
    return float(d @ d)


def decay_rate(trace, t_from=None) -> float:
    """Least-squares rate ``-d log C / dt`` over ``t >= t_from`` (default: second half)."""
    records = trace.records if hasattr(trace, "records") else trace
    t = np.array([r.t for r in records])
    c = np.array([r.calabi_energy for r in records])
    if t_from is None:
        t_from = 0.5 * t[-1]
    keep = (t >= t_from) & (c > 0)
    if keep.sum() < 2:
        keep = c > 0
    if keep.sum() < 2:
        raise ValueError("need at least two records with positive Calabi energy")
    slope = np.polyfit(t[keep], np.log(c[keep]), 1)[0]
    return float(-slope)


def expected_decay_rate(spectrum: SpectralForm, s: float) -> float:
    """``2 min lambda^(s+1)`` over the nonzero eigenvalues of ``L``."""
    lam = spectrum.eigenvalues[~spectrum.zero]
    return float(2.0 * (lam ** (s + 1.0)).min())


# ------------------------------------------------------------------ stepping

def _record(state: FlowState, flips=(), dt=0.0) -> TraceRecord:
    ev = state.evaluation
    return TraceRecord(
        t=state.t, u=state.u.copy(), K=ev.K.copy(), calabi_energy=ev.calabi, sum_u=float(state.u.sum()),
        min_angle=ev.metric.min_angle, lambda_min=ev.spectral.lambda_min_positive,
        lambda_max=ev.spectral.lambda_max, gauss_bonnet=gauss_bonnet_residual(state.mesh, ev.metric),
        residual=ev.residual, flips=list(flips), dt=dt)


def _guard_on(config, dcs) -> bool:
    if config.surgery != "off":
        return False
    if config.delaunay_guard is None:
        return bool((dcs.epsilon == 0).all())
    return config.delaunay_guard


def _check_trial(state, trial: Evaluation, config, guard_violations):
    slack = triangle_slack(state.mesh, trial.metric.lengths)
    if slack.min() < config.degeneracy_margin:
        raise DegenerateTriangle(f"triangle slack {slack.min():.3e} below margin {config.degeneracy_margin:g}")
    if guard_violations is not None:
        from .surgery import DELAUNAY_TOL, delaunay_slack
        bad = set(np.flatnonzero(delaunay_slack(state.mesh, trial.metric.angles, state.dcs.background)
                                 < -DELAUNAY_TOL).tolist())
        new = bad - guard_violations
        if new:
            raise DegenerateTriangle(f"edges {sorted(new)} left the Delaunay region; surgery needed")


def _rk4(state, config, dt, frozen_K):
    f = lambda u: evaluate(state.mesh, state.dcs.with_u(u), config, frozen_K).velocity  # noqa: E731
    u = state.u
    k1 = state.evaluation.velocity
    k2 = f(u + 0.5 * dt * k1)
    k3 = f(u + 0.5 * dt * k2)
    k4 = f(u + dt * k3)
    return u + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4), 0.0


def _dopri(state, config, dt, frozen_K):
    u = state.u
    ks = [state.evaluation.velocity]
    for i in range(1, 6):
        ui = u + dt * sum(a * k for a, k in zip(_A[i], ks) if a != 0.0)
        ks.append(evaluate(state.mesh, state.dcs.with_u(ui), config, frozen_K).velocity)
    u_new = u + dt * sum(b * k for b, k in zip(_B5[:6], ks) if b != 0.0)
    return u_new, ks


def step(state: FlowState, config: FlowConfig, dt: float, frozen_K=None):
    """One accepted step starting with trial size ``dt``.

    Returns ``(new_state, dt_taken, dt_next)``.  Rejected trials (error too
    large, degenerate or non-Delaunay endpoint) are retried with smaller
    steps; :class:`StepFailure` is raised once ``dt`` falls below ``dt_min``.
    """
    guard = None
    if _guard_on(config, state.dcs):
        from .surgery import DELAUNAY_TOL, delaunay_slack
        m = state.evaluation.metric
        guard = set(np.flatnonzero(delaunay_slack(state.mesh, m.angles, state.dcs.background)
                                   < -DELAUNAY_TOL).tolist())
    dt = min(dt, config.dt_max)
    reason = ""
    while dt >= config.dt_min:
        try:
            if config.integrator == "rk4":
                u_new, _ = _rk4(state, config, dt, frozen_K)
                err = 0.0
            else:
                u_new, ks = _dopri(state, config, dt, frozen_K)
            trial_dcs = state.dcs.with_u(u_new)
            trial = evaluate(state.mesh, trial_dcs, config, frozen_K)
            _check_trial(state, trial, config, guard)
        except _TRIAL_ERRORS as exc:
            reason = str(exc) or type(exc).__name__
            log.debug("t=%.6g dt=%.3e rejected: %s", state.t, dt, reason)
            dt *= 0.5
            continue
        if config.integrator == "rk4":
            return FlowState(state.t + dt, state.mesh, trial_dcs, state.u0, trial), dt, config.dt_init
        ks.append(trial.velocity)
        e = dt * sum(c * k for c, k in zip(_E, ks) if c != 0.0)
        scale = config.atol + config.rtol * np.maximum(np.abs(state.u), np.abs(u_new))
        # an explicit method holds stiff modes at the size of the tolerance, which shows
        # up in K scaled by lambda_max; keep that floor well below the current residual
        floor = max(config.tol_curvature, 0.01 * state.evaluation.residual)
        cap = max(0.1 * floor / max(trial.spectral.lambda_max, 1e-300), 1e-15)
        scale = np.minimum(scale, cap)
        err = float(np.abs(e / scale).max()) if e.size else 0.0
        factor = 5.0 if err == 0 else min(5.0, max(0.2, 0.9 * err ** -0.2))
        if err <= 1.0:
            new_state = FlowState(state.t + dt, state.mesh, trial_dcs, state.u0, trial)
            return new_state, dt, min(dt * factor, config.dt_max)
        reason = f"error estimate {err:.3e}"
        dt *= factor
    raise StepFailure(f"step size fell below dt_min={config.dt_min:g} at t={state.t:.6g}: {reason}")


def _surgery(state: FlowState, config: FlowConfig, frozen_K):
    from .surgery import flip_to_delaunay
    mesh, dcs, events = flip_to_delaunay(state.mesh, state.dcs, t=state.t,
                                         weighted=config.surgery == "weighted_delaunay")
    if not events:
        return state, events
    ev = evaluate(mesh, dcs, config, frozen_K)
    return FlowState(state.t, mesh, dcs, state.u0, ev), events


def _prepare(mesh, dcs, config):
    validate_target(config.target, mesh, dcs.background)
    if config.surgery == "delaunay" and (dcs.epsilon != 0).any():
        raise PreconditionViolated("Delaunay surgery is defined for vertex scaling (epsilon = 0)")
    if config.project_sum is not None and not dcs.background.hyperbolic:
        u = dcs.u + (config.project_sum - dcs.u.sum()) / dcs.num_vertices
        dcs = dcs.with_u(u)
    return dcs


def run_flow(mesh, dcs, config: FlowConfig, callback=None) -> FlowResult:
    """Integrate until ``max |K - Kbar| <= tol_curvature``, ``t_max`` or failure.

    ``callback(record, state)`` is called for the initial state and after
    every accepted step (after surgery, when enabled).  A
    :class:`StepFailure` carries the partial :class:`FlowResult` as ``trace``.
    """
    start = time.perf_counter()
    dcs = _prepare(mesh, dcs, config)
    frozen_K = curvature_of(mesh, dcs) if config.frozen_initial_curvature else None
    state = FlowState(0.0, mesh, dcs, dcs.u.copy())
    state.evaluation = evaluate(mesh, dcs, config, frozen_K)
    flips = []
    if config.surgery != "off":
        state, flips = _surgery(state, config, frozen_K)
    records = [_record(state, flips)]
    if callback:
        callback(records[-1], state)
    result = FlowResult(records, "running", state, config)
    dt = config.dt_init
    steps = 0
    while True:
        if state.evaluation.residual <= config.tol_curvature and not config.frozen_initial_curvature:
            result.status = "converged"
            break
        if state.t >= config.t_max - max(config.dt_min, 1e-12 * abs(config.t_max)):
            result.status = "t_max"
            break
        if steps >= config.max_steps:
            result.status = "max_steps"
            break
        try:
            dt = min(dt, config.t_max - state.t)
            state, taken, dt = step(state, config, dt, frozen_K)
            flips = []
            if config.surgery != "off":
                state, flips = _surgery(state, config, frozen_K)
        except (StepFailure, DCFlowError) as exc:
            result.status = "step_failure"
            result.message = str(exc)
            result.wall_time = time.perf_counter() - start
            if isinstance(exc, StepFailure):
                exc.trace = result
                raise
            raise StepFailure(f"{type(exc).__name__}: {exc}", trace=result) from exc
        steps += 1
        records.append(_record(state, flips, taken))
        result.final_state = state
        if callback:
            callback(records[-1], state)
    result.final_state = state
    result.wall_time = time.perf_counter() - start
    log.info("flow %s after %d steps, t=%.6g, residual %.3e", result.status, steps, state.t,
             state.evaluation.residual)
    return result


# --------------------------------------------------------- energy and monitors

def potential_F(mesh, dcs, target, base_u, order=8, rtol=1e-12, max_panels=256) -> float:
    """``F(u) = int_{base_u}^{u} sum (K - Kbar) du`` along the straight segment.

    ``u`` is ``dcs.u``.  Gauss-Legendre panels are doubled until two
    successive values agree to ``rtol``.
    """
    u1 = dcs.u
    u0 = np.asarray(base_u, dtype=float)
    du = u1 - u0
    if not du.any():
        return 0.0
    target = np.asarray(target, dtype=float)
    x, w = np.polynomial.legendre.leggauss(order)

    def integrate(panels):
        total = 0.0
        edges = np.linspace(0.0, 1.0, panels + 1)
        for a, b in zip(edges[:-1], edges[1:]):
            for xi, wi in zip(0.5 * (b - a) * x + 0.5 * (a + b), 0.5 * (b - a) * w):
                K = curvature_of(mesh, dcs.with_u(u0 + xi * du))
                total += wi * float((K - target) @ du)
        return total

    panels = 1
    prev = integrate(panels)
    while panels < max_panels:
        panels *= 2
        cur = integrate(panels)
        if abs(cur - prev) <= rtol * (1.0 + abs(cur)):
            return cur
        prev = cur
    raise ArithmeticError(f"quadrature did not converge with {max_panels} panels")


def conservation_monitor(trace) -> float:
    """``max |sum u(t) - sum u(0)|`` over the records."""
    records = trace.records if hasattr(trace, "records") else trace
    sums = np.array([r.sum_u for r in records])
    return float(np.abs(sums - sums[0]).max())


def with_target(config: FlowConfig, target) -> FlowConfig:
    return replace(config, target=np.asarray(target, dtype=float))
