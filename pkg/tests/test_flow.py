import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dcflow.errors import InvalidTarget, PreconditionViolated, StepFailure
from dcflow.experiment import build_experiment, load_experiment, reference_structure
from dcflow.flow import (FlowConfig, FlowState, calabi_energy, conservation_monitor, decay_rate, evaluate,
                         expected_decay_rate, potential_F, run_flow, step, uniform_target, validate_target,
                         velocity)
from dcflow.fractional import spectral_decompose
from dcflow.jacobian import curvature_of, jacobian_L
from dcflow.mesh import preset
from dcflow.structure import r_from_u, u_from_r

from instances import equilateral_cp, random_instance

ROOT = __import__("pathlib").Path(__file__).resolve().parents[1]
TET = preset("tetra_sphere")
EUC_TARGET = np.full(4, math.pi)


def tetra_start(seed, amp=0.4):
    u = np.random.default_rng(seed).uniform(-amp, amp, 4)
    return equilateral_cp(TET).with_u(u - u.mean())


def state_of(mesh, dcs, cfg):
    return FlowState(0.0, mesh, dcs, dcs.u.copy(), evaluate(mesh, dcs, cfg))


# ------------------------------------------------------------------ targets

def test_validate_target_examples():
    validate_target(np.full(4, math.pi), TET, "euclidean")
    torus = preset("one_vertex_torus")
    with pytest.raises(InvalidTarget):
        validate_target(np.full(1, 0.1), torus, "euclidean")
    genus2 = preset("genus2_one_vertex")
    validate_target(np.zeros(1), genus2, "hyperbolic")


def test_validate_target_hyperbolic_constraints():
    with pytest.raises(InvalidTarget):
        validate_target(np.full(4, math.pi), TET, "hyperbolic")  # sum equals 2 pi chi
    with pytest.raises(InvalidTarget):
        validate_target(np.array([7.0, 3.0, 3.0, 3.0]), TET, "hyperbolic")  # above 2 pi
    with pytest.raises(InvalidTarget):
        validate_target(np.zeros(3), TET, "euclidean")
    validate_target(np.full(4, 3.2), TET, "hyperbolic")


def test_uniform_targets():
    np.testing.assert_allclose(uniform_target(preset("icosahedron"), "euclidean"), 4 * math.pi / 12)
    np.testing.assert_array_equal(uniform_target(preset("genus2_one_vertex"), "hyperbolic"), [0.0])
    with pytest.raises(InvalidTarget):
        uniform_target(TET, "hyperbolic")


def test_run_flow_rejects_bad_target():
    with pytest.raises(InvalidTarget):
        run_flow(TET, equilateral_cp(TET), FlowConfig(target=np.zeros(4)))


def test_delaunay_surgery_needs_vertex_scaling():
    with pytest.raises(PreconditionViolated):
        run_flow(TET, equilateral_cp(TET), FlowConfig(target=EUC_TARGET, surgery="delaunay"))


# ---------------------------------------------------------------- velocity

def test_velocity_at_equilibrium():
    cfg = FlowConfig(target=EUC_TARGET)
    v = velocity(state_of(TET, equilateral_cp(TET), cfg), cfg)
    np.testing.assert_allclose(v, 0.0, atol=1e-14)


@given(seed=st.integers(0, 2**32 - 1))
def test_velocity_special_orders(seed):
    mesh, dcs = random_instance(np.random.default_rng(seed), "cp-euclidean", preset("icosahedron"))
    target = uniform_target(mesh, "euclidean")
    K = curvature_of(mesh, dcs)
    L = jacobian_L(mesh, dcs).matrix
    st0 = state_of(mesh, dcs, FlowConfig(target=target))
    np.testing.assert_allclose(velocity(st0, FlowConfig(target=target, s=0.0)), -(K - target), atol=1e-10)
    np.testing.assert_allclose(velocity(st0, FlowConfig(target=target, s=1.0)), -L @ (K - target), atol=1e-10)
    v_inv = velocity(st0, FlowConfig(target=target, s=-1.0))
    np.testing.assert_allclose(L @ v_inv, -(K - target), atol=1e-9)
    assert abs(v_inv.sum()) <= 1e-9


def test_step_from_equilibrium_is_stationary():
    cfg = FlowConfig(target=EUC_TARGET)
    dcs = equilateral_cp(TET)
    new, taken, _ = step(state_of(TET, dcs, cfg), cfg, 0.1)
    assert taken > 0
    np.testing.assert_allclose(new.u, dcs.u, atol=1e-14)
    result = run_flow(TET, dcs, cfg)
    assert result.converged and result.num_steps == 0


# ------------------------------------------------------------- trajectories

@pytest.mark.parametrize("s", [-1.0, 0.0, 1.0])
def test_tetra_converges_to_zero(s):
    result = run_flow(TET, tetra_start(int(s) + 3), FlowConfig(target=EUC_TARGET, s=s))
    assert result.converged
    np.testing.assert_allclose(result.final_u, 0.0, atol=1e-7)
    assert conservation_monitor(result) <= 1e-8 * max(1.0, result.records[-1].t)
    energies = [r.calabi_energy for r in result.records]
    assert all(b < a for a, b in zip(energies, energies[1:]))


def test_hyperbolic_tetra_returns_to_unit_radii():
    ref = equilateral_cp(TET, "hyperbolic", 1.0)
    target = curvature_of(TET, ref)
    rng = np.random.default_rng(4)
    start = ref.with_u(u_from_r(1.0 + rng.uniform(-0.3, 0.3, 4)))
    result = run_flow(TET, start, FlowConfig(target=target, s=1.0))
    assert result.converged
    np.testing.assert_allclose(r_from_u(result.final_u), 1.0, atol=1e-6)
    # radii stay bounded away from zero along the way
    min_r = min(r_from_u(r.u).min() for r in result.records)
    assert min_r > 0.5


def test_integrators_agree_at_time_one():
    dcs = tetra_start(11)
    common = dict(target=EUC_TARGET, s=1.0, t_max=1.0, tol_curvature=0.0)
    rk4 = run_flow(TET, dcs, FlowConfig(integrator="rk4", dt_init=0.01, dt_max=0.01, **common))
    rk45 = run_flow(TET, dcs, FlowConfig(**common))
    assert rk4.records[-1].t == pytest.approx(1.0, abs=1e-12)
    assert rk45.records[-1].t == pytest.approx(1.0, abs=1e-12)
    assert np.abs(rk4.final_u - rk45.final_u).max() <= 1e-6


def test_decay_rate_near_equilibrium():
    dcs = equilateral_cp(TET).with_u(np.array([1e-3, -1e-3, 2e-3, -2e-3]))
    for s in (-1.0, 0.0, 1.0):
        result = run_flow(TET, dcs, FlowConfig(target=EUC_TARGET, s=s))
        expected = expected_decay_rate(spectral_decompose(jacobian_L(TET, equilateral_cp(TET)).matrix), s)
        assert result.decay_rate() == pytest.approx(expected, rel=0.2)


def test_decay_rate_of_exact_exponential():
    class R:
        def __init__(self, t):
            self.t, self.calabi_energy = t, 3.0 * math.exp(-1.7 * t)
    records = [R(t) for t in np.linspace(0, 4, 30)]
    assert decay_rate(records) == pytest.approx(1.7, rel=1e-10)
    assert decay_rate(records, t_from=0.0) == pytest.approx(1.7, rel=1e-10)


def test_calabi_energy():
    assert calabi_energy([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert calabi_energy([1.0, 2.0], [0.0, 0.0]) == 5.0


def test_gauss_bonnet_every_record():
    ref = equilateral_cp(TET, "hyperbolic", 1.0)
    start = ref.with_u(u_from_r(np.array([0.8, 1.2, 1.0, 1.1])))
    for dcs, target in ((tetra_start(2), EUC_TARGET), (start, curvature_of(TET, ref))):
        result = run_flow(TET, dcs, FlowConfig(target=target))
        assert max(abs(r.gauss_bonnet) for r in result.records) <= 1e-9


def test_callback_sees_every_record():
    seen = []
    result = run_flow(TET, tetra_start(5), FlowConfig(target=EUC_TARGET), callback=lambda r, s: seen.append(r.t))
    assert seen == [r.t for r in result.records]


def test_t_max_status():
    result = run_flow(TET, tetra_start(6), FlowConfig(target=EUC_TARGET, t_max=0.05))
    assert result.status == "t_max" and not result.converged
    assert result.records[-1].t == pytest.approx(0.05, abs=1e-12)


def test_projection_of_initial_sum():
    u = np.array([0.3, 0.1, -0.2, 0.5])
    result = run_flow(TET, equilateral_cp(TET).with_u(u), FlowConfig(target=EUC_TARGET, project_sum=0.0))
    assert abs(result.records[0].sum_u) <= 1e-15
    np.testing.assert_allclose(result.final_u, 0.0, atol=1e-7)


# ----------------------------------------------------------------- failure

def transported_torus():
    return build_experiment(load_experiment(ROOT / "experiments" / "vs_flat_torus_surgery.cfg"))


@pytest.mark.parametrize("guard", [None, False])
def test_torus_without_surgery_fails(guard):
    exp = transported_torus()
    cfg = replace(exp.flow_config, surgery="off", delaunay_guard=guard)
    with pytest.raises(StepFailure) as info:
        run_flow(exp.mesh, exp.dcs, cfg)
    trace = info.value.trace
    assert trace.status == "step_failure" and len(trace.records) >= 1
    if guard is None:
        assert "surgery needed" in str(info.value)
    # the same start converges once flips are allowed
    assert run_flow(exp.mesh, exp.dcs, exp.flow_config).converged


def test_forced_dt_min_fails():
    # the margin makes every trial step from this start unacceptable
    dcs = tetra_start(1)
    cfg = FlowConfig(target=EUC_TARGET, degeneracy_margin=10.0, dt_min=1e-3)
    with pytest.raises(StepFailure) as info:
        run_flow(TET, dcs, cfg)
    assert len(info.value.trace.records) == 1


# ------------------------------------------------------------- potential

def cp_families():
    return st.sampled_from(["cp-euclidean", "cp-hyperbolic"])


@settings(max_examples=15)
@given(seed=st.integers(0, 2**32 - 1), family=cp_families())
def test_potential_gradient(seed, family):
    rng = np.random.default_rng(seed)
    mesh, dcs = random_instance(rng, family)
    base = dcs.u + rng.uniform(-0.1, 0.1, 4)
    if family == "cp-hyperbolic":
        base = np.minimum(base, -1e-3)
    target = curvature_of(mesh, dcs.with_u(base)) + rng.uniform(-0.05, 0.05, 4)
    assert potential_F(mesh, dcs.with_u(base), target, base) == 0.0
    h = 1e-5
    K = curvature_of(mesh, dcs)
    for i in range(4):
        up, dn = dcs.u.copy(), dcs.u.copy()
        up[i] += h
        dn[i] -= h
        fd = (potential_F(mesh, dcs.with_u(up), target, base) - potential_F(mesh, dcs.with_u(dn), target, base)) / (2 * h)
        assert fd == pytest.approx(K[i] - target[i], abs=1e-5)


@settings(max_examples=15)
@given(seed=st.integers(0, 2**32 - 1), family=cp_families())
def test_potential_convex(seed, family):
    rng = np.random.default_rng(seed)
    mesh, dcs = random_instance(rng, family)
    target = curvature_of(mesh, dcs)
    base = dcs.u
    a = base + rng.uniform(-0.3, 0.3, 4)
    b = base + rng.uniform(-0.3, 0.3, 4)
    if family == "cp-hyperbolic":
        a, b = np.minimum(a, -1e-2), np.minimum(b, -1e-2)
    F = lambda u: potential_F(mesh, dcs.with_u(u), target, base)  # noqa: E731
    assert F(0.5 * (a + b)) <= 0.5 * (F(a) + F(b)) + 1e-10


@pytest.mark.parametrize("family", ["cp-euclidean", "cp-hyperbolic"])
def test_potential_decreases_along_flow(family):
    rng = np.random.default_rng(8)
    mesh, dcs = random_instance(rng, family)
    target = curvature_of(mesh, dcs)
    start = dcs.with_u(dcs.u + rng.uniform(-0.2, 0.2, 4) if family == "cp-euclidean"
                       else np.minimum(dcs.u + rng.uniform(-0.2, 0.2, 4), -1e-2))
    if family == "cp-euclidean":
        start = start.with_u(start.u - start.u.mean() + dcs.u.mean())
    result = run_flow(mesh, start, FlowConfig(target=target, s=0.5))
    assert result.converged
    values = [potential_F(mesh, dcs.with_u(r.u), target, start.u) for r in result.records[::5]]
    assert all(b <= a + 1e-12 for a, b in zip(values, values[1:]))


# ---------------------------------------------------------------- variants

def test_frozen_initial_curvature():
    dcs = tetra_start(9)
    cfg = FlowConfig(target=EUC_TARGET, s=-1.0, frozen_initial_curvature=True, t_max=0.5)
    frozen = run_flow(TET, dcs, cfg)
    assert frozen.status == "t_max"
    live = run_flow(TET, dcs, replace(cfg, frozen_initial_curvature=False))
    # both start with the same velocity but drift apart
    st0 = state_of(TET, dcs, cfg)
    np.testing.assert_allclose(velocity(st0, cfg), velocity(st0, replace(cfg, frozen_initial_curvature=False)))
    assert np.abs(frozen.final_u - live.records[-1].u).max() > 1e-6
    assert conservation_monitor(frozen) <= 1e-8


def test_mixed_structure_converges():
    mesh = preset("icosahedron")
    ref = reference_structure(mesh, "mixed")
    rng = np.random.default_rng(3)
    start = ref.with_u(rng.uniform(-0.1, 0.1, mesh.num_vertices))
    target = curvature_of(mesh, ref)
    result = run_flow(mesh, start, FlowConfig(target=target, project_sum=0.0))
    assert result.converged
    np.testing.assert_allclose(curvature_of(mesh, ref.with_u(result.final_u)), target, atol=1e-8)
