import math

import numpy as np
import pytest

from dcflow.errors import PreconditionViolated, StepFailure
from dcflow.experiment import reference_structure
from dcflow.flow import FlowConfig, conservation_monitor, run_flow, uniform_target
from dcflow.geometry import flip_diagonal_length, metric_state, quad_lengths
from dcflow.mesh import canonical_form, euler_characteristic, preset
from dcflow.structure import DiscreteConformalStructure, edge_lengths, nondegeneracy_check
from dcflow.surgery import (conformal_transport, delaunay_check, flip_metric_to_delaunay, flip_to_delaunay,
                            run_flow_with_surgery, weighted_delaunay_surgery_mode)

from instances import equilateral_cp

TET = preset("tetra_sphere")
TORUS = preset("flat_torus_16")


def tetra_quad_lengths(e, l_ij, l_jk, l_ki, l_il, l_lj, l_kl):
    """Per-edge lengths on the tetrahedron putting the given quadrilateral around edge ``e``."""
    (i, j, k, l), _ = quad_lengths(TET, np.ones(6), e)
    want = {frozenset((i, j)): l_ij, frozenset((j, k)): l_jk, frozenset((k, i)): l_ki,
            frozenset((i, l)): l_il, frozenset((l, j)): l_lj, frozenset((k, l)): l_kl}
    return np.array([want[frozenset(TET.edge_vertices(x))] for x in range(6)])


def random_torus_vs(rng, amp=0.5):
    base = reference_structure(TORUS, "vs-euclidean")
    while True:
        dcs = base.with_u(rng.uniform(-amp, amp, 16))
        if not nondegeneracy_check(TORUS, edge_lengths(TORUS, dcs)):
            return dcs


# ---------------------------------------------------------------- checks

def test_equilateral_slack():
    report = delaunay_check(TET, np.ones(6), "euclidean")
    np.testing.assert_allclose(report.slack, math.pi / 3, atol=1e-15)
    assert report.ok


def test_square_is_boundary_delaunay():
    lengths = tetra_quad_lengths(0, math.sqrt(2), 1, 1, 1, 1, math.sqrt(2))
    report = delaunay_check(TET, lengths, "euclidean")
    assert abs(report.slack[0]) <= 1e-15
    assert report.ok


def test_hyperbolic_equilateral_slack():
    l = math.acosh(2.0)
    report = delaunay_check(TET, np.full(6, l), "hyperbolic")
    np.testing.assert_allclose(report.slack, 2 * math.acos(2 / 3), atol=1e-14)


def test_violations_sorted_worst_first():
    lengths = tetra_quad_lengths(0, 1.0, 1.0, 1.0, 0.55, 0.55, 1.3)
    report = delaunay_check(TET, lengths, "euclidean")
    assert len(report.violations) == 2
    slacks = report.slack[report.violations]
    assert (np.diff(slacks) >= 0).all()


# ----------------------------------------------------------------- flips

def test_violating_kite_flips_once():
    lengths = tetra_quad_lengths(0, 1.0, 1.0, 1.0, 0.55, 0.55, 0.9)
    assert delaunay_check(TET, lengths, "euclidean").slack[0] < 0
    mesh, new, events = flip_metric_to_delaunay(TET, lengths, "euclidean")
    assert len(events) == 1
    ev = events[0]
    assert ev.slack_before < 0 < ev.slack_after
    expected = math.sqrt(3) / 2 + math.sqrt(0.55 ** 2 - 0.25)
    assert ev.new_length == pytest.approx(expected, rel=1e-14)
    assert ev.area_after == pytest.approx(ev.area_before, abs=1e-12)
    assert delaunay_check(mesh, new, "euclidean").ok


def test_already_delaunay_is_untouched():
    mesh, dcs, events = flip_to_delaunay(TET, equilateral_cp(TET))
    assert events == [] and mesh is TET


@pytest.mark.parametrize("seed", range(20))
def test_random_torus_terminates(seed):
    rng = np.random.default_rng(seed)
    dcs = random_torus_vs(rng, 1.0)
    lengths = edge_lengths(TORUS, dcs)
    total = metric_state(TORUS, lengths, "euclidean").face_areas.sum()
    mesh, new, events = flip_to_delaunay(TORUS, dcs)
    assert delaunay_check(mesh, edge_lengths(mesh, new), "euclidean").ok
    np.testing.assert_array_equal(new.u, dcs.u)
    for ev in events:
        assert ev.area_after == pytest.approx(total, abs=1e-9)
        assert ev.slack_after > -1e-10
    # idempotent
    again = flip_to_delaunay(mesh, new)
    assert again[2] == []


@pytest.mark.parametrize("seed", range(10))
def test_hyperbolic_flips_preserve_area(seed):
    rng = np.random.default_rng(seed)
    mesh = preset("genus2_one_vertex")
    base = reference_structure(mesh, "vs-hyperbolic")
    lengths = edge_lengths(mesh, base) * rng.uniform(0.7, 1.3, mesh.num_edges)
    if nondegeneracy_check(mesh, lengths):
        pytest.skip("degenerate draw")
    st0 = metric_state(mesh, lengths, "hyperbolic")
    area = st0.face_areas.sum()
    assert st0.K.sum() - 2 * math.pi * euler_characteristic(mesh) == pytest.approx(area, abs=1e-9)
    new_mesh, new, events = flip_metric_to_delaunay(mesh, lengths, "hyperbolic")
    st1 = metric_state(new_mesh, new, "hyperbolic")
    assert st1.face_areas.sum() == pytest.approx(area, abs=1e-9)
    assert st1.K.sum() - 2 * math.pi * euler_characteristic(new_mesh) == pytest.approx(area, abs=1e-9)
    for ev in events:
        assert ev.area_after == pytest.approx(ev.area_before, abs=1e-9)
    assert delaunay_check(new_mesh, new, "hyperbolic").ok


@pytest.mark.parametrize("seed", range(10))
def test_weighted_and_metric_flips_agree(seed):
    dcs = random_torus_vs(np.random.default_rng(100 + seed), 1.0)
    m1, d1, e1 = flip_to_delaunay(TORUS, dcs)
    m2, d2, e2 = flip_to_delaunay(TORUS, dcs, weighted=True)
    assert [ev.edge for ev in e1] == [ev.edge for ev in e2]
    assert canonical_form(m1) == canonical_form(m2)
    np.testing.assert_allclose(edge_lengths(m1, d1), edge_lengths(m2, d2), rtol=1e-12)


def test_flip_lengths_match_geometry():
    dcs = random_torus_vs(np.random.default_rng(3), 1.0)
    lengths = edge_lengths(TORUS, dcs)
    report = delaunay_check(TORUS, lengths, "euclidean")
    assert report.violations
    e = report.violations[0]
    _, q = quad_lengths(TORUS, lengths, e)
    mesh, new, events = flip_to_delaunay(TORUS, dcs)
    assert events[0].new_length == pytest.approx(flip_diagonal_length(*q, "euclidean"), rel=1e-14)
    # eta on the new edge reproduces the flipped length through the vertex-scaling law
    np.testing.assert_allclose(edge_lengths(mesh, new)[events[-1].edge], events[-1].new_length, rtol=1e-12)


# ------------------------------------------------------------- transport

def test_transport_reaches_target_in_delaunay_state():
    rng = np.random.default_rng(0)
    base = reference_structure(TORUS, "vs-euclidean")
    u = rng.uniform(-1, 1, 16)
    u -= u.mean()
    mesh, dcs, events = conformal_transport(TORUS, base, u)
    np.testing.assert_array_equal(dcs.u, u)
    assert delaunay_check(mesh, edge_lengths(mesh, dcs), "euclidean").ok
    assert events
    # coming back lands on the starting metric
    back_mesh, back, _ = conformal_transport(mesh, dcs, base.u)
    np.testing.assert_allclose(np.sort(edge_lengths(back_mesh, back)), np.sort(edge_lengths(TORUS, base)),
                               atol=1e-9)


def test_transport_needs_vertex_scaling():
    with pytest.raises(ValueError):
        conformal_transport(TET, equilateral_cp(TET), np.zeros(4))


# ---------------------------------------------------------- surgery flows

def test_equilateral_torus_needs_no_steps():
    base = reference_structure(TORUS, "vs-euclidean")
    result = run_flow_with_surgery(TORUS, base, FlowConfig(target=np.zeros(16)))
    assert result.converged and result.num_steps == 0 and result.flip_count == 0


@pytest.mark.parametrize("seed", [1, 2])
def test_random_torus_flow_with_surgery(seed):
    rng = np.random.default_rng(seed)
    base = reference_structure(TORUS, "vs-euclidean")
    u = rng.uniform(-1, 1, 16)
    mesh, dcs, _ = conformal_transport(TORUS, base, u - u.mean())
    checks = []

    def cb(record, state):
        checks.append(delaunay_check(state.mesh, state.lengths, "euclidean").ok)

    result = run_flow(mesh, dcs, FlowConfig(target=np.zeros(16), surgery="delaunay"), callback=cb)
    assert result.converged
    assert np.abs(result.records[-1].K).max() <= 1e-8
    assert all(checks)
    assert conservation_monitor(result) <= 1e-8 * max(1.0, result.records[-1].t)
    for ev in result.flip_events:
        assert ev.area_after == pytest.approx(ev.area_before, abs=1e-9)


def test_surgery_needs_vertex_scaling():
    with pytest.raises(PreconditionViolated):
        run_flow_with_surgery(TET, equilateral_cp(TET), FlowConfig(target=np.full(4, math.pi)))


def test_thurston_packing_never_flips():
    mesh = preset("icosahedron")
    rng = np.random.default_rng(2)
    n = mesh.num_vertices
    dcs = DiscreteConformalStructure("euclidean", np.ones(n), rng.uniform(0, 1, mesh.num_edges),
                                     rng.uniform(-0.5, 0.5, n))
    result = weighted_delaunay_surgery_mode(mesh, dcs, FlowConfig(target=uniform_target(mesh, "euclidean"),
                                                                 project_sum=0.0))
    assert result.converged and result.flip_count == 0


def test_mixed_structure_experimental_mode():
    mesh = preset("icosahedron")
    ref = reference_structure(mesh, "mixed")
    start = ref.with_u(np.random.default_rng(4).uniform(-0.3, 0.3, mesh.num_vertices))
    cfg = FlowConfig(target=uniform_target(mesh, "euclidean"), t_max=50.0)
    try:
        result = weighted_delaunay_surgery_mode(mesh, start, cfg)
    except StepFailure as exc:
        result = exc.trace
    assert result.status in ("converged", "t_max", "max_steps", "step_failure")
    assert len(result.records) >= 1
    assert set(result.summary()) >= {"converged", "flip_count", "final_residual"}
