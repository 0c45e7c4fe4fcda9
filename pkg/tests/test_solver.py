"""Descent solver, schedule, refinement, and minimality tests.

The tridiagonal linear-solve oracle is assembled inline with dense closed
forms; the transcendental profile for the constant-datum benchmark is the
standard cosh ratio, so the solver is checked against two independent
routes at once.
"""

import math

import numpy as np
import pytest

from varlab.functional import ProblemSpec, eval_J, eval_JM, make_datum
from varlab.grid import (
    DiscreteField,
    build_interval_grid,
    build_rect_grid,
    field_from_values,
    zero_field,
)
from varlab.library import make_coefficient, make_integrand, make_library_datum
from varlab.solver import (
    MScheduleTrace,
    SolveTrace,
    minimality_check,
    minimize_inner,
    refinement_study,
    solve_M_schedule,
    solve_outer,
)


def _spec(cells=64, integrand="quadratic", coeff=("zero", None),
          datum=("constant", None), **kw):
    grid = build_interval_grid(0.0, 1.0, cells)
    return ProblemSpec(
        grid=grid, integrand=make_integrand(integrand),
        b=make_coefficient(grid, coeff[0], coeff[1]),
        f=make_library_datum(grid, datum[0], datum[1]), **kw)


def _tridiagonal_solution(cells):
    """Dense closed-form assembly of (2K + M) u = F for f ≡ 1."""
    n = cells + 1
    h = 1.0 / cells
    K = (np.diag(np.full(n, 2.0)) - np.diag(np.ones(n - 1), 1)
         - np.diag(np.ones(n - 1), -1)) / h
    M = (np.diag(np.full(n, 4.0)) + np.diag(np.ones(n - 1), 1)
         + np.diag(np.ones(n - 1), -1)) * h / 6
    A = 2 * K + M
    F = np.full(n, h)
    A[0] = 0; A[0, 0] = 1; A[-1] = 0; A[-1, -1] = 1
    F[0] = F[-1] = 0
    return np.linalg.solve(A, F)


def _closed_form(x):
    # minimizer profile for the b = 0, f = 1 case on (0, 1)
    return 1 - np.cosh((x - 0.5) / math.sqrt(2)) / math.cosh(1 / (2 * math.sqrt(2)))


# ------------------------------------------------------------ inner solver


def test_zero_datum_zero_iterations():
    spec = _spec(cells=16, datum=("constant", {"value": 0.0}))
    u, rec = minimize_inner(spec, 1.0, zero_field(spec.grid))
    assert rec.iterations == 0
    assert rec.converged
    assert np.all(u.values == 0.0)


def test_quadratic_matches_tridiagonal_oracle():
    spec = _spec(cells=64)
    u, rec = minimize_inner(spec, 1.0, zero_field(spec.grid))
    assert rec.converged
    assert np.max(np.abs(u.values - _tridiagonal_solution(64))) <= 1e-8


def test_quadratic_matches_closed_form():
    spec = _spec(cells=64)
    u, trace = solve_outer(spec)
    assert trace.converged
    gap = np.max(np.abs(u.values - _closed_form(spec.grid.nodes[:, 0])))
    assert gap <= 1e-6


def test_large_damping_energy_below_zero():
    spec = _spec(cells=32, coeff=("constant", {"value": 50.0}))
    u, trace = solve_outer(spec)
    assert trace.converged
    assert trace.stages[-1].energy <= 0.0
    assert eval_J(spec, u) <= 0.0


def test_descent_contract_per_stage():
    spec = _spec(cells=32, coeff=("constant", {"value": 2.0}))
    _, rec = minimize_inner(spec, 4.0, zero_field(spec.grid))
    hist = rec.energy_history
    assert rec.iterations > 0
    assert all(b < a for a, b in zip(hist, hist[1:]))


def test_start_validation():
    spec = _spec(cells=8)
    other = build_interval_grid(0.0, 1.0, 9)
    with pytest.raises(ValueError):
        minimize_inner(spec, 1.0, zero_field(other))
    bad = DiscreteField(grid=spec.grid, values=np.ones(spec.grid.n_nodes))
    with pytest.raises(ValueError):
        minimize_inner(spec, 1.0, bad)


def test_non_convergence_is_reported_not_raised():
    spec = _spec(cells=32, integrand="logaug",
                 coeff=("constant", {"value": 1.0}),
                 solver_tol=1e-15, max_iter=2)
    _, rec = minimize_inner(spec, 1.0, zero_field(spec.grid))
    assert not rec.converged
    assert rec.iterations == 2


def test_warm_start_independence_convex_case():
    spec = _spec(cells=64)
    u_cold, rec_cold = minimize_inner(spec, 1.0, zero_field(spec.grid))
    rng = np.random.default_rng(5)
    vals = np.where(spec.grid.boundary_mask, 0.0,
                    rng.uniform(-0.5, 0.5, spec.grid.n_nodes))
    u_warm, rec_warm = minimize_inner(
        spec, 1.0, DiscreteField(grid=spec.grid, values=vals))
    assert rec_cold.converged and rec_warm.converged
    assert np.max(np.abs(u_cold.values - u_warm.values)) <= 1e-6


# --------------------------------------------------------------- M schedule


def test_m_schedule_fixpoint_coincidence():
    spec = _spec(cells=64, coeff=("constant", {"value": 1.0}),
                 datum=("sine", None))
    u, trace = solve_M_schedule(spec, spec.f, m_schedule=(2.0, 4.0, 8.0))
    assert trace.fixpoint_found
    assert trace.m_fixpoint_index == 0
    f0, f1, f2 = (r.field.values for r in trace.records)
    assert np.max(np.abs(f1 - f0)) <= 1e-8
    assert np.max(np.abs(f2 - f0)) <= 1e-8
    assert u.linf() <= 1.0 * (1 + 1e-6)


def test_m_schedule_zero_datum():
    spec = _spec(cells=16, datum=("constant", {"value": 0.0}))
    u, trace = solve_M_schedule(spec, spec.f)
    assert np.all(u.values == 0.0)
    assert all(np.all(r.field.values == 0.0) for r in trace.records)
    assert trace.converged   # clamp verifiably inactive at the last level


def test_m_schedule_requires_sup_bound():
    spec = _spec(cells=16, datum=("power-singularity", None))
    with pytest.raises(ValueError):
        solve_M_schedule(spec, spec.f)


def test_m_schedule_without_fixpoint_is_flagged():
    # clamp level stuck below the minimizer's amplitude: no fixpoint
    spec = _spec(cells=32, coeff=("constant", {"value": 1.0}))
    u, trace = solve_M_schedule(spec, spec.f, m_schedule=(0.02,))
    assert u.linf() > 0.02
    assert not trace.fixpoint_found
    assert not trace.converged


def test_warm_start_guard_discards_uphill_starts():
    spec = _spec(cells=32, coeff=("constant", {"value": 1.0}))
    cold, _ = solve_M_schedule(spec, spec.f)
    rng = np.random.default_rng(1)
    vals = np.where(spec.grid.boundary_mask, 0.0,
                    rng.uniform(-5, 5, spec.grid.n_nodes))
    wild = DiscreteField(grid=spec.grid, values=vals)
    assert eval_JM(spec, wild, 1.0) > 0
    warm, _ = solve_M_schedule(spec, spec.f, start=wild)
    np.testing.assert_array_equal(warm.values, cold.values)


def test_warm_start_kept_when_energy_is_negative():
    spec = _spec(cells=32, coeff=("constant", {"value": 1.0}))
    cold, _ = solve_M_schedule(spec, spec.f)
    half = DiscreteField(grid=spec.grid, values=0.5 * cold.values)
    assert eval_JM(spec, half, 1.0) < 0
    warm, _ = solve_M_schedule(spec, spec.f, start=half)
    assert np.max(np.abs(warm.values - cold.values)) <= 1e-6


# -------------------------------------------------------------- outer solve


def test_bounded_datum_multistage_stages_coincide():
    spec = _spec(cells=32, coeff=("constant", {"value": 1.0}),
                 datum=("sine", None), n_schedule=(1.0, 2.0, 4.0))
    u, trace = solve_outer(spec)
    assert trace.converged
    assert all(d <= 1e-8 for d in trace.stabilization_history)
    base = trace.stages[0].field.values
    for stage in trace.stages[1:]:
        assert np.max(np.abs(stage.field.values - base)) <= 1e-8


def test_unbounded_datum_stabilization_decays():
    spec = _spec(cells=32, coeff=("constant", {"value": 1.0}),
                 datum=("power-singularity", None))
    u, trace = solve_outer(spec)
    assert trace.converged
    levels = [s.n_level for s in trace.stages]
    assert levels == [1.0, 2.0, 4.0, 8.0, 16.0]
    hist = trace.stabilization_history
    assert len(hist) == 4
    assert all(b < a for a, b in zip(hist, hist[1:]))
    # energies measured with the exact datum are non-increasing
    energies = [eval_J(spec, s.field) for s in trace.stages]
    assert all(b <= a + 1e-10 * (1 + abs(a))
               for a, b in zip(energies, energies[1:]))


def test_zero_comparison_energy_signs():
    nontrivial = _spec(cells=32, coeff=("constant", {"value": 1.0}),
                       datum=("sine", None))
    _, trace = solve_outer(nontrivial)
    assert trace.stages[-1].energy <= 0.0
    trivial = _spec(cells=32, datum=("constant", {"value": 0.0}))
    _, trace0 = solve_outer(trivial)
    assert trace0.stages[-1].energy == 0.0


def test_outer_defaults_bounded_datum_single_stage():
    spec = _spec(cells=16, datum=("step", {"high": 3.0, "low": -1.0}))
    _, trace = solve_outer(spec)
    assert [s.n_level for s in trace.stages] == [4.0]   # first power >= 3


def test_trace_iteration_bookkeeping():
    spec = _spec(cells=32, coeff=("constant", {"value": 1.0}),
                 datum=("sine", None))
    _, trace = solve_outer(spec)
    assert isinstance(trace, SolveTrace)
    for stage in trace.stages:
        assert isinstance(stage.inner, MScheduleTrace)
        for rec in stage.inner.records:
            assert rec.iterations <= spec.max_iter
            if rec.converged:
                assert rec.residual_linf <= spec.solver_tol
            assert len(rec.energy_history) == rec.iterations + 1
    assert len(trace.energy_values) == sum(
        len(r.energy_history) for s in trace.stages for r in s.inner.records)


def test_2d_solve_smoke():
    grid = build_rect_grid(8, 8, 1.0, 1.0)
    spec = ProblemSpec(grid=grid, integrand=make_integrand("quadratic"),
                       b=make_coefficient(grid, "constant"),
                       f=make_library_datum(grid, "sine"))
    u, trace = solve_outer(spec)
    assert trace.converged
    assert trace.stages[-1].energy < 0
    assert u.linf() <= 1.0 * (1 + 1e-6)


# --------------------------------------------------------------- refinement


def test_refinement_order_against_closed_form():
    def mk(cells):
        return _spec(cells=cells)
    rep = refinement_study(mk, (16, 32, 64),
                           exact=lambda p: _closed_form(p[:, 0]))
    assert all(o >= 1.9 for o in rep.reference_orders)
    assert all(b < a for a, b in zip(rep.distances, rep.distances[1:]))


def test_refinement_zero_datum_all_zero():
    def mk(cells):
        return _spec(cells=cells, datum=("constant", {"value": 0.0}))
    rep = refinement_study(mk, (8, 16, 32))
    assert all(d == 0.0 for d in rep.distances)
    assert all(math.isinf(o) for o in rep.orders)


def test_refinement_nonquadratic_cauchy_decay():
    def mk(cells):
        return _spec(cells=cells, integrand="logaug",
                     coeff=("constant", {"value": 1.0}), datum=("sine", None))
    rep = refinement_study(mk, (8, 16, 32))
    assert all(b < a for a, b in zip(rep.distances, rep.distances[1:]))


def test_refinement_2d_path():
    def mk(cells):
        grid = build_rect_grid(cells, cells, 1.0, 1.0)
        return ProblemSpec(grid=grid, integrand=make_integrand("quadratic"),
                           b=make_coefficient(grid, "constant"),
                           f=make_library_datum(grid, "sine"))
    rep = refinement_study(mk, (4, 8, 16))
    assert all(b < a for a, b in zip(rep.distances, rep.distances[1:]))
    assert rep.orders[0] > 1.5


def test_refinement_validation():
    with pytest.raises(ValueError):
        refinement_study(lambda c: _spec(cells=c), (16,))
    with pytest.raises(ValueError):
        refinement_study(lambda c: _spec(cells=c), (32, 16))


# --------------------------------------------------------------- minimality


def test_minimality_passes_on_computed_minimizer():
    spec = _spec(cells=32, coeff=("constant", {"value": 1.0}),
                 datum=("sine", None))
    u, _ = solve_outer(spec)
    report = minimality_check(spec, u, n_samples=50, seed=0)
    assert report.passed
    assert len(report.entries) == 50
    assert report.min_slack >= -report.tolerance * (1 + abs(report.energy))
    labels = {e[0] for e in report.entries}
    assert any(l.startswith("truncate") for l in labels)
    assert any(l.startswith("scale") for l in labels)
    assert any(l.startswith("random") for l in labels)


def test_minimality_flags_non_minimizer():
    spec = _spec(cells=32, coeff=("constant", {"value": 1.0}),
                 datum=("sine", None))
    u, _ = solve_outer(spec)
    fake = DiscreteField(grid=spec.grid, values=2.0 * u.values)
    report = minimality_check(spec, fake, n_samples=50, seed=0)
    assert not report.passed
    assert report.min_slack < 0


def test_minimality_deterministic_in_seed():
    spec = _spec(cells=16, coeff=("constant", {"value": 1.0}),
                 datum=("sine", None))
    u, _ = solve_outer(spec)
    a = minimality_check(spec, u, n_samples=20, seed=3)
    b = minimality_check(spec, u, n_samples=20, seed=3)
    assert a.entries == b.entries
