from __future__ import annotations

import numpy as np
import pytest

from app.models.grid import BuildingMask
from app.models.solver import SolverConfig, SolverState, WindDirection
from app.services.projection import ProjectionError
from app.services.scene import rasterize_scene
from app.services.solver import (
    FlowSolver,
    inflow_for,
    inflow_profile,
    kinetic_energy,
    run_simulation,
    smagorinsky,
)


def test_inflow_profile_power_law(small_grid):
    cfg = SolverConfig(u_ref=5.0, z_ref=10.0, alpha=0.25)
    assert inflow_profile(10.0, cfg) == pytest.approx(5.0)
    assert inflow_profile(20.0, cfg) == pytest.approx(5.0 * 2**0.25)
    assert inflow_profile(10.0 / 16, cfg) == pytest.approx(2.5)
    assert inflow_profile(3.0, SolverConfig(alpha=0.0)) == pytest.approx(5.0)
    assert inflow_profile(0.0, cfg, small_grid) == pytest.approx(inflow_profile(1.0, cfg))
    assert inflow_profile(0.0, cfg) == pytest.approx(inflow_profile(cfg.profile_floor, cfg))
    assert inflow_profile(0.0, cfg) > 0.0
    with pytest.raises(ValueError):
        inflow_profile(-1.0, cfg)


@pytest.mark.parametrize(
    "direction, axis, side",
    [("west", 0, "lo"), ("east", 0, "hi"), ("south", 1, "lo"), (90, 1, "hi")],
)
def test_inflow_faces(direction, axis, side):
    inflow = inflow_for(WindDirection.parse(direction))
    assert (inflow.axis, inflow.side) == (axis, side)
    assert inflow.outflow_side != side


def test_smagorinsky_of_linear_shear():
    z = np.arange(5, dtype=float)
    uc = np.broadcast_to(0.3 * z[None, None, :], (4, 4, 5)).copy()
    zeros = np.zeros_like(uc)
    nu_t = smagorinsky(uc, zeros, zeros, (1.0, 1.0, 1.0), c_s=0.2)
    np.testing.assert_allclose(nu_t, 0.2**2 * 0.3, rtol=1e-12)
    assert not smagorinsky(zeros, zeros, zeros, (1.0, 1.0, 1.0), 0.2).any()


def test_uniform_flow_is_steady(small_grid):
    cfg = SolverConfig(alpha=0.0, ground="free_slip", smagorinsky=0.1)
    solver = FlowSolver(BuildingMask.empty(small_grid), cfg)
    state = solver.initial_state()
    for _ in range(3):
        state, report = solver.step(state)
        assert report.residual <= 1e-4
    np.testing.assert_allclose(state.u, 5.0, atol=1e-8)
    np.testing.assert_allclose(state.v, 0.0, atol=1e-8)
    np.testing.assert_allclose(state.w, 0.0, atol=1e-8)


def test_closed_box_energy_does_not_grow(small_grid, rng):
    cfg = SolverConfig(boundary="closed_box", initial="rest")
    assert cfg.interpolation == "cubic"
    solver = FlowSolver(BuildingMask.empty(small_grid), cfg)
    state = SolverState.zeros(solver.mask)
    state.u[...] = 1.0 + 0.2 * rng.normal(size=state.u.shape)
    state.v[...] = 0.2 * rng.normal(size=state.v.shape)
    state.w[...] = 0.2 * rng.normal(size=state.w.shape)
    solver.apply_boundaries(state)
    solver.project(state)
    energies = [kinetic_energy(state)]
    for _ in range(20):
        state, _ = solver.step(state)
        energies.append(kinetic_energy(state))
    for before, after in zip(energies, energies[1:]):
        assert after <= before * (1.0 + 1e-10)
    assert energies[-1] < energies[0]


def test_steps_around_a_building(small_scene):
    mask = rasterize_scene(small_scene)
    solver = FlowSolver(mask, SolverConfig())
    state = solver.initial_state()
    for _ in range(3):
        state, report = solver.step(state)
        assert report.residual <= 1e-4
    speed = state.speed()
    assert np.all(np.isfinite(speed))
    assert np.all(speed[mask.solid] == 0.0)
    assert speed[mask.fluid].max() > 0.0
    assert state.step_index == 3
    assert state.time == pytest.approx(3 * solver.dt)


def _run(mask, cfg, steps=3):
    solver = FlowSolver(mask, cfg)
    state = solver.initial_state()
    for _ in range(steps):
        state, _ = solver.step(state)
    return state


def test_cold_thermal_run_matches_isothermal_run(small_scene):
    mask = rasterize_scene(small_scene)
    plain = _run(mask, SolverConfig())
    cold = _run(mask, SolverConfig(thermal=True, grashof=1e8))
    assert cold.theta is not None
    assert not cold.theta.any()
    for name in ("u", "v", "w", "p"):
        np.testing.assert_array_equal(getattr(cold, name), getattr(plain, name))


def test_warm_inflow_is_transported_and_lifts(small_scene):
    mask = rasterize_scene(small_scene)
    plain = _run(mask, SolverConfig())
    warm = _run(mask, SolverConfig(thermal=True, grashof=1e8, inflow_temperature=1.0))
    assert np.all(np.isfinite(warm.theta))
    np.testing.assert_array_equal(warm.theta[0][mask.fluid[0]], 1.0)
    assert np.all(warm.theta[mask.solid] == 0.0)
    # heat has left the inflow layer
    assert warm.theta[1:][mask.fluid[1:]].max() > 0.1
    assert np.abs(warm.w - plain.w).max() > 0.0


def test_inflow_face_carries_profile_after_one_step_from_rest(small_scene):
    mask = rasterize_scene(small_scene)
    cfg = SolverConfig(initial="rest")
    solver = FlowSolver(mask, cfg)
    state = solver.initial_state()
    assert not state.u.any()
    state, _ = solver.step(state)
    grid = mask.grid
    expected = inflow_profile(grid.cell_centers(2) - grid.origin[2], cfg, grid)
    np.testing.assert_allclose(state.u[0], np.broadcast_to(expected, state.u[0].shape), rtol=1e-12)


def test_runs_are_bitwise_repeatable(small_scene):
    first = run_simulation(small_scene, SolverConfig(), n_steps=3)
    second = run_simulation(small_scene, SolverConfig(), n_steps=3)
    for a, b in zip(first.sequence, second.sequence):
        assert a.values.tobytes() == b.values.tobytes()


def test_jacobi_failure_is_raised(small_scene):
    cfg = SolverConfig(pressure_solver="jacobi", pressure_max_iters=1)
    solver = FlowSolver(rasterize_scene(small_scene), cfg)
    with pytest.raises(ProjectionError):
        solver.initial_state()


def test_run_simulation_stride_and_summary(small_scene):
    result = run_simulation(small_scene, SolverConfig(direction="north"), n_steps=4, stride=2)
    dt = result.summary["dt"]
    assert len(result.sequence) == 2
    assert result.sequence.dt == pytest.approx(2 * dt)
    assert result.summary["output_dt"] == pytest.approx(2 * dt)
    assert len(result.summary["residuals"]) == 4
    assert result.sequence[0].values.dtype == np.float32
    assert result.summary["config"]["direction"] == "north"


@pytest.mark.parametrize("kwargs", [{"n_steps": 0}, {"n_steps": 2, "stride": 0}])
def test_run_simulation_rejects_bad_counts(small_scene, kwargs):
    with pytest.raises(ValueError):
        run_simulation(small_scene, SolverConfig(), **kwargs)
