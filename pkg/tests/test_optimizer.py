import numpy as np
import pytest

from pia.bench import eval_drops
from pia.channel import ScenarioConfig, UserDrop, channel_tensor, sample_drops
from pia.geometry import (GridSpec, MovementRegion, check_feasible, make_reference_grid,
                          region_bounds)
from pia.optimizer import (MaObjective, PiaObjective, PsoConfig, ma_objective,
                           optimize_ma, optimize_pia, pia_objective, pso_optimize)
from pia.precoding import sum_rate, sum_rate_batch
from pia.seeding import stream

LAM = 0.1


def surrogate(a, b):
    return lambda x: -((x[0, 0] - a) ** 2 + (x[0, 1] - b) ** 2)


def test_concave_surrogate_converges():
    region = MovementRegion((0.0, 4.0), 0.5, 0.5)
    a, b = 0.1, 3.9
    res = pso_optimize([region], LAM / 2, surrogate(a, b),
                       PsoConfig(n_p=30, n_pso=100, seed=3), wavelength=LAM)
    assert np.hypot(*(res.layout.positions[0] - [a, b])) < 1e-3
    vals = [r.gbest_value for r in res.trace]
    assert all(x <= y for x, y in zip(vals, vals[1:]))
    assert len(res.trace) == 101


def test_frozen_dynamics_return_best_initial():
    _, regions = make_reference_grid(GridSpec(2, 2, LAM))
    seen = []

    def objective(x):
        seen.append(x.copy())
        return float(x[:, 0].sum())

    pso = PsoConfig(n_p=8, n_pso=5, inertia=0.0, c1=0.0, c2=0.0, seed=1)
    res = pso_optimize(regions, LAM / 2, objective, pso, wavelength=LAM)
    initial = seen[:8]
    for t in range(1, 6):
        for p in range(8):
            np.testing.assert_array_equal(seen[t * 8 + p], initial[p])
    best = int(np.argmax(res.initial_values))
    np.testing.assert_array_equal(res.layout.positions, initial[best])
    assert res.value == res.initial_values.max()


def test_zero_iterations_is_best_random_layout():
    _, regions = make_reference_grid(GridSpec(2, 2, LAM))
    res = pso_optimize(regions, LAM / 2, lambda x: float(x.sum()),
                       PsoConfig(n_p=5, n_pso=0), wavelength=LAM)
    assert len(res.trace) == 1
    assert res.value == res.initial_values.max()


def test_every_evaluated_layout_is_feasible():
    spec = GridSpec(3, 3, LAM)
    _, regions = make_reference_grid(spec)

    def objective(x):
        assert check_feasible(x, regions, LAM / 2).feasible
        # reward clustering at the center to make the separation constraint bind
        return -float(np.sum((x - [0.0, spec.center_height]) ** 2))

    res = pso_optimize(regions, LAM / 2, objective, PsoConfig(n_p=10, n_pso=30, seed=5),
                       wavelength=LAM)
    assert check_feasible(res.layout, regions, LAM / 2).feasible


def test_penalty_mode_runs_and_stays_in_boxes():
    spec = GridSpec(2, 2, LAM)
    _, regions = make_reference_grid(spec)
    lo, hi = region_bounds(regions)

    def objective(x):
        assert np.all(x >= lo) and np.all(x <= hi)
        return -float(np.sum((x - [0.0, spec.center_height]) ** 2))

    res = pso_optimize(regions, LAM / 2, objective,
                       PsoConfig(n_p=10, n_pso=20, constraint_mode="penalty"), wavelength=LAM)
    vals = [r.gbest_value for r in res.trace]
    assert all(x <= y for x, y in zip(vals, vals[1:]))


def test_pso_config_validation():
    for kwargs in (dict(n_p=0), dict(inertia=1.5), dict(c1=-1), dict(v_max=0.0),
                   dict(q=0), dict(constraint_mode="nope")):
        with pytest.raises(ValueError):
            PsoConfig(**kwargs)


def test_pia_objective_single_point_mass(scenario):
    sc = ScenarioConfig(rho_min=50.0, rho_max=50.0, phi_min=0.2, phi_max=0.2, k=1, n=2)
    layout, _ = make_reference_grid(GridSpec(2, 2, sc.wavelength))
    drop = UserDrop([[50 * np.cos(0.2), 50 * np.sin(0.2)]])
    h = channel_tensor(layout.positions, drop.positions, sc)
    expected = sum_rate(h, sc.noise_power, sc.p_max)[0]
    got = pia_objective(layout, sc, 1, np.random.default_rng(0))
    assert got == pytest.approx(expected, rel=1e-12)
    assert ma_objective(layout, drop, sc) == pytest.approx(expected, rel=1e-12)


def test_pia_objective_monte_carlo_consistency(scenario, grid):
    layout, _ = make_reference_grid(grid)
    drops = sample_drops(scenario, np.random.default_rng(11), 50)
    small = sum_rate_batch(channel_tensor(layout.positions, drops, scenario),
                           scenario.noise_power, scenario.p_max)
    se = small.std(ddof=1) / np.sqrt(len(small))
    large = pia_objective(layout, scenario, 5000, np.random.default_rng(12))
    assert abs(small.mean() - large) <= 3 * se


def test_pia_objective_common_drops_per_iteration(scenario):
    obj = PiaObjective(scenario, 4, seed=2)
    np.testing.assert_array_equal(obj.drops(3), obj.drops(3))
    assert not np.array_equal(obj.drops(3), obj.drops(4))
    expected = sample_drops(scenario, stream(2, "pia-drops", 3, 1))
    np.testing.assert_array_equal(obj.drops(3)[1], expected)


def test_ma_objective_user_relabeling(scenario, grid):
    layout, _ = make_reference_grid(grid)
    drop = sample_drops(scenario, np.random.default_rng(4))
    perm = np.random.default_rng(5).permutation(scenario.k)
    a = ma_objective(layout, drop, scenario)
    b = ma_objective(layout, drop[perm], scenario)
    assert b == pytest.approx(a, rel=1e-9)


def test_ma_objective_single_antenna_position_insensitive():
    sc = ScenarioConfig(k=1, n=1)
    _, regions = make_reference_grid(GridSpec(1, 1, sc.wavelength))
    drop = sample_drops(sc, np.random.default_rng(6))
    lo, hi = region_bounds(regions)
    r = np.random.default_rng(7)
    vals = [ma_objective(lo + (hi - lo) * r.random(lo.shape), drop, sc) for _ in range(50)]
    assert (max(vals) - min(vals)) / np.mean(vals) < 0.01


def test_optimize_pia_feasible_and_deterministic(scenario, grid):
    pso = PsoConfig(n_p=6, n_pso=4, q=8, seed=21)
    a = optimize_pia(grid, scenario, pso)
    b = optimize_pia(grid, scenario, pso)
    assert a.layout == b.layout
    assert [r.gbest_value for r in a.trace] == [r.gbest_value for r in b.trace]
    _, regions = make_reference_grid(grid)
    assert check_feasible(a.layout, regions, grid.min_separation).feasible


def test_optimize_pia_beats_uniform_sparse_array(scenario, grid):
    res = optimize_pia(grid, scenario, PsoConfig(n_p=10, n_pso=10, q=20, seed=8))
    uspa, _ = make_reference_grid(grid)
    drops = eval_drops(scenario, 500, seed=99)

    def score(layout):
        return sum_rate_batch(channel_tensor(layout.positions, drops, scenario),
                              scenario.noise_power, scenario.p_max).mean()
    assert score(res.layout) >= score(uspa)


def test_optimize_ma_deterministic_and_not_worse_than_init(scenario, grid):
    drop = sample_drops(scenario, np.random.default_rng(3))
    pso = PsoConfig(n_p=8, n_pso=5, seed=2)
    a = optimize_ma(grid, scenario, drop, pso)
    b = optimize_ma(grid, scenario, drop, pso)
    assert a.layout == b.layout
    assert a.value >= a.initial_values.max()
    assert ma_objective(a.layout, drop, scenario) == pytest.approx(a.value, rel=1e-12)
    init_only = optimize_ma(grid, scenario, drop, PsoConfig(n_p=8, n_pso=0, seed=2))
    assert init_only.value == init_only.initial_values.max()


def test_threads_do_not_change_results(scenario, grid):
    pso = PsoConfig(n_p=7, n_pso=3, q=6, seed=4)
    runs = [optimize_pia(grid, scenario, pso, threads=t) for t in (1, 3)]
    assert runs[0].layout == runs[1].layout
    assert [r.gbest_value for r in runs[0].trace] == [r.gbest_value for r in runs[1].trace]


def test_swarm_size_helps_in_median(scenario, grid):
    drop = sample_drops(scenario, np.random.default_rng(17))
    obj = MaObjective(scenario, drop)
    _, regions = make_reference_grid(grid)
    finals = {}
    for n_p in (10, 60):
        finals[n_p] = [pso_optimize(regions, grid.min_separation, obj,
                                    PsoConfig(n_p=n_p, n_pso=10, seed=s),
                                    wavelength=grid.wavelength).value for s in range(20)]
    assert np.median(finals[60]) >= np.median(finals[10])
