import math

import numpy as np
import pytest

from ordino.dgp import (
    BLOCK_SIZE,
    AssignmentError,
    ConfigError,
    CovariateLaw,
    DesignConfig,
    assign_response,
    assign_responses,
    dataset_from_csv,
    dataset_to_csv,
    design,
    read_csv,
    simulate,
    simulate_full,
    write_csv,
)
from ordino.likelihood import Dataset, cell_prob_matrix
from ordino.structure import ResponseSpec, ThresholdStructure, random_coherent_structure


# designs ------------------------------------------------------------------------------


def test_design2_truths():
    cfg = design(2)
    assert tuple(cfg.beta1) + tuple(cfg.beta2) == (1.5, -4.0, 3.0)
    assert cfg.rho == 0.5
    assert cfg.spec == ResponseSpec(4, 3)
    assert cfg.draws["w1"].params["points"] == [-2.5, -1.5, -0.5, 0.5]


def test_design3_second_grid():
    ts = design(3).thresholds
    assert ts.interior2[:, 0].tolist() == [-4.0, -2.0, -2.0, 1.0, 3.0, 7.0, 7.0]
    assert design(3).spec == ResponseSpec(7, 2)


def test_design1_variants():
    assert design(1).name == "design1_table" and tuple(design(1).beta2) == (0.5,)
    assert tuple(design("design1_text").beta2) == (1.0,)
    sw = design("design1_swapped")
    assert sw.thresholds.interior1.tolist() == [[1.0, 1.0]]
    assert sw.thresholds.interior2[:, 0].tolist() == [-2.0, 1.5]
    assert design("2").name == design(2).name == "design2"


@pytest.mark.parametrize("bad", [0, 4, "design4", None, 2.5])
def test_unknown_design(bad):
    with pytest.raises(ConfigError):
        design(bad)


def test_config_validation():
    cfg = design(2)
    with pytest.raises(ConfigError):
        DesignConfig("bad", cfg.thresholds, (1.0,), cfg.beta2, 0.5, cfg.draws, cfg.cols1, cfg.cols2)
    with pytest.raises(ConfigError):
        DesignConfig("bad", cfg.thresholds, cfg.beta1, cfg.beta2, 0.5, cfg.draws, ("x", "nope"), cfg.cols2)
    with pytest.raises(ConfigError):
        CovariateLaw("uniform", {"a": 1.0, "b": 1.0})
    with pytest.raises(ConfigError):
        CovariateLaw("discrete", {"points": [0.0, 1.0], "probs": [0.5, 0.6]})
    with pytest.raises(ConfigError):
        CovariateLaw("cauchy", {})


@pytest.mark.parametrize("law,mean,var", [
    (CovariateLaw("uniform", {"a": -3.0, "b": 3.0}), 0.0, 3.0),
    (CovariateLaw("discrete", {"points": [-2.5, -1.5, -0.5, 0.5], "probs": [0.25] * 4}), -1.0, 1.25),
    (CovariateLaw("student_t", {"df": 5.0}), 0.0, 5.0 / 3.0),
    (CovariateLaw("logistic", {"loc": 2.0, "scale": 1.0}), 2.0, math.pi ** 2 / 3.0),
])
def test_covariate_moments(law, mean, var):
    assert law.mean() == pytest.approx(mean) and law.variance() == pytest.approx(var)
    x = law.sample(np.random.default_rng(99), 1_000_000)
    # CLT bands; the t5 variance estimate has a heavy tail, so its band is wider
    assert abs(x.mean() - mean) < 5 * math.sqrt(var / x.size)
    assert abs(x.var() - var) < (0.05 if law.kind == "student_t" else 0.01) * var


# classification --------------------------------------------------------------------------


def test_assign_examples():
    ts = design("design1_table").thresholds
    assert assign_response(ts, 0.0, 0.0) == (2, 1)
    assert assign_response(ts, -2.0, 1.0) == (1, 1)  # closed upper bounds
    assert assign_response(ts, -2.0 + 1e-12, 1.0 + 1e-12) == (1, 2)
    assert assign_response(ts, 1.6, 5.0) == (2, 2)


def test_assign_lattice_matches_bisection():
    ts = ThresholdStructure.lattice([-1.0, 0.0, 2.0], [-0.5, 1.5])
    rng = np.random.default_rng(0)
    y1, y2 = rng.normal(0, 2, (2, 100_000))
    j1, j2 = assign_responses(ts, y1, y2)
    assert np.array_equal(j1, np.searchsorted([-1.0, 0.0, 2.0], y1, side="left") + 1)
    assert np.array_equal(j2, np.searchsorted([-0.5, 1.5], y2, side="left") + 1)


def test_assign_incoherent_raises():
    ts = ThresholdStructure.from_interior([[-2.0, 1.5]], [[1.0], [0.8]])
    with pytest.raises(AssignmentError):
        assign_responses(ts, np.linspace(-3, 3, 61), np.full(61, 0.9))


def test_assign_random_structures_unique():
    rng = np.random.default_rng(1)
    for _ in range(30):
        spec = ResponseSpec(int(rng.integers(1, 6)), int(rng.integers(1, 5)))
        ts = random_coherent_structure(spec, rng)
        y1, y2 = rng.uniform(-6, 6, (2, 100_000))
        j1, j2 = assign_responses(ts, y1, y2)
        assert j1.min() >= 1 and j2.max() <= spec.M2


# simulation ----------------------------------------------------------------------------


def test_single_cell_simulation():
    cfg = design(1)
    one = DesignConfig("one", ThresholdStructure.empty(ResponseSpec(1, 1)), cfg.beta1, cfg.beta2, 0.2,
                       cfg.draws, cfg.cols1, cfg.cols2)
    data = simulate(one, 50, 3)
    assert np.all(data.y1 == 1) and np.all(data.y2 == 1)


def test_simulation_deterministic():
    a = simulate(design(3), 300, 7)
    b = simulate(design(3), 300, 7)
    assert dataset_to_csv(a) == dataset_to_csv(b)
    assert dataset_to_csv(simulate(design(3), 300, 8)) != dataset_to_csv(a)


def test_simulation_blocks_are_prefix_stable():
    big = simulate(design(2), BLOCK_SIZE + 100, 5)
    small = simulate(design(2), BLOCK_SIZE, 5)
    assert big.take(np.arange(BLOCK_SIZE)) == small


def test_simulation_shared_columns():
    data = simulate(design(3), 200, 1)
    assert np.array_equal(data.X1[:, 0], data.X2[:, 0])  # x enters both equations
    assert data.k1 == 2 and data.k2 == 3


@pytest.mark.parametrize("name", ["design1_table", "design2", "design3"])
def test_reclassification_reproduces_responses(name):
    cfg = design(name)
    sim = simulate_full(cfg, 3000, 11)
    d = sim.data
    j1, j2 = assign_responses(cfg.thresholds, d.X1 @ np.array(cfg.beta1) + sim.eps1,
                              d.X2 @ np.array(cfg.beta2) + sim.eps2)
    assert np.array_equal(j1, d.y1) and np.array_equal(j2, d.y2)


def test_cell_frequencies_match_model():
    cfg = design(1)
    data = simulate(cfg, 1_000_000, 21)
    freq = np.zeros((2, 2))
    np.add.at(freq, (data.y1 - 1, data.y2 - 1), 1.0 / data.n)
    # average the model grid over x ~ U[-5, 5] with Gauss-Legendre nodes
    nodes, weights = np.polynomial.legendre.leggauss(400)
    params = cfg.truth_params()
    model = sum(w / 2 * cell_prob_matrix(params, [5 * t], [5 * t]) for t, w in zip(nodes, weights))
    assert np.max(np.abs(freq - model)) < 0.002


def test_simulate_rejects_empty():
    with pytest.raises(ConfigError):
        simulate(design(1), 0, 1)


# CSV ----------------------------------------------------------------------------------------


def test_csv_round_trip(tmp_path):
    data = simulate(design(3), 500, 2)
    path = tmp_path / "d.csv"
    write_csv(data, path)
    back = read_csv(path)
    assert back == data
    assert path.read_text().splitlines()[0] == "y1,y2,x1_1,x1_2,x2_1,x2_2,x2_3"


def test_csv_errors():
    with pytest.raises(ConfigError):
        dataset_from_csv("a,b\n1,2\n")
    with pytest.raises(ConfigError):
        dataset_from_csv("y1,y2,x1_1,z\n1,1,0,0\n")
    with pytest.raises(ConfigError):
        dataset_from_csv("y1,y2,x1_1\n1,1,abc\n")
    with pytest.raises(ConfigError):
        dataset_from_csv("y1,y2,x1_1\n1.5,1,0\n")
    with pytest.raises(ConfigError):
        dataset_from_csv("y1,y2,x1_1\n1,1\n")


def test_csv_prefixes_custom_names():
    data = Dataset([1, 2], [1, 1], [[0.5], [1.5]], [[2.0], [3.0]], names1=("age",), names2=("x2_z",))
    back = dataset_from_csv(dataset_to_csv(data))
    assert back.names1 == ("x1_age",) and back.names2 == ("x2_z",)
    assert np.array_equal(back.X1, data.X1) and np.array_equal(back.y1, data.y1)
