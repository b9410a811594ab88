import math

import numpy as np
import pytest

from support import mrc_dataset

from ordino.likelihood import Dataset
from ordino.mrc import (
    FlatObjectiveError,
    MrcConfig,
    MrcError,
    default_bandwidth,
    fit_mrc,
    kernel_weights,
    mrc_objective,
    split_columns,
)

CFG = MrcConfig(dim=1, exclusive=("xa", "xb"))


def brute_force(data, cfg, b_free, h):
    """Direct double loop over all pairs i < j."""
    des = split_columns(data, cfg)
    b = np.r_[1.0, b_free]
    total = 0.0
    for i in range(data.n):
        for j in range(i + 1, data.n):
            if des.y[i] > des.y[j] and des.excl[i] @ b > des.excl[j] @ b:
                z = (des.local[i] - des.local[j]) / h
                total += math.exp(-0.5 * float(z @ z))
    return total


def test_tied_pair_gives_zero():
    data = Dataset([2, 2], [1, 1], [[0.0, 1.0], [1.0, 0.0]], [[0.0], [0.0]])
    cfg = MrcConfig(dim=1, exclusive=(0, 1), bandwidths=(1.0,))
    assert mrc_objective([0.5], data, cfg) == 0.0


def test_four_point_hand_value():
    # X1 = (v1, v2, w), X2 = (w); localized on w with h = 1
    X1 = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 1.0], [0.5, 0.5, 0.0], [-1.0, 2.0, 2.0]])
    data = Dataset([3, 1, 2, 2], [1, 1, 1, 1], X1, X1[:, [2]])
    cfg = MrcConfig(dim=1, exclusive=(0, 1), bandwidths=(1.0,))
    # b = (1, 0.5): indices 1, 0.5, 0.75, 0
    # pairs i < j with Y_i > Y_j: (1,2), (1,3), (1,4); (3,4) is a tie
    # index order holds for all three; weights exp(-dw^2/2) with dw = 1, 0, 2
    expected = math.exp(-0.5) + 1.0 + math.exp(-2.0)
    assert mrc_objective([0.5], data, cfg) == pytest.approx(expected, abs=1e-15)
    # b = (1, 3): indices 1, 3, 2, 5, so unit 1 never ranks above its partners
    assert mrc_objective([3.0], data, cfg) == 0.0


def test_exhaustive_pair_oracle():
    data = mrc_dataset(50, 3)
    h = default_bandwidth(data, CFG)
    for b in (-1.0, 0.0, 0.35, 0.7, 2.0):
        got = mrc_objective([b], data, CFG)
        want = brute_force(data, CFG, [b], h)
        assert got == pytest.approx(want, rel=1e-13, abs=1e-13)


def test_single_exclusive_column_is_constant():
    data = mrc_dataset(60, 1)
    cfg = MrcConfig(dim=2, exclusive=("z",))
    a = fit_mrc(data, cfg)
    b = fit_mrc(data, MrcConfig(dim=2, exclusive=("z",), points=5, search_range=(-1, 1)))
    assert a.objective == b.objective and a.b_free.size == 0
    assert a.beta.tolist() == [1.0]


def test_localized_columns_deduplicated():
    des = split_columns(mrc_dataset(20, 0), CFG)
    assert des.local_names == ("x1:w", "x2:z")
    assert des.excl.shape == (20, 2)


def test_default_bandwidth_rule():
    data = mrc_dataset(200, 2)
    h = default_bandwidth(data, CFG)
    sd = np.array([data.X1[:, 2].std(ddof=1), data.X2[:, 1].std(ddof=1)])
    assert np.allclose(h, 1.06 * sd * 200 ** (-1 / 6))


def test_kernel_weights_no_localization():
    assert kernel_weights(np.zeros((3, 0)), np.zeros((3, 0)), np.zeros(0)).tolist() == [1.0, 1.0, 1.0]


@pytest.mark.parametrize("truth", [0.7, -0.7])
def test_recovers_coefficient(truth):
    est = [fit_mrc(mrc_dataset(500, s, truth), CFG).b_free[0] for s in range(10)]
    assert abs(np.median(est) - truth) <= 0.15


def test_shuffled_responses_flat():
    data = mrc_dataset(300, 4)
    rng = np.random.default_rng(0)
    perm = rng.permutation(data.n)
    shuffled = Dataset(data.y1[perm], data.y2, data.X1, data.X2, data.names1, data.names2)
    grid = np.linspace(-3, 3, 25)
    real = np.array([mrc_objective([b], data, CFG) for b in grid])
    flat = np.array([mrc_objective([b], shuffled, CFG) for b in grid])
    spread = lambda v: (v.max() - v.min()) / v.mean()
    assert spread(flat) < 0.25 * spread(real)


def test_fit_reports_resolution_and_trace():
    res = fit_mrc(mrc_dataset(200, 5), MrcConfig(dim=1, exclusive=(0, 1), levels=3, points=11))
    assert len(res.trace) == 3
    assert res.resolution == pytest.approx(6 / 10 * (2 / 10) ** 2)
    assert res.objective == pytest.approx(mrc_objective(res.b_free, mrc_dataset(200, 5),
                                                        MrcConfig(dim=1, exclusive=(0, 1))))
    assert res.to_dict()["beta"][0] == 1.0


def test_tiny_bandwidth_is_flat():
    data = mrc_dataset(40, 6)
    with pytest.raises(FlatObjectiveError):
        fit_mrc(data, MrcConfig(dim=1, exclusive=(0, 1), bandwidths=(1e-300, 1e-300)))


def test_config_errors():
    with pytest.raises(MrcError):
        MrcConfig(exclusive=())
    with pytest.raises(MrcError):
        MrcConfig(dim=3)
    with pytest.raises(MrcError):
        MrcConfig(bandwidths=(0.0,))
    data = mrc_dataset(20, 0)
    with pytest.raises(MrcError):
        split_columns(data, MrcConfig(exclusive=("nope",)))
    with pytest.raises(MrcError):
        mrc_objective([0.1, 0.2], data, CFG)
    with pytest.raises(MrcError):
        default_bandwidth(mrc_dataset(5, 0), CFG)
