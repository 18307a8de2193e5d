import csv

import numpy as np
import pytest

from gravclust import datagen as dg
from gravclust.exceptions import ConfigError


def test_data1_layout():
    specs = dg.dataset_data1()
    assert len(specs) == 5 and all(s.q == 2 for s in specs)
    assert specs[3].centroid == (9.0, 4.0)
    assert specs[4].variances == (0.3, 0.5)


def test_data2_variances_are_scaled():
    specs = dg.dataset_data2()
    assert len(specs) == 6 and all(s.q == 3 for s in specs)
    assert specs[5].centroid == (5.0, 5.0, 1.55)
    np.testing.assert_allclose(specs[0].variances, np.array([0.2, 0.4, 0.2]) * 0.15)


def test_fig1_adds_sixth_cluster():
    specs = dg.dataset_fig1()
    assert len(specs) == 6 and specs[5].centroid == (-4.0, -11.0)
    assert len(dg.fig1_outliers().per_cluster) == 6


def test_spec_validation():
    with pytest.raises(ConfigError):
        dg.ClusterSpec((0.0, 0.0), (1.0,))
    with pytest.raises(ConfigError):
        dg.ClusterSpec((0.0,), (0.0,))
    with pytest.raises(ConfigError):
        dg.ContaminationSpec(1.5)
    with pytest.raises(ConfigError):
        dg.StreamSchedule(start_clusters=6, total_clusters=5)


@pytest.mark.parametrize("noise", list(dg.Noise))
def test_noise_moments(noise):
    spec = dg.ClusterSpec((1.0, -2.0), (0.2, 0.6), noise)
    rng = np.random.default_rng(0)
    x = np.array([dg.sample(spec, dg.NO_CONTAMINATION, rng)[0] for _ in range(20000)])
    np.testing.assert_allclose(x.mean(axis=0), [1.0, -2.0], atol=0.02)
    np.testing.assert_allclose(x.var(axis=0), [0.2, 0.6], rtol=0.05)
    # excess kurtosis: 0 for Gaussian, 3 for Laplace
    z = (x - x.mean(axis=0)) / x.std(axis=0)
    kurt = (z ** 4).mean(axis=0) - 3
    want = 3.0 if noise == dg.Noise.LAPLACE else 0.0
    np.testing.assert_allclose(kurt, want, atol=0.4)


def test_outlier_rate_and_shift():
    spec = dg.ClusterSpec((0.0, 0.0), (0.01, 0.01))
    cont = dg.data1_chisquare_outliers(0.2)
    rng = np.random.default_rng(1)
    draws = [dg.sample(spec, cont, rng, cluster=1) for _ in range(20000)]
    hit = np.array([h for _, h in draws])
    x = np.array([d for d, _ in draws])
    assert hit.mean() == pytest.approx(0.2, abs=0.01)
    # cluster 2 subtracts chi2(5) on both axes: mean -5
    np.testing.assert_allclose(x[hit].mean(axis=0), [-5.0, -5.0], atol=0.15)
    np.testing.assert_allclose(x[~hit].mean(axis=0), [0.0, 0.0], atol=0.01)


def test_gaussian_outlier_law():
    spec = dg.ClusterSpec((0.0, 0.0, 0.0), (1e-4,) * 3)
    rng = np.random.default_rng(2)
    x = np.array([dg.sample(spec, dg.gaussian_outliers(3, 1.0), rng)[0] for _ in range(20000)])
    np.testing.assert_allclose(x.var(axis=0), 3.0, rtol=0.05)


def test_zero_rate_stream_matches_clean_stream():
    specs = dg.dataset_data1()
    sched = dg.StreamSchedule()
    a = list(dg.make_stream(specs, sched, dg.NO_CONTAMINATION, np.random.default_rng(3)))
    b = list(dg.make_stream(specs, sched, dg.data1_chisquare_outliers(0.0), np.random.default_rng(3)))
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x.coords, y.coords)


def test_stream_schedule_and_batches():
    sched = dg.StreamSchedule(50, 10, 5, 1)
    items = list(dg.make_stream(dg.dataset_data1(), sched, dg.NO_CONTAMINATION, np.random.default_rng(0)))
    assert len(items) == sched.stream_length() == 50 * 15
    ends = [it for it in items if it.batch_end]
    assert len(ends) == 25
    assert [it.k_true for it in ends[:6]] == [1] * 5 + [2]
    # within a phase, clusters are visited round-robin
    phase2 = [it.cluster for it in items if it.k_true == 2]
    assert phase2[:6] == [0, 1, 0, 1, 0, 1]
    counts = np.bincount([it.cluster for it in items])
    np.testing.assert_array_equal(counts, [250, 200, 150, 100, 50])


def test_stationary_stream():
    sched = dg.StreamSchedule(20, 10, 6, 6)
    items = list(dg.make_stream(dg.dataset_data2(), sched, dg.NO_CONTAMINATION, np.random.default_rng(0)))
    assert len(items) == 120 and {it.k_true for it in items} == {6}


def test_schedule_larger_than_dataset():
    with pytest.raises(ConfigError):
        list(dg.make_stream(dg.dataset_data1(), dg.StreamSchedule(total_clusters=6), dg.NO_CONTAMINATION,
                            np.random.default_rng(0)))


def test_stream_csv(tmp_path):
    items = list(dg.make_stream(dg.dataset_data1(), dg.StreamSchedule(10, 10, 2), dg.NO_CONTAMINATION,
                                np.random.default_rng(0)))
    path = tmp_path / "s.csv"
    dg.write_stream_csv(path, items, node=3)
    rows = list(csv.reader(open(path, encoding="utf-8")))
    assert rows[0] == ["t", "node", "x1", "x2", "true_cluster", "is_outlier"]
    assert len(rows) == 31
    assert rows[1][1] == "3" and float(rows[1][2]) == items[0].coords[0]
