import numpy as np
import pytest

from ivgraph import (
    TooManyFailures,
    bootstrap_indices,
    center,
    fig2,
    fig3,
    nearest_valid,
    reliability,
    resample,
    simulate,
)
from ivgraph.bootstrap import index_matrix

from conftest import make_dataset, random_wxy


# ---------------------------------------------------------------- indices


def test_single_row_always_repeats():
    for seed in (0, 1, 99):
        idx = bootstrap_indices(1, seed, 0)
        assert np.all(idx == 0)
        assert idx.shape == (1,)


def test_indices_pure_function_of_seed_and_replicate():
    a = bootstrap_indices(50, seed=7, replicate_index=3)
    b = bootstrap_indices(50, seed=7, replicate_index=3)
    assert np.array_equal(a, b)
    c = bootstrap_indices(50, seed=7, replicate_index=4)
    d = bootstrap_indices(50, seed=8, replicate_index=3)
    assert not np.array_equal(a, c)
    assert not np.array_equal(a, d)


def test_indices_within_range():
    idx = index_matrix(100, 50, seed=5)
    assert idx.min() >= 0 and idx.max() < 100
    assert idx.shape == (50, 100)


def test_inclusion_frequency_law_of_large_numbers():
    n = 100
    replicates = 10_000
    idx = index_matrix(n, replicates, seed=17)
    counts = np.bincount(idx.ravel(), minlength=n)
    freq = counts / (n * replicates)
    assert np.abs(freq - 1.0 / n).max() < 0.005


# ---------------------------------------------------------------- resample


def test_resample_applies_one_index_vector_everywhere():
    rng = np.random.default_rng(60)
    data = random_wxy(rng, 40)
    extra = rng.standard_normal((40, 2))
    out, extras = resample(data, [extra], seed=3, replicate_index=5)
    idx = bootstrap_indices(40, 3, 5)
    assert np.array_equal(out.values, data.values[idx])
    assert np.array_equal(extras[0], extra[idx])
    assert not out.centered
    assert out.blocks == data.blocks


def test_resample_row_count_mismatch():
    rng = np.random.default_rng(61)
    data = random_wxy(rng, 40)
    with pytest.raises(ValueError, match="rows"):
        resample(data, [np.zeros((39, 1))], seed=0, replicate_index=0)


# ---------------------------------------------------------------- reliability


def test_identical_instruments_give_zero_bias():
    rng = np.random.default_rng(62)
    data = random_wxy(rng, 300)
    z = data.block_values("w")[:, :1]
    report = reliability(data, z, z, replicates=100, seed=4)
    assert np.all(report.bias == 0.0)
    assert np.all(report.bias_se == 0.0)
    assert np.array_equal(report.mse_like, report.variance)
    assert report.failed_replicates == 0


def test_replicate_floor():
    rng = np.random.default_rng(63)
    data = random_wxy(rng, 100)
    z = data.block_values("w")[:, :1]
    with pytest.raises(ValueError, match="2 replicates"):
        reliability(data, z, z, replicates=1, seed=0)


def test_mse_identity_exact():
    rng = np.random.default_rng(64)
    data = random_wxy(rng, 400)
    z = data.block_values("w")[:, :1]
    repaired, _ = nearest_valid(data, z)
    report = reliability(data, z, repaired, replicates=200, seed=6)
    assert np.array_equal(report.mse_like, report.variance + report.bias**2)


def test_full_determinism():
    scen = fig2()
    data = center(simulate(scen.graph, 2_000, seed=65, roles=scen.roles))
    z = data.block_values("w")
    repaired, _ = nearest_valid(data, z)
    a = reliability(data, z, repaired, replicates=150, seed=7)
    b = reliability(data, z, repaired, replicates=150, seed=7)
    for field in ("beta_iv", "beta_iv_repaired", "variance", "bias", "bias_se", "mse_like"):
        assert np.array_equal(getattr(a, field), getattr(b, field)), field
    assert a.failed_replicates == b.failed_replicates


def test_matches_manual_replicate_loop():
    # Oracle: rebuild every replicate with resample() and apply the
    # just-identified formula to the gathered rows directly.
    rng = np.random.default_rng(66)
    data = random_wxy(rng, 150)
    z = data.block_values("w")[:, :1]
    repaired, _ = nearest_valid(data, z)
    replicates = 50
    report = reliability(data, z, repaired, replicates=replicates, seed=8)

    x = data.block_values("x")
    y = data.block_values("y")
    betas = np.empty(replicates)
    betas_rep = np.empty(replicates)
    for m in range(replicates):
        _, (zm, rm, xm, ym) = resample(data, [z, repaired, x, y], seed=8, replicate_index=m)
        betas[m] = (zm.T @ ym).item() / (zm.T @ xm).item()
        betas_rep[m] = (rm.T @ ym).item() / (rm.T @ xm).item()
    assert abs(report.variance[0, 0] - betas.var(ddof=1)) < 1e-10 * max(1.0, betas.var(ddof=1))
    assert abs(report.bias[0, 0] - (betas_rep - betas).mean()) < 1e-12


def test_bias_tracks_plim_gap_on_fig2():
    from ivgraph import analytic_plims

    scen = fig2()
    data = center(simulate(scen.graph, 10_000, seed=67, roles=scen.roles))
    z = data.block_values("w")
    repaired, _ = nearest_valid(data, z)
    report = reliability(data, z, repaired, replicates=400, seed=9)
    plim_ols, plim_iv = analytic_plims(scen.graph, "w", "x", "y")
    # repaired z collapses to OLS, so the bias target is plim OLS - plim IV
    target = plim_ols[0, 0] - plim_iv[0, 0]
    assert abs(report.bias[0, 0] - target) < 3.0 * report.bias_se[0, 0]


def test_variance_shrinks_with_n():
    scen = fig3()
    medians = []
    for n in (1_000, 10_000):
        variances = []
        for seed in range(10):
            data = center(simulate(scen.graph, n, seed=seed, roles=scen.roles))
            z = data.block_values("z")
            report = reliability(data, z, z, replicates=200, seed=seed)
            variances.append(report.variance[0, 0])
        medians.append(np.median(variances))
    assert medians[1] < medians[0]


def sparse_support_dataset(n, rows):
    # z = x supported on a few rows only, with entries summing to zero so
    # the column is already centered; a resample missing every support row
    # has an exactly zero first stage.
    support = np.zeros((n, 1))
    values = {2: (1.0, -1.0), 3: (1.0, 1.0, -2.0)}[len(rows)]
    for row, value in zip(rows, values):
        support[row, 0] = value
    rng = np.random.default_rng(70)
    y = rng.standard_normal((n, 1))
    y -= y.mean()
    return make_dataset(
        ["z", "x", "y"],
        np.hstack([support, support, y]),
        {"z": (0, 1, "z"), "x": (1, 2, "x"), "y": (2, 3, "y")},
        centered=True,
    )


def test_failed_replicates_counted_and_tolerated():
    # Three support rows: a replicate fails when it misses all of them,
    # with probability (1 - 3/n)^n around 5 percent.
    data = sparse_support_dataset(120, rows=(0, 1, 2))
    z = data.block_values("z")
    report = reliability(data, z, z, replicates=400, seed=11)
    assert 0 < report.failed_replicates <= 40


def test_too_many_failures():
    # Two support rows push the failure rate to about 13 percent.
    data = sparse_support_dataset(120, rows=(0, 1))
    z = data.block_values("z")
    with pytest.raises(TooManyFailures):
        reliability(data, z, z, replicates=400, seed=12)
