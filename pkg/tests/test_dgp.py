import numpy as np
import pytest

from ivgraph import (
    BlockGraph,
    CycleError,
    SingularMoment,
    analytic_plims,
    center,
    fig1,
    fig2,
    fig3,
    iv_estimate,
    population_covariance,
    simulate,
)

# Hand expansion of the fig2 preset (loading a = 0.3, coupling 1/2,
# direct effect 1/2): u ~ N(0,1); v = u/2 + e gives Vv = 5/4, Cuv = 1/2;
# w = a(u+v) + e; x = w + a(u+v) + e; y = w/2 + x + a(u+v) + e.
FIG2_HAND = {
    ("w", "w"): 1.2925,
    ("w", "x"): 1.585,
    ("x", "x"): 3.17,
    ("w", "y"): 2.52375,
    ("x", "y"): 4.5475,
    ("y", "y"): 7.833125,
    ("u", "y"): 1.575,
    ("v", "y"): 1.8375,
    ("u", "v"): 0.5,
    ("v", "v"): 1.25,
}


def test_no_edges_gives_diagonal_covariance():
    g = BlockGraph(
        blocks=(("a", 2), ("b", 1)),
        edges=(),
        noise_scales={"a": [0.5, 2.0], "b": 3.0},
    )
    moments = population_covariance(g)
    assert np.allclose(moments.sigma, np.diag([0.25, 4.0, 9.0]), atol=1e-14)


def test_fig3_hand_derived_entries():
    # x = z + u + e_x and y = x + u + e_y with unit variances give
    # Sxx = 1+1+1 = 3, Szx = Szz = 1, Sxy = Sxx + Sxu = 4, Szy = Szx = 1.
    moments = population_covariance(fig3().graph)
    assert moments.block("x", "x")[0, 0] == pytest.approx(3.0, abs=1e-12)
    assert moments.block("z", "x")[0, 0] == pytest.approx(1.0, abs=1e-12)
    assert moments.block("x", "y")[0, 0] == pytest.approx(4.0, abs=1e-12)
    assert moments.block("z", "y")[0, 0] == pytest.approx(1.0, abs=1e-12)
    assert moments.block("y", "y")[0, 0] == pytest.approx(7.0, abs=1e-12)


def test_fig2_hand_derived_entries():
    moments = population_covariance(fig2().graph)
    for (a, b), value in FIG2_HAND.items():
        assert moments.block(a, b)[0, 0] == pytest.approx(value, abs=1e-12)


def test_sigma_symmetric_psd_random_graphs():
    rng = np.random.default_rng(12)
    for _ in range(30):
        k = int(rng.integers(1, 6))
        names = [f"b{i}" for i in range(k)]
        widths = [int(rng.integers(1, 3)) for _ in range(k)]
        edges = []
        for i in range(k):
            for j in range(i + 1, k):
                if rng.random() < 0.5:
                    edges.append((names[i], names[j], rng.uniform(-2, 2, (widths[i], widths[j]))))
        g = BlockGraph(
            blocks=tuple(zip(names, widths)),
            edges=tuple(edges),
            noise_scales={n: rng.uniform(0.5, 2.0, w) for n, w in zip(names, widths)},
        )
        sigma = population_covariance(g).sigma
        assert np.allclose(sigma, sigma.T, atol=1e-12)
        assert np.linalg.eigvalsh(sigma).min() >= -1e-10


def test_plims_fig3():
    plim_ols, plim_iv = analytic_plims(fig3().graph, "z", "x", "y")
    assert plim_ols[0, 0] == pytest.approx(4.0 / 3.0, abs=1e-12)
    assert plim_iv[0, 0] == pytest.approx(1.0, abs=1e-12)


def test_plims_agree_without_bias_sources():
    scen = fig1(beta_wy=0.0)
    plim_ols, plim_iv = analytic_plims(scen.graph, "w", "x", "y")
    assert plim_iv[0, 0] == pytest.approx(1.0, abs=1e-12)
    assert plim_ols[0, 0] == pytest.approx(1.0, abs=1e-12)


def test_fig2_iv_gap_formula():
    scen = fig2()
    moments = population_covariance(scen.graph)
    _, plim_iv = analytic_plims(scen.graph, "w", "x", "y")
    beta_xy = 1.0
    s_wx = moments.block("w", "x")[0, 0]
    s_wy = moments.block("w", "y")[0, 0]
    gap = (s_wy - s_wx * beta_xy) / s_wx
    assert plim_iv[0, 0] - beta_xy == pytest.approx(gap, abs=1e-12)
    assert abs(plim_iv[0, 0] - beta_xy) > 0.1


def test_singular_moment():
    # z carries no noise of its own and duplicates nothing else: width 2
    # with rank-1 loading makes Szz singular.
    g = BlockGraph(
        blocks=(("s", 1), ("z", 2), ("x", 1), ("y", 1)),
        edges=(
            ("s", "z", np.array([[1.0, 1.0]])),
            ("z", "x", np.array([[1.0], [1.0]])),
            ("x", "y", np.array([[1.0]])),
        ),
        noise_scales={"s": 1.0, "z": [1e-9, 1e-9], "x": 1.0, "y": 1.0},
    )
    with pytest.raises(SingularMoment):
        analytic_plims(g, "z", "x", "y")


# ---------------------------------------------------------------- simulate


def test_simulate_deterministic():
    scen = fig2()
    a = simulate(scen.graph, 500, seed=4, roles=scen.roles)
    b = simulate(scen.graph, 500, seed=4, roles=scen.roles)
    assert np.array_equal(a.values, b.values)
    c = simulate(scen.graph, 500, seed=5, roles=scen.roles)
    assert not np.array_equal(a.values, c.values)


def test_simulate_independent_noise_when_no_edges():
    scen = fig1(beta_wx=0.0, beta_wy=0.0, beta_xy=0.0)
    n = 10_000
    data = simulate(scen.graph, n, seed=13, roles=scen.roles)
    corr = np.corrcoef(data.values, rowvar=False)
    off = corr[~np.eye(3, dtype=bool)]
    assert np.abs(off).max() < 4.0 / np.sqrt(n)


def test_simulate_recovers_first_stage():
    scen = fig1()
    data = center(simulate(scen.graph, 100_000, seed=14, roles=scen.roles))
    from ivgraph import ols

    fit = ols(data, ["w"], ["x"])
    assert fit.coefficients[0, 0] == pytest.approx(1.0, abs=0.03)


def test_latent_blocks_tagged():
    scen = fig3()
    data = simulate(scen.graph, 100, seed=1, roles=scen.roles)
    assert data.blocks["u"].role == "latent"
    assert data.blocks["v"].role == "latent"
    assert data.blocks["z"].role == "z"
    assert set(data.columns) == {"u", "v", "z", "x", "y"}


def test_role_heuristic_without_explicit_roles():
    data = simulate(fig3().graph, 100, seed=1)
    assert data.blocks["z"].role == "z"
    assert data.blocks["u"].role == "latent"


def test_sample_covariance_tracks_population():
    scen = fig3()
    moments = population_covariance(scen.graph)
    data = simulate(scen.graph, 200_000, seed=15, roles=scen.roles)
    sample = np.cov(data.values, rowvar=False)
    assert np.abs(sample - moments.sigma).max() < 0.05


def test_declaration_order_does_not_change_distribution():
    scen = fig2()
    blocks = scen.graph.blocks
    shuffled = BlockGraph(
        blocks=tuple(reversed(blocks)),
        edges=scen.graph.edges,
        noise_scales=dict(scen.graph.noise_scales),
    )
    a = population_covariance(scen.graph)
    b = population_covariance(shuffled)
    assert a.order == b.order  # dependency order wins over declaration
    assert np.allclose(a.sigma, b.sigma, atol=1e-12)


def test_cycle_propagates():
    g = BlockGraph(
        blocks=(("a", 1), ("b", 1)),
        edges=(("a", "b", np.eye(1)), ("b", "a", np.eye(1))),
        noise_scales={"a": 1.0, "b": 1.0},
    )
    with pytest.raises(CycleError):
        simulate(g, 10, seed=0)
    with pytest.raises(CycleError):
        population_covariance(g)


def partial_cov_wy_given_x(graph):
    m = population_covariance(graph)
    return (
        m.block("w", "y")[0, 0]
        - m.block("w", "x")[0, 0] * m.block("x", "y")[0, 0] / m.block("x", "x")[0, 0]
    )


def confounded_wxy_graph(beta_wy, a_vw, a_vx, a_ux, a_uy):
    return BlockGraph(
        blocks=(("u", 1), ("v", 1), ("w", 1), ("x", 1), ("y", 1)),
        edges=(
            ("v", "w", np.array([[a_vw]])),
            ("v", "x", np.array([[a_vx]])),
            ("u", "x", np.array([[a_ux]])),
            ("u", "y", np.array([[a_uy]])),
            ("w", "x", np.array([[1.0]])),
            ("w", "y", np.array([[beta_wy]])),
            ("x", "y", np.array([[1.0]])),
        ),
        noise_scales={n: 1.0 for n in ("u", "v", "w", "x", "y")},
    )


def test_partial_covariance_vanishes_only_under_cancellation():
    # The test statistic's population value is the partial covariance of
    # w and y given x. It vanishes when the direct effect is absent AND
    # the confounder path opened by conditioning on x is broken (u must
    # not load on both x and y); otherwise a direct effect can only be
    # hidden by exact cancellation against the confounding term.
    rng = np.random.default_rng(17)
    for _ in range(25):
        a_vw, a_vx = rng.uniform(-1.5, 1.5, size=2)
        loading = float(rng.uniform(0.3, 1.5))

        broken = confounded_wxy_graph(0.0, a_vw, a_vx, 0.0, loading)
        assert abs(partial_cov_wy_given_x(broken)) < 1e-12
        broken = confounded_wxy_graph(0.0, a_vw, a_vx, loading, 0.0)
        assert abs(partial_cov_wy_given_x(broken)) < 1e-12

        joined = confounded_wxy_graph(0.0, a_vw, a_vx, loading, loading)
        base = partial_cov_wy_given_x(joined)
        assert abs(base) > 1e-6  # conditioning on x opens the u path

        leaky = confounded_wxy_graph(0.7, a_vw, a_vx, loading, loading)
        assert abs(partial_cov_wy_given_x(leaky) - base) > 1e-6

        # the statistic is affine in the direct effect: solve for the
        # cancellation point and verify it zeroes the partial covariance
        slope = partial_cov_wy_given_x(leaky) - base
        cancel = confounded_wxy_graph(-0.7 * base / slope, a_vw, a_vx, loading, loading)
        assert abs(partial_cov_wy_given_x(cancel)) < 1e-10


def random_fig3_like(rng):
    return BlockGraph(
        blocks=(("u", 1), ("z", 1), ("x", 1), ("y", 1)),
        edges=(
            ("u", "x", rng.uniform(-2, 2, (1, 1))),
            ("u", "y", rng.uniform(-2, 2, (1, 1))),
            ("z", "x", rng.uniform(-2, 2, (1, 1))),
            ("x", "y", rng.uniform(-2, 2, (1, 1))),
        ),
        noise_scales={n: float(rng.uniform(0.5, 2.0)) for n in ("u", "z", "x", "y")},
    )


def test_iv_consistency_on_random_valid_instrument_graphs():
    # plim IV equals the structural effect whenever z reaches y only
    # through x; the finite-sample estimate stays within ten asymptotic
    # standard deviations of it.
    rng = np.random.default_rng(16)
    n = 100_000
    checked = 0
    for _ in range(20):
        g = random_fig3_like(rng)
        beta_xy = dict(((p, c), m[0, 0]) for p, c, m in g.edges)[("x", "y")]
        moments = population_covariance(g)
        s_zx = moments.block("z", "x")[0, 0]
        if abs(s_zx) < 0.1:  # near-weak draws need n beyond desk scale for asymptotics
            continue
        _, plim_iv = analytic_plims(g, "z", "x", "y")
        assert plim_iv[0, 0] == pytest.approx(beta_xy, abs=1e-10)

        data = center(simulate(g, n, seed=int(rng.integers(1 << 30)), roles={"u": "latent", "z": "z", "x": "x", "y": "y"}))
        est = iv_estimate(data, data.block_values("z"))
        s_zz = moments.block("z", "z")[0, 0]
        s_xx = moments.block("x", "x")[0, 0]
        s_xy = moments.block("x", "y")[0, 0]
        s_yy = moments.block("y", "y")[0, 0]
        resid_var = s_yy - 2 * beta_xy * s_xy + beta_xy**2 * s_xx
        asym_sd = np.sqrt(resid_var * s_zz / n) / abs(s_zx)
        assert abs(est.beta[0, 0] - plim_iv[0, 0]) < 10.0 * asym_sd
        checked += 1
    assert checked >= 10
