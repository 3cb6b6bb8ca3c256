import time

import numpy as np
import pytest

from dmis import mlp, problems, sampler, training
from dmis.errors import ConfigError, ContractViolation
from dmis.sampler import (
    DmisSampler,
    SamplerConfig,
    UniformSampler,
    compute_probs,
    cosine_similarity,
    sample_weights,
    select_mesh_points,
    uniform_step,
)


# ---------------------------------------------------------------------------
# compute_probs
# ---------------------------------------------------------------------------


def test_probs_symmetry():
    assert np.array_equal(compute_probs([2, 2, 2, 2]), [0.25] * 4)


def test_probs_hand_value():
    assert np.allclose(compute_probs([1, 3]), [0.25, 0.75], atol=1e-15)


def test_probs_degenerate_uniform():
    assert np.allclose(compute_probs([0, 0, 0]), [1 / 3] * 3, atol=1e-15)
    tiny = np.full(4, 1e-320)  # sum underflows to subnormal/zero regime
    q = compute_probs(tiny * 0.0)
    assert np.allclose(q, 0.25)


def test_probs_negative_rejected():
    with pytest.raises(ContractViolation):
        compute_probs([1.0, -0.5])


def test_probs_simplex_property():
    rng = np.random.default_rng(0)
    for _ in range(50):
        losses = rng.random(200) * rng.choice([1e-8, 1.0, 1e6])
        q = compute_probs(losses)
        assert abs(q.sum() - 1.0) <= 1e-12
        assert np.all(q >= 0)


def test_rank_preservation():
    rng = np.random.default_rng(1)
    for _ in range(20):
        losses = rng.random(500)
        q = compute_probs(losses)
        assert np.array_equal(np.argsort(losses), np.argsort(q))


# ---------------------------------------------------------------------------
# sample_weights
# ---------------------------------------------------------------------------


def test_weights_uniform_is_one():
    for beta in (1.0, 1.5, 2.0):
        w = sample_weights(np.full(10, 0.1), 10, beta)
        assert np.allclose(w, 1.0, atol=1e-12)


def test_weights_hand_values():
    w1 = sample_weights([0.25, 0.75], 2, 1.0)
    assert abs(w1[0] - 2.0) <= 1e-12 and abs(w1[1] - 2.0 / 3.0) <= 1e-12
    w2 = sample_weights([0.25, 0.75], 2, 2.0)
    assert abs(w2[0] - 4.0) <= 1e-12 and abs(w2[1] - 4.0 / 9.0) <= 1e-12


def test_weights_zero_prob_zero_weight():
    w = sample_weights([0.0, 1.0], 2, 1.5)
    assert w[0] == 0.0


def test_weights_beta_below_one_rejected():
    with pytest.raises(ConfigError):
        sample_weights([0.5, 0.5], 2, 0.5)


def test_unbiasedness_beta_one():
    """Weighted-mean estimator within 3 standard errors over 1e5 draws."""
    rng = np.random.default_rng(2)
    losses = rng.random(50) + 0.05
    q = compute_probs(losses)
    alpha = sample_weights(q, losses.shape[0], 1.0)
    n = 100_000
    ids = rng.choice(losses.shape[0], size=n, p=q)
    est = alpha[ids] * losses[ids]
    se = est.std(ddof=1) / np.sqrt(n)
    # with q proportional to the losses the estimator is exactly constant,
    # so the bound collapses to roundoff
    assert abs(est.mean() - losses.mean()) <= 3 * se + 1e-12

    # a mixed q (real sampling variance) must stay unbiased too
    q2 = 0.5 * q + 0.5 / losses.shape[0]
    alpha2 = sample_weights(q2, losses.shape[0], 1.0)
    ids2 = rng.choice(losses.shape[0], size=n, p=q2)
    est2 = alpha2[ids2] * losses[ids2]
    se2 = est2.std(ddof=1) / np.sqrt(n)
    assert se2 > 0
    assert abs(est2.mean() - losses.mean()) <= 3 * se2


# ---------------------------------------------------------------------------
# cosine similarity
# ---------------------------------------------------------------------------


def test_cosine_examples():
    assert cosine_similarity([1, 2, 3], [1, 2, 3]) == pytest.approx(1.0)
    assert cosine_similarity([1, 0], [0, 1]) == pytest.approx(0.0, abs=1e-15)
    assert cosine_similarity([1, 0], [1, 1]) == pytest.approx(
        0.7071067811865475, abs=1e-12
    )


def test_cosine_zero_vector_signals_rebuild():
    assert cosine_similarity([0, 0], [1, 1]) == -np.inf


def test_cosine_length_mismatch():
    with pytest.raises(ContractViolation):
        cosine_similarity([1, 2], [1, 2, 3])


# ---------------------------------------------------------------------------
# mesh point selection
# ---------------------------------------------------------------------------


def test_select_uniform_fallback_and_determinism():
    q = np.full(100, 0.01)
    s1 = select_mesh_points(q, q, 10, np.array([], dtype=np.int64),
                            np.random.default_rng(3))
    s2 = select_mesh_points(q, q, 10, np.array([], dtype=np.int64),
                            np.random.default_rng(3))
    assert np.array_equal(s1, s2)
    assert len(set(s1.tolist())) == 10


def test_select_proportional_to_diff():
    q_t0 = np.zeros(3)
    q_now = np.array([0.1, 0.3, 0.6])
    counts = np.zeros(3)
    rng = np.random.default_rng(4)
    for _ in range(3000):
        s = select_mesh_points(q_now, q_t0, 1, np.array([], dtype=np.int64), rng)
        counts[s[0]] += 1
    freqs = counts / counts.sum()
    assert np.all(np.abs(freqs - q_now) < 0.05)


def test_select_appends_corners_dedup():
    q = np.full(10, 0.1)
    corners = np.array([0, 1], dtype=np.int64)
    s = select_mesh_points(q, q, 8, corners, np.random.default_rng(5))
    assert set(corners.tolist()) <= set(s.tolist())
    assert len(s) <= 10


# ---------------------------------------------------------------------------
# samplers end to end
# ---------------------------------------------------------------------------


def _setup(benchmark="burgers", n_f=500, s_size=50, seed=0, gamma=0.4, beta=1.5):
    cfg = training.default_config(
        benchmark, n_f=n_f, s_size=s_size, seed=seed, gamma=gamma, beta=beta,
        sampler="dmis",
    )
    problem = problems.make_problem(benchmark)
    f, i, b, corner_ids = training.build_datasets(cfg, problem)
    net = mlp.init(cfg.depth, cfg.width, problem.out_dim, seed + 1)
    smp = DmisSampler(
        f, problem.domain, SamplerConfig(s_size, gamma, beta), corner_ids,
        seed=seed + 2,
    )
    return cfg, problem, f, net, smp


def test_init_state():
    cfg, problem, f, net, smp = _setup()
    st = smp.state
    assert np.allclose(st.q, 1.0 / len(f), atol=1e-15)
    assert 50 <= len(st.S) <= 54
    assert st.t0 == 0
    # determinism: same seed -> same S
    _, _, _, _, smp2 = _setup()
    assert np.array_equal(st.S, smp2.state.S)


def test_s_size_exceeding_nf_rejected():
    with pytest.raises(ConfigError):
        _setup(n_f=40, s_size=50)


def test_config_validation():
    with pytest.raises(ConfigError):
        SamplerConfig(s_size=2).validate()
    with pytest.raises(ConfigError):
        SamplerConfig(gamma=1.5).validate()
    with pytest.raises(ConfigError):
        SamplerConfig(beta=0.5).validate()


def test_step_simplex_and_batch_validity():
    cfg, problem, f, net, smp = _setup()
    for _ in range(5):
        batch = smp.step(net, problem, 64)
        st = smp.state
        assert abs(st.q.sum() - 1.0) <= 1e-12
        assert np.all(st.q >= 0)
        assert batch.ids.shape == (64,)
        assert np.all(batch.ids >= 0) and np.all(batch.ids < len(f))
        assert np.all(np.isfinite(batch.alpha_prime))
        assert np.all(batch.alpha_prime > 0)


def test_step_mesh_vertex_exactness():
    cfg, problem, f, net, smp = _setup()
    smp.step(net, problem, 16)
    st = smp.state
    exact = smp.exact_losses(net, problem)
    est = st.mesh.interpolate_planned(*st.plan)
    est = np.maximum(est, 0.0)
    est[st.mesh.ids] = exact
    q = compute_probs(est)
    assert np.array_equal(q[st.mesh.ids], st.q[st.mesh.ids])


def test_affine_loss_field_exact_probs():
    """S = full grid: interpolated q equals exact q for an affine field."""
    n = 21
    tt, xx = np.meshgrid(np.linspace(0, 0.5, n), np.linspace(-1, 1, n),
                         indexing="ij")
    f = problems.CollocationSet("residual", tt.ravel(), xx.ravel())
    problem = problems.make_problem("burgers")
    smp = DmisSampler(
        f, problem.domain, SamplerConfig(s_size=n * n, gamma=0.01, beta=1.0),
        np.array([], dtype=np.int64), seed=0,
    )
    losses = 1.0 + f.t + f.x  # affine, positive on the domain
    st = smp.state
    st.mesh.set_values(losses[st.mesh.ids])
    est = st.mesh.interpolate_planned(*st.plan)
    q = compute_probs(np.maximum(est, 0.0))
    assert np.max(np.abs(q - compute_probs(losses))) <= 1e-12


def test_rebuild_monotonicity_and_log():
    cfg, problem, f, net, smp = _setup(gamma=0.01)  # nearly never rebuild
    s_before = smp.state.S.copy()
    t0_before = smp.state.t0
    smp.step(net, problem, 16)
    sim = cosine_similarity(smp.state.q_t0, smp.state.q)
    if sim >= 0.01:
        assert np.array_equal(smp.state.S, s_before)
        assert smp.state.t0 == t0_before
        assert smp.state.rebuild_log == []


def test_rebuild_triggers_at_high_gamma():
    cfg, problem, f, net, smp = _setup(gamma=0.999999)
    smp.step(net, problem, 16)
    assert len(smp.state.rebuild_log) == 1
    t, sim, size = smp.state.rebuild_log[0]
    assert t == 1 and sim < 0.999999
    assert smp.state.t0 == 1


def test_uniform_sampler():
    smp = UniformSampler(1000, seed=0)
    b = smp.step(batch_size=256)
    assert np.all(b.alpha_prime == 1.0)
    assert np.all((b.ids >= 0) & (b.ids < 1000))
    smp2 = UniformSampler(1000, seed=0)
    assert np.array_equal(smp2.step(batch_size=256).ids, b.ids)


def test_uniform_step_chi_square():
    rng = np.random.default_rng(6)
    n_f, draws = 20, 1_000_000
    b = uniform_step(n_f, draws, rng)
    counts = np.bincount(b.ids, minlength=n_f)
    expected = draws / n_f
    chi2 = np.sum((counts - expected) ** 2 / expected)
    # chi-square df=19, 99% quantile ~ 36.19
    assert chi2 < 36.19


def test_constant_loss_degenerates_to_uniform():
    """Identical losses at S -> uniform q, unit weights (chi-square)."""
    cfg, problem, f, net, smp = _setup(beta=2.0)
    st = smp.state
    const = np.ones(len(st.mesh.ids))

    # inject a constant loss field by monkeypatching exact_losses
    smp.exact_losses = lambda net, problem: const
    batch = smp.step(net, problem, 2000)
    assert np.allclose(smp.state.q, 1.0 / len(f), atol=1e-15)
    assert np.allclose(batch.alpha_prime, 1.0, atol=1e-12)
    counts = np.bincount(batch.ids, minlength=len(f))
    expected = 2000 / len(f)
    chi2 = np.sum((counts - expected) ** 2 / expected)
    # df = 503, 99.9% quantile ~ 608
    assert chi2 < 620


def test_suite_runtime_budget():
    # criterion 2 requires the sampler suite to finish within 60 s; this
    # is enforced by the CI wall clock, spot-check one expensive pass here
    start = time.perf_counter()
    cfg, problem, f, net, smp = _setup()
    for _ in range(3):
        smp.step(net, problem, 128)
    assert time.perf_counter() - start < 60
