import numpy as np
import pytest

from dmis import autodiff, mlp, problems
from dmis.autodiff import Jet
from dmis.errors import ConfigError, ContractViolation
from dmis.problems import (
    BENCHMARKS,
    DomainSpec,
    bc_loss,
    generate_collocation,
    ic_loss,
    make_problem,
    residual_loss,
)


def _plain_jet(u, u_t=None, u_x=None, u_xx=None, u_xxx=None, t=None, x=None,
               order=3):
    """Assemble a Jet from raw arrays for hand-substitution checks."""
    n = np.asarray(u[0]).shape[0]
    z = [np.zeros(n) for _ in u]
    return Jet(
        t=np.zeros(n) if t is None else t,
        x=np.zeros(n) if x is None else x,
        u=list(u),
        u_t=list(u_t) if u_t is not None else list(z),
        u_x=list(u_x) if u_x is not None else list(z),
        u_xx=list(u_xx) if u_xx is not None else list(z),
        u_xxx=list(u_xxx) if u_xxx is not None else list(z),
        max_x_order=order,
    )


# ---------------------------------------------------------------------------
# domain / split
# ---------------------------------------------------------------------------


def test_domain_split():
    d = DomainSpec(-1.0, 1.0, 1.0)
    assert d.t_train == (0.0, 0.5)
    assert d.t_val == (0.5, 0.75)
    assert d.t_test == (0.75, 1.0)
    assert d.segment("test") == (0.75, 1.0)


def test_domain_validation():
    with pytest.raises(ConfigError):
        DomainSpec(1.0, -1.0, 1.0)
    with pytest.raises(ConfigError):
        DomainSpec(0.0, 1.0, 0.0)


# ---------------------------------------------------------------------------
# problem definitions
# ---------------------------------------------------------------------------


def test_burgers_definition():
    p = make_problem("burgers")
    assert (p.domain.x_min, p.domain.x_max, p.domain.t_max) == (-1.0, 1.0, 1.0)
    assert p.bc_kind == "dirichlet" and p.out_dim == 1 and p.x_order == 2
    x = np.array([0.0, 0.5])
    assert np.allclose(p.ic(x)[:, 0], -np.sin(np.pi * x))


def test_kdv_definition():
    p = make_problem("kdv")
    assert p.bc_kind == "periodic" and p.x_order == 3
    assert np.allclose(p.ic(np.array([0.0]))[:, 0], 1.0)


def test_schrodinger_definition():
    p = make_problem("schrodinger")
    assert p.out_dim == 2 and p.bc_kind == "periodic"
    assert p.domain.t_max == pytest.approx(np.pi / 2)
    ic = p.ic(np.array([0.0]))
    assert ic[0, 0] == pytest.approx(2.0) and ic[0, 1] == 0.0


def test_unknown_benchmark():
    with pytest.raises(ConfigError):
        make_problem("wave")


# ---------------------------------------------------------------------------
# residual hand checks
# ---------------------------------------------------------------------------


def test_zero_network_residuals():
    zero1 = _plain_jet([np.zeros(3)])
    assert np.allclose(residual_loss(make_problem("burgers"), zero1), 0.0)
    assert np.allclose(residual_loss(make_problem("kdv"), zero1), 0.0)
    zero2 = _plain_jet([np.zeros(3), np.zeros(3)])
    assert np.allclose(residual_loss(make_problem("schrodinger"), zero2), 0.0)


def test_diffusion_forced_hand_value():
    """u==0 at (t=0, x=1): residual = -5*e^0*1, loss = 25."""
    p = make_problem("diffusion")
    jet = _plain_jet([np.zeros(1)], t=np.array([0.0]), x=np.array([1.0]))
    assert residual_loss(p, jet)[0] == pytest.approx(25.0, abs=1e-12)


def test_manufactured_heat_solution():
    """Analytic jets of u = e^{-pi^2 t} sin(pi x) satisfy the unforced residual."""
    p = problems.diffusion_problem(c=1.0, forced=False)
    t = np.linspace(0.0, 0.4, 7)
    x = np.linspace(0.1, 0.9, 7)
    decay = np.exp(-np.pi**2 * t)
    u = decay * np.sin(np.pi * x)
    u_t = -np.pi**2 * u
    u_xx = -np.pi**2 * u
    jet = _plain_jet([u], u_t=[u_t], u_xx=[u_xx], t=t, x=x)
    assert np.max(residual_loss(p, jet)) <= 1e-20


def test_residual_requires_order():
    p = make_problem("kdv")     # needs u_xxx
    net = mlp.init(2, 8, 1, seed=0)
    jet = autodiff.jet_values(net, np.array([0.1]), np.array([0.2]), 2)
    with pytest.raises(ContractViolation):
        residual_loss(p, jet)


def test_residual_nonnegative_and_differentiable():
    rng = np.random.default_rng(0)
    for name in BENCHMARKS:
        p = make_problem(name)
        net = mlp.init(2, 6, p.out_dim, seed=3)
        t = rng.uniform(0, p.domain.t_max / 2, 4)
        x = rng.uniform(p.domain.x_min, p.domain.x_max, 4)
        jet = autodiff.jet_values(net, t, x, p.x_order)
        lf = residual_loss(p, jet)
        assert np.all(lf >= 0)
        tape = autodiff.GradientTape(net)
        rjet = tape.eval_jet(t, x, p.x_order)
        grad = tape.gradient(residual_loss(p, rjet).mean())
        assert np.all(np.isfinite(grad)) and np.any(grad != 0)


# ---------------------------------------------------------------------------
# IC / BC losses
# ---------------------------------------------------------------------------


def test_ic_loss_zero_when_exact():
    p = make_problem("burgers")
    net = mlp.init(2, 8, 1, seed=0)
    # at x=0 target is -sin(0)=0; scale net output to 0 by zeroing last layer
    net.weights[-1][:] = 0.0
    net.biases[-1][:] = 0.0
    assert ic_loss(p, net, np.array([0.0]))[0] == pytest.approx(0.0, abs=1e-30)


def test_bc_dirichlet_hand_value():
    p = make_problem("burgers")
    net = mlp.init(2, 8, 1, seed=0)
    net.weights[-1][:] = 0.0
    net.biases[-1][:] = 0.3          # constant output 0.3
    loss = bc_loss(p, net, np.array([0.2]), np.array([1.0]))
    assert loss[0] == pytest.approx(0.09, abs=1e-12)


def test_bc_periodic_constant_network():
    p = make_problem("kdv")
    net = mlp.init(2, 8, 1, seed=0)
    net.weights[0][:, :] = 0.0       # kill input dependence entirely
    loss = bc_loss(p, net, np.array([0.1, 0.4]))
    assert np.allclose(loss, 0.0, atol=1e-28)


def test_ic_bc_loss_dispatch():
    p = make_problem("burgers")
    net = mlp.init(2, 8, 1, seed=0)
    assert problems.ic_bc_loss(p, net, ("initial", 0.0, 0.3)) is not None
    assert problems.ic_bc_loss(p, net, ("boundary", 0.2, 1.0)) is not None
    with pytest.raises(ContractViolation):
        problems.ic_bc_loss(p, net, ("bulk", 0.2, 0.0))


# ---------------------------------------------------------------------------
# collocation
# ---------------------------------------------------------------------------


def test_collocation_sizes_and_regions():
    p = make_problem("burgers")
    f, i, b = generate_collocation(p, 1000, 200, 200, seed=0)
    assert (len(f), len(i), len(b)) == (1000, 200, 200)
    assert np.all((f.t >= 0) & (f.t <= 0.5))
    assert np.all((f.x >= -1) & (f.x <= 1))
    assert np.all(i.t == 0.0)
    assert np.all(np.isin(b.x, [-1.0, 1.0]))
    assert np.all((b.t >= 0) & (b.t <= 0.5))
    assert np.array_equal(f.ids, np.arange(1000))


def test_collocation_determinism():
    p = make_problem("kdv")
    f1, _, _ = generate_collocation(p, 500, 50, 50, seed=9)
    f2, _, _ = generate_collocation(p, 500, 50, 50, seed=9)
    assert np.array_equal(f1.t, f2.t) and np.array_equal(f1.x, f2.x)


def test_collocation_uniformity_ks():
    p = make_problem("burgers")
    f, _, _ = generate_collocation(p, 100_000, 10, 10, seed=1)
    for vals, lo, hi in ((f.t, 0.0, 0.5), (f.x, -1.0, 1.0)):
        u = np.sort((vals - lo) / (hi - lo))
        n = u.shape[0]
        ks = np.max(np.abs(u - np.arange(1, n + 1) / n))
        assert ks <= 0.02


def test_collocation_zero_sizes_rejected():
    p = make_problem("burgers")
    with pytest.raises(ConfigError):
        generate_collocation(p, 0, 10, 10, seed=0)


def test_collocation_csv(tmp_path):
    p = make_problem("burgers")
    f, _, _ = generate_collocation(p, 5, 2, 2, seed=0)
    path = tmp_path / "f.csv"
    f.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "id,role,t,x"
    assert len(lines) == 6
    assert lines[1].startswith("0,residual,")
