"""Bridge mathematics against independent oracles: numerical quadrature for
the schedule integral, central finite differences of the log potentials for
every drift, Monte Carlo for the bridge-state sampler, and brute-force
lattice enumeration for the factorized drift."""

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.special import ndtr

from graphbridge.bridges import (BridgeSchedule, ContinuousDomainSpec,
                                 PriorSpec, beta, drift_box, drift_endpoint,
                                 drift_lattice, drift_lattice_naive,
                                 em_integrate, em_sample, loss_target,
                                 sample_bridge_state, sigma)
from graphbridge.errors import PreconditionError
from graphbridge.fsq import QuantizationSpec, nearest_lattice

SCHED = BridgeSchedule(sigma_min=1.0, sigma_max=3.0, T=1.0, steps=1000)
UNIT = BridgeSchedule(sigma_min=1.0, sigma_max=1.0, T=2.0, steps=1000)


def fd_gradient(potential, z, eps=1e-6):
    """Central finite difference of a scalar potential, elementwise in z."""
    z = np.asarray(z, dtype=np.float64)
    out = np.zeros_like(z)
    flat = z.reshape(-1)
    grad = out.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        up = potential(z)
        flat[i] = orig - eps
        down = potential(z)
        flat[i] = orig
        grad[i] = (up - down) / (2 * eps)
    return out


# -- schedule --------------------------------------------------------------

def test_beta_zero():
    assert beta(0.0, SCHED) == 0.0


def test_beta_constant_sigma_is_time():
    assert np.isclose(beta(1.5, UNIT), 1.5)


def test_beta_matches_quadrature():
    for t in (0.25, 0.5, 0.9, 1.0):
        expected, _ = quad(lambda s: sigma(s, SCHED) ** 2, 0.0, t)
        assert abs(beta(t, SCHED) - expected) / expected < 1e-8
    assert np.isclose(beta(1.0, SCHED), 13.0 / 3.0)


def test_beta_strictly_increasing():
    ts = np.linspace(0, 1, 101)
    bs = beta(ts, SCHED)
    assert np.all(np.diff(bs) > 0)


def test_time_range_checked():
    with pytest.raises(PreconditionError):
        sigma(-0.1, SCHED)
    with pytest.raises(PreconditionError):
        beta(1.5, SCHED)


# -- bridge state sampler ----------------------------------------------------

def test_state_pinned_at_T():
    rng = np.random.default_rng(0)
    zG = rng.standard_normal((3, 6))
    z0 = rng.standard_normal((3, 6))
    zt = sample_bridge_state(zG, z0, SCHED.T, SCHED, rng)
    assert np.allclose(zt, zG)


def test_state_zero_at_t0():
    rng = np.random.default_rng(1)
    zG = rng.standard_normal((3, 6))
    z0 = rng.standard_normal((3, 6))
    zt = sample_bridge_state(zG, z0, 0.0, SCHED, rng)
    assert np.allclose(zt, 0.0)  # the t=0 coefficient of the stated formula


def test_state_monte_carlo_mean():
    # sigma == 1, T == 1: beta_t = t, so E[Z_t] = t * z_G at z_0 = 0
    sched = BridgeSchedule(1.0, 1.0, 1.0, 1000)
    rng = np.random.default_rng(2)
    n = 10**5
    zG = np.ones((n, 1))
    z0 = np.zeros((n, 1))
    zt = sample_bridge_state(zG, z0, 0.5, sched, rng)
    std = np.sqrt(0.5 * 0.5)
    se = std / np.sqrt(n)
    assert abs(zt.mean() - 0.5) < 3 * se


def test_state_mean_forms_agree_at_zero_start():
    rng = np.random.default_rng(3)
    zG = rng.standard_normal((4, 6))
    z0 = np.zeros_like(zG)
    a = sample_bridge_state(zG, z0, 0.3, SCHED, np.random.default_rng(7))
    b = sample_bridge_state(zG, z0, 0.3, SCHED, np.random.default_rng(7),
                            mean_form="standard")
    assert np.allclose(a, b)


def test_state_mean_forms_differ_at_nonzero_start():
    rng = np.random.default_rng(4)
    zG = rng.standard_normal((4, 6))
    z0 = np.ones_like(zG)
    a = sample_bridge_state(zG, z0, 0.3, SCHED, np.random.default_rng(7))
    b = sample_bridge_state(zG, z0, 0.3, SCHED, np.random.default_rng(7),
                            mean_form="standard")
    assert not np.allclose(a, b)


# -- endpoint drift ----------------------------------------------------------

def test_endpoint_zero_at_target():
    z = np.ones((2, 3))
    assert np.allclose(drift_endpoint(z, z, 0.5, SCHED), 0.0)


def test_endpoint_direct_value():
    # sigma == 1, beta_T - beta_t = 4 at t = 0 with T = 4
    sched = BridgeSchedule(1.0, 1.0, 4.0, 1000)
    out = drift_endpoint(np.array([[2.0]]), np.array([[0.0]]), 0.0, sched)
    assert np.isclose(out[0, 0], 0.5)


def test_endpoint_matches_fd_of_gaussian_logdensity():
    rng = np.random.default_rng(5)
    for _ in range(20):
        t = rng.uniform(0.0, 0.95)
        zG = rng.standard_normal((1, 4))
        z = rng.standard_normal((1, 4))
        remaining = beta(SCHED.T, SCHED) - beta(t, SCHED)
        s2 = sigma(t, SCHED) ** 2

        def logdensity(state):
            return -0.5 * float(((zG - state) ** 2).sum()) / remaining

        expected = s2 * fd_gradient(logdensity, z)
        got = drift_endpoint(zG, z, t, SCHED)
        assert np.max(np.abs(got - expected)) < 1e-4 * max(1.0, np.abs(got).max())


def test_endpoint_rejects_t_equals_T():
    with pytest.raises(PreconditionError):
        drift_endpoint(np.zeros((1, 2)), np.zeros((1, 2)), SCHED.T, SCHED)


# -- lattice drift -----------------------------------------------------------

def lattice_log_potential(z, points, remaining):
    z = np.asarray(z)
    sq = ((z[..., None, :] - points) ** 2).sum(axis=-1)
    m = (-0.5 * sq / remaining).max()
    return float(m + np.log(np.exp(-0.5 * sq / remaining - m).sum()))


def test_lattice_two_point_symmetry_zero():
    points = np.array([[-1.0], [1.0]])
    out = drift_lattice_naive(np.array([[0.0]]), 1.0, UNIT, points=points)
    assert np.allclose(out, 0.0)


def test_lattice_two_point_reference_value():
    # z = 0.5, sigma = 1, beta_T - beta_t = 1, levels {-1, +1}
    points = np.array([[-1.0], [1.0]])
    remaining = beta(UNIT.T, UNIT) - beta(1.0, UNIT)
    assert np.isclose(remaining, 1.0)
    z = np.array([[0.5]])
    got = drift_lattice_naive(z, 1.0, UNIT, points=points)

    def pot(state):
        return lattice_log_potential(state, points, remaining)

    expected = fd_gradient(pot, z)
    assert np.max(np.abs(got - expected)) < 1e-4
    assert abs(got[0, 0] - (-0.03794)) < 1e-4


def test_single_point_lattice_equals_endpoint():
    rng = np.random.default_rng(6)
    s = rng.standard_normal((1, 3))
    z = rng.standard_normal((1, 3))
    got = drift_lattice_naive(z, 0.4, SCHED, points=s)
    expected = drift_endpoint(s, z, 0.4, SCHED)
    assert np.allclose(got, expected)


def test_lattice_center_is_stationary():
    spec = QuantizationSpec((5, 5))
    out = drift_lattice(np.zeros((3, 2)), 0.5, SCHED, spec)
    assert np.allclose(out, 0.0, atol=1e-14)


@pytest.mark.parametrize("levels", [(3, 3), (5, 5, 5)])
def test_factorized_matches_naive(levels):
    spec = QuantizationSpec(levels)
    rng = np.random.default_rng(7)
    for _ in range(100):
        t = rng.uniform(0.0, 0.99)
        z = rng.standard_normal((4, len(levels))) * 2
        fast = drift_lattice(z, t, SCHED, spec)
        slow = drift_lattice_naive(z, t, SCHED, spec)
        assert np.max(np.abs(fast - slow)) < 1e-10


def test_lattice_drift_matches_fd():
    rng = np.random.default_rng(8)
    spec = QuantizationSpec((5, 3))
    from graphbridge.fsq import enumerate_lattice
    points = enumerate_lattice(spec)
    for _ in range(20):
        t = rng.uniform(0.0, 0.9)
        z = rng.standard_normal((1, 2)) * 1.5
        remaining = beta(SCHED.T, SCHED) - beta(t, SCHED)
        s2 = sigma(t, SCHED) ** 2

        def pot(state):
            return lattice_log_potential(state, points, remaining)

        expected = s2 * fd_gradient(pot, z)
        got = drift_lattice(z, t, SCHED, spec)
        scale = max(1.0, np.abs(expected).max())
        assert np.max(np.abs(got - expected)) / scale < 1e-4


def test_lattice_drift_per_sample_times():
    spec = QuantizationSpec((5, 5))
    rng = np.random.default_rng(9)
    z = rng.standard_normal((3, 4, 2))
    ts = np.array([0.1, 0.5, 0.8])
    batched = drift_lattice(z, ts, SCHED, spec)
    for i, t in enumerate(ts):
        single = drift_lattice(z[i], float(t), SCHED, spec)
        assert np.allclose(batched[i], single)


# -- box drift ---------------------------------------------------------------

def test_box_center_zero():
    box = ContinuousDomainSpec(l_min=(-2.0, -1.0), l_max=(2.0, 1.0))
    out = drift_box(np.zeros((2, 2)), 0.5, SCHED, box)
    assert np.allclose(out, 0.0)


def test_box_pushes_inward_near_boundaries():
    box = ContinuousDomainSpec(l_min=(-2.0,), l_max=(2.0,))
    hi = drift_box(np.array([[1.98]]), 0.5, SCHED, box)
    lo = drift_box(np.array([[-1.98]]), 0.5, SCHED, box)
    assert hi[0, 0] < 0.0
    assert lo[0, 0] > 0.0


def test_box_matches_fd_of_log_cdf_difference():
    rng = np.random.default_rng(10)
    box = ContinuousDomainSpec(l_min=(-2.0,), l_max=(2.0,))
    # includes the documented point z = 1, beta_T - beta_t = 1, sigma = 1
    cases = [(np.array([[1.0]]), 1.0, UNIT)]
    for _ in range(20):
        cases.append((rng.uniform(-1.9, 1.9, size=(1, 1)),
                      rng.uniform(0.0, 0.9), SCHED))
    for z, t, sched in cases:
        remaining = beta(sched.T, sched) - beta(t, sched)
        s2 = sigma(t, sched) ** 2

        def pot(state):
            a = (state - (-2.0)) / np.sqrt(remaining)
            b = (state - 2.0) / np.sqrt(remaining)
            return float(np.log(ndtr(a) - ndtr(b)).sum())

        expected = s2 * fd_gradient(pot, z)
        got = drift_box(z, t, sched, box)
        assert np.max(np.abs(got - expected)) < 1e-4 * max(1.0, np.abs(got).max())


def test_box_rejects_outside_state():
    box = ContinuousDomainSpec(l_min=(-1.0,), l_max=(1.0,))
    with pytest.raises(PreconditionError):
        drift_box(np.array([[1.5]]), 0.5, SCHED, box)


def test_box_sign_matches_interior_direction_near_edges():
    box = ContinuousDomainSpec(l_min=(-2.0,), l_max=(2.0,))
    for frac in (0.99, 0.995):
        z = np.array([[2.0 * frac]])
        assert np.sign(drift_box(z, 0.3, SCHED, box))[0, 0] == -1.0
        assert np.sign(drift_box(-z, 0.3, SCHED, box))[0, 0] == 1.0


# -- loss target --------------------------------------------------------------

def test_loss_target_single_point_zero():
    s = np.array([[1.0, -1.0]])
    z = np.array([[0.3, 0.7]])
    t = 0.4
    endpoint = drift_endpoint(s, z, t, SCHED)
    lattice = drift_lattice_naive(z, t, SCHED, points=s)
    target = (endpoint - lattice) / sigma(t, SCHED)
    assert np.allclose(target, 0.0)


def test_loss_target_algebraic_identity():
    spec = QuantizationSpec((5, 5, 5))
    rng = np.random.default_rng(11)
    zG = rng.standard_normal((4, 3))
    z = rng.standard_normal((4, 3))
    for t in (0.1, 0.5, 0.9):
        target = loss_target(zG, z, t, SCHED, spec)
        lhs = target * sigma(t, SCHED) + drift_lattice(z, t, SCHED, spec)
        rhs = drift_endpoint(zG, z, t, SCHED)
        assert np.max(np.abs(lhs - rhs)) < 1e-12


def test_loss_target_homogeneity_in_sigma():
    # with the transition variance held fixed, both drifts carry an explicit
    # sigma_t^2 factor and the target an explicit 1/sigma_t, so scaling
    # sigma_t by c scales the drifts by c^2 and the target by c
    spec = QuantizationSpec((5,))
    rng = np.random.default_rng(12)
    zG = rng.standard_normal((2, 1))
    z = rng.standard_normal((2, 1))
    t = 0.4
    s = sigma(t, SCHED)
    endpoint = drift_endpoint(zG, z, t, SCHED)
    lattice = drift_lattice(z, t, SCHED, spec)
    target = loss_target(zG, z, t, SCHED, spec)
    assert np.allclose(target, (endpoint - lattice) / s)
    c = 2.0
    scaled_target = (c**2 * endpoint - c**2 * lattice) / (c * s)
    assert np.allclose(scaled_target, c * target)


# -- Euler-Maruyama ------------------------------------------------------------

def test_em_deterministic_given_seed():
    spec = QuantizationSpec((3,) * 2)
    a = em_sample(None, 5, SCHED, spec, PriorSpec("fixed_zero"),
                  np.random.default_rng(42))
    b = em_sample(None, 5, SCHED, spec, PriorSpec("fixed_zero"),
                  np.random.default_rng(42))
    assert np.array_equal(a, b)


def test_em_single_point_target_pins():
    # lattice {0}: the steering force is the endpoint drift toward 0; a fine
    # step keeps the final-step noise sigma * sqrt(dt) well inside 0.1
    sched = BridgeSchedule(sigma_min=1.0, sigma_max=1.0, T=1.0, steps=4000)
    rng = np.random.default_rng(13)
    z0 = np.zeros((200, 1))
    target = np.zeros((200, 1))
    final = em_integrate(
        lambda z, t: drift_lattice_naive(z, t, sched, points=target[:1]),
        z0, sched, rng)
    assert np.all(np.abs(final) < 0.1)


def test_em_snap_returns_lattice_points():
    spec = QuantizationSpec((5,) * 3)
    out = em_sample(None, 6, SCHED, spec, PriorSpec("fixed_zero"),
                    np.random.default_rng(3), snap=True)
    assert np.array_equal(out, nearest_lattice(out, spec))
    assert np.array_equal(out, np.round(out))


def test_em_concentrates_on_lattice():
    spec = QuantizationSpec((3,) * 6)
    rng = np.random.default_rng(14)
    z0 = np.zeros((500, 6))
    final = em_integrate(lambda z, t: drift_lattice(z, t, SCHED, spec),
                         z0, SCHED, rng)
    dist = np.abs(final - nearest_lattice(final, spec))
    assert (dist <= 0.25).mean() >= 0.95


def test_em_standard_normal_prior_changes_start():
    spec = QuantizationSpec((3,) * 2)
    a = em_sample(None, 4, SCHED, spec, PriorSpec("standard_normal"),
                  np.random.default_rng(5), snap=False)
    b = em_sample(None, 4, SCHED, spec, PriorSpec("fixed_zero"),
                  np.random.default_rng(5), snap=False)
    assert not np.allclose(a, b)
