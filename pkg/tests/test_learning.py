import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import scalar_model
from qdlearn.graph import ConfigurationError, LinkFailureModel, build_ring, from_edges
from qdlearn.learning import (
    AgentQState,
    QLearnerState,
    Transition,
    WeightSchedule,
    alpha_weight,
    beta_weight,
    centralized_step,
    local_g,
    qd_step,
    residual_nu,
    residuals_all,
    update_matrix,
    update_matrix_nonneg,
)
from qdlearn.mdp import MdpModel, TrajectoryState, behavior_step, random_model, sample_next_state


def test_alpha_formula():
    s = WeightSchedule(a=0.5, b=0.01, tau1=1.0, tau2=0.2)
    assert s.alpha(0) == 0.5
    assert s.alpha(4) == pytest.approx(0.1, abs=1e-15)
    assert s.beta(0) == 0.01
    assert alpha_weight(s, 4) == pytest.approx(s.alpha(4), rel=1e-15)
    assert beta_weight(s, 9) == pytest.approx(s.beta(9), rel=1e-15)


def test_beta_over_alpha_increases():
    s = WeightSchedule(a=0.5, b=0.01, tau1=1.0, tau2=0.2)
    k = np.arange(10_001)
    ratio = beta_weight(s, k) / alpha_weight(s, k)
    assert np.all(np.diff(ratio) > 0)
    assert np.allclose(ratio, (0.01 / 0.5) * (k + 1.0) ** 0.8, rtol=1e-12)


def test_schedule_validation():
    with pytest.raises(ConfigurationError):
        WeightSchedule(a=0.0, b=0.1)
    assert WeightSchedule(0.5, 0.01, 1.0, 0.2).exponent_issues() == []
    assert WeightSchedule(0.5, 0.01, 0.4, 0.1).exponent_issues()
    # tau2 must stay below tau1 - 1/(2+eps1) = 1 - 1/3
    assert WeightSchedule(0.5, 0.01, 1.0, 0.7).exponent_issues()
    assert not WeightSchedule(0.5, 0.01, 1.0, 0.7, eps1=100.0).exponent_issues()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        assert not WeightSchedule(0.5, 0.01, 0.4, 0.1).warn_exponents()
    assert caught
    assert WeightSchedule(0.5, 0.01).nonnegativity_ok(40)
    assert not WeightSchedule(0.5, 0.02).nonnegativity_ok(40)


def test_single_agent_reduces_to_watkins():
    model = scalar_model(gamma=0.5)
    state = AgentQState.zeros(1, 1, 1)
    tr = Transition(0, 0, np.array([1.0]), 0)
    qd_step(state, model, np.zeros((1, 1)), tr, WeightSchedule(1.0, 0.1))
    assert state.tables[0, 0, 0] == 1.0
    assert state.visit_counts[0, 0] == 1 and state.step == 1


def test_pure_consensus_step():
    model = MdpModel(np.ones((1, 1, 1)), np.zeros((2, 1, 1)), 0.0, 0.5)
    state = AgentQState.zeros(2, 1, 1)
    state.tables[:, 0, 0] = [1.0, 0.0]
    L = from_edges(2, [(0, 1)]).laplacian()
    out = qd_step(state, model, L, Transition(0, 0, np.zeros(2), 0), WeightSchedule(0.5, 0.25), alpha=0.0)
    assert state.tables[:, 0, 0].tolist() == [0.75, 0.25]
    assert out.beta == 0.25 and out.alpha == 0.0


def test_synchronous_reads_when_successor_is_visited_state():
    # with x_{t+1} = x_t the min must use the pre-update row
    model = MdpModel(np.ones((1, 2, 1)), np.zeros((1, 1, 2)), 0.0, 0.5)
    state = AgentQState.zeros(1, 1, 2)
    state.tables[0, 0] = [10.0, 4.0]
    qd_step(state, model, np.zeros((1, 1)), Transition(0, 1, np.array([0.0]), 0), WeightSchedule(1.0, 0.1))
    assert state.tables[0, 0, 1] == 2.0  # 0 + 0.5 * min(10, 4)


def _random_pieces(seed, N=4, M=3, U=2):
    rng = np.random.default_rng(seed)
    model = random_model(rng, M, U, N, discount=0.8, cost_noise_std=5.0)
    state = AgentQState.zeros(N, M, U)
    state.tables[...] = rng.uniform(-100, 100, size=(N, M, U))
    return rng, model, state


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_step_touches_only_visited_pair(seed):
    rng, model, state = _random_pieces(seed)
    before = state.tables.copy()
    topo = build_ring(4, 1)
    lap = LinkFailureModel(0.5).sample(topo, rng)
    i, u = int(rng.integers(3)), int(rng.integers(2))
    tr = Transition(i, u, rng.normal(size=4), int(rng.integers(3)))
    qd_step(state, model, lap, tr, WeightSchedule(0.5, 0.1))
    mask = np.ones_like(before, dtype=bool)
    mask[:, i, u] = False
    assert np.array_equal(state.tables[mask], before[mask])


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_consensus_alone_preserves_average(seed):
    rng, model, state = _random_pieces(seed)
    lap = LinkFailureModel(0.3).sample(build_ring(4, 1), rng)
    tr = Transition(1, 0, rng.normal(size=4), 2)
    avg = state.tables[:, 1, 0].mean()
    qd_step(state, model, lap, tr, WeightSchedule(0.5, 0.1), alpha=0.0)
    assert state.tables[:, 1, 0].mean() == pytest.approx(avg, abs=1e-12)


def test_step_matches_explicit_formula(rng):
    # oracle: per-agent neighbor loop straight from the update rule
    _, model, state = _random_pieces(3)
    topo = build_ring(4, 1)
    lap = LinkFailureModel(0.5).sample(topo, rng)
    tr = Transition(2, 1, np.array([3.0, -1.0, 7.0, 0.5]), 0)
    s = WeightSchedule(0.5, 0.1)
    state.visit_counts[2, 1] = 6
    old = state.tables.copy()
    a, b = s.alpha(6), s.beta(6)
    active = {tuple(e) for e in lap.active_edges.tolist()}
    expected = []
    for n in range(4):
        nbrs = [l for l in range(4) if (min(n, l), max(n, l)) in active]
        cons = sum(old[n, 2, 1] - old[l, 2, 1] for l in nbrs)
        innov = tr.costs[n] + model.discount * old[n, 0].min() - old[n, 2, 1]
        expected.append(old[n, 2, 1] - b * cons + a * innov)
    qd_step(state, model, lap, tr, s)
    assert np.allclose(state.tables[:, 2, 1], expected, rtol=0, atol=1e-12)
    assert state.visit_counts[2, 1] == 7


def test_centralized_examples():
    model = MdpModel(np.ones((1, 1, 1)), np.zeros((3, 1, 1)), 0.0, 0.0)
    c = QLearnerState.zeros(1, 1)
    centralized_step(c, model, Transition(0, 0, np.array([1.0, 2.0, 3.0]), 0), WeightSchedule(1.0, 0.1))
    assert c.table[0, 0] == 2.0


def test_single_agent_bitwise_equivalence():
    rng = np.random.default_rng(11)
    model = random_model(rng, 3, 2, 1, discount=0.7, cost_noise_std=6.0)
    s = WeightSchedule(0.5, 0.1)
    agents = AgentQState.zeros(1, 3, 2)
    central = QLearnerState.zeros(3, 2)
    traj = TrajectoryState()
    L = np.zeros((1, 1))
    for _ in range(5000):
        x = traj.state
        u, y = behavior_step(model, traj, rng)
        tr = Transition(x, u, np.array([model.cost_means[0, x, u] + 6.0 * rng.standard_normal()]), y)
        qd_step(agents, model, L, tr, s, beta=0.0)
        centralized_step(central, model, tr, s)
        assert np.array_equal(agents.tables[0], central.table)


def test_local_g_zero_discount(small_model, rng):
    model = MdpModel(small_model.kernel, small_model.cost_means, 0.0, 0.0)
    for n in range(model.num_agents):
        assert np.array_equal(local_g(model, n, rng.normal(size=(2, 2))), model.cost_means[n])


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_local_g_lipschitz(seed):
    rng = np.random.default_rng(seed)
    model = random_model(rng, 3, 3, 4, discount=0.9)
    q1, q2 = rng.uniform(-500, 500, size=(2, 3, 3))
    for n in range(4):
        diff = np.abs(local_g(model, n, q1) - local_g(model, n, q2))
        assert diff.max() <= model.discount * np.abs(q1 - q2).max() + 1e-9


def test_residual_zero_for_deterministic_model():
    kernel = np.zeros((2, 1, 2))
    kernel[0, 0, 1] = kernel[1, 0, 0] = 1.0
    model = MdpModel(kernel, np.array([[[3.0], [4.0]]]), 0.0, 0.6)
    q = np.array([[1.5], [-2.0]])
    assert residual_nu(model, 0, Transition(0, 0, np.array([3.0]), 1), q) == pytest.approx(0.0, abs=1e-12)


def test_residual_equals_cost_noise_on_deterministic_kernel():
    rng = np.random.default_rng(21)
    kernel = np.zeros((1, 1, 1)) + 1.0
    model = MdpModel(kernel, np.full((1, 1, 1), 50.0), 3.0, 0.6)
    q = np.array([[7.0]])
    noise = 3.0 * rng.standard_normal(100_000)
    nus = np.array([residual_nu(model, 0, Transition(0, 0, np.array([50.0 + z]), 0), q) for z in noise[:2000]])
    assert np.allclose(nus, noise[:2000], atol=1e-9)
    assert abs(noise.mean()) <= 3 * noise.std(ddof=1) / np.sqrt(noise.size)


def test_residual_zero_mean_under_random_kernel():
    rng = np.random.default_rng(31)
    model = random_model(rng, 3, 2, 2, discount=0.8, cost_noise_std=4.0)
    q = rng.uniform(-50, 50, size=(3, 2))
    nus = []
    for _ in range(100_000):
        y = sample_next_state(model, 1, 0, rng)
        c = model.cost_means[:, 1, 0] + 4.0 * rng.standard_normal(2)
        nus.append(residual_nu(model, 1, Transition(1, 0, c, y), q))
    nus = np.array(nus)
    assert abs(nus.mean()) <= 3 * nus.std(ddof=1) / np.sqrt(nus.size)


def test_vectorized_residuals_agree(rng):
    _, model, state = _random_pieces(5)
    tr = Transition(0, 1, rng.normal(size=4) * 10, 2)
    vec = residuals_all(model, tr, state.tables)
    single = [residual_nu(model, n, tr, state.tables[n]) for n in range(4)]
    assert np.allclose(vec, single, rtol=0, atol=1e-10)


def test_update_matrix_examples(rng):
    topo = build_ring(40, 2)
    s = WeightSchedule(0.5, 0.01)
    for _ in range(50):
        assert update_matrix_nonneg(s, LinkFailureModel(0.5).sample(topo, rng), 0)
    bad = WeightSchedule(0.9, 0.1)
    W = update_matrix(bad, topo.laplacian(), 0)
    assert W[0, 0] == pytest.approx(1 - 0.9 - 0.1 * 4)
    assert not update_matrix_nonneg(bad, topo.laplacian(), 0)
    assert np.array_equal(update_matrix(s, topo.laplacian(), 0, alpha=0.0, beta=0.0), np.eye(40))
    assert update_matrix_nonneg(s, topo.laplacian(), 0, alpha=0.0, beta=0.0)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), k=st.integers(0, 10**6), n=st.integers(2, 20))
def test_update_matrix_norm_at_most_one(seed, k, n):
    rng = np.random.default_rng(seed)
    b = float(rng.uniform(0.001, 1.0 / n))
    a = float(rng.uniform(0.001, 1.0 - n * b)) if n * b < 0.999 else 0.001
    s = WeightSchedule(a, b, 1.0, 0.2)
    assert s.nonnegativity_ok(n)
    pairs = [(x, y) for x in range(n) for y in range(x + 1, n)]
    keep = rng.random(len(pairs)) < 0.5
    L = from_edges(n, [p for p, kp in zip(pairs, keep) if kp]).laplacian()
    W = update_matrix(s, L, k)
    assert W.min() >= -1e-12
    assert np.abs(W).sum(axis=1).max() <= 1 + 1e-12
    assert np.abs(np.linalg.eigvalsh(W)).max() <= 1 + 1e-12
    # order preservation: x <= y componentwise implies Wx <= Wy
    x = rng.normal(size=n)
    y = x + rng.uniform(0, 1, size=n)
    assert np.all(W @ x <= W @ y + 1e-12)


def test_agent_state_zeros():
    s = AgentQState.zeros(3, 2, 4)
    assert s.tables.shape == (3, 2, 4) and s.num_agents == 3
    assert s.visit_counts.dtype.kind == "i"
