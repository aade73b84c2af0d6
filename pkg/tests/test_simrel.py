import itertools
import math

import numpy as np
import pytest

from tll_sizer.dynamics import ControlSystem, expert_controller
from tll_sizer.simrel import FiniteTransitionSystem, SimRelation, check_ad_sim, perturb, quantize_embedding
from tll_sizer.utils import Box, DomainBox


def _system(points, transitions, labels=('a',)):
    return FiniteTransitionSystem(np.array(points, dtype=float).reshape(len(points), -1), labels,
                                  frozenset(transitions))


def _random_system(rng, coords, max_states, max_labels, density=0.3):
    num_states = int(rng.integers(1, max_states + 1))
    num_labels = int(rng.integers(1, max_labels + 1))
    points = rng.choice(coords, size=num_states)
    labels = tuple(str(rng.choice(['a', 'b'])) for _ in range(num_labels))
    transitions = {(x, u, y) for x in range(num_states) for u in range(num_labels) for y in range(num_states)
                   if rng.random() < density}
    return _system(points, transitions, labels)


def _transfer_closed(pairs, perturbed, T, strict_labels=False):
    for x, y in pairs:
        for u, x_next in perturbed.successors(x):
            if not any((x_next, y_next) in pairs for v, y_next in T.successors(y)
                       if not strict_labels or T.labels[v] == perturbed.labels[u]):
                return False
    return True


def _greatest_relation(S, T, delta):
    """Union of every transfer-closed relation inside the delta-closeness set, by exhaustive enumeration."""
    dist = S.distances_to(T)
    candidates = [(x, y) for x in range(S.num_states) for y in range(T.num_states) if dist[x, y] <= delta]
    perturbed = perturb(S, delta)
    union = set()
    for size in range(1, len(candidates) + 1):
        for subset in itertools.combinations(candidates, size):
            pairs = set(subset)
            if _transfer_closed(pairs, perturbed, T):
                union |= pairs
    return union


# --- Perturbation ---

def test_perturb_adds_transitions_within_delta():
    S = _system([0.0, 0.3, 1.0], {(0, 0, 1)})
    assert perturb(S, 0.5).transitions == {(0, 0, 1), (0, 0, 0)}


def test_perturb_on_a_line():
    S = _system([0.0, 1.0, 2.0], {(0, 0, 1)})
    assert perturb(S, 1.0).transitions == {(0, 0, 0), (0, 0, 1), (0, 0, 2)}
    assert perturb(S, 0.0).transitions == S.transitions


def test_perturb_is_monotone_in_delta(rng):
    for _ in range(20):
        S = _random_system(rng, np.linspace(0.0, 1.0, 5), 5, 2)
        assert perturb(S, 0.2).transitions <= perturb(S, 0.6).transitions


def test_perturb_rejects_negative_delta():
    with pytest.raises(ValueError):
        perturb(_system([0.0], set()), -0.1)


# --- Decision procedure ---

def test_identity_relation_at_zero_delta():
    S = _system([0.0, 1.0, 2.0], {(0, 0, 1), (1, 0, 2), (2, 0, 2)})
    result = check_ad_sim(S, S, 0.0)
    assert result.success
    assert result.relation.pairs == {(0, 0), (1, 1), (2, 2)}
    assert result.trace == ()


def test_agrees_with_brute_force_on_tiny_systems():
    rng = np.random.default_rng(2024)
    coords = np.array([0.0, 0.5, 1.0])
    for _ in range(200):
        S = _random_system(rng, coords, 3, 2)
        T = _random_system(rng, coords, 3, 2)
        greatest = _greatest_relation(S, T, 0.5)
        result = check_ad_sim(S, T, 0.5)
        total = {x for x, _ in greatest} == set(range(S.num_states))
        assert result.success == total
        if result.success:
            assert set(result.relation.pairs) == greatest
            assert result.relation.verify(S, T)
        else:
            assert result.counterexample not in {x for x, _ in greatest}
        assert len(result.trace) <= S.num_states * T.num_states


def test_perturbed_zero_delta_implies_delta_simulation():
    rng = np.random.default_rng(7)
    for _ in range(50):
        S = _random_system(rng, np.linspace(0.0, 1.0, 6), 5, 2)
        T = _random_system(rng, np.linspace(0.0, 1.0, 6), 5, 2)
        if check_ad_sim(perturb(S, 0.3), T, 0.0).success:
            assert check_ad_sim(S, T, 0.3).success


def test_perturbed_equivalence_on_separated_states():
    rng = np.random.default_rng(11)
    lattice = np.array([0.0, 1.0, 2.0])
    for _ in range(50):
        S = _random_system(rng, lattice, 5, 2, density=0.2)
        T = _random_system(rng, lattice, 5, 2, density=0.4)
        assert check_ad_sim(S, T, 0.5).success == check_ad_sim(perturb(S, 0.5), T, 0.0).success


def test_counterexample_and_trace():
    S = _system([0.0, 1.0], {(0, 0, 1)})
    T = _system([0.0], set())
    result = check_ad_sim(S, T, 0.5)
    assert not result.success
    assert result.relation is None
    assert result.counterexample == 0
    assert result.trace[0].pair == (0, 0)
    assert result.trace[0].target == 1
    assert result.to_dict()['trace'][0]['unmatched_target'] == 1


def test_strict_labels():
    S = _system([0.0], {(0, 0, 0)}, labels=('a',))
    T = _system([0.0], {(0, 0, 0)}, labels=('b',))
    assert check_ad_sim(S, T, 0.1).success
    strict = check_ad_sim(S, T, 0.1, strict_labels=True)
    assert not strict.success
    assert strict.counterexample == 0


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        check_ad_sim(_system([0.0], set()), _system([[0.0, 0.0]], set()), 0.1)


def test_relation_verify_rejects_broken_relations():
    S = _system([0.0, 1.0], {(0, 0, 1), (1, 0, 1)})
    T = _system([0.0, 1.0], {(0, 0, 1), (1, 0, 1)})
    assert SimRelation(frozenset({(0, 0), (1, 1)}), 0.1).verify(S, T)
    assert not SimRelation(frozenset({(0, 0)}), 0.1).verify(S, T)
    assert not SimRelation(frozenset({(0, 1), (1, 1)}), 0.1).verify(S, T)


def test_transition_system_validation_and_serialization():
    with pytest.raises(ValueError):
        _system([0.0], {(0, 0, 3)})
    S = _system([[0.0, 1.0], [0.5, 0.5]], {(0, 0, 1), (1, 1, 0)}, labels=('a', 'b'))
    data = S.to_dict()
    assert data['kind'] == 'transition_system'
    assert FiniteTransitionSystem.from_dict(data).to_dict() == data


# --- Quantized embeddings ---

def test_quantize_embedding(pendulum, pendulum_params):
    embedding = quantize_embedding(pendulum, expert_controller(pendulum_params), tau=0.01, pitch=0.5)
    assert embedding.num_states == 25
    assert len(embedding.transitions) == 25
    assert len(embedding.labels) == 25
    # the origin is an equilibrium of the expert closed loop
    origin = int(np.flatnonzero(np.all(embedding.states == 0.0, axis=1))[0])
    assert (origin, origin, origin) in embedding.transitions
    with pytest.raises(ValueError):
        quantize_embedding(pendulum, expert_controller(pendulum_params), tau=0.01, pitch=0.0)


def test_embedding_simulates_itself(pendulum, pendulum_params):
    embedding = quantize_embedding(pendulum, expert_controller(pendulum_params), tau=0.01, pitch=0.5)
    assert check_ad_sim(embedding, embedding, 0.0).success


def _line_system(rate):
    return ControlSystem(domain=DomainBox((-1.0,), (1.0,), m=1), control_box=Box((-1.0,), (1.0,)),
                         vector_field=lambda x, u: rate * x, name='line')


def test_embedding_of_a_contracting_line_halves_each_state():
    embedding = quantize_embedding(_line_system(-1.0), lambda x: np.zeros(1), tau=math.log(2.0), pitch=0.5)
    states = embedding.states[:, 0]
    np.testing.assert_allclose(states, [-1.0, -0.5, 0.0, 0.5, 1.0])
    targets = {x: y for x, _, y in embedding.transitions}
    assert len(targets) == 5
    for x, y in targets.items():
        assert abs(states[y] - states[x] / 2) <= 0.25 + 1e-9
    # -1, 0 and 1 halve onto grid points; +-0.5 land on a midpoint and may snap either way
    assert [states[targets[x]] for x in (0, 2, 4)] == [-0.5, 0.0, 0.5]


def test_embedding_of_a_stationary_field_is_all_self_loops():
    embedding = quantize_embedding(_line_system(0.0), lambda x: np.zeros(1), tau=0.1, pitch=0.5)
    assert embedding.transitions == {(x, x, x) for x in range(5)}


def test_pendulum_embedding_has_81_states(pendulum, pendulum_params):
    embedding = quantize_embedding(pendulum, expert_controller(pendulum_params), tau=0.01, pitch=0.25)
    assert embedding.num_states == 81
    assert len(embedding.transitions) == 81
    assert {x for x, _, _ in embedding.transitions} == set(range(81))
