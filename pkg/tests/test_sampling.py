import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kgembed.kg import KnowledgeGraph
from kgembed.sampling import (
    BernoulliSampler,
    PositionalSampler,
    UniformSampler,
    make_sampler,
)

from oracles import random_graph

KINDS = ["uniform", "bernoulli", "positional"]


def one_side_changed(src, out):
    head = src[:, 0] != out[:, 0]
    tail = src[:, 2] != out[:, 2]
    return bool(np.all(head ^ tail) and np.all(src[:, 1] == out[:, 1]))


def test_uniform_two_entities():
    kg = KnowledgeGraph.from_indices([(0, 0, 1)], 2, 1)
    s = UniformSampler(kg, seed=0)
    for _ in range(50):
        out = s.corrupt_batch(kg.triples)
        assert out.tolist()[0] in ([1, 0, 1], [0, 0, 0])


def test_needs_two_entities():
    kg = KnowledgeGraph.from_indices([(0, 0, 0)], 1, 1)
    for cls in (UniformSampler, BernoulliSampler):
        with pytest.raises(ValueError, match="two entities"):
            cls(kg).corrupt_batch(kg.triples)


@pytest.mark.parametrize("kind", KINDS)
def test_one_side_property(kind):
    rng = np.random.default_rng(4)
    kg = KnowledgeGraph.from_indices(random_graph(rng, 30, 4, 200), 30, 4)
    out = make_sampler(kind, kg, seed=1).corrupt_batch(kg.triples)
    assert out.shape == kg.triples.shape
    assert one_side_changed(kg.triples, out)


@settings(max_examples=40, deadline=None)
@given(kind=st.sampled_from(KINDS), seed=st.integers(0, 2**16), n_facts=st.integers(1, 80))
def test_one_side_property_random(kind, seed, n_facts):
    triples = random_graph(np.random.default_rng(seed), 10, 3, n_facts)
    kg = KnowledgeGraph.from_indices(triples, 10, 3)
    out = make_sampler(kind, kg, seed).corrupt_kg(kg)
    assert len(out) == kg.n_facts
    assert one_side_changed(kg.triples, out)


def test_bernoulli_head_probability():
    # relation 0: one head, three tails -> tph = 3, hpt = 1
    kg = KnowledgeGraph.from_indices([(0, 0, 1), (0, 0, 2), (0, 0, 3)], 5, 1)
    s = BernoulliSampler(kg, seed=0)
    assert s.head_prob[0] == 0.75
    batch = np.repeat(kg.triples, 3334, axis=0)[:10_000]
    out = s.corrupt_batch(batch)
    frac = np.mean(out[:, 0] != batch[:, 0])
    assert abs(frac - 0.75) < 0.02


def test_positional_replacements_stay_in_position_index():
    # relation 0 tails are {1, 2}
    kg = KnowledgeGraph.from_indices([(0, 0, 1), (3, 0, 2), (4, 1, 0)], 6, 2)
    s = PositionalSampler(kg, seed=0)
    batch = np.repeat(kg.triples[:2], 500, axis=0)
    out = s.corrupt_batch(batch)
    tail_side = out[:, 2] != batch[:, 2]
    assert tail_side.sum() > 0
    assert set(out[tail_side, 2].tolist()) <= {1, 2}
    head_side = ~tail_side
    assert set(out[head_side, 0].tolist()) <= {0, 3}


def test_positional_singleton_falls_back_to_uniform():
    kg = KnowledgeGraph.from_indices([(0, 0, 1)], 4, 1)
    s = PositionalSampler(kg, seed=0)
    out = s.corrupt_batch(np.repeat(kg.triples, 200, axis=0))
    assert one_side_changed(np.repeat(kg.triples, 200, axis=0), out)
    assert set(out[:, 0].tolist()) | set(out[:, 2].tolist()) >= {2, 3}


@pytest.mark.parametrize("kind", KINDS)
def test_determinism_per_seed(kind):
    kg = KnowledgeGraph.from_indices(random_graph(np.random.default_rng(0), 20, 3, 60), 20, 3)
    a = make_sampler(kind, kg, seed=5).corrupt_kg(kg)
    b = make_sampler(kind, kg, seed=5).corrupt_kg(kg)
    assert np.array_equal(a, b)


def test_corrupt_kg_equals_corrupt_batch():
    kg = KnowledgeGraph.from_indices(random_graph(np.random.default_rng(0), 20, 3, 60), 20, 3)
    a = make_sampler("bernoulli", kg, seed=5).corrupt_kg(kg)
    b = make_sampler("bernoulli", kg, seed=5).corrupt_batch(kg.triples)
    assert np.array_equal(a, b)


def test_corrupt_kg_single_triple():
    kg = KnowledgeGraph.from_indices([(0, 0, 1)], 2, 1)
    out = UniformSampler(kg, seed=3).corrupt_kg(kg)
    assert out.shape == (1, 3)


def test_unknown_sampler():
    kg = KnowledgeGraph.from_indices([(0, 0, 1)], 2, 1)
    with pytest.raises(ValueError, match="unknown sampler"):
        make_sampler("adversarial", kg)
