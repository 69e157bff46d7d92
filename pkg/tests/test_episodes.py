"""Episode sampling and label encoding."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conceptmem.data import SyntheticSpec, make_synthetic
from conceptmem.episodes import (
    Dataset,
    EpisodeSpec,
    encode_label,
    nway_kshot_episode,
    sample_episode,
)
from conceptmem.errors import ContractError, EncodingError, SamplingError


def toy_dataset(n_classes=6, per_class=8, dim=3):
    samples = {c: np.full((per_class, dim), float(c)) + np.arange(per_class)[:, None] * 0.01
               for c in range(n_classes)}
    return Dataset(samples=samples, input_shape=(dim,), meta={})


# -- encoding -----------------------------------------------------------------


def test_encode_binary_example():
    # id 5 in 15 bits: twelve zeros then 1 0 1
    got = encode_label(5, "binary", 15)
    assert np.array_equal(got, np.array([0] * 12 + [1, 0, 1], dtype=float))


def test_encode_one_hot():
    got = encode_label(3, "one-hot", 10)
    want = np.zeros(10)
    want[3] = 1.0
    assert np.array_equal(got, want)


def test_encode_none_is_zero_vector():
    assert not encode_label(None, "one-hot", 4).any()
    assert not encode_label(None, "binary", 4).any()


def test_encode_range_checks():
    assert np.array_equal(encode_label(2**4 - 1, "binary", 4), np.ones(4))
    with pytest.raises(EncodingError):
        encode_label(2**4, "binary", 4)
    with pytest.raises(EncodingError):
        encode_label(10, "one-hot", 10)
    with pytest.raises(EncodingError):
        encode_label(-1, "one-hot", 10)
    with pytest.raises(EncodingError):
        encode_label(0, "gray", 4)


@settings(max_examples=60, deadline=None)
@given(st.integers(min_value=0, max_value=2**12 - 1))
def test_binary_encoding_round_trips(label_id):
    bits = encode_label(label_id, "binary", 12)
    back = int("".join(str(int(b)) for b in bits), 2)
    assert back == label_id


# -- episode sampling ---------------------------------------------------------


def spec_of(labeling, seed=0, n_classes=3, length=9):
    return EpisodeSpec(n_classes=n_classes, length=length, labeling=labeling,
                       scheme="one-hot", l_label=10, seed=seed)


def test_episode_shape_and_class_budget():
    ds = toy_dataset()
    ep = sample_episode(ds, spec_of("full"))
    assert len(ep) == 9
    assert ep.classes_present() <= set(ep.label_of_class)
    assert len(ep.label_of_class) == 3


def test_full_labeling_labels_every_step():
    ep = sample_episode(toy_dataset(), spec_of("full"))
    for step in ep.steps:
        assert step.y.sum() == 1.0
        assert step.y[step.label_id] == 1.0


def test_seed_labeling_first_occurrence_only():
    ep = sample_episode(toy_dataset(), spec_of("seed", seed=3))
    seen = set()
    for step in ep.steps:
        if step.class_id not in seen:
            assert step.y.any(), "first occurrence must carry its label"
            seen.add(step.class_id)
        else:
            assert not step.y.any(), "repeats must be unlabeled"


def test_none_labeling_all_zero():
    ep = sample_episode(toy_dataset(), spec_of("none", seed=5))
    assert not any(step.y.any() for step in ep.steps)


def test_label_ids_distinct_and_in_space():
    for seed in range(30):
        ep = sample_episode(toy_dataset(), spec_of("full", seed=seed))
        ids = list(ep.label_of_class.values())
        assert len(set(ids)) == len(ids)
        assert all(0 <= i < 10 for i in ids)


def test_episode_determinism():
    ds = toy_dataset()
    a = sample_episode(ds, spec_of("seed", seed=11))
    b = sample_episode(ds, spec_of("seed", seed=11))
    for sa, sb in zip(a.steps, b.steps):
        assert np.array_equal(sa.x, sb.x) and np.array_equal(sa.y, sb.y)
        assert sa.class_id == sb.class_id and sa.label_id == sb.label_id
    c = sample_episode(ds, spec_of("seed", seed=12))
    assert any(sa.class_id != sc.class_id or not np.array_equal(sa.x, sc.x)
               for sa, sc in zip(a.steps, c.steps))


def test_no_sample_reuse_within_episode():
    ds = toy_dataset(n_classes=2, per_class=6)
    ep = sample_episode(ds, spec_of("full", n_classes=2, length=12))
    keys = [(s.class_id, s.x.tobytes()) for s in ep.steps]
    assert len(set(keys)) == len(keys)


def test_exhausted_dataset_raises():
    ds = toy_dataset(n_classes=2, per_class=2)
    with pytest.raises(SamplingError):
        sample_episode(ds, spec_of("full", n_classes=2, length=5))


def test_too_few_classes_raises():
    with pytest.raises(SamplingError):
        sample_episode(toy_dataset(n_classes=2), spec_of("full", n_classes=3))


def test_label_space_must_fit_classes():
    spec = EpisodeSpec(n_classes=3, length=3, labeling="full",
                       scheme="binary", l_label=1, seed=0)
    with pytest.raises(SamplingError):
        sample_episode(toy_dataset(), spec)


def test_spec_validation():
    with pytest.raises(ContractError):
        spec_of("partial")
    with pytest.raises(ContractError):
        EpisodeSpec(n_classes=0, length=3, labeling="full", scheme="one-hot",
                    l_label=4, seed=0)


def test_dataset_validation():
    with pytest.raises(ContractError):
        Dataset(samples={0: np.zeros((2, 3)), 2: np.zeros((2, 3))},
                input_shape=(3,), meta={})
    with pytest.raises(ContractError):
        Dataset(samples={0: np.zeros((0, 3))}, input_shape=(3,), meta={})


# -- n-way k-shot episodes ----------------------------------------------------


def test_nway_episode_structure():
    ds = toy_dataset(n_classes=8, per_class=5)
    support, query = nway_kshot_episode(ds, n=4, k=2, scheme="one-hot",
                                        l_label=10, seed=2)
    assert len(support) == 8
    per_class = {}
    for s in support:
        per_class.setdefault(s.class_id, []).append(s)
        assert s.y.any()
    assert len(per_class) == 4
    assert all(len(v) == 2 for v in per_class.values())
    assert query.class_id in per_class
    assert not query.y.any()  # query arrives unlabeled
    assert query.label_id == per_class[query.class_id][0].label_id
    # query sample is not one of the supports
    support_keys = {(s.class_id, s.x.tobytes()) for s in support}
    assert (query.class_id, query.x.tobytes()) not in support_keys


def test_nway_query_class_uniform():
    ds = make_synthetic(SyntheticSpec(n_classes=6, dim=4, center_scale=1.0,
                                      noise_sigma=1.0, samples_per_class=10), seed=0)
    counts = {}
    n = 1200
    for seed in range(n):
        _, q = nway_kshot_episode(ds, n=3, k=1, scheme="one-hot", l_label=10,
                                  seed=seed)
        counts[q.class_id] = counts.get(q.class_id, 0) + 1
    # every class can be queried; no single class dominates
    assert len(counts) == 6
    assert max(counts.values()) < n * (1 / 6) * 1.6


def test_nway_insufficient_samples_raises():
    ds = toy_dataset(n_classes=3, per_class=2)
    with pytest.raises(SamplingError):
        nway_kshot_episode(ds, n=3, k=2, scheme="one-hot", l_label=10, seed=0)
