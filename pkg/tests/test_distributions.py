"""Client histogram generation, smoothing, and sample materialisation."""

import math

import numpy as np
import pytest
from numpy.random import default_rng

from edgefed.distributions import (
    Dataset,
    DirichletProfile,
    GroupedProfile,
    LabelDistribution,
    ProbabilityVector,
    generate_clients,
    materialize,
    normalize,
    sample_dirichlet,
    separated_feature_model,
    uniform_distribution,
)
from edgefed.errors import (
    DimensionMismatchError,
    InvalidInputError,
    InvalidParameterError,
)


# ---------------------------------------------------------------- histograms


def test_label_distribution_basics():
    d = LabelDistribution([3, 0, 7])
    assert d.num_classes == 3
    assert d.total() == 10
    merged = d.merge(LabelDistribution([1, 1, 1]))
    assert merged.counts.tolist() == [4, 1, 8]


def test_label_distribution_rejects_bad_counts():
    with pytest.raises(InvalidInputError):
        LabelDistribution([5, -1])
    with pytest.raises(InvalidInputError):
        LabelDistribution([1.5, 2.5])
    with pytest.raises(DimensionMismatchError):
        LabelDistribution([1, 2]).merge(LabelDistribution([1, 2, 3]))


def test_uniform_distribution_spread():
    d = uniform_distribution(10, 200)
    assert d.total() == 200
    assert int(d.counts.max() - d.counts.min()) <= 1
    uneven = uniform_distribution(3, 7)
    assert uneven.total() == 7
    assert int(uneven.counts.max() - uneven.counts.min()) <= 1


# ----------------------------------------------------------------- dirichlet


def test_dirichlet_is_a_probability_vector():
    theta = sample_dirichlet([1.0, 1.0], default_rng(7))
    p = theta.probs
    assert 0.0 < p[0] < 1.0
    assert math.isclose(float(p.sum()), 1.0, abs_tol=1e-12)


def test_dirichlet_concentration_limit():
    # huge alpha pins every draw to the uniform point
    theta = sample_dirichlet([1e6] * 10, default_rng(3))
    assert np.all(np.abs(theta.probs - 0.1) < 0.01)


def test_dirichlet_mean_matches_analytic():
    # Monte-Carlo oracle: E[theta] = alpha / sum(alpha)
    rng = default_rng(11)
    draws = np.array([sample_dirichlet([2.0, 1.0, 1.0], rng).probs for _ in range(10_000)])
    assert np.allclose(draws.mean(axis=0), [0.5, 0.25, 0.25], atol=0.01)


def test_dirichlet_rejects_nonpositive_alpha():
    rng = default_rng(0)
    with pytest.raises(InvalidParameterError):
        sample_dirichlet([1.0, 0.0], rng)
    with pytest.raises(InvalidParameterError):
        sample_dirichlet([-0.5, 1.0], rng)


def test_dirichlet_low_alpha_concentrates_mass():
    """Dir(0.3) clients park most of their mass on very few classes.

    Measured against a Monte-Carlo oracle: the mean per-client max share
    sits near 0.47 and roughly a third of clients cross 0.5, far more than
    a flat profile ever produces.
    """
    profile = DirichletProfile(alpha=(0.3,) * 10, samples_per_client=200)
    clients = generate_clients(profile, 400, default_rng(5))
    shares = np.array([c.counts.max() / c.total() for c in clients])
    frac_over_half = float((shares > 0.5).mean())
    assert 0.2 < frac_over_half < 0.5
    assert shares.mean() > 0.38
    flat = generate_clients(DirichletProfile(alpha=(30.0,) * 10, samples_per_client=200), 400, default_rng(5))
    flat_shares = np.array([c.counts.max() / c.total() for c in flat])
    assert float((flat_shares > 0.5).mean()) == 0.0


# ------------------------------------------------------------ grouped skew


def test_grouped_counts_track_their_means():
    # sorted per-client counts split into the two high draws and eight low
    clients = generate_clients(GroupedProfile(), 2000, default_rng(21))
    tops, rest = [], []
    for c in clients:
        ordered = np.sort(c.counts)[::-1]
        tops.append(ordered[:2].mean())
        rest.append(ordered[2:].mean())
    assert 45.0 < float(np.mean(tops)) < 58.0
    assert 9.0 < float(np.mean(rest)) < 12.0


def test_grouped_degenerate_stds_are_exact():
    profile = GroupedProfile(high_std=0.0, low_std=0.0)
    for c in generate_clients(profile, 50, default_rng(2)):
        ordered = np.sort(c.counts)[::-1]
        assert ordered.tolist() == [50, 50] + [10] * 8


def test_grouped_validation():
    with pytest.raises(InvalidParameterError):
        GroupedProfile(low_mean=0.0)
    with pytest.raises(InvalidParameterError):
        GroupedProfile(high_std=-1.0)
    with pytest.raises(InvalidParameterError):
        GroupedProfile(num_high_classes=0)
    with pytest.raises(InvalidParameterError):
        GroupedProfile(group_size=11)


def test_group_weights_validation():
    with pytest.raises(DimensionMismatchError):
        GroupedProfile(group_weights=(0.5, 0.5))  # 5 groups expected
    with pytest.raises(InvalidParameterError):
        GroupedProfile(group_weights=(0.5, 0.5, 0.5, 0.5, -0.1))
    with pytest.raises(InvalidParameterError):
        GroupedProfile(group_weights=(0.0,) * 5)


def test_group_weights_degenerate_pins_the_group():
    # all popularity on group 0 forces classes {0, 1} high for every client
    profile = GroupedProfile(
        high_std=0.0, low_std=0.0, group_weights=(1.0, 0.0, 0.0, 0.0, 0.0)
    )
    for c in generate_clients(profile, 30, default_rng(9)):
        assert c.counts.tolist() == [50, 50] + [10] * 8


def test_group_weights_skew_popularity():
    # degenerate stds make the high classes exactly identifiable
    weights = (0.7, 0.1, 0.1, 0.05, 0.05)
    profile = GroupedProfile(high_std=0.0, low_std=0.0, group_weights=weights)
    clients = generate_clients(profile, 2000, default_rng(13))
    hit = np.zeros(5)
    for c in clients:
        high = np.argsort(c.counts)[::-1][:2]
        hit[int(high[0]) // 2] += 0.5
        hit[int(high[1]) // 2] += 0.5
    freq = hit / len(clients)
    assert abs(freq[0] - 0.7) < 0.05
    assert freq[0] > freq[1:].max() + 0.4


def test_group_weights_equal_weights_stay_uniform():
    # explicit equal weights must not introduce any popularity bias
    clients = generate_clients(
        GroupedProfile(high_std=0.0, low_std=0.0, group_weights=(1.0,) * 5),
        4000,
        default_rng(77),
    )
    hit = np.zeros(5)
    for c in clients:
        high = np.argsort(c.counts)[::-1][:2]
        hit[int(high[0]) // 2] += 0.5
        hit[int(high[1]) // 2] += 0.5
    freq = hit / len(clients)
    assert np.all(np.abs(freq - 0.2) < 0.03)


# --------------------------------------------------------------- smoothing


def test_normalize_plain_counts():
    p = normalize(LabelDistribution([10, 10, 10, 10]), epsilon=0.0)
    assert np.allclose(p.probs, 0.25)


def test_normalize_empty_histogram_is_uniform():
    p = normalize(LabelDistribution([0, 0, 0, 0]))
    assert np.allclose(p.probs, 0.25)


def test_normalize_arithmetic():
    p = normalize(LabelDistribution([3, 1]))
    assert np.allclose(p.probs, [0.75, 0.25], atol=1e-5)


def test_probability_vector_validation():
    with pytest.raises(InvalidInputError):
        ProbabilityVector(np.array([0.7, 0.7]))
    with pytest.raises(InvalidInputError):
        ProbabilityVector(np.array([-0.1, 1.1]))


# ------------------------------------------------------------- materialise


def test_materialize_counts_and_labels():
    model = separated_feature_model(2, 4, 6.0, 1.0)
    ds = materialize(LabelDistribution([5, 0]), model, default_rng(1))
    assert len(ds) == 5
    assert np.all(ds.labels == 0)
    assert ds.feat_dim == 4


def test_materialize_empty():
    model = separated_feature_model(3, 4, 6.0, 1.0)
    ds = materialize(LabelDistribution([0, 0, 0]), model, default_rng(1))
    assert len(ds) == 0


def test_materialize_separation_oracle():
    """With >= 6 sigma between class means a nearest-mean rule is near perfect."""
    model = separated_feature_model(4, 8, 6.0, 1.0)
    ds = materialize(uniform_distribution(4, 1000), model, default_rng(42))
    centers = model.means
    d2 = ((ds.features[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    pred = d2.argmin(axis=1)
    assert float((pred == ds.labels).mean()) >= 0.99


def test_dataset_concat_roundtrip():
    model = separated_feature_model(3, 5, 6.0, 1.0)
    a = materialize(uniform_distribution(3, 30), model, default_rng(3))
    b = materialize(uniform_distribution(3, 12), model, default_rng(4))
    both = Dataset.concat([a, b])
    assert len(both) == 42
    assert np.array_equal(both.features[:30], a.features)
    assert np.array_equal(both.labels[30:], b.labels)
    hist = both.label_histogram(3)
    assert hist.counts.tolist() == (a.label_histogram(3).counts + b.label_histogram(3).counts).tolist()
