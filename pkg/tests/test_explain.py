"""
Tests for Shapley attribution and the hidden-state projection.
"""

from dataclasses import replace

import numpy as np
import pytest
from numpy.testing import assert_allclose

from core.evaluation import company_attributes
from core.explain import (
    ShapleyMethod,
    explain_model,
    extract_hidden,
    pca_project,
    representation_table,
    shapley,
    shapley_from_set_function,
    write_representation,
)
from core.forecaster import init_model, make_windows, train
from utils.exceptions import ConfigurationError, DegenerateSpectrumError


def test_linear_function_gets_exact_contributions():
    w = np.array([2.0, -1.0, 0.5, 0.0])
    x = np.array([1.0, 2.0, 3.0, 4.0])
    b = np.array([0.5, 0.5, 0.5, 0.5])
    for method in (ShapleyMethod.EXACT, ShapleyMethod.PERMUTATION):
        result = shapley(lambda v: float(w @ v), x, b, n_permutations=50, method=method)
        assert_allclose(result.values[0], w * (x - b), atol=1e-12)
        assert result.values[0, 3] == 0.0
        assert_allclose(result.efficiency_residual(), 0.0, atol=1e-12)


def test_symmetric_features_share_equally():
    result = shapley(lambda v: v[0] * v[1], [1.0, 1.0], [0.0, 0.0])
    assert_allclose(result.values[0], [0.5, 0.5])


def test_permutation_estimate_approaches_exact():
    def f(v):
        return float(np.tanh(v[0] * v[1]) + v[2] ** 2 - v[0] * v[3])

    x, b = [1.0, 0.5, -1.0, 2.0], [0.0, 0.0, 0.0, 0.0]
    exact = shapley(f, x, b, method=ShapleyMethod.EXACT)
    sampled = shapley(f, x, b, n_permutations=3000, method=ShapleyMethod.PERMUTATION, seed=2)
    assert_allclose(sampled.values, exact.values, atol=0.05)
    assert_allclose(sampled.efficiency_residual(), 0.0, atol=1e-10)


def small_network(seed=0):
    rng = np.random.default_rng(seed)
    w1, w2 = rng.standard_normal((6, 8)), rng.standard_normal(6)
    return lambda v: float(w2 @ np.tanh(w1 @ v))


def test_eight_feature_network():
    f = small_network()
    rng = np.random.default_rng(1)
    for _ in range(100):
        x, b = rng.standard_normal(8), rng.standard_normal(8)
        assert abs(shapley(f, x, b, method=ShapleyMethod.EXACT).efficiency_residual()[0]) < 1e-6
    exact = shapley(f, x, b, method=ShapleyMethod.EXACT)
    sampled = shapley(f, x, b, n_permutations=2000, method=ShapleyMethod.PERMUTATION, seed=3)
    assert_allclose(sampled.values, exact.values, atol=0.05)


def test_auto_switches_on_feature_count():
    small = shapley(lambda v: float(v.sum()), np.ones(3), np.zeros(3))
    large = shapley(lambda v: float(v.sum()), np.ones(13), np.zeros(13), n_permutations=20)
    assert small.method == "exact"
    assert large.method == "permutation"
    assert_allclose(large.values[0], 1.0)


def test_permutation_sampling_is_seeded():
    f = lambda v: float(v[0] * v[1] * v[2])  # noqa: E731
    a = shapley(f, [1.0, 2.0, 3.0], [0.0, 0.0, 0.0], n_permutations=5, method=ShapleyMethod.PERMUTATION, seed=9)
    b = shapley(f, [1.0, 2.0, 3.0], [0.0, 0.0, 0.0], n_permutations=5, method=ShapleyMethod.PERMUTATION, seed=9)
    assert_allclose(a.values, b.values)


def test_shapley_argument_checks():
    with pytest.raises(ConfigurationError):
        shapley(lambda v: 0.0, [1.0, 2.0], [0.0])
    with pytest.raises(ConfigurationError):
        shapley_from_set_function(lambda m: np.zeros(len(m)), 0)
    with pytest.raises(ConfigurationError):
        shapley_from_set_function(lambda m: np.zeros(len(m)), 2, method=ShapleyMethod.PERMUTATION)


def test_threaded_set_function_evaluation_matches_serial():
    weights = np.arange(1.0, 6.0)

    def value_fn(masks):
        return masks @ weights

    serial = shapley_from_set_function(value_fn, 5, method=ShapleyMethod.EXACT)
    threaded = shapley_from_set_function(value_fn, 5, method=ShapleyMethod.EXACT, threads=3)
    assert_allclose(serial[0], weights)
    assert_allclose(threaded[0], serial[0])


def test_attribution_ordering():
    result = shapley(lambda v: float(3 * v[0] + v[1] - 5 * v[2]), [1.0, 1.0, 1.0], [0.0, 0.0, 0.0],
                     feature_names=["a", "b", "c"])
    assert result.ordering == ["c", "a", "b"]
    frame = result.to_frame()
    assert list(frame["feature"]) == ["c", "a", "b"]
    assert list(frame["rank"]) == [1, 2, 3]


@pytest.fixture
def trained_model(transformed_panel, growth_params, small_forecast_config):
    cfg = replace(small_forecast_config, max_epochs=1)
    return train(make_windows(transformed_panel, growth_params, cfg), cfg)


@pytest.fixture
def histories(transformed_panel):
    return {cid: transformed_panel.records(cid)[-2:] for cid in transformed_panel.companies[:6]}


def test_explain_model_is_efficient(trained_model, histories):
    attribution = explain_model(trained_model, histories, target="AT", method=ShapleyMethod.EXACT)
    assert attribution.values.shape == (6, 3)
    assert attribution.features == ["AT", "LT", "REVT"]
    assert attribution.instance_ids == sorted(histories)
    assert_allclose(attribution.efficiency_residual(), 0.0, atol=1e-10)
    assert set(attribution.ordering) == {"AT", "LT", "REVT"}


def test_explain_model_permutation_matches_exact(trained_model, histories):
    exact = explain_model(trained_model, histories, method=ShapleyMethod.EXACT)
    sampled = explain_model(trained_model, histories, method=ShapleyMethod.PERMUTATION, n_permutations=400)
    assert_allclose(sampled.values, exact.values, atol=0.05)


def test_explain_model_rejects_unknown_target(trained_model, histories):
    with pytest.raises(ConfigurationError):
        explain_model(trained_model, histories, target="REVT")


def test_pca_recovers_dominant_direction():
    rng = np.random.default_rng(0)
    direction = np.array([3.0, 4.0, 0.0]) / 5.0
    t = rng.standard_normal(200)
    x = np.outer(t * 10.0, direction) + 0.1 * rng.standard_normal((200, 3))
    embedding = pca_project(x, k=2)
    assert abs(embedding.components[0] @ direction) > 0.999
    assert embedding.components[0][np.argmax(np.abs(embedding.components[0]))] > 0
    assert_allclose(embedding.components @ embedding.components.T, np.eye(2), atol=1e-12)
    assert embedding.coords.shape == (200, 2)
    assert embedding.explained_variance_ratio[0] > 0.99
    assert np.all(np.diff(embedding.eigenvalues) <= 0)


def test_pca_of_collinear_points():
    line = np.outer(np.arange(10.0), [1.0, 2.0, 2.0])
    embedding = pca_project(line, k=1)
    assert_allclose(embedding.explained_variance_ratio, [1.0])
    assert_allclose(embedding.components[0], [1 / 3, 2 / 3, 2 / 3], atol=1e-12)
    assert_allclose(embedding.coords[:, 0], 3.0 * (np.arange(10.0) - 4.5), atol=1e-9)


def test_full_rank_projection_is_a_rotation():
    x = np.random.default_rng(2).standard_normal((30, 2))
    coords = pca_project(x, k=2).coords
    centered = x - x.mean(axis=0)

    def distances(m):
        return np.linalg.norm(m[:, None, :] - m[None, :, :], axis=2)

    assert_allclose(distances(coords), distances(centered), atol=1e-9)


def test_reconstruction_error_matches_trailing_eigenvalues():
    x = np.random.default_rng(3).standard_normal((200, 64)) * np.linspace(3.0, 0.1, 64)
    embedding = pca_project(x, k=2)
    centered = x - embedding.mean
    residual = centered - embedding.coords @ embedding.components
    assert np.sum(residual ** 2) / (len(x) - 1) == pytest.approx(embedding.eigenvalues[2:].sum(), rel=1e-9)


def test_pca_ignores_row_order():
    x = np.random.default_rng(4).standard_normal((40, 5))
    order = np.random.default_rng(5).permutation(40)
    a, b = pca_project(x), pca_project(x[order])
    assert_allclose(np.abs(a.components), np.abs(b.components), atol=1e-10)
    assert_allclose(np.abs(a.coords[order]), np.abs(b.coords), atol=1e-10)


def test_pca_rejects_degenerate_input():
    with pytest.raises(DegenerateSpectrumError):
        pca_project(np.ones((2, 3)))
    line = np.outer(np.arange(10.0), [1.0, 2.0, 3.0])
    with pytest.raises(DegenerateSpectrumError):
        pca_project(line, k=2)


def test_hidden_vectors(transformed_panel, small_forecast_config):
    zero = init_model(small_forecast_config, ["AT", "LT", "REVT"], zero=True)
    cid = transformed_panel.companies[0]
    records = transformed_panel.records(cid)
    ids, hidden = extract_hidden(zero, {"a": records, "b": records, "short": records[:1]})
    assert ids == ["a", "b"]
    assert_allclose(hidden, 0.0)

    model = init_model(small_forecast_config, ["AT", "LT", "REVT"])
    _, hidden = extract_hidden(model, {"a": records, "b": records})
    assert hidden.shape == (2, small_forecast_config.hidden_dim)
    assert_allclose(hidden[0], hidden[1])


def test_representation_files(tmp_path, trained_model, transformed_panel):
    histories = {cid: transformed_panel.records(cid) for cid in transformed_panel.companies}
    ids, hidden = extract_hidden(trained_model, histories)
    assert hidden.shape == (len(ids), trained_model.hidden_dim)
    embedding = pca_project(hidden, ids=ids)
    table = representation_table(embedding, company_attributes(transformed_panel), "size")
    assert list(table.columns) == ["company_id", "pc1", "pc2", "size"]
    assert set(table["size"]) <= {"micro", "small", "mid", "large"}
    written = write_representation(table, embedding, "size", tmp_path / "out", tmp_path / "plots")
    assert written["table"].exists()
    assert written["plot"] == tmp_path / "plots" / "representation.svg"
    with pytest.raises(ConfigurationError):
        representation_table(embedding, company_attributes(transformed_panel), "colour")
