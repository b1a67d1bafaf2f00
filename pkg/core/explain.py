"""
FirmCast - Explain Module

Shapley attribution of forecaster inputs (exact enumeration or permutation
sampling over a mask-based set function) and PCA projection of encoder
hidden states.
"""

import itertools
import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.special import comb

from utils.exceptions import ConfigurationError, DegenerateSpectrumError, DomainError, SingularityError
from utils.parallel import ordered_map
from utils.plots import scatter_plot
from utils.seeding import substream
from .evaluation import group_by_age, group_by_sector, group_by_size
from .forecaster import MODE_HYBRID, ModelState, encode, forward_batch, record_vector
from .growth import gm_step_from_prediction
from .panel import CompanyRecord

logger = logging.getLogger(__name__)

EXACT_THRESHOLD = 12
EVAL_CHUNK = 4096

# mask matrix (m, n) of 0/1 -> values (m,)
SetFunction = Callable[[np.ndarray], np.ndarray]


class ShapleyMethod(Enum):
    """
    AUTO: EXACT when the feature count is at most the exact threshold, PERMUTATION otherwise.
    EXACT: Enumerate every subset with its Shapley weight.
    PERMUTATION: Average marginal contributions over sampled feature orderings.
    """
    AUTO = "auto"
    EXACT = "exact"
    PERMUTATION = "permutation"


@dataclass
class Attribution:
    """Per-instance signed Shapley values and their aggregate magnitude."""
    features: List[str]
    values: np.ndarray                  # (n_instances, n_features)
    base_values: np.ndarray             # f(baseline) per instance
    full_values: np.ndarray             # f(instance) per instance
    method: str
    instance_ids: List[str] = field(default_factory=list)

    @property
    def mean_abs(self) -> np.ndarray:
        return np.mean(np.abs(self.values), axis=0)

    @property
    def ordering(self) -> List[str]:
        """Features by decreasing mean |phi| (ties keep input order)."""
        order = np.argsort(-self.mean_abs, kind="stable")
        return [self.features[i] for i in order]

    def efficiency_residual(self) -> np.ndarray:
        return self.values.sum(axis=1) - (self.full_values - self.base_values)

    def to_frame(self) -> pd.DataFrame:
        mean_abs = self.mean_abs
        rank = {code: k + 1 for k, code in enumerate(self.ordering)}
        return pd.DataFrame({
            "feature": self.features,
            "mean_abs_phi": mean_abs,
            "rank": [rank[f] for f in self.features],
        }).sort_values("rank", kind="stable").reset_index(drop=True)


def _evaluate(value_fn: SetFunction, masks: np.ndarray, threads: int) -> np.ndarray:
    chunks = [masks[i:i + EVAL_CHUNK] for i in range(0, len(masks), EVAL_CHUNK)]
    results = ordered_map(value_fn, chunks, threads=threads)
    return np.concatenate([np.asarray(r, dtype=float).reshape(-1) for r in results])


def _exact(value_fn: SetFunction, n: int, threads: int) -> Tuple[np.ndarray, float, float]:
    masks = np.array(list(itertools.product([0, 1], repeat=n)), dtype=np.int8)
    values = _evaluate(value_fn, masks, threads)
    lookup = {m.tobytes(): v for m, v in zip(masks, values)}
    weights = {s: 1.0 / (n * comb(n - 1, s)) for s in range(n)}

    phi = np.zeros(n)
    for mask, value in zip(masks, values):
        size = int(mask.sum())
        for j in np.flatnonzero(mask == 0):
            with_j = mask.copy()
            with_j[j] = 1
            phi[j] += weights[size] * (lookup[with_j.tobytes()] - value)
    return phi, lookup[np.zeros(n, np.int8).tobytes()], lookup[np.ones(n, np.int8).tobytes()]


def _permutation(
    value_fn: SetFunction,
    n: int,
    n_permutations: int,
    rng: np.random.Generator,
    threads: int,
) -> Tuple[np.ndarray, float, float]:
    permutations = [rng.permutation(n) for _ in range(n_permutations)]
    unique: Dict[bytes, np.ndarray] = {}
    for perm in permutations:
        mask = np.zeros(n, dtype=np.int8)
        unique.setdefault(mask.tobytes(), mask.copy())
        for j in perm:
            mask[j] = 1
            unique.setdefault(mask.tobytes(), mask.copy())
    keys = list(unique)
    values = _evaluate(value_fn, np.array([unique[k] for k in keys]), threads)
    lookup = dict(zip(keys, values))

    phi = np.zeros(n)
    for perm in permutations:
        mask = np.zeros(n, dtype=np.int8)
        previous = lookup[mask.tobytes()]
        for j in perm:
            mask[j] = 1
            current = lookup[mask.tobytes()]
            phi[j] += current - previous
            previous = current
    return phi / n_permutations, lookup[np.zeros(n, np.int8).tobytes()], lookup[np.ones(n, np.int8).tobytes()]


def shapley_from_set_function(
    value_fn: SetFunction,
    n_features: int,
    n_permutations: int = 500,
    rng: Optional[np.random.Generator] = None,
    method: ShapleyMethod = ShapleyMethod.AUTO,
    exact_threshold: int = EXACT_THRESHOLD,
    threads: int = 1,
) -> Tuple[np.ndarray, float, float, str]:
    """
    Shapley values of a set function over feature masks.

    Args:
        value_fn: Batched set function, (m, n) 0/1 masks -> (m,) values
        n_features: Number of players
        n_permutations: Sampled orderings in permutation mode (>= 1)
        rng: Generator for the orderings
        method: AUTO, EXACT or PERMUTATION
        exact_threshold: AUTO switches to EXACT at or below this feature count
        threads: Worker cap for set-function evaluation

    Returns:
        (phi, value of the empty set, value of the full set, method used)
    """
    if n_features < 1:
        raise ConfigurationError("need at least one feature")
    if method == ShapleyMethod.AUTO:
        method = ShapleyMethod.EXACT if n_features <= exact_threshold else ShapleyMethod.PERMUTATION
    if method == ShapleyMethod.EXACT:
        phi, empty, full = _exact(value_fn, n_features, threads)
    else:
        if n_permutations < 1:
            raise ConfigurationError(f"n_permutations must be >= 1, got {n_permutations}")
        if rng is None:
            raise ConfigurationError("permutation sampling needs a random generator")
        phi, empty, full = _permutation(value_fn, n_features, n_permutations, rng, threads)
    return phi, float(empty), float(full), method.value


def shapley(
    f: Callable[[np.ndarray], float],
    instance: Sequence[float],
    baseline: Sequence[float],
    n_permutations: int = 500,
    seed: int = 1,
    feature_names: Optional[Sequence[str]] = None,
    method: ShapleyMethod = ShapleyMethod.AUTO,
    exact_threshold: int = EXACT_THRESHOLD,
) -> Attribution:
    """
    Attribute f(instance) - f(baseline) to the features of one instance.

    A feature "joins the coalition" by switching from its baseline value to its
    instance value.

    Raises:
        ConfigurationError: If instance and baseline differ in dimension
    """
    x = np.asarray(instance, dtype=float)
    b = np.asarray(baseline, dtype=float)
    if x.shape != b.shape or x.ndim != 1:
        raise ConfigurationError(f"instance shape {x.shape} != baseline shape {b.shape}")

    def value_fn(masks: np.ndarray) -> np.ndarray:
        return np.array([f(np.where(m == 1, x, b)) for m in masks], dtype=float)

    phi, empty, full, used = shapley_from_set_function(
        value_fn, x.size, n_permutations, substream(seed, "shapley"), method, exact_threshold
    )
    names = list(feature_names) if feature_names is not None else [f"x{i}" for i in range(x.size)]
    return Attribution(names, phi[None, :], np.array([empty]), np.array([full]), used)


# ----------------------------------------------------------------------------
# Model attribution
# ----------------------------------------------------------------------------

def _base_vector(history: Sequence[CompanyRecord], model: ModelState) -> np.ndarray:
    """GM channel (hybrid) or previous value (pure NN) for the first decoder step."""
    last = {c: history[-1].value(c) for c in model.targets}
    if model.config.mode == MODE_HYBRID:
        if model.growth_params is None:
            raise ConfigurationError("hybrid model carries no growth parameters")
        stepped = gm_step_from_prediction(last, model.growth_params, model.target_transforms or None)
        return np.array([stepped[c] for c in model.targets])
    return np.array([last[c] for c in model.targets])


def one_step_predictions(model: ModelState, encoder_inputs: np.ndarray, base: np.ndarray,
                         macro: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Horizon-1 predictions for a batch of raw encoder matrices sharing one base vector.

    Args:
        model: Forecaster
        encoder_inputs: (m, t, F + M) raw inputs
        base: (K,) first-step base (held fixed)
        macro: (M,) first-step decoder macro input

    Returns:
        (m, K) predictions
    """
    m = encoder_inputs.shape[0]
    enc = model.input_norm.apply(encoder_inputs)
    channel = model.gm_norm.apply(base) if model.config.mode == MODE_HYBRID else np.zeros_like(base)
    n_feat = len(model.feature_codes)
    if model.macro_codes:
        macro_in = model.input_norm.slice(n_feat, n_feat + len(model.macro_codes)).apply(macro)
    else:
        macro_in = np.zeros(0)
    dec = np.tile(np.concatenate([channel, macro_in])[None, None, :], (m, 1, 1))
    outputs, _ = forward_batch(enc, dec, model)
    return outputs[:, 0, :] + base


def explain_model(
    model: ModelState,
    histories: Mapping[str, Sequence[CompanyRecord]],
    target: str = "AT",
    n_permutations: int = 500,
    seed: int = 1,
    baseline: Optional[np.ndarray] = None,
    method: ShapleyMethod = ShapleyMethod.AUTO,
    exact_threshold: int = EXACT_THRESHOLD,
    threads: int = 1,
) -> Attribution:
    """
    Shapley attribution of the horizon-1 forecast of one target over encoder features.

    A feature is one indicator across all t encoder steps; switching it off
    replaces the whole column with its baseline value. The first-step GM
    channel stays at the value computed from the observed history.

    Args:
        model: Trained forecaster
        histories: company -> t gap-free records
        target: Explained target code
        n_permutations: Orderings per company in permutation mode
        seed: Master seed (shapley stream, one sub-stream per company)
        baseline: Per-feature baseline; defaults to the training mean
        method: AUTO, EXACT or PERMUTATION
        exact_threshold: AUTO switch point
        threads: Worker cap

    Returns:
        Attribution with one row per explained company
    """
    if target not in model.targets:
        raise ConfigurationError(f"target {target} is not forecast by the model ({model.targets})")
    k = model.targets.index(target)
    codes = model.feature_codes + model.macro_codes
    t = model.config.encoder_len
    baseline = model.input_norm.mean if baseline is None else np.asarray(baseline, dtype=float)
    if baseline.shape != (len(codes),):
        raise ConfigurationError(f"baseline has {baseline.shape} entries, model has {len(codes)} features")

    ids, rows, empties, fulls, used = [], [], [], [], "exact"
    for index, cid in enumerate(sorted(histories)):
        history = list(histories[cid])[-t:]
        vectors = [record_vector(r, codes) for r in history]
        if len(history) < t or any(v is None for v in vectors):
            logger.info(f"Skipping {cid}: history shorter than {t} or incomplete")
            continue
        matrix = np.array(vectors)
        try:
            base = _base_vector(history, model)
        except (SingularityError, DomainError) as e:
            logger.info(f"Skipping {cid}: GM step failed ({e.message})")
            continue
        macro = record_vector(history[-1], model.macro_codes) if model.macro_codes else None

        def value_fn(masks: np.ndarray, matrix=matrix, base=base, macro=macro) -> np.ndarray:
            inputs = np.where(masks[:, None, :] == 1, matrix[None, :, :], baseline[None, None, :])
            return one_step_predictions(model, inputs, base, macro)[:, k]

        phi, empty, full, used = shapley_from_set_function(
            value_fn, len(codes), n_permutations, substream(seed, "shapley", index), method,
            exact_threshold, threads,
        )
        ids.append(cid)
        rows.append(phi)
        empties.append(empty)
        fulls.append(full)

    if not rows:
        raise ConfigurationError("no company history could be explained")
    logger.info(f"Explained {target} for {len(ids)} companies ({used} Shapley, {len(codes)} features)")
    return Attribution(codes, np.array(rows), np.array(empties), np.array(fulls), used, ids)


# ----------------------------------------------------------------------------
# Representation
# ----------------------------------------------------------------------------

def extract_hidden(
    model: ModelState,
    histories: Mapping[str, Sequence[CompanyRecord]],
) -> Tuple[List[str], np.ndarray]:
    """
    Encoder final hidden vector per company.

    Returns:
        (company ids, (n, hidden_dim) matrix); short or incomplete histories are skipped
    """
    t = model.config.encoder_len
    codes = model.feature_codes + model.macro_codes
    ids, vectors = [], []
    for cid in sorted(histories):
        history = list(histories[cid])
        if len(history) < t or any(record_vector(r, codes) is None for r in history[-t:]):
            logger.info(f"Skipping {cid}: history shorter than {t} or incomplete")
            continue
        ids.append(cid)
        vectors.append(encode(history, model).h)
    matrix = np.array(vectors).reshape(-1, model.hidden_dim)
    return ids, matrix


@dataclass
class Embedding2D:
    """Projected coordinates with the principal directions used."""
    coords: np.ndarray               # (n, k)
    components: np.ndarray           # (k, d), orthonormal rows
    explained_variance_ratio: np.ndarray
    eigenvalues: np.ndarray          # all covariance eigenvalues, descending
    mean: np.ndarray
    ids: List[str] = field(default_factory=list)


def pca_project(vectors: np.ndarray, k: int = 2, ids: Optional[Sequence[str]] = None) -> Embedding2D:
    """
    Project mean-centered vectors onto their top-k principal directions.

    Args:
        vectors: (n, d) data matrix
        k: Number of components
        ids: Optional row labels

    Returns:
        Embedding2D; each component's largest-magnitude loading is positive

    Raises:
        DegenerateSpectrumError: If n < k+1, d < k or the covariance rank is below k
    """
    x = np.asarray(vectors, dtype=float)
    if x.ndim != 2 or x.shape[0] < k + 1 or x.shape[1] < k:
        raise DegenerateSpectrumError(f"need at least {k + 1} vectors of dimension >= {k}, got {x.shape}")
    mean = x.mean(axis=0)
    centered = x - mean
    cov = centered.T @ centered / (x.shape[0] - 1)
    eigenvalues, eigenvectors = np.linalg.eigh(cov)
    order = np.argsort(-eigenvalues, kind="stable")
    eigenvalues = np.clip(eigenvalues[order], 0.0, None)
    eigenvectors = eigenvectors[:, order]

    top = eigenvalues[0] if eigenvalues.size else 0.0
    rank = int(np.sum(eigenvalues > 1e-12 * top)) if top > 0 else 0
    if rank < k:
        raise DegenerateSpectrumError(f"covariance rank {rank} is below {k}")

    components = eigenvectors[:, :k].T.copy()
    for row in components:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1.0
    coords = centered @ components.T
    ratio = eigenvalues[:k] / eigenvalues.sum()
    return Embedding2D(coords, components, ratio, eigenvalues, mean, list(ids or []))


def representation_table(embedding: Embedding2D, attributes: pd.DataFrame, color_by: str) -> pd.DataFrame:
    """
    Coordinates joined with a per-company label.

    Args:
        embedding: PCA result with ids
        attributes: company_attributes() frame
        color_by: size | age | sector
    """
    attrs = attributes.set_index("company_id").reindex(embedding.ids)
    if color_by == "size":
        groups = group_by_size(attrs["average_assets"].fillna(0.0).to_dict())
    elif color_by == "age":
        groups = group_by_age(attrs["age"].fillna(0).astype(int).to_dict())
    elif color_by == "sector":
        groups = group_by_sector(attrs["sector"].fillna("").to_dict())
    else:
        raise ConfigurationError(f"unknown color_by '{color_by}' (size | age | sector)")
    label_of = {cid: label for label, members in groups.items() for cid in members}
    frame = pd.DataFrame({
        "company_id": embedding.ids,
        "pc1": embedding.coords[:, 0],
        "pc2": embedding.coords[:, 1] if embedding.coords.shape[1] > 1 else 0.0,
        color_by: [label_of.get(cid, "unknown") for cid in embedding.ids],
    })
    return frame


def write_representation(table: pd.DataFrame, embedding: Embedding2D, color_by: str,
                         out_dir: str | Path, plots_dir: Optional[str | Path] = None) -> Dict[str, Path]:
    """Write the coordinates table and the scatter plot (into plots_dir when given)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    plots_dir = Path(plots_dir) if plots_dir is not None else out_dir
    csv_path = out_dir / "representation.csv"
    table.to_csv(csv_path, index=False, float_format="%.10g")
    ratio = embedding.explained_variance_ratio
    plot_path = scatter_plot(
        table[["pc1", "pc2"]].to_numpy(), table[color_by].tolist(), plots_dir / "representation.svg",
        title=f"Encoder hidden states by {color_by}",
        axis_labels=[f"PC1 ({ratio[0]:.1%})", f"PC2 ({ratio[1]:.1%})" if ratio.size > 1 else "PC2"],
    )
    return {"table": csv_path, "plot": plot_path}
