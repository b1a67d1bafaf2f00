"""
FirmCast - Forecaster Module

Encoder-decoder recurrent network that learns the residual between observed
growth and the growth-model prediction. Forward pass, reverse-mode gradients
through the unrolled recurrence, AdamW training with early stopping, and the
closed-loop hybrid (NN+GM) and pure-NN rollouts.

Gate layout of every cell: rows [input, forget, output, candidate] of a single
(4H, I+H) weight matrix acting on [x; h].
"""

import json
import logging
from collections import OrderedDict
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable, Dict, Iterator, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.special import expit

from config import ForecastConfig
from utils.artifacts import sha256_bytes
from utils.exceptions import (
    ConfigurationError,
    DomainError,
    NumericError,
    SingularityError,
    TrainingError,
)
from utils.seeding import substream
from .growth import EPS_DEN, gm_step_from_prediction
from .optimizer import AdamW
from .panel import CompanyPanel, CompanyRecord
from .scaling import ASSETS, GrowthParams

logger = logging.getLogger(__name__)

MODE_HYBRID = "nn+gm"
MODE_PURE = "nn"
MODEL_FORMAT_VERSION = 1

STATUS_OK = "ok"
STATUS_SINGULAR = "singular"
STATUS_DOMAIN = "domain"


# ----------------------------------------------------------------------------
# Parameter containers
# ----------------------------------------------------------------------------

@dataclass
class RecurrentState:
    """Hidden activation h and cell memory c of one recurrent step."""
    h: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        self.h = np.asarray(self.h, dtype=float)
        self.c = np.asarray(self.c, dtype=float)
        if self.h.shape != self.c.shape:
            raise ConfigurationError(f"h shape {self.h.shape} != c shape {self.c.shape}")

    @classmethod
    def zeros(cls, hidden_dim: int) -> "RecurrentState":
        return cls(np.zeros(hidden_dim), np.zeros(hidden_dim))


@dataclass
class CellParams:
    """Stacked gate weights W (4H x (I+H)) and biases b (4H)."""
    W: np.ndarray
    b: np.ndarray

    @property
    def hidden_dim(self) -> int:
        return self.b.shape[0] // 4

    @property
    def input_dim(self) -> int:
        return self.W.shape[1] - self.hidden_dim

    @classmethod
    def zeros(cls, input_dim: int, hidden_dim: int) -> "CellParams":
        return cls(np.zeros((4 * hidden_dim, input_dim + hidden_dim)), np.zeros(4 * hidden_dim))

    @classmethod
    def init(cls, input_dim: int, hidden_dim: int, rng: np.random.Generator) -> "CellParams":
        """Uniform in +-1/sqrt(fan-in); forget-gate bias starts at 1."""
        bound = 1.0 / np.sqrt(input_dim + hidden_dim)
        W = rng.uniform(-bound, bound, size=(4 * hidden_dim, input_dim + hidden_dim))
        b = np.zeros(4 * hidden_dim)
        b[hidden_dim:2 * hidden_dim] = 1.0
        return cls(W, b)


@dataclass
class Normalizer:
    """Affine standardization (x - mean) / scale."""
    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def identity(cls, dim: int) -> "Normalizer":
        return cls(np.zeros(dim), np.ones(dim))

    @classmethod
    def fit(cls, data: np.ndarray) -> "Normalizer":
        data = np.asarray(data, dtype=float)
        mean = data.mean(axis=0)
        scale = data.std(axis=0)
        scale = np.where(scale > 1e-12, scale, 1.0)
        return cls(mean, scale)

    def apply(self, x: np.ndarray) -> np.ndarray:
        return (x - self.mean) / self.scale

    def slice(self, start: int, stop: int) -> "Normalizer":
        return Normalizer(self.mean[start:stop], self.scale[start:stop])


@dataclass
class ModelState:
    """
    Trained (or hand-built) forecaster.

    There is exactly one encoder cell and one decoder cell; every encoder step
    shares the former and every decoder step the latter.
    """
    encoder: CellParams
    decoder: CellParams
    readout_W: np.ndarray
    readout_b: np.ndarray
    config: ForecastConfig
    feature_codes: List[str]
    macro_codes: List[str] = field(default_factory=list)
    target_transforms: Dict[str, str] = field(default_factory=dict)
    input_norm: Optional[Normalizer] = None
    gm_norm: Optional[Normalizer] = None
    growth_params: Optional[GrowthParams] = None
    history: List[dict] = field(default_factory=list)
    data_hash: Optional[str] = None

    def __post_init__(self):
        n_in = len(self.feature_codes) + len(self.macro_codes)
        if self.input_norm is None:
            self.input_norm = Normalizer.identity(n_in)
        if self.gm_norm is None:
            self.gm_norm = Normalizer.identity(len(self.targets))
        H = self.config.hidden_dim
        K = len(self.targets)
        if self.encoder.hidden_dim != H or self.decoder.hidden_dim != H:
            raise ConfigurationError(f"cell hidden size does not match hidden_dim={H}")
        if self.encoder.input_dim != n_in:
            raise ConfigurationError(f"encoder expects {self.encoder.input_dim} inputs, features give {n_in}")
        if self.decoder.input_dim != K + len(self.macro_codes):
            raise ConfigurationError(
                f"decoder expects {self.decoder.input_dim} inputs, targets+macro give {K + len(self.macro_codes)}"
            )
        if self.readout_W.shape != (K, H) or self.readout_b.shape != (K,):
            raise ConfigurationError(f"readout must map {H} -> {K}")

    @property
    def targets(self) -> List[str]:
        return list(self.config.targets)

    @property
    def hidden_dim(self) -> int:
        return self.config.hidden_dim

    def parameters(self) -> "OrderedDict[str, np.ndarray]":
        """Live parameter arrays (optimizers update them in place)."""
        return OrderedDict([
            ("encoder.W", self.encoder.W),
            ("encoder.b", self.encoder.b),
            ("decoder.W", self.decoder.W),
            ("decoder.b", self.decoder.b),
            ("readout.W", self.readout_W),
            ("readout.b", self.readout_b),
        ])

    def parameter_hash(self) -> str:
        blob = b"".join(np.ascontiguousarray(p, dtype=np.float64).tobytes() for p in self.parameters().values())
        return sha256_bytes(blob)


def init_model(
    cfg: ForecastConfig,
    feature_codes: Sequence[str],
    macro_codes: Sequence[str] = (),
    target_transforms: Optional[Mapping[str, str]] = None,
    growth_params: Optional[GrowthParams] = None,
    zero: bool = False,
) -> ModelState:
    """
    Fresh model with seeded weights (or all zeros).

    Args:
        cfg: Forecaster configuration (hidden_dim, targets, seed)
        feature_codes: Encoder financial features, in input order
        macro_codes: Macro features appended to encoder and decoder inputs
        target_transforms: target code -> transform kind for the GM step
        growth_params: Parameters for the hybrid GM channel
        zero: Build an all-zero model instead of a random one

    Returns:
        ModelState
    """
    if ASSETS not in cfg.targets:
        raise ConfigurationError("forecast targets must include AT")
    H = cfg.hidden_dim
    K = len(cfg.targets)
    n_in = len(feature_codes) + len(macro_codes)
    n_dec = K + len(macro_codes)
    if zero:
        encoder, decoder = CellParams.zeros(n_in, H), CellParams.zeros(n_dec, H)
        readout_W, readout_b = np.zeros((K, H)), np.zeros(K)
    else:
        rng = substream(cfg.seed, "init")
        encoder = CellParams.init(n_in, H, rng)
        decoder = CellParams.init(n_dec, H, rng)
        bound = 1.0 / np.sqrt(H)
        readout_W = rng.uniform(-bound, bound, size=(K, H))
        readout_b = np.zeros(K)
    return ModelState(
        encoder=encoder,
        decoder=decoder,
        readout_W=readout_W,
        readout_b=readout_b,
        config=cfg,
        feature_codes=list(feature_codes),
        macro_codes=list(macro_codes),
        target_transforms=dict(target_transforms or {}),
        growth_params=growth_params,
    )


# ----------------------------------------------------------------------------
# Recurrent cell
# ----------------------------------------------------------------------------

def _cell_forward(x: np.ndarray, h: np.ndarray, c: np.ndarray, params: CellParams):
    """Batched cell update; x (B, I), h and c (B, H)."""
    H = h.shape[1]
    z = np.concatenate([x, h], axis=1)
    a = z @ params.W.T + params.b
    i = expit(a[:, :H])
    f = expit(a[:, H:2 * H])
    o = expit(a[:, 2 * H:3 * H])
    g = np.tanh(a[:, 3 * H:])
    c_new = f * c + i * g
    tc = np.tanh(c_new)
    h_new = o * tc
    return h_new, c_new, (z, c, i, f, o, g, tc)


def _cell_backward(dh, dc, cache, params: CellParams, grad_W: np.ndarray, grad_b: np.ndarray):
    """Accumulate gate gradients; returns (dh_prev, dc_prev)."""
    z, c_prev, i, f, o, g, tc = cache
    H = dh.shape[1]
    do = dh * tc
    dc = dc + dh * o * (1.0 - tc * tc)
    da = np.concatenate([
        dc * g * i * (1.0 - i),
        dc * c_prev * f * (1.0 - f),
        do * o * (1.0 - o),
        dc * i * (1.0 - g * g),
    ], axis=1)
    grad_W += da.T @ z
    grad_b += da.sum(axis=0)
    dz = da @ params.W
    return dz[:, z.shape[1] - H:], dc * f


def _check_finite(h: np.ndarray, c: np.ndarray, where: str) -> None:
    if not (np.all(np.isfinite(h)) and np.all(np.isfinite(c))):
        raise NumericError(f"non-finite activation at {where}")


def cell_step(x: np.ndarray, state: RecurrentState, params: CellParams, step: Optional[str] = None) -> RecurrentState:
    """
    One gated recurrent update for a single input vector.

    i, f, o = sigmoid(.), g = tanh(.), c' = f*c + i*g, h' = o*tanh(c')

    Raises:
        ConfigurationError: On dimension mismatch
        NumericError: If the new state is not finite
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (params.input_dim,) or state.h.shape != (params.hidden_dim,):
        raise ConfigurationError(
            f"cell expects input {params.input_dim} / hidden {params.hidden_dim}, "
            f"got {x.shape} / {state.h.shape}"
        )
    h, c, _ = _cell_forward(x[None, :], state.h[None, :], state.c[None, :], params)
    _check_finite(h, c, step or "cell step")
    return RecurrentState(h[0], c[0])


# ----------------------------------------------------------------------------
# Windows
# ----------------------------------------------------------------------------

@dataclass
class TrainingSample:
    """One encoder/decoder window; every array is in transformed space."""
    encoder_inputs: np.ndarray      # (t, F + M)
    decoder_gm: np.ndarray          # (T, K) GM steps from the observed previous values
    decoder_macro: np.ndarray       # (T, M)
    labels: np.ndarray              # (T, K)
    last_values: np.ndarray         # (K,) targets at the last encoder year
    company_id: str = ""
    origin_year: int = 0

    def previous_labels(self) -> np.ndarray:
        """Observed predecessor of every label step."""
        return np.vstack([self.last_values[None, :], self.labels[:-1]])


@dataclass
class WindowSet:
    """Windows plus the feature layout they were cut with."""
    samples: List[TrainingSample]
    feature_codes: List[str]
    macro_codes: List[str]
    targets: List[str]
    target_transforms: Dict[str, str]
    growth_params: Optional[GrowthParams] = None
    data_hash: Optional[str] = None

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self) -> Iterator[TrainingSample]:
        return iter(self.samples)

    def __getitem__(self, index):
        return self.samples[index]

    def with_samples(self, samples: List[TrainingSample]) -> "WindowSet":
        return WindowSet(samples, self.feature_codes, self.macro_codes, self.targets,
                         self.target_transforms, self.growth_params, self.data_hash)


def resolve_features(panel: CompanyPanel, cfg: ForecastConfig) -> Tuple[List[str], List[str]]:
    """Encoder feature codes and macro codes for a panel under a config."""
    missing = [c for c in cfg.targets if c not in panel.registry]
    if missing:
        raise ConfigurationError(f"targets not in panel: {missing}")
    if ASSETS not in cfg.targets:
        raise ConfigurationError("forecast targets must include AT")
    features = list(cfg.features) if cfg.features else panel.registry.financial_codes
    unknown = [c for c in features if c not in panel.registry]
    if unknown:
        raise ConfigurationError(f"features not in panel: {unknown}")
    macro = panel.registry.macro_codes if cfg.use_macro else []
    if cfg.use_macro and not macro:
        logger.warning("use_macro is set but the panel carries no macro indicators")
    return features, macro


def record_vector(record: CompanyRecord, codes: Sequence[str]) -> Optional[np.ndarray]:
    values = [record.value(c) for c in codes]
    if any(v is None for v in values):
        return None
    return np.array(values, dtype=float)


def gm_from_observed(
    previous: np.ndarray,
    targets: Sequence[str],
    params: GrowthParams,
    transforms: Mapping[str, str],
) -> np.ndarray:
    """GM step from each row of observed predecessors; (T, K) -> (T, K)."""
    out = np.empty_like(previous)
    for j, row in enumerate(previous):
        stepped = gm_step_from_prediction(dict(zip(targets, row)), params, transforms, eps_den=EPS_DEN)
        out[j] = [stepped[c] for c in targets]
    return out


def make_windows(
    panel: CompanyPanel,
    params: Optional[GrowthParams],
    cfg: ForecastConfig,
) -> WindowSet:
    """
    Slide a length t+T window (stride 1) over every company series.

    Windows must cover consecutive fiscal years with no absent feature, target
    or macro value. Decoder GM inputs are one GM step from the observed value
    at each label year's predecessor.

    Args:
        panel: Transformed panel
        params: Growth parameters (None leaves the GM channel at zero)
        cfg: Forecaster configuration

    Returns:
        WindowSet
    """
    t, T = cfg.encoder_len, cfg.decoder_len
    targets = list(cfg.targets)
    features, macro = resolve_features(panel, cfg)
    transforms = {c: panel.registry.transform_of(c) for c in targets}
    enc_codes = features + macro
    needed = list(dict.fromkeys(enc_codes + targets))

    samples: List[TrainingSample] = []
    skipped = 0
    for cid in panel.companies:
        records = panel.records(cid)
        if len(records) < t + T:
            continue
        for start in range(len(records) - t - T + 1):
            window = records[start:start + t + T]
            years = [r.fiscal_year for r in window]
            if years[-1] - years[0] != t + T - 1:
                continue
            rows = [record_vector(r, needed) for r in window]
            if any(row is None for row in rows):
                continue
            encoder = np.array([record_vector(r, enc_codes) for r in window[:t]])
            labels = np.array([record_vector(r, targets) for r in window[t:]])
            decoder_macro = (np.array([record_vector(r, macro) for r in window[t:]]) if macro
                             else np.zeros((T, 0)))
            last = record_vector(window[t - 1], targets)
            previous = np.vstack([last[None, :], labels[:-1]])
            if params is not None:
                try:
                    gm = gm_from_observed(previous, targets, params, transforms)
                except (SingularityError, DomainError) as e:
                    skipped += 1
                    logger.debug(f"Skipping window {cid}/{years[t - 1]}: {e.message}")
                    continue
            else:
                gm = np.zeros((T, len(targets)))
            samples.append(TrainingSample(encoder, gm, decoder_macro, labels, last, cid, years[t - 1]))

    logger.info(f"Cut {len(samples)} window(s) (t={t}, T={T}) from {panel.n_companies} companies"
                + (f", {skipped} skipped on GM errors" if skipped else ""))
    return WindowSet(samples, features, macro, targets, transforms, params, panel.fingerprint())


# ----------------------------------------------------------------------------
# Forward / backward
# ----------------------------------------------------------------------------

def _decoder_channel(base: np.ndarray, model: ModelState) -> np.ndarray:
    """GM channel input for the decoder: normalized base (hybrid) or zeros (pure NN)."""
    if model.config.mode == MODE_HYBRID:
        return model.gm_norm.apply(base)
    return np.zeros_like(base)


def _stack(batch: Sequence[TrainingSample], model: ModelState):
    """Encoder inputs, decoder inputs and residual targets for a batch."""
    enc = model.input_norm.apply(np.stack([s.encoder_inputs for s in batch]))
    if model.config.mode == MODE_HYBRID:
        base = np.stack([s.decoder_gm for s in batch])
    else:
        base = np.stack([s.previous_labels() for s in batch])
    labels = np.stack([s.labels for s in batch])
    n_feat = len(model.feature_codes)
    macro_norm = model.input_norm.slice(n_feat, n_feat + len(model.macro_codes))
    macro = macro_norm.apply(np.stack([s.decoder_macro for s in batch]))
    dec = np.concatenate([_decoder_channel(base, model), macro], axis=2)
    return enc, dec, labels - base


def forward_batch(enc: np.ndarray, dec: np.ndarray, model: ModelState, keep_cache: bool = False):
    """enc (B, t, I), dec (B, T, I_dec) -> residual outputs (B, T, K)."""
    if enc.shape[2] != model.encoder.input_dim or dec.shape[2] != model.decoder.input_dim:
        raise ConfigurationError(
            f"input widths {enc.shape[2]}/{dec.shape[2]} do not match the model "
            f"({model.encoder.input_dim}/{model.decoder.input_dim})"
        )
    B = enc.shape[0]
    H = model.hidden_dim
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    enc_cache, dec_cache, hs = [], [], []
    for step in range(enc.shape[1]):
        h, c, cache = _cell_forward(enc[:, step], h, c, model.encoder)
        _check_finite(h, c, f"encoder step {step + 1}")
        if keep_cache:
            enc_cache.append(cache)
    outputs = np.empty((B, dec.shape[1], len(model.targets)))
    for step in range(dec.shape[1]):
        h, c, cache = _cell_forward(dec[:, step], h, c, model.decoder)
        _check_finite(h, c, f"decoder step {step + 1}")
        outputs[:, step] = h @ model.readout_W.T + model.readout_b
        if keep_cache:
            dec_cache.append(cache)
            hs.append(h)
    return outputs, (enc_cache, dec_cache, hs)


def forward(sample: TrainingSample, model: ModelState) -> np.ndarray:
    """
    Residual outputs O for one window.

    Returns:
        (T, |targets|) array
    """
    enc, dec, _ = _stack([sample], model)
    outputs, _ = forward_batch(enc, dec, model)
    return outputs[0]


def batch_loss(batch: Sequence[TrainingSample], model: ModelState) -> float:
    """Mean squared residual error without gradients."""
    enc, dec, target = _stack(batch, model)
    outputs, _ = forward_batch(enc, dec, model)
    return float(np.mean((outputs - target) ** 2))


def loss_and_gradients(batch: Sequence[TrainingSample], model: ModelState) -> Tuple[float, Dict[str, np.ndarray]]:
    """
    MSE over batch, steps and targets, with gradients of every parameter.

    Args:
        batch: Non-empty list of windows
        model: Model to differentiate

    Returns:
        (loss, name -> gradient) with names as in ModelState.parameters()
    """
    if len(batch) == 0:
        raise ConfigurationError("empty batch")
    enc, dec, target = _stack(batch, model)
    outputs, (enc_cache, dec_cache, hs) = forward_batch(enc, dec, model, keep_cache=True)
    diff = outputs - target
    loss = float(np.mean(diff ** 2))
    d_out = 2.0 * diff / diff.size

    grads = OrderedDict((name, np.zeros_like(p)) for name, p in model.parameters().items())
    H = model.hidden_dim
    B = enc.shape[0]
    dh = np.zeros((B, H))
    dc = np.zeros((B, H))
    for step in reversed(range(dec.shape[1])):
        grads["readout.W"] += d_out[:, step].T @ hs[step]
        grads["readout.b"] += d_out[:, step].sum(axis=0)
        dh = dh + d_out[:, step] @ model.readout_W
        dh, dc = _cell_backward(dh, dc, dec_cache[step], model.decoder, grads["decoder.W"], grads["decoder.b"])
    for step in reversed(range(enc.shape[1])):
        dh, dc = _cell_backward(dh, dc, enc_cache[step], model.encoder, grads["encoder.W"], grads["encoder.b"])
    return loss, grads


# ----------------------------------------------------------------------------
# Training
# ----------------------------------------------------------------------------

def _scheduled_batch(
    batch: List[TrainingSample],
    model: ModelState,
    probability: float,
    rng: np.random.Generator,
) -> List[TrainingSample]:
    """
    Replace observed-input GM values by GM steps from the model's own previous
    prediction with the given per-step probability.
    """
    if model.growth_params is None or probability <= 0.0:
        return batch
    enc, dec, _ = _stack(batch, model)
    outputs, _ = forward_batch(enc, dec, model)
    replaced = []
    for k, sample in enumerate(batch):
        predictions = outputs[k] + sample.decoder_gm
        gm = sample.decoder_gm.copy()
        for j in range(1, gm.shape[0]):
            if rng.random() >= probability:
                continue
            try:
                gm[j] = gm_from_observed(predictions[j - 1:j], model.targets, model.growth_params,
                                          model.target_transforms)[0]
            except (SingularityError, DomainError):
                continue
        replaced.append(TrainingSample(sample.encoder_inputs, gm, sample.decoder_macro, sample.labels,
                                       sample.last_values, sample.company_id, sample.origin_year))
    return replaced


def _fit_normalizers(model: ModelState, windows: WindowSet) -> None:
    model.input_norm = Normalizer.fit(np.concatenate([s.encoder_inputs for s in windows]))
    model.gm_norm = Normalizer.fit(np.concatenate([s.labels for s in windows]))


def _chunked_loss(samples: Sequence[TrainingSample], model: ModelState, size: int) -> float:
    total, count = 0.0, 0
    for start in range(0, len(samples), size):
        chunk = samples[start:start + size]
        total += batch_loss(chunk, model) * len(chunk)
        count += len(chunk)
    return total / count


def train(
    windows: WindowSet,
    cfg: ForecastConfig,
    val_windows: Optional[WindowSet] = None,
    model: Optional[ModelState] = None,
) -> ModelState:
    """
    Fit the forecaster with AdamW and early stopping on validation MSE.

    Args:
        windows: Training windows (>= 1)
        cfg: Forecaster configuration (mode, learning rate, epochs, patience, seed)
        val_windows: Validation windows; training loss drives early stopping when absent
        model: Starting model; a freshly initialized one when None

    Returns:
        The model at the best validation epoch, with the loss curve in .history

    Raises:
        ConfigurationError: On empty windows or a hybrid model without growth parameters
        TrainingError: If the loss becomes non-finite
    """
    if len(windows) == 0:
        raise ConfigurationError("no training windows")
    if cfg.mode == MODE_HYBRID and windows.growth_params is None:
        raise ConfigurationError("hybrid training needs growth parameters")

    if model is None:
        model = init_model(cfg, windows.feature_codes, windows.macro_codes,
                           windows.target_transforms, windows.growth_params)
        _fit_normalizers(model, windows)
    model.data_hash = windows.data_hash

    validation = list(val_windows) if val_windows is not None and len(val_windows) else None
    if validation is None:
        logger.warning("No validation windows; early stopping on training loss")

    optimizer = _make_optimizer(model, cfg)
    batch_rng = substream(cfg.seed, "batching")
    sampling_rng = substream(cfg.seed, "sampling")
    samples = list(windows)

    best_loss = np.inf
    best_epoch = 0
    best_params = {k: v.copy() for k, v in model.parameters().items()}
    history: List[dict] = []
    logger.info(f"Training {cfg.mode} forecaster on {len(samples)} window(s), "
                f"{len(validation) if validation else 0} validation window(s)")

    for epoch in range(1, cfg.max_epochs + 1):
        order = batch_rng.permutation(len(samples))
        running, seen = 0.0, 0
        for start in range(0, len(order), cfg.batch_size):
            batch = [samples[i] for i in order[start:start + cfg.batch_size]]
            if cfg.scheduled_sampling > 0 and cfg.mode == MODE_HYBRID:
                batch = _scheduled_batch(batch, model, cfg.scheduled_sampling, sampling_rng)
            try:
                loss, grads = loss_and_gradients(batch, model)
            except NumericError as e:
                raise TrainingError(f"numeric failure: {e.message}", epoch=epoch) from e
            if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads.values()):
                raise TrainingError("loss diverged (non-finite)", epoch=epoch)
            optimizer.step(grads)
            running += loss * len(batch)
            seen += len(batch)

        train_loss = running / seen
        try:
            val_loss = _chunked_loss(validation, model, cfg.batch_size) if validation else train_loss
        except NumericError as e:
            raise TrainingError(f"numeric failure in validation: {e.message}", epoch=epoch) from e
        if not np.isfinite(val_loss):
            raise TrainingError("validation loss diverged (non-finite)", epoch=epoch)

        if val_loss < best_loss:
            best_loss, best_epoch = val_loss, epoch
            best_params = {k: v.copy() for k, v in model.parameters().items()}
        history.append({"epoch": epoch, "train_loss": train_loss, "val_loss": val_loss, "best_epoch": best_epoch})
        logger.info(f"epoch {epoch}: train={train_loss:.6f} val={val_loss:.6f} best={best_epoch}")

        if epoch - best_epoch >= cfg.patience:
            logger.info(f"Early stopping at epoch {epoch} (no improvement for {cfg.patience} epochs)")
            break

    for name, param in model.parameters().items():
        np.copyto(param, best_params[name])
    model.history = history
    logger.info(f"Training finished: best val loss {best_loss:.6f} at epoch {best_epoch}")
    return model


def _make_optimizer(model: ModelState, cfg: ForecastConfig) -> AdamW:
    return AdamW(model.parameters(), lr=cfg.learning_rate, weight_decay=cfg.weight_decay)


# ----------------------------------------------------------------------------
# Rollouts
# ----------------------------------------------------------------------------

@dataclass
class ForecastResult:
    """Per-step forecasts for one origin; rows stop early when the GM channel fails."""
    company_id: str
    origin_year: int
    model: str
    targets: List[str]
    predictions: np.ndarray     # (steps, K)
    residuals: np.ndarray       # (steps, K) decoder outputs O
    base: np.ndarray            # (steps, K) GM prediction (hybrid) or previous prediction (pure NN)
    horizon: int
    status: str = STATUS_OK
    failed_step: Optional[int] = None

    @property
    def steps(self) -> int:
        return self.predictions.shape[0]

    def series(self, code: str) -> np.ndarray:
        return self.predictions[:, self.targets.index(code)]


BaseFn = Callable[[Dict[str, float]], Dict[str, float]]


def extract_history(
    panel: CompanyPanel,
    company_id: str,
    origin_year: int,
    model: ModelState,
) -> Optional[List[CompanyRecord]]:
    """
    The t records ending at origin_year, or None when the span has a gap or an absent value.
    """
    t = model.config.encoder_len
    by_year = {r.fiscal_year: r for r in panel.records(company_id)}
    records = [by_year.get(year) for year in range(origin_year - t + 1, origin_year + 1)]
    if any(r is None for r in records):
        return None
    needed = list(dict.fromkeys(model.feature_codes + model.macro_codes + model.targets))
    if any(record_vector(r, needed) is None for r in records):
        return None
    return records


def encode(history: Sequence[CompanyRecord], model: ModelState) -> RecurrentState:
    """Encoder final state for a t-record history."""
    t = model.config.encoder_len
    if len(history) < t:
        raise ConfigurationError(f"history has {len(history)} record(s), encoder needs {t}")
    codes = model.feature_codes + model.macro_codes
    rows = [record_vector(r, codes) for r in history[-t:]]
    if any(row is None for row in rows):
        raise ConfigurationError("history has absent values")
    x = model.input_norm.apply(np.array(rows))
    state = RecurrentState.zeros(model.hidden_dim)
    for step, row in enumerate(x):
        state = cell_step(row, state, model.encoder, step=f"encoder step {step + 1}")
    return state


def rollout(
    model: ModelState,
    history: Sequence[CompanyRecord],
    horizon: int,
    base_fn: BaseFn,
    feed_channel: bool,
    label: str,
    future_macro: Optional[np.ndarray] = None,
) -> ForecastResult:
    """
    Closed-loop decoder rollout.

    At every step base_fn maps the previous prediction to the base value, the
    decoder consumes the (normalized) base or a zero channel, and the prediction
    is the decoder residual plus the base.

    Args:
        model: Forecaster
        history: At least t gap-free records (last one is the origin)
        horizon: Steps K (may exceed the training decoder length)
        base_fn: previous prediction -> base prediction, both code -> value
        feed_channel: Feed the base into the decoder (False gives a zero channel)
        label: Model name recorded on the result
        future_macro: (K, M) macro inputs; defaults to holding the last observed macro values

    Returns:
        ForecastResult
    """
    if horizon < 1:
        raise ConfigurationError(f"horizon must be >= 1, got {horizon}")
    targets = model.targets
    origin = history[-1]
    state = encode(history, model)

    n_feat = len(model.feature_codes)
    macro_norm = model.input_norm.slice(n_feat, n_feat + len(model.macro_codes))
    if model.macro_codes:
        if future_macro is None:
            future_macro = np.tile(record_vector(origin, model.macro_codes), (horizon, 1))
        macro_inputs = macro_norm.apply(np.asarray(future_macro, dtype=float))
    else:
        macro_inputs = np.zeros((horizon, 0))

    previous = {c: origin.value(c) for c in targets}
    predictions, residuals, bases = [], [], []
    status, failed_step = STATUS_OK, None
    for step in range(1, horizon + 1):
        try:
            base_map = base_fn(previous)
        except SingularityError as e:
            status, failed_step = STATUS_SINGULAR, step
            logger.debug(f"{origin.company_id}/{origin.fiscal_year}: rollout stopped at step {step}: {e.message}")
            break
        except DomainError as e:
            status, failed_step = STATUS_DOMAIN, step
            logger.debug(f"{origin.company_id}/{origin.fiscal_year}: rollout stopped at step {step}: {e.message}")
            break
        base = np.array([base_map[c] for c in targets])
        channel = model.gm_norm.apply(base) if feed_channel else np.zeros_like(base)
        x = np.concatenate([channel, macro_inputs[step - 1]])
        state = cell_step(x, state, model.decoder, step=f"decoder step {step}")
        residual = model.readout_W @ state.h + model.readout_b
        prediction = residual + base
        predictions.append(prediction)
        residuals.append(residual)
        bases.append(base)
        previous = dict(zip(targets, prediction))

    K = len(targets)
    return ForecastResult(
        company_id=origin.company_id,
        origin_year=origin.fiscal_year,
        model=label,
        targets=targets,
        predictions=np.array(predictions).reshape(-1, K),
        residuals=np.array(residuals).reshape(-1, K),
        base=np.array(bases).reshape(-1, K),
        horizon=horizon,
        status=status,
        failed_step=failed_step,
    )


def hybrid_rollout(
    history: Sequence[CompanyRecord],
    horizon: int,
    model: ModelState,
    params: Optional[GrowthParams] = None,
    future_macro: Optional[np.ndarray] = None,
) -> ForecastResult:
    """
    NN+GM rollout: each step's GM input is one growth-model step from the
    previous hybrid prediction; the prediction is residual + GM.
    """
    params = params or model.growth_params
    if params is None:
        raise ConfigurationError("hybrid rollout needs growth parameters")
    transforms = model.target_transforms or None

    def gm_base(previous: Dict[str, float]) -> Dict[str, float]:
        return gm_step_from_prediction(previous, params, transforms)

    return rollout(model, history, horizon, gm_base, True, MODE_HYBRID, future_macro)


def pure_nn_rollout(
    history: Sequence[CompanyRecord],
    horizon: int,
    model: ModelState,
    future_macro: Optional[np.ndarray] = None,
) -> ForecastResult:
    """Pure-NN rollout: zero GM channel; residuals are increments on the previous prediction."""
    return rollout(model, history, horizon, dict, False, MODE_PURE, future_macro)


# ----------------------------------------------------------------------------
# Persistence
# ----------------------------------------------------------------------------

def _config_from_dict(payload: dict) -> ForecastConfig:
    """Rebuild a ForecastConfig exactly as saved (environment overrides do not apply)."""
    cfg = ForecastConfig()
    names = {f.name for f in fields(ForecastConfig)}
    for key, value in payload.items():
        if key in names:
            setattr(cfg, key, tuple(value) if isinstance(value, list) else value)
    return cfg


def save_model(model: ModelState, path: str | Path) -> Path:
    """
    Write the model as a numpy .npz container.

    The container holds every parameter tensor, the normalizers and a JSON
    metadata entry (format version, config, feature layout, growth parameters,
    training curve, data hash, parameter hash).
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meta = {
        "format_version": MODEL_FORMAT_VERSION,
        "config": asdict(model.config),
        "feature_codes": model.feature_codes,
        "macro_codes": model.macro_codes,
        "target_transforms": model.target_transforms,
        "growth_params": model.growth_params.to_dict() if model.growth_params else None,
        "history": model.history,
        "data_hash": model.data_hash,
        "parameter_hash": model.parameter_hash(),
    }
    arrays = {name: p for name, p in model.parameters().items()}
    arrays.update({
        "input_norm.mean": model.input_norm.mean,
        "input_norm.scale": model.input_norm.scale,
        "gm_norm.mean": model.gm_norm.mean,
        "gm_norm.scale": model.gm_norm.scale,
    })
    with open(path, "wb") as handle:
        np.savez(handle, meta=np.array(json.dumps(meta, sort_keys=True)), **arrays)
    logger.info(f"Saved model to {path} (parameter hash {meta['parameter_hash'][:12]})")
    return path


def load_model(path: str | Path) -> ModelState:
    """
    Read a model written by save_model.

    Raises:
        FileNotFoundError: If the file doesn't exist
        ConfigurationError: On an unknown format version
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Model file not found: {path}")
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["meta"]))
        if meta.get("format_version") != MODEL_FORMAT_VERSION:
            raise ConfigurationError(f"{path}: unsupported model format {meta.get('format_version')}")
        tensors = {k: np.array(data[k]) for k in data.files if k != "meta"}

    params = meta.get("growth_params")
    model = ModelState(
        encoder=CellParams(tensors["encoder.W"], tensors["encoder.b"]),
        decoder=CellParams(tensors["decoder.W"], tensors["decoder.b"]),
        readout_W=tensors["readout.W"],
        readout_b=tensors["readout.b"],
        config=_config_from_dict(meta["config"]),
        feature_codes=list(meta["feature_codes"]),
        macro_codes=list(meta["macro_codes"]),
        target_transforms=dict(meta["target_transforms"]),
        input_norm=Normalizer(tensors["input_norm.mean"], tensors["input_norm.scale"]),
        gm_norm=Normalizer(tensors["gm_norm.mean"], tensors["gm_norm.scale"]),
        growth_params=GrowthParams.from_dict(params) if params else None,
        history=list(meta.get("history", [])),
        data_hash=meta.get("data_hash"),
    )
    if model.parameter_hash() != meta.get("parameter_hash"):
        logger.warning(f"{path}: parameter hash mismatch")
    return model
