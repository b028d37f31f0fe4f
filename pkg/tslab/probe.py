"""Learnability probe: a one-hidden-layer tanh softmax classifier.

The probe is trained from scratch with mini-batch Adam on flattened slices.
It checks whether a scaling method keeps simple within-slice price
relationships learnable, and provides the metrics used to judge that.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import log_softmax

from .errors import ProbeError, TrainingDivergedError
from .labeling import LabelVector, ProbeCondition, label_probe_conditions
from .scaling import ScaleMethod, ScalerConfig, scale_slices
from .splitting import SplitPlan, split_then_shuffle
from .windowing import SliceSpec, SliceTensor, flatten, make_slices

logger = logging.getLogger(__name__)

PARAMETER_ORDER = ('w_hidden', 'b_hidden', 'w_out', 'b_out')


class ProbeModel:
    """Dense tanh hidden layer followed by a softmax output layer."""

    def __init__(self, input_dim: int, class_count: int = 2, hidden_units: int = 32,
                 use_bias: bool = False, seed: int = 0):
        """Initialize weights uniformly in +-sqrt(6 / (fan_in + fan_out)).

        Args:
            input_dim: Flattened slice width s*i
            class_count: Output classes (>= 2)
            hidden_units: Width of the tanh layer
            use_bias: Add bias vectors to both layers
            seed: Initialization seed
        """
        if input_dim < 1:
            raise ProbeError(f"input_dim must be positive, got {input_dim}")
        if class_count < 2:
            raise ProbeError(f"class_count must be >= 2, got {class_count}")
        if hidden_units < 1:
            raise ProbeError(f"hidden_units must be positive, got {hidden_units}")

        self.input_dim = input_dim
        self.class_count = class_count
        self.hidden_units = hidden_units
        self.use_bias = use_bias
        self.seed = seed
        self.trained = False

        rng = np.random.default_rng(seed)
        self.params: Dict[str, np.ndarray] = {
            'w_hidden': self._glorot(rng, input_dim, hidden_units),
            'w_out': self._glorot(rng, hidden_units, class_count),
        }
        if use_bias:
            self.params['b_hidden'] = np.zeros(hidden_units)
            self.params['b_out'] = np.zeros(class_count)

    @staticmethod
    def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-limit, limit, size=(fan_in, fan_out))

    @property
    def parameter_names(self) -> List[str]:
        return [name for name in PARAMETER_ORDER if name in self.params]

    @property
    def parameter_count(self) -> int:
        return int(sum(p.size for p in self.params.values()))

    def _check_input(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.input_dim:
            raise ProbeError(f"Expected input of shape (batch, {self.input_dim}), got {x.shape}")
        return x

    def _forward(self, x: np.ndarray, mask: Optional[np.ndarray] = None):
        z_hidden = x @ self.params['w_hidden']
        if self.use_bias:
            z_hidden = z_hidden + self.params['b_hidden']
        hidden = np.tanh(z_hidden)
        dropped = hidden if mask is None else hidden * mask
        logits = dropped @ self.params['w_out']
        if self.use_bias:
            logits = logits + self.params['b_out']
        return hidden, dropped, log_softmax(logits, axis=1)

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        """Softmax class probabilities, one row per sample."""
        _, _, log_probs = self._forward(self._check_input(x))
        return np.exp(log_probs)

    def predict(self, x: np.ndarray) -> np.ndarray:
        return np.argmax(self.predict_proba(x), axis=1)

    def loss(self, x: np.ndarray, y: np.ndarray) -> float:
        """Mean softmax cross-entropy."""
        _, _, log_probs = self._forward(self._check_input(x))
        y = np.asarray(y, dtype=np.int64)
        return float(-log_probs[np.arange(len(y)), y].mean())

    def loss_and_gradients(self, x: np.ndarray, y: np.ndarray,
                           mask: Optional[np.ndarray] = None) -> Tuple[float, Dict[str, np.ndarray]]:
        """Cross-entropy and its analytic gradient for every parameter.

        Args:
            x: (batch, input_dim) inputs
            y: Integer class labels
            mask: Optional inverted-dropout mask on the hidden layer
        """
        x = self._check_input(x)
        y = np.asarray(y, dtype=np.int64)
        count = len(y)
        hidden, dropped, log_probs = self._forward(x, mask)
        rows = np.arange(count)
        loss = float(-log_probs[rows, y].mean())

        d_logits = np.exp(log_probs)
        d_logits[rows, y] -= 1.0
        d_logits /= count

        grads = {'w_out': dropped.T @ d_logits}
        d_hidden = d_logits @ self.params['w_out'].T
        if mask is not None:
            d_hidden = d_hidden * mask
        d_z_hidden = d_hidden * (1.0 - hidden ** 2)
        grads['w_hidden'] = x.T @ d_z_hidden
        if self.use_bias:
            grads['b_out'] = d_logits.sum(axis=0)
            grads['b_hidden'] = d_z_hidden.sum(axis=0)
        return loss, grads


@dataclass(frozen=True)
class TrainConfig:
    """Mini-batch training settings."""

    epochs: int = 100
    batch_size: int = 64
    learning_rate: float = 1e-3
    seed: int = 42
    dropout_rate: float = 0.0

    def __post_init__(self):
        if self.epochs < 1:
            raise ProbeError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ProbeError(f"batch_size must be positive, got {self.batch_size}")
        if self.learning_rate <= 0:
            raise ProbeError(f"learning_rate must be positive, got {self.learning_rate}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ProbeError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")

    def to_dict(self) -> dict:
        return {
            'epochs': self.epochs,
            'batch_size': self.batch_size,
            'learning_rate': self.learning_rate,
            'seed': self.seed,
            'dropout_rate': self.dropout_rate,
        }


class AdamOptimizer:
    """Adaptive moment estimation with the usual defaults."""

    def __init__(self, learning_rate: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999,
                 epsilon: float = 1e-8):
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.steps = 0
        self._first: Dict[str, np.ndarray] = {}
        self._second: Dict[str, np.ndarray] = {}

    def step(self, params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray]):
        """Update ``params`` in place."""
        self.steps += 1
        correction1 = 1.0 - self.beta1 ** self.steps
        correction2 = 1.0 - self.beta2 ** self.steps
        for name, grad in grads.items():
            m = self._first.get(name, np.zeros_like(grad))
            v = self._second.get(name, np.zeros_like(grad))
            m = self.beta1 * m + (1.0 - self.beta1) * grad
            v = self.beta2 * v + (1.0 - self.beta2) * grad ** 2
            self._first[name], self._second[name] = m, v
            params[name] -= self.learning_rate * (m / correction1) / (np.sqrt(v / correction2) + self.epsilon)


def confusion_matrix(predictions: Iterable[int], actuals: Iterable[int],
                     class_count: Optional[int] = None) -> np.ndarray:
    """Count matrix with rows = actual class, columns = predicted class.

    Raises:
        ProbeError: Length mismatch or a class outside 0..class_count-1
    """
    predicted = np.asarray(list(predictions), dtype=np.int64)
    actual = np.asarray(list(actuals), dtype=np.int64)
    if predicted.shape != actual.shape:
        raise ProbeError(f"Length mismatch: {predicted.size} predictions vs {actual.size} actuals")
    if class_count is None:
        class_count = int(max(predicted.max(initial=0), actual.max(initial=0))) + 1
    for values in (predicted, actual):
        if values.size and (values.min() < 0 or values.max() >= class_count):
            raise ProbeError(f"Class labels must lie in 0..{class_count - 1}")
    matrix = np.zeros((class_count, class_count), dtype=np.int64)
    np.add.at(matrix, (actual, predicted), 1)
    return matrix


def precision_per_class(matrix: np.ndarray) -> List[float]:
    """TP / predicted count per class; 0.0 for classes never predicted."""
    matrix = np.asarray(matrix)
    predicted = matrix.sum(axis=0)
    diagonal = np.diag(matrix)
    return [float(diagonal[c] / predicted[c]) if predicted[c] else 0.0 for c in range(len(diagonal))]


def accuracy(matrix: np.ndarray) -> float:
    matrix = np.asarray(matrix)
    total = matrix.sum()
    return float(np.trace(matrix) / total) if total else 0.0


@dataclass
class ProbeReport:
    """Training curves and evaluation metrics of one probe run."""

    train_losses: List[float]
    val_losses: List[float]
    precision: List[float]
    accuracy: float
    confusion: np.ndarray
    evaluated_on: str = 'val'
    train_size: int = 0
    config: Optional[TrainConfig] = None
    condition: Optional[str] = None
    scaler: Optional[str] = None
    notes: Dict[str, object] = field(default_factory=dict)

    @property
    def evaluation_size(self) -> int:
        return int(self.confusion.sum())

    @property
    def majority_share(self) -> float:
        """Share of the most common actual class in the evaluated set."""
        rows = self.confusion.sum(axis=1)
        return float(rows.max() / rows.sum()) if rows.sum() else 0.0

    def to_dict(self) -> dict:
        return {
            'condition': self.condition,
            'scaler': self.scaler,
            'evaluated_on': self.evaluated_on,
            'train_size': self.train_size,
            'evaluation_size': self.evaluation_size,
            'accuracy': self.accuracy,
            'precision': list(self.precision),
            'majority_share': self.majority_share,
            'confusion_matrix': self.confusion.tolist(),
            'train_config': self.config.to_dict() if self.config else None,
            'final_train_loss': self.train_losses[-1] if self.train_losses else None,
            'final_val_loss': self.val_losses[-1] if self.val_losses else None,
            'notes': dict(self.notes),
        }

    def loss_rows(self) -> List[Tuple[int, float, float]]:
        """(epoch, train_loss, val_loss) rows, epochs numbered from 1."""
        return [(epoch + 1, train, val)
                for epoch, (train, val) in enumerate(zip(self.train_losses, self.val_losses))]

    def to_text(self) -> str:
        title = ' / '.join(part for part in (self.condition, self.scaler) if part) or 'probe'
        lines = [
            f"{title}: accuracy {self.accuracy:.4f} on {self.evaluation_size} {self.evaluated_on} samples",
            "class  precision  " + "  ".join(f"pred {c:>3}" for c in range(len(self.precision))),
        ]
        for cls, row in enumerate(self.confusion):
            counts = "  ".join(f"{int(n):>8}" for n in row)
            lines.append(f"{cls:>5}  {self.precision[cls]:>9.4f}  {counts}")
        return "\n".join(lines)


def _as_matrix(data: Union[SliceTensor, np.ndarray]) -> np.ndarray:
    if isinstance(data, SliceTensor):
        return flatten(data)
    matrix = np.asarray(data, dtype=np.float64)
    if matrix.ndim == 3:
        return matrix.reshape(matrix.shape[0], -1)
    if matrix.ndim != 2:
        raise ProbeError(f"Probe input must be 2-D (m, s*i), got shape {matrix.shape}")
    return matrix


def train(model: ProbeModel, data: Union[SliceTensor, np.ndarray], labels: LabelVector, split: SplitPlan,
          config: Optional[TrainConfig] = None,
          train_indices: Optional[Sequence[int]] = None) -> ProbeReport:
    """Fit the probe with mini-batch Adam on softmax cross-entropy.

    Training samples are reshuffled every epoch. Validation loss is recorded
    per epoch on the validation set, or the test set when the split has no
    validation slices.

    Args:
        model: Probe to train in place
        data: Slice tensor or its flattened (m, s*i) matrix
        labels: Classifier labels aligned with the slices
        split: Train/validation/test assignment
        config: Training settings
        train_indices: Override of the training indices (e.g. after balancing)

    Returns:
        ProbeReport for the evaluation set

    Raises:
        ProbeError: Misaligned inputs, regression labels, a class missing
            from training, or batch size above the training set size
        TrainingDivergedError: Non-finite loss
    """
    config = config or TrainConfig()
    x = _as_matrix(data)
    if not labels.is_classifier:
        raise ProbeError(f"Probe needs classifier labels, got {labels.family.value}")
    y = np.asarray(labels.values, dtype=np.int64)
    if len(x) != len(y) or len(x) != split.count:
        raise ProbeError(f"Misaligned inputs: {len(x)} samples, {len(y)} labels, split over {split.count}")
    if labels.class_count != model.class_count:
        raise ProbeError(f"Model has {model.class_count} classes, labels have {labels.class_count}")

    train_idx = np.asarray(split.train_order if train_indices is None else train_indices, dtype=np.int64)
    if len(split.val_indices):
        eval_idx, evaluated_on = split.val_indices, 'val'
    elif len(split.test_indices):
        eval_idx, evaluated_on = split.test_indices, 'test'
    else:
        raise ProbeError("Split has no validation or test slices to evaluate on")
    if config.batch_size > len(train_idx):
        raise ProbeError(f"batch_size {config.batch_size} exceeds training set size {len(train_idx)}")
    missing = sorted(set(range(model.class_count)) - set(np.unique(y[train_idx]).tolist()))
    if missing:
        raise ProbeError(f"Class(es) {missing} absent from the training set")

    batch_seq, dropout_seq = np.random.SeedSequence(config.seed).spawn(2)
    batch_rng = np.random.default_rng(batch_seq)
    dropout_rng = np.random.default_rng(dropout_seq)
    optimizer = AdamOptimizer(config.learning_rate)
    keep = 1.0 - config.dropout_rate

    x_train, y_train = x[train_idx], y[train_idx]
    x_eval, y_eval = x[eval_idx], y[eval_idx]
    train_losses, val_losses = [], []
    for epoch in range(1, config.epochs + 1):
        order = batch_rng.permutation(len(train_idx))
        for begin in range(0, len(order), config.batch_size):
            batch = order[begin:begin + config.batch_size]
            mask = None
            if config.dropout_rate > 0:
                mask = (dropout_rng.random((len(batch), model.hidden_units)) < keep) / keep
            loss, grads = model.loss_and_gradients(x_train[batch], y_train[batch], mask)
            if not np.isfinite(loss):
                raise TrainingDivergedError(epoch, loss)
            optimizer.step(model.params, grads)

        train_loss = model.loss(x_train, y_train)
        val_loss = model.loss(x_eval, y_eval)
        if not (np.isfinite(train_loss) and np.isfinite(val_loss)):
            raise TrainingDivergedError(epoch, train_loss if not np.isfinite(train_loss) else val_loss)
        train_losses.append(train_loss)
        val_losses.append(val_loss)
        logger.debug(f"epoch {epoch}: train loss {train_loss:.6f}, {evaluated_on} loss {val_loss:.6f}")

    model.trained = True
    matrix = confusion_matrix(model.predict(x_eval), y_eval, model.class_count)
    report = ProbeReport(
        train_losses=train_losses,
        val_losses=val_losses,
        precision=precision_per_class(matrix),
        accuracy=accuracy(matrix),
        confusion=matrix,
        evaluated_on=evaluated_on,
        train_size=int(len(train_idx)),
        config=config,
    )
    logger.info(f"Probe trained for {config.epochs} epochs: {evaluated_on} accuracy {report.accuracy:.4f}")
    return report


def gradient_check(model: ProbeModel, x: np.ndarray, y: Sequence[int], step: float = 1e-5) -> float:
    """Largest relative error between analytic and central-difference gradients.

    Every weight is perturbed, so keep the model small.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    _, analytic = model.loss_and_gradients(x, y)
    worst = 0.0
    for name in model.parameter_names:
        param = model.params[name]
        numeric = np.zeros_like(param)
        for index in np.ndindex(param.shape):
            original = param[index]
            param[index] = original + step
            plus = model.loss(x, y)
            param[index] = original - step
            minus = model.loss(x, y)
            param[index] = original
            numeric[index] = (plus - minus) / (2.0 * step)
        scale = np.maximum(np.abs(analytic[name]), np.abs(numeric))
        diff = np.abs(analytic[name] - numeric)
        # both sides below round-off count as agreement
        errors = np.where(scale > 1e-10, diff / np.where(scale > 1e-10, scale, 1.0), 0.0)
        worst = max(worst, float(errors.max(initial=0.0)))
    return worst


def run_learnability_suite(closes: Sequence[float],
                           scaler_method: Optional[Union[ScaleMethod, str]] = ScaleMethod.STANDARDIZE,
                           conditions: Optional[Sequence[Union[ProbeCondition, str]]] = None,
                           lookback: int = 20, epochs: int = 100, dropout_rate: float = 0.0,
                           seed: int = 42, hidden_units: int = 32, use_bias: bool = False,
                           batch_size: int = 64, learning_rate: float = 1e-3,
                           fractions: Tuple[float, float, float] = (0.8, 0.2, 0.0)) -> Dict[ProbeCondition, ProbeReport]:
    """Train one probe per price condition on close-only slices.

    Labels are computed from unscaled closes inside each slice; inputs are the
    scaled slices (or raw closes when ``scaler_method`` is None).

    Args:
        closes: Close prices
        scaler_method: 'minmax', 'standardize' or None for the unscaled control
        conditions: Subset of c5/ema5/hc10 (default all three)
        lookback: Bars per slice
        epochs: Training epochs per condition
        dropout_rate: Hidden-layer dropout
        seed: Seed shared by split, initialization and batching
        hidden_units: Probe width
        use_bias: Bias vectors for every condition. HC10 always gets them, a
            bias-free odd network cannot separate it on zero-centred inputs
        batch_size: Mini-batch size
        learning_rate: Adam step size
        fractions: (train, val, test) shares

    Returns:
        Mapping of condition to its ProbeReport
    """
    closes = np.asarray(closes, dtype=np.float64)
    conditions = [ProbeCondition(c) for c in (conditions or list(ProbeCondition))]
    spec = SliceSpec(lookback=lookback, channels=('close',))
    slices = make_slices({'close': closes}, spec)
    scaler_name = None
    if scaler_method is not None:
        scaler_name = ScaleMethod(scaler_method).value
        slices = scale_slices(slices, ScalerConfig(method=scaler_method, overlaid=('close',)))
    else:
        logger.warning("Learnability suite running on unscaled prices")

    split = split_then_shuffle(len(slices), fractions, seed, spec)
    config = TrainConfig(epochs=epochs, batch_size=batch_size, learning_rate=learning_rate,
                         seed=seed, dropout_rate=dropout_rate)
    reports = {}
    for condition in conditions:
        labels = label_probe_conditions(closes, slices.end_indices, condition, lookback=lookback)
        with_bias = use_bias or condition is ProbeCondition.HC10
        model = ProbeModel(lookback, 2, hidden_units=hidden_units, use_bias=with_bias, seed=seed)
        report = train(model, slices, labels, split, config)
        report.condition = condition.value
        report.scaler = scaler_name or 'none'
        report.notes['description'] = condition.description
        reports[condition] = report
        logger.info(f"{condition.description} with {report.scaler}: accuracy {report.accuracy:.4f}")
    return reports
