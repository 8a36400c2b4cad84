"""From-scratch sequence-regression stack in numpy.

The network is fixed: 13 inputs -> LSTM(10) -> Dense(5, ReLU) ->
Dense(3, ReLU) -> Dense(1, linear), trained with mini-batch Adam on mean
squared error. Backpropagation through time is exact; gradients are
checked against central finite differences in the test suite.

All arrays are float64. Training is a single logical writer over the
parameters; inference on an immutable ModelParams is thread-safe.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .features import FIELDS, NormStats

INPUT_DIM = 13
LSTM_UNITS = 10
DENSE_UNITS = (5, 3, 1)


class ModelFormatError(ValueError):
    """Raised when a model file cannot be parsed or has wrong shapes."""


@dataclass
class LstmParams:
    """Gate weights: w* act on the input, u* on the recurrent state."""

    wi: np.ndarray
    wf: np.ndarray
    wo: np.ndarray
    wg: np.ndarray
    ui: np.ndarray
    uf: np.ndarray
    uo: np.ndarray
    ug: np.ndarray
    bi: np.ndarray
    bf: np.ndarray
    bo: np.ndarray
    bg: np.ndarray


@dataclass
class DenseParams:
    w: np.ndarray
    b: np.ndarray


@dataclass
class ModelParams:
    """LSTM + dense head plus the normalization the model was trained with."""

    lstm: LstmParams
    dense: list[DenseParams]
    norm: NormStats
    seq_len: int = 1

    def param_items(self) -> list[tuple[str, np.ndarray]]:
        """Canonical (name, array) list; fixes iteration order everywhere."""
        items = []
        for gate in ("wi", "wf", "wo", "wg", "ui", "uf", "uo", "ug",
                     "bi", "bf", "bo", "bg"):
            items.append(("lstm." + gate, getattr(self.lstm, gate)))
        for i, layer in enumerate(self.dense):
            items.append(("dense%d.w" % i, layer.w))
            items.append(("dense%d.b" % i, layer.b))
        return items

    def check_shapes(self):
        expect = _expected_shapes()
        for name, arr in self.param_items():
            if arr.shape != expect[name]:
                raise ModelFormatError("parameter %s has shape %s, expected %s"
                                       % (name, arr.shape, expect[name]))
            if not np.all(np.isfinite(arr)):
                raise ModelFormatError("parameter %s has non-finite values" % name)


def _expected_shapes() -> dict[str, tuple]:
    shapes = {}
    for gate in ("wi", "wf", "wo", "wg"):
        shapes["lstm." + gate] = (LSTM_UNITS, INPUT_DIM)
    for gate in ("ui", "uf", "uo", "ug"):
        shapes["lstm." + gate] = (LSTM_UNITS, LSTM_UNITS)
    for gate in ("bi", "bf", "bo", "bg"):
        shapes["lstm." + gate] = (LSTM_UNITS,)
    fan_in = LSTM_UNITS
    for i, units in enumerate(DENSE_UNITS):
        shapes["dense%d.w" % i] = (units, fan_in)
        shapes["dense%d.b" % i] = (units,)
        fan_in = units
    return shapes


def _glorot(rng: np.random.Generator, shape) -> np.ndarray:
    fan_out, fan_in = shape
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


def init_params(norm: NormStats, rng: np.random.Generator,
                seq_len: int = 1) -> ModelParams:
    """Glorot-uniform weights, zero biases, forget-gate bias +1."""
    lstm = LstmParams(
        wi=_glorot(rng, (LSTM_UNITS, INPUT_DIM)),
        wf=_glorot(rng, (LSTM_UNITS, INPUT_DIM)),
        wo=_glorot(rng, (LSTM_UNITS, INPUT_DIM)),
        wg=_glorot(rng, (LSTM_UNITS, INPUT_DIM)),
        ui=_glorot(rng, (LSTM_UNITS, LSTM_UNITS)),
        uf=_glorot(rng, (LSTM_UNITS, LSTM_UNITS)),
        uo=_glorot(rng, (LSTM_UNITS, LSTM_UNITS)),
        ug=_glorot(rng, (LSTM_UNITS, LSTM_UNITS)),
        bi=np.zeros(LSTM_UNITS),
        bf=np.ones(LSTM_UNITS),
        bo=np.zeros(LSTM_UNITS),
        bg=np.zeros(LSTM_UNITS),
    )
    dense = []
    fan_in = LSTM_UNITS
    for units in DENSE_UNITS:
        dense.append(DenseParams(w=_glorot(rng, (units, fan_in)),
                                 b=np.zeros(units)))
        fan_in = units
    return ModelParams(lstm, dense, norm, seq_len)


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def lstm_step(params: ModelParams, x: np.ndarray, h: np.ndarray,
              c: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """One LSTM cell step for a single input vector."""
    x = np.asarray(x, dtype=float)
    h = np.asarray(h, dtype=float)
    c = np.asarray(c, dtype=float)
    if x.shape != (INPUT_DIM,) or h.shape != (LSTM_UNITS,) or c.shape != (LSTM_UNITS,):
        raise ValueError("lstm_step shape mismatch: x%s h%s c%s"
                         % (x.shape, h.shape, c.shape))
    p = params.lstm
    i = _sigmoid(p.wi @ x + p.ui @ h + p.bi)
    f = _sigmoid(p.wf @ x + p.uf @ h + p.bf)
    o = _sigmoid(p.wo @ x + p.uo @ h + p.bo)
    g = np.tanh(p.wg @ x + p.ug @ h + p.bg)
    c2 = f * c + i * g
    h2 = o * np.tanh(c2)
    return h2, c2


def _forward_batch(params: ModelParams, x: np.ndarray, keep_cache=False):
    """x: (batch, seq_len, 13) -> predictions (batch,), plus caches."""
    if x.ndim != 3 or x.shape[2] != INPUT_DIM:
        raise ValueError("expected (batch, seq_len, %d) input, got %s"
                         % (INPUT_DIM, x.shape))
    if x.shape[1] != params.seq_len:
        raise ValueError("window length %d != model seq_len %d"
                         % (x.shape[1], params.seq_len))
    p = params.lstm
    batch = x.shape[0]
    h = np.zeros((batch, LSTM_UNITS))
    c = np.zeros((batch, LSTM_UNITS))
    steps = []
    for t in range(x.shape[1]):
        xt = x[:, t, :]
        i = _sigmoid(xt @ p.wi.T + h @ p.ui.T + p.bi)
        f = _sigmoid(xt @ p.wf.T + h @ p.uf.T + p.bf)
        o = _sigmoid(xt @ p.wo.T + h @ p.uo.T + p.bo)
        g = np.tanh(xt @ p.wg.T + h @ p.ug.T + p.bg)
        c2 = f * c + i * g
        tc = np.tanh(c2)
        h2 = o * tc
        if keep_cache:
            steps.append((xt, h, c, i, f, o, g, tc))
        h, c = h2, c2
    d0, d1, d2 = params.dense
    z0 = h @ d0.w.T + d0.b
    a0 = np.maximum(z0, 0.0)
    z1 = a0 @ d1.w.T + d1.b
    a1 = np.maximum(z1, 0.0)
    out = (a1 @ d2.w.T + d2.b)[:, 0]
    cache = (steps, h, z0, a0, z1, a1) if keep_cache else None
    return out, cache


def forward(params: ModelParams, window) -> float:
    """Predict the normalized price for one window of seq_len 13-vectors."""
    x = np.asarray(window, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    out, _ = _forward_batch(params, x[None, :, :])
    return float(out[0])


def predict_batch(params: ModelParams, x) -> np.ndarray:
    """Predictions for a (batch, seq_len, 13) array of windows."""
    out, _ = _forward_batch(params, np.asarray(x, dtype=float))
    return out


def mse_loss(params: ModelParams, x: np.ndarray, y: np.ndarray) -> float:
    """Mean squared error of the batch predictions (no gradients)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    out, _ = _forward_batch(params, x)
    err = out - y
    return float(np.mean(err * err))


def backward(params: ModelParams, x: np.ndarray,
             y: np.ndarray) -> tuple[dict[str, np.ndarray], float]:
    """Exact MSE gradients over a batch via backprop through time."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) == 0:
        raise ValueError("empty batch")
    out, cache = _forward_batch(params, x, keep_cache=True)
    steps, h_final, z0, a0, z1, a1 = cache
    batch = x.shape[0]
    err = out - y
    mse = float(np.mean(err * err))

    grads = {name: np.zeros_like(arr) for name, arr in params.param_items()}
    p = params.lstm
    d0, d1, d2 = params.dense

    dz2 = (2.0 * err / batch)[:, None]              # linear output layer
    grads["dense2.w"] += dz2.T @ a1
    grads["dense2.b"] += dz2.sum(axis=0)
    dz1 = (dz2 @ d2.w) * (z1 > 0)
    grads["dense1.w"] += dz1.T @ a0
    grads["dense1.b"] += dz1.sum(axis=0)
    dz0 = (dz1 @ d1.w) * (z0 > 0)
    grads["dense0.w"] += dz0.T @ h_final
    grads["dense0.b"] += dz0.sum(axis=0)
    dh = dz0 @ d0.w

    dc = np.zeros((batch, LSTM_UNITS))
    for xt, h_prev, c_prev, i, f, o, g, tc in reversed(steps):
        do = dh * tc
        dzo = do * o * (1.0 - o)
        dc = dc + dh * o * (1.0 - tc * tc)
        di = dc * g
        dzi = di * i * (1.0 - i)
        dg = dc * i
        dzg = dg * (1.0 - g * g)
        df = dc * c_prev
        dzf = df * f * (1.0 - f)
        grads["lstm.wi"] += dzi.T @ xt
        grads["lstm.wf"] += dzf.T @ xt
        grads["lstm.wo"] += dzo.T @ xt
        grads["lstm.wg"] += dzg.T @ xt
        grads["lstm.ui"] += dzi.T @ h_prev
        grads["lstm.uf"] += dzf.T @ h_prev
        grads["lstm.uo"] += dzo.T @ h_prev
        grads["lstm.ug"] += dzg.T @ h_prev
        grads["lstm.bi"] += dzi.sum(axis=0)
        grads["lstm.bf"] += dzf.sum(axis=0)
        grads["lstm.bo"] += dzo.sum(axis=0)
        grads["lstm.bg"] += dzg.sum(axis=0)
        dh = dzi @ p.ui + dzf @ p.uf + dzo @ p.uo + dzg @ p.ug
        dc = dc * f
    return grads, mse


@dataclass
class AdamState:
    """Standard Adam with bias correction; moments mirror the parameters."""

    learning_rate: float = 1.5e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def for_params(cls, params: ModelParams, learning_rate: float = 1.5e-5):
        state = cls(learning_rate=learning_rate)
        for name, arr in params.param_items():
            state.m[name] = np.zeros_like(arr)
            state.v[name] = np.zeros_like(arr)
        return state


def adam_step(state: AdamState, params: ModelParams,
              grads: dict[str, np.ndarray]) -> ModelParams:
    state.step += 1
    bc1 = 1.0 - state.beta1 ** state.step
    bc2 = 1.0 - state.beta2 ** state.step
    for name, arr in params.param_items():
        g = grads[name]
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        arr -= state.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return params


@dataclass
class TrainConfig:
    batch_size: int = 16384
    epochs: int = 20
    seed: int = 0
    learning_rate: float = 1.5e-5

    def validate(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")


def train(x: np.ndarray, y: np.ndarray, cfg: TrainConfig, norm: NormStats,
          seq_len: int = 1) -> tuple[ModelParams, list[float]]:
    """Shuffled mini-batch Adam over normalized data.

    ``x`` is (n, seq_len, 13) and ``y`` (n,), both already min-max scaled.
    Returns the trained parameters and the per-epoch mean training loss.
    Deterministic for a fixed config seed.
    """
    cfg.validate()
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim == 2:
        x = x[:, None, :]
    n = len(x)
    if n == 0:
        raise ValueError("empty training dataset")
    rng = np.random.default_rng(cfg.seed)
    params = init_params(norm, rng, seq_len)
    adam = AdamState.for_params(params, learning_rate=cfg.learning_rate)
    curve = []
    for _ in range(cfg.epochs):
        perm = rng.permutation(n)
        total = 0.0
        for lo in range(0, n, cfg.batch_size):
            idx = perm[lo:lo + cfg.batch_size]
            grads, mse = backward(params, x[idx], y[idx])
            adam_step(adam, params, grads)
            total += mse * len(idx)
        curve.append(total / n)
    return params, curve


# -- plain-text model files ---------------------------------------------------

_GATE_ORDER = ("WI", "WF", "WO", "WG", "UI", "UF", "UO", "UG",
               "BI", "BF", "BO", "BG")


def _fmt_row(values) -> str:
    return " ".join("%.17g" % v for v in values)


def save_model(params: ModelParams, path):
    """Versioned text format; 17 significant digits round-trip float64."""
    params.check_shapes()
    lines = ["DTXMODEL v1", "SEQLEN %d" % params.seq_len, "NORM %d" % len(FIELDS)]
    for name, lo, hi in zip(FIELDS, params.norm.mins, params.norm.maxs):
        lines.append("%s %.17g %.17g" % (name, lo, hi))
    lines.append("LSTM %d %d" % (LSTM_UNITS, INPUT_DIM))
    p = params.lstm
    for gate in _GATE_ORDER:
        lines.append(gate)
        arr = getattr(p, gate.lower())
        if arr.ndim == 1:
            lines.append(_fmt_row(arr))
        else:
            lines.extend(_fmt_row(row) for row in arr)
    fan_in = LSTM_UNITS
    for i, layer in enumerate(params.dense):
        lines.append("DENSE%d %d %d" % (i, layer.w.shape[0], fan_in))
        lines.append("W")
        lines.extend(_fmt_row(row) for row in layer.w)
        lines.append("B")
        lines.append(_fmt_row(layer.b))
        fan_in = layer.w.shape[0]
    lines.append("END")
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


class _Reader:
    def __init__(self, path):
        self.path = path
        with open(path) as f:
            self.lines = f.read().splitlines()
        self.pos = 0

    def next(self) -> str:
        if self.pos >= len(self.lines):
            self.fail("unexpected end of file")
        line = self.lines[self.pos]
        self.pos += 1
        return line

    def fail(self, message):
        raise ModelFormatError("%s: line %d: %s" % (self.path, self.pos + 1, message))

    def expect(self, literal: str):
        line = self.next()
        if line != literal:
            self.pos -= 1
            self.fail("expected %r, got %r" % (literal, line))

    def floats(self, count: int) -> np.ndarray:
        line = self.next()
        parts = line.split()
        if len(parts) != count:
            self.pos -= 1
            self.fail("expected %d values, got %d" % (count, len(parts)))
        try:
            return np.array([float(v) for v in parts])
        except ValueError:
            self.pos -= 1
            self.fail("bad number in %r" % line)

    def matrix(self, rows: int, cols: int) -> np.ndarray:
        return np.stack([self.floats(cols) for _ in range(rows)])


def load_model(path) -> ModelParams:
    r = _Reader(path)
    r.expect("DTXMODEL v1")
    line = r.next()
    if not line.startswith("SEQLEN "):
        r.pos -= 1
        r.fail("expected SEQLEN")
    seq_len = int(line.split()[1])
    r.expect("NORM %d" % len(FIELDS))
    mins, maxs = [], []
    for name in FIELDS:
        parts = r.next().split()
        if len(parts) != 3 or parts[0] != name:
            r.pos -= 1
            r.fail("expected norm row for field %r" % name)
        mins.append(float(parts[1]))
        maxs.append(float(parts[2]))
    header = r.next()
    if header != "LSTM %d %d" % (LSTM_UNITS, INPUT_DIM):
        r.pos -= 1
        r.fail("bad LSTM shape (need %d units over %d inputs): %r"
               % (LSTM_UNITS, INPUT_DIM, header))
    gates = {}
    for gate in _GATE_ORDER:
        r.expect(gate)
        if gate.startswith("B"):
            gates[gate.lower()] = r.floats(LSTM_UNITS)
        elif gate.startswith("W"):
            gates[gate.lower()] = r.matrix(LSTM_UNITS, INPUT_DIM)
        else:
            gates[gate.lower()] = r.matrix(LSTM_UNITS, LSTM_UNITS)
    dense = []
    fan_in = LSTM_UNITS
    for i, units in enumerate(DENSE_UNITS):
        r.expect("DENSE%d %d %d" % (i, units, fan_in))
        r.expect("W")
        w = r.matrix(units, fan_in)
        r.expect("B")
        b = r.floats(units)
        dense.append(DenseParams(w, b))
        fan_in = units
    r.expect("END")
    params = ModelParams(LstmParams(**gates), dense, NormStats(mins, maxs), seq_len)
    params.check_shapes()
    return params
