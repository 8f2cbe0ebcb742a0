"""Small dense recurrent networks with hand-written backpropagation.

Everything works on float64 arrays with a leading batch dimension. Weight
matrices fold the bias in as their last column, i.e. a layer with ``k`` inputs
and ``n`` outputs holds an ``n x (k + 1)`` matrix and computes
``W[:, :k] @ x + W[:, k]``.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument, NumericError

INIT_SCALE = 0.08
FORGET_BIAS = 1.0


class Param:
    """A weight matrix together with its gradient and RMSprop cache.

    ``grad`` and ``cache`` may be views into larger blocks (see `LstmCell`),
    so they are only ever modified in place.
    """

    __slots__ = ("value", "grad", "cache")

    def __init__(self, value, grad=None, cache=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value) if grad is None else grad
        self.cache = np.zeros_like(self.value) if cache is None else cache
        if not (self.value.shape == self.grad.shape == self.cache.shape):
            raise InvalidArgument("value, grad and cache must share a shape")

    @property
    def shape(self):
        return self.value.shape

    def zero_grad(self):
        self.grad[...] = 0.0

    def __repr__(self):
        return f"Param(shape={self.shape})"


def uniform_init(rng, shape, scale=INIT_SCALE):
    """Weights drawn from U(-scale, scale)."""
    return rng.uniform(-scale, scale, size=shape)


def _as_rng(rng):
    if rng is None or isinstance(rng, (int, np.integer)):
        return np.random.default_rng(rng)
    return rng


def sigmoid(z):
    # split on sign so exp never overflows
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def softmax(v, axis=-1):
    """Numerically stable softmax along ``axis``."""
    v = np.asarray(v, dtype=np.float64)
    z = v - np.max(v, axis=axis, keepdims=True)
    ez = np.exp(z)
    return ez / np.sum(ez, axis=axis, keepdims=True)


def log_softmax(v, axis=-1):
    v = np.asarray(v, dtype=np.float64)
    z = v - np.max(v, axis=axis, keepdims=True)
    return z - np.log(np.sum(np.exp(z), axis=axis, keepdims=True))


class Linear:
    """Affine map ``y = W[:, :-1] x + W[:, -1]``."""

    def __init__(self, input_size, output_size, rng=None, scale=INIT_SCALE):
        rng = _as_rng(rng)
        self.input_size = input_size
        self.output_size = output_size
        self.W = Param(uniform_init(rng, (output_size, input_size + 1), scale))

    def forward(self, x):
        W = self.W.value
        return x @ W[:, :-1].T + W[:, -1]

    def backward(self, x, dy):
        self.W.grad[:, :-1] += dy.T @ x
        self.W.grad[:, -1] += dy.sum(axis=0)
        return dy @ self.W.value[:, :-1]

    def params(self):
        return {"W": self.W}


class RnnCell:
    """Vanilla recurrence ``h = tanh(W [x; h_prev; 1])``."""

    kind = "rnn"

    def __init__(self, input_size, hidden_size, rng=None, scale=INIT_SCALE):
        rng = _as_rng(rng)
        self.input_size = input_size
        self.hidden_size = hidden_size
        self.W = Param(uniform_init(rng, (hidden_size, input_size + hidden_size + 1), scale))

    def params(self):
        return {"W": self.W}

    def zero_state(self, batch):
        return (np.zeros((batch, self.hidden_size)),)

    def step(self, x, state):
        (h_prev,) = state
        W, n = self.W.value, self.input_size
        h = np.tanh(x @ W[:, :n].T + h_prev @ W[:, n:-1].T + W[:, -1])
        return (h,), (x, h_prev, h)

    def step_backward(self, d_state, cache):
        (dh,) = d_state
        x, h_prev, h = cache
        n = self.input_size
        dz = dh * (1.0 - h * h)
        W, G = self.W.value, self.W.grad
        G[:, :n] += dz.T @ x
        G[:, n:-1] += dz.T @ h_prev
        G[:, -1] += dz.sum(axis=0)
        return dz @ W[:, :n], (dz @ W[:, n:-1],)


@dataclass
class LstmState:
    """Recurrent carry of one LSTM layer: hidden output ``h`` and memory ``c``."""

    h: np.ndarray
    c: np.ndarray


class LstmCell:
    """LSTM layer with separate input, output, forget and candidate weights.

    The four gate matrices ``Wi, Wo, Wf, Wg`` are views into one stacked block
    so that a step costs a single matrix product.
    """

    kind = "lstm"
    gates = ("i", "o", "f", "g")

    def __init__(self, input_size, hidden_size, rng=None, scale=INIT_SCALE,
                 forget_bias=FORGET_BIAS):
        rng = _as_rng(rng)
        self.input_size = input_size
        self.hidden_size = hidden_size
        H, k = hidden_size, input_size + hidden_size + 1
        self._value = uniform_init(rng, (4 * H, k), scale)
        self._grad = np.zeros_like(self._value)
        self._cache = np.zeros_like(self._value)
        self._gate_params = {}
        for j, name in enumerate(self.gates):
            rows = slice(j * H, (j + 1) * H)
            self._gate_params[name] = Param(self._value[rows], self._grad[rows], self._cache[rows])
        self.Wf.value[:, -1] = forget_bias

    Wi = property(lambda self: self._gate_params["i"])
    Wo = property(lambda self: self._gate_params["o"])
    Wf = property(lambda self: self._gate_params["f"])
    Wg = property(lambda self: self._gate_params["g"])

    def params(self):
        return {f"W{name}": p for name, p in self._gate_params.items()}

    def zero_state(self, batch):
        H = self.hidden_size
        return (np.zeros((batch, H)), np.zeros((batch, H)))

    def step(self, x, state):
        h_prev, c_prev = state
        W, n, H = self._value, self.input_size, self.hidden_size
        z = x @ W[:, :n].T + h_prev @ W[:, n:-1].T + W[:, -1]
        ifo = sigmoid(z[:, :3 * H])
        i, o, f = ifo[:, :H], ifo[:, H:2 * H], ifo[:, 2 * H:]
        g = np.tanh(z[:, 3 * H:])
        c = f * c_prev + i * g
        tc = np.tanh(c)
        h = o * tc
        return (h, c), (x, h_prev, c_prev, i, o, f, g, tc)

    def step_backward(self, d_state, cache):
        dh, dc_next = d_state
        x, h_prev, c_prev, i, o, f, g, tc = cache
        n = self.input_size
        do = dh * tc
        dc = dc_next + dh * o * (1.0 - tc * tc)
        di = dc * g
        df = dc * c_prev
        dg = dc * i
        dz = np.concatenate(
            [di * i * (1.0 - i), do * o * (1.0 - o), df * f * (1.0 - f), dg * (1.0 - g * g)],
            axis=1,
        )
        W, G = self._value, self._grad
        G[:, :n] += dz.T @ x
        G[:, n:-1] += dz.T @ h_prev
        G[:, -1] += dz.sum(axis=0)
        return dz @ W[:, :n], (dz @ W[:, n:-1], dc * f)


def _check_vec(name, v, size):
    v = np.asarray(v, dtype=np.float64)
    if v.shape[-1:] != (size,) or v.ndim > 2:
        raise InvalidArgument(f"{name} must have trailing dimension {size}, got shape {v.shape}")
    return v


def rnn_step(cell, input, h_prev):
    """One vanilla-RNN step. Accepts single vectors or ``(batch, n)`` arrays."""
    x = _check_vec("input", input, cell.input_size)
    h = _check_vec("h_prev", h_prev, cell.hidden_size)
    single = x.ndim == 1
    (h_next,), _ = cell.step(np.atleast_2d(x), (np.atleast_2d(h),))
    return h_next[0] if single else h_next


def lstm_step(cell, input, state):
    """One LSTM step returning the new `LstmState`."""
    x = _check_vec("input", input, cell.input_size)
    h = _check_vec("state.h", state.h, cell.hidden_size)
    c = _check_vec("state.c", state.c, cell.hidden_size)
    single = x.ndim == 1
    (h_next, c_next), _ = cell.step(np.atleast_2d(x), (np.atleast_2d(h), np.atleast_2d(c)))
    if single:
        return LstmState(h_next[0], c_next[0])
    return LstmState(h_next, c_next)


class Recurrent:
    """A stack of recurrent cells between an optional input embedding and an
    output head, unrolled over a ``(T, batch, features)`` input sequence."""

    def __init__(self, cells, head, embed=None):
        self.cells = list(cells)
        self.head = head
        self.embed = embed

    def params(self):
        out = {}
        if self.embed is not None:
            out.update({f"embed.{k}": p for k, p in self.embed.params().items()})
        for l, cell in enumerate(self.cells):
            out.update({f"cell{l}.{k}": p for k, p in cell.params().items()})
        out.update({f"head.{k}": p for k, p in self.head.params().items()})
        return out

    def zero_grad(self):
        for p in self.params().values():
            p.zero_grad()

    def initial_state(self, batch):
        return [cell.zero_state(batch) for cell in self.cells]

    def step(self, x, states):
        """Single forward step without recording a tape (inference)."""
        if self.embed is not None:
            x = self.embed.forward(x)
        new_states = []
        for cell, st in zip(self.cells, states):
            st, _ = cell.step(x, st)
            new_states.append(st)
            x = st[0]
        return self.head.forward(x), new_states

    def forward(self, inputs, states=None):
        inputs = np.asarray(inputs, dtype=np.float64)
        T, B = inputs.shape[:2]
        if states is None:
            states = self.initial_state(B)
        outputs, tape = [], []
        for t in range(T):
            x = inputs[t]
            emb_in = x
            if self.embed is not None:
                x = self.embed.forward(x)
            caches = []
            for l, cell in enumerate(self.cells):
                states[l], cache = cell.step(x, states[l])
                caches.append(cache)
                x = states[l][0]
            y = self.head.forward(x)
            if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
                raise NumericError(f"non-finite activation at step {t}", step=t)
            outputs.append(y)
            tape.append((emb_in, caches, x))
        return np.stack(outputs), tape

    def backward(self, d_outputs, tape):
        B = d_outputs.shape[1]
        d_states = [tuple(np.zeros_like(s) for s in cell.zero_state(B)) for cell in self.cells]
        for t in range(len(tape) - 1, -1, -1):
            emb_in, caches, top = tape[t]
            dx = self.head.backward(top, d_outputs[t])
            for l in range(len(self.cells) - 1, -1, -1):
                ds = d_states[l]
                ds = (ds[0] + dx,) + ds[1:]
                dx, d_states[l] = self.cells[l].step_backward(ds, caches[l])
            if self.embed is not None:
                self.embed.backward(emb_in, dx)


def mse_loss(y, target, mask=None):
    """Mean squared error over valid (t, b) positions and output features.

    Returns the loss and its gradient with respect to ``y``.
    """
    diff = y - target
    if mask is None:
        mask = np.ones(y.shape[:2])
    m = mask[..., None]
    denom = max(mask.sum(), 1.0) * y.shape[-1]
    return float(np.sum(m * diff * diff) / denom), 2.0 * m * diff / denom


def nll_loss(logits, labels, mask=None):
    """Softmax cross-entropy averaged over valid (t, b) positions."""
    labels = np.asarray(labels, dtype=np.int64)
    if mask is None:
        mask = np.ones(labels.shape)
    logp = log_softmax(logits)
    picked = np.take_along_axis(logp, labels[..., None], axis=-1)[..., 0]
    denom = max(mask.sum(), 1.0)
    loss = -float(np.sum(mask * picked) / denom)
    grad = np.exp(logp)
    np.put_along_axis(grad, labels[..., None], np.take_along_axis(grad, labels[..., None], -1) - 1.0, -1)
    return loss, grad * (mask / denom)[..., None]


LOSSES = {"mse": mse_loss, "nll": nll_loss}


def bptt_gradients(model, inputs, targets, loss="mse", mask=None):
    """Zero, then populate, the gradients of every parameter of ``model``.

    ``inputs`` is ``(T, batch, n_in)``; ``targets`` is ``(T, batch, n_out)`` for
    ``mse`` or integer class labels ``(T, batch)`` for ``nll``. Returns the loss.
    """
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.ndim != 3 or inputs.shape[0] == 0:
        raise InvalidArgument("inputs must be a non-empty (T, batch, features) array")
    model.zero_grad()
    outputs, tape = model.forward(inputs)
    value, d_out = LOSSES[loss](outputs, targets, mask)
    if not np.isfinite(value):
        raise NumericError("non-finite loss", step=len(tape) - 1)
    model.backward(d_out, tape)
    return value


def rmsprop_update(param, learning_rate, decay=0.95, eps=1e-8):
    """RMSprop step: ``cache <- decay*cache + (1-decay)*g^2``,
    ``value <- value - lr * g / (sqrt(cache) + eps)``. Clears the gradient."""
    g = param.grad
    param.cache *= decay
    param.cache += (1.0 - decay) * g * g
    param.value -= learning_rate * g / (np.sqrt(param.cache) + eps)
    param.zero_grad()


def global_grad_norm(params):
    return float(np.sqrt(sum(np.sum(p.grad * p.grad) for p in params)))


def clip_gradients(params, max_norm):
    """Rescale all gradients so their joint L2 norm is at most ``max_norm``."""
    norm = global_grad_norm(params)
    if max_norm and norm > max_norm:
        for p in params:
            p.grad *= max_norm / norm
    return norm
