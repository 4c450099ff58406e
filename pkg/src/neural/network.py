from collections import OrderedDict
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.special import expit

from src.utils.errors import ConfigError, ContractError, ShapeError

ACTOR = 'actor'
CRITIC = 'critic'
GATES = ('z', 'r', 'n')


@dataclass(frozen=True)
class NetworkSpec:
    """MLP1 (two tanh layers) -> GRU1 -> GRU2 -> linear MLP2 head."""

    input_dim: int
    output_dim: int
    hidden1: int = 64
    hidden2: int = 64
    head: str = ACTOR
    output_gain: Optional[float] = None

    def __post_init__(self):
        for name in ('input_dim', 'output_dim', 'hidden1', 'hidden2'):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"Largura {name} deve ser >= 1")
        if self.head not in (ACTOR, CRITIC):
            raise ConfigError(f"Cabeça desconhecida: {self.head}")
        if self.head == CRITIC and self.output_dim != 1:
            raise ConfigError("Crítico deve ter saída escalar (output_dim=1)")

    @property
    def gain(self) -> float:
        if self.output_gain is not None:
            return float(self.output_gain)
        return 0.01 if self.head == ACTOR else 1.0

    def layer_shapes(self) -> 'OrderedDict[str, tuple]':
        W1, W2 = self.hidden1, self.hidden2
        shapes = OrderedDict()
        shapes['mlp1.w1'] = (W1, self.input_dim)
        shapes['mlp1.b1'] = (W1,)
        shapes['mlp1.w2'] = (W1, W1)
        shapes['mlp1.b2'] = (W1,)
        for layer, width_in in (('gru1', W1), ('gru2', W2)):
            for gate in GATES:
                shapes[f'{layer}.w{gate}'] = (W2, width_in)
                shapes[f'{layer}.u{gate}'] = (W2, W2)
                shapes[f'{layer}.b{gate}'] = (W2,)
        shapes['mlp2.w'] = (self.output_dim, W2)
        shapes['mlp2.b'] = (self.output_dim,)
        return shapes

    @property
    def n_params(self) -> int:
        return int(sum(np.prod(s) for s in self.layer_shapes().values()))

    def to_dict(self) -> dict:
        return {
            'input_dim': self.input_dim,
            'output_dim': self.output_dim,
            'hidden1': self.hidden1,
            'hidden2': self.hidden2,
            'head': self.head,
            'output_gain': self.output_gain
        }


class ParamSet:
    """Flat parameter vector with named views, its gradient and Adam moments."""

    def __init__(self, spec: NetworkSpec, theta: Optional[np.ndarray] = None):
        self.spec = spec
        n = spec.n_params
        if theta is None:
            theta = np.zeros(n)
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (n,):
            raise ShapeError(f"Vetor de parâmetros com tamanho {theta.shape}, esperado ({n},)")
        self.theta = theta.copy()
        self.grad = np.zeros(n)
        self.m = np.zeros(n)
        self.v = np.zeros(n)
        self.step = 0
        self.version = 0

        self._slices: Dict[str, Tuple[slice, tuple]] = {}
        offset = 0
        for name, shape in spec.layer_shapes().items():
            size = int(np.prod(shape))
            self._slices[name] = (slice(offset, offset + size), shape)
            offset += size

    def names(self) -> List[str]:
        return list(self._slices)

    def slice_of(self, name: str) -> slice:
        return self._slices[name][0]

    def __getitem__(self, name: str) -> np.ndarray:
        sl, shape = self._slices[name]
        return self.theta[sl].reshape(shape)

    def grad_view(self, name: str) -> np.ndarray:
        sl, shape = self._slices[name]
        return self.grad[sl].reshape(shape)

    def zero_grad(self):
        self.grad[:] = 0.0

    def assign(self, theta: np.ndarray):
        theta = np.asarray(theta, dtype=float)
        if theta.shape != self.theta.shape:
            raise ShapeError(f"Vetor de parâmetros com tamanho {theta.shape}, esperado {self.theta.shape}")
        self.theta[:] = theta
        self.version += 1

    def copy(self) -> 'ParamSet':
        clone = ParamSet(self.spec, self.theta)
        clone.m = self.m.copy()
        clone.v = self.v.copy()
        clone.step = self.step
        return clone


@dataclass
class HiddenState:
    h1: np.ndarray
    h2: np.ndarray

    @classmethod
    def zeros(cls, spec: NetworkSpec) -> 'HiddenState':
        return cls(h1=np.zeros(spec.hidden2), h2=np.zeros(spec.hidden2))


@dataclass
class ForwardCache:
    x: np.ndarray
    hidden: HiddenState
    y1: np.ndarray
    y2: np.ndarray
    gru: Dict[str, dict]
    logits: np.ndarray
    output: np.ndarray
    version: int
    head: str = ACTOR


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - np.max(logits)
    e = np.exp(shifted)
    return e / e.sum()


def softmax_backward(probs: np.ndarray, d_probs: np.ndarray) -> np.ndarray:
    return probs * (d_probs - np.dot(d_probs, probs))


def orthogonal_matrix(shape: tuple, rng: np.random.Generator, gain: float = 1.0) -> np.ndarray:
    rows, cols = shape
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return gain * q[:rows, :cols]


def orthogonal_init(spec: NetworkSpec, rng: np.random.Generator) -> ParamSet:
    params = ParamSet(spec)
    for name, shape in spec.layer_shapes().items():
        if len(shape) == 1:
            continue
        gain = spec.gain if name == 'mlp2.w' else 1.0
        params.theta[params.slice_of(name)] = orthogonal_matrix(shape, rng, gain).ravel()
    return params


def _gru_forward(params: ParamSet, layer: str, x: np.ndarray, h: np.ndarray) -> Tuple[np.ndarray, dict]:
    z = expit(params[f'{layer}.wz'] @ x + params[f'{layer}.uz'] @ h + params[f'{layer}.bz'])
    r = expit(params[f'{layer}.wr'] @ x + params[f'{layer}.ur'] @ h + params[f'{layer}.br'])
    rh = r * h
    n = np.tanh(params[f'{layer}.wn'] @ x + params[f'{layer}.un'] @ rh + params[f'{layer}.bn'])
    h_new = z * h + (1.0 - z) * n
    return h_new, {'x': x, 'h': h, 'z': z, 'r': r, 'rh': rh, 'n': n, 'out': h_new}


def _gru_backward(params: ParamSet, layer: str, c: dict, dh_new: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    x, h, z, r, rh, n = c['x'], c['h'], c['z'], c['r'], c['rh'], c['n']
    dz = dh_new * (h - n)
    dn = dh_new * (1.0 - z)
    dh = dh_new * z

    da_n = dn * (1.0 - n * n)
    params.grad_view(f'{layer}.wn')[...] += np.outer(da_n, x)
    params.grad_view(f'{layer}.un')[...] += np.outer(da_n, rh)
    params.grad_view(f'{layer}.bn')[...] += da_n
    dx = params[f'{layer}.wn'].T @ da_n
    drh = params[f'{layer}.un'].T @ da_n
    dr = drh * h
    dh += drh * r

    da_r = dr * r * (1.0 - r)
    params.grad_view(f'{layer}.wr')[...] += np.outer(da_r, x)
    params.grad_view(f'{layer}.ur')[...] += np.outer(da_r, h)
    params.grad_view(f'{layer}.br')[...] += da_r
    dx += params[f'{layer}.wr'].T @ da_r
    dh += params[f'{layer}.ur'].T @ da_r

    da_z = dz * z * (1.0 - z)
    params.grad_view(f'{layer}.wz')[...] += np.outer(da_z, x)
    params.grad_view(f'{layer}.uz')[...] += np.outer(da_z, h)
    params.grad_view(f'{layer}.bz')[...] += da_z
    dx += params[f'{layer}.wz'].T @ da_z
    dh += params[f'{layer}.uz'].T @ da_z
    return dx, dh


def forward(spec: NetworkSpec, params: ParamSet, state_vector: np.ndarray,
            hidden: Optional[HiddenState] = None) -> Tuple[np.ndarray, HiddenState, ForwardCache]:
    x = np.asarray(state_vector, dtype=float)
    if x.shape != (spec.input_dim,):
        raise ShapeError(f"Entrada com formato {x.shape}, esperado ({spec.input_dim},)")
    if params.spec != spec:
        raise ShapeError("Parâmetros não correspondem à especificação da rede")
    if hidden is None:
        hidden = HiddenState.zeros(spec)

    y1 = np.tanh(params['mlp1.w1'] @ x + params['mlp1.b1'])
    y2 = np.tanh(params['mlp1.w2'] @ y1 + params['mlp1.b2'])
    h1, c1 = _gru_forward(params, 'gru1', y2, hidden.h1)
    h2, c2 = _gru_forward(params, 'gru2', h1, hidden.h2)
    logits = params['mlp2.w'] @ h2 + params['mlp2.b']

    output = softmax(logits) if spec.head == ACTOR else logits.copy()
    cache = ForwardCache(
        x=x, hidden=hidden, y1=y1, y2=y2, gru={'gru1': c1, 'gru2': c2},
        logits=logits, output=output, version=params.version, head=spec.head
    )
    return output, HiddenState(h1=h1, h2=h2), cache


def backward(params: ParamSet, cache: ForwardCache, d_logits: np.ndarray,
             d_hidden: Optional[HiddenState] = None) -> Tuple[np.ndarray, HiddenState]:
    """Accumulate parameter gradients from d(loss)/d(logits).

    For the critic the logits are the scalar value. d_hidden is the gradient
    flowing back from the next period's hidden state. Returns the gradient
    with respect to the input and to the incoming hidden state.
    """
    if cache.version != params.version:
        raise ContractError("Cache obsoleto: os parâmetros mudaram desde o forward")
    d_logits = np.asarray(d_logits, dtype=float).reshape(cache.logits.shape)

    c2 = cache.gru['gru2']
    params.grad_view('mlp2.w')[...] += np.outer(d_logits, c2['out'])
    params.grad_view('mlp2.b')[...] += d_logits
    dh2 = params['mlp2.w'].T @ d_logits
    if d_hidden is not None:
        dh2 = dh2 + d_hidden.h2

    dh1, dh2_prev = _gru_backward(params, 'gru2', c2, dh2)
    if d_hidden is not None:
        dh1 = dh1 + d_hidden.h1
    dy2, dh1_prev = _gru_backward(params, 'gru1', cache.gru['gru1'], dh1)

    da2 = dy2 * (1.0 - cache.y2 ** 2)
    params.grad_view('mlp1.w2')[...] += np.outer(da2, cache.y1)
    params.grad_view('mlp1.b2')[...] += da2
    dy1 = params['mlp1.w2'].T @ da2
    da1 = dy1 * (1.0 - cache.y1 ** 2)
    params.grad_view('mlp1.w1')[...] += np.outer(da1, cache.x)
    params.grad_view('mlp1.b1')[...] += da1
    dx = params['mlp1.w1'].T @ da1
    return dx, HiddenState(h1=dh1_prev, h2=dh2_prev)


def forward_sequence(spec: NetworkSpec, params: ParamSet, inputs: np.ndarray,
                     hidden: Optional[HiddenState] = None) -> Tuple[np.ndarray, List[ForwardCache], HiddenState]:
    outputs = []
    caches = []
    for x in np.atleast_2d(np.asarray(inputs, dtype=float)):
        out, hidden, cache = forward(spec, params, x, hidden)
        outputs.append(out)
        caches.append(cache)
    return np.array(outputs), caches, hidden


def backward_sequence(params: ParamSet, caches: List[ForwardCache], d_logits: np.ndarray) -> HiddenState:
    """Backpropagation through time over one episode, last period first."""
    d_hidden = None
    for cache, d in zip(reversed(caches), reversed(list(d_logits))):
        _, d_hidden = backward(params, cache, d, d_hidden)
    return d_hidden
