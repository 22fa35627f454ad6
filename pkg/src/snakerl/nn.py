"""Function approximators for the value functions and the policy.

Fully connected networks with tanh hidden activations and a linear output,
trained by Adam on gradients from :mod:`snakerl.autograd`. Everything is
float64 and seeded, so two runs from the same seed produce bit-identical
parameters; checkpoints carry a checksum to make that checkable.

The policy is a diagonal Gaussian over pre-squash values: a bounded map
sends network outputs into the action box (biases in [0,1], direction in
[-1,1]) and dataset actions are pulled back through the inverse map before
density evaluation.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .errors import ContractError, DimensionError, DomainError, FormatError

LOG_STD_MIN = -5.0
LOG_STD_MAX = 2.0

# Per-dimension action box: four chamber biases then the wave direction.
ACTION_LOW = np.array([0.0, 0.0, 0.0, 0.0, -1.0])
ACTION_HIGH = np.array([1.0, 1.0, 1.0, 1.0, 1.0])
_SQUASH_EPS = 1e-6


class Mlp:
    """Fully connected tanh network with a linear output layer."""

    def __init__(self, layer_sizes, rng: np.random.Generator):
        if len(layer_sizes) < 2:
            raise ContractError("need at least input and output sizes")
        self.layer_sizes = list(layer_sizes)
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            self.weights.append(
                Tensor(rng.uniform(-bound, bound, (fan_in, fan_out)), requires_grad=True)
            )
            self.biases.append(
                Tensor(rng.uniform(-bound, bound, fan_out), requires_grad=True)
            )

    def params(self) -> list:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend([w, b])
        return out

    def forward(self, x) -> Tensor:
        """Graph-building forward pass; input (batch, in_dim)."""
        h = ag.as_tensor(x)
        if h.data.ndim != 2 or h.data.shape[1] != self.layer_sizes[0]:
            raise DimensionError(
                f"input shape {h.data.shape} does not match in_dim "
                f"{self.layer_sizes[0]}"
            )
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = ag.matmul(h, w) + b
            if i != last:
                h = ag.tanh(h)
        return h

    def forward_numpy(self, x: np.ndarray) -> np.ndarray:
        """Graph-free forward pass for targets and rollouts."""
        h = np.asarray(x, dtype=float)
        if h.ndim != 2 or h.shape[1] != self.layer_sizes[0]:
            raise DimensionError(
                f"input shape {h.shape} does not match in_dim {self.layer_sizes[0]}"
            )
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w.data + b.data
            if i != last:
                h = np.tanh(h)
        return h

    def copy_from(self, other: "Mlp") -> None:
        for dst, src in zip(self.params(), other.params()):
            dst.data = src.data.copy()

    def soft_update_from(self, other: "Mlp", mix: float) -> None:
        for dst, src in zip(self.params(), other.params()):
            dst.data = (1.0 - mix) * dst.data + mix * src.data


@dataclass
class AdamState:
    """Moment estimates and step counter for one parameter list."""

    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def adam_init(params, lr: float, beta1=0.9, beta2=0.999, eps=1e-8) -> AdamState:
    shapes = [p.data.shape if isinstance(p, Tensor) else np.shape(p) for p in params]
    return AdamState(
        lr=lr,
        beta1=beta1,
        beta2=beta2,
        eps=eps,
        m=[np.zeros(s) for s in shapes],
        v=[np.zeros(s) for s in shapes],
    )


def adam_step(state: AdamState, params: list, grads: list) -> list:
    """Bias-corrected Adam update; returns the new parameter arrays.

    ``params`` entries may be Tensors (updated in place) or plain arrays.
    """
    if len(params) != len(grads) or len(params) != len(state.m):
        raise DimensionError("params, grads, and state must align")
    state.step_count += 1
    t = state.step_count
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t
    out = []
    for i, (p, g) in enumerate(zip(params, grads)):
        data = p.data if isinstance(p, Tensor) else np.asarray(p, dtype=float)
        g = np.asarray(g, dtype=float)
        if g.shape != data.shape:
            raise DimensionError(f"gradient shape {g.shape} != param {data.shape}")
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g
        m_hat = state.m[i] / c1
        v_hat = state.v[i] / c2
        new = data - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
        if isinstance(p, Tensor):
            p.data = new
        out.append(new)
    return out


def expectile_loss(residual, tau: float):
    """Asymmetric squared loss |tau - 1[u<0]| * u^2, elementwise.

    Accepts a plain array (returns an array) or a Tensor (returns a graph
    node; the asymmetry weight is piecewise constant so it enters the graph
    as a constant factor, which gives the correct gradient almost
    everywhere).
    """
    if not 0.0 < tau < 1.0:
        raise DomainError(f"tau must be in (0,1), got {tau}")
    if isinstance(residual, Tensor):
        weight = np.abs(tau - (residual.data < 0.0))
        return ag.mul(ag.power(residual, 2.0), weight)
    u = np.asarray(residual, dtype=float)
    return np.abs(tau - (u < 0.0)) * u * u


def squash_action(z: np.ndarray) -> np.ndarray:
    """Map pre-squash values into the action box, last axis = 5."""
    z = np.asarray(z, dtype=float)
    return ACTION_LOW + 0.5 * (ACTION_HIGH - ACTION_LOW) * (np.tanh(z) + 1.0)


def unsquash_action(a: np.ndarray) -> np.ndarray:
    """Inverse of :func:`squash_action`, clipped to the open interval."""
    a = np.asarray(a, dtype=float)
    unit = (a - ACTION_LOW) / (ACTION_HIGH - ACTION_LOW)
    unit = np.clip(unit, _SQUASH_EPS, 1.0 - _SQUASH_EPS)
    return np.arctanh(2.0 * unit - 1.0)


def squash_graph(z: Tensor) -> Tensor:
    """In-graph version of :func:`squash_action`."""
    half_range = 0.5 * (ACTION_HIGH - ACTION_LOW)
    return ag.add(ag.mul(ag.add(ag.tanh(z), 1.0), half_range), ACTION_LOW)


class GaussianPolicyHead:
    """Diagonal Gaussian over pre-squash actions.

    The mean comes from an Mlp; the log standard deviations are free
    parameters clamped to [-5, 2]. Deterministic evaluation acts with the
    squashed mean.
    """

    def __init__(self, obs_dim: int, act_dim: int, hidden, rng: np.random.Generator):
        self.act_dim = act_dim
        self.mean_net = Mlp([obs_dim, *hidden, act_dim], rng)
        self.log_std = Tensor(np.zeros(act_dim), requires_grad=True)

    def params(self) -> list:
        return self.mean_net.params() + [self.log_std]

    def log_prob(self, obs: np.ndarray, z_actions: np.ndarray) -> Tensor:
        """Per-sample log density of pre-squash actions; returns (batch,)."""
        z_actions = np.asarray(z_actions, dtype=float)
        if z_actions.ndim != 2 or z_actions.shape[1] != self.act_dim:
            raise DimensionError(
                f"actions shape {z_actions.shape} does not match ({self.act_dim},)"
            )
        mean = self.mean_net.forward(obs)
        log_std = ag.clip(self.log_std, LOG_STD_MIN, LOG_STD_MAX)
        inv_var = ag.exp(ag.mul(log_std, -2.0))
        diff = ag.sub(Tensor(z_actions), mean)
        quad = ag.tsum(ag.mul(ag.power(diff, 2.0), inv_var), axis=1)
        const = self.act_dim * np.log(2.0 * np.pi)
        return ag.mul(
            ag.add(ag.add(quad, ag.mul(ag.tsum(log_std), 2.0)), const), -0.5
        )

    def log_prob_numpy(self, obs: np.ndarray, z_actions: np.ndarray) -> np.ndarray:
        mean = self.mean_net.forward_numpy(obs)
        log_std = np.clip(self.log_std.data, LOG_STD_MIN, LOG_STD_MAX)
        diff = z_actions - mean
        quad = np.sum(diff**2 * np.exp(-2.0 * log_std), axis=1)
        return -0.5 * (quad + 2.0 * np.sum(log_std) + self.act_dim * np.log(2.0 * np.pi))

    def std(self) -> np.ndarray:
        return np.exp(np.clip(self.log_std.data, LOG_STD_MIN, LOG_STD_MAX))

    def act(self, obs: np.ndarray) -> np.ndarray:
        """Deterministic squashed-mean action(s) in the raw action box."""
        obs = np.asarray(obs, dtype=float)
        single = obs.ndim == 1
        z = self.mean_net.forward_numpy(obs[None, :] if single else obs)
        a = squash_action(z)
        return a[0] if single else a


class FlatParams:
    """Views a list of parameter tensors as one contiguous vector.

    After construction every tensor's ``data`` is a reshaped view into
    ``theta``, so vectorized in-place updates on ``theta`` are immediately
    visible to forward passes. Do not rebind ``data`` on managed tensors.
    """

    def __init__(self, tensors):
        self.tensors = list(tensors)
        sizes = [t.data.size for t in self.tensors]
        bounds = np.cumsum([0] + sizes)
        self.theta = np.concatenate([t.data.ravel() for t in self.tensors])
        self._slices = []
        for t, a, b in zip(self.tensors, bounds[:-1], bounds[1:]):
            view = self.theta[a:b].reshape(t.data.shape)
            t.data = view
            self._slices.append((slice(int(a), int(b)), t.data.shape))

    def gather(self, grads) -> np.ndarray:
        return np.concatenate([np.asarray(g).ravel() for g in grads])

    def load(self, theta: np.ndarray) -> None:
        self.theta[:] = theta


class FlatAdam:
    """Adam over a FlatParams group; one vectorized update per step.

    Same arithmetic as :func:`adam_step`, just applied to the concatenated
    parameter vector.
    """

    def __init__(self, flat: FlatParams, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.flat = flat
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = np.zeros_like(flat.theta)
        self.v = np.zeros_like(flat.theta)

    def step(self, grads) -> None:
        g = self.flat.gather(grads)
        self.step_count += 1
        self.m *= self.beta1
        self.m += (1.0 - self.beta1) * g
        self.v *= self.beta2
        self.v += (1.0 - self.beta2) * g * g
        m_hat = self.m / (1.0 - self.beta1**self.step_count)
        v_hat = self.v / (1.0 - self.beta2**self.step_count)
        self.flat.theta -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


class FlatSoftTarget:
    """Polyak-averaged copy of a live FlatParams group."""

    def __init__(self, live: FlatParams, target_tensors):
        self.live = live
        self.flat = FlatParams(target_tensors)
        self.flat.load(live.theta)

    def update(self, mix: float) -> None:
        self.flat.theta *= 1.0 - mix
        self.flat.theta += mix * self.live.theta


# -- checkpoint container ----------------------------------------------------

_MAGIC = b"SNKC"
_VERSION = 1


def _payload_bytes(arrays: dict) -> bytes:
    return b"".join(
        np.ascontiguousarray(v, dtype="<f8").tobytes() for v in arrays.values()
    )


def params_checksum(arrays) -> str:
    """Hex digest over little-endian float64 bytes of the given arrays."""
    if isinstance(arrays, dict):
        items = arrays.values()
    else:
        items = arrays
    h = hashlib.sha256()
    for v in items:
        data = v.data if isinstance(v, Tensor) else v
        h.update(np.ascontiguousarray(data, dtype="<f8").tobytes())
    return h.hexdigest()


def save_checkpoint(path, arrays: dict, meta: dict | None = None) -> None:
    """Write named parameter arrays plus metadata to a versioned binary file."""
    arrays = {k: np.asarray(v.data if isinstance(v, Tensor) else v) for k, v in arrays.items()}
    payload = _payload_bytes(arrays)
    header = {
        "version": _VERSION,
        "meta": meta or {},
        "arrays": [{"name": k, "shape": list(v.shape)} for k, v in arrays.items()],
        "checksum": hashlib.sha256(payload).hexdigest(),
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(np.uint32(_VERSION).tobytes())
        fh.write(np.uint64(len(blob)).tobytes())
        fh.write(blob)
        fh.write(payload)


def load_checkpoint(path):
    """Read a checkpoint; returns (arrays dict, meta dict).

    Raises FormatError on bad magic, version mismatch, truncation, or
    checksum failure.
    """
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 16 or raw[:4] != _MAGIC:
        raise FormatError(f"{path}: not a checkpoint file")
    version = int(np.frombuffer(raw[4:8], dtype="<u4")[0])
    if version != _VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    hlen = int(np.frombuffer(raw[8:16], dtype="<u8")[0])
    if len(raw) < 16 + hlen:
        raise FormatError(f"{path}: truncated header")
    try:
        header = json.loads(raw[16 : 16 + hlen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: corrupt header") from exc
    payload = raw[16 + hlen :]
    expected = sum(
        int(np.prod(spec["shape"])) if spec["shape"] else 1
        for spec in header["arrays"]
    )
    if len(payload) != expected * 8:
        raise FormatError(f"{path}: truncated payload")
    if hashlib.sha256(payload).hexdigest() != header["checksum"]:
        raise FormatError(f"{path}: checksum mismatch")
    arrays = {}
    offset = 0
    for spec in header["arrays"]:
        count = int(np.prod(spec["shape"])) if spec["shape"] else 1
        flat = np.frombuffer(payload, dtype="<f8", count=count, offset=offset * 8)
        arrays[spec["name"]] = flat.reshape(spec["shape"]).astype(float)
        offset += count
    return arrays, header.get("meta", {})
