"""Deep Q-learning: replay memory, schedules, updates and the training loop.

Every update is written against :mod:`aptdrl.network`; there is no autograd.
The loop interleaves one environment step, one replay append, one
``train_step`` (``gradient_steps`` minibatch updates) and one soft target
update, evaluating the greedy policy every ``eval_interval`` steps.
"""
from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .env import AttributionEnv
from .errors import BufferTooSmall, CheckpointError, ShapeMismatch
from .metrics import EvalLog, evaluate_policy
from .network import (
    Adam,
    NetworkConfig,
    QNetworkParams,
    backward,
    check_compatible,
    forward,
    forward_cached,
    global_norm,
    init_params,
    sgd_update,
)


OPTIMIZERS = ("sgd", "adam")


@dataclass(frozen=True)
class Hyperparams:
    gamma: float = 0.99
    tau: float = 0.005
    batch_size: int = 256
    gradient_steps: int = 3
    exploration_fraction: float = 0.1
    exploration_initial_eps: float = 1.0
    exploration_final_eps: float = 0.02
    learning_rate: float = 1e-3
    lr_decay: float = 0.99
    lr_decay_steps: int = 1000
    total_timesteps: int = 20_000
    eval_interval: int = 500
    learning_starts: int | None = None  # None means batch_size
    buffer_size: int = 100_000
    max_grad_norm: float | None = None
    target_update_interval: int | None = None  # hard copy every N steps instead of soft updates
    # episodes end on a time limit, not an absorbing state: bootstrap through the
    # boundary from the next episode's first observation
    bootstrap_episode_end: bool = True
    optimizer: str = "adam"  # or "sgd": plain gradient descent
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must be in [0, 1]")
        if not 0.0 < self.tau <= 1.0:
            raise ValueError("tau must be in (0, 1]")
        if not 0.1 <= self.exploration_initial_eps <= 1.0:
            raise ValueError("initial epsilon must be in [0.1, 1]")
        if not 0.0 <= self.exploration_final_eps <= 1.0:
            raise ValueError("final epsilon must be in [0, 1]")
        if self.batch_size < 1 or self.gradient_steps < 0 or self.buffer_size < 1:
            raise ValueError("batch_size and buffer_size must be >= 1, gradient_steps >= 0")
        if self.total_timesteps < 0 or self.eval_interval < 1:
            raise ValueError("total_timesteps must be >= 0 and eval_interval >= 1")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {OPTIMIZERS}")

    @property
    def warmup(self) -> int:
        return self.batch_size if self.learning_starts is None else self.learning_starts


def epsilon_at(step: int, hp: Hyperparams) -> float:
    """Linear decay from the initial epsilon to the final one over the exploration fraction."""
    horizon = hp.exploration_fraction * hp.total_timesteps
    if step >= horizon:
        return hp.exploration_final_eps
    start, end = hp.exploration_initial_eps, hp.exploration_final_eps
    return start - (start - end) * (step / horizon)


def lr_at(step: int, hp: Hyperparams) -> float:
    return hp.learning_rate * hp.lr_decay ** (step / hp.lr_decay_steps)


class Transition(NamedTuple):
    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray
    terminal: bool


class Batch(NamedTuple):
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    terminals: np.ndarray


class ReplayBuffer:
    """Bounded FIFO of transitions held in parallel ring arrays."""

    def __init__(self, capacity: int, state_dim: int, dtype=np.float64):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = int(capacity)
        self.state_dim = int(state_dim)
        self.dtype = np.dtype(dtype)
        self.inserted = 0
        self._alloc = 0
        self._states = np.empty((0, state_dim), self.dtype)
        self._next = np.empty((0, state_dim), self.dtype)
        self._actions = np.empty(0, np.int64)
        self._rewards = np.empty(0, np.float64)
        self._terminals = np.empty(0, bool)

    def __len__(self) -> int:
        return min(self.inserted, self.capacity)

    def _grow(self) -> None:
        new = min(self.capacity, max(1024, 2 * self._alloc))

        def grow(a, shape):
            b = np.empty(shape, a.dtype)
            b[: len(a)] = a
            return b

        self._states = grow(self._states, (new, self.state_dim))
        self._next = grow(self._next, (new, self.state_dim))
        self._actions = grow(self._actions, (new,))
        self._rewards = grow(self._rewards, (new,))
        self._terminals = grow(self._terminals, (new,))
        self._alloc = new

    def add(self, state, action: int, reward: float, next_state, terminal: bool) -> None:
        state = np.asarray(state)
        next_state = np.asarray(next_state)
        if state.shape != (self.state_dim,) or next_state.shape != (self.state_dim,):
            raise ShapeMismatch(f"transition states must have shape ({self.state_dim},)")
        slot = self.inserted % self.capacity
        if slot >= self._alloc:
            self._grow()
        self._states[slot] = state
        self._next[slot] = next_state
        self._actions[slot] = action
        self._rewards[slot] = reward
        self._terminals[slot] = terminal
        self.inserted += 1

    def transitions(self) -> list[Transition]:
        """Contents oldest-first."""
        n = len(self)
        start = self.inserted % self.capacity if self.inserted > self.capacity else 0
        order = [(start + i) % self.capacity for i in range(n)]
        return [
            Transition(self._states[i].copy(), int(self._actions[i]), float(self._rewards[i]), self._next[i].copy(), bool(self._terminals[i]))
            for i in order
        ]

    def sample(self, batch_size: int, rng: np.random.Generator) -> Batch:
        n = len(self)
        if n < batch_size:
            raise BufferTooSmall(f"buffer holds {n} transitions, batch needs {batch_size}")
        idx = rng.choice(n, size=batch_size, replace=False)
        return Batch(self._states[idx], self._actions[idx], self._rewards[idx], self._next[idx], self._terminals[idx])


def batch_from_transitions(transitions: list[Transition]) -> Batch:
    return Batch(
        np.array([t.state for t in transitions], dtype=np.float64),
        np.array([t.action for t in transitions], dtype=np.int64),
        np.array([t.reward for t in transitions], dtype=np.float64),
        np.array([t.next_state for t in transitions], dtype=np.float64),
        np.array([t.terminal for t in transitions], dtype=bool),
    )


def select_action(params: QNetworkParams, config: NetworkConfig, state, epsilon: float, rng: np.random.Generator) -> int:
    # one uniform draw per call regardless of epsilon keeps RNG streams aligned
    if rng.random() < epsilon:
        return int(rng.integers(config.output_dim))
    q = forward(params, config, state)[0]
    return int(np.argmax(q))


def _unique_rows(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Distinct rows of ``X`` and the inverse index with ``U[inv] == X``."""
    X = np.ascontiguousarray(X)
    keys = X.view(np.dtype((np.void, X.dtype.itemsize * X.shape[1]))).ravel()
    _, first, inv = np.unique(keys, return_index=True, return_inverse=True)
    return X[first], inv.reshape(-1)


def td_targets(batch: Batch, target: QNetworkParams, config: NetworkConfig, gamma: float) -> np.ndarray:
    """``r + gamma * max_a Q_target(s', a)``, bootstrap dropped on terminal transitions."""
    if len(batch.rewards) == 0:
        raise ValueError("empty batch")
    rewards = np.asarray(batch.rewards, dtype=np.float64)
    if gamma == 0.0:
        return rewards.copy()
    # replay draws from a finite split repeat states; evaluate each distinct one once
    unique, inv = _unique_rows(np.asarray(batch.next_states, dtype=config.np_dtype))
    next_q = forward(target, config, unique).max(axis=1).astype(np.float64)[inv]
    live = ~np.asarray(batch.terminals, dtype=bool)
    return rewards + gamma * next_q * live


def td_loss_and_grads(policy: QNetworkParams, target: QNetworkParams, config: NetworkConfig, batch: Batch, gamma: float, rng=None, targets=None):
    """Mean squared TD error over the batch and its gradient w.r.t. the policy parameters.

    ``targets`` may carry precomputed :func:`td_targets` for the batch.
    Without dropout, repeated states share one forward pass and their output
    gradients are summed, which leaves the gradient unchanged.
    """
    y = td_targets(batch, target, config, gamma) if targets is None else targets
    states = np.asarray(batch.states, dtype=config.np_dtype)
    if config.dropout_rate > 0:
        unique, inv = states, np.arange(len(states))
    else:
        unique, inv = _unique_rows(states)
    cache = forward_cached(policy, config, unique, training=True, rng=rng)
    actions = np.asarray(batch.actions, dtype=np.int64)
    q_sa = cache.out[inv, actions].astype(np.float64)
    diff = q_sa - y
    loss = float(np.mean(diff * diff))
    grad_out = np.zeros_like(cache.out)
    np.add.at(grad_out, (inv, actions), 2.0 * diff / len(y))
    return loss, backward(policy, config, cache, grad_out)


def train_step(
    policy: QNetworkParams,
    target: QNetworkParams,
    buffer: ReplayBuffer,
    config: NetworkConfig,
    hp: Hyperparams,
    step: int,
    rng: np.random.Generator,
    optimizer: Adam | None = None,
) -> tuple[QNetworkParams, float]:
    """Run ``hp.gradient_steps`` minibatch descent updates on ``policy`` in place.

    Plain gradient descent unless an ``optimizer`` state is passed. Returns
    the policy and the mean loss across the updates.
    """
    if len(buffer) < hp.batch_size:
        raise BufferTooSmall(f"buffer holds {len(buffer)} transitions, batch needs {hp.batch_size}")
    if hp.gradient_steps == 0:
        return policy, 0.0
    lr = lr_at(step, hp)
    batches = [buffer.sample(hp.batch_size, rng) for _ in range(hp.gradient_steps)]
    # the target network is frozen for the whole call: one forward pass serves every minibatch
    merged = Batch(*(np.concatenate(parts) for parts in zip(*batches)))
    targets = td_targets(merged, target, config, hp.gamma).reshape(hp.gradient_steps, hp.batch_size)
    losses = []
    for batch, y in zip(batches, targets):
        loss, grads = td_loss_and_grads(policy, target, config, batch, hp.gamma, rng, targets=y)
        if hp.max_grad_norm is not None:
            norm = global_norm(grads)
            if norm > hp.max_grad_norm:
                for g in grads.tensors():
                    g *= hp.max_grad_norm / norm
        if optimizer is None:
            sgd_update(policy, grads, lr)
        else:
            optimizer.update(policy, grads, lr)
        losses.append(loss)
    return policy, float(np.mean(losses))


def soft_update(target: QNetworkParams, policy: QNetworkParams, tau: float) -> QNetworkParams:
    """In place ``target <- tau * policy + (1 - tau) * target``."""
    t_tensors, p_tensors = target.tensors(), policy.tensors()
    if [t.shape for t in t_tensors] != [p.shape for p in p_tensors]:
        raise ShapeMismatch("target and policy parameter shapes differ")
    chunk = 1 << 15  # keeps each pass inside L2
    tmp = np.empty(chunk, dtype=t_tensors[0].dtype)
    for t, p in zip(t_tensors, p_tensors):
        t, p = t.reshape(-1), p.reshape(-1)
        for lo in range(0, t.size, chunk):
            hi = min(lo + chunk, t.size)
            buf = tmp[: hi - lo]
            np.multiply(p[lo:hi], tau, out=buf)
            t[lo:hi] *= 1.0 - tau
            t[lo:hi] += buf
    return target


def hard_update(target: QNetworkParams, policy: QNetworkParams) -> QNetworkParams:
    for t, p in zip(target.tensors(), policy.tensors()):
        t[...] = p
    return target


@dataclass(frozen=True)
class LogRow:
    step: int
    epsilon: float
    lr: float
    loss: float
    train_acc: float
    test_acc: float


@dataclass
class TrainResult:
    policy: QNetworkParams
    target: QNetworkParams
    eval_log: EvalLog
    history: list[LogRow] = field(default_factory=list)
    steps: int = 0
    initial: QNetworkParams | None = None


def _streams(seed: int):
    init_ss, act_ss, replay_ss = np.random.SeedSequence(seed).spawn(3)
    return (
        int(init_ss.generate_state(1, np.uint32)[0]),
        np.random.default_rng(act_ss),
        np.random.default_rng(replay_ss),
    )


def train(
    env: AttributionEnv,
    eval_env: AttributionEnv | None,
    hp: Hyperparams,
    config: NetworkConfig,
    policy: QNetworkParams | None = None,
    target: QNetworkParams | None = None,
    start_step: int = 0,
    progress=None,
) -> TrainResult:
    """Train a policy network on ``env``; evaluate greedily on both splits.

    ``policy``/``target``/``start_step`` resume an earlier run (the replay
    memory and any optimizer moments start empty). ``progress`` is an optional callback receiving each
    :class:`LogRow`.
    """
    k, d = env.spaces()
    if (config.output_dim, config.input_dim) != (k, d):
        raise ShapeMismatch(f"network is {config.input_dim}->{config.output_dim}, environment is {d}->{k}")
    if eval_env is not None and eval_env.spaces() != (k, d):
        raise ShapeMismatch("train and evaluation environments disagree on K or D")
    init_seed, act_rng, replay_rng = _streams(hp.seed + start_step)
    if policy is None:
        policy = init_params(config, init_seed)
    check_compatible(policy, config)
    target = policy.copy() if target is None else target
    check_compatible(target, config)
    initial = policy.copy()
    optimizer = Adam(policy) if hp.optimizer == "adam" else None
    buffer = ReplayBuffer(hp.buffer_size, d, config.np_dtype)
    log = EvalLog()
    history: list[LogRow] = []
    recent_losses: list[float] = []

    obs = env.reset() if hp.total_timesteps > start_step else None
    for step in range(start_step, hp.total_timesteps):
        eps = epsilon_at(step, hp)
        action = select_action(policy, config, obs, eps, act_rng)
        next_obs, reward, done = env.step(action)
        if done:
            following = env.reset()
            if hp.bootstrap_episode_end:
                buffer.add(obs, action, reward, following, False)
            else:
                buffer.add(obs, action, reward, next_obs, True)
        else:
            following = next_obs
            buffer.add(obs, action, reward, next_obs, False)
        if step + 1 >= hp.warmup and len(buffer) >= hp.batch_size and hp.gradient_steps > 0:
            _, loss = train_step(policy, target, buffer, config, hp, step, replay_rng, optimizer)
            recent_losses.append(loss)
        if hp.target_update_interval:
            if (step + 1) % hp.target_update_interval == 0:
                hard_update(target, policy)
        else:
            soft_update(target, policy, hp.tau)
        obs = following

        n = step + 1
        if n % hp.eval_interval == 0:
            train_acc, cm_train = evaluate_policy(policy, config, env.split)
            log.add(n, "train", cm_train)
            test_acc = float("nan")
            if eval_env is not None:
                test_acc, cm_test = evaluate_policy(policy, config, eval_env.split)
                log.add(n, "test", cm_test)
            loss = float(np.mean(recent_losses)) if recent_losses else float("nan")
            recent_losses = []
            row = LogRow(n, eps, lr_at(step, hp), loss, train_acc, test_acc)
            history.append(row)
            if progress is not None:
                progress(row)
    return TrainResult(policy, target, log, history, max(start_step, hp.total_timesteps), initial)


def write_history(history: list[LogRow], path: str | Path) -> None:
    lines = ["step,epsilon,lr,loss,train_acc,test_acc"]
    for r in history:
        lines.append(f"{r.step},{r.epsilon:.6f},{r.lr:.9g},{r.loss:.6f},{r.train_acc:.6f},{r.test_acc:.6f}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# checkpoint container: magic, u64 header length, JSON header, then '<f8' tensor data
_MAGIC = b"APTDQNCK\x01\n"


def save_checkpoint(path: str | Path, config: NetworkConfig, hp: Hyperparams, policy: QNetworkParams, target: QNetworkParams, step: int, extra: dict | None = None) -> None:
    tensors = []
    blobs = []
    offset = 0
    for prefix, params in (("policy", policy), ("target", target)):
        for i, (w, b) in enumerate(zip(params.weights, params.biases)):
            for kind, arr in (("W", w), ("b", b)):
                data = np.ascontiguousarray(arr, dtype="<f8").tobytes()
                tensors.append({"name": f"{prefix}.{i}.{kind}", "shape": list(arr.shape), "offset": offset, "nbytes": len(data)})
                blobs.append(data)
                offset += len(data)
    header = {
        "format": "aptdrl-checkpoint",
        "version": 1,
        "network": asdict(config),
        "hyperparams": asdict(hp),
        "step": int(step),
        "init": policy.init,
        "extra": extra or {},
        "tensors": tensors,
    }
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<Q", len(head)))
        fh.write(head)
        for blob in blobs:
            fh.write(blob)


@dataclass
class Checkpoint:
    config: NetworkConfig
    hp: Hyperparams
    policy: QNetworkParams
    target: QNetworkParams
    step: int
    extra: dict


def _dataclass_from(cls, raw: dict):
    names = {f.name for f in fields(cls)}
    unknown = set(raw) - names
    if unknown:
        raise CheckpointError(f"unknown {cls.__name__} fields in checkpoint: {sorted(unknown)}")
    return cls(**raw)


def load_checkpoint(path: str | Path) -> Checkpoint:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if not raw.startswith(_MAGIC) or len(raw) < len(_MAGIC) + 8:
        raise CheckpointError(f"{path}: not a checkpoint file")
    pos = len(_MAGIC)
    (hlen,) = struct.unpack("<Q", raw[pos:pos + 8])
    pos += 8
    try:
        header = json.loads(raw[pos:pos + hlen].decode("utf-8"))
        body = raw[pos + hlen:]
        net = dict(header["network"])
        net["hidden"] = tuple(net["hidden"])
        config = _dataclass_from(NetworkConfig, net)
        hp = _dataclass_from(Hyperparams, header["hyperparams"])
        found = {}
        for t in header["tensors"]:
            start, n = t["offset"], t["nbytes"]
            if start + n > len(body) or n != 8 * int(np.prod(t["shape"], dtype=np.int64)):
                raise CheckpointError(f"{path}: tensor {t['name']} is truncated")
            arr = np.frombuffer(body[start:start + n], dtype="<f8").reshape(t["shape"])
            found[t["name"]] = arr.astype(config.np_dtype)
        n_layers = len(config.widths) - 1
        params = {}
        for prefix in ("policy", "target"):
            params[prefix] = QNetworkParams(
                [found[f"{prefix}.{i}.W"] for i in range(n_layers)],
                [found[f"{prefix}.{i}.b"] for i in range(n_layers)],
                dict(header.get("init", {})),
            )
            check_compatible(params[prefix], config)
        if offset_end(header["tensors"]) != len(body):
            raise CheckpointError(f"{path}: trailing or missing tensor bytes")
    except CheckpointError:
        raise
    except (KeyError, TypeError, ValueError, UnicodeDecodeError, ShapeMismatch) as exc:
        raise CheckpointError(f"{path}: corrupted checkpoint ({exc})") from exc
    return Checkpoint(config, hp, params["policy"], params["target"], int(header["step"]), header.get("extra", {}))


def offset_end(tensors: list[dict]) -> int:
    return max((t["offset"] + t["nbytes"] for t in tensors), default=0)
