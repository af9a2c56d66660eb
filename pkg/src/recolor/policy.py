"""Per-pixel advantage actor-critic over the coloring environment.

Every pixel is an agent; all agents share one convolutional network whose
policy head emits 2 logits (keep bit 0 / set bit 1) and whose value head
estimates the pixel's discounted return.  Training is synchronous: each
update collects whole episodes with the sampled policy, computes Monte-Carlo
returns, and applies one momentum-SGD step on the summed policy and value
losses.  The advantage is treated as a constant in the policy term, so the
gradient of the reported objective is exactly what backprop returns (and what
the finite-difference check differentiates).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .coloring import ColorState, apply_action, as_image, decode_instances, remove_small_segments
from .env import Episode, EnvConfig, reset
from .net import Net, NetSpec, log_softmax_pair, save_checkpoint, softmax_pair

DEFAULT_MIN_SEGMENT_AREA = 4


@dataclass(frozen=True)
class OptimConfig:
    """Momentum SGD settings; all values are deliberate, logged defaults.

    The defaults are calibrated for the per-pixel mean loss used here: with
    losses averaged over steps*H*W, gradients are small, so the step size is
    large and the entropy bonus is strong enough that exploration survives
    until the shared trunk has learned foreground/background features.
    Dropping either by an order of magnitude makes training collapse into
    the color-nothing local optimum.
    """

    learning_rate: float = 3e-2
    momentum: float = 0.9
    grad_clip: float = 5.0
    entropy_beta: float = 0.15

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        if self.grad_clip <= 0 or self.entropy_beta < 0:
            raise ValueError("grad_clip must be > 0 and entropy_beta >= 0")

    def to_dict(self) -> dict:
        return {"learning_rate": self.learning_rate, "momentum": self.momentum,
                "grad_clip": self.grad_clip, "entropy_beta": self.entropy_beta}

    @classmethod
    def from_dict(cls, doc: dict) -> "OptimConfig":
        unknown = set(doc) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown optimizer keys: {sorted(unknown)}")
        return cls(**doc)


@dataclass
class PolicyParams:
    """Flat parameter vector plus the architecture needed to interpret it."""

    vector: np.ndarray
    spec: NetSpec
    seed: int
    steps_trained: int = 0

    def __post_init__(self):
        if self.vector.shape != (Net(self.spec).n_params,):
            raise ValueError(
                "parameter vector length does not match the architecture")
        if not np.isfinite(self.vector).all():
            raise ValueError("parameters must be finite")


@dataclass
class Trajectory:
    """One complete episode as seen by the learner."""

    observations: list = field(default_factory=list)  # pre-action, (H, W, C)
    actions: list = field(default_factory=list)       # (H, W) uint8
    log_probs: list = field(default_factory=list)     # log pi(a), (H, W)
    values: list = field(default_factory=list)        # (H, W)
    rewards: list = field(default_factory=list)       # RewardMap

    def __len__(self):
        return len(self.rewards)


@dataclass(frozen=True)
class ReturnsMap:
    returns: np.ndarray     # (T, H, W)
    advantages: np.ndarray  # (T, H, W)


def new_policy(spec: NetSpec, seed: int = 0) -> PolicyParams:
    return PolicyParams(Net(spec).init_params(seed), spec, seed)


def default_spec(env_cfg: EnvConfig, image_channels: int = 1) -> NetSpec:
    return NetSpec(in_channels=image_channels + env_cfg.steps)


def forward(policy: PolicyParams, obs) -> tuple[np.ndarray, np.ndarray]:
    """Single-observation convenience wrapper: (H, W, 2) probs, (H, W) values."""
    obs = np.asarray(obs, dtype=np.float64)
    logits, values = Net(policy.spec).forward(policy.vector, obs[None])
    return softmax_pair(logits[0]), values[0]


def sample_action(probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    return (rng.random(probs.shape[:2]) < probs[:, :, 1]).astype(np.uint8)


def greedy_action(probs: np.ndarray) -> np.ndarray:
    # strict >: an exactly undecided pixel keeps its bit at 0
    return (probs[:, :, 1] > 0.5).astype(np.uint8)


def rollout(policy: PolicyParams, ep: Episode, rng=None,
            mode: str = "sample") -> Trajectory:
    """Play one episode to completion and record everything the loss needs."""
    if mode not in ("sample", "greedy"):
        raise ValueError(f"mode must be 'sample' or 'greedy', got {mode!r}")
    if mode == "sample" and rng is None:
        raise ValueError("sampling mode needs an rng")
    net = Net(policy.spec)
    traj = Trajectory()
    while not ep.done:
        obs = ep.observation()
        logits, values = net.forward(policy.vector, obs[None])
        probs = softmax_pair(logits[0])
        logp = log_softmax_pair(logits[0])
        action = (sample_action(probs, rng) if mode == "sample"
                  else greedy_action(probs))
        _, rmap, _ = ep.step(action)
        traj.observations.append(obs)
        traj.actions.append(action)
        traj.log_probs.append(
            np.take_along_axis(logp, action[:, :, None].astype(np.int64),
                               axis=2)[:, :, 0])
        traj.values.append(values[0])
        traj.rewards.append(rmap)
    return traj


def compute_returns(traj: Trajectory, gamma: float) -> ReturnsMap:
    """Within-episode discounted returns and advantages (return - value)."""
    if len(traj) == 0 or len(traj.observations) != len(traj):
        raise ValueError("trajectory is incomplete")
    totals = np.stack([r.total for r in traj.rewards])
    returns = np.empty_like(totals)
    acc = np.zeros_like(totals[0])
    for t in range(len(traj) - 1, -1, -1):
        acc = totals[t] + gamma * acc
        returns[t] = acc
    values = np.stack(traj.values)
    return ReturnsMap(returns, returns - values)


def policy_objective(vector, spec: NetSpec, traj: Trajectory, gamma: float,
                     entropy_beta: float, advantages: np.ndarray) -> float:
    """The scalar objective whose gradient losses_and_gradients returns.

    ``advantages`` enters as a constant, which is what makes this a valid
    target for finite differences.
    """
    net = Net(spec)
    obs = np.stack(traj.observations)
    logits, values = net.forward(vector, obs)
    logp = log_softmax_pair(logits)
    probs = softmax_pair(logits)
    actions = np.stack(traj.actions).astype(np.int64)
    taken = np.take_along_axis(logp, actions[..., None], axis=3)[..., 0]
    entropy = -(probs * logp).sum(axis=3)
    returns = compute_returns(traj, gamma).returns
    loss_policy = (-taken * advantages - entropy_beta * entropy).mean()
    loss_value = ((returns - values) ** 2).mean()
    return float(loss_policy + loss_value)


def losses_and_gradients(vector, spec: NetSpec, traj: Trajectory, gamma: float,
                         entropy_beta: float = 0.0):
    """Mean losses over all steps and pixels, plus the flat analytic gradient."""
    net = Net(spec)
    obs = np.stack(traj.observations)
    logits, values, cache = net.forward(vector, obs, want_cache=True, check=True)
    logp = log_softmax_pair(logits)
    probs = softmax_pair(logits)
    actions = np.stack(traj.actions).astype(np.int64)
    taken = np.take_along_axis(logp, actions[..., None], axis=3)[..., 0]
    entropy = -(probs * logp).sum(axis=3)

    rmaps = compute_returns(traj, gamma)
    returns = rmaps.returns
    adv = returns - values  # constant w.r.t. parameters from here on
    n = returns.size

    loss_pg = float((-taken * adv).mean())
    loss_entropy = float(-entropy_beta * entropy.mean())
    loss_value = float(((returns - values) ** 2).mean())
    losses = {
        "policy": loss_pg + loss_entropy,
        "value": loss_value,
        "entropy": float(entropy.mean()),
        "total": loss_pg + loss_entropy + loss_value,
    }

    onehot = np.zeros_like(probs)
    np.put_along_axis(onehot, actions[..., None], 1.0, axis=3)
    dlogits = ((probs - onehot) * adv[..., None]
               + entropy_beta * probs * (logp + entropy[..., None])) / n
    dvalues = 2.0 * (values - returns) / n
    grad = net.backward(vector, cache, dlogits, dvalues)
    if not np.isfinite(grad).all():
        raise FloatingPointError("non-finite gradient")
    return losses, grad


def _episode_component_means(traj: Trajectory) -> dict:
    def mean_of(name):
        return float(np.mean([getattr(r, name).mean() for r in traj.rewards]))
    return {
        "mean_reward": float(np.mean([r.mean for r in traj.rewards])),
        "reward_bf": mean_of("bf"),
        "reward_split": mean_of("split"),
        "reward_merge": mean_of("merge"),
    }


def train(dataset, env_cfg: EnvConfig, spec: NetSpec | None = None,
          optim: OptimConfig = OptimConfig(), updates: int = 100,
          workers: int = 1, seed: int = 0, eval_every: int = 0,
          eval_fn=None, stop_when=None, divergence_checkpoint=None):
    """Synchronous actor-critic training over a dataset of labeled images.

    Each update runs ``workers`` episodes sequentially (images drawn with
    replacement), averages their gradients, and applies one clipped
    momentum-SGD step.  Returns the trained policy and a list of per-update
    log entries.  Fixed seed and workers=1 give bit-identical runs.
    """
    if not dataset:
        raise ValueError("dataset must contain at least one image")
    if updates < 0 or workers < 1:
        raise ValueError("updates must be >= 0 and workers >= 1")
    if spec is None:
        spec = default_spec(env_cfg, dataset[0].image.shape[2])
    policy = new_policy(spec, seed)
    velocity = np.zeros_like(policy.vector)
    rng = np.random.default_rng(seed)
    log: list[dict] = []

    for update in range(updates):
        grad_sum = np.zeros_like(policy.vector)
        stats_sum: dict[str, float] = {}
        for _ in range(workers):
            pair = dataset[int(rng.integers(0, len(dataset)))]
            ep, _ = reset(pair.image, pair.labels, env_cfg)
            traj = rollout(policy, ep, rng, mode="sample")
            try:
                losses, grad = losses_and_gradients(
                    policy.vector, spec, traj, env_cfg.gamma,
                    optim.entropy_beta)
            except FloatingPointError as err:
                if divergence_checkpoint is not None:
                    save_checkpoint(divergence_checkpoint, policy.vector,
                                    spec, seed, update)
                raise RuntimeError(f"training diverged at update {update}: "
                                   f"{err}") from err
            grad_sum += grad
            for key, val in {**losses, **_episode_component_means(traj)}.items():
                stats_sum[key] = stats_sum.get(key, 0.0) + val
        grad = grad_sum / workers
        grad_norm = float(np.linalg.norm(grad))
        if grad_norm > optim.grad_clip:
            grad = grad * (optim.grad_clip / grad_norm)
        velocity = optim.momentum * velocity - optim.learning_rate * grad
        policy.vector = policy.vector + velocity
        policy.steps_trained = update + 1

        entry = {"update": update,
                 "grad_norm": grad_norm,
                 "loss_policy": stats_sum["policy"] / workers,
                 "loss_value": stats_sum["value"] / workers,
                 "entropy": stats_sum["entropy"] / workers,
                 "mean_reward": stats_sum["mean_reward"] / workers,
                 "reward_bf": stats_sum["reward_bf"] / workers,
                 "reward_split": stats_sum["reward_split"] / workers,
                 "reward_merge": stats_sum["reward_merge"] / workers}
        if eval_every and eval_fn is not None and (update + 1) % eval_every == 0:
            entry.update(eval_fn(policy))
        log.append(entry)
        if stop_when is not None and stop_when(entry):
            break
    return policy, log


def infer(policy: PolicyParams, image, env_cfg: EnvConfig,
          mode: str = "greedy", rng=None,
          min_area: int = DEFAULT_MIN_SEGMENT_AREA):
    """Roll the policy on a bare image and decode the final coloring.

    Returns (label map, bit planes).  No ground truth is consulted; the
    observation is just the image plus the evolving planes.
    """
    if mode not in ("sample", "greedy"):
        raise ValueError(f"mode must be 'sample' or 'greedy', got {mode!r}")
    image = as_image(image)
    net = Net(policy.spec)
    state = ColorState.initial(image.shape[0], image.shape[1], env_cfg.steps)
    while not state.finished:
        obs = np.concatenate([image, state.planes.astype(np.float64)], axis=2)
        logits, _ = net.forward(policy.vector, obs[None])
        probs = softmax_pair(logits[0])
        action = (greedy_action(probs) if mode == "greedy"
                  else sample_action(probs, rng))
        state = apply_action(state, action)
    labels = decode_instances(state, env_cfg.connectivity)
    labels = remove_small_segments(labels, min_area)
    return labels, state.planes
