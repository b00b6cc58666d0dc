"""Clipped-surrogate policy optimization over recurrent rollouts.

Training alternates three phases: collect a batch of full episodes with the
stochastic policy, recompute empirical returns and advantages with a fresh
critic replay, then take several epochs of minibatch gradient steps on the
clipped surrogate (policy) and squared-error return regression (critic).
The clip range adapts toward a target KL divergence between consecutive
policies.

Minibatches are whole episodes, never shuffled transitions: the recurrent
hidden state must be replayed in order from the episode start. Episodes are
zero-padded to a common length and masked, which is exact because gradients
are linear in the upstream seed and padded steps get zero upstream.

All randomness is derived from named seed streams, so a rerun of the same
config is bit-identical and training can resume from a checkpoint without
replaying earlier batches.
"""

from __future__ import annotations

import dataclasses
import glob
import json
import os
import re
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .env import EpisodeConfig, HoverEnv, policy_net_inputs, value_net_inputs
from .errors import ConfigurationError, SimulationError

# Stream tags keep the per-episode, per-action, and per-update rng draws on
# disjoint seed sequences. Episode index occupies the third slot for
# environment streams, so tags must exceed any realistic batch size.
ACTION_STREAM = 7001
UPDATE_STREAM = 7002
INIT_STREAM = 4242


@dataclass
class PPOConfig:
    """Update hyperparameters.

    clip_eps is the initial clip range; training adapts it between batches
    to hold the measured KL near kl_target.
    """

    gamma: float = 0.99              # reward discount per 6 s control step
    clip_eps: float = 0.2
    kl_target: float = 1.0e-3
    epochs: int = 10
    episodes_per_batch: int = 30
    minibatch_episodes: int = 10
    entropy_coeff: float = 0.0
    policy_lr: float = 3.0e-4
    value_lr: float = 1.0e-3

    def validate(self) -> None:
        if not 0.0 < self.gamma <= 1.0:
            raise ConfigurationError("gamma must be in (0, 1]")
        if not 0.0 < self.clip_eps < 1.0:
            raise ConfigurationError("clip_eps must be in (0, 1)")
        if self.kl_target <= 0.0:
            raise ConfigurationError("kl_target must be positive")
        for name in ("epochs", "episodes_per_batch", "minibatch_episodes"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be at least 1")
        if self.policy_lr <= 0.0 or self.value_lr <= 0.0:
            raise ConfigurationError("learning rates must be positive")


@dataclass
class EpisodeRollout:
    """One episode's sequence data plus terminal diagnostics."""

    images: np.ndarray        # (T, 8, 8, 2) scaled policy image inputs
    vecs: np.ndarray          # (T, 7) scaled policy vector inputs
    value_inputs: np.ndarray  # (T, 13) critic inputs
    actions: np.ndarray       # (T, 12) on/off bits
    logits_old: np.ndarray    # (T, 12, 2) behavior-policy logits
    logp_old: np.ndarray      # (T,)
    rewards: np.ndarray       # (T,)
    terminal_pos_err: float   # m
    terminal_ok: bool
    violation: str | None
    fuel_used: float          # kg

    @property
    def length(self) -> int:
        return self.rewards.shape[0]

    @property
    def total_reward(self) -> float:
        return float(self.rewards.sum())


class RolloutBatch:
    """A batch of episodes with zero-padded time-major array views.

    Padded arrays are (T_max, B, ...) with mask[t, b] = 1 on real steps.
    Returns, values, and advantages are filled in by compute_advantages.
    """

    def __init__(self, episodes: list[EpisodeRollout]):
        if not episodes:
            raise ConfigurationError("batch needs at least one episode")
        self.episodes = episodes
        B = len(episodes)
        T = max(ep.length for ep in episodes)
        self.images = np.zeros((T, B, 8, 8, 2))
        self.vecs = np.zeros((T, B, 7))
        self.value_inputs = np.zeros((T, B, 13))
        self.actions = np.zeros((T, B, 12), dtype=np.int64)
        self.logits_old = np.zeros((T, B, 12, 2))
        self.logp_old = np.zeros((T, B))
        self.rewards = np.zeros((T, B))
        self.mask = np.zeros((T, B))
        for b, ep in enumerate(episodes):
            n = ep.length
            self.images[:n, b] = ep.images
            self.vecs[:n, b] = ep.vecs
            self.value_inputs[:n, b] = ep.value_inputs
            self.actions[:n, b] = ep.actions
            self.logits_old[:n, b] = ep.logits_old
            self.logp_old[:n, b] = ep.logp_old
            self.rewards[:n, b] = ep.rewards
            self.mask[:n, b] = 1.0
        self.returns = np.zeros((T, B))
        self.values = np.zeros((T, B))
        self.advantages = np.zeros((T, B))

    @property
    def num_episodes(self) -> int:
        return len(self.episodes)

    def episode_rewards(self) -> np.ndarray:
        return np.array([ep.total_reward for ep in self.episodes])

    def terminal_pos_errors(self) -> np.ndarray:
        return np.array([ep.terminal_pos_err for ep in self.episodes])


def discounted_returns(rewards: np.ndarray, gamma: float) -> np.ndarray:
    """Suffix sums: return_k = sum_{l>=k} gamma^(l-k) * r_l."""
    out = np.empty_like(np.asarray(rewards, dtype=float))
    acc = 0.0
    for k in range(len(out) - 1, -1, -1):
        acc = rewards[k] + gamma * acc
        out[k] = acc
    return out


def masked_mean(x: np.ndarray, mask: np.ndarray) -> float:
    return float((x * mask).sum() / mask.sum())


def rollout_episode(
    env: HoverEnv,
    policy: nn.PolicyNetwork,
    env_seed,
    action_rng: np.random.Generator,
) -> EpisodeRollout:
    """Run one episode to termination with the stochastic policy."""
    pobs, vobs = env.reset(seed=env_seed)
    hidden = policy.init_hidden(1)
    images, vecs, vf, actions, logits_all, logps, rewards = [], [], [], [], [], [], []
    info = {}
    done = False
    while not done:
        image, vec = policy_net_inputs(pobs, env.cfg)
        logits, hidden, _ = policy.step(image[None], vec[None], hidden)
        action, logp = nn.sample_multicategorical(logits, action_rng)
        images.append(image)
        vecs.append(vec)
        vf.append(value_net_inputs(vobs, env.cfg))
        actions.append(action[0])
        logits_all.append(logits[0])
        logps.append(logp[0])
        pobs, vobs, reward, done, info = env.step(action[0])
        rewards.append(reward)
    return EpisodeRollout(
        images=np.array(images),
        vecs=np.array(vecs),
        value_inputs=np.array(vf),
        actions=np.array(actions),
        logits_old=np.array(logits_all),
        logp_old=np.array(logps),
        rewards=np.array(rewards),
        terminal_pos_err=float(info["pos_err"]),
        terminal_ok=bool(info["terminal_ok"]),
        violation=info["violation"],
        fuel_used=float(info["fuel_used"]),
    )


def collect_rollouts(
    env: HoverEnv,
    policy: nn.PolicyNetwork,
    cfg: PPOConfig,
    seed: int,
    batch_index: int,
) -> RolloutBatch:
    """Collect one batch of episodes on per-(seed, batch, episode) streams."""
    action_rng = np.random.default_rng(
        np.random.SeedSequence((seed, batch_index, ACTION_STREAM))
    )
    episodes = []
    for ep_idx in range(cfg.episodes_per_batch):
        env_seed = np.random.SeedSequence((seed, batch_index, ep_idx))
        try:
            episodes.append(rollout_episode(env, policy, env_seed, action_rng))
        except (SimulationError, ConfigurationError) as exc:
            raise SimulationError(
                f"episode {ep_idx} of batch {batch_index} failed: {exc}"
            ) from exc
    return RolloutBatch(episodes)


def compute_advantages(
    batch: RolloutBatch, gamma: float, value_net: nn.ValueNetwork
) -> RolloutBatch:
    """Fill returns, critic values, and normalized advantages in place.

    Values come from a fresh critic replay (hidden states start at zero, as
    during collection). Advantages are normalized to zero mean and unit
    variance over the valid steps of the whole batch.
    """
    for b, ep in enumerate(batch.episodes):
        n = ep.length
        batch.returns[:n, b] = discounted_returns(batch.rewards[:n, b], gamma)
    values, _ = value_net.forward_sequence(batch.value_inputs)
    batch.values = values * batch.mask
    raw = (batch.returns - batch.values) * batch.mask
    total = batch.mask.sum()
    mean = raw.sum() / total
    var = (((raw - mean) * batch.mask) ** 2).sum() / total
    batch.advantages = (raw - mean) / (np.sqrt(var) + 1.0e-8) * batch.mask
    return batch


def clipped_objective(
    ratio: np.ndarray, advantage: np.ndarray, clip_eps: float
) -> np.ndarray:
    """Per-sample surrogate min(ratio*A, clip(ratio, 1-eps, 1+eps)*A)."""
    unclipped = ratio * advantage
    clipped = np.clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps) * advantage
    return np.minimum(unclipped, clipped)


def adapt_clip(measured_kl: float, target: float, clip_eps: float) -> float:
    """Shrink the clip range when KL overshoots, grow it when it stalls."""
    if measured_kl > 2.0 * target:
        clip_eps = clip_eps / 1.5
    elif measured_kl < target / 2.0:
        clip_eps = clip_eps * 1.5
    return float(np.clip(clip_eps, 0.01, 0.5))


@dataclass
class UpdateStats:
    kl: float
    clip_fraction: float
    policy_objective: float
    value_loss: float
    policy_epochs: int
    new_clip_eps: float
    aborted: bool = False
    diagnostics: str = ""


def _all_finite(arrays) -> bool:
    return all(np.isfinite(a).all() for a in arrays)


def policy_minibatch_step(
    policy: nn.PolicyNetwork,
    optimizer: nn.Adam,
    images: np.ndarray,
    vecs: np.ndarray,
    actions: np.ndarray,
    logp_old: np.ndarray,
    advantages: np.ndarray,
    mask: np.ndarray,
    clip_eps: float,
    entropy_coeff: float,
) -> tuple[float, float, bool]:
    """One ascent step on the clipped surrogate over whole episodes.

    Returns (objective, clip fraction, ok). ok=False means a non-finite
    quantity appeared and no step was taken.
    """
    logits, caches = policy.forward_sequence(images, vecs)
    logp_new = nn.action_log_prob(logits, actions)
    ratio = np.exp(logp_new - logp_old)
    unclipped = ratio * advantages
    surrogate = clipped_objective(ratio, advantages, clip_eps)
    denom = mask.sum()
    objective = float((surrogate * mask).sum() / denom)
    clip_frac = float(((np.abs(ratio - 1.0) > clip_eps) * mask).sum() / denom)
    if entropy_coeff != 0.0:
        objective += entropy_coeff * masked_mean(nn.entropy(logits), mask)
    if not np.isfinite(objective):
        return objective, clip_frac, False

    # d surrogate / d logp: the unclipped branch when it is the minimum,
    # zero when the clipped branch is strictly active (its ratio derivative
    # vanishes outside the clip window).
    coeff = ratio * advantages * (unclipped <= surrogate) * mask / denom
    dlogits = nn.logp_grad_logits(logits, actions, coeff)
    if entropy_coeff != 0.0:
        dlogits += nn.entropy_grad_logits(logits, entropy_coeff * mask / denom)
    policy.zero_grads()
    policy.backward_sequence(dlogits, caches)
    grads = policy.gradients()
    if not _all_finite(grads.values()):
        return objective, clip_frac, False
    optimizer.step({k: -g for k, g in grads.items()})  # ascend
    return objective, clip_frac, True


def value_minibatch_step(
    value_net: nn.ValueNetwork,
    optimizer: nn.Adam,
    inputs: np.ndarray,
    returns: np.ndarray,
    mask: np.ndarray,
) -> tuple[float, bool]:
    """One descent step on mean squared return-prediction error."""
    values, caches = value_net.forward_sequence(inputs)
    err = (values - returns) * mask
    denom = mask.sum()
    loss = float((err**2).sum() / denom)
    if not np.isfinite(loss):
        return loss, False
    value_net.zero_grads()
    value_net.backward_sequence(2.0 * err / denom, caches)
    grads = value_net.gradients()
    if not _all_finite(grads.values()):
        return loss, False
    optimizer.step(grads)
    return loss, True


def measure_kl(policy: nn.PolicyNetwork, batch: RolloutBatch) -> float:
    """Exact KL(old || current) averaged over valid steps."""
    logits, _ = policy.forward_sequence(batch.images, batch.vecs)
    return masked_mean(nn.kl_divergence(batch.logits_old, logits), batch.mask)


def ppo_update(
    policy: nn.PolicyNetwork,
    value_net: nn.ValueNetwork,
    batch: RolloutBatch,
    cfg: PPOConfig,
    policy_opt: nn.Adam,
    value_opt: nn.Adam,
    rng: np.random.Generator,
    clip_eps: float | None = None,
) -> UpdateStats:
    """Several epochs of minibatch updates on one batch.

    Advantages are recomputed with a fresh critic replay at the start of
    every epoch. The measured KL stops further policy steps once it exceeds
    1.5x the target; critic regression continues through all epochs. Any
    non-finite loss or gradient aborts the update before the offending step.
    """
    eps = cfg.clip_eps if clip_eps is None else clip_eps
    kl = 0.0
    clip_frac = 0.0
    objective = 0.0
    value_loss = float("nan")
    policy_epochs = 0
    policy_active = True
    for epoch in range(cfg.epochs):
        compute_advantages(batch, cfg.gamma, value_net)
        if not np.isfinite(batch.advantages).all():
            return UpdateStats(
                kl, clip_frac, objective, value_loss, policy_epochs, eps,
                aborted=True,
                diagnostics=f"non-finite advantages at epoch {epoch}",
            )
        order = rng.permutation(batch.num_episodes)
        for start in range(0, batch.num_episodes, cfg.minibatch_episodes):
            mb = order[start:start + cfg.minibatch_episodes]
            if policy_active:
                objective, frac, ok = policy_minibatch_step(
                    policy, policy_opt,
                    batch.images[:, mb], batch.vecs[:, mb],
                    batch.actions[:, mb], batch.logp_old[:, mb],
                    batch.advantages[:, mb], batch.mask[:, mb],
                    eps, cfg.entropy_coeff,
                )
                clip_frac = frac
                if not ok:
                    return UpdateStats(
                        kl, clip_frac, objective, value_loss, policy_epochs,
                        eps, aborted=True,
                        diagnostics=f"non-finite policy step at epoch {epoch}",
                    )
            value_loss, ok = value_minibatch_step(
                value_net, value_opt,
                batch.value_inputs[:, mb], batch.returns[:, mb],
                batch.mask[:, mb],
            )
            if not ok:
                return UpdateStats(
                    kl, clip_frac, objective, value_loss, policy_epochs, eps,
                    aborted=True,
                    diagnostics=f"non-finite value step at epoch {epoch}",
                )
        if policy_active:
            policy_epochs += 1
            kl = measure_kl(policy, batch)
            if kl > 1.5 * cfg.kl_target:
                policy_active = False
    return UpdateStats(
        kl=kl,
        clip_fraction=clip_frac,
        policy_objective=objective,
        value_loss=value_loss,
        policy_epochs=policy_epochs,
        new_clip_eps=adapt_clip(kl, cfg.kl_target, eps),
    )


# --------------------------------------------------------------------------
# Training loop

METRICS_COLUMNS = (
    "batch", "mean_reward", "std_reward", "mean_term_pos_err",
    "max_term_pos_err", "min_reward", "max_reward", "kl", "clip_fraction",
    "clip_eps", "value_loss", "policy_epochs",
)

_CHECKPOINT_RE = re.compile(r"checkpoint_(\d+)\.npz$")


@dataclass
class TrainConfig:
    episode: EpisodeConfig = field(default_factory=EpisodeConfig)
    ppo: PPOConfig = field(default_factory=PPOConfig)
    seed: int = 0
    batches: int = 200
    out_dir: str = "runs/train"
    checkpoint_every: int = 25
    resume: bool = False

    def validate(self) -> None:
        self.episode.validate()
        self.ppo.validate()
        if self.batches < 1:
            raise ConfigurationError("batches must be at least 1")
        if self.checkpoint_every < 1:
            raise ConfigurationError("checkpoint_every must be at least 1")


def build_networks(seed: int) -> tuple[nn.PolicyNetwork, nn.ValueNetwork]:
    """Fresh networks on the init seed stream (policy drawn first)."""
    rng = np.random.default_rng(np.random.SeedSequence((seed, INIT_STREAM)))
    return nn.PolicyNetwork(seed=rng), nn.ValueNetwork(seed=rng)


def latest_checkpoint(out_dir: str) -> str | None:
    best, best_n = None, -1
    for path in glob.glob(os.path.join(out_dir, "checkpoint_*.npz")):
        m = _CHECKPOINT_RE.search(os.path.basename(path))
        if m and int(m.group(1)) > best_n:
            best, best_n = path, int(m.group(1))
    return best


def _format(value) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".17g")


def train(cfg: TrainConfig, log=None) -> str:
    """Run the full collect / advantage / update loop.

    Writes metrics.csv (one row per batch), numbered checkpoints, and the
    resolved config into cfg.out_dir. Returns the metrics file path.
    Reruns with identical config produce byte-identical metrics; resume
    picks up after the last checkpoint and yields the same rows as an
    uninterrupted run.
    """
    cfg.validate()
    os.makedirs(cfg.out_dir, exist_ok=True)
    with open(os.path.join(cfg.out_dir, "config.json"), "w") as fh:
        json.dump(dataclasses.asdict(cfg), fh, indent=2, default=str)
        fh.write("\n")

    policy, value_net = build_networks(cfg.seed)
    policy_opt = nn.Adam(policy.parameters(), lr=cfg.ppo.policy_lr)
    value_opt = nn.Adam(value_net.parameters(), lr=cfg.ppo.value_lr)
    clip_eps = cfg.ppo.clip_eps
    start_batch = 0

    metrics_path = os.path.join(cfg.out_dir, "metrics.csv")
    if cfg.resume:
        ck = latest_checkpoint(cfg.out_dir)
        if ck is None:
            raise ConfigurationError(f"no checkpoint to resume from in {cfg.out_dir}")
        meta = nn.load_checkpoint(ck, policy, value_net, policy_opt, value_opt)
        start_batch = int(meta["extra"]["next_batch"])
        clip_eps = float(meta["extra"]["clip_eps"])

    mode = "a" if cfg.resume and os.path.exists(metrics_path) else "w"
    env = HoverEnv(cfg.episode)
    with open(metrics_path, mode) as fh:
        if mode == "w":
            fh.write(",".join(METRICS_COLUMNS) + "\n")
        for batch_idx in range(start_batch, cfg.batches):
            batch = collect_rollouts(env, policy, cfg.ppo, cfg.seed, batch_idx)
            rng = np.random.default_rng(
                np.random.SeedSequence((cfg.seed, batch_idx, UPDATE_STREAM))
            )
            stats = ppo_update(
                policy, value_net, batch, cfg.ppo, policy_opt, value_opt,
                rng, clip_eps=clip_eps,
            )
            clip_eps = stats.new_clip_eps
            rewards = batch.episode_rewards()
            pos_errs = batch.terminal_pos_errors()
            row = (
                batch_idx,
                rewards.mean(), rewards.std(),
                pos_errs.mean(), pos_errs.max(),
                rewards.min(), rewards.max(),
                stats.kl, stats.clip_fraction, clip_eps,
                stats.value_loss, stats.policy_epochs,
            )
            fh.write(",".join(_format(v) for v in row) + "\n")
            fh.flush()
            if log is not None:
                log(
                    f"batch {batch_idx}: reward {rewards.mean():.3f} "
                    f"+- {rewards.std():.3f}, terminal err {pos_errs.mean():.1f} m, "
                    f"kl {stats.kl:.2e}, eps {clip_eps:.3f}"
                    + (f" [aborted: {stats.diagnostics}]" if stats.aborted else "")
                )
            last = batch_idx == cfg.batches - 1
            if (batch_idx + 1) % cfg.checkpoint_every == 0 or last:
                nn.save_checkpoint(
                    os.path.join(cfg.out_dir, f"checkpoint_{batch_idx + 1:06d}.npz"),
                    policy, value_net, policy_opt, value_opt,
                    extra={"next_batch": batch_idx + 1, "clip_eps": clip_eps},
                )
    return metrics_path
