"""Training loop: rollouts under randomly masked pools, replay, and the
four-stage per-batch optimization (critic, alpha, actor, representation).

Each stage takes its own optimizer step on its own parameter group; the
losses are never summed into a joint objective. Replay stores raw inputs
(window day index + pool mask + executed weights + reward) and representations
are recomputed on sampling so they never go stale as the encoder trains.

The learning-rate schedule is episode-indexed: linear warm-up from
``warmup_start_lr`` to ``lr`` over ``warmup_episodes``, then multiplication
by ``decay_factor`` at each decay point. Episode ends are time limits, not
terminal states, so critic targets bootstrap through them.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .marketdata import MarketDataset
from .nn import AdamW
from .portfolio_env import PoolMask, PortfolioEnv, PortfolioVector
from .representation import (REPR_PARAM_PREFIXES, init_representation_params,
                             plan_mask, reconstruction_loss_batch,
                             represent_batch, representation_forward,
                             represent_window, sample_mask_ratio)
from .sac_agent import (ACTOR_PREFIX, CRITIC_PREFIXES, EntropyTuner, act,
                        actor_loss, alpha_loss, critic_loss,
                        init_agent_params, re_weight, sample_policy,
                        update_targets)

CHECKPOINT_FORMAT_VERSION = 1
STAGE_ORDER = ("critic", "alpha", "actor", "representation")


class TrainError(RuntimeError):
    pass


class CheckpointError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    episodes: int = 2000
    batch_size: int = 128
    horizon: int = 128
    lr: float = 1e-5
    warmup_episodes: int = 300
    warmup_start_lr: float = 1e-8
    decay_points: tuple[int, ...] = (600, 1000, 1400)
    decay_factor: float = 0.1
    gamma: float = 0.99
    tau: float = 0.005
    lambda_mask: float = 1.0
    temperature: float = 0.1
    mask_mu: float = 0.7
    mask_sigma: float = 0.1
    mask_a: float = 0.6
    mask_b: float = 0.8
    seed: int = 0
    capacity: int = 100_000
    warm_start_steps: int = 1000
    weight_decay: float = 1e-2
    embed_dim: int = 64
    hidden_dim: int = 64
    conv_kernel: int = 3
    initial_cash: float = 1.0
    reward_scale: float = 1.0
    alpha_init: float = 1.0
    # optional inference-time sparsification: zero weights below this and
    # renormalize (0 disables; the softmax itself never yields exact zeros)
    sparsify_epsilon: float = 0.0
    train_split: str = "train"
    checkpoint_every: int = 0

    def __post_init__(self):
        if self.episodes < 0 or self.horizon <= 0 or self.batch_size <= 0:
            raise TrainError("episodes/horizon/batch_size must be positive")
        for name in ("lr", "warmup_start_lr", "gamma", "tau", "temperature",
                     "mask_sigma", "initial_cash"):
            if getattr(self, name) <= 0:
                raise TrainError(f"{name} must be positive")
        if self.alpha_init <= 0 or self.reward_scale <= 0:
            raise TrainError("alpha_init and reward_scale must be positive")
        if self.sparsify_epsilon < 0:
            raise TrainError("sparsify_epsilon must be non-negative")
        if list(self.decay_points) != sorted(set(self.decay_points)):
            raise TrainError("decay_points must be strictly increasing")
        if self.mask_a >= self.mask_b:
            raise TrainError("mask_a must be below mask_b")
        self.decay_points = tuple(int(p) for p in self.decay_points)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["decay_points"] = list(self.decay_points)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise TrainError(f"unknown config keys: {sorted(unknown)}")
        if "decay_points" in d:
            d = dict(d, decay_points=tuple(d["decay_points"]))
        return cls(**d)

    @classmethod
    def from_file(cls, path: str | Path) -> "TrainConfig":
        path = Path(path)
        text = path.read_text()
        if path.suffix == ".toml":
            try:
                import tomllib
            except ModuleNotFoundError:  # Python < 3.11
                import tomli as tomllib
            raw = tomllib.loads(text)
        else:
            raw = json.loads(text)
        return cls.from_dict(raw)


def config_hash(config: TrainConfig) -> str:
    blob = json.dumps(config.to_dict(), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


def manifest_hash(manifest: dict) -> str:
    return hashlib.sha256(json.dumps(manifest, sort_keys=True).encode()).hexdigest()


def lr_for_episode(config: TrainConfig, episode: int) -> float:
    """Warm-up ramp then multi-step decay, indexed by episode."""
    if episode < config.warmup_episodes:
        frac = episode / config.warmup_episodes
        lr = config.warmup_start_lr + (config.lr - config.warmup_start_lr) * frac
    else:
        lr = config.lr
    for point in config.decay_points:
        if episode >= point:
            lr *= config.decay_factor
    return lr


class ReplayBuffer:
    """Fixed-capacity ring of transitions stored as raw inputs."""

    def __init__(self, capacity: int, n_stocks: int):
        if capacity <= 0:
            raise TrainError("capacity must be positive")
        self.capacity = int(capacity)
        self.day = np.zeros(self.capacity, dtype=np.int64)
        self.next_day = np.zeros(self.capacity, dtype=np.int64)
        self.visible = np.zeros((self.capacity, n_stocks), dtype=bool)
        self.action = np.zeros((self.capacity, n_stocks + 1))
        self.reward = np.zeros(self.capacity)
        self._pos = 0
        self.size = 0

    def push(self, day: int, next_day: int, visible: np.ndarray,
             action: np.ndarray, reward: float) -> None:
        if not np.isfinite(reward):
            raise TrainError(f"non-finite reward {reward!r}")
        i = self._pos
        self.day[i] = day
        self.next_day[i] = next_day
        self.visible[i] = visible
        self.action[i] = action
        self.reward[i] = reward
        self._pos = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, rng: np.random.Generator, batch_size: int) -> np.ndarray:
        """Uniform indices without replacement within the batch."""
        if batch_size > self.size:
            raise TrainError(f"batch {batch_size} exceeds buffer size {self.size}")
        return rng.choice(self.size, size=batch_size, replace=False)


@dataclass
class TrainResult:
    params: dict[str, np.ndarray]
    log: list[dict]
    stage_trace: list[str]
    config: TrainConfig


def init_params(config: TrainConfig, dataset: MarketDataset,
                rng: np.random.Generator) -> dict[str, np.ndarray]:
    n_dense = dataset.feature_layout["indicators"][1]
    params = init_representation_params(rng, config.embed_dim, n_dense,
                                        dataset.window, config.conv_kernel)
    params.update(init_agent_params(rng, dataset.n_stocks, config.embed_dim,
                                    config.hidden_dim))
    return params


def _make_optimizers(params: dict, config: TrainConfig) -> dict[str, AdamW]:
    def names(prefixes):
        return [k for k in params if k.startswith(prefixes) or k in prefixes]

    return {
        "critic": AdamW(params, names(CRITIC_PREFIXES), config.lr,
                        config.weight_decay),
        "alpha": AdamW(params, ["log_alpha"], config.lr, 0.0),
        "actor": AdamW(params, names((ACTOR_PREFIX,)), config.lr,
                       config.weight_decay),
        "representation": AdamW(params, names(REPR_PARAM_PREFIXES), config.lr,
                                config.weight_decay),
    }


class _WindowBank:
    """Normalized window tensors keyed by end-day index.

    Precomputes the whole split-independent tensor when it fits in memory
    (desk-scale datasets), otherwise falls back to slicing on demand.
    """

    MAX_BYTES = 512e6

    def __init__(self, dataset: MarketDataset):
        self.dataset = dataset
        self.first = dataset.window - 1
        n_windows = dataset.features.shape[1] - self.first
        est = n_windows * dataset.n_stocks * dataset.window * dataset.n_features * 8
        self.tensor = None
        if 0 < est <= self.MAX_BYTES:
            self.tensor = np.stack(
                [dataset.window_at(t).features
                 for t in range(self.first, dataset.features.shape[1])])

    def gather(self, days: np.ndarray) -> np.ndarray:
        if self.tensor is not None:
            return self.tensor[np.asarray(days) - self.first]
        return np.stack([self.dataset.window_at(int(d)).features for d in days])


def reconstruction_update(params: dict, optimizer: AdamW, features: np.ndarray,
                          visible: np.ndarray, layout: dict,
                          cache: dict | None = None) -> float:
    """One optimizer step on the masked-price reconstruction objective.

    Windows without any masked stock are skipped; returns nan if none remain.
    """
    has_masked = (~visible).any(axis=1)
    if not has_masked.any():
        return float("nan")
    if not has_masked.all():
        features, visible, cache = features[has_masked], visible[has_masked], None
    loss, grads = reconstruction_loss_batch(features, visible, layout, params,
                                            cache=cache)
    optimizer.step(grads)
    return loss


def _gradient_step(params: dict, optimizers: dict, tuner: EntropyTuner,
                   dataset: MarketDataset, bank: _WindowBank,
                   buffer: ReplayBuffer, config: TrainConfig,
                   rng: np.random.Generator, stage_trace: list[str]) -> dict:
    idx = buffer.sample(rng, config.batch_size)
    feats = bank.gather(buffer.day[idx])
    feats_next = bank.gather(buffer.next_day[idx])
    vis = buffer.visible[idx]
    layout = dataset.feature_layout
    rep, rep_cache = representation_forward(feats, vis, layout, params)
    rep_next = represent_batch(feats_next, vis, layout, params)
    b = len(idx)
    batch = {
        "rep": rep.reshape(b, -1),
        "rep_next": rep_next.reshape(b, -1),
        "action": buffer.action[idx],
        "reward": buffer.reward[idx],
        "masked": ~vis,
    }
    action_dim = dataset.n_stocks + 1

    eps_next = rng.standard_normal((b, action_dim))
    j_q, g_q = critic_loss(params, batch, config.gamma, tuner.alpha,
                           config.temperature, eps_next)
    optimizers["critic"].step(g_q)
    stage_trace.append("critic")

    eps_alpha = rng.standard_normal((b, action_dim))
    pol = sample_policy(params, batch["rep"], eps_alpha)
    j_alpha, g_log_alpha = alpha_loss(pol.log_prob, tuner.alpha,
                                      tuner.target_entropy)
    optimizers["alpha"].step({"log_alpha": np.asarray(g_log_alpha)})
    stage_trace.append("alpha")

    eps_actor = rng.standard_normal((b, action_dim))
    j_pi, g_pi, _ = actor_loss(params, batch, tuner.alpha, config.lambda_mask,
                               config.temperature, eps_actor)
    optimizers["actor"].step(g_pi)
    stage_trace.append("actor")

    j_recon = reconstruction_update(params, optimizers["representation"],
                                    feats, vis, layout, cache=rep_cache)
    stage_trace.append("representation")

    update_targets(params, config.tau)

    losses = {"j_q": j_q, "j_alpha": j_alpha, "j_pi": j_pi, "j_recon": j_recon}
    for stage, value in losses.items():
        if stage != "j_recon" and not np.isfinite(value):
            raise TrainError(f"non-finite loss {value!r} in stage {stage!r}")
    return losses


def train(dataset: MarketDataset, config: TrainConfig,
          out_dir: str | Path | None = None) -> TrainResult:
    """Run the full training loop; optionally persist checkpoint + log."""
    rng = np.random.default_rng(config.seed)
    params = init_params(config, dataset, rng)
    params["log_alpha"][...] = np.log(config.alpha_init)
    env = PortfolioEnv(dataset, config.train_split)
    if env.max_steps < config.horizon:
        raise TrainError(
            f"split {config.train_split!r} supports {env.max_steps} steps, "
            f"horizon {config.horizon} requested")
    n = dataset.n_stocks
    buffer = ReplayBuffer(config.capacity, n)
    bank = _WindowBank(dataset)
    optimizers = _make_optimizers(params, config)
    tuner = EntropyTuner(log_alpha=params["log_alpha"],
                         target_entropy=-(n + 1.0))

    log: list[dict] = []
    stage_trace: list[str] = []
    global_step = 0
    max_start = env.max_steps - config.horizon

    for episode in range(config.episodes):
        lr = lr_for_episode(config, episode)
        for opt in optimizers.values():
            opt.lr = lr
        start = int(rng.integers(0, max_start + 1))
        state = env.reset(config.initial_cash, PoolMask.full(n),
                          config.horizon, start=start)
        for _ in range(config.horizon):
            ratio = sample_mask_ratio(rng, config.mask_mu, config.mask_sigma,
                                      config.mask_a, config.mask_b)
            plan = plan_mask(n, ratio, rng)
            visible = plan.visible_bool()
            state = env.update_pool(state, PoolMask(visible))
            if global_step < config.warm_start_steps:
                logits = rng.standard_normal(n + 1)
                action = PortfolioVector.from_array(
                    re_weight(logits, config.temperature))
            else:
                rep = represent_window(state.window, plan, params)
                action = act(params, rep, stochastic=True,
                             temperature=config.temperature, rng=rng)
            next_state, reward = env.step(state, action)
            # reward scaling is the usual SAC knob balancing return against
            # the entropy and penalty terms; accounting stays unscaled
            buffer.push(state.day_index, next_state.day_index, visible,
                        action.as_array(), config.reward_scale * reward)
            state = next_state
            global_step += 1
            if global_step >= config.warm_start_steps and buffer.size >= config.batch_size:
                losses = _gradient_step(params, optimizers, tuner, dataset,
                                        bank, buffer, config, rng, stage_trace)
                log.append({"episode": episode, "step": global_step,
                            **losses, "alpha": tuner.alpha, "lr": lr})
        if (out_dir is not None and config.checkpoint_every
                and (episode + 1) % config.checkpoint_every == 0):
            save_checkpoint(params, Path(out_dir) / f"checkpoint_ep{episode + 1}",
                            config=config, dataset_manifest=dataset.manifest(),
                            episodes=episode + 1)

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        save_checkpoint(params, out / "checkpoint", config=config,
                        dataset_manifest=dataset.manifest(),
                        episodes=config.episodes)
        with (out / "train_log.jsonl").open("w") as fh:
            for rec in log:
                fh.write(json.dumps(rec) + "\n")
    return TrainResult(params=params, log=log, stage_trace=stage_trace,
                       config=config)


# ---------------------------------------------------------------------------
# checkpoints: directory of .npy blobs + manifest.json
# ---------------------------------------------------------------------------

def save_checkpoint(params: dict[str, np.ndarray], path: str | Path,
                    config: TrainConfig | None = None,
                    dataset_manifest: dict | None = None,
                    episodes: int = 0) -> None:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    files = {}
    for name, arr in params.items():
        fname = name.replace("/", "__") + ".npy"
        np.save(out / fname, arr)
        files[name] = fname
    manifest = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "params": files,
        "episodes": episodes,
        "config": config.to_dict() if config is not None else None,
        "config_hash": config_hash(config) if config is not None else None,
        "dataset_manifest_hash": (manifest_hash(dataset_manifest)
                                  if dataset_manifest is not None else None),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2))


def load_checkpoint(path: str | Path,
                    expected_dataset_manifest: dict | None = None):
    """Load (params, manifest); errors on version mismatch, warns on hash drift."""
    src = Path(path)
    man_path = src / "manifest.json"
    if not man_path.exists():
        raise CheckpointError(f"no checkpoint manifest at {man_path}")
    manifest = json.loads(man_path.read_text())
    version = manifest.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise CheckpointError(
            f"checkpoint format version {version} is not the supported "
            f"version {CHECKPOINT_FORMAT_VERSION}")
    params = {name: np.load(src / fname)
              for name, fname in manifest["params"].items()}
    if expected_dataset_manifest is not None:
        expected = manifest_hash(expected_dataset_manifest)
        found = manifest.get("dataset_manifest_hash")
        if found is not None and found != expected:
            warnings.warn(
                f"checkpoint was trained on a different dataset "
                f"(manifest hash {found[:12]} != {expected[:12]})")
    return params, manifest
