"""Synthetic rollout lab: a tiny world where late visual focus causes reward.

The generator builds groups whose hidden states drift away from the visual
prototype over the sequence, at a rate set by rho_decay: every token state is
an interpolation between a token-content vector and the prototype direction,
and the interpolation coefficient starts at 1 and decays linearly. With
rho_decay = 0 the coefficient stays 1, every hidden state is exactly the unit
prototype, and the focus score is one flat constant, which makes that setting
the reduction fixture for shaping-off comparisons.

Reward is 1 exactly when the vocabulary token whose embedding lies nearest
the prototype is emitted inside the final quarter of the sequence, so keeping
focus alive late in the generation is causally tied to reward, not merely
correlated with it.

The trainable policy is one weight matrix from a (2 * dim) context feature
(prototype, then the running mean of previously emitted token embeddings) to
vocabulary logits. Everything is driven by explicitly keyed RNG streams, so
a run is reproducible bit for bit from its seed.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .diagnostics import late_early_ratio
from .errors import ConfigError
from .grpo import ClipConfig, clipped_surrogate, importance_ratios
from .model import RolloutGroup, ShapingConfig, Trajectory, VisualContext
from .pipeline import shape_group

ALGOS = ("grpo", "dapo", "vgpo")

# rng stream tags, so the embedding table, standalone groups and training
# rollouts never share a stream even under the same seed
_TAG_EMBED = 1
_TAG_GROUP = 2
_TAG_ROLLOUT = 3

# Scale applied to the prototype block of the policy feature. The policy is
# linear and its per-step logit drift grows with the squared feature norm, so
# this sets how far credit assignment gets within a few hundred steps.
_PROTO_FEATURE_GAIN = 28.0

# Final-summary metrics average over this many trailing steps.
_TAIL_WINDOW = 25


@dataclass(frozen=True)
class SynthConfig:
    """World size and decay shape of the synthetic lab."""

    seed: int = 0
    d: int = 16
    vocab: int = 32
    seq_len: int = 12
    group_size: int = 8
    groups_per_batch: int = 16
    n_image_tokens: int = 4
    evidence_gain: float = 0.7
    rho_decay: float = 0.6

    def __post_init__(self):
        if self.d < 1:
            raise ConfigError(f"d must be >= 1, got {self.d}")
        if self.vocab < 2:
            raise ConfigError(f"vocab must be >= 2, got {self.vocab}")
        if self.seq_len < 1:
            raise ConfigError(f"seq_len must be >= 1, got {self.seq_len}")
        if self.group_size < 1:
            raise ConfigError(f"group_size must be >= 1, got {self.group_size}")
        if self.groups_per_batch < 1:
            raise ConfigError(
                f"groups_per_batch must be >= 1, got {self.groups_per_batch}"
            )
        if self.n_image_tokens < 1:
            raise ConfigError(
                f"n_image_tokens must be >= 1, got {self.n_image_tokens}"
            )
        if not 0.0 <= self.evidence_gain <= 1.0:
            raise ConfigError(
                f"evidence_gain must be in [0, 1], got {self.evidence_gain}"
            )
        if not 0.0 <= self.rho_decay <= 1.0:
            raise ConfigError(f"rho_decay must be in [0, 1], got {self.rho_decay}")


@dataclass(frozen=True)
class ToyPolicy:
    """Linear policy: (2 * dim) context feature -> vocabulary logits."""

    weights: np.ndarray  # (vocab, 2 * dim)
    lr: float = 1e-2

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64)
        if not np.all(np.isfinite(w)):
            raise ConfigError("policy weights must be finite")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @classmethod
    def zeros(cls, cfg: SynthConfig, lr: float = 1e-2) -> "ToyPolicy":
        return cls(weights=np.zeros((cfg.vocab, 2 * cfg.d)), lr=lr)

    def logits(self, features) -> np.ndarray:
        return np.asarray(features, dtype=np.float64) @ self.weights.T


@dataclass(frozen=True)
class ToyBatch:
    """Rollout groups plus the token ids and features that produced them.

    The core trajectory record carries no token ids, but re-evaluating the
    policy after an update needs them, so the lab keeps them alongside.
    """

    groups: tuple  # of RolloutGroup
    tokens: tuple  # of (G, T) int arrays
    features: tuple  # of (G, T, 2 * dim) arrays


def vocab_embeddings(cfg: SynthConfig) -> np.ndarray:
    """The fixed (vocab, d) embedding table for this seed's world."""
    rng = np.random.default_rng([cfg.seed, _TAG_EMBED])
    return rng.normal(size=(cfg.vocab, cfg.d))


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def sample_token(logits, rng: np.random.Generator) -> int:
    """Draw one token id from softmax(logits)."""
    return int(_sample_rows(np.asarray(logits, dtype=np.float64)[None, :], rng)[0])


def _sample_rows(logits: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    # inverse-cdf sampling, one uniform per row
    probs = np.exp(_log_softmax(logits))
    cdf = np.cumsum(probs, axis=1)
    u = rng.random((logits.shape[0], 1))
    idx = (u > cdf).sum(axis=1)
    return np.minimum(idx, logits.shape[1] - 1)


def _unit(vec: np.ndarray) -> np.ndarray:
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        out = np.zeros_like(vec)
        out[0] = 1.0
        return out
    return vec / norm


def _pull_coefficients(cfg: SynthConfig) -> np.ndarray:
    # lam_t = 1 - rho_decay * (t - 1) / (T - 1), t 1-based; lam_1 is always 1
    steps = np.arange(cfg.seq_len, dtype=np.float64)
    return 1.0 - cfg.rho_decay * steps / max(cfg.seq_len - 1, 1)


def _hidden_states(
    tokens: np.ndarray, embeds: np.ndarray, unit_proto: np.ndarray, cfg: SynthConfig
) -> np.ndarray:
    """Token states: content blend, then a decaying pull onto the prototype.

    content_t = gain * embed(token_t) + (1 - gain) * mean(embeds up to t)
    h_t = (1 - lam_t) * content_t + lam_t * |content_t| * unit_proto

    Rows with lam_t == 1 are written as the unit prototype itself, so a
    rho_decay = 0 world produces bit-identical states everywhere and the
    focus series is exactly constant, not merely constant up to rounding.
    """
    picked = embeds[tokens]  # (T, d)
    running = np.cumsum(picked, axis=0) / np.arange(1, len(tokens) + 1)[:, None]
    content = cfg.evidence_gain * picked + (1.0 - cfg.evidence_gain) * running
    lam = _pull_coefficients(cfg)
    norms = np.linalg.norm(content, axis=1)
    states = (1.0 - lam)[:, None] * content + (lam * norms)[:, None] * unit_proto
    states[lam >= 1.0] = unit_proto
    return states


def _evidence_token(embeds: np.ndarray, prototype: np.ndarray) -> int:
    norms = np.linalg.norm(embeds, axis=1) * np.linalg.norm(prototype)
    scores = (embeds @ prototype) / np.maximum(norms, 1e-12)
    return int(np.argmax(scores))


def _reward(tokens: np.ndarray, evidence: int, seq_len: int) -> float:
    positions = np.arange(1, seq_len + 1)
    late = tokens[positions > 0.75 * seq_len]
    return 1.0 if np.any(late == evidence) else 0.0


def _attn_rows(states: np.ndarray, unit_proto: np.ndarray, rng) -> np.ndarray:
    # plausible attention masses: the image share tracks the focus score so
    # diagnostics on synthetic traces have a real correlation to find
    norms = np.maximum(np.linalg.norm(states, axis=1), 1e-12)
    cos = np.clip((states @ unit_proto) / norms, -1.0, 1.0)
    rho = 0.5 * (cos + 1.0)
    seq_len = states.shape[0]
    image = 0.15 + 0.7 * rho + 0.05 * rng.random(seq_len)
    query = 0.2 + 0.1 * rng.random(seq_len)
    gen = 0.5 + 0.1 * rng.random(seq_len)
    return np.stack([image, query, gen], axis=1)


def generate_group(
    cfg: SynthConfig,
    rng: np.random.Generator,
    group_id: str = "synth",
    embeddings: Optional[np.ndarray] = None,
) -> RolloutGroup:
    """One group with uniformly random tokens (no policy involved).

    Deterministic given the generator state; image states are drawn per
    group, the embedding table is fixed per world seed.
    """
    embeds = vocab_embeddings(cfg) if embeddings is None else embeddings
    image_states = rng.normal(size=(cfg.n_image_tokens, cfg.d))
    ctx = VisualContext.from_image_states(image_states)
    unit_proto = _unit(ctx.prototype)
    evidence = _evidence_token(embeds, ctx.prototype)
    trajectories = []
    for _ in range(cfg.group_size):
        tokens = rng.integers(0, cfg.vocab, size=cfg.seq_len)
        states = _hidden_states(tokens, embeds, unit_proto, cfg)
        trajectories.append(
            Trajectory(
                hidden_states=states,
                reward=_reward(tokens, evidence, cfg.seq_len),
                attn_split=_attn_rows(states, unit_proto, rng),
            )
        )
    return RolloutGroup(group_id=group_id, context=ctx, trajectories=trajectories)


def toy_rollout(
    policy: ToyPolicy,
    cfg: SynthConfig,
    rng: np.random.Generator,
    group_id: str = "toy",
    embeddings: Optional[np.ndarray] = None,
):
    """Sample one group from the policy.

    Returns (group, tokens, features): the group's trajectories carry
    logp_old from the sampling policy; tokens is (G, T) ints and features is
    (G, T, 2 * dim), both needed to re-evaluate log-probabilities later.
    """
    embeds = vocab_embeddings(cfg) if embeddings is None else embeddings
    image_states = rng.normal(size=(cfg.n_image_tokens, cfg.d))
    ctx = VisualContext.from_image_states(image_states)
    unit_proto = _unit(ctx.prototype)
    evidence = _evidence_token(embeds, ctx.prototype)

    n, seq_len, dim = cfg.group_size, cfg.seq_len, cfg.d
    proto_feat = np.broadcast_to(
        _PROTO_FEATURE_GAIN * ctx.prototype, (n, dim)
    )
    tokens = np.zeros((n, seq_len), dtype=np.int64)
    feats = np.zeros((n, seq_len, 2 * dim))
    logps = np.zeros((n, seq_len))
    history_sum = np.zeros((n, dim))
    for t in range(seq_len):
        history_mean = history_sum / t if t > 0 else np.zeros((n, dim))
        feat = np.concatenate([proto_feat, history_mean], axis=1)
        logits = policy.logits(feat)
        drawn = _sample_rows(logits, rng)
        logps[:, t] = _log_softmax(logits)[np.arange(n), drawn]
        tokens[:, t] = drawn
        feats[:, t] = feat
        history_sum += embeds[drawn]

    trajectories = []
    for i in range(n):
        states = _hidden_states(tokens[i], embeds, unit_proto, cfg)
        trajectories.append(
            Trajectory(
                hidden_states=states,
                reward=_reward(tokens[i], evidence, seq_len),
                logp_old=logps[i],
            )
        )
    group = RolloutGroup(group_id=group_id, context=ctx, trajectories=trajectories)
    return group, tokens, feats


def rollout_batch(
    policy: ToyPolicy,
    cfg: SynthConfig,
    step: int,
    embeddings: Optional[np.ndarray] = None,
) -> ToyBatch:
    """One training batch, keyed by (seed, step) so runs replay exactly."""
    embeds = vocab_embeddings(cfg) if embeddings is None else embeddings
    rng = np.random.default_rng([cfg.seed, _TAG_ROLLOUT, step])
    groups, tokens, feats = [], [], []
    for g in range(cfg.groups_per_batch):
        group, tok, ft = toy_rollout(
            policy, cfg, rng, group_id=f"s{cfg.seed}-t{step}-g{g}", embeddings=embeds
        )
        groups.append(group)
        tokens.append(tok)
        feats.append(ft)
    return ToyBatch(groups=tuple(groups), tokens=tuple(tokens), features=tuple(feats))


def _effective_clip(clip: ClipConfig, algo: str) -> ClipConfig:
    # the grpo baseline clips symmetrically at the low offset; dapo and vgpo
    # keep the asymmetric clip-higher offsets
    if algo == "grpo":
        return ClipConfig(
            clip_low=clip.clip_low, clip_high=clip.clip_low, loss_agg=clip.loss_agg
        )
    return clip


def _evaluate(
    policy: ToyPolicy,
    batch: ToyBatch,
    shaping: ShapingConfig,
    clip: ClipConfig,
    algo: str,
):
    """Objective, metrics and the policy-weight gradient for one batch."""
    if algo not in ALGOS:
        raise ConfigError(f"algo must be one of {ALGOS}, got {algo!r}")
    eff_clip = _effective_clip(clip, algo)
    n_groups = len(batch.groups)
    grad_w = np.zeros_like(policy.weights)
    objective = 0.0
    rewards = []
    ratios_late_early = []

    for group, tokens, feats in zip(batch.groups, batch.tokens, batch.features):
        shaped = shape_group(group, shaping)
        if algo == "vgpo":
            adv_seqs = shaped.shaped_adv
        else:
            adv_seqs = tuple(
                np.full(len(traj), shaped.base_adv[i])
                for i, traj in enumerate(group.trajectories)
            )
        n, seq_len = tokens.shape
        flat_feats = feats.reshape(n * seq_len, -1)
        logits = policy.logits(flat_feats)
        log_probs = _log_softmax(logits)
        flat_tokens = tokens.ravel()
        logp_new = log_probs[np.arange(n * seq_len), flat_tokens].reshape(n, seq_len)
        ratio_seqs = tuple(
            importance_ratios(logp_new[i], group.trajectories[i].logp_old)
            for i in range(n)
        )
        result = clipped_surrogate(ratio_seqs, adv_seqs, eff_clip)
        objective += result.objective / n_groups

        # chain rule through log-softmax: d logp(tok) / d logits = onehot - p
        token_grad = np.concatenate(result.grad_logp) / n_groups
        probs = np.exp(log_probs)
        dlogits = -probs * token_grad[:, None]
        dlogits[np.arange(n * seq_len), flat_tokens] += token_grad
        grad_w += dlogits.T @ flat_feats

        rewards.extend(traj.reward for traj in group.trajectories)
        for rho in shaped.rho:
            ratio = late_early_ratio(rho, 0.5)
            if ratio is not None:
                ratios_late_early.append(ratio)

    metrics = {
        "reward": float(np.mean(rewards)),
        "objective": float(objective),
        "rho_ratio": float(np.mean(ratios_late_early)) if ratios_late_early else None,
    }
    return metrics, grad_w


def batch_metrics(
    policy: ToyPolicy,
    batch: ToyBatch,
    shaping: Optional[ShapingConfig] = None,
    clip: Optional[ClipConfig] = None,
    algo: str = "vgpo",
) -> dict:
    """Metrics only, no update."""
    metrics, _ = _evaluate(
        policy, batch, shaping or ShapingConfig(), clip or ClipConfig(), algo
    )
    return metrics


def train_step(
    policy: ToyPolicy,
    batch: ToyBatch,
    shaping: Optional[ShapingConfig] = None,
    clip: Optional[ClipConfig] = None,
    algo: str = "vgpo",
):
    """One ascent step on the batch objective.

    Returns (updated policy, metrics measured before the update). A batch of
    degenerate groups has an all-zero gradient and leaves the weights
    bit-identical.
    """
    metrics, grad_w = _evaluate(
        policy, batch, shaping or ShapingConfig(), clip or ClipConfig(), algo
    )
    updated = ToyPolicy(weights=policy.weights + policy.lr * grad_w, lr=policy.lr)
    return updated, metrics


def run_experiment(
    cfg: Optional[SynthConfig] = None,
    shaping: Optional[ShapingConfig] = None,
    clip: Optional[ClipConfig] = None,
    algo: str = "vgpo",
    steps: int = 300,
    n_seeds: int = 5,
) -> dict:
    """Train fresh policies for n_seeds consecutive seeds and report curves.

    The per-seed worlds use seeds cfg.seed, cfg.seed + 1, ... Final metrics
    average the trailing _TAIL_WINDOW steps of each curve (or fall back to
    the initial metrics when steps == 0).
    """
    cfg = cfg or SynthConfig()
    shaping = shaping or ShapingConfig()
    clip = clip or ClipConfig()
    if steps < 0:
        raise ConfigError(f"steps must be >= 0, got {steps}")
    if n_seeds < 1:
        raise ConfigError(f"n_seeds must be >= 1, got {n_seeds}")

    runs = []
    for offset in range(n_seeds):
        world = replace(cfg, seed=cfg.seed + offset)
        embeds = vocab_embeddings(world)
        policy = ToyPolicy.zeros(world)
        initial = batch_metrics(
            policy, rollout_batch(policy, world, 0, embeds), shaping, clip, algo
        )
        curve = []
        for step in range(1, steps + 1):
            batch = rollout_batch(policy, world, step, embeds)
            policy, metrics = train_step(policy, batch, shaping, clip, algo)
            curve.append({"step": step, **metrics})
        if curve:
            tail = curve[-min(_TAIL_WINDOW, len(curve)):]
            final_reward = float(np.mean([m["reward"] for m in tail]))
            tail_ratios = [m["rho_ratio"] for m in tail if m["rho_ratio"] is not None]
            final_ratio = float(np.mean(tail_ratios)) if tail_ratios else None
        else:
            final_reward = initial["reward"]
            final_ratio = initial["rho_ratio"]
        runs.append(
            {
                "seed": world.seed,
                "initial": initial,
                "curve": curve,
                "final_reward": final_reward,
                "final_rho_ratio": final_ratio,
            }
        )

    summary = {
        "final_reward_mean": float(np.mean([r["final_reward"] for r in runs])),
        "final_rho_ratio_mean": (
            float(np.mean([r["final_rho_ratio"] for r in runs]))
            if all(r["final_rho_ratio"] is not None for r in runs)
            else None
        ),
    }
    return {
        "schema_version": 1,
        "algo": algo,
        "steps": steps,
        "seeds": [r["seed"] for r in runs],
        "config": asdict(cfg),
        "shaping": asdict(shaping),
        "clip": asdict(clip),
        "runs": runs,
        "summary": summary,
    }
