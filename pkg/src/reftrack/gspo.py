"""Sequence-level policy-optimization math over caller-supplied log-probabilities.

The objective treats a whole generated sequence as the optimization unit:
the importance ratio is the length-normalized likelihood ratio, clipped into
[1-eps, 1+eps], and each sequence's weight is a group-relative advantage
(r - mu) * clip(1/sigma, 0, scale_max) — the clipped scaling bounds the
amplification when the group's rewards concentrate, instead of letting
1/sigma blow up. A toy categorical policy lives alongside so the surrogate's
analytic gradient can be checked against finite differences without any
neural network.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import GroupTooSmall, InvalidDistribution, MalformedSample


@dataclass(frozen=True)
class GroupSample:
    """One candidate sequence: per-token log-probs under new/old policies plus its reward."""

    logp_new: tuple[float, ...]
    logp_old: tuple[float, ...]
    reward: float

    def __post_init__(self):
        if len(self.logp_new) != len(self.logp_old):
            raise MalformedSample(f"log-prob lengths differ: {len(self.logp_new)} vs {len(self.logp_old)}")
        if len(self.logp_new) < 1:
            raise MalformedSample("sequence must have at least one token")
        if any(v > 0.0 for v in self.logp_new) or any(v > 0.0 for v in self.logp_old):
            raise MalformedSample("log-probabilities must be <= 0")


@dataclass(frozen=True)
class GspoConfig:
    """Published RL fine-tuning defaults: eps 1e-3, KL weight 1e-3, scale cap 3, 4 rollouts."""

    epsilon: float = 1e-3
    beta_kl: float = 0.001
    scale_max: float = 3.0
    group_size: int = 4

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be > 0")
        if self.beta_kl < 0:
            raise ValueError("beta_kl must be >= 0")
        if self.scale_max <= 0:
            raise ValueError("scale_max must be > 0")
        if self.group_size < 2:
            raise ValueError("group_size must be >= 2")


@dataclass(frozen=True)
class SequenceTerm:
    ratio: float        # s1, length-normalized likelihood ratio
    clipped: float      # s2 = clip(s1, 1-eps, 1+eps)
    advantage: float
    term: float         # min(s1 * A, s2 * A)


@dataclass(frozen=True)
class GroupObjective:
    value: float
    per_sequence: tuple[SequenceTerm, ...]
    kl_term: float


def seq_ratio(s: GroupSample) -> float:
    """exp(mean per-token log-ratio); the geometric-mean form avoids underflow."""
    diffs = [n - o for n, o in zip(s.logp_new, s.logp_old)]
    return math.exp(sum(diffs) / len(diffs))


def clip_ratio(s1: float, epsilon: float) -> float:
    return min(max(s1, 1.0 - epsilon), 1.0 + epsilon)


def cas_advantages(rewards: Sequence[float], scale_max: float) -> list[float]:
    """Group-relative advantages (r - mu) * clip(1/sigma, 0, scale_max).

    sigma is the population standard deviation. sigma = 0 means every
    deviation is 0, so the clamped factor (scale_max) still yields all-zero
    advantages. Deviations are re-centered once so they sum to ~0 even in
    floating point.
    """
    if len(rewards) < 2:
        raise GroupTooSmall(f"advantage group needs >= 2 rewards, got {len(rewards)}")
    r = np.asarray(rewards, dtype=np.float64)
    dev = r - r.mean()
    dev -= dev.mean()
    sigma = float(np.sqrt(np.mean(dev * dev)))
    factor = scale_max if sigma == 0.0 else min(1.0 / sigma, scale_max)
    return [float(d * factor) for d in dev]


def standardized_advantages(rewards: Sequence[float]) -> list[float]:
    """Plain (r - mu) / sigma, the unclipped baseline CAS replaces; sigma = 0 gives zeros."""
    if len(rewards) < 2:
        raise GroupTooSmall(f"advantage group needs >= 2 rewards, got {len(rewards)}")
    r = np.asarray(rewards, dtype=np.float64)
    dev = r - r.mean()
    dev -= dev.mean()
    sigma = float(np.sqrt(np.mean(dev * dev)))
    if sigma == 0.0:
        return [0.0] * len(rewards)
    return [float(d / sigma) for d in dev]


def group_objective(samples: Sequence[GroupSample], cfg: GspoConfig, kl: float) -> GroupObjective:
    """Clipped sequence-level surrogate minus the KL penalty, with a full breakdown."""
    if len(samples) != cfg.group_size:
        raise MalformedSample(f"expected group of {cfg.group_size} samples, got {len(samples)}")
    if kl < 0:
        raise InvalidDistribution(f"KL must be >= 0, got {kl}")
    advantages = cas_advantages([s.reward for s in samples], cfg.scale_max)
    terms = []
    for s, adv in zip(samples, advantages):
        s1 = seq_ratio(s)
        s2 = clip_ratio(s1, cfg.epsilon)
        terms.append(SequenceTerm(s1, s2, adv, min(s1 * adv, s2 * adv)))
    value = sum(t.term for t in terms) / len(terms) - cfg.beta_kl * kl
    return GroupObjective(value=value, per_sequence=tuple(terms), kl_term=kl)


def kl_categorical(p: Sequence[float], q: Sequence[float]) -> float:
    """Exact KL(p || q) for finite distributions on the same support."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise InvalidDistribution(f"support sizes differ: {p.shape} vs {q.shape}")
    if np.any(p < 0) or np.any(q < 0):
        raise InvalidDistribution("probabilities must be >= 0")
    if abs(p.sum() - 1.0) > 1e-9 or abs(q.sum() - 1.0) > 1e-9:
        raise InvalidDistribution("distributions must sum to 1 within 1e-9")
    if np.any((p > 0) & (q == 0)):
        raise InvalidDistribution("q must be positive wherever p is positive")
    mask = p > 0
    return float(np.sum(p[mask] * np.log(p[mask] / q[mask])))


# --- Toy categorical policy harness -----------------------------------------
#
# One shared categorical distribution over a small vocabulary plays the role
# of the token policy; a sequence's likelihood is the product of its token
# probabilities. Everything is closed-form, so the surrogate's gradient in
# the new logits can be written down and cross-checked by finite differences.

def softmax(logits: np.ndarray) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def _token_logps(logits: np.ndarray, tokens: Sequence[int]) -> tuple[float, ...]:
    logp = np.log(softmax(logits))
    return tuple(float(logp[t]) for t in tokens)


def make_group(
    logits_new: np.ndarray,
    logits_old: np.ndarray,
    chosen: Sequence[Sequence[int]],
    rewards: Sequence[float],
) -> list[GroupSample]:
    return [
        GroupSample(_token_logps(logits_new, seq), _token_logps(logits_old, seq), float(r))
        for seq, r in zip(chosen, rewards)
    ]


def toy_surrogate(
    logits_new: np.ndarray,
    logits_old: np.ndarray,
    chosen: Sequence[Sequence[int]],
    rewards: Sequence[float],
    cfg: GspoConfig,
) -> float:
    """Surrogate value for the toy policy, with the KL term computed exactly."""
    samples = make_group(logits_new, logits_old, chosen, rewards)
    kl = kl_categorical(softmax(logits_new), softmax(logits_old))
    return group_objective(samples, cfg, kl).value


def toy_surrogate_grad(
    logits_new: np.ndarray,
    logits_old: np.ndarray,
    chosen: Sequence[Sequence[int]],
    rewards: Sequence[float],
    cfg: GspoConfig,
) -> np.ndarray:
    """Analytic gradient of toy_surrogate in logits_new.

    d s1 / d logit_u = s1 * (count_u / len - p_u); the min() picks the s1
    branch unless the clip is the binding side (A > 0 with s1 above the band,
    or A < 0 with s1 below it). d KL / d logit_u = p_u (log(p_u/q_u) - KL).
    """
    logits_new = np.asarray(logits_new, dtype=np.float64)
    p = softmax(logits_new)
    q = softmax(np.asarray(logits_old, dtype=np.float64))
    advantages = cas_advantages(list(rewards), cfg.scale_max)
    grad = np.zeros_like(p)
    g = len(chosen)
    for seq, adv in zip(chosen, advantages):
        if adv == 0.0:
            continue
        n = len(seq)
        logp_new = _token_logps(logits_new, seq)
        logp_old = _token_logps(np.asarray(logits_old, dtype=np.float64), seq)
        s1 = math.exp((sum(logp_new) - sum(logp_old)) / n)
        if adv > 0.0 and s1 > 1.0 + cfg.epsilon:
            continue  # clip binds from above
        if adv < 0.0 and s1 < 1.0 - cfg.epsilon:
            continue  # clip binds from below
        counts = np.bincount(np.asarray(seq, dtype=int), minlength=len(p)).astype(np.float64)
        grad += (adv * s1 / g) * (counts / n - p)
    if cfg.beta_kl > 0.0:
        kl = kl_categorical(p, q)
        grad -= cfg.beta_kl * p * (np.log(p / q) - kl)
    return grad


# --- Seeded hill-climbing demo ----------------------------------------------

@dataclass(frozen=True)
class DemoConfig:
    steps: int = 30
    vocab: int = 8
    max_len: int = 6
    learning_rate: float = 0.8
    target_token: int = 0
    seed: int = 0
    use_cas: bool = True
    gspo: GspoConfig = GspoConfig()


@dataclass(frozen=True)
class DemoStep:
    step: int
    mean_reward: float
    objective: float
    max_abs_advantage: float
    min_ratio: float
    max_ratio: float
    clipped_fraction: float


@dataclass(frozen=True)
class StabilityProbe:
    """CAS-vs-raw contrast on one reward group with an injected tiny sigma.

    A group whose rewards actually concentrate has deviations of the same
    order as sigma, so the explosion shows up as 1/sigma amplifying what the
    clip would have capped; injecting sigma into the formula isolates that
    factor against a fixed deviation scale.
    """

    injected_sigma: float
    max_abs_deviation: float
    raw_max_abs: float        # max |r - mu| / sigma_injected
    cas_max_abs: float        # max |r - mu| * clip(1/sigma_injected, 0, scale_max)
    cas_bound: float          # scale_max * max |r - mu|


@dataclass(frozen=True)
class GradientCheck:
    instances: int
    max_rel_error: float


@dataclass(frozen=True)
class DemoReport:
    steps: tuple[DemoStep, ...]
    gradient_check: GradientCheck
    stability: StabilityProbe
    use_cas: bool


def _sequence_reward(tokens: Sequence[int], target: int) -> float:
    return sum(1 for t in tokens if t == target) / len(tokens)


def _sample_group(rng: np.random.Generator, logits: np.ndarray, cfg: DemoConfig) -> list[list[int]]:
    probs = softmax(logits)
    group = []
    for _ in range(cfg.gspo.group_size):
        n = int(rng.integers(1, cfg.max_len + 1))
        group.append([int(t) for t in rng.choice(len(probs), size=n, p=probs)])
    return group


def stability_probe(rewards: Sequence[float], scale_max: float, injected_sigma: float = 1e-6) -> StabilityProbe:
    r = np.asarray(rewards, dtype=np.float64)
    dev = np.abs(r - r.mean())
    max_dev = float(dev.max())
    return StabilityProbe(
        injected_sigma=injected_sigma,
        max_abs_deviation=max_dev,
        raw_max_abs=max_dev / injected_sigma,
        cas_max_abs=max_dev * min(1.0 / injected_sigma, scale_max),
        cas_bound=scale_max * max_dev,
    )


def _surrogate_value(
    logits_new: np.ndarray,
    logits_old: np.ndarray,
    chosen: Sequence[Sequence[int]],
    rewards: Sequence[float],
    advantages: Sequence[float],
    cfg: GspoConfig,
) -> float:
    """Clipped surrogate with explicitly supplied advantages (demo ablation path)."""
    samples = make_group(logits_new, logits_old, chosen, rewards)
    kl = kl_categorical(softmax(logits_new), softmax(logits_old))
    terms = []
    for s, adv in zip(samples, advantages):
        s1 = seq_ratio(s)
        s2 = clip_ratio(s1, cfg.epsilon)
        terms.append(min(s1 * adv, s2 * adv))
    return sum(terms) / len(terms) - cfg.beta_kl * kl


def check_gradient(cfg: DemoConfig, instances: int, seed: int, h: float = 1e-5) -> GradientCheck:
    """Compare the analytic surrogate gradient against central finite differences.

    Instances landing within 1e-3 of a clip kink are re-drawn — finite
    differences are one-sided there and say nothing about the gradient.
    """
    rng = np.random.default_rng(seed)
    max_rel = 0.0
    done = 0
    while done < instances:
        ln = rng.normal(0.0, 1.0, size=cfg.vocab)
        lo = rng.normal(0.0, 1.0, size=cfg.vocab)
        chosen = _sample_group(rng, lo, cfg)
        rewards = [float(rng.uniform(0.0, 1.0)) for _ in chosen]
        samples = make_group(ln, lo, chosen, rewards)
        near_kink = any(
            abs(seq_ratio(s) - b) < 1e-3
            for s in samples
            for b in (1.0 - cfg.gspo.epsilon, 1.0 + cfg.gspo.epsilon)
        )
        if near_kink:
            continue
        analytic = toy_surrogate_grad(ln, lo, chosen, rewards, cfg.gspo)
        for u in range(cfg.vocab):
            e = np.zeros(cfg.vocab)
            e[u] = h
            fd = (toy_surrogate(ln + e, lo, chosen, rewards, cfg.gspo)
                  - toy_surrogate(ln - e, lo, chosen, rewards, cfg.gspo)) / (2 * h)
            denom = max(abs(fd), abs(analytic[u]), 1e-8)
            max_rel = max(max_rel, abs(fd - analytic[u]) / denom)
        done += 1
    return GradientCheck(instances, max_rel)


def run_demo(cfg: DemoConfig = DemoConfig()) -> DemoReport:
    """Hill-climb the toy policy on the surrogate and report stability numbers.

    Each outer step samples a fresh group under the current policy, takes one
    analytic-gradient ascent step, then re-bases (old <- new) — ratios are 1
    at every evaluation point, so the tiny clip band never freezes learning.
    """
    rng = np.random.default_rng(cfg.seed)
    logits = rng.normal(0.0, 0.1, size=cfg.vocab)
    steps: list[DemoStep] = []
    for step in range(cfg.steps):
        chosen = _sample_group(rng, logits, cfg)
        rewards = [_sequence_reward(seq, cfg.target_token) for seq in chosen]
        if cfg.use_cas:
            advantages = cas_advantages(rewards, cfg.gspo.scale_max)
        else:
            advantages = standardized_advantages(rewards)
        p = softmax(logits)
        grad = np.zeros_like(p)
        for seq, adv in zip(chosen, advantages):
            counts = np.bincount(np.asarray(seq, dtype=int), minlength=cfg.vocab).astype(np.float64)
            grad += (adv / cfg.gspo.group_size) * (counts / len(seq) - p)
        new_logits = logits + cfg.learning_rate * grad
        value = _surrogate_value(new_logits, logits, chosen, rewards, advantages, cfg.gspo)
        ratios = [seq_ratio(s) for s in make_group(new_logits, logits, chosen, rewards)]
        clipped = sum(1 for r in ratios if r < 1 - cfg.gspo.epsilon or r > 1 + cfg.gspo.epsilon)
        steps.append(DemoStep(
            step=step + 1,
            mean_reward=float(np.mean(rewards)),
            objective=float(value),
            max_abs_advantage=float(max(abs(a) for a in advantages)) if advantages else 0.0,
            min_ratio=float(min(ratios)),
            max_ratio=float(max(ratios)),
            clipped_fraction=clipped / len(ratios),
        ))
        logits = new_logits

    gradient = check_gradient(cfg, instances=10, seed=cfg.seed + 1)
    probe_rewards = [0.0, 2.0] + [1.0] * (cfg.gspo.group_size - 2)
    stability = stability_probe(probe_rewards, cfg.gspo.scale_max)
    return DemoReport(tuple(steps), gradient, stability, cfg.use_cas)
