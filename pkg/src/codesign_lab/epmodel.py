"""Expert-parallel communication bounds, node-limited routing and MTP speedup.

GB is 10**9 bytes throughout.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ScoreLengthMismatchError

GB = 1e9


@dataclass(frozen=True)
class EpScenario:
    tokens_per_device: int = 32
    hidden_dim: int = 7000
    dispatch_bytes: float = 1.0  # FP8
    combine_bytes: float = 2.0  # BF16
    fanout: int = 9  # 8 routed + 1 shared expert
    layers: int = 61

    def __post_init__(self):
        for name in ("tokens_per_device", "hidden_dim", "fanout", "layers"):
            v = getattr(self, name)
            # tokens_per_device = 0 is allowed: an idle device communicates nothing
            lo = 0 if name == "tokens_per_device" else 1
            if not isinstance(v, int) or v < lo:
                raise ConfigError(f"must be an integer >= {lo}, got {v!r}", f"ep.{name}")
        for name in ("dispatch_bytes", "combine_bytes"):
            if getattr(self, name) <= 0:
                raise ConfigError("must be positive", f"ep.{name}")


@dataclass(frozen=True)
class BandwidthModel:
    nvlink_effective: float = 160 * GB
    nic_effective: float = 40 * GB
    nic_peak: float = 50 * GB

    def __post_init__(self):
        for name in ("nvlink_effective", "nic_effective", "nic_peak"):
            if getattr(self, name) <= 0:
                raise ConfigError("must be positive", f"bandwidth.{name}")
        if self.nic_effective > self.nic_peak:
            raise ConfigError("effective NIC bandwidth exceeds peak", "bandwidth.nic_effective")

    @property
    def scale_up_to_out_ratio(self) -> float:
        return self.nvlink_effective / self.nic_effective


def alltoall_time(s: EpScenario, bandwidth: float) -> float:
    """Seconds for one dispatch + combine round on a device (bandwidth in bytes/s)."""
    if bandwidth <= 0:
        raise ValueError("bandwidth must be positive")
    return (s.dispatch_bytes + s.combine_bytes) * s.tokens_per_device * s.fanout * s.hidden_dim / bandwidth


@dataclass(frozen=True)
class TpotBound:
    comm_time: float
    per_layer: float
    tpot: float

    @property
    def tokens_per_second(self) -> float:
        return 1.0 / self.tpot if self.tpot > 0 else math.inf

    @property
    def tokens_per_second_floor(self) -> int:
        return math.floor(self.tokens_per_second)


def tpot_bound(s: EpScenario, bandwidth: float) -> TpotBound:
    """Communication-bound decode time per token under dual micro-batch overlap.

    With two micro-batches overlapped, each layer costs two all-to-all rounds
    and compute is assumed fully hidden. Per-message network latency is not
    included.
    """
    comm = alltoall_time(s, bandwidth)
    per_layer = 2 * comm
    return TpotBound(comm, per_layer, s.layers * per_layer)


def mtp_speedup(accept_rate: float) -> float:
    """Decode TPS multiplier with one MTP draft token per step (draft cost ignored)."""
    if not 0.0 <= accept_rate <= 1.0:
        raise ValueError(f"accept_rate must be in [0, 1], got {accept_rate}")
    return 1.0 + accept_rate


def dedup_ib_time(m_nodes: int, t: float, fanout: int = 8) -> tuple[float, float]:
    """IB time ``M * t`` for a token reaching ``m_nodes`` nodes, and the
    reduction factor versus sending one copy per routed expert."""
    if m_nodes < 1 or t <= 0:
        raise ValueError("need m_nodes >= 1 and t > 0")
    return m_nodes * t, fanout / m_nodes


# ------------------------------------------------------------------ routing


class GroupScore(enum.Enum):
    SUM_TOP2 = "SUM_TOP2"
    SUM_TOPK = "SUM_TOPK"
    MAX = "MAX"


@dataclass(frozen=True)
class RoutingPolicy:
    n_experts: int = 256
    n_groups: int = 8
    experts_per_group: int = 32
    top_k: int = 8
    max_groups: int = 4
    group_score: GroupScore = GroupScore.SUM_TOP2

    def __post_init__(self):
        object.__setattr__(self, "group_score", GroupScore(self.group_score))
        for name in ("n_experts", "n_groups", "experts_per_group", "top_k", "max_groups"):
            v = getattr(self, name)
            if not isinstance(v, int) or v < 1:
                raise ConfigError(f"must be a positive integer, got {v!r}", f"routing.{name}")
        if self.n_groups * self.experts_per_group != self.n_experts:
            raise ConfigError("n_groups * experts_per_group must equal n_experts", "routing.n_experts")
        if self.max_groups > self.n_groups:
            raise ConfigError("max_groups exceeds n_groups", "routing.max_groups")
        if self.top_k > self.max_groups * self.experts_per_group:
            raise ConfigError("top_k exceeds the experts available in max_groups groups", "routing.top_k")

    def unrestricted(self) -> RoutingPolicy:
        return RoutingPolicy(
            self.n_experts, self.n_groups, self.experts_per_group, self.top_k, self.n_groups, self.group_score
        )


def _topk_indices(scores: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k largest entries along the last axis, ties to the lower index."""
    # stable sort on -score keeps lower indices first among equal scores
    return np.argsort(-scores, axis=-1, kind="stable")[..., :k]


def group_scores(scores: np.ndarray, policy: RoutingPolicy) -> np.ndarray:
    """Per-group ranking score, shape (..., n_groups)."""
    g = scores.reshape(*scores.shape[:-1], policy.n_groups, policy.experts_per_group)
    if policy.group_score is GroupScore.MAX:
        return g.max(axis=-1)
    take = 2 if policy.group_score is GroupScore.SUM_TOP2 else policy.top_k
    take = min(take, policy.experts_per_group)
    part = -np.sort(-g, axis=-1)[..., :take]
    return part.sum(axis=-1)


def route_batch(scores, policy: RoutingPolicy) -> tuple[np.ndarray, np.ndarray]:
    """Node-limited top-k for a batch of score vectors.

    Returns ``(experts, m)``: selected expert ids (tokens, top_k) ordered by
    descending score, and the number of distinct groups each token hits.
    """
    s = np.asarray(scores, dtype=np.float64)
    if s.shape[-1] != policy.n_experts:
        raise ScoreLengthMismatchError(f"expected {policy.n_experts} scores, got {s.shape[-1]}")
    if not np.all(np.isfinite(s)):
        raise ValueError("scores must be finite")
    s2 = s.reshape(-1, policy.n_experts)
    if policy.max_groups < policy.n_groups:
        kept = _topk_indices(group_scores(s2, policy), policy.max_groups)
        group_mask = np.zeros((s2.shape[0], policy.n_groups), dtype=bool)
        np.put_along_axis(group_mask, kept, True, axis=-1)
        expert_mask = np.repeat(group_mask, policy.experts_per_group, axis=-1)
        masked = np.where(expert_mask, s2, -np.inf)
    else:
        masked = s2
    experts = _topk_indices(masked, policy.top_k)
    m = count_groups(experts, policy)
    return experts.reshape(*s.shape[:-1], policy.top_k), m.reshape(s.shape[:-1])


def count_groups(experts: np.ndarray, policy: RoutingPolicy) -> np.ndarray:
    groups = np.asarray(experts) // policy.experts_per_group
    hit = np.zeros((*groups.shape[:-1], policy.n_groups), dtype=bool)
    np.put_along_axis(hit, groups, True, axis=-1)
    return hit.sum(axis=-1)


@dataclass(frozen=True)
class RouteResult:
    experts: tuple[int, ...]
    m: int


def node_limited_route(scores, policy: RoutingPolicy) -> RouteResult:
    """Keep the best ``max_groups`` groups, then take the global top-k inside them."""
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    experts, m = route_batch(s[None, :], policy)
    return RouteResult(tuple(int(e) for e in experts[0]), int(m[0]))


def expected_groups_uniform(policy: RoutingPolicy) -> float:
    """Exact mean number of groups hit by a uniformly random k-subset of experts."""
    n, per, k = policy.n_experts, policy.experts_per_group, policy.top_k
    return policy.n_groups * (1 - math.comb(n - per, k) / math.comb(n, k))


SCORE_DISTRIBUTIONS = ("uniform", "normal", "gumbel")
CHUNK = 4096


@dataclass(frozen=True)
class RoutingSimResult:
    trials: int
    seed: int
    distribution: str
    max_groups: int
    hist_unrestricted: tuple[int, ...]  # index = M
    hist_limited: tuple[int, ...]
    mean_m_unrestricted: float
    mean_m_limited: float
    stderr_m_unrestricted: float
    stderr_m_limited: float
    mean_reduction_limited: float  # mean of top_k / M

    @property
    def p_limited_exceeds(self) -> float:
        return 0.0 if self.trials == 0 else sum(self.hist_limited[self.max_groups + 1 :]) / self.trials


def _draw(rng: np.random.Generator, distribution: str, shape) -> np.ndarray:
    if distribution == "uniform":
        return rng.random(shape)
    if distribution == "normal":
        return rng.standard_normal(shape)
    if distribution == "gumbel":
        return rng.gumbel(size=shape)
    raise ValueError(f"unknown score distribution {distribution!r}")


def routing_sim(
    policy: RoutingPolicy, trials: int = 100_000, seed: int = 0, distribution: str = "uniform"
) -> RoutingSimResult:
    """Monte-Carlo distribution of M for unrestricted and node-limited routing.

    Trials are drawn in fixed chunks, each from its own counter-based stream
    (Philox keyed by ``seed``, counter = chunk index), so results depend only
    on ``(policy, trials, seed, distribution)``.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    free = policy.unrestricted()
    n_bins = policy.n_groups + 1
    hist_u = np.zeros(n_bins, dtype=np.int64)
    hist_l = np.zeros(n_bins, dtype=np.int64)
    red = 0.0
    for chunk, start in enumerate(range(0, trials, CHUNK)):
        n = min(CHUNK, trials - start)
        rng = np.random.Generator(np.random.Philox(key=seed, counter=chunk))
        s = _draw(rng, distribution, (n, policy.n_experts))
        _, m_u = route_batch(s, free)
        _, m_l = route_batch(s, policy)
        hist_u += np.bincount(m_u, minlength=n_bins)
        hist_l += np.bincount(m_l, minlength=n_bins)
        red += float(np.sum(policy.top_k / m_l))
    ms = np.arange(n_bins)

    def moments(h):
        mean = float((h * ms).sum() / trials)
        var = float((h * (ms - mean) ** 2).sum() / max(trials - 1, 1))
        return mean, math.sqrt(var / trials)

    mu_u, se_u = moments(hist_u)
    mu_l, se_l = moments(hist_l)
    return RoutingSimResult(
        trials=trials,
        seed=seed,
        distribution=distribution,
        max_groups=policy.max_groups,
        hist_unrestricted=tuple(int(x) for x in hist_u),
        hist_limited=tuple(int(x) for x in hist_l),
        mean_m_unrestricted=mu_u,
        mean_m_limited=mu_l,
        stderr_m_unrestricted=se_u,
        stderr_m_limited=se_l,
        mean_reduction_limited=red / trials,
    )
