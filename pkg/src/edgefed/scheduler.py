"""Offload scheduling: which device sends its data to which edge server.

The divergence-aware policy greedily hands each server the candidate whose
label distribution is closest, in KL divergence, to what the server still
needs to reach the global target. Two baselines are provided: nearest device
first, and uniformly random order. All policies trace the KL divergence of
the growing server dataset against the global target after every merge.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Callable, Mapping, Sequence

import numpy as np

from .distributions import LabelDistribution, normalize, uniform_distribution
from .divergence import complement, kl
from .errors import InvalidParameterError, PoolExhaustedError
from .network import (
    OffloadPlan,
    RadioConfig,
    Topology,
    assign_subcarriers,
)
from .power import solve_pair


class Policy(str, Enum):
    """Device-selection rule used by the scheduler."""

    MIN_KL = "mklco"
    NEAREST = "iojr"
    RANDOM = "random"

    @staticmethod
    def parse(name: str) -> "Policy":
        for p in Policy:
            if p.value == name.lower():
                return p
        raise InvalidParameterError(f"unknown policy {name!r}")


@dataclass(frozen=True)
class SchedulerConfig:
    """Scheduling inputs.

    Attributes:
        gamma: per-server sample threshold; a server stops adding devices to
            the transfer plan once its planned total reaches it.
        target: global label target the servers collectively chase.
        policy: device-selection rule.
        stop_at_threshold: when True the per-server loop (and its KL trace)
            ends as soon as the plan threshold is reached; when False the
            trace continues through the remaining candidates so the policy's
            long-run matching behaviour stays observable, while the plan is
            still cut at the threshold.
    """

    gamma: int
    target: LabelDistribution
    policy: Policy = Policy.MIN_KL
    stop_at_threshold: bool = False

    def __post_init__(self):
        if self.gamma <= 0:
            raise InvalidParameterError("gamma must be positive")
        if self.target.total() <= 0:
            raise InvalidParameterError("target must contain samples")


@dataclass(frozen=True)
class TraceRow:
    """One merge event: the state of a server after absorbing a device."""

    round: int
    server: int
    kl: float
    total: int
    device: int


@dataclass(frozen=True)
class OffloadTrace:
    """All merge events of a scheduling run, in execution order."""

    rows: tuple

    def per_server(self, server_id: int) -> list:
        return [r for r in self.rows if r.server == server_id]

    def mean_kl_by_round(self, num_servers: int) -> list:
        """Across-server mean KL after each round, carrying finished servers.

        A server that ran out of candidates holds its last value, so the
        mean stays defined for as many rounds as the longest server ran.
        """
        series = [
            [r.kl for r in self.per_server(s)] for s in range(num_servers)
        ]
        series = [s for s in series if s]
        if not series:
            return []
        horizon = max(len(s) for s in series)
        means = []
        for t in range(horizon):
            means.append(
                float(np.mean([s[min(t, len(s) - 1)] for s in series]))
            )
        return means

    def rounds_to_threshold(self, threshold: float, num_servers: int):
        """First round whose across-server mean KL drops below ``threshold``.

        Returns None when the trace never gets there.
        """
        for i, m in enumerate(self.mean_kl_by_round(num_servers)):
            if m < threshold:
                return i + 1
        return None


def uniform_target(num_servers: int, gamma: int, num_classes: int) -> LabelDistribution:
    """Uniform global target sized to ``num_servers * gamma`` samples."""
    if num_servers < 1:
        raise InvalidParameterError("need at least one server")
    if gamma <= 0:
        raise InvalidParameterError("gamma must be positive")
    return uniform_distribution(num_classes, num_servers * gamma)


def serviceable_set(server_id: int, topo: Topology, taken=frozenset()) -> list:
    """Device ids a server may still pull data from, ascending.

    A device qualifies when the server is its home (nearest) server, it has
    not been claimed yet, and it actually holds samples.
    """
    out = [
        d.id
        for d in topo.devices
        if d.home_server == server_id and d.id not in taken and d.dist.total() > 0
    ]
    return sorted(out)


@dataclass(frozen=True)
class StepResult:
    """Outcome of one selection step."""

    device: int
    merged: LabelDistribution
    record: object = None


def min_kl_step(
    server_id: int,
    candidates: Sequence[int],
    dists: Mapping,
    server_dist: LabelDistribution,
    target: LabelDistribution,
    power_solver: Callable | None = None,
) -> StepResult:
    """Pick the candidate closest in KL to the server's remaining demand.

    The demand is the smoothed complement of the target against what the
    server already holds. Ties resolve to the lowest device id. When a
    power solver is supplied it is invoked for the chosen pair and its
    record is attached to the result.

    Raises:
        PoolExhaustedError: no candidates remain.
    """
    if not candidates:
        raise PoolExhaustedError(f"server {server_id} has no candidates left")
    demand = normalize(complement(target, server_dist))
    best_id, best_kl = None, None
    for u in sorted(candidates):
        d = kl(normalize(dists[u]), demand)
        if best_kl is None or d < best_kl:
            best_id, best_kl = u, d
    record = None
    if power_solver is not None:
        record = power_solver((best_id, server_id))
    return StepResult(
        device=best_id,
        merged=server_dist.merge(dists[best_id]),
        record=record,
    )


def _nearest_step(server_id, candidates, dists, server_dist, topo):
    best_id, best_d = None, None
    for u in sorted(candidates):
        d = topo.distance(u, server_id)
        if best_d is None or d < best_d:
            best_id, best_d = u, d
    return StepResult(device=best_id, merged=server_dist.merge(dists[best_id]))


def _random_step(server_id, candidates, dists, server_dist, rng):
    u = int(rng.choice(sorted(candidates)))
    return StepResult(device=u, merged=server_dist.merge(dists[u]))


def run_scheduler(
    cfg: SchedulerConfig,
    topo: Topology,
    radio: RadioConfig,
    rng: np.random.Generator | None = None,
    power_solver: Callable | None = None,
):
    """Run the selected policy over every server and price the plan.

    Servers are processed sequentially by ascending id. Each server merges
    one candidate per round; merges made while the server's planned total is
    still below ``cfg.gamma`` enter the transfer plan. Once every server has
    finished, subcarriers are assigned round robin over the plan in selection
    order and the power solver prices each planned pair against the complete
    co-channel picture.

    Args:
        cfg: scheduling inputs.
        topo: placed topology.
        radio: uplink parameters (subcarrier count, powers, noise).
        rng: required by the random policy only.
        power_solver: optional override with signature
            ``(pair, smap, topo, radio) -> TransferRecord``.

    Returns:
        Tuple ``(plan, trace)``.
    """
    if cfg.policy == Policy.RANDOM and rng is None:
        raise InvalidParameterError("the random policy needs an rng")
    dists = {d.id: d.dist for d in topo.devices}
    target_probs = normalize(cfg.target)
    trace_rows = []
    plan_pairs = []
    for server in topo.servers:
        s = server.id
        candidates = serviceable_set(s, topo)
        server_dist = LabelDistribution.zeros(cfg.target.num_classes)
        plan_total = 0
        round_no = 0
        while candidates:
            round_no += 1
            if cfg.policy == Policy.MIN_KL:
                step = min_kl_step(s, candidates, dists, server_dist, cfg.target)
            elif cfg.policy == Policy.NEAREST:
                step = _nearest_step(s, candidates, dists, server_dist, topo)
            else:
                step = _random_step(s, candidates, dists, server_dist, rng)
            in_plan = plan_total < cfg.gamma
            if in_plan:
                plan_pairs.append((step.device, s))
                plan_total += dists[step.device].total()
            server_dist = step.merged
            trace_rows.append(
                TraceRow(
                    round=round_no,
                    server=s,
                    kl=kl(normalize(server_dist), target_probs),
                    total=server_dist.total(),
                    device=step.device,
                )
            )
            candidates.remove(step.device)
            if cfg.stop_at_threshold and plan_total >= cfg.gamma:
                break
    smap = assign_subcarriers(plan_pairs, radio.subcarriers)
    solver = power_solver or solve_pair
    entries = tuple(solver(pair, smap, topo, radio) for pair in plan_pairs)
    return OffloadPlan(entries), OffloadTrace(tuple(trace_rows))
