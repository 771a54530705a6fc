"""Scenario configuration, the end-to-end pipeline, sweeps, and emission.

A scenario seed expands into independent streams for topology placement,
data synthesis, scheduling, and training, so two runs of the same config
produce byte-identical result files.
"""

from __future__ import annotations

import concurrent.futures
import json
import os
import platform
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .distributions import (
    Dataset,
    DirichletProfile,
    GroupedProfile,
    NonIidProfile,
    materialize,
    generate_clients,
    separated_feature_model,
    uniform_distribution,
)
from .divergence import DivergenceReport, audit_drift_bound
from .errors import InvalidInputError, InvalidParameterError
from .federated import (
    TrainConfig,
    iid_counterpart,
    run_fl,
    run_paired,
)
from .network import (
    DEFAULT_BITS_PER_SAMPLE,
    OffloadPlan,
    RadioConfig,
    Topology,
    assign_subcarriers,
    place_topology,
    system_cost,
)
from .power import PowerAllocation
from .rng import keyed_stream, substream
from .scheduler import (
    OffloadTrace,
    Policy,
    SchedulerConfig,
    run_scheduler,
    uniform_target,
)

OUTPUT_DIR_ENV = "EDGEFED_OUT"

TRACE_HEADER = "round,server,kl,total,device"
METRICS_HEADER = "round,loss,accuracy"
POWER_HEADER = "device,server,subcarrier,power_w,energy_j"


@dataclass(frozen=True)
class TopologyParams:
    num_servers: int = 10
    devices_per_server: int = 20
    cell_radius: float = 500.0
    path_loss_exponent: float = 3.0
    reference_gain: float = 1e-3
    reference_distance: float = 1.0
    fading: bool = True


@dataclass(frozen=True)
class DataParams:
    """Synthetic data description for one scenario."""

    profile: NonIidProfile = field(default_factory=GroupedProfile)
    num_classes: int = 10
    feat_dim: int = 16
    separation: float = 6.0
    feature_std: float = 1.0
    bits_per_sample: int = DEFAULT_BITS_PER_SAMPLE
    eval_samples_per_class: int = 100


@dataclass(frozen=True)
class SchedulerParams:
    gamma: int = 200
    policy: str = Policy.MIN_KL.value
    stop_at_threshold: bool = False


@dataclass(frozen=True)
class TrainParams:
    phi: float = 0.05
    local_steps: int = 1
    rounds: int = 30
    batch_size: int | None = None


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything one simulation run depends on."""

    seed: int = 1
    topology: TopologyParams = field(default_factory=TopologyParams)
    radio: RadioConfig = field(default_factory=RadioConfig)
    data: DataParams = field(default_factory=DataParams)
    scheduler: SchedulerParams = field(default_factory=SchedulerParams)
    train: TrainParams = field(default_factory=TrainParams)
    audit: bool = True
    tags: tuple = ()
    out_dir: str | None = None

    def to_dict(self) -> dict:
        profile = self.data.profile
        if isinstance(profile, GroupedProfile):
            profile_dict = {
                "kind": "grouped",
                "high_mean": profile.high_mean,
                "high_std": profile.high_std,
                "low_mean": profile.low_mean,
                "low_std": profile.low_std,
                "num_high_classes": profile.num_high_classes,
                "group_size": profile.group_size,
                "num_classes": profile.num_classes,
                "redraw_per_client": profile.redraw_per_client,
            }
            if profile.group_weights is not None:
                profile_dict["group_weights"] = list(profile.group_weights)
        elif isinstance(profile, DirichletProfile):
            profile_dict = {
                "kind": "dirichlet",
                "alpha": list(profile.alpha),
                "samples_per_client": profile.samples_per_client,
            }
        else:
            raise InvalidParameterError(
                f"unknown profile type {type(profile).__name__}"
            )
        return {
            "seed": self.seed,
            "topology": {
                "num_servers": self.topology.num_servers,
                "devices_per_server": self.topology.devices_per_server,
                "cell_radius": self.topology.cell_radius,
                "path_loss_exponent": self.topology.path_loss_exponent,
                "reference_gain": self.topology.reference_gain,
                "reference_distance": self.topology.reference_distance,
                "fading": self.topology.fading,
            },
            "radio": {
                "bandwidth_hz": self.radio.bandwidth_hz,
                "subcarriers": self.radio.subcarriers,
                "noise_power": self.radio.noise_power,
                "max_power": self.radio.max_power,
                "rated_power": self.radio.rated_power,
            },
            "data": {
                "profile": profile_dict,
                "num_classes": self.data.num_classes,
                "feat_dim": self.data.feat_dim,
                "separation": self.data.separation,
                "feature_std": self.data.feature_std,
                "bits_per_sample": self.data.bits_per_sample,
                "eval_samples_per_class": self.data.eval_samples_per_class,
            },
            "scheduler": {
                "gamma": self.scheduler.gamma,
                "policy": self.scheduler.policy,
                "stop_at_threshold": self.scheduler.stop_at_threshold,
            },
            "train": {
                "phi": self.train.phi,
                "local_steps": self.train.local_steps,
                "rounds": self.train.rounds,
                "batch_size": self.train.batch_size,
            },
            "audit": self.audit,
            "tags": list(self.tags),
            "out_dir": self.out_dir,
        }

    @staticmethod
    def from_dict(payload: dict) -> "ScenarioConfig":
        def section(name, cls):
            return cls(**dict(payload.get(name, {})))

        data_raw = dict(payload.get("data", {}))
        profile_raw = dict(data_raw.pop("profile", {"kind": "grouped"}))
        kind = profile_raw.pop("kind", "grouped")
        if kind == "grouped":
            if profile_raw.get("group_weights") is not None:
                profile_raw["group_weights"] = tuple(profile_raw["group_weights"])
            profile: NonIidProfile = GroupedProfile(**profile_raw)
        elif kind == "dirichlet":
            profile_raw["alpha"] = tuple(profile_raw["alpha"])
            profile = DirichletProfile(**profile_raw)
        else:
            raise InvalidInputError(f"unknown profile kind {kind!r}")
        return ScenarioConfig(
            seed=int(payload.get("seed", 1)),
            topology=section("topology", TopologyParams),
            radio=section("radio", RadioConfig),
            data=DataParams(profile=profile, **data_raw),
            scheduler=section("scheduler", SchedulerParams),
            train=section("train", TrainParams),
            audit=bool(payload.get("audit", True)),
            tags=tuple(payload.get("tags", ())),
            out_dir=payload.get("out_dir"),
        )

    @staticmethod
    def from_json(path) -> "ScenarioConfig":
        with open(path) as fh:
            return ScenarioConfig.from_dict(json.load(fh))


def desk_config(seed: int = 1, **overrides) -> ScenarioConfig:
    """Small configuration that exercises the whole pipeline in seconds."""
    return replace(ScenarioConfig(seed=seed), **overrides)


def paper_scale_config(seed: int = 1) -> ScenarioConfig:
    """Ten servers with a hundred devices each and a heavier threshold."""
    return ScenarioConfig(
        seed=seed,
        topology=TopologyParams(num_servers=10, devices_per_server=100),
        scheduler=SchedulerParams(gamma=500),
    )


@dataclass(frozen=True)
class ResultsBundle:
    """Everything a scenario run produced."""

    config: dict
    topology: Topology
    plan: OffloadPlan
    trace: OffloadTrace
    allocation: PowerAllocation
    cost_joules: float
    cost_max_power_joules: float
    metrics: tuple
    final_accuracy: float
    audit: DivergenceReport | None
    versions: dict
    wall_clock: float


def _versions() -> dict:
    return {
        "edgefed": __version__,
        "numpy": np.__version__,
        "python": platform.python_version(),
    }


def build_population(cfg: ScenarioConfig):
    """Generate client histograms and place the topology for a scenario."""
    data_rng = substream(cfg.seed, "data")
    topo_rng = substream(cfg.seed, "topology")
    total_devices = cfg.topology.num_servers * cfg.topology.devices_per_server
    dists = generate_clients(cfg.data.profile, total_devices, data_rng)
    topo = place_topology(
        cfg.topology.num_servers,
        cfg.topology.devices_per_server,
        cfg.topology.cell_radius,
        topo_rng,
        dists=dists,
        bits_per_sample=cfg.data.bits_per_sample,
        exponent=cfg.topology.path_loss_exponent,
        reference_gain=cfg.topology.reference_gain,
        reference_distance=cfg.topology.reference_distance,
        fading=cfg.topology.fading,
    )
    return dists, topo


def server_datasets_from_plan(
    cfg: ScenarioConfig, topo: Topology, plan: OffloadPlan
) -> list:
    """Materialise the planned transfers into per-server training sets.

    Device features are drawn from a stream keyed by device id, so the same
    device carries the same samples no matter which policy selected it.
    """
    model = separated_feature_model(
        cfg.data.num_classes,
        cfg.data.feat_dim,
        cfg.data.separation,
        cfg.data.feature_std,
    )
    by_server: dict = {}
    for e in plan.entries:
        dev = topo.device(e.device)
        rng = keyed_stream(cfg.seed, "data", dev.id)
        by_server.setdefault(e.server, []).append(materialize(dev.dist, model, rng))
    out = []
    for s in sorted(by_server):
        out.append(Dataset.concat(by_server[s]))
    return out


def iid_reference(cfg: ScenarioConfig, sizes, rng) -> list:
    """Idealised IID server datasets: uniform labels, fresh features.

    One dataset per entry in ``sizes``, each drawn label-balanced from the
    scenario's feature model. This is the upper-reference arm for policy
    comparisons, as opposed to ``iid_counterpart`` which reshuffles an
    existing capture.
    """
    model = separated_feature_model(
        cfg.data.num_classes,
        cfg.data.feat_dim,
        cfg.data.separation,
        cfg.data.feature_std,
    )
    out = []
    for n in sizes:
        hist = uniform_distribution(cfg.data.num_classes, int(n))
        out.append(materialize(hist, model, rng))
    return out


def evaluation_set(cfg: ScenarioConfig) -> Dataset:
    """Held-out, label-balanced dataset drawn from the scenario's eval stream."""
    model = separated_feature_model(
        cfg.data.num_classes,
        cfg.data.feat_dim,
        cfg.data.separation,
        cfg.data.feature_std,
    )
    hist = uniform_distribution(
        cfg.data.num_classes,
        cfg.data.num_classes * cfg.data.eval_samples_per_class,
    )
    return materialize(hist, model, substream(cfg.seed, "eval"))


def run_scenario(cfg: ScenarioConfig) -> ResultsBundle:
    """Full pipeline: population, scheduling, pricing, training, audit.

    Returns:
        A ``ResultsBundle``; its CSV and JSON projections are stable across
        repeated runs of the same config.
    """
    started = time.perf_counter()
    _, topo = build_population(cfg)
    target = uniform_target(
        cfg.topology.num_servers, cfg.scheduler.gamma, cfg.data.num_classes
    )
    sched_cfg = SchedulerConfig(
        gamma=cfg.scheduler.gamma,
        target=target,
        policy=Policy.parse(cfg.scheduler.policy),
        stop_at_threshold=cfg.scheduler.stop_at_threshold,
    )
    plan, trace = run_scheduler(
        sched_cfg, topo, cfg.radio, substream(cfg.seed, "scheduler")
    )
    smap = assign_subcarriers(plan.pairs(), cfg.radio.subcarriers)
    allocation = PowerAllocation.from_plan(plan)
    cost = system_cost(plan, allocation.powers, topo, cfg.radio, smap)
    ceiling = {pair: cfg.radio.max_power for pair in plan.pairs()}
    cost_max = system_cost(plan, ceiling, topo, cfg.radio, smap)
    server_data = server_datasets_from_plan(cfg, topo, plan)
    eval_set = evaluation_set(cfg)
    train_cfg = TrainConfig(
        phi=cfg.train.phi,
        local_steps=cfg.train.local_steps,
        rounds=cfg.train.rounds,
        batch_size=cfg.train.batch_size,
    )
    metrics, final_model = run_fl(
        server_data, train_cfg, eval_set, rng=substream(cfg.seed, "training")
    )
    report = None
    if cfg.audit:
        audit_cfg = TrainConfig(
            phi=cfg.train.phi,
            local_steps=cfg.train.local_steps,
            rounds=cfg.train.rounds,
            batch_size=None,
        )
        twin = iid_counterpart(server_data, substream(cfg.seed, "iid"))
        paired = run_paired(server_data, twin, audit_cfg)
        report = audit_drift_bound(paired, server_data)
    final_acc = metrics[-1].accuracy if metrics else float("nan")
    return ResultsBundle(
        config=cfg.to_dict(),
        topology=topo,
        plan=plan,
        trace=trace,
        allocation=allocation,
        cost_joules=cost,
        cost_max_power_joules=cost_max,
        metrics=tuple(metrics),
        final_accuracy=float(final_acc),
        audit=report,
        versions=_versions(),
        wall_clock=time.perf_counter() - started,
    )


def sweep(configs: Sequence[ScenarioConfig], jobs: int = 1) -> list:
    """Run several scenarios, optionally in parallel.

    Results come back in input order. A failing scenario contributes an
    error record instead of aborting its siblings, and the outputs do not
    depend on the level of parallelism.
    """
    if jobs < 1:
        raise InvalidParameterError("jobs must be at least 1")

    def one(cfg: ScenarioConfig):
        try:
            return {"ok": True, "bundle": run_scenario(cfg)}
        except Exception as exc:  # noqa: BLE001 (isolation is the point here)
            return {
                "ok": False,
                "error": {"type": type(exc).__name__, "message": str(exc)},
                "config": cfg.to_dict(),
            }

    if jobs == 1:
        return [one(cfg) for cfg in configs]
    with concurrent.futures.ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(one, configs))


def _fmt(value: float) -> str:
    return repr(float(value))


def resolve_out_dir(cfg: ScenarioConfig, override: str | None = None) -> Path:
    """Pick the output directory: env override, CLI value, config, cwd."""
    env = os.environ.get(OUTPUT_DIR_ENV)
    chosen = env or override or cfg.out_dir or "."
    return Path(chosen)


def emit(bundle: ResultsBundle, out_dir, formats: Sequence[str] = ("csv", "json")) -> list:
    """Write a bundle's CSV tables and JSON summary under ``out_dir``.

    Returns the list of written paths. Emission is pure projection: writing
    the same bundle twice produces byte-identical files.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if "csv" in formats:
        trace_path = out / "trace.csv"
        lines = [TRACE_HEADER]
        for r in bundle.trace.rows:
            lines.append(f"{r.round},{r.server},{_fmt(r.kl)},{r.total},{r.device}")
        trace_path.write_text("\n".join(lines) + "\n")
        written.append(trace_path)

        metrics_path = out / "metrics.csv"
        lines = [METRICS_HEADER]
        for m in bundle.metrics:
            lines.append(f"{m.round},{_fmt(m.global_loss)},{_fmt(m.accuracy)}")
        metrics_path.write_text("\n".join(lines) + "\n")
        written.append(metrics_path)

        power_path = out / "power.csv"
        lines = [POWER_HEADER]
        for e in bundle.plan.entries:
            lines.append(
                f"{e.device},{e.server},{e.subcarrier},"
                f"{_fmt(e.power)},{_fmt(e.energy_joules)}"
            )
        power_path.write_text("\n".join(lines) + "\n")
        written.append(power_path)
    if "json" in formats:
        plan_path = out / "plan.json"
        plan_path.write_text(
            json.dumps(bundle.plan.to_dict(), indent=2, sort_keys=True) + "\n"
        )
        written.append(plan_path)

        summary = {
            "config": bundle.config,
            "cost_joules": bundle.cost_joules,
            "cost_max_power_joules": bundle.cost_max_power_joules,
            "final_accuracy": bundle.final_accuracy,
            "rounds": len(bundle.metrics),
            "plan_size": len(bundle.plan.entries),
            "audit": bundle.audit.to_dict() if bundle.audit else None,
            "versions": bundle.versions,
        }
        summary_path = out / "summary.json"
        summary_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
        written.append(summary_path)
    return written
