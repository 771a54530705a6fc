"""Cell topology, channel model, subcarrier assignment, and transfer cost.

Edge servers sit on a hexagonal lattice and each serves the devices whose
nearest server it is. Uplinks share an OFDMA band: every transfer occupies
one subcarrier, assigned round robin inside each cell, and co-channel
transfers in other cells appear as interference at the receiving server.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .distributions import LabelDistribution, uniform_distribution
from .errors import (
    InvalidInputError,
    InvalidParameterError,
    UnknownPairError,
    UnreachableDeviceError,
)

# Default payload per sample: 16 float32 features plus one label byte.
DEFAULT_BITS_PER_SAMPLE = 8 * (16 * 4 + 1)


@dataclass(frozen=True)
class RadioConfig:
    """OFDMA uplink parameters.

    Attributes:
        bandwidth_hz: total band shared by all subcarriers.
        subcarriers: number of equal-width subcarriers.
        noise_power: receiver noise power in watts.
        max_power: device transmit-power ceiling in watts.
        rated_power: nominal transmit power assumed for interferers.
    """

    bandwidth_hz: float = 5e6
    subcarriers: int = 128
    noise_power: float = 1e-13
    max_power: float = 1.0
    rated_power: float = 0.5

    def __post_init__(self):
        if self.bandwidth_hz <= 0:
            raise InvalidParameterError("bandwidth must be positive")
        if self.subcarriers < 1:
            raise InvalidParameterError("need at least one subcarrier")
        if self.noise_power <= 0:
            raise InvalidParameterError("noise power must be positive")
        if self.max_power <= 0:
            raise InvalidParameterError("max power must be positive")
        if not (0 < self.rated_power <= self.max_power):
            raise InvalidParameterError("rated power must lie in (0, max_power]")

    @property
    def subcarrier_bandwidth(self) -> float:
        return self.bandwidth_hz / self.subcarriers


@dataclass(frozen=True)
class Server:
    id: int
    position: tuple


@dataclass(frozen=True)
class Device:
    """One user device: location, payload size, and label histogram."""

    id: int
    position: tuple
    data_bits: int
    dist: LabelDistribution
    home_server: int


@dataclass(frozen=True)
class Topology:
    """Placed servers and devices with frozen channel gains.

    ``gains[u, s]`` is the linear power gain from device row ``u`` (by the
    order of ``devices``) to server ``s``.
    """

    servers: tuple
    devices: tuple
    cell_radius: float
    gains: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.gains, dtype=np.float64).copy()
        if g.shape != (len(self.devices), len(self.servers)):
            raise InvalidInputError("gain matrix shape mismatch")
        g.flags.writeable = False
        object.__setattr__(self, "gains", g)
        object.__setattr__(
            self, "_index", {d.id: i for i, d in enumerate(self.devices)}
        )

    def device(self, device_id: int) -> Device:
        try:
            return self.devices[self._index[device_id]]
        except KeyError:
            raise UnknownPairError(f"no device with id {device_id}") from None

    def gain(self, device_id: int, server_id: int) -> float:
        if not (0 <= server_id < len(self.servers)):
            raise UnknownPairError(f"no server with id {server_id}")
        try:
            row = self._index[device_id]
        except KeyError:
            raise UnknownPairError(f"no device with id {device_id}") from None
        return float(self.gains[row, server_id])

    def distance(self, device_id: int, server_id: int) -> float:
        d = self.device(device_id)
        s = self.servers[server_id]
        return math.dist(d.position, s.position)

    def to_dict(self) -> dict:
        return {
            "cell_radius": self.cell_radius,
            "servers": [
                {"id": s.id, "x": s.position[0], "y": s.position[1]}
                for s in self.servers
            ],
            "devices": [
                {
                    "id": d.id,
                    "x": d.position[0],
                    "y": d.position[1],
                    "data_bits": d.data_bits,
                    "home_server": d.home_server,
                    "counts": [int(c) for c in d.dist.counts],
                }
                for d in self.devices
            ],
            "gains": self.gains.tolist(),
        }

    @staticmethod
    def from_dict(payload: dict) -> "Topology":
        servers = tuple(
            Server(int(s["id"]), (float(s["x"]), float(s["y"])))
            for s in payload["servers"]
        )
        devices = tuple(
            Device(
                int(d["id"]),
                (float(d["x"]), float(d["y"])),
                int(d["data_bits"]),
                LabelDistribution(np.asarray(d["counts"], dtype=np.int64)),
                int(d["home_server"]),
            )
            for d in payload["devices"]
        )
        return Topology(
            servers,
            devices,
            float(payload["cell_radius"]),
            np.asarray(payload["gains"], dtype=np.float64),
        )


def channel_gain(
    distance: float,
    exponent: float = 3.0,
    rng: np.random.Generator | None = None,
    *,
    reference_gain: float = 1e-3,
    reference_distance: float = 1.0,
    fading: bool = True,
) -> float:
    """Log-distance path gain with optional unit-mean Rayleigh power fading.

    Args:
        distance: transmitter-receiver separation in metres, positive.
        exponent: path-loss exponent.
        rng: required when fading is enabled.

    Returns:
        Linear power gain ``g0 * (d0 / d)^exponent`` times an Exp(1) fading
        draw when enabled. Distances inside the reference distance saturate
        at the reference gain.
    """
    if distance <= 0:
        raise InvalidParameterError("distance must be positive")
    d = max(distance, reference_distance)
    gain = reference_gain * (reference_distance / d) ** exponent
    if fading:
        if rng is None:
            raise InvalidParameterError("fading draws need an rng")
        gain *= float(rng.exponential(1.0))
    return gain


def _hex_centers(num_servers: int, cell_radius: float) -> list:
    """Hexagonal lattice centers, row by row, spaced sqrt(3) * radius."""
    cols = math.ceil(math.sqrt(num_servers))
    centers = []
    j = 0
    while len(centers) < num_servers:
        for i in range(cols):
            if len(centers) == num_servers:
                break
            x = (i + 0.5 * (j % 2)) * math.sqrt(3.0) * cell_radius
            y = j * 1.5 * cell_radius
            centers.append((x, y))
        j += 1
    return centers


def place_topology(
    num_servers: int,
    devices_per_server: int,
    cell_radius: float,
    rng: np.random.Generator,
    *,
    dists: Sequence[LabelDistribution] | None = None,
    bits_per_sample: int = DEFAULT_BITS_PER_SAMPLE,
    exponent: float = 3.0,
    reference_gain: float = 1e-3,
    reference_distance: float = 1.0,
    fading: bool = True,
) -> Topology:
    """Place servers on a hex lattice and scatter devices inside their cells.

    Each device is drawn uniformly in its home server's cell disc and
    re-drawn until that server is also its nearest one, so home membership
    and nearest-server membership coincide. Channel gains for every
    device/server pair are drawn once here and frozen.

    Args:
        num_servers: number of edge servers.
        devices_per_server: devices homed to each server.
        cell_radius: service disc radius in metres.
        rng: placement and fading randomness.
        dists: optional per-device label histograms, server-major order;
            defaults to one sample per class over ten classes.
        bits_per_sample: payload bits per histogram sample.

    Returns:
        The placed, immutable topology.
    """
    if num_servers < 1 or devices_per_server < 0:
        raise InvalidParameterError("need at least one server")
    if cell_radius <= 0:
        raise InvalidParameterError("cell radius must be positive")
    total_devices = num_servers * devices_per_server
    if dists is None:
        dists = [uniform_distribution(10, 10) for _ in range(total_devices)]
    if len(dists) != total_devices:
        raise InvalidInputError(
            f"expected {total_devices} device histograms, got {len(dists)}"
        )
    centers = np.asarray(_hex_centers(num_servers, cell_radius))
    servers = tuple(
        Server(i, (float(centers[i, 0]), float(centers[i, 1])))
        for i in range(num_servers)
    )
    devices = []
    positions = []
    device_id = 0
    for s in range(num_servers):
        cx, cy = centers[s]
        for _ in range(devices_per_server):
            while True:
                radius = cell_radius * math.sqrt(float(rng.random()))
                angle = 2.0 * math.pi * float(rng.random())
                px = cx + radius * math.cos(angle)
                py = cy + radius * math.sin(angle)
                d2 = np.sum((centers - (px, py)) ** 2, axis=1)
                if int(np.argmin(d2)) == s:
                    break
            d = dists[device_id]
            devices.append(
                Device(
                    id=device_id,
                    position=(px, py),
                    data_bits=d.total() * bits_per_sample,
                    dist=d,
                    home_server=s,
                )
            )
            positions.append((px, py))
            device_id += 1
    gains = np.empty((total_devices, num_servers))
    for u, (px, py) in enumerate(positions):
        for s in range(num_servers):
            dist_m = math.dist((px, py), tuple(centers[s]))
            gains[u, s] = channel_gain(
                max(dist_m, reference_distance),
                exponent,
                rng,
                reference_gain=reference_gain,
                reference_distance=reference_distance,
                fading=fading,
            )
    return Topology(servers, tuple(devices), cell_radius, gains)


@dataclass(frozen=True)
class SubcarrierMap:
    """Frozen subcarrier assignment for a set of active transfers.

    Attributes:
        assignment: (device, server) -> subcarrier index.
        cochannel: subcarrier index -> tuple of (device, server) pairs
            sorted by device id.
    """

    assignment: Mapping
    cochannel: Mapping

    def subcarrier(self, pair) -> int:
        try:
            return self.assignment[pair]
        except KeyError:
            raise UnknownPairError(f"pair {pair} has no subcarrier") from None


def assign_subcarriers(pairs: Sequence, num_subcarriers: int) -> SubcarrierMap:
    """Round-robin subcarrier assignment, restarting at zero in every cell.

    Pairs are processed in the given order; the n-th transfer inside one
    cell lands on subcarrier ``n % num_subcarriers``. Co-channel sets are
    derived from the finished assignment.
    """
    if num_subcarriers < 1:
        raise InvalidParameterError("need at least one subcarrier")
    seen_devices = set()
    counters: dict = {}
    assignment = {}
    for u, s in pairs:
        if u in seen_devices:
            raise InvalidInputError(f"device {u} appears in more than one pair")
        seen_devices.add(u)
        k = counters.get(s, 0)
        assignment[(u, s)] = k % num_subcarriers
        counters[s] = k + 1
    cochannel: dict = {}
    for pair, k in assignment.items():
        cochannel.setdefault(k, []).append(pair)
    frozen = {k: tuple(sorted(v)) for k, v in cochannel.items()}
    return SubcarrierMap(dict(assignment), frozen)


def sinr(
    pair,
    power: float,
    smap: SubcarrierMap,
    topo: Topology,
    cfg: RadioConfig,
    powers: Mapping | None = None,
) -> float:
    """Signal-to-interference-plus-noise ratio of one transfer.

    Interference sums the received power of every co-channel transfer at
    this pair's server. Interferer transmit powers come from ``powers`` when
    given and fall back to the rated power otherwise.
    """
    if power < 0:
        raise InvalidParameterError("transmit power must be non-negative")
    u, s = pair
    k = smap.subcarrier(pair)
    own = topo.gain(u, s) * power
    interference = 0.0
    for v, sv in smap.cochannel[k]:
        if v == u:
            continue
        p_v = cfg.rated_power if powers is None else powers.get((v, sv), cfg.rated_power)
        interference += p_v * topo.gain(v, s)
    return own / (cfg.noise_power + interference)


def rate(sinr_value: float, cfg: RadioConfig) -> float:
    """Achievable uplink rate in bits per second on one subcarrier."""
    if sinr_value < 0:
        raise InvalidParameterError("SINR must be non-negative")
    return cfg.subcarrier_bandwidth * math.log2(1.0 + sinr_value)


def transfer_time(data_bits: float, rate_bps: float) -> float:
    """Seconds needed to move ``data_bits`` at ``rate_bps``."""
    if rate_bps <= 0:
        raise UnreachableDeviceError("link rate is zero")
    if data_bits < 0:
        raise InvalidParameterError("data volume must be non-negative")
    return data_bits / rate_bps


@dataclass(frozen=True)
class TransferRecord:
    """Radio outcome of one planned device-to-server transfer."""

    device: int
    server: int
    subcarrier: int
    power: float
    sinr: float
    rate: float
    transfer_seconds: float
    energy_joules: float


@dataclass(frozen=True)
class OffloadPlan:
    """The set of transfers selected by a scheduling run."""

    entries: tuple

    def __post_init__(self):
        seen = set()
        for e in self.entries:
            if e.device in seen:
                raise InvalidInputError(
                    f"device {e.device} assigned to more than one server"
                )
            seen.add(e.device)
            if e.rate <= 0:
                raise UnreachableDeviceError(
                    f"planned transfer for device {e.device} has zero rate"
                )

    def pairs(self) -> list:
        return [(e.device, e.server) for e in self.entries]

    def powers(self) -> dict:
        return {(e.device, e.server): e.power for e in self.entries}

    def to_dict(self) -> dict:
        return {
            "entries": [
                {
                    "device": e.device,
                    "server": e.server,
                    "subcarrier": e.subcarrier,
                    "power": e.power,
                    "sinr": e.sinr,
                    "rate": e.rate,
                    "transfer_seconds": e.transfer_seconds,
                    "energy_joules": e.energy_joules,
                }
                for e in self.entries
            ]
        }

    @staticmethod
    def from_dict(payload: dict) -> "OffloadPlan":
        return OffloadPlan(
            tuple(
                TransferRecord(
                    device=int(e["device"]),
                    server=int(e["server"]),
                    subcarrier=int(e["subcarrier"]),
                    power=float(e["power"]),
                    sinr=float(e["sinr"]),
                    rate=float(e["rate"]),
                    transfer_seconds=float(e["transfer_seconds"]),
                    energy_joules=float(e["energy_joules"]),
                )
                for e in payload["entries"]
            )
        )


def system_cost(
    plan: OffloadPlan,
    powers: Mapping,
    topo: Topology,
    cfg: RadioConfig,
    smap: SubcarrierMap,
) -> float:
    """Total transfer energy of a plan in joules.

    Each pair contributes ``power * transfer_time`` with the time recomputed
    from the given powers, so the same plan can be costed under different
    power policies.
    """
    total = 0.0
    for e in plan.entries:
        pair = (e.device, e.server)
        if pair not in powers:
            raise UnknownPairError(f"no power allocated for pair {pair}")
        p = float(powers[pair])
        r = rate(sinr(pair, p, smap, topo, cfg), cfg)
        t = transfer_time(topo.device(e.device).data_bits, r)
        total += p * t
    return total
