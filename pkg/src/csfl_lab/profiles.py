"""Static descriptions of the model being trained and of the client fleet.

Everything here is immutable after construction and safe to share across
threads. The cost models (delay, overhead) and the training protocols all
consume these types.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping

try:
    import tomllib  # Python >= 3.11
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

SERVER_ID = "server"


class ConfigError(ValueError):
    """A profile, fleet, or config file is incomplete or inconsistent."""


class Role(str, Enum):
    WEAK = "weak"
    AGGREGATOR = "aggregator"


@dataclass(frozen=True)
class LayerProfile:
    """Per-layer cost description.

    weight_bits: size of the layer's weights in bits.
    flops: compute cost of one forward pass over one batch, in Flops.
    activation_bits: size of one batch of output activations in bits;
        defaults to weight_bits so the closed-form models can be evaluated
        from a weights-only profile.
    """

    weight_bits: float
    flops: float
    activation_bits: float | None = None

    def __post_init__(self):
        if self.weight_bits < 0:
            raise ValueError(f"weight_bits must be >= 0, got {self.weight_bits}")
        if self.flops < 0:
            raise ValueError(f"flops must be >= 0, got {self.flops}")
        if self.activation_bits is None:
            object.__setattr__(self, "activation_bits", self.weight_bits)
        elif self.activation_bits < 0:
            raise ValueError(f"activation_bits must be >= 0, got {self.activation_bits}")


@dataclass(frozen=True)
class ModelProfile:
    """Ordered per-layer cost profile of a model with at least 3 layers."""

    layers: tuple[LayerProfile, ...]

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if len(self.layers) < 3:
            raise ValueError(
                f"a model profile needs at least 3 layers, got {len(self.layers)}"
            )

    @property
    def num_layers(self) -> int:
        return len(self.layers)


@dataclass(frozen=True)
class ClientSpec:
    """One client device: unique id, compute speed in Flops/sec, role."""

    id: str
    compute_speed: float
    role: Role

    def __post_init__(self):
        if self.compute_speed <= 0:
            raise ValueError(
                f"client {self.id!r}: compute_speed must be > 0, got {self.compute_speed}"
            )


@dataclass(frozen=True)
class SplitConfig:
    """A (collaborative layer h, cut layer v) split.

    Layers 1..h form the weak-side segment, h+1..v the aggregator-side
    segment, and v+1..V the server-side segment, so the three segments
    partition the model. Requires 1 <= h < v; the upper bound v <= V-1
    is checked against a concrete profile via validate().
    """

    h: int
    v: int

    def __post_init__(self):
        if not (1 <= self.h < self.v):
            raise ValueError(f"split needs 1 <= h < v, got (h={self.h}, v={self.v})")

    def validate(self, num_layers: int) -> None:
        if self.v > num_layers - 1:
            raise ValueError(
                f"cut layer v={self.v} must leave the server at least one layer "
                f"(v <= {num_layers - 1} for a {num_layers}-layer model)"
            )


@dataclass(frozen=True)
class FleetSpec:
    """The client fleet, the server, and the network connecting them.

    rates maps ordered (transmitter, receiver) id pairs to link rates in
    bps; default_rate, when set, backs any pair without an explicit entry.
    assignment maps each weak client id to its aggregator id; aggregators
    are implicitly assigned to themselves.
    """

    clients: tuple[ClientSpec, ...]
    server_speed: float
    rates: Mapping[tuple[str, str], float]
    assignment: Mapping[str, str]
    aggregator_fraction: float
    default_rate: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "clients", tuple(self.clients))
        object.__setattr__(self, "rates", dict(self.rates))
        object.__setattr__(self, "assignment", dict(self.assignment))

    @property
    def num_clients(self) -> int:
        return len(self.clients)

    @property
    def weak_clients(self) -> tuple[ClientSpec, ...]:
        return tuple(c for c in self.clients if c.role is Role.WEAK)

    @property
    def aggregators(self) -> tuple[ClientSpec, ...]:
        return tuple(c for c in self.clients if c.role is Role.AGGREGATOR)

    def client(self, client_id: str) -> ClientSpec:
        for c in self.clients:
            if c.id == client_id:
                return c
        raise ConfigError(f"unknown client id {client_id!r}")

    def aggregator_of(self, client_id: str) -> str:
        """The aggregator serving this client (itself for aggregators)."""
        if client_id in self.assignment:
            return self.assignment[client_id]
        return client_id

    def rate(self, src: str, dst: str) -> float:
        """Link rate src -> dst in bps; raises ConfigError when unresolvable."""
        key = (src, dst)
        if key in self.rates:
            return self.rates[key]
        if self.default_rate is not None:
            return self.default_rate
        raise ConfigError(f"no rate entry for link ({src}, {dst})")

    def group(self, aggregator_id: str) -> tuple[str, ...]:
        """Member ids of S_k (the aggregator plus its assigned clients), in fleet order."""
        return tuple(
            c.id
            for c in self.clients
            if c.id == aggregator_id or self.assignment.get(c.id) == aggregator_id
        )

    def group_size(self, aggregator_id: str) -> int:
        return len(self.group(aggregator_id))


def segment_bits(profile: ModelProfile, lo: int, hi: int) -> float:
    """Sum of weight bits over layers lo..hi (1-based, inclusive)."""
    _check_range(profile, lo, hi)
    return sum(layer.weight_bits for layer in profile.layers[lo - 1 : hi])


def segment_flops(profile: ModelProfile, lo: int, hi: int) -> float:
    """Sum of per-batch forward Flops over layers lo..hi (1-based, inclusive)."""
    _check_range(profile, lo, hi)
    return sum(layer.flops for layer in profile.layers[lo - 1 : hi])


def _check_range(profile: ModelProfile, lo: int, hi: int) -> None:
    if not (1 <= lo <= hi <= profile.num_layers):
        raise ValueError(
            f"layer range [{lo}, {hi}] invalid for a {profile.num_layers}-layer model"
        )


def validate_fleet(fleet: FleetSpec) -> list[str]:
    """Check every fleet invariant; returns a list of violations (empty = ok).

    A clean fleet guarantees that every rate lookup performed by the delay
    model and the protocols succeeds.
    """
    violations: list[str] = []

    seen: set[str] = set()
    for c in fleet.clients:
        if c.id in seen:
            violations.append(f"duplicate client id {c.id!r}")
        seen.add(c.id)
        if c.id == SERVER_ID:
            violations.append(f"client id {SERVER_ID!r} is reserved for the server")

    if fleet.server_speed <= 0:
        violations.append(f"server_speed must be > 0, got {fleet.server_speed}")

    if not (0 < fleet.aggregator_fraction <= 1):
        violations.append(
            f"aggregator_fraction must be in (0, 1], got {fleet.aggregator_fraction}"
        )

    aggregator_ids = {c.id for c in fleet.aggregators}
    expected = round(fleet.aggregator_fraction * fleet.num_clients)
    if fleet.num_clients and expected != len(aggregator_ids):
        violations.append(
            f"aggregator_fraction {fleet.aggregator_fraction} x {fleet.num_clients} clients "
            f"implies {expected} aggregators, fleet has {len(aggregator_ids)}"
        )

    for c in fleet.weak_clients:
        target = fleet.assignment.get(c.id)
        if target is None:
            violations.append(f"weak client {c.id!r} unassigned")
        elif target not in aggregator_ids:
            violations.append(
                f"weak client {c.id!r} assigned to {target!r}, which is not an aggregator"
            )
    for cid, target in fleet.assignment.items():
        if cid not in seen:
            violations.append(f"assignment references unknown client {cid!r}")
        elif cid in aggregator_ids and target != cid:
            violations.append(
                f"aggregator {cid!r} must be assigned to itself, not {target!r}"
            )

    for (src, dst), bps in fleet.rates.items():
        if bps <= 0:
            violations.append(f"rate for ({src}, {dst}) must be > 0, got {bps}")
    if fleet.default_rate is not None and fleet.default_rate <= 0:
        violations.append(f"default rate must be > 0, got {fleet.default_rate}")

    # Every link the delay model or a protocol can consult must resolve.
    needed: list[tuple[str, str]] = []
    for c in fleet.clients:
        needed.append((SERVER_ID, c.id))
        needed.append((c.id, SERVER_ID))
    for c in fleet.weak_clients:
        k = fleet.assignment.get(c.id)
        if k is not None and k in aggregator_ids:
            needed.append((c.id, k))
            needed.append((k, c.id))
    for src, dst in needed:
        if (src, dst) not in fleet.rates and fleet.default_rate is None:
            violations.append(f"no rate entry for link ({src}, {dst})")

    return violations


def profile_from_dims(
    dims: Iterable[int], batch_size: int, bits_per_value: int = 64
) -> ModelProfile:
    """Cost profile of a dense network with the given layer widths.

    dims lists the input width followed by each layer's output width.
    Per layer: weights (fan_in*fan_out + fan_out values), forward compute
    2*batch_size*fan_in*fan_out Flops, activations batch_size*fan_out values.
    """
    dims = list(dims)
    if len(dims) < 4:
        raise ValueError("need at least 3 layers (4 widths) for a splittable profile")
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    layers = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        layers.append(
            LayerProfile(
                weight_bits=bits_per_value * (fan_in * fan_out + fan_out),
                flops=2.0 * batch_size * fan_in * fan_out,
                activation_bits=bits_per_value * batch_size * fan_out,
            )
        )
    return ModelProfile(layers=tuple(layers))


# ---------------------------------------------------------------------------
# Config-file loading ([model] and [fleet] sections of a TOML file)
# ---------------------------------------------------------------------------


def model_profile_from_dict(section: Mapping) -> ModelProfile:
    """Build a ModelProfile from a parsed [model] section."""
    raw_layers = section.get("layers")
    if not raw_layers:
        raise ConfigError("[model] needs at least one [[model.layers]] entry")
    layers = []
    for i, entry in enumerate(raw_layers, start=1):
        try:
            layers.append(
                LayerProfile(
                    weight_bits=float(entry["weight_bits"]),
                    flops=float(entry["flops"]),
                    activation_bits=(
                        float(entry["activation_bits"])
                        if "activation_bits" in entry
                        else None
                    ),
                )
            )
        except KeyError as exc:
            raise ConfigError(f"[[model.layers]] entry {i} missing field {exc}") from exc
        except ValueError as exc:
            raise ConfigError(f"[[model.layers]] entry {i}: {exc}") from exc
    try:
        return ModelProfile(layers=tuple(layers))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def fleet_from_dict(section: Mapping) -> FleetSpec:
    """Build a FleetSpec from a parsed [fleet] section."""
    try:
        server_speed = float(section["server_speed"])
        aggregator_fraction = float(section["aggregator_fraction"])
        raw_clients = section["clients"]
    except KeyError as exc:
        raise ConfigError(f"[fleet] missing field {exc}") from exc

    clients: list[ClientSpec] = []
    assignment: dict[str, str] = {}
    for i, entry in enumerate(raw_clients, start=1):
        try:
            role = Role(str(entry.get("role", "weak")).lower())
        except ValueError as exc:
            raise ConfigError(
                f"[[fleet.clients]] entry {i}: role must be 'weak' or 'aggregator'"
            ) from exc
        try:
            spec = ClientSpec(
                id=str(entry["id"]), compute_speed=float(entry["compute_speed"]), role=role
            )
        except KeyError as exc:
            raise ConfigError(f"[[fleet.clients]] entry {i} missing field {exc}") from exc
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        clients.append(spec)
        if "aggregator" in entry:
            assignment[spec.id] = str(entry["aggregator"])
        elif role is Role.AGGREGATOR:
            assignment[spec.id] = spec.id

    rates: dict[tuple[str, str], float] = {}
    default_rate: float | None = None
    for key, value in dict(section.get("rates", {})).items():
        if key == "default":
            default_rate = float(value)
            continue
        if "->" not in key:
            raise ConfigError(
                f"[fleet.rates] key {key!r} must be 'default' or of the form 'src->dst'"
            )
        src, _, dst = key.partition("->")
        rates[(src.strip(), dst.strip())] = float(value)

    return FleetSpec(
        clients=tuple(clients),
        server_speed=server_speed,
        rates=rates,
        assignment=assignment,
        aggregator_fraction=aggregator_fraction,
        default_rate=default_rate,
    )


def load_profiles(path: str) -> tuple[ModelProfile, FleetSpec]:
    """Load the [model] and [fleet] sections of a TOML config file."""
    with open(path, "rb") as fh:
        doc = tomllib.load(fh)
    if "model" not in doc:
        raise ConfigError(f"{path}: missing [model] section")
    if "fleet" not in doc:
        raise ConfigError(f"{path}: missing [fleet] section")
    return model_profile_from_dict(doc["model"]), fleet_from_dict(doc["fleet"])
