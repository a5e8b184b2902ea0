"""Analytical per-round training-delay model for the three-way split.

Pure functions of (profile, fleet, split): phase 0 distributes the weak-
and aggregator-side models, phase 1 is the forward pass up to the cut
layer plus activation uploads, phase 2 overlaps the server-side update
with the aggregator/weak backward pass, phase 3 uploads the trained
segments. A round is d0 + E*B*(d1 + d2) + d3.

Backward-pass compute on the client side is counted at factor 1 while the
server term carries the explicit factor 2 (forward plus backward); this
asymmetry is kept as-is so the closed forms stay reproducible. Self-links
(a client acting as its own aggregator) cost nothing; rate entries (i, i)
are never consulted. Aggregation itself is treated as free.
"""

from __future__ import annotations

from dataclasses import dataclass

from .profiles import (
    SERVER_ID,
    FleetSpec,
    ModelProfile,
    SplitConfig,
    segment_bits,
    segment_flops,
)


@dataclass(frozen=True)
class DelayBreakdown:
    """Per-phase delays in seconds plus the epoch/batch multipliers."""

    d0: float
    d1: float
    d2: float
    d3: float
    epochs: int
    batches: int

    @property
    def d_round(self) -> float:
        return self.d0 + self.epochs * self.batches * (self.d1 + self.d2) + self.d3


def _activation_bits(profile: ModelProfile, layer: int) -> float:
    return profile.layers[layer - 1].activation_bits


def phase0_delay(profile: ModelProfile, fleet: FleetSpec, split: SplitConfig) -> float:
    """Slowest model download: weak-side to weak clients, aggregator-side to aggregators."""
    split.validate(profile.num_layers)
    weak_bits = segment_bits(profile, 1, split.h)
    agg_bits = segment_bits(profile, split.h + 1, split.v)
    d_weak = max(
        (weak_bits / fleet.rate(SERVER_ID, c.id) for c in fleet.weak_clients),
        default=0.0,
    )
    d_agg = max(
        (agg_bits / fleet.rate(SERVER_ID, k.id) for k in fleet.aggregators),
        default=0.0,
    )
    return max(d_weak, d_agg)


def phase1_delay(profile: ModelProfile, fleet: FleetSpec, split: SplitConfig) -> float:
    """Slowest chain: weak forward, activation hand-off, aggregator forward, cut upload.

    Each client is paired with its aggregator (itself for aggregator-role
    clients); the aggregator's forward and upload terms scale with |S_k|,
    the number of models it hosts.
    """
    split.validate(profile.num_layers)
    f_weak = segment_flops(profile, 1, split.h)
    f_agg = segment_flops(profile, split.h + 1, split.v)
    s_h = _activation_bits(profile, split.h)
    s_v = _activation_bits(profile, split.v)

    worst = 0.0
    for c in fleet.clients:
        k_id = fleet.aggregator_of(c.id)
        k = fleet.client(k_id)
        m = fleet.group_size(k_id)
        t = f_weak / c.compute_speed
        if c.id != k_id:
            t += s_h / fleet.rate(c.id, k_id)
        t += f_agg * m / k.compute_speed
        t += m * s_v / fleet.rate(k_id, SERVER_ID)
        worst = max(worst, t)
    return worst


def phase2_delay(
    profile: ModelProfile,
    fleet: FleetSpec,
    split: SplitConfig,
    bp_factor: float = 1.0,
) -> float:
    """Max of the server-side update and the aggregator-BP/gradient/weak-BP chain.

    bp_factor scales the client-side backward compute terms for sensitivity
    studies; the default 1.0 keeps the closed form in its reproducible shape
    (server at factor 2, clients at factor 1).
    """
    split.validate(profile.num_layers)
    _check_bp_factor(bp_factor)
    f_weak = segment_flops(profile, 1, split.h)
    f_agg = segment_flops(profile, split.h + 1, split.v)
    f_server = segment_flops(profile, split.v + 1, profile.num_layers)
    s_h = _activation_bits(profile, split.h)

    server_term = 2.0 * fleet.num_clients * f_server / fleet.server_speed

    worst_chain = 0.0
    for c in fleet.clients:
        k_id = fleet.aggregator_of(c.id)
        k = fleet.client(k_id)
        m = fleet.group_size(k_id)
        t = bp_factor * f_agg * m / k.compute_speed
        if c.id != k_id:
            t += s_h / fleet.rate(k_id, c.id)
        t += bp_factor * f_weak / c.compute_speed
        worst_chain = max(worst_chain, t)
    return max(server_term, worst_chain)


def phase3_delay(profile: ModelProfile, fleet: FleetSpec, split: SplitConfig) -> float:
    """Slowest trained-segment upload; mirrors phase 0 (server-link rates)."""
    return phase0_delay(profile, fleet, split)


def round_delay(
    profile: ModelProfile,
    fleet: FleetSpec,
    split: SplitConfig,
    epochs: int,
    batches: int,
    bp_factor: float = 1.0,
) -> DelayBreakdown:
    """Full round delay d0 + E*B*(d1 + d2) + d3 for the three-way split."""
    _check_epochs_batches(epochs, batches)
    return DelayBreakdown(
        d0=phase0_delay(profile, fleet, split),
        d1=phase1_delay(profile, fleet, split),
        d2=phase2_delay(profile, fleet, split, bp_factor=bp_factor),
        d3=phase3_delay(profile, fleet, split),
        epochs=epochs,
        batches=batches,
    )


# ---------------------------------------------------------------------------
# Two-way baseline schemes, derived from the same phase template with the
# collaborative layer removed: every client trains layers 1..v itself.
# These are model extensions for comparison runs, not closed forms from the
# three-way analysis.
# ---------------------------------------------------------------------------


def round_delay_sfl(
    profile: ModelProfile,
    fleet: FleetSpec,
    split: SplitConfig,
    epochs: int,
    batches: int,
    bp_factor: float = 1.0,
) -> DelayBreakdown:
    """Two-way split with a blocking server-gradient wait before client BP.

    d2 chains the server update, the cut-gradient download, and the
    client backward pass sequentially: clients idle until gradients
    arrive. Only split.v is used.
    """
    _check_epochs_batches(epochs, batches)
    _check_bp_factor(bp_factor)
    split.validate(profile.num_layers)
    v = split.v
    client_bits = segment_bits(profile, 1, v)
    f_client = segment_flops(profile, 1, v)
    f_server = segment_flops(profile, v + 1, profile.num_layers)
    s_v = _activation_bits(profile, v)

    d0 = max(
        (client_bits / fleet.rate(SERVER_ID, c.id) for c in fleet.clients), default=0.0
    )
    d1 = max(
        (
            f_client / c.compute_speed + s_v / fleet.rate(c.id, SERVER_ID)
            for c in fleet.clients
        ),
        default=0.0,
    )
    server_term = 2.0 * fleet.num_clients * f_server / fleet.server_speed
    wait_and_bp = max(
        (
            s_v / fleet.rate(SERVER_ID, c.id) + bp_factor * f_client / c.compute_speed
            for c in fleet.clients
        ),
        default=0.0,
    )
    d2 = server_term + wait_and_bp
    return DelayBreakdown(d0=d0, d1=d1, d2=d2, d3=d0, epochs=epochs, batches=batches)


def round_delay_locsplitfed(
    profile: ModelProfile,
    fleet: FleetSpec,
    split: SplitConfig,
    epochs: int,
    batches: int,
    bp_factor: float = 1.0,
) -> DelayBreakdown:
    """Two-way split with local-loss BP: no gradient wait, branches overlap.

    d2 is the max of the server update and the slowest client backward
    pass. Only split.v is used.
    """
    _check_epochs_batches(epochs, batches)
    _check_bp_factor(bp_factor)
    split.validate(profile.num_layers)
    v = split.v
    client_bits = segment_bits(profile, 1, v)
    f_client = segment_flops(profile, 1, v)
    f_server = segment_flops(profile, v + 1, profile.num_layers)
    s_v = _activation_bits(profile, v)

    d0 = max(
        (client_bits / fleet.rate(SERVER_ID, c.id) for c in fleet.clients), default=0.0
    )
    d1 = max(
        (
            f_client / c.compute_speed + s_v / fleet.rate(c.id, SERVER_ID)
            for c in fleet.clients
        ),
        default=0.0,
    )
    server_term = 2.0 * fleet.num_clients * f_server / fleet.server_speed
    client_bp = max(
        (bp_factor * f_client / c.compute_speed for c in fleet.clients), default=0.0
    )
    d2 = max(server_term, client_bp)
    return DelayBreakdown(d0=d0, d1=d1, d2=d2, d3=d0, epochs=epochs, batches=batches)


def _check_epochs_batches(epochs: int, batches: int) -> None:
    if epochs < 1:
        raise ValueError(f"epochs must be >= 1, got {epochs}")
    if batches < 1:
        raise ValueError(f"batches must be >= 1, got {batches}")


def _check_bp_factor(bp_factor: float) -> None:
    if bp_factor <= 0:
        raise ValueError(f"bp_factor must be > 0, got {bp_factor}")
