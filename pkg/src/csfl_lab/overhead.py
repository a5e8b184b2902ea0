"""Closed-form bits-transmitted-per-round accounting for the three schemes.

With epochs=1 (the default) the formulas are the strict one-round closed
forms, counting activation/gradient traffic for a single epoch; passing
epochs=E scales the activation and gradient terms by E while model
exchanges, which happen once per round, stay unscaled.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from .profiles import ModelProfile, SplitConfig, segment_bits


class Scheme(str, Enum):
    SFL = "sfl"
    LOCSPLITFED = "locsplitfed"
    CSFL = "csfl"


@dataclass(frozen=True)
class OverheadReport:
    """Bits transmitted in one round, split by traffic class."""

    scheme: Scheme
    activations_bits: float
    gradients_bits: float
    model_exchange_bits: float

    @property
    def bits_per_round(self) -> float:
        return self.activations_bits + self.gradients_bits + self.model_exchange_bits


def overhead_splitfed(
    profile: ModelProfile,
    num_clients: int,
    batches: int,
    cut: int,
    epochs: int = 1,
) -> OverheadReport:
    """Two-way split: cut activations up, cut gradients down, full client model both ways."""
    _check_common(profile, num_clients, batches, epochs)
    if not (1 <= cut <= profile.num_layers - 1):
        raise ValueError(
            f"cut layer must be in [1, {profile.num_layers - 1}], got {cut}"
        )
    s_v = profile.layers[cut - 1].activation_bits
    act = s_v * batches * num_clients * epochs
    return OverheadReport(
        scheme=Scheme.SFL,
        activations_bits=act,
        gradients_bits=act,
        model_exchange_bits=2.0 * segment_bits(profile, 1, cut) * num_clients,
    )


def overhead_locsplitfed(
    profile: ModelProfile,
    num_clients: int,
    batches: int,
    cut: int,
    epochs: int = 1,
) -> OverheadReport:
    """Two-way split with local loss: no gradient downlink."""
    _check_common(profile, num_clients, batches, epochs)
    if not (1 <= cut <= profile.num_layers - 1):
        raise ValueError(
            f"cut layer must be in [1, {profile.num_layers - 1}], got {cut}"
        )
    s_v = profile.layers[cut - 1].activation_bits
    return OverheadReport(
        scheme=Scheme.LOCSPLITFED,
        activations_bits=s_v * batches * num_clients * epochs,
        gradients_bits=0.0,
        model_exchange_bits=2.0 * segment_bits(profile, 1, cut) * num_clients,
    )


def overhead_csfl(
    profile: ModelProfile,
    num_clients: int,
    batches: int,
    split: SplitConfig,
    aggregator_fraction: float,
    epochs: int = 1,
) -> OverheadReport:
    """Three-way split.

    Weak clients exchange collaborative-layer activations/gradients and
    their weak-side model; each aggregator exchanges one aggregator-side
    model; cut-layer activations flow to the server for every client.
    """
    _check_common(profile, num_clients, batches, epochs)
    split.validate(profile.num_layers)
    if not (0 < aggregator_fraction <= 1):
        raise ValueError(
            f"aggregator_fraction must be in (0, 1], got {aggregator_fraction}"
        )
    lam = aggregator_fraction
    s_h = profile.layers[split.h - 1].activation_bits
    s_v = profile.layers[split.v - 1].activation_bits
    weak_act = s_h * batches * (1.0 - lam) * num_clients * epochs
    return OverheadReport(
        scheme=Scheme.CSFL,
        activations_bits=weak_act + s_v * batches * num_clients * epochs,
        gradients_bits=weak_act,
        model_exchange_bits=(
            2.0 * segment_bits(profile, 1, split.h) * (1.0 - lam) * num_clients
            + 2.0 * segment_bits(profile, split.h + 1, split.v) * lam * num_clients
        ),
    )


def _check_common(
    profile: ModelProfile, num_clients: int, batches: int, epochs: int
) -> None:
    if num_clients < 1:
        raise ValueError(f"num_clients must be >= 1, got {num_clients}")
    if batches < 1:
        raise ValueError(f"batches must be >= 1, got {batches}")
    if epochs < 1:
        raise ValueError(f"epochs must be >= 1, got {epochs}")
