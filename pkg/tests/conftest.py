"""Shared builders for profiles, fleets, and the reference experiment."""

from __future__ import annotations

import numpy as np

from csfl_lab.data import synth_blobs, partition_iid
from csfl_lab.engine import NetSpec
from csfl_lab.profiles import (
    ClientSpec,
    FleetSpec,
    LayerProfile,
    ModelProfile,
    Role,
    profile_from_dims,
)


def uniform_profile(num_layers: int, weight_bits: float, flops: float) -> ModelProfile:
    return ModelProfile(
        layers=tuple(
            LayerProfile(weight_bits=weight_bits, flops=flops) for _ in range(num_layers)
        )
    )


def make_fleet(
    num_weak: int,
    num_agg: int,
    p_weak: float = 2e9,
    p_agg: float = 16e9,
    p_server: float = 100e9,
    rate: float = 2e6,
) -> FleetSpec:
    """Fleet with weak clients dealt round-robin to aggregators, uniform links."""
    clients = []
    assignment = {}
    agg_ids = [f"a{i}" for i in range(num_agg)]
    for i, aid in enumerate(agg_ids):
        clients.append(ClientSpec(id=aid, compute_speed=p_agg, role=Role.AGGREGATOR))
        assignment[aid] = aid
    for i in range(num_weak):
        wid = f"w{i}"
        clients.append(ClientSpec(id=wid, compute_speed=p_weak, role=Role.WEAK))
        assignment[wid] = agg_ids[i % num_agg]
    n = num_weak + num_agg
    return FleetSpec(
        clients=tuple(clients),
        server_speed=p_server,
        rates={},
        assignment=assignment,
        aggregator_fraction=num_agg / n,
        default_rate=rate,
    )


def worked_profile() -> ModelProfile:
    """The hand-evaluated scenario: a=[8,8,8,8] Mbit, f=[2,2,2,2] GFlops."""
    return uniform_profile(4, 8e6, 2e9)


def worked_fleet() -> FleetSpec:
    """1 weak + 1 aggregator, p_n=2 GF/s, p_k=16 GF/s, p_s=100 GF/s, R=2 Mbps."""
    return make_fleet(num_weak=1, num_agg=1)


def random_integer_profile(rng: np.random.Generator, num_layers: int) -> ModelProfile:
    """Integer-valued bits/flops so segment sums are exact in float64."""
    layers = []
    for _ in range(num_layers):
        layers.append(
            LayerProfile(
                weight_bits=float(rng.integers(0, 10_000_000)),
                flops=float(rng.integers(0, 10_000_000_000)),
                activation_bits=float(rng.integers(0, 10_000_000)),
            )
        )
    return ModelProfile(layers=tuple(layers))


def random_fleet(rng: np.random.Generator) -> FleetSpec:
    num_agg = int(rng.integers(1, 4))
    num_weak = int(rng.integers(0, 6))
    return make_fleet(
        num_weak=num_weak,
        num_agg=num_agg,
        p_weak=float(rng.uniform(1e9, 4e9)),
        p_agg=float(rng.uniform(8e9, 32e9)),
        p_server=float(rng.uniform(50e9, 200e9)),
        rate=float(rng.uniform(1e6, 10e6)),
    )


# Reference desk-scale run: blobs (3 classes, dim 8, 300 train samples),
# N=8 clients, lambda=0.25, V=4 blocks, E=3, T=30, lr=0.05. Free knobs fixed
# here once: spread 0.25, batch size 4 (B=9), dims (8,16,16,12,3), split (2,3),
# seed 2024.
REFERENCE_DIMS = (8, 16, 16, 12, 3)
REFERENCE_SEED = 2024


def reference_experiment():
    dataset = synth_blobs(
        num_classes=3, dim=8, samples_per_class=125, spread=0.25, seed=REFERENCE_SEED
    )
    net = NetSpec(layer_dims=REFERENCE_DIMS, num_classes=3, seed=REFERENCE_SEED)
    profile = profile_from_dims(REFERENCE_DIMS, batch_size=4)
    fleet = make_fleet(num_weak=6, num_agg=2)
    ids = [c.id for c in fleet.clients]
    shards = partition_iid(dataset, 8, 4, seed=REFERENCE_SEED, client_ids=ids)
    return dataset, net, profile, fleet, shards
