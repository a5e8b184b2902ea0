"""Round/epoch state machines for the three training schemes.

All three schemes share one arithmetic skeleton so their trajectories are
comparable and, where the math coincides, bit-identical:

  sfl          clients train blocks 1..v from the server's global-loss
               gradients; server-side models update per client and are
               averaged per epoch; client-side models averaged per round.
  locsplitfed  clients train blocks 1..v from a local-loss head at the
               cut layer, in parallel with the server-side update; the
               head is averaged with the client-side model per round.
  csfl         blocks 1..h train on every client, blocks h+1..v on local
               aggregators (one instance per assigned client, averaged
               within each aggregator group per epoch), blocks v+1..V on
               the server; weak-side and aggregator-side models are
               averaged globally per round.

Simulated wall-clock comes exclusively from the delay model and traffic
from the overhead model; host timing never leaks into results. Every
reduction runs in ascending client order, so runs are bit-reproducible.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace

import numpy as np

from .data import Dataset, Shard
from .delay import DelayBreakdown, round_delay, round_delay_locsplitfed, round_delay_sfl
from .engine import (
    Batch,
    NetSpec,
    ParamSet,
    forward,
    global_loss_and_grads,
    init_aux_head,
    init_params,
    local_loss_and_grads,
)
from .overhead import (
    OverheadReport,
    Scheme,
    overhead_csfl,
    overhead_locsplitfed,
    overhead_splitfed,
)
from .profiles import FleetSpec, ModelProfile, SplitConfig, validate_fleet

# Fixed tag mixed into the aux-head seed so every scheme derives the same head.
_AUX_SEED_TAG = 104729


@dataclass(frozen=True)
class SchemeConfig:
    """Which scheme to run and with what split, epochs, rounds, and step size."""

    scheme: Scheme
    split: SplitConfig
    epochs: int
    rounds: int
    lr: float

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.rounds < 0:
            raise ValueError(f"rounds must be >= 0, got {self.rounds}")
        if self.lr < 0:
            raise ValueError(f"lr must be >= 0, got {self.lr}")


@dataclass(frozen=True)
class RoundTrace:
    """One row of a training trace; cumulative fields never decrease."""

    round_idx: int
    cum_delay_s: float
    cum_bits: float
    train_loss: float
    test_acc: float


@dataclass(frozen=True)
class TrainState:
    """Global model state between rounds."""

    net: NetSpec
    params: ParamSet
    aux: ParamSet | None
    round_idx: int
    seed: int


def make_state(net: NetSpec, scheme: Scheme, cut: int, seed: int) -> TrainState:
    """Seeded initial state; the aux head exists for the local-loss schemes."""
    aux = None
    if scheme is not Scheme.SFL:
        aux = init_aux_head(net, cut, [net.seed, _AUX_SEED_TAG])
    return TrainState(net=net, params=init_params(net), aux=aux, round_idx=0, seed=seed)


def _round_batches(
    dataset: Dataset, shards: list[Shard], seed: int, round_idx: int
) -> list[list[Batch]]:
    """Per-client batches for one round, from a per-(seed, round, client) shuffle.

    The shuffle never depends on the scheme, so all schemes see identical
    batch streams. Clients run the same number of batches per epoch (the
    minimum over shards) to keep epochs in lockstep.
    """
    num_batches = min(s.batches for s in shards)
    out = []
    for pos, shard in enumerate(shards):
        rng = np.random.default_rng([seed, round_idx, pos])
        order = shard.indices[rng.permutation(len(shard.indices))]
        out.append(
            [
                Batch(
                    inputs=dataset.inputs[order[b * shard.batch_size : (b + 1) * shard.batch_size]],
                    labels=dataset.labels[order[b * shard.batch_size : (b + 1) * shard.batch_size]],
                )
                for b in range(num_batches)
            ]
        )
    return out


def _composite(client_model: ParamSet, server_model: ParamSet, cut: int) -> ParamSet:
    """Full parameter vector: blocks 1..cut from the client, the rest from the server."""
    comp = client_model.copy()
    comp.segment(cut + 1, comp.num_blocks)[:] = server_model.segment(
        cut + 1, server_model.num_blocks
    )
    return comp


def _mean_segment(models: list[ParamSet], lo: int, hi: int) -> np.ndarray:
    """Elementwise mean of one block range, accumulated in list order."""
    total = np.zeros_like(models[0].segment(lo, hi))
    for m in models:
        total += m.segment(lo, hi)
    return total / len(models)


def _mean_flat(param_sets: list[ParamSet]) -> np.ndarray:
    total = np.zeros_like(param_sets[0].flat)
    for p in param_sets:
        total += p.flat
    return total / len(param_sets)


def _average_server_models(server_models: list[ParamSet], cut: int) -> None:
    """Per-epoch FedAvg of the server-side segments, written back in place."""
    v_end = server_models[0].num_blocks
    avg = _mean_segment(server_models, cut + 1, v_end)
    for m in server_models:
        m.segment(cut + 1, v_end)[:] = avg


def run_round_sfl(
    state: TrainState, dataset: Dataset, shards: list[Shard], cfg: SchemeConfig
) -> tuple[TrainState, float]:
    """One round of the two-way split with server-driven backprop."""
    v = cfg.split.v
    big_v = state.net.num_blocks
    clients = [state.params.copy() for _ in shards]
    servers = [state.params.copy() for _ in shards]
    batches = _round_batches(dataset, shards, state.seed, state.round_idx)
    num_batches = len(batches[0])

    losses = []
    for _ in range(cfg.epochs):
        for b in range(num_batches):
            for n in range(len(shards)):
                comp = _composite(clients[n], servers[n], v)
                loss, grads = global_loss_and_grads(comp, batches[n][b])
                clients[n].segment(1, v)[:] -= cfg.lr * grads.segment(1, v)
                servers[n].segment(v + 1, big_v)[:] -= cfg.lr * grads.segment(v + 1, big_v)
                losses.append(loss)
        _average_server_models(servers, v)

    new_params = state.params.copy()
    new_params.segment(1, v)[:] = _mean_segment(clients, 1, v)
    new_params.segment(v + 1, big_v)[:] = servers[0].segment(v + 1, big_v)
    new_state = replace(state, params=new_params, round_idx=state.round_idx + 1)
    return new_state, float(np.mean(losses))


def run_round_locsplitfed(
    state: TrainState, dataset: Dataset, shards: list[Shard], cfg: SchemeConfig
) -> tuple[TrainState, float]:
    """One round of the two-way split with local-loss client backprop.

    The server's global-loss update and the client's local-loss update
    both read the same pre-update parameters, so client and server train
    in parallel within a batch. The reported loss is the server's global
    loss, keeping traces comparable across schemes.
    """
    v = cfg.split.v
    big_v = state.net.num_blocks
    clients = [state.params.copy() for _ in shards]
    servers = [state.params.copy() for _ in shards]
    heads = [state.aux.copy() for _ in shards]
    batches = _round_batches(dataset, shards, state.seed, state.round_idx)
    num_batches = len(batches[0])

    losses = []
    for _ in range(cfg.epochs):
        for b in range(num_batches):
            for n in range(len(shards)):
                comp = _composite(clients[n], servers[n], v)
                gloss, ggrads = global_loss_and_grads(comp, batches[n][b])
                _, lgrads, agrads = local_loss_and_grads(comp, heads[n], batches[n][b], v)
                clients[n].segment(1, v)[:] -= cfg.lr * lgrads.segment(1, v)
                heads[n].flat -= cfg.lr * agrads.flat
                servers[n].segment(v + 1, big_v)[:] -= cfg.lr * ggrads.segment(v + 1, big_v)
                losses.append(gloss)
        _average_server_models(servers, v)

    new_params = state.params.copy()
    new_params.segment(1, v)[:] = _mean_segment(clients, 1, v)
    new_params.segment(v + 1, big_v)[:] = servers[0].segment(v + 1, big_v)
    new_aux = ParamSet(state.aux.dims, _mean_flat(heads))
    new_state = replace(
        state, params=new_params, aux=new_aux, round_idx=state.round_idx + 1
    )
    return new_state, float(np.mean(losses))


def run_round_csfl(
    state: TrainState,
    dataset: Dataset,
    shards: list[Shard],
    fleet: FleetSpec,
    cfg: SchemeConfig,
    epoch_hook=None,
) -> tuple[TrainState, float]:
    """One round of the three-way split.

    Every client owns a blocks-1..v model instance (weak segment at the
    client, aggregator segment hosted by its aggregator) plus a local-loss
    head; the server owns one server-side instance per client. Per epoch,
    aggregator segments and heads are averaged within each aggregator
    group and server segments across everyone; per round, weak segments
    are averaged over all clients and aggregator segments over the
    aggregators (one uploaded model per group).

    epoch_hook(epoch_index, models, heads), when given, is called after
    each epoch's aggregation for inspection; it must not mutate its
    arguments.
    """
    h, v = cfg.split.h, cfg.split.v
    big_v = state.net.num_blocks
    _check_alignment(fleet, shards)

    position = {shard.client_id: i for i, shard in enumerate(shards)}
    groups = [
        [position[m] for m in fleet.group(k.id)] for k in fleet.aggregators
    ]
    agg_positions = [position[k.id] for k in fleet.aggregators]

    models = [state.params.copy() for _ in shards]
    servers = [state.params.copy() for _ in shards]
    heads = [state.aux.copy() for _ in shards]
    batches = _round_batches(dataset, shards, state.seed, state.round_idx)
    num_batches = len(batches[0])

    losses = []
    for epoch in range(cfg.epochs):
        for b in range(num_batches):
            for n in range(len(shards)):
                comp = _composite(models[n], servers[n], v)
                gloss, ggrads = global_loss_and_grads(comp, batches[n][b])
                _, lgrads, agrads = local_loss_and_grads(comp, heads[n], batches[n][b], v)
                models[n].segment(1, v)[:] -= cfg.lr * lgrads.segment(1, v)
                heads[n].flat -= cfg.lr * agrads.flat
                servers[n].segment(v + 1, big_v)[:] -= cfg.lr * ggrads.segment(v + 1, big_v)
                losses.append(gloss)
        for members in groups:
            group_models = [models[i] for i in members]
            avg = _mean_segment(group_models, h + 1, v)
            for m in group_models:
                m.segment(h + 1, v)[:] = avg
            head_avg = _mean_flat([heads[i] for i in members])
            for i in members:
                heads[i].flat[:] = head_avg
        _average_server_models(servers, v)
        if epoch_hook is not None:
            epoch_hook(epoch, models, heads)

    new_params = state.params.copy()
    new_params.segment(1, h)[:] = _mean_segment(models, 1, h)
    new_params.segment(h + 1, v)[:] = _mean_segment(
        [models[i] for i in agg_positions], h + 1, v
    )
    new_params.segment(v + 1, big_v)[:] = servers[0].segment(v + 1, big_v)
    new_aux = ParamSet(state.aux.dims, _mean_flat([heads[i] for i in agg_positions]))
    new_state = replace(
        state, params=new_params, aux=new_aux, round_idx=state.round_idx + 1
    )
    return new_state, float(np.mean(losses))


def evaluate_accuracy(params: ParamSet, dataset: Dataset) -> float:
    """Held-out accuracy of the composite model."""
    if len(dataset.test_idx) == 0:
        raise ValueError("dataset has no test split")
    logits = forward(params, dataset.inputs[dataset.test_idx], params.num_blocks)
    pred = logits.argmax(axis=1)
    return float(np.mean(pred == dataset.labels[dataset.test_idx]))


def scheme_round_delay(
    scheme: Scheme,
    profile: ModelProfile,
    fleet: FleetSpec,
    split: SplitConfig,
    epochs: int,
    batches: int,
) -> DelayBreakdown:
    if scheme is Scheme.CSFL:
        return round_delay(profile, fleet, split, epochs, batches)
    if scheme is Scheme.SFL:
        return round_delay_sfl(profile, fleet, split, epochs, batches)
    return round_delay_locsplitfed(profile, fleet, split, epochs, batches)


def scheme_overhead(
    scheme: Scheme,
    profile: ModelProfile,
    num_clients: int,
    batches: int,
    split: SplitConfig,
    aggregator_fraction: float,
    epochs: int = 1,
) -> OverheadReport:
    if scheme is Scheme.CSFL:
        return overhead_csfl(
            profile, num_clients, batches, split, aggregator_fraction, epochs=epochs
        )
    if scheme is Scheme.SFL:
        return overhead_splitfed(profile, num_clients, batches, split.v, epochs=epochs)
    return overhead_locsplitfed(profile, num_clients, batches, split.v, epochs=epochs)


def simulate(
    cfg: SchemeConfig,
    net: NetSpec,
    profile: ModelProfile,
    fleet: FleetSpec,
    dataset: Dataset,
    shards: list[Shard],
    seed: int,
) -> list[RoundTrace]:
    """Run cfg.rounds rounds and trace delay, traffic, loss, and accuracy.

    Wall-clock and bits come from the closed-form models evaluated once
    (rounds are homogeneous) and accumulate linearly.
    """
    violations = validate_fleet(fleet)
    if violations:
        raise ValueError("fleet invalid: " + "; ".join(violations))
    if net.num_blocks != profile.num_layers:
        raise ValueError(
            f"net has {net.num_blocks} blocks but the cost profile has "
            f"{profile.num_layers} layers"
        )
    cfg.split.validate(net.num_blocks)
    _check_alignment(fleet, shards)
    if len(dataset.test_idx) == 0:
        raise ValueError("simulation needs a dataset with a test split")

    num_batches = min(s.batches for s in shards)
    d_round = scheme_round_delay(
        cfg.scheme, profile, fleet, cfg.split, cfg.epochs, num_batches
    ).d_round
    bits_round = scheme_overhead(
        cfg.scheme,
        profile,
        fleet.num_clients,
        num_batches,
        cfg.split,
        fleet.aggregator_fraction,
        epochs=cfg.epochs,
    ).bits_per_round

    state = make_state(net, cfg.scheme, cfg.split.v, seed)
    traces: list[RoundTrace] = []
    for t in range(1, cfg.rounds + 1):
        if cfg.scheme is Scheme.CSFL:
            state, loss = run_round_csfl(state, dataset, shards, fleet, cfg)
        elif cfg.scheme is Scheme.SFL:
            state, loss = run_round_sfl(state, dataset, shards, cfg)
        else:
            state, loss = run_round_locsplitfed(state, dataset, shards, cfg)
        traces.append(
            RoundTrace(
                round_idx=t,
                cum_delay_s=t * d_round,
                cum_bits=t * bits_round,
                train_loss=loss,
                test_acc=evaluate_accuracy(state.params, dataset),
            )
        )
    return traces


def write_trace_csv(traces: list[RoundTrace], path: str) -> None:
    """Dump a trace: round, cum_delay_s, cum_bits, train_loss, test_acc."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["round", "cum_delay_s", "cum_bits", "train_loss", "test_acc"])
        for t in traces:
            writer.writerow(
                [
                    t.round_idx,
                    repr(t.cum_delay_s),
                    repr(t.cum_bits),
                    repr(t.train_loss),
                    repr(t.test_acc),
                ]
            )


def _check_alignment(fleet: FleetSpec, shards: list[Shard]) -> None:
    if len(shards) != fleet.num_clients:
        raise ValueError(
            f"{len(shards)} shards for {fleet.num_clients} fleet clients"
        )
    for client, shard in zip(fleet.clients, shards):
        if client.id != shard.client_id:
            raise ValueError(
                f"shard order mismatch: fleet client {client.id!r} vs shard "
                f"{shard.client_id!r}"
            )
