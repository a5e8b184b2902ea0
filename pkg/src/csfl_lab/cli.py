"""Command-line front end: plan splits, simulate schemes, print overhead tables.

Commands read a single TOML config with [model], [fleet], [scheme], [net],
[data], and [run] sections; flags override individual settings and the
CSFL_OUT environment variable overrides the output directory. All outputs
are functions of (config, seed) only.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass

try:
    import tomllib
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

from .data import Dataset, Shard, load_idx, merge_datasets, partition_iid, partition_noniid, synth_blobs
from .engine import NetSpec
from .overhead import Scheme
from .planner import plan, write_candidates_csv
from .profiles import (
    ConfigError,
    FleetSpec,
    ModelProfile,
    SplitConfig,
    fleet_from_dict,
    model_profile_from_dict,
    validate_fleet,
)
from .protocol import (
    SchemeConfig,
    scheme_overhead,
    simulate,
    write_trace_csv,
)

ALL_SCHEMES = (Scheme.SFL, Scheme.LOCSPLITFED, Scheme.CSFL)


@dataclass
class ExperimentConfig:
    """Validated view of one config file."""

    profile: ModelProfile
    fleet: FleetSpec
    split: SplitConfig
    scheme: str  # one of the scheme values or "all"
    epochs: int
    rounds: int
    lr: float
    batches: int
    seed: int
    out_dir: str
    min_h: int
    net_dims: tuple[int, ...] | None
    data: dict | None


def load_experiment(path: str) -> ExperimentConfig:
    """Parse and validate a config file; raises ConfigError on any problem."""
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config {path} is not valid TOML: {exc}") from exc

    for section in ("model", "fleet", "scheme"):
        if section not in doc:
            raise ConfigError(f"{path}: missing [{section}] section")

    profile = model_profile_from_dict(doc["model"])
    fleet = fleet_from_dict(doc["fleet"])
    violations = validate_fleet(fleet)
    if violations:
        raise ConfigError("fleet invalid: " + "; ".join(violations))

    sch = doc["scheme"]
    try:
        scheme = str(sch.get("scheme", "csfl")).lower()
        if scheme != "all":
            Scheme(scheme)
        split = SplitConfig(h=int(sch["h"]), v=int(sch["v"]))
        epochs = int(sch.get("epochs", 1))
        rounds = int(sch.get("rounds", 1))
        lr = float(sch.get("lr", 0.01))
        batches = int(sch.get("batches", 1))
    except KeyError as exc:
        raise ConfigError(f"[scheme] missing field {exc}") from exc
    except ValueError as exc:
        raise ConfigError(f"[scheme]: {exc}") from exc
    split.validate(profile.num_layers)
    if epochs < 1 or batches < 1 or rounds < 0 or lr < 0:
        raise ConfigError("[scheme]: epochs/batches must be >= 1, rounds/lr >= 0")

    run = doc.get("run", {})
    seed = int(run.get("seed", 0))
    if seed < 0:
        raise ConfigError(f"[run] seed must be >= 0, got {seed}")
    out_dir = str(run.get("out", "out"))
    min_h = int(run.get("min_h", 1))

    net_dims = None
    if "net" in doc:
        dims = doc["net"].get("layer_dims")
        if not dims:
            raise ConfigError("[net] needs layer_dims")
        net_dims = tuple(int(d) for d in dims)
        if len(net_dims) - 1 != profile.num_layers:
            raise ConfigError(
                f"[net] layer_dims implies {len(net_dims) - 1} blocks but [model] "
                f"has {profile.num_layers} layers"
            )

    data = doc.get("data")
    if data is not None and "kind" not in data:
        raise ConfigError("[data] needs a kind ('blobs' or 'idx')")

    return ExperimentConfig(
        profile=profile,
        fleet=fleet,
        split=split,
        scheme=scheme,
        epochs=epochs,
        rounds=rounds,
        lr=lr,
        batches=batches,
        seed=seed,
        out_dir=out_dir,
        min_h=min_h,
        net_dims=net_dims,
        data=data,
    )


def build_dataset(cfg: ExperimentConfig) -> Dataset:
    if cfg.data is None:
        raise ConfigError("this command needs a [data] section")
    kind = str(cfg.data["kind"]).lower()
    if kind == "blobs":
        return synth_blobs(
            num_classes=int(cfg.data.get("num_classes", 3)),
            dim=int(cfg.data.get("dim", 8)),
            samples_per_class=int(cfg.data.get("samples_per_class", 125)),
            spread=float(cfg.data.get("spread", 0.5)),
            seed=int(cfg.data.get("seed", cfg.seed)),
        )
    if kind == "idx":
        try:
            train = load_idx(cfg.data["train_images"], cfg.data["train_labels"])
        except KeyError as exc:
            raise ConfigError(f"[data] kind='idx' missing field {exc}") from exc
        if "test_images" in cfg.data:
            test = load_idx(cfg.data["test_images"], cfg.data["test_labels"])
            return merge_datasets(train, test)
        return train
    raise ConfigError(f"[data] kind {kind!r} not supported (use 'blobs' or 'idx')")


def build_shards(cfg: ExperimentConfig, dataset: Dataset) -> list[Shard]:
    partition = str(cfg.data.get("partition", "iid")).lower()
    batch_size = int(cfg.data.get("batch_size", 8))
    ids = [c.id for c in cfg.fleet.clients]
    if partition == "iid":
        return partition_iid(
            dataset, cfg.fleet.num_clients, batch_size, cfg.seed, client_ids=ids
        )
    if partition == "noniid":
        return partition_noniid(
            dataset,
            cfg.fleet.num_clients,
            int(cfg.data.get("shards_per_client", 2)),
            batch_size,
            cfg.seed,
            client_ids=ids,
        )
    raise ConfigError(f"[data] partition {partition!r} not supported")


def build_net(cfg: ExperimentConfig, dataset: Dataset) -> NetSpec:
    if cfg.net_dims is None:
        raise ConfigError("this command needs a [net] section with layer_dims")
    if cfg.net_dims[0] != dataset.inputs.shape[1]:
        raise ConfigError(
            f"[net] input width {cfg.net_dims[0]} does not match dataset width "
            f"{dataset.inputs.shape[1]}"
        )
    if cfg.net_dims[-1] != dataset.num_classes:
        raise ConfigError(
            f"[net] output width {cfg.net_dims[-1]} does not match "
            f"{dataset.num_classes} classes"
        )
    return NetSpec(layer_dims=cfg.net_dims, num_classes=dataset.num_classes, seed=cfg.seed)


def cmd_plan(cfg: ExperimentConfig, out_dir: str) -> int:
    result = plan(cfg.profile, cfg.fleet, cfg.epochs, cfg.batches, min_h=cfg.min_h)
    os.makedirs(out_dir, exist_ok=True)
    out_path = os.path.join(out_dir, "plan_candidates.csv")
    write_candidates_csv(result, out_path)
    print(f"candidates: {len(result.candidates)} (written to {out_path})")
    print(
        f"best split: h={result.best.h} v={result.best.v} "
        f"d_round={result.best_delay.d_round!r} s"
    )
    return 0


def cmd_simulate(cfg: ExperimentConfig, out_dir: str, schemes: tuple[Scheme, ...]) -> int:
    dataset = build_dataset(cfg)
    shards = build_shards(cfg, dataset)
    net = build_net(cfg, dataset)
    os.makedirs(out_dir, exist_ok=True)

    results = {}
    for scheme in schemes:
        run_cfg = SchemeConfig(
            scheme=scheme, split=cfg.split, epochs=cfg.epochs, rounds=cfg.rounds, lr=cfg.lr
        )
        traces = simulate(run_cfg, net, cfg.profile, cfg.fleet, dataset, shards, cfg.seed)
        out_path = os.path.join(out_dir, f"{scheme.value}_trace.csv")
        write_trace_csv(traces, out_path)
        results[scheme] = traces
        if traces:
            last = traces[-1]
            print(
                f"{scheme.value}: rounds={last.round_idx} "
                f"final_acc={last.test_acc:.4f} total_delay_s={last.cum_delay_s:.6g} "
                f"total_bits={last.cum_bits:.6g} (trace: {out_path})"
            )
        else:
            print(f"{scheme.value}: rounds=0 (trace: {out_path})")

    if len(results) == len(ALL_SCHEMES) and cfg.rounds > 0:
        _print_equal_delay_report(results)
    return 0


def _print_equal_delay_report(results: dict) -> None:
    """Accuracy of every scheme at the largest simulated time all have reached."""
    t_ref = min(traces[-1].cum_delay_s for traces in results.values())
    print(f"accuracy at equal simulated delay (t = {t_ref:.6g} s):")
    for scheme, traces in results.items():
        reached = [t for t in traces if t.cum_delay_s <= t_ref]
        acc = reached[-1].test_acc if reached else float("nan")
        rounds = reached[-1].round_idx if reached else 0
        print(f"  {scheme.value}: acc={acc:.4f} (after {rounds} rounds)")


def cmd_overhead(cfg: ExperimentConfig, paper_verbatim: bool) -> int:
    epochs = 1 if paper_verbatim else cfg.epochs
    mode = "single-epoch closed form" if epochs == 1 else f"scaled to {epochs} epochs/round"
    print(
        f"communication overhead per round ({mode}; N={cfg.fleet.num_clients}, "
        f"B={cfg.batches}, h={cfg.split.h}, v={cfg.split.v}, "
        f"lambda={cfg.fleet.aggregator_fraction})"
    )
    print("scheme,activations_bits,gradients_bits,model_exchange_bits,total_bits")
    for scheme in ALL_SCHEMES:
        report = scheme_overhead(
            scheme,
            cfg.profile,
            cfg.fleet.num_clients,
            cfg.batches,
            cfg.split,
            cfg.fleet.aggregator_fraction,
            epochs=epochs,
        )
        print(
            f"{scheme.value},{report.activations_bits!r},{report.gradients_bits!r},"
            f"{report.model_exchange_bits!r},{report.bits_per_round!r}"
        )
    return 0


def _parse_args(argv) -> argparse.Namespace:
    parser = argparse.ArgumentParser(
        prog="csfl-lab",
        description="Split-federated-learning lab: split planning, delay/overhead "
        "models, and deterministic protocol simulation.",
    )
    parser.add_argument("command", choices=["plan", "simulate", "overhead"])
    parser.add_argument("--config", required=True, help="TOML experiment config")
    parser.add_argument("--out", default=None, help="output directory (default from config)")
    parser.add_argument("--seed", type=int, default=None, help="override [run] seed")
    parser.add_argument(
        "--scheme",
        choices=["sfl", "locsplitfed", "csfl", "all"],
        default=None,
        help="scheme(s) to simulate (default from config)",
    )
    parser.add_argument(
        "--paper-verbatim",
        action="store_true",
        help="overhead: print the strict single-epoch closed forms",
    )
    parser.add_argument("--min-h", type=int, default=None, help="override [run] min_h")
    return parser.parse_args(argv)


def main(argv=None) -> int:
    args = _parse_args(argv if argv is not None else sys.argv[1:])
    try:
        cfg = load_experiment(args.config)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError(f"--seed must be >= 0, got {args.seed}")
            cfg.seed = args.seed
        if args.min_h is not None:
            cfg.min_h = args.min_h
        out_dir = os.environ.get("CSFL_OUT") or args.out or cfg.out_dir

        if args.command == "plan":
            return cmd_plan(cfg, out_dir)
        if args.command == "overhead":
            return cmd_overhead(cfg, args.paper_verbatim)
        scheme_arg = args.scheme or cfg.scheme
        schemes = ALL_SCHEMES if scheme_arg == "all" else (Scheme(scheme_arg),)
        return cmd_simulate(cfg, out_dir, schemes)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
