import numpy as np
import pytest

from conftest import (
    make_fleet,
    random_fleet,
    random_integer_profile,
    uniform_profile,
    worked_fleet,
    worked_profile,
)
from csfl_lab.delay import (
    phase0_delay,
    phase1_delay,
    phase2_delay,
    phase3_delay,
    round_delay,
    round_delay_locsplitfed,
    round_delay_sfl,
)
from csfl_lab.profiles import (
    ClientSpec,
    ConfigError,
    FleetSpec,
    LayerProfile,
    ModelProfile,
    Role,
    SplitConfig,
)

SPLIT = SplitConfig(h=2, v=3)


def test_worked_scenario_phases():
    profile, fleet = worked_profile(), worked_fleet()
    assert phase0_delay(profile, fleet, SPLIT) == pytest.approx(8.0, rel=1e-9)
    assert phase1_delay(profile, fleet, SPLIT) == pytest.approx(14.25, rel=1e-9)
    assert phase2_delay(profile, fleet, SPLIT) == pytest.approx(6.25, rel=1e-9)
    assert phase3_delay(profile, fleet, SPLIT) == pytest.approx(8.0, rel=1e-9)
    assert round_delay(profile, fleet, SPLIT, 1, 1).d_round == pytest.approx(36.5, rel=1e-9)


def test_zero_model_all_phases_zero():
    profile = uniform_profile(4, 0, 0)
    fleet = worked_fleet()
    assert phase0_delay(profile, fleet, SPLIT) == 0.0
    assert phase1_delay(profile, fleet, SPLIT) == 0.0
    assert phase2_delay(profile, fleet, SPLIT) == 0.0
    assert phase3_delay(profile, fleet, SPLIT) == 0.0


def test_phase0_max_over_heterogeneous_weak_links():
    # weak segment 8 Mbit, aggregator segment 0; weak links at 2 and 1 Mbps
    profile = ModelProfile(
        layers=(
            LayerProfile(weight_bits=8e6, flops=0),
            LayerProfile(weight_bits=0, flops=0),
            LayerProfile(weight_bits=0, flops=0),
        )
    )
    clients = (
        ClientSpec("w0", 2e9, Role.WEAK),
        ClientSpec("w1", 2e9, Role.WEAK),
        ClientSpec("a0", 16e9, Role.AGGREGATOR),
    )
    rates = {("server", "w0"): 2e6, ("server", "w1"): 1e6, ("server", "a0"): 2e6}
    fleet = FleetSpec(
        clients=clients,
        server_speed=100e9,
        rates=rates,
        assignment={"w0": "a0", "w1": "a0", "a0": "a0"},
        aggregator_fraction=1 / 3,
        default_rate=2e6,
    )
    assert phase0_delay(profile, fleet, SplitConfig(h=1, v=2)) == pytest.approx(8.0)


def test_phase1_self_aggregation_has_no_handoff_term():
    # lambda=1: every client its own aggregator with |S_k| = 1
    profile = uniform_profile(4, 8e6, 2e9)
    fleet = make_fleet(num_weak=0, num_agg=2, p_agg=2e9, rate=2e6)
    s_v = profile.layers[SPLIT.v - 1].activation_bits
    expected = 4e9 / 2e9 + 2e9 / 2e9 + s_v / 2e6
    assert phase1_delay(profile, fleet, SPLIT) == pytest.approx(expected, rel=1e-12)


def test_phase2_server_branch_dominates_with_slow_server():
    profile = ModelProfile(
        layers=(
            LayerProfile(weight_bits=0, flops=0, activation_bits=0),
            LayerProfile(weight_bits=0, flops=0, activation_bits=0),
            LayerProfile(weight_bits=0, flops=0, activation_bits=0),
            LayerProfile(weight_bits=0, flops=4e9, activation_bits=0),
        )
    )
    fleet = make_fleet(num_weak=1, num_agg=1, p_server=1e6)
    expected = 2 * 2 * 4e9 / 1e6
    assert phase2_delay(profile, fleet, SPLIT) == pytest.approx(expected, rel=1e-12)


def test_phase3_mirrors_phase0():
    profile, fleet = worked_profile(), worked_fleet()
    assert phase3_delay(profile, fleet, SPLIT) == phase0_delay(profile, fleet, SPLIT)
    assert phase3_delay(profile, fleet, SPLIT) == pytest.approx(8.0)


def test_round_delay_composition():
    profile, fleet = worked_profile(), worked_fleet()
    bd = round_delay(profile, fleet, SPLIT, epochs=1, batches=1)
    assert bd.d_round == bd.d0 + bd.d1 + bd.d2 + bd.d3
    bd32 = round_delay(profile, fleet, SPLIT, epochs=3, batches=2)
    assert bd32.d_round == bd.d0 + 6 * (bd.d1 + bd.d2) + bd.d3


def test_round_delay_linear_in_batches():
    profile, fleet = worked_profile(), worked_fleet()
    b1 = round_delay(profile, fleet, SPLIT, epochs=2, batches=3)
    b2 = round_delay(profile, fleet, SPLIT, epochs=2, batches=6)
    assert b2.d_round - b2.d0 - b2.d3 == 2 * (b1.d_round - b1.d0 - b1.d3)


def test_round_delay_rejects_bad_epochs_batches():
    profile, fleet = worked_profile(), worked_fleet()
    with pytest.raises(ValueError):
        round_delay(profile, fleet, SPLIT, epochs=0, batches=1)
    with pytest.raises(ValueError):
        round_delay(profile, fleet, SPLIT, epochs=1, batches=0)


def test_missing_rate_is_config_error():
    profile = worked_profile()
    fleet = worked_fleet()
    strict = FleetSpec(
        clients=fleet.clients,
        server_speed=fleet.server_speed,
        rates={},
        assignment=fleet.assignment,
        aggregator_fraction=fleet.aggregator_fraction,
        default_rate=None,
    )
    with pytest.raises(ConfigError, match="no rate entry"):
        phase0_delay(profile, strict, SPLIT)


def test_determinism_bit_identical():
    rng = np.random.default_rng(3)
    profile = random_integer_profile(rng, 6)
    fleet = random_fleet(rng)
    split = SplitConfig(h=2, v=4)
    a = round_delay(profile, fleet, split, 3, 5)
    b = round_delay(profile, fleet, split, 3, 5)
    assert (a.d0, a.d1, a.d2, a.d3, a.d_round) == (b.d0, b.d1, b.d2, b.d3, b.d_round)


def _scaled_fleet(fleet: FleetSpec, c: float) -> FleetSpec:
    return FleetSpec(
        clients=tuple(
            ClientSpec(cl.id, cl.compute_speed * c, cl.role) for cl in fleet.clients
        ),
        server_speed=fleet.server_speed * c,
        rates={k: r * c for k, r in fleet.rates.items()},
        assignment=fleet.assignment,
        aggregator_fraction=fleet.aggregator_fraction,
        default_rate=None if fleet.default_rate is None else fleet.default_rate * c,
    )


def test_scale_covariance_exact_for_powers_of_two():
    rng = np.random.default_rng(11)
    for _ in range(10):
        profile = random_integer_profile(rng, 5)
        fleet = random_fleet(rng)
        split = SplitConfig(h=1, v=3)
        base = round_delay(profile, fleet, split, 2, 3)
        for c in (2.0, 0.5, 4.0):
            scaled = round_delay(profile, _scaled_fleet(fleet, c), split, 2, 3)
            assert scaled.d0 == base.d0 / c
            assert scaled.d1 == base.d1 / c
            assert scaled.d2 == base.d2 / c
            assert scaled.d3 == base.d3 / c


def _bump_layer(profile: ModelProfile, idx: int, field: str, factor: float) -> ModelProfile:
    layers = list(profile.layers)
    old = layers[idx]
    kwargs = {
        "weight_bits": old.weight_bits,
        "flops": old.flops,
        "activation_bits": old.activation_bits,
    }
    kwargs[field] = kwargs[field] * factor + 1.0
    layers[idx] = LayerProfile(**kwargs)
    return ModelProfile(layers=tuple(layers))


def test_monotonicity_under_random_perturbations():
    rng = np.random.default_rng(23)
    for _ in range(20):
        num_layers = int(rng.integers(4, 8))
        profile = random_integer_profile(rng, num_layers)
        fleet = random_fleet(rng)
        h = int(rng.integers(1, num_layers - 1))
        v = int(rng.integers(h + 1, num_layers))
        split = SplitConfig(h=h, v=v)
        base = round_delay(profile, fleet, split, 2, 3).d_round

        # faster links and processors never hurt
        faster = _scaled_fleet(fleet, float(rng.uniform(1.5, 4.0)))
        assert round_delay(profile, faster, split, 2, 3).d_round <= base

        # heavier layers never help
        idx = int(rng.integers(0, num_layers))
        field = ("weight_bits", "flops", "activation_bits")[int(rng.integers(0, 3))]
        heavier = _bump_layer(profile, idx, field, float(rng.uniform(1.5, 3.0)))
        assert round_delay(heavier, fleet, split, 2, 3).d_round >= base

        # more epochs/batches never help
        assert round_delay(profile, fleet, split, 3, 3).d_round >= base
        assert round_delay(profile, fleet, split, 2, 4).d_round >= base


def test_bp_factor_scales_only_client_compute_terms():
    profile, fleet = worked_profile(), worked_fleet()
    # verbatim chain 0.25 + 4 + 2; doubling BP compute gives 0.5 + 4 + 4
    assert phase2_delay(profile, fleet, SPLIT, bp_factor=2.0) == pytest.approx(8.5)
    bd = round_delay(profile, fleet, SPLIT, 1, 1, bp_factor=2.0)
    assert bd.d2 == pytest.approx(8.5)
    assert (bd.d0, bd.d1, bd.d3) == (8.0, 14.25, 8.0)
    with pytest.raises(ValueError):
        phase2_delay(profile, fleet, SPLIT, bp_factor=0.0)


def test_self_links_never_consult_rate_map():
    # lambda=1 fleet with only server links defined and no default: the
    # client-aggregator hand-off is a self-link and must not be looked up
    profile = uniform_profile(4, 8e6, 2e9)
    clients = (
        ClientSpec("a0", 2e9, Role.AGGREGATOR),
        ClientSpec("a1", 2e9, Role.AGGREGATOR),
    )
    rates = {}
    for cid in ("a0", "a1"):
        rates[("server", cid)] = 2e6
        rates[(cid, "server")] = 2e6
    fleet = FleetSpec(
        clients=clients,
        server_speed=100e9,
        rates=rates,
        assignment={"a0": "a0", "a1": "a1"},
        aggregator_fraction=1.0,
        default_rate=None,
    )
    for phase in (phase0_delay, phase1_delay, phase2_delay, phase3_delay):
        phase(profile, fleet, SPLIT)  # must not raise


def test_baseline_sfl_hand_evaluation():
    profile, fleet = worked_profile(), worked_fleet()
    bd = round_delay_sfl(profile, fleet, SPLIT, epochs=1, batches=1)
    # every client trains layers 1..v: 24 Mbit model, 6 GFlops forward
    assert bd.d0 == pytest.approx(24 / 2)  # Mbit over Mbps
    assert bd.d1 == pytest.approx(6e9 / 2e9 + 8 / 2)
    server = 2 * 2 * 2e9 / 100e9
    assert bd.d2 == pytest.approx(server + (8 / 2 + 6e9 / 2e9))
    assert bd.d3 == bd.d0


def test_baseline_locsplitfed_removes_gradient_wait():
    profile, fleet = worked_profile(), worked_fleet()
    sfl = round_delay_sfl(profile, fleet, SPLIT, 1, 1)
    loc = round_delay_locsplitfed(profile, fleet, SPLIT, 1, 1)
    assert loc.d0 == sfl.d0
    assert loc.d1 == sfl.d1
    assert loc.d3 == sfl.d3
    assert loc.d2 <= sfl.d2
    server = 2 * 2 * 2e9 / 100e9
    assert loc.d2 == pytest.approx(max(server, 6e9 / 2e9))
