"""Protocol contracts: initialization, the round loop, metrics, oracles."""

import dataclasses

import numpy as np
import pytest

from pqsbfl import fedcore, protocol, sigsuite
from pqsbfl.errors import (
    NotApplicable,
    NoVerifiedUpdates,
    ValidationError,
    ZeroDenominator,
)
from pqsbfl.fedcore import TrainConfig
from pqsbfl.protocol import (
    ExperimentConfig,
    derive_seed,
    gas_efficiency,
    init_phase,
    overhead_ratio,
    run_experiment,
    run_round,
)
from pqsbfl.sigsuite import SchemeId, Signature


def _small_config(**kwargs) -> ExperimentConfig:
    defaults = dict(
        scheme=SchemeId.PQC,
        n_clients=3,
        rounds=2,
        master_seed=42,
        synth_samples=400,
        synth_features=10,
        synth_classes=3,
        train=TrainConfig(local_epochs=2),
    )
    defaults.update(kwargs)
    return ExperimentConfig(**defaults)


def _corrupt_sig(sub):
    bad = bytearray(sub.sig.bytes)
    bad[10] ^= 0x08
    return dataclasses.replace(sub, sig=Signature(sub.sig.scheme, bytes(bad)))


def _fedavg_oracle(state, client_ids, round_seed_master):
    """Recompute each client's local model independently and average by hand."""
    weighted = None
    total = 0
    for pos, cid in enumerate(state.client_ids):
        if cid not in client_ids:
            continue
        cfg = state.config.train.with_seed((round_seed_master ^ cid) & (2**64 - 1))
        local = fedcore.local_train(
            state.global_params, state.train_set, state.partitions[pos], cfg
        )
        n = len(state.partitions[pos])
        total += n
        term = n * local.values.astype(np.float64)
        weighted = term if weighted is None else weighted + term
    return (weighted / total).astype(np.float32)


class TestInitPhase:
    def test_bc_registry_counts_clients_plus_aggregator(self):
        state = init_phase(_small_config())
        assert len(state.ledger.state.registry) == 4  # 3 clients + aggregator
        assert state.aggregator_address in state.ledger.state.registry

    def test_nobc_issues_zero_ledger_transactions(self):
        state = init_phase(_small_config(blockchain=False))
        assert state.ledger is None
        assert len(state.local_registry) == 4

    def test_duplicate_client_ids_rejected_before_keygen(self, monkeypatch):
        calls = []
        original = sigsuite.keygen

        def counting_keygen(*args, **kwargs):
            calls.append(args)
            return original(*args, **kwargs)

        monkeypatch.setattr(protocol.sigsuite, "keygen", counting_keygen)
        with pytest.raises(ValidationError):
            init_phase(_small_config(client_ids=(0, 1, 1)))
        assert calls == []

    def test_all_violations_listed(self):
        cfg = _small_config(n_clients=0, alpha=-1.0)
        with pytest.raises(ValidationError) as excinfo:
            init_phase(cfg)
        assert len(excinfo.value.violations) >= 2

    def test_initial_accuracy_recorded(self):
        state = init_phase(_small_config())
        assert 0.0 <= state.initial_accuracy <= 1.0


class TestRunRound:
    def test_happy_path_matches_fedavg_oracle(self):
        cfg = _small_config()
        state = init_phase(cfg)
        metrics = run_round(state, 1)
        assert metrics.verified_count == cfg.n_clients
        assert metrics.rejected_count == 0
        oracle = _fedavg_oracle_initial(cfg)
        max_ulps = np.spacing(np.abs(oracle))
        assert np.all(np.abs(state.global_params.values - oracle) <= max_ulps)

    def test_tampered_client_excluded_and_reweighted(self):
        cfg = _small_config()
        state = init_phase(cfg)

        def tamper(sub):
            return _corrupt_sig(sub) if sub.client_id == 1 else sub

        before = state.global_params.copy()
        state_ref = init_phase(cfg)
        oracle = _fedavg_oracle(state_ref, {0, 2}, cfg.master_seed)

        metrics = run_round(state, 1, tamper_hook=tamper)
        assert metrics.verified_count == 2
        assert metrics.rejected_count == 1
        assert not np.array_equal(state.global_params.values, before.values)
        max_ulps = np.spacing(np.abs(oracle))
        assert np.all(np.abs(state.global_params.values - oracle) <= max_ulps)

    def test_offchain_params_digest_mismatch_excluded(self):
        cfg = _small_config()
        state = init_phase(cfg)

        def corrupt_params(sub):
            if sub.client_id != 0:
                return sub
            mutated = sub.params.copy()
            mutated.values[3] += np.float32(0.5)
            return dataclasses.replace(sub, params=mutated)

        metrics = run_round(state, 1, tamper_hook=corrupt_params)
        # signature and on-chain hash verify, but the off-chain bytes no
        # longer digest to the verified hash, so client 0 must be excluded
        assert metrics.verified_count == 2

    def test_all_rejected_aborts_round_model_unchanged(self):
        cfg = _small_config()
        state = init_phase(cfg)
        before = state.global_params.values.copy()
        with pytest.raises(NoVerifiedUpdates):
            run_round(state, 1, tamper_hook=_corrupt_sig)
        assert np.array_equal(state.global_params.values, before)

    def test_round_numbering_starts_at_one(self):
        state = init_phase(_small_config())
        with pytest.raises(ValueError):
            run_round(state, 0)

    def test_metric_consistency_invariant(self):
        state = init_phase(_small_config())
        m = run_round(state, 1)
        recomputed = overhead_ratio(m.mean_sign_ms, m.mean_verify_ms, m.mean_tx_time_s)
        assert abs(recomputed - m.overhead_ratio) <= 1e-12 * abs(m.overhead_ratio)

    def test_serial_and_parallel_agree(self):
        serial = run_experiment(_small_config(parallel_clients=False))
        parallel = run_experiment(_small_config(parallel_clients=True))
        assert serial.model_trajectory == parallel.model_trajectory


def _fedavg_oracle_initial(cfg):
    state = init_phase(cfg)
    return _fedavg_oracle(state, set(state.client_ids), cfg.master_seed)


class TestOverheadRatio:
    def test_reference_values(self):
        assert overhead_ratio(0.609, 0.524, 0.05) == pytest.approx(0.02266, abs=1e-12)
        assert overhead_ratio(0.0, 0.0, 0.1) == 0.0
        assert overhead_ratio(0.5, 0.5, 1.0) == pytest.approx(0.001, abs=1e-15)

    def test_zero_denominator(self):
        with pytest.raises(ZeroDenominator):
            overhead_ratio(1.0, 1.0, 0.0)
        with pytest.raises(ZeroDenominator):
            overhead_ratio(1.0, 1.0, -0.5)


class TestRunExperiment:
    def test_zero_rounds_reports_initial_accuracy(self):
        report = run_experiment(_small_config(rounds=0))
        assert report.rounds == []
        assert report.summary["accuracy"] == report.initial_accuracy
        assert report.final_accuracy == report.initial_accuracy

    def test_same_seed_identical_trajectories(self):
        a = run_experiment(_small_config())
        b = run_experiment(_small_config())
        assert [m.accuracy for m in a.rounds] == [m.accuracy for m in b.rounds]
        assert a.model_trajectory == b.model_trajectory

    def test_bc_and_nobc_trajectories_identical(self):
        bc = run_experiment(_small_config(blockchain=True))
        nobc = run_experiment(_small_config(blockchain=False))
        assert bc.model_trajectory == nobc.model_trajectory

    def test_scheme_independence_short(self):
        trajectories = [
            run_experiment(_small_config(scheme=s)).model_trajectory
            for s in (SchemeId.PQC, SchemeId.ECDSA, SchemeId.NONE)
        ]
        assert trajectories[0] == trajectories[1] == trajectories[2]

    def test_verified_and_rejected_partition_clients(self):
        report = run_experiment(_small_config())
        for m in report.rounds:
            assert m.verified_count + m.rejected_count == report.config.n_clients

    def test_report_json_serializable(self):
        import json

        report = run_experiment(_small_config())
        blob = json.dumps(report.to_json_dict(), sort_keys=True)
        assert report.config.name() in blob


class TestGasEfficiency:
    def test_pqc_gas_per_round_arithmetic(self):
        # 3 client updates + 1 aggregation record, all at the PQC target
        report = run_experiment(_small_config())
        assert report.gas_per_round == 4 * 1_724_100
        for m in report.rounds:
            assert m.mean_gas_per_update == 1_724_100

    def test_nobc_not_applicable(self):
        report = run_experiment(_small_config(blockchain=False))
        with pytest.raises(NotApplicable):
            gas_efficiency(report)

    def test_zero_gain_zero_efficiency(self):
        report = run_experiment(_small_config())
        frozen = dataclasses.replace(report, final_accuracy=report.initial_accuracy)
        _, per_gas = gas_efficiency(frozen)
        assert per_gas == 0.0

    def test_aggregation_opt_out_reduces_gas(self):
        report = run_experiment(_small_config(submit_aggregation=False))
        assert report.gas_per_round == 3 * 1_724_100


class TestConfig:
    def test_naming_convention(self):
        cfg = _small_config()
        assert cfg.name() == "synth-PQC-3c-BC"
        assert _small_config(blockchain=False, scheme=SchemeId.NONE).name() == (
            "synth-NONE-3c-NoBC"
        )
        csv_cfg = _small_config(dataset="csv:/data/readings.csv")
        assert csv_cfg.name() == "readings-PQC-3c-BC"

    def test_nobc_mean_tx_time_is_fixed_delay(self):
        report = run_experiment(_small_config(blockchain=False))
        for m in report.rounds:
            assert m.mean_tx_time_s == 0.05

    def test_bc_default_latency_constant(self):
        report = run_experiment(_small_config())
        for m in report.rounds:
            assert m.mean_tx_time_s == pytest.approx(0.32)

    def test_derive_seed_stable_and_tag_sensitive(self):
        assert derive_seed(1, "a") == derive_seed(1, "a")
        assert derive_seed(1, "a") != derive_seed(1, "b")
        assert derive_seed(1, "a") != derive_seed(2, "a")

    def test_uniform_latency_range_end_to_end(self):
        cfg = _small_config(latency_range=(0.1, 0.5), rounds=3)
        report = run_experiment(cfg)
        for m in report.rounds:
            assert 0.1 <= m.mean_tx_time_s <= 0.5
        spread = {m.mean_tx_time_s for m in report.rounds}
        assert len(spread) > 1  # actually sampling, not a constant

    def test_nobc_real_sleep_excluded_from_compute_time(self):
        import time

        cfg = _small_config(
            blockchain=False, rounds=1, n_clients=2,
            nobc_fixed_delay_s=0.03, nobc_real_sleep=True,
            parallel_clients=False,
        )
        state = init_phase(cfg)
        t0 = time.perf_counter()
        metrics = run_round(state, 1)
        wall = time.perf_counter() - t0
        assert wall >= 2 * 0.03  # the delays were actually slept
        assert metrics.compute_time_s <= wall - 2 * 0.03 + 0.02
        assert metrics.simulated_latency_s == pytest.approx(2 * 0.03)

    def test_csv_dataset_end_to_end(self, tmp_path):
        rng = np.random.default_rng(3)
        lines = ["f0,f1,f2,label"]
        for _ in range(120):
            label = int(rng.integers(0, 2))
            feats = rng.standard_normal(3) + 3.0 * label
            lines.append(",".join(f"{v:.4f}" for v in feats) + f",{label}")
        path = tmp_path / "readings.csv"
        path.write_text("\n".join(lines) + "\n")

        cfg = _small_config(dataset=f"csv:{path}", n_clients=2, rounds=2)
        report = run_experiment(cfg)
        assert report.config.name() == "readings-PQC-2c-BC"
        assert len(report.rounds) == 2
        assert 0.0 <= report.final_accuracy <= 1.0
