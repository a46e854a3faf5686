import json
import math

import numpy as np
import pytest

from adaptqec.estimator import rates_to_classes
from adaptqec.experiments import (
    ExperimentConfig,
    ExperimentError,
    build_test_set,
    default_checkpoints,
    evaluation_times,
    exp_convergence,
    exp_fluctuation,
    fit_fidelity,
    logical_error_rate,
    oracle_weights,
    power_law_exponent,
    refresh_time,
    relative_error,
    schedule_from_spec,
)
from adaptqec.matching import decode
from adaptqec.noise import Constant, NoiseSchedule, SyndromeRecord, sample_flips, syndrome_from_flips
from adaptqec.weights import DIJKSTRA, EXACT, StationaryWeights

SINE_SPEC = {"type": "sinusoid", "gamma0": 0.005, "amplitude": 0.005, "omega": math.pi * 1e-4,
             "targets": "ancilla"}


class TestConfig:
    def test_defaults(self):
        c = ExperimentConfig()
        assert c.checkpoints == list(range(10, 101, 10))
        assert c.window == [500, 2000, 16000] and c.rounds_test == 100

    def test_default_checkpoints(self):
        assert default_checkpoints(100) == list(range(10, 101, 10))
        assert default_checkpoints(5, 2) == [2, 3, 4, 5]

    def test_from_json(self):
        c = ExperimentConfig.from_json(json.dumps({"d": 5, "window": 800, "schedule": SINE_SPEC}))
        assert c.d == 5 and c.window == [800]
        with pytest.raises(ExperimentError):
            ExperimentConfig.from_json('{"distance": 3}')

    @pytest.mark.parametrize("bad", [
        {"trials": 0}, {"n_train": [0]}, {"window": [1]}, {"backend": "greedy"},
        {"checkpoints": [0, 10]}, {"checkpoints": [200]},
    ])
    def test_invalid(self, bad):
        with pytest.raises(ExperimentError):
            ExperimentConfig(**bad)

    def test_schedules(self):
        s = schedule_from_spec(3, SINE_SPEC)
        assert s.table(1, 5000)[0].tolist() == pytest.approx([0.005] * 3 + [0.01] * 2)
        s = schedule_from_spec(3, {**SINE_SPEC, "targets": "data"})
        assert s.table(1, 5000)[0].tolist() == pytest.approx([0.01] * 3 + [0.005] * 2)
        s = schedule_from_spec(3, {"type": "constant", "gamma0": 0.02})
        assert np.all(s.table(3) == 0.02)
        with pytest.raises(ExperimentError):
            schedule_from_spec(3, {"type": "square", "gamma0": 0.1})


class TestFit:
    def test_zero_noise(self):
        curve = fit_fidelity([10, 20, 30], [1.0, 1.0, 1.0])
        assert curve.epsilon == 0.0 and curve.residual == 0.0

    def test_exact_decay(self):
        t = np.arange(10, 101, 10)
        curve = fit_fidelity(t, 0.5 + 0.5 * (1 - 2 * 0.003) ** t)
        assert curve.epsilon == pytest.approx(0.003, rel=1e-12)

    def test_synthetic_success_process(self):
        rng = np.random.default_rng(8)
        flips = rng.random((10_000, 100)) < 0.01
        parity = np.cumsum(flips, axis=1) % 2
        t = list(range(10, 101, 10))
        fidelity = [1.0 - parity[:, k - 1].mean() for k in t]
        assert fit_fidelity(t, fidelity).epsilon == pytest.approx(0.01, abs=0.002)

    def test_chance_level(self):
        with pytest.raises(ExperimentError):
            fit_fidelity([10, 20], [0.5, 0.4])


class TestRelativeError:
    def test_values(self):
        assert relative_error(0.005, 0.005) == 0.0
        assert relative_error(0.006, 0.005) == pytest.approx(0.2)
        assert relative_error(0.004, 0.005) == pytest.approx(-0.2)
        with pytest.raises(ExperimentError):
            relative_error(0.1, 0.0)

    def test_power_law(self):
        ns = [100, 1000, 10000]
        assert power_law_exponent(ns, [5 * n ** -1.2 for n in ns]) == pytest.approx(1.2)
        assert math.isnan(power_law_exponent(ns, [1.0, -0.1, 0.0]))


class TestTestSets:
    def test_counts_add_up(self):
        s = NoiseSchedule.uniform(3, 0.02)
        for posterior in (True, False):
            ts = build_test_set(s, 1, 30, 300, (1, 2), [10, 20, 30], posterior=posterior)
            total = sum(c for c in ts.patterns.values())
            assert np.allclose(total.sum(axis=1), 300)

    def test_zero_noise(self):
        ts = build_test_set(NoiseSchedule.uniform(3, 0.0), 1, 100, 50, 4)
        assert list(ts.patterns) == [()]
        w = oracle_weights(NoiseSchedule.uniform(3, 0.005), 0, 1, 100, EXACT)
        curve = logical_error_rate(w, ts)
        assert curve.epsilon == 0.0 and all(f == 1.0 for f in curve.fidelity)

    def test_bad_checkpoints(self):
        with pytest.raises(ExperimentError):
            build_test_set(NoiseSchedule.uniform(3, 0.01), 2, 10, 5, 0, [1, 10])

    def test_patterns_are_truncated_runs(self):
        s = NoiseSchedule.uniform(3, 0.05)
        ts = build_test_set(s, 1, 20, 40, (6,), [5, 20], posterior=False)
        manual = {}
        for k in range(40):
            data, anc = sample_flips(s, 20, 1, (6, k))
            for c, t in enumerate((5, 20)):
                d_t, a_t = data[:t].copy(), anc[:t].copy()
                a_t[t - 1:] = False
                bits = syndrome_from_flips(d_t, a_t, 1)
                r, a = np.nonzero(bits)
                key = tuple(zip(a.tolist(), (r - r[0]).tolist())) if len(r) else ()
                manual.setdefault(key, np.zeros((2, 2)))[c, int(d_t[:, 0].sum() % 2)] += 1
        assert ts.patterns.keys() == manual.keys()
        for key in manual:
            assert np.array_equal(ts.patterns[key], manual[key])

    def test_posterior_scoring_consistent_with_truth(self):
        s = NoiseSchedule.uniform(3, 0.03)
        w = oracle_weights(s, 0, 1, 100, EXACT)
        soft = logical_error_rate(w, build_test_set(s, 1, 100, 4000, (3,), posterior=True))
        hard = logical_error_rate(w, build_test_set(s, 1, 100, 4000, (3,), posterior=False))
        for fs, fh in zip(soft.fidelity, hard.fidelity):
            assert abs(fs - fh) < 4 * math.sqrt(fh * (1 - fh) / 4000) + 1e-12


class TestDecoderQuality:
    def test_eps0_reproducible_across_seeds(self):
        s = NoiseSchedule.uniform(3, 0.005)
        w = oracle_weights(s, 0, 1, 100, EXACT)
        eps = [logical_error_rate(w, build_test_set(s, 1, 100, 8000, (seed, 2))).epsilon
               for seed in range(3)]
        mean = np.mean(eps)
        assert all(abs(e / mean - 1) <= 0.10 for e in eps)

    def test_sub_physical_and_improves_with_distance(self):
        gamma = 0.005
        eps = {}
        for d in (3, 5):
            s = NoiseSchedule.uniform(d, gamma)
            ts = build_test_set(s, 1, 100, 3000, (d, 2))
            eps[d] = logical_error_rate(oracle_weights(s, 0, 1, 100, EXACT), ts).epsilon
        assert eps[3] < gamma / 10
        assert eps[5] < eps[3]

    def test_logical_cut_relabelling(self):
        # decoding the mirror image with the left cut is decoding with the right cut
        d = 5
        rates = [0.01, 0.02, 0.015, 0.02, 0.01, 0.012, 0.018, 0.018, 0.012]
        weights = StationaryWeights(rates_to_classes(d, rates), d, 1, span=40, backend=EXACT)
        schedule = NoiseSchedule(d, tuple(map(Constant, rates[:d])), tuple(map(Constant, rates[d:])))
        for k in range(300):
            data, anc = sample_flips(schedule, 40, 1, (12, k))
            left = SyndromeRecord(d, 40, 1, syndrome_from_flips(data, anc, 1), int(data[:, 0].sum() % 2))
            mdata, manc = data[:, ::-1], anc[:, ::-1]
            right = SyndromeRecord(d, 40, 1, syndrome_from_flips(mdata, manc, 1), int(data[:, -1].sum() % 2))
            ok_left = decode(left, weights, 1e4).predicted_logical == left.true_logical
            ok_right = decode(right, weights, 1e4).predicted_logical == right.true_logical
            assert ok_left == ok_right


def small_config(**kw):
    base = dict(d=3, rounds_test=30, n_train=[100, 1000], repetitions=3, trials=300, seed=5)
    base.update(kw)
    return ExperimentConfig(**base)


class TestConvergence:
    def test_true_probabilities_give_zero(self):
        res = exp_convergence(small_config(), use_true_probabilities=True)
        assert all(mean == 0.0 and se == 0.0 for _, mean, se in res.rows)

    def test_below_n_min(self):
        res = exp_convergence(small_config(n_train=[50], repetitions=6, trials=1000, rounds_test=100))
        (_, mean, _), = res.rows
        assert mean > 0.5
        assert res.clamped_fraction[50] > 0

    def test_csv_and_determinism(self):
        a = exp_convergence(small_config()).to_csv()
        b = exp_convergence(small_config()).to_csv()
        assert a == b
        lines = a.splitlines()
        assert lines[0] == "N,delta_mean,delta_stderr,alpha_fit"
        assert [line.split(",")[0] for line in lines[1:]] == ["100", "1000"]
        assert exp_convergence(small_config(seed=6)).to_csv() != a

    def test_dijkstra_backend_runs(self):
        res = exp_convergence(small_config(backend=DIJKSTRA, n_train=[1000], repetitions=2))
        assert math.isfinite(res.rows[0][1])


class TestFluctuation:
    def test_refresh_schedule(self):
        assert refresh_time(2999, 2000) == 2500
        assert refresh_time(3000, 2000) == 3000
        assert refresh_time(7, 3) == 7

    def test_evaluation_times(self):
        c = ExperimentConfig(schedule=SINE_SPEC, eval_points=4)
        assert evaluation_times(c, 20000) == [16000, 21000, 26000, 31000]
        c = ExperimentConfig(schedule=SINE_SPEC, window=[11], eval_points=2)
        assert evaluation_times(c, 100) == [12, 62]

    def test_needs_sinusoid(self):
        with pytest.raises(ExperimentError):
            exp_fluctuation(small_config(window=[100]))

    def test_csv_and_determinism(self):
        spec = {**SINE_SPEC, "omega": 2 * math.pi / 2000}
        cfg = small_config(schedule=spec, window=[100, 400], repetitions=2, trials=200, eval_points=3)
        res = exp_fluctuation(cfg)
        text = res.to_csv()
        assert text == exp_fluctuation(cfg).to_csv()
        lines = text.splitlines()
        assert lines[0] == "t,eps_window_100,eps_window_400,eps_oracle"
        assert len(lines) == 4
        avg = res.time_average()
        assert set(avg) == {100, 400, "oracle"}
        assert all(v >= 0 for v in avg.values())
