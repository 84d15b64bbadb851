import io
import json
from fractions import Fraction

import numpy as np
import pytest

from conftest import S222, TABLE1, TABLE1_GRID
from nsbell.constraints import build_constraint_system
from nsbell.correlators import all_umc_vectors
from nsbell.data import (
    CountTable,
    drift_direction,
    frequencies,
    generate_drift_counts,
    load_counts,
    load_grid222,
    signalling_report,
    write_counts,
)
from nsbell.projection import project_l2
from nsbell.scenario import BehaviorVector, Scenario, ScenarioError, random_local_behavior, uniform_behavior

HEADER = "x1,x2,a1,a2,count\n"


class TestLoad:
    def test_table1_totals(self, table1):
        assert table1.total == 5_000_000
        np.testing.assert_array_equal(table1.setting_totals, [1250580, 1249152, 1249656, 1250612])
        assert table1[(0, 0), (0, 0)] == 3166

    def test_grid_matches_csv(self, table1):
        with open(TABLE1_GRID) as fh:
            grid = load_grid222(fh)
        np.testing.assert_array_equal(grid.counts, table1.counts)

    def test_missing_rows_are_zero(self):
        t = load_counts(io.StringIO(HEADER + "0,1,1,0,7\n"), S222)
        assert t.total == 7 and t[(1, 0), (0, 1)] == 7

    @pytest.mark.parametrize("body,msg", [
        ("0,0,0,0,1\n0,0,0,0,2\n", "line 3: duplicate key x=\\(0, 0\\), a=\\(0, 0\\)"),
        ("0,0,0,0,-1\n", "line 2: negative"),
        ("0,0,0,1\n", "line 2: expected 5 fields"),
        ("0,0,0,0,x\n", "line 2: non-integer"),
        ("0,2,0,0,1\n", "line 2: setting x_2=2"),
        ("0,0,0,2,1\n", "line 2: outcome a_2=2"),
    ])
    def test_errors(self, body, msg):
        with pytest.raises(ScenarioError, match=msg):
            load_counts(io.StringIO(HEADER + body), S222)

    def test_bad_header_and_empty(self):
        with pytest.raises(ScenarioError, match="header"):
            load_counts(io.StringIO("a1,a2,x1,x2,count\n"), S222)
        with pytest.raises(ScenarioError, match="empty"):
            load_counts(io.StringIO(""), S222)

    def test_write_round_trip(self, table1):
        buf = io.StringIO()
        write_counts(table1, buf)
        back = load_counts(io.StringIO(buf.getvalue()), S222)
        np.testing.assert_array_equal(back.counts, table1.counts)

    def test_grid_errors(self):
        with pytest.raises(ScenarioError):
            load_grid222(io.StringIO("1 2 3\n"))
        with pytest.raises(ScenarioError):
            load_grid222(io.StringIO("1 2 3 4\n"))


class TestFrequencies:
    def test_table1(self, table1_freq):
        f, pi = table1_freq
        assert f[(0, 0), (0, 0)] == pytest.approx(3166 / 1250580)
        assert f[(0, 0), (0, 0)] == pytest.approx(2.5317e-3, rel=1e-4)
        np.testing.assert_allclose(pi.weights, 0.25, atol=3e-4)
        assert pi.weights.sum() == pytest.approx(1.0)

    def test_exact(self, table1):
        fr = table1.exact_frequencies()
        assert fr[0] == Fraction(3166, 1250580)
        for k in range(4):
            assert sum(fr[4 * k:4 * k + 4]) == 1

    def test_single_trial_indicator(self):
        counts = np.zeros(16, dtype=np.int64)
        counts[[1, 4, 10, 15]] = 1
        f, _ = frequencies(CountTable(S222, counts))
        np.testing.assert_array_equal(f.entries, counts)

    def test_empty_block(self):
        counts = np.ones(16, dtype=np.int64)
        counts[4:8] = 0
        with pytest.raises(ScenarioError, match=r"\(0, 1\)"):
            frequencies(CountTable(S222, counts))

    def test_count_table_validation(self):
        with pytest.raises(ScenarioError):
            CountTable(S222, np.full(16, -1))
        with pytest.raises(ScenarioError):
            CountTable(S222, np.full(16, 0.5))


class TestSignallingReport:
    def test_table1_caption_marginals(self, table1_freq):
        f, _ = table1_freq
        pair = signalling_report(f).find(2, 1, (0,), (0,))
        oracle = (Fraction(3166 + 1851, 1250580), Fraction(3637 + 1338, 1249152))
        assert pair.values == pytest.approx([float(v) for v in oracle], abs=1e-15)
        assert f"{pair.values[0]:.5g}" == "0.0040117"
        assert f"{pair.values[1]:.5g}" == "0.0039827"

    def test_report_fields(self, table1_freq):
        f, _ = table1_freq
        rep = signalling_report(f)
        assert len(rep.rows) == 8
        assert rep.max_residual == pytest.approx(np.max(np.abs(rep.residuals)))
        assert rep.worst.residual == pytest.approx(max(rep.residuals, key=abs))
        obj = json.loads(json.dumps(rep.to_json()))
        assert obj["max_residual"] == rep.max_residual
        assert "worst" in rep.summary()

    def test_ns_and_projected_are_clean(self, table1_freq):
        p = random_local_behavior(Scenario(3, 2), np.random.default_rng(0))
        assert signalling_report(p).max_residual <= 1e-15
        f, _ = table1_freq
        assert signalling_report(project_l2(f)).max_residual <= 1e-12


class TestDrift:
    def test_expected_uniform(self):
        t = generate_drift_counts(uniform_behavior(S222), 1000, 0.0, 1, 0, mode="expected")
        np.testing.assert_array_equal(t.counts, 250)

    def test_drift_is_detected(self):
        t = generate_drift_counts(uniform_behavior(S222), 1000, 0.05, 4, 7)
        assert signalling_report(frequencies(t)[0]).max_residual > 0

    def test_deterministic(self):
        local = random_local_behavior(Scenario(2, 3), np.random.default_rng(1))
        base = BehaviorVector(local.scenario, 0.5 * local.entries + 0.125, "probability")
        a = generate_drift_counts(base, 500, 0.02, 3, 11)
        b = generate_drift_counts(base, 500, 0.02, 3, 11)
        np.testing.assert_array_equal(a.counts, b.counts)

    def test_direction_is_pure_signalling(self):
        s = Scenario(2, 3)
        u = drift_direction(s, 3)
        assert np.linalg.norm(u) == pytest.approx(1.0)
        np.testing.assert_allclose(u.reshape(9, 4).sum(axis=1), 0, atol=1e-14)
        for c in all_umc_vectors(s):
            assert abs(c.entries @ u) < 1e-14
        assert np.abs(build_constraint_system(s).nosig_matrix @ u).max() > 1e-3

    def test_expected_mode_injects_signalling(self):
        t = generate_drift_counts(uniform_behavior(S222), 10 ** 6, 0.2, 2, 3, mode="expected")
        assert signalling_report(frequencies(t)[0]).max_residual > 1e-3

    def test_sampling_converges(self):
        base = random_local_behavior(S222, np.random.default_rng(2))
        base = BehaviorVector(S222, 0.5 * base.entries + 0.125, "probability")
        errs = [np.max(np.abs(frequencies(generate_drift_counts(base, 10 ** 6, 0.0, 1, seed))[0].entries
                              - base.entries)) for seed in (1, 2, 3)]
        assert np.mean(errs) < 5e-3

    def test_out_of_range_drift(self):
        det = np.zeros(16)
        det[[0, 4, 8, 12]] = 1.0
        with pytest.raises(ScenarioError, match="outside"):
            generate_drift_counts(BehaviorVector(S222, det, "probability"), 100, 0.5, 4, 0)

    def test_rejects_signalling_base(self, table1_freq):
        f, _ = table1_freq
        with pytest.raises(ScenarioError, match="no-signalling"):
            generate_drift_counts(f, 100, 0.0, 1, 0)

    def test_trials_mapping(self):
        trials = {x: 100 * (k + 1) for k, x in enumerate(S222.setting_tuples())}
        t = generate_drift_counts(uniform_behavior(S222), trials, 0.0, 1, 0, mode="expected")
        np.testing.assert_array_equal(t.setting_totals, [100, 200, 300, 400])
        with pytest.raises(ScenarioError):
            generate_drift_counts(uniform_behavior(S222), {(0, 0): 5}, 0.0, 1, 0)
