import csv
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nbsl.signals import (
    EVIDENCE,
    SIGNALS,
    EvidenceSpec,
    Regime,
    Style,
    WorldModel,
    generate_evidence,
    sample_signal,
    sample_signals,
    substream,
    world_evidence,
    world_signals,
    write_evidence_csv,
    write_signals_csv,
)
from nbsl.uncertain_models import CategoricalParams, EvidenceCounts

PI = CategoricalParams([0.6, 0.4])


class TestSampling:
    def test_degenerate(self):
        rng = np.random.default_rng(0)
        assert all(sample_signal(CategoricalParams([1.0, 0.0]), rng) == 0 for _ in range(100))
        assert set(sample_signals(CategoricalParams([0.0, 0.0, 1.0]), 1000, rng)) == {2}

    def test_frequency(self):
        x = sample_signals(PI, 100_000, np.random.default_rng(42))
        # 4 sigma binomial band is about 0.0062
        assert abs(np.mean(x == 0) - 0.6) <= 0.01

    def test_seeds_differ(self):
        p = CategoricalParams([0.5, 0.5])
        a = sample_signals(p, 64, np.random.default_rng(1))
        b = sample_signals(p, 64, np.random.default_rng(2))
        assert not np.array_equal(a, b)

    def test_inverse_cdf(self):
        # one uniform per draw, category = first index whose cdf exceeds u
        p = CategoricalParams([0.2, 0.5, 0.3])
        u = np.random.default_rng(9).random(500)
        expect = np.array([int(np.argmax(np.cumsum(p.probs) > x)) for x in u])
        assert np.array_equal(sample_signals(p, 500, np.random.default_rng(9)), expect)

    def test_chi_square(self):
        from scipy.stats import chisquare

        p = CategoricalParams([0.1, 0.2, 0.3, 0.4])
        x = sample_signals(p, 50_000, np.random.default_rng(3))
        obs = np.bincount(x, minlength=4)
        assert chisquare(obs, p.probs * 50_000).pvalue > 1e-4


class TestEvidenceSpec:
    def test_ranges(self):
        assert EvidenceSpec("low").bounds == (0, 100)
        assert EvidenceSpec("high").bounds == (1000, 10000)
        assert EvidenceSpec("infinite").bounds is None
        assert EvidenceSpec.explicit(3, 9).bounds == (3, 9)

    @pytest.mark.parametrize(
        "kwargs",
        [dict(regime="range"), dict(regime="range", lo=5, hi=2), dict(regime="low", lo=1, hi=2), dict(regime="huge")],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            EvidenceSpec(**kwargs)


class TestGenerateEvidence:
    def test_collapsed_range_is_vacuous(self):
        e = generate_evidence(PI, EvidenceSpec.explicit(0, 0), np.random.default_rng(0))
        assert e.counts.tolist() == [0.0, 0.0]

    def test_idealized(self):
        e = generate_evidence(PI, EvidenceSpec.explicit(10, 10, Style.IDEALIZED), np.random.default_rng(0))
        assert np.allclose(e.counts, [6.0, 4.0])

    def test_sampled_concentration(self):
        e = generate_evidence(PI, EvidenceSpec.explicit(10_000, 10_000), np.random.default_rng(5))
        assert e.total == 10_000 and abs(e.counts[0] / 1e4 - 0.6) <= 0.02

    def test_infinite(self):
        e = generate_evidence(PI, EvidenceSpec("infinite"), np.random.default_rng(0))
        assert e.is_certain and e.certain == PI

    @given(st.integers(0, 2**32 - 1), st.sampled_from(["low", "high"]))
    def test_sampled_invariants(self, seed, regime):
        spec = EvidenceSpec(regime)
        e = generate_evidence(PI, spec, np.random.default_rng(seed))
        lo, hi = spec.bounds
        assert lo <= e.total <= hi
        assert np.all(e.counts >= 0) and np.all(e.counts == np.round(e.counts))
        assert e.counts.sum() == e.total

    @given(st.integers(0, 2**32 - 1))
    def test_idealized_interior_positive(self, seed):
        e = generate_evidence(PI, EvidenceSpec.explicit(1, 100, Style.IDEALIZED), np.random.default_rng(seed))
        assert np.all(e.counts > 0)

    def test_uniform_amount(self):
        rng = np.random.default_rng(0)
        totals = [generate_evidence(PI, EvidenceSpec("low"), rng).total for _ in range(20_000)]
        counts = np.bincount(np.array(totals, dtype=int), minlength=101)
        assert counts.min() > 0 and len(counts) == 101
        assert abs(np.mean(totals) - 50) < 1.0


class TestWorld:
    def test_shared(self, benchmark_hyps):
        w = WorldModel.shared(benchmark_hyps, 0, 4)
        assert w.m == 4 and w.S == 4 and w.K == 2 and w.ground_truth[2] == PI
        with pytest.raises(ValueError):
            WorldModel.shared(benchmark_hyps, 4, 4)

    def test_invalid(self):
        with pytest.raises(ValueError):
            WorldModel((PI,), ())
        with pytest.raises(ValueError):
            WorldModel((PI,), ((CategoricalParams([0.2, 0.3, 0.5]),),))

    def test_determinism(self, benchmark_hyps):
        w = WorldModel.shared(benchmark_hyps, 0, 5)
        a = world_signals(w, 300, 7, 2)
        assert np.array_equal(a, world_signals(w, 300, 7, 2))
        assert not np.array_equal(a, world_signals(w, 300, 7, 3))
        e1 = world_evidence(w, EvidenceSpec("low"), 7, 2)
        e2 = world_evidence(w, EvidenceSpec("low"), 7, 2)
        assert all(np.array_equal(a.counts, b.counts) for ra, rb in zip(e1, e2) for a, b in zip(ra, rb))

    def test_prefix_stable(self, benchmark_hyps):
        w = WorldModel.shared(benchmark_hyps, 0, 3)
        short, long = world_signals(w, 100, 1, 0), world_signals(w, 1000, 1, 0)
        assert np.array_equal(short, long[:100])

    def test_streams_independent_of_scale(self, benchmark_hyps):
        # agent i's streams only depend on (seed, run, agent, purpose)
        small = WorldModel.shared(benchmark_hyps, 0, 3)
        big = WorldModel.shared(benchmark_hyps, 0, 8)
        assert np.array_equal(world_signals(small, 50, 4, 1), world_signals(big, 50, 4, 1)[:, :3])
        ea = world_evidence(small, EvidenceSpec("high"), 4, 1)
        eb = world_evidence(big, EvidenceSpec("high"), 4, 1)
        for i in range(3):
            for s in range(4):
                assert np.array_equal(ea[i][s].counts, eb[i][s].counts)

    def test_adding_hypotheses_keeps_signals(self, benchmark_hyps):
        a = WorldModel.shared(benchmark_hyps[:2], 0, 3)
        b = WorldModel.shared(benchmark_hyps, 0, 3)
        assert np.array_equal(world_signals(a, 40, 9, 0), world_signals(b, 40, 9, 0))

    def test_substream_keys(self):
        a = substream(1, 0, 0, SIGNALS).random(4)
        b = substream(1, 0, 0, EVIDENCE).random(4)
        c = substream(1, 0, 0, SIGNALS).random(4)
        assert not np.array_equal(a, b) and np.array_equal(a, c)


class TestCsv:
    def test_evidence_csv(self, tmp_path):
        rows = [
            (0, 0, 0, EvidenceCounts.finite([3.0, 4.0])),
            (0, 0, 1, EvidenceCounts.certain_model([0.5, 0.5])),
        ]
        p = tmp_path / "e.csv"
        write_evidence_csv(rows, p)
        got = list(csv.reader(open(p)))
        assert got[0] == ["run", "agent", "hypothesis", "k", "r_k"]
        assert got[1:] == [["0", "0", "0", "0", "3.0"], ["0", "0", "0", "1", "4.0"],
                           ["0", "0", "1", "0", "inf"], ["0", "0", "1", "1", "inf"]]
        write_evidence_csv([(r + (("low",),)) for r in rows], p, extra_header=("regime",))
        got = list(csv.reader(open(p)))
        assert got[0][-1] == "regime" and got[1][-1] == "low" and math.isinf(float(got[3][4]))

    def test_signals_csv(self, tmp_path):
        sig = np.array([[0, 1], [1, 1], [0, 0]])
        p = tmp_path / "s.csv"
        write_signals_csv([(3, sig)], p)
        got = list(csv.reader(open(p)))
        assert got[0] == ["run", "agent", "t", "omega"]
        assert got[1] == ["3", "0", "1", "0"] and got[4] == ["3", "1", "1", "1"] and len(got) == 7


def test_regime_enum_values():
    assert {r.value for r in Regime} == {"low", "high", "infinite", "range"}
