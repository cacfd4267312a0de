import json
from pathlib import Path

import numpy as np
import pytest

from lemica.exceptions import ContractViolation, DegenerateReferenceError
from lemica.measure import (
    ErrorMatrix,
    LocalErrorProfile,
    build_error_matrix,
    build_local_profile,
    local_rel_l1,
    segment_error,
    weighted_merge,
)
from lemica.sampler import MixtureFamily, NoiseSchedule
from tests import oracles

FIXTURES = Path(__file__).parent / "fixtures"


class TestLocalRelL1:
    def test_identical(self):
        assert local_rel_l1(np.array([1.0, -2.0]), np.array([1.0, -2.0])) == 0.0

    def test_double(self):
        b = np.array([0.3, -1.7, 2.0])
        assert local_rel_l1(2 * b, b) == 1.0

    def test_hand_value(self):
        assert local_rel_l1(np.array([1.0, 2.0]), np.array([1.0, 1.0])) == 0.5

    def test_degenerate_reference(self):
        with pytest.raises(DegenerateReferenceError):
            local_rel_l1(np.ones(2), np.zeros(2))

    def test_shape_mismatch(self):
        with pytest.raises(ContractViolation):
            local_rel_l1(np.ones(2), np.ones(3))


class TestSegmentError:
    def test_unit_segment_is_zero(self):
        model, x = MixtureFamily()(0)
        s = NoiseSchedule.cosine(10)
        for i in range(10):
            assert segment_error(model, s, x, i, i + 1) == 0.0

    def test_whole_trajectory_matches_oracle(self):
        model, x = MixtureFamily()(9)
        s = NoiseSchedule.cosine(6)
        expected = oracles.segment_error(model.means.tolist(), model.weights.tolist(), model.component_std, x.tolist(), 6, 0, 6)
        assert abs(segment_error(model, s, x, 0, 6) - expected) <= 1e-12

    def test_deterministic(self):
        model, x = MixtureFamily()(3)
        s = NoiseSchedule.cosine(12)
        assert segment_error(model, s, x, 2, 7) == segment_error(model, s, x, 2, 7)

    def test_rejects_reversed(self):
        model, x = MixtureFamily()(3)
        with pytest.raises(ContractViolation):
            segment_error(model, NoiseSchedule.cosine(12), x, 5, 5)


class TestErrorMatrix:
    family = MixtureFamily()

    def test_single_seed_equals_raw_errors(self):
        s = NoiseSchedule.cosine(8)
        m = build_error_matrix(self.family, s, [4], 3)
        model, x = self.family(4)
        for (i, j), w in m.values.items():
            assert w == segment_error(model, s, x, i, j)

    def test_two_seed_midpoint(self):
        s = NoiseSchedule.cosine(8)
        a = build_error_matrix(self.family, s, [1], 4)
        b = build_error_matrix(self.family, s, [2], 4)
        ab = build_error_matrix(self.family, s, [1, 2], 4)
        assert ab.sample_count == 2
        for key in ab.values:
            assert ab[key] == (a[key] + b[key]) / 2

    def test_seed_union_is_weighted_mean(self):
        s = NoiseSchedule.cosine(8)
        s1, s2 = [1, 2, 3], [10, 11]
        merged = weighted_merge(build_error_matrix(self.family, s, s1, 5), build_error_matrix(self.family, s, s2, 5))
        direct = build_error_matrix(self.family, s, s1 + s2, 5)
        assert merged.sample_count == direct.sample_count
        for key in direct.values:
            assert abs(merged[key] - direct[key]) <= 1e-12

    @pytest.mark.parametrize("T", [3, 5, 8])
    def test_brute_force_parity(self, T):
        s = NoiseSchedule.cosine(T)
        m = build_error_matrix(self.family, s, [21, 22], T)
        for (i, j), w in m.values.items():
            ref = 0.0
            for seed in (21, 22):
                model, x = self.family(seed)
                ref += oracles.segment_error(model.means.tolist(), model.weights.tolist(), model.component_std, x.tolist(), T, i, j)
            assert abs(w - ref / 2) <= 1e-12

    def test_band_structure(self):
        m = build_error_matrix(self.family, NoiseSchedule.cosine(12), [0], 4)
        assert all(m[(i, i + 1)] == 0.0 for i in range(12))
        expected = {(i, j) for i in range(12) for j in range(i + 2, min(i + 4, 12) + 1)}
        assert {k for k, _ in m.skip_items()} == expected
        assert all(np.isfinite(w) and w >= 0 for w in m.values.values())

    def test_threads_do_not_change_result(self, monkeypatch):
        s = NoiseSchedule.cosine(10)
        serial = build_error_matrix(self.family, s, range(6), 4)
        monkeypatch.setenv("LEMICA_THREADS", "4")
        parallel = build_error_matrix(self.family, s, range(6), 4)
        assert serial.to_csv() == parallel.to_csv()

    def test_requires_seed(self):
        with pytest.raises(ContractViolation):
            build_error_matrix(self.family, NoiseSchedule.cosine(5), [], 2)

    def test_invariants_enforced(self):
        with pytest.raises(ContractViolation):
            ErrorMatrix(3, 2, {(0, 1): 0.5, (0, 2): 0.1, (1, 3): 0.1}, 1)
        with pytest.raises(ContractViolation):
            ErrorMatrix(3, 2, {(0, 2): -0.1, (1, 3): 0.1}, 1)
        with pytest.raises(ContractViolation):
            ErrorMatrix(3, 2, {(0, 2): 0.1}, 1)

    def test_csv_round_trip(self):
        m = build_error_matrix(self.family, NoiseSchedule.cosine(7), [0, 1], 3)
        text = m.to_csv()
        assert text.splitlines()[0] == "i,j,error,samples"
        assert len(text.splitlines()) == 1 + sum(7 + 1 - k for k in (2, 3))
        back = ErrorMatrix.from_csv(text)
        assert (back.num_steps, back.max_skip, back.sample_count) == (7, 3, 2)
        assert back.values == m.values

    def test_json_round_trip(self):
        m = build_error_matrix(self.family, NoiseSchedule.cosine(7), [0], 3)
        back = ErrorMatrix.from_json(m.to_json())
        assert back.values == m.values and back.max_skip == 3

    def test_csv_needs_steps_without_rows(self):
        m = ErrorMatrix(4, 1, {}, 1)
        with pytest.raises(ContractViolation):
            ErrorMatrix.from_csv(m.to_csv())
        assert ErrorMatrix.from_csv(m.to_csv(), num_steps=4).values == m.values

    @pytest.mark.slow
    def test_early_segments_dominate_late_ones(self):
        s = NoiseSchedule.cosine(30)
        wins = 0
        for rep in range(10):
            m = build_error_matrix(self.family, s, range(1000 * rep, 1000 * rep + 20), 8)
            assert all(np.isfinite(w) and w >= 0 for w in m.values.values())
            wins += m[(0, 2)] > m[(27, 29)]
        assert wins >= 9


class TestLocalProfile:
    def test_length_for_two_steps(self):
        p = build_local_profile(MixtureFamily(), NoiseSchedule.cosine(2), [0])
        assert p.rel_l1.shape == (1,)

    def test_duplicate_seed_equals_single(self):
        s = NoiseSchedule.cosine(10)
        one = build_local_profile(MixtureFamily(), s, [5])
        two = build_local_profile(MixtureFamily(), s, [5, 5])
        np.testing.assert_array_equal(one.rel_l1, two.rel_l1)

    def test_pilot_band_and_fixture(self):
        pilot = json.loads((FIXTURES / "pilot_profile.json").read_text())
        fam = MixtureFamily(**pilot["family"])
        p = build_local_profile(fam, NoiseSchedule.cosine(pilot["num_steps"]), pilot["seeds"])
        lo, hi = pilot["band"]
        assert np.all((p.rel_l1 > lo) & (p.rel_l1 < hi))
        np.testing.assert_allclose(p.rel_l1, pilot["rel_l1"], rtol=1e-9)

    def test_length_validated(self):
        with pytest.raises(ContractViolation):
            LocalErrorProfile(5, np.ones(3))
