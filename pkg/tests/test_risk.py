import numpy as np
import pytest

from gibbsauc.data import LabeledDataset
from gibbsauc.errors import DataError
from gibbsauc.risk import empirical_auc_risk, misrank_loss, roc_auc

from oracles import brute_auc, brute_misrank_loss, brute_ordered_risk

FOUR_SCORES = np.array([0.9, 0.4, 0.6, 0.1])
FOUR_DS = LabeledDataset(np.zeros((4, 1)), np.array([1, 1, -1, -1]))


def random_case(seed, with_ties=False):
    rng = np.random.default_rng(seed)
    n = rng.integers(5, 30)
    y = np.where(rng.random(n) < 0.5, 1, -1)
    if abs(int(y.sum())) == n:
        y[0] = -y[0]
    if with_ties:
        scores = rng.integers(0, 4, size=n).astype(float)
    else:
        scores = rng.normal(size=n)
    return scores, LabeledDataset(np.zeros((n, 1)), y)


class TestMisrankLoss:
    def test_hand_enumerated_example(self):
        # pairs: (0.9,0.6) ok, (0.9,0.1) ok, (0.4,0.6) misranked, (0.4,0.1) ok
        assert misrank_loss(FOUR_SCORES, FOUR_DS) == 0.25

    def test_perfect_separation(self):
        ds = LabeledDataset(np.zeros((4, 1)), np.array([1, 1, -1, -1]))
        assert misrank_loss(np.array([3.0, 2.0, 1.0, 0.0]), ds) == 0.0

    def test_all_ties_fully_penalized(self):
        assert misrank_loss(np.zeros(4), FOUR_DS) == 1.0

    @pytest.mark.parametrize("seed", range(8))
    @pytest.mark.parametrize("with_ties", [False, True])
    def test_matches_brute_force(self, seed, with_ties):
        scores, ds = random_case(seed, with_ties)
        assert misrank_loss(scores, ds) == pytest.approx(
            brute_misrank_loss(scores, ds.y), abs=1e-12
        )

    def test_row_matrix_matches_loop(self, rng):
        _, ds = random_case(1)
        S = rng.normal(size=(6, ds.n))
        batch = misrank_loss(S, ds)
        single = [misrank_loss(row, ds) for row in S]
        np.testing.assert_allclose(batch, single)

    def test_affine_invariance(self, rng):
        scores, ds = random_case(2)
        base = misrank_loss(scores, ds)
        assert misrank_loss(3.5 * scores + 11.0, ds) == base
        assert misrank_loss(np.exp(scores), ds) == base

    def test_empty_class_rejected(self):
        ds = LabeledDataset(np.zeros((3, 1)), np.array([1, 1, 1]))
        with pytest.raises(DataError):
            misrank_loss(np.arange(3.0), ds)


class TestEmpiricalAucRisk:
    def test_hand_example(self):
        assert empirical_auc_risk(FOUR_SCORES, FOUR_DS) == pytest.approx(1 / 6)

    def test_perfect_ranking(self):
        assert empirical_auc_risk(np.array([3.0, 2.0, 1.0, 0.0]), FOUR_DS) == 0.0

    def test_single_class_vacuous(self):
        ds = LabeledDataset(np.zeros((3, 1)), np.array([1, 1, 1]))
        assert empirical_auc_risk(np.array([1.0, 2.0, 3.0]), ds) == 0.0

    @pytest.mark.parametrize("seed", range(8))
    @pytest.mark.parametrize("with_ties", [False, True])
    def test_matches_ordered_brute_force(self, seed, with_ties):
        scores, ds = random_case(seed, with_ties)
        assert empirical_auc_risk(scores, ds) == pytest.approx(
            brute_ordered_risk(scores, ds.y), abs=1e-12
        )

    @pytest.mark.parametrize("seed", range(5))
    def test_relation_to_misrank_loss_tie_free(self, seed):
        scores, ds = random_case(seed, with_ties=False)
        lhs = empirical_auc_risk(scores, ds)
        rhs = (
            2.0 * ds.n_pos * ds.n_neg / (ds.n * (ds.n - 1))
        ) * misrank_loss(scores, ds)
        assert lhs == pytest.approx(rhs, abs=1e-12)


class TestRocAuc:
    def test_hand_example(self):
        _, auc = roc_auc(FOUR_SCORES, FOUR_DS.y)
        assert auc == 0.75

    def test_reversal(self):
        _, auc = roc_auc(-FOUR_SCORES, FOUR_DS.y)
        assert auc == 0.25

    def test_all_ties_half(self):
        _, auc = roc_auc(np.zeros(4), FOUR_DS.y)
        assert auc == 0.5

    @pytest.mark.parametrize("seed", range(8))
    @pytest.mark.parametrize("with_ties", [False, True])
    def test_matches_half_credit_brute_force(self, seed, with_ties):
        scores, ds = random_case(seed, with_ties)
        _, auc = roc_auc(scores, ds.y)
        assert auc == pytest.approx(brute_auc(scores, ds.y), abs=1e-12)

    @pytest.mark.parametrize("seed", range(5))
    def test_complement_symmetry(self, seed):
        scores, ds = random_case(seed, with_ties=True)
        _, a = roc_auc(scores, ds.y)
        _, b = roc_auc(-scores, ds.y)
        assert a + b == pytest.approx(1.0, abs=1e-12)

    @pytest.mark.parametrize("seed", range(6))
    def test_curve_invariants_and_trapezoid(self, seed):
        scores, ds = random_case(seed, with_ties=seed % 2 == 0)
        curve, auc = roc_auc(scores, ds.y)
        assert curve.fpr[0] == 0.0 and curve.tpr[0] == 0.0
        assert curve.fpr[-1] == 1.0 and curve.tpr[-1] == 1.0
        assert np.all(np.diff(curve.fpr) >= 0)
        assert np.all(np.diff(curve.tpr) >= 0)
        assert curve.trapezoid_area() == pytest.approx(auc, abs=1e-12)

    def test_single_class_rejected(self):
        with pytest.raises(DataError):
            roc_auc(np.arange(3.0), np.array([1, 1, 1]))

    def test_csv_export(self, tmp_path):
        curve, _ = roc_auc(FOUR_SCORES, FOUR_DS.y)
        out = tmp_path / "roc.csv"
        curve.write_csv(out)
        lines = out.read_text().strip().splitlines()
        assert lines[0] == "fpr,tpr"
        assert [float(v) for v in lines[1].split(",")] == [0.0, 0.0]
        assert [float(v) for v in lines[-1].split(",")] == [1.0, 1.0]
