import numpy as np
import pytest
from scipy import stats

from hdavca.evaluation import (
    EvalReport,
    ablate,
    cross_validate,
    format_report_table,
    krcc,
    plcc,
    rmse,
    split_indices,
    srcc,
)
from hdavca.features import N_FEATURES, build_mask


def plcc_oracle(p, m):
    n = len(p)
    mp, mm = sum(p) / n, sum(m) / n
    num = sum((a - mp) * (b - mm) for a, b in zip(p, m))
    da = sum((a - mp) ** 2 for a in p) ** 0.5
    db = sum((b - mm) ** 2 for b in m) ** 0.5
    return num / (da * db)


def ranks_oracle(v):
    out = [0.0] * len(v)
    for i, x in enumerate(v):
        smaller = sum(1 for y in v if y < x)
        equal = sum(1 for y in v if y == x)
        out[i] = smaller + (equal + 1) / 2.0
    return out


def krcc_oracle(p, m):
    n = len(p)
    conc = disc = tp = tm = 0
    for i in range(n):
        for j in range(i + 1, n):
            a = p[i] - p[j]
            b = m[i] - m[j]
            if a == 0 and b == 0:
                tp += 1
                tm += 1
            elif a == 0:
                tp += 1
            elif b == 0:
                tm += 1
            elif a * b > 0:
                conc += 1
            else:
                disc += 1
    n0 = n * (n - 1) / 2
    return (conc - disc) / np.sqrt((n0 - tp) * (n0 - tm))


class TestMetrics:
    def test_plcc_identity_and_negation(self):
        v = np.array([1.0, 2.0, 4.0])
        assert plcc(v, v) == pytest.approx(1.0)
        assert plcc(v, -v) == pytest.approx(-1.0)

    def test_plcc_hand_value(self):
        assert plcc([1, 2, 3], [2, 4, 7]) == pytest.approx(0.9934, abs=1e-4)

    def test_plcc_constant_errors(self):
        with pytest.raises(ValueError, match="constant"):
            plcc([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])

    def test_srcc_monotone_transform_invariance(self):
        rng = np.random.default_rng(0)
        m = rng.normal(size=30)
        assert srcc(np.exp(m), m) == pytest.approx(1.0)
        assert srcc(m**3, m) == pytest.approx(1.0)

    def test_srcc_all_ties_error(self):
        with pytest.raises(ValueError, match="constant ranks"):
            srcc([2.0, 2.0, 2.0, 2.0], [1.0, 2.0, 3.0, 4.0])

    def test_srcc_tie_handling_matches_oracle(self):
        p = [1.0, 2.0, 2.0, 4.0]
        m = [1.0, 3.0, 2.0, 4.0]
        expected = plcc_oracle(ranks_oracle(p), ranks_oracle(m))
        assert srcc(p, m) == pytest.approx(expected, abs=1e-12)

    def test_krcc_perfect_orders(self):
        v = np.array([1.0, 2.0, 3.0, 5.0])
        assert krcc(v, v) == pytest.approx(1.0)
        assert krcc(v, -v) == pytest.approx(-1.0)

    def test_krcc_with_ties_matches_pair_counting(self):
        rng = np.random.default_rng(1)
        p = np.round(rng.normal(size=10), 0)
        m = np.round(rng.normal(size=10), 0)
        assert krcc(p, m) == pytest.approx(krcc_oracle(list(p), list(m)), abs=1e-12)

    def test_rmse_cases(self):
        assert rmse([1.0, 2.0], [1.0, 2.0]) == 0.0
        assert rmse([2.0, 3.0], [1.0, 2.0]) == pytest.approx(1.0)
        assert rmse([0.0, 0.0], [3.0, 4.0]) == pytest.approx(3.5355, abs=1e-4)

    def test_random_instances_match_brute_force(self):
        rng = np.random.default_rng(2024)
        for _ in range(20):
            p = rng.normal(size=50)
            m = 0.5 * p + rng.normal(size=50)
            assert plcc(p, m) == pytest.approx(plcc_oracle(list(p), list(m)), abs=1e-9)
            assert srcc(p, m) == pytest.approx(
                plcc_oracle(ranks_oracle(list(p)), ranks_oracle(list(m))), abs=1e-9
            )
            assert krcc(p, m) == pytest.approx(krcc_oracle(list(p), list(m)), abs=1e-9)
            assert rmse(p, m) == pytest.approx(float(np.sqrt(np.mean((p - m) ** 2))), abs=1e-9)

    def test_against_scipy(self):
        rng = np.random.default_rng(5)
        p = np.round(rng.normal(size=40), 1)  # induce ties
        m = np.round(0.7 * p + rng.normal(size=40), 1)
        assert plcc(p, m) == pytest.approx(stats.pearsonr(p, m)[0], abs=1e-12)
        assert srcc(p, m) == pytest.approx(stats.spearmanr(p, m)[0], abs=1e-12)
        assert krcc(p, m) == pytest.approx(stats.kendalltau(p, m)[0], abs=1e-12)

    def test_plcc_affine_invariance(self):
        rng = np.random.default_rng(6)
        p = rng.normal(size=25)
        m = rng.normal(size=25)
        assert plcc(2.5 * p + 3, m) == pytest.approx(plcc(p, m), abs=1e-12)


def _learnable_dataset(n=60, seed=0):
    rng = np.random.default_rng(seed)
    x = np.zeros((n, N_FEATURES))
    x[:, :8] = rng.uniform(-1, 1, (n, 8))
    mos = 3.0 + 1.2 * x[:, 1] - 0.8 * x[:, 3] + 0.5 * x[:, 5]
    content = [f"c{i % (n // 4)}" for i in range(n)]
    return x, mos, content


class TestSplits:
    def test_item_level_arithmetic(self):
        rng = np.random.default_rng(0)
        train, test = split_indices(rng, 10, 0.8, grouped=False)
        assert len(train) == 8 and len(test) == 2
        assert sorted(set(train) | set(test)) == list(range(10))

    def test_grouped_no_content_leak(self):
        content = ["a"] * 4 + ["b"] * 4 + ["c"] * 4 + ["d"] * 4
        rng = np.random.default_rng(1)
        train, test = split_indices(rng, 16, 0.75, content_ids=content, grouped=True)
        train_groups = {content[i] for i in train}
        test_groups = {content[i] for i in test}
        assert not train_groups & test_groups
        assert len(train) + len(test) == 16

    def test_grouped_nearest_partition(self):
        content = ["a"] * 4 + ["b"] * 4 + ["c"] * 4 + ["d"] * 4 + ["e"] * 4
        rng = np.random.default_rng(2)
        train, test = split_indices(rng, 20, 0.8, content_ids=content, grouped=True)
        assert len(train) == 16 and len(test) == 4


class TestCrossValidate:
    def test_deterministic_reports(self):
        x, mos, content = _learnable_dataset()
        kw = dict(content_ids=content, n_splits=5, seed=1, svr_epsilon=0.05)
        a = cross_validate(x, mos, **kw)
        b = cross_validate(x, mos, **kw)
        assert a.to_json() == b.to_json()

    def test_learnable_fixture_high_plcc(self):
        x, mos, content = _learnable_dataset()
        report = cross_validate(
            x, mos, content_ids=content, n_splits=100, seed=3, svr_epsilon=0.01
        )
        assert report.aggregate["mean"]["plcc"] > 0.99

    def test_no_leakage_scaler_fits_train_only(self):
        x, mos, content = _learnable_dataset(n=40)
        seen = []

        def spy(split, train_idx, test_idx, model):
            seen.append((train_idx.copy(), test_idx.copy(), model))

        cross_validate(x, mos, content_ids=content, n_splits=3, seed=4, on_split=spy)
        assert len(seen) == 3
        for train_idx, test_idx, model in seen:
            assert not set(train_idx) & set(test_idx)
            active = model.scaler.mask
            expect_lo = x[train_idx][:, active].min(axis=0)
            expect_hi = x[train_idx][:, active].max(axis=0)
            assert np.array_equal(model.scaler.lo[active], expect_lo)
            assert np.array_equal(model.scaler.hi[active], expect_hi)

    def test_too_few_items(self):
        with pytest.raises(ValueError, match="too few"):
            cross_validate(np.zeros((3, N_FEATURES)), np.arange(3.0), n_splits=1)

    def test_missing_mos_rejected(self):
        x, mos, content = _learnable_dataset(n=20)
        mos = mos.copy()
        mos[3] = np.nan
        with pytest.raises(ValueError, match="finite"):
            cross_validate(x, mos, content_ids=content, n_splits=1)


class TestAblate:
    def test_emits_all_six_masks(self):
        x, mos, content = _learnable_dataset(n=30)
        reports = ablate(x, mos, content_ids=content, n_splits=2, seed=5)
        assert set(reports) == {
            "local_ssim+dnss+sd",
            "df+local_ssim+sd",
            "df+local_ssim+dnss",
            "df+dnss+sd",
            "all",
            "df+dnss",
        }
        assert reports["all"].mask_families == ("local_ssim", "dnss", "dr", "pa", "did", "sd")
        nr_mask = build_mask(reports["df+dnss"].mask_families)
        assert int(nr_mask.sum()) == 70
        table = format_report_table(reports)
        assert "df+dnss" in table

    def test_dropping_signal_family_hurts(self):
        # signal lives in the dnss block; everything else carries weak noise
        # (min-max scaling amplifies noise dims to full range, so a low gamma
        # keeps the kernel in its near-linear regime)
        rng = np.random.default_rng(7)
        n = 80
        x = rng.uniform(-0.2, 0.2, (n, N_FEATURES))
        x[:, 2] = rng.uniform(-1, 1, n)
        x[:, 10] = rng.uniform(-1, 1, n)
        mos = 2.0 + 2.0 * x[:, 2] + x[:, 10]
        content = [f"c{i % 20}" for i in range(n)]
        reports = ablate(
            x, mos, content_ids=content, n_splits=10, seed=8,
            svr_epsilon=0.01, svr_gamma=0.001,
        )
        with_sig = reports["all"].aggregate["mean"]["plcc"]
        without_sig = reports["df+local_ssim+sd"].aggregate["mean"]["plcc"]
        assert with_sig > 0.85
        assert without_sig < with_sig - 0.3
