import itertools
import json
import math

import numpy as np
import pytest

from src.errors import (
    DegenerateInputError,
    DimensionMismatchError,
    InvalidParamsError,
    LengthMismatchError,
    ReportError,
    TooSmallError,
)
from src.imgcore import to_grayscale
from src.metrics import (
    SSIM_C1,
    MetricReport,
    PairScores,
    SiouConfig,
    binary_iou,
    diff_iou,
    kendall,
    psnr,
    psnr_from_rmse,
    rmse,
    score_pair,
    siou,
    spearman,
    ssim,
)


def _stereo_pair(seed: int = 0, shift: int = 6):
    """Gray left view with a bright block; the right view moves the block left."""
    rng = np.random.default_rng(seed)
    left = 100.0 + rng.integers(0, 20, size=(32, 48)).astype(np.float64)
    right = left.copy()
    left[8:24, 20:32] = 240.0
    right[8:24, 20 - shift : 32 - shift] = 240.0
    return left, right


def _brute_force_ranks(values):
    ranks = []
    for v in values:
        below = sum(1 for w in values if w < v)
        equal = sum(1 for w in values if w == v)
        ranks.append(below + (equal + 1) / 2.0)
    return ranks


def _brute_force_spearman(x, y):
    rx, ry = _brute_force_ranks(x), _brute_force_ranks(y)
    mx, my = sum(rx) / len(rx), sum(ry) / len(ry)
    num = sum((a - mx) * (b - my) for a, b in zip(rx, ry))
    den = math.sqrt(sum((a - mx) ** 2 for a in rx) * sum((b - my) ** 2 for b in ry))
    return num / den


def _brute_force_kendall(x, y):
    concordant = discordant = ties_x = ties_y = 0
    for i, j in itertools.combinations(range(len(x)), 2):
        dx, dy = x[i] - x[j], y[i] - y[j]
        if dx == 0 and dy == 0:
            continue
        if dx == 0:
            ties_x += 1
        elif dy == 0:
            ties_y += 1
        elif dx * dy > 0:
            concordant += 1
        else:
            discordant += 1
    return (concordant - discordant) / math.sqrt(
        (concordant + discordant + ties_x) * (concordant + discordant + ties_y)
    )


def test_binary_iou_counts_and_empty_union():
    a = np.array([[True, True, False, False]])
    b = np.array([[False, True, True, False]])

    assert binary_iou(a, b) == pytest.approx(1 / 3)
    assert binary_iou(np.zeros((2, 2), bool), np.zeros((2, 2), bool)) == 1.0


def test_siou_of_ground_truth_is_one():
    left, right = _stereo_pair()
    result = siou(left, right, right)

    assert result.siou == pytest.approx(1.0, abs=1e-9)
    assert result.edge_iou == pytest.approx(1.0)
    assert result.diff_iou == pytest.approx(1.0)


def test_identity_mapping_has_zero_difference_term():
    left, right = _stereo_pair()
    result = siou(left, right, left)

    assert result.diff_iou == 0.0
    assert result.siou == pytest.approx(0.75 * result.edge_iou)


def test_diff_iou_threshold_is_inclusive():
    left = np.zeros((1, 3))
    right = np.array([[5.0, 4.9, 0.0]])
    gen = np.array([[5.0, 0.0, 0.0]])

    assert diff_iou(left, right, gen, threshold=5.0) == 1.0


def test_siou_config_rejects_out_of_range_alpha():
    with pytest.raises(InvalidParamsError):
        SiouConfig(alpha=1.5).validate()
    cfg = SiouConfig.from_dict({"alpha": 0.5, "diff_threshold": 10, "canny": {"sigma": 1.0}})
    assert cfg.canny.gaussian_sigma == 1.0
    assert SiouConfig.from_dict(cfg.to_dict()) == cfg


def test_rmse_and_psnr_basics():
    x = np.random.default_rng(3).uniform(0, 255, size=(8, 8, 3))

    assert rmse(x, x) == 0.0
    assert psnr(x, x) == math.inf
    assert rmse(np.zeros((2, 2)), np.full((2, 2), 3.0)) == pytest.approx(3.0)
    assert psnr_from_rmse(255.0) == pytest.approx(0.0)

    ladder = [psnr_from_rmse(r) for r in np.linspace(0.5, 50.0, 10)]
    assert all(a > b for a, b in zip(ladder, ladder[1:]))

    with pytest.raises(DimensionMismatchError):
        rmse(np.zeros((2, 2)), np.zeros((2, 3)))


def test_rmse_is_a_symmetric_distance():
    rng = np.random.default_rng(13)
    for _ in range(50):
        x, y, z = rng.uniform(0, 255, size=(3, 6, 5, 3))

        assert rmse(x, y) == pytest.approx(rmse(y, x), abs=1e-12)
        assert rmse(x, z) <= rmse(x, y) + rmse(y, z) + 1e-9


def test_ssim_identity_and_constant_images():
    x = np.random.default_rng(4).uniform(0, 255, size=(20, 24))
    assert ssim(x, x) == pytest.approx(1.0, abs=1e-9)

    a, b = np.full((16, 16), 100.0), np.full((16, 16), 150.0)
    expected = (2 * 100.0 * 150.0 + SSIM_C1) / (100.0**2 + 150.0**2 + SSIM_C1)
    assert ssim(a, b) == pytest.approx(expected, abs=1e-9)


def test_ssim_rejects_small_images():
    with pytest.raises(TooSmallError):
        ssim(np.zeros((10, 30)), np.zeros((10, 30)))


def test_ssim_agrees_with_reference_implementation():
    skmetrics = pytest.importorskip("skimage.metrics")
    data = pytest.importorskip("skimage.data")
    rng = np.random.default_rng(5)

    for name in ("camera", "coins", "astronaut", "coffee", "chelsea"):
        x = getattr(data, name)().astype(np.float64)
        if x.ndim == 3:
            x = to_grayscale(x)
        y = np.clip(x + rng.normal(0, 25, size=x.shape), 0, 255)
        theirs = skmetrics.structural_similarity(
            x, y, data_range=255, gaussian_weights=True, sigma=1.5, use_sample_covariance=False
        )
        assert ssim(x, y) == pytest.approx(theirs, abs=1e-3)


def test_rank_correlations_match_brute_force_with_ties():
    rng = np.random.default_rng(6)
    checked = 0
    while checked < 1000:
        n = int(rng.integers(2, 11))
        x = rng.integers(0, 5, size=n).tolist()
        y = rng.integers(0, 5, size=n).tolist()
        if len(set(x)) < 2 or len(set(y)) < 2:
            continue
        assert spearman(x, y) == pytest.approx(_brute_force_spearman(x, y), abs=1e-12)
        assert kendall(x, y) == pytest.approx(_brute_force_kendall(x, y), abs=1e-12)
        checked += 1


def test_rank_correlations_match_scipy():
    stats = pytest.importorskip("scipy.stats")
    x = [3, 1, 4, 1, 5, 9, 2, 6]
    y = [2, 7, 1, 8, 2, 8, 1, 8]

    assert spearman(x, y) == pytest.approx(stats.spearmanr(x, y)[0])
    assert kendall(x, y) == pytest.approx(stats.kendalltau(x, y)[0])


def test_rank_correlation_edge_cases():
    assert spearman([1, 2, 3], [10, 20, 30]) == pytest.approx(1.0)
    assert kendall([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0)
    with pytest.raises(DegenerateInputError):
        spearman([1, 1, 1], [1, 2, 3])
    with pytest.raises(LengthMismatchError):
        kendall([1, 2], [1, 2, 3])
    with pytest.raises(LengthMismatchError):
        spearman([1], [2])


def test_score_pair_resizes_generated_view():
    left, right = _stereo_pair()
    left_rgb = np.repeat(left[:, :, None], 3, axis=2)
    right_rgb = np.repeat(right[:, :, None], 3, axis=2)
    upsampled_gt = np.repeat(right_rgb, 2, axis=0).repeat(2, axis=1)

    scores = score_pair(left_rgb, right_rgb, right_rgb)
    assert scores["siou"] == pytest.approx(1.0)
    assert scores["rmse"] == 0.0
    assert scores["psnr"] == math.inf
    assert scores["ssim"] == pytest.approx(1.0)

    resized = score_pair(left_rgb, right_rgb, upsampled_gt)
    assert set(resized) == {"siou", "edge_iou", "diff_iou", "rmse", "psnr", "ssim"}
    assert resized["rmse"] < 20.0


def _report() -> MetricReport:
    rows = [
        PairScores("b", "indoor", 0.5, 0.4, 0.8, 10.0, 28.1, 0.9),
        PairScores("a", "indoor", 0.7, 0.6, 1.0, 0.0, math.inf, 1.0),
        PairScores("c", "outdoor", 0.1, 0.1, 0.1, 20.0, 22.1, 0.5),
    ]
    return MetricReport.build(rows, {"siou": SiouConfig().to_dict()})


def test_report_aggregates_match_hand_computed_means():
    report = _report()

    assert [row.pair_id for row in report.per_pair] == ["a", "b", "c"]
    assert report.aggregates["overall"]["count"] == 3
    assert report.aggregates["overall"]["siou"] == pytest.approx((0.5 + 0.7 + 0.1) / 3, abs=1e-12)
    assert report.aggregates["indoor"]["rmse"] == pytest.approx(5.0, abs=1e-12)
    assert report.aggregates["outdoor"]["ssim"] == pytest.approx(0.5)
    assert report.aggregates["indoor"]["psnr"] == math.inf


def test_report_json_round_trip_keeps_infinity(tmp_path):
    report = _report()
    path = report.write(tmp_path / "out" / "report.json")

    assert "Infinity" in path.read_text(encoding="utf-8")
    restored = MetricReport.read(path)
    assert restored.per_pair == report.per_pair
    assert restored.aggregates == report.aggregates
    assert restored.config == json.loads(report.to_json())["config"]
    assert list(restored.to_frame().columns[:2]) == ["pair_id", "category"]


@pytest.mark.parametrize(
    "text",
    [
        "{not json",
        "[1, 2]",
        json.dumps({"aggregates": {}}),
        json.dumps({"per_pair": [{"pair_id": "a", "category": "indoor"}]}),
    ],
)
def test_unreadable_reports_raise_report_error(text):
    with pytest.raises(ReportError):
        MetricReport.from_json(text)
