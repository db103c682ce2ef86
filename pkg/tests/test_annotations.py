import pytest

from src.annotations import AnnotationSet, load_annotations
from src.errors import AnnotationError


def _write_csv(path, rows):
    lines = ["pair_id,annotator_id,score"] + [",".join(str(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def test_mean_scores_average_annotators(tmp_path):
    path = _write_csv(
        tmp_path / "ratings.csv",
        [("p2", "ann1", 4), ("p1", "ann1", 7), ("p1", "ann2", 8), ("p2", "ann2", 5)],
    )

    annotations = load_annotations(path)
    means = annotations.mean_scores()

    assert annotations.pair_ids == ["p1", "p2"]
    assert means.to_dict() == {"p1": 7.5, "p2": 4.5}


def test_pair_ids_are_kept_as_strings(tmp_path):
    path = _write_csv(tmp_path / "ratings.csv", [("007", "a", 3), ("007", "b", 5)])

    assert load_annotations(path).pair_ids == ["007"]


def test_single_annotator_pairs_are_rejected():
    annotations = AnnotationSet.from_records(
        [
            {"pair_id": "p1", "annotator_id": "a", "score": 3},
            {"pair_id": "p1", "annotator_id": "b", "score": 4},
            {"pair_id": "p2", "annotator_id": "a", "score": 6},
        ]
    )
    with pytest.raises(AnnotationError, match="p2"):
        annotations.mean_scores()
    assert annotations.mean_scores(min_annotators=1)["p2"] == 6.0


@pytest.mark.parametrize("score", [0, 11, 5.5, "good"])
def test_invalid_scores_are_rejected(score):
    with pytest.raises(AnnotationError):
        AnnotationSet.from_records([{"pair_id": "p", "annotator_id": "a", "score": score}])


def test_duplicate_ratings_and_missing_columns_are_rejected(tmp_path):
    with pytest.raises(AnnotationError):
        AnnotationSet.from_records(
            [
                {"pair_id": "p", "annotator_id": "a", "score": 3},
                {"pair_id": "p", "annotator_id": "a", "score": 4},
            ]
        )

    path = tmp_path / "bad.csv"
    path.write_text("pair_id,score\np,3\n", encoding="utf-8")
    with pytest.raises(AnnotationError, match="annotator_id"):
        load_annotations(path)


def test_missing_file_raises(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_annotations(tmp_path / "nope.csv")
