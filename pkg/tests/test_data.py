import json

import numpy as np
import pytest

from mpnewton import data, linalg

AUS_ROW = "1,22.08,11.46,2,4,4,1.585,0,0,0,1,2,100,1213,0"


@pytest.fixture(scope="module")
def mush():
    return data.load_dataset("Mush")


@pytest.fixture(scope="module")
def australian():
    return data.load_dataset("Australian")


def test_australian_shape(australian):
    assert australian.features.shape == (690, 15)
    assert australian.feature_names[-1] == "bias"
    assert np.all(australian.features[:, -1] == 1.0)
    std = australian.features[:, :-1]
    assert np.allclose(std.mean(axis=0), 0.0, atol=1e-12)
    assert np.allclose(std.std(axis=0), 1.0)
    assert set(np.unique(australian.labels)) == {0.0, 1.0}


def test_mush_encoding(mush):
    assert mush.features.shape[0] == 5644
    assert set(np.unique(mush.labels)) == {0.0, 1.0}
    assert "c16" in mush.provenance["dropped_columns"]
    onehot = mush.features[:, :-1]
    assert set(np.unique(onehot)) == {0.0, 1.0}
    # every kept categorical column contributes exactly one active indicator per row
    kept = 22 - len(mush.provenance["dropped_columns"])
    assert np.all(onehot.sum(axis=1) == kept)


def test_mush_labels_poisonous_is_one(tmp_path):
    row = ["x"] * 22
    lines = [",".join(["p"] + row), ",".join(["e"] + ["y"] + row[1:])]
    path = tmp_path / "m.data"
    path.write_text("\n".join(lines) + "\n")
    ds = data.load_dataset("mushroom", str(path))
    assert list(ds.labels) == [1.0, 0.0]
    assert ds.feature_names == ["c1=x", "c1=y", "bias"]
    assert ds.provenance["layout"] == "class-first"


def test_zero_variance_column_dropped(tmp_path):
    rows = [AUS_ROW, AUS_ROW.replace("22.08", "30.1").replace(",0", ",1", 1), AUS_ROW.replace("1213", "5")]
    (tmp_path / "a.dat").write_text("\n".join(rows) + "\n")
    ds = data.load_dataset("australian", str(tmp_path / "a.dat"))
    assert "A1" in ds.provenance["dropped_columns"]
    assert "A1" not in ds.feature_names


def test_parse_error_reports_line(tmp_path):
    (tmp_path / "a.dat").write_text(AUS_ROW + "\n1,2,3\n")
    with pytest.raises(data.ParseError) as info:
        data.load_dataset("australian", str(tmp_path / "a.dat"))
    assert info.value.line == 2
    (tmp_path / "b.dat").write_text(AUS_ROW.replace("22.08", "abc") + "\n")
    with pytest.raises(data.ParseError):
        data.load_dataset("australian", str(tmp_path / "b.dat"))


def test_unknown_dataset():
    with pytest.raises(data.DatasetError):
        data.load_dataset("iris")


def test_split_properties(australian):
    tr, te = data.split(australian, 0.2, seed=7)
    tr2, te2 = data.split(australian, 0.2, seed=7)
    assert np.array_equal(tr.features, tr2.features) and np.array_equal(te.labels, te2.labels)
    assert len(tr) + len(te) == len(australian)
    rows = {tuple(r) for r in australian.features}
    got = {tuple(r) for r in tr.features} | {tuple(r) for r in te.features}
    assert got == rows
    full = australian.labels.mean()
    assert abs(tr.labels.mean() - full) <= 0.05 and abs(te.labels.mean() - full) <= 0.05
    with pytest.raises(ValueError):
        data.split(australian, 1.5)


def test_split_single_class_fails():
    ds = data.Dataset("one", np.ones((10, 2)), np.zeros(10), ["a", "b"])
    with pytest.raises(data.DatasetError):
        data.split(ds, 0.2, _tries=2)


def test_confusion():
    labels = np.array([1, 0, 1, 0])
    cm = data.confusion(np.array([0.9, 0.1, 0.8, 0.3]), labels)
    assert cm.tp_rate == 1.0 and cm.tn_rate == 1.0
    cm = data.confusion(np.full(4, 0.5), labels, 0.5)
    assert cm.tp_rate == 1.0 and cm.tn_rate == 0.0
    cm = data.confusion(np.array([0.7, 0.2]), np.array([1, 1]))
    assert cm.undefined == ("negatives",) and np.isnan(cm.tn_rate)
    with pytest.raises(ValueError):
        data.confusion(np.ones(3), labels)


def test_cache_and_fetch(tmp_path, monkeypatch):
    monkeypatch.setenv(data.CACHE_ENV, str(tmp_path))
    path = data.fetch("australian")
    assert data.sha256_of(path) == data.BUNDLED["australian"][1]
    ds = data.load_dataset("australian")
    cached = np.loadtxt(tmp_path / "australian-preprocessed.csv", delimiter=",", skiprows=1)
    assert np.array_equal(cached[:, :-1], ds.features)
    prov = json.loads((tmp_path / "australian-preprocessed.json").read_text())
    assert prov["rows"] == 690
    # a file URL with the right digest is accepted; a wrong digest is refused
    src = tmp_path / "copy.dat"
    src.write_bytes(open(path, "rb").read())
    assert data.fetch("australian", str(tmp_path / "c2"), url=src.as_uri()).endswith("australian.dat")
    with pytest.raises(data.DatasetError):
        data.fetch("australian", str(tmp_path / "c3"), url=src.as_uri(), sha256="0" * 64)
    # network failure falls back on the cached copy, or reports when there is none
    missing = (tmp_path / "nope.dat").as_uri()
    assert data.fetch("australian", str(tmp_path / "c2"), url=missing).endswith("australian.dat")
    with pytest.raises(data.DatasetError):
        data.fetch("australian", str(tmp_path / "c4"), url=missing)


def test_generate_system_residual():
    sy = data.standard_system("pb1")
    B = sy.A.T @ sy.A + sy.S
    rhs = sy.A.T @ sy.b
    assert np.linalg.norm(B @ sy.x_star - rhs) <= 1e3 * 2.0 ** -53 * np.linalg.norm(rhs)
    assert 4e3 / 3 <= linalg.cond_2(sy.A) <= 4e3 * 3
    assert 2e7 / 3 <= linalg.cond_2(B) <= 2e7 * 3
    assert np.array_equal(sy.x_star, np.arange(11, 1, -1))


def test_generate_system_without_s_and_rectangular():
    sy = data.generate_normal_eq_system(np.arange(1.0, 5.0), np.zeros(4), seed=2)
    assert np.all(sy.S == 0.0)
    sy = data.generate_normal_eq_system(np.arange(1.0, 5.0), np.ones(4) * 0.1, m=7, seed=2)
    assert sy.A.shape == (7, 4)
    B = sy.A.T @ sy.A + sy.S
    assert np.allclose(B @ sy.x_star, sy.A.T @ sy.b, rtol=1e-12)
    with pytest.raises(linalg.SingularMatrix):
        data.generate_normal_eq_system([1.0, 0.0], [1.0, 1.0])


def test_system_roundtrip_and_determinism():
    a = data.standard_system("pb2", seed=3)
    b = data.NormalEqSystem.from_dict(json.loads(json.dumps(a.to_dict())))
    assert np.array_equal(a.A, b.A) and np.array_equal(a.b, b.b)
    c = data.standard_system("Pb.2", seed=3)
    assert np.array_equal(a.A, c.A)
    with pytest.raises(ValueError):
        data.standard_system("pb9")
