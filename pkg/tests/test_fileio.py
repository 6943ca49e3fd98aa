import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from fascon.cd import init_mixture
from fascon.errors import InvalidInputError, PgmParseError
from fascon.fileio import (
    load_batch, load_model, parse_pgm, quantize, read_pgm, save_batch, save_model, write_csv, write_pgm,
)
from fascon.numerics import make_rng
from fascon.pseudolikelihood import PlModel, QuantizedSpace
from fascon.simple import StudentTExpertSet


def test_p5_example():
    img = parse_pgm(b"P5\n2 2\n255\n" + bytes([0, 255, 128, 64]))
    np.testing.assert_array_equal(img, [[0.0, 1.0], [128 / 255, 64 / 255]])


def test_p2_equals_p5():
    p2 = parse_pgm(b"P2\n# a comment\n2 2\n255\n0 255\n128 64\n")
    p5 = parse_pgm(b"P5 2 2 255\n" + bytes([0, 255, 128, 64]))
    assert np.array_equal(p2, p5)


def test_comments_and_whitespace_in_header():
    data = b"P5\n# made by hand\n 3 \t1\n#another\n255\r" + bytes([1, 2, 3])
    np.testing.assert_array_equal(parse_pgm(data), [[1 / 255, 2 / 255, 3 / 255]])


def test_sixteen_bit_big_endian():
    img = parse_pgm(b"P5\n2 1\n65535\n" + bytes([0x01, 0x00, 0xFF, 0xFF]))
    np.testing.assert_array_equal(img, [[256 / 65535, 1.0]])


@pytest.mark.parametrize("data,offset", [
    (b"P6\n1 1\n255\n\x00", 0),
    (b"P5\n2 2\n255\n\x00\x01", 11),
    (b"P5\n2 x\n255\n", 5),
    (b"P5\n2 2", 6),
    (b"P5\n1 1\n0\n\x00", 8),
])
def test_parse_errors_carry_offsets(data, offset):
    with pytest.raises(PgmParseError) as exc:
        parse_pgm(data)
    assert exc.value.offset == offset
    assert "offset" in str(exc.value)


def test_sample_above_maxval_rejected():
    with pytest.raises(PgmParseError):
        parse_pgm(b"P2\n1 1\n10\n11\n")


def test_write_examples(tmp_path):
    path = tmp_path / "z.pgm"
    write_pgm(np.zeros((3, 4)), path)
    assert path.read_bytes() == b"P5\n4 3\n255\n" + bytes(12)
    ints, _ = quantize(np.array([1.0, 0.5, 0.0]))
    assert list(ints) == [255, 128, 0]


def test_write_clips_and_reports(tmp_path, capsys):
    clipped = write_pgm(np.array([[-0.5, 0.5], [1.5, 1.0]]), tmp_path / "c.pgm")
    assert clipped == 0.5
    assert "clipped" in capsys.readouterr().err
    np.testing.assert_array_equal(read_pgm(tmp_path / "c.pgm"), [[0.0, 128 / 255], [1.0, 1.0]])


def test_write_ascii_and_sixteen_bit(tmp_path):
    img = make_rng(0).random((5, 7))
    write_pgm(img, tmp_path / "a.pgm", ascii=True)
    write_pgm(img, tmp_path / "b.pgm", maxval=65535)
    assert np.max(np.abs(read_pgm(tmp_path / "a.pgm") - img)) <= 1 / 510
    assert np.max(np.abs(read_pgm(tmp_path / "b.pgm") - img)) <= 0.5 / 65535 + 1e-15


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 12), st.integers(1, 12)), elements=st.floats(0, 1)))
def test_pgm_round_trip_within_half_step(tmp_path_factory, img):
    path = tmp_path_factory.mktemp("pgm") / "r.pgm"
    write_pgm(img, path)
    assert np.max(np.abs(read_pgm(path) - img)) <= 1 / 510 + 1e-15


def test_non_finite_image_rejected(tmp_path):
    with pytest.raises(InvalidInputError):
        write_pgm(np.array([[np.nan]]), tmp_path / "n.pgm")


def _assert_same_params(a, b):
    for key in a:
        x, y = a[key], b[key]
        if isinstance(x, np.ndarray):
            assert x.dtype == y.dtype and x.shape == y.shape
            assert np.array_equal(x.view(np.uint64), y.view(np.uint64))
        else:
            assert x == y


def test_archive_round_trip_bit_exact(tmp_path):
    rng = make_rng(3)
    models = [
        StudentTExpertSet(rng.normal(size=(4, 9)) * 1e-7, 100.0),
        PlModel(rng.normal(size=(2, 3)), QuantizedSpace.uniform(16), 37.5),
        init_mixture(5, 7, rng),
    ]
    models[2].log_var0[:] = rng.normal(size=7) * 1e300
    for i, model in enumerate(models):
        path = tmp_path / f"m{i}.json"
        save_model(model, path, {"seed": 3, "learning_rate": 1e-7})
        loaded, doc = load_model(path)
        assert type(loaded) is type(model)
        assert doc["config"] == {"seed": 3, "learning_rate": 1e-7}
        assert doc["format_version"] == 1 and doc["created"] is None
        if hasattr(model, "params"):
            _assert_same_params(model.params(), loaded.params())
        else:
            assert np.array_equal(model.weights.view(np.uint64), loaded.weights.view(np.uint64))
            assert model.k == loaded.k


def test_archive_method_tags(tmp_path):
    save_model(StudentTExpertSet(np.ones((1, 2))), tmp_path / "s.json")
    doc = json.loads((tmp_path / "s.json").read_text())
    assert doc["method"] == "simple" and doc["n"] == 2 and doc["m"] == 1


def test_archive_rejects_other_versions(tmp_path):
    path = tmp_path / "s.json"
    save_model(StudentTExpertSet(np.ones((1, 2))), path)
    doc = json.loads(path.read_text())
    doc["format_version"] = 99
    path.write_text(json.dumps(doc))
    with pytest.raises(InvalidInputError):
        load_model(path)


def test_archive_rejects_non_finite(tmp_path):
    with pytest.raises(InvalidInputError):
        save_model(StudentTExpertSet(np.array([[np.inf, 1.0]])), tmp_path / "x.json")


@pytest.mark.parametrize("binary", [True, False])
def test_batch_round_trip(tmp_path, binary):
    values = make_rng(1).normal(size=(6, 5))
    save_batch(values, tmp_path / "b", {"source": "test"}, binary=binary)
    loaded, meta = load_batch(tmp_path / "b")
    assert np.array_equal(loaded, values) and meta == {"source": "test"}


def test_empty_batch_round_trip(tmp_path):
    save_batch(np.zeros((0, 4)), tmp_path / "e")
    loaded, _ = load_batch(tmp_path / "e")
    assert loaded.shape == (0, 4)


def test_truncated_batch_rejected(tmp_path):
    save_batch(np.ones((3, 3)), tmp_path / "t")
    data = (tmp_path / "t").read_bytes()
    (tmp_path / "t").write_bytes(data[:-8])
    with pytest.raises(InvalidInputError):
        load_batch(tmp_path / "t")


def test_csv_full_precision_and_lf(tmp_path):
    write_csv(tmp_path / "c.csv", ["a", "b"], [(1, 0.1 + 0.2), (2, 1e-300)])
    raw = (tmp_path / "c.csv").read_bytes()
    assert b"\r" not in raw
    assert raw.decode().splitlines() == ["a,b", "1,0.30000000000000004", "2,1e-300"]
