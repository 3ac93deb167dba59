import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mrproj.io import atomic_write, csv_text, fmt, read_data_csv, write_data_csv
from mrproj.lattice import DesignSample


@given(v=st.floats(allow_nan=False, allow_infinity=False))
def test_fmt_roundtrips(v):
    assert float(fmt(v)) == v


def test_fmt_types():
    assert fmt(True) == "1" and fmt(np.int64(3)) == "3" and fmt(0.5) == "0.5"
    assert csv_text(["a", "b"], [[1, "x"]]) == "a,b\n1,x\n"


@given(X=arrays(np.float64, st.tuples(st.integers(0, 20), st.integers(1, 3)),
                elements=st.floats(-1e6, 1e6)))
def test_data_csv_roundtrip(tmp_path_factory, X):
    p = tmp_path_factory.mktemp("d") / "data.csv"
    s = DesignSample(X, X.sum(axis=1) if X.size else np.zeros(len(X)))
    write_data_csv(p, s)
    back = read_data_csv(p)
    assert back.X.shape == X.shape
    np.testing.assert_array_equal(back.X, X)
    np.testing.assert_array_equal(back.Y, s.Y)


def test_bad_files(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("x,y\n0.1,1\n")
    with pytest.raises(ValueError, match="header"):
        read_data_csv(p)
    p.write_text("x1,y\n0.1,abc\n")
    with pytest.raises(ValueError):
        read_data_csv(p)
    p.write_text("")
    with pytest.raises(ValueError):
        read_data_csv(p)
    p.write_text("x1,x2\n0.1,0.2\n")
    assert read_data_csv(p, responses=False).d == 2


def test_atomic_write_leaves_no_temp(tmp_path):
    target = tmp_path / "out.txt"
    atomic_write(target, "one")
    atomic_write(target, "two")
    assert target.read_text() == "two"
    assert [p.name for p in tmp_path.iterdir()] == ["out.txt"]
    with pytest.raises(OSError):
        atomic_write(tmp_path / "missing" / "x.txt", "z")
