import numpy as np
import pytest

from sosmom.dataio import DatasetParseError, read_dataset, write_dataset
from sosmom.sampler import DistSpec, sample_dist


def test_round_trip_is_bit_identical(tmp_path):
    X = sample_dist(DistSpec("product_t", 3, nu=9.0), 20, 5).samples * 1e-7
    X[0, 0] = np.pi
    p = tmp_path / "d.txt"
    write_dataset(X, p)
    assert np.array_equal(read_dataset(p).samples, X)


def test_short_row_reports_line(tmp_path):
    p = tmp_path / "d.txt"
    p.write_text("2 3\n1 2\n4 5 6\n")
    with pytest.raises(DatasetParseError) as err:
        read_dataset(p)
    assert err.value.line == 2


def test_empty_file(tmp_path):
    p = tmp_path / "d.txt"
    p.write_text("")
    with pytest.raises(DatasetParseError, match="missing header"):
        read_dataset(p)


@pytest.mark.parametrize(
    "text,line",
    [("a b\n", 1), ("2 1\n1\n", 2), ("1 1\nx\n", 2), ("1 1\n1\n2\n", 3), ("0 2\n", 1)],
)
def test_malformed(tmp_path, text, line):
    p = tmp_path / "d.txt"
    p.write_text(text)
    with pytest.raises(DatasetParseError) as err:
        read_dataset(p)
    assert err.value.line == line
