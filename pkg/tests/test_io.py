import numpy as np
import pytest

from fabcorr import DataMatrix
from fabcorr.exceptions import DegenerateInputError
from fabcorr.fab_engine import run_umpu
from fabcorr.io import (
    RESULT_COLUMNS,
    ingest_csv,
    metadata_path,
    read_results,
    write_csv,
    write_metadata,
    write_results,
    write_table,
)
from fabcorr.multiple_testing import reject_fixed


def _write(path, text):
    path.write_text(text)
    return path


def test_clean_file(tmp_path):
    rows = "\n".join(f"{i},{i * i % 7},{(3 * i) % 5}" for i in range(5))
    data, report = ingest_csv(_write(tmp_path / "a.csv", "x,y,z\n" + rows + "\n"))
    assert data.values.shape == (5, 3)
    assert data.column_labels == ("x", "y", "z")
    assert report.rows_dropped == 0 and report.dropped_columns == []


def test_missing_row_dropped(tmp_path):
    text = "a,b\n1,2\n2,NA\n3,1\n4,5\n5,3\n"
    data, report = ingest_csv(_write(tmp_path / "m.csv", text))
    assert data.n == 4
    assert report.rows_read == 5 and report.rows_dropped == 1


def test_ragged_and_garbage_rows_dropped(tmp_path):
    text = "a,b\n1,2\n2\nfoo,1\n3,1\n4,5\n5,3\n6,inf\n"
    data, report = ingest_csv(_write(tmp_path / "r.csv", text))
    assert data.n == 4 and report.rows_dropped == 3


def test_constant_column_dropped(tmp_path):
    text = "a,flat,b\n1,7,2\n2,7,1\n3,7,5\n4,7,3\n"
    data, report = ingest_csv(_write(tmp_path / "c.csv", text))
    assert data.column_labels == ("a", "b")
    assert report.dropped_columns == ["flat"]


@pytest.mark.parametrize("text", ["", "a,,b\n1,2,3\n", "a,a\n1,2\n", "a,b\n1,2\n2,3\n3,4\n",
                                  "a,flat\n1,0\n2,0\n3,0\n4,0\n"])
def test_ingest_errors(tmp_path, text):
    with pytest.raises(DegenerateInputError):
        ingest_csv(_write(tmp_path / "bad.csv", text))


def test_csv_round_trip_is_identity(tmp_path, rng):
    data = DataMatrix(rng.standard_normal((9, 4)), ("p", "q", "r", "s"))
    write_csv(data, tmp_path / "one.csv")
    again, _ = ingest_csv(tmp_path / "one.csv")
    assert np.array_equal(again.values, data.values)
    write_csv(again, tmp_path / "two.csv")
    assert (tmp_path / "one.csv").read_bytes() == (tmp_path / "two.csv").read_bytes()


def test_results_round_trip(tmp_path, rng):
    data = DataMatrix(rng.standard_normal((20, 5)))
    results = run_umpu(data)
    decisions = reject_fixed([r.p_fab for r in results], 0.5)
    write_results(results, decisions, tmp_path / "out.tsv")
    header = (tmp_path / "out.tsv").read_text().splitlines()[0].split("\t")
    assert tuple(header) == RESULT_COLUMNS
    back = read_results(tmp_path / "out.tsv")
    assert np.array_equal(back["z_hat"], [r.z_hat for r in results])
    assert np.array_equal(back["p_fab"], [r.p_fab for r in results])
    assert np.array_equal(back["rejected"], decisions.rejected)
    assert np.all(np.isnan(back["m_j"]))


def test_results_rows_sorted_by_index(tmp_path, rng):
    results = run_umpu(DataMatrix(rng.standard_normal((10, 4))))[::-1]
    decisions = reject_fixed([r.p_fab for r in results], 0.5)
    write_results(results, decisions, tmp_path / "out.tsv")
    back = read_results(tmp_path / "out.tsv")
    assert list(zip(back["pair_w"], back["pair_v"])) == [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]
    expected = {(r.pair.w, r.pair.v): bool(d) for r, d in zip(results, decisions.rejected)}
    assert [expected[w, v] for w, v in zip(back["pair_w"], back["pair_v"])] == list(back["rejected"])


def test_full_size_output(tmp_path, rng):
    results = run_umpu(DataMatrix(rng.standard_normal((12, 100))))
    write_results(results, reject_fixed([r.p_fab for r in results], 0.05), tmp_path / "big.tsv")
    assert len((tmp_path / "big.tsv").read_text().splitlines()) == 4950 + 1


def test_table_and_metadata(tmp_path):
    write_table([{"a": 1, "b": None, "c": 0.1}], tmp_path / "t.tsv")
    assert (tmp_path / "t.tsv").read_text() == "a\tb\tc\n1\tNA\t0.10000000000000001\n"
    path = write_metadata({"x": np.float64(1.5), "y": np.arange(2)}, tmp_path / "t.tsv")
    assert path == metadata_path(tmp_path / "t.tsv")
    assert path.name == "t.tsv.meta.json"
