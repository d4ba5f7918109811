import math

import pytest

from kiteupset.io import (
    canonical_json,
    iter_records,
    read_csv,
    read_json,
    read_records,
    short_hash,
    write_csv,
    write_json,
    write_records,
)


def test_csv_comments_become_metadata(tmp_path):
    path = tmp_path / "t.csv"
    write_csv(path, [{"a": 1, "b": 0.5}, {"a": 2}], ["a", "b"], {"schema": "x/1", "seed": 3})
    meta, rows = read_csv(path)
    assert meta == {"schema": "x/1", "seed": "3"}
    assert rows[0] == {"a": "1", "b": "0.5"}
    assert rows[1]["b"] == ""


def test_json_refuses_non_finite(tmp_path):
    with pytest.raises(ValueError):
        write_json(tmp_path / "x.json", {"v": math.inf})
    write_json(tmp_path / "y.json", {"v": 1.5})
    assert read_json(tmp_path / "y.json") == {"v": 1.5}


def test_record_stream_reports_bad_line(tmp_path):
    path = tmp_path / "r.jsonl"
    write_records(path, [{"a": 1}])
    path.write_text(path.read_text() + "\n{oops\n")
    with pytest.raises(ValueError, match=r"r\.jsonl:3: invalid JSON record"):
        list(iter_records(path))
    path.write_text("[1, 2]\n")
    with pytest.raises(ValueError, match="expected a JSON object"):
        read_records(path)


def test_record_stream_header_comes_first(tmp_path):
    path = tmp_path / "s.jsonl"
    assert write_records(path, iter([{"t": 0.0}, {"t": 0.1}]), header={"schema": "x/1"}) == 2
    assert [line_no for line_no, _ in iter_records(path)] == [1, 2, 3]
    header, body = read_records(path, header=True)
    assert header == {"schema": "x/1"}
    assert body == [{"t": 0.0}, {"t": 0.1}]
    assert read_records(path)[1][0] == {"kind": "header", "schema": "x/1"}

    write_records(path, [{"t": 0.0}])
    with pytest.raises(ValueError, match="header record"):
        read_records(path, header=True)
    with pytest.raises(ValueError):
        write_records(path, [{"t": math.nan}])


def test_canonical_hash_ignores_key_order():
    assert canonical_json({"b": 1, "a": 2}) == canonical_json({"a": 2, "b": 1})
    assert short_hash(canonical_json({"b": 1, "a": 2})) == short_hash('{"a":2,"b":1}')
    assert len(short_hash("x")) == 16
