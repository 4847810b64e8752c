import json

import pytest

from conftest import write_lines
from querc.errors import IngestError
from querc.workload import LabeledQuery, WorkloadLog, read_log, write_log


def test_simple_line_maps_fields(tmp_path):
    path = write_lines(tmp_path / "w.jsonl", [{"query_text": "SELECT 1", "labels": {"user": "u1"}}])
    result = read_log(path)
    assert result.rejected == 0
    rec = result.log[0]
    assert rec.query_text == "SELECT 1"
    assert rec.labels == {"user": "u1"}
    assert rec.timestamp is None and rec.runtime_ms is None and rec.error_code is None


def test_missing_query_text_rejected_with_line_number(tmp_path):
    path = write_lines(
        tmp_path / "w.jsonl",
        [{"labels": {"user": "u1"}}, {"query_text": "SELECT 1", "labels": {}}],
    )
    result = read_log(path)
    assert result.accepted == 1
    assert result.rejected == 1
    assert result.rejections[0].line_no == 1
    assert "query_text" in result.rejections[0].reason


def test_malformed_json_rejected_ingestion_continues(tmp_path):
    path = write_lines(tmp_path / "w.jsonl", ['{"query_text": "SELECT 1"', '{"query_text": "SELECT 2"}'])
    result = read_log(path)
    assert result.accepted == 1
    assert result.rejections[0].line_no == 1


def test_rejected_plus_accepted_equals_line_count(tmp_path):
    lines = [
        {"query_text": "SELECT 1"},
        "not json at all {",
        {"query_text": "   "},
        {"query_text": "SELECT 2", "labels": {"user": "u"}},
        {"query_text": "SELECT 3", "runtime_ms": -5},
    ]
    path = write_lines(tmp_path / "w.jsonl", lines)
    result = read_log(path)
    assert result.accepted + result.rejected == len(lines)
    assert result.accepted == 2


def test_strict_mode_upgrades_rejection_to_fatal(tmp_path):
    path = write_lines(tmp_path / "w.jsonl", ["{broken"])
    with pytest.raises(IngestError, match=":1:"):
        read_log(path, strict=True)


def test_unreadable_file_is_fatal(tmp_path):
    with pytest.raises(IngestError):
        read_log(tmp_path / "does-not-exist.jsonl")


def test_order_preserved_large_synthetic(tmp_path):
    n = 1000
    path = write_lines(
        tmp_path / "w.jsonl",
        [{"query_text": f"SELECT {i} FROM t", "labels": {"seq": str(i)}} for i in range(n)],
    )
    result = read_log(path)
    assert result.accepted == n
    assert [rec.labels["seq"] for rec in result.log] == [str(i) for i in range(n)]


def test_schema_filters_label_channels(tmp_path):
    path = write_lines(
        tmp_path / "w.jsonl",
        [{"query_text": "SELECT 1", "labels": {"user": "u", "account": "a", "noise": "x"}}],
    )
    result = read_log(path, schema=["user", "account"])
    assert result.log[0].labels == {"user": "u", "account": "a"}


def test_roundtrip_is_lossless(tmp_path, tiny_log):
    path = tmp_path / "w.jsonl"
    write_log(tiny_log, path)
    back = read_log(path).log
    assert list(back) == list(tiny_log)
    # a second write is byte-identical
    path2 = tmp_path / "w2.jsonl"
    write_log(back, path2)
    assert path.read_bytes() == path2.read_bytes()


def test_optional_fields_roundtrip(tmp_path):
    rec = LabeledQuery("SELECT 1", labels={"a": "b"}, timestamp=5, runtime_ms=0, error_code="E42")
    path = tmp_path / "w.jsonl"
    write_log(WorkloadLog([rec]), path)
    doc = json.loads(path.read_text().strip())
    assert doc == {
        "query_text": "SELECT 1",
        "labels": {"a": "b"},
        "timestamp": 5,
        "runtime_ms": 0,
        "error_code": "E42",
    }
    assert read_log(path).log[0] == rec


def test_labeled_query_validation():
    with pytest.raises(ValueError):
        LabeledQuery("   ")
    with pytest.raises(ValueError):
        LabeledQuery("SELECT 1", labels={"": "x"})
    with pytest.raises(ValueError):
        LabeledQuery("SELECT 1", runtime_ms=-1)


def test_with_labels_never_overwrites():
    rec = LabeledQuery("SELECT 1", labels={"user": "u"})
    out = rec.with_labels({"predicted_user": "v"})
    assert out.labels == {"user": "u", "predicted_user": "v"}
    with pytest.raises(ValueError):
        out.with_labels({"user": "other"})
