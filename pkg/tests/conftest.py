import json

import pytest

from querc.workload import LabeledQuery, WorkloadLog, write_log


@pytest.fixture
def tiny_log():
    return WorkloadLog(
        [
            LabeledQuery("SELECT a FROM t WHERE x = 1", labels={"user": "u1", "cluster": "c1"}),
            LabeledQuery("SELECT b FROM t WHERE y = 2", labels={"user": "u2"}, timestamp=123),
            LabeledQuery("SELECT a FROM t WHERE x = 3", labels={"user": "u1"}, runtime_ms=40),
        ],
        source_id="tiny",
    )


@pytest.fixture
def log_file(tmp_path, tiny_log):
    path = tmp_path / "tiny.jsonl"
    write_log(tiny_log, path)
    return path


def write_lines(path, lines):
    with open(path, "w", encoding="utf-8") as fh:
        for line in lines:
            fh.write(line if isinstance(line, str) else json.dumps(line))
            fh.write("\n")
    return path
