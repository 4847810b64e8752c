import json

import numpy as np
import pytest

from helpers import EQUAL_MIX_8, SCHEMA_A, TEMPLATES_A, multi_account_population
from querc.errors import ConfigError
from querc.simulator import (
    ColumnSpec,
    CostModel,
    IndexConfiguration,
    QueryTemplate,
    SimulatorError,
    SyntheticSchema,
    TableSpec,
    UserProfile,
    evaluate_summary,
    generate_workload,
    load_workload_spec,
    recommend_indexes,
)
from querc.workload import LabeledQuery, WorkloadLog


def small_schema():
    return SyntheticSchema(
        tables=(
            TableSpec(
                name="t",
                row_count=1_000_000,
                columns=(
                    ColumnSpec("hi", 1_000_000),
                    ColumnSpec("lo", 100),
                    ColumnSpec("mid", 1_000),
                    ColumnSpec("grp", 10),
                ),
            ),
        )
    )


def tpl(idx, cols, group_by=None):
    return QueryTemplate(f"t{idx}", "t", tuple(cols), group_by=group_by, literal_seed=idx)


def test_schema_validation():
    with pytest.raises(ConfigError):
        TableSpec(name="bad", row_count=10, columns=(ColumnSpec("c", 100),))
    with pytest.raises(ConfigError):
        generate_workload(small_schema(), [tpl(0, ["nope"])], n=1, mix=[1.0])


def test_generate_single_template_fresh_literals():
    log = generate_workload(small_schema(), [tpl(0, ["lo"])], n=100, mix=[1.0], seed=4)
    texts = {rec.query_text for rec in log}
    assert len(log) == 100
    assert len(texts) > 10  # literals vary
    shapes = {t.split("WHERE")[0] for t in texts}
    assert len(shapes) == 1  # template skeleton fixed


def test_generate_deterministic():
    args = dict(n=50, mix=[0.5, 0.5], seed=9)
    a = generate_workload(small_schema(), [tpl(0, ["lo"]), tpl(1, ["mid"])], **args)
    b = generate_workload(small_schema(), [tpl(0, ["lo"]), tpl(1, ["mid"])], **args)
    assert [r.query_text for r in a] == [r.query_text for r in b]
    assert [dict(r.labels) for r in a] == [dict(r.labels) for r in b]


def test_generate_mix_within_three_sigma():
    n = 10_000
    log = generate_workload(small_schema(), [tpl(0, ["lo"]), tpl(1, ["mid"])], n=n, mix=[0.5, 0.5], seed=3)
    count0 = sum(1 for r in log if r.labels["template"] == "t0")
    sigma = np.sqrt(n * 0.25)
    assert abs(count0 - n / 2) <= 3 * sigma


def test_generate_user_population_labels():
    schema, templates, users = multi_account_population(n_accounts=2, users_per_account=2)
    log = generate_workload(schema, templates, n=200, seed=5, users=users)
    assert {r.labels["account"] for r in log} == {"account_0", "account_1"}
    for rec in log:
        assert rec.labels["user"].startswith("user_")
        assert rec.labels["template"] in {t.id for t in templates}


def test_generate_validation():
    with pytest.raises(ConfigError):
        generate_workload(small_schema(), [tpl(0, ["lo"])], n=0, mix=[1.0])
    with pytest.raises(ConfigError):
        generate_workload(small_schema(), [tpl(0, ["lo"])], n=5, mix=[0.7])
    with pytest.raises(ConfigError):
        generate_workload(small_schema(), [tpl(0, ["lo"])], n=5)


def record_for(template_id="t0"):
    return LabeledQuery("SELECT lo FROM t WHERE lo = 5", labels={"template": template_id})


def test_query_cost_rules():
    schema = small_schema()
    templates = [tpl(0, ["hi"]), tpl(1, ["lo", "mid"]), tpl(2, ["lo"], group_by="grp")]
    model = CostModel(schema, templates)
    no_idx = IndexConfiguration()

    # no indexes: full row count
    q0 = LabeledQuery("x", labels={"template": "t0"})
    assert model.query_cost(q0, no_idx) == 1_000_000

    # perfectly selective single-column index: cost 1 (floored)
    idx_hi = IndexConfiguration((("t", ("hi",)),))
    assert model.query_cost(q0, idx_hi) == 1.0

    # index on one of two filter columns: row_count / distinct
    q1 = LabeledQuery("x", labels={"template": "t1"})
    idx_lo = IndexConfiguration((("t", ("lo",)),))
    assert model.query_cost(q1, idx_lo) == 1_000_000 / 100

    # two-column prefix match multiplies the distinct counts
    idx_lomid = IndexConfiguration((("t", ("lo", "mid")),))
    assert model.query_cost(q1, idx_lomid) == max(1.0, 1_000_000 / (100 * 1000))

    # a prefix that leaves the filter set stops matching
    idx_logrp = IndexConfiguration((("t", ("lo", "grp")),))
    assert model.query_cost(q1, idx_logrp) == 1_000_000 / 100

    # group-by adds 10% unless an index leads with the group column
    q2 = LabeledQuery("x", labels={"template": "t2"})
    assert model.query_cost(q2, no_idx) == 1_000_000 * 1.1
    assert model.query_cost(q2, idx_lo) == (1_000_000 / 100) * 1.1
    # an index leading with the group-by column removes the 10% penalty, and
    # grants no selectivity (grp is not a filter column of t2)
    idx_grp = IndexConfiguration((("t", ("grp",)),))
    assert model.query_cost(q2, idx_grp) == 1_000_000
    assert model.query_cost(q2, IndexConfiguration((("t", ("lo",)), ("t", ("grp",))))) == 1_000_000 / 100


def test_query_cost_unknown_template_errors():
    model = CostModel(small_schema(), [tpl(0, ["lo"])])
    with pytest.raises(SimulatorError):
        model.query_cost(LabeledQuery("x", labels={"template": "mystery"}), IndexConfiguration())
    with pytest.raises(SimulatorError):
        model.query_cost(LabeledQuery("x"), IndexConfiguration())


def test_recommend_budget_zero():
    log = generate_workload(small_schema(), [tpl(0, ["lo"])], n=20, mix=[1.0], seed=1)
    result = recommend_indexes(log, 0, small_schema(), [tpl(0, ["lo"])])
    assert result.configuration.indexes == ()
    assert result.work_units == 0


def test_recommend_picks_the_single_positive_candidate():
    templates = [tpl(0, ["lo"])]
    log = generate_workload(small_schema(), templates, n=30, mix=[1.0], seed=2)
    result = recommend_indexes(log, 1, small_schema(), templates)
    assert result.configuration.indexes == (("t", ("lo",)),)


def test_recommend_work_scales_with_log_size():
    templates = [tpl(0, ["lo"]), tpl(1, ["mid", "grp"])]
    log1 = generate_workload(small_schema(), templates, n=100, mix=[0.5, 0.5], seed=3)
    log2 = WorkloadLog(list(log1) + list(log1), source_id="double")
    r1 = recommend_indexes(log1, 3, small_schema(), templates)
    r2 = recommend_indexes(log2, 3, small_schema(), templates)
    assert r1.configuration == r2.configuration
    assert r2.work_units == 2 * r1.work_units


def test_recommend_never_hurts_and_budget_monotone():
    templates = list(TEMPLATES_A)
    log = generate_workload(SCHEMA_A, templates, n=200, mix=EQUAL_MIX_8, seed=8)
    pricer = CostModel(SCHEMA_A, templates)
    base_cost = pricer.workload_cost(log, IndexConfiguration())
    prev = None
    for budget in range(0, 7):
        cfg = recommend_indexes(log, budget, SCHEMA_A, templates).configuration
        cost = CostModel(SCHEMA_A, templates).workload_cost(log, cfg)
        assert cost <= base_cost + 1e-9
        assert cfg.total_units <= budget
        if prev is not None:
            assert cost <= prev + 1e-9  # more budget never hurts
        prev = cost


def test_evaluate_summary_identity_ratio_one():
    templates = list(TEMPLATES_A)
    log = generate_workload(SCHEMA_A, templates, n=120, mix=EQUAL_MIX_8, seed=10)
    report = evaluate_summary(log, list(range(len(log))), 6, SCHEMA_A, templates)
    assert report.ratio == 1.0
    assert report.advisor_time_full == report.advisor_time_summary


def test_evaluation_report_json_and_table():
    templates = list(TEMPLATES_A)
    log = generate_workload(SCHEMA_A, templates, n=60, mix=EQUAL_MIX_8, seed=12)
    report = evaluate_summary(log, [0, 1, 2, 3], 4, SCHEMA_A, templates)
    doc = report.to_json_dict()
    assert {"cost_full_indexes", "cost_summary_indexes", "advisor_time_full",
            "advisor_time_summary", "ratio"} <= set(doc)
    table = report.render_table()
    assert "cost ratio" in table and "advisor work units" in table


def test_index_configuration_validation():
    with pytest.raises(ConfigError):
        IndexConfiguration((("t", ("a",)), ("t", ("a",))))
    cfg = IndexConfiguration((("t", ("a", "b")), ("u", ("c",))))
    assert cfg.total_units == 3


def test_workload_spec_roundtrip(tmp_path):
    doc = {
        "schema": {
            "tables": [
                {
                    "name": "t",
                    "row_count": 1000,
                    "columns": [
                        {"name": "a", "distinct_count": 10},
                        {"name": "b", "distinct_count": 100, "text_values": True},
                    ],
                }
            ]
        },
        "templates": [
            {"id": "x", "table": "t", "filter_columns": ["b", "a"], "group_by": None, "literal_seed": 3}
        ],
        "mix": {"x": 1.0},
        "users": [
            {"user": "u1", "account": "a1", "weights": {"x": 1.0}, "weight": 2.0}
        ],
    }
    path = tmp_path / "spec.json"
    path.write_text(json.dumps(doc))
    spec = load_workload_spec(path)
    assert spec.schema.table("t").column("b").text_values
    assert spec.templates[0].filter_columns == ("b", "a")
    assert spec.mix == (1.0,)
    assert spec.users[0] == UserProfile(user="u1", account="a1", template_weights={"x": 1.0}, weight=2.0)

    log = generate_workload(spec.schema, spec.templates, n=5, seed=0, users=spec.users)
    assert "'v" in log[0].query_text  # text-valued literal rendered quoted
