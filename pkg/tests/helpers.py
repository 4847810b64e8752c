"""Shared synthetic schemas, templates, and user populations for the tests."""

from __future__ import annotations

import json

from querc.simulator import (
    ColumnSpec,
    QueryTemplate,
    SyntheticSchema,
    TableSpec,
    UserProfile,
)


def spec_json(schema: SyntheticSchema, templates, mix=None, users=None) -> dict:
    """Serialize a workload spec to the CLI's JSON config format."""
    doc = {
        "schema": {
            "tables": [
                {
                    "name": t.name,
                    "row_count": t.row_count,
                    "columns": [
                        {"name": c.name, "distinct_count": c.distinct_count, "text_values": c.text_values}
                        for c in t.columns
                    ],
                }
                for t in schema.tables
            ]
        },
        "templates": [
            {
                "id": t.id,
                "table": t.table,
                "filter_columns": list(t.filter_columns),
                "group_by": t.group_by,
                "literal_seed": t.literal_seed,
            }
            for t in templates
        ],
    }
    if mix is not None:
        doc["mix"] = list(mix)
    if users is not None:
        doc["users"] = [
            {"user": u.user, "account": u.account, "weights": dict(u.template_weights), "weight": u.weight}
            for u in users
        ]
    return doc


def write_spec_json(path, schema, templates, mix=None, users=None):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(spec_json(schema, templates, mix=mix, users=users), fh)
    return str(path)

# Schema A: two fact tables with selective and unselective columns.
SCHEMA_A = SyntheticSchema(
    tables=(
        TableSpec(
            name="orders",
            row_count=1_000_000,
            columns=(
                ColumnSpec("order_key", 1_000_000),
                ColumnSpec("customer_id", 50_000),
                ColumnSpec("region", 50),
                ColumnSpec("status", 8, text_values=True),
                ColumnSpec("order_day", 2_000),
                ColumnSpec("amount", 100_000),
                ColumnSpec("priority", 5),
            ),
        ),
        TableSpec(
            name="lineitem",
            row_count=5_000_000,
            columns=(
                ColumnSpec("line_key", 5_000_000),
                ColumnSpec("order_ref", 1_000_000),
                ColumnSpec("product_id", 10_000),
                ColumnSpec("warehouse", 25, text_values=True),
                ColumnSpec("quantity", 100),
                ColumnSpec("ship_day", 2_000),
                ColumnSpec("discount", 11),
            ),
        ),
    )
)

TEMPLATES_A = (
    QueryTemplate("a0", "orders", ("customer_id",), literal_seed=10),
    QueryTemplate("a1", "orders", ("region", "status"), group_by="priority", literal_seed=11),
    QueryTemplate("a2", "orders", ("order_day", "region"), literal_seed=12),
    QueryTemplate("a3", "orders", ("amount",), group_by="region", literal_seed=13),
    QueryTemplate("a4", "lineitem", ("product_id",), literal_seed=14),
    QueryTemplate("a5", "lineitem", ("warehouse", "ship_day"), literal_seed=15),
    QueryTemplate("a6", "lineitem", ("order_ref", "quantity"), group_by="warehouse", literal_seed=16),
    QueryTemplate("a7", "lineitem", ("discount", "ship_day", "quantity"), literal_seed=17),
)

# Schema B: disjoint tables/columns from schema A (transfer-learning target);
# templates vary structurally (predicate count, group-by, projection width).
SCHEMA_B = SyntheticSchema(
    tables=(
        TableSpec(
            name="sensor_events",
            row_count=2_000_000,
            columns=(
                ColumnSpec("event_key", 2_000_000),
                ColumnSpec("device_id", 40_000),
                ColumnSpec("site", 60, text_values=True),
                ColumnSpec("metric", 12, text_values=True),
                ColumnSpec("event_hour", 5_000),
                ColumnSpec("reading", 250_000),
                ColumnSpec("quality", 4),
            ),
        ),
        TableSpec(
            name="maintenance",
            row_count=800_000,
            columns=(
                ColumnSpec("ticket_key", 800_000),
                ColumnSpec("device_ref", 40_000),
                ColumnSpec("technician", 500, text_values=True),
                ColumnSpec("severity", 6),
                ColumnSpec("opened_day", 1_500),
                ColumnSpec("duration_min", 10_000),
            ),
        ),
    )
)

TEMPLATES_B = (
    QueryTemplate("b0", "sensor_events", ("device_id",), literal_seed=20),
    QueryTemplate("b1", "sensor_events", ("site", "metric"), group_by="quality", literal_seed=21),
    QueryTemplate("b2", "sensor_events", ("event_hour",), group_by="site", literal_seed=22),
    QueryTemplate("b3", "sensor_events", ("reading", "quality", "metric"), literal_seed=23),
    QueryTemplate("b4", "maintenance", ("device_ref",), literal_seed=24),
    QueryTemplate("b5", "maintenance", ("technician", "severity"), literal_seed=25),
    QueryTemplate("b6", "maintenance", ("opened_day",), group_by="technician", literal_seed=26),
    QueryTemplate("b7", "maintenance", ("duration_min", "severity"), literal_seed=27),
)

EQUAL_MIX_8 = tuple([1.0 / 8] * 8)


def account_schema(tag: str, n_templates: int, base_seed: int) -> tuple[TableSpec, tuple[QueryTemplate, ...]]:
    """One table plus n single/multi-column templates, names namespaced by tag."""
    columns = tuple(
        [ColumnSpec(f"{tag}_key", 500_000)]
        + [ColumnSpec(f"{tag}_c{i}", 1_000 * (i + 1)) for i in range(max(3, n_templates))]
    )
    table = TableSpec(name=f"{tag}_facts", row_count=500_000, columns=columns)
    templates = []
    for i in range(n_templates):
        cols = (f"{tag}_c{i}",) if i % 2 == 0 else (f"{tag}_c{i}", f"{tag}_c{(i + 1) % n_templates}")
        group = f"{tag}_c{(i + 2) % n_templates}" if i % 3 == 0 else None
        templates.append(
            QueryTemplate(f"{tag}_t{i}", table.name, cols, group_by=group, literal_seed=base_seed + i)
        )
    return table, tuple(templates)


def multi_account_population(
    n_accounts: int = 4,
    users_per_account: int = 5,
    dominant: float = 0.6,
) -> tuple[SyntheticSchema, tuple[QueryTemplate, ...], tuple[UserProfile, ...]]:
    """Accounts own disjoint tables/templates; each user favors one template
    of their account with weight ``dominant`` and spreads the rest evenly."""
    tables = []
    templates: list[QueryTemplate] = []
    users: list[UserProfile] = []
    for a in range(n_accounts):
        tag = f"acct{a}"
        table, tpls = account_schema(tag, users_per_account, base_seed=100 + 10 * a)
        tables.append(table)
        templates.extend(tpls)
        ids = [t.id for t in tpls]
        for u in range(users_per_account):
            rest = (1.0 - dominant) / (len(ids) - 1)
            weights = {tid: (dominant if i == u else rest) for i, tid in enumerate(ids)}
            users.append(
                UserProfile(user=f"user_{a}_{u}", account=f"account_{a}", template_weights=weights)
            )
    return SyntheticSchema(tables=tuple(tables)), tuple(templates), tuple(users)
