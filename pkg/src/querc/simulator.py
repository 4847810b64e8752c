"""Desk-scale evaluation loop for summarization quality.

Provides a seeded synthetic workload generator over a declared schema, a
selectivity-based cost model, and a deliberately quadratic greedy index
advisor, so summary quality (full-workload cost under summary-recommended
indexes vs. full-recommended ones) and advisor speedup are measurable
without a DBMS. Advisor effort is counted in cost-model evaluations, not
wall-clock, so results are machine-independent.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigError, QuercError
from .workload import LabeledQuery, WorkloadLog

TEMPLATE_CHANNEL = "template"
USER_CHANNEL = "user"
ACCOUNT_CHANNEL = "account"


class SimulatorError(QuercError):
    pass


@dataclass(frozen=True)
class ColumnSpec:
    name: str
    distinct_count: int
    text_values: bool = False  # render literals as quoted strings


@dataclass(frozen=True)
class TableSpec:
    name: str
    row_count: int
    columns: tuple[ColumnSpec, ...]

    def __post_init__(self):
        object.__setattr__(self, "columns", tuple(self.columns))
        for col in self.columns:
            if not (self.row_count >= col.distinct_count >= 1):
                raise ConfigError(
                    f"table {self.name}: need row_count >= distinct_count >= 1 for {col.name}"
                )

    def column(self, name: str) -> ColumnSpec:
        for col in self.columns:
            if col.name == name:
                return col
        raise ConfigError(f"table {self.name} has no column {name!r}")


@dataclass(frozen=True)
class SyntheticSchema:
    tables: tuple[TableSpec, ...]

    def __post_init__(self):
        object.__setattr__(self, "tables", tuple(self.tables))

    def table(self, name: str) -> TableSpec:
        for t in self.tables:
            if t.name == name:
                return t
        raise ConfigError(f"schema has no table {name!r}")


@dataclass(frozen=True)
class QueryTemplate:
    id: str
    table: str
    filter_columns: tuple[str, ...]
    group_by: str | None = None
    literal_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "filter_columns", tuple(self.filter_columns))


@dataclass(frozen=True)
class UserProfile:
    """A synthetic user: an account plus a weight vector over template ids."""

    user: str
    account: str
    template_weights: Mapping[str, float]
    weight: float = 1.0


def validate_templates(schema: SyntheticSchema, templates: Sequence[QueryTemplate]) -> None:
    seen = set()
    for tpl in templates:
        if tpl.id in seen:
            raise ConfigError(f"duplicate template id {tpl.id!r}")
        seen.add(tpl.id)
        table = schema.table(tpl.table)
        for col in tpl.filter_columns:
            table.column(col)
        if tpl.group_by is not None:
            table.column(tpl.group_by)


def _render_literal(col: ColumnSpec, rng) -> str:
    value = int(rng.integers(1, col.distinct_count + 1))
    return f"'v{value}'" if col.text_values else str(value)


def _projection(tpl: QueryTemplate, table: TableSpec) -> str:
    # a deterministic non-filter projection keeps templates lexically distinct
    spare = [c.name for c in table.columns if c.name not in tpl.filter_columns]
    if not spare:
        return "*"
    pick = sum(ord(ch) for ch in tpl.id) % len(spare)
    return ", ".join(dict.fromkeys([spare[pick], spare[0]]))


def render_query(tpl: QueryTemplate, schema: SyntheticSchema, rng) -> str:
    table = schema.table(tpl.table)
    where = " AND ".join(
        f"{name} = {_render_literal(table.column(name), rng)}" for name in tpl.filter_columns
    )
    if tpl.group_by is not None:
        sql = f"SELECT {tpl.group_by}, COUNT(*) AS n FROM {table.name}"
        if where:
            sql += f" WHERE {where}"
        sql += f" GROUP BY {tpl.group_by} ORDER BY n DESC"
    else:
        sql = f"SELECT {_projection(tpl, table)} FROM {table.name}"
        if where:
            sql += f" WHERE {where}"
    return sql


def generate_workload(
    schema: SyntheticSchema,
    templates: Sequence[QueryTemplate],
    n: int,
    mix: Sequence[float] | None = None,
    seed: int = 0,
    users: Sequence[UserProfile] | None = None,
    source_id: str = "synthetic",
) -> WorkloadLog:
    """Draw n queries i.i.d. and render them with fresh literals.

    Labels carry the template id plus user/account assignments. With a user
    population, a user is drawn per query and the template from that user's
    weights; otherwise templates come from ``mix`` and each template gets a
    point-mass owner user (account derived from the table).
    """
    if n < 1:
        raise ConfigError("n must be >= 1")
    validate_templates(schema, templates)
    by_id = {tpl.id: tpl for tpl in templates}
    rng = np.random.default_rng(seed)
    literal_rngs = {
        tpl.id: np.random.default_rng([seed, tpl.literal_seed, i])
        for i, tpl in enumerate(templates)
    }

    if users is not None:
        user_w = np.asarray([u.weight for u in users], dtype=np.float64)
        if (user_w <= 0).any():
            raise ConfigError("user weights must be positive")
        user_w = user_w / user_w.sum()
        per_user_tpl: list[tuple[list[str], np.ndarray]] = []
        for u in users:
            ids = sorted(u.template_weights)
            w = np.asarray([u.template_weights[t] for t in ids], dtype=np.float64)
            if abs(w.sum() - 1.0) > 1e-9:
                raise ConfigError(f"user {u.user}: template weights must sum to 1")
            for t in ids:
                if t not in by_id:
                    raise ConfigError(f"user {u.user} references unknown template {t!r}")
            per_user_tpl.append((ids, w))
        user_picks = rng.choice(len(users), size=n, p=user_w)
        records = []
        for i in range(n):
            u = users[int(user_picks[i])]
            ids, w = per_user_tpl[int(user_picks[i])]
            tpl = by_id[ids[int(rng.choice(len(ids), p=w))]]
            sql = render_query(tpl, schema, literal_rngs[tpl.id])
            records.append(
                LabeledQuery(
                    query_text=sql,
                    labels={TEMPLATE_CHANNEL: tpl.id, USER_CHANNEL: u.user, ACCOUNT_CHANNEL: u.account},
                )
            )
        return WorkloadLog(records, source_id=source_id)

    if mix is None:
        raise ConfigError("either mix or users must be given")
    weights = np.asarray(mix, dtype=np.float64)
    if weights.shape[0] != len(templates):
        raise ConfigError("mix length must match the template list")
    if abs(weights.sum() - 1.0) > 1e-9:
        raise ConfigError("mix weights must sum to 1")
    picks = rng.choice(len(templates), size=n, p=weights)
    records = []
    for i in range(n):
        tpl = templates[int(picks[i])]
        sql = render_query(tpl, schema, literal_rngs[tpl.id])
        records.append(
            LabeledQuery(
                query_text=sql,
                labels={
                    TEMPLATE_CHANNEL: tpl.id,
                    USER_CHANNEL: f"user_{tpl.id}",
                    ACCOUNT_CHANNEL: f"acct_{tpl.table}",
                },
            )
        )
    return WorkloadLog(records, source_id=source_id)


@dataclass(frozen=True)
class IndexConfiguration:
    """A set of (table, ordered column list) indexes; unit cost per index is
    its column count."""

    indexes: tuple[tuple[str, tuple[str, ...]], ...] = ()

    def __post_init__(self):
        norm = tuple((t, tuple(cols)) for t, cols in self.indexes)
        if len(set(norm)) != len(norm):
            raise ConfigError("duplicate indexes in configuration")
        object.__setattr__(self, "indexes", norm)

    @property
    def total_units(self) -> int:
        return sum(len(cols) for _, cols in self.indexes)

    def on_table(self, table: str):
        return [cols for t, cols in self.indexes if t == table]

    def to_json_dict(self) -> dict:
        return {
            "indexes": [{"table": t, "columns": list(cols)} for t, cols in self.indexes],
            "total_units": self.total_units,
        }


class CostModel:
    """Prices the simulator's own workloads under an index configuration.

    A query costs its table's row count unless some index's leading columns
    are a subset (any order) of the query's filter columns; then the cost is
    row_count divided by the product of the matched leading columns' distinct
    counts, floored at 1. A group-by adds 10% unless some index on the table
    leads with the group-by column. Every call increments ``evaluations``,
    the advisor's work-unit meter.
    """

    def __init__(self, schema: SyntheticSchema, templates: Sequence[QueryTemplate]):
        validate_templates(schema, templates)
        self.schema = schema
        self.templates = {tpl.id: tpl for tpl in templates}
        self.evaluations = 0

    def template_of(self, q: LabeledQuery) -> QueryTemplate:
        tpl_id = q.labels.get(TEMPLATE_CHANNEL)
        if tpl_id is None or tpl_id not in self.templates:
            raise SimulatorError(
                f"unknown template label {tpl_id!r}; the simulator only prices its own workloads"
            )
        return self.templates[tpl_id]

    def query_cost(self, q: LabeledQuery, idx: IndexConfiguration) -> float:
        self.evaluations += 1
        tpl = self.template_of(q)
        table = self.schema.table(tpl.table)
        filters = set(tpl.filter_columns)
        best_reduction = 1.0
        for cols in idx.on_table(tpl.table):
            reduction = 1.0
            for col in cols:  # leading prefix only, any order within the filter set
                if col not in filters:
                    break
                reduction *= table.column(col).distinct_count
            if reduction > best_reduction:
                best_reduction = reduction
        cost = table.row_count if best_reduction == 1.0 else max(1.0, table.row_count / best_reduction)
        if tpl.group_by is not None:
            leads = any(cols and cols[0] == tpl.group_by for cols in idx.on_table(tpl.table))
            if not leads:
                cost *= 1.10
        return float(cost)

    def workload_cost(self, log: WorkloadLog, idx: IndexConfiguration) -> float:
        return float(sum(self.query_cost(q, idx) for q in log))


def candidate_indexes(log: WorkloadLog, model: CostModel) -> list[tuple[str, tuple[str, ...]]]:
    """All prefixes of the filter-column lists of templates present in the
    log, deduplicated, in lexicographic order."""
    seen = set()
    for q in log:
        tpl = model.template_of(q)
        for j in range(1, len(tpl.filter_columns) + 1):
            seen.add((tpl.table, tpl.filter_columns[:j]))
    return sorted(seen)


@dataclass(frozen=True)
class RecommendResult:
    configuration: IndexConfiguration
    work_units: int
    rounds: int


def recommend_indexes(
    log: WorkloadLog,
    budget_units: int,
    schema: SyntheticSchema,
    templates: Sequence[QueryTemplate],
) -> RecommendResult:
    """Greedy advisor: per round, re-price every (candidate x query) pair and
    add the candidate with the best cost reduction per unit until the budget
    is gone or no candidate helps. Deliberately Theta(candidates x log) per
    round; work_units counts cost-model evaluations.
    """
    if budget_units < 0:
        raise ConfigError("budget_units must be >= 0")
    model = CostModel(schema, templates)
    candidates = candidate_indexes(log, model)
    chosen: list[tuple[str, tuple[str, ...]]] = []
    remaining = budget_units
    rounds = 0
    while remaining > 0:
        rounds += 1
        base = model.workload_cost(log, IndexConfiguration(tuple(chosen)))
        best_score = 0.0
        best_cand = None
        for cand in candidates:  # lexicographic order breaks score ties
            units = len(cand[1])
            if cand in chosen or units > remaining:
                continue
            cost = model.workload_cost(log, IndexConfiguration(tuple(chosen + [cand])))
            score = (base - cost) / units
            if score > best_score:
                best_score = score
                best_cand = cand
        if best_cand is None:
            break
        chosen.append(best_cand)
        remaining -= len(best_cand[1])
    return RecommendResult(
        configuration=IndexConfiguration(tuple(chosen)),
        work_units=model.evaluations,
        rounds=rounds,
    )


@dataclass(frozen=True)
class EvaluationReport:
    """Full-workload costs under full- vs summary-recommended indexes."""

    cost_full_indexes: float
    cost_summary_indexes: float
    advisor_time_full: int
    advisor_time_summary: int
    full_configuration: IndexConfiguration
    summary_configuration: IndexConfiguration

    @property
    def ratio(self) -> float:
        return self.cost_summary_indexes / self.cost_full_indexes

    def to_json_dict(self) -> dict:
        return {
            "cost_full_indexes": self.cost_full_indexes,
            "cost_summary_indexes": self.cost_summary_indexes,
            "advisor_time_full": self.advisor_time_full,
            "advisor_time_summary": self.advisor_time_summary,
            "ratio": self.ratio,
            "full_configuration": self.full_configuration.to_json_dict(),
            "summary_configuration": self.summary_configuration.to_json_dict(),
        }

    def render_table(self) -> str:
        rows = [
            ("", "full", "summary"),
            ("workload cost", f"{self.cost_full_indexes:.1f}", f"{self.cost_summary_indexes:.1f}"),
            ("advisor work units", str(self.advisor_time_full), str(self.advisor_time_summary)),
            ("indexes", str(len(self.full_configuration.indexes)), str(len(self.summary_configuration.indexes))),
            ("cost ratio (summary/full)", f"{self.ratio:.4f}", ""),
        ]
        widths = [max(len(r[i]) for r in rows) for i in range(3)]
        return "\n".join(
            "  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip() for row in rows
        )


def evaluate_summary(
    full: WorkloadLog,
    witness_indices: Sequence[int],
    budget_units: int,
    schema: SyntheticSchema,
    templates: Sequence[QueryTemplate],
) -> EvaluationReport:
    """Recommend indexes from the full workload and from its witnesses, then
    price the full workload under both configurations."""
    witness_log = WorkloadLog([full[i] for i in witness_indices], source_id=f"{full.source_id}:summary")
    rec_full = recommend_indexes(full, budget_units, schema, templates)
    rec_sub = recommend_indexes(witness_log, budget_units, schema, templates)
    pricer = CostModel(schema, templates)
    cost_full = pricer.workload_cost(full, rec_full.configuration)
    cost_sub = pricer.workload_cost(full, rec_sub.configuration)
    return EvaluationReport(
        cost_full_indexes=cost_full,
        cost_summary_indexes=cost_sub,
        advisor_time_full=rec_full.work_units,
        advisor_time_summary=rec_sub.work_units,
        full_configuration=rec_full.configuration,
        summary_configuration=rec_sub.configuration,
    )


# --- JSON config plumbing (schema, templates, users, mix) -------------------


def schema_from_json(doc) -> SyntheticSchema:
    tables = []
    for t in doc["tables"]:
        cols = tuple(
            ColumnSpec(
                name=c["name"],
                distinct_count=int(c["distinct_count"]),
                text_values=bool(c.get("text_values", False)),
            )
            for c in t["columns"]
        )
        tables.append(TableSpec(name=t["name"], row_count=int(t["row_count"]), columns=cols))
    return SyntheticSchema(tables=tuple(tables))


def templates_from_json(doc) -> list[QueryTemplate]:
    return [
        QueryTemplate(
            id=t["id"],
            table=t["table"],
            filter_columns=tuple(t["filter_columns"]),
            group_by=t.get("group_by"),
            literal_seed=int(t.get("literal_seed", 0)),
        )
        for t in doc
    ]


@dataclass(frozen=True)
class WorkloadSpec:
    schema: SyntheticSchema
    templates: tuple[QueryTemplate, ...]
    mix: tuple[float, ...] | None = None
    users: tuple[UserProfile, ...] | None = None


def load_workload_spec(path) -> WorkloadSpec:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot load workload spec {path}: {exc}") from exc
    schema = schema_from_json(doc["schema"])
    templates = tuple(templates_from_json(doc["templates"]))
    mix = None
    if "mix" in doc and doc["mix"] is not None:
        raw = doc["mix"]
        if isinstance(raw, dict):
            mix = tuple(float(raw.get(t.id, 0.0)) for t in templates)
        else:
            mix = tuple(float(v) for v in raw)
    users = None
    if "users" in doc and doc["users"] is not None:
        users = tuple(
            UserProfile(
                user=u["user"],
                account=u["account"],
                template_weights={k: float(v) for k, v in u["weights"].items()},
                weight=float(u.get("weight", 1.0)),
            )
            for u in doc["users"]
        )
    return WorkloadSpec(schema=schema, templates=templates, mix=mix, users=users)
