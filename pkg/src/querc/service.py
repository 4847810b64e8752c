"""Streaming labeling service: per-app (embedder, labeler) classifier pairs.

Each app owns an ordered list of classifier pairs. Incoming queries are
embedded and labeled per pair; predictions land in ``predicted_<channel>``
and ``confidence_<channel>`` label channels, never overwriting assigned
labels, and when the record already carries the channel a
``mismatch_<channel>`` flag is added. Every augmented record is appended to
the app's training store; inline apps also forward it to their sink, fork
apps do not forward at all.

Two transports: file replay (hermetic, used by tests and batch jobs) and
newline-delimited JSON over a local TCP socket, one request object per line:

    {"app_id": "...", "query": {<workload record>}}   -> {"ok": true, "record": {...}}
    {"cmd": "reload"} | {"cmd": "stats"}              -> control responses

Models load once and are shared across apps by path.
"""

from __future__ import annotations

import json
import socket
import socketserver
import threading
from dataclasses import dataclass, field

from .container import peek_kind
from .doc2vec import Doc2VecModel
from .errors import ConfigError, ContainerError, QuercError
from .forest import ForestModel
from .lstm import LstmModel
from .tokenizer import tokenize
from .workload import LabeledQuery, WorkloadLog, read_log, write_log

ERROR_CHANNEL = "querc_error"


class ServiceError(QuercError):
    pass


@dataclass(frozen=True)
class ClassifierSpec:
    channel: str
    embedder: str  # model path
    labeler: str  # model path


@dataclass(frozen=True)
class AppConfig:
    app_id: str
    mode: str  # "inline" | "fork"
    classifiers: tuple[ClassifierSpec, ...] = ()
    sink: str | None = None
    training_store: str | None = None

    def __post_init__(self):
        if self.mode not in ("inline", "fork"):
            raise ConfigError(f"app {self.app_id}: mode must be inline or fork, got {self.mode!r}")
        channels = [c.channel for c in self.classifiers]
        if len(set(channels)) != len(channels):
            raise ConfigError(f"app {self.app_id}: classifier channels must be unique")


def load_service_config(path) -> list[AppConfig]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot load service config {path}: {exc}") from exc
    apps = []
    for app in doc:
        apps.append(
            AppConfig(
                app_id=app["app_id"],
                mode=app.get("mode", "inline"),
                classifiers=tuple(
                    ClassifierSpec(channel=c["channel"], embedder=c["embedder"], labeler=c["labeler"])
                    for c in app.get("classifiers", ())
                ),
                sink=app.get("sink"),
                training_store=app.get("training_store"),
            )
        )
    return apps


def load_embedder(path):
    kind = peek_kind(path)
    if kind == "doc2vec":
        return Doc2VecModel.load(path)
    if kind == "lstm_autoencoder":
        return LstmModel.load(path)
    raise ContainerError(f"{path}: model kind {kind!r} is not an embedder")


@dataclass
class ClassifierPair:
    channel: str
    embedder: object
    labeler: ForestModel


@dataclass
class _App:
    config: AppConfig
    pairs: list[ClassifierPair]
    store: list[tuple[int, LabeledQuery]] = field(default_factory=list)
    sink_records: list[LabeledQuery] = field(default_factory=list)
    lock: threading.Lock = field(default_factory=threading.Lock)


class QuercService:
    """In-process service handle; see the module docstring for semantics."""

    def __init__(self, configs, config_path=None):
        self._config_path = config_path
        self._lock = threading.Lock()
        self._seq = 0
        self._apps: dict[str, _App] = {}
        self._model_cache: dict[str, object] = {}
        self._load_apps(configs)

    @classmethod
    def from_config_file(cls, path) -> "QuercService":
        return cls(load_service_config(path), config_path=path)

    def _load_apps(self, configs) -> None:
        app_ids = [c.app_id for c in configs]
        if len(set(app_ids)) != len(app_ids):
            raise ConfigError("duplicate app_ids in service config")
        cache: dict[str, object] = {}
        failures: list[str] = []
        apps: dict[str, _App] = {}

        def load(path, loader, what, app_id):
            key = str(path)
            if key not in cache:
                try:
                    cache[key] = loader(key)
                except QuercError as exc:
                    failures.append(f"app {app_id}: cannot load {what} {key}: {exc}")
                    return None
            return cache[key]

        for cfg in configs:
            pairs = []
            for spec in cfg.classifiers:
                embedder = load(spec.embedder, load_embedder, "embedder", cfg.app_id)
                labeler = load(spec.labeler, ForestModel.load, "labeler", cfg.app_id)
                if embedder is None or labeler is None:
                    continue
                if embedder.dim != labeler.dim:
                    failures.append(
                        f"app {cfg.app_id} channel {spec.channel}: embedder dimension "
                        f"{embedder.dim} != labeler dimension {labeler.dim}"
                    )
                    continue
                pairs.append(ClassifierPair(channel=spec.channel, embedder=embedder, labeler=labeler))
            apps[cfg.app_id] = _App(config=cfg, pairs=pairs)
        if failures:
            raise ServiceError("service startup failed:\n  " + "\n  ".join(failures))
        with self._lock:
            self._apps = apps
            self._model_cache = cache

    def reload(self, configs=None) -> None:
        """Re-read the config and atomically swap model sets between records."""
        if configs is None:
            if self._config_path is None:
                raise ServiceError("service was not started from a config file; pass configs")
            configs = load_service_config(self._config_path)
        self._load_apps(configs)

    def stats(self) -> dict:
        with self._lock:
            return {
                "apps": sorted(self._apps),
                "model_instances": len(self._model_cache),
                "stored_records": {app_id: len(app.store) for app_id, app in self._apps.items()},
            }

    def _app(self, app_id: str) -> _App:
        with self._lock:
            try:
                return self._apps[app_id]
            except KeyError:
                raise ServiceError(f"unknown app_id {app_id!r}") from None

    def process_query(self, app_id: str, query: LabeledQuery) -> LabeledQuery:
        """Label one record; returns the augmented record.

        Assigned labels are never overwritten; a query that tokenizes to
        nothing passes through unlabeled with a querc_error channel.
        """
        app = self._app(app_id)
        with app.lock:
            extra: dict[str, str] = {}
            for pair in app.pairs:
                seq = tokenize(query.query_text, pair.embedder.tokenizer_options)
                if len(seq) == 0:
                    extra = {ERROR_CHANNEL: "query tokenizes to nothing"}
                    break
                vector = pair.embedder.embed_text(query.query_text)
                predicted, confidence = pair.labeler.predict(vector)
                extra[f"predicted_{pair.channel}"] = predicted
                extra[f"confidence_{pair.channel}"] = repr(confidence)
                assigned = query.labels.get(pair.channel)
                if assigned is not None:
                    extra[f"mismatch_{pair.channel}"] = "true" if predicted != assigned else "false"
            augmented = query.with_labels(extra)
            with self._lock:
                seq_no = self._seq
                self._seq += 1
            app.store.append((seq_no, augmented))
            if app.config.training_store:
                _append_jsonl(app.config.training_store, augmented)
            if app.config.mode == "inline":
                app.sink_records.append(augmented)
                if app.config.sink:
                    _append_jsonl(app.config.sink, augmented)
        return augmented

    def replay_file(self, app_id: str, path, strict: bool = False) -> list[LabeledQuery]:
        """File transport: run every record of a JSON-lines log through one
        app, in order."""
        result = read_log(path, strict=strict)
        return [self.process_query(app_id, rec) for rec in result.log]

    def drain_training_store(self, app_id: str | None = None) -> WorkloadLog:
        """All augmented records in arrival order; non-destructive."""
        with self._lock:
            apps = list(self._apps.values()) if app_id is None else None
        if app_id is not None:
            app = self._app(app_id)
            with app.lock:
                records = [rec for _, rec in app.store]
            return WorkloadLog(records, source_id=f"training_store:{app_id}")
        merged: list[tuple[int, LabeledQuery]] = []
        for app in apps:
            with app.lock:
                merged.extend(app.store)
        merged.sort(key=lambda item: item[0])
        return WorkloadLog([rec for _, rec in merged], source_id="training_store")

    def sink_records(self, app_id: str) -> list[LabeledQuery]:
        app = self._app(app_id)
        with app.lock:
            return list(app.sink_records)


def _append_jsonl(path, record: LabeledQuery) -> None:
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(json.dumps(record.to_json_dict(), ensure_ascii=False, separators=(",", ":")))
        fh.write("\n")


class _LineHandler(socketserver.StreamRequestHandler):
    def handle(self):
        service: QuercService = self.server.service  # type: ignore[attr-defined]
        for raw in self.rfile:
            line = raw.decode("utf-8").strip()
            if not line:
                continue
            try:
                doc = json.loads(line)
                if not isinstance(doc, dict):
                    raise ValueError("request must be a JSON object")
                if doc.get("cmd") == "reload":
                    service.reload()
                    response = {"ok": True, "reloaded": True}
                elif doc.get("cmd") == "stats":
                    response = {"ok": True, "stats": service.stats()}
                else:
                    record = LabeledQuery(
                        query_text=doc["query"]["query_text"],
                        labels=doc["query"].get("labels", {}),
                        timestamp=doc["query"].get("timestamp"),
                        runtime_ms=doc["query"].get("runtime_ms"),
                        error_code=doc["query"].get("error_code"),
                    )
                    augmented = service.process_query(doc["app_id"], record)
                    response = {"ok": True, "record": augmented.to_json_dict()}
            except (QuercError, ValueError, KeyError, TypeError) as exc:
                response = {"ok": False, "error": str(exc) or exc.__class__.__name__}
            self.wfile.write(json.dumps(response, ensure_ascii=False).encode("utf-8") + b"\n")
            self.wfile.flush()


class ServiceServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, service: QuercService, host: str = "127.0.0.1", port: int = 0):
        super().__init__((host, port), _LineHandler)
        self.service = service

    @property
    def address(self) -> tuple[str, int]:
        return self.server_address[0], self.server_address[1]


def request_line(host: str, port: int, doc: dict, timeout: float = 10.0) -> dict:
    """One-shot client helper: send a request object, read one response."""
    with socket.create_connection((host, port), timeout=timeout) as conn:
        conn.sendall(json.dumps(doc, ensure_ascii=False).encode("utf-8") + b"\n")
        buf = b""
        while not buf.endswith(b"\n"):
            chunk = conn.recv(65536)
            if not chunk:
                break
            buf += chunk
    return json.loads(buf.decode("utf-8"))
