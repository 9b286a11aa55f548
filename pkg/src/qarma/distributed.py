"""Coordinator/worker execution of level batches over framed TCP streams.

Wire format: a 4-byte big-endian unsigned length prefix followed by a JSON
payload carrying a "type" field.  Types: HELLO, HELLO_ACK, LEVEL_BEGIN, TASK,
RESULT, LEVEL_END, BYE, ERR.

Workers load the dataset from their own copy of the file, verified against
the coordinator's content digest at HELLO; only itemset batches, rule
snapshots and results travel over the wire.  Workers may join between levels
("hot-plugging"): the coordinator re-attempts connection to every configured
remote at each level boundary, and a late joiner receives the current level's
LEVEL_BEGIN before any TASK.  A batch is re-dispatched when its worker dies
or times out; duplicate results are discarded, so each batch is accounted
exactly once.
"""

from __future__ import annotations

import hashlib
import json
import logging
import queue
import socket
import struct
import threading
import time
from dataclasses import asdict
from pathlib import Path

from .dataset import load_dataset
from .engine import EngineConfig, _build_context, _process_batch
from .index import build_index
from .itemsets import default_ord, mine_frequent
from .rules import (
    RuleStore,
    final_prune,
    format_rule_line,
    parse_rule_line,
    sort_key,
    widest_filter,
)
from .dataset import Dataset, augment_negated, build_value_index, vacuous_thresholds

log = logging.getLogger("qarma.distributed")

_HEADER = struct.Struct(">I")
MAX_FRAME = 1 << 30


class ProtocolError(RuntimeError):
    pass


def send_frame(sock: socket.socket, payload: dict) -> None:
    body = json.dumps(payload, ensure_ascii=False).encode("utf-8")
    sock.sendall(_HEADER.pack(len(body)) + body)


def _recv_exact(sock: socket.socket, size: int) -> bytes | None:
    chunks = []
    while size:
        chunk = sock.recv(size)
        if not chunk:
            return None if not chunks else _eof_error()
        chunks.append(chunk)
        size -= len(chunk)
    return b"".join(chunks)


def _eof_error():
    raise ProtocolError("connection closed mid-frame")


def recv_frame(sock: socket.socket) -> dict | None:
    """Next frame, or None on clean end-of-stream.  Raises on a torn frame."""
    header = _recv_exact(sock, _HEADER.size)
    if header is None:
        return None
    (length,) = _HEADER.unpack(header)
    if length > MAX_FRAME:
        raise ProtocolError(f"frame of {length} bytes exceeds the limit")
    body = _recv_exact(sock, length)
    if body is None:
        raise ProtocolError("connection closed mid-frame")
    return json.loads(body.decode("utf-8"))


def file_digest(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def config_to_dict(config: EngineConfig) -> dict:
    d = asdict(config)
    d["ltf_metrics"] = list(config.ltf_metrics)
    d["negate_attrs"] = list(config.negate_attrs)
    return d


def config_from_dict(d: dict) -> EngineConfig:
    d = dict(d)
    d["ltf_metrics"] = tuple(d.get("ltf_metrics", ("confidence",)))
    d["negate_attrs"] = tuple(d.get("negate_attrs", ()))
    return EngineConfig(**d)


def _parse_endpoint(endpoint: str) -> tuple[str, int]:
    host, _, port = endpoint.rpartition(":")
    return host or "127.0.0.1", int(port)


class _WorkerRun:
    """Per-connection mining state on the worker side."""

    def __init__(self, get_dataset):
        self._get_dataset = get_dataset
        self.ctx = None
        self.snapshot: RuleStore | None = None

    def begin_level(self, config_dict: dict, rule_lines: list[str]) -> None:
        if self.ctx is None:
            config = config_from_dict(config_dict)
            if config.shared_attr is None:
                raise ProtocolError("worker requires config.shared_attr")
            ds = self._get_dataset(config.shared_attr)
            for attr in config.negate_attrs:
                ds = augment_negated(ds, attr)
            p = config.shared_attr
            vi = build_value_index(ds)
            idx = build_index(ds, vi)
            ord_maps = default_ord(ds)
            vacuums = vacuous_thresholds(ds, vi)
            self.ctx = _build_context(idx, vi, ord_maps, config, p, vacuums)
        snapshot = RuleStore(self.ctx.config.ltf_metrics, self.ctx.vacuums)
        snapshot.bulk_load(parse_rule_line(line) for line in rule_lines)
        self.snapshot = snapshot

    def run_task(self, itemsets: list[list[str]]) -> list[str]:
        if self.ctx is None or self.snapshot is None:
            raise ProtocolError("TASK before LEVEL_BEGIN")
        batch = [tuple(i) for i in itemsets]
        additions, _ = _process_batch(batch, self.snapshot, self.ctx)
        return [format_rule_line(r, m, sig=None) for r, m in additions]


def serve_worker(listen: str, dataset_path: str | Path) -> None:
    """Serve mining tasks for one dataset file until a coordinator says BYE.

    The file is digested once at startup; parsing waits for the first
    LEVEL_BEGIN, which names the shared attribute.
    """
    digest = file_digest(dataset_path)
    cache: dict[str, Dataset] = {}

    def get_dataset(shared_attr: str) -> Dataset:
        if shared_attr not in cache:
            cache[shared_attr] = load_dataset(dataset_path, shared_attr)
        return cache[shared_attr]

    host, port = _parse_endpoint(listen)
    server = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    server.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    server.bind((host, port))
    server.listen(4)
    log.info("worker listening on %s:%d (digest %s)", host, port, digest[:12])
    try:
        while True:
            conn, peer = server.accept()
            log.info("coordinator connected from %s", peer)
            if _serve_connection(conn, get_dataset, digest):
                return  # BYE: shut the worker down
    finally:
        server.close()


def _serve_connection(conn: socket.socket, get_dataset, digest: str) -> bool:
    """Handle one coordinator session; True when BYE asked for shutdown."""
    run = _WorkerRun(get_dataset)
    with conn:
        while True:
            try:
                msg = recv_frame(conn)
            except (ProtocolError, json.JSONDecodeError, ConnectionError) as exc:
                try:
                    send_frame(conn, {"type": "ERR", "reason": f"malformed frame: {exc}"})
                except OSError:
                    pass
                return False
            if msg is None:
                return False
            mtype = msg.get("type")
            if mtype == "HELLO":
                if msg.get("digest") != digest:
                    send_frame(conn, {"type": "ERR", "reason": "dataset digest mismatch"})
                    return False
                send_frame(conn, {"type": "HELLO_ACK", "worker": socket.gethostname(),
                                  "digest": digest})
            elif mtype == "LEVEL_BEGIN":
                run.begin_level(msg["config"], msg.get("rules", []))
            elif mtype == "TASK":
                lines = run.run_task(msg.get("itemsets", []))
                send_frame(conn, {"type": "RESULT", "id": msg["id"], "rules": lines})
            elif mtype == "LEVEL_END":
                run.snapshot = None
            elif mtype == "BYE":
                try:
                    send_frame(conn, {"type": "BYE"})
                except OSError:
                    pass
                return True
            else:
                send_frame(conn, {"type": "ERR", "reason": f"unknown type {mtype!r}"})


class WorkerSession:
    def __init__(self, endpoint: str, sock: socket.socket, worker: str):
        self.endpoint = endpoint
        self.sock = sock
        self.worker = worker
        self.alive = True

    def close(self) -> None:
        self.alive = False
        try:
            self.sock.close()
        except OSError:
            pass


class Coordinator:
    """Owns the worker sessions and distributes one level's batches at a time."""

    def __init__(self, remotes: list[str], digest: str, config: EngineConfig,
                 task_timeout: float = 60.0, connect_timeout: float = 2.0):
        self.remotes = list(remotes)
        self.digest = digest
        self.config = config
        self.task_timeout = task_timeout
        self.connect_timeout = connect_timeout
        self.sessions: dict[str, WorkerSession] = {}

    def connect(self) -> int:
        """(Re)connect any configured remote without a live session."""
        for endpoint in self.remotes:
            live = self.sessions.get(endpoint)
            if live is not None and live.alive:
                continue
            try:
                sock = socket.create_connection(
                    _parse_endpoint(endpoint), timeout=self.connect_timeout
                )
                sock.settimeout(self.task_timeout)
                send_frame(sock, {"type": "HELLO", "digest": self.digest})
                reply = recv_frame(sock)
                if not reply or reply.get("type") != "HELLO_ACK":
                    reason = (reply or {}).get("reason", "no HELLO_ACK")
                    log.warning("worker %s rejected: %s", endpoint, reason)
                    sock.close()
                    continue
                self.sessions[endpoint] = WorkerSession(endpoint, sock, reply.get("worker", endpoint))
                log.info("worker %s joined", endpoint)
            except OSError as exc:
                log.debug("worker %s unavailable: %s", endpoint, exc)
        return sum(1 for s in self.sessions.values() if s.alive)

    def shutdown(self) -> None:
        for session in self.sessions.values():
            if session.alive:
                try:
                    send_frame(session.sock, {"type": "BYE"})
                    recv_frame(session.sock)
                except (OSError, ProtocolError, json.JSONDecodeError):
                    pass
            session.close()
        self.sessions.clear()

    def run_level(self, k: int, batches: list[tuple], snapshot_lines: list[str],
                  local_fallback) -> list:
        """Dispatch one level's batches; returns per-batch addition lists.

        ``local_fallback(batch)`` processes a batch in-process when no worker
        can (none configured, none alive, or all died mid-level).
        """
        pending: queue.Queue = queue.Queue()
        for i in range(len(batches)):
            pending.put(i)
        accepted: dict[int, list] = {}
        lock = threading.Lock()
        level_config = {
            "type": "LEVEL_BEGIN",
            "k": k,
            "config": config_to_dict(self.config),
            "rules": snapshot_lines,
        }

        def session_loop(session: WorkerSession) -> None:
            try:
                send_frame(session.sock, level_config)
            except OSError:
                session.close()
                return
            while True:
                try:
                    idx = pending.get_nowait()
                except queue.Empty:
                    return
                with lock:
                    duplicate = idx in accepted
                if duplicate:
                    continue
                try:
                    send_frame(session.sock, {
                        "type": "TASK", "id": idx,
                        "itemsets": [list(t) for t in batches[idx]],
                    })
                    msg = recv_frame(session.sock)
                    if msg is None or msg.get("type") != "RESULT" or msg.get("id") != idx:
                        raise ProtocolError(f"unexpected reply {msg and msg.get('type')!r}")
                    rules = [parse_rule_line(line) for line in msg["rules"]]
                except (OSError, ProtocolError, json.JSONDecodeError, KeyError) as exc:
                    log.warning("worker %s failed on batch %d: %s; re-dispatching",
                                session.endpoint, idx, exc)
                    pending.put(idx)
                    session.close()
                    return
                with lock:
                    if idx not in accepted:  # duplicates of re-dispatched work dropped
                        accepted[idx] = rules

        threads = []
        for session in self.sessions.values():
            if session.alive:
                t = threading.Thread(target=session_loop, args=(session,), daemon=True)
                t.start()
                threads.append(t)
        for t in threads:
            t.join()
        for session in list(self.sessions.values()):
            if session.alive:
                try:
                    send_frame(session.sock, {"type": "LEVEL_END", "k": k})
                except OSError:
                    session.close()

        missing = [i for i in range(len(batches)) if i not in accepted]
        for idx in missing:
            log.info("processing batch %d in-process (no worker finished it)", idx)
            accepted[idx] = local_fallback(batches[idx])
        return [accepted[i] for i in range(len(batches))]


def mine_distributed(
    dataset_path: str | Path,
    config: EngineConfig,
    remotes: list[str],
    task_timeout: float = 60.0,
) -> tuple[list, dict]:
    """Coordinator-side mine(): INIT locally, expansion on remote workers.

    Produces the identical rule set as the in-process engine; batches from
    dead or absent workers fall back to local execution.
    """
    if config.shared_attr is None:
        raise ValueError("distributed mining requires an explicit shared attribute")
    t0 = time.perf_counter()
    digest = file_digest(dataset_path)
    ds = load_dataset(dataset_path, config.shared_attr)
    for attr in config.negate_attrs:
        ds = augment_negated(ds, attr)
    p = config.shared_attr
    vi = build_value_index(ds)
    idx = build_index(ds, vi)
    ord_maps = default_ord(ds)
    levels = mine_frequent(idx, config.s_min, config.max_len, ord_maps)
    itemset_secs = time.perf_counter() - t0
    vacuums = vacuous_thresholds(ds, vi)
    ctx = _build_context(idx, vi, ord_maps, config, p, vacuums)

    coordinator = Coordinator(remotes, digest, config, task_timeout)
    scored: list = []
    level_stats = []
    try:
        for k in sorted(levels):
            if k < 2:
                continue
            itemsets = levels[k]
            batches = [tuple(itemsets[i: i + config.batch])
                       for i in range(0, len(itemsets), config.batch)]
            coordinator.connect()  # pick up hot-plugged workers at the boundary
            snapshot_lines = [format_rule_line(r, m, sig=None) for r, m in scored]

            def local_fallback(batch):
                snapshot = RuleStore(config.ltf_metrics, ctx.vacuums)
                snapshot.bulk_load(scored)
                additions, _ = _process_batch(batch, snapshot, ctx)
                return additions

            per_batch = coordinator.run_level(k, batches, snapshot_lines, local_fallback)
            additions = [entry for batch in per_batch for entry in batch]
            before = {rule for rule, _ in scored}
            scored = final_prune(scored + additions, config.ltf_metrics, ctx.vacuums)
            level_stats.append({
                "k": k,
                "itemsets": len(itemsets),
                "rules_added": sum(1 for rule, _ in scored if rule not in before),
            })
    finally:
        coordinator.shutdown()

    if config.widest:
        scored = widest_filter(scored, ctx.vacuums)
    scored.sort(key=lambda e: sort_key(e[0]))
    report = {
        "total_secs": time.perf_counter() - t0,
        "itemset_secs": itemset_secs,
        "levels": level_stats,
        "workers": config.workers,
        "batch": config.batch,
        "notes": {
            "lift": "confidence divided by the consequent-support fraction",
            "widest_filter": "applied after dominance pruning" if config.widest else "off",
            "remotes": remotes,
        },
    }
    return scored, report
