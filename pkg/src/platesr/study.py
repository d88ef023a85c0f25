"""Three-alternative forced-choice study service.

Serves randomized image triplets from a prepared study bundle, records
participant choices in an append-only log, and aggregates per-question and
per-method preference statistics. Persistence is two line-delimited JSON
files (sessions, choices); replaying the choice log reproduces the results
exactly.
"""
from __future__ import annotations

import json
import threading
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class BundleQuestion:
    question_id: str
    image_files: tuple[str, str, str]
    method_labels: dict[str, str]  # file -> method, never sent to clients


@dataclass(frozen=True)
class StudyBundle:
    root: Path
    questions: tuple[BundleQuestion, ...]

    @property
    def methods(self) -> list[str]:
        return sorted(set(self.questions[0].method_labels.values()))

    @property
    def question_count(self) -> int:
        return len(self.questions)


def load_bundle(root: Path | str) -> StudyBundle:
    root = Path(root)
    doc = json.loads((root / "questions.json").read_text())
    questions = tuple(
        BundleQuestion(
            question_id=q["question_id"],
            image_files=tuple(q["image_files"]),
            method_labels=dict(q["method_labels"]),
        )
        for q in doc
    )
    if not questions:
        raise ValueError(f"{root}: bundle has no questions")
    for q in questions:
        if len(q.image_files) != 3:
            raise ValueError(f"{q.question_id}: expected 3 images")
        for f in q.image_files:
            if not (root / "images" / f).is_file():
                raise FileNotFoundError(f"bundle image missing: {f}")
    return StudyBundle(root=root, questions=questions)


@dataclass(frozen=True)
class StudySession:
    session_id: str
    participant_label: str | None
    # orders[q][position] = index into the question's canonical image_files
    orders: tuple[tuple[int, int, int], ...]
    created_at: str


@dataclass(frozen=True)
class ChoiceRecord:
    session_id: str
    question_index: int  # 1-based
    position: int        # 1-based displayed position
    chosen_method: str
    recorded_at: str


@dataclass
class StudyResults:
    question_counts: list[dict[str, int]]       # per question: method -> count
    method_percentages: dict[str, float]        # average selection percentage
    participant_count: int
    completed_count: int


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


class DuplicateChoiceError(ValueError):
    pass


class StudyStore:
    """Session registry plus append-only choice log. Appends are serialized
    through one lock; reads work on in-memory snapshots."""

    def __init__(self, bundle: StudyBundle, data_dir: Path | str):
        self.bundle = bundle
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._sessions: dict[str, StudySession] = {}
        self._choices: dict[tuple[str, int], ChoiceRecord] = {}
        self._load()

    @property
    def sessions_path(self) -> Path:
        return self.data_dir / "sessions.jsonl"

    @property
    def choices_path(self) -> Path:
        return self.data_dir / "choices.jsonl"

    def _load(self) -> None:
        if self.sessions_path.exists():
            for line in self.sessions_path.read_text().splitlines():
                d = json.loads(line)
                s = StudySession(
                    session_id=d["session_id"],
                    participant_label=d.get("participant_label"),
                    orders=tuple(tuple(o) for o in d["orders"]),
                    created_at=d["created_at"],
                )
                self._sessions[s.session_id] = s
        if self.choices_path.exists():
            for line in self.choices_path.read_text().splitlines():
                d = json.loads(line)
                rec = ChoiceRecord(**d)
                self._choices[(rec.session_id, rec.question_index)] = rec

    def _append(self, path: Path, doc: dict) -> None:
        with open(path, "a") as fh:
            fh.write(json.dumps(doc) + "\n")

    def create_session(self, participant_label: str | None = None,
                       seed: int | None = None) -> StudySession:
        """New session with an independent uniform permutation of the three
        displayed positions for every question. A seed makes the permutations
        reproducible (test mode); ids are always unique."""
        rng = np.random.default_rng(seed)
        orders = tuple(
            tuple(int(v) for v in rng.permutation(3))
            for _ in range(self.bundle.question_count)
        )
        session = StudySession(
            session_id=uuid.uuid4().hex,
            participant_label=participant_label,
            orders=orders,
            created_at=_now(),
        )
        with self._lock:
            self._sessions[session.session_id] = session
            self._append(self.sessions_path, {
                "session_id": session.session_id,
                "participant_label": session.participant_label,
                "orders": [list(o) for o in session.orders],
                "created_at": session.created_at,
            })
        return session

    def get_session(self, session_id: str) -> StudySession:
        try:
            return self._sessions[session_id]
        except KeyError:
            raise KeyError(f"unknown session {session_id!r}") from None

    def answered_indices(self, session_id: str) -> list[int]:
        self.get_session(session_id)
        return sorted(q for (sid, q) in self._choices if sid == session_id)

    def get_question(self, session_id: str, question_index: int) -> dict:
        """Image references in the session's displayed order; method labels
        are withheld."""
        session = self.get_session(session_id)
        n = self.bundle.question_count
        if not 1 <= question_index <= n:
            raise IndexError(f"question index {question_index} out of range [1, {n}]")
        q = self.bundle.questions[question_index - 1]
        order = session.orders[question_index - 1]
        return {
            "question_index": question_index,
            "question_count": n,
            "images": [f"/images/{q.image_files[i]}" for i in order],
        }

    def submit_choice(self, session_id: str, question_index: int,
                      position: int) -> ChoiceRecord:
        """Record one forced choice. First valid submission wins; replaying
        the identical position is acknowledged, a different one is rejected."""
        session = self.get_session(session_id)
        n = self.bundle.question_count
        if not 1 <= question_index <= n:
            raise IndexError(f"question index {question_index} out of range [1, {n}]")
        if position not in (1, 2, 3):
            raise ValueError(f"position must be 1..3, got {position!r}")
        q = self.bundle.questions[question_index - 1]
        order = session.orders[question_index - 1]
        chosen_file = q.image_files[order[position - 1]]
        record = ChoiceRecord(
            session_id=session_id,
            question_index=question_index,
            position=position,
            chosen_method=q.method_labels[chosen_file],
            recorded_at=_now(),
        )
        with self._lock:
            existing = self._choices.get((session_id, question_index))
            if existing is not None:
                if existing.position == position:
                    return existing
                raise DuplicateChoiceError(
                    f"question {question_index} already answered for this session"
                )
            self._choices[(session_id, question_index)] = record
            self._append(self.choices_path, record.__dict__)
        return record

    def aggregate_results(self) -> StudyResults:
        """Pure fold over the choice log: per-question counts per method and
        each method's selection percentage averaged over answered questions."""
        methods = self.bundle.methods
        n = self.bundle.question_count
        counts = [{m: 0 for m in methods} for _ in range(n)]
        per_session: dict[str, int] = {}
        for (sid, qi), rec in self._choices.items():
            counts[qi - 1][rec.chosen_method] += 1
            per_session[sid] = per_session.get(sid, 0) + 1

        percent_sums = {m: 0.0 for m in methods}
        answered_questions = 0
        for qc in counts:
            total = sum(qc.values())
            if total == 0:
                continue
            answered_questions += 1
            for m in methods:
                percent_sums[m] += qc[m] / total * 100.0
        percentages = {
            m: (percent_sums[m] / answered_questions if answered_questions else 0.0)
            for m in methods
        }
        return StudyResults(
            question_counts=counts,
            method_percentages=percentages,
            participant_count=len(per_session),
            completed_count=sum(1 for v in per_session.values() if v == n),
        )


# --- module-level operation aliases over a store ---

def create_session(store: StudyStore, participant_label: str | None = None,
                   seed: int | None = None) -> StudySession:
    return store.create_session(participant_label, seed)


def get_question(store: StudyStore, session_id: str, question_index: int) -> dict:
    return store.get_question(session_id, question_index)


def submit_choice(store: StudyStore, session_id: str, question_index: int,
                  position: int) -> ChoiceRecord:
    return store.submit_choice(session_id, question_index, position)


def aggregate_results(store: StudyStore) -> StudyResults:
    return store.aggregate_results()


# --- HTTP layer ---

def _results_payload(results: StudyResults) -> dict:
    return {
        "question_counts": results.question_counts,
        "method_percentages": results.method_percentages,
        "participant_count": results.participant_count,
        "completed_count": results.completed_count,
    }


class _StudyHandler(BaseHTTPRequestHandler):
    store: StudyStore = None  # set by make_server
    ui_dir: Path | None = None

    def log_message(self, fmt, *args):  # quiet by default
        pass

    def _send_json(self, code: int, doc: dict) -> None:
        body = json.dumps(doc).encode("utf-8")
        self.send_response(code)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _send_error_json(self, code: int, error_code: str, message: str) -> None:
        self._send_json(code, {"code": error_code, "message": message})

    def _read_body(self) -> dict:
        length = int(self.headers.get("Content-Length") or 0)
        if length == 0:
            return {}
        return json.loads(self.rfile.read(length).decode("utf-8"))

    def _send_file(self, path: Path, content_type: str) -> None:
        data = path.read_bytes()
        self.send_response(200)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def do_GET(self):
        parts = [p for p in self.path.split("?")[0].split("/") if p]
        try:
            if parts == ["api", "results"]:
                self._send_json(200, _results_payload(self.store.aggregate_results()))
            elif parts == ["api", "study"]:
                self._send_json(200, {
                    "question_count": self.store.bundle.question_count,
                })
            elif len(parts) == 3 and parts[:2] == ["api", "sessions"]:
                session = self.store.get_session(parts[2])
                self._send_json(200, {
                    "session_id": session.session_id,
                    "question_count": self.store.bundle.question_count,
                    "answered": self.store.answered_indices(session.session_id),
                })
            elif len(parts) == 5 and parts[0] == "api" and parts[1] == "sessions" \
                    and parts[3] == "questions":
                self._send_json(200, self.store.get_question(parts[2], int(parts[4])))
            elif parts and parts[0] == "images" and len(parts) == 2:
                name = Path(parts[1]).name  # no traversal
                path = self.store.bundle.root / "images" / name
                if not path.is_file():
                    self._send_error_json(404, "not_found", f"no image {name}")
                    return
                self._send_file(path, "image/png")
            elif self.ui_dir is not None:
                rel = "index.html" if not parts else "/".join(parts)
                path = (self.ui_dir / rel).resolve()
                if self.ui_dir.resolve() not in path.parents and path != self.ui_dir.resolve():
                    self._send_error_json(404, "not_found", "outside ui root")
                    return
                if not path.is_file():
                    self._send_error_json(404, "not_found", f"no route {self.path}")
                    return
                ctype = {
                    ".html": "text/html", ".js": "text/javascript",
                    ".css": "text/css", ".png": "image/png", ".svg": "image/svg+xml",
                }.get(path.suffix, "application/octet-stream")
                self._send_file(path, ctype)
            else:
                self._send_error_json(404, "not_found", f"no route {self.path}")
        except KeyError as exc:
            self._send_error_json(404, "unknown_session", str(exc))
        except (IndexError, ValueError) as exc:
            self._send_error_json(400, "bad_request", str(exc))

    def do_POST(self):
        parts = [p for p in self.path.split("?")[0].split("/") if p]
        try:
            if parts == ["api", "sessions"]:
                body = self._read_body()
                session = self.store.create_session(
                    participant_label=body.get("participant_label"),
                    seed=body.get("seed"),
                )
                self._send_json(201, {
                    "session_id": session.session_id,
                    "question_count": self.store.bundle.question_count,
                })
            elif len(parts) == 6 and parts[0] == "api" and parts[1] == "sessions" \
                    and parts[3] == "questions" and parts[5] == "choice":
                body = self._read_body()
                record = self.store.submit_choice(
                    parts[2], int(parts[4]), int(body.get("position", 0))
                )
                self._send_json(200, {
                    "ok": True,
                    "question_index": record.question_index,
                    "position": record.position,
                })
            else:
                self._send_error_json(404, "not_found", f"no route {self.path}")
        except KeyError as exc:
            self._send_error_json(404, "unknown_session", str(exc))
        except DuplicateChoiceError as exc:
            self._send_error_json(409, "already_answered", str(exc))
        except (IndexError, ValueError) as exc:
            self._send_error_json(400, "bad_request", str(exc))


def make_server(bundle_dir: Path | str, data_dir: Path | str,
                host: str = "127.0.0.1", port: int = 8765,
                ui_dir: Path | str | None = None) -> ThreadingHTTPServer:
    """Build (but do not start) the HTTP server; `serve_forever()` runs it."""
    store = StudyStore(load_bundle(bundle_dir), data_dir)
    handler = type("BoundStudyHandler", (_StudyHandler,), {
        "store": store,
        "ui_dir": Path(ui_dir) if ui_dir else None,
    })
    return ThreadingHTTPServer((host, port), handler)
