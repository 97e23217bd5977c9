"""Blinded double-reading service: case assignment, judgments, arbitration.

Sessions are event-sourced: every state change appends one JSON line to the
session's log, and replaying the log reconstructs the exact session state.
Reader-facing payloads never contain reference labels or clinical fields.
"""

from __future__ import annotations

import io
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pydantic

from .metrics import AgreementMatrix, classification_metrics, cohen_kappa
from .volume import Volume, load_volume


class SessionError(ValueError):
    pass


class PermissionDenied(SessionError):
    pass


class NotFound(SessionError):
    pass


class StateError(SessionError):
    pass


@dataclass
class Case:
    case_id: str
    volume_path: str
    reference_label: bool
    _volume: Volume | None = field(default=None, repr=False)

    def volume(self) -> Volume:
        if self._volume is None:
            self._volume = load_volume(self.volume_path)
        return self._volume


@dataclass
class ReadingSession:
    session_id: str
    case_ids: list[str]
    primary_readers: list[str]
    arbitrator: str
    seed: int
    reader_order: dict[str, list[str]] = field(default_factory=dict)
    judgments: dict[tuple[str, str], dict] = field(default_factory=dict)
    arbitrations: dict[str, dict] = field(default_factory=dict)

    def case_status(self, case_id: str) -> str:
        calls = [self.judgments.get((case_id, r)) for r in self.primary_readers]
        if case_id in self.arbitrations:
            return "arbitrated"
        if any(c is None for c in calls):
            return "unread"
        return "read" if calls[0]["call"] == calls[1]["call"] else "conflicting"

    def final_call(self, case_id: str) -> str | None:
        status = self.case_status(case_id)
        if status == "arbitrated":
            return self.arbitrations[case_id]["call"]
        if status == "read":
            return self.judgments[(case_id, self.primary_readers[0])]["call"]
        return None

    def next_unread(self, reader_id: str) -> str | None:
        for cid in self.reader_order[reader_id]:
            if (cid, reader_id) not in self.judgments:
                return cid
        return None


def create_session(session_id: str, case_ids: list[str], primary_readers: list[str],
                   arbitrator: str, seed: int) -> ReadingSession:
    if not case_ids:
        raise SessionError("session needs at least one case")
    if len(primary_readers) != 2:
        raise SessionError("exactly two primary readers required")
    roster = primary_readers + [arbitrator]
    if len(set(roster)) != len(roster):
        raise SessionError(f"duplicate reader ids in roster {roster}")
    session = ReadingSession(session_id=session_id, case_ids=list(case_ids),
                             primary_readers=list(primary_readers),
                             arbitrator=arbitrator, seed=seed)
    for k, reader in enumerate(primary_readers):
        rng = np.random.default_rng([seed, k])
        order = list(case_ids)
        rng.shuffle(order)
        session.reader_order[reader] = order
    return session


def record_judgment(session: ReadingSession, case_id: str, reader_id: str,
                    call: str, confidence: int | None = None,
                    timestamp: float | None = None) -> str:
    if case_id not in session.case_ids:
        raise NotFound(f"unknown case {case_id}")
    if reader_id == session.arbitrator:
        raise PermissionDenied("arbitrator submits via the arbitration endpoint")
    if reader_id not in session.primary_readers:
        raise PermissionDenied(f"reader {reader_id} is not assigned to this session")
    if call not in ("positive", "negative"):
        raise SessionError(f"call must be positive or negative, got {call!r}")
    if (case_id, reader_id) in session.judgments:
        raise StateError(f"reader {reader_id} already judged case {case_id}")
    if confidence is not None and not (1 <= confidence <= 5):
        raise SessionError("confidence must be in 1..5")
    session.judgments[(case_id, reader_id)] = {
        "call": call, "confidence": confidence,
        "timestamp": timestamp if timestamp is not None else time.time(),
    }
    return session.case_status(case_id)


def record_arbitration(session: ReadingSession, case_id: str, arbitrator_id: str,
                       call: str, timestamp: float | None = None) -> str:
    if case_id not in session.case_ids:
        raise NotFound(f"unknown case {case_id}")
    if arbitrator_id != session.arbitrator:
        raise PermissionDenied(f"{arbitrator_id} is not the session arbitrator")
    if call not in ("positive", "negative"):
        raise SessionError(f"call must be positive or negative, got {call!r}")
    if session.case_status(case_id) != "conflicting":
        raise StateError(f"case {case_id} is not conflicting")
    session.arbitrations[case_id] = {
        "call": call, "timestamp": timestamp if timestamp is not None else time.time(),
    }
    return call


def session_report(session: ReadingSession, reference: dict[str, bool]) -> dict:
    unresolved = [cid for cid in session.case_ids
                  if session.case_status(cid) not in ("read", "arbitrated")]
    if unresolved:
        raise StateError(f"unresolved cases: {unresolved}")
    final = {cid: session.final_call(cid) == "positive" for cid in session.case_ids}
    ref = [reference[cid] for cid in session.case_ids]
    pred = [final[cid] for cid in session.case_ids]
    matrix = AgreementMatrix.from_calls(ref, pred)
    r1, r2 = session.primary_readers
    inter = AgreementMatrix.from_calls(
        [session.judgments[(cid, r1)]["call"] == "positive" for cid in session.case_ids],
        [session.judgments[(cid, r2)]["call"] == "positive" for cid in session.case_ids],
    )
    metrics = classification_metrics(
        np.asarray([1.0 if p else 0.0 for p in pred]), np.asarray(ref))
    metrics.pop("auc")  # binary calls carry no ranking information
    return {
        "n_cases": len(session.case_ids),
        "n_arbitrated": len(session.arbitrations),
        "matrix": [list(row) for row in matrix.counts],
        "kappa": cohen_kappa(matrix),
        "inter_reader_kappa": cohen_kappa(inter),
        **metrics,
    }


# ---------------------------------------------------------------------------
# Event log


def append_event(log_path: Path, event: dict) -> None:
    with log_path.open("a") as f:
        f.write(json.dumps(event, sort_keys=True) + "\n")


def replay_events(events: list[dict]) -> ReadingSession:
    if not events or events[0]["type"] != "session_created":
        raise SessionError("log must start with session_created")
    head = events[0]
    session = create_session(head["session_id"], head["case_ids"],
                             head["primary_readers"], head["arbitrator"], head["seed"])
    for ev in events[1:]:
        if ev["type"] == "judgment":
            record_judgment(session, ev["case_id"], ev["reader_id"], ev["call"],
                            ev.get("confidence"), ev["timestamp"])
        elif ev["type"] == "arbitration":
            record_arbitration(session, ev["case_id"], ev["arbitrator_id"], ev["call"],
                               ev["timestamp"])
        else:
            raise SessionError(f"unknown event type {ev['type']!r}")
    return session


def replay_log(log_path: Path) -> ReadingSession:
    events = [json.loads(line) for line in log_path.read_text().splitlines() if line.strip()]
    return replay_events(events)


# ---------------------------------------------------------------------------
# Slice rendering


def _pseudocolor(t: np.ndarray) -> np.ndarray:
    """Fixed blue->cyan->yellow->red map over [0, 1] (documented in README)."""
    r = np.clip(np.interp(t, [0.0, 0.35, 0.65, 1.0], [0.0, 0.0, 1.0, 1.0]), 0, 1)
    g = np.clip(np.interp(t, [0.0, 0.35, 0.65, 1.0], [0.0, 1.0, 1.0, 0.0]), 0, 1)
    b = np.clip(np.interp(t, [0.0, 0.35, 0.65, 1.0], [1.0, 1.0, 0.0, 0.0]), 0, 1)
    return (np.stack([r, g, b], axis=-1) * 255).astype(np.uint8)


_AXIS_INDEX = {"sagittal": 0, "coronal": 1, "axial": 2}


def serve_slice(volume: Volume, axis: str, index: int, display: str = "gray") -> bytes:
    """Render one slice as PNG; intensities are range-normalized per volume."""
    if axis not in _AXIS_INDEX:
        raise SessionError(f"axis must be one of {sorted(_AXIS_INDEX)}, got {axis!r}")
    ax = _AXIS_INDEX[axis]
    if not (0 <= index < volume.dims[ax]):
        raise NotFound(f"index {index} out of range for axis {axis} "
                       f"(extent {volume.dims[ax]})")
    if display not in ("gray", "pseudocolor"):
        raise SessionError(f"display must be gray or pseudocolor, got {display!r}")
    data = volume.data
    lo, hi = float(data.min()), float(data.max())
    norm = (data - lo) / (hi - lo) if hi > lo else np.zeros_like(data)
    sl = np.take(norm, index, axis=ax)
    from PIL import Image

    if display == "gray":
        img = Image.fromarray((sl.T * 255).astype(np.uint8), mode="L")
    else:
        img = Image.fromarray(_pseudocolor(sl.T), mode="RGB")
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


# ---------------------------------------------------------------------------
# HTTP app


def load_case_manifest(path: str | Path) -> list[Case]:
    manifest = json.loads(Path(path).read_text())
    cases = [Case(case_id=c["case_id"], volume_path=c["volume"],
                  reference_label=bool(c["reference_label"]))
             for c in manifest.get("cases", [])]
    if not cases:
        raise SessionError(f"manifest {path} contains no cases")
    base = Path(path).parent
    for c in cases:
        if not Path(c.volume_path).is_absolute():
            c.volume_path = str(base / c.volume_path)
    return cases


class SessionRequest(pydantic.BaseModel):
    session_id: str
    case_ids: list[str] | None = None
    primary_readers: list[str]
    arbitrator: str
    seed: int = 0


class JudgmentRequest(pydantic.BaseModel):
    session_id: str
    case_id: str
    reader_id: str
    call: str
    confidence: int | None = None


class ArbitrationRequest(pydantic.BaseModel):
    session_id: str
    case_id: str
    arbitrator_id: str
    call: str


def create_app(cases: list[Case], log_dir: str | Path):
    from fastapi import FastAPI, HTTPException, Response

    log_dir = Path(log_dir)
    log_dir.mkdir(parents=True, exist_ok=True)
    case_index = {c.case_id: c for c in cases}
    sessions: dict[str, ReadingSession] = {}

    # rebuild any sessions persisted from a previous run
    for log_path in sorted(log_dir.glob("session_*.jsonl")):
        s = replay_log(log_path)
        sessions[s.session_id] = s

    app = FastAPI(title="petsynth blinded reading service")

    def _log_path(session_id: str) -> Path:
        return log_dir / f"session_{session_id}.jsonl"

    def _get_session(session_id: str) -> ReadingSession:
        if session_id not in sessions:
            raise HTTPException(404, f"unknown session {session_id}")
        return sessions[session_id]

    def _translate(e: Exception) -> HTTPException:
        if isinstance(e, NotFound):
            return HTTPException(404, str(e))
        if isinstance(e, PermissionDenied):
            return HTTPException(403, str(e))
        if isinstance(e, StateError):
            return HTTPException(409, str(e))
        return HTTPException(400, str(e))

    @app.get("/sessions")
    def list_sessions():
        return {"sessions": [
            {"session_id": s.session_id, "n_cases": len(s.case_ids),
             "resolved": sum(1 for c in s.case_ids if s.case_status(c) in ("read", "arbitrated"))}
            for s in sessions.values()
        ]}

    @app.post("/sessions")
    def post_session(req: SessionRequest):
        if req.session_id in sessions:
            raise HTTPException(409, f"session {req.session_id} already exists")
        case_ids = req.case_ids if req.case_ids is not None else sorted(case_index)
        unknown = [c for c in case_ids if c not in case_index]
        if unknown:
            raise HTTPException(400, f"unknown cases: {unknown}")
        try:
            session = create_session(req.session_id, case_ids, req.primary_readers,
                                     req.arbitrator, req.seed)
        except SessionError as e:
            raise _translate(e)
        sessions[req.session_id] = session
        append_event(_log_path(req.session_id), {
            "type": "session_created", "session_id": req.session_id, "case_ids": case_ids,
            "primary_readers": req.primary_readers, "arbitrator": req.arbitrator,
            "seed": req.seed,
        })
        return {"session_id": req.session_id, "n_cases": len(case_ids)}

    @app.get("/sessions/{session_id}/next")
    def get_next(session_id: str, reader: str):
        session = _get_session(session_id)
        if reader not in session.primary_readers:
            raise HTTPException(403, f"reader {reader} is not a primary reader")
        done = sum(1 for c in session.case_ids if (c, reader) in session.judgments)
        cid = session.next_unread(reader)
        payload = {"progress": {"read": done, "total": len(session.case_ids)}}
        if cid is None:
            payload["case"] = None
        else:
            c = case_index[cid]
            vol = c.volume()
            payload["case"] = {"case_id": cid, "dims": list(vol.dims)}
        return payload

    @app.get("/sessions/{session_id}/conflicts")
    def get_conflicts(session_id: str):
        session = _get_session(session_id)
        out = []
        for cid in session.case_ids:
            if session.case_status(cid) == "conflicting":
                calls = sorted(session.judgments[(cid, r)]["call"]
                               for r in session.primary_readers)
                out.append({"case_id": cid, "dims": list(case_index[cid].volume().dims),
                            "primary_calls": calls})
        return {"conflicts": out}

    @app.get("/cases/{case_id}/slice")
    def get_slice(case_id: str, axis: str, index: int, display: str = "gray"):
        if case_id not in case_index:
            raise HTTPException(404, f"unknown case {case_id}")
        try:
            png = serve_slice(case_index[case_id].volume(), axis, index, display)
        except SessionError as e:
            raise _translate(e)
        return Response(content=png, media_type="image/png")

    @app.post("/judgments")
    def post_judgment(req: JudgmentRequest):
        session = _get_session(req.session_id)
        ts = time.time()
        try:
            status = record_judgment(session, req.case_id, req.reader_id, req.call,
                                     req.confidence, ts)
        except SessionError as e:
            raise _translate(e)
        append_event(_log_path(req.session_id), {
            "type": "judgment", "session_id": req.session_id, "case_id": req.case_id,
            "reader_id": req.reader_id, "call": req.call,
            "confidence": req.confidence, "timestamp": ts,
        })
        return {"case_id": req.case_id, "status": status}

    @app.post("/arbitrations")
    def post_arbitration(req: ArbitrationRequest):
        session = _get_session(req.session_id)
        ts = time.time()
        try:
            final = record_arbitration(session, req.case_id, req.arbitrator_id, req.call, ts)
        except SessionError as e:
            raise _translate(e)
        append_event(_log_path(req.session_id), {
            "type": "arbitration", "session_id": req.session_id, "case_id": req.case_id,
            "arbitrator_id": req.arbitrator_id, "call": req.call, "timestamp": ts,
        })
        return {"case_id": req.case_id, "final_call": final, "status": "arbitrated"}

    @app.get("/sessions/{session_id}/report")
    def get_report(session_id: str):
        session = _get_session(session_id)
        reference = {c.case_id: c.reference_label for c in cases
                     if c.case_id in set(session.case_ids)}
        try:
            report = session_report(session, reference)
        except SessionError as e:
            raise _translate(e)
        # degenerate cohorts (single-class) yield NaN rates; JSON has no NaN
        return {k: (None if isinstance(v, float) and not np.isfinite(v) else v)
                for k, v in report.items()}

    return app
