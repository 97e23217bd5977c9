#!/usr/bin/env python3
"""Record reader-service HTTP responses as fixtures for the UI contract tests.

Runs the service in-process against a 10-case phantom manifest, scripts a
two-reader session with three injected disagreements plus arbitration, and
dumps every response the UI would see to frontend/tests/fixtures/session.json.
"""

import argparse
import json
import tempfile
from pathlib import Path

import numpy as np
from fastapi.testclient import TestClient

from petsynth.cohort import PhantomConfig, write_phantom_cohort
from petsynth.reader_service import create_app, load_case_manifest


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default=str(Path(__file__).resolve().parents[1]
                                         / "frontend" / "tests" / "fixtures"))
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    work = Path(tempfile.mkdtemp(prefix="ui_fixtures_"))
    write_phantom_cohort(PhantomConfig(n_subjects=10, dims=(16, 16, 16),
                                       seed=args.seed), work)
    header, *rows = (work / "cohort.csv").read_text().splitlines()
    cols = header.split(",")
    manifest = {"cases": []}
    for row in rows:
        cells = dict(zip(cols, row.split(",")))
        manifest["cases"].append({"case_id": cells["id"], "volume": cells["pet_path"],
                                  "reference_label": cells["abeta_positive"] == "1"})
    (work / "manifest.json").write_text(json.dumps(manifest, indent=2))
    cases = load_case_manifest(work / "manifest.json")
    reference = {c.case_id: c.reference_label for c in cases}

    app = create_app(cases, work / "logs")
    client = TestClient(app)
    fx: dict = {}

    r = client.post("/sessions", json={"session_id": "fixture", "primary_readers":
                                       ["reader_a", "reader_b"], "arbitrator": "arbiter",
                                       "seed": args.seed})
    r.raise_for_status()
    fx["session_created"] = r.json()
    fx["sessions_list"] = client.get("/sessions").json()

    rng = np.random.default_rng(args.seed)
    case_ids = sorted(reference)
    disagree = set(rng.choice(case_ids, size=3, replace=False))
    fx["disagree_case_ids"] = sorted(disagree)

    fx["next"] = {"reader_a": [], "reader_b": []}
    fx["judgments"] = []
    for reader in ("reader_a", "reader_b"):
        while True:
            nxt = client.get("/sessions/fixture/next", params={"reader": reader}).json()
            fx["next"][reader].append(nxt)
            if nxt["case"] is None:
                break
            cid = nxt["case"]["case_id"]
            call = "positive" if reference[cid] else "negative"
            if reader == "reader_b" and cid in disagree:
                call = "negative" if reference[cid] else "positive"
            resp = client.post("/judgments", json={"session_id": "fixture", "case_id": cid,
                                                   "reader_id": reader, "call": call})
            resp.raise_for_status()
            fx["judgments"].append({"request": {"case_id": cid, "reader_id": reader,
                                                "call": call},
                                    "response": resp.json()})

    fx["conflicts_before"] = client.get("/sessions/fixture/conflicts").json()
    fx["report_unresolved"] = {
        "status": client.get("/sessions/fixture/report").status_code,
        "body": client.get("/sessions/fixture/report").json(),
    }
    fx["arbitrations"] = []
    fx["conflicts_after_each"] = []
    for cid in sorted(disagree):
        call = "positive" if reference[cid] else "negative"
        resp = client.post("/arbitrations", json={"session_id": "fixture", "case_id": cid,
                                                  "arbitrator_id": "arbiter", "call": call})
        resp.raise_for_status()
        fx["arbitrations"].append({"request": {"case_id": cid, "call": call},
                                   "response": resp.json()})
        fx["conflicts_after_each"].append(client.get("/sessions/fixture/conflicts").json())

    dup = client.post("/arbitrations", json={"session_id": "fixture",
                                             "case_id": sorted(disagree)[0],
                                             "arbitrator_id": "arbiter", "call": "positive"})
    fx["arbitration_resolved_error"] = {"status": dup.status_code, "body": dup.json()}
    fx["report"] = client.get("/sessions/fixture/report").json()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "session.json").write_text(json.dumps(fx, indent=2) + "\n")
    print(f"wrote {out / 'session.json'} "
          f"({len(fx['judgments'])} judgments, {len(fx['arbitrations'])} arbitrations)")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
