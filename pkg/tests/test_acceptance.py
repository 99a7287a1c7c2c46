"""Acceptance suite: one test per release criterion, one printed line each.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
lines alongside pytest's own pass/fail report.
"""

import io
import json
import random
import re
import socket
import subprocess
import sys
import threading
import time
import unicodedata

import httpx
import pytest
from scipy.stats import chi2

from conftest import World

from signcollect.annotation import AnnotationTrack, Segment, TrackKind, validate_track
from signcollect.assignment import TaskAssigner, TaskKind
from signcollect.blobstore import LocalStore, S3Store, key_for
from signcollect.domain import (
    LifecycleEvent,
    LifecycleState,
    TrimWindow,
    replay,
    transition,
)
from signcollect.errors import (
    FrameMismatchError,
    IllegalTransition,
    NotFoundError,
    StaleError,
    TooLargeError,
)
from signcollect.export import (
    attach_keypoints,
    build_manifest_entries,
    compute_stats,
)
from signcollect.keypoints import check_alignment
from signcollect.prompts import parse_prompt_csv, ingest_csv
from signcollect.srt import parse_srt, render_srt
from signcollect.workflow import VideoValidation, VideoVerdict

from minis3 import MiniS3Server
from test_keypoints import sidecar_bytes

S = LifecycleState
E = LifecycleEvent


def report(n, label):
    print(f"\ncriterion {n:2d} PASS — {label}")


# ---------------------------------------------------------------- criterion 1

def test_criterion_1_state_machine():
    started = time.perf_counter()

    hand_table = {
        ("PendingVideoValidation", "VideoVerdictCorrect"): "PendingAnnotation",
        ("PendingVideoValidation", "VideoVerdictIncorrect"): "VideoRejected",
        ("PendingAnnotation", "AnnotationSubmitted"): "PendingAnnotationValidation",
        ("PendingAnnotationValidation", "AnnotationVerdictAccepted"): "AnnotationValidated",
        ("PendingAnnotationValidation", "AnnotationVerdictCorrected"): "AnnotationValidated",
        ("VideoRejected", "Requeue"): "PendingVideoValidation",
    }
    legal = 0
    for state in S:
        for event in E:
            expected = hand_table.get((state.value, event.value))
            if expected is None:
                with pytest.raises(IllegalTransition):
                    transition(state, event)
            else:
                assert transition(state, event).value == expected
                legal += 1
    assert legal == 6

    # 1,000 randomized legal runs replayed through the audit path
    rng = random.Random(11)
    events_by_state = {}
    for (state, event), _ in (((s, e), None) for s in S for e in E):
        try:
            transition(state, event)
        except IllegalTransition:
            continue
        events_by_state.setdefault(state, []).append(event)

    for _ in range(1000):
        log = [E.VIDEO_SUBMITTED]
        state = S.PENDING_VIDEO_VALIDATION
        for _ in range(rng.randint(0, 12)):
            options = events_by_state.get(state)
            if not options:
                break
            event = rng.choice(options)
            log.append(event)
            state = transition(state, event)
        assert replay(log) is state

    elapsed = time.perf_counter() - started
    assert elapsed < 1.0, f"took {elapsed:.3f}s"
    report(1, f"state machine: 6 legal / 29 illegal pairs, 1000 replays in {elapsed:.3f}s")


# ---------------------------------------------------------------- criterion 2

GOLDEN_CSV_ROWS = [
    ("আমি আগামীকাল বেড়াতে যাবো,text,bn-BdSL", "accept"),
    ('"পাঁচ, ছয়, সাত নম্বর",text,bn-BdSL', "accept"),
    ("An English sentence.,text,en-ASL", "accept"),
    ("দৈনন্দিন জীবন,topic,bn-BdSL", "accept"),
    ("hello,video,en-ASL", "E_BAD_TYPE"),
    (",text,bn-BdSL", "E_EMPTY_CONTENT"),
    ("bad lang,text,notalang", "E_BAD_LANGUAGE"),
    ("short,text", "E_BAD_COLUMN_COUNT"),
    ("আমি আগামীকাল বেড়াতে যাবো,text,bn-BdSL", "duplicate"),
    ("ghost,text,xx-Ghost", "E_UNKNOWN_LANGUAGE"),
]


def test_criterion_2_csv_ingest(tmp_path):
    started = time.perf_counter()
    world = World(tmp_path)
    data = ("content,content_type,language\n" +
            "\n".join(row for row, _ in GOLDEN_CSV_ROWS) + "\n").encode()

    report_obj = ingest_csv(world.db, data)

    # brute-force oracle: classify each row independently of the parser
    expected_accept = sum(1 for _, kind in GOLDEN_CSV_ROWS if kind == "accept")
    expected_dupes = sum(1 for _, kind in GOLDEN_CSV_ROWS if kind == "duplicate")
    expected_errors = {
        i + 2: kind for i, (_, kind) in enumerate(GOLDEN_CSV_ROWS)
        if kind not in ("accept", "duplicate")
    }
    assert report_obj.accepted == expected_accept
    assert report_obj.duplicates_skipped == expected_dupes
    assert {e.row_number: e.code.value for e in report_obj.errors} == expected_errors
    assert (report_obj.accepted + report_obj.duplicates_skipped + len(report_obj.errors)
            == len(GOLDEN_CSV_ROWS))

    # quoted comma survived intact
    drafts, _ = parse_prompt_csv(data)
    assert any(d.content == "পাঁচ, ছয়, সাত নম্বর" for d in drafts)

    elapsed = time.perf_counter() - started
    assert elapsed < 1.0, f"took {elapsed:.3f}s"
    report(2, f"csv ingest reconciled row-by-row in {elapsed:.3f}s")


# ---------------------------------------------------------------- criterion 3

def test_criterion_3_annotation_properties():
    from test_annotation import independent_check, random_world

    started = time.perf_counter()

    # the four-gloss transcript example, verbatim
    segs = (
        Segment(0, 2000, "আমি"),
        Segment(2100, 4500, "আগামীকাল"),
        Segment(4600, 8000, "বেড়াতে"),
        Segment(8100, 11000, "যাবো"),
    )
    track = AnnotationTrack(TrackKind.GLOSS, segs)
    assert validate_track(track, TrimWindow(0, 13374), "আমি আগামীকাল বেড়াতে যাবো") == []

    rng = random.Random(303)
    for _ in range(1000):
        t, trim, reference = random_world(rng)
        assert (validate_track(t, trim, reference) == []) == independent_check(t, trim, reference)

    elapsed = time.perf_counter() - started
    assert elapsed < 5.0, f"took {elapsed:.3f}s"
    report(3, f"1000 tracks agree with independent checker in {elapsed:.3f}s")


# ---------------------------------------------------------------- criterion 4

def test_criterion_4_subtitle_round_trip():
    from test_srt import random_track

    started = time.perf_counter()

    golden = [
        (
            AnnotationTrack(TrackKind.GLOSS, (Segment(0, 1500, "আমি"),)),
            TrimWindow(0, 2000),
            "1\n00:00:00,000 --> 00:00:01,500\nআমি\n\n",
        ),
        (
            AnnotationTrack(TrackKind.GLOSS, (Segment(61_000, 3_661_250, "x"),)),
            TrimWindow(0, 4_000_000),
            "1\n00:01:01,000 --> 01:01:01,250\nx\n\n",
        ),
        (
            AnnotationTrack(
                TrackKind.SENTENCE,
                (Segment(1000, 2000, "A."), Segment(2500, 4000, "B?")),
            ),
            TrimWindow(1000, 5000),
            "1\n00:00:00,000 --> 00:00:01,000\nA.\n\n2\n00:00:01,500 --> 00:00:03,000\nB?\n\n",
        ),
    ]
    for track, trim, expected in golden:
        assert render_srt(track, trim) == expected

    rng = random.Random(404)
    for _ in range(500):
        track = random_track(rng)
        trim = TrimWindow(0, 100_000)
        assert parse_srt(render_srt(track, trim)) == list(track.segments)

    elapsed = time.perf_counter() - started
    assert elapsed < 2.0, f"took {elapsed:.3f}s"
    report(4, f"500 round trips + 3 byte-exact goldens in {elapsed:.3f}s")


# ---------------------------------------------------------------- criterion 5

def test_criterion_5_statistics_oracle(tmp_path):
    from test_export import drive_to_validated

    world = World(tmp_path)
    world.add_user("signer-7f3a")
    world.add_user("val1-9b2c")
    world.add_user("val2-4e8d")
    world.add_user("ann1-6a5f")

    rng = random.Random(505)
    vocab = ["আমি", "তুমি", "সে", "ভালো", "মন্দ", "যাই", "আসি", "দেখি", "শুনি", "বলি"]
    for i in range(100):
        words = [rng.choice(vocab) for _ in range(rng.randint(1, 12))]
        text = " ".join(words) + f" ক্রম{i}।"
        pid = world.add_prompt(text)
        drive_to_validated(world, "signer-7f3a", pid, text,
                           duration_ms=rng.randint(2000, 40000))

    entries = [e for e, _ in build_manifest_entries(world.db, world.config)]
    assert len(entries) == 100
    stats = compute_stats(entries)

    # independent recount
    def recount_tokens(text):
        toks = []
        for w in text.split():
            w = w.strip("।?!.,;:")
            if w:
                toks.append(unicodedata.normalize("NFC", w).casefold())
        return toks

    total, vocab_set, ms = 0, set(), 0
    for e in entries:
        toks = recount_tokens(e.transcript)
        total += len(toks)
        vocab_set.update(toks)
        ms += e.trim_end_ms - e.trim_start_ms

    assert stats.recording_count == 100
    assert stats.total_words == total
    assert stats.unique_words == len(vocab_set)
    assert abs(stats.avg_words_per_recording - total / 100) < 1e-9
    assert abs(stats.avg_duration_s - ms / 1000 / 100) < 1e-9
    assert abs(stats.total_duration_hours - ms / 3_600_000) < 1e-9

    empty = compute_stats([])
    assert empty.avg_words_per_recording is None and empty.avg_duration_s is None

    line = dict(l.split(": ") for l in stats.lines())["avg_words_per_recording"]
    assert re.fullmatch(r"\d+\.\d{3}", line), line

    report(5, "stats equal independent recount exactly; 3-decimal output")


# ---------------------------------------------------------------- criterion 6

def test_criterion_6_assignment_fairness(tmp_path):
    world = World(tmp_path / "fair")
    user = world.add_user("drawer")
    for i in range(3):
        world.add_prompt(f"প্রম্পট {i}")
    assigner = TaskAssigner(world.db, world.config, rng=random.Random(606))

    draws = 30_000
    counts = {}
    for _ in range(draws):
        task = assigner.next_task(user, TaskKind.RECORD)
        counts[task.prompt.id] = counts.get(task.prompt.id, 0) + 1

    expected = draws / 3
    statistic = sum((n - expected) ** 2 / expected for n in counts.values())
    critical = chi2.ppf(0.99, df=2)
    assert statistic < critical, f"chi2 {statistic:.2f} >= {critical:.2f}"
    assert all(abs(n - expected) <= 300 for n in counts.values()), counts

    # zero self-validation assignments across 10,000 randomized world states
    world2 = World(tmp_path / "selfcheck")
    rng = random.Random(607)
    users = [world2.add_user(f"w{i}") for i in range(6)]
    prompts = [world2.add_prompt(f"বাক্য {i}") for i in range(8)]
    assigner2 = TaskAssigner(world2.db, world2.config, rng=rng)
    recordings = {}

    checks = 0
    while checks < 10_000:
        # mutate the world a little
        if rng.random() < 0.3 or not recordings:
            signer = rng.choice(users)
            rec = world2.record(signer.id, rng.choice(prompts), blob=rng.randbytes(6))
            recordings[rec.id] = signer.id
        user = rng.choice(users)
        kind = rng.choice([TaskKind.VALIDATE_VIDEO, TaskKind.VALIDATE_ANNOTATION])
        task = assigner2.next_task(user, kind)
        if task is not None and task.recording_id in recordings:
            assert recordings[task.recording_id] != user.id, "self-validation assigned"
        checks += 1

    report(6, f"chi2 {statistic:.2f} < {critical:.2f}; 10,000 self-exclusion checks clean")


# ---------------------------------------------------------------- criterion 7

def test_criterion_7_concurrency_and_idempotency(tmp_path):
    world = World(tmp_path)
    signer = world.add_user("signer-main")
    validators = [world.add_user(f"v{i:02d}") for i in range(16)]
    prompt_id = world.add_prompt("প্রতিযোগিতা বাক্য।")

    iterations = 100
    for i in range(iterations):
        rec = world.record("signer-main", prompt_id, blob=f"race-{i}".encode())
        barrier = threading.Barrier(16)
        outcomes = []

        def contend(validator_id, idem_key):
            verdict = VideoVerdict.CORRECT if hash(idem_key) % 2 else VideoVerdict.INCORRECT
            barrier.wait()
            try:
                state = world.engine.submit_video_validation(
                    VideoValidation(rec.id, validator_id, verdict), idem=idem_key
                )
                outcomes.append(("win", validator_id, idem_key, state))
            except StaleError:
                outcomes.append(("stale", validator_id, idem_key, None))

        threads = [
            threading.Thread(target=contend, args=(v.id, f"race-{i}-{v.id}"))
            for v in validators
        ]
        for t in threads:
            t.start()
        for t in threads:
            t.join()

        wins = [o for o in outcomes if o[0] == "win"]
        stales = [o for o in outcomes if o[0] == "stale"]
        assert len(wins) == 1, f"iteration {i}: {len(wins)} winners"
        assert len(stales) == 15

        # replaying the winning submission must change no row counts
        _, winner_id, idem_key, state = wins[0]
        before = world.row_counts()
        verdict = VideoVerdict.CORRECT if hash(idem_key) % 2 else VideoVerdict.INCORRECT
        replayed = world.engine.submit_video_validation(
            VideoValidation(rec.id, winner_id, verdict), idem=idem_key
        )
        assert replayed == state
        assert world.row_counts() == before

    report(7, f"{iterations} iterations: single winner, 15 stale, replay is a no-op")


# ---------------------------------------------------------------- criterion 8

def _conformance(store):
    blob = b"conformance bytes " * 64
    key = store.put(blob, ".webm")
    assert store.get(key) == blob
    assert store.exists(key)
    assert store.put(blob, ".webm") == key

    empty_key = store.put(b"", ".webm")
    assert empty_key == (
        "videos/e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855.webm"
    )

    with pytest.raises(NotFoundError):
        store.get("videos/" + "f" * 64 + ".mp4")

    class Exploding(io.RawIOBase):
        def __init__(self):
            self.sent = False

        def read(self, n=-1):
            if self.sent:
                raise ConnectionError("aborted mid-stream")
            self.sent = True
            return b"partial bytes"

    aborted_key = key_for(b"partial bytes", ".webm")
    with pytest.raises(ConnectionError):
        store.put(Exploding(), ".webm")
    assert not store.exists(aborted_key)

    with pytest.raises(TooLargeError):
        store.put(b"x" * (store.max_bytes + 1), ".webm")


def test_criterion_8_storage_conformance(tmp_path):
    local = LocalStore(tmp_path / "objects", max_bytes=1024 * 1024)
    _conformance(local)

    server = MiniS3Server().start()
    try:
        remote = S3Store(server.endpoint, "conformance", key_id="k", secret="s",
                         max_bytes=1024 * 1024)
        _conformance(remote)
    finally:
        server.stop()

    report(8, "identical black-box suite green on local and s3-compatible backends")


# ---------------------------------------------------------------- criterion 9

def _free_port():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def _wait_for(base, timeout=15.0):
    deadline = time.time() + timeout
    while time.time() < deadline:
        try:
            httpx.get(base + "/api/v1/stats", timeout=1.0)
            return
        except httpx.HTTPError:
            time.sleep(0.1)
    raise TimeoutError("server never came up")


def test_criterion_9_end_to_end_small_world(tmp_path):
    started = time.perf_counter()
    port = _free_port()
    config_path = tmp_path / "deploy.conf"
    config_path.write_text(
        f"db_path = {tmp_path / 'world.db'}\n"
        f"store_root = {tmp_path / 'objects'}\n"
        f"listen_port = {port}\n"
        "topic_sentence_count = 2\n"
    )
    cli = [sys.executable, "-m", "signcollect.cli"]
    subprocess.run(
        cli + ["useradd", "root", "--password", "rootpassword", "--roles", "admin",
               "--config", str(config_path)],
        check=True, capture_output=True,
    )

    server = subprocess.Popen(
        cli + ["serve", "--config", str(config_path)],
        stdout=subprocess.PIPE, stderr=subprocess.STDOUT,
    )
    base = f"http://127.0.0.1:{port}"
    try:
        _wait_for(base)
        client = httpx.Client(base_url=base, timeout=10.0)

        def login(handle, password):
            resp = client.post("/api/v1/sessions", json={"handle": handle, "password": password})
            assert resp.status_code == 200, resp.text
            return {"Authorization": f"Bearer {resp.json()['token']}"}

        admin = login("root", "rootpassword")

        # 20 prompts: 15 text, 5 topic
        text_prompts = [f"বাক্য নম্বর {i} লিখে রাখো।" for i in range(15)]
        rows = [f"{t},text,bn-BdSL" for t in text_prompts]
        rows += [f"বিষয় নম্বর {i},topic,bn-BdSL" for i in range(5)]
        csv = "content,content_type,language\n" + "\n".join(rows) + "\n"
        resp = client.post("/api/v1/prompts", content=csv.encode(), headers=admin)
        assert resp.json()["accepted"] == 20, resp.text

        # a pilot group of three signers holding every role
        tokens = {}
        for name in ("mem1", "mem2", "mem3"):
            resp = client.post("/api/v1/users", json={
                "handle": name, "password": f"{name}-password",
                "selected_language": "bn-BdSL",
                "roles": ["contributor", "validator", "annotator"],
                "age": 30, "gender": "other", "locality": "ঢাকা",
            })
            assert resp.status_code == 201, resp.text
            tokens[name] = login(name, f"{name}-password")
        members = list(tokens)

        prompts = {}
        for handle in members:
            while True:
                task = client.get("/api/v1/tasks/record", headers=tokens[handle])
                if task.status_code == 204:
                    break
                body = task.json()
                prompts.setdefault(body["prompt"]["id"], body["prompt"])
                if len(prompts) == 20:
                    break
            if len(prompts) == 20:
                break
        assert len(prompts) == 20

        validated, rejected, parked = [], [], []
        for idx, (prompt_id, prompt) in enumerate(sorted(prompts.items())):
            signer = members[idx % 3]
            validator = members[(idx + 1) % 3]
            annotator = members[(idx + 2) % 3]

            blob = f"video for {prompt_id}".encode()
            upload = client.post(
                "/api/v1/videos",
                files={"file": ("clip.webm", blob, "video/webm")},
                headers=tokens[signer],
            )
            key = upload.json()["key"]
            assert key == key_for(blob, ".webm")

            rec = client.post("/api/v1/recordings", json={
                "prompt_id": prompt_id, "key": key,
                "meta": {"duration_ms": 13374, "fps": 30.0, "lighting": "indoor",
                         "camera_view": "front", "width": 1280, "height": 720},
                "trim": {"start_ms": 100, "end_ms": 13300},
            }, headers={**tokens[signer], "Idempotency-Key": f"rec-{prompt_id}"})
            assert rec.status_code == 201, rec.text
            rec_id = rec.json()["id"]

            if idx % 7 == 3:  # a few recordings fail video validation
                resp = client.post(f"/api/v1/recordings/{rec_id}/validation",
                                   json={"verdict": "incorrect"}, headers=tokens[validator])
                assert resp.json()["state"] == "VideoRejected"
                rejected.append(rec_id)
                continue

            resp = client.post(f"/api/v1/recordings/{rec_id}/validation",
                               json={"verdict": "correct"}, headers=tokens[validator])
            assert resp.json()["state"] == "PendingAnnotation", resp.text

            if idx % 7 == 5:  # some stay unannotated: validated video, no tracks yet
                parked.append(rec_id)
                continue

            if prompt["content_type"] == "topic":
                script = f"প্রথম বাক্য {idx}। দ্বিতীয় বাক্য {idx}।"
                annotation = {
                    "script": script,
                    "sentence": [
                        {"start_ms": 100, "end_ms": 6000, "text": f"প্রথম বাক্য {idx}।"},
                        {"start_ms": 6100, "end_ms": 13000, "text": f"দ্বিতীয় বাক্য {idx}।"},
                    ],
                }
            else:
                annotation = {
                    "sentence": [
                        {"start_ms": 100, "end_ms": 13000, "text": prompt["content"]},
                    ],
                }
            resp = client.post(f"/api/v1/recordings/{rec_id}/annotation",
                               json=annotation, headers=tokens[annotator])
            assert resp.json()["state"] == "PendingAnnotationValidation", resp.text

            resp = client.post(f"/api/v1/recordings/{rec_id}/annotation-validation",
                               json={"verdict": "accepted"}, headers=tokens[validator])
            assert resp.json()["state"] == "AnnotationValidated", resp.text
            validated.append(rec_id)

        assert validated and rejected and parked

        stats = client.get("/api/v1/stats", headers=tokens["mem1"]).json()
        assert stats["recording_count"] == len(validated)
    finally:
        server.terminate()
        server.wait(timeout=10)

    # export via the operator CLI, twice
    out_a, out_b = tmp_path / "snap-a", tmp_path / "snap-b"
    for out in (out_a, out_b):
        done = subprocess.run(
            cli + ["export", "--out", str(out), "--no-figures", "--config", str(config_path)],
            check=True, capture_output=True, text=True,
        )
        assert f"entries_written: {len(validated)}" in done.stdout

    manifest_a = (out_a / "manifest.jsonl").read_bytes()
    manifest_b = (out_b / "manifest.jsonl").read_bytes()
    assert manifest_a == manifest_b

    exported_ids = [json.loads(line)["recording_id"]
                    for line in manifest_a.decode().splitlines()]
    assert sorted(exported_ids) == sorted(validated)
    for rec_id in rejected + parked:
        assert rec_id not in exported_ids

    elapsed = time.perf_counter() - started
    assert elapsed < 30.0, f"took {elapsed:.3f}s"
    report(9, f"3-user small world end-to-end over HTTP in {elapsed:.1f}s; "
              f"{len(validated)} exported, {len(rejected)} rejected absent")


# --------------------------------------------------------------- criterion 10

def test_criterion_10_keypoint_alignment(tmp_path):
    from test_export import drive_to_validated

    world = World(tmp_path)
    world.add_user("signer-7f3a")
    world.add_user("val1-9b2c")
    world.add_user("val2-4e8d")
    world.add_user("ann1-6a5f")
    pid = world.add_prompt("কীপয়েন্ট যাচাই।")
    rid = drive_to_validated(world, "signer-7f3a", pid, "কীপয়েন্ট যাচাই।",
                             duration_ms=13374)

    for frames in (400, 401, 402):
        assert check_alignment(frames, 13374, 30.0) == 401
        attach_keypoints(world.db, world.store, rid, sidecar_bytes(frames))

    for frames in (0, 1, 399, 403, 999):
        with pytest.raises(FrameMismatchError):
            check_alignment(frames, 13374, 30.0)
        if frames:
            with pytest.raises(FrameMismatchError):
                attach_keypoints(world.db, world.store, rid, sidecar_bytes(frames))

    report(10, "13,374 ms @ 30 fps accepts exactly 400-402 frames")
