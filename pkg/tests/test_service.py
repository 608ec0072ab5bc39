import concurrent.futures

import numpy as np
import pytest
from fastapi.testclient import TestClient

from rarefind.metrics import CoverageConfig
from rarefind.service import create_app, restore_sessions
from rarefind.session import SessionConfig


@pytest.fixture(scope="module")
def service_dataset(tmp_path_factory):
    from rarefind.data import load_dataset, write_dataset

    rng = np.random.default_rng(21)
    centers = rng.normal(size=(4, 8)) * 3.0
    features = np.vstack([
        centers[c] + rng.normal(0, 0.35, size=(80, 8)) for c in range(4)
    ])
    labels = np.repeat(np.arange(4), 80)
    ids = np.arange(320)
    out = tmp_path_factory.mktemp("service-data")
    manifest = write_dataset(out, "svc", features.astype(np.float32), labels,
                             {"pool": ids[ids % 4 != 0],
                              "test": ids[ids % 4 == 0]},
                             [f"c{i}" for i in range(4)])
    return load_dataset(manifest, normalize=True)


def build_client(ds, demo=True, **app_kw):
    app = create_app({"svc": ds}, demo=demo,
                     default_config=SessionConfig(b=6, T=3, seed=1),
                     coverage_config=CoverageConfig(K=4, kmeans_runs=3),
                     **app_kw)
    return TestClient(app)


def query_for(ds, class_id, seed=0):
    rng = np.random.default_rng(seed)
    members = ds.class_pool_members(class_id)
    others = np.setdiff1d(ds.pool_indices, members)
    return ([int(rng.choice(members))],
            [int(i) for i in rng.choice(others, size=5, replace=False)])


def create_session(client, ds, class_id=1, strategy="pfma", seed=0, **extra):
    pos, neg = query_for(ds, class_id, seed)
    body = {"dataset": "svc", "strategy": strategy,
            "positive_ids": pos, "negative_ids": neg, **extra}
    return client.post("/v1/sessions", json=body)


class TestCreate:
    def test_valid_query_returns_budget_batch(self, service_dataset):
        client = build_client(service_dataset)
        resp = create_session(client, service_dataset)
        assert resp.status_code == 201
        body = resp.json()
        assert body["phase"] == "awaiting_labels"
        assert body["t"] == 1
        items = body["batch"]["items"]
        assert len(items) == 6
        assert all(0.0 <= item["score"] <= 1.0 for item in items)

    def test_unknown_dataset_404(self, service_dataset):
        client = build_client(service_dataset)
        resp = client.post("/v1/sessions", json={
            "dataset": "nope", "strategy": "ma",
            "positive_ids": [1], "negative_ids": [2]})
        assert resp.status_code == 404
        body = resp.json()
        assert body["code"] == "unknown_dataset"
        assert set(body) == {"code", "message", "details"}

    def test_id_in_both_sides_422(self, service_dataset):
        client = build_client(service_dataset)
        pos, neg = query_for(service_dataset, 1)
        resp = client.post("/v1/sessions", json={
            "dataset": "svc", "strategy": "ma",
            "positive_ids": pos, "negative_ids": neg + pos})
        assert resp.status_code == 422
        assert resp.json()["code"] == "invalid_ids"

    def test_single_class_query_422(self, service_dataset):
        client = build_client(service_dataset)
        pos, _ = query_for(service_dataset, 1)
        resp = client.post("/v1/sessions", json={
            "dataset": "svc", "strategy": "ma",
            "positive_ids": pos, "negative_ids": []})
        assert resp.status_code == 422
        assert resp.json()["code"] == "single_class_query"

    def test_out_of_pool_ids_422(self, service_dataset):
        client = build_client(service_dataset)
        test_id = int(service_dataset.test_indices[0])
        resp = client.post("/v1/sessions", json={
            "dataset": "svc", "strategy": "ma",
            "positive_ids": [test_id], "negative_ids": [1]})
        assert resp.status_code == 422

    def test_unknown_strategy_422(self, service_dataset):
        client = build_client(service_dataset)
        resp = create_session(client, service_dataset, strategy="entropy")
        assert resp.status_code == 422
        assert resp.json()["code"] == "unknown_strategy"


class TestSubmit:
    def outstanding_ids(self, body):
        return [item["sample_id"] for item in body["batch"]["items"]]

    def test_demo_round_trip_three_iterations(self, service_dataset):
        client = build_client(service_dataset, demo=True)
        body = create_session(client, service_dataset).json()
        sid = body["session_id"]
        for expected_t in (1, 2, 3):
            assert body["t"] == expected_t
            resp = client.post(f"/v1/sessions/{sid}/labels",
                               json={"auto": True})
            assert resp.status_code == 200
            body = resp.json()
        assert body["phase"] == "finished"
        series = body["summary"]["series"]
        assert series["iteration"] == [1, 2, 3]
        assert len(series["cov"]) == 3
        assert all(v is not None for v in series["cov"])
        assert all(v is not None for v in series["batch_ratio"])
        state = client.get(f"/v1/sessions/{sid}/state").json()
        assert state["phase"] == "finished"
        assert state["metrics"] == series

    def test_latest_metrics_track_state_series(self, service_dataset):
        client = build_client(service_dataset)
        body = create_session(client, service_dataset).json()
        sid = body["session_id"]
        collected = []
        while body["phase"] == "awaiting_labels":
            body = client.post(f"/v1/sessions/{sid}/labels",
                               json={"auto": True}).json()
            collected.append(body["latest_metrics"])
        series = client.get(f"/v1/sessions/{sid}/state").json()["metrics"]
        assert [m["iteration"] for m in collected] == series["iteration"]
        assert [m["cov"] for m in collected] == series["cov"]
        assert [m["batch_ratio"] for m in collected] == series["batch_ratio"]

    def test_explicit_labels_accepted(self, service_dataset):
        client = build_client(service_dataset)
        body = create_session(client, service_dataset).json()
        sid = body["session_id"]
        labels = [{"sample_id": i, "relevant": bool(k % 2)}
                  for k, i in enumerate(self.outstanding_ids(body))]
        resp = client.post(f"/v1/sessions/{sid}/labels",
                           json={"labels": labels})
        assert resp.status_code == 200
        assert resp.json()["t"] == 2
        # submitted toggles land verbatim in the ratio
        state = client.get(f"/v1/sessions/{sid}/state").json()
        assert state["metrics"]["batch_ratio"][0] == pytest.approx(3 / 6)

    def test_partial_submission_422_keeps_batch(self, service_dataset):
        client = build_client(service_dataset)
        body = create_session(client, service_dataset).json()
        sid = body["session_id"]
        ids = self.outstanding_ids(body)
        partial = [{"sample_id": i, "relevant": True} for i in ids[:-1]]
        resp = client.post(f"/v1/sessions/{sid}/labels",
                           json={"labels": partial})
        assert resp.status_code == 422
        assert resp.json()["details"]["missing_ids"] == [ids[-1]]
        again = client.get(f"/v1/sessions/{sid}/batch").json()
        assert self.outstanding_ids(again) == ids
        assert again["t"] == 1

    def test_unknown_ids_listed(self, service_dataset):
        client = build_client(service_dataset)
        body = create_session(client, service_dataset).json()
        sid = body["session_id"]
        ids = self.outstanding_ids(body)
        wrong = [{"sample_id": i, "relevant": True} for i in ids[:-1]]
        wrong.append({"sample_id": 999999, "relevant": True})
        resp = client.post(f"/v1/sessions/{sid}/labels",
                           json={"labels": wrong})
        assert resp.status_code == 422
        details = resp.json()["details"]
        assert details["unknown_ids"] == [999999]
        assert details["missing_ids"] == [ids[-1]]

    def test_duplicate_ids_rejected(self, service_dataset):
        client = build_client(service_dataset)
        body = create_session(client, service_dataset).json()
        sid = body["session_id"]
        ids = self.outstanding_ids(body)
        dup = [{"sample_id": i, "relevant": True} for i in ids]
        dup.append({"sample_id": ids[0], "relevant": False})
        resp = client.post(f"/v1/sessions/{sid}/labels", json={"labels": dup})
        assert resp.status_code == 422
        assert ids[0] in resp.json()["details"]["duplicate_ids"]

    def test_submit_after_finish_409(self, service_dataset):
        client = build_client(service_dataset)
        body = create_session(client, service_dataset).json()
        sid = body["session_id"]
        for _ in range(3):
            body = client.post(f"/v1/sessions/{sid}/labels",
                               json={"auto": True}).json()
        resp = client.post(f"/v1/sessions/{sid}/labels", json={"auto": True})
        assert resp.status_code == 409
        assert resp.json()["code"] == "wrong_phase"

    def test_auto_without_target_422(self, service_dataset):
        client = build_client(service_dataset, demo=False)
        body = create_session(client, service_dataset).json()
        resp = client.post(f"/v1/sessions/{body['session_id']}/labels",
                           json={"auto": True})
        assert resp.status_code == 422
        assert resp.json()["code"] == "auto_unavailable"

    def test_unknown_session_404(self, service_dataset):
        client = build_client(service_dataset)
        resp = client.post("/v1/sessions/missing/labels", json={"auto": True})
        assert resp.status_code == 404


class TestState:
    def test_snapshot_after_create(self, service_dataset):
        client = build_client(service_dataset)
        sid = create_session(client, service_dataset).json()["session_id"]
        state = client.get(f"/v1/sessions/{sid}/state").json()
        assert state["t"] == 1
        assert state["discovered"] == []
        assert state["metrics"]["iteration"] == []

    def test_repeated_reads_identical(self, service_dataset):
        client = build_client(service_dataset)
        sid = create_session(client, service_dataset).json()["session_id"]
        client.post(f"/v1/sessions/{sid}/labels", json={"auto": True})
        a = client.get(f"/v1/sessions/{sid}/state").json()
        b = client.get(f"/v1/sessions/{sid}/state").json()
        assert a == b

    def test_batch_endpoint_matches_create(self, service_dataset):
        client = build_client(service_dataset)
        body = create_session(client, service_dataset).json()
        sid = body["session_id"]
        again = client.get(f"/v1/sessions/{sid}/batch").json()
        assert again["batch"] == body["batch"]

    def test_datasets_listing(self, service_dataset):
        client = build_client(service_dataset)
        body = client.get("/v1/datasets").json()
        assert body["datasets"][0]["name"] == "svc"
        assert body["datasets"][0]["dim"] == 8

    def test_image_404_without_paths(self, service_dataset):
        client = build_client(service_dataset)
        resp = client.get("/v1/datasets/svc/samples/0/image")
        assert resp.status_code == 404
        assert resp.json()["code"] == "no_image"


class TestImages:
    def test_serves_manifest_image(self, tmp_path):
        from PIL import Image

        from rarefind.data import load_dataset, write_dataset

        img_dir = tmp_path / "imgs"
        img_dir.mkdir()
        paths = []
        for i in range(4):
            p = img_dir / f"{i}.png"
            Image.new("RGB", (4, 4), color=(i * 40, 0, 0)).save(p)
            paths.append(str(p))
        manifest = write_dataset(
            tmp_path, "imgs", np.eye(4, dtype=np.float32),
            np.array([0, 0, 1, 1]),
            {"pool": np.arange(3), "test": np.array([3])},
            ["a", "b"], image_paths=paths)
        ds = load_dataset(manifest, normalize=False)
        client = TestClient(create_app({"imgs": ds}))
        ok = client.get("/v1/datasets/imgs/samples/1/image")
        assert ok.status_code == 200
        assert ok.headers["content-type"] == "image/png"
        assert client.get("/v1/datasets/imgs/samples/99/image").status_code == 404


class TestIsolation:
    def drive_session(self, client, ds, seed):
        body = create_session(client, ds, class_id=seed % 4 or 1,
                              seed=seed).json()
        sid = body["session_id"]
        batches = [sorted(i["sample_id"] for i in body["batch"]["items"])]
        while body["phase"] == "awaiting_labels":
            body = client.post(f"/v1/sessions/{sid}/labels",
                               json={"auto": True}).json()
            if body["phase"] == "awaiting_labels":
                batches.append(sorted(i["sample_id"]
                                      for i in body["batch"]["items"]))
        return sid, batches

    def test_concurrent_sessions_match_serial(self, service_dataset):
        ds = service_dataset
        serial_client = build_client(ds)
        serial = {seed: self.drive_session(serial_client, ds, seed)[1]
                  for seed in range(50)}

        concurrent_client = build_client(ds)
        with concurrent.futures.ThreadPoolExecutor(max_workers=8) as pool:
            futures = {seed: pool.submit(self.drive_session,
                                         concurrent_client, ds, seed)
                       for seed in range(50)}
            results = {seed: f.result() for seed, f in futures.items()}

        for seed in range(50):
            assert results[seed][1] == serial[seed], f"seed {seed} diverged"
        # no session ever re-proposes its own labeled ids
        for seed, (sid, batches) in results.items():
            flat = [i for batch in batches for i in batch]
            assert len(flat) == len(set(flat))


class TestEventLog:
    def test_restore_rebuilds_state(self, service_dataset, tmp_path):
        log = tmp_path / "events.jsonl"
        client = build_client(service_dataset, event_log_path=log)
        body = create_session(client, service_dataset).json()
        sid = body["session_id"]
        client.post(f"/v1/sessions/{sid}/labels", json={"auto": True})
        before = client.get(f"/v1/sessions/{sid}/state").json()

        fresh_app = create_app({"svc": service_dataset}, demo=True,
                               default_config=SessionConfig(b=6, T=3, seed=1),
                               coverage_config=CoverageConfig(K=4, kmeans_runs=3))
        restored = restore_sessions(fresh_app, log)
        assert restored == 2
        fresh_client = TestClient(fresh_app)
        after = fresh_client.get(f"/v1/sessions/{sid}/state").json()
        assert after == before
