import json

import numpy as np
import pytest
from fastapi.testclient import TestClient

from tweenkit import gallery as gal
from tweenkit.cli import run
from tweenkit.service import create_app


@pytest.fixture(scope="module")
def backend(tmp_path_factory):
    root = tmp_path_factory.mktemp("svc")
    data = root / "ds"
    assert run(["synth", "--out", str(data), "--minutes", "1.5",
                "--clip-seconds", "5", "--seed", "17"]) == 0
    model = root / "m.tkm"
    assert run(["train", "--data", str(data), "--out", str(model),
                "--steps", "40", "--seed", "2", "--experts", "2",
                "--hidden", "16"]) == 0
    gallery = root / "g.tkg"
    assert run(["gallery", "build", "--data", str(data), "--out", str(gallery),
                "--stride", "5", "--duration-step", "5"]) == 0
    app = create_app(model, gallery)
    return TestClient(app), gal.load_gallery(gallery)


def query_body(dist=2.0, count=7):
    return {
        "start": {"pos": [0.0, 0.0], "facing": [0.0, 1.0]},
        "target": {"pos": [0.0, dist], "facing": [0.0, 1.0]},
        "count": count,
        "seed": 0,
    }


def identity_pose(root_y=0.8):
    return {
        "root_pos": [0.0, root_y, 0.0],
        "root_facing": [0.0, 1.0],
        "rotations": [[1.0, 0.0, 0.0, 0.0]] * 22,
    }


class TestMeta:
    def test_meta_fields(self, backend):
        client, gallery = backend
        res = client.get("/api/meta")
        assert res.status_code == 200
        body = res.json()
        assert len(body["styles"]) == 4
        assert body["gallery"]["trajectories"] == gallery.size
        assert body["model_version"] == 1
        assert body["pose_wire_version"] == 1


class TestGalleryQuery:
    def test_candidates_within_alpha(self, backend):
        client, gallery = backend
        res = client.post("/api/gallery/query", json=query_body())
        assert res.status_code == 200
        cands = res.json()["candidates"]
        assert len(cands) >= 1
        for c in cands:
            assert c["error"] <= gallery.config.alpha + 1e-9
            assert c["label"] in ("fast", "medium", "slow")
            assert len(c["polyline"]) == c["duration"] + 1

    def test_polyline_starts_at_marker(self, backend):
        client, _ = backend
        res = client.post("/api/gallery/query", json=query_body())
        line = res.json()["candidates"][0]["polyline"]
        assert abs(line[0][0]) < 1e-9 and abs(line[0][1]) < 1e-9

    def test_duration_label_filter(self, backend):
        client, _ = backend
        body = query_body()
        body["duration_label"] = "fast"
        res = client.post("/api/gallery/query", json=body)
        assert res.status_code == 200
        assert all(c["label"] == "fast" for c in res.json()["candidates"])

    def test_malformed_body_400(self, backend):
        client, _ = backend
        res = client.post("/api/gallery/query", json={"start": {"pos": [0.0]}})
        assert res.status_code == 400

    def test_distance_out_of_range_422(self, backend):
        client, _ = backend
        res = client.post("/api/gallery/query", json=query_body(dist=40.0))
        assert res.status_code == 422
        res = client.post("/api/gallery/query", json=query_body(dist=0.01))
        assert res.status_code == 422

    def test_identical_requests_identical_bodies(self, backend):
        client, _ = backend
        r1 = client.post("/api/gallery/query", json=query_body())
        r2 = client.post("/api/gallery/query", json=query_body())
        assert r1.content == r2.content

    def test_empty_result_is_200(self, backend):
        client, _ = backend
        body = query_body(dist=9.9)
        body["duration_label"] = "fast"
        res = client.post("/api/gallery/query", json=body)
        assert res.status_code == 200
        assert isinstance(res.json()["candidates"], list)


class TestInbetween:
    def get_chain(self, client, dist=2.0):
        res = client.post("/api/gallery/query", json=query_body(dist=dist))
        cands = res.json()["candidates"]
        assert cands
        return cands[0]

    def test_frame_count_matches_chain_duration(self, backend):
        client, _ = backend
        cand = self.get_chain(client)
        body = {
            "start": identity_pose(),
            "target": {**identity_pose(), "root_pos": [0.0, 0.8, 2.0]},
            "chain": cand["ids"],
            "style": 1,
        }
        res = client.post("/api/inbetween", json=body)
        assert res.status_code == 200
        out = res.json()
        assert out["tta0"] == cand["duration"]
        assert len(out["frames"]) == cand["duration"]
        assert len(out["frames"][0]["rotations"]) == 22

    def test_deterministic_payload(self, backend):
        client, _ = backend
        cand = self.get_chain(client)
        body = {
            "start": identity_pose(),
            "target": {**identity_pose(), "root_pos": [0.0, 0.8, 2.0]},
            "chain": cand["ids"],
            "style": 0,
        }
        r1 = client.post("/api/inbetween", json=body)
        r2 = client.post("/api/inbetween", json=body)
        assert r1.content == r2.content

    def test_unknown_chain_404(self, backend):
        client, _ = backend
        body = {
            "start": identity_pose(),
            "target": {**identity_pose(), "root_pos": [0.0, 0.8, 2.0]},
            "chain": [[999, 12345, 99999]],
            "style": 0,
        }
        res = client.post("/api/inbetween", json=body)
        assert res.status_code == 404

    def test_invalid_pose_422(self, backend):
        client, _ = backend
        cand = self.get_chain(client)
        bad = identity_pose()
        bad["rotations"] = [[0.0, 0.0, 0.0, 0.0]] * 22
        res = client.post("/api/inbetween", json={
            "start": bad,
            "target": {**identity_pose(), "root_pos": [0.0, 0.8, 2.0]},
            "chain": cand["ids"], "style": 0})
        assert res.status_code == 422

    def test_unknown_style_422(self, backend):
        client, _ = backend
        cand = self.get_chain(client)
        res = client.post("/api/inbetween", json={
            "start": identity_pose(),
            "target": {**identity_pose(), "root_pos": [0.0, 0.8, 2.0]},
            "chain": cand["ids"], "style": 77})
        assert res.status_code == 422
