import base64
import io

import numpy as np
import pytest
import torch
from fastapi.testclient import TestClient

from matrir import dsp, fileio
from matrir.dataset import all_same_config_id
from matrir.model import ModelConfig, init_model, save_checkpoint
from matrir.service import create_app

TINY_MODEL = dict(
    token_dim=32, ff_dim=48, decoder_layers=1, encoder_layers=1, n_heads=4,
    upsampler_channels=(16, 12, 10, 8, 6), backbone_dim=32, backbone_patch=8,
    backbone_layers=1, backbone_tokens=16, image_size=32,
)


@pytest.fixture(scope="module")
def client(small_dataset, tmp_path_factory):
    ck_dir = tmp_path_factory.mktemp("svc")
    net = init_model(ModelConfig(**TINY_MODEL), seed=3)
    ck = ck_dir / "model.pt"
    save_checkpoint(ck, net, {"step": 0})
    app = create_app(small_dataset.root, ck, cache_dir=ck_dir / "cache")
    return TestClient(app)


@pytest.fixture(scope="module")
def scene_and_assignment(client):
    scenes = client.get("/scenes").json()["scenes"]
    entry = scenes[0]
    return entry["id"], dict(entry["default_assignment"])


def wav_to_array(data: bytes):
    samples, rate = fileio.wav_read(data)
    return samples, rate


class TestBasics:
    def test_health(self, client):
        body = client.get("/health").json()
        assert body["status"] == "ok"
        assert body["checkpoint"]
        assert body["n_scenes"] > 0

    def test_scenes_listing(self, client):
        body = client.get("/scenes").json()
        assert body["schema_version"] == 1
        assert len(body["scenes"]) >= 2
        first = body["scenes"][0]
        assert set(first) >= {"id", "room_dims", "surfaces", "default_assignment"}

    def test_observation_payload(self, client, scene_and_assignment):
        sid, _ = scene_and_assignment
        body = client.get(f"/scenes/{sid}/observation").json()
        assert len(body["catalog"]) == 11
        for key in ("v_png_b64", "d_png_b64", "m_png_b64"):
            raw = base64.b64decode(body[key])
            assert raw[:8] == b"\x89PNG\r\n\x1a\n"
        assert set(body["assignment"]) == set(body["surfaces"])

    def test_unknown_scene_404(self, client):
        assert client.get("/scenes/nope/observation").status_code == 404


class TestGenerate:
    def test_generate_and_cache(self, client, scene_and_assignment):
        sid, assignment = scene_and_assignment
        r1 = client.post(f"/scenes/{sid}/rir", json={"assignment": assignment})
        assert r1.status_code == 200, r1.text
        body1 = r1.json()
        assert set(body1) >= {"rir_id", "rt60", "c50", "cached"}
        assert not body1["cached"]
        r2 = client.post(f"/scenes/{sid}/rir", json={"assignment": assignment})
        body2 = r2.json()
        assert body2["rir_id"] == body1["rir_id"]
        assert body2["cached"]

    def test_one_surface_change_distinct_material_same_spatial(
        self, client, scene_and_assignment
    ):
        sid, assignment = scene_and_assignment
        changed = dict(assignment)
        # the floor is always visible in the mask, so M genuinely changes
        changed["floor"] = (changed["floor"] + 3) % 11
        id1 = client.post(f"/scenes/{sid}/rir", json={"assignment": assignment}).json()["rir_id"]
        id2 = client.post(f"/scenes/{sid}/rir", json={"assignment": changed}).json()["rir_id"]
        assert id1 != id2
        spat1 = client.get(f"/rir/{id1}/spectrogram.png?variant=spatial").content
        spat2 = client.get(f"/rir/{id2}/spectrogram.png?variant=spatial").content
        assert spat1 == spat2  # spatial estimate ignores the mask
        req = {"variant": "material", "source": "click"}
        wav1 = client.post("/auralize", json={"rir_id": id1, **req}).content
        wav2 = client.post("/auralize", json={"rir_id": id2, **req}).content
        assert wav1 != wav2

    def test_incomplete_assignment_422(self, client, scene_and_assignment):
        sid, assignment = scene_and_assignment
        partial = dict(assignment)
        partial.pop(sorted(partial)[0])
        r = client.post(f"/scenes/{sid}/rir", json={"assignment": partial})
        assert r.status_code == 422

    def test_no_checkpoint_503(self, small_dataset, tmp_path):
        app = create_app(small_dataset.root, None, cache_dir=tmp_path / "c")
        bare = TestClient(app)
        sid = bare.get("/scenes").json()["scenes"][0]["id"]
        assignment = bare.get("/scenes").json()["scenes"][0]["default_assignment"]
        r = bare.post(f"/scenes/{sid}/rir", json={"assignment": assignment})
        assert r.status_code == 503

    def test_session_isolation(self, client, scene_and_assignment):
        sid, assignment = scene_and_assignment
        a = dict(assignment)
        b = dict(assignment)
        surf = sorted(a)[0]
        a[surf] = 0
        b[surf] = 5
        client.post(f"/scenes/{sid}/rir", json={"assignment": a},
                    headers={"X-Session-Id": "alice"})
        client.post(f"/scenes/{sid}/rir", json={"assignment": b},
                    headers={"X-Session-Id": "bob"})
        obs_a = client.get(f"/scenes/{sid}/observation",
                           headers={"X-Session-Id": "alice"}).json()
        obs_b = client.get(f"/scenes/{sid}/observation",
                           headers={"X-Session-Id": "bob"}).json()
        assert obs_a["assignment"][surf] == 0
        assert obs_b["assignment"][surf] == 5


class TestAuralize:
    def make_rir(self, client, scene_and_assignment):
        sid, assignment = scene_and_assignment
        return client.post(f"/scenes/{sid}/rir", json={"assignment": assignment}).json()["rir_id"]

    def test_delta_variant_returns_input(self, client, scene_and_assignment):
        rir_id = self.make_rir(client, scene_and_assignment)
        t = np.arange(4000) / 16000.0
        dry = (0.5 * np.sin(2 * np.pi * 440 * t)).astype(np.float32)
        buf = io.BytesIO()
        fileio.wav_write(buf, dry, 16000, "float32")
        r = client.post("/auralize", json={
            "rir_id": rir_id, "variant": "delta",
            "audio_b64": base64.b64encode(buf.getvalue()).decode(),
        })
        assert r.status_code == 200
        wet, rate = wav_to_array(r.content)
        assert rate == 16000
        out = wet[0, :4000]
        expected = dry / np.abs(dry).max() * 0.9
        assert np.abs(out - expected).max() < 2e-3  # pcm16 quantization

    def test_repeat_request_byte_identical(self, client, scene_and_assignment):
        rir_id = self.make_rir(client, scene_and_assignment)
        req = {"rir_id": rir_id, "variant": "material", "source": "click"}
        a = client.post("/auralize", json=req).content
        b = client.post("/auralize", json=req).content
        assert a == b

    def test_builtin_clips_and_variants(self, client, scene_and_assignment):
        rir_id = self.make_rir(client, scene_and_assignment)
        for source in ("click", "speech", "music"):
            r = client.post("/auralize", json={
                "rir_id": rir_id, "variant": "spatial", "source": source,
            })
            assert r.status_code == 200
            samples, rate = wav_to_array(r.content)
            assert rate == 16000 and samples.shape[0] == 2

    def test_ground_truth_variant_for_dataset_assignment(
        self, client, small_dataset
    ):
        # an all-same-material assignment on a registered scene has a stored
        # simulator RIR (the matc split)
        scenes = client.get("/scenes").json()["scenes"]
        entry = scenes[0]
        assignment = {s: 4 for s in entry["surfaces"]}
        rir_id = client.post(
            f"/scenes/{entry['id']}/rir", json={"assignment": assignment}
        ).json()["rir_id"]
        r = client.post("/auralize", json={
            "rir_id": rir_id, "variant": "ground_truth", "source": "click",
        })
        assert r.status_code == 200

    def test_unknown_rir_404(self, client):
        r = client.post("/auralize", json={"rir_id": "beef", "source": "click"})
        assert r.status_code == 404

    def test_bad_audio_415(self, client, scene_and_assignment):
        rir_id = self.make_rir(client, scene_and_assignment)
        r = client.post("/auralize", json={
            "rir_id": rir_id,
            "audio_b64": base64.b64encode(b"not a wav").decode(),
        })
        assert r.status_code == 415
