import base64
import io
import warnings

import pytest

with warnings.catch_warnings():
    warnings.simplefilter("ignore", DeprecationWarning)
    from fastapi.testclient import TestClient

from flextact import netpbm
from flextact.dotref import manifest_dict, save_library
from flextact.service.app import create_app
from flextact.service.models import bits_from_b64, f32_from_b64


def b64(data: bytes) -> str:
    return base64.b64encode(data).decode()


@pytest.fixture(scope="module")
def client():
    return TestClient(create_app())


@pytest.fixture(scope="module")
def library_id(client, cfg, sweep_frames):
    payload = {
        "frames_ppm_b64": [b64(f.ppm_bytes()) for f in sweep_frames],
        "config": cfg.model_dump(),
    }
    resp = client.post("/library/build", json=payload)
    assert resp.status_code == 200, resp.text
    body = resp.json()
    assert body["n_entries"] == 20
    return body["library_id"]


def test_health(client):
    resp = client.get("/health")
    assert resp.status_code == 200
    assert resp.json()["status"] == "ok"


def test_render_returns_frames_and_ground_truth(client, cfg):
    payload = {
        "scenes": [
            {"bend": 0.2},
            {"bend": 0.2, "indenter": {"kind": "sphere", "radius_mm": 3.0, "depth_mm": 0.5}},
        ],
        "config": cfg.model_dump(),
    }
    resp = client.post("/render", json=payload)
    assert resp.status_code == 200
    frames = resp.json()["frames"]
    assert len(frames) == 2
    arr = netpbm.read_ppm(io.BytesIO(base64.b64decode(frames[0]["ppm_b64"])))
    assert arr.shape == (cfg.geometry.height, cfg.geometry.width, 3)
    gt = frames[1]["ground_truth"]
    shape = (gt["height"], gt["width"])
    depth = f32_from_b64(gt["depth_f32_b64"], shape)
    mask = bits_from_b64(gt["contact_mask_bits_b64"], shape)
    assert depth.max() == pytest.approx(5.0, abs=1e-3)
    assert mask.sum() == gt["contact_area_px"] > 0
    assert gt["theta_true_deg"] is None


def test_render_invalid_scene_is_422(client, cfg):
    payload = {
        "scenes": [{"indenter": {"kind": "sphere", "radius_mm": 3.0, "depth_mm": 0.5, "center_mm": [90.0, 90.0]}}],
        "config": cfg.model_dump(),
    }
    resp = client.post("/render", json=payload)
    assert resp.status_code == 422


def test_build_is_idempotent_and_listed(client, cfg, sweep_frames, library_id):
    payload = {
        "frames_ppm_b64": [b64(f.ppm_bytes()) for f in sweep_frames],
        "config": cfg.model_dump(),
    }
    again = client.post("/library/build", json=payload).json()
    assert again["library_id"] == library_id
    listed = client.get("/libraries").json()["libraries"]
    assert any(e["library_id"] == library_id and e["n_entries"] == 20 for e in listed)


def test_open_matches_build_id(client, library, library_id, tmp_path):
    d = tmp_path / "lib"
    save_library(library, d)
    manifest = manifest_dict(library)
    frames = {e["frame_file"]: b64((d / e["frame_file"]).read_bytes()) for e in manifest["entries"]}
    resp = client.post("/library/open", json={"manifest": manifest, "frames_ppm_b64": frames})
    assert resp.status_code == 200
    assert resp.json()["library_id"] == library_id


def test_process_self_frame(client, library, library_id):
    frame = library.entries[4].frame
    resp = client.post(
        "/process",
        json={
            "library_id": library_id,
            "frame_ppm_b64": b64(frame.ppm_bytes()),
            "outputs": ["depth", "orientation", "markers", "overlay"],
        },
    )
    assert resp.status_code == 200
    body = resp.json()
    assert body["error"] is None
    assert body["match"]["bend_id"] == 4
    assert body["match"]["cost"] < 1e-9
    assert not body["match"]["low_confidence"]
    assert "no-contact" in body["orientation"]["flags"]
    assert body["markers"]["shear_magnitude"] == 0.0
    assert abs(body["depth"]["z_max"]) < 1e-6
    overlay = netpbm.read_ppm(io.BytesIO(base64.b64decode(body["overlay_ppm_b64"])))
    assert overlay.shape == frame.data.shape


def test_process_stem_frame_orientation(client, cfg, library_id):
    from flextact.simsensor import Scene, StemIndenter, render

    frame, _ = render(
        Scene(bend=5 / 19, indenter=StemIndenter(width_mm=7.0, angle_deg=-20.0, depth_mm=0.5)),
        cfg.geometry,
    )
    resp = client.post(
        "/process",
        json={"library_id": library_id, "frame_ppm_b64": b64(frame.ppm_bytes()), "outputs": ["orientation"]},
    )
    body = resp.json()
    assert body["orientation"]["theta_deg"] == pytest.approx(-20.0, abs=2.0)
    assert body["depth"] is None


def test_process_unknown_library_404(client):
    resp = client.post("/process", json={"library_id": "lib-missing", "frame_ppm_b64": b64(b"P6")})
    assert resp.status_code == 404


def test_process_bad_payloads(client, library_id):
    resp = client.post("/process", json={"library_id": library_id, "frame_ppm_b64": "!!!notb64"})
    assert resp.status_code == 400
    resp = client.post(
        "/process",
        json={"library_id": library_id, "frame_ppm_b64": b64(b"P6"), "outputs": ["bogus"]},
    )
    assert resp.status_code == 422


def test_config_unknown_key_rejected(client):
    resp = client.post("/render", json={"scenes": [{"bend": 0.0}], "config": {"geometry": {"nope": 1}}})
    assert resp.status_code == 422


def test_place_trials(client, library_id):
    resp = client.post(
        "/place",
        json={
            "library_id": library_id,
            "scenario": {"handoff_angle_deg": 20.0},
            "trials": 2,
            "seed": 0,
        },
    )
    assert resp.status_code == 200
    body = resp.json()
    assert body["summary"] == {"trials": 2, "successes": 2, "degraded": 0, "aborted": 0, "crashes": 0}
    assert len(body["reports"]) == 2
    assert body["reports"][0]["final_state"] == "Done"
    assert body["reports"][0]["trial"] == 0 and body["reports"][1]["seed"] == 1
