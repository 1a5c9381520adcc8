"""Local HTTP service for interactive what-if auralization."""
from __future__ import annotations

import base64
import hashlib
import io
import json
import threading
from pathlib import Path

import numpy as np
import torch
from fastapi import FastAPI, Header, HTTPException, Request
from fastapi.responses import FileResponse, JSONResponse, Response
from PIL import Image

from . import dsp, fileio
from .data import load_sample_tensors, observation_tensors
from .dataset import load_catalog, load_manifest, load_observation, load_rir
from .dry_clips import CLIP_NAMES, builtin_clip
from .ism import kernel_backend
from .model import load_checkpoint

SCHEMA_VERSION = 1
VARIANTS = ("spatial", "material", "ground_truth", "delta")

# compact viridis-like LUT for spectrogram rendering
_ANCHORS = np.array(
    [(68, 1, 84), (59, 82, 139), (33, 145, 140), (94, 201, 98), (253, 231, 37)],
    dtype=np.float64,
)


def _colormap_lut() -> np.ndarray:
    xs = np.linspace(0, 1, len(_ANCHORS))
    grid = np.linspace(0, 1, 256)
    return np.stack(
        [np.interp(grid, xs, _ANCHORS[:, c]) for c in range(3)], axis=1
    ).astype(np.uint8)


_LUT = _colormap_lut()


def spectrogram_png_bytes(magnitudes: np.ndarray) -> bytes:
    """Log-compressed single-channel render (left channel), low bins at the
    bottom."""
    mag = np.log1p(100.0 * magnitudes[0])
    mag = mag / max(mag.max(), 1e-9)
    img = _LUT[np.round(mag * 255).astype(np.uint8)]
    img = img[::-1]  # frequency axis upward
    buf = io.BytesIO()
    Image.fromarray(img, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def _b64_png(path_or_array) -> str:
    if isinstance(path_or_array, (str, Path)):
        return base64.b64encode(Path(path_or_array).read_bytes()).decode()
    buf = io.BytesIO()
    Image.fromarray(path_or_array).save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode()


def _wav_bytes(samples: np.ndarray, rate: int) -> bytes:
    buf = io.BytesIO()
    data = np.clip(samples.T, -1.0, 1.0)
    from scipy.io import wavfile

    wavfile.write(buf, rate, np.round(data * 32767.0).astype(np.int16))
    return buf.getvalue()


class AuralizationState:
    """Checkpoint + scene registry + on-disk RIR cache; single-writer cache."""

    def __init__(self, dataset_root, checkpoint_path=None, cache_dir=None):
        self.root = Path(dataset_root)
        self.man = load_manifest(self.root)
        self.catalog = load_catalog(self.root)
        self.net = None
        self.checkpoint_id = ""
        if checkpoint_path:
            self.net, _ = load_checkpoint(checkpoint_path)
            self.net.eval()
            self.checkpoint_id = hashlib.sha256(
                Path(checkpoint_path).read_bytes()
            ).hexdigest()[:12]
        self.cache_dir = Path(cache_dir) if cache_dir else self.root / "rir_cache"
        self.cache_dir.mkdir(parents=True, exist_ok=True)
        self.lock = threading.Lock()
        self.sessions: dict = {}
        self._build_registry()

    def _build_registry(self):
        """One entry per unseen test scene, anchored at a stored observation."""
        self.scenes = {}
        for split in ("matc", "us", "uu", "uk"):
            for r in self.man.records(split):
                key = f"scene{r.scene_seed:010d}"
                if key in self.scenes:
                    continue
                scene = self.man.scene_for(r)
                self.scenes[key] = {
                    "scene_id": key,
                    "record": r,
                    "scene": scene,
                    "default_assignment": dict(
                        self.man.assignment_for(r, scene).mapping
                    ),
                }

    def scene_entry(self, scene_id):
        if scene_id not in self.scenes:
            raise HTTPException(404, f"unknown scene {scene_id}")
        return self.scenes[scene_id]

    def session(self, session_id: str) -> dict:
        return self.sessions.setdefault(session_id, {})

    def rir_id(self, scene_id, assignment: dict) -> str:
        payload = json.dumps(
            [self.checkpoint_id, scene_id, sorted(assignment.items())],
            sort_keys=True,
        )
        return hashlib.sha256(payload.encode()).hexdigest()[:16]

    def rir_dir(self, rir_id: str) -> Path:
        return self.cache_dir / rir_id


def _analyze(samples: np.ndarray, rate: int):
    wave = dsp.RIRWaveform(samples, rate, samples.shape[1] / rate)
    try:
        rt60 = dsp.estimate_rt60(wave)
    except dsp.SignalError:
        rt60 = None
    try:
        c50 = dsp.early_to_late_db(wave).db
    except dsp.SignalError:
        c50 = None
    return rt60, c50


def create_app(dataset_root, checkpoint_path=None, cache_dir=None) -> FastAPI:
    state = AuralizationState(dataset_root, checkpoint_path, cache_dir)
    app = FastAPI(title="matrir auralization service")
    app.state.aural = state

    @app.get("/health")
    def health():
        return {
            "status": "ok",
            "schema_version": SCHEMA_VERSION,
            "checkpoint": state.checkpoint_id or None,
            "kernel_backend": kernel_backend(),
            "n_scenes": len(state.scenes),
        }

    @app.get("/scenes")
    def scenes():
        out = []
        for key, entry in sorted(state.scenes.items()):
            sc = entry["scene"]
            out.append(
                {
                    "id": key,
                    "room_dims": list(sc.room_dims),
                    "surfaces": list(sc.surfaces),
                    "default_assignment": entry["default_assignment"],
                }
            )
        return {"schema_version": SCHEMA_VERSION, "scenes": out}

    @app.get("/scenes/{scene_id}/observation")
    def observation(scene_id: str, x_session_id: str = Header("default")):
        entry = state.scene_entry(scene_id)
        d = state.man.sample_dir(entry["record"])
        session = state.session(x_session_id)
        current = session.get(("assignment", scene_id), entry["default_assignment"])
        return {
            "schema_version": SCHEMA_VERSION,
            "scene_id": scene_id,
            "v_png_b64": _b64_png(d / "V.png"),
            "d_png_b64": _b64_png(d / "D.png"),
            "m_png_b64": _b64_png(d / "M.png"),
            "surfaces": list(entry["scene"].surfaces),
            "assignment": current,
            "catalog": [
                {
                    "id": m.id,
                    "name": m.name,
                    "display_color": list(m.display_color),
                    "absorption": list(m.absorption),
                }
                for m in state.catalog
            ],
        }

    @app.post("/scenes/{scene_id}/rir")
    def generate_rir(scene_id: str, body: dict,
                     x_session_id: str = Header("default")):
        entry = state.scene_entry(scene_id)
        if state.net is None:
            raise HTTPException(503, "no checkpoint loaded")
        assignment = body.get("assignment") or {}
        scene = entry["scene"]
        missing = set(scene.surfaces) - set(assignment)
        if missing:
            raise HTTPException(422, f"assignment missing surfaces: {sorted(missing)}")
        bad = {
            s: m for s, m in assignment.items()
            if not (isinstance(m, int) and 0 <= m < len(state.catalog))
        }
        if bad:
            raise HTTPException(422, f"invalid material ids: {bad}")
        assignment = {s: int(assignment[s]) for s in scene.surfaces}

        rir_id = state.rir_id(scene_id, assignment)
        out = state.rir_dir(rir_id)
        with state.lock:
            state.session(x_session_id)[("assignment", scene_id)] = assignment
            cached = (out / "meta.json").exists()
            if not cached:
                _generate_into_cache(state, entry, assignment, out)
        meta = json.loads((out / "meta.json").read_text())
        meta.update({"rir_id": rir_id, "cached": cached,
                     "schema_version": SCHEMA_VERSION})
        return meta

    def _load_cached(rir_id):
        out = state.rir_dir(rir_id)
        if not (out / "meta.json").exists():
            raise HTTPException(404, f"unknown rir_id {rir_id}")
        return out

    @app.get("/rir/{rir_id}/spectrogram.png")
    def spectrogram_png(rir_id: str, variant: str = "material"):
        out = _load_cached(rir_id)
        if variant not in ("spatial", "material"):
            raise HTTPException(422, "variant must be spatial or material")
        png = out / f"{variant}_spec.png"
        return Response(png.read_bytes(), media_type="image/png")

    @app.post("/auralize")
    def auralize(body: dict):
        rir_id = body.get("rir_id", "")
        variant = body.get("variant", "material")
        if variant not in VARIANTS:
            raise HTTPException(422, f"variant must be one of {VARIANTS}")
        out = _load_cached(rir_id)

        if "audio_b64" in body:
            try:
                samples, rate = fileio.wav_read(base64.b64decode(body["audio_b64"]))
            except Exception:
                raise HTTPException(415, "could not parse WAV payload")
            if rate != dsp.SAMPLE_RATE or samples.shape[0] != 1:
                raise HTTPException(
                    415, f"need mono {dsp.SAMPLE_RATE} Hz WAV, got "
                         f"{samples.shape[0]}ch {rate} Hz"
                )
            dry = samples[0]
        else:
            name = body.get("source", "click")
            if name not in CLIP_NAMES:
                raise HTTPException(415, f"unknown builtin clip {name}")
            dry = builtin_clip(name)

        if variant == "delta":
            ident = np.zeros((2, dsp.RIR_SAMPLES))
            ident[:, 0] = 1.0
            rir = dsp.RIRWaveform(ident)
        elif variant == "ground_truth":
            meta = json.loads((out / "meta.json").read_text())
            gt = _ground_truth_rir(state, meta)
            if gt is None:
                raise HTTPException(
                    404, "no stored ground truth for this scene/assignment"
                )
            rir = gt
        else:
            samples, rate = fileio.wav_read(out / f"{variant}.wav")
            rir = dsp.RIRWaveform(samples, rate, samples.shape[1] / rate)
        wet = dsp.convolve_rir(rir, dry)
        return Response(_wav_bytes(wet, dsp.SAMPLE_RATE), media_type="audio/wav")

    return app


def _generate_into_cache(state: AuralizationState, entry, assignment: dict, out: Path):
    from .scenes import MaterialAssignment, render_observation

    scene = entry["scene"]
    obs = render_observation(
        scene, MaterialAssignment(assignment), state.catalog, size=state.man.image_size
    )
    v, d, m = observation_tensors(obs.image, obs.depth, obs.mask, state.catalog)
    with torch.no_grad():
        a_s, a_m = state.net(v[None], d[None], m[None])
    out.mkdir(parents=True, exist_ok=True)
    meta = {
        "scene_id": entry["scene_id"],
        "assignment": assignment,
        "rt60": {},
        "c50": {},
    }
    for name, spec_t in (("spatial", a_s[0]), ("material", a_m[0])):
        mags = np.asarray(spec_t, dtype=np.float64)
        spec = dsp.Spectrogram(mags)
        inv = dsp.invert_magnitude(spec, iterations=32)
        fileio.wav_write(out / f"{name}.wav", inv.waveform.samples,
                         dsp.SAMPLE_RATE, "float32")
        fileio.specbin_write(out / f"{name}.spec.bin", spec)
        (out / f"{name}_spec.png").write_bytes(spectrogram_png_bytes(mags))
        rt60, c50 = _analyze(inv.waveform.samples, dsp.SAMPLE_RATE)
        meta["rt60"][name] = rt60
        meta["c50"][name] = c50
    (out / "meta.json").write_text(json.dumps(meta, indent=1, sort_keys=True))


def _ground_truth_rir(state: AuralizationState, meta: dict):
    """Stored simulator RIR when the (scene, assignment) matches a sample."""
    scene_id = meta["scene_id"]
    entry = state.scenes.get(scene_id)
    if entry is None:
        return None
    ref = entry["record"]
    want = tuple(meta["assignment"][s] for s in entry["scene"].surfaces)
    for split in ("matc", "us", "uu", "uk"):
        for r in state.man.records(split):
            if r.scene_seed != ref.scene_seed or r.pose_variant != ref.pose_variant:
                continue
            have = state.man.configs[r.config_id][: len(want)]
            if tuple(have) == want:
                return load_rir(state.man.sample_dir(r))
    return None
