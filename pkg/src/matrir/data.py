"""Torch-side loading of dataset samples."""
from __future__ import annotations

import numpy as np
import torch

from .dataset import SplitManifest, SampleRecord, load_observation, load_spectrogram
from .materials import MaterialSpec
from .scenes import MaterialAssignment, SceneSpec, mask_to_palette_image, render_observation


def observation_tensors(v_img: np.ndarray, depth: np.ndarray, mask: np.ndarray,
                        catalog: list[MaterialSpec]):
    """uint8/float arrays -> model input tensors (V 3xHxW, D 1xHxW, M 3xHxW)."""
    v = torch.from_numpy(np.array(v_img, copy=True)).float().permute(2, 0, 1) / 255.0
    d = torch.from_numpy(np.array(depth, copy=True)).float()[None]
    m_img = mask_to_palette_image(mask, catalog)
    m = torch.from_numpy(np.array(m_img, copy=True)).float().permute(2, 0, 1) / 255.0
    return v, d, m


def load_sample_tensors(man: SplitManifest, record: SampleRecord,
                        catalog: list[MaterialSpec], with_target: bool = True):
    """(V, D, M, A) tensors for one sample; A omitted when with_target=False."""
    d = man.sample_dir(record)
    v_img, depth, mask = load_observation(d)
    v, dep, m = observation_tensors(v_img, depth, mask, catalog)
    if not with_target:
        return v, dep, m
    spec = load_spectrogram(d)
    a = torch.from_numpy(spec.magnitudes).float()
    return v, dep, m, a


def batch_tensors(man: SplitManifest, records, catalog, with_target=True):
    parts = [load_sample_tensors(man, r, catalog, with_target) for r in records]
    return tuple(torch.stack(col) for col in zip(*parts))


def synthetic_inputs(scene: SceneSpec, assignment: MaterialAssignment,
                     catalog, image_size: int):
    """Model inputs rendered directly (no dataset sample on disk)."""
    obs = render_observation(scene, assignment, catalog, size=image_size)
    return observation_tensors(obs.image, obs.depth, obs.mask, catalog)


class EpochSampler:
    """Deterministic shuffled batch index stream over a record list."""

    def __init__(self, n: int, batch_size: int, seed: int):
        self.n = n
        self.batch_size = batch_size
        self.rng = np.random.default_rng(seed)

    def epoch(self):
        order = self.rng.permutation(self.n)
        for lo in range(0, self.n, self.batch_size):
            yield order[lo : lo + self.batch_size]


class BatchStream:
    """Endless shuffled batch stream whose full state (including the position
    inside the current epoch) can be checkpointed and restored."""

    def __init__(self, n: int, batch_size: int, seed: int):
        self.n = n
        self.batch_size = batch_size
        self.rng = np.random.default_rng(seed)
        self.perm = None
        self.cursor = 0

    def next_batch(self) -> np.ndarray:
        if self.perm is None or self.cursor >= self.n:
            self.perm = self.rng.permutation(self.n)
            self.cursor = 0
        idx = self.perm[self.cursor : self.cursor + self.batch_size]
        self.cursor += self.batch_size
        return idx

    def state(self) -> dict:
        return {
            "rng": self.rng.bit_generator.state,
            "perm": None if self.perm is None else self.perm.tolist(),
            "cursor": self.cursor,
        }

    def restore(self, state: dict):
        self.rng.bit_generator.state = state["rng"]
        self.perm = None if state["perm"] is None else np.asarray(state["perm"])
        self.cursor = state["cursor"]
