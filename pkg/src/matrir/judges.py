"""Frozen judge networks behind the material-aware metrics (MatC, MatD)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from sklearn.cluster import KMeans

from . import dsp
from .data import EpochSampler, load_sample_tensors
from .dataset import SplitManifest, all_same_config_id, load_observation, load_rir
from .matcher import SmallResNet, freeze


class JudgeError(ValueError):
    pass


class ClusterError(JudgeError):
    pass


def single_material_records(man: SplitManifest, split: str = "train"):
    """Records whose configuration assigns one material everywhere."""
    out = []
    for r in man.records(split):
        t = man.configs[r.config_id]
        if len(set(t)) == 1:
            out.append((r, t[0]))
    return out


def _noisy_spec(man, record, rng) -> torch.Tensor:
    """Ground-truth spectrogram with waveform-domain noise augmentation."""
    rir = load_rir(man.sample_dir(record))
    snr = float(rng.uniform(15.0, 35.0))
    noisy = dsp.add_gaussian_noise(rir, snr, seed=int(rng.integers(0, 2**31)))
    return torch.from_numpy(dsp.stft(noisy).magnitudes).float()


def _class_balance_ok(labels, max_ratio: float = 10.0) -> bool:
    counts = np.bincount(labels)
    counts = counts[counts > 0]
    return counts.max() / counts.min() <= max_ratio


def pretrain_matc_classifier(
    man: SplitManifest,
    catalog,
    epochs: int = 50,
    batch_size: int = 16,
    lr: float = 0.01,
    seed: int = 0,
    width: int = 32,
    noise_prob: float = 0.5,
    log=None,
):
    """Material classifier on single-material ground-truth RIR spectrograms.

    Trains on training scenes only, with Gaussian-noise augmentation in the
    waveform domain. Returns (frozen classifier, held-out accuracy on the
    unseen-scene single-material set).
    """
    pairs = single_material_records(man, "train")
    if not pairs:
        raise JudgeError("no single-material samples in the training split")
    labels = np.array([m for _, m in pairs])
    if not _class_balance_ok(labels):
        raise JudgeError("single-material class imbalance beyond 10:1")

    torch.manual_seed(seed)
    rng = np.random.default_rng(seed)
    clf = SmallResNet(2, len(catalog), width=width, input_pool=4, log_scale=20.0)
    opt = torch.optim.SGD(clf.parameters(), lr=lr, momentum=0.9)
    sched = torch.optim.lr_scheduler.CosineAnnealingLR(opt, T_max=epochs)
    sampler = EpochSampler(len(pairs), batch_size, seed)

    clf.train()
    for epoch in range(epochs):
        total, n = 0.0, 0
        for idx in sampler.epoch():
            specs, ys = [], []
            for i in idx:
                r, m = pairs[i]
                if rng.uniform() < noise_prob:
                    specs.append(_noisy_spec(man, r, rng))
                else:
                    specs.append(load_sample_tensors(man, r, catalog)[3])
                ys.append(m)
            logits = clf(torch.stack(specs))
            loss = F.cross_entropy(logits, torch.tensor(ys))
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += float(loss.detach())
            n += 1
        sched.step()
        if log:
            log({"matc_epoch": epoch, "loss": total / max(n, 1)})

    acc = matc_on_ground_truth(man, catalog, freeze(clf))
    return clf, acc


def _predict_classes(clf, specs, batch_size=16):
    clf.eval()
    outs = []
    with torch.no_grad():
        for lo in range(0, len(specs), batch_size):
            outs.append(clf(specs[lo : lo + batch_size]))
    return torch.cat(outs)


def matc_on_ground_truth(man: SplitManifest, catalog, clf) -> float:
    """Judge accuracy on stored single-material ground-truth RIRs (unseen scenes)."""
    pairs = single_material_records(man, "matc")
    specs = torch.stack(
        [load_sample_tensors(man, r, catalog)[3] for r, _ in pairs]
    )
    logits = _predict_classes(clf, specs)
    preds = logits.argmax(dim=1).numpy()
    truth = np.array([m for _, m in pairs])
    return float((preds == truth).mean() * 100.0)


def compute_matc(model, man: SplitManifest, catalog, clf, batch_size: int = 8) -> float:
    """MatC: judge accuracy on the model's predictions for all-same-material
    masks over unseen scenes."""
    pairs = single_material_records(man, "matc")
    model.eval()
    clf.eval()
    hits = 0
    with torch.no_grad():
        for lo in range(0, len(pairs), batch_size):
            chunk = pairs[lo : lo + batch_size]
            vs, ds, ms, ys = [], [], [], []
            for r, m in chunk:
                v, d, mm = load_sample_tensors(man, r, catalog, with_target=False)
                vs.append(v)
                ds.append(d)
                ms.append(mm)
                ys.append(m)
            _, a_m = model(torch.stack(vs), torch.stack(ds), torch.stack(ms))
            preds = clf(a_m).argmax(dim=1)
            hits += int((preds == torch.tensor(ys)).sum())
    return 100.0 * hits / len(pairs)


@dataclass
class MatDClusters:
    centroids: np.ndarray  # (k, n_materials) probability vectors
    seed: int

    @property
    def k(self) -> int:
        return len(self.centroids)

    def assign(self, distributions: np.ndarray) -> np.ndarray:
        d2 = ((distributions[:, None, :] - self.centroids[None, :, :]) ** 2).sum(-1)
        return d2.argmin(axis=1)


def mask_distribution(mask: np.ndarray, n_materials: int) -> np.ndarray:
    counts = np.bincount(mask.reshape(-1), minlength=n_materials).astype(np.float64)
    return counts / counts.sum()


def record_distribution(man, record, n_materials) -> np.ndarray:
    _, _, mask = load_observation(man.sample_dir(record))
    return mask_distribution(mask, n_materials)


def default_matd_k(n_configs: int, paper_k: int = 36) -> int:
    """k = min(36, configs / 4), keeping clusters populated at desk scale."""
    return max(2, min(paper_k, n_configs // 4))


def fit_matd_clusters(distributions: np.ndarray, k: int, seed: int = 0,
                      n_restarts: int = 50) -> MatDClusters:
    distributions = np.asarray(distributions, dtype=np.float64)
    distinct = np.unique(distributions.round(9), axis=0)
    if len(distinct) < k:
        raise ClusterError(
            f"only {len(distinct)} distinct material distributions for k={k}"
        )
    km = KMeans(n_clusters=k, n_init=n_restarts, random_state=seed)
    km.fit(distributions)
    return MatDClusters(km.cluster_centers_.copy(), seed)


def pretrain_matd_classifier(
    man: SplitManifest,
    catalog,
    clusters: MatDClusters,
    epochs: int = 10,
    batch_size: int = 16,
    lr: float = 1e-3,
    seed: int = 0,
    width: int = 32,
    log=None,
):
    """Cluster-label classifier on training-split ground-truth RIRs.

    Returns (frozen classifier, held-out top-5 accuracy on unseen-scene
    ground truth).
    """
    records = man.records("train")
    n_mat = len(catalog)
    dists = np.stack([record_distribution(man, r, n_mat) for r in records])
    labels = clusters.assign(dists)
    if len(np.unique(labels)) < clusters.k:
        # tolerated: sampling may leave a centroid empty on tiny builds
        pass

    torch.manual_seed(seed)
    clf = SmallResNet(2, clusters.k, width=width, input_pool=4, log_scale=20.0)
    opt = torch.optim.Adam(clf.parameters(), lr=lr)
    sampler = EpochSampler(len(records), batch_size, seed)
    clf.train()
    for epoch in range(epochs):
        total, n = 0.0, 0
        for idx in sampler.epoch():
            specs = torch.stack(
                [load_sample_tensors(man, records[i], catalog)[3] for i in idx]
            )
            ys = torch.tensor(labels[idx])
            loss = F.cross_entropy(clf(specs), ys)
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += float(loss.detach())
            n += 1
        if log:
            log({"matd_epoch": epoch, "loss": total / max(n, 1)})

    top5 = matd_on_ground_truth(man, catalog, clusters, freeze(clf))
    return clf, top5


def _topk_hits(logits: torch.Tensor, truth: np.ndarray, k: int) -> int:
    topk = logits.topk(min(k, logits.shape[1]), dim=1).indices.numpy()
    return int(sum(t in row for t, row in zip(truth, topk)))


def matd_on_ground_truth(man, catalog, clusters, clf,
                         splits=("us", "uu"), top_k: int = 5) -> float:
    records = [r for s in splits for r in man.records(s)]
    n_mat = len(catalog)
    truth = clusters.assign(
        np.stack([record_distribution(man, r, n_mat) for r in records])
    )
    specs = torch.stack([load_sample_tensors(man, r, catalog)[3] for r in records])
    logits = _predict_classes(clf, specs)
    return 100.0 * _topk_hits(logits, truth, top_k) / len(records)


def compute_matd(model, man, catalog, clusters, clf, split: str = "uu",
                 top_k: int = 5, batch_size: int = 8) -> float:
    """MatD: top-5 cluster accuracy of the judge on model predictions."""
    records = man.records(split)
    n_mat = len(catalog)
    truth = clusters.assign(
        np.stack([record_distribution(man, r, n_mat) for r in records])
    )
    model.eval()
    clf.eval()
    hits = 0
    with torch.no_grad():
        for lo in range(0, len(records), batch_size):
            chunk = records[lo : lo + batch_size]
            vs, ds, ms = [], [], []
            for r in chunk:
                v, d, m = load_sample_tensors(man, r, catalog, with_target=False)
                vs.append(v)
                ds.append(d)
                ms.append(m)
            _, a_m = model(torch.stack(vs), torch.stack(ds), torch.stack(ms))
            logits = clf(a_m)
            hits += _topk_hits(logits, truth[lo : lo + batch_size], top_k)
    return 100.0 * hits / len(records)
