"""Synthetic two-modality tracklet benchmark: generation, augmentation,
on-disk format, and the identity-balanced cross-modality batch sampler.

Each identity is a low-frequency spatial pattern plus a moving stripe
whose phase advances by an identity-specific speed every frame; the start
phase is random per tracklet, so a single frame reveals the stripe but not
its speed. Cross-frame interaction is therefore genuinely informative in a
way per-frame pooling cannot recover. Visible tracklets mix the pattern
into three channels through an identity color; infrared collapses the same
field to one band with an offset and its own noise level.

On disk: root/manifest.tsv lists (tracklet id, identity, modality, camera,
frame count, relative path); frames live per tracklet as uint8 records in
the package container format, normalized to [0, 1] on load.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import checkpoint
from .errors import ConfigError, DataError
from .rng import Rng

VISIBLE = "visible"
INFRARED = "infrared"

_VIS_CAMERAS = (0, 1)
_IR_CAMERAS = (2, 3)
_GOLDEN = 0.618033988749895


@dataclass(frozen=True)
class SyntheticSpec:
    num_train_identities: int = 20
    num_test_identities: int = 10
    tracklets_per_identity: int = 2   # per identity per modality
    frames: int = 4
    image_h: int = 32
    image_w: int = 16
    noise_visible: float = 0.03
    noise_infrared: float = 0.05
    pattern_amp: float = 0.2
    stripe_amp: float = 0.2
    # The identity pattern shows clean in one random frame per tracklet;
    # the rest carry a random distractor identity's pattern at this
    # fraction of full strength (a passer-by crossing the tracklet).
    occlusion: float = 0.25

    @property
    def num_identities(self) -> int:
        return self.num_train_identities + self.num_test_identities


@dataclass(frozen=True)
class Tracklet:
    tracklet_id: int
    identity: int
    modality: str
    camera: int
    frame_count: int
    path: str


@dataclass
class Dataset:
    root: Path
    tracklets: list[Tracklet]
    num_train_identities: int

    def __post_init__(self):
        self._cache: dict[int, np.ndarray] = {}

    @property
    def train(self) -> list[Tracklet]:
        return [t for t in self.tracklets if t.identity < self.num_train_identities]

    @property
    def test(self) -> list[Tracklet]:
        return [t for t in self.tracklets if t.identity >= self.num_train_identities]

    def load_frames(self, tracklet: Tracklet) -> np.ndarray:
        """[T, H, W, 3] float64 in [0, 1]; cached after first read."""
        cached = self._cache.get(tracklet.tracklet_id)
        if cached is None:
            records = checkpoint.load(self.root / tracklet.path)
            cached = records["frames"].astype(np.float64) / 255.0
            self._cache[tracklet.tracklet_id] = cached
        return cached.copy()


# -- identity signal ----------------------------------------------------------


def _identity_latent(identity: int, spec: SyntheticSpec, rng: Rng):
    """Per-identity pattern, channel color, stripe frequency and speed."""
    id_rng = rng.split(f"identity{identity}")
    h, w = spec.image_h, spec.image_w
    yy = np.linspace(0.0, 1.0, h)[:, None]
    xx = np.linspace(0.0, 1.0, w)[None, :]
    pattern = np.zeros((h, w))
    for u in range(3):
        for v in range(3):
            amp = id_rng.normal()
            phase = id_rng.uniform(high=2.0 * np.pi)
            pattern += amp * np.cos(np.pi * u * yy + phase) * np.cos(np.pi * v * xx)
    pattern /= max(1e-9, np.abs(pattern).max())
    # Hue varies per identity, mean brightness does not: the infrared
    # projection must not leak identity through a scalar brightness cue.
    color = id_rng.uniform((3,), low=0.4, high=1.0)
    color *= 0.7 / color.mean()
    stripe_freq = 1 + identity % 2
    # Low-discrepancy spread of per-frame phase speeds across identities.
    speed = 2.0 * np.pi * (0.08 + 0.84 * ((identity * _GOLDEN) % 1.0))
    return pattern, color, stripe_freq, speed


def _render_tracklet(identity: int, modality: str, spec: SyntheticSpec,
                     latents: list, tr_rng: Rng) -> np.ndarray:
    """One frame per step; all but one random clear frame are crossed by a
    distractor identity's pattern at ``occlusion`` strength (plus extra
    noise), the way passers-by corrupt real tracklets. Frame pooling mixes
    the identities; content-aware cross-frame aggregation can prefer the
    clear frame."""
    pattern, color, stripe_freq, speed = latents[identity]
    h, w = spec.image_h, spec.image_w
    xx = np.linspace(0.0, 1.0, w)[None, :]
    phase0 = tr_rng.uniform(high=2.0 * np.pi)
    clear_frame = tr_rng.randint(spec.frames)
    frames = np.zeros((spec.frames, h, w, 3))
    for t in range(spec.frames):
        stripe = np.sin(2.0 * np.pi * stripe_freq * xx + phase0 + t * speed)
        if t == clear_frame:
            content = spec.pattern_amp * pattern
            extra_noise = 1.0
        else:
            distractor = (identity + 1 + tr_rng.randint(len(latents) - 1)) \
                % len(latents)
            content = spec.pattern_amp * spec.occlusion * latents[distractor][0]
            extra_noise = 1.5
        # Amplitudes keep the field inside ~[0.1, 0.9]: quantization should
        # be the only nonlinearity, not clipping.
        field = 0.5 + content + spec.stripe_amp * np.broadcast_to(stripe, (h, w))
        if modality == VISIBLE:
            img = field[:, :, None] * color[None, None, :]
            img = img + tr_rng.normal((h, w, 3),
                                      std=spec.noise_visible * extra_noise)
        else:
            lum = field * color.mean() * 0.85 + 0.12
            img = lum[:, :, None] + tr_rng.normal(
                (h, w, 1), std=spec.noise_infrared * extra_noise)
            img = np.broadcast_to(img, (h, w, 3))
        frames[t] = np.clip(img, 0.0, 1.0)
    return np.round(frames * 255.0).astype(np.uint8)


def generate(spec: SyntheticSpec, seed: int, root) -> Dataset:
    """Write a deterministic dataset; train/test identities are disjoint."""
    if spec.num_identities < 2:
        raise ConfigError("need at least 2 identities")
    root = Path(root)
    (root / "tracklets").mkdir(parents=True, exist_ok=True)
    rng = Rng(seed).split("data-synth")
    latents = [_identity_latent(identity, spec, rng)
               for identity in range(spec.num_identities)]
    rows = []
    tracklet_id = 0
    for identity in range(spec.num_identities):
        for modality in (VISIBLE, INFRARED):
            cameras = _VIS_CAMERAS if modality == VISIBLE else _IR_CAMERAS
            for k in range(spec.tracklets_per_identity):
                tr_rng = rng.split(f"tr{identity}/{modality}/{k}")
                frames = _render_tracklet(identity, modality, spec, latents,
                                          tr_rng)
                rel = f"tracklets/tr{tracklet_id:05d}.vldt"
                checkpoint.save(root / rel, {"frames": frames})
                rows.append(Tracklet(tracklet_id, identity, modality,
                                     cameras[k % len(cameras)], spec.frames, rel))
                tracklet_id += 1
    lines = ["tracklet_id\tidentity\tmodality\tcamera\tframe_count\tpath"]
    for r in rows:
        lines.append(f"{r.tracklet_id}\t{r.identity}\t{r.modality}\t{r.camera}"
                     f"\t{r.frame_count}\t{r.path}")
    (root / "manifest.tsv").write_text("\n".join(lines) + "\n")
    meta = [
        f"num_train_identities = {spec.num_train_identities}",
        f"num_test_identities = {spec.num_test_identities}",
        f"seed = {seed}",
    ]
    (root / "meta.cfg").write_text("\n".join(meta) + "\n")
    return Dataset(root, rows, spec.num_train_identities)


def load_dataset(root) -> Dataset:
    root = Path(root)
    manifest = root / "manifest.tsv"
    if not manifest.exists():
        raise DataError(f"no manifest.tsv under {root}")
    rows = []
    for line in manifest.read_text().splitlines()[1:]:
        tid, identity, modality, camera, count, path = line.split("\t")
        rows.append(Tracklet(int(tid), int(identity), modality, int(camera),
                             int(count), path))
    num_train = None
    meta = root / "meta.cfg"
    if meta.exists():
        for line in meta.read_text().splitlines():
            key, _, value = line.partition("=")
            if key.strip() == "num_train_identities":
                num_train = int(value)
    if num_train is None:
        num_train = len({r.identity for r in rows})
    return Dataset(root, rows, num_train)


# -- augmentation -------------------------------------------------------------


def hflip(frame: np.ndarray) -> np.ndarray:
    return frame[:, ::-1, :].copy()


def pad_crop(frame: np.ndarray, offset_y: int, offset_x: int,
             pad: int = 10) -> np.ndarray:
    """Zero-pad by ``pad`` on every side, then crop back to the original size
    at the given offset; offset == pad is the identity crop."""
    h, w, c = frame.shape
    padded = np.zeros((h + 2 * pad, w + 2 * pad, c), dtype=frame.dtype)
    padded[pad:pad + h, pad:pad + w] = frame
    return padded[offset_y:offset_y + h, offset_x:offset_x + w].copy()


def channel_erase(frame: np.ndarray, channel: int) -> np.ndarray:
    out = frame.copy()
    out[:, :, channel] = 0.0
    return out


def channel_swap(frame: np.ndarray, perm) -> np.ndarray:
    return frame[:, :, list(perm)].copy()


def augment(frame: np.ndarray, rng: Rng, visible: bool, pad: int = 10) -> np.ndarray:
    """Flip, pad+random-crop, and (visible only) channel erase/swap."""
    if rng.uniform() < 0.5:
        frame = hflip(frame)
    oy = rng.randint(2 * pad + 1)
    ox = rng.randint(2 * pad + 1)
    frame = pad_crop(frame, oy, ox, pad=pad)
    if visible:
        if rng.uniform() < 0.5:
            frame = channel_erase(frame, rng.randint(3))
        if rng.uniform() < 0.5:
            frame = channel_swap(frame, rng.permutation(3))
    return frame


# -- batch sampling -----------------------------------------------------------


@dataclass(frozen=True)
class BatchPlan:
    identities: int = 4           # P
    tracklets_per_identity: int = 4  # K, per modality

    @property
    def batch_size(self) -> int:
        return 2 * self.identities * self.tracklets_per_identity


@dataclass
class SequenceBatch:
    frames: np.ndarray        # [n, T, H, W, 3] float64
    labels: np.ndarray        # [n] identity indices
    modalities: np.ndarray    # [n] strings
    cameras: np.ndarray       # [n]
    tracklet_ids: np.ndarray  # [n]


def sample_batch(plan: BatchPlan, dataset: Dataset, tracklets: list[Tracklet],
                 rng: Rng, apply_augment: bool = True,
                 pad: int = 10) -> SequenceBatch:
    """P identities x K tracklets per modality, loaded and optionally
    augmented (consistently across the frames of a tracklet)."""
    by_identity: dict[int, dict[str, list[Tracklet]]] = {}
    for tr in tracklets:
        by_identity.setdefault(tr.identity, {VISIBLE: [], INFRARED: []})
        by_identity[tr.identity][tr.modality].append(tr)
    eligible = sorted(
        identity for identity, mods in by_identity.items()
        if mods[VISIBLE] and mods[INFRARED]
    )
    if len(eligible) < plan.identities:
        raise DataError(
            f"need {plan.identities} identities with both modalities, "
            f"have {len(eligible)}"
        )
    chosen = [eligible[i] for i in rng.choice(len(eligible), plan.identities)]

    picked: list[Tracklet] = []
    for identity in chosen:
        for modality in (VISIBLE, INFRARED):
            pool = by_identity[identity][modality]
            k = plan.tracklets_per_identity
            if len(pool) >= k:
                idx = rng.choice(len(pool), k)
            else:
                idx = rng.integers(k, len(pool))
            picked.extend(pool[int(i)] for i in idx)

    frames, labels, modalities, cameras, ids = [], [], [], [], []
    for tr in picked:
        clip = dataset.load_frames(tr)
        if apply_augment:
            clip = augment_clip(clip, rng, tr.modality == VISIBLE, pad=pad)
        frames.append(clip)
        labels.append(tr.identity)
        modalities.append(tr.modality)
        cameras.append(tr.camera)
        ids.append(tr.tracklet_id)
    return SequenceBatch(np.stack(frames), np.asarray(labels),
                         np.asarray(modalities), np.asarray(cameras),
                         np.asarray(ids))


def augment_clip(clip: np.ndarray, rng: Rng, visible: bool,
                 pad: int = 10) -> np.ndarray:
    """Tracklet-consistent augmentation: decisions are drawn once and applied
    to every frame so the cross-frame signal survives."""
    flip = rng.uniform() < 0.5
    oy = rng.randint(2 * pad + 1)
    ox = rng.randint(2 * pad + 1)
    erase = swap = False
    erase_ch, perm = 0, (0, 1, 2)
    if visible:
        erase = rng.uniform() < 0.5
        erase_ch = rng.randint(3)
        swap = rng.uniform() < 0.5
        perm = tuple(rng.permutation(3))
    out = []
    for frame in clip:
        if flip:
            frame = hflip(frame)
        frame = pad_crop(frame, oy, ox, pad=pad)
        if erase:
            frame = channel_erase(frame, erase_ch)
        if swap:
            frame = channel_swap(frame, perm)
        out.append(frame)
    return np.stack(out)
