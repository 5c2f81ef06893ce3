"""Labelled leaf-image corpora: directory ingestion, synthetic generation, splits and batching."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .container import load_arrays, save_arrays
from .losses import GroundTruthBatch

log = logging.getLogger(__name__)

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg"}
SEPARATOR = "__"


class DataError(ValueError):
    pass


@dataclass
class LabeledImage:
    pixels: np.ndarray  # 3 x H x W in [0, 1]
    plant_id: int
    disease_id: int
    source: str


@dataclass
class Subset:
    """One split, stored as stacked arrays."""

    images: np.ndarray  # N x 3 x H x W float32
    plant: np.ndarray
    disease: np.ndarray
    ids: list[str]
    n_plant: int
    n_disease: int

    def __len__(self) -> int:
        return len(self.ids)

    def __iter__(self) -> Iterator[LabeledImage]:
        for i in range(len(self)):
            yield LabeledImage(self.images[i], int(self.plant[i]), int(self.disease[i]), self.ids[i])

    def take(self, idx) -> "Subset":
        idx = np.asarray(idx, dtype=np.int64)
        return Subset(self.images[idx], self.plant[idx], self.disease[idx], [self.ids[i] for i in idx],
                      self.n_plant, self.n_disease)


@dataclass
class DatasetSplit:
    train: Subset
    val: Subset
    test: Subset
    plant_names: list[str]
    disease_names: list[str]
    joint_pairs: list[tuple[int, int]] = field(default_factory=list)
    skipped: int = 0

    def __post_init__(self):
        if not self.joint_pairs:
            pairs = set()
            for s in (self.train, self.val, self.test):
                pairs.update(zip(s.plant.tolist(), s.disease.tolist()))
            self.joint_pairs = sorted(pairs)

    @property
    def n_plant(self) -> int:
        return len(self.plant_names)

    @property
    def n_disease(self) -> int:
        return len(self.disease_names)

    @property
    def image_shape(self) -> tuple[int, ...]:
        return self.train.images.shape[1:]


def split_indices(n: int, seed: int, test_fraction: float = 0.2, val_fraction: float = 0.1):
    """Seeded shuffle; the first ``test_fraction`` is test, the last ``val_fraction`` of the rest is val."""
    perm = np.random.default_rng(seed).permutation(n)
    n_test = int(round(n * test_fraction))
    test, rest = perm[:n_test], perm[n_test:]
    train, val = split_validation(rest, val_fraction)
    return np.sort(train), np.sort(val), np.sort(test)


def split_validation(train_idx: np.ndarray, val_fraction: float = 0.1):
    n_val = int(round(len(train_idx) * val_fraction))
    if n_val == 0:
        return train_idx, train_idx[:0]
    return train_idx[:-n_val], train_idx[-n_val:]


def parse_class_dir(name: str) -> tuple[str, str]:
    """``Tomato__Late_blight`` -> (``Tomato``, ``Late_blight``)."""
    parts = name.split(SEPARATOR)
    if len(parts) != 2 or not parts[0] or not parts[1]:
        raise DataError(f"class directory {name!r} is not of the form <plant>{SEPARATOR}<disease>")
    return parts[0], parts[1]


def _load_image(path: Path, size: tuple[int, int]) -> np.ndarray:
    from PIL import Image

    with Image.open(path) as im:
        im = im.convert("RGB")
        if im.size != (size[1], size[0]):
            im = im.resize((size[1], size[0]), Image.BILINEAR)
        arr = np.asarray(im, dtype=np.float32) / 255.0
    return np.ascontiguousarray(arr.transpose(2, 0, 1))


def _scan(root: Path) -> list[tuple[Path, str, str]]:
    if not root.is_dir():
        raise DataError(f"{root} is not a directory")
    entries = []
    class_dirs = sorted(p for p in root.iterdir() if p.is_dir())
    if not class_dirs:
        raise DataError(f"{root} contains no class directories")
    for d in class_dirs:
        plant, disease = parse_class_dir(d.name)
        files = sorted(p for p in d.rglob("*") if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES)
        if not files:
            raise DataError(f"class directory {d.name!r} holds no images")
        entries.extend((f, plant, disease) for f in files)
    return entries


def _decode(entries, root: Path, size, plant_vocab, disease_vocab):
    images, plant, disease, ids = [], [], [], []
    skipped = 0
    for path, p, d in entries:
        try:
            images.append(_load_image(path, size))
        except Exception as exc:  # PIL raises a zoo of types for corrupt files
            log.warning("skipping undecodable image %s: %s", path, exc)
            skipped += 1
            continue
        plant.append(plant_vocab[p])
        disease.append(disease_vocab[d])
        ids.append(str(path.relative_to(root)))
    if not images:
        return None, skipped
    sub = Subset(np.stack(images), np.array(plant, dtype=np.int64), np.array(disease, dtype=np.int64), ids,
                 len(plant_vocab), len(disease_vocab))
    return sub, skipped


def ingest_directory(root, image_size: tuple[int, int] = (32, 32), seed: int = 0,
                     test_fraction: float = 0.2, val_fraction: float = 0.1) -> DatasetSplit:
    """Read a ``<plant>__<disease>/`` folder tree into train/val/test.

    If ``root`` has ``train/`` and ``test/`` subdirectories those define the
    test set directly and only the validation split is drawn (from train).
    Split membership depends only on the sorted file list and ``seed``.
    """
    root = Path(root)
    explicit = (root / "train").is_dir() and (root / "test").is_dir()
    if explicit:
        train_entries, test_entries = _scan(root / "train"), _scan(root / "test")
        all_entries = train_entries + test_entries
    else:
        all_entries = _scan(root)
    plant_names = sorted({p for _, p, _ in all_entries})
    disease_names = sorted({d for _, _, d in all_entries})
    pv = {n: i for i, n in enumerate(plant_names)}
    dv = {n: i for i, n in enumerate(disease_names)}
    size = tuple(int(v) for v in image_size)

    if explicit:
        train_full, sk1 = _decode(train_entries, root, size, pv, dv)
        test, sk2 = _decode(test_entries, root, size, pv, dv)
        if train_full is None or test is None:
            raise DataError("no decodable images in train/ or test/")
        perm = np.random.default_rng(seed).permutation(len(train_full))
        tr, va = split_validation(perm, val_fraction)
        return DatasetSplit(train_full.take(np.sort(tr)), train_full.take(np.sort(va)), test,
                            plant_names, disease_names, skipped=sk1 + sk2)

    full, skipped = _decode(all_entries, root, size, pv, dv)
    if full is None:
        raise DataError(f"no decodable images under {root}")
    tr, va, te = split_indices(len(full), seed, test_fraction, val_fraction)
    return DatasetSplit(full.take(tr), full.take(va), full.take(te), plant_names, disease_names, skipped=skipped)


# ---------------------------------------------------------------------------
# synthetic corpus


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters of the correlated-label toy corpus.

    ``compatibility`` lists the (plant, disease) pairs that exist; only those
    are rendered, so the two labels are statistically dependent unless the
    full product is allowed.  ``noise_level`` is the std of additive pixel
    noise and also scales a per-sample shift of the disease motif.
    """

    n_plants: int = 4
    n_diseases: int = 6
    compatibility: tuple[tuple[int, int], ...] = ()
    samples_per_pair: int = 30
    image_size: tuple[int, int] = (32, 32)
    noise_level: float = 0.2
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "compatibility", tuple(sorted({(int(p), int(d)) for p, d in self.compatibility})))
        object.__setattr__(self, "image_size", tuple(int(v) for v in self.image_size))
        self.validate()

    def validate(self) -> None:
        if self.n_plants < 1 or self.n_diseases < 1:
            raise DataError("need at least one plant and one disease")
        if not self.compatibility:
            raise DataError("compatibility set is empty")
        for p, d in self.compatibility:
            if not (0 <= p < self.n_plants and 0 <= d < self.n_diseases):
                raise DataError(f"pair ({p}, {d}) lies outside {self.n_plants} x {self.n_diseases}")
        plants = {p for p, _ in self.compatibility}
        if plants != set(range(self.n_plants)):
            raise DataError(f"plants {sorted(set(range(self.n_plants)) - plants)} have no allowed disease")
        if self.samples_per_pair < 1:
            raise DataError("samples_per_pair must be positive")
        if self.noise_level < 0:
            raise DataError("noise_level must be non-negative")
        if min(self.image_size) < 8:
            raise DataError("synthetic images must be at least 8x8")


DEFAULT_COMPATIBILITY = ((0, 0), (0, 1), (0, 2), (1, 2), (1, 3), (2, 3), (2, 4), (3, 4), (3, 5), (3, 0))


def default_synthetic_spec(**overrides) -> SyntheticSpec:
    """4 plants, 6 diseases, 10 allowed pairs (a ring: each disease shared by two plants)."""
    kw = dict(n_plants=4, n_diseases=6, compatibility=DEFAULT_COMPATIBILITY, samples_per_pair=30,
              image_size=(32, 32), noise_level=0.2, seed=0)
    kw.update(overrides)
    return SyntheticSpec(**kw)


def _plant_background(plant: int, n_plants: int, H: int, W: int) -> np.ndarray:
    """Hue family plus an oriented stripe texture; both are fixed by the plant id."""
    hue = plant / max(n_plants, 1)
    base = 0.5 + 0.35 * np.cos(2 * np.pi * (hue + np.array([0.0, 1 / 3, 2 / 3])))
    yy, xx = np.mgrid[0:H, 0:W] / max(H, W)
    angle = np.pi * plant / max(n_plants, 1)
    freq = 3 + (plant % 3)
    stripes = 0.12 * np.sin(2 * np.pi * freq * (xx * np.cos(angle) + yy * np.sin(angle)))
    return np.clip(base[:, None, None] + stripes[None], 0, 1)


def _disease_motif(disease: int, H: int, W: int) -> np.ndarray:
    """Binary mask of a centred shape; one shape family per disease id."""
    yy, xx = np.mgrid[0:H, 0:W]
    cy, cx = (H - 1) / 2, (W - 1) / 2
    dy, dx = (yy - cy) / H, (xx - cx) / W
    r = np.hypot(dy, dx)
    kind = disease % 8
    if kind == 0:
        m = r < 0.18
    elif kind == 1:
        m = (np.abs(dy) < 0.16) & (np.abs(dx) < 0.16)
    elif kind == 2:
        m = (np.abs(dy) < 0.05) | (np.abs(dx) < 0.05)
        m &= r < 0.3
    elif kind == 3:
        m = (r > 0.14) & (r < 0.24)
    elif kind == 4:
        m = np.abs(dy - dx) < 0.06
        m &= r < 0.32
    elif kind == 5:
        m = (np.abs(dy) < 0.07) & (np.abs(dx) < 0.3)
    elif kind == 6:
        m = (np.abs(dx) < 0.07) & (np.abs(dy) < 0.3)
    else:
        m = ((np.floor((yy / H) * 6) + np.floor((xx / W) * 6)) % 2 == 0) & (r < 0.3)
    return m.astype(np.float64)


def render_pair(plant: int, disease: int, spec: SyntheticSpec, rng: np.random.Generator | None = None) -> np.ndarray:
    H, W = spec.image_size
    img = _plant_background(plant, spec.n_plants, H, W)
    motif = _disease_motif(disease, H, W)
    if rng is not None and spec.noise_level > 0:
        max_shift = int(round(spec.noise_level * H / 4))
        if max_shift:
            sy, sx = rng.integers(-max_shift, max_shift + 1, size=2)
            motif = np.roll(motif, (int(sy), int(sx)), axis=(0, 1))
    lesion = np.array([0.35, 0.2, 0.05])[:, None, None]
    img = img * (1 - motif[None]) + lesion * motif[None]
    if rng is not None and spec.noise_level > 0:
        img = img + rng.normal(0.0, spec.noise_level, size=img.shape)
    return np.clip(img, 0, 1).astype(np.float32)


def generate_synthetic(spec: SyntheticSpec, test_fraction: float = 0.2, val_fraction: float = 0.1) -> DatasetSplit:
    rng = np.random.default_rng(spec.seed)
    images, plant, disease, ids = [], [], [], []
    for p, d in spec.compatibility:
        for k in range(spec.samples_per_pair):
            images.append(render_pair(p, d, spec, rng))
            plant.append(p)
            disease.append(d)
            ids.append(f"synthetic/p{p}_d{d}/{k:04d}")
    full = Subset(np.stack(images), np.array(plant, dtype=np.int64), np.array(disease, dtype=np.int64), ids,
                  spec.n_plants, spec.n_diseases)
    tr, va, te = split_indices(len(full), spec.seed, test_fraction, val_fraction)
    return DatasetSplit(
        full.take(tr), full.take(va), full.take(te),
        [f"plant{i}" for i in range(spec.n_plants)], [f"disease{i}" for i in range(spec.n_diseases)],
    )


# ---------------------------------------------------------------------------
# batching and caching


@dataclass
class Batch:
    images: np.ndarray
    plant: np.ndarray
    disease: np.ndarray
    ids: list[str]
    truth: GroundTruthBatch


def epoch_order(n: int, seed: int, epoch: int) -> np.ndarray:
    return np.random.default_rng([seed, epoch]).permutation(n)


def batches(split: Subset, batch_size: int, seed: int, epoch: int, shuffle: bool = True) -> Iterator[Batch]:
    """Batches of one epoch; the order is a pure function of (seed, epoch).  The last partial batch is kept."""
    n = len(split)
    if n == 0:
        raise DataError("cannot batch an empty split")
    if batch_size < 1:
        raise ValueError("batch_size must be positive")
    order = epoch_order(n, seed, epoch) if shuffle else np.arange(n)
    for start in range(0, n, batch_size):
        idx = order[start:start + batch_size]
        yield Batch(
            split.images[idx], split.plant[idx], split.disease[idx], [split.ids[i] for i in idx],
            GroundTruthBatch(split.plant[idx], split.disease[idx], split.n_plant, split.n_disease),
        )


def save_dataset(split: DatasetSplit, path) -> Path:
    arrays, meta = {}, {
        "plant_names": split.plant_names,
        "disease_names": split.disease_names,
        "joint_pairs": [list(p) for p in split.joint_pairs],
        "skipped": split.skipped,
        "ids": {},
    }
    for name in ("train", "val", "test"):
        s: Subset = getattr(split, name)
        arrays[f"{name}.images"] = s.images
        arrays[f"{name}.plant"] = s.plant
        arrays[f"{name}.disease"] = s.disease
        meta["ids"][name] = s.ids
    return save_arrays(path, arrays, meta)


def load_dataset(path) -> DatasetSplit:
    arrays, meta = load_arrays(path)
    n_p, n_d = len(meta["plant_names"]), len(meta["disease_names"])
    subsets = {
        name: Subset(arrays[f"{name}.images"], arrays[f"{name}.plant"], arrays[f"{name}.disease"],
                     list(meta["ids"][name]), n_p, n_d)
        for name in ("train", "val", "test")
    }
    return DatasetSplit(subsets["train"], subsets["val"], subsets["test"], meta["plant_names"],
                        meta["disease_names"], [tuple(p) for p in meta["joint_pairs"]], meta["skipped"])


def nearest_centroid_accuracy(train: Subset, test: Subset, task: str = "plant") -> float:
    """Raw-pixel nearest-centroid accuracy; a learnability check for synthetic corpora."""
    y_tr = getattr(train, task)
    y_te = getattr(test, task)
    X_tr = train.images.reshape(len(train), -1).astype(np.float64)
    X_te = test.images.reshape(len(test), -1).astype(np.float64)
    classes = np.unique(y_tr)
    centroids = np.stack([X_tr[y_tr == c].mean(axis=0) for c in classes])
    d = ((X_te[:, None, :] - centroids[None]) ** 2).sum(axis=2)
    pred = classes[np.argmin(d, axis=1)]
    return float(np.mean(pred == y_te))


def subset_from_arrays(images: np.ndarray, plant: Sequence[int], disease: Sequence[int], n_plant: int,
                       n_disease: int, prefix: str = "sample") -> Subset:
    n = len(images)
    return Subset(np.asarray(images, dtype=np.float32), np.asarray(plant, dtype=np.int64),
                  np.asarray(disease, dtype=np.int64), [f"{prefix}{i}" for i in range(n)], n_plant, n_disease)
