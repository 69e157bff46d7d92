"""Episode generation: class sampling, ordering, label encoding, and the
three labeling policies.

An episode binds each participating dataset class to an episode-local
label id drawn from the whole label space, so a 5-way episode with
one-hot length 10 exercises all ten label positions across episodes
rather than always labels 0..4. Step classes are i.i.d. uniform over
the chosen classes; samples within a class are drawn without
replacement.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, EncodingError, SamplingError
from .rng import Xoshiro256, derive_seed

LABELINGS = ("full", "seed", "none")
SCHEMES = ("one-hot", "binary")


@dataclass
class Dataset:
    """Class-indexed sample store; ids are dense 0..n_classes-1."""

    samples: dict[int, np.ndarray]     # class id -> [n, *input_shape]
    input_shape: tuple
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.input_shape = tuple(int(d) for d in self.input_shape)
        ids = sorted(self.samples)
        if not ids:
            raise ContractError("dataset has no classes")
        if ids != list(range(len(ids))):
            raise ContractError(f"class ids must be dense 0..{len(ids) - 1}, got {ids[:5]}...")
        for cid, arr in self.samples.items():
            arr = np.asarray(arr, dtype=np.float64)
            if arr.shape[0] < 1 or arr.shape[1:] != self.input_shape:
                raise ContractError(
                    f"class {cid}: samples shaped {arr.shape}, expected [n, "
                    f"{', '.join(map(str, self.input_shape))}] with n >= 1")
            self.samples[cid] = arr

    @property
    def n_classes(self) -> int:
        return len(self.samples)

    def class_ids(self) -> list[int]:
        return sorted(self.samples)


@dataclass
class EpisodeSpec:
    n_classes: int
    length: int
    labeling: str          # full | seed | none
    scheme: str            # one-hot | binary
    l_label: int
    seed: int

    def __post_init__(self):
        if self.labeling not in LABELINGS:
            raise ContractError(f"labeling must be one of {LABELINGS}, got {self.labeling!r}")
        if self.scheme not in SCHEMES:
            raise ContractError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.n_classes < 1 or self.length < 1:
            raise ContractError(
                f"episode needs n_classes >= 1 and length >= 1, got "
                f"{self.n_classes}/{self.length}")
        if self.l_label < 1:
            raise ContractError(f"l_label must be >= 1, got {self.l_label}")


@dataclass
class Step:
    x: np.ndarray
    y: np.ndarray          # label vector (possibly all-zero)
    class_id: int          # dataset class id (ground truth)
    label_id: int          # episode-local label id bound to the class


@dataclass
class Episode:
    steps: list[Step]
    spec: EpisodeSpec
    label_of_class: dict[int, int]

    def __len__(self) -> int:
        return len(self.steps)

    def classes_present(self) -> set[int]:
        return {s.class_id for s in self.steps}


def encode_label(label_id: int | None, scheme: str, l_label: int) -> np.ndarray:
    """Encode a label id as a vector; None (unknown) encodes as all-zero.

    one-hot sets the id's position; binary writes base-2 digits MSB
    first, left-padded with zeros.
    """
    if scheme not in SCHEMES:
        raise EncodingError(f"unknown label scheme {scheme!r}")
    vec = np.zeros(l_label)
    if label_id is None:
        return vec
    label_id = int(label_id)
    if label_id < 0:
        raise EncodingError(f"label id must be nonnegative, got {label_id}")
    if scheme == "one-hot":
        if label_id >= l_label:
            raise EncodingError(f"one-hot id {label_id} needs length > {label_id}, have {l_label}")
        vec[label_id] = 1.0
        return vec
    if label_id >= 2 ** l_label:
        raise EncodingError(f"binary id {label_id} does not fit in {l_label} bits")
    for pos in range(l_label - 1, -1, -1):
        vec[pos] = float(label_id & 1)
        label_id >>= 1
    return vec


def _label_space(scheme: str, l_label: int) -> int:
    return l_label if scheme == "one-hot" else 2 ** l_label


def _draw_class_sequence(rng: Xoshiro256, chosen: list[int], counts: dict[int, int],
                         length: int) -> list[int]:
    """i.i.d. uniform step classes with rejection when a class runs dry."""
    seq = []
    remaining = dict(counts)
    for t in range(length):
        live = [c for c in chosen if remaining[c] > 0]
        if not live:
            raise SamplingError(
                f"dataset exhausted at step {t}: no chosen class has samples left")
        while True:
            c = chosen[rng.randint(len(chosen))]
            if remaining[c] > 0:
                break
        remaining[c] -= 1
        seq.append(c)
    return seq


def sample_episode(dataset: Dataset, spec: EpisodeSpec) -> Episode:
    """Deterministic episode for (dataset, spec): classes without
    replacement, per-class samples without replacement, labels per the
    spec's labeling policy."""
    if dataset.n_classes < spec.n_classes:
        raise SamplingError(
            f"need {spec.n_classes} classes, dataset has {dataset.n_classes}")
    space = _label_space(spec.scheme, spec.l_label)
    if space < spec.n_classes:
        raise SamplingError(
            f"label space of size {space} cannot bind {spec.n_classes} classes")
    rng = Xoshiro256(derive_seed(spec.seed, "episode"))
    chosen = [dataset.class_ids()[i] for i in rng.sample(dataset.n_classes, spec.n_classes)]
    label_ids = rng.sample(space, spec.n_classes)
    label_of_class = {c: label_ids[i] for i, c in enumerate(chosen)}

    counts = {c: dataset.samples[c].shape[0] for c in chosen}
    seq = _draw_class_sequence(rng, chosen, counts, spec.length)

    pools = {c: list(rng.sample(counts[c], counts[c])) for c in chosen}
    seen: set[int] = set()
    steps = []
    for c in seq:
        x = dataset.samples[c][pools[c].pop()]
        first = c not in seen
        seen.add(c)
        if spec.labeling == "full" or (spec.labeling == "seed" and first):
            y = encode_label(label_of_class[c], spec.scheme, spec.l_label)
        else:
            y = encode_label(None, spec.scheme, spec.l_label)
        steps.append(Step(x=x, y=y, class_id=c, label_id=label_of_class[c]))
    return Episode(steps=steps, spec=spec, label_of_class=label_of_class)


def nway_kshot_episode(dataset: Dataset, n: int, k: int, scheme: str,
                       l_label: int, seed: int) -> tuple[list[Step], Step]:
    """Support set of k labeled samples per class (shuffled) plus one
    unlabeled query from a uniformly chosen support class."""
    if n < 1 or k < 1:
        raise SamplingError(f"need n >= 1 and k >= 1, got {n}/{k}")
    if dataset.n_classes < n:
        raise SamplingError(f"need {n} classes, dataset has {dataset.n_classes}")
    space = _label_space(scheme, l_label)
    if space < n:
        raise SamplingError(f"label space of size {space} cannot bind {n} classes")
    rng = Xoshiro256(derive_seed(seed, "nway"))
    chosen = [dataset.class_ids()[i] for i in rng.sample(dataset.n_classes, n)]
    for c in chosen:
        if dataset.samples[c].shape[0] < k + 1:
            raise SamplingError(
                f"class {c} has {dataset.samples[c].shape[0]} samples, needs {k + 1}")
    label_ids = rng.sample(space, n)
    support = []
    extra = {}
    for i, c in enumerate(chosen):
        idx = rng.sample(dataset.samples[c].shape[0], k + 1)
        for j in idx[:k]:
            support.append(Step(x=dataset.samples[c][j],
                                y=encode_label(label_ids[i], scheme, l_label),
                                class_id=c, label_id=label_ids[i]))
        extra[c] = idx[k]
    rng.shuffle(support)
    qc = chosen[rng.randint(n)]
    qlab = label_ids[chosen.index(qc)]
    query = Step(x=dataset.samples[qc][extra[qc]],
                 y=encode_label(None, scheme, l_label),
                 class_id=qc, label_id=qlab)
    return support, query
