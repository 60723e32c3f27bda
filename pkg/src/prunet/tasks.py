"""Sequence-task data: generators and exact oracles for the memorization
and adding machines, a byte-level character corpus loader, and an IDX
image-file reader/writer.

All randomness flows through numpy's PCG64 generator via seeded_rng, so
a (seed, parameters) pair reproduces a dataset bit-for-bit. Generators
own their rng; datasets are immutable once built.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import DataError

RNG_ALGORITHM = "numpy-pcg64"

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


def seeded_rng(seed: int) -> np.random.Generator:
    """A PCG64 generator; identical seeds give identical streams."""
    return np.random.Generator(np.random.PCG64(seed))


# ---------------------------------------------------------------------------
# memorization machine: reproduce the first few +/-1 symbols after noise
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MemorizationInstance:
    """inputs: (I+N, 1) scalars, first I entries +/-1, rest Gaussian noise;
    target: those first I entries."""

    inputs: np.ndarray
    target: np.ndarray


def memorization_oracle(inputs: np.ndarray, i_bits: int) -> np.ndarray:
    """The machine's exact output: the first i_bits scalars, in order."""
    flat = np.asarray(inputs, dtype=np.float64).reshape(-1)
    if i_bits > flat.size:
        raise DataError(f"oracle needs {i_bits} symbols, sequence has {flat.size}")
    return flat[:i_bits].copy()


def gen_memorization(i_bits: int, n_noise: int, delta2: float, count: int,
                     rng: np.random.Generator) -> list:
    """Independent instances: I fair +/-1 symbols then N Gaussian noise
    entries of variance delta2."""
    if i_bits < 1 or n_noise < 0 or count < 1:
        raise DataError(
            f"invalid memorization setting: I={i_bits}, N={n_noise}, count={count}"
        )
    if delta2 < 0:
        raise DataError(f"noise variance must be >= 0, got {delta2}")
    std = float(np.sqrt(delta2))
    out = []
    for _ in range(count):
        bits = rng.integers(0, 2, size=i_bits) * 2.0 - 1.0
        noise = rng.normal(0.0, std, size=n_noise) if n_noise else np.empty(0)
        seq = np.concatenate([bits, noise]).reshape(-1, 1)
        out.append(MemorizationInstance(inputs=seq, target=memorization_oracle(seq, i_bits)))
    return out


# ---------------------------------------------------------------------------
# adding machine: sum the two values flagged by the marker channel
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AddingInstance:
    """inputs: (N, 2) rows (value, marker); exactly two markers are 1;
    target: sum of the two flagged values."""

    inputs: np.ndarray
    target: float


def adding_oracle(inputs: np.ndarray) -> float:
    """The machine's exact output: sum over t of value_t * marker_t."""
    arr = np.asarray(inputs, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise DataError(f"adding inputs must be (N, 2), got {arr.shape}")
    return float(arr[:, 0] @ arr[:, 1])


def gen_adding(n_steps: int, delta2: float, count: int,
               rng: np.random.Generator) -> list:
    """Instances with Gaussian values and a uniformly chosen unordered
    pair of distinct marker positions."""
    if n_steps < 2:
        raise DataError(f"adding needs N >= 2, got {n_steps}")
    if delta2 < 0:
        raise DataError(f"value variance must be >= 0, got {delta2}")
    std = float(np.sqrt(delta2))
    out = []
    for _ in range(count):
        values = rng.normal(0.0, std, size=n_steps)
        markers = np.zeros(n_steps)
        pos = rng.choice(n_steps, size=2, replace=False)
        markers[pos] = 1.0
        seq = np.column_stack([values, markers])
        out.append(AddingInstance(inputs=seq, target=adding_oracle(seq)))
    return out


# ---------------------------------------------------------------------------
# character corpus
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CharDataset:
    """Byte-level corpus: alphabet (distinct byte values in first-appearance
    order), per-line index sequences, and a prefix train/test split."""

    alphabet: tuple
    sequences: tuple
    train_fraction: float

    @property
    def alphabet_size(self) -> int:
        return len(self.alphabet)

    def split(self):
        cut = int(len(self.sequences) * self.train_fraction)
        return self.sequences[:cut], self.sequences[cut:]


def load_char_corpus(path, train_fraction: float = 0.9) -> CharDataset:
    """Newline-delimited byte text -> index sequences.

    Lines shorter than 2 symbols are dropped (a shifted prediction target
    needs at least one successor). The newline itself is not part of any
    sequence, so it never enters the alphabet.
    """
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as e:
        raise DataError(f"cannot read corpus {path}: {e}") from e
    if not raw:
        raise DataError(f"corpus {path} is empty")
    lines = [ln for ln in raw.split(b"\n") if len(ln) >= 2]
    if not lines:
        raise DataError(f"corpus {path} has no line with >= 2 symbols")
    index = {}
    for ln in lines:
        for byte in ln:
            if byte not in index:
                index[byte] = len(index)
    if len(index) < 2:
        raise DataError(f"corpus {path} needs >= 2 distinct symbols")
    seqs = tuple(np.array([index[b] for b in ln], dtype=np.int64) for ln in lines)
    return CharDataset(
        alphabet=tuple(index.keys()),
        sequences=seqs,
        train_fraction=train_fraction,
    )


def chunk_sequences(seqs, chunk_len: int) -> list:
    """Cut each sequence into consecutive fixed-length chunks.

    Tails shorter than chunk_len are dropped, so all chunks batch
    uniformly. With the shift-by-one target convention a chunk of
    chunk_len symbols yields chunk_len - 1 prediction steps.
    """
    if chunk_len < 2:
        raise DataError(f"chunk_len must be >= 2, got {chunk_len}")
    chunks = []
    for seq in seqs:
        for start in range(0, len(seq) - chunk_len + 1, chunk_len):
            chunks.append(np.asarray(seq[start:start + chunk_len]))
    return chunks


# ---------------------------------------------------------------------------
# MNIST-style IDX files
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MnistDataset:
    """28x28 grayscale images scaled to [0, 1] plus integer labels; each
    image doubles as a length-28 sequence of 28-dim row vectors."""

    images: np.ndarray
    labels: np.ndarray

    def __len__(self):
        return self.images.shape[0]

    def row_sequences(self) -> np.ndarray:
        """(count, 28, 28) view: axis 1 indexes time (rows top to bottom)."""
        return self.images


def _read_exact(fh, n, path, what):
    data = fh.read(n)
    if len(data) != n:
        raise DataError(f"{path}: truncated file while reading {what}")
    return data


def load_mnist_idx(images_path, labels_path) -> MnistDataset:
    """Parse the big-endian IDX pair; counts must match across files."""
    with open(images_path, "rb") as fh:
        magic, count, rows, cols = struct.unpack(
            ">IIII", _read_exact(fh, 16, images_path, "image header")
        )
        if magic != IDX_IMAGES_MAGIC:
            raise DataError(
                f"{images_path}: bad magic 0x{magic:08x}, "
                f"expected 0x{IDX_IMAGES_MAGIC:08x}"
            )
        if rows != 28 or cols != 28:
            raise DataError(f"{images_path}: expected 28x28 images, got {rows}x{cols}")
        pixels = _read_exact(fh, count * rows * cols, images_path, "pixel data")
    with open(labels_path, "rb") as fh:
        magic, label_count = struct.unpack(
            ">II", _read_exact(fh, 8, labels_path, "label header")
        )
        if magic != IDX_LABELS_MAGIC:
            raise DataError(
                f"{labels_path}: bad magic 0x{magic:08x}, "
                f"expected 0x{IDX_LABELS_MAGIC:08x}"
            )
        label_bytes = _read_exact(fh, label_count, labels_path, "label data")
    if count != label_count:
        raise DataError(
            f"count mismatch: {count} images in {images_path} vs "
            f"{label_count} labels in {labels_path}"
        )
    images = np.frombuffer(pixels, dtype=np.uint8).reshape(count, rows, cols)
    labels = np.frombuffer(label_bytes, dtype=np.uint8).astype(np.int64)
    if labels.size and labels.max() > 9:
        raise DataError(f"{labels_path}: label {labels.max()} outside 0..9")
    return MnistDataset(images=images.astype(np.float64) / 255.0, labels=labels)


def save_mnist_idx(images: np.ndarray, labels: np.ndarray,
                   images_path, labels_path) -> None:
    """Write byte images (count, 28, 28) and labels as an IDX pair."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    if images.ndim != 3 or images.shape[1:] != (28, 28):
        raise DataError(f"images must be (count, 28, 28) bytes, got {images.shape}")
    if labels.shape != (images.shape[0],):
        raise DataError(
            f"count mismatch: {images.shape[0]} images vs {labels.shape} labels"
        )
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, images.shape[0], 28, 28))
        fh.write(images.tobytes())
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">II", IDX_LABELS_MAGIC, labels.shape[0]))
        fh.write(labels.tobytes())


# ---------------------------------------------------------------------------
# line-oriented instance export: inputs, then `|`, then target(s)
# ---------------------------------------------------------------------------


def save_instances(instances, path) -> None:
    """One instance per line: flattened input values, ` | `, target values.

    Values are written with repr so float64 round-trips exactly.
    """
    with open(path, "w", encoding="ascii") as fh:
        for inst in instances:
            xs = " ".join(repr(float(v)) for v in np.asarray(inst.inputs).reshape(-1))
            if isinstance(inst, MemorizationInstance):
                tgt = " ".join(repr(float(v)) for v in inst.target)
            elif isinstance(inst, AddingInstance):
                tgt = repr(float(inst.target))
            else:
                raise DataError(f"cannot export {type(inst).__name__}")
            fh.write(f"{xs} | {tgt}\n")


def _parse_line(line, path, lineno):
    if "|" not in line:
        raise DataError(f"{path}:{lineno}: missing '|' separator")
    left, right = line.split("|", 1)
    try:
        xs = [float(v) for v in left.split()]
        tgt = [float(v) for v in right.split()]
    except ValueError as e:
        raise DataError(f"{path}:{lineno}: bad value ({e})") from e
    return xs, tgt


def load_memorization(path) -> list:
    """Read instances written by save_instances (1-dim inputs)."""
    out = []
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            xs, tgt = _parse_line(line, path, lineno)
            out.append(MemorizationInstance(
                inputs=np.array(xs).reshape(-1, 1),
                target=np.array(tgt),
            ))
    return out


def load_adding(path) -> list:
    """Read instances written by save_instances (2-dim inputs, scalar target)."""
    out = []
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            xs, tgt = _parse_line(line, path, lineno)
            if len(xs) % 2 or len(tgt) != 1:
                raise DataError(f"{path}:{lineno}: malformed adding instance")
            out.append(AddingInstance(
                inputs=np.array(xs).reshape(-1, 2),
                target=tgt[0],
            ))
    return out
