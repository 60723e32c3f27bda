import struct

import numpy as np
import pytest

from prunet import tasks
from prunet.errors import DataError


class TestMemorization:
    def test_zero_variance_noise_is_exactly_zero(self):
        rng = tasks.seeded_rng(0)
        for inst in tasks.gen_memorization(2, 5, 0.0, 20, rng):
            assert np.array_equal(inst.inputs[2:], np.zeros((5, 1)))

    def test_degenerate_no_noise(self):
        rng = tasks.seeded_rng(1)
        for inst in tasks.gen_memorization(2, 0, 1.0, 10, rng):
            assert inst.inputs.shape == (2, 1)
            assert np.array_equal(inst.target, inst.inputs[:, 0])

    def test_bits_are_plus_minus_one(self):
        rng = tasks.seeded_rng(2)
        for inst in tasks.gen_memorization(3, 4, 1.0, 50, rng):
            assert set(np.unique(inst.inputs[:3])) <= {-1.0, 1.0}

    def test_oracle_matches_generator_targets(self):
        rng = tasks.seeded_rng(3)
        for inst in tasks.gen_memorization(4, 6, 2.0, 100, rng):
            assert np.array_equal(
                tasks.memorization_oracle(inst.inputs, 4), inst.target
            )

    def test_oracle_full_copy(self):
        seq = np.array([[1.0], [-1.0], [1.0]])
        assert np.array_equal(tasks.memorization_oracle(seq, 3), [1.0, -1.0, 1.0])

    def test_oracle_length_check(self):
        with pytest.raises(DataError):
            tasks.memorization_oracle(np.zeros((2, 1)), 3)

    def test_determinism(self):
        a = tasks.gen_memorization(2, 5, 1.0, 10, tasks.seeded_rng(42))
        b = tasks.gen_memorization(2, 5, 1.0, 10, tasks.seeded_rng(42))
        for x, y in zip(a, b):
            assert np.array_equal(x.inputs, y.inputs)
            assert np.array_equal(x.target, y.target)

    def test_noise_moments(self):
        rng = tasks.seeded_rng(4)
        insts = tasks.gen_memorization(2, 20, 1.0, 5000, rng)
        noise = np.concatenate([inst.inputs[2:, 0] for inst in insts])
        assert abs(noise.mean()) < 3.0 / np.sqrt(noise.size)
        assert abs(noise.var() - 1.0) < 0.05


class TestAdding:
    def test_forced_positions_at_n2(self):
        rng = tasks.seeded_rng(5)
        for inst in tasks.gen_adding(2, 1.0, 20, rng):
            assert np.array_equal(inst.inputs[:, 1], [1.0, 1.0])
            assert inst.target == inst.inputs[0, 0] + inst.inputs[1, 0]

    def test_zero_variance_target_zero(self):
        rng = tasks.seeded_rng(6)
        for inst in tasks.gen_adding(5, 0.0, 20, rng):
            assert inst.target == 0.0

    def test_exactly_two_markers(self):
        rng = tasks.seeded_rng(7)
        for inst in tasks.gen_adding(8, 1.0, 200, rng):
            markers = inst.inputs[:, 1]
            assert np.sum(markers == 1.0) == 2
            assert np.sum(markers == 0.0) == 6

    def test_oracle_forced_arithmetic(self):
        seq = np.array([[0.7, 1.0], [9.9, 0.0], [-0.2, 1.0]])
        assert abs(tasks.adding_oracle(seq) - 0.5) < 1e-15

    def test_oracle_matches_generator(self):
        rng = tasks.seeded_rng(8)
        for inst in tasks.gen_adding(6, 2.0, 100, rng):
            assert abs(tasks.adding_oracle(inst.inputs) - inst.target) <= 1e-15

    def test_n_below_two_rejected(self):
        with pytest.raises(DataError):
            tasks.gen_adding(1, 1.0, 1, tasks.seeded_rng(9))

    def test_pair_frequencies_roughly_uniform(self):
        rng = tasks.seeded_rng(10)
        counts = {}
        n_draws = 20000
        for inst in tasks.gen_adding(5, 0.0, n_draws, rng):
            pos = tuple(np.flatnonzero(inst.inputs[:, 1]))
            counts[pos] = counts.get(pos, 0) + 1
        assert len(counts) == 10
        for c in counts.values():
            assert abs(c / n_draws - 0.1) < 0.02


class TestCharCorpus:
    def test_shift_example(self, tmp_path):
        path = tmp_path / "tiny.txt"
        path.write_bytes(b"abab\n")
        ds = tasks.load_char_corpus(path)
        assert ds.alphabet_size == 2
        seq = ds.sequences[0]
        # shifted-target convention: inputs are seq[:-1], targets seq[1:]
        assert np.array_equal(seq[:-1], [0, 1, 0])
        assert np.array_equal(seq[1:], [1, 0, 1])

    def test_short_lines_dropped(self, tmp_path):
        path = tmp_path / "short.txt"
        path.write_bytes(b"x\nabcd\ny\n")
        ds = tasks.load_char_corpus(path)
        assert len(ds.sequences) == 1
        assert ds.alphabet_size == 4

    def test_first_appearance_alphabet_order(self, tmp_path):
        path = tmp_path / "order.txt"
        path.write_bytes(b"cba\nabc\n")
        ds = tasks.load_char_corpus(path)
        assert bytes(ds.alphabet) == b"cba"

    def test_prefix_split(self, tmp_path):
        path = tmp_path / "split.txt"
        path.write_bytes(b"".join(b"line%d\n" % i for i in range(10)))
        ds = tasks.load_char_corpus(path, train_fraction=0.9)
        train, test = ds.split()
        assert len(train) == 9 and len(test) == 1

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.txt"
        path.write_bytes(b"")
        with pytest.raises(DataError, match="empty"):
            tasks.load_char_corpus(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError, match="cannot read"):
            tasks.load_char_corpus(tmp_path / "nope.txt")

    def test_single_symbol_corpus_rejected(self, tmp_path):
        path = tmp_path / "mono.txt"
        path.write_bytes(b"aaaa\naa\n")
        with pytest.raises(DataError, match="distinct"):
            tasks.load_char_corpus(path)

    def test_chunking(self):
        seqs = [np.arange(12), np.arange(4), np.arange(3)]
        chunks = tasks.chunk_sequences(seqs, 4)
        assert [len(c) for c in chunks] == [4, 4, 4, 4]
        assert np.array_equal(chunks[0], [0, 1, 2, 3])
        assert np.array_equal(chunks[2], [8, 9, 10, 11])


class TestIdx:
    def _write_pair(self, tmp_path, images, labels):
        ipath = tmp_path / "imgs.idx3"
        lpath = tmp_path / "labs.idx1"
        tasks.save_mnist_idx(images, labels, ipath, lpath)
        return ipath, lpath

    def test_hand_built_fixture_round_trips(self, tmp_path):
        # fixture bytes assembled with struct, independent of the writer
        pixels = bytes((i * 7 + 3) % 256 for i in range(784))
        ipath = tmp_path / "one.idx3"
        lpath = tmp_path / "one.idx1"
        ipath.write_bytes(struct.pack(">IIII", 0x803, 1, 28, 28) + pixels)
        lpath.write_bytes(struct.pack(">II", 0x801, 1) + bytes([7]))
        ds = tasks.load_mnist_idx(ipath, lpath)
        assert len(ds) == 1
        assert ds.labels[0] == 7
        raw = (ds.images[0] * 255.0).round().astype(np.uint8).reshape(-1)
        assert bytes(raw) == pixels

    def test_all_zero_image_rows(self, tmp_path):
        images = np.zeros((1, 28, 28), dtype=np.uint8)
        ipath, lpath = self._write_pair(tmp_path, images, np.array([0]))
        ds = tasks.load_mnist_idx(ipath, lpath)
        rows = ds.row_sequences()[0]
        assert rows.shape == (28, 28)
        assert np.array_equal(rows, np.zeros((28, 28)))

    def test_scaling_to_unit_interval(self, tmp_path):
        images = np.full((2, 28, 28), 255, dtype=np.uint8)
        ipath, lpath = self._write_pair(tmp_path, images, np.array([1, 2]))
        ds = tasks.load_mnist_idx(ipath, lpath)
        assert np.array_equal(ds.images, np.ones((2, 28, 28)))

    def test_bad_image_magic(self, tmp_path):
        ipath = tmp_path / "bad.idx3"
        lpath = tmp_path / "ok.idx1"
        ipath.write_bytes(struct.pack(">IIII", 0x805, 1, 28, 28) + bytes(784))
        lpath.write_bytes(struct.pack(">II", 0x801, 1) + bytes(1))
        with pytest.raises(DataError, match="bad magic"):
            tasks.load_mnist_idx(ipath, lpath)

    def test_bad_label_magic(self, tmp_path):
        ipath = tmp_path / "ok.idx3"
        lpath = tmp_path / "bad.idx1"
        ipath.write_bytes(struct.pack(">IIII", 0x803, 1, 28, 28) + bytes(784))
        lpath.write_bytes(struct.pack(">II", 0x808, 1) + bytes(1))
        with pytest.raises(DataError, match="bad magic"):
            tasks.load_mnist_idx(ipath, lpath)

    def test_truncated_pixels(self, tmp_path):
        ipath = tmp_path / "trunc.idx3"
        lpath = tmp_path / "ok.idx1"
        ipath.write_bytes(struct.pack(">IIII", 0x803, 2, 28, 28) + bytes(784))
        lpath.write_bytes(struct.pack(">II", 0x801, 2) + bytes(2))
        with pytest.raises(DataError, match="truncated"):
            tasks.load_mnist_idx(ipath, lpath)

    def test_count_mismatch(self, tmp_path):
        ipath = tmp_path / "im.idx3"
        lpath = tmp_path / "lb.idx1"
        ipath.write_bytes(struct.pack(">IIII", 0x803, 1, 28, 28) + bytes(784))
        lpath.write_bytes(struct.pack(">II", 0x801, 2) + bytes(2))
        with pytest.raises(DataError, match="count mismatch"):
            tasks.load_mnist_idx(ipath, lpath)


class TestInstanceExport:
    def test_memorization_round_trip(self, tmp_path):
        rng = tasks.seeded_rng(11)
        insts = tasks.gen_memorization(3, 5, 1.5, 20, rng)
        path = tmp_path / "mem.txt"
        tasks.save_instances(insts, path)
        loaded = tasks.load_memorization(path)
        assert len(loaded) == 20
        for a, b in zip(insts, loaded):
            assert np.array_equal(a.inputs, b.inputs)
            assert np.array_equal(a.target, b.target)

    def test_adding_round_trip(self, tmp_path):
        rng = tasks.seeded_rng(12)
        insts = tasks.gen_adding(6, 0.7, 20, rng)
        path = tmp_path / "add.txt"
        tasks.save_instances(insts, path)
        loaded = tasks.load_adding(path)
        for a, b in zip(insts, loaded):
            assert np.array_equal(a.inputs, b.inputs)
            assert a.target == b.target

    def test_separator_required(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("1.0 2.0 3.0\n")
        with pytest.raises(DataError, match="separator"):
            tasks.load_memorization(path)


def test_seeded_rng_reproducible():
    a = tasks.seeded_rng(99).normal(size=10)
    b = tasks.seeded_rng(99).normal(size=10)
    assert np.array_equal(a, b)
