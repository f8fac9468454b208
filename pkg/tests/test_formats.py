"""Binary container round trips, header validation, SMILES line reading."""

import numpy as np
import pytest

from chemsearch.fingerprint import BINARY, COUNTS, ecfc, ecfp
from chemsearch.formats import (
    FormatError,
    atomic_write,
    embedding_file_meta,
    fingerprint_file_meta,
    iter_embedding_chunks,
    iter_fingerprint_vectors,
    iter_smiles_records,
    read_embedding_file,
    read_fingerprint_file,
    write_embedding_file,
    write_fingerprint_file,
    write_rejects,
)
from chemsearch.molgraph import parse_smiles


# -- atomic writes


def test_atomic_write_success(tmp_path):
    path = tmp_path / "out.bin"
    with atomic_write(path) as fh:
        fh.write(b"payload")
    assert path.read_bytes() == b"payload"
    assert not (tmp_path / "out.bin.tmp").exists()


def test_atomic_write_failure_leaves_nothing(tmp_path):
    path = tmp_path / "out.bin"
    with pytest.raises(RuntimeError):
        with atomic_write(path) as fh:
            fh.write(b"partial")
            raise RuntimeError("boom")
    assert not path.exists()
    assert list(tmp_path.iterdir()) == []


def test_atomic_write_preserves_old_on_failure(tmp_path):
    path = tmp_path / "out.bin"
    path.write_bytes(b"old")
    with pytest.raises(RuntimeError):
        with atomic_write(path) as fh:
            fh.write(b"new")
            raise RuntimeError("boom")
    assert path.read_bytes() == b"old"


# -- fingerprint files


def _sample_fps(kind, nbits=256):
    smiles = ["CCO", "c1ccccc1", "CC(=O)O", "N#Cc1ccncc1"]
    make = ecfp if kind == BINARY else ecfc
    return [(i + 1, make(parse_smiles(s), nbits=nbits).data) for i, s in enumerate(smiles)]


@pytest.mark.parametrize("kind", [BINARY, COUNTS])
def test_fingerprint_round_trip(tmp_path, kind):
    records = _sample_fps(kind)
    path = tmp_path / "fps.bin"
    n = write_fingerprint_file(path, kind, 256, iter(records))
    assert n == 4
    got_kind, nbits, ids, data = read_fingerprint_file(path)
    assert got_kind == kind
    assert nbits == 256
    assert ids.tolist() == [1, 2, 3, 4]
    for (_, original), row in zip(records, data):
        assert np.array_equal(row, original)


@pytest.mark.parametrize("kind,nbits", [(BINARY, 512), (COUNTS, 64)])
def test_width_recovered_from_file_size(tmp_path, kind, nbits):
    records = _sample_fps(kind, nbits=nbits)
    path = tmp_path / "fps.bin"
    write_fingerprint_file(path, kind, nbits, iter(records))
    got_kind, got_nbits, count = fingerprint_file_meta(path)
    assert (got_kind, got_nbits, count) == (kind, nbits, 4)


def test_empty_fingerprint_file_has_no_width(tmp_path):
    path = tmp_path / "fps.bin"
    write_fingerprint_file(path, BINARY, 256, iter([]))
    with pytest.raises(FormatError):
        fingerprint_file_meta(path)


def test_fingerprint_vectors_adapter(tmp_path):
    path_b = tmp_path / "b.bin"
    path_c = tmp_path / "c.bin"
    write_fingerprint_file(path_b, BINARY, 256, iter(_sample_fps(BINARY)))
    write_fingerprint_file(path_c, COUNTS, 256, iter(_sample_fps(COUNTS)))
    for path in (path_b, path_c):
        for ids, vecs in iter_fingerprint_vectors(path):
            assert vecs.dtype == np.float64
            assert vecs.shape == (4, 256)
    _, bits = next(iter_fingerprint_vectors(path_b))
    direct = np.unpackbits(_sample_fps(BINARY)[0][1], bitorder="little")[:256]
    assert np.array_equal(bits[0], direct.astype(np.float64))


def test_fingerprint_bad_magic_and_truncation(tmp_path):
    path = tmp_path / "fps.bin"
    write_fingerprint_file(path, COUNTS, 256, iter(_sample_fps(COUNTS)))
    raw = path.read_bytes()
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"ZZZZ" + raw[4:])
    with pytest.raises(FormatError):
        fingerprint_file_meta(bad)
    trunc = tmp_path / "trunc.bin"
    trunc.write_bytes(raw[:-7])  # no longer divides the record size
    with pytest.raises(FormatError):
        fingerprint_file_meta(trunc)


# -- embedding files


def test_embedding_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    ids = np.arange(10, 60, dtype=np.uint64)
    vecs = rng.normal(size=(50, 6)).astype(np.float32)
    path = tmp_path / "e.bin"
    n = write_embedding_file(path, 6, [(ids[:20], vecs[:20]), (ids[20:], vecs[20:])])
    assert n == 50
    assert embedding_file_meta(path) == (6, 50)
    got_ids, got_vecs = read_embedding_file(path)
    assert np.array_equal(got_ids, ids)
    assert np.array_equal(got_vecs, vecs)
    chunks = list(iter_embedding_chunks(path, chunk_records=16))
    assert sum(len(c[0]) for c in chunks) == 50
    assert len(chunks) == 4


def test_embedding_empty_file(tmp_path):
    path = tmp_path / "e.bin"
    assert write_embedding_file(path, 3, []) == 0
    assert embedding_file_meta(path) == (3, 0)
    ids, vecs = read_embedding_file(path)
    assert len(ids) == 0 and vecs.shape == (0, 3)


def test_embedding_validation(tmp_path):
    path = tmp_path / "e.bin"
    with pytest.raises(ValueError):
        write_embedding_file(path, 0, [])
    with pytest.raises(ValueError):
        write_embedding_file(
            path, 4, [(np.arange(2, dtype=np.uint64), np.zeros((2, 3), np.float32))]
        )
    write_embedding_file(path, 4, [(np.arange(3, dtype=np.uint64), np.zeros((3, 4), np.float32))])
    raw = path.read_bytes()
    short = tmp_path / "short.bin"
    short.write_bytes(raw[:-4])
    with pytest.raises(FormatError):
        embedding_file_meta(short)


# -- SMILES line files


def test_smiles_reader_ids_and_labels(tmp_path):
    path = tmp_path / "in.smi"
    path.write_text("CCO\t17\nc1ccccc1\tbenzene\n\nCC\n", encoding="utf-8")
    records = list(iter_smiles_records(path))
    assert [r.record_id for r in records] == [17, 2, 4]  # decimal, then line numbers
    assert [r.label for r in records] == ["17", "benzene", ""]
    assert [r.line_number for r in records] == [1, 2, 4]
    assert records[0].graph.atoms[2].element == "O"


def test_smiles_reader_huge_decimal_id_falls_back(tmp_path):
    path = tmp_path / "in.smi"
    path.write_text(f"CCO\t{2**64}\n", encoding="utf-8")
    (rec,) = list(iter_smiles_records(path))
    assert rec.record_id == 1


def test_smiles_reader_rejects_routed(tmp_path):
    path = tmp_path / "in.smi"
    path.write_text("CCO\nnot!smiles\nC90\nCC\n", encoding="utf-8")
    rejects = []
    records = list(iter_smiles_records(path, on_reject=rejects.append))
    assert [r.line_number for r in records] == [1, 4]
    assert [r.line_number for r in rejects] == [2, 3]
    assert all(r.error for r in rejects)
    out = tmp_path / "rej.tsv"
    write_rejects(out, rejects)
    lines = out.read_text().splitlines()
    assert lines[0].split("\t")[0] == "2"
    assert "not!smiles" in lines[0]


def test_smiles_reader_strict_mode_raises(tmp_path):
    path = tmp_path / "in.smi"
    path.write_text("CCO\nnot!smiles\n", encoding="utf-8")
    with pytest.raises(ValueError):
        list(iter_smiles_records(path))
