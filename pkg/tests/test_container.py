import numpy as np
import pytest

from querc.container import (
    FORMAT_VERSION,
    MAGIC,
    ModelArtifact,
    load_model,
    peek_kind,
    save_model,
)
from querc.errors import ContainerError


def art():
    a = ModelArtifact(kind="doc2vec")
    a.put_matrix("m", np.arange(12, dtype=np.float64).reshape(3, 4))
    a.put_matrix("v", np.array([1.5, -2.5]))
    a.put_json("metadata", {"alpha": 0.025, "name": "x"})
    return a


def test_roundtrip_identity(tmp_path):
    path = tmp_path / "m.qrc"
    save_model(art(), path)
    back = load_model(path)
    assert back.kind == "doc2vec"
    assert back.format_version == FORMAT_VERSION
    np.testing.assert_array_equal(back.matrix("m"), art().matrix("m"))
    assert back.json("metadata") == {"alpha": 0.025, "name": "x"}


def test_save_load_save_is_byte_identical(tmp_path):
    p1, p2 = tmp_path / "a.qrc", tmp_path / "b.qrc"
    save_model(art(), p1)
    save_model(load_model(p1), p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_peek_kind_reads_header_only(tmp_path):
    path = tmp_path / "m.qrc"
    save_model(art(), path)
    assert peek_kind(path) == "doc2vec"


def test_kind_mismatch_detected_before_parse(tmp_path):
    path = tmp_path / "m.qrc"
    save_model(art(), path)
    with pytest.raises(ContainerError, match="expected 'lstm_autoencoder'"):
        load_model(path, expect_kind="lstm_autoencoder")


def test_truncated_file_is_fatal_no_partial_model(tmp_path):
    path = tmp_path / "m.qrc"
    save_model(art(), path)
    blob = path.read_bytes()
    for cut in (3, 8, 12, len(blob) // 2, len(blob) - 1):
        short = tmp_path / f"cut{cut}.qrc"
        short.write_bytes(blob[:cut])
        with pytest.raises(ContainerError):
            load_model(short)


def test_bad_magic_and_version(tmp_path):
    path = tmp_path / "m.qrc"
    save_model(art(), path)
    blob = bytearray(path.read_bytes())

    bad_magic = tmp_path / "magic.qrc"
    bad_magic.write_bytes(b"XXXX" + bytes(blob[4:]))
    with pytest.raises(ContainerError, match="bad magic"):
        load_model(bad_magic)

    bad_version = tmp_path / "ver.qrc"
    blob2 = bytearray(blob)
    blob2[4] = 99
    bad_version.write_bytes(bytes(blob2))
    with pytest.raises(ContainerError, match="version"):
        load_model(bad_version)
    assert MAGIC == b"QRC1"


def test_matrix_shape_mismatch_detected():
    a = art()
    payload = bytearray(a.sections["m"])
    payload = payload[:-8]  # drop one f64
    a.sections["m"] = bytes(payload)
    with pytest.raises(ContainerError, match="shape"):
        a.matrix("m")


def test_unknown_section_error():
    with pytest.raises(ContainerError, match="no section"):
        art().matrix("absent")
