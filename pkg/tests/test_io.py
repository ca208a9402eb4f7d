import struct

import numpy as np
import pytest

from flowparse import io
from flowparse.fusion import FusionWeights
from flowparse.parser import ParserModel


def test_flo_header_layout(tmp_path, rng):
    flow = rng.normal(size=(3, 5, 2)).astype(np.float32)
    path = tmp_path / "a.flo"
    io.write_flo(path, flow)
    data = path.read_bytes()
    assert struct.unpack_from("<fii", data) == (202021.25, 5, 3)
    assert len(data) == 12 + 3 * 5 * 2 * 4
    # interleaved (dx, dy), row-major
    assert struct.unpack_from("<2f", data, 12) == tuple(flow[0, 0])
    assert np.array_equal(io.read_flo(path), flow)


def test_flo_rejects_bad_magic(tmp_path):
    path = tmp_path / "bad.flo"
    path.write_bytes(struct.pack("<fii", 1.0, 1, 1) + b"\0" * 8)
    with pytest.raises(io.FormatError):
        io.read_flo(path)


def test_flo_rejects_truncated(tmp_path, rng):
    path = tmp_path / "t.flo"
    io.write_flo(path, rng.normal(size=(4, 4, 2)))
    path.write_bytes(path.read_bytes()[:-4])
    with pytest.raises(io.FormatError):
        io.read_flo(path)


def test_probmap_round_trip(tmp_path, rng):
    p = rng.dirichlet(np.ones(5), size=(4, 6)).astype(np.float32)
    path = tmp_path / "p.svpp"
    io.write_probmap(path, p)
    assert path.read_bytes()[:4] == b"SVPP"
    assert struct.unpack_from("<3I", path.read_bytes(), 4) == (6, 4, 5)
    assert np.array_equal(io.read_probmap(path), p)


def test_probmap_single_channel(tmp_path, rng):
    conf = rng.random((3, 4)).astype(np.float32)
    io.write_probmap(tmp_path / "c.svpp", conf)
    assert io.read_probmap(tmp_path / "c.svpp").shape == (3, 4, 1)


def test_fusion_weights_round_trip(tmp_path):
    w = FusionWeights.gaussian(3, seed=4)
    io.write_fusion_weights(tmp_path / "w.svpw", w)
    data = (tmp_path / "w.svpw").read_bytes()
    assert data[:4] == b"SVPW" and len(data) == 8 + 4 * (9 * 3 + 3)
    assert io.read_fusion_weights(tmp_path / "w.svpw") == w


def test_parser_model_round_trip(tmp_path, rng):
    m = ParserModel(rng.normal(size=(3, 11)), rng.normal(size=3), rng.normal(size=11), rng.random(11) + 0.1)
    io.write_parser_model(tmp_path / "m.svpm", m)
    assert io.read_parser_model(tmp_path / "m.svpm") == m


@pytest.mark.parametrize("reader, magic", [(io.read_probmap, b"SVPP"),
                                           (io.read_fusion_weights, b"SVPW"),
                                           (io.read_parser_model, b"SVPM")])
def test_containers_reject_wrong_magic_and_length(tmp_path, reader, magic):
    path = tmp_path / "x.bin"
    path.write_bytes(b"NOPE" + b"\0" * 16)
    with pytest.raises(io.FormatError):
        reader(path)
    path.write_bytes(magic + struct.pack("<3I", 2, 2, 2))
    with pytest.raises(io.FormatError):
        reader(path)


def test_png_image_round_trip(tmp_path, rng):
    img = io.to_uint8(rng.random((5, 7, 3))).astype(np.float32) / 255
    io.write_png_image(tmp_path / "i.png", img)
    assert np.array_equal(io.read_png_image(tmp_path / "i.png"), img)


@pytest.mark.parametrize("suffix", [".png", ".pgm"])
def test_labels_round_trip(tmp_path, rng, suffix):
    labels = rng.integers(0, 13, size=(6, 9))
    path = tmp_path / f"l{suffix}"
    io.write_labels(path, labels)
    if suffix == ".pgm":
        assert path.read_bytes()[:2] == b"P5"
    assert np.array_equal(io.read_labels(path), labels)


def test_labels_out_of_range(tmp_path):
    with pytest.raises(io.InvalidArgument):
        io.write_labels(tmp_path / "l.png", np.array([[300]]))


def test_rgb_label_file_rejected(tmp_path, rng):
    io.write_png_image(tmp_path / "rgb.png", rng.random((2, 2, 3)))
    with pytest.raises(io.FormatError):
        io.read_labels(tmp_path / "rgb.png")


def test_gray_png_rounding(tmp_path):
    io.write_gray_png(tmp_path / "g.png", np.array([[0.0, 1.0, 0.5, 0.3679]]))
    assert io.read_labels(tmp_path / "g.png").tolist() == [[0, 255, 128, 94]]
