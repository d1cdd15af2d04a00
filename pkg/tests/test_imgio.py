import numpy as np
import pytest

from uwcolor.errors import FileFormatError, ValidationError
from uwcolor.imgio import (
    DISPLAY_NOTE,
    read_depth,
    read_pfm,
    read_ppm16,
    sha256_file,
    write_pfm,
    write_png8,
    write_ppm16,
)


class TestPpm:
    def test_sixteen_bit_scaling(self, tmp_path):
        path = tmp_path / "mid.ppm"
        with open(path, "wb") as f:
            f.write(b"P6\n1 1\n65535\n")
            f.write((32768).to_bytes(2, "big") * 3)
        img = read_ppm16(path)
        assert img.shape == (1, 1, 3)
        assert img[0, 0, 0] == pytest.approx(0.50000763, abs=5e-9)
        assert img[0, 0, 0] == 32768 / 65535

    def test_eight_bit_rejected_with_linearity_message(self, tmp_path):
        path = tmp_path / "small.ppm"
        with open(path, "wb") as f:
            f.write(b"P6\n1 1\n255\n" + bytes([128, 128, 128]))
        with pytest.raises(ValidationError, match="not linearly related"):
            read_ppm16(path)

    def test_roundtrip_through_writer(self, tmp_path):
        rng = np.random.default_rng(0)
        img = rng.uniform(0, 1, (5, 7, 3))
        path = tmp_path / "x.ppm"
        write_ppm16(path, img)
        back = read_ppm16(path)
        assert np.max(np.abs(back - img)) <= 0.5 / 65535 + 1e-12

    def test_header_comments_are_skipped(self, tmp_path):
        path = tmp_path / "c.ppm"
        with open(path, "wb") as f:
            f.write(b"P6\n# a comment\n2 1\n# another\n65535\n")
            f.write(b"\x00\x01" * 6)
        assert read_ppm16(path).shape == (1, 2, 3)

    def test_malformed_header(self, tmp_path):
        path = tmp_path / "bad.ppm"
        path.write_bytes(b"P6\nnot numbers\n")
        with pytest.raises(FileFormatError):
            read_ppm16(path)

    def test_truncated_data(self, tmp_path):
        path = tmp_path / "trunc.ppm"
        path.write_bytes(b"P6\n4 4\n65535\n\x00\x01")
        with pytest.raises(FileFormatError, match="truncated"):
            read_ppm16(path)

    def test_wrong_magic(self, tmp_path):
        path = tmp_path / "x.ppm"
        path.write_bytes(b"P5\n1 1\n65535\n\x00\x01")
        with pytest.raises(FileFormatError):
            read_ppm16(path)


class TestPfm:
    def test_color_roundtrip_bit_identical(self, tmp_path):
        rng = np.random.default_rng(1)
        img = rng.uniform(0, 1, (6, 4, 3)).astype(np.float32).astype(np.float64)
        path = tmp_path / "x.pfm"
        write_pfm(path, img)
        back = read_pfm(path)
        assert back.shape == (6, 4, 3)
        assert np.array_equal(back, img)

    def test_gray_roundtrip(self, tmp_path):
        depth = np.linspace(0.5, 8.0, 12).reshape(3, 4).astype(np.float32).astype(np.float64)
        path = tmp_path / "z.pfm"
        write_pfm(path, depth)
        assert np.array_equal(read_pfm(path), depth)

    def test_scale_line_marks_little_endian(self, tmp_path):
        path = tmp_path / "x.pfm"
        write_pfm(path, np.zeros((2, 2, 3)))
        header = path.read_bytes().split(b"\n")[:3]
        assert header[0] == b"PF"
        assert float(header[2]) < 0

    def test_malformed_pfm(self, tmp_path):
        path = tmp_path / "bad.pfm"
        path.write_bytes(b"PF\nbroken\n")
        with pytest.raises(FileFormatError):
            read_pfm(path)


class TestDepth:
    def test_depth_pfm(self, tmp_path):
        z = np.array([[0.5, 2.0], [-1.0, 8.0]]).astype(np.float32).astype(np.float64)
        path = tmp_path / "z.pfm"
        write_pfm(path, z)
        d = read_depth(path)
        assert d.valid.tolist() == [[True, True], [False, True]]
        assert d.z[0, 1] == 2.0

    def test_sparse_csv(self, tmp_path):
        path = tmp_path / "z.csv"
        path.write_text("x,y,z\n0,0,0.5\n2,1,3.25\n")
        d = read_depth(path, width=4, height=2)
        assert d.valid.sum() == 2
        assert d.z[1, 2] == 3.25
        assert not d.valid[0, 1]

    def test_sparse_csv_needs_dimensions(self, tmp_path):
        path = tmp_path / "z.csv"
        path.write_text("x,y,z\n0,0,0.5\n")
        with pytest.raises(ValidationError):
            read_depth(path)

    def test_out_of_bounds_annotation(self, tmp_path):
        path = tmp_path / "z.csv"
        path.write_text("x,y,z\n9,0,0.5\n")
        with pytest.raises(ValidationError):
            read_depth(path, width=4, height=2)


class TestPng:
    def test_display_export_is_watermarked(self, tmp_path):
        rng = np.random.default_rng(2)
        path = tmp_path / "d.png"
        write_png8(path, rng.uniform(0, 1, (8, 8, 3)))
        raw = path.read_bytes()
        assert raw.startswith(b"\x89PNG")
        assert b"tEXt" in raw
        assert DISPLAY_NOTE.encode() in raw

    def test_deterministic_bytes(self, tmp_path):
        img = np.linspace(0, 1, 48).reshape(4, 4, 3)
        write_png8(tmp_path / "a.png", img)
        write_png8(tmp_path / "b.png", img)
        assert (tmp_path / "a.png").read_bytes() == (tmp_path / "b.png").read_bytes()


def test_sha256_matches_hashlib(tmp_path):
    import hashlib

    path = tmp_path / "f.bin"
    path.write_bytes(b"abc123" * 1000)
    assert sha256_file(path) == hashlib.sha256(path.read_bytes()).hexdigest()
