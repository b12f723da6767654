import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fwxeb import io, noise
from fwxeb.errors import FormatError
from fwxeb.noise import SampleSet
from fwxeb.walsh import ProbabilityTable


def test_bitstring_convention():
    assert io.index_to_bitstring(1, 3) == "100"
    assert io.index_to_bitstring(6, 3) == "011"
    assert io.bitstring_to_index("011") == 6
    with pytest.raises(FormatError):
        io.bitstring_to_index("01a")


@given(st.integers(1, 16).flatmap(lambda n: st.tuples(st.just(n), st.integers(0, (1 << n) - 1))))
def test_bitstring_round_trip(pair):
    n, i = pair
    assert io.bitstring_to_index(io.index_to_bitstring(i, n)) == i


@pytest.mark.parametrize("fmt", ["text", "binary"])
def test_table_round_trip_is_bit_exact(tmp_path, fmt):
    P = noise.generate_porter_thomas(7, 3)
    path = tmp_path / f"t.{fmt}"
    io.save_probability_table(P, path, fmt)
    Q = io.load_probability_table(path)
    assert Q.n == 7 and np.array_equal(P.values, Q.values)


def test_unnormalized_binary_table(tmp_path):
    f = ProbabilityTable(2, [-1.0, 2.0, 0.5, 3.0], normalized=False)
    io.save_probability_table(f, tmp_path / "f.bin", "binary")
    g = io.load_probability_table(tmp_path / "f.bin", probability=False)
    assert not g.normalized and np.array_equal(g.values, f.values)


def test_binary_header_layout(tmp_path):
    io.save_probability_table(ProbabilityTable.uniform(2), tmp_path / "u.bin", "binary")
    raw = (tmp_path / "u.bin").read_bytes()
    assert struct.unpack("<4sIII", raw[:16]) == (b"WXEB", 1, 2, 1)
    assert len(raw) == 16 + 4 * 8


@pytest.mark.parametrize(
    "content",
    [
        b"",
        b"n=2\n0.25\n0.25\n0.5\n",
        b"n=1\n0.5\nabc\n",
        b"0.5\n0.5\n",
        b"n=1\n1.5\n-0.5\n",
        b"n=1\n0.3\n0.3\n",
        b"n=1\nnan\n1\n",
        b"WXEB" + struct.pack("<III", 2, 1, 1) + b"\0" * 16,
        b"WXEB" + struct.pack("<III", 1, 2, 1) + b"\0" * 8,
        b"WXEB" + struct.pack("<III", 1, 99, 1),
        b"WXE",
    ],
)
def test_malformed_tables(tmp_path, content):
    p = tmp_path / "bad"
    p.write_bytes(content)
    with pytest.raises(FormatError):
        io.load_probability_table(p)


def test_sample_round_trip_keeps_order(tmp_path):
    P = noise.generate_porter_thomas(5, 4)
    S = noise.draw_samples(P, 500, 5)
    io.save_samples(S, tmp_path / "s.txt")
    T = io.load_samples(tmp_path / "s.txt")
    assert T.n == 5 and np.array_equal(T.stream, S.stream)
    io.save_samples(S, tmp_path / "c.txt", "counts")
    C = io.load_samples(tmp_path / "c.txt")
    assert C.stream is None and np.array_equal(C.counts, S.counts)


def test_counts_lines_accumulate(tmp_path):
    p = tmp_path / "c.txt"
    p.write_text("10 3\n01 2\n10 1\n")
    S = io.load_samples(p)
    assert list(S.counts) == [0, 4, 2, 0]


def test_empty_samples_need_n(tmp_path):
    p = tmp_path / "e.txt"
    p.write_text("")
    with pytest.raises(FormatError):
        io.load_samples(p)
    assert io.load_samples(p, n=3).N == 0
    io.save_samples(SampleSet(3, np.zeros(8, int)), tmp_path / "e2.txt")
    assert (tmp_path / "e2.txt").read_text() == ""


@pytest.mark.parametrize(
    "content, n", [("010\n01\n", None), ("012\n", None), ("01\n", 3), ("01 x\n", None),
                   ("01 -1\n", None), ("01 2 3\n", None)]
)
def test_malformed_samples(tmp_path, content, n):
    p = tmp_path / "bad.txt"
    p.write_text(content)
    with pytest.raises(FormatError):
        io.load_samples(p, n=n)
