"""Table and sample file formats.

Probability tables
    text:   ``n=<k>`` then ``2**k`` decimal reals, one per line, in index order.
    binary: 16-byte header ``<4sIII`` = (``b"WXEB"``, version, n, flags) then
            ``2**n`` little-endian float64.  Flag bit 0 marks a probability
            table, which the loader validates.

Samples
    bitstrings: one 0/1 string per line; leftmost character is qubit 1
                (index bit 0).  Line order is kept as the sample stream.
    counts:     ``<bitstring> <count>`` per line.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import FormatError, ValidationError
from .noise import SampleSet
from .walsh import ProbabilityTable, check_qubits

MAGIC = b"WXEB"
VERSION = 1
_HEADER = struct.Struct("<4sIII")
FLAG_PROBABILITY = 1


def index_to_bitstring(index: int, n: int) -> str:
    return "".join("1" if (index >> i) & 1 else "0" for i in range(n))


def bitstring_to_index(bits: str) -> int:
    if not bits or set(bits) - {"0", "1"}:
        raise FormatError(f"not a bitstring: {bits!r}")
    return sum(1 << i for i, ch in enumerate(bits) if ch == "1")


def _bitstrings_to_indices(lines: list[str], n: int | None) -> tuple[int, np.ndarray]:
    if not lines:
        if n is None:
            raise FormatError("empty sample file and no n given")
        return n, np.zeros(0, dtype=np.int64)
    width = len(lines[0])
    if n is not None and width != n:
        raise FormatError(f"bitstrings have length {width}, expected {n}")
    if any(len(s) != width for s in lines):
        raise FormatError("bitstrings of inconsistent length")
    check_qubits(width)
    raw = np.frombuffer("".join(lines).encode("ascii", "replace"), dtype=np.uint8)
    bits = raw.reshape(len(lines), width).astype(np.int64) - ord("0")
    if np.any((bits != 0) & (bits != 1)):
        raise FormatError("non-binary character in bitstring")
    return width, bits @ (np.int64(1) << np.arange(width, dtype=np.int64))


# --------------------------------------------------------------------------
# probability tables


def _detect_table_format(path: Path) -> str:
    with open(path, "rb") as fh:
        return "binary" if fh.read(4) == MAGIC else "text"


def save_probability_table(table: ProbabilityTable, path, format: str = "text") -> None:
    path = Path(path)
    if format == "text":
        with open(path, "w") as fh:
            fh.write(f"n={table.n}\n")
            fh.writelines(f"{v:.17g}\n" for v in table.values)
    elif format == "binary":
        flags = FLAG_PROBABILITY if table.normalized else 0
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(MAGIC, VERSION, table.n, flags))
            fh.write(np.ascontiguousarray(table.values, dtype="<f8").tobytes())
    else:
        raise ValidationError(f"unknown table format {format!r}")


def load_probability_table(path, format: str = "auto", probability: bool = True) -> ProbabilityTable:
    """Read a table; ``probability`` validates non-negativity and unit mass."""
    path = Path(path)
    if format == "auto":
        format = _detect_table_format(path)
    if format == "binary":
        data = path.read_bytes()
        if len(data) < _HEADER.size:
            raise FormatError("binary table shorter than its header")
        magic, version, n, flags = _HEADER.unpack_from(data)
        if magic != MAGIC:
            raise FormatError(f"bad magic {magic!r}")
        if version != VERSION:
            raise FormatError(f"unsupported table version {version}")
        try:
            check_qubits(n)
        except ValidationError as exc:
            raise FormatError(str(exc)) from exc
        body = data[_HEADER.size:]
        if len(body) != 8 << n:
            raise FormatError(f"expected {1 << n} values, found {len(body) / 8:g}")
        values = np.frombuffer(body, dtype="<f8").astype(np.float64)
        probability = probability or bool(flags & FLAG_PROBABILITY)
    elif format == "text":
        with open(path) as fh:
            lines = [ln.strip() for ln in fh if ln.strip()]
        if not lines or not lines[0].startswith("n="):
            raise FormatError("text table must start with 'n=<k>'")
        try:
            n = int(lines[0][2:])
            check_qubits(n)
            values = np.array([float(x) for x in lines[1:]], dtype=np.float64)
        except ValueError as exc:
            raise FormatError(f"malformed text table: {exc}") from exc
        if values.shape[0] != 1 << n:
            raise FormatError(f"expected {1 << n} values for n={n}, found {values.shape[0]}")
    else:
        raise ValidationError(f"unknown table format {format!r}")
    if np.any(np.isnan(values)):
        raise FormatError("table contains NaN")
    if probability and np.any(values < 0):
        raise FormatError("probability table has negative entries")
    try:
        return ProbabilityTable(n, values, normalized=probability)
    except ValidationError as exc:
        raise FormatError(str(exc)) from exc


# --------------------------------------------------------------------------
# samples


def save_samples(samples: SampleSet, path, format: str = "bitstrings") -> None:
    path = Path(path)
    n = samples.n
    if format == "bitstrings":
        seq = samples.ordered()
        labels = [index_to_bitstring(i, n) for i in range(samples.M)] if seq.size else []
        with open(path, "w") as fh:
            fh.writelines(labels[i] + "\n" for i in seq)
    elif format == "counts":
        idx, c = samples.nonzero()
        with open(path, "w") as fh:
            fh.writelines(f"{index_to_bitstring(int(i), n)} {int(k)}\n" for i, k in zip(idx, c))
    else:
        raise ValidationError(f"unknown sample format {format!r}")


def load_samples(path, format: str = "auto", n: int | None = None) -> SampleSet:
    """Read samples; only the bitstrings format keeps the ordered stream."""
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if format == "auto":
        format = "counts" if lines and len(lines[0].split()) == 2 else "bitstrings"
    if format == "bitstrings":
        width, stream = _bitstrings_to_indices(lines, n)
        return SampleSet.from_stream(width, stream, {"source": str(path)})
    if format == "counts":
        keys, values = [], []
        for ln in lines:
            parts = ln.split()
            if len(parts) != 2:
                raise FormatError(f"counts line needs '<bitstring> <count>': {ln!r}")
            try:
                k = int(parts[1])
            except ValueError as exc:
                raise FormatError(f"bad count in {ln!r}") from exc
            if k < 0:
                raise FormatError(f"negative count in {ln!r}")
            keys.append(parts[0])
            values.append(k)
        width, idx = _bitstrings_to_indices(keys, n)
        counts = np.zeros(1 << width, dtype=np.int64)
        np.add.at(counts, idx, np.asarray(values, dtype=np.int64))
        return SampleSet(width, counts, None, {"source": str(path)})
    raise ValidationError(f"unknown sample format {format!r}")
