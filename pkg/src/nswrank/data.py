"""Instance construction: synthetic relevance, sparse file loading, exposure.

The sparse relevance text format is line oriented (UTF-8, LF):

    num_users num_items
    u i r
    u i r
    ...

with 0-based indices; pairs that never appear get the relevance floor, and
scores outside (0, 1] are clamped into [floor, 1] with a warning count kept
in the returned matrix's ``meta``.
"""

from __future__ import annotations

import numpy as np

from .core import DomainError, ExposureModel, RELEVANCE_FLOOR, RelevanceMatrix


class SparseFormatError(ValueError):
    """A sparse relevance file line failed to parse."""

    def __init__(self, message: str, line_number: int):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


def generate_synthetic(num_users: int, num_items: int, seed: int, skew: float = 1.0) -> RelevanceMatrix:
    """Synthetic relevance: logistic squash of per-pair standard normals.

    Each entry is sigmoid(skew * z) with z drawn i.i.d. standard normal from
    a per-row substream of the seeded generator, clamped into
    [RELEVANCE_FLOOR, 1].  Larger ``skew`` pushes scores toward 0/1 and so
    concentrates relevance on fewer items; skew 0 makes every score 0.5.
    """
    if num_users <= 0 or num_items <= 0:
        raise DomainError("num_users and num_items must be positive")
    rows = np.random.SeedSequence(seed).spawn(num_users)
    values = np.empty((num_users, num_items))
    for u, ss in enumerate(rows):
        z = np.random.default_rng(ss).standard_normal(num_items)
        values[u] = 1.0 / (1.0 + np.exp(-skew * z))
    np.clip(values, RELEVANCE_FLOOR, 1.0, out=values)
    meta = {
        "generator": "logistic_normal",
        "seed": int(seed),
        "skew": float(skew),
        "floor": RELEVANCE_FLOOR,
    }
    return RelevanceMatrix(values, meta=meta)


def load_sparse_relevance(path) -> RelevanceMatrix:
    """Load a relevance matrix from the sparse text format.

    Unspecified pairs get the relevance floor; out-of-range scores are
    clamped and counted in ``meta['clamped']``.

    Raises
    ------
    SparseFormatError
        On a malformed header or triple (message carries the line number).
    IndexError
        On a user/item index outside the declared dimensions.
    """
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise SparseFormatError("empty file, expected 'num_users num_items' header", 1)
    header = lines[0].split()
    if len(header) != 2:
        raise SparseFormatError(f"expected 'num_users num_items', got {lines[0]!r}", 1)
    try:
        num_users, num_items = int(header[0]), int(header[1])
    except ValueError:
        raise SparseFormatError(f"non-integer dimensions in {lines[0]!r}", 1) from None
    if num_users <= 0 or num_items <= 0:
        raise SparseFormatError("dimensions must be positive", 1)

    values = np.full((num_users, num_items), RELEVANCE_FLOOR)
    clamped = 0
    for ln, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 3:
            raise SparseFormatError(f"expected 'u i r', got {line!r}", ln)
        try:
            u, i, r = int(parts[0]), int(parts[1]), float(parts[2])
        except ValueError:
            raise SparseFormatError(f"could not parse 'u i r' from {line!r}", ln) from None
        if not 0 <= u < num_users or not 0 <= i < num_items:
            raise IndexError(f"line {ln}: index ({u}, {i}) outside ({num_users}, {num_items})")
        if not np.isfinite(r):
            raise SparseFormatError(f"non-finite relevance {parts[2]!r}", ln)
        if r <= 0.0 or r > 1.0:
            clamped += 1
            r = min(max(r, RELEVANCE_FLOOR), 1.0)
        values[u, i] = r
    return RelevanceMatrix(values, meta={"source": str(path), "clamped": clamped, "floor": RELEVANCE_FLOOR})


def exposure_model(num_positions: int, kind: str = "log_decay", p: float | None = None) -> ExposureModel:
    """Exposure vector for the m-1 real positions.

    ``log_decay`` gives 1/log2(k+1); ``geometric`` gives p**(k-1) and needs
    p in (0, 1].
    """
    if num_positions < 2:
        raise DomainError("num_positions must be >= 2")
    k = np.arange(1, num_positions)
    if kind == "log_decay":
        values = 1.0 / np.log2(k + 1.0)
    elif kind == "geometric":
        if p is None or not 0.0 < p <= 1.0:
            raise DomainError("geometric exposure needs p in (0, 1]")
        values = np.float_power(p, k - 1)
    else:
        raise DomainError(f"unknown exposure kind {kind!r}")
    return ExposureModel(values)
