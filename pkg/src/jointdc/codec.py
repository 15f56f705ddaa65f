"""Length functions and a two-part enumerative universal code.

The bitstream is header-free and big-endian: ``ceil(log2 T_n)`` bits of type
index (lexicographic order of count vectors) followed by ``ceil(log2 |T|)``
bits of the sequence's rank inside its type class. ``n`` and the alphabet size
travel out of band.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, NamedTuple, Optional, Sequence

from .core import (
    Pmf,
    TypeComposition,
    count_types,
    empirical_entropy,
    empirical_type,
    iter_types,
    logsumexp,
    seq_log_prob,
    type_stats,
)
from .regions import Region

KRAFT_TOL = 1e-9


class DecodeError(ValueError):
    pass


# ---------------------------------------------------------------------------
# ideal lengths


def _log_l_star_normalizer(region: Region, p1: Pmf, theta: float) -> float:
    return logsumexp(
        type_stats(t).log_type_size + seq_log_prob(p1, t) / (1.0 + theta)
        for t in region.accepted
    )


def l_star_length(t: TypeComposition, region: Region, p1: Pmf, theta: float) -> float:
    """Ideal length (nats) minimizing E1[exp(theta L) | X in region]."""
    if t not in region.accepted:
        raise ValueError(f"type {t.counts} is not in the region")
    log_z = _log_l_star_normalizer(region, p1, theta)
    return log_z - seq_log_prob(p1, t) / (1.0 + theta)


class MomentResult(NamedTuple):
    log_value: float
    with_l_star: bool


def exp_moment_exact(region: Region, p: Pmf, theta: float, form: str = "l_star") -> MomentResult:
    """Exact exponential moment over a region, by type sums in log domain.

    ``form="l_star"``: E_p[exp(theta L*(X)) | X in region], which equals
    (sum_region [p(x)/p(region)]**(1/(1+theta)))**(1+theta).
    ``form="universal"``: sum_region p(x) exp(n theta H_x).
    """
    if not region.accepted:
        raise ValueError("empty region")
    n = region.n
    if form == "l_star":
        log_sum = _log_l_star_normalizer(region, p, theta)
        log_mass = logsumexp(type_stats(t).log_type_size + seq_log_prob(p, t)
                             for t in region.accepted)
        return MomentResult((1.0 + theta) * log_sum - log_mass, True)
    if form == "universal":
        return MomentResult(
            logsumexp(
                type_stats(t).log_type_size + seq_log_prob(p, t)
                + n * theta * empirical_entropy(t)
                for t in region.accepted
            ),
            False,
        )
    raise ValueError(f"unknown moment form {form!r}")


# ---------------------------------------------------------------------------
# enumerative coding


def _ceil_log2(count: int) -> int:
    return (count - 1).bit_length()


def multinomial(counts: Sequence[int]) -> int:
    """Exact n! / prod(c!)."""
    total = 1
    running = 0
    for c in counts:
        running += c
        total *= math.comb(running, c)
    return total


def type_index(t: TypeComposition) -> int:
    """Rank of the count vector among all types of the same n, lexicographically."""
    counts = t.counts
    k = len(counts)
    rem = t.n
    index = 0
    for i in range(k - 1):
        m = k - i - 1  # parts after position i
        c = counts[i]
        # compositions of rem - v into m parts, summed over v < c
        index += math.comb(rem + m, m) - math.comb(rem - c + m, m)
        rem -= c
    return index


def type_from_index(index: int, n: int, alphabet_size: int) -> TypeComposition:
    total = count_types(n, alphabet_size)
    if not 0 <= index < total:
        raise DecodeError(f"type index {index} out of range for {total} types")
    counts = []
    rem = n
    for i in range(alphabet_size - 1):
        m = alphabet_size - i - 1
        v = 0
        while True:
            block = math.comb(rem - v + m - 1, m - 1)
            if index < block:
                break
            index -= block
            v += 1
        counts.append(v)
        rem -= v
    counts.append(rem)
    return TypeComposition(tuple(counts))


def rank_in_type(x: Sequence[int], alphabet_size: int) -> int:
    """Lexicographic rank of x among the sequences sharing its type."""
    counts = list(empirical_type(x, alphabet_size).counts)
    rem = len(x)
    size = multinomial(counts)
    rank = 0
    for sym in x:
        for s in range(sym):
            if counts[s]:
                rank += size * counts[s] // rem
        size = size * counts[sym] // rem
        counts[sym] -= 1
        rem -= 1
    return rank


def unrank_in_type(rank: int, t: TypeComposition) -> list:
    counts = list(t.counts)
    rem = t.n
    size = multinomial(counts)
    if not 0 <= rank < size:
        raise DecodeError(f"rank {rank} out of range for a type class of size {size}")
    out = []
    for _ in range(t.n):
        for s, c in enumerate(counts):
            if not c:
                continue
            block = size * c // rem
            if rank < block:
                break
            rank -= block
        out.append(s)
        size = block
        counts[s] -= 1
        rem -= 1
    return out


def universal_length_bits(t: TypeComposition) -> int:
    """Bits used by the two-part code for any sequence of type ``t``."""
    return _ceil_log2(count_types(t.n, t.alphabet_size)) + _ceil_log2(multinomial(t.counts))


def two_part_encode(x: Sequence[int], alphabet_size: int) -> str:
    """Encode x as a string of '0'/'1' characters."""
    t = empirical_type(x, alphabet_size)
    index_bits = _ceil_log2(count_types(t.n, alphabet_size))
    rank_bits = _ceil_log2(multinomial(t.counts))
    out = ""
    if index_bits:
        out += format(type_index(t), f"0{index_bits}b")
    if rank_bits:
        out += format(rank_in_type(x, alphabet_size), f"0{rank_bits}b")
    return out


def two_part_decode(bits: str, n: int, alphabet_size: int) -> list:
    if n < 1:
        raise DecodeError("n must be positive")
    if any(b not in "01" for b in bits):
        raise DecodeError("bitstring may only contain '0' and '1'")
    index_bits = _ceil_log2(count_types(n, alphabet_size))
    if len(bits) < index_bits:
        raise DecodeError(f"need {index_bits} type-index bits, got {len(bits)}")
    index = int(bits[:index_bits], 2) if index_bits else 0
    t = type_from_index(index, n, alphabet_size)
    rank_bits = _ceil_log2(multinomial(t.counts))
    if len(bits) != index_bits + rank_bits:
        raise DecodeError(
            f"expected {index_bits + rank_bits} bits for this type, got {len(bits)}"
        )
    rank = int(bits[index_bits:], 2) if rank_bits else 0
    return unrank_in_type(rank, t)


def pack_bits(bits: str) -> bytes:
    """Big-endian packing, zero-padded to a whole number of bytes."""
    if not bits:
        return b""
    pad = (-len(bits)) % 8
    return int(bits + "0" * pad, 2).to_bytes((len(bits) + pad) // 8, "big")


def unpack_bits(data: bytes) -> str:
    if not data:
        return ""
    return format(int.from_bytes(data, "big"), f"0{8 * len(data)}b")


def decode_bytes(data: bytes, n: int, alphabet_size: int) -> list:
    """Decode a packed stream; padding must be zero and shorter than a byte."""
    bits = unpack_bits(data)
    index_bits = _ceil_log2(count_types(n, alphabet_size))
    if len(bits) < index_bits:
        raise DecodeError("stream too short")
    index = int(bits[:index_bits], 2) if index_bits else 0
    t = type_from_index(index, n, alphabet_size)
    used = index_bits + _ceil_log2(multinomial(t.counts))
    tail = bits[used:]
    if len(bits) < used or len(tail) >= 8 or "1" in tail:
        raise DecodeError("malformed padding")
    return two_part_decode(bits[:used], n, alphabet_size)


# ---------------------------------------------------------------------------
# Kraft


@dataclass(frozen=True)
class CodeLengths:
    """Code lengths keyed by sequence or type.

    ``multiplicity`` gives how many codewords share a key (e.g. the size of a
    type class); it defaults to 1.
    """

    lengths: Mapping
    unit: str = "nats"
    multiplicity: Optional[Mapping] = field(default=None)

    def __post_init__(self):
        if self.unit not in ("nats", "bits"):
            raise ValueError("unit must be 'nats' or 'bits'")


class KraftResult(NamedTuple):
    ok: bool
    total: float
    slack: float


def kraft_check(code: CodeLengths) -> KraftResult:
    """Kraft sum and whether it is at most 1 (exactly, for integer bits)."""
    mult = code.multiplicity or {}
    if code.unit == "bits":
        total = Fraction(0)
        for key, length in code.lengths.items():
            if int(length) != length or length < 0:
                raise ValueError(f"bit length {length!r} is not a nonnegative integer")
            total += Fraction(mult.get(key, 1), 2 ** int(length))
        return KraftResult(total <= 1, float(total), float(1 - total))
    terms = [mult.get(key, 1) * math.exp(-length) for key, length in code.lengths.items()]
    total = math.fsum(terms)
    return KraftResult(total <= 1.0 + KRAFT_TOL, total, 1.0 - total)


def two_part_code_lengths(n: int, alphabet_size: int) -> CodeLengths:
    """Two-part code lengths over all types of length n, weighted by class size."""
    lengths = {}
    mult = {}
    for t in iter_types(n, alphabet_size):
        lengths[t] = universal_length_bits(t)
        mult[t] = multinomial(t.counts)
    return CodeLengths(lengths, "bits", mult)


def l_star_code_lengths(region: Region, p1: Pmf, theta: float) -> CodeLengths:
    """Ideal L* lengths over a region's types, weighted by class size."""
    log_z = _log_l_star_normalizer(region, p1, theta)
    lengths = {t: log_z - seq_log_prob(p1, t) / (1.0 + theta) for t in region.accepted}
    mult = {t: multinomial(t.counts) for t in region.accepted}
    return CodeLengths(lengths, "nats", mult)
