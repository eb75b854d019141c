"""
Arithmetic over GF(2^8) with the primitive polynomial x^8+x^4+x^3+x^2+1 (0x11D).

Scalars are plain ints in [0, 255]; vectors are numpy uint8 arrays. Every
vector operation returns a fresh array unless ``inplace=True`` is requested.
"""
from typing import Sequence, Tuple, Union

import numpy as np

PRIMITIVE_POLY = 0x11D
FIELD_SIZE = 256

VectorLike = Union[np.ndarray, Sequence[int], bytes]


class FieldError(ValueError):
    pass


def _build_exp_log() -> Tuple[np.ndarray, np.ndarray]:
    exp = np.zeros(2 * FIELD_SIZE, dtype=np.uint8)
    log = np.zeros(FIELD_SIZE, dtype=np.int32)
    x = 1
    for i in range(FIELD_SIZE - 1):
        exp[i] = x
        log[x] = i
        x <<= 1
        if x & 0x100:
            x ^= PRIMITIVE_POLY
    exp[FIELD_SIZE - 1:2 * (FIELD_SIZE - 1)] = exp[:FIELD_SIZE - 1]
    return exp, log


EXP, LOG = _build_exp_log()


def _build_mul_table() -> np.ndarray:
    idx = LOG[:, None] + LOG[None, :]
    table = EXP[idx].astype(np.uint8)
    table[0, :] = 0
    table[:, 0] = 0
    return table


MUL_TABLE = _build_mul_table()

INV_TABLE = np.zeros(FIELD_SIZE, dtype=np.uint8)
INV_TABLE[1:] = EXP[(FIELD_SIZE - 1) - LOG[1:]]


def _element(a: int) -> int:
    a = int(a)
    if not 0 <= a < FIELD_SIZE:
        raise FieldError(f"{a} is not an element of GF(2^8).")
    return a


def as_vector(values: VectorLike) -> np.ndarray:
    """
    Converts a sequence of ints (or bytes) into a uint8 field vector,
    rejecting anything outside [0, 255].
    """
    if isinstance(values, np.ndarray) and values.dtype == np.uint8:
        return values
    if isinstance(values, (bytes, bytearray)):
        return np.frombuffer(bytes(values), dtype=np.uint8).copy()
    arr = np.asarray(values, dtype=np.int64)
    if arr.size and (arr.min() < 0 or arr.max() >= FIELD_SIZE):
        raise FieldError("Vector entries must lie in [0, 255].")
    return arr.astype(np.uint8)


def add(a: int, b: int) -> int:
    return _element(a) ^ _element(b)


def mul(a: int, b: int) -> int:
    return int(MUL_TABLE[_element(a), _element(b)])


def inv(a: int) -> int:
    if _element(a) == 0:
        raise FieldError("Zero has no multiplicative inverse.")
    return int(INV_TABLE[a])


def scale(vector: VectorLike, c: int) -> np.ndarray:
    return MUL_TABLE[_element(c)][as_vector(vector)]


def row_axpy(target: VectorLike, source: VectorLike, scale: int, *, inplace: bool = False) -> Tuple[np.ndarray, int]:
    """
    target[i] <- target[i] + scale * source[i].
    Returns the resulting vector and the number of field multiply-adds spent,
    which is the number of nonzero source entries (zero when scale is 0).
    """
    t = as_vector(target)
    s = as_vector(source)
    if t.shape != s.shape:
        raise FieldError(f"Length mismatch: {t.shape[0]} vs {s.shape[0]}.")
    c = _element(scale)
    out = t if inplace else t.copy()
    if c == 0:
        return out, 0
    out ^= MUL_TABLE[c][s]
    return out, int(np.count_nonzero(s))


def combine(coefficients: VectorLike, rows: np.ndarray) -> np.ndarray:
    """
    Linear combination sum_i coefficients[i] * rows[i] of the rows of a
    (k, L) uint8 matrix.
    """
    c = as_vector(coefficients)
    rows = np.asarray(rows, dtype=np.uint8)
    if rows.ndim != 2 or rows.shape[0] != c.shape[0]:
        raise FieldError("Need exactly one row per coefficient.")
    if rows.shape[1] == 0:
        return np.zeros(0, dtype=np.uint8)
    return np.bitwise_xor.reduce(MUL_TABLE[c[:, None], rows], axis=0)
