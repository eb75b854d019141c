"""
Block RLNC baseline: random combinations over a fixed block of B packets,
decoded by online Gauss-Jordan elimination once B innovative symbols arrive.
"""
from typing import Dict, Optional, Tuple

import numpy as np

from .codec import draw_coefficients
from .gf256 import INV_TABLE, MUL_TABLE


class BlockDecoder:
    def __init__(self, block_size: int, payload_len: int = 0):
        if block_size < 1:
            raise ValueError(f"Block size must be >= 1, got {block_size}.")
        self.block_size = block_size
        self.payload_len = payload_len
        self.op_count = 0
        self.reset()

    def reset(self) -> None:
        # pivot column -> (coefficients, payload); rows stay fully reduced
        self.rows: Dict[int, Tuple[np.ndarray, np.ndarray]] = {}

    @property
    def rank(self) -> int:
        return len(self.rows)

    @property
    def complete(self) -> bool:
        return self.rank == self.block_size

    def ingest(self, coefficients: np.ndarray, payload: np.ndarray) -> bool:
        """Returns True when the symbol was innovative."""
        if len(coefficients) != self.block_size:
            raise ValueError(f"Expected {self.block_size} coefficients, got {len(coefficients)}.")
        if self.complete:
            return False
        vec = np.array(coefficients, dtype=np.uint8)
        data = np.array(payload, dtype=np.uint8)
        for col, (row, row_data) in self.rows.items():
            a = int(vec[col])
            if a:
                vec ^= MUL_TABLE[a][row]
                data ^= MUL_TABLE[a][row_data]
                self.op_count += int(np.count_nonzero(row))
        nz = np.flatnonzero(vec)
        if nz.size == 0:
            return False
        pivot = int(nz[0])
        factor = INV_TABLE[vec[pivot]]
        if factor != 1:
            vec = MUL_TABLE[factor][vec]
            data = MUL_TABLE[factor][data]
            self.op_count += int(nz.size)
        for col, (row, row_data) in list(self.rows.items()):
            a = int(row[pivot])
            if a:
                self.rows[col] = (row ^ MUL_TABLE[a][vec], row_data ^ MUL_TABLE[a][data])
                self.op_count += int(nz.size)
        self.rows[pivot] = (vec, data)
        return True

    def packets(self) -> Dict[int, np.ndarray]:
        """Block-relative packet index -> payload, once complete."""
        if not self.complete:
            raise ValueError("Block is not decoded yet.")
        return {col: data for col, (_, data) in sorted(self.rows.items())}

    def recode(self, rng: np.random.Generator) -> Optional[Tuple[np.ndarray, np.ndarray]]:
        if not self.rows:
            return None
        mix = draw_coefficients(rng, len(self.rows))
        vec = np.zeros(self.block_size, dtype=np.uint8)
        data = np.zeros(self.payload_len, dtype=np.uint8)
        for c, (row, row_data) in zip(mix, self.rows.values()):
            vec ^= MUL_TABLE[c][row]
            data ^= MUL_TABLE[c][row_data]
        return vec, data
