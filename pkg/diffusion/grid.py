"""
Token grids: the diffusion state x_t.
"""
import json
from dataclasses import dataclass
from typing import Any, Dict, Iterable, Tuple

import numpy as np

from lib.errors import ConfigurationError


def mask_token(K: int) -> int:
    """MASK is encoded as K + 1."""
    return K + 1


@dataclass(frozen=True, eq=False)
class TokenGrid:
    """
    An H x W grid of token ids, stored row-major.

    Token ids are 1..K for real tokens and K + 1 for MASK.
    """
    h: int
    w: int
    tokens: np.ndarray

    def __post_init__(self):
        if self.h < 1 or self.w < 1:
            raise ConfigurationError(f"grid extents must be >= 1, got {self.h}x{self.w}")
        tokens = np.array(self.tokens, dtype=np.int64).reshape(-1)
        if tokens.size != self.h * self.w:
            raise ConfigurationError(f"expected {self.h * self.w} tokens, got {tokens.size}")
        tokens.setflags(write=False)
        object.__setattr__(self, 'tokens', tokens)

    @classmethod
    def full(cls, h: int, w: int, value: int) -> "TokenGrid":
        return cls(h, w, np.full(h * w, value, dtype=np.int64))

    @property
    def size(self) -> int:
        return self.h * self.w

    def validate(self, K: int, allow_mask: bool = True) -> "TokenGrid":
        """
        Check every id is in range.

        Args:
            K: Vocabulary size excluding MASK
            allow_mask: Whether K + 1 is accepted

        Returns:
            self, for chaining
        """
        upper = K + 1 if allow_mask else K
        if self.tokens.min() < 1 or self.tokens.max() > upper:
            raise ConfigurationError(f"token ids must lie in [1, {upper}]")
        return self

    def mask_positions(self, K: int) -> np.ndarray:
        return np.flatnonzero(self.tokens == mask_token(K))

    def mask_count(self, K: int) -> int:
        return int(np.count_nonzero(self.tokens == mask_token(K)))

    def replace(self, positions: Iterable[int], values: Iterable[int]) -> "TokenGrid":
        """Copy of the grid with tokens at positions overwritten."""
        tokens = self.tokens.copy()
        tokens[np.asarray(list(positions), dtype=np.int64)] = np.asarray(list(values), dtype=np.int64)
        return TokenGrid(self.h, self.w, tokens)

    def key(self) -> Tuple[int, ...]:
        """Hashable identity used for exact-match binning."""
        return tuple(int(v) for v in self.tokens)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TokenGrid):
            return NotImplemented
        return self.h == other.h and self.w == other.w and np.array_equal(self.tokens, other.tokens)

    def __hash__(self) -> int:
        return hash((self.h, self.w, self.key()))

    def __repr__(self) -> str:
        return f"TokenGrid({self.h}x{self.w}, {list(self.key())})"

    def to_dict(self) -> Dict[str, Any]:
        return {"h": self.h, "w": self.w, "tokens": list(self.key())}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "TokenGrid":
        try:
            return cls(int(data["h"]), int(data["w"]), data["tokens"])
        except (KeyError, TypeError) as e:
            raise ConfigurationError(f"malformed token grid: {e}")

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "TokenGrid":
        return cls.from_dict(json.loads(text))
