"""
Template sets: finite weighted sets of clean grids that define an exactly
computable data distribution.
"""
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np

from diffusion.grid import TokenGrid
from lib.errors import ConfigurationError

# Reserved condition id for the unconditional (null) query.
NULL = 0


def check_condition(cond: int, classes: int) -> int:
    """
    Validate a condition: NULL or a class label in 1..classes.

    Returns:
        The condition as a plain int
    """
    cond = int(cond)
    if cond != NULL and not 1 <= cond <= classes:
        raise ConfigurationError(f"condition {cond} is neither NULL nor a class in 1..{classes}")
    return cond


@dataclass(frozen=True)
class Template:
    grid: TokenGrid
    label: int
    weight: float


@dataclass(frozen=True, eq=False)
class TemplateSet:
    """
    Weighted, labelled clean grids sharing one shape and vocabulary.

    Weights are normalized on construction. Grids must be distinct.
    """
    k: int
    h: int
    w: int
    classes: int
    templates: List[Template] = field(default_factory=list)

    def __post_init__(self):
        if self.k < 1 or self.classes < 1:
            raise ConfigurationError("k and classes must be >= 1")
        if not self.templates:
            raise ConfigurationError("a template set needs at least one template")

        seen = set()
        total = 0.0
        for tpl in self.templates:
            if (tpl.grid.h, tpl.grid.w) != (self.h, self.w):
                raise ConfigurationError(f"template shape {tpl.grid.h}x{tpl.grid.w} differs from {self.h}x{self.w}")
            tpl.grid.validate(self.k, allow_mask=False)
            if not 1 <= tpl.label <= self.classes:
                raise ConfigurationError(f"template class {tpl.label} outside 1..{self.classes}")
            if not tpl.weight > 0:
                raise ConfigurationError(f"template weight must be > 0, got {tpl.weight}")
            if tpl.grid.key() in seen:
                raise ConfigurationError(f"duplicate template {list(tpl.grid.key())}")
            seen.add(tpl.grid.key())
            total += tpl.weight

        normalized = [Template(t.grid, int(t.label), float(t.weight) / total) for t in self.templates]
        object.__setattr__(self, 'templates', normalized)
        object.__setattr__(self, '_tokens', np.stack([t.grid.tokens for t in normalized]))
        object.__setattr__(self, '_labels', np.array([t.label for t in normalized], dtype=np.int64))
        object.__setattr__(self, '_weights', np.array([t.weight for t in normalized], dtype=np.float64))
        object.__setattr__(self, '_index', {t.grid.key(): i for i, t in enumerate(normalized)})

    @classmethod
    def from_grids(cls, k: int, h: int, w: int, grids: Sequence[Sequence[int]],
                   labels: Optional[Sequence[int]] = None,
                   weights: Optional[Sequence[float]] = None) -> "TemplateSet":
        """
        Convenience constructor from flat token lists.

        Args:
            k: Vocabulary size
            h: Grid height
            w: Grid width
            grids: Row-major token lists
            labels: Class labels (default all 1)
            weights: Template weights (default uniform)

        Returns:
            TemplateSet
        """
        n = len(grids)
        labels = list(labels) if labels is not None else [1] * n
        weights = list(weights) if weights is not None else [1.0] * n
        templates = [Template(TokenGrid(h, w, g), int(y), float(wt)) for g, y, wt in zip(grids, labels, weights)]
        return cls(k=k, h=h, w=w, classes=max(labels), templates=templates)

    def __len__(self) -> int:
        return len(self.templates)

    @property
    def size(self) -> int:
        return self.h * self.w

    @property
    def tokens(self) -> np.ndarray:
        """Integer array (M, N) of template tokens."""
        return self._tokens

    @property
    def labels(self) -> np.ndarray:
        return self._labels

    @property
    def weights(self) -> np.ndarray:
        return self._weights

    def prior(self, cond: int) -> np.ndarray:
        """Template weights restricted to a class, or all weights for NULL."""
        cond = check_condition(cond, self.classes)
        if cond == NULL:
            return self._weights.copy()
        return np.where(self._labels == cond, self._weights, 0.0)

    def class_prior(self) -> np.ndarray:
        """P(y) for y = 1..classes."""
        return np.array([self._weights[self._labels == y].sum() for y in range(1, self.classes + 1)])

    def marginal(self, cond: int = NULL) -> np.ndarray:
        """
        Per-position distribution of the clean token.

        Returns:
            Array (N, K)
        """
        prior = self.prior(cond)
        prior = prior / prior.sum()
        out = np.zeros((self.size, self.k))
        for m in range(len(self)):
            out[np.arange(self.size), self._tokens[m] - 1] += prior[m]
        return out

    def index_of(self, grid: TokenGrid) -> Optional[int]:
        """Index of the template equal to grid, or None."""
        return self._index.get(grid.key())

    def to_dict(self) -> Dict[str, Any]:
        return {
            "k": self.k,
            "h": self.h,
            "w": self.w,
            "classes": self.classes,
            "templates": [
                {"tokens": list(t.grid.key()), "class": t.label, "weight": t.weight}
                for t in self.templates
            ],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "TemplateSet":
        try:
            h, w = int(data["h"]), int(data["w"])
            templates = [
                Template(TokenGrid(h, w, item["tokens"]), int(item["class"]), float(item["weight"]))
                for item in data["templates"]
            ]
            return cls(k=int(data["k"]), h=h, w=w, classes=int(data["classes"]), templates=templates)
        except (KeyError, TypeError) as e:
            raise ConfigurationError(f"malformed template set: {e}")

    def save(self, path: Union[str, Path]) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: Union[str, Path]) -> "TemplateSet":
        path = Path(path)
        if not path.exists():
            raise ConfigurationError(f"template set file not found: {path}")
        return cls.from_dict(json.loads(path.read_text(encoding="utf-8")))
