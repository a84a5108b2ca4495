"""
Synthetic template sets with exactly known joint distributions.
"""
import itertools
import logging
from typing import Optional

import numpy as np

from denoising.templates import TemplateSet
from lib.errors import ConfigurationError

logger = logging.getLogger(__name__)

# Below this many candidate grids, distinct templates are drawn by index.
ENUMERATION_LIMIT = 1 << 20

A, B = 1, 2


def make_pairs_dataset() -> TemplateSet:
    """Two 1x2 grids, AA and BB, with equal weight and a single class."""
    return TemplateSet.from_grids(2, 1, 2, [[A, A], [B, B]], labels=[1, 1], weights=[0.5, 0.5])


def _decode(index: int, k: int, n: int) -> list:
    digits = []
    for _ in range(n):
        index, d = divmod(index, k)
        digits.append(d + 1)
    return digits[::-1]


def make_template_dataset(k: int, h: int, w: int, n_templates: int, n_classes: int = 1,
                          seed: int = 0, constant_position: Optional[int] = None) -> TemplateSet:
    """
    Distinct uniformly random grids with round-robin classes and equal weights.

    Args:
        k: Vocabulary size
        h: Grid height
        w: Grid width
        n_templates: Number of templates
        n_classes: Number of classes (<= n_templates)
        seed: Random seed
        constant_position: Position held at token 1 in every template

    Returns:
        TemplateSet
    """
    if not 1 <= n_classes <= n_templates:
        raise ConfigurationError(f"need 1 <= n_classes <= n_templates, got {n_classes} and {n_templates}")
    if k < 1 or h < 1 or w < 1:
        raise ConfigurationError("k, h and w must be >= 1")
    size = h * w
    if constant_position is not None and not 0 <= constant_position < size:
        raise ConfigurationError(f"constant_position {constant_position} outside [0, {size})")

    free = size - (1 if constant_position is not None else 0)
    space = k ** free
    if n_templates > space:
        raise ConfigurationError(f"cannot draw {n_templates} distinct grids from {space} candidates")

    rng = np.random.default_rng(seed)
    if space <= ENUMERATION_LIMIT:
        indices = rng.choice(space, size=n_templates, replace=False)
        rows = [_decode(int(i), k, free) for i in indices]
    else:
        seen = set()
        rows = []
        while len(rows) < n_templates:
            row = tuple(int(v) for v in rng.integers(1, k + 1, size=free))
            if row not in seen:
                seen.add(row)
                rows.append(list(row))

    if constant_position is not None:
        rows = [row[:constant_position] + [1] + row[constant_position:] for row in rows]

    labels = [i % n_classes + 1 for i in range(n_templates)]
    logger.debug(f"generated {n_templates} templates (k={k}, {h}x{w}, {n_classes} classes)")
    return TemplateSet.from_grids(k, h, w, rows, labels=labels)


def make_majority_dataset(width: int = 3) -> TemplateSet:
    """
    Every binary 1 x width grid; class 1 when A is the strict majority, class 2 otherwise.
    """
    if width < 1:
        raise ConfigurationError(f"width must be >= 1, got {width}")
    grids = [list(g) for g in itertools.product((A, B), repeat=width)]
    labels = [1 if 2 * g.count(A) > width else 2 for g in grids]
    if len(set(labels)) < 2:
        raise ConfigurationError(f"width {width} yields a single class")
    return TemplateSet.from_grids(2, 1, width, grids, labels=labels)
