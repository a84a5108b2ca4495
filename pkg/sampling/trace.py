"""
Per-chain sampling traces.
"""
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

from diffusion.grid import TokenGrid


@dataclass(frozen=True)
class TraceStep:
    """State after one sampler iteration."""
    t: int
    grid: TokenGrid
    recovered: Tuple[int, ...]
    mask_count: int

    def to_dict(self) -> Dict[str, Any]:
        return {
            "t": self.t,
            "mask_count": self.mask_count,
            "recovered": list(self.recovered),
            "grid": self.grid.to_dict(),
        }


@dataclass
class SampleTrace:
    """
    Sequence of states visited by a chain.

    The first step is the initial state (t = T, nothing recovered); the last
    step holds the final grid at t = 0.
    """
    steps: List[TraceStep] = field(default_factory=list)
    restarts: int = 0

    def record(self, t: int, grid: TokenGrid, K: int, recovered=()) -> None:
        self.steps.append(TraceStep(int(t), grid, tuple(int(i) for i in recovered), grid.mask_count(K)))

    @property
    def final(self) -> Optional[TokenGrid]:
        return self.steps[-1].grid if self.steps else None

    @property
    def n_iterations(self) -> int:
        """Denoiser iterations performed (steps after the initial state)."""
        return max(len(self.steps) - 1, 0)

    def mask_counts(self) -> List[int]:
        return [s.mask_count for s in self.steps]

    def to_jsonl(self) -> str:
        return "".join(json.dumps(s.to_dict(), separators=(",", ":")) + "\n" for s in self.steps)

    def dump(self, path: Union[str, Path]) -> None:
        """Write one JSON object per step."""
        Path(path).write_text(self.to_jsonl(), encoding="utf-8")
