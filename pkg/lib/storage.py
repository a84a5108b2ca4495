"""
File storage for experiment artifacts: sample files, traces and CSV reports.

All writes are deterministic: compact JSON, "\n" line endings and
full-precision floats.
"""
import logging
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Union

import pandas as pd

from diffusion.grid import TokenGrid
from lib.errors import ConfigurationError
from sampling.trace import SampleTrace

logger = logging.getLogger(__name__)

# CSV floats are written at full double precision.
FLOAT_FORMAT = "%.17g"

PathLike = Union[str, Path]


class ArtifactStorage:
    """Reads and writes experiment artifacts under an optional root directory."""

    def __init__(self, root: Optional[PathLike] = None):
        """
        Args:
            root: Directory relative paths are resolved against (default: cwd)
        """
        self.root = Path(root) if root is not None else None

    def resolve(self, path: PathLike) -> Path:
        path = Path(path)
        if self.root is not None and not path.is_absolute():
            path = self.root / path
        return path

    def _prepare(self, path: PathLike) -> Path:
        path = self.resolve(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        return path

    def claim(self, path: PathLike, overwrite: bool = False) -> Path:
        """
        Reserve an output path before any work is done.

        Args:
            path: Output file
            overwrite: Allow replacing an existing file

        Returns:
            Resolved path with its parent directory created

        Raises:
            ConfigurationError: the file exists and overwrite is False
        """
        path = self.resolve(path)
        if path.exists() and not overwrite:
            raise ConfigurationError(f"{path} already exists (pass --overwrite to replace it)")
        return self._prepare(path)

    def save_samples(self, path: PathLike, grids: Iterable[TokenGrid]) -> Path:
        """
        Write one grid per line as JSON.

        Args:
            path: Output file (overwritten)
            grids: Grids in chain order

        Returns:
            Resolved path
        """
        path = self._prepare(path)
        lines = [g.to_json() + "\n" for g in grids]
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.writelines(lines)
        logger.info(f"Wrote {len(lines)} samples to {path}")
        return path

    def load_samples(self, path: PathLike) -> List[TokenGrid]:
        """Read a samples file written by save_samples."""
        path = self.resolve(path)
        if not path.exists():
            raise ConfigurationError(f"samples file not found: {path}")
        grids = []
        with open(path, "r", encoding="utf-8") as f:
            for lineno, line in enumerate(f, start=1):
                if not line.strip():
                    continue
                try:
                    grids.append(TokenGrid.from_json(line))
                except ValueError as e:
                    raise ConfigurationError(f"{path}:{lineno}: malformed grid: {e}")
        return grids

    def save_traces(self, path: PathLike, traces: Sequence[SampleTrace]) -> Path:
        """
        Write the steps of several chains as JSON lines.

        Each line carries the chain index next to the step fields.
        """
        path = self._prepare(path)
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            for chain, trace in enumerate(traces):
                for line in trace.to_jsonl().splitlines():
                    f.write('{"chain":%d,%s\n' % (chain, line[1:]))
        return path

    def append_rows(self, path: PathLike, frame: pd.DataFrame) -> Path:
        """
        Append rows to a CSV file, writing the header only when the file is new.

        Args:
            path: CSV file
            frame: Rows to append; columns must match an existing header

        Returns:
            Resolved path
        """
        path = self._prepare(path)
        exists = path.exists() and path.stat().st_size > 0
        if exists:
            header = pd.read_csv(path, nrows=0).columns.tolist()
            if header != list(frame.columns):
                raise ConfigurationError(f"{path} has columns {header}, expected {list(frame.columns)}")
        frame.to_csv(path, mode="a", header=not exists, index=False,
                     float_format=FLOAT_FORMAT, lineterminator="\n")
        return path

    def write_frame(self, path: PathLike, frame: pd.DataFrame) -> Path:
        """Write a CSV file, replacing any previous content."""
        path = self._prepare(path)
        frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
        return path


# Singleton instance
_storage_instance: Optional[ArtifactStorage] = None


def get_storage() -> ArtifactStorage:
    """Get or create the storage instance"""
    global _storage_instance
    if _storage_instance is None:
        _storage_instance = ArtifactStorage()
    return _storage_instance
