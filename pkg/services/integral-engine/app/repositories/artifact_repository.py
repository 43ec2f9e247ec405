"""Repository layer for run artefacts.

Tables and the manifest are staged in memory while an experiment runs and
written together once it has finished, so a failed run leaves no files.
"""

import csv
import json
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path

from shared.core.config import settings
from shared.core.logging import get_logger
from shared.exceptions import ArtifactWriteError
from shared.schemas import RunManifest

logger = get_logger(__name__)

MANIFEST_NAME = "manifest.json"


@dataclass
class CsvTable:
    """One CSV artefact: file name, fixed column order and rows."""

    name: str
    header: list[str]
    rows: list[list[object]] = field(default_factory=list)

    def add(self, row: Sequence[object]) -> None:
        if len(row) != len(self.header):
            raise ValueError(f"{self.name}: row has {len(row)} cells, header {len(self.header)}")
        self.rows.append(list(row))


def format_cell(value: object) -> str:
    """Render one cell: floats in the configured format, None as an empty cell."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return format(value, settings.csv_float_format)
    if hasattr(value, "item"):
        return format_cell(value.item())
    return str(value)


class ArtifactRepository:
    """Repository writing CSV tables and the run manifest into one directory."""

    def __init__(self, output_dir: str | Path):
        """
        Initialize repository with its output directory.

        Args:
            output_dir: Directory receiving the artefacts; created on write
        """
        self.output_dir = Path(output_dir)
        self._tables: dict[str, CsvTable] = {}

    def stage(self, table: CsvTable) -> None:
        """Queue a table for writing; a later table with the same name replaces it."""
        self._tables[table.name] = table

    @property
    def staged_names(self) -> list[str]:
        return list(self._tables)

    def _write_table(self, table: CsvTable) -> None:
        path = self.output_dir / table.name
        try:
            with path.open("w", newline="", encoding="utf-8") as handle:
                writer = csv.writer(handle, lineterminator="\n")
                writer.writerow(table.header)
                for row in table.rows:
                    writer.writerow([format_cell(cell) for cell in row])
        except OSError as e:
            logger.error("Failed to write table", path=str(path), error=str(e))
            raise ArtifactWriteError(str(path), str(e)) from e

    def commit(self, manifest: RunManifest) -> list[str]:
        """
        Write every staged table, then the manifest.

        Args:
            manifest: Run manifest; its artefact list is filled in here

        Returns:
            list[str]: Names of the files written

        Raises:
            ArtifactWriteError: If the directory or a file cannot be written
        """
        try:
            self.output_dir.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            logger.error("Failed to create output directory", path=str(self.output_dir))
            raise ArtifactWriteError(str(self.output_dir), str(e)) from e

        for table in self._tables.values():
            self._write_table(table)

        names = [*self._tables, MANIFEST_NAME]
        manifest = manifest.model_copy(update={"artifacts": names})
        path = self.output_dir / MANIFEST_NAME
        try:
            path.write_text(
                json.dumps(manifest.model_dump(mode="json"), indent=2, sort_keys=True) + "\n",
                encoding="utf-8",
            )
        except OSError as e:
            logger.error("Failed to write manifest", path=str(path), error=str(e))
            raise ArtifactWriteError(str(path), str(e)) from e

        logger.info("Run artefacts written", output_dir=str(self.output_dir), files=len(names))
        return names
