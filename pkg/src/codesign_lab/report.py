"""Report container with a JSON form and a plain-text table form."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from . import __version__

TOOL = "codesign-lab"


@dataclass
class Table:
    name: str
    columns: list[str]
    rows: list[dict] = field(default_factory=list)

    def add(self, **cells) -> None:
        missing = set(self.columns) - set(cells)
        if missing:
            raise KeyError(f"row for {self.name} lacks {sorted(missing)}")
        self.rows.append({c: _plain(cells[c]) for c in self.columns})


@dataclass
class Report:
    command: str
    config: dict
    seeds: dict = field(default_factory=dict)
    tables: list[Table] = field(default_factory=list)

    def table(self, name: str, columns: list[str]) -> Table:
        t = Table(name, columns)
        self.tables.append(t)
        return t

    def get(self, name: str) -> Table:
        for t in self.tables:
            if t.name == name:
                return t
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "tool": TOOL,
            "version": __version__,
            "command": self.command,
            "config": _plain(self.config),
            "seeds": _plain(self.seeds),
            "tables": [{"name": t.name, "columns": t.columns, "rows": t.rows} for t in self.tables],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, allow_nan=False) + "\n"

    def to_text(self) -> str:
        out = [f"{TOOL} {__version__} :: {self.command}"]
        if self.seeds:
            out.append("seeds: " + ", ".join(f"{k}={v}" for k, v in sorted(self.seeds.items())))
        for t in self.tables:
            out.append("")
            out.append(f"[{t.name}]")
            out.extend(_render(t))
        return "\n".join(out) + "\n"


def fmt_cell(v) -> str:
    if isinstance(v, bool) or v is None:
        return str(v)
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return f"{v:.5g}"
    return str(v)


def _render(t: Table) -> list[str]:
    if not t.rows:
        return ["  ".join(t.columns), "(no rows)"]
    cells = [[fmt_cell(r[c]) for c in t.columns] for r in t.rows]
    widths = [max(len(c), *(len(row[i]) for row in cells)) for i, c in enumerate(t.columns)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(t.columns, widths))]
    lines.append("  ".join("-" * w for w in widths))
    for row in cells:
        lines.append("  ".join(v.rjust(w) for v, w in zip(row, widths)))
    return lines


def _plain(v):
    """Convert numpy scalars/containers to JSON-native values; NaN/inf become None."""
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if hasattr(v, "item") and not isinstance(v, (str, bytes)):
        v = v.item()
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v
