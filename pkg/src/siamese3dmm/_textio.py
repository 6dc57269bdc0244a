"""Line-oriented text serialization helpers shared by the on-disk formats.

All reals are written with 17 significant digits so doubles round-trip
exactly through save/load.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np


def real_line(values) -> str:
    return " ".join(f"{float(v):.17g}" for v in values)


def write_lines(path, lines) -> None:
    Path(path).write_text("\n".join(lines) + "\n")


class LineReader:
    """Sequential line reader that reports file and line context on failure."""

    def __init__(self, path):
        self.path = str(path)
        self.lines = Path(path).read_text().splitlines()
        self.pos = 0

    def _fail(self, message):
        raise ValueError(f"{self.path}: {message}")

    def next_line(self, context) -> str:
        if self.pos >= len(self.lines):
            self._fail(f"unexpected end of file while reading {context} (line {self.pos + 1})")
        line = self.lines[self.pos]
        self.pos += 1
        return line

    def expect(self, literal) -> None:
        line = self.next_line(f"'{literal}'").strip()
        if line != literal:
            self._fail(f"line {self.pos}: expected '{literal}', found '{line[:60]}'")

    def labeled_int(self, label) -> int:
        parts = self.next_line(label).split()
        if len(parts) != 2 or parts[0] != label:
            self._fail(f"line {self.pos}: expected '{label} <integer>'")
        try:
            return int(parts[1])
        except ValueError:
            self._fail(f"line {self.pos}: {label} is not an integer: '{parts[1]}'")

    def labeled_str(self, label) -> str:
        parts = self.next_line(label).split()
        if len(parts) != 2 or parts[0] != label:
            self._fail(f"line {self.pos}: expected '{label} <value>'")
        return parts[1]

    def int_row(self, name, count) -> np.ndarray:
        parts = self.next_line(name).split()
        if len(parts) != count:
            self._fail(f"{name}: expected {count} values, got {len(parts)} (line {self.pos})")
        try:
            return np.array([int(p) for p in parts], dtype=int)
        except ValueError:
            self._fail(f"{name}: non-integer entry on line {self.pos}")

    def real_row(self, name, count) -> np.ndarray:
        parts = self.next_line(name).split()
        if len(parts) != count:
            self._fail(f"{name}: expected {count} values, got {len(parts)} (line {self.pos})")
        try:
            return np.array([float(p) for p in parts], dtype=float)
        except ValueError:
            self._fail(f"{name}: non-numeric entry on line {self.pos}")

    def real_matrix(self, name, rows, cols) -> np.ndarray:
        out = np.empty((rows, cols))
        for r in range(rows):
            out[r] = self.real_row(f"{name} row {r}", cols)
        return out

    def real_flat(self, name, count, per_line) -> np.ndarray:
        out = np.empty(count)
        filled = 0
        while filled < count:
            take = min(per_line, count - filled)
            out[filled:filled + take] = self.real_row(name, take)
            filled += take
        return out

    def done(self) -> None:
        while self.pos < len(self.lines):
            if self.lines[self.pos].strip():
                self._fail(f"unexpected trailing content on line {self.pos + 1}")
            self.pos += 1
