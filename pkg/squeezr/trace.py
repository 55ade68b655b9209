"""Campaign telemetry: trace rows, the trace CSV format and the event log."""

from __future__ import annotations

import json
import math
from collections.abc import Iterable, Iterator
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd

from squeezr.exceptions import SchemaError

TRACE_COLUMNS = (
    "t_s",
    "squeezing_dB",
    "antisqueezing_dB",
    "locked",
    "controller_phase",
    "offset_mrad",
    "pump_mW",
    "event",
)

_ROUNDING = {
    "t_s": 3,
    "squeezing_dB": 4,
    "antisqueezing_dB": 4,
    "offset_mrad": 4,
    "pump_mW": 4,
}


@dataclass(frozen=True)
class TraceRecord:
    """One telemetry row.

    Attributes:
        t: Simulated time in seconds.
        squeezing_dB: Signed reading, negative when squeezed.
        antisqueezing_dB: Signed anti-squeezing reading, None when unlocked.
        locked: Whether the squeezer was fully locked on double resonance.
        controller_phase: Supervisor phase label at the time of the reading.
        applied_offset: Cumulative B/C phase offset applied by the controller (rad).
        pump_mW: Pump power in mW.
        event: Optional event label (relock-triggered, relock-success, ...).
    """

    t: float
    squeezing_dB: float
    antisqueezing_dB: float | None = None
    locked: bool = True
    controller_phase: str = "Monitoring"
    applied_offset: float = 0.0
    pump_mW: float = 0.0
    event: str | None = None

    @property
    def squeezing_level(self) -> float:
        return -self.squeezing_dB


class Trace:
    """Time-ordered sequence of :class:`TraceRecord` rows."""

    def __init__(self, records: Iterable[TraceRecord] = ()):
        self._records: list[TraceRecord] = []
        for record in records:
            self.append(record)

    def append(self, record: TraceRecord) -> None:
        if self._records and not record.t > self._records[-1].t:
            raise ValueError(
                f"Trace times must be strictly increasing: {record.t} after "
                f"{self._records[-1].t}"
            )
        self._records.append(record)

    def __len__(self) -> int:
        return len(self._records)

    def __iter__(self) -> Iterator[TraceRecord]:
        return iter(self._records)

    def __getitem__(self, index: int) -> TraceRecord:
        return self._records[index]

    @property
    def records(self) -> list[TraceRecord]:
        return list(self._records)

    def times(self) -> np.ndarray:
        return np.fromiter((r.t for r in self._records), dtype=float, count=len(self))

    def squeezing_levels(self) -> np.ndarray:
        return np.fromiter(
            (-r.squeezing_dB for r in self._records), dtype=float, count=len(self)
        )

    def locked_mask(self) -> np.ndarray:
        return np.fromiter((r.locked for r in self._records), dtype=bool, count=len(self))

    def events(self) -> list[str]:
        """Event labels in order; one row may carry several, joined by ';'."""
        return [label for r in self._records if r.event for label in r.event.split(";")]

    def to_frame(self) -> pd.DataFrame:
        rows = [
            {
                "t_s": r.t,
                "squeezing_dB": r.squeezing_dB,
                "antisqueezing_dB": r.antisqueezing_dB,
                "locked": int(r.locked),
                "controller_phase": r.controller_phase,
                "offset_mrad": r.applied_offset * 1e3,
                "pump_mW": r.pump_mW,
                "event": r.event,
            }
            for r in self._records
        ]
        return pd.DataFrame(rows, columns=list(TRACE_COLUMNS))

    def to_csv(self, path: str | Path) -> Path:
        path = Path(path)
        self.to_frame().round(_ROUNDING).to_csv(path, index=False, lineterminator="\n")
        return path

    @classmethod
    def from_frame(cls, frame: pd.DataFrame) -> Trace:
        missing = [c for c in TRACE_COLUMNS if c not in frame.columns]
        if missing:
            raise SchemaError(f"Trace CSV is missing column(s): {', '.join(missing)}")
        if frame.empty:
            raise SchemaError("Trace CSV has no rows")
        for column in ("t_s", "squeezing_dB", "locked", "offset_mrad", "pump_mW"):
            bad = frame[column].isna() | ~frame[column].map(_is_number)
            if bad.any():
                row = int(np.flatnonzero(bad.to_numpy())[0]) + 2
                raise SchemaError(
                    f"Trace CSV row {row}: column '{column}' must be numeric, "
                    f"got {frame[column].iloc[row - 2]!r}"
                )
        trace = cls()
        for i, row in enumerate(frame.itertuples(index=False)):
            anti = row.antisqueezing_dB
            event = row.event
            record = TraceRecord(
                t=float(row.t_s),
                squeezing_dB=float(row.squeezing_dB),
                antisqueezing_dB=None if pd.isna(anti) else float(anti),
                locked=bool(int(float(row.locked))),
                controller_phase=str(row.controller_phase),
                applied_offset=float(row.offset_mrad) * 1e-3,
                pump_mW=float(row.pump_mW),
                event=None if pd.isna(event) or event == "" else str(event),
            )
            try:
                trace.append(record)
            except ValueError as e:
                raise SchemaError(f"Trace CSV row {i + 2}: {e}") from e
        return trace

    @classmethod
    def from_csv(cls, path: str | Path) -> Trace:
        path = Path(path)
        try:
            frame = pd.read_csv(path, keep_default_na=True)
        except pd.errors.EmptyDataError as e:
            raise SchemaError(f"Trace CSV '{path}' is empty") from e
        return cls.from_frame(frame)

    def __repr__(self):
        if not self._records:
            return "Trace(empty)"
        return (
            f"Trace({len(self)} records, t={self._records[0].t:.1f}"
            f"..{self._records[-1].t:.1f} s)"
        )


def _is_number(value: Any) -> bool:
    if isinstance(value, (bool, np.bool_)):
        return True
    try:
        return math.isfinite(float(value))
    except (TypeError, ValueError):
        return False


@dataclass(frozen=True)
class EventEntry:
    t: float
    phase: str
    command: str | None
    reading_dB: float | None
    outcome: str

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


class EventLog:
    """Structured controller log, written as JSON lines."""

    def __init__(self):
        self._entries: list[EventEntry] = []

    def record(
        self,
        t: float,
        phase: str,
        command: str | None,
        reading_dB: float | None,
        outcome: str,
    ) -> EventEntry:
        entry = EventEntry(
            t=round(t, 6),
            phase=phase,
            command=command,
            reading_dB=None if reading_dB is None else round(reading_dB, 6),
            outcome=outcome,
        )
        self._entries.append(entry)
        return entry

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self) -> Iterator[EventEntry]:
        return iter(self._entries)

    def count(self, outcome: str) -> int:
        return sum(1 for e in self._entries if e.outcome == outcome)

    def write_jsonl(self, path: str | Path) -> Path:
        path = Path(path)
        with open(path, "w") as f:
            for entry in self._entries:
                f.write(json.dumps(entry.to_dict()) + "\n")
        return path

    @classmethod
    def read_jsonl(cls, path: str | Path) -> EventLog:
        log = cls()
        with open(path) as f:
            for line in f:
                if line.strip():
                    log._entries.append(EventEntry(**json.loads(line)))
        return log
