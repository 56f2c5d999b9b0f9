"""Fixed-cadence sampling daemon.

Polls a modem backend once per tick, geo-tags the report from a position
source, and appends validated records to rotating trace files.  End-to-end
tests fire on their own cadence and run on a worker thread so a
seconds-long throughput test never punches holes in the 1 Hz RAN series.

Ticks are scheduled on absolute deadlines (t0 + n*interval) so cadence
cannot drift over an hour-long flight, and records are stamped with the
scheduled tick time from the injected clock, which makes simulated runs
bit-reproducible.
"""

from __future__ import annotations

import logging
import queue
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Protocol

from .modem import ModemBackend, ModemError, ModemReport, RangeError, ReplayExhausted, ReportSyntaxError
from .records import (
    EndToEndRecord,
    GeoPosition,
    MeasurementRecord,
    RttSummary,
    encode_e2e,
    encode_record,
    read_trace,
    validate_e2e,
    validate_record,
)
from .simenv import FlightPlan, flight_position

log = logging.getLogger("skylog.collector")

# Epoch for simulated runs; any fixed value works, stability is the point.
SIM_EPOCH_MS = 1_700_000_000_000


class Clock(Protocol):
    def now_ms(self) -> int: ...
    def sleep_until_ms(self, deadline_ms: int) -> None: ...


class SimClock:
    """Virtual clock: sleeping jumps straight to the deadline."""

    def __init__(self, start_ms: int = SIM_EPOCH_MS):
        self._now_ms = start_ms

    def now_ms(self) -> int:
        return self._now_ms

    def sleep_until_ms(self, deadline_ms: int) -> None:
        if deadline_ms > self._now_ms:
            self._now_ms = deadline_ms


class SystemClock:
    def now_ms(self) -> int:
        return time.time_ns() // 1_000_000

    def sleep_until_ms(self, deadline_ms: int) -> None:
        delta_s = (deadline_ms - self.now_ms()) / 1000.0
        if delta_s > 0:
            time.sleep(delta_s)


class PositionSource(Protocol):
    def position(self) -> GeoPosition: ...


class FixedPositionSource:
    def __init__(self, pos: GeoPosition):
        self._pos = pos

    def position(self) -> GeoPosition:
        return self._pos


class PlanPositionSource:
    """Follows a flight plan against the run clock; bound at run start."""

    def __init__(self, plan: FlightPlan):
        self._plan = plan
        self._clock: Optional[Clock] = None
        self._t0_ms = 0

    def bind(self, clock: Clock, t0_ms: int) -> None:
        self._clock = clock
        self._t0_ms = t0_ms

    def position(self) -> GeoPosition:
        if self._clock is None:
            return flight_position(self._plan, 0.0)
        elapsed_s = (self._clock.now_ms() - self._t0_ms) / 1000.0
        return flight_position(self._plan, max(elapsed_s, 0.0))


class TracePositionSource:
    """Replays positions from a trace in lockstep with a ReplayBackend."""

    def __init__(self, trace_path):
        self._positions = [rec.pos for rec in read_trace(trace_path)]
        self._cursor = 0

    def position(self) -> GeoPosition:
        if self._cursor < len(self._positions):
            pos = self._positions[self._cursor]
            self._cursor += 1
            return pos
        return self._positions[-1]


class E2eEngine(Protocol):
    def measure(self, pos: GeoPosition, salt: int) -> tuple[RttSummary, float, float, float]:
        """Returns (rtt summary, dl_mbps, ul_mbps, duration_s)."""
        ...


@dataclass
class CollectorConfig:
    output_dir: str
    sample_interval_ms: int = 1000
    e2e_interval_s: float = 60.0  # 0 disables end-to-end testing
    max_file_records: int = 100_000
    duration_s: Optional[float] = None  # None = run until stop signal
    run_id: Optional[str] = None

    def __post_init__(self):
        if self.sample_interval_ms < 100:
            raise ValueError("sample_interval_ms must be >= 100")
        if self.max_file_records < 1:
            raise ValueError("max_file_records must be >= 1")
        if self.e2e_interval_s < 0:
            raise ValueError("e2e_interval_s must be >= 0")


@dataclass
class RunSummary:
    records_written: int
    polls_failed: int
    e2e_tests_run: int
    start_ms: int
    end_ms: int
    files: list[str] = field(default_factory=list)

    @property
    def polls_attempted(self) -> int:
        return self.records_written + self.polls_failed

    def to_doc(self) -> dict:
        return {
            "records_written": self.records_written,
            "polls_failed": self.polls_failed,
            "e2e_tests_run": self.e2e_tests_run,
            "start_ms": self.start_ms,
            "end_ms": self.end_ms,
            "files": list(self.files),
        }


def assemble_record(report: ModemReport, pos: GeoPosition, ts_unix_ms: int,
                    source: str = "sim") -> MeasurementRecord:
    """Build and validate a record; raises ValueError naming the violation."""
    rec = MeasurementRecord(ts_unix_ms=ts_unix_ms, pos=pos,
                            serving=report.serving, neighbors=report.neighbors,
                            source=source)
    result = validate_record(rec)
    if not result:
        raise ValueError(f"invalid record: {result.message}")
    return rec


class _TraceWriter(threading.Thread):
    """The only component that touches output files; consumes an ordered queue."""

    _STOP = object()

    def __init__(self, out_dir: Path, run_id: str, max_file_records: int):
        super().__init__(name="skylog-writer", daemon=True)
        self.out_dir = out_dir
        self.run_id = run_id
        self.max_file_records = max_file_records
        self.queue: queue.Queue = queue.Queue()
        self.files: list[str] = []
        self.ran_written = 0
        self.e2e_written = 0
        self.error: Optional[BaseException] = None
        self._ran_fh = None
        self._ran_seq = 0
        self._ran_in_file = 0
        self._e2e_fh = None

    def _rotate_ran(self):
        if self._ran_fh is not None:
            self._ran_fh.close()
        self._ran_seq += 1
        path = self.out_dir / f"{self.run_id}-{self._ran_seq:04d}.trace"
        self._ran_fh = open(path, "w", encoding="utf-8", newline="\n")
        self._ran_in_file = 0
        self.files.append(str(path))

    def _write_ran(self, rec: MeasurementRecord):
        if self._ran_fh is None or self._ran_in_file >= self.max_file_records:
            self._rotate_ran()
        self._ran_fh.write(encode_record(rec) + "\n")
        self._ran_in_file += 1
        self.ran_written += 1

    def _write_e2e(self, rec: EndToEndRecord):
        if self._e2e_fh is None:
            path = self.out_dir / f"{self.run_id}.e2e"
            self._e2e_fh = open(path, "w", encoding="utf-8", newline="\n")
            self.files.append(str(path))
        self._e2e_fh.write(encode_e2e(rec) + "\n")
        self.e2e_written += 1

    def run(self):
        try:
            while True:
                item = self.queue.get()
                if item is self._STOP:
                    break
                kind, rec = item
                if kind == "ran":
                    self._write_ran(rec)
                else:
                    self._write_e2e(rec)
        except BaseException as exc:  # noqa: BLE001 - surfaced to the main loop as fatal
            self.error = exc
        finally:
            if self._ran_fh is not None:
                self._ran_fh.close()
            if self._e2e_fh is not None:
                self._e2e_fh.close()

    def submit(self, kind: str, rec) -> None:
        self.queue.put((kind, rec))

    def close(self) -> None:
        self.queue.put(self._STOP)
        self.join()


class _E2eWorker(threading.Thread):
    """Runs end-to-end tests off the sampling loop; results go to the writer."""

    _STOP = object()

    def __init__(self, engine: E2eEngine, writer: _TraceWriter):
        super().__init__(name="skylog-e2e", daemon=True)
        self.engine = engine
        self.writer = writer
        self.queue: queue.Queue = queue.Queue()
        self.completed = 0

    def submit(self, pos: GeoPosition, ts_unix_ms: int, salt: int) -> None:
        self.queue.put((pos, ts_unix_ms, salt))

    def run(self):
        while True:
            item = self.queue.get()
            if item is self._STOP:
                return
            pos, ts, salt = item
            try:
                rtt, dl, ul, duration = self.engine.measure(pos, salt)
                rec = EndToEndRecord(ts_unix_ms=ts, pos=pos, rtt=rtt,
                                     dl_mbps=dl, ul_mbps=ul, duration_s=duration)
                result = validate_e2e(rec)
                if not result:
                    log.warning("dropping invalid e2e record: %s", result.message)
                    continue
                self.writer.submit("e2e", rec)
                self.completed += 1
            except Exception:
                log.exception("end-to-end test failed")

    def close(self) -> None:
        self.queue.put(self._STOP)
        self.join()


def run_collection(cfg: CollectorConfig, clock: Clock, modem: ModemBackend,
                   position_source: PositionSource,
                   e2e_engine: Optional[E2eEngine] = None,
                   stop_event: Optional[threading.Event] = None) -> RunSummary:
    """Run the sampling loop until duration elapses, the backend is exhausted,
    or the stop event fires; returns the run summary after a full flush."""
    out_dir = Path(cfg.output_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        probe = out_dir / ".writable"
        probe.touch()
        probe.unlink()
    except OSError as exc:
        raise RuntimeError(f"output directory not writable: {exc}") from exc

    t0 = clock.now_ms()
    run_id = cfg.run_id or f"run{t0}"
    if hasattr(position_source, "bind"):
        position_source.bind(clock, t0)

    writer = _TraceWriter(out_dir, run_id, cfg.max_file_records)
    writer.start()
    e2e_ms = int(cfg.e2e_interval_s * 1000)
    worker = None
    if e2e_engine is not None and e2e_ms > 0:
        worker = _E2eWorker(e2e_engine, writer)
        worker.start()

    end_ms = None if cfg.duration_s is None else t0 + int(cfg.duration_s * 1000)
    source = getattr(modem, "descriptor", "hw")
    interval = cfg.sample_interval_ms
    n_ran = 0
    n_e2e = 0
    polls_failed = 0

    while True:
        if writer.error is not None:
            break
        if stop_event is not None and stop_event.is_set():
            break
        next_ran = t0 + n_ran * interval
        deadlines = [next_ran]
        next_e2e = None
        if worker is not None:
            next_e2e = t0 + n_e2e * e2e_ms
            deadlines.append(next_e2e)
        wake = min(deadlines)
        if end_ms is not None and wake >= end_ms:
            break
        clock.sleep_until_ms(wake)
        if stop_event is not None and stop_event.is_set():
            break

        if wake == next_ran:
            pos = position_source.position()
            try:
                report = modem.poll()
            except ReplayExhausted:
                break
            except (ModemError, RangeError, ReportSyntaxError) as exc:
                polls_failed += 1
                log.warning("poll %d failed: %s", n_ran, exc)
            else:
                try:
                    rec = assemble_record(report, pos, next_ran, source=source)
                except ValueError as exc:
                    polls_failed += 1
                    log.warning("poll %d dropped: %s", n_ran, exc)
                else:
                    writer.submit("ran", rec)
            n_ran += 1

        if worker is not None and wake == next_e2e:
            worker.submit(position_source.position(), next_e2e, n_e2e)
            n_e2e += 1

    if worker is not None:
        worker.close()
    writer.close()
    if writer.error is not None:
        raise RuntimeError(f"trace writer failed: {writer.error}")

    return RunSummary(
        records_written=writer.ran_written,
        polls_failed=polls_failed,
        e2e_tests_run=worker.completed if worker is not None else 0,
        start_ms=t0,
        end_ms=clock.now_ms(),
        files=list(writer.files),
    )


__all__ = [
    "Clock", "SimClock", "SystemClock", "SIM_EPOCH_MS",
    "PositionSource", "FixedPositionSource", "PlanPositionSource", "TracePositionSource",
    "E2eEngine", "CollectorConfig", "RunSummary",
    "assemble_record", "run_collection",
]
