"""Canonical measurement record types and the line-oriented trace format.

Every other module exchanges data through the types defined here.  Trace
files are UTF-8, one JSON object per LF-terminated line.  dB/dBm fields are
stored with one decimal digit of precision, matching commodity modem
reporting granularity.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional

SOURCES = ("sim", "replay", "hw")

MAX_NEIGHBORS = 8
CELL_ID_MAX = 2**28 - 1
PCI_MAX = 503
TAC_MAX = 65535
AGL_CEILING_M = 200.0

# 3GPP-style reporting envelopes; values outside are refused at ingest.
DB_FIELD_RANGES = {
    "rsrp_dbm": (-140.0, -44.0),
    "rsrq_db": (-24.0, -3.0),
    "rssi_dbm": (-120.0, -10.0),
    "sinr_db": (-20.0, 40.0),
}

SERVING_METRICS = ("rsrp_dbm", "rsrq_db", "rssi_dbm", "sinr_db")
NEIGHBOR_METRICS = ("rsrp_dbm", "rsrq_db", "rssi_dbm")


class TraceDecodeError(ValueError):
    """Malformed trace line; carries 1-based line/column when known."""

    def __init__(self, message: str, line: Optional[int] = None, column: Optional[int] = None):
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f"line {line}" + (f", column {column}" if column is not None else "") + ": "
        super().__init__(where + message)


@dataclass(frozen=True)
class GeoPosition:
    """WGS84 position; altitude above mean sea level, optionally above ground."""

    lat_deg: float
    lon_deg: float
    alt_m_amsl: float
    alt_m_agl: Optional[float] = None


@dataclass(frozen=True)
class ServingCellSample:
    earfcn: int
    pci: int
    cell_id: int
    tac: int
    rsrp_dbm: float
    rsrq_db: float
    rssi_dbm: float
    sinr_db: float


@dataclass(frozen=True)
class NeighborCellSample:
    earfcn: int
    pci: int
    rsrp_dbm: float
    rsrq_db: float
    rssi_dbm: float


@dataclass(frozen=True)
class MeasurementRecord:
    """One geo-tagged RAN sample: serving cell plus neighbor list."""

    ts_unix_ms: int
    pos: GeoPosition
    serving: ServingCellSample
    neighbors: tuple[NeighborCellSample, ...] = ()
    source: str = "sim"


@dataclass(frozen=True)
class RttSummary:
    """Round-trip statistics over one probe burst; stats absent when nothing came back."""

    sent: int
    received: int
    min_ms: Optional[float] = None
    mean_ms: Optional[float] = None
    p50_ms: Optional[float] = None
    max_ms: Optional[float] = None
    loss_fraction: float = 0.0


@dataclass(frozen=True)
class EndToEndRecord:
    """One geo-tagged service sample: RTT summary plus bidirectional goodput."""

    ts_unix_ms: int
    pos: GeoPosition
    rtt: RttSummary
    dl_mbps: float
    ul_mbps: float
    duration_s: float


@dataclass(frozen=True)
class ValidationResult:
    """Outcome of validate_record: OK, or the first violated invariant."""

    field: Optional[str] = None
    value: object = None
    message: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.message is None

    def __bool__(self) -> bool:
        return self.ok


_OK = ValidationResult()


def _violation(field_name: str, value: object, message: str) -> ValidationResult:
    return ValidationResult(field=field_name, value=value, message=message)


def _check_finite(field_name: str, value: float) -> Optional[ValidationResult]:
    if not math.isfinite(value):
        return _violation(field_name, value, f"{field_name} is not finite")
    return None


def _check_db_ranges(sample, metrics, prefix: str = "") -> Optional[ValidationResult]:
    for name in metrics:
        value = getattr(sample, name)
        bad = _check_finite(prefix + name, value)
        if bad is not None:
            return bad
        lo, hi = DB_FIELD_RANGES[name]
        if not (lo <= value <= hi):
            return _violation(prefix + name, value, f"{prefix + name} out of [{lo:g},{hi:g}]")
    return None


def _check_cell_identity(sample, prefix: str = "") -> Optional[ValidationResult]:
    if sample.earfcn < 0:
        return _violation(prefix + "earfcn", sample.earfcn, f"{prefix}earfcn negative")
    if not (0 <= sample.pci <= PCI_MAX):
        return _violation(prefix + "pci", sample.pci, f"{prefix}pci out of [0,{PCI_MAX}]")
    return None


def validate_position(pos: GeoPosition) -> ValidationResult:
    for name, bound in (("lat_deg", 90.0), ("lon_deg", 180.0)):
        value = getattr(pos, name)
        bad = _check_finite(name, value)
        if bad is not None:
            return bad
        if not (-bound <= value <= bound):
            return _violation(name, value, f"{name} out of [{-bound:g},{bound:g}]")
    bad = _check_finite("alt_m_amsl", pos.alt_m_amsl)
    if bad is not None:
        return bad
    if pos.alt_m_agl is not None:
        bad = _check_finite("alt_m_agl", pos.alt_m_agl)
        if bad is not None:
            return bad
        if not (0.0 <= pos.alt_m_agl <= AGL_CEILING_M):
            return _violation("alt_m_agl", pos.alt_m_agl, f"alt_m_agl out of [0,{AGL_CEILING_M:g}]")
    return _OK


def validate_serving(sample: ServingCellSample, prefix: str = "") -> ValidationResult:
    bad = _check_cell_identity(sample, prefix)
    if bad is not None:
        return bad
    if not (0 <= sample.cell_id <= CELL_ID_MAX):
        return _violation(prefix + "cell_id", sample.cell_id, f"{prefix}cell_id out of [0,{CELL_ID_MAX}]")
    if not (0 <= sample.tac <= TAC_MAX):
        return _violation(prefix + "tac", sample.tac, f"{prefix}tac out of [0,{TAC_MAX}]")
    bad = _check_db_ranges(sample, SERVING_METRICS, prefix)
    if bad is not None:
        return bad
    # Total wideband power includes the reference-signal component.
    if sample.rssi_dbm < sample.rsrp_dbm:
        return _violation(prefix + "rssi_dbm", sample.rssi_dbm, f"{prefix}rssi_dbm below rsrp_dbm")
    return _OK


def validate_neighbor(sample: NeighborCellSample, prefix: str = "") -> ValidationResult:
    bad = _check_cell_identity(sample, prefix)
    if bad is not None:
        return bad
    bad = _check_db_ranges(sample, NEIGHBOR_METRICS, prefix)
    if bad is not None:
        return bad
    return _OK


def validate_record(rec: MeasurementRecord) -> ValidationResult:
    """Return OK or the first violated invariant with field name and value."""
    if rec.source not in SOURCES:
        return _violation("source", rec.source, f"source not one of {SOURCES}")
    result = validate_position(rec.pos)
    if not result:
        return result
    result = validate_serving(rec.serving)
    if not result:
        return result
    if len(rec.neighbors) > MAX_NEIGHBORS:
        return _violation("neighbors", len(rec.neighbors), f"more than {MAX_NEIGHBORS} neighbors")
    for i, nbr in enumerate(rec.neighbors):
        result = validate_neighbor(nbr, prefix=f"neighbors[{i}].")
        if not result:
            return result
        if (nbr.earfcn, nbr.pci) == (rec.serving.earfcn, rec.serving.pci):
            return _violation(f"neighbors[{i}]", (nbr.earfcn, nbr.pci), "neighbor duplicates serving cell")
    return _OK


def validate_e2e(rec: EndToEndRecord) -> ValidationResult:
    result = validate_position(rec.pos)
    if not result:
        return result
    rtt = rec.rtt
    if rtt.sent < 1:
        return _violation("rtt.sent", rtt.sent, "rtt.sent must be >= 1")
    if rtt.received < 0 or rtt.received > rtt.sent:
        return _violation("rtt.received", rtt.received, "rtt.received outside [0, sent]")
    stats = (rtt.min_ms, rtt.mean_ms, rtt.p50_ms, rtt.max_ms)
    if rtt.received == 0:
        if any(s is not None for s in stats):
            return _violation("rtt", stats, "rtt statistics present with zero replies")
    else:
        if any(s is None for s in stats):
            return _violation("rtt", stats, "rtt statistics missing with replies present")
        if not (rtt.min_ms <= rtt.p50_ms <= rtt.max_ms):
            return _violation("rtt.p50_ms", rtt.p50_ms, "rtt p50 outside [min, max]")
        if not (rtt.min_ms <= rtt.mean_ms <= rtt.max_ms):
            return _violation("rtt.mean_ms", rtt.mean_ms, "rtt mean outside [min, max]")
    expected_loss = (rtt.sent - rtt.received) / rtt.sent
    if abs(rtt.loss_fraction - expected_loss) > 1e-9:
        return _violation("rtt.loss_fraction", rtt.loss_fraction, "loss_fraction inconsistent with sent/received")
    if rec.dl_mbps < 0 or rec.ul_mbps < 0:
        return _violation("dl_mbps" if rec.dl_mbps < 0 else "ul_mbps",
                          min(rec.dl_mbps, rec.ul_mbps), "throughput negative")
    if rec.duration_s <= 0:
        return _violation("duration_s", rec.duration_s, "duration_s must be > 0")
    return _OK


def quantize_db(value: float) -> float:
    """Round a dB/dBm value to the stored one-decimal precision."""
    return round(value, 1)


# ---------------------------------------------------------------------------
# Trace line encoding (one JSON object per line)
# ---------------------------------------------------------------------------

def _serving_to_dict(s: ServingCellSample) -> dict:
    return {
        "earfcn": s.earfcn,
        "pci": s.pci,
        "cell_id": s.cell_id,
        "tac": s.tac,
        "rsrp_dbm": quantize_db(s.rsrp_dbm),
        "rsrq_db": quantize_db(s.rsrq_db),
        "rssi_dbm": quantize_db(s.rssi_dbm),
        "sinr_db": quantize_db(s.sinr_db),
    }


def _neighbor_to_dict(n: NeighborCellSample) -> dict:
    return {
        "earfcn": n.earfcn,
        "pci": n.pci,
        "rsrp_dbm": quantize_db(n.rsrp_dbm),
        "rsrq_db": quantize_db(n.rsrq_db),
        "rssi_dbm": quantize_db(n.rssi_dbm),
    }


def encode_record(rec: MeasurementRecord) -> str:
    """Encode one record as a single trace line (no trailing newline)."""
    doc = {
        "ts_unix_ms": rec.ts_unix_ms,
        "lat_deg": rec.pos.lat_deg,
        "lon_deg": rec.pos.lon_deg,
        "alt_m_amsl": rec.pos.alt_m_amsl,
        "alt_m_agl": rec.pos.alt_m_agl,
        "serving": _serving_to_dict(rec.serving),
        "neighbors": [_neighbor_to_dict(n) for n in rec.neighbors],
        "source": rec.source,
    }
    return json.dumps(doc, separators=(",", ":"))


def encode_e2e(rec: EndToEndRecord) -> str:
    rtt = rec.rtt
    doc = {
        "ts_unix_ms": rec.ts_unix_ms,
        "lat_deg": rec.pos.lat_deg,
        "lon_deg": rec.pos.lon_deg,
        "alt_m_amsl": rec.pos.alt_m_amsl,
        "rtt": {
            "sent": rtt.sent,
            "received": rtt.received,
            "min_ms": rtt.min_ms,
            "mean_ms": rtt.mean_ms,
            "p50_ms": rtt.p50_ms,
            "max_ms": rtt.max_ms,
            "loss_fraction": rtt.loss_fraction,
        },
        "dl_mbps": rec.dl_mbps,
        "ul_mbps": rec.ul_mbps,
        "duration_s": rec.duration_s,
    }
    return json.dumps(doc, separators=(",", ":"))


def _parse_json_line(text: str, line_no: Optional[int]) -> dict:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise TraceDecodeError(exc.msg, line=line_no, column=exc.colno) from exc
    if not isinstance(doc, dict):
        raise TraceDecodeError("trace line is not an object", line=line_no, column=1)
    return doc


def _require(doc: dict, key: str, kinds, line_no: Optional[int], where: str = ""):
    if key not in doc:
        raise TraceDecodeError(f"missing field '{where}{key}'", line=line_no)
    value = doc[key]
    if not isinstance(value, kinds) or isinstance(value, bool):
        raise TraceDecodeError(f"field '{where}{key}' has wrong type", line=line_no)
    return value


def _optional_number(doc: dict, key: str, line_no: Optional[int], where: str = "") -> Optional[float]:
    value = doc.get(key)
    if value is None:
        return None
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise TraceDecodeError(f"field '{where}{key}' has wrong type", line=line_no)
    return float(value)


_NUM = (int, float)


def _decode_serving(doc: dict, line_no: Optional[int]) -> ServingCellSample:
    return ServingCellSample(
        earfcn=int(_require(doc, "earfcn", int, line_no, "serving.")),
        pci=int(_require(doc, "pci", int, line_no, "serving.")),
        cell_id=int(_require(doc, "cell_id", int, line_no, "serving.")),
        tac=int(_require(doc, "tac", int, line_no, "serving.")),
        rsrp_dbm=float(_require(doc, "rsrp_dbm", _NUM, line_no, "serving.")),
        rsrq_db=float(_require(doc, "rsrq_db", _NUM, line_no, "serving.")),
        rssi_dbm=float(_require(doc, "rssi_dbm", _NUM, line_no, "serving.")),
        sinr_db=float(_require(doc, "sinr_db", _NUM, line_no, "serving.")),
    )


def _decode_neighbor(doc: dict, line_no: Optional[int], idx: int) -> NeighborCellSample:
    where = f"neighbors[{idx}]."
    return NeighborCellSample(
        earfcn=int(_require(doc, "earfcn", int, line_no, where)),
        pci=int(_require(doc, "pci", int, line_no, where)),
        rsrp_dbm=float(_require(doc, "rsrp_dbm", _NUM, line_no, where)),
        rsrq_db=float(_require(doc, "rsrq_db", _NUM, line_no, where)),
        rssi_dbm=float(_require(doc, "rssi_dbm", _NUM, line_no, where)),
    )


def decode_record(text: str, line_no: Optional[int] = None) -> MeasurementRecord:
    """Decode one trace line. Unknown fields are ignored (forward compatibility)."""
    doc = _parse_json_line(text, line_no)
    serving_doc = _require(doc, "serving", dict, line_no)
    neighbors_doc = _require(doc, "neighbors", list, line_no)
    source = _require(doc, "source", str, line_no)
    if source not in SOURCES:
        raise TraceDecodeError(f"unknown source '{source}'", line=line_no)
    pos = GeoPosition(
        lat_deg=float(_require(doc, "lat_deg", _NUM, line_no)),
        lon_deg=float(_require(doc, "lon_deg", _NUM, line_no)),
        alt_m_amsl=float(_require(doc, "alt_m_amsl", _NUM, line_no)),
        alt_m_agl=_optional_number(doc, "alt_m_agl", line_no),
    )
    neighbors = []
    for i, item in enumerate(neighbors_doc):
        if not isinstance(item, dict):
            raise TraceDecodeError(f"field 'neighbors[{i}]' has wrong type", line=line_no)
        neighbors.append(_decode_neighbor(item, line_no, i))
    return MeasurementRecord(
        ts_unix_ms=int(_require(doc, "ts_unix_ms", int, line_no)),
        pos=pos,
        serving=_decode_serving(serving_doc, line_no),
        neighbors=tuple(neighbors),
        source=source,
    )


def decode_e2e(text: str, line_no: Optional[int] = None) -> EndToEndRecord:
    doc = _parse_json_line(text, line_no)
    rtt_doc = _require(doc, "rtt", dict, line_no)
    rtt = RttSummary(
        sent=int(_require(rtt_doc, "sent", int, line_no, "rtt.")),
        received=int(_require(rtt_doc, "received", int, line_no, "rtt.")),
        min_ms=_optional_number(rtt_doc, "min_ms", line_no, "rtt."),
        mean_ms=_optional_number(rtt_doc, "mean_ms", line_no, "rtt."),
        p50_ms=_optional_number(rtt_doc, "p50_ms", line_no, "rtt."),
        max_ms=_optional_number(rtt_doc, "max_ms", line_no, "rtt."),
        loss_fraction=float(_require(rtt_doc, "loss_fraction", _NUM, line_no, "rtt.")),
    )
    pos = GeoPosition(
        lat_deg=float(_require(doc, "lat_deg", _NUM, line_no)),
        lon_deg=float(_require(doc, "lon_deg", _NUM, line_no)),
        alt_m_amsl=float(_require(doc, "alt_m_amsl", _NUM, line_no)),
    )
    return EndToEndRecord(
        ts_unix_ms=int(_require(doc, "ts_unix_ms", int, line_no)),
        pos=pos,
        rtt=rtt,
        dl_mbps=float(_require(doc, "dl_mbps", _NUM, line_no)),
        ul_mbps=float(_require(doc, "ul_mbps", _NUM, line_no)),
        duration_s=float(_require(doc, "duration_s", _NUM, line_no)),
    )


def read_trace(path) -> list[MeasurementRecord]:
    """Ingest a RAN trace file, enforcing validity and timestamp monotonicity."""
    records: list[MeasurementRecord] = []
    last_ts: Optional[int] = None
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            rec = decode_record(line, line_no=line_no)
            result = validate_record(rec)
            if not result:
                raise TraceDecodeError(result.message, line=line_no)
            if last_ts is not None and rec.ts_unix_ms <= last_ts:
                raise TraceDecodeError(
                    f"ts_unix_ms not strictly increasing ({rec.ts_unix_ms} after {last_ts})",
                    line=line_no,
                )
            last_ts = rec.ts_unix_ms
            records.append(rec)
    return records


def read_e2e_trace(path) -> list[EndToEndRecord]:
    records: list[EndToEndRecord] = []
    last_ts: Optional[int] = None
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            rec = decode_e2e(line, line_no=line_no)
            result = validate_e2e(rec)
            if not result:
                raise TraceDecodeError(result.message, line=line_no)
            if last_ts is not None and rec.ts_unix_ms <= last_ts:
                raise TraceDecodeError(
                    f"ts_unix_ms not strictly increasing ({rec.ts_unix_ms} after {last_ts})",
                    line=line_no,
                )
            last_ts = rec.ts_unix_ms
            records.append(rec)
    return records


__all__ = [
    "GeoPosition", "ServingCellSample", "NeighborCellSample", "MeasurementRecord",
    "RttSummary", "EndToEndRecord", "ValidationResult", "TraceDecodeError",
    "validate_record", "validate_e2e", "validate_position", "validate_serving",
    "validate_neighbor", "encode_record", "decode_record", "encode_e2e", "decode_e2e",
    "read_trace", "read_e2e_trace", "quantize_db",
    "DB_FIELD_RANGES", "SERVING_METRICS", "NEIGHBOR_METRICS", "SOURCES",
    "MAX_NEIGHBORS", "PCI_MAX", "CELL_ID_MAX", "TAC_MAX",
]
