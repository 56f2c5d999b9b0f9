"""Modem backend contract and the line-oriented modem report grammar.

The grammar is a vendor-neutral stand-in for a proprietary modem query
protocol.  "+SRV"/"+NBR" prefixes echo AT-style unsolicited result codes so
a hardware backend can be a thin translation layer:

    response   = serving-line *8(neighbor-line) ok-line / error-line
    serving-line  = "+SRV: " earfcn "," pci "," cellid "," tac "," db1 "," db1 "," db1 "," db1 CRLF
    neighbor-line = "+NBR: " earfcn "," pci "," db1 "," db1 "," db1 CRLF
    ok-line    = "OK" CRLF
    error-line = "ERROR: " 1*3DIGIT CRLF
    db1        = ["-"] 1*3DIGIT "." DIGIT

ASCII only, CRLF line endings, byte-exact.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Protocol, Union, runtime_checkable

from .records import (
    NeighborCellSample,
    ServingCellSample,
    read_trace,
    validate_neighbor,
    validate_serving,
)


class ReportSyntaxError(ValueError):
    """Input violates the report grammar; 1-based line/column plus the expected token."""

    def __init__(self, line: int, column: int, expected: str):
        self.line = line
        self.column = column
        self.expected = expected
        super().__init__(f"line {line}, column {column}: expected {expected}")


class RangeError(ValueError):
    """Grammar-valid report with a field value outside its permitted range."""

    def __init__(self, field: str, value):
        self.field = field
        self.value = value
        super().__init__(f"{field} out of range: {value!r}")


class ModemError(Exception):
    """The modem answered with an ERROR line carrying this code."""

    def __init__(self, code: int):
        self.code = code
        super().__init__(f"modem error {code}")


class ReplayExhausted(Exception):
    """Replay backend has yielded every record in its file."""


@dataclass(frozen=True)
class ModemReport:
    """One poll result: serving cell plus neighbor list, not yet geo-tagged."""

    serving: ServingCellSample
    neighbors: tuple[NeighborCellSample, ...] = ()


@runtime_checkable
class ModemBackend(Protocol):
    """Polled by exactly one collector task at a time; poll order is the report order."""

    descriptor: str

    def poll(self) -> ModemReport: ...


def _validate_report(report: ModemReport) -> None:
    result = validate_serving(report.serving)
    if not result:
        raise RangeError(result.field, result.value)
    for i, nbr in enumerate(report.neighbors):
        result = validate_neighbor(nbr, prefix=f"neighbors[{i}].")
        if not result:
            raise RangeError(result.field, result.value)
        if (nbr.earfcn, nbr.pci) == (report.serving.earfcn, report.serving.pci):
            raise RangeError(f"neighbors[{i}]", (nbr.earfcn, nbr.pci))


class _Scanner:
    """Character cursor with 1-based line/column tracking."""

    def __init__(self, text: str):
        self.text = text
        self.pos = 0
        self.line = 1
        self.column = 1

    def fail(self, expected: str):
        raise ReportSyntaxError(self.line, self.column, expected)

    def at_end(self) -> bool:
        return self.pos >= len(self.text)

    def peek(self) -> Optional[str]:
        return self.text[self.pos] if self.pos < len(self.text) else None

    def looking_at(self, literal: str) -> bool:
        return self.text.startswith(literal, self.pos)

    def expect(self, literal: str, expected: Optional[str] = None) -> None:
        for ch in literal:
            if self.peek() != ch:
                self.fail(expected or f"'{literal}'")
            self.pos += 1
            self.column += 1

    def expect_crlf(self) -> None:
        if not self.looking_at("\r\n"):
            self.fail("CRLF")
        self.pos += 2
        self.line += 1
        self.column = 1

    def take_digits(self, max_digits: Optional[int] = None) -> str:
        start = self.pos
        while not self.at_end() and self.text[self.pos].isascii() and self.text[self.pos].isdigit():
            if max_digits is not None and self.pos - start == max_digits:
                break
            self.pos += 1
            self.column += 1
        if self.pos == start:
            self.fail("digit")
        return self.text[start:self.pos]

    def take_uint(self) -> int:
        # Sign characters are refused here: unsigned fields carry bare digits.
        return int(self.take_digits())

    def take_db1(self) -> float:
        start = self.pos
        if self.peek() == "-":
            self.pos += 1
            self.column += 1
        self.take_digits(max_digits=3)
        self.expect(".", expected="'.'")
        frac = self.peek()
        if frac is None or not (frac.isascii() and frac.isdigit()):
            self.fail("digit")
        self.pos += 1
        self.column += 1
        return float(self.text[start:self.pos])


def _to_text(raw: Union[bytes, bytearray, str]) -> str:
    if isinstance(raw, str):
        data = raw.encode("utf-8", errors="surrogatepass")
    else:
        data = bytes(raw)
    line, column = 1, 1
    for b in data:
        if b > 0x7F:
            raise ReportSyntaxError(line, column, "ASCII character")
        if b == 0x0A:
            line += 1
            column = 1
        else:
            column += 1
    return data.decode("ascii")


def _parse_serving(sc: _Scanner) -> ServingCellSample:
    sc.expect("+SRV: ")
    earfcn = sc.take_uint()
    sc.expect(",", "','")
    pci = sc.take_uint()
    sc.expect(",", "','")
    cell_id = sc.take_uint()
    sc.expect(",", "','")
    tac = sc.take_uint()
    sc.expect(",", "','")
    rsrp = sc.take_db1()
    sc.expect(",", "','")
    rsrq = sc.take_db1()
    sc.expect(",", "','")
    rssi = sc.take_db1()
    sc.expect(",", "','")
    sinr = sc.take_db1()
    sc.expect_crlf()
    return ServingCellSample(earfcn=earfcn, pci=pci, cell_id=cell_id, tac=tac,
                             rsrp_dbm=rsrp, rsrq_db=rsrq, rssi_dbm=rssi, sinr_db=sinr)


def _parse_neighbor(sc: _Scanner) -> NeighborCellSample:
    sc.expect("+NBR: ")
    earfcn = sc.take_uint()
    sc.expect(",", "','")
    pci = sc.take_uint()
    sc.expect(",", "','")
    rsrp = sc.take_db1()
    sc.expect(",", "','")
    rsrq = sc.take_db1()
    sc.expect(",", "','")
    rssi = sc.take_db1()
    sc.expect_crlf()
    return NeighborCellSample(earfcn=earfcn, pci=pci,
                              rsrp_dbm=rsrp, rsrq_db=rsrq, rssi_dbm=rssi)


def parse_report(raw: Union[bytes, bytearray, str]) -> ModemReport:
    """Parse one complete modem response.

    Raises ReportSyntaxError on grammar violations, RangeError when a field
    is outside its permitted range, ModemError when the response is an
    ERROR line.
    """
    sc = _Scanner(_to_text(raw))
    if sc.looking_at("ERROR"):
        sc.expect("ERROR: ")
        code = int(sc.take_digits(max_digits=3))
        sc.expect_crlf()
        if not sc.at_end():
            sc.fail("end of response")
        raise ModemError(code)
    if not sc.looking_at("+SRV"):
        sc.fail("'+SRV: ' or 'ERROR: '")
    serving = _parse_serving(sc)
    neighbors = []
    while sc.looking_at("+NBR"):
        if len(neighbors) == 8:
            sc.fail("'OK' (at most 8 neighbor lines)")
        neighbors.append(_parse_neighbor(sc))
    sc.expect("OK", "'OK' or '+NBR: '")
    sc.expect_crlf()
    if not sc.at_end():
        sc.fail("end of response")
    report = ModemReport(serving=serving, neighbors=tuple(neighbors))
    _validate_report(report)
    return report


def render_report(report: ModemReport) -> bytes:
    """Render a report in the wire grammar; inverse of parse_report."""
    _validate_report(report)
    s = report.serving
    lines = [
        f"+SRV: {s.earfcn},{s.pci},{s.cell_id},{s.tac},"
        f"{s.rsrp_dbm:.1f},{s.rsrq_db:.1f},{s.rssi_dbm:.1f},{s.sinr_db:.1f}"
    ]
    for n in report.neighbors:
        lines.append(f"+NBR: {n.earfcn},{n.pci},{n.rsrp_dbm:.1f},{n.rsrq_db:.1f},{n.rssi_dbm:.1f}")
    lines.append("OK")
    return ("\r\n".join(lines) + "\r\n").encode("ascii")


class ReplayBackend:
    """Feeds a previously recorded trace back as successive poll results."""

    descriptor = "replay"

    def __init__(self, trace_path):
        # Ingest errors (bad grammar, out-of-range fields) surface here, not on poll.
        records = read_trace(trace_path)
        self._reports = [ModemReport(rec.serving, rec.neighbors) for rec in records]
        self._cursor = 0

    def __len__(self) -> int:
        return len(self._reports)

    def poll(self) -> ModemReport:
        if self._cursor >= len(self._reports):
            raise ReplayExhausted(f"trace exhausted after {len(self._reports)} reports")
        report = self._reports[self._cursor]
        self._cursor += 1
        return report


__all__ = [
    "ModemReport", "ModemBackend", "ReplayBackend",
    "parse_report", "render_report",
    "ReportSyntaxError", "RangeError", "ModemError", "ReplayExhausted",
]
