"""Deterministic multi-cell radio environment and flight-path generator.

Propagation is log-distance path loss with two exponents (LoS/NLoS) plus
lognormal shadowing.  Every stochastic draw is a pure function of the
environment seed and a spatial voxel, so a fixed (environment, plan, seed)
triple always produces bit-identical traces, and hovering in place yields
stable readings instead of per-sample fading.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import dataclass
from typing import Optional

from .geo import tangent_forward
from .modem import ModemReport
from .records import (
    DB_FIELD_RANGES,
    GeoPosition,
    NeighborCellSample,
    RttSummary,
    ServingCellSample,
)

LIGHT_SPEED_M_S = 299792458.0

# 400 ft flight ceiling, as flown.
PLAN_AGL_CEILING_M = 122.0

VOXEL_M = 10.0          # shadowing / LoS coherence cell, ground and altitude
LOS_P_FLOOR = 0.15      # LoS probability on the ground
LOS_P_FULL_AT_M = 100.0  # altitude at which LoS becomes certain

DL_CAP_MBPS = 150.0     # modem rate caps, DL/UL
UL_CAP_MBPS = 50.0
SPECTRAL_EFF_CAP = 6.0  # bit/s/Hz ceiling of the rate mapping
BANDWIDTH_MHZ = 10.0
DL_UTILIZATION = 0.6
UL_UTILIZATION = 0.25


class ConfigError(ValueError):
    """Bad environment/plan file; carries the path and, when known, line/column."""

    def __init__(self, message: str, path=None, line: Optional[int] = None,
                 column: Optional[int] = None):
        self.path = path
        self.line = line
        self.column = column
        where = str(path) if path is not None else ""
        if line is not None:
            where += f":{line}"
            if column is not None:
                where += f":{column}"
        super().__init__(f"{where}: {message}" if where else message)


class DistanceTooSmall(ValueError):
    """UAV inside the 1 m near-field reference distance of a station."""


@dataclass(frozen=True)
class BaseStation:
    site_pos: GeoPosition  # antenna height above ground in alt_m_agl
    eirp_dbm: float
    earfcn: int
    pci: int
    cell_id: int
    tac: int


@dataclass(frozen=True)
class RadioEnvironment:
    stations: tuple[BaseStation, ...]
    n_los: float = 2.2
    n_nlos: float = 3.5
    shadow_sigma_db: float = 6.0
    n_prb: int = 50
    noise_dbm: float = -104.5
    freq_hz: float = 2.1e9
    seed: int = 0


@dataclass(frozen=True)
class Waypoint:
    pos: GeoPosition
    speed_mps: float  # speed on the leg leaving this waypoint
    hover_s: float = 0.0


@dataclass(frozen=True)
class FlightPlan:
    waypoints: tuple[Waypoint, ...]


def _check_station(st: BaseStation) -> None:
    if not (30.0 <= st.eirp_dbm <= 65.0):
        raise ConfigError(f"station pci={st.pci}: eirp_dbm {st.eirp_dbm} outside [30,65]")
    agl = st.site_pos.alt_m_agl
    if agl is None or agl <= 0:
        raise ConfigError(f"station pci={st.pci}: antenna height must be > 0 m AGL")


def _check_environment(env: RadioEnvironment) -> None:
    if not env.stations:
        raise ConfigError("environment needs at least one station")
    for st in env.stations:
        _check_station(st)


def _check_plan(plan: FlightPlan) -> None:
    if not plan.waypoints:
        raise ConfigError("flight plan needs at least one waypoint")
    for i, wp in enumerate(plan.waypoints):
        if wp.speed_mps <= 0:
            raise ConfigError(f"waypoint {i}: speed_mps must be > 0")
        if wp.hover_s < 0:
            raise ConfigError(f"waypoint {i}: hover_s must be >= 0")
        agl = wp.pos.alt_m_agl
        if agl is None:
            raise ConfigError(f"waypoint {i}: alt_m_agl required")
        if agl > PLAN_AGL_CEILING_M:
            raise ConfigError(f"waypoint {i}: alt_m_agl {agl} above {PLAN_AGL_CEILING_M} m ceiling")


# ---------------------------------------------------------------------------
# Seeded draws: hash -> uniform/normal, no shared RNG state
# ---------------------------------------------------------------------------

def _digest(domain: bytes, seed: int, *ints: int) -> bytes:
    h = hashlib.blake2b(digest_size=16, person=domain)
    h.update(struct.pack(">Q", seed & 0xFFFFFFFFFFFFFFFF))
    for v in ints:
        h.update(struct.pack(">q", v))
    return h.digest()


def _uniform(domain: bytes, seed: int, *ints: int) -> float:
    d = _digest(domain, seed, *ints)
    return int.from_bytes(d[:8], "big") / 2.0**64  # in [0, 1)


def _std_normal(domain: bytes, seed: int, *ints: int) -> float:
    d = _digest(domain, seed, *ints)
    u1 = (int.from_bytes(d[:8], "big") + 1) / 2.0**64   # (0, 1]
    u2 = int.from_bytes(d[8:16], "big") / 2.0**64
    return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)


def _voxel(env: RadioEnvironment, pos: GeoPosition) -> tuple[int, int, int]:
    anchor = env.stations[0].site_pos
    x, y = tangent_forward(anchor.lat_deg, anchor.lon_deg, pos.lat_deg, pos.lon_deg)
    agl = pos.alt_m_agl if pos.alt_m_agl is not None else 0.0
    return (math.floor(x / VOXEL_M), math.floor(y / VOXEL_M), math.floor(agl / VOXEL_M))


# ---------------------------------------------------------------------------
# Propagation
# ---------------------------------------------------------------------------

def fspl_1m_db(freq_hz: float) -> float:
    """Free-space path loss at the 1 m reference distance."""
    return 20.0 * math.log10(4.0 * math.pi * freq_hz / LIGHT_SPEED_M_S)


def station_distance_m(station: BaseStation, pos: GeoPosition) -> float:
    """3D separation; vertical from AGL so no terrain model is needed."""
    site = station.site_pos
    dx, dy = tangent_forward(site.lat_deg, site.lon_deg, pos.lat_deg, pos.lon_deg)
    uav_agl = pos.alt_m_agl if pos.alt_m_agl is not None else 0.0
    dz = uav_agl - (site.alt_m_agl or 0.0)
    return math.sqrt(dx * dx + dy * dy + dz * dz)


def los_state(env: RadioEnvironment, station: BaseStation, pos: GeoPosition) -> bool:
    """True for line-of-sight.  Deterministic per (seed, station, voxel).

    P(LoS) grows with UAV altitude: clamp(0.15 + 0.85*(agl/100), 0.15, 1.0).
    """
    agl = pos.alt_m_agl if pos.alt_m_agl is not None else 0.0
    p = min(max(LOS_P_FLOOR + (1.0 - LOS_P_FLOOR) * agl / LOS_P_FULL_AT_M, LOS_P_FLOOR), 1.0)
    vx, vy, vz = _voxel(env, pos)
    u = _uniform(b"skylog.los", env.seed, station.cell_id, vx, vy, vz)
    return u < p


def shadow_db(env: RadioEnvironment, station: BaseStation, pos: GeoPosition) -> float:
    """Lognormal shadowing term, frozen per (seed, station, voxel)."""
    vx, vy, vz = _voxel(env, pos)
    z = _std_normal(b"skylog.shadow", env.seed, station.cell_id, vx, vy, vz)
    return env.shadow_sigma_db * z


def path_loss_db(env: RadioEnvironment, station: BaseStation, pos: GeoPosition) -> float:
    d = station_distance_m(station, pos)
    if d < 1.0:
        raise DistanceTooSmall(f"distance {d:.3f} m below 1 m reference")
    n = env.n_los if los_state(env, station, pos) else env.n_nlos
    return fspl_1m_db(env.freq_hz) + 10.0 * n * math.log10(d) + shadow_db(env, station, pos)


# ---------------------------------------------------------------------------
# Radio sampling
# ---------------------------------------------------------------------------

def _linear_mw(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0)


def _dbm(linear_mw: float) -> float:
    return 10.0 * math.log10(linear_mw)


@dataclass(frozen=True)
class RawRadioSample:
    """Pre-clamp sample: full-precision metrics plus per-station powers."""

    serving: BaseStation
    rsrp_dbm: float
    rsrq_db: float
    rssi_dbm: float
    sinr_db: float
    # strongest-first, serving excluded: (station, received power dBm, rsrq dB)
    neighbor_powers: tuple[tuple[BaseStation, float, float], ...] = ()


def radio_sample_raw(env: RadioEnvironment, pos: GeoPosition) -> RawRadioSample:
    powers = [(st, st.eirp_dbm - path_loss_db(env, st, pos)) for st in env.stations]
    # Serving cell: strongest received power, ties to the lowest pci.
    serving, p_serv = min(powers, key=lambda sp: (-sp[1], sp[0].pci))
    noise_mw = _linear_mw(env.noise_dbm)
    total_mw = sum(_linear_mw(p) for _, p in powers) + noise_mw
    rssi = _dbm(total_mw)
    prb_gain = 10.0 * math.log10(env.n_prb)
    rsrq = prb_gain + p_serv - rssi
    interference_mw = total_mw - noise_mw - _linear_mw(p_serv)
    sinr = p_serv - _dbm(interference_mw + noise_mw)
    rest = sorted(((st, p) for st, p in powers if st is not serving),
                  key=lambda sp: (-sp[1], sp[0].pci))
    neighbor_powers = tuple((st, p, prb_gain + p - rssi) for st, p in rest)
    return RawRadioSample(serving=serving, rsrp_dbm=p_serv, rsrq_db=rsrq,
                          rssi_dbm=rssi, sinr_db=sinr, neighbor_powers=neighbor_powers)


def _clamp(name: str, value: float) -> float:
    lo, hi = DB_FIELD_RANGES[name]
    return min(max(value, lo), hi)


def radio_sample(env: RadioEnvironment, pos: GeoPosition) -> ModemReport:
    """Sample the environment at a position, clamped into reportable ranges."""
    raw = radio_sample_raw(env, pos)
    st = raw.serving
    serving = ServingCellSample(
        earfcn=st.earfcn, pci=st.pci, cell_id=st.cell_id, tac=st.tac,
        rsrp_dbm=_clamp("rsrp_dbm", raw.rsrp_dbm),
        rsrq_db=_clamp("rsrq_db", raw.rsrq_db),
        rssi_dbm=_clamp("rssi_dbm", raw.rssi_dbm),
        sinr_db=_clamp("sinr_db", raw.sinr_db),
    )
    neighbors = tuple(
        NeighborCellSample(
            earfcn=nst.earfcn, pci=nst.pci,
            rsrp_dbm=_clamp("rsrp_dbm", p),
            rsrq_db=_clamp("rsrq_db", q),
            rssi_dbm=serving.rssi_dbm,
        )
        for nst, p, q in raw.neighbor_powers[:8])
    return ModemReport(serving=serving, neighbors=neighbors)


# ---------------------------------------------------------------------------
# Flight path
# ---------------------------------------------------------------------------

def _lerp_pos(a: GeoPosition, b: GeoPosition, f: float) -> GeoPosition:
    def lerp(u, v):
        return u + (v - u) * f
    agl = None
    if a.alt_m_agl is not None and b.alt_m_agl is not None:
        agl = lerp(a.alt_m_agl, b.alt_m_agl)
    return GeoPosition(lat_deg=lerp(a.lat_deg, b.lat_deg),
                       lon_deg=lerp(a.lon_deg, b.lon_deg),
                       alt_m_amsl=lerp(a.alt_m_amsl, b.alt_m_amsl),
                       alt_m_agl=agl)


def _leg_length_m(a: GeoPosition, b: GeoPosition) -> float:
    dx, dy = tangent_forward(a.lat_deg, a.lon_deg, b.lat_deg, b.lon_deg)
    dz = b.alt_m_amsl - a.alt_m_amsl
    return math.sqrt(dx * dx + dy * dy + dz * dz)


def flight_position(plan: FlightPlan, t_s: float) -> GeoPosition:
    """Position at t seconds into the plan: hover at each waypoint, then fly
    the leg to the next at the departing waypoint's speed.  Past the end,
    the aircraft holds the final waypoint."""
    if t_s < 0:
        raise ValueError("t_s must be >= 0")
    t = float(t_s)
    wps = plan.waypoints
    for i, wp in enumerate(wps):
        if t < wp.hover_s:
            return wp.pos
        t -= wp.hover_s
        if i + 1 == len(wps):
            break
        leg_s = _leg_length_m(wp.pos, wps[i + 1].pos) / wp.speed_mps
        if t < leg_s:
            return _lerp_pos(wp.pos, wps[i + 1].pos, t / leg_s if leg_s > 0 else 1.0)
        t -= leg_s
    return wps[-1].pos


def plan_duration_s(plan: FlightPlan) -> float:
    total = sum(wp.hover_s for wp in plan.waypoints)
    for a, b in zip(plan.waypoints, plan.waypoints[1:]):
        total += _leg_length_m(a.pos, b.pos) / a.speed_mps
    return total


# ---------------------------------------------------------------------------
# End-to-end synthesis
# ---------------------------------------------------------------------------

def synth_e2e(env: RadioEnvironment, sinr_db: float, salt: int = 0) -> tuple[float, float, float]:
    """Map SINR to (dl_mbps, ul_mbps, rtt_ms) through a capped Shannon rate.

    Assumes a 10 MHz carrier at 60%/25% effective DL/UL utilization, capped
    at the modem's 150/50 Mbps rates.  RTT gets a seeded jitter in [0, 20) ms;
    salt distinguishes successive tests under one seed.
    """
    s = min(math.log2(1.0 + _linear_mw(sinr_db)), SPECTRAL_EFF_CAP)
    dl = min(DL_CAP_MBPS, BANDWIDTH_MHZ * s * DL_UTILIZATION)
    ul = min(UL_CAP_MBPS, BANDWIDTH_MHZ * s * UL_UTILIZATION)
    jitter = 20.0 * _uniform(b"skylog.e2ejit", env.seed, salt)
    rtt_ms = 40.0 + 2000.0 / max(dl, 0.5) + jitter
    return dl, ul, rtt_ms


# ---------------------------------------------------------------------------
# Config loading
# ---------------------------------------------------------------------------

def _load_doc(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(str(exc), path=path) from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(exc.msg, path=path, line=exc.lineno, column=exc.colno) from exc
    if not isinstance(doc, dict):
        raise ConfigError("top level must be an object", path=path, line=1)
    return doc


_REQUIRED = object()


def _cfg_get(doc: dict, key: str, kinds, path, where: str = "", default=_REQUIRED):
    if key not in doc:
        if default is not _REQUIRED:
            return default
        raise ConfigError(f"missing key '{where}{key}'", path=path)
    value = doc[key]
    if not isinstance(value, kinds) or isinstance(value, bool):
        raise ConfigError(f"key '{where}{key}' has wrong type", path=path)
    return value


def _pos_from_doc(doc: dict, path, where: str) -> GeoPosition:
    num = (int, float)
    agl = doc.get("alt_m_agl")
    if agl is not None and (not isinstance(agl, num) or isinstance(agl, bool)):
        raise ConfigError(f"key '{where}alt_m_agl' has wrong type", path=path)
    return GeoPosition(
        lat_deg=float(_cfg_get(doc, "lat_deg", num, path, where)),
        lon_deg=float(_cfg_get(doc, "lon_deg", num, path, where)),
        alt_m_amsl=float(_cfg_get(doc, "alt_m_amsl", num, path, where)),
        alt_m_agl=float(agl) if agl is not None else None,
    )


def environment_from_doc(doc: dict, path=None) -> RadioEnvironment:
    num = (int, float)
    stations_doc = _cfg_get(doc, "stations", list, path)
    stations = []
    for i, st_doc in enumerate(stations_doc):
        where = f"stations[{i}]."
        if not isinstance(st_doc, dict):
            raise ConfigError(f"key 'stations[{i}]' has wrong type", path=path)
        site_doc = _cfg_get(st_doc, "site_pos", dict, path, where)
        stations.append(BaseStation(
            site_pos=_pos_from_doc(site_doc, path, where + "site_pos."),
            eirp_dbm=float(_cfg_get(st_doc, "eirp_dbm", num, path, where)),
            earfcn=int(_cfg_get(st_doc, "earfcn", int, path, where)),
            pci=int(_cfg_get(st_doc, "pci", int, path, where)),
            cell_id=int(_cfg_get(st_doc, "cell_id", int, path, where)),
            tac=int(_cfg_get(st_doc, "tac", int, path, where)),
        ))
    env = RadioEnvironment(
        stations=tuple(stations),
        n_los=float(_cfg_get(doc, "n_los", num, path, default=2.2)),
        n_nlos=float(_cfg_get(doc, "n_nlos", num, path, default=3.5)),
        shadow_sigma_db=float(_cfg_get(doc, "shadow_sigma_db", num, path, default=6.0)),
        n_prb=int(_cfg_get(doc, "n_prb", int, path, default=50)),
        noise_dbm=float(_cfg_get(doc, "noise_dbm", num, path, default=-104.5)),
        freq_hz=float(_cfg_get(doc, "freq_hz", num, path, default=2.1e9)),
        seed=int(_cfg_get(doc, "seed", int, path, default=0)),
    )
    try:
        _check_environment(env)
    except ConfigError as exc:
        raise ConfigError(str(exc), path=path) from None
    return env


def plan_from_doc(doc: dict, path=None) -> FlightPlan:
    num = (int, float)
    wps_doc = _cfg_get(doc, "waypoints", list, path)
    waypoints = []
    for i, wp_doc in enumerate(wps_doc):
        where = f"waypoints[{i}]."
        if not isinstance(wp_doc, dict):
            raise ConfigError(f"key 'waypoints[{i}]' has wrong type", path=path)
        pos_doc = _cfg_get(wp_doc, "pos", dict, path, where)
        waypoints.append(Waypoint(
            pos=_pos_from_doc(pos_doc, path, where + "pos."),
            speed_mps=float(_cfg_get(wp_doc, "speed_mps", num, path, where)),
            hover_s=float(_cfg_get(wp_doc, "hover_s", num, path, where, default=0.0)),
        ))
    plan = FlightPlan(waypoints=tuple(waypoints))
    try:
        _check_plan(plan)
    except ConfigError as exc:
        raise ConfigError(str(exc), path=path) from None
    return plan


def load_environment(path) -> RadioEnvironment:
    return environment_from_doc(_load_doc(path), path=path)


def load_flight_plan(path) -> FlightPlan:
    return plan_from_doc(_load_doc(path), path=path)


# ---------------------------------------------------------------------------
# Simulated backend
# ---------------------------------------------------------------------------

class SimModemBackend:
    """Modem backend that samples the simulated environment at the position
    the supplied callable reports at poll time."""

    descriptor = "sim"

    def __init__(self, env: RadioEnvironment, position_of_now):
        _check_environment(env)
        self.env = env
        self._position_of_now = position_of_now

    def poll(self) -> ModemReport:
        return radio_sample(self.env, self._position_of_now())


class SimE2eEngine:
    """End-to-end engine that derives service quality from the local SINR
    instead of touching the network."""

    def __init__(self, env: RadioEnvironment, rtt_count: int = 20,
                 tp_duration_s: float = 5.0):
        _check_environment(env)
        self.env = env
        self.rtt_count = rtt_count
        self.tp_duration_s = tp_duration_s

    def measure(self, pos: GeoPosition, salt: int):
        report = radio_sample(self.env, pos)
        dl, ul, rtt_ms = synth_e2e(self.env, report.serving.sinr_db, salt=salt)
        rtt = RttSummary(sent=self.rtt_count, received=self.rtt_count,
                         min_ms=rtt_ms, mean_ms=rtt_ms, p50_ms=rtt_ms, max_ms=rtt_ms,
                         loss_fraction=0.0)
        return rtt, dl, ul, self.tp_duration_s


__all__ = [
    "BaseStation", "RadioEnvironment", "Waypoint", "FlightPlan",
    "ConfigError", "DistanceTooSmall", "RawRadioSample",
    "fspl_1m_db", "station_distance_m", "los_state", "shadow_db", "path_loss_db",
    "radio_sample_raw", "radio_sample", "flight_position", "plan_duration_s",
    "synth_e2e", "load_environment", "load_flight_plan",
    "environment_from_doc", "plan_from_doc", "SimModemBackend", "SimE2eEngine",
    "PLAN_AGL_CEILING_M", "VOXEL_M",
]
