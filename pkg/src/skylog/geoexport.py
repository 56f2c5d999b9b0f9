"""GeoJSON and CSV views of traces and voxel aggregates.

GeoJSON coordinates follow the standard's (lon, lat, alt) order with
altitude above mean sea level; altitude is duplicated into the properties
table for consumers that drop the third coordinate.  CSV float cells use
repr-style formatting, so re-parsing them reproduces the stored values
bit-for-bit.
"""

from __future__ import annotations

import csv
import io
from typing import Optional, Sequence, Union

from .analysis import EmptyInput, UnknownMetric, VoxelGrid
from .records import MAX_NEIGHBORS, MeasurementRecord

# metric name -> property/column key, in trace-schema order
_METRIC_KEYS = {
    "rsrp": "rsrp_dbm",
    "rsrq": "rsrq_db",
    "rssi": "rssi_dbm",
    "sinr": "sinr_db",
}

_SERVING_FIELDS = ("earfcn", "pci", "cell_id", "tac",
                   "rsrp_dbm", "rsrq_db", "rssi_dbm", "sinr_db")
_NEIGHBOR_FIELDS = ("earfcn", "pci", "rsrp_dbm", "rsrq_db", "rssi_dbm")

RECORD_CSV_HEADER = (
    ["ts_unix_ms", "lat_deg", "lon_deg", "alt_m_amsl", "alt_m_agl"]
    + list(_SERVING_FIELDS)
    + [f"nbr{i}_{f}" for i in range(1, MAX_NEIGHBORS + 1) for f in _NEIGHBOR_FIELDS]
    + ["source"]
)


def _metric_keys(metric: Optional[str]) -> list[str]:
    if metric is None:
        return list(_METRIC_KEYS.values())
    if metric not in _METRIC_KEYS:
        raise UnknownMetric(metric, _METRIC_KEYS)
    return [_METRIC_KEYS[metric]]


def export_geojson(source: Union[Sequence[MeasurementRecord], VoxelGrid],
                   metric: Optional[str] = None) -> dict:
    """Render records (one point each) or a voxel grid (one point per voxel
    centroid) as a GeoJSON FeatureCollection document."""
    if isinstance(source, VoxelGrid):
        return _grid_geojson(source, metric)
    return _records_geojson(list(source), metric)


def _records_geojson(records: list[MeasurementRecord],
                     metric: Optional[str]) -> dict:
    keys = _metric_keys(metric)
    if not records:
        raise EmptyInput("no records to export")
    features = []
    for r in records:
        props: dict = {"ts_unix_ms": r.ts_unix_ms, "source": r.source,
                       "cell_id": r.serving.cell_id, "pci": r.serving.pci,
                       "alt_m_amsl": r.pos.alt_m_amsl}
        if r.pos.alt_m_agl is not None:
            props["alt_m_agl"] = r.pos.alt_m_agl
        for key in keys:
            props[key] = getattr(r.serving, key)
        features.append({
            "type": "Feature",
            "geometry": {"type": "Point",
                         "coordinates": [r.pos.lon_deg, r.pos.lat_deg,
                                         r.pos.alt_m_amsl]},
            "properties": props,
        })
    return {"type": "FeatureCollection", "features": features}


def _grid_geojson(grid: VoxelGrid, metric: Optional[str]) -> dict:
    keys = _metric_keys(metric)
    if not grid.cells:
        raise EmptyInput("voxel grid is empty")
    by_key = {v: k for k, v in _METRIC_KEYS.items()}
    features = []
    for index in sorted(grid.cells):
        lat, lon, alt = grid.center_of(index)
        stats = grid.cells[index]
        props: dict = {"ix": index[0], "iy": index[1], "iz": index[2],
                       "alt_m_amsl": alt,
                       "count": stats[by_key[keys[0]]].count}
        for key in keys:
            s = stats[by_key[key]]
            props[f"{key}_mean"] = s.mean
            props[f"{key}_std"] = s.std
            props[f"{key}_min"] = s.min
            props[f"{key}_max"] = s.max
        features.append({
            "type": "Feature",
            "geometry": {"type": "Point", "coordinates": [lon, lat, alt]},
            "properties": props,
        })
    return {"type": "FeatureCollection", "features": features}


def _cell(value) -> str:
    return "" if value is None else repr(value) if isinstance(value, float) else str(value)


def export_csv(source: Union[Sequence[MeasurementRecord], VoxelGrid]) -> str:
    """Flat CSV rendering; one row per record or per voxel."""
    if isinstance(source, VoxelGrid):
        return _grid_csv(source)
    return _records_csv(list(source))


def _records_csv(records: list[MeasurementRecord]) -> str:
    if not records:
        raise EmptyInput("no records to export")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(RECORD_CSV_HEADER)
    for r in records:
        row = [_cell(r.ts_unix_ms), _cell(r.pos.lat_deg), _cell(r.pos.lon_deg),
               _cell(r.pos.alt_m_amsl), _cell(r.pos.alt_m_agl)]
        row += [_cell(getattr(r.serving, f)) for f in _SERVING_FIELDS]
        for i in range(MAX_NEIGHBORS):
            if i < len(r.neighbors):
                row += [_cell(getattr(r.neighbors[i], f)) for f in _NEIGHBOR_FIELDS]
            else:
                row += [""] * len(_NEIGHBOR_FIELDS)
        row.append(r.source)
        writer.writerow(row)
    return buf.getvalue()


def _grid_csv(grid: VoxelGrid) -> str:
    if not grid.cells:
        raise EmptyInput("voxel grid is empty")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    header = ["ix", "iy", "iz", "lat_deg", "lon_deg", "alt_m_amsl", "count"]
    for key in _METRIC_KEYS.values():
        header += [f"{key}_mean", f"{key}_std", f"{key}_min", f"{key}_max"]
    writer.writerow(header)
    for index in sorted(grid.cells):
        lat, lon, alt = grid.center_of(index)
        stats = grid.cells[index]
        row = [_cell(index[0]), _cell(index[1]), _cell(index[2]),
               _cell(lat), _cell(lon), _cell(alt),
               _cell(stats["rsrp"].count)]
        for name in _METRIC_KEYS:
            s = stats[name]
            row += [_cell(s.mean), _cell(s.std), _cell(s.min), _cell(s.max)]
        writer.writerow(row)
    return buf.getvalue()
