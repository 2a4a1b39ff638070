"""CSV and GeoJSON ingestion and result export.

Numbers are written with 17 significant digits so a written file reads back
to exactly the same floats. All writes go through a temporary file that is
renamed into place.
"""

from __future__ import annotations

import contextlib
import csv
import enum
import io
import json
import os
import tempfile
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from marketflow.access import AccessibilityResult
from marketflow.calibrate import FitResult, ObservedData, ObservedKind
from marketflow.errors import DimensionError, ParseError, ValidationError
from marketflow.geo import GeoPoint
from marketflow.huff import MarketAreas
from marketflow.mci import MCIFit
from marketflow.model import CustomerOrigin, InteractionMatrix, SupplyLocation


class Role(str, enum.Enum):
    ORIGIN = "origin"
    LOCATION = "location"


class Format(str, enum.Enum):
    CSV = "csv"
    GEOJSON = "geojson"
    JSON = "json"
    TEXT = "text"


@dataclass(frozen=True)
class ColumnSpec:
    id_column: str = "id"
    lat_column: str = "lat"
    lon_column: str = "lon"
    demand_column: str | None = None
    attraction_column: str | None = None
    attribute_columns: tuple[str, ...] = ()

    def required_properties(self, role: Role) -> list[str]:
        cols = []
        if role is Role.ORIGIN and self.demand_column:
            cols.append(self.demand_column)
        if role is Role.LOCATION:
            if self.attraction_column:
                cols.append(self.attraction_column)
            cols += list(self.attribute_columns)
        return cols


def fmt(value) -> str:
    """17-significant-digit text for a float; empty for None."""
    if value is None:
        return ""
    return format(float(value), ".17g")


def _num(text, column: str, row: int) -> float:
    try:
        value = float(str(text).strip())
    except (TypeError, ValueError):
        raise ParseError(
            f"row {row}: cannot parse {column}={text!r} as a number", row=row
        ) from None
    return value


def atomic_write_text(path: str | os.PathLike, text: str) -> Path:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(OSError):
            os.unlink(tmp)
        raise
    return path


def _csv_text(header: Sequence[str], rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _entity(role: Role, point: GeoPoint, props: dict, spec: ColumnSpec, row: int):
    try:
        if role is Role.ORIGIN:
            demand = 1.0
            if spec.demand_column:
                demand = _num(props[spec.demand_column], spec.demand_column, row)
            return CustomerOrigin(point, demand)
        attraction = 1.0
        if spec.attraction_column:
            attraction = _num(props[spec.attraction_column], spec.attraction_column, row)
        attrs = {c: _num(props[c], c, row) for c in spec.attribute_columns}
        return SupplyLocation(point, attraction, attrs)
    except ParseError:
        raise
    except ValidationError as exc:
        raise ParseError(f"row {row}: {exc}", row=row) from None


def _check_unique(entities) -> None:
    seen = set()
    for e in entities:
        if e.id in seen:
            raise ValidationError(f"duplicate id {e.id!r}")
        seen.add(e.id)


def load_points_csv(
    path: str | os.PathLike,
    spec: ColumnSpec,
    role: Role | str,
    *,
    delimiter: str = ",",
) -> list:
    """Read origins or locations from a headed, UTF-8 CSV file.

    Rows are numbered from 1 (the first data row) in error messages.
    """
    role = Role(role)
    with open(path, encoding="utf-8-sig", newline="") as fh:
        reader = csv.DictReader(fh, delimiter=delimiter)
        header = reader.fieldnames or []
        needed = [spec.id_column, spec.lat_column, spec.lon_column]
        for col in needed + spec.required_properties(role):
            if col not in header:
                raise ValidationError(f"missing column: {col}")
        entities = []
        for row, record in enumerate(reader, start=1):
            lat = _num(record[spec.lat_column], spec.lat_column, row)
            lon = _num(record[spec.lon_column], spec.lon_column, row)
            try:
                point = GeoPoint(str(record[spec.id_column]).strip(), lat, lon)
            except ValidationError as exc:
                raise ParseError(f"row {row}: {exc}", row=row) from None
            entities.append(_entity(role, point, record, spec, row))
    if not entities:
        raise DimensionError(f"{path}: no data rows")
    _check_unique(entities)
    return entities


def load_points_geojson(path: str | os.PathLike, spec: ColumnSpec, role: Role | str) -> list:
    """Read origins or locations from a FeatureCollection of Points.

    Coordinates come from the geometry in GeoJSON ``[lon, lat]`` order; the
    id and numeric fields come from each feature's properties (the feature's
    own ``id`` is used when the id property is absent).
    """
    role = Role(role)
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: invalid JSON ({exc})") from None
    if doc.get("type") != "FeatureCollection":
        raise ParseError(f"{path}: expected a FeatureCollection")
    entities = []
    for index, feature in enumerate(doc.get("features", [])):
        geom = feature.get("geometry") or {}
        if geom.get("type") != "Point":
            raise ParseError(f"non-point geometry at feature {index}", row=index)
        coords = geom.get("coordinates") or []
        if len(coords) < 2:
            raise ParseError(f"feature {index}: point needs two coordinates", row=index)
        props = dict(feature.get("properties") or {})
        for col in spec.required_properties(role):
            if col not in props:
                raise ValidationError(f"missing column: {col} (feature {index})")
        id_ = props.get(spec.id_column, feature.get("id"))
        if id_ is None:
            raise ValidationError(f"missing column: {spec.id_column} (feature {index})")
        lon = _num(coords[0], "longitude", index)
        lat = _num(coords[1], "latitude", index)
        try:
            point = GeoPoint(str(id_), lat, lon)
        except ValidationError as exc:
            raise ParseError(f"feature {index}: {exc}", row=index) from None
        entities.append(_entity(role, point, props, spec, index))
    if not entities:
        raise DimensionError(f"{path}: no features")
    _check_unique(entities)
    return entities


def load_points(path, spec: ColumnSpec, role: Role | str, *, delimiter: str = ",") -> list:
    """Dispatch on the file extension (``.geojson``/``.json`` vs CSV)."""
    if Path(path).suffix.lower() in (".geojson", ".json"):
        return load_points_geojson(path, spec, role)
    return load_points_csv(path, spec, role, delimiter=delimiter)


def _read_rows(path, required: Sequence[str], delimiter: str = ",") -> tuple[list[str], list[dict]]:
    with open(path, encoding="utf-8-sig", newline="") as fh:
        reader = csv.DictReader(fh, delimiter=delimiter)
        header = list(reader.fieldnames or [])
        for col in required:
            if col not in header:
                raise ValidationError(f"missing column: {col}")
        return header, list(reader)


def load_cost_matrix_csv(
    path, origin_ids: Sequence[str], location_ids: Sequence[str], *, delimiter: str = ","
) -> np.ndarray:
    """Long-format costs (``origin_id,location_id,cost``) as an I x J array.

    ``inf`` is accepted for unroutable pairs; every pair must be present.
    """
    _, rows = _read_rows(path, ["origin_id", "location_id", "cost"], delimiter)
    oi = {o: i for i, o in enumerate(origin_ids)}
    lj = {loc: j for j, loc in enumerate(location_ids)}
    out = np.full((len(oi), len(lj)), np.nan)
    for row, rec in enumerate(rows, start=1):
        o, loc = rec["origin_id"], rec["location_id"]
        if o not in oi or loc not in lj:
            continue
        out[oi[o], lj[loc]] = _num(rec["cost"], "cost", row)
    missing = np.argwhere(np.isnan(out))
    if missing.size:
        i, j = missing[0]
        raise DimensionError(
            f"cost matrix has no entry for ({origin_ids[i]!r}, {location_ids[j]!r})"
        )
    return out


def read_observed_csv(path, matrix: InteractionMatrix, kind: ObservedKind | str | None = None,
                      *, delimiter: str = ",") -> ObservedData:
    """Observed data keyed by ids.

    The kind follows from the header unless given: ``share`` or ``flow``
    columns (with ``origin_id,location_id``) or a ``total`` column (with
    ``location_id``).
    """
    with open(path, encoding="utf-8-sig", newline="") as fh:
        header = next(csv.reader(fh, delimiter=delimiter), [])
    if kind is None:
        if "share" in header:
            kind = ObservedKind.SHARES
        elif "flow" in header:
            kind = ObservedKind.FLOWS
        elif "total" in header:
            kind = ObservedKind.TOTALS
        else:
            raise ValidationError(
                f"{path}: cannot tell observed kind; expected a share, flow or total column"
            )
    kind = ObservedKind(kind)
    value_col = {"shares": "share", "flows": "flow", "totals": "total"}[kind.value]
    keys = ["location_id"] if kind is ObservedKind.TOTALS else ["origin_id", "location_id"]
    _, rows = _read_rows(path, keys + [value_col], delimiter)
    values = {}
    for row, rec in enumerate(rows, start=1):
        key = rec["location_id"] if len(keys) == 1 else (rec["origin_id"], rec["location_id"])
        values[key] = _num(rec[value_col], value_col, row)
    return ObservedData.from_mapping(kind, matrix, values)


# ---------------------------------------------------------------- matrix CSV

_PAIR_COLUMNS = (
    "transport_cost",
    "utility",
    "probability",
    "flow",
    "observed_probability",
    "observed_flow",
)
_ATTR_PREFIX = "attr:"


def _attribute_names(matrix: InteractionMatrix) -> list[str]:
    names: dict[str, None] = {}
    for loc in matrix.locations:
        names.update(dict.fromkeys(loc.attributes))
    return list(names)


def interaction_matrix_csv(matrix: InteractionMatrix) -> str:
    attrs = _attribute_names(matrix)
    header = (
        ["origin_id", "origin_lat", "origin_lon", "demand"]
        + ["location_id", "location_lat", "location_lon", "attraction"]
        + [_ATTR_PREFIX + a for a in attrs]
        + ["cost_unit", "cost_floor"]
        + list(_PAIR_COLUMNS)
    )
    rows = []
    for i, o in enumerate(matrix.origins):
        for j, loc in enumerate(matrix.locations):
            row = [o.id, fmt(o.point.lat), fmt(o.point.lon), fmt(o.demand)]
            row += [loc.id, fmt(loc.point.lat), fmt(loc.point.lon), fmt(loc.attraction)]
            row += [fmt(loc.attributes.get(a)) for a in attrs]
            row += [matrix.cost_unit or "", fmt(matrix.cost_floor)]
            for name in _PAIR_COLUMNS:
                arr = getattr(matrix, name)
                row.append("" if arr is None else fmt(arr[i, j]))
            rows.append(row)
    return _csv_text(header, rows)


def load_interaction_matrix_csv(path) -> InteractionMatrix:
    """Inverse of exporting an :class:`InteractionMatrix` to CSV."""
    header, rows = _read_rows(path, ["origin_id", "location_id", *_PAIR_COLUMNS])
    attrs = [c[len(_ATTR_PREFIX):] for c in header if c.startswith(_ATTR_PREFIX)]
    origins: dict[str, CustomerOrigin] = {}
    locations: dict[str, SupplyLocation] = {}
    for row, rec in enumerate(rows, start=1):
        oid, lid = rec["origin_id"], rec["location_id"]
        if oid not in origins:
            pt = GeoPoint(oid, _num(rec["origin_lat"], "origin_lat", row),
                          _num(rec["origin_lon"], "origin_lon", row))
            origins[oid] = CustomerOrigin(pt, _num(rec["demand"], "demand", row))
        if lid not in locations:
            pt = GeoPoint(lid, _num(rec["location_lat"], "location_lat", row),
                          _num(rec["location_lon"], "location_lon", row))
            values = {a: _num(rec[_ATTR_PREFIX + a], a, row)
                      for a in attrs if rec[_ATTR_PREFIX + a] != ""}
            locations[lid] = SupplyLocation(pt, _num(rec["attraction"], "attraction", row), values)
    n_i, n_j = len(origins), len(locations)
    if len(rows) != n_i * n_j:
        raise DimensionError(f"{path}: {len(rows)} rows do not form a {n_i} x {n_j} cross product")
    oids, lids = list(origins), list(locations)
    fields: dict[str, np.ndarray | None] = {}
    for name in _PAIR_COLUMNS:
        cells = [rec[name] for rec in rows]
        if all(c == "" for c in cells):
            fields[name] = None
            continue
        arr = np.empty((n_i, n_j))
        for k, (rec, cell) in enumerate(zip(rows, cells)):
            i, j = divmod(k, n_j)
            if rec["origin_id"] != oids[i] or rec["location_id"] != lids[j]:
                raise ParseError(f"row {k + 1}: pairs are not in origin-major order", row=k + 1)
            arr[i, j] = _num(cell, name, k + 1)
        fields[name] = arr
    first = rows[0]
    floor = first.get("cost_floor", "")
    return InteractionMatrix(
        origins=tuple(origins.values()),
        locations=tuple(locations.values()),
        cost_unit=first.get("cost_unit") or None,
        cost_floor=float(floor) if floor else None,
        **fields,
    )


def pair_table_csv(matrix: InteractionMatrix, field: str, column: str | None = None) -> str:
    """Long-format ``origin_id,location_id,<field>`` table for one pair field."""
    arr = matrix.require(field, f"export of {field}")
    column = column or field
    rows = [
        [o.id, loc.id, fmt(arr[i, j])]
        for i, o in enumerate(matrix.origins)
        for j, loc in enumerate(matrix.locations)
    ]
    return _csv_text(["origin_id", "location_id", column], rows)


# ---------------------------------------------------------------- export

def _feature(point: GeoPoint, props: dict) -> dict:
    return {
        "type": "Feature",
        "geometry": {"type": "Point", "coordinates": [point.lon, point.lat]},
        "properties": props,
    }


def _geojson_text(features: list[dict]) -> str:
    doc = {"type": "FeatureCollection", "features": features}
    return json.dumps(doc, indent=1, allow_nan=False) + "\n"


def _flatten(prefix: str, value, out: list):
    if isinstance(value, dict):
        for k, v in value.items():
            _flatten(f"{prefix}.{k}" if prefix else str(k), v, out)
    elif isinstance(value, list):
        out.append([prefix, ";".join(str(v) for v in value)])
    elif isinstance(value, float):
        out.append([prefix, fmt(value)])
    else:
        out.append([prefix, "" if value is None else str(value)])


def _render(result, fmt_: Format, level: str) -> str:
    if isinstance(result, MarketAreas):
        if fmt_ is Format.CSV:
            return _csv_text(["location_id", "total"],
                             [[k, fmt(v)] for k, v in result.totals.items()])
        if fmt_ is Format.GEOJSON:
            if not result.locations:
                raise ValidationError("market areas carry no location geometry")
            return _geojson_text([
                _feature(loc.point, {"location_id": loc.id, "total": result.totals[loc.id]})
                for loc in result.locations
            ])
    elif isinstance(result, AccessibilityResult):
        by_location = level == "location"
        if by_location and not result.per_location:
            raise ValidationError(f"{result.method.value} has no per-location values")
        values = result.per_location if by_location else result.per_origin
        key, name = ("location_id", "supply_ratio") if by_location else ("origin_id", "accessibility")
        if fmt_ is Format.CSV:
            return _csv_text([key, name], [[k, fmt(v)] for k, v in values.items()])
        if fmt_ is Format.GEOJSON:
            entities = result.locations if by_location else result.origins
            if not entities:
                raise ValidationError("accessibility result carries no geometry")
            return _geojson_text([
                _feature(e.point, {key: e.id, name: values[e.id]}) for e in entities
            ])
    elif isinstance(result, InteractionMatrix):
        if fmt_ is Format.CSV:
            return interaction_matrix_csv(result)
    elif isinstance(result, (FitResult, MCIFit)):
        doc = result.as_dict()
        if fmt_ is Format.JSON:
            return json.dumps(doc, indent=2) + "\n"
        if fmt_ is Format.CSV:
            rows: list = []
            _flatten("", doc, rows)
            return _csv_text(["key", "value"], rows)
        if fmt_ is Format.TEXT and isinstance(result, MCIFit):
            return result.summary()
    else:
        raise ValidationError(f"cannot export objects of type {type(result).__name__}")
    raise ValidationError(f"{type(result).__name__} cannot be exported as {fmt_.value}")


def export_results(result, format: Format | str, path, *, level: str = "origin") -> Path:
    """Write a result object to ``path`` in the requested format.

    Market areas and accessibility results support CSV and GeoJSON (one
    Point feature per location / origin). Interaction matrices export to CSV
    only. Fit results support JSON, CSV (flattened key/value) and, for MCI
    fits, a plain-text coefficient table. ``level="location"`` exports the
    2SFCA supply-to-demand ratios instead of origin accessibility.
    """
    text = _render(result, Format(format), level)
    return atomic_write_text(path, text)
