"""Catalog data model, CSV I/O, filtering, daily binning and distances.

A :class:`Catalog` keeps its events column-wise in numpy arrays; times are
real days measured from the catalog origin.  Missing coordinates and depths
are stored as NaN.  Parent labels are event indices, or one of the
sentinels :data:`BACKGROUND` and :data:`UNKNOWN`.

CSV layout
----------
Optional ``# key=value`` metadata lines (``m0``, ``window``, ``origin``) followed by a
header ``time,magnitude[,latitude,longitude,depth][,parent]``.  ``time`` is
either an ISO-8601 timestamp or real days.  Floats are written with
``repr`` so that a write/read/write cycle reproduces the text exactly.
"""

from dataclasses import dataclass, field
from datetime import datetime
import csv
import io
import math
import os
import tempfile

import numpy as np

from ._validation import check_finite, check_interval, check_positive
from .exceptions import CatalogFormatError, ValidationError

BACKGROUND = -1
UNKNOWN = -2
EARTH_RADIUS_KM = 6371.0

_GEO_COLUMNS = ("latitude", "longitude", "depth")


@dataclass(frozen=True)
class Event:
    time: float
    magnitude: float
    latitude: float = math.nan
    longitude: float = math.nan
    depth: float = math.nan
    parent: int = UNKNOWN

    def __post_init__(self):
        if not math.isfinite(self.magnitude):
            raise ValidationError("event magnitude must be finite")
        if self.depth < 0:
            raise ValidationError("event depth must be >= 0")

    @property
    def has_location(self):
        return math.isfinite(self.latitude) and math.isfinite(self.longitude)


def _column(values, n, fill=math.nan, dtype=float):
    if values is None:
        return np.full(n, fill, dtype=dtype)
    arr = np.array(values, dtype=dtype)
    if arr.shape != (n,):
        raise ValidationError(f"column length {arr.shape} does not match {n} events")
    return arr


@dataclass(frozen=True, eq=False)
class Catalog:
    """Time-ordered events plus completeness magnitude and observation window.

    Construct through :meth:`from_arrays`, which sorts and validates.
    """

    times: np.ndarray
    magnitudes: np.ndarray
    m0: float
    window: tuple
    latitude: np.ndarray = field(default=None)
    longitude: np.ndarray = field(default=None)
    depth: np.ndarray = field(default=None)
    parent: np.ndarray = field(default=None)

    @classmethod
    def from_arrays(cls, times, magnitudes, m0=None, window=None, latitude=None,
                    longitude=None, depth=None, parent=None):
        """Build a catalog, stably sorting by time and remapping parent indices."""
        times = np.asarray(times, dtype=float).reshape(-1)
        n = times.size
        mags = _column(magnitudes, n)
        if not np.all(np.isfinite(times)):
            raise ValidationError("event times must be finite")
        if not np.all(np.isfinite(mags)):
            raise ValidationError("event magnitudes must be finite")
        lat, lon, dep = (_column(v, n) for v in (latitude, longitude, depth))
        if np.any(dep < 0):
            raise ValidationError("depth must be >= 0")
        par = _column(parent, n, fill=UNKNOWN, dtype=np.int64)

        order = np.argsort(times, kind="stable")
        if not np.array_equal(order, np.arange(n)):
            rank = np.empty(n, dtype=np.int64)
            rank[order] = np.arange(n)
            times, mags, lat, lon, dep, par = (a[order] for a in (times, mags, lat, lon, dep, par))
            par = np.where(par >= 0, rank[np.clip(par, 0, None)], par)
        if np.any(par >= n) or np.any(par < UNKNOWN):
            raise ValidationError("parent labels out of range")
        linked = par >= 0
        if np.any(par[linked] >= np.flatnonzero(linked)):
            raise ValidationError("a parent must precede its child")

        if m0 is None:
            m0 = float(mags.min()) if n else 0.0
        if window is None:
            window = (float(times[0]), float(times[-1])) if n else (0.0, 0.0)
        window = check_interval(window)
        if n and (times[0] < window[0] or times[-1] > window[1]):
            raise ValidationError("event times fall outside the catalog window")
        for a in (times, mags, lat, lon, dep, par):
            a.setflags(write=False)
        return cls(times, mags, check_finite(m0, "m0"), window, lat, lon, dep, par)

    def __len__(self):
        return self.times.size

    def __getitem__(self, i):
        return Event(float(self.times[i]), float(self.magnitudes[i]), float(self.latitude[i]),
                     float(self.longitude[i]), float(self.depth[i]), int(self.parent[i]))

    @property
    def events(self):
        return [self[i] for i in range(len(self))]

    @property
    def duration(self):
        return self.window[1] - self.window[0]

    @property
    def has_locations(self):
        return bool(np.any(np.isfinite(self.latitude)))

    @property
    def has_depths(self):
        return bool(np.any(np.isfinite(self.depth)))

    @property
    def has_parents(self):
        return bool(np.any(self.parent != UNKNOWN))

    def subset(self, mask, m0=None, window=None):
        """Keep events where ``mask`` holds; parents of dropped events become UNKNOWN."""
        mask = np.asarray(mask, dtype=bool)
        new_index = np.cumsum(mask) - 1
        par = self.parent[mask]
        linked = par >= 0
        keep_link = np.zeros_like(linked)
        keep_link[linked] = mask[par[linked]]
        remapped = np.where(keep_link, new_index[np.clip(par, 0, None)], par)
        remapped = np.where(linked & ~keep_link, UNKNOWN, remapped)
        return Catalog.from_arrays(
            self.times[mask], self.magnitudes[mask],
            m0=self.m0 if m0 is None else m0,
            window=self.window if window is None else window,
            latitude=self.latitude[mask], longitude=self.longitude[mask],
            depth=self.depth[mask], parent=remapped)

    def with_times(self, times, window):
        """Same events with replaced (monotone) times, e.g. after time rescaling."""
        return Catalog.from_arrays(times, self.magnitudes, m0=self.m0, window=window,
                                   latitude=self.latitude, longitude=self.longitude,
                                   depth=self.depth, parent=self.parent)

    def same_as(self, other):
        """Exact equality of every column, NaN-aware."""
        cols = ("times", "magnitudes", "latitude", "longitude", "depth")
        return (self.m0 == other.m0 and tuple(self.window) == tuple(other.window)
                and all(np.array_equal(getattr(self, c), getattr(other, c), equal_nan=True)
                        for c in cols)
                and np.array_equal(self.parent, other.parent))


@dataclass(frozen=True)
class CountSeries:
    counts: np.ndarray

    def __post_init__(self):
        if self.counts.size < 2:
            raise ValidationError("a count series needs at least 2 entries")
        if np.any(self.counts < 0):
            raise ValidationError("counts must be nonnegative")

    @property
    def n(self):
        return self.counts.size


# --------------------------------------------------------------------------- I/O

def _parse_time(text):
    try:
        return float(text), False
    except ValueError:
        pass
    try:
        stamp = datetime.fromisoformat(text.strip().replace("Z", "+00:00"))
    except ValueError:
        return None, None
    return stamp, True


def _parse_float(text, name, lineno, allow_missing=False):
    text = text.strip()
    if text == "" and allow_missing:
        return math.nan
    try:
        value = float(text)
    except ValueError:
        raise CatalogFormatError(f"cannot parse {name} {text!r}", lineno) from None
    if not math.isfinite(value):
        raise CatalogFormatError(f"non-finite {name} {text!r}", lineno)
    return value


def read_catalog_text(text):
    """Parse catalog CSV text; see the module docstring for the layout."""
    meta = {}
    lines = text.splitlines()
    start = 0
    while start < len(lines) and (lines[start].startswith("#") or not lines[start].strip()):
        body = lines[start].lstrip("#").strip()
        if "=" in body:
            key, value = body.split("=", 1)
            meta[key.strip()] = value.strip()
        start += 1
    if start == len(lines):
        raise CatalogFormatError("missing header line")
    reader = csv.reader(lines[start:])
    header = [h.strip().lower() for h in next(reader)]
    if header[:2] != ["time", "magnitude"]:
        raise CatalogFormatError("header must start with 'time,magnitude'", start + 1)
    unknown = set(header[2:]) - set(_GEO_COLUMNS) - {"parent"}
    if unknown:
        raise CatalogFormatError(f"unknown columns {sorted(unknown)}", start + 1)
    col = {name: i for i, name in enumerate(header)}

    times, mags, parents = [], [], []
    geo = {name: [] for name in _GEO_COLUMNS}
    iso = None
    for offset, row in enumerate(reader):
        lineno = start + 2 + offset
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise CatalogFormatError(f"expected {len(header)} fields, got {len(row)}", lineno)
        t, is_iso = _parse_time(row[0])
        if t is None or (iso is not None and is_iso != iso):
            raise CatalogFormatError(f"cannot parse time {row[0]!r}", lineno)
        if not is_iso and not math.isfinite(t):
            raise CatalogFormatError(f"non-finite time {row[0]!r}", lineno)
        iso = is_iso
        times.append(t)
        mags.append(_parse_float(row[1], "magnitude", lineno))
        for name in _GEO_COLUMNS:
            if name in col:
                geo[name].append(_parse_float(row[col[name]], name, lineno, allow_missing=True))
        if "parent" in col:
            cell = row[col["parent"]].strip()
            try:
                parents.append(UNKNOWN if cell == "" else int(cell))
            except ValueError:
                raise CatalogFormatError(f"cannot parse parent {cell!r}", lineno) from None
            if parents[-1] < UNKNOWN:
                raise CatalogFormatError(f"invalid parent {cell!r}", lineno)

    if iso:
        origin = min(times)
        if "origin" in meta:
            origin = datetime.fromisoformat(meta["origin"])
        times = [(t - origin).total_seconds() / 86400.0 for t in times]

    window = None
    if "window" in meta:
        lo, hi = meta["window"].split(",")
        window = (float(lo), float(hi))
    elif times and "origin" not in meta:
        shift = min(times)
        times = [t - shift for t in times]
    m0 = float(meta["m0"]) if "m0" in meta else None
    if parents and any(p >= len(times) for p in parents):
        raise CatalogFormatError("parent index beyond the number of rows")
    try:
        return Catalog.from_arrays(
            times, mags, m0=m0, window=window,
            **{name: geo[name] for name in _GEO_COLUMNS if name in col},
            parent=parents if "parent" in col else None)
    except ValidationError as exc:
        raise CatalogFormatError(str(exc)) from None


def load_catalog(path, format="csv"):
    """Read a catalog file.  Only the CSV layout is supported (``format='csv'``)."""
    if format != "csv":
        raise ValidationError(f"unsupported catalog format {format!r}")
    with open(path, encoding="utf-8", newline="") as fh:
        return read_catalog_text(fh.read())


def _fmt(x):
    return "" if math.isnan(x) else repr(float(x))


def catalog_to_text(cat):
    buf = io.StringIO()
    buf.write(f"# m0={cat.m0!r}\n# window={cat.window[0]!r},{cat.window[1]!r}\n")
    header = ["time", "magnitude"]
    geo = cat.has_locations or cat.has_depths
    if geo:
        header += list(_GEO_COLUMNS)
    if cat.has_parents:
        header.append("parent")
    buf.write(",".join(header) + "\n")
    for i in range(len(cat)):
        row = [repr(float(cat.times[i])), repr(float(cat.magnitudes[i]))]
        if geo:
            row += [_fmt(cat.latitude[i]), _fmt(cat.longitude[i]), _fmt(cat.depth[i])]
        if cat.has_parents:
            p = int(cat.parent[i])
            row.append("" if p == UNKNOWN else str(p))
        buf.write(",".join(row) + "\n")
    return buf.getvalue()


def atomic_write_text(path, text):
    """Write via a temporary file in the same directory, then rename."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_catalog(cat, path):
    atomic_write_text(path, catalog_to_text(cat))


# ------------------------------------------------------------------ operations

def filter_catalog(cat, m0, max_depth=40.0, window=None):
    """Keep events with magnitude >= m0, depth <= max_depth and time in ``window``.

    Events without a depth pass the depth cut.
    """
    m0 = check_finite(m0, "m0")
    max_depth = check_positive(max_depth, "max_depth")
    window = cat.window if window is None else check_interval(window)
    keep = (cat.magnitudes >= m0) & (cat.times >= window[0]) & (cat.times <= window[1])
    keep &= ~(cat.depth > max_depth)  # NaN depth compares False
    return cat.subset(keep, m0=m0, window=window)


def daily_counts(cat):
    """Number of events per day, bins ``[k, k + 1)`` from the window start.

    An event exactly at a closed window end falls in the last bin.
    """
    start, end = cat.window
    n = int(math.ceil(end - start))
    if end - start < 2:
        raise ValidationError(f"window of {end - start} days is shorter than 2 days")
    k = np.floor(cat.times - start).astype(np.int64)
    k = np.minimum(k, n - 1)
    return CountSeries(np.bincount(k, minlength=n).astype(np.int64))


def haversine_km(e1, e2):
    lat1, lon1, lat2, lon2 = e1.latitude, e1.longitude, e2.latitude, e2.longitude
    if not all(math.isfinite(v) for v in (lat1, lon1, lat2, lon2)):
        raise ValidationError("haversine distance needs latitude and longitude on both events")
    return float(_haversine(lat1, lon1, lat2, lon2))


def _haversine(lat1, lon1, lat2, lon2):
    phi1, phi2 = np.radians(lat1), np.radians(lat2)
    dphi = phi2 - phi1
    dlam = np.radians(np.asarray(lon2) - np.asarray(lon1))
    h = np.sin(dphi / 2) ** 2 + np.cos(phi1) * np.cos(phi2) * np.sin(dlam / 2) ** 2
    return 2 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.clip(h, 0.0, 1.0)))


def mean_pair_distance(pairs):
    """Mean great-circle distance over a sequence of ``(Event, Event)`` pairs."""
    pairs = list(pairs)
    if not pairs:
        raise ValidationError("mean_pair_distance needs at least one pair")
    return float(np.mean([haversine_km(a, b) for a, b in pairs]))


def mean_index_pair_distance(cat, first, second):
    """Vectorised :func:`mean_pair_distance` for index pairs into one catalog."""
    first, second = np.asarray(first, dtype=np.int64), np.asarray(second, dtype=np.int64)
    if first.size == 0:
        raise ValidationError("mean_pair_distance needs at least one pair")
    d = _haversine(cat.latitude[first], cat.longitude[first],
                   cat.latitude[second], cat.longitude[second])
    if np.any(np.isnan(d)):
        raise ValidationError("haversine distance needs latitude and longitude on both events")
    return float(d.mean())
