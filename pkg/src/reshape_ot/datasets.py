"""Synthetic generators and data ingestion.

All generators draw from a numpy RandomState (Mersenne Twister with the
polar Gaussian method), whose bit streams numpy keeps stable across
platforms and releases, so a seed pins an instance exactly. Experiment
repetitions derive their stream as ``seed = base_seed + trial_index``.
"""

from __future__ import annotations

import csv
import datetime as _dt
from dataclasses import dataclass

import numpy as np
from sklearn.datasets import make_moons
from sklearn.utils import check_random_state

from .exceptions import DataError
from .geometry import DisplacementSet, PointCloud, _freeze
from .validation import as_float_matrix

GEO_OUTLIER_PERCENTILE = 99.0
GEO_JITTER_SCALE = 1e-4


@dataclass(frozen=True)
class PairedSample:
    """Row-matched source and target points (identity ground-truth coupling)."""

    sources: np.ndarray
    targets: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        src = as_float_matrix(self.sources, "sources")
        tgt = as_float_matrix(self.targets, "targets")
        if src.shape != tgt.shape:
            raise ValueError(f"paired shapes differ: {src.shape} vs {tgt.shape}")
        object.__setattr__(self, "sources", _freeze(src))
        object.__setattr__(self, "targets", _freeze(tgt))
        if self.labels is not None:
            labels = np.asarray(self.labels)
            if labels.shape[0] != src.shape[0]:
                raise ValueError("label count does not match sample count")
            object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.sources.shape[0]

    @property
    def dim(self) -> int:
        return self.sources.shape[1]


@dataclass(frozen=True)
class MoonsInstance:
    """A rotated two-moons problem with a matched source/target pair.

    The target is the source rotated clockwise by ``-rotation_deg`` via a
    right-multiplied rotation matrix, so the net effect on the points is a
    counterclockwise rotation. Source and target share the same noise
    realization, which makes row k of the target exactly the rotation of
    row k of the source (an identity ground-truth coupling).
    """

    source: PointCloud
    target: PointCloud
    test: PointCloud
    source_labels: np.ndarray
    target_labels: np.ndarray
    test_labels: np.ndarray
    rotation_deg: float
    seed: int

    @property
    def paired(self) -> PairedSample:
        return PairedSample(self.source.points, self.target.points, self.source_labels)


def _rotation_matrix(rotation_deg: float) -> np.ndarray:
    theta = np.radians(-rotation_deg)
    return np.array(
        [[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]]
    )


def make_rotating_moons(
    rotation_deg: float,
    n_per_moon: int = 150,
    noise: float = 0.05,
    n_test: int = 1000,
    random_state=None,
) -> MoonsInstance:
    """Two nested noisy half-moons plus a rotated copy and a fresh test set.

    The source is the standard two-moons sample with its first coordinate
    shifted by -0.5; the target right-multiplies the (already noisy) source
    by the rotation matrix. The test set is an independent draw from the
    target distribution.
    """
    if not 0.0 <= rotation_deg <= 180.0:
        raise ValueError(f"rotation must lie in [0, 180], got {rotation_deg}")
    if n_per_moon < 1:
        raise ValueError("n_per_moon must be >= 1")
    seed = int(random_state) if isinstance(random_state, (int, np.integer)) else -1
    rng = check_random_state(random_state)

    xs, ys = make_moons(n_samples=2 * n_per_moon, noise=noise, random_state=rng)
    xs = xs.copy()
    xs[:, 0] -= 0.5

    rot = _rotation_matrix(rotation_deg)
    xt = xs @ rot
    yt = ys.copy()

    xtest, ytest = make_moons(n_samples=n_test, noise=noise, random_state=rng)
    xtest = xtest.copy()
    xtest[:, 0] -= 0.5
    xtest = xtest @ rot

    return MoonsInstance(
        source=PointCloud(xs),
        target=PointCloud(xt),
        test=PointCloud(xtest),
        source_labels=ys,
        target_labels=yt,
        test_labels=ytest,
        rotation_deg=float(rotation_deg),
        seed=seed,
    )


_SHIFT_KINDS = ("translation", "rotation", "affine")


@dataclass(frozen=True)
class ShiftInstance:
    """Paired clouds from a synthetic deterministic shift plus noise."""

    paired: PairedSample
    shift_kind: str
    magnitude: float
    translation: np.ndarray | None


def synthetic_shift_harness(
    n: int,
    d: int,
    shift_kind: str = "translation",
    magnitude: float = 1.0,
    noise: float = 0.0,
    random_state=None,
    n_components: int = 3,
) -> ShiftInstance:
    """Gaussian-mixture source, deterministically shifted target.

    translation: target = source + magnitude * u for a seeded random unit
    direction u. rotation: rotate the first two coordinates about the origin
    by ``magnitude`` degrees. affine: apply I + magnitude * G with G a
    seeded random matrix scaled to unit spectral-ish norm. Per-coordinate
    Gaussian noise is added to the target afterwards; the ground-truth
    coupling stays the identity.
    """
    if n < 2 or d < 1:
        raise ValueError("need n >= 2 and d >= 1")
    if shift_kind not in _SHIFT_KINDS:
        raise ValueError(f"shift_kind must be one of {_SHIFT_KINDS}, got {shift_kind!r}")
    rng = check_random_state(random_state)

    means = rng.normal(scale=1.0, size=(n_components, d))
    assignment = rng.randint(n_components, size=n)
    sources = means[assignment] + rng.normal(size=(n, d))

    translation = None
    if shift_kind == "translation":
        direction = rng.normal(size=d)
        norm = np.linalg.norm(direction)
        direction = direction / norm if norm > 0 else np.eye(d)[0]
        translation = magnitude * direction
        targets = sources + translation
    elif shift_kind == "rotation":
        if d < 2:
            raise ValueError("rotation shift needs d >= 2")
        block = _rotation_matrix(-magnitude)  # counterclockwise by `magnitude` deg
        transform = np.eye(d)
        transform[:2, :2] = block
        targets = sources @ transform.T
    else:
        gmat = rng.normal(size=(d, d))
        gmat /= max(np.linalg.norm(gmat, 2), 1e-12)
        targets = sources @ (np.eye(d) + magnitude * gmat).T

    if noise > 0:
        targets = targets + rng.normal(scale=noise, size=targets.shape)

    return ShiftInstance(
        paired=PairedSample(sources, targets),
        shift_kind=shift_kind,
        magnitude=float(magnitude),
        translation=translation,
    )


def select_displacements(
    paired: PairedSample,
    n_pairs: int,
    random_state=None,
    permute: bool = False,
) -> tuple[DisplacementSet, PairedSample | None]:
    """Draw ground-truth pairs as guidance and remove them from the data.

    Picks ``n_pairs`` indices uniformly without replacement. The returned
    DisplacementSet couples them as (1/N) * identity, or, with
    ``permute=True``, as (1/N) times a uniformly random permutation matrix
    (the marginals stay uniform; only the pairing is scrambled). Selecting
    every pair returns None for the remainder.
    """
    if n_pairs < 1:
        raise ValueError("n_pairs must be >= 1")
    if n_pairs > paired.n:
        raise ValueError(f"asked for {n_pairs} pairs from {paired.n} samples")
    rng = check_random_state(random_state)
    chosen = rng.choice(paired.n, size=n_pairs, replace=False)
    chosen = np.sort(chosen)
    srcs = paired.sources[chosen]
    tgts = paired.targets[chosen]
    if permute:
        perm = rng.permutation(n_pairs)
        coupling = np.zeros((n_pairs, n_pairs))
        coupling[np.arange(n_pairs), perm] = 1.0 / n_pairs
        disp = DisplacementSet(srcs, tgts, coupling)
    else:
        disp = DisplacementSet.paired(srcs, tgts)

    mask = np.ones(paired.n, dtype=bool)
    mask[chosen] = False
    if not mask.any():
        # Selecting every pair leaves nothing to transport; callers must
        # treat the None remainder as an error if they need data.
        return disp, None
    labels = paired.labels[mask] if paired.labels is not None else None
    remaining = PairedSample(paired.sources[mask], paired.targets[mask], labels)
    return disp, remaining


# ---------------------------------------------------------------------------
# CSV ingestion
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GeoRecord:
    id: str
    timestamp: _dt.date
    lat: float
    lon: float

    def __post_init__(self):
        if not -90.0 <= self.lat <= 90.0:
            raise DataError(f"latitude {self.lat} outside [-90, 90]")
        if not -180.0 <= self.lon <= 180.0:
            raise DataError(f"longitude {self.lon} outside [-180, 180]")


def ingest_csv(path, schema: str = "numeric"):
    """Parse a CSV file into a PointCloud ("numeric") or GeoRecords ("geo")."""
    if schema == "numeric":
        return read_point_csv(path)
    if schema == "geo":
        return read_geo_csv(path)
    raise ValueError(f"unknown schema {schema!r}; choose 'numeric' or 'geo'")


def read_point_csv(path) -> PointCloud:
    """Numeric CSV: a header of feature names, one sample per row.

    Rows with unparsable or non-finite values are rejected with their line
    number. Weights are uniform.
    """
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if not header or any(not name.strip() for name in header):
            raise DataError(f"{path}: malformed header {header!r}")
        width = len(header)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != width:
                raise DataError(
                    f"{path}:{lineno}: expected {width} fields, got {len(row)}"
                )
            try:
                values = [float(v) for v in row]
            except ValueError:
                raise DataError(f"{path}:{lineno}: unparsable numeric row") from None
            if not all(np.isfinite(values)):
                raise DataError(f"{path}:{lineno}: non-finite value")
            rows.append(values)
    if not rows:
        raise DataError(f"{path}: no data rows")
    return PointCloud(np.asarray(rows))


_GEO_COLUMNS = ("id", "timestamp", "lat", "lon")


def read_geo_csv(path) -> list[GeoRecord]:
    """Geo CSV with columns id,timestamp,lat,lon (extra columns ignored).

    Timestamps are ``YYYY-MM-DD``; any trailing time of day is ignored.
    """
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise DataError(f"{path}: empty file")
        missing = [c for c in _GEO_COLUMNS if c not in reader.fieldnames]
        if missing:
            raise DataError(f"{path}: missing columns {missing}")
        for lineno, row in enumerate(reader, start=2):
            try:
                day = _dt.date.fromisoformat(row["timestamp"].strip()[:10])
                lat = float(row["lat"])
                lon = float(row["lon"])
            except (ValueError, AttributeError):
                raise DataError(f"{path}:{lineno}: unparsable row") from None
            if not (np.isfinite(lat) and np.isfinite(lon)):
                raise DataError(f"{path}:{lineno}: non-finite coordinate")
            try:
                records.append(GeoRecord(row["id"], day, lat, lon))
            except DataError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
    if not records:
        raise DataError(f"{path}: no data rows")
    return records


def read_id_list(path) -> list[str]:
    """Newline-separated individual IDs (blank lines skipped)."""
    with open(path, encoding="utf-8") as fh:
        ids = [line.strip() for line in fh]
    ids = [i for i in ids if i]
    if not ids:
        raise DataError(f"{path}: no IDs listed")
    return ids


# ---------------------------------------------------------------------------
# Geospatial preprocessing
# ---------------------------------------------------------------------------


def latlon_to_cartesian(lat, lon) -> np.ndarray:
    """Unit-sphere embedding; Euclidean distance between embeddings is the
    chordal distance between the two locations."""
    lat = np.asarray(lat, dtype=np.float64)
    lon = np.asarray(lon, dtype=np.float64)
    if np.any((lat < -90) | (lat > 90)):
        raise DataError("latitude outside [-90, 90]")
    if np.any((lon < -180) | (lon > 180)):
        raise DataError("longitude outside [-180, 180]")
    lat_r = np.radians(lat)
    lon_r = np.radians(lon)
    return np.stack(
        [np.cos(lat_r) * np.cos(lon_r), np.cos(lat_r) * np.sin(lon_r), np.sin(lat_r)],
        axis=-1,
    )


def _ordered_median(values: list[float]) -> float:
    """Lower-middle order statistic; even counts take the lower element."""
    ordered = sorted(values)
    return ordered[(len(ordered) - 1) // 2]


def _next_iso_week(key: tuple[int, int]) -> tuple[int, int]:
    year, week = key
    monday = _dt.date.fromisocalendar(year, week, 1) + _dt.timedelta(weeks=1)
    iso = monday.isocalendar()
    return (iso[0], iso[1])


@dataclass(frozen=True)
class WeeklyFlows:
    """Weekly population snapshots and the displacement pairs between them.

    ``sources``/``targets`` pool, over every consecutive ISO-week pair, the
    Cartesian positions of each untracked individual present in both weeks.
    ``guidance`` holds the designated individuals' consecutive-week pairs as
    a paired DisplacementSet (None when no IDs were designated).
    """

    weeks: tuple
    clouds: tuple
    sources: np.ndarray
    targets: np.ndarray
    pair_weeks: tuple
    guidance: DisplacementSet | None
    outlier_threshold: float


def weekly_snapshots(
    records,
    window: tuple[_dt.date, _dt.date] | None = None,
    guidance_ids=(),
    random_state=0,
) -> WeeklyFlows:
    """Median weekly positions per individual, and week-to-week displacements.

    Per individual and ISO calendar week, the lat/lon medians (lower-middle
    order statistic) give one position. Consecutive-week positions of the
    same individual form candidate displacements; those with chordal length
    above the 99th percentile (computed globally over all candidates) are
    dropped as artifacts. Gaussian jitter of scale 1e-4 is then added to
    every Cartesian coordinate to break exact ties.
    """
    records = list(records)
    if not records:
        raise DataError("no geo records")
    if window is not None:
        start, end = window
        records = [r for r in records if start <= r.timestamp <= end]
        if not records:
            raise DataError(f"window {start}..{end} contains no records")

    by_key: dict = {}
    for rec in records:
        key = (rec.id, rec.timestamp.isocalendar()[0], rec.timestamp.isocalendar()[1])
        by_key.setdefault(key, []).append(rec)
    positions: dict = {}
    for (ind, year, week), recs in by_key.items():
        lat = _ordered_median([r.lat for r in recs])
        lon = _ordered_median([r.lon for r in recs])
        positions[(ind, year, week)] = latlon_to_cartesian(lat, lon)

    individuals = sorted({ind for ind, _, _ in positions})
    week_keys = sorted({(year, week) for _, year, week in positions})

    weeks_of: dict = {ind: set() for ind in individuals}
    for ind, year, week in positions:
        weeks_of[ind].add((year, week))

    candidates = []  # (individual, week_key, source_xyz, target_xyz)
    for ind in individuals:
        for key in sorted(weeks_of[ind]):
            nxt = _next_iso_week(key)
            if nxt in weeks_of[ind]:
                candidates.append(
                    (ind, key, positions[(ind, *key)], positions[(ind, *nxt)])
                )
    if not candidates:
        raise DataError("no consecutive-week displacements in the data")

    lengths = np.array([np.linalg.norm(c[3] - c[2]) for c in candidates])
    threshold = float(np.percentile(lengths, GEO_OUTLIER_PERCENTILE))
    kept = [c for c, ln in zip(candidates, lengths) if ln <= threshold]

    rng = check_random_state(random_state)
    jitter: dict = {}
    for key in sorted(positions):
        jitter[key] = positions[key] + rng.normal(scale=GEO_JITTER_SCALE, size=3)

    guidance_set = set(guidance_ids)
    unknown = guidance_set - set(individuals)
    if unknown:
        raise DataError(f"guidance IDs not present in the data: {sorted(unknown)}")

    pop_src, pop_tgt, pop_weeks = [], [], []
    guide_src, guide_tgt = [], []
    for ind, key, _, _ in kept:
        nxt = _next_iso_week(key)
        src = jitter[(ind, *key)]
        tgt = jitter[(ind, *nxt)]
        if ind in guidance_set:
            guide_src.append(src)
            guide_tgt.append(tgt)
        else:
            pop_src.append(src)
            pop_tgt.append(tgt)
            pop_weeks.append(key)
    if not pop_src:
        raise DataError("no untracked displacements remain after guidance removal")

    kept_weeks, clouds = [], []
    for year, week in week_keys:
        pts = [
            jitter[(ind, year, week)]
            for ind in individuals
            if (ind, year, week) in positions and ind not in guidance_set
        ]
        if pts:
            kept_weeks.append((year, week))
            clouds.append(PointCloud(np.asarray(pts)))

    guidance = (
        DisplacementSet.paired(np.asarray(guide_src), np.asarray(guide_tgt))
        if guide_src
        else None
    )
    return WeeklyFlows(
        weeks=tuple(kept_weeks),
        clouds=tuple(clouds),
        sources=np.asarray(pop_src),
        targets=np.asarray(pop_tgt),
        pair_weeks=tuple(pop_weeks),
        guidance=guidance,
        outlier_threshold=threshold,
    )
