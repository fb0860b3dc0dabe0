import datetime as dt

import numpy as np
import pytest
from numpy.testing import assert_allclose

from reshape_ot.datasets import (
    GeoRecord,
    PairedSample,
    ingest_csv,
    latlon_to_cartesian,
    make_rotating_moons,
    read_geo_csv,
    read_id_list,
    read_point_csv,
    select_displacements,
    synthetic_shift_harness,
    weekly_snapshots,
)
from reshape_ot.evaluation import ground_truth_attribution
from reshape_ot.exceptions import DataError
from reshape_ot.geometry import DisplacementSet, compute_second_moment


# ---------------------------------------------------------------------------
# rotating moons
# ---------------------------------------------------------------------------


def test_moons_noiseless_outer_start_point():
    inst = make_rotating_moons(0.0, n_per_moon=10, noise=0.0, n_test=10, random_state=0)
    outer = inst.source.points[inst.source_labels == 0]
    dists = np.linalg.norm(outer - np.array([0.5, 0.0]), axis=1)
    assert dists.min() < 1e-12


def test_moons_zero_rotation_target_equals_source():
    inst = make_rotating_moons(0.0, n_per_moon=20, random_state=1)
    assert_allclose(inst.target.points, inst.source.points, atol=1e-15)


def test_moons_rotation_matrix_application():
    # right-multiplying by the clockwise matrix rotates points
    # counterclockwise: (0.5, 0) lands on (0, 0.5) at 90 degrees
    inst = make_rotating_moons(90.0, n_per_moon=5, noise=0.0, n_test=5, random_state=2)
    idx = np.argmin(np.linalg.norm(inst.source.points - np.array([0.5, 0.0]), axis=1))
    assert_allclose(inst.source.points[idx], [0.5, 0.0], atol=1e-12)
    assert_allclose(inst.target.points[idx], [0.0, 0.5], atol=1e-12)


def test_moons_identity_pairing_is_exact():
    inst = make_rotating_moons(35.0, n_per_moon=30, random_state=3)
    theta = np.radians(-35.0)
    rot = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
    assert_allclose(inst.target.points, inst.source.points @ rot, atol=1e-15)
    assert np.array_equal(inst.source_labels, inst.target_labels)


def test_moons_seed_determinism():
    a = make_rotating_moons(40.0, random_state=11)
    b = make_rotating_moons(40.0, random_state=11)
    assert np.array_equal(a.source.points, b.source.points)
    assert np.array_equal(a.test.points, b.test.points)
    c = make_rotating_moons(40.0, random_state=12)
    assert not np.array_equal(a.source.points, c.source.points)


def test_moons_sizes_and_validation():
    inst = make_rotating_moons(10.0, n_per_moon=25, n_test=77, random_state=0)
    assert inst.source.n == 50
    assert inst.test.n == 77
    assert inst.rotation_deg == 10.0
    with pytest.raises(ValueError):
        make_rotating_moons(181.0)
    with pytest.raises(ValueError):
        make_rotating_moons(-5.0)


# ---------------------------------------------------------------------------
# synthetic shift harness
# ---------------------------------------------------------------------------


def test_harness_zero_magnitude_zero_noise_is_identity():
    inst = synthetic_shift_harness(20, 3, "translation", 0.0, 0.0, random_state=0)
    assert_allclose(inst.paired.targets, inst.paired.sources)


def test_harness_translation_attribution_matches_vector():
    inst = synthetic_shift_harness(50, 4, "translation", 2.5, 0.0, random_state=1)
    attr = ground_truth_attribution(inst.paired.sources, inst.paired.targets)
    assert_allclose(attr.values, inst.translation**2, atol=1e-12)
    assert np.linalg.norm(inst.translation) == pytest.approx(2.5)


def test_harness_rotation_second_moment_rank_two():
    inst = synthetic_shift_harness(60, 2, "rotation", 40.0, 0.0, random_state=2)
    sm = compute_second_moment(
        DisplacementSet.paired(inst.paired.sources, inst.paired.targets)
    )
    eigvals = np.linalg.eigvalsh(sm.sigma)
    assert np.sum(eigvals > 1e-8 * sm.trace) == 2


def test_harness_validation():
    with pytest.raises(ValueError):
        synthetic_shift_harness(1, 3, "translation", 1.0)
    with pytest.raises(ValueError):
        synthetic_shift_harness(10, 3, "shear", 1.0)
    with pytest.raises(ValueError):
        synthetic_shift_harness(10, 1, "rotation", 1.0)


def test_harness_determinism():
    a = synthetic_shift_harness(30, 5, "affine", 0.5, 0.1, random_state=9)
    b = synthetic_shift_harness(30, 5, "affine", 0.5, 0.1, random_state=9)
    assert np.array_equal(a.paired.targets, b.paired.targets)


# ---------------------------------------------------------------------------
# select_displacements
# ---------------------------------------------------------------------------


def _paired(n=10, d=2, seed=0):
    rng = np.random.RandomState(seed)
    src = rng.randn(n, d)
    return PairedSample(src, src + 1.0, labels=np.arange(n))


def test_select_all_pairs_returns_none_remainder():
    paired = _paired(5)
    disp, remaining = select_displacements(paired, 5, random_state=0)
    assert remaining is None
    assert disp.n_sources == 5
    got = {tuple(row) for row in disp.sources}
    expected = {tuple(row) for row in paired.sources}
    assert got == expected


def test_select_single_pair_rank_bound():
    disp, remaining = select_displacements(_paired(10), 1, random_state=1)
    assert disp.n_sources == 1
    assert remaining.n == 9
    sm = compute_second_moment(disp)
    assert np.sum(np.linalg.eigvalsh(sm.sigma) > 1e-12) <= 1
    assert len(remaining.labels) == 9


def test_select_too_many_pairs_rejected():
    with pytest.raises(ValueError):
        select_displacements(_paired(4), 5, random_state=0)
    with pytest.raises(ValueError):
        select_displacements(_paired(4), 0, random_state=0)


def test_selected_pairs_removed_from_remainder():
    paired = _paired(12)
    disp, remaining = select_displacements(paired, 4, random_state=3)
    kept = {tuple(row) for row in remaining.sources}
    taken = {tuple(row) for row in disp.sources}
    assert not kept & taken
    assert len(kept) + len(taken) == 12


def test_identity_pairing_preserved_without_permute():
    paired = _paired(8)
    disp, _ = select_displacements(paired, 3, random_state=4, permute=False)
    assert_allclose(disp.coupling, np.eye(3) / 3)
    assert_allclose(disp.targets, disp.sources + 1.0)


def test_permuted_coupling_is_uniform_over_permutations():
    counts = {True: 0, False: 0}
    for seed in range(1000):
        disp, _ = select_displacements(_paired(6), 2, random_state=seed, permute=True)
        is_identity = disp.coupling[0, 0] > 0
        counts[is_identity] += 1
    # each 2x2 permutation should appear with probability ~1/2 (+- 5%)
    assert abs(counts[True] / 1000 - 0.5) < 0.05


def test_permuted_coupling_keeps_uniform_marginals():
    disp, _ = select_displacements(_paired(9), 4, random_state=5, permute=True)
    assert_allclose(disp.coupling.sum(axis=1), np.full(4, 0.25))
    assert_allclose(disp.coupling.sum(axis=0), np.full(4, 0.25))


# ---------------------------------------------------------------------------
# CSV ingestion
# ---------------------------------------------------------------------------


def test_numeric_csv_roundtrip(tmp_path):
    path = tmp_path / "points.csv"
    path.write_text("f0,f1\n0.5,1.5\n-1.0,2.0\n")
    cloud = read_point_csv(path)
    assert_allclose(cloud.points, [[0.5, 1.5], [-1.0, 2.0]])
    assert_allclose(cloud.weights, [0.5, 0.5])
    same = ingest_csv(path, schema="numeric")
    assert np.array_equal(same.points, cloud.points)


def test_numeric_csv_nan_row_names_line(tmp_path):
    path = tmp_path / "points.csv"
    path.write_text("f0,f1\n0.5,1.5\nNaN,2.0\n")
    with pytest.raises(DataError, match=":3"):
        read_point_csv(path)


def test_numeric_csv_bad_rows(tmp_path):
    path = tmp_path / "points.csv"
    path.write_text("f0,f1\n1.0\n")
    with pytest.raises(DataError, match="expected 2 fields"):
        read_point_csv(path)
    path.write_text("f0,f1\nx,y\n")
    with pytest.raises(DataError, match="unparsable"):
        read_point_csv(path)
    path.write_text("")
    with pytest.raises(DataError, match="empty"):
        read_point_csv(path)


def test_geo_csv_parses_and_ignores_extra_columns(tmp_path):
    path = tmp_path / "geo.csv"
    path.write_text(
        "id,timestamp,lat,lon,species\n"
        "a,2021-09-14,45.0,-80.0,gull\n"
        "a,2021-09-21T08:30:00,43.0,-80.5,gull\n"
    )
    records = read_geo_csv(path)
    assert len(records) == 2
    assert records[0].timestamp == dt.date(2021, 9, 14)
    assert records[1].timestamp == dt.date(2021, 9, 21)


def test_geo_csv_range_rejection(tmp_path):
    path = tmp_path / "geo.csv"
    path.write_text("id,timestamp,lat,lon\na,2021-09-14,91.0,-80.0\n")
    with pytest.raises(DataError, match="latitude"):
        read_geo_csv(path)


def test_geo_csv_missing_column(tmp_path):
    path = tmp_path / "geo.csv"
    path.write_text("id,timestamp,lat\na,2021-09-14,45.0\n")
    with pytest.raises(DataError, match="missing columns"):
        read_geo_csv(path)


def test_id_list(tmp_path):
    path = tmp_path / "ids.txt"
    path.write_text("bird1\n\nbird2\n")
    assert read_id_list(path) == ["bird1", "bird2"]
    path.write_text("\n")
    with pytest.raises(DataError):
        read_id_list(path)


def test_ingest_unknown_schema(tmp_path):
    with pytest.raises(ValueError):
        ingest_csv(tmp_path / "x.csv", schema="parquet")


# ---------------------------------------------------------------------------
# latlon_to_cartesian
# ---------------------------------------------------------------------------


def test_latlon_equator_prime_meridian():
    assert_allclose(latlon_to_cartesian(0.0, 0.0), [1.0, 0.0, 0.0], atol=1e-15)


def test_latlon_north_pole():
    assert_allclose(latlon_to_cartesian(90.0, 123.0), [0.0, 0.0, 1.0], atol=1e-12)


def test_chordal_distance_quarter_turn():
    a = latlon_to_cartesian(0.0, 0.0)
    b = latlon_to_cartesian(0.0, 90.0)
    assert np.linalg.norm(a - b) == pytest.approx(np.sqrt(2.0))
    # shorter than the great-circle arc pi/2
    assert np.linalg.norm(a - b) < np.pi / 2


def test_latlon_unit_norm_property():
    rng = np.random.RandomState(0)
    lat = rng.uniform(-90, 90, size=200)
    lon = rng.uniform(-180, 180, size=200)
    xyz = latlon_to_cartesian(lat, lon)
    assert np.abs(np.linalg.norm(xyz, axis=1) - 1.0).max() < 1e-12


def test_latlon_range_checks():
    with pytest.raises(DataError):
        latlon_to_cartesian(91.0, 0.0)
    with pytest.raises(DataError):
        latlon_to_cartesian(0.0, 181.0)


# ---------------------------------------------------------------------------
# weekly snapshots
# ---------------------------------------------------------------------------


def _rec(ind, day, lat, lon):
    return GeoRecord(ind, day, lat, lon)


def test_single_individual_two_weeks():
    records = [
        _rec("a", dt.date(2021, 9, 14), 45.0, -80.0),
        _rec("a", dt.date(2021, 9, 21), 43.0, -80.0),
    ]
    flows = weekly_snapshots(records)
    assert flows.sources.shape == (1, 3)
    assert flows.targets.shape == (1, 3)
    assert len(flows.weeks) == 2
    assert flows.guidance is None


def test_constant_position_survives_percentile_filter():
    records = []
    for w in range(4):
        records.append(_rec("a", dt.date(2021, 9, 14) + dt.timedelta(weeks=w), 45.0, -80.0))
    flows = weekly_snapshots(records)
    assert flows.sources.shape[0] == 3  # all three zero-length hops kept


def test_outlier_jump_removed():
    records = []
    day0 = dt.date(2021, 1, 4)
    # 101 individuals moving ~0.9 degrees per week; one makes a 10x jump
    for i in range(101):
        step = 0.9 if i else 9.0
        records.append(_rec(f"b{i:03d}", day0, 40.0, -70.0))
        records.append(_rec(f"b{i:03d}", day0 + dt.timedelta(weeks=1), 40.0 - step, -70.0))
    flows = weekly_snapshots(records)
    assert flows.sources.shape[0] == 100
    lengths = np.linalg.norm(flows.targets - flows.sources, axis=1)
    assert lengths.max() < 0.1  # ~0.9 deg of latitude in chordal units


def test_median_is_lower_middle_and_order_invariant():
    day = dt.date(2021, 9, 14)
    recs = [
        _rec("a", day, 40.0, -80.0),
        _rec("a", day + dt.timedelta(days=1), 44.0, -80.0),
        _rec("a", day + dt.timedelta(days=2), 41.0, -80.0),
        _rec("a", day + dt.timedelta(days=3), 48.0, -80.0),
        _rec("a", day + dt.timedelta(weeks=1), 30.0, -80.0),
    ]
    flows_fwd = weekly_snapshots(recs, random_state=0)
    flows_rev = weekly_snapshots(list(reversed(recs)), random_state=0)
    assert np.array_equal(flows_fwd.sources, flows_rev.sources)
    # lower-middle of [40, 41, 44, 48] is 41
    expected = latlon_to_cartesian(41.0, -80.0)
    assert np.abs(flows_fwd.sources[0] - expected).max() < 1e-3  # jitter is 1e-4


def test_guidance_ids_extracted_and_removed():
    records = []
    for ind in ("a", "b", "c"):
        for w in range(3):
            records.append(
                _rec(ind, dt.date(2021, 9, 14) + dt.timedelta(weeks=w), 45.0 - w, -80.0)
            )
    flows = weekly_snapshots(records, guidance_ids=["a"], random_state=1)
    assert flows.guidance is not None
    assert flows.guidance.n_sources == 2
    assert flows.sources.shape[0] == 4  # two hops each for b and c
    with pytest.raises(DataError):
        weekly_snapshots(records, guidance_ids=["zz"])


def test_window_filter():
    records = [
        _rec("a", dt.date(2021, 9, 14), 45.0, -80.0),
        _rec("a", dt.date(2021, 9, 21), 44.0, -80.0),
        _rec("a", dt.date(2022, 3, 1), 30.0, -80.0),
    ]
    flows = weekly_snapshots(records, window=(dt.date(2021, 9, 1), dt.date(2021, 10, 1)))
    assert flows.sources.shape[0] == 1
    with pytest.raises(DataError):
        weekly_snapshots(records, window=(dt.date(1999, 1, 1), dt.date(1999, 2, 1)))


def test_weekly_snapshot_jitter_determinism():
    records = [
        _rec("a", dt.date(2021, 9, 14), 45.0, -80.0),
        _rec("a", dt.date(2021, 9, 21), 43.0, -80.0),
    ]
    f1 = weekly_snapshots(records, random_state=7)
    f2 = weekly_snapshots(records, random_state=7)
    assert np.array_equal(f1.sources, f2.sources)
