import csv
import datetime as dt

import numpy as np
import pytest


@pytest.fixture
def corridor_geo_csv(tmp_path):
    """Synthetic migration corridor: individuals flying south along one
    meridian band, observed weekly through autumn."""
    rng = np.random.RandomState(0)
    rows = []
    start = dt.date(2021, 9, 13)  # a Monday
    for b in range(24):
        lon = -80.0 + rng.uniform(-3.0, 3.0)
        lat0 = 45.0 + rng.uniform(-2.0, 2.0)
        for week in range(6):
            day = start + dt.timedelta(weeks=week, days=int(rng.randint(0, 5)))
            lat = lat0 - 2.0 * week + rng.normal(0.0, 0.1)
            rows.append(
                (f"bird{b:02d}", day.isoformat(), round(lat, 5),
                 round(lon + rng.normal(0.0, 0.05), 5))
            )
    path = tmp_path / "corridor.csv"
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "timestamp", "lat", "lon"])
        writer.writerows(rows)
    ids = tmp_path / "guidance_ids.txt"
    ids.write_text("bird00\nbird01\nbird02\nbird03\n")
    return path, ids
