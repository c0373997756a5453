"""Smoke test of the actihist Python module.

Build and install first, for example with
    pip install --no-build-isolation ./crates/python
then run
    python python/smoke_test.py
"""

import math
import os
import tempfile

import actihist


def wear_day(level):
    day = [0] * 1440
    for m in range(8 * 60, 22 * 60):
        day[m] = level + (m % 13) * 20
    return day


def main():
    grid = actihist.BinGrid()
    assert len(grid) == 81 and grid.edges[-1] == 15000.0

    profiles = [
        actihist.RawProfile("a", "2024-03-04T00:00", wear_day(300) * 7),
        actihist.RawProfile("b", "2024-03-04T00:00", wear_day(420) * 7),
        actihist.RawProfile("c", "2024-03-04T00:00", wear_day(360) * 2 + [0] * 1440 * 5),
    ]
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "profiles.csv")
        actihist.write_profiles(path, profiles)
        back = actihist.read_profiles(path)
        assert [p.subject_id for p in back] == ["a", "b", "c"]

    cleaned, report = actihist.clean_cohort(profiles, {"zero_block_len": 10})
    assert report["n_valid"] == 2
    assert [c.valid for c in cleaned] == [True, True, False]
    z = cleaned[0].hist1d(grid)
    assert abs(sum(z) - 1.0) < 1e-12
    weekday, weekend = cleaned[0].hist_split(grid)
    assert abs(sum(weekday) - 1.0) < 1e-12 and abs(sum(weekend) - 1.0) < 1e-12

    cohort, truth = actihist.Cohort.simulate(n=200, seed=7, grid=grid)
    assert len(cohort) == 200 and "fat_mass" in cohort.columns()

    model = actihist.fit("+hist", cohort)
    f = model.coefficient_function()
    assert len(f["points"]) == 81 and abs(f["estimate"][0]) < 1e-8
    band = model.band(draws=500, seed=3)
    assert all(lo <= hi for lo, hi in zip(band["lower"], band["upper"]))

    scenario = actihist.default_scenarios()[0]
    change = model.percent_change(cohort, scenario, draws=500, seed=3)
    ci = change["interval"]
    assert ci["lower"] <= ci["mean"] <= ci["upper"]

    null = dict(scenario, minutes_moved=0.0)
    zero = model.percent_change(cohort, null, draws=200, seed=3)["interval"]
    assert zero["lower"] == zero["upper"] == 0.0

    table = actihist.compare(cohort, models=["base", "+hist", "+cpm"], seed=2)
    assert [row["model"] for row in table][0] in actihist.presets()
    assert all(row["rmspe"] is None or math.isfinite(row["rmspe"]) for row in table)

    try:
        actihist.fit("no such model", cohort)
    except actihist.ActihistError:
        pass
    else:
        raise AssertionError("unknown preset accepted")

    print(f"ok: {model!r}, scenario 1 change {ci['mean']:.2f}%")


if __name__ == "__main__":
    main()
