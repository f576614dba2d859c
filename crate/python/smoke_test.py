"""Smoke test for the frailwatch Python extension.

Build and install first:

    pip install --no-build-isolation ./crates/py
    python python/smoke_test.py
"""

import math
import tempfile
from pathlib import Path

import frailwatch as fw


def main():
    assert fw.feature_label(31) == "V(L-MPO)", fw.feature_label(31)
    assert len(fw.ACTIVITIES) == 5
    assert fw.score_fdr([0.0, 2.0], [4.0, 6.0]) == 8.0
    assert abs(fw.cohens_d([0.0, 2.0], [4.0, 6.0]) + 2 * math.sqrt(2)) < 1e-12

    ds = fw.Dataset.synthesize(7, participants=["P3"], duration_scale=0.4)
    assert ds.participants == ["P3"] and len(ds) > 0
    header = ds.records()[0]
    assert header["participant"] == "P3" and header["frames"] > 0

    with tempfile.TemporaryDirectory() as tmp:
        log = Path(tmp) / "p3.jsonl"
        ds.write_log(log)
        again = fw.Dataset.load(log)
        assert len(again) == len(ds)

        win = ds.featurize(300.0)
        assert len(win) > len(ds)
        csv_path = Path(tmp) / "features.csv"
        win.write_csv(csv_path)
        assert len(fw.Windows.read_csv(csv_path)) == len(win)

    matrix = win.matrix()
    assert len(matrix[0]) == len(fw.Windows.columns()) == 85
    assert set(win.health()) <= {"normal", "weak"}

    result = win.evaluate("P3", seed=7, search_subsets=False)
    day = next(level for level in result["levels"] if level["level"] == "day")
    print(f"P3 day-level F1-micro {day['f1_micro']:.3f} over {day['n']} days")
    assert 0.0 <= day["f1_micro"] <= 1.0

    ranking = win.rank_features("P3", seed=7, methods=["fdr", "mi"])
    top = ranking.ordered()[:5]
    print("top features:", [f"{f} {fw.feature_label(int(f[1:]))}" for f in top])
    assert len(ranking) == 66
    assert ranking.scores()[0][1] >= ranking.scores()[-1][1]

    model = fw.BayesNet.fit(win, [31, 34], participant="P3")
    row = [0.0 if v is None else v for v in matrix[0]]
    post = model.posterior_health("read", row)
    assert abs(sum(post) - 1.0) < 1e-9
    clone = fw.BayesNet.from_json(model.to_json())
    assert clone.posterior_health("read", row) == post
    assert model.predict_health("read", row) in ("normal", "weak")

    report = win.anomaly("P3")
    print(f"anomaly: {len(report['days'])} days, d = {report['cohens_d']}")
    assert report["features"] == fw.GENERIC_TOP5

    empty = {"x": 0, "y": 0, "w": 0, "h": 0}
    still_q = {"movement_pixel_count": 0, "movement_bbox": empty, "mean_flow_magnitude": 0.0}
    frames = []
    for i in range(50):
        moving = i % 10 < 5
        box = {"x": 22, "y": 5, "w": 10, "h": 10} if moving else empty
        q0 = {"movement_pixel_count": 60, "movement_bbox": box, "mean_flow_magnitude": 1.5} if moving else still_q
        frames.append(
            {
                "timestamp": 0.1 * i,
                "dt": 0.1,
                "human_present": True,
                "human_bbox": {"x": 0, "y": 0, "w": 40, "h": 80},
                "human_pixel_count": 2000,
                "movement_pixel_count": 60 if moving else 0,
                "movement_bbox": box,
                "mean_flow_magnitude": 1.5 if moving else 0.0,
                "quadrant_stats": [q0, still_q, still_q, still_q],
            }
        )
    env = {
        "lighting_luma": 120.0,
        "time_of_day": "T2",
        "weather_suitable": True,
        "object_likelihoods": [0.05] * 20,
    }
    values = fw.extract_features(frames, env, 0.0, 5.0)
    assert len(values) == 85 and values[0] == 120.0

    assert fw.cli(["--help"]) == 0
    print("smoke test passed")


if __name__ == "__main__":
    main()
