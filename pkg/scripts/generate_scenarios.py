"""Regenerate the scenario files shipped under src/edgesched/scenarios/.

Usage: python3 scripts/generate_scenarios.py
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

OUT = Path(__file__).resolve().parents[1] / "src" / "edgesched" / "scenarios"

GB = 1024**3
MB = 1024**2

# seconds of work on the reference desktop
WORK = {
    "map_sort": 1.2,
    "reduce_merge": 2.0,
    "lgbm_prep": 1.0,
    "lgbm_train": 2.4,
    "lgbm_ensemble": 1.2,
    "video_split": 1.0,
    "video_detect": 2.6,
    "video_merge": 1.0,
    "mat_load": 0.6,
    "mat_mul": 1.6,
    "mat_inv": 1.8,
    "mat_mul2": 1.6,
    "mat_reduce": 0.8,
}
SLOPE_FRACTION = 1.0

# class -> (tier, mem bytes, slowdown vs desktop, $/s, failure rate /s, cached models)
# NX boards stand in for volunteer devices that leave often; the rest are
# managed infrastructure with small failure rates.
CLASSES = {
    "desktop_cloud": ("cloud", 32 * GB, 1.0, 0.00019, 1e-5, ["lgbm_base", "yolo"]),
    "desktop_edge": ("edge_cloud", 32 * GB, 1.0, 0.00012, 1e-5, ["lgbm_base", "yolo"]),
    "agx": ("edge_cloud", 16 * GB, 1.3, 0.00006, 5e-5, ["yolo"]),
    "nx": ("edge_cloud", 8 * GB, 1.6, 0.00004, 1.2e-1, ["yolo"]),
    "tx2": ("edge_cloud", 8 * GB, 2.0, 0.00003, 1e-4, []),
    "up2": ("cell_site", 8 * GB, 2.0, 0.00001, 2e-4, []),
    "agx_cell": ("cell_site", 16 * GB, 1.3, 0.00002, 1e-4, ["lgbm_base"]),
}

DEVICES = (
    [("cloud-0", "desktop_cloud"), ("edge-srv-0", "desktop_edge")]
    + [(f"agx-{i}", "agx") for i in range(2)]
    + [(f"nx-{i}", "nx") for i in range(7)]
    + [(f"tx2-{i}", "tx2") for i in range(4)]
    + [("ed-1", "up2"), ("ed-2", "agx_cell"), ("ed-3", "agx_cell")]
)
INITIATOR = ("init-0", "up2")

RTT = {
    ("edge_cloud", "edge_cloud"): 0.002,
    ("cloud", "edge_cloud"): 0.025,
    ("cell_site", "cell_site"): 0.035,
    ("cell_site", "edge_cloud"): 0.045,
    ("cell_site", "cloud"): 0.065,
    ("cloud", "cloud"): 0.002,
}


def tier_rtt(a: str, b: str) -> float:
    return RTT.get((a, b)) or RTT[(b, a)]


def build_fleet() -> dict:
    rng = np.random.default_rng(20240521)
    devices = []
    tiers = {}
    for dev_id, cls in DEVICES + [INITIATOR]:
        tier, mem, slow, cost, lam, models = CLASSES[cls]
        tiers[dev_id] = tier
        devices.append(
            {
                "device_id": dev_id,
                "tier": tier,
                "mem_total": mem,
                "cost_rate": cost,
                "failure_rate": lam,
                "cached_models": models,
                "interference": {
                    t: [round(w * slow, 6), round(w * slow * SLOPE_FRACTION, 6)] for t, w in WORK.items()
                },
                "initiator_capable": dev_id == INITIATOR[0],
            }
        )
    ids = sorted(tiers)
    links = []
    for i, a in enumerate(ids):
        for b in ids[i + 1 :]:
            base = tier_rtt(tiers[a], tiers[b])
            links.append({"src": a, "dst": b, "rtt_seconds": round(base * float(rng.uniform(0.8, 1.2)), 6)})
    return {"devices": devices, "links": links, "eta": 1.5}


def task(tid, ttype, mem_gb, base_in=0, out=None, model=None, model_size=0):
    doc = {"task_id": tid, "task_type": ttype, "mem_required": int(mem_gb * GB), "base_input_size": int(base_in)}
    if model is not None:
        doc["model_id"] = model
        doc["model_size"] = int(model_size)
    if out is not None:
        doc["output_size_hint"] = int(out)
    return doc


def build_dags() -> dict[str, dict]:
    mapreduce = {
        "app_id": "mapreduce_sort",
        "tasks": [task(f"map{i}", "map_sort", 3.0, base_in=2 * MB, out=2 * MB) for i in range(4)]
        + [task("reduce", "reduce_merge", 4.0, out=8 * MB)],
        "edges": [[f"map{i}", "reduce"] for i in range(4)],
    }
    lightgbm = {
        "app_id": "lightgbm",
        "tasks": [task("prep", "lgbm_prep", 1.0, base_in=4 * MB, out=3 * MB)]
        + [task(f"train{i}", "lgbm_train", 2.0, out=1 * MB, model="lgbm_base", model_size=20 * MB) for i in range(3)]
        + [task("ensemble", "lgbm_ensemble", 1.5, out=1 * MB)],
        "edges": [["prep", f"train{i}"] for i in range(3)] + [[f"train{i}", "ensemble"] for i in range(3)],
    }
    video = {
        "app_id": "video_analytics",
        "tasks": [task("split", "video_split", 1.0, base_in=12 * MB, out=4 * MB)]
        + [task(f"detect{i}", "video_detect", 2.5, out=256 * 1024, model="yolo", model_size=30 * MB) for i in range(3)]
        + [task("merge", "video_merge", 1.0, out=512 * 1024)],
        "edges": [["split", f"detect{i}"] for i in range(3)] + [[f"detect{i}", "merge"] for i in range(3)],
    }
    chain = ["mat_load", "mat_mul", "mat_inv", "mat_mul2", "mat_reduce"]
    matrix = {
        "app_id": "matrix_ops",
        "tasks": [
            task(f"m{i}_{name[4:]}", name, 1.5, base_in=6 * MB if i == 0 else 0, out=6 * MB if i < 4 else 1 * MB)
            for i, name in enumerate(chain)
        ],
        "edges": [[f"m{i}_{chain[i][4:]}", f"m{i + 1}_{chain[i + 1][4:]}"] for i in range(4)],
    }
    return {"mapreduce_sort": mapreduce, "lightgbm": lightgbm, "video_analytics": video, "matrix_ops": matrix}


def scenario(sid: str, dag: str, **extra) -> dict:
    doc = {
        "scenario_id": sid,
        "fleet": "fleet.json",
        "dag": f"dags/{dag}.json",
        "initiators": ["init-0"],
        "arrivals": {"count": 100, "horizon": 250.0},
        "weights": {"alpha": 0.4, "beta": 0.4, "gamma": 0.2, "phi": 0.01, "kappa": 3},
        "eta": 1.5,
        "probe_packet_bytes": 65536,
        "probe_interval_seconds": 5.0,
        "default_rtt_seconds": 0.05,
        "failures": False,
        "scheduler": "mtec",
        "seeds": list(range(10)),
    }
    doc.update(extra)
    return doc


def main() -> None:
    (OUT / "dags").mkdir(parents=True, exist_ok=True)
    with open(OUT / "fleet.json", "w", encoding="utf-8") as fh:
        json.dump(build_fleet(), fh, indent=1)
        fh.write("\n")
    for name, doc in build_dags().items():
        with open(OUT / "dags" / f"{name}.json", "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=1)
            fh.write("\n")
    scenarios = {
        "default": scenario("default", "mapreduce_sort"),
        "lightgbm": scenario("lightgbm", "lightgbm", model_source="cloud-0"),
        "video_traffic": scenario(
            "video_traffic",
            "video_analytics",
            model_source="cloud-0",
            traffic={
                "jitter_sigma": 0.1,
                "jitter_interval": 2.0,
                "links": [
                    {"src": a, "dst": b, "schedule": [[60.0, 0.4], [180.0, 1.0]]}
                    for a, b in [("init-0", "ed-1"), ("init-0", "ed-2"), ("init-0", "ed-3"), ("ed-1", "ed-2")]
                ],
            },
        ),
        "matrix": scenario("matrix", "matrix_ops"),
    }
    for name, doc in scenarios.items():
        with open(OUT / f"{name}.json", "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=1)
            fh.write("\n")


if __name__ == "__main__":
    main()
