#!/usr/bin/env python3
"""Regenerate the subject fixtures from fixtures/normative_model.csv.

Volumes are placed at chosen SDS targets under the normative model, so the
fixtures stay consistent with the model they are scored against.

    neurodx synth-model --seed 7 --out fixtures/normative_model.csv
    python3 tools/make_fixtures.py fixtures
"""

import argparse
import csv
import json
import random
from collections import defaultdict
from pathlib import Path

CLASSES = ["CN", "AD", "bvFTD", "nfvPPA", "svPPA"]

# region -> SDS, or region -> (left, right)
PROFILES = {
    "CN": {},
    "AD": {
        "hippocampus": (-3.4, -1.5),
        "entorhinal_cortex": (-2.5, -2.2),
        "parahippocampal_gyrus": (-1.8, -1.6),
        "amygdala": (-2.0, -1.7),
        "precuneus": (-1.9, -1.7),
        "posterior_cingulate_gyrus": (-1.7, -1.5),
        "inferior_temporal_gyrus": (-1.4, -1.3),
        "temporal_horn": (2.6, 2.1),
        "lateral_ventricle": (1.8, 1.7),
    },
    "bvFTD": {
        "superior_frontal_gyrus": (-2.1, -2.0),
        "middle_frontal_gyrus": (-2.2, -1.9),
        "inferior_frontal_gyrus": (-1.9, -1.8),
        "orbitofrontal_cortex": (-3.0, -2.8),
        "precentral_gyrus": (-1.4, -1.3),
        "frontal_pole": (-2.4, -2.1),
        "anterior_cingulate_gyrus": (-2.9, -2.6),
        "anterior_insula": (-2.6, -2.3),
        "caudate": (-1.5, -1.4),
        "lateral_ventricle": (2.0, 1.9),
    },
    "nfvPPA": {
        "inferior_frontal_gyrus": (-3.1, -0.6),
        "precentral_gyrus": (-2.0, -0.5),
        "anterior_insula": (-1.9, -0.4),
        "posterior_insula": (-1.8, -0.3),
        "middle_frontal_gyrus": (-1.4, -0.4),
        "supramarginal_gyrus": (-1.3, -0.2),
    },
    "svPPA": {
        "temporal_pole": (-3.6, -1.2),
        "fusiform_gyrus": (-2.7, -0.9),
        "inferior_temporal_gyrus": (-2.5, -0.8),
        "middle_temporal_gyrus": (-1.9, -0.6),
        "amygdala": (-2.4, -0.9),
        "hippocampus": (-1.7, -0.7),
        "temporal_horn": (2.9, 0.8),
    },
}


def load_model(path):
    curves = defaultdict(list)
    with open(path, newline="") as f:
        for row in csv.DictReader(f):
            key = (row["structure"], row["hemisphere"], row["sex"])
            curves[key].append((float(row["age_years"]), float(row["mu"]), float(row["sigma"])))
    for knots in curves.values():
        knots.sort()
    return curves


def interpolate(knots, age):
    if age <= knots[0][0]:
        return knots[0][1:]
    if age >= knots[-1][0]:
        return knots[-1][1:]
    for (a0, m0, s0), (a1, m1, s1) in zip(knots, knots[1:]):
        if a0 <= age <= a1:
            w = (age - a0) / (a1 - a0)
            return m0 + w * (m1 - m0), s0 + w * (s1 - s0)
    raise ValueError(age)


def target(profile, name, hemisphere):
    v = profile.get(name, 0.0)
    if isinstance(v, tuple):
        return v[0] if hemisphere == "left" else v[1]
    return v


def make_subject(subject_id, cls, age, sex, icv, curves, rng=None):
    profile = PROFILES[cls]
    regions = []
    for (name, hemisphere, s), knots in sorted(curves.items()):
        if s != sex:
            continue
        mu, sigma = interpolate(knots, age)
        sds = target(profile, name, hemisphere)
        if rng is not None:
            sds += rng.gauss(0.0, 0.35)
        regions.append({"name": name, "hemisphere": hemisphere, "volume_mm3": round((mu + sds * sigma) * icv, 2)})
    return {"subject_id": subject_id, "age_years": age, "sex": sex, "icv_mm3": icv, "regions": regions}


def write_json(path, doc):
    path.write_text(json.dumps(doc, indent=2) + "\n")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("out_dir", type=Path)
    ap.add_argument("--model", type=Path)
    ap.add_argument("--seed", type=int, default=2024)
    args = ap.parse_args()
    out = args.out_dir
    curves = load_model(args.model or out / "normative_model.csv")

    curated = {"CN": (68.0, "F"), "AD": (74.0, "M"), "bvFTD": (62.0, "M"), "nfvPPA": (70.0, "F"), "svPPA": (65.0, "F")}
    for cls, (age, sex) in curated.items():
        icv = 1.3e6 if sex == "F" else 1.4e6
        write_json(out / f"{cls.lower()}.json", make_subject(f"{cls.lower()}_curated", cls, age, sex, icv, curves))

    rng = random.Random(args.seed)
    cases_dir = out / "cases"
    cases_dir.mkdir(parents=True, exist_ok=True)
    manifest = []
    for i in range(20):
        cls = CLASSES[i % 5]
        sex = "F" if i % 2 == 0 else "M"
        age = float(rng.randint(55, 80))
        icv = round((1.3e6 if sex == "F" else 1.4e6) * rng.uniform(0.94, 1.06), 1)
        sid = f"case_{i + 1:02d}"
        write_json(cases_dir / f"{sid}.json", make_subject(sid, cls, age, sex, icv, curves, rng))
        manifest.append({"subject_id": sid, "gold": cls, "volumes_path": f"cases/{sid}.json"})
    (out / "manifest.jsonl").write_text("".join(json.dumps(m) + "\n" for m in manifest))


if __name__ == "__main__":
    main()
