"""Holomorphic curvature, K(y, Jy) and Kahler residuals over the metric catalog."""

import argparse
import json
from dataclasses import asdict, dataclass

import numpy as np

from flab.bridge import apply_J
from flab.complex_engine import complex_tensors, kahler_residuals
from flab.metric import CATALOG, catalog_get, sample_points
from flab.partials import EvalPoint
from flab.real_engine import flag_curvature, real_tensors


@dataclass
class SurveyConfig:
    n: int = 2
    points: int = 200
    seed: int = 0
    out: str = "curvature_survey.json"


def survey(cfg):
    rows = {}
    for name in CATALOG:
        spec = catalog_get(name, (cfg.n,))
        x, y = sample_points(spec, np.random.default_rng(cfg.seed), cfg.points)
        H = complex_tensors(spec, x, y).H.real
        K = flag_curvature(real_tensors(spec, x, y), apply_J(y))
        strong, weak = kahler_residuals(spec, EvalPoint(x, y))
        rows[name] = {"H_min": float(H.min()), "H_max": float(H.max()),
                      "max_H_minus_K": float(np.max(np.abs(H - K))),
                      "strong_kahler": float(strong.max()), "weak_kahler": float(weak.max())}
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    for f, v in asdict(SurveyConfig()).items():
        ap.add_argument(f"--{f}", type=type(v), default=v)
    cfg = SurveyConfig(**vars(ap.parse_args()))
    rows = survey(cfg)
    with open(cfg.out, "w") as fh:
        json.dump({"config": asdict(cfg), "metrics": rows}, fh, indent=2)
    for name, r in rows.items():
        print(f"{name:28s} H in [{r['H_min']:+.4f}, {r['H_max']:+.4f}]  "
              f"|H - K| {r['max_H_minus_K']:.1e}  strong Kahler {r['strong_kahler']:.1e}")


if __name__ == "__main__":
    main()
