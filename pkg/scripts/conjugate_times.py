"""First conjugate times of seeded unit geodesics on Fubini-Study against the diameter bound."""

import argparse
from dataclasses import asdict, dataclass

import numpy as np

from flab.harness import verify_diameter
from flab.metric import catalog_get


@dataclass
class ConjugateConfig:
    max_n: int = 2
    count: int = 50
    seed: int = 0
    out: str = "conjugate_times.csv"


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    for f, v in asdict(ConjugateConfig()).items():
        ap.add_argument(f"--{f}", type=type(v), default=v)
    cfg = ConjugateConfig(**vars(ap.parse_args()))
    lines = ["n,geodesic,t_conj,bound"]
    for n in range(1, cfg.max_n + 1):
        rep = verify_diameter(catalog_get("fubini_study", (n,)), 1.0, count=cfg.count, seed=cfg.seed)
        t = np.array([row["t_conj"] for row in rep.rows])
        bound = rep.params["bound"]
        lines += [f"{n},{k},{v:.12g},{bound:.12g}" for k, v in enumerate(t)]
        print(f"FS({n}): {len(t)} geodesics, t_conj in [{t.min():.10f}, {t.max():.10f}], "
              f"bound {bound:.6f}, {rep.status}")
    with open(cfg.out, "w") as fh:
        fh.write("\n".join(lines) + "\n")


if __name__ == "__main__":
    main()
