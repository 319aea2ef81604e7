"""Grid search over the weight simplex on the built-in fixture at several step sizes."""

from __future__ import annotations

import argparse
import time

from critval.analysis import prepare
from critval.dataset import DIMS, builtin_phase1
from critval.weights import SearchConfig, search_weights


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--steps", default="50,25,20,10,5", help="comma list of grid steps")
    args = ap.parse_args()
    data = prepare(builtin_phase1(), "trust").data
    print(f"{'step':>4}  {'candidates':>10}  {'tied':>5}  {'rho':>6}  {'p':>6}  weights  (seconds)")
    for step in (int(s) for s in args.steps.split(",")):
        t0 = time.perf_counter()
        res = search_weights(data, SearchConfig(step=step))
        w = " ".join(f"{d.value}={int(res.scheme.weights[d])}" for d in DIMS)
        print(f"{step:>4}  {res.n_candidates:>10}  {res.n_tied_best:>5}  {res.evaluation.rho:6.3f}  "
              f"{res.evaluation.p:6.3f}  {w}  ({time.perf_counter() - t0:.2f})")


if __name__ == "__main__":
    main()
