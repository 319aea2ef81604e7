"""Temporal CV on planted-signal and pure-noise synthetic data.

With outcome stage = D3 - 1 the searched weights should beat equal weights in
every fold. With random outcomes the mean held-out gain should sit near zero.
"""

from __future__ import annotations

import argparse
import statistics

import numpy as np

from critval.dataset import DIMS, AgentType, ConversationRecord, Dataset, TrustProxy, TrustStage
from critval.weights import CVConfig, SearchConfig, temporal_cv


def synthetic(n: int, seed: int, planted: bool) -> Dataset:
    rng = np.random.default_rng(seed)
    scores = rng.integers(1, 6, size=(n, 7))
    stages = scores[:, 2] - 1 if planted else rng.integers(0, 6, size=n)
    recs = tuple(
        ConversationRecord(f"c{i:03d}", AgentType.AI, dict(zip(DIMS, map(int, scores[i]))),
                           TrustProxy(TrustStage(f"T{int(stages[i])}")), chrono_index=i)
        for i in range(n))
    return Dataset(recs, None, "synthetic")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=40)
    ap.add_argument("--seeds", type=int, default=100)
    ap.add_argument("--folds", type=int, default=4)
    ap.add_argument("--step", type=int, default=10)
    args = ap.parse_args()
    cv, search = CVConfig(folds=args.folds), SearchConfig(step=args.step)
    for planted in (True, False):
        deltas, wins, folds = [], 0, 0
        for seed in range(args.seeds):
            res = temporal_cv(synthetic(args.n, seed, planted), cv, search)
            deltas.append(res.mean_delta)
            wins += res.wins
            folds += res.n_valid
        label = "planted" if planted else "noise"
        print(f"{label:8s} mean delta rho {statistics.fmean(deltas):+.4f} "
              f"(sd {statistics.stdev(deltas):.4f}); trained wins {wins}/{folds} folds")


if __name__ == "__main__":
    main()
