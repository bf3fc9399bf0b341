"""Compare the compiled metric kernels with the pure-Python fallback.

    python benchmarks/bench_kernels.py --topics 200 --repeat 3

Times the full 23-measure panel plus infAP over random topics for each
backend and checks that both produce the same numbers.
"""

from __future__ import annotations

import argparse
import importlib
import logging
import time

import numpy as np

from metriclab._core import _pykernels
from metriclab.metrics import TW_PANEL, TopicEval, parse_metric

logger = logging.getLogger(__name__)


def make_topics(n_topics: int, max_len: int, seed: int) -> list[TopicEval]:
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n_topics):
        n = int(rng.integers(max_len // 2, max_len + 1))
        docs = [f"d{i}" for i in range(n + 100)]
        qrels = {d: int(rng.integers(-2, 5)) for d in docs if rng.random() < 0.6}
        qrels[docs[0]] = max(qrels.get(docs[0], 1), 1)
        ranked = [docs[i] for i in rng.permutation(len(docs))[:n]]
        out.append(TopicEval(ranked, qrels, g_max=4))
    return out


def _calls(te: TopicEval, spec):
    f, k = spec.family, spec.cutoff
    if f == "P":
        return "precision_at", (te.codes, k)
    if f == "R":
        return "recall_at", (te.codes, k, te.R)
    if f == "AP":
        return "average_precision", (te.codes, k, te.R)
    if f == "nDCG":
        return "ndcg_at", (te.codes, te.ideal, k)
    if f == "RR":
        return "reciprocal_rank", (te.codes, k)
    if f == "RPrec":
        return "precision_at", (te.codes, te.R)
    if f == "bpref":
        return "bpref", (te.codes, k, te.R, te.N)
    if f == "ERR":
        return "err_at", (te.codes, k, te.g_max)
    if f == "RBP":
        return "rbp", (te.codes, spec.p, k, te.g_max, spec.graded)
    return "inf_ap", (te.codes, k, te.R, spec.epsilon)


def run_panel(module, work) -> list[float]:
    return [getattr(module, name)(*args) for name, args in work]


def bench(module, work, repeat: int) -> tuple[float, list[float]]:
    best = float("inf")
    values = []
    for _ in range(repeat):
        start = time.perf_counter()
        values = run_panel(module, work)
        best = min(best, time.perf_counter() - start)
    return best, values


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--topics", type=int, default=200)
    parser.add_argument("--max-len", type=int, default=1000)
    parser.add_argument("--repeat", type=int, default=3)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    specs = list(TW_PANEL) + [parse_metric("infAP@1000")]
    topics = make_topics(args.topics, args.max_len, args.seed)
    work = [_calls(te, s) for te in topics for s in specs]
    logger.info("%d topics x %d measures = %d kernel calls", len(topics), len(specs), len(work))

    t_py, v_py = bench(_pykernels, work, args.repeat)
    logger.info("python  %8.3f s", t_py)
    try:
        ck = importlib.import_module("metriclab._core._ckernels")
    except ImportError:
        logger.info("cython  (extension not built)")
        return 0
    t_c, v_c = bench(ck, work, args.repeat)
    logger.info("cython  %8.3f s   speedup x%.1f", t_c, t_py / t_c if t_c else float("inf"))
    mismatches = sum(a != b for a, b in zip(v_py, v_c))
    logger.info("bit-identical results: %s", "yes" if mismatches == 0 else f"no ({mismatches} differ)")
    return 1 if mismatches else 0


if __name__ == "__main__":
    raise SystemExit(main())
