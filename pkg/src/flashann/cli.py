"""Command-line entry points: gen / build / search / eval / bench / grid / kernel-bench.

Options may come from a JSON config file (--config); explicit flags win over
config values.  The FLASH_ANN_KERNEL environment variable overrides any
--kernel choice.  Exit codes: 0 success, 2 bad config, 3 bad file format,
4 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import time

import numpy as np

from . import core, evaluation, serialize
from .builder import STRATEGIES, BuildResult, StrategyParams, build
from .dataset import (
    VectorDataset,
    brute_force_knn,
    gen_synthetic,
    load_fvecs,
    load_ivecs,
    save_fvecs,
    save_ivecs,
)
from .errors import ConfigError, FlashAnnError
from .graph import BuildParams, check_invariants


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; explicit flags override it")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)


def _add_build_opts(p: argparse.ArgumentParser) -> None:
    p.add_argument("--strategy", choices=STRATEGIES, default="exact")
    p.add_argument("--dataset", help="path to a .fvecs dataset")
    p.add_argument("--synthetic", help="n,dim,clusters to generate instead of loading")
    p.add_argument("--C", type=int, default=1024, help="candidate width during construction")
    p.add_argument("--R", type=int, default=32, help="max neighbors per upper layer (2R at base)")
    p.add_argument("--sample-size", type=int, default=100_000)
    p.add_argument("--M-PQ", dest="m_pq", type=int, default=16)
    p.add_argument("--L-PQ", dest="l_pq", type=int, default=8)
    p.add_argument("--L-SQ", dest="l_sq", type=int, default=8)
    p.add_argument("--alpha", type=float, default=0.9)
    p.add_argument("--M-F", dest="m_f", type=int, default=16)
    p.add_argument("--d-F", dest="d_f", type=int, default=None)
    p.add_argument("--kernel", default="auto",
                   help="auto|scalar|vector128|vector256|vector512 (env FLASH_ANN_KERNEL overrides)")


def _apply_config(args: argparse.Namespace, parser: argparse.ArgumentParser) -> argparse.Namespace:
    """Config file supplies defaults; anything passed on the command line wins."""
    if not getattr(args, "config", None):
        return args
    try:
        with open(args.config) as f:
            cfg = json.load(f)
    except FileNotFoundError as e:
        raise ConfigError(f"config file not found: {args.config}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"invalid JSON in {args.config}: {e}") from e
    cli_tokens = sys.argv[2:]
    for key, value in cfg.items():
        dest = key.replace("-", "_")
        if not hasattr(args, dest):
            raise ConfigError(f"unknown config key {key!r}")
        flag = "--" + key.replace("_", "-")
        explicit = any(t == flag or t.startswith(flag + "=") for t in cli_tokens)
        if not explicit:
            setattr(args, dest, value)
    return args


def _load_dataset(args) -> VectorDataset:
    if getattr(args, "synthetic", None):
        try:
            n, dim, clusters = (int(x) for x in args.synthetic.split(","))
        except ValueError as e:
            raise ConfigError("--synthetic expects n,dim,clusters") from e
        return gen_synthetic(n, dim, clusters, args.seed)
    if not getattr(args, "dataset", None):
        raise ConfigError("either --dataset or --synthetic is required")
    return load_fvecs(args.dataset)


def _strategy_params(args) -> StrategyParams:
    return StrategyParams(m_pq=args.m_pq, l_pq=args.l_pq, l_sq=args.l_sq,
                          alpha=args.alpha, m_f=args.m_f, d_f=args.d_f)


def _do_build(args, dataset: VectorDataset) -> BuildResult:
    params = BuildParams(C=args.C, R=args.R, seed=args.seed, threads=args.threads)
    return build(dataset, args.strategy, params, _strategy_params(args),
                 sample_size=args.sample_size, kernel=args.kernel)


def cmd_gen(args) -> int:
    ds = gen_synthetic(args.n, args.dim, args.clusters, args.seed)
    save_fvecs(ds, args.out)
    print(f"wrote {ds.n} x {ds.dim} vectors to {args.out}")
    if args.queries_out:
        rng = np.random.default_rng(args.seed + 1)
        qidx = rng.choice(ds.n, size=min(args.queries, ds.n), replace=False)
        queries = VectorDataset(ds.data[qidx] + rng.normal(0, args.query_noise,
                                                           (len(qidx), ds.dim)).astype(np.float32))
        save_fvecs(queries, args.queries_out)
        print(f"wrote {queries.n} queries to {args.queries_out}")
        if args.gt_out:
            gt = brute_force_knn(ds, queries, args.gt_k)
            save_ivecs(gt.ids, args.gt_out)
            print(f"wrote exact top-{args.gt_k} ids to {args.gt_out}")
    return 0


def cmd_build(args) -> int:
    dataset = _load_dataset(args)
    res = _do_build(args, dataset)
    bad = check_invariants(res.graph, res.provider, heuristic_sample=0)
    serialize.save_index(args.out, res.graph, res.provider, dataset)
    report = {
        "strategy": args.strategy,
        "n": dataset.n,
        "dim": dataset.dim,
        "C": args.C,
        "R": args.R,
        "threads": args.threads,
        "seed": args.seed,
        "coding_seconds": res.coding_seconds,
        "graph_seconds": res.graph_seconds,
        "total_seconds": res.total_seconds,
        "counters": res.counters,
        "invariant_violations": bad,
        "core": core.core_name(),
    }
    print(json.dumps(report, indent=2, default=float))
    if args.report:
        with open(args.report, "w") as f:
            json.dump(report, f, indent=2, default=float)
    return 0


def cmd_search(args) -> int:
    g, provider, dataset = serialize.load_index(args.index)
    queries = load_fvecs(args.queries)
    params = evaluation.SearchParams(ef=args.ef, k=args.k, rerank_depth=args.rerank_depth)
    ids, dists, _ = evaluation.search_batch(g, provider, queries.data, params,
                                            threads=args.threads, kernel=args.kernel)
    if args.out:
        save_ivecs(ids.astype(np.int32), args.out)
        print(f"wrote top-{args.k} ids for {queries.n} queries to {args.out}")
    else:
        for qi in range(queries.n):
            row = ", ".join(f"{i}:{d:.4g}" for i, d in zip(ids[qi], dists[qi]) if i >= 0)
            print(f"query {qi}: {row}")
    return 0


def _parse_ef_grid(spec: str) -> list[int]:
    out = []
    for tok in spec.split(","):
        tok = tok.strip()
        if not tok:
            continue
        out.append(int(tok))
    if not out:
        raise ConfigError("empty --ef-grid")
    return out


def cmd_eval(args) -> int:
    g, provider, dataset = serialize.load_index(args.index)
    queries = load_fvecs(args.queries)
    gt_ids = load_ivecs(args.gt)
    if gt_ids.shape[0] != queries.n:
        raise ConfigError("ground truth rows do not match query count")
    if gt_ids.shape[1] < args.k:
        raise ConfigError(f"ground truth depth {gt_ids.shape[1]} < k={args.k}")
    gt = _gt_with_dists(dataset, queries, gt_ids)
    print(f"note: {evaluation.RECALL_FORMULA}")
    reports = evaluation.evaluate(
        g, provider, dataset, queries.data, gt, _parse_ef_grid(args.ef_grid),
        params_k=args.k, rerank_depth=args.rerank_depth, threads=args.threads,
        kernel=args.kernel, strategy=g.strategy,
    )
    evaluation.write_csv(reports, args.out)
    if args.json_out:
        evaluation.write_json_summary(reports, args.json_out)
    print(f"wrote {len(reports)} rows to {args.out}")
    return 0


def _gt_with_dists(dataset: VectorDataset, queries: VectorDataset, gt_ids: np.ndarray):
    from .dataset import GroundTruth

    dists = np.empty(gt_ids.shape, dtype=np.float64)
    for qi in range(gt_ids.shape[0]):
        q = queries.data[qi].astype(np.float64)
        d = dataset.data[gt_ids[qi]].astype(np.float64) - q
        dists[qi] = (d * d).sum(1)
    return GroundTruth(k=gt_ids.shape[1], ids=gt_ids, dists=dists)


def cmd_bench(args) -> int:
    dataset = _load_dataset(args)
    strategies = [s.strip() for s in args.strategies.split(",") if s.strip()]
    for s in strategies:
        if s not in STRATEGIES:
            raise ConfigError(f"unknown strategy {s!r}")
    rng = np.random.default_rng(args.seed + 1)
    qidx = rng.choice(dataset.n, size=min(args.queries, dataset.n), replace=False)
    queries = dataset.data[qidx] + rng.normal(0, 0.1, (len(qidx), dataset.dim)).astype(np.float32)
    queries = np.ascontiguousarray(queries, dtype=np.float32)
    gt = brute_force_knn(dataset, VectorDataset(queries), args.k)
    ef_grid = _parse_ef_grid(args.ef_grid)

    print(f"note: {evaluation.RECALL_FORMULA}")
    all_reports = []
    builds: dict[str, BuildResult] = {}
    for s in strategies:
        t0 = time.perf_counter()
        sargs = argparse.Namespace(**vars(args))
        sargs.strategy = s
        res = _do_build(sargs, dataset)
        builds[s] = res
        print(f"[{s}] coding {res.coding_seconds:.2f}s + graph {res.graph_seconds:.2f}s "
              f"= {res.total_seconds:.2f}s (wall {time.perf_counter() - t0:.2f}s)")
        rerank = args.rerank_depth if s != "exact" else 0
        reports = evaluation.evaluate(
            res.graph, res.provider, dataset, queries, gt, ef_grid,
            params_k=args.k, rerank_depth=rerank, threads=args.threads,
            kernel=args.kernel, strategy=s, build_seconds=res.total_seconds,
            coding_seconds=res.coding_seconds, graph_seconds=res.graph_seconds,
        )
        all_reports.extend(reports)
    base = builds.get("exact")
    print(f"{'strategy':<8} {'coding_s':>9} {'graph_s':>9} {'total_s':>9} {'speedup':>8} "
          f"{'best_recall':>12}")
    for s in strategies:
        res = builds[s]
        ref = base.total_seconds if base is not None else res.total_seconds
        ratio = ref / res.total_seconds if res.total_seconds > 0 else float("inf")
        best = max(r.recall for r in all_reports if r.strategy == s)
        print(f"{s:<8} {res.coding_seconds:>9.2f} {res.graph_seconds:>9.2f} "
              f"{res.total_seconds:>9.2f} {ratio:>8.2f} {best:>12.4f}")
    evaluation.write_csv(all_reports, args.out)
    print(f"wrote {len(all_reports)} rows to {args.out}")
    return 0


def cmd_grid(args) -> int:
    """Sweep projection width and subspace count for the compact strategy."""
    dataset = _load_dataset(args)
    rng = np.random.default_rng(args.seed + 1)
    qidx = rng.choice(dataset.n, size=min(args.queries, dataset.n), replace=False)
    queries = np.ascontiguousarray(dataset.data[qidx], dtype=np.float32)
    gt = brute_force_knn(dataset, VectorDataset(queries), args.k)
    d_list = [int(x) for x in args.d_f_grid.split(",")]
    m_list = [int(x) for x in args.m_f_grid.split(",")]
    rows = []
    for d_f in d_list:
        for m_f in m_list:
            if m_f > d_f:
                continue
            sargs = argparse.Namespace(**vars(args))
            sargs.strategy = "flash"
            sargs.d_f, sargs.m_f = d_f, m_f
            res = _do_build(sargs, dataset)
            reports = evaluation.evaluate(
                res.graph, res.provider, dataset, queries, gt, [args.ef],
                params_k=args.k, rerank_depth=args.rerank_depth,
                threads=args.threads, kernel=args.kernel, strategy="flash",
                build_seconds=res.total_seconds, coding_seconds=res.coding_seconds,
                graph_seconds=res.graph_seconds,
            )
            r = reports[0]
            rows.append((d_f, m_f, res.total_seconds, r.recall, r.qps))
            print(f"d_F={d_f:<5} M_F={m_f:<4} build={res.total_seconds:8.2f}s "
                  f"recall@{args.k}={r.recall:.4f} qps={r.qps:.1f}")
    with open(args.out, "w") as f:
        f.write("d_f,m_f,build_seconds,recall,qps\n")
        for row in rows:
            f.write(",".join(str(x) for x in row) + "\n")
    print(f"wrote {len(rows)} rows to {args.out}")
    return 0


def cmd_kernel_bench(args) -> int:
    from . import kernelbench

    rows = kernelbench.run(full=args.full)
    print(kernelbench.format_rows(rows))
    return 0


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="flashann",
                                 description="Graph ANN index construction with compact codes")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("gen", help="generate a synthetic dataset (+ queries and ground truth)")
    _add_common(p)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--clusters", type=int, default=64)
    p.add_argument("--out", required=True)
    p.add_argument("--queries", type=int, default=1000)
    p.add_argument("--queries-out")
    p.add_argument("--query-noise", type=float, default=0.1)
    p.add_argument("--gt-out")
    p.add_argument("--gt-k", type=int, default=100)
    p.set_defaults(fn=cmd_gen)

    p = sub.add_parser("build", help="train a coder and build an index")
    _add_common(p)
    _add_build_opts(p)
    p.add_argument("--out", required=True)
    p.add_argument("--report", help="also write the timing report JSON here")
    p.set_defaults(fn=cmd_build)

    p = sub.add_parser("search", help="query a saved index")
    _add_common(p)
    p.add_argument("--index", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--ef", type=int, default=128)
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--rerank-depth", type=int, default=0)
    p.add_argument("--kernel", default="auto")
    p.add_argument("--out", help="write result ids as .ivecs")
    p.set_defaults(fn=cmd_search)

    p = sub.add_parser("eval", help="sweep search width and report recall/ADR/QPS")
    _add_common(p)
    p.add_argument("--index", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--ef-grid", default="16,32,64,128,256,512")
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--rerank-depth", type=int, default=0)
    p.add_argument("--kernel", default="auto")
    p.add_argument("--out", required=True)
    p.add_argument("--json-out")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("bench", help="build + evaluate several strategies on one dataset")
    _add_common(p)
    _add_build_opts(p)
    p.add_argument("--strategies", default="exact,flash")
    p.add_argument("--queries", type=int, default=1000)
    p.add_argument("--ef-grid", default="16,32,64,128,256,512")
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--rerank-depth", type=int, default=100)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("grid", help="grid-search projection width / subspace count")
    _add_common(p)
    _add_build_opts(p)
    p.add_argument("--d-f-grid", default="16,32,64")
    p.add_argument("--m-f-grid", default="8,16")
    p.add_argument("--queries", type=int, default=200)
    p.add_argument("--ef", type=int, default=128)
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--rerank-depth", type=int, default=100)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_grid)

    p = sub.add_parser("kernel-bench", help="compare compiled and fallback cores")
    _add_common(p)
    p.add_argument("--full", action="store_true")
    p.set_defaults(fn=cmd_kernel_bench)

    return ap


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        args = _apply_config(args, parser)
        return args.fn(args)
    except FlashAnnError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except Exception as e:  # runtime failures get a distinct code
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
