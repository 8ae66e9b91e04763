"""Command-line entry point: ``cggm --data FILE --out DIR [options]``."""

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import io
from .estimators import edge_inclusion_probs, mean_correlation
from .sampler import SamplerConfig, copula_full_baseline, run_chains

log = logging.getLogger("cggm")


def parse_levels(text):
    """``"2,2,3"`` or ``"2x8"`` (eight binary variables)."""
    text = text.strip()
    if "x" in text:
        d, p = text.split("x")
        return [int(d)] * int(p)
    return [int(t) for t in text.split(",") if t.strip()]


def build_parser():
    ap = argparse.ArgumentParser(
        prog="cggm",
        description="Copula Gaussian graphical models by reversible-jump MCMC.",
    )
    ap.add_argument("--data", required=True,
                    help="input file, or 'rochdale' for the bundled Rochdale table")
    ap.add_argument("--format", choices=["table", "cases"], default="table")
    ap.add_argument("--levels", type=parse_levels,
                    help="levels per variable for tables, e.g. 2x8 or 2,3,2")
    ap.add_argument("--names", help="comma-separated variable names for tables")
    ap.add_argument("--iters", type=int, default=10_000, help="total iterations per chain")
    ap.add_argument("--burnin", type=int, default=1_000)
    ap.add_argument("--thin", type=int, default=25)
    ap.add_argument("--chains", type=int, default=1)
    ap.add_argument("--workers", type=int, default=1, help="processes for parallel chains")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--sigma-p", type=float, default=0.1)
    ap.add_argument("--sigma-g", type=float, default=0.1)
    ap.add_argument("--delta", type=float, default=3.0)
    ap.add_argument("--nc-samples", type=int, default=2_000,
                    help="Monte Carlo samples per normalizing constant")
    ap.add_argument("--epsilon", type=float, default=0.1)
    ap.add_argument("--draws", type=int, default=10_000,
                    help="copula draws per thinned sample for expected cell counts")
    ap.add_argument("--cell-stride", type=int, default=1,
                    help="use every k-th thinned sample for expected cell counts")
    ap.add_argument("--bf-threshold", type=float, default=100.0)
    ap.add_argument("--baseline", choices=["cggm", "copula-full"], default="cggm")
    ap.add_argument("--out", default="cggm_out")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def load_data(args):
    if args.data == "rochdale" and not Path(args.data).exists():
        return io.rochdale()
    path = Path(args.data)
    if not path.exists():
        raise FileNotFoundError(f"no such data file: {path}")
    if args.format == "cases":
        return io.parse_case_data(path)
    if args.levels is None:
        raise ValueError("--levels is required for --format table")
    names = args.names.split(",") if args.names else None
    return io.parse_contingency_table(path, len(args.levels), args.levels, names)


def print_summary(summary, data, elapsed, paths, stream=None):
    stream = stream or sys.stdout
    names = data.names
    probs = edge_inclusion_probs(summary)
    ups = mean_correlation(summary)
    iu, ju = np.triu_indices(data.p, 1)
    order = np.argsort(-probs[iu, ju])[:10]
    print(f"n={data.n} p={data.p}  retained samples={summary.S}  "
          f"thinned={len(summary.thinned_upsilons)}  {elapsed:.1f}s", file=stream)
    print(f"mean edge count {summary.mean_edge_count:.2f}  per chain "
          + " ".join(f"{m:.2f}" for m in summary.chain_mean_edges), file=stream)
    rates = ", ".join(f"{k} {v:.3f}" for k, v in summary.acceptance.items())
    print(f"acceptance: {rates}", file=stream)
    print("top edges (inclusion prob, mean correlation):", file=stream)
    for k in order:
        i, j = iu[k], ju[k]
        print(f"  {names[i]:>8s} -- {names[j]:<8s} {probs[i, j]:.3f}  {ups[i, j]:+.3f}",
              file=stream)
    print("wrote " + ", ".join(sorted(p.name for p in paths.values())), file=stream)


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        data = load_data(args)
        config = SamplerConfig(
            delta=args.delta, sigma_p=args.sigma_p, sigma_g=args.sigma_g,
            iterations=args.iters, burn_in=args.burnin, thin=args.thin, chains=args.chains,
            master_seed=args.seed, nc_samples=args.nc_samples, epsilon=args.epsilon,
            workers=args.workers,
        )
        t0 = time.perf_counter()
        if args.baseline == "copula-full":
            result = copula_full_baseline(config, data)
        else:
            result = run_chains(config, data)
        summary = result.summary
        if summary.S == 0:
            raise ValueError("no post-burn-in samples; increase --iters or lower --burnin")
        paths = io.write_results(args.out, summary, data, config, chains=result.chains,
                                 draws=args.draws, bf_threshold=args.bf_threshold,
                                 rng=np.random.default_rng([args.seed, 7919]),
                                 extra={"baseline": args.baseline},
                                 cell_stride=args.cell_stride)
        print_summary(summary, data, time.perf_counter() - t0, paths)
    except (ValueError, FileNotFoundError, OSError) as exc:
        print(f"cggm: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
