"""Command-line entry point.

Exit codes: 0 success, 2 invalid input, 3 solver did not converge.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

from .divergence import ProblemSpec, SolverError, criterion_K, solve_V
from .estimate import estimate
from .experiment import ExperimentConfig, emit_outputs, run_experiment
from .prob import Distribution, TransformFn
from .spine import identify
from .tree import Tree, observe, simulate_sst

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NO_CONVERGENCE = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_INVALID)


def _vector(text: str) -> list[float]:
    try:
        return [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated reals, got {text!r}") from exc


def _json_default(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    if hasattr(obj, "tolist"):
        return obj.tolist()
    return str(obj)


def _dump(data) -> str:
    return json.dumps(data, indent=2, default=_json_default)


def cmd_simulate(args) -> int:
    tree = simulate_sst(Distribution(args.mu), TransformFn(args.f), args.hmax, seed=args.seed)
    tree.to_json(args.out, mu=args.mu, f=args.f, seed=args.seed)
    print(f"wrote {tree.size} nodes (generations 0..{tree.generated_to}) to {args.out}")
    return EXIT_OK


def _load_tree(path) -> Tree:
    return Tree.from_json(Path(path))


def cmd_identify(args) -> int:
    obs = observe(_load_tree(args.tree), args.h)
    rep = identify(obs)
    text = rep.to_csv(args.out)
    if args.out is None:
        sys.stdout.write(text)
    print(
        f"K_h={rep.k_h} candidates={rep.leaves.size} observed_nodes={obs.n_observed}",
        file=sys.stderr,
    )
    return EXIT_OK


def cmd_estimate(args) -> int:
    tree = _load_tree(args.tree)
    obs = observe(tree, args.h)
    bundle = estimate(obs, n_max=args.n_max)
    text = bundle.to_json(args.out)
    print(text)
    return EXIT_OK


def cmd_divergence(args) -> int:
    spec = ProblemSpec(
        Distribution(args.p),
        Distribution(args.q),
        alpha=args.alpha,
        delta=args.delta,
        epsilon=args.eps,
    )
    rep = solve_V(spec)
    print(_dump(rep.to_dict()))
    return EXIT_OK if rep.converged else EXIT_NO_CONVERGENCE


def cmd_criterion(args) -> int:
    res = criterion_K(Distribution(args.mu), TransformFn(args.f))
    print(_dump(res.to_dict()))
    return EXIT_OK


def cmd_experiment(args) -> int:
    data = json.loads(Path(args.config).read_text())
    if args.output_dir is not None:
        data["output_dir"] = args.output_dir
    if args.workers is not None:
        data["workers"] = args.workers
    cfg = ExperimentConfig.from_dict(data)
    if cfg.output_dir is None:
        raise ValueError("the config needs an output_dir (or pass --output-dir)")
    result = run_experiment(cfg)
    paths = emit_outputs(result.records, result.aggregate, cfg)
    summary = {
        "criterion": result.criterion.to_dict() if result.criterion else None,
        "failed_replicates": result.failed_replicates,
        "outputs": {k: str(v) for k, v in paths.items()},
    }
    print(_dump(summary))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="uglyduckling", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="simulate a spinal-structured tree")
    p.add_argument("--mu", type=_vector, required=True)
    p.add_argument("--f", type=_vector, required=True)
    p.add_argument("--hmax", type=int, required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("identify", help="mark provably normal and special nodes")
    p.add_argument("--tree", required=True)
    p.add_argument("--h", type=int, required=True)
    p.add_argument("--out", default=None, help="CSV output (default: stdout)")
    p.set_defaults(func=cmd_identify)

    p = sub.add_parser("estimate", help="estimate the spine and the birth laws")
    p.add_argument("--tree", required=True)
    p.add_argument("--h", type=int, required=True)
    p.add_argument("--n-max", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("divergence", help="solve one constrained KL problem")
    p.add_argument("--p", type=_vector, required=True)
    p.add_argument("--q", type=_vector, required=True)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--alpha", type=float, default=None)
    g.add_argument("--delta", type=float, default=None)
    p.add_argument("--eps", type=float, default=0.0)
    p.set_defaults(func=cmd_divergence)

    p = sub.add_parser("criterion", help="identifiability criterion of (mu, f)")
    p.add_argument("--mu", type=_vector, required=True)
    p.add_argument("--f", type=_vector, required=True)
    p.set_defaults(func=cmd_criterion)

    p = sub.add_parser("experiment", help="run a Monte-Carlo experiment from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--output-dir", default=None)
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    if args.command == "divergence" and args.alpha is None and args.delta is None:
        args.alpha = 0.0
    try:
        return args.func(args)
    except SolverError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    except (ValueError, OSError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
