"""Command-line interface: entropy reports, bandwidth calibration, mixture
selection, masking, completion, clustering evaluation, game verification,
and the masked-completion pipeline.

Every subcommand is a pure function of (config, input files, seed): two runs
with identical inputs produce byte-identical reports. Validation problems
exit with code 2 and a machine-readable error record on stdout.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import cluster_eval, completion, games, io_files, kernels, mixture, spectral

log = logging.getLogger(__name__)

VALIDATION_ERRORS = (ValueError, RuntimeError, FileNotFoundError)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mvne",
        description="Maximum von Neumann entropy toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--out", type=Path, default=None,
                       help="write the report here instead of stdout")
        p.add_argument("--config", type=Path, default=None,
                       help="key=value file with defaults for this command")
        p.add_argument("--timings", action="store_true",
                       help="append a wall-clock section (breaks byte-for-byte "
                            "report reproducibility)")

    p = sub.add_parser("entropy", help="entropy report for a kernel/density file")
    p.add_argument("input", type=Path)
    p.add_argument("--alpha", type=float, action="append", default=None,
                   help="additionally report Renyi entropy of this order (repeatable)")
    add_common(p)

    p = sub.add_parser("calibrate", help="RBF bandwidth calibration to a target entropy")
    p.add_argument("embeddings", type=Path, nargs="+")
    p.add_argument("--target-vne", type=float, default=None,
                   help="default: mean of the files' linear-kernel entropies")
    p.add_argument("--tol", type=float, default=1e-3)
    add_common(p)

    p = sub.add_parser("mixture", help="max-entropy kernel mixture selection")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--embeddings", type=Path, nargs="+")
    group.add_argument("--kernels", type=Path, nargs="+")
    p.add_argument("--kind", choices=("linear", "rbf", "cosine"), default="cosine")
    p.add_argument("--bandwidth", type=float, action="append", default=None,
                   help="RBF bandwidth, once per embedding file")
    p.add_argument("--learning-rate", type=float, default=0.1)
    p.add_argument("--max-iters", type=int, default=100)
    p.add_argument("--grad-tol", type=float, default=1e-7)
    add_common(p)

    p = sub.add_parser("mask", help="sample an observation mask from a kernel")
    p.add_argument("kernel", type=Path)
    p.add_argument("--fraction", type=float, required=True,
                   help="observed fraction of off-diagonal entries")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-mask", type=Path, required=True)
    add_common(p)

    p = sub.add_parser("complete", help="max-entropy kernel completion from a mask")
    p.add_argument("mask", type=Path)
    p.add_argument("--rank", type=int, default=50)
    p.add_argument("--objective", choices=completion.OBJECTIVES,
                   default="renyi2_purity")
    p.add_argument("--penalty-weight", type=float, default=100.0)
    p.add_argument("--learning-rate", type=float, default=1e-3)
    p.add_argument("--max-iters", type=int, default=5000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-kernel", type=Path, default=None)
    add_common(p)

    p = sub.add_parser("cluster-eval", help="spectral clustering + metrics vs truth")
    p.add_argument("kernel", type=Path)
    p.add_argument("--labels", type=Path, required=True)
    p.add_argument("--clusters", type=int, default=None,
                   help="default: number of distinct truth labels")
    p.add_argument("--seed", type=int, default=0)
    add_common(p)

    p = sub.add_parser("game-verify", help="verify minimax / equalizer on an instance")
    p.add_argument("instance", type=Path)
    p.add_argument("--tol", type=float, default=1e-3,
                   help="minimax gap / saddle margin tolerance")
    p.add_argument("--equalizer-tol", type=float, default=1e-8)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    add_common(p)

    p = sub.add_parser("pipeline", help="mask, complete and evaluate in one run")
    p.add_argument("embeddings", type=Path, help="embedding file with labels")
    p.add_argument("--fraction", type=float, default=0.1)
    p.add_argument("--rank", type=int, default=50)
    p.add_argument("--objective", choices=completion.OBJECTIVES,
                   default="renyi2_purity")
    p.add_argument("--max-iters", type=int, default=5000)
    p.add_argument("--clusters", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-kernel", type=Path, default=None)
    add_common(p)

    return parser


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> list[str]:
    """Expand ``--config FILE`` into leading flags so explicit flags win.

    The file holds ``key = value`` lines ('#' comments allowed); keys use the
    flag spelling without the leading dashes. Unknown keys are rejected.
    """
    if "--config" not in argv:
        return argv
    at = argv.index("--config")
    if at == 0:  # no subcommand yet; let argparse produce its usage error
        return argv
    if at + 1 >= len(argv):
        raise io_files.ParseError("--config needs a file path")
    path = Path(argv[at + 1])
    tokens = []
    for ln, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise io_files.ParseError(f"{path}: line {ln}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        flag = "--" + key.replace("_", "-")
        value = value.strip()
        if value.lower() in ("true", "false"):
            if value.lower() == "true":
                tokens.append(flag)
        else:
            tokens.extend([flag] + value.split())
    # insert config tokens right after the subcommand so argv flags override
    head = argv[:1]
    rest = argv[1:at] + argv[at + 2:]
    return head + tokens + rest


def _state_from_matrix_file(path) -> spectral.DensityMatrix:
    k = io_files.load_kernel(path)
    return kernels.kernel_density(k)


def _cmd_entropy(args):
    rho = _state_from_matrix_file(args.input)
    metrics = {
        "n": rho.n,
        "vne": spectral.vne(rho),
        "renyi2": spectral.renyi2(rho),
        "purity": spectral.purity(rho),
        "max_vne": float(np.log(rho.n)),
    }
    for alpha in args.alpha or ():
        metrics[f"renyi_{alpha:g}"] = spectral.renyi_entropy(rho, alpha)
    return [("config", {"input": args.input}), ("metrics", metrics)]


def _cmd_calibrate(args):
    embs = [io_files.load_embeddings(p) for p in args.embeddings]
    target = args.target_vne
    if target is None:
        linear_vnes = [
            spectral.vne(kernels.kernel_density(
                kernels.normalize_kernel(kernels.build_kernel(e, "linear"))))
            for e in embs
        ]
        target = float(np.mean(linear_vnes))
    results = {}
    for path, emb in zip(args.embeddings, embs):
        bw = kernels.calibrate_bandwidth(emb, target, args.tol)
        achieved = spectral.vne(kernels.kernel_density(
            kernels.build_kernel(emb, "rbf", bw)))
        results[f"{path.name}.bandwidth"] = bw
        results[f"{path.name}.vne"] = achieved
    config = {"files": [str(p) for p in args.embeddings],
              "target_vne": target, "tol": args.tol}
    return [("config", config), ("metrics", results)]


def _cmd_mixture(args):
    if args.kernels:
        mats = [io_files.load_kernel(p) for p in args.kernels]
        mats = [k if k.normalized else kernels.normalize_kernel(k) for k in mats]
        names = [p.name for p in args.kernels]
    else:
        embs = [io_files.load_embeddings(p) for p in args.embeddings]
        names = [p.name for p in args.embeddings]
        if args.kind == "rbf":
            bws = args.bandwidth
            if not bws or len(bws) != len(embs):
                raise ValueError("--bandwidth must be given once per embedding file")
            mats = [kernels.build_kernel(e, "rbf", b) for e, b in zip(embs, bws)]
        else:
            mats = [kernels.build_kernel(e, args.kind) for e in embs]
            mats = [k if k.normalized else kernels.normalize_kernel(k) for k in mats]
    bundle = kernels.KernelBundle(mats, names)
    settings = mixture.PGASettings(learning_rate=args.learning_rate,
                                   max_iters=args.max_iters,
                                   grad_tol=args.grad_tol)
    solution = mixture.select_mixture(mixture.MixtureProblem(bundle, pga=settings))
    per_kernel = {name: spectral.vne(kernels.kernel_density(k))
                  for name, k in zip(bundle.names, bundle.kernels)}
    metrics = {
        "names": bundle.names,
        "alpha_star": solution.alpha_star,
        "concat_scales": mixture.concatenation_recipe(solution),
        "vne_star": solution.vne_star,
        "converged": solution.converged,
        "iterations": len(solution.trajectory),
    }
    metrics.update({f"vne.{k}": v for k, v in per_kernel.items()})
    config = {"kind": args.kind, "learning_rate": args.learning_rate,
              "max_iters": args.max_iters, "grad_tol": args.grad_tol}
    trace = [f"{obj!r}, {pg!r}" for obj, pg in solution.trajectory]
    return [("config", config), ("metrics", metrics), ("trajectory", trace)]


def _cmd_mask(args):
    k = io_files.load_kernel(args.kernel)
    mask = completion.mask_generator(k, args.fraction, args.seed)
    io_files.save_mask(mask, args.out_mask)
    metrics = {
        "n": mask.n,
        "observed": mask.num_observed,
        "off_diagonal": int(np.count_nonzero(mask.pairs[:, 0] != mask.pairs[:, 1])),
        "mask_file": args.out_mask,
    }
    config = {"kernel": args.kernel, "fraction": args.fraction, "seed": args.seed}
    return [("config", config), ("metrics", metrics)]


def _cmd_complete(args):
    mask = io_files.load_mask(args.mask)
    problem = completion.CompletionProblem(
        mask, rank=args.rank, objective=args.objective,
        penalty_weight=args.penalty_weight,
        optimizer=completion.AdamSettings(learning_rate=args.learning_rate,
                                          max_iters=args.max_iters),
        seed=args.seed)
    result = completion.complete_kernel(problem)
    if args.out_kernel is not None:
        io_files.save_kernel(result.k_hat, args.out_kernel)
    trace = result.objective_trace
    metrics = {
        "n": mask.n,
        "rank": args.rank,
        "objective": args.objective,
        "iterations": trace.size,
        "loss_initial": float(trace[0]),
        "loss_final": float(trace[-1]),
        "constraint_residual": result.constraint_residual,
        "converged": result.converged,
        "vne": spectral.vne(result.rho_hat),
        "renyi2": spectral.renyi2(result.rho_hat),
    }
    config = {"mask": args.mask, "rank": args.rank, "objective": args.objective,
              "penalty_weight": args.penalty_weight,
              "learning_rate": args.learning_rate, "max_iters": args.max_iters,
              "seed": args.seed}
    return [("config", config), ("metrics", metrics)]


def _cmd_cluster_eval(args):
    k = io_files.load_kernel(args.kernel)
    truth = cluster_eval.ClusterLabels(io_files.load_labels(args.labels))
    c = args.clusters if args.clusters is not None else truth.c
    predicted = cluster_eval.spectral_cluster(k, c, args.seed)
    report = cluster_eval.evaluate(predicted, truth)
    metrics = {"clusters": c, "nmi": report.nmi, "ari": report.ari,
               "acc": report.acc}
    config = {"kernel": args.kernel, "labels": args.labels, "seed": args.seed}
    return [("config", config), ("metrics", metrics),
            ("predicted_labels", predicted.labels)]


def _cmd_game_verify(args):
    instance = io_files.load_instance(args.instance)
    config = {"instance": args.instance, "tol": args.tol,
              "trials": args.trials, "seed": args.seed}
    if isinstance(instance, games.PolytopeAmbiguitySet):
        rep = games.verify_minimax(instance, instance.eps, args.tol,
                                   seed=args.seed)
        metrics = {
            "type": "polytope",
            "n": instance.n,
            "vertices": instance.m,
            "lower": rep.lower,
            "upper": rep.upper,
            "gap": rep.gap,
            "weights": rep.weights,
            "min_vertex_margin": float(rep.vertex_margins.min()),
            "min_sigma_margin": float(rep.sigma_margins.min()),
            "passed": rep.passed,
        }
    else:
        sol = games.solve_gibbs(instance)
        rep = games.verify_equalizer(sol, instance, args.trials, seed=args.seed,
                                     tol=args.equalizer_tol)
        metrics = {
            "type": "constraints",
            "n": instance.n,
            "beta": sol.beta,
            "c": sol.c,
            "equalizer_value": sol.equalizer_value,
            "entropy": spectral.vne(sol.rho_tau),
            "trials": rep.trials,
            "max_deviation": rep.max_deviation,
            "max_entropy_excess": rep.max_entropy_excess,
            "degenerate": rep.degenerate,
            "passed": rep.passed,
        }
    return [("config", config), ("metrics", metrics)]


def _cmd_pipeline(args):
    emb = io_files.load_embeddings(args.embeddings)
    if emb.labels is None:
        raise ValueError("pipeline needs an embedding file with labels")
    truth = cluster_eval.ClusterLabels(emb.labels)
    c = args.clusters if args.clusters is not None else truth.c
    k_true = kernels.build_kernel(emb, "cosine")
    mask = completion.mask_generator(k_true, args.fraction, args.seed)
    problem = completion.CompletionProblem(
        mask, rank=args.rank, objective=args.objective,
        optimizer=completion.AdamSettings(max_iters=args.max_iters),
        seed=args.seed)
    result = completion.complete_kernel(problem)
    if args.out_kernel is not None:
        io_files.save_kernel(result.k_hat, args.out_kernel)
    completed = cluster_eval.evaluate(
        cluster_eval.spectral_cluster(result.k_hat, c, args.seed), truth)
    zero = np.zeros((mask.n, mask.n))
    zero[mask.pairs[:, 0], mask.pairs[:, 1]] = mask.values
    zero[mask.pairs[:, 1], mask.pairs[:, 0]] = mask.values
    baseline = cluster_eval.evaluate(
        cluster_eval.spectral_cluster(kernels.KernelMatrix(zero), c, args.seed),
        truth)
    full = cluster_eval.evaluate(
        cluster_eval.spectral_cluster(k_true, c, args.seed), truth)
    metrics = {
        "n": mask.n,
        "clusters": c,
        "observed_fraction": args.fraction,
        "constraint_residual": result.constraint_residual,
        "completed.nmi": completed.nmi,
        "completed.ari": completed.ari,
        "completed.acc": completed.acc,
        "zero_imputed.nmi": baseline.nmi,
        "zero_imputed.ari": baseline.ari,
        "zero_imputed.acc": baseline.acc,
        "full_kernel.nmi": full.nmi,
        "full_kernel.ari": full.ari,
        "full_kernel.acc": full.acc,
        "improved_all_metrics": bool(completed.nmi > baseline.nmi
                                     and completed.ari > baseline.ari
                                     and completed.acc > baseline.acc),
    }
    config = {"embeddings": args.embeddings, "fraction": args.fraction,
              "rank": args.rank, "objective": args.objective,
              "max_iters": args.max_iters, "seed": args.seed}
    return [("config", config), ("metrics", metrics)]


_COMMANDS = {
    "entropy": _cmd_entropy,
    "calibrate": _cmd_calibrate,
    "mixture": _cmd_mixture,
    "mask": _cmd_mask,
    "complete": _cmd_complete,
    "cluster-eval": _cmd_cluster_eval,
    "game-verify": _cmd_game_verify,
    "pipeline": _cmd_pipeline,
}


def _emit(text: str, out: Path | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def cli_dispatch(argv) -> int:
    """Run one subcommand; returns the process exit code.

    0 on success (report on stdout or --out); 2 on validation errors, with a
    machine-readable error record instead of a partial report.
    """
    parser = _build_parser()
    argv = list(argv)
    try:
        argv = _apply_config(parser, argv)
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse reports usage errors itself
        return int(exc.code or 0)
    except VALIDATION_ERRORS as exc:
        sys.stdout.write(f"mvne-error v1\nerror = {type(exc).__name__}\n"
                         f"message = {exc}\n")
        return 2
    started = time.perf_counter()
    try:
        sections = _COMMANDS[args.command](args)
    except VALIDATION_ERRORS as exc:
        sys.stdout.write(f"mvne-error v1\nerror = {type(exc).__name__}\n"
                         f"message = {exc}\n")
        return 2
    if args.timings:
        sections.append(("timing", {"wall_seconds": time.perf_counter() - started}))
    _emit(io_files.render_report(args.command, sections), args.out)
    return 0


def main() -> None:
    logging.basicConfig(stream=sys.stderr, level=logging.WARNING)
    sys.exit(cli_dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
