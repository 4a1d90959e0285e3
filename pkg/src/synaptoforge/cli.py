"""Command-line entry point.

Exit codes: 0 on success, 1 when inputs fail validation, 2 when a stage
fails while running.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import io
from .experiment import StageError, load_config, master_seed, run_experiment

EXIT_OK, EXIT_INVALID, EXIT_STAGE = 0, 1, 2

log = logging.getLogger("synaptoforge")


class ValidationError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ValidationError(message)


def _load_checkpoint_env(path, env_arg):
    """Genotype plus the environment it targets (``--env`` wins over the file)."""
    doc = io.load_json(path)
    env_id = env_arg or doc.get("env_id")
    if env_id is None:
        raise ValidationError(f"{path} records no environment; pass --env")
    return io.genotype_from_dict(doc), env_id


def cmd_train_dqn(args):
    from .core import init_genotype
    from .dqn import TrainConfig, default_dims, grid_search, train

    dims = default_dims(args.env, args.genes, args.hidden, args.transmitters)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg = TrainConfig(total_steps=args.steps, learning_rate=args.lr, seed=args.seed,
                      validation_interval=args.validation_interval)
    if args.grid:
        best, rows = grid_search(args.env, dims, cfg)
        with open(out / "grid.csv", "w", encoding="utf-8") as fh:
            fh.write("learning_rate,seed,best_score,step,error\n")
            for r in rows:
                fh.write(f"{r.learning_rate},{r.seed},{r.score},{r.step},{r.error or ''}\n")
        curve = None
    else:
        result = train(init_genotype(dims, args.seed), args.env, cfg,
                       on_validation=lambda s, v: log.info("step %d validation %.2f", s, v))
        best, curve = result.best, result.curve
    io.save_genotype(out / "best.json", best.genotype,
                     {"env_id": args.env, "score": best.score, "step": best.step})
    if curve is not None:
        with open(out / "curve.csv", "w", encoding="utf-8") as fh:
            fh.write("step,validation_mean,loss\n")
            for step, val, loss in curve:
                fh.write(f"{step},{val!r},{loss!r}\n")
    print(f"best validation {best.score:.2f} at step {best.step}; checkpoint {out / 'best.json'}")


def cmd_train_snes(args):
    from .core import init_genotype
    from .dqn import default_dims
    from .snes import snes_train

    dims = default_dims(args.env, args.genes, args.hidden, args.transmitters, args.tonic)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    template = init_genotype(dims, args.seed)
    gens = open(out / "generations.csv", "w", encoding="utf-8")
    gens.write("gen,best_fitness,mean_fitness,env_steps\n")

    def on_gen(e):
        gens.write(f"{e.generation},{e.best_fitness!r},{e.mean_fitness!r},{e.env_steps}\n")
        gens.flush()
        log.info("generation %d best %.2f", e.generation, e.best_fitness)

    try:
        res = snes_train(template, args.env, args.popsize, args.m, args.budget, args.seed,
                         args.sigma0, args.shaping, target_degree=args.target_degree,
                         on_generation=on_gen)
    finally:
        gens.close()
    io.save_genotype(out / "best.json", res.best_genotype,
                     {"env_id": args.env, "score": res.best_fitness})
    print(f"best fitness {res.best_fitness:.2f} after {res.state.env_steps} env steps")


def _save_cohort(cohort, out):
    from .evalstats import save_cohort, summarize

    save_cohort(out, cohort)
    row = summarize(cohort.valid, cohort.env_id) if len(cohort.valid) else None
    print(json.dumps({"model": cohort.model, "env": cohort.env_id,
                      "failed": len(cohort.errors),
                      "summary": None if row is None else dataclasses.asdict(row)}, indent=1))


def cmd_baseline_bio(args):
    from .bioinit import bio_agent
    from .evalstats import evaluate_cohort

    genotype, env_id = _load_checkpoint_env(args.checkpoint, args.env)
    make = lambda s: bio_agent(genotype, s, args.target_degree).network()  # noqa: E731
    cohort = evaluate_cohort(make, env_id, args.agents, args.episodes, args.seed, "bio-plausible")
    _save_cohort(cohort, args.out)


def cmd_sample_agents(args):
    from .core import map_params
    from .sampler import choose_alpha, sample_agent

    genotype = io.load_genotype(args.checkpoint)
    factors = map_params(genotype)
    alpha = args.alpha if args.alpha is not None else choose_alpha(factors, args.target_degree)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    seeds = np.random.SeedSequence(args.seed).generate_state(args.n, np.uint64)
    for k, s in enumerate(seeds):
        agent = sample_agent(genotype, alpha, int(s), factors, provenance=str(args.checkpoint))
        io.save_agent(out / f"agent_{k:04d}.json", agent, genotype)
    print(f"wrote {args.n} agents with alpha {alpha:.6g} to {out}")


def cmd_evaluate(args):
    from .core import map_params
    from .evalstats import evaluate_cohort
    from .sampler import choose_alpha, sample_agent

    genotype, env_id = _load_checkpoint_env(args.checkpoint, args.env)
    factors = map_params(genotype)
    alpha = args.alpha if args.alpha is not None else choose_alpha(factors, args.target_degree)
    make = lambda s: sample_agent(genotype, alpha, s, factors).network()  # noqa: E731
    cohort = evaluate_cohort(make, env_id, args.agents, args.episodes, args.seed, args.model)
    _save_cohort(cohort, args.out)


def cmd_compare(args):
    from .evalstats import compare, load_cohort, write_table

    cohorts = [load_cohort(p) for p in args.reports]
    by_env = {}
    for c in cohorts:
        by_env.setdefault(c.env_id, []).append(c)
    reports = [compare(cs) for cs in by_env.values()]
    write_table(args.out, reports)
    if args.json:
        io.save_json(args.json, [r.to_dict() for r in reports])
    print(Path(args.out).read_text(encoding="utf-8"), end="")


def cmd_ndge(args):
    from .ndge import CoexpressionInput, global_ndge, read_labeled_csv, write_labeled_csv

    genes, neurons, expr = read_labeled_csv(args.expression)
    _, _, conn = read_labeled_csv(args.connectome)
    _, _, contact = read_labeled_csv(args.contactome)
    data = CoexpressionInput(expr, conn, contact)
    res = global_ndge(data, args.alpha, "greater" if args.one_sided else "two-sided")
    write_labeled_csv(args.out, genes, genes, res.mask)
    if args.pvalues:
        write_labeled_csv(args.pvalues, genes, genes, res.p_values, fmt="{!r}")
    print(f"{int(res.mask.sum())} co-expressed gene pairs "
          f"({res.n_with_synapses} connected, {res.n_contact_only} contact-only neuron pairs)")


def cmd_verify_gradients(args):
    from .core import CONSTRAINT_COEXPRESSION, ModelDims, init_genotype
    from .graddiff import finite_diff_check, format_report, squared_error

    rng = np.random.default_rng(args.seed)
    worst = 0.0
    if args.checkpoint:
        genotypes = [io.load_genotype(args.checkpoint)]
    else:
        genotypes = []
        for k in range(args.trials):
            G, L = int(rng.integers(1, 9)), int(rng.integers(1, 5))
            sizes = tuple(int(x) for x in rng.integers(1, 9, size=int(rng.integers(2, 4))))
            dims = ModelDims(sizes, G, L)
            if k % 2:
                mask = rng.integers(0, 2, size=(G, G))
                genotypes.append(init_genotype(dims, int(rng.integers(2**31)),
                                               CONSTRAINT_COEXPRESSION, mask, float(rng.uniform(0.5, 2))))
            else:
                genotypes.append(init_genotype(dims, int(rng.integers(2**31))))
    for g in genotypes:
        x = rng.standard_normal((3, g.dims.layer_sizes[0]))
        target = rng.standard_normal((3, g.dims.layer_sizes[-1]))
        errors = finite_diff_check(g, x, squared_error(target))
        worst = max(worst, max(errors.values()))
        if args.verbose:
            print(format_report(errors))
    ok = worst < args.tol
    print(f"{len(genotypes)} genotypes, max relative error {worst:.3g} ({'ok' if ok else 'FAILED'})")
    if not ok:
        raise StageError("verify-gradients", AssertionError(f"max relative error {worst:.3g}"))


def cmd_report(args):
    from .evalstats import load_cohort, plot_histogram

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for p in args.reports:
        c = load_cohort(p)
        if args.plots:
            dest = out / f"hist_{c.model}_{c.env_id}.svg"
            plot_histogram(dest, c)
            print(dest)


def cmd_run(args):
    cfg = load_config(args.config)
    cfg.seed = master_seed(cfg.seed if args.seed is None else args.seed)
    report = run_experiment(cfg, args.out)
    print(json.dumps(report, indent=1))


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="synaptoforge", description="Genetic connectome models for reinforcement learning")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    envs = ("cartpole", "mountaincar", "acrobot")

    def model_args(sp, hidden=64):
        sp.add_argument("--genes", type=int, default=16)
        sp.add_argument("--hidden", type=int, default=hidden)
        sp.add_argument("--transmitters", type=int, default=3)

    sp = sub.add_parser("train-dqn", help="train a genotype with DQN")
    sp.add_argument("--env", choices=envs, required=True)
    model_args(sp)
    sp.add_argument("--steps", type=int, default=250_000)
    sp.add_argument("--lr", type=float, default=0.003)
    sp.add_argument("--validation-interval", type=int, default=10_000)
    sp.add_argument("--grid", action="store_true", help="3x3 grid over learning rate and seed")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=cmd_train_dqn)

    sp = sub.add_parser("train-snes", help="evolve a genotype with SNES")
    sp.add_argument("--env", choices=envs, required=True)
    model_args(sp)
    sp.add_argument("--lambda", dest="popsize", type=int, default=16)
    sp.add_argument("--m", type=int, default=10)
    sp.add_argument("--budget", type=int, default=200_000)
    sp.add_argument("--sigma0", type=float, default=1.0)
    sp.add_argument("--shaping", choices=("raw", "utility"), default="raw")
    sp.add_argument("--tonic", action="store_true", help="append a constant input neuron")
    sp.add_argument("--target-degree", type=float, default=1e4)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=cmd_train_snes)

    def cohort_args(sp):
        sp.add_argument("--checkpoint", required=True)
        sp.add_argument("--env", choices=envs)
        sp.add_argument("--agents", type=int, default=100)
        sp.add_argument("--episodes", type=int, default=10)
        sp.add_argument("--target-degree", type=float, default=1e4)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--out", required=True)

    sp = sub.add_parser("baseline-bio", help="score lineage-initialized agents")
    cohort_args(sp)
    sp.set_defaults(fn=cmd_baseline_bio)

    sp = sub.add_parser("evaluate", help="score agents sampled from a checkpoint")
    cohort_args(sp)
    sp.add_argument("--alpha", type=float)
    sp.add_argument("--model", choices=("synaptogen", "snes", "bio-plausible"), default="synaptogen")
    sp.set_defaults(fn=cmd_evaluate)

    sp = sub.add_parser("sample-agents", help="write sampled agents as JSON")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--n", type=int, default=10)
    sp.add_argument("--alpha", type=float)
    sp.add_argument("--target-degree", type=float, default=1e4)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=cmd_sample_agents)

    sp = sub.add_parser("compare", help="summary table and pairwise tests")
    sp.add_argument("--reports", nargs="+", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--json")
    sp.set_defaults(fn=cmd_compare)

    sp = sub.add_parser("ndge", help="co-expression mask from expression and wiring data")
    sp.add_argument("--expression", required=True)
    sp.add_argument("--connectome", required=True)
    sp.add_argument("--contactome", required=True)
    sp.add_argument("--alpha", type=float, default=0.05)
    sp.add_argument("--one-sided", action="store_true")
    sp.add_argument("--pvalues")
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=cmd_ndge)

    sp = sub.add_parser("verify-gradients", help="compare analytic and numerical gradients")
    sp.add_argument("--checkpoint")
    sp.add_argument("--trials", type=int, default=20)
    sp.add_argument("--tol", type=float, default=1e-4)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(fn=cmd_verify_gradients)

    sp = sub.add_parser("report", help="reward histograms for cohort files")
    sp.add_argument("--reports", nargs="+", required=True)
    sp.add_argument("--plots", action="store_true")
    sp.add_argument("--out", default=".")
    sp.set_defaults(fn=cmd_report)

    sp = sub.add_parser("run", help="run the full comparison from a config or manifest")
    sp.add_argument("--config", required=True)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=cmd_run)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command != "run" and hasattr(args, "seed") and args.seed is not None:
        try:
            args.seed = master_seed(args.seed)
        except ValueError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_INVALID
    try:
        args.fn(args)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE
    except (ValidationError, ValueError, KeyError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:
        print(f"error: {args.command} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_STAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
