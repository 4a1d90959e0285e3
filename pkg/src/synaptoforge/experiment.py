"""Three-way comparison pipeline driven by a TOML config.

Stages run in order and each persists its artifacts before the next starts:
``train-dqn``, ``cohort-synaptogen``, ``train-snes``, ``cohort-snes``,
``cohort-bio`` and ``compare``. A stage whose checkpoint is given in the
config is loaded instead of trained. ``manifest.json`` records the resolved
config, every derived seed, library versions and the artifact paths; feeding
it back to :func:`run_experiment` reproduces the report.
"""

from __future__ import annotations

import csv
import dataclasses
import logging
import os
import platform
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import io
from .bioinit import bio_agent
from .core import CONSTRAINT_COEXPRESSION, CONSTRAINT_FREE, init_genotype
from .dqn import TrainConfig, check_conformal, default_dims, train
from .envs import ENV_IDS
from .evalstats import compare, evaluate_cohort, plot_histogram, save_cohort, write_table
from .ndge import read_labeled_csv
from .sampler import DEFAULT_TARGET_DEGREE, choose_alpha, sample_agent
from .core import map_params
from .snes import FITNESS_RAW, FITNESS_UTILITY, snes_train

log = logging.getLogger(__name__)

SEED_ENV_VAR = "SYNAPTOFORGE_SEED"
STAGES = ("train-dqn", "cohort-synaptogen", "train-snes", "cohort-snes", "cohort-bio", "compare")


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage} failed: {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class DqnSection:
    checkpoint: Optional[str] = None
    overrides: dict = field(default_factory=dict)  # TrainConfig fields


@dataclass
class SnesSection:
    checkpoint: Optional[str] = None
    popsize: int = 16
    m: int = 10
    budget: int = 200_000
    shaping: str = FITNESS_UTILITY
    sigma0: float = 1.0
    tonic_input: bool = False
    hidden: Optional[int] = None  # falls back to the experiment width


@dataclass
class ExperimentConfig:
    env: str = "cartpole"
    seed: int = 0
    genes: int = 16
    hidden: int = 64
    transmitters: int = 3
    constraint_mode: str = CONSTRAINT_FREE
    mask: Optional[str] = None
    temperature: float = 1.0
    target_degree: float = DEFAULT_TARGET_DEGREE
    cohort: int = 100
    episodes: int = 10
    plots: bool = True
    dqn: DqnSection = field(default_factory=DqnSection)
    snes: SnesSection = field(default_factory=SnesSection)

    def validate(self):
        if self.env not in ENV_IDS:
            raise ValueError(f"unknown environment {self.env!r}")
        if self.constraint_mode not in (CONSTRAINT_FREE, CONSTRAINT_COEXPRESSION):
            raise ValueError(f"unknown constraint mode {self.constraint_mode!r}")
        if (self.constraint_mode == CONSTRAINT_COEXPRESSION) != (self.mask is not None):
            raise ValueError("a mask file is required exactly when the constrained mode is used")
        if self.snes.shaping not in (FITNESS_RAW, FITNESS_UTILITY):
            raise ValueError(f"unknown SNES shaping {self.snes.shaping!r}")
        if self.cohort < 1 or self.episodes < 1:
            raise ValueError("cohort and episodes must be positive")
        for name in ("mask", ):
            path = getattr(self, name)
            if path is not None and not Path(path).exists():
                raise FileNotFoundError(path)
        for section in (self.dqn, self.snes):
            if section.checkpoint is not None and not Path(section.checkpoint).exists():
                raise FileNotFoundError(section.checkpoint)
        TrainConfig(**self.dqn.overrides)
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        dqn = dict(d.pop("dqn", {}) or {})
        snes = dict(d.pop("snes", {}) or {})
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown experiment keys: {sorted(unknown)}")
        dqn_ck = dqn.pop("checkpoint", None)
        overrides = dict(dqn.pop("overrides", {}) or {})
        overrides.update(dqn)
        train_fields = {f.name for f in dataclasses.fields(TrainConfig)}
        bad = set(overrides) - train_fields
        if bad:
            raise ValueError(f"unknown dqn keys: {sorted(bad)}")
        snes_fields = {f.name for f in dataclasses.fields(SnesSection)}
        bad = set(snes) - snes_fields
        if bad:
            raise ValueError(f"unknown snes keys: {sorted(bad)}")
        return cls(**d, dqn=DqnSection(dqn_ck, overrides), snes=SnesSection(**snes))


def load_config(path) -> ExperimentConfig:
    """Read a TOML experiment file (see README for the grammar) or a manifest."""
    path = Path(path)
    if path.suffix == ".json":
        doc = io.load_json(path)
        return ExperimentConfig.from_dict(doc["config"])
    import tomli

    with open(path, "rb") as fh:
        doc = tomli.load(fh)
    flat = dict(doc.pop("experiment", {}))
    for section in ("dqn", "snes"):
        if section in doc:
            flat[section] = doc.pop(section)
    if doc:
        raise ValueError(f"unknown config sections: {sorted(doc)}")
    return ExperimentConfig.from_dict(flat)


def master_seed(default: int) -> int:
    """The master seed, unless the environment variable overrides it."""
    raw = os.environ.get(SEED_ENV_VAR)
    if raw is None or raw == "":
        return default
    try:
        return int(raw)
    except ValueError:
        raise ValueError(f"{SEED_ENV_VAR} must be an integer, got {raw!r}") from None


def stage_seeds(master: int) -> dict:
    """One 32-bit seed per stage, derived from the master seed."""
    return {
        stage: int(np.random.SeedSequence([master, k]).generate_state(1)[0])
        for k, stage in enumerate(STAGES)
    }


def versions() -> dict:
    import scipy
    from importlib.metadata import PackageNotFoundError, version

    try:
        own = version("artifact")
    except PackageNotFoundError:
        own = "unknown"
    return {"python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "package": own}


def _write_curve(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


class _Run:
    def __init__(self, cfg: ExperimentConfig, out: Path):
        self.cfg = cfg
        self.out = out
        self.seeds = stage_seeds(cfg.seed)
        self.manifest = {
            "config": cfg.to_dict(),
            "seeds": {"master": cfg.seed, **self.seeds},
            "versions": versions(),
            "artifacts": {},
            "completed": [],
        }

    def save_manifest(self):
        io.save_json(self.out / "manifest.json", self.manifest)

    def record(self, stage, **artifacts):
        self.manifest["artifacts"].update({k: str(v) for k, v in artifacts.items()})
        self.manifest["completed"].append(stage)
        self.save_manifest()

    def mask(self):
        if self.cfg.mask is None:
            return None
        _, _, m = read_labeled_csv(self.cfg.mask)
        return m.astype(np.int64)

    def cohort(self, genotype, model, seed):
        factors = map_params(genotype)
        alpha = choose_alpha(factors, self.cfg.target_degree)
        make = lambda s: sample_agent(genotype, alpha, s, factors).network()  # noqa: E731
        return evaluate_cohort(make, self.cfg.env, self.cfg.cohort, self.cfg.episodes, seed, model)


def run_experiment(cfg: ExperimentConfig, out_dir) -> dict:
    """Run every stage; return the comparison report as a dict.

    A failing stage raises :class:`StageError` after the manifest has been
    written with the stages completed so far.
    """
    cfg.validate()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    run = _Run(cfg, out)
    run.save_manifest()
    cohorts = {}

    def stage(name, fn):
        log.info("stage %s", name)
        try:
            return fn()
        except Exception as exc:
            raise StageError(name, exc) from exc

    def train_dqn():
        path = out / "dqn_best.json"
        if cfg.dqn.checkpoint:
            g = io.load_genotype(cfg.dqn.checkpoint)
            check_conformal(g, cfg.env)
            run.record("train-dqn", dqn_checkpoint=cfg.dqn.checkpoint)
            return g
        dims = default_dims(cfg.env, cfg.genes, cfg.hidden, cfg.transmitters)
        seed = run.seeds["train-dqn"]
        g0 = init_genotype(dims, seed, cfg.constraint_mode, run.mask(), cfg.temperature)
        tc = TrainConfig(**{**cfg.dqn.overrides, "seed": seed})
        result = train(g0, cfg.env, tc)
        io.save_genotype(path, result.best.genotype,
                         {"env_id": cfg.env, "score": result.best.score, "step": result.best.step})
        curve = out / "dqn_curve.csv"
        _write_curve(curve, ("step", "validation_mean", "loss"), result.curve)
        run.record("train-dqn", dqn_checkpoint=path, dqn_curve=curve)
        return result.best.genotype

    def train_es():
        path = out / "snes_best.json"
        if cfg.snes.checkpoint:
            g = io.load_genotype(cfg.snes.checkpoint)
            check_conformal(g, cfg.env)
            run.record("train-snes", snes_checkpoint=cfg.snes.checkpoint)
            return g
        s = cfg.snes
        dims = default_dims(cfg.env, cfg.genes, s.hidden or cfg.hidden, cfg.transmitters, s.tonic_input)
        seed = run.seeds["train-snes"]
        template = init_genotype(dims, seed, cfg.constraint_mode, run.mask(), cfg.temperature)
        result = snes_train(template, cfg.env, s.popsize, s.m, s.budget, seed, s.sigma0, s.shaping,
                            target_degree=cfg.target_degree)
        io.save_genotype(path, result.best_genotype, {"env_id": cfg.env, "score": result.best_fitness})
        curve = out / "snes_generations.csv"
        _write_curve(curve, ("gen", "best_fitness", "mean_fitness", "env_steps"),
                     [(h.generation, h.best_fitness, h.mean_fitness, h.env_steps) for h in result.history])
        run.record("train-snes", snes_checkpoint=path, snes_generations=curve)
        return result.best_genotype

    def cohort(stage_name, model, make):
        path = out / f"cohort_{model}.json"
        c = make()
        save_cohort(path, c)
        if not len(c.valid):
            first = next(iter(c.errors.values()), "no scores")
            raise RuntimeError(f"every {model} agent failed; first error: {first}")
        cohorts[model] = c
        run.record(stage_name, **{f"cohort_{model}": path})

    dqn_g = stage("train-dqn", train_dqn)
    stage("cohort-synaptogen", lambda: cohort(
        "cohort-synaptogen", "synaptogen",
        lambda: run.cohort(dqn_g, "synaptogen", run.seeds["cohort-synaptogen"])))
    snes_g = stage("train-snes", train_es)
    stage("cohort-snes", lambda: cohort(
        "cohort-snes", "snes", lambda: run.cohort(snes_g, "snes", run.seeds["cohort-snes"])))

    def bio():
        make = lambda s: bio_agent(dqn_g, s, cfg.target_degree).network()  # noqa: E731
        return evaluate_cohort(make, cfg.env, cfg.cohort, cfg.episodes,
                               run.seeds["cohort-bio"], "bio-plausible")

    stage("cohort-bio", lambda: cohort("cohort-bio", "bio-plausible", bio))

    def finish():
        report = compare([cohorts["synaptogen"], cohorts["snes"], cohorts["bio-plausible"]])
        doc = report.to_dict()
        io.save_json(out / "report.json", doc)
        write_table(out / "table.csv", [report])
        arts = {"report": out / "report.json", "table": out / "table.csv"}
        if cfg.plots:
            for model, c in cohorts.items():
                p = out / f"hist_{model}.svg"
                plot_histogram(p, c)
                arts[f"hist_{model}"] = p
        run.record("compare", **arts)
        return doc

    return stage("compare", finish)
