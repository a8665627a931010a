"""Experiment presets, seeded repetitions and the learning-rate grid search."""

from __future__ import annotations

import configparser
import enum
import hashlib
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .data import SyntheticSpec, generate_synthetic_ridge, parse_libsvm, write_trace_csv
from .deterministic import DivergenceError, ReferenceOptimum, reference_optimum
from .objective import ErmProblem, LossKind
from .stochastic import Algorithm, IterateChoice, StochOptConfig, StochTrace, run

log = logging.getLogger(__name__)

DATA_DIR_ENV = "STOCHSTEFF_DATA_DIR"
DEFAULT_PASSES = 30.0


class DatasetMissingError(FileNotFoundError):
    pass


class AllDivergedError(RuntimeError):
    def __init__(self, outcomes: dict):
        self.outcomes = outcomes
        listing = ", ".join(f"{eta:g}: diverged" for eta in outcomes)
        super().__init__(f"every rate in the grid diverged ({listing})")


class MRule(enum.Enum):
    N = "n"
    TWO_N = "2n"
    EXPLICIT = "explicit"


@dataclass(frozen=True)
class Preset:
    name: str
    loss: LossKind
    lam: float
    m_rule: MRule
    b: int
    n: Optional[int] = None
    d: Optional[int] = None
    file: Optional[str] = None


PRESETS = {
    "SyntheticRidge": Preset("SyntheticRidge", LossKind.SQUARED, 1e-4, MRule.TWO_N, 4, n=5000, d=100),
    "LogisticW6a": Preset("LogisticW6a", LossKind.LOGISTIC, 1e-4, MRule.N, 16, n=17188, d=300, file="w6a"),
    "SquaredHingeA6a": Preset("SquaredHingeA6a", LossKind.SQUARED_HINGE, 1e-3, MRule.N, 16, n=11220, d=123,
                              file="a6a"),
}


@dataclass(frozen=True)
class AlgorithmSpec:
    """Template for one algorithm; m, b, seed and budget come from the experiment."""

    algorithm: Algorithm
    fixed_eta: Optional[float] = None
    quasi: bool = False
    iterate: Optional[IterateChoice] = None
    label: Optional[str] = None

    @property
    def name(self) -> str:
        if self.label:
            return self.label
        name = self.algorithm.value + ("-quasi" if self.quasi else "")
        return name

    def config(self, m: int, b: int, outer_iters: int, seed: int, prox=None) -> StochOptConfig:
        return StochOptConfig(self.algorithm, m=m, b=b, outer_iters=outer_iters, seed=seed,
                              fixed_eta=self.fixed_eta, quasi=self.quasi, iterate=self.iterate, prox=prox)


DEFAULT_ALGORITHMS = (
    AlgorithmSpec(Algorithm.SSBB),
    AlgorithmSpec(Algorithm.SSM),
    AlgorithmSpec(Algorithm.SVRG_BB),
    AlgorithmSpec(Algorithm.SGD_BB),
)


@dataclass(frozen=True)
class ExperimentConfig:
    problem: str = "SyntheticRidge"  # preset name or "custom"
    data_path: Optional[str] = None  # custom problems
    loss: Optional[LossKind] = None
    lam: Optional[float] = None
    m_rule: Optional[MRule] = None
    m_explicit: Optional[int] = None
    b: Optional[int] = None
    algorithms: tuple = DEFAULT_ALGORITHMS
    repetitions: int = 10
    base_seed: int = 0
    passes: float = DEFAULT_PASSES
    outer_iters: Optional[int] = None  # overrides passes when set
    output_dir: str = "results"
    data_dir: Optional[str] = None
    n: Optional[int] = None  # synthetic size overrides
    d: Optional[int] = None
    data_seed: int = 0
    zero_one_labels: bool = False
    workers: int = 1

    def __post_init__(self):
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if self.problem != "custom" and self.problem not in PRESETS:
            raise ValueError(f"unknown problem {self.problem!r}; choose from {sorted(PRESETS)} or 'custom'")
        if self.problem == "custom" and (self.data_path is None or self.loss is None):
            raise ValueError("custom problems need data_path and loss")
        if not self.algorithms:
            raise ValueError("no algorithms configured")
        names = [a.name for a in self.algorithms]
        if len(set(names)) != len(names):
            raise ValueError(f"algorithm labels must be unique, got {names}")
        if self.m_rule is MRule.EXPLICIT and not self.m_explicit:
            raise ValueError("explicit m rule needs m_explicit")

    @property
    def preset(self) -> Optional[Preset]:
        return PRESETS.get(self.problem)

    def resolved(self) -> dict:
        """Effective loss, lambda, m rule and b after applying the preset."""
        pre = self.preset
        return {
            "loss": self.loss or pre.loss,
            "lam": self.lam if self.lam is not None else (pre.lam if pre else 0.0),
            "m_rule": self.m_rule or (pre.m_rule if pre else MRule.N),
            "b": self.b or (pre.b if pre else 1),
        }

    def m_for(self, n: int) -> int:
        rule = self.resolved()["m_rule"]
        if rule is MRule.N:
            return n
        if rule is MRule.TWO_N:
            return 2 * n
        return int(self.m_explicit)

    def digest(self) -> str:
        """Hash of everything that affects the numbers (not paths or workers)."""
        payload = {k: v for k, v in asdict(self).items() if k not in ("output_dir", "data_dir", "workers")}
        text = json.dumps(payload, sort_keys=True, default=lambda o: getattr(o, "value", str(o)))
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def resolve_data_dir(explicit: Optional[str]) -> Optional[Path]:
    d = explicit or os.environ.get(DATA_DIR_ENV)
    return Path(d) if d else None


def load_problem(cfg: ExperimentConfig) -> ErmProblem:
    r = cfg.resolved()
    pre = cfg.preset
    if cfg.problem == "custom":
        path = Path(cfg.data_path)
        if not path.is_file():
            raise DatasetMissingError(f"dataset file {path} not found")
        data = parse_libsvm(path, n_features=cfg.d, zero_one_to_pm=cfg.zero_one_labels)
    elif pre.file is None:
        data, _ = generate_synthetic_ridge(SyntheticSpec(cfg.n or pre.n, cfg.d or pre.d, cfg.data_seed))
    else:
        base = resolve_data_dir(cfg.data_dir)
        if base is None:
            raise DatasetMissingError(
                f"preset {pre.name} needs the LIBSVM file '{pre.file}'; pass --data-dir or set {DATA_DIR_ENV}")
        path = base / pre.file
        if not path.is_file():
            raise DatasetMissingError(f"preset {pre.name} expects the LIBSVM file {path}")
        data = parse_libsvm(path, n_features=pre.d, zero_one_to_pm=cfg.zero_one_labels)
    return ErmProblem(data, r["loss"], r["lam"]).with_constants()


def outer_iters_for(spec: StochOptConfig, n: int, passes: float) -> int:
    """Outer iterations that fit in ``passes`` data passes (at least one)."""
    return max(1, math.floor(passes * n / spec.evals_per_outer(n) + 1e-9))


def _run_one(args):
    p, cfg = args
    x0 = np.zeros(p.d)
    try:
        return run(p, cfg, x0), None
    except DivergenceError as exc:
        return exc.trace, str(exc)


@dataclass
class AlgorithmResult:
    name: str
    traces: list
    seeds: list
    errors: list  # None or divergence message per run
    mean_suboptimality: np.ndarray = field(default_factory=lambda: np.zeros(0))
    mean_wall: np.ndarray = field(default_factory=lambda: np.zeros(0))
    mean_passes: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def excluded(self) -> int:
        return sum(e is not None for e in self.errors)


@dataclass
class ExperimentSummary:
    f_star: ReferenceOptimum
    results: list
    output_dir: Path
    n: int
    d: int

    def table(self) -> str:
        lines = [f"{'algorithm':<16}{'final mean subopt':>20}{'passes':>10}{'excluded':>10}"]
        for r in self.results:
            final = r.mean_suboptimality[-1] if r.mean_suboptimality.size else math.nan
            passes = r.mean_passes[-1] if r.mean_passes.size else math.nan
            lines.append(f"{r.name:<16}{final:>20.6e}{passes:>10.2f}{r.excluded:>10d}")
        return "\n".join(lines)


def _pad(values: list, length: int) -> np.ndarray:
    # a run that stopped early at a stationary point keeps its last value
    arr = np.asarray(values, dtype=np.float64)
    if arr.size < length:
        arr = np.concatenate([arr, np.full(length - arr.size, arr[-1])])
    return arr


def _average(res: AlgorithmResult, f_star: float) -> None:
    ok = [t for t, e in zip(res.traces, res.errors) if e is None]
    if not ok:
        return
    length = max(len(t) for t in ok)
    res.mean_suboptimality = np.mean([_pad(t.f_values, length) - f_star for t in ok], axis=0)
    res.mean_wall = np.mean([_pad(t.wall_seconds, length) for t in ok], axis=0)
    res.mean_passes = np.mean([_pad(list(t.passes), length) for t in ok], axis=0)


def _write_mean_csv(res: AlgorithmResult, path: Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("outer_iter,passes,mean_suboptimality,mean_wall_seconds,runs\n")
        runs = len(res.traces) - res.excluded
        for k, (ps, sub, wall) in enumerate(zip(res.mean_passes, res.mean_suboptimality, res.mean_wall)):
            fh.write(f"{k},{ps:.17g},{sub:.17g},{wall:.17g},{runs}\n")


def run_experiment(cfg: ExperimentConfig, problem: Optional[ErmProblem] = None) -> ExperimentSummary:
    """All algorithms x repetitions from x0 = 0; seeds are base_seed + r.

    Writes ``runs/<alg>_seed<s>.csv``, ``mean_<alg>.csv`` and
    ``manifest.ini`` under ``cfg.output_dir``.
    """
    p = problem if problem is not None else load_problem(cfg)
    ref = reference_optimum(p, tol=1e-12 if p.loss is LossKind.SQUARED else 1e-10)
    out = Path(cfg.output_dir)
    (out / "runs").mkdir(parents=True, exist_ok=True)
    m, b = cfg.m_for(p.n), cfg.resolved()["b"]
    jobs, owners = [], []
    for spec in cfg.algorithms:
        probe = spec.config(m, b, 1, 0)
        iters = cfg.outer_iters if cfg.outer_iters is not None else outer_iters_for(probe, p.n, cfg.passes)
        for r in range(cfg.repetitions):
            jobs.append((p, spec.config(m, b, iters, cfg.base_seed + r)))
            owners.append(spec.name)
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            outcomes = list(pool.map(_run_one, jobs))
    else:
        outcomes = [_run_one(j) for j in jobs]

    results = {s.name: AlgorithmResult(s.name, [], [], []) for s in cfg.algorithms}
    for name, (_, job_cfg), (trace, err) in zip(owners, jobs, outcomes):
        res = results[name]
        res.traces.append(trace)
        res.seeds.append(job_cfg.seed)
        res.errors.append(err)
        with open(out / "runs" / f"{name}_seed{job_cfg.seed}.csv", "w", encoding="utf-8") as fh:
            write_trace_csv(trace, fh, f_star=ref.f_star)
    for res in results.values():
        if res.excluded:
            log.warning("%s: %d of %d runs diverged and were excluded", res.name, res.excluded, len(res.traces))
        _average(res, ref.f_star)
        _write_mean_csv(res, out / f"mean_{res.name}.csv")
    summary = ExperimentSummary(ref, list(results.values()), out, p.n, p.d)
    _write_manifest(cfg, p, summary, m, b)
    return summary


def _write_manifest(cfg, p, summary, m, b) -> None:
    man = configparser.ConfigParser()
    man.optionxform = str
    ref = summary.f_star
    man["experiment"] = {
        "problem": cfg.problem,
        "config_hash": cfg.digest(),
        "n": str(p.n),
        "d": str(p.d),
        "lambda": repr(p.lam),
        "loss": p.loss.value,
        "m": str(m),
        "b": str(b),
        "mu": repr(p.mu),
        "L": repr(p.L),
        "f_star": "%.17g" % ref.f_star,
        "f_star_certified": str(ref.certified).lower(),
        "f_star_grad_norm": "%.17g" % ref.grad_norm,
        "repetitions": str(cfg.repetitions),
        "base_seed": str(cfg.base_seed),
    }
    for res in summary.results:
        for seed, err, trace in zip(res.seeds, res.errors, res.traces):
            man[f"run {res.name} seed {seed}"] = {
                "algorithm": res.name,
                "seed": str(seed),
                "config_hash": cfg.digest(),
                "excluded": str(err is not None).lower(),
                "reason": err or "",
                "outer_iters": str(len(trace) - 1),
                "fallbacks": str(len(trace.fallbacks)),
            }
        man[f"summary {res.name}"] = {
            "excluded_runs": str(res.excluded),
            "final_mean_suboptimality": "%.17g" % (res.mean_suboptimality[-1] if res.mean_suboptimality.size
                                                  else math.nan),
        }
    with open(summary.output_dir / "manifest.ini", "w", encoding="utf-8") as fh:
        man.write(fh)


# --- grid search ----------------------------------------------------------

def grid_search_outcomes(p: ErmProblem, template: StochOptConfig, grid: Sequence[float],
                         outer_iters: Optional[int] = None) -> dict:
    """eta -> final objective value (None when the run diverged)."""
    if not grid:
        raise ValueError("empty rate grid")
    if any(not eta > 0 for eta in grid):
        raise ValueError("grid rates must be positive")
    iters = outer_iters if outer_iters is not None else template.outer_iters
    outcomes = {}
    for eta in sorted(set(float(e) for e in grid)):
        cfg = template.with_(fixed_eta=eta, outer_iters=iters)
        try:
            tr = run(p, cfg, np.zeros(p.d))
            outcomes[eta] = tr.f_values[-1]
        except DivergenceError:
            outcomes[eta] = None
    return outcomes


def grid_search_rate(p: ErmProblem, template: StochOptConfig, grid: Sequence[float],
                     outer_iters: Optional[int] = None) -> float:
    """Rate with the smallest final objective; ties go to the smaller rate."""
    outcomes = grid_search_outcomes(p, template, grid, outer_iters)
    best, best_val = None, math.inf
    for eta, val in outcomes.items():  # ascending
        if val is not None and val < best_val:
            best, best_val = eta, val
    if best is None:
        raise AllDivergedError(outcomes)
    return best


# --- config files ---------------------------------------------------------

def _parse_m(text: str) -> tuple[MRule, Optional[int]]:
    t = text.strip().lower()
    if t == "n":
        return MRule.N, None
    if t == "2n":
        return MRule.TWO_N, None
    return MRule.EXPLICIT, int(t)


def load_config(path: Union[str, os.PathLike], **overrides) -> ExperimentConfig:
    """Read an INI experiment file; see the README for the schema."""
    cp = configparser.ConfigParser(inline_comment_prefixes=(";",))
    cp.optionxform = str.lower
    with open(path, encoding="utf-8") as fh:
        cp.read_file(fh)
    if "experiment" not in cp:
        raise ValueError(f"{path}: missing [experiment] section")
    e = cp["experiment"]
    kw: dict = {}
    if "problem" in e:
        kw["problem"] = e["problem"]
    if "data_path" in e:
        kw["data_path"] = e["data_path"]
    if "loss" in e:
        kw["loss"] = LossKind(e["loss"])
    if "lambda" in e:
        kw["lam"] = e.getfloat("lambda")
    if "m" in e:
        kw["m_rule"], kw["m_explicit"] = _parse_m(e["m"])
    for key in ("b", "repetitions", "base_seed", "outer_iters", "n", "d", "data_seed", "workers"):
        if key in e:
            kw[key] = e.getint(key)
    if "passes" in e:
        kw["passes"] = e.getfloat("passes")
    for key in ("output_dir", "data_dir"):
        if key in e:
            kw[key] = e[key]
    if "zero_one_labels" in e:
        kw["zero_one_labels"] = e.getboolean("zero_one_labels")
    algs = []
    for sec in cp.sections():
        if not sec.startswith("algorithm"):
            continue
        s = cp[sec]
        label = sec[len("algorithm"):].strip() or None
        algs.append(AlgorithmSpec(
            Algorithm.parse(s.get("algorithm", label or "")),
            fixed_eta=s.getfloat("eta") if "eta" in s else None,
            quasi=s.getboolean("quasi", fallback=False),
            iterate=IterateChoice(s["iterate"]) if "iterate" in s else None,
            label=label,
        ))
    if algs:
        kw["algorithms"] = tuple(algs)
    kw.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig(**kw)
