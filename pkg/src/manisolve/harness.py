"""Experiment orchestration, instance I/O and the ``manisolve`` command line.

Exit codes: 0 success, 1 validation/parse/I-O error, 2 check failure,
3 a solver run hit a rank-deficient constraint Jacobian.
"""

from __future__ import annotations

import argparse
import csv
import enum
import json
import logging
import sys
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .analysis import iterations_to_distance, tube_stepsize
from .checks import eigen_tube_gradient_bound, run_checks
from .errors import ManisolveError, RankDeficientError
from .problem import (EigenInstance, Problem, eigenvalue_problem, make_instance,
                      sample_initialization)
from .riemannian import RetractionConfig, project_to_manifold, run_rgd
from .sqp import SolverConfig, Termination, Trajectory, run_sqp, stepsize

__all__ = [
    "EXIT_OK", "EXIT_INVALID", "EXIT_CHECK_FAILED", "EXIT_RANK",
    "ExperimentKind", "ExperimentSpec", "InstanceSpec",
    "save_instance", "load_instance",
    "cmd_experiment", "cmd_check", "cmd_solve", "main",
]

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_CHECK_FAILED = 2
EXIT_RANK = 3

DIST_TOL = 1e-8


class ExperimentKind(str, enum.Enum):
    VARY_KAPPA = "vary_kappa"
    VARY_RADIUS = "vary_radius"
    COMPARE_RGD = "compare_rgd"
    GLOBAL_DECAY = "global_decay"
    VERIFY = "verify"


_DEFAULTS = {
    ExperimentKind.VARY_KAPPA: dict(kappas=(25.0, 50.0, 100.0), radii=(0.01,), n_instances=20),
    ExperimentKind.VARY_RADIUS: dict(kappas=(100.0,), radii=(0.01, 1.0, 100.0), n_instances=20),
    ExperimentKind.COMPARE_RGD: dict(kappas=(10.0,), radii=(0.01,), n_instances=5),
    ExperimentKind.GLOBAL_DECAY: dict(kappas=(10.0,), radii=(1.0,), n_instances=1),
    ExperimentKind.VERIFY: dict(kappas=(10.0,), radii=(0.01,), n_instances=1),
}


@dataclass
class ExperimentSpec:
    """One experiment sweep.

    ``kappas`` and ``radii`` are swept or take their first entry, depending
    on ``kind``.  ``ks`` and ``decay_c`` only matter for ``global_decay``.
    """

    kind: ExperimentKind
    n: int = 200
    kappas: Sequence[float] = (25.0, 50.0, 100.0)
    radii: Sequence[float] = (0.01,)
    n_instances: int = 20
    seed: int = 0
    max_iters: int = 20000
    out_dir: Path = Path("out")
    ks: Sequence[int] = (100, 1000, 10000)
    decay_c: float = 1.0

    def __post_init__(self):
        self.kind = ExperimentKind(self.kind)
        self.out_dir = Path(self.out_dir)
        self.kappas = tuple(float(k) for k in self.kappas)
        self.radii = tuple(float(r) for r in self.radii)
        self.ks = tuple(int(k) for k in self.ks)

    @classmethod
    def with_defaults(cls, kind, **overrides) -> "ExperimentSpec":
        kind = ExperimentKind(kind)
        params = dict(_DEFAULTS[kind])
        params.update({k: v for k, v in overrides.items() if v is not None})
        return cls(kind=kind, **params)

    def validate(self) -> None:
        if self.n < 3:
            raise ValueError(f"n must be at least 3, got {self.n}")
        if self.n_instances < 1:
            raise ValueError("n_instances must be at least 1")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.kind is ExperimentKind.VERIFY:
            return
        if not self.kappas:
            raise ValueError(f"{self.kind.value} needs at least one kappa")
        if any(k <= 1 for k in self.kappas):
            raise ValueError("every kappa must exceed 1")
        if self.kind is not ExperimentKind.GLOBAL_DECAY:
            if not self.radii:
                raise ValueError(f"{self.kind.value} needs at least one radius")
            if any(r < 0 for r in self.radii):
                raise ValueError("radii must be non-negative")
        elif not self.ks or any(k < 1 for k in self.ks):
            raise ValueError("global_decay needs positive iteration counts ks")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["kind"] = self.kind.value
        d["out_dir"] = str(self.out_dir)
        d["kappas"] = list(self.kappas)
        d["radii"] = list(self.radii)
        d["ks"] = list(self.ks)
        return d


# ---------------------------------------------------------------- instances

@dataclass
class InstanceSpec:
    """Serializable recipe for an eigenvalue instance and its starting point."""

    n: int
    kappa: float
    seed: int
    eps: float = 0.01
    matrix_file: Optional[str] = None

    def build(self, base_dir: Path = Path(".")) -> tuple[EigenInstance, np.ndarray]:
        if self.matrix_file:
            A = _load_matrix(base_dir / self.matrix_file)
            inst = _instance_from_matrix(A)
        else:
            inst = make_instance(self.n, self.kappa, self.seed)
        return inst, sample_initialization(inst.x_star, self.eps, self.seed)


def _load_matrix(path: Path) -> np.ndarray:
    if path.suffix == ".npy":
        return np.load(path)
    return np.loadtxt(path, ndmin=2)


def _instance_from_matrix(A: np.ndarray) -> EigenInstance:
    A = 0.5 * (A + A.T)
    w, V = np.linalg.eigh(A)
    return EigenInstance(A=A, eigvals=w, x_star=V[:, 0].copy())


def save_instance(path, spec: InstanceSpec, dump_matrix: bool = False) -> Path:
    """Write ``spec`` as JSON; optionally dump ``A`` as row-major text beside it."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    d = asdict(spec)
    if dump_matrix:
        mat = path.with_suffix(".A.txt")
        np.savetxt(mat, make_instance(spec.n, spec.kappa, spec.seed).A, fmt="%.17e")
        d["matrix_file"] = mat.name
    path.write_text(json.dumps(d, indent=2, sort_keys=True) + "\n")
    return path


def load_instance(path) -> InstanceSpec:
    """Parse an instance JSON file; raises ``ValueError`` on malformed input."""
    try:
        d = json.loads(Path(path).read_text())
        spec = InstanceSpec(n=int(d["n"]), kappa=float(d["kappa"]), seed=int(d["seed"]),
                            eps=float(d.get("eps", 0.01)), matrix_file=d.get("matrix_file"))
    except (OSError, KeyError, TypeError, json.JSONDecodeError) as exc:
        raise ValueError(f"cannot read instance {path}: {exc}") from exc
    if spec.eps < 0:
        raise ValueError("eps must be non-negative")
    return spec


# ---------------------------------------------------------------- experiments

def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _median_curves(trajs: list[Trajectory], columns=("dist", "rgrad_norm", "feas")):
    length = max(len(t.records) for t in trajs)
    out = {}
    for c in columns:
        rows = []
        for t in trajs:
            v = t.column(c)
            rows.append(np.concatenate([v, np.full(length - v.size, v[-1])]))
        out[c] = np.median(np.array(rows), axis=0)
    return length, out


def _write_median(path: Path, trajs: list[Trajectory]) -> None:
    length, cols = _median_curves(trajs)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k"] + [f"median_{c}" for c in cols])
        for k in range(length):
            w.writerow([k] + [repr(float(cols[c][k])) for c in cols])


def _instance_seed(spec: ExperimentSpec, i: int) -> int:
    return spec.seed + i


def _init_seed(spec: ExperimentSpec, i: int) -> int:
    return spec.seed + 100_000 + i


def _entry(run_id, spec, kappa, radius, seed, eta, csv_path, traj, **extra):
    d = {"run_id": run_id, "kind": spec.kind.value, "n": spec.n, "kappa": kappa,
         "radius": radius, "seed": seed, "eta": eta, "csv_path": csv_path,
         "termination": traj.termination.value, "iters": traj.iters}
    d.update(extra)
    return d


def _run_local(spec: ExperimentSpec, runs_dir: Path, groups: list[tuple[float, float]],
               group_key: str):
    entries, aggregates = [], []
    for kappa, radius in groups:
        trajs = []
        for i in range(spec.n_instances):
            iseed = _instance_seed(spec, i)
            inst = make_instance(spec.n, kappa, iseed)
            prob = eigenvalue_problem(inst)
            eta = stepsize(prob, inst.x_star, "experiment")
            x0 = sample_initialization(inst.x_star, radius, _init_seed(spec, i))
            traj = run_sqp(prob, x0, SolverConfig(eta=eta, max_iters=spec.max_iters,
                                                  grad_tol=1e-12), x_star=inst.x_star)
            run_id = f"{spec.kind.value}_kappa{kappa:g}_radius{radius:g}_i{i:03d}"
            rel = f"runs/{run_id}.csv"
            traj.to_csv(runs_dir.parent / rel)
            entries.append(_entry(run_id, spec, kappa, radius, iseed, eta, rel, traj,
                                  iters_to_dist=iterations_to_distance(traj, DIST_TOL)))
            trajs.append(traj)
        label = f"{group_key}{kappa if group_key == 'kappa' else radius:g}"
        rel = f"median_{spec.kind.value}_{label}.csv"
        _write_median(runs_dir.parent / rel, trajs)
        counts = [e["iters_to_dist"] for e in entries[-spec.n_instances:]]
        reached = [c for c in counts if c is not None]
        aggregates.append({"csv_path": rel, "kappa": kappa, "radius": radius,
                           "n_runs": len(trajs), "n_reached_dist_tol": len(reached),
                           "median_iters_to_dist": (float(np.median(reached))
                                                    if reached else None)})
    return entries, aggregates


def _run_compare(spec: ExperimentSpec, runs_dir: Path):
    kappa, radius = spec.kappas[0], spec.radii[0]
    entries = []
    for i in range(spec.n_instances):
        iseed = _instance_seed(spec, i)
        inst = make_instance(spec.n, kappa, iseed)
        prob = eigenvalue_problem(inst)
        eta = stepsize(prob, inst.x_star, "canonical")
        x0 = project_to_manifold(prob, sample_initialization(inst.x_star, radius,
                                                             _init_seed(spec, i)))
        cfg = SolverConfig(eta=eta, max_iters=spec.max_iters, grad_tol=1e-12,
                           record_iterates=True)
        t_sqp = run_sqp(prob, x0, cfg, x_star=inst.x_star)
        t_rgd = run_rgd(prob, x0, cfg, RetractionConfig(), x_star=inst.x_star)
        xs_a, xs_b = t_sqp.iterates(), t_rgd.iterates()
        length = max(len(xs_a), len(xs_b))
        pad = lambda X: np.vstack([X, np.repeat(X[-1:], length - len(X), axis=0)])
        dev = np.linalg.norm(pad(xs_a) - pad(xs_b), axis=1)
        for traj, method in ((t_sqp, "sqp"), (t_rgd, "rgd")):
            traj.extra_columns["deviation"] = [float(v) for v in dev[:len(traj.records)]]
            run_id = f"compare_rgd_kappa{kappa:g}_i{i:03d}_{method}"
            rel = f"runs/{run_id}.csv"
            traj.to_csv(runs_dir.parent / rel)
            entries.append(_entry(run_id, spec, kappa, radius, iseed, eta, rel, traj,
                                  method=method, max_deviation=float(dev.max()),
                                  final_dist=float(np.linalg.norm(traj.x_final
                                                                  - inst.x_star))))
    return entries, []


def _run_global(spec: ExperimentSpec, runs_dir: Path):
    kappa = spec.kappas[0]
    entries, aggregates = [], []
    for i in range(spec.n_instances):
        iseed = _instance_seed(spec, i)
        inst = make_instance(spec.n, kappa, iseed)
        prob = eigenvalue_problem(inst)
        x0 = np.random.default_rng(_init_seed(spec, i)).standard_normal(spec.n)
        x0 /= np.linalg.norm(x0)
        mins = []
        for k in spec.ks:
            eps = spec.decay_c / k
            eta = tube_stepsize(eps, 2.0, eigen_tube_gradient_bound(inst, eps))
            traj = run_sqp(prob, x0, SolverConfig(eta=eta, max_iters=k, grad_tol=0.0,
                                                  feas_cap=None), x_star=inst.x_star)
            run_id = f"global_decay_kappa{kappa:g}_i{i:03d}_k{k}"
            rel = f"runs/{run_id}.csv"
            traj.to_csv(runs_dir.parent / rel)
            min_rg = float(np.min(traj.column("rgrad_norm")))
            max_feas = float(np.max(traj.column("feas")))
            mins.append(min_rg)
            entries.append(_entry(run_id, spec, kappa, None, iseed, eta, rel, traj,
                                  k=k, tube_eps=eps, min_rgrad=min_rg, max_feas=max_feas,
                                  stayed_in_tube=bool(max_feas <= eps)))
        if len(spec.ks) > 1:
            slope = float(np.polyfit(np.log(spec.ks), np.log(mins), 1)[0])
            aggregates.append({"instance": i, "ks": list(spec.ks), "min_rgrad": mins,
                               "loglog_slope": slope})
    return entries, aggregates


def cmd_experiment(spec: ExperimentSpec) -> int:
    """Run one experiment sweep and write CSVs plus ``manifest.json`` under ``out_dir``."""
    try:
        spec.validate()
    except ValueError as exc:
        log.error("invalid experiment spec: %s", exc)
        return EXIT_INVALID
    if spec.kind is ExperimentKind.VERIFY:
        return cmd_check(spec.seed, spec.out_dir)
    runs_dir = spec.out_dir / "runs"
    try:
        runs_dir.mkdir(parents=True, exist_ok=True)
        if spec.kind is ExperimentKind.VARY_KAPPA:
            groups = [(k, spec.radii[0]) for k in spec.kappas]
            entries, aggregates = _run_local(spec, runs_dir, groups, "kappa")
        elif spec.kind is ExperimentKind.VARY_RADIUS:
            groups = [(spec.kappas[0], r) for r in spec.radii]
            entries, aggregates = _run_local(spec, runs_dir, groups, "radius")
        elif spec.kind is ExperimentKind.COMPARE_RGD:
            entries, aggregates = _run_compare(spec, runs_dir)
        else:
            entries, aggregates = _run_global(spec, runs_dir)
        _write_json(spec.out_dir / "manifest.json",
                    {"spec": spec.to_dict(), "runs": entries, "aggregates": aggregates})
    except OSError as exc:
        log.error("I/O failure: %s", exc)
        return EXIT_INVALID
    rank_fail = [e["run_id"] for e in entries
                 if e["termination"] == Termination.RANK_DEFICIENT.value]
    if rank_fail:
        log.error("rank-deficient runs: %s", ", ".join(rank_fail))
        return EXIT_RANK
    return EXIT_OK


def cmd_check(seed: int, out_dir, problem: Optional[Problem] = None) -> int:
    """Run the verification battery, writing one JSON report per check.

    Returns 0 if every check passes and 2 otherwise.  ``problem`` replaces
    the instance used by the finite-difference derivative check.
    """
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        reports = run_checks(seed, problem)
        for r in reports:
            _write_json(out_dir / f"{r.check_name}.json", r.to_dict())
        failed = [r.check_name for r in reports if not r.passed]
        _write_json(out_dir / "summary.json",
                    {"seed": seed, "n_checks": len(reports), "failed": failed,
                     "pass": not failed})
    except OSError as exc:
        log.error("I/O failure: %s", exc)
        return EXIT_INVALID
    for r in reports:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.check_name:<30} "
              f"statistic={r.statistic:.6g} threshold={r.threshold:.6g}")
    if failed:
        print("failed checks: " + ", ".join(failed))
        return EXIT_CHECK_FAILED
    return EXIT_OK


def cmd_solve(instance_file, eta: Optional[float] = None, max_iters: int = 1000,
              method: str = "sqp", out=None, grad_tol: float = 1e-10) -> int:
    """Solve a stored instance with SQP or RGD and write the trajectory CSV.

    ``eta`` defaults to the canonical stepsize.  RGD starts from the
    Gauss-Newton projection of the stored starting point.
    """
    if eta is not None and not eta > 0:
        log.error("--eta must be positive")
        return EXIT_INVALID
    if method not in ("sqp", "rgd"):
        log.error("unknown method %r", method)
        return EXIT_INVALID
    instance_file = Path(instance_file)
    try:
        spec = load_instance(instance_file)
        inst, x0 = spec.build(instance_file.parent)
    except (ValueError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_INVALID
    prob = eigenvalue_problem(inst)
    try:
        eta = stepsize(prob, inst.x_star, "canonical") if eta is None else eta
        cfg = SolverConfig(eta=eta, max_iters=max_iters, grad_tol=grad_tol)
        if method == "sqp":
            traj = run_sqp(prob, x0, cfg, x_star=inst.x_star)
        else:
            traj = run_rgd(prob, project_to_manifold(prob, x0), cfg, x_star=inst.x_star)
    except ManisolveError as exc:
        log.error("%s", exc)
        return EXIT_RANK if isinstance(exc, RankDeficientError) else EXIT_INVALID
    out = Path(out) if out is not None else instance_file.with_name(
        f"{instance_file.stem}_{method}.csv")
    try:
        traj.to_csv(out)
    except OSError as exc:
        log.error("I/O failure: %s", exc)
        return EXIT_INVALID
    summary = traj.summary()
    summary.update(eta=eta, csv_path=str(out))
    print(json.dumps(summary, sort_keys=True))
    return EXIT_RANK if traj.termination is Termination.RANK_DEFICIENT else EXIT_OK


# ---------------------------------------------------------------- CLI

class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _float_list(text: str) -> list[float]:
    text = text.strip()
    if not text:
        return []
    return [float(t) for t in text.split(",")]


def _positive_float(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="manisolve", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    e = sub.add_parser("experiment", help="run an experiment sweep")
    e.add_argument("--kind", required=True,
                   choices=["vary-kappa", "vary-radius", "compare-rgd", "global-decay", "verify"])
    e.add_argument("--n", type=int, default=None, help="dimension (default 200)")
    e.add_argument("--kappa", type=_float_list, default=None, help="comma-separated list")
    e.add_argument("--radius", type=_float_list, default=None, help="comma-separated list")
    e.add_argument("--instances", type=int, default=None)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--max-iters", type=int, default=None)
    e.add_argument("--out", required=True)
    e.add_argument("--full", action="store_true", help="use n = 1000")

    c = sub.add_parser("check", help="run the verification battery")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--out", required=True)

    s = sub.add_parser("solve", help="solve a stored instance")
    s.add_argument("file")
    s.add_argument("--eta", type=_positive_float, default=None)
    s.add_argument("--max-iters", type=int, default=1000)
    s.add_argument("--method", choices=["sqp", "rgd"], default="sqp")
    s.add_argument("--grad-tol", type=float, default=1e-10)
    s.add_argument("--out", default=None)

    i = sub.add_parser("instance", help="write an instance file")
    i.add_argument("file")
    i.add_argument("--n", type=int, required=True)
    i.add_argument("--kappa", type=float, required=True)
    i.add_argument("--seed", type=int, default=0)
    i.add_argument("--eps", type=float, default=0.01)
    i.add_argument("--dump-matrix", action="store_true")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except _UsageError as exc:
        print(f"manisolve: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "experiment":
        n = 1000 if args.full else args.n
        try:
            spec = ExperimentSpec.with_defaults(
                args.kind.replace("-", "_"), n=n, kappas=args.kappa, radii=args.radius,
                n_instances=args.instances, seed=args.seed, max_iters=args.max_iters,
                out_dir=Path(args.out))
        except ValueError as exc:
            print(f"manisolve: error: {exc}", file=sys.stderr)
            return EXIT_INVALID
        return cmd_experiment(spec)
    if args.command == "check":
        return cmd_check(args.seed, args.out)
    if args.command == "solve":
        return cmd_solve(args.file, eta=args.eta, max_iters=args.max_iters,
                         method=args.method, out=args.out, grad_tol=args.grad_tol)
    try:
        make_instance(args.n, args.kappa, args.seed)
        save_instance(args.file, InstanceSpec(args.n, args.kappa, args.seed, args.eps),
                      dump_matrix=args.dump_matrix)
    except (ValueError, OSError) as exc:
        print(f"manisolve: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
