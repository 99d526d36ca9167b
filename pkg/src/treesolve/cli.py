"""Command-line entry point: ``treesolve solve | bench | check``."""

from __future__ import annotations

from . import _threads  # noqa: F401  (pins BLAS threads before numpy loads)

import argparse
import csv
import io
import json
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import (CompletionFailure, InconsistentMinors, Infeasible, InvalidDecomposition,
                     IterationBudgetExceeded, ParseError, TreesolveError, UnsupportedConstraint)
from .ipm import GeneralProgram, SolverOptions, robust_ipm
from .ipm.barriers import barrier_grad_hess
from .ipm.centering import make_engine, run_centering
from .linalg import svec
from .reduce import (BagProgram, Graph, SdpInstance, build_lovasz_theta, build_matrix_completion,
                     build_maxcut_sdp, completion_decomposition, completion_graph, read_graph, read_lp_json,
                     read_sdp_json, read_sdpa, sdp_to_bag_program, theta_decomposition)
from .treewidth import TreeDecomposition, min_degree_decomposition, read_pace_td, validate_decomposition

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_INFEASIBLE = 3
EXIT_BUDGET = 4
EXIT_MISMATCH = 5

PROBLEMS = ("maxcut", "maxkcut", "theta", "completion", "sdp", "lp")
FAMILIES = ("path", "cycle", "grid-strip")


class UsageError(Exception):
    """Bad command-line input; maps to exit code 2."""


@dataclass
class SolveConfig:
    mode: str = "auto"
    eps: float = 1e-3
    seed: int = 0
    preset: str = "practical"
    lam: Optional[float] = None
    eps_bar: Optional[float] = None
    alpha: Optional[float] = None
    sketch_dim: Optional[int] = None
    q: Optional[int] = None
    budget_multiplier: float = 1.0
    forced_refresh: bool = False
    out: Optional[str] = None
    timings: bool = True
    verbose: int = 0

    def __post_init__(self) -> None:
        if not (0.0 < self.eps <= 0.5):
            raise UsageError(f"--eps must lie in (0, 1/2], got {self.eps}")
        if self.mode not in ("auto", "reference", "fast", "both"):
            raise UsageError(f"unknown mode {self.mode!r}")

    def options(self, mode: str, **extra) -> SolverOptions:
        return SolverOptions(mode=mode, preset=self.preset, seed=self.seed, lam=self.lam, eps_bar=self.eps_bar,
                             alpha=self.alpha, sketch_dim=self.sketch_dim, q=self.q,
                             budget_multiplier=self.budget_multiplier, forced_refresh=self.forced_refresh, **extra)


@dataclass
class Problem:
    """A parsed problem: either an SDP with its bag program or a plain LP."""

    kind: str
    program: GeneralProgram
    sdp: Optional[SdpInstance] = None
    bag: Optional[BagProgram] = None
    td: Optional[TreeDecomposition] = None
    info: Dict[str, object] = field(default_factory=dict)

    def objective_of(self, x: np.ndarray) -> float:
        """Objective of a program iterate in the problem's own sense."""
        if self.bag is not None:
            return self.bag.sdp_objective_from_bags(x)
        return self.program.objective(x)


# --------------------------------------------------------------------------
# input handling
# --------------------------------------------------------------------------


def _read(path: Optional[str], flag: str) -> str:
    if not path:
        raise UsageError(f"{flag} is required for this problem")
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from exc


def build_instance(problem: str, text: str, k: int = 3) -> Tuple[SdpInstance, Graph]:
    """The SDP for ``problem`` and the graph its decomposition must cover."""
    if problem == "sdp":
        sdp = read_sdp_json(text) if text.lstrip().startswith("{") else read_sdpa(text)
        return sdp, Graph(sdp.n, sdp.graph_edges())
    g = read_graph(text)
    if problem == "maxcut":
        return build_maxcut_sdp(g, 2), g
    if problem == "maxkcut":
        return build_maxcut_sdp(g, k), g
    if problem == "theta":
        return build_lovasz_theta(g), g.complement()
    if problem == "completion":
        omega = {(u, v): w for u, v, w in g.edges}
        return build_matrix_completion(g.n, omega), completion_graph(g.n, omega)
    raise UsageError(f"unknown problem {problem!r}")


def lift_decomposition(problem: str, td: TreeDecomposition) -> TreeDecomposition:
    """Map a decomposition of the user graph to one of the SDP graph."""
    if problem == "theta":
        return theta_decomposition(td)
    if problem == "completion":
        return completion_decomposition(td)
    return td


def load_decomposition(args, base: Graph) -> TreeDecomposition:
    if args.td:
        td = read_pace_td(_read(args.td, "--td"))
        if td.n_vertices != base.n:
            td = TreeDecomposition(td.bags, td.edges, base.n)
        return td
    if args.auto_td:
        return min_degree_decomposition(base.n, base.pairs())
    raise UsageError("a tree decomposition is required: pass --td FILE or --auto-td")


def load_problem(args) -> Problem:
    problem = args.problem
    if problem == "lp":
        P = read_lp_json(_read(args.lp, "--lp"))
        return Problem("lp", P, info={"n": P.n_lp, "m": P.m_lp})
    src = args.sdp if problem == "sdp" else args.graph
    sdp, base = build_instance(problem, _read(src, "--sdp" if problem == "sdp" else "--graph"), args.k)
    td = lift_decomposition(problem, load_decomposition(args, base))
    res = validate_decomposition(sdp.graph_edges(), td, sdp.n)
    if not res:
        raise InvalidDecomposition(describe_failure(res, problem, base.n))
    bp = sdp_to_bag_program(sdp, td, validate=False)
    return Problem(problem, bp.program, sdp, bp, td,
                   {"n": sdp.n, "m": sdp.m, "bags": td.n_bags, "width": td.width})


def describe_failure(res, problem: str, n_user: int) -> str:
    """Validation message in the 1-based numbering of the input files."""
    def name(v: int) -> str:
        if problem == "theta" and v == n_user:
            return "apex"
        if problem == "completion" and v >= n_user:
            return f"{v - n_user + 1}'"
        return str(v + 1)

    if res.kind == "edge":
        a, b = res.item
        return f"uncovered edge {name(a)}-{name(b)}"
    if res.kind == "vertex":
        v = name(res.item[0])
        if "no bag" in res.message:
            return f"vertex {v} is in no bag"
        return f"bags containing vertex {v} are not connected"
    return res.message


# --------------------------------------------------------------------------
# solve
# --------------------------------------------------------------------------


def _fmt(v: float) -> str:
    return repr(float(v))


def write_matrix_csv(path: Path, M: np.ndarray) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        for row in np.atleast_2d(M):
            w.writerow([_fmt(v) for v in row])


def read_matrix_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = [[float(v) for v in row] for row in csv.reader(fh) if row]
    return np.array(rows, dtype=float)


def _progress(cfg: SolveConfig, label: str):
    if cfg.verbose <= 0:
        return None

    def cb(rec: dict) -> None:
        if rec.get("restart") or cfg.verbose > 1:
            print(f"[{label}] {rec['phase']} t={rec['t']:.4e} gap<={rec['gap']:.3e} "
                  f"log_phi={rec['log_phi']:.3f}", file=sys.stderr)
    return cb


def _run(prob: Problem, cfg: SolveConfig, mode: str, trace: Optional[List[np.ndarray]] = None):
    cb = _progress(cfg, mode)
    if trace is not None:
        inner = cb

        def cb(rec: dict) -> None:  # noqa: F811
            trace.append(rec.pop("x"))
            if inner is not None:
                inner(rec)
    opts = cfg.options(mode, callback=cb, trace_iterates=trace is not None)
    return robust_ipm(prob.program, cfg.eps, opts)


def _solution_fields(prob: Problem, res, out_dir: Optional[Path], tag: str = "") -> Dict[str, object]:
    rep: Dict[str, object] = {}
    if prob.kind == "lp":
        x = [float(v) for v in res.x]
        rep["x"] = x
        rep["objective"] = float(np.dot(prob.program.c, np.asarray(x)))
        rep["residual"] = prob.program.residual(np.asarray(x))
        return rep
    U = prob.bag.complete(res.x)
    if out_dir is not None:
        path = out_dir / f"U{tag}.csv"
        write_matrix_csv(path, U)
        U = read_matrix_csv(path)
        rep["u_factor"] = path.name
    else:
        rep["u_factor"] = None
    X = U @ U.T
    rep["objective"] = prob.sdp.objective(X)
    rep["sdp_violation"] = prob.sdp.violation(X)
    rep["residual"] = res.residual
    rep["bag_objective"] = prob.bag.sdp_objective_from_bags(res.x)
    if prob.sdp.meta.get("value") == "negated":
        rep["theta"] = -rep["objective"]
    return rep


def _run_fields(res, timings: bool) -> Dict[str, object]:
    rep: Dict[str, object] = {
        "iterations": res.iterations, "budget": res.budget, "restarts": res.restarts,
        "refreshed_blocks": res.refreshed, "gap_bound": res.gap_bound, "t_final": res.t_final,
        "max_step_ratio": res.max_step_ratio, "step_bound_ok": res.step_bound_ok,
    }
    if timings:
        rep["wall_time"] = res.seconds
        rep["phase_times"] = {k: v.seconds for k, v in res.phases.items()}
    return rep


def solve_problem(prob: Problem, cfg: SolveConfig) -> Tuple[Dict[str, object], int]:
    out_dir = Path(cfg.out) if cfg.out else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
    g = prob.program.geometry
    LR = g.L * g.R
    report: Dict[str, object] = {"problem": prob.kind, "eps": cfg.eps, "mode": cfg.mode, "seed": cfg.seed,
                                 "preset": cfg.preset, **prob.info, "LR": LR, "n_blocks": prob.program.n,
                                 "n_lp": prob.program.n_lp, "m_lp": prob.program.m_lp}
    if cfg.mode != "both":
        res = _run(prob, cfg, cfg.mode)
        report.update(_run_fields(res, cfg.timings))
        report.update(_solution_fields(prob, res, out_dir))
        return report, EXIT_OK
    tr_ref: List[np.ndarray] = []
    tr_fast: List[np.ndarray] = []
    ref = _run(prob, cfg, "reference", tr_ref)
    fast = _run(prob, cfg, "fast", tr_fast)
    report.update(_run_fields(fast, cfg.timings))
    report.update(_solution_fields(prob, fast, out_dir))
    obj_ref, obj_fast = prob.objective_of(ref.x), prob.objective_of(fast.x)
    delta = abs(obj_fast - obj_ref)
    tol = 10.0 * cfg.eps * LR
    cmp = {"objective_reference": obj_ref, "objective_fast": obj_fast, "objective_delta": delta,
           "tolerance": tol, "max_iterate_deviation": max_deviation(tr_ref, tr_fast),
           "iterations_reference": ref.iterations, "agree": bool(delta <= tol)}
    if cfg.timings:
        cmp["wall_time_reference"] = ref.seconds
    report["comparison"] = cmp
    return report, (EXIT_OK if delta <= tol else EXIT_MISMATCH)


def max_deviation(a: Sequence[np.ndarray], b: Sequence[np.ndarray]) -> float:
    """Largest entrywise gap between matching iterates, relative to the iterate scale."""
    dev = 0.0
    for xa, xb in zip(a, b):
        if xa.shape != xb.shape:
            continue
        dev = max(dev, float(np.max(np.abs(xa - xb), initial=0.0)) / max(1.0, float(np.max(np.abs(xa), initial=0.0))))
    if len(a) != len(b):
        dev = math.inf
    return dev


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"


def cmd_solve(args) -> int:
    cfg = config_from_args(args)
    prob = load_problem(args)
    report, code = solve_problem(prob, cfg)
    text = _dump(report)
    if cfg.out:
        (Path(cfg.out) / "report.json").write_text(text)
    sys.stdout.write(text)
    if code == EXIT_MISMATCH:
        cmp = report["comparison"]
        print(f"error: reference and fast objectives differ by {cmp['objective_delta']:.3e} "
              f"(allowed {cmp['tolerance']:.3e})", file=sys.stderr)
    return code


# --------------------------------------------------------------------------
# bench
# --------------------------------------------------------------------------


def family_instance(family: str, n: int) -> Tuple[SdpInstance, TreeDecomposition]:
    """MaxCut SDP on a structured graph together with a fixed-width decomposition."""
    if family == "path":
        if n < 2:
            raise UsageError("path instances need n >= 2")
        g = Graph.path(n)
        td = TreeDecomposition([(i, i + 1) for i in range(n - 1)], [(i, i + 1) for i in range(n - 2)], n)
    elif family == "cycle":
        if n < 3:
            raise UsageError("cycle instances need n >= 3")
        g = Graph.cycle(n)
        td = TreeDecomposition([(0, i, i + 1) for i in range(1, n - 1)], [(i, i + 1) for i in range(n - 3)], n)
    elif family == "grid-strip":
        if n < 4 or n % 2:
            raise UsageError("grid-strip instances need an even n >= 4")
        cols = n // 2
        edges = [(2 * j, 2 * j + 1) for j in range(cols)]
        edges += [(2 * j + a, 2 * j + 2 + a) for j in range(cols - 1) for a in (0, 1)]
        g = Graph(n, edges)
        td = TreeDecomposition([(2 * j, 2 * j + 1, 2 * j + 2, 2 * j + 3) for j in range(cols - 1)],
                               [(j, j + 1) for j in range(cols - 2)], n)
    else:
        raise UsageError(f"unknown family {family!r}")
    return build_maxcut_sdp(g), td


def centered_start(P: GeneralProgram, scale: float = 100.0) -> Tuple[np.ndarray, np.ndarray, float]:
    """Identity bag matrices with a dual slack that makes them exactly central at the returned t."""
    x = np.concatenate([svec(np.eye(blk.k)) for blk in P.barriers])
    grad = np.concatenate([barrier_grad_hess(blk, x[P.sl(i)], False)[1] for i, blk in enumerate(P.barriers)])
    t = scale * max(float(np.linalg.norm(P.c[P.sl(i)])) for i in range(P.n))
    return x, P.c - t * grad, t


def run_segment(P: GeneralProgram, options: SolverOptions, folds: float = 1.0):
    """Follow the central path of a bag program over ``folds`` e-folds of t.

    The program has no feasible-start phase here: the identity bag matrices are
    feasible for unit-diagonal problems, so this isolates the per-step cost.
    """
    x, s, t = centered_start(P)
    t_end = t * math.exp(-folds)
    prm = options.params(P, t, t_end)
    start = time.perf_counter()
    engine = make_engine(P, prm, options)
    x, s, st = run_centering(engine, P, x, s, t, t_end, prm, callback=options.callback,
                             trace=options.trace_iterates)
    return x, st, time.perf_counter() - start


@dataclass
class BenchRow:
    n: int
    tau: int
    iterations: int
    objective: float
    wall_time: float
    restarts: int = 0
    LR: float = 0.0


def bench_one(family: str, n: int, cfg: SolveConfig, mode: str, workload: str, folds: float,
              trace: Optional[List[np.ndarray]] = None) -> BenchRow:
    sdp, td = family_instance(family, n)
    bp = sdp_to_bag_program(sdp, td)
    P = bp.program
    cb = None
    if trace is not None:
        def cb(rec: dict) -> None:
            trace.append(rec["x"])
    opts = cfg.options(mode, callback=cb, trace_iterates=trace is not None)
    if workload == "segment":
        x, st, secs = run_segment(P, opts, folds)
        return BenchRow(n, td.width, st.steps, bp.sdp_objective_from_bags(x), secs, st.restarts,
                        P.geometry.L * P.geometry.R)
    res = robust_ipm(P, cfg.eps, opts)
    return BenchRow(n, td.width, res.iterations, bp.sdp_objective_from_bags(res.x), res.seconds, res.restarts,
                    P.geometry.L * P.geometry.R)


def bench_table(family: str, sizes: Sequence[int], cfg: SolveConfig, workload: str = "solve",
                folds: float = 1.0) -> Tuple[List[str], List[List[object]], List[int]]:
    """CSV header, rows, and the sizes whose two modes disagree beyond 10 eps L R."""
    if cfg.mode != "both":
        header = ["family", "n", "tau", "iterations", "restarts", "objective"]
        if cfg.timings:
            header.append("wall_time")
        rows = []
        for n in sizes:
            r = bench_one(family, n, cfg, cfg.mode, workload, folds)
            row = [family, r.n, r.tau, r.iterations, r.restarts, _fmt(r.objective)]
            if cfg.timings:
                row.append(f"{r.wall_time:.6f}")
            rows.append(row)
            _bench_log(cfg, row)
        return header, rows, []
    header = ["family", "n", "tau", "iterations", "restarts", "objective", "objective_reference",
              "max_iterate_deviation"]
    if cfg.timings:
        header += ["wall_time", "wall_time_reference"]
    rows = []
    bad = []
    for n in sizes:
        tr_ref: List[np.ndarray] = []
        tr_fast: List[np.ndarray] = []
        ref = bench_one(family, n, cfg, "reference", workload, folds, tr_ref)
        fast = bench_one(family, n, cfg, "fast", workload, folds, tr_fast)
        row = [family, n, fast.tau, fast.iterations, fast.restarts, _fmt(fast.objective), _fmt(ref.objective),
               f"{max_deviation(tr_ref, tr_fast):.3e}"]
        if cfg.timings:
            row += [f"{fast.wall_time:.6f}", f"{ref.wall_time:.6f}"]
        rows.append(row)
        _bench_log(cfg, row)
        if abs(fast.objective - ref.objective) > 10.0 * cfg.eps * fast.LR:
            bad.append(n)
    return header, rows, bad


def _bench_log(cfg: SolveConfig, row) -> None:
    if cfg.verbose > 0:
        print("bench: " + " ".join(str(v) for v in row), file=sys.stderr, flush=True)


def parse_sizes(text: str) -> List[int]:
    try:
        sizes = [int(v) for v in text.replace(" ", "").split(",") if v]
    except ValueError as exc:
        raise UsageError(f"--sizes must be a comma-separated list of integers: {text!r}") from exc
    if not sizes:
        raise UsageError("--sizes is empty")
    return sorted(sizes)


def cmd_bench(args) -> int:
    cfg = config_from_args(args)
    sizes = parse_sizes(args.sizes)
    header, rows, bad = bench_table(args.bench_family, sizes, cfg, args.workload, args.folds)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    if cfg.out:
        Path(cfg.out).parent.mkdir(parents=True, exist_ok=True)
        Path(cfg.out).write_text(buf.getvalue())
    sys.stdout.write(buf.getvalue())
    if bad:
        print(f"error: reference and fast objectives disagree for n in {bad}", file=sys.stderr)
        return EXIT_MISMATCH
    return EXIT_OK


# --------------------------------------------------------------------------
# check
# --------------------------------------------------------------------------


def cmd_check(args) -> int:
    if args.problem == "lp":
        P = read_lp_json(_read(args.lp, "--lp"))
        deficit = P.m_lp - int(np.linalg.matrix_rank(P.A.toarray())) if P.m_lp else 0
        print("ok")
        if deficit:
            print(f"warning: constraints are linearly dependent (rank deficit {deficit})", file=sys.stderr)
        return EXIT_OK
    src = args.sdp if args.problem == "sdp" else args.graph
    sdp, base = build_instance(args.problem, _read(src, "--sdp" if args.problem == "sdp" else "--graph"), args.k)
    td = lift_decomposition(args.problem, load_decomposition(args, base))
    res = validate_decomposition(sdp.graph_edges(), td, sdp.n)
    code = EXIT_OK
    if res:
        print("ok")
    else:
        print(describe_failure(res, args.problem, base.n))
        code = EXIT_USAGE
    deficit = sdp.rank_deficit()
    if deficit:
        print(f"warning: constraints are linearly dependent (rank deficit {deficit})", file=sys.stderr)
    return code


# --------------------------------------------------------------------------
# argument parsing
# --------------------------------------------------------------------------


def config_from_args(args) -> SolveConfig:
    return SolveConfig(mode=args.mode, eps=args.eps, seed=args.seed, preset=args.preset, lam=args.lam,
                       eps_bar=args.eps_bar, alpha=args.alpha, sketch_dim=args.sketch_dim, q=args.q,
                       budget_multiplier=args.budget_mult, forced_refresh=args.forced_refresh, out=args.out,
                       timings=not args.no_timings, verbose=args.verbose)


def _add_input(p: argparse.ArgumentParser, required_problem: bool) -> None:
    p.add_argument("--problem", choices=PROBLEMS, required=required_problem, default=None)
    p.add_argument("--graph", help="edge list (p n m header, e u v [w] lines, 1-based)")
    p.add_argument("--sdp", help="SDPA sparse file or SDP JSON")
    p.add_argument("--lp", help="LP JSON (shape, A triplets, b, c, lower, upper)")
    p.add_argument("--td", help="tree decomposition in PACE .td format")
    p.add_argument("--auto-td", action="store_true", help="build a decomposition with a greedy heuristic")
    p.add_argument("--k", type=int, default=3, help="number of parts for maxkcut")


def _add_solver(p: argparse.ArgumentParser, mode_default: str = "auto") -> None:
    p.add_argument("--eps", type=float, default=1e-3)
    p.add_argument("--mode", choices=("auto", "reference", "fast", "both"), default=mode_default,
                   help="auto uses the dense engine below 500 scalar variables")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.add_argument("--no-timings", action="store_true", help="omit wall-clock fields for reproducible output")
    p.add_argument("--preset", choices=("practical", "theory"), default="practical")
    p.add_argument("--lam", type=float)
    p.add_argument("--eps-bar", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--sketch-dim", type=int)
    p.add_argument("--q", type=int)
    p.add_argument("--budget-mult", type=float, default=1.0)
    p.add_argument("--forced-refresh", action="store_true")
    p.add_argument("-v", "--verbose", action="count", default=0)


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="treesolve", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    ps = sub.add_parser("solve", help="solve one problem")
    _add_input(ps, True)
    _add_solver(ps)
    ps.set_defaults(func=cmd_solve)
    pb = sub.add_parser("bench", help="scaling table over a MaxCut family")
    pb.add_argument("--bench-family", choices=FAMILIES, default="path")
    pb.add_argument("--sizes", default="32,64,128")
    pb.add_argument("--workload", choices=("solve", "segment"), default="solve",
                    help="full solve, or one e-fold of path following from a central start")
    pb.add_argument("--folds", type=float, default=1.0)
    _add_solver(pb)
    pb.set_defaults(func=cmd_bench)
    pc = sub.add_parser("check", help="validate a decomposition and the constraint rank")
    _add_input(pc, True)
    pc.set_defaults(func=cmd_check)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ParseError, InvalidDecomposition, UnsupportedConstraint) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Infeasible as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except IterationBudgetExceeded as exc:
        print(f"budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (InconsistentMinors, CompletionFailure, TreesolveError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
