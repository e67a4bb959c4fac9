"""Synthetic data generation, evaluation metrics, the exhaustive oracle,
and sweep orchestration.

The generator splits a Philox stream per array (support, signal, matrix,
noise), so instances are reproducible bit-for-bit from the seed alone and
the substreams are independent of each other's draw counts.
"""

from __future__ import annotations

import csv
import itertools
import math
import time
from dataclasses import dataclass, field, replace
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import bnb, heuristics, relaxations
from .core import (
    InfeasibleInstance,
    ProblemInstance,
    ProblemTooLarge,
    SolutionVector,
    least_squares_residual_sq,
    objective,
    residual_sq,
    validate,
)
from .relaxations import min_weighted_norm_on_ball

CSV_HEADER = [
    "method", "n", "m", "k", "alpha", "gamma", "seed",
    "sparsity", "acc", "tpr", "tnr", "objective", "residual_sq",
    "runtime_ms", "status",
]


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters of one synthetic draw."""

    n: int
    m: int
    k: int
    alpha: float
    seed: int
    sigma: float = 10.0

    def __post_init__(self):
        if not 0 <= self.k <= self.n:
            raise ValueError("k must lie in [0, n]")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")


@dataclass(frozen=True)
class Metrics:
    sparsity: int
    acc: float
    tpr: float
    tnr: float
    tpr_defined: bool = True
    tnr_defined: bool = True
    objective: float = float("nan")
    residual_sq: float = float("nan")
    runtime: float = float("nan")


def generate(spec: SyntheticSpec) -> tuple[ProblemInstance, np.ndarray]:
    """Draw (instance, ground truth) for a synthetic spec.

    The planted vector has exactly k nonzero coordinates with entries of
    standard deviation sigma/sqrt(n); the sensing matrix uses the same
    scale; measurements are corrupted by noise of standard deviation sigma;
    and the residual budget is alpha times the squared measurement norm,
    computed exactly from the drawn b.
    """
    root = np.random.SeedSequence(spec.seed)
    ss_support, ss_signal, ss_matrix, ss_noise = root.spawn(4)
    scale = spec.sigma / math.sqrt(spec.n)

    rng = np.random.Generator(np.random.Philox(ss_support))
    support = rng.choice(spec.n, size=spec.k, replace=False)
    x_true = np.zeros(spec.n)
    rng = np.random.Generator(np.random.Philox(ss_signal))
    x_true[support] = rng.normal(0.0, scale, size=spec.k)
    rng = np.random.Generator(np.random.Philox(ss_matrix))
    A = rng.normal(0.0, scale, size=(spec.m, spec.n))
    rng = np.random.Generator(np.random.Philox(ss_noise))
    noise = rng.normal(0.0, spec.sigma, size=spec.m)
    b = A @ x_true + noise
    eps = spec.alpha * float(b @ b)
    return ProblemInstance(A=A, b=b, epsilon=eps), x_true


def evaluate(x_true, x_hat, threshold: float = 1e-4) -> Metrics:
    """Support recovery metrics of x_hat against x_true.

    The positive-rate denominators follow the predicted support: TPR is the
    fraction of predicted nonzeros that are true nonzeros, TNR the fraction
    of predicted zeros that are true zeros.  When a denominator is empty
    the rate is reported as 1.0 with its ``*_defined`` flag cleared.
    """
    x_true = np.asarray(x_true, dtype=float)
    x_hat = np.asarray(x_hat, dtype=float)
    if x_true.shape != x_hat.shape:
        raise ValueError("x_true and x_hat must have equal length")
    n = x_true.shape[0]
    true_pos_set = np.abs(x_true) > threshold
    pred_pos = np.abs(x_hat) > threshold
    tp = int(np.sum(pred_pos & true_pos_set))
    tn = int(np.sum(~pred_pos & ~true_pos_set))
    n_pred = int(np.sum(pred_pos))
    acc = (tp + tn) / n
    tpr_defined = n_pred > 0
    tnr_defined = n_pred < n
    tpr = tp / n_pred if tpr_defined else 1.0
    tnr = tn / (n - n_pred) if tnr_defined else 1.0
    return Metrics(
        sparsity=n_pred, acc=acc, tpr=tpr, tnr=tnr,
        tpr_defined=tpr_defined, tnr_defined=tnr_defined,
    )


def brute_force_oracle(
    instance: ProblemInstance, max_n: int = 15
) -> tuple[np.ndarray, float]:
    """Exhaustive optimum of the regularized sparsity problem.

    Enumerates supports by increasing cardinality; a support is feasible
    iff its least-squares residual is within the budget, and its value is
    the cardinality plus the minimum weighted squared norm over the
    residual ball restricted to those columns (found by ridge-path
    bisection).  Enumeration stops once the cardinality alone exceeds the
    best value seen, which cannot cut off an improving support as every
    candidate's value is at least its cardinality.
    """
    validate(instance)
    n = instance.n
    if n > max_n:
        raise ProblemTooLarge(f"n = {n} exceeds the oracle guard {max_n}")
    if float(instance.b @ instance.b) <= instance.epsilon:
        return np.zeros(n), 0.0
    if least_squares_residual_sq(instance.A, instance.b) > instance.epsilon:
        raise InfeasibleInstance("no support meets the residual budget")

    best_val = math.inf
    best_x = None
    for size in range(1, n + 1):
        if size >= best_val:
            break
        for support in itertools.combinations(range(n), size):
            cols = instance.A[:, list(support)]
            if least_squares_residual_sq(cols, instance.b) > instance.epsilon:
                continue
            xs, _ = min_weighted_norm_on_ball(
                cols, instance.b, instance.epsilon,
                weights=instance.weights[list(support)],
            )
            x_full = np.zeros(n)
            x_full[list(support)] = xs
            val = objective(instance, x_full)
            if val < best_val:
                best_val = val
                best_x = x_full
    if best_x is None:
        raise InfeasibleInstance("no support meets the residual budget")
    return best_x, float(best_val)


def _run_method(method: str, instance: ProblemInstance, time_budget: float | None):
    """Dispatch one method; returns (x, status, extra)."""
    if method == "bnb":
        res = bnb.solve(instance, bnb.BnBConfig(delta=0.0, time_limit=time_budget))
        return res.x_best, res.status, {"lower": res.lower, "gap": res.gap}
    if method == "omp":
        return heuristics.omp(instance).x, "Optimal-heuristic", {}
    if method == "bpd":
        raw = relaxations.solve_bpd(instance, time_budget)
        return heuristics.sparsify(instance, raw.x).x, "Optimal-heuristic", {}
    if method == "bpd-raw":
        return relaxations.solve_bpd(instance, time_budget).x, "Optimal-heuristic", {}
    if method == "irwl1":
        raw = heuristics.irwl1(instance)
        return heuristics.sparsify(instance, raw.x).x, "Optimal-heuristic", {}
    if method == "irwl1-raw":
        return heuristics.irwl1(instance).x, "Optimal-heuristic", {}
    raise ValueError(f"unknown method {method!r}")


def run_cell(point: dict, seed: int, methods, time_budgets=None) -> list[dict]:
    """All method rows for one (grid point, seed) cell."""
    time_budgets = time_budgets or {}
    spec = SyntheticSpec(
        n=point["n"], m=point["m"], k=point["k"], alpha=point["alpha"], seed=seed,
        sigma=point.get("sigma", 10.0),
    )
    instance, x_true = generate(spec)
    gamma = point.get("gamma")
    if gamma is not None:
        instance = replace(instance, gamma=float(gamma))
    rows = []
    for method in methods:
        base = {
            "method": method, "n": spec.n, "m": spec.m, "k": spec.k,
            "alpha": spec.alpha, "gamma": instance.gamma, "seed": seed,
        }
        t0 = time.monotonic()
        try:
            x, status, _ = _run_method(method, instance, time_budgets.get(method))
        except Exception as exc:
            rows.append({
                **base, "sparsity": "", "acc": "", "tpr": "", "tnr": "",
                "objective": "", "residual_sq": "",
                "runtime_ms": round((time.monotonic() - t0) * 1e3, 3),
                "status": type(exc).__name__,
            })
            continue
        elapsed = time.monotonic() - t0
        metrics = evaluate(x_true, x)
        rows.append({
            **base,
            "sparsity": metrics.sparsity,
            "acc": metrics.acc,
            "tpr": metrics.tpr,
            "tnr": metrics.tnr,
            "objective": objective(instance, x),
            "residual_sq": residual_sq(instance, x),
            "runtime_ms": round(elapsed * 1e3, 3),
            "status": status,
        })
    return rows


@dataclass
class SweepGrid:
    """Cartesian sweep specification."""

    n: list[int]
    m: list[int]
    k: list[int]
    alpha: list[float]
    gamma: list[float | None] = field(default_factory=lambda: [None])
    seeds: list[int] = field(default_factory=lambda: [0])
    sigma: float = 10.0

    def points(self) -> list[dict]:
        return [
            {"n": n, "m": m, "k": k, "alpha": a, "gamma": g, "sigma": self.sigma}
            for n, m, k, a, g in itertools.product(
                self.n, self.m, self.k, self.alpha, self.gamma
            )
        ]


def _cell_worker(args):
    point, seed, methods, budgets = args
    return run_cell(point, seed, methods, budgets)


def run_sweep(
    grid: SweepGrid,
    methods,
    time_budgets: dict | None = None,
    jobs: int = 1,
    on_row=None,
) -> list[dict]:
    """Run every method over the grid, one row per (method, point, seed).

    Per-row failures are recorded in the status column and do not stop the
    sweep.  Rows are produced in deterministic (point, seed, method) order
    regardless of ``jobs``; ``on_row`` is invoked as each row is merged,
    which lets callers stream a CSV that stays valid on interruption.
    """
    tasks = [
        (point, seed, list(methods), time_budgets)
        for point in grid.points()
        for seed in grid.seeds
    ]
    rows: list[dict] = []
    if jobs <= 1:
        batches = map(_cell_worker, tasks)
    else:
        pool = ProcessPoolExecutor(max_workers=jobs)
        batches = pool.map(_cell_worker, tasks)
    try:
        for batch in batches:
            for row in batch:
                rows.append(row)
                if on_row is not None:
                    on_row(row)
    finally:
        if jobs > 1:
            pool.shutdown(wait=False, cancel_futures=True)
    return rows


def write_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_HEADER)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def summarize(rows) -> list[dict]:
    """Mean sparsity/accuracy per (method, grid point) over seeds."""
    groups: dict[tuple, list[dict]] = {}
    for row in rows:
        if row["sparsity"] == "":
            continue
        key = (row["method"], row["n"], row["m"], row["k"], row["alpha"], row["gamma"])
        groups.setdefault(key, []).append(row)
    out = []
    for key in sorted(groups, key=str):
        rs = groups[key]
        out.append({
            "method": key[0], "n": key[1], "m": key[2], "k": key[3],
            "alpha": key[4], "gamma": key[5], "rows": len(rs),
            "mean_sparsity": float(np.mean([r["sparsity"] for r in rs])),
            "mean_acc": float(np.mean([r["acc"] for r in rs])),
            "mean_runtime_ms": float(np.mean([r["runtime_ms"] for r in rs])),
        })
    return out
