"""Replication engine for the simulation designs.

Every replication draws its own seed from ``(base_seed, cell, replication)``
through :class:`numpy.random.SeedSequence`, so reports do not depend on the
number of worker threads or the order in which tasks finish.
"""

from __future__ import annotations

import itertools
import logging
import math
import os
from collections import Counter
from collections.abc import Iterable
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .break_estimators import DEFAULT_FLOOR, Method, SearchWindow, estimate_break
from .dgp import DgpConfig, gen_panel
from .errors import ExperimentError, NumericalError, ParameterError
from .factor_count import IcVariant, select_r
from .panel_model import estimate_pca

log = logging.getLogger(__name__)

MAX_FAILURE_SHARE = 0.10


@dataclass(frozen=True)
class TrueR:
    """Use the simulated pseudo-factor count."""


@dataclass(frozen=True)
class FixedR:
    r: int

    def __post_init__(self) -> None:
        if self.r < 1:
            raise ParameterError(f"fixed r must be >= 1, got {self.r}")


@dataclass(frozen=True)
class EstimateByIC:
    variant: IcVariant = IcVariant.IC1
    r_max: int | None = None


RPolicy = TrueR | FixedR | EstimateByIC


@dataclass(frozen=True)
class ExperimentSpec:
    grid: tuple[DgpConfig, ...]
    replications: int
    estimators: tuple[Method, ...] = (Method.QML,)
    r_policy: RPolicy = field(default_factory=TrueR)
    window: SearchWindow = field(default_factory=SearchWindow)
    floor: float = DEFAULT_FLOOR
    base_seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "grid", tuple(self.grid))
        object.__setattr__(self, "estimators", tuple(Method.parse(m) for m in self.estimators))
        problems = []
        if not self.grid:
            problems.append("grid must contain at least one cell")
        if int(self.replications) != self.replications or self.replications < 1:
            problems.append(f"replications must be a positive integer, got {self.replications}")
        if not self.estimators:
            problems.append("estimators must name at least one of 'qml', 'ls'")
        if len(set(self.estimators)) != len(self.estimators):
            problems.append("estimators contains duplicates")
        if self.floor <= 0:
            problems.append(f"floor must be positive, got {self.floor}")
        if not 0 <= self.base_seed < 2**64:
            problems.append(f"base_seed must be an unsigned 64-bit integer, got {self.base_seed}")
        if isinstance(self.r_policy, FixedR):
            for i, cfg in enumerate(self.grid):
                if self.r_policy.r > min(cfg.t_len, cfg.n_len):
                    problems.append(f"grid[{i}]: fixed r={self.r_policy.r} exceeds min(T, N)")
        if problems:
            raise ParameterError("; ".join(problems))


@dataclass(frozen=True)
class Summary:
    mae: float
    rmse: float
    p_correct: float
    histogram: dict[int, int]

    @property
    def n(self) -> int:
        return sum(self.histogram.values())


def summarize(deviations: Iterable[int]) -> Summary:
    """MAE, RMSE, exact-hit share and histogram of ``k_hat - k0``.

    Sums run over Python integers, so the result is independent of order.
    """
    devs = [int(d) for d in deviations]
    if not devs:
        raise ParameterError("cannot summarize an empty list of deviations")
    n = len(devs)
    hist = Counter(devs)
    return Summary(
        mae=sum(abs(d) for d in devs) / n,
        rmse=math.sqrt(sum(d * d for d in devs) / n),
        p_correct=hist.get(0, 0) / n,
        histogram=dict(sorted(hist.items())),
    )


@dataclass(frozen=True)
class CellReport:
    cell: int
    config: DgpConfig
    method: Method
    mae: float
    rmse: float
    p_correct: float
    histogram: dict[int, int]
    replications_used: int
    failures: int
    deviations: tuple[int, ...] = field(repr=False)

    def to_dict(self) -> dict:
        cfg = self.config.to_dict()
        cfg.pop("seed")
        return {
            "cell": self.cell,
            "label": self.config.label(),
            "config": cfg,
            "method": self.method.value,
            "mae": self.mae,
            "rmse": self.rmse,
            "p_correct": self.p_correct,
            "histogram": {str(k): v for k, v in self.histogram.items()},
            "replications_used": self.replications_used,
            "failures": self.failures,
        }


@dataclass(frozen=True)
class ExperimentReport:
    spec: ExperimentSpec
    cells: tuple[CellReport, ...]

    def get(self, cell: int, method: Method | str) -> CellReport:
        method = Method.parse(method)
        for c in self.cells:
            if c.cell == cell and c.method is method:
                return c
        raise KeyError((cell, method))

    def to_dict(self) -> dict:
        spec = self.spec
        policy = spec.r_policy
        if isinstance(policy, FixedR):
            pol = {"kind": "fixed", "r": policy.r}
        elif isinstance(policy, EstimateByIC):
            pol = {"kind": "ic", "variant": int(policy.variant), "r_max": policy.r_max}
        else:
            pol = {"kind": "true"}
        return {
            "replications": spec.replications,
            "base_seed": spec.base_seed,
            "estimators": [m.value for m in spec.estimators],
            "r_policy": pol,
            "tau1": spec.window.tau1,
            "tau2": spec.window.tau2,
            "floor": spec.floor,
            "cells": [c.to_dict() for c in self.cells],
        }


def replication_seed(base_seed: int, cell: int, rep: int) -> int:
    ss = np.random.SeedSequence(int(base_seed), spawn_key=(int(cell), int(rep)))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _choose_r(spec: ExperimentSpec, sim) -> int:
    policy = spec.r_policy
    if isinstance(policy, FixedR):
        return policy.r
    if isinstance(policy, EstimateByIC):
        return select_r(sim.panel, policy.r_max, policy.variant).r_hat
    return sim.r_pseudo


def run_replication(spec: ExperimentSpec, cell: int, rep: int) -> tuple[int, ...] | None:
    """Deviations ``k_hat - k0`` per estimator, or None if the run failed."""
    cfg = spec.grid[cell].with_seed(replication_seed(spec.base_seed, cell, rep))
    try:
        sim = gen_panel(cfg)
        fit = estimate_pca(sim.panel, _choose_r(spec, sim))
        return tuple(
            estimate_break(fit.g_hat, m, spec.window, spec.floor).k_hat - sim.k0
            for m in spec.estimators
        )
    except (NumericalError, np.linalg.LinAlgError) as exc:
        log.warning("replication %d of cell %d failed: %s", rep, cell, exc)
        return None


def run_experiment(spec: ExperimentSpec, threads: int | None = 1) -> ExperimentReport:
    """Run every replication of every grid cell and aggregate per estimator.

    Parameters
    ----------
    spec : ExperimentSpec
    threads : int or None
        Worker threads; None uses ``os.cpu_count()``.  The report is
        identical for any value.

    Raises
    ------
    ExperimentError
        If more than 10% of a cell's replications fail.
    """
    n_workers = threads or os.cpu_count() or 1
    tasks = list(itertools.product(range(len(spec.grid)), range(spec.replications)))
    # Validate windows up front so configuration mistakes are not counted as failures.
    for cfg in spec.grid:
        spec.window.bounds(cfg.t_len)

    if n_workers == 1:
        results = [run_replication(spec, c, s) for c, s in tasks]
    else:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            results = list(pool.map(lambda cs: run_replication(spec, *cs), tasks))

    cells = []
    for c, cfg in enumerate(spec.grid):
        rows = results[c * spec.replications : (c + 1) * spec.replications]
        ok = [row for row in rows if row is not None]
        failures = len(rows) - len(ok)
        if failures > MAX_FAILURE_SHARE * spec.replications:
            raise ExperimentError(
                f"cell {c} ({cfg.label()}): {failures} of {spec.replications} replications failed"
            )
        if not ok:
            raise ExperimentError(f"cell {c} ({cfg.label()}): no successful replications")
        for j, method in enumerate(spec.estimators):
            devs = tuple(row[j] for row in ok)
            s = summarize(devs)
            cells.append(
                CellReport(
                    cell=c,
                    config=cfg,
                    method=method,
                    mae=s.mae,
                    rmse=s.rmse,
                    p_correct=s.p_correct,
                    histogram=s.histogram,
                    replications_used=len(ok),
                    failures=failures,
                    deviations=devs,
                )
            )
    return ExperimentReport(spec=spec, cells=tuple(cells))


# ---------------------------------------------------------------------------
# JSON spec parsing

_GRID_KEYS = {"n_len", "t_len", "scenario", "r0", "k0", "rho", "alpha", "beta", "m"}
_TOP_KEYS = {"grid", "replications", "estimators", "r_policy", "tau1", "tau2", "floor", "base_seed"}


def _expand_grid(grid) -> tuple[list[dict], list[str]]:
    """A list of cells, or a dict of value lists expanded as a Cartesian product.

    In the product form ``sizes`` may give ``[N, T]`` pairs instead of
    separate ``n_len``/``t_len`` lists.
    """
    if isinstance(grid, list):
        return grid, []
    if not isinstance(grid, dict):
        return [], ["grid: must be a list of cells or an object of value lists"]
    axes = dict(grid)
    errors = []
    if "sizes" in axes:
        sizes = axes.pop("sizes")
        try:
            axes["_size"] = [(int(n), int(t)) for n, t in sizes]
        except (TypeError, ValueError):
            errors.append("grid.sizes: must be a list of [N, T] pairs")
            axes["_size"] = []
    for key, val in list(axes.items()):
        if not isinstance(val, list):
            axes[key] = [val]
    keys = list(axes)
    cells = []
    for combo in itertools.product(*(axes[k] for k in keys)):
        cell = dict(zip(keys, combo))
        if "_size" in cell:
            cell["n_len"], cell["t_len"] = cell.pop("_size")
        cells.append(cell)
    return cells, errors


def spec_from_dict(data: dict) -> ExperimentSpec:
    """Build an :class:`ExperimentSpec` from parsed JSON.

    All problems are collected and raised together in one ParameterError.
    """
    errors: list[str] = []
    if not isinstance(data, dict):
        raise ParameterError("experiment spec must be a JSON object")
    for key in sorted(set(data) - _TOP_KEYS):
        errors.append(f"{key}: unknown field")

    cells_raw, grid_errors = _expand_grid(data.get("grid"))
    errors += grid_errors
    if "grid" not in data:
        errors.append("grid: required")
    grid = []
    for i, cell in enumerate(cells_raw):
        if not isinstance(cell, dict):
            errors.append(f"grid[{i}]: must be an object")
            continue
        for key in sorted(set(cell) - _GRID_KEYS):
            errors.append(f"grid[{i}].{key}: unknown field")
        missing = [k for k in ("n_len", "t_len") if k not in cell]
        for k in missing:
            errors.append(f"grid[{i}].{k}: required")
        if missing:
            continue
        try:
            grid.append(DgpConfig(**{k: v for k, v in cell.items() if k in _GRID_KEYS}))
        except (ParameterError, TypeError) as exc:
            errors.append(f"grid[{i}]: {exc}")
    if not cells_raw and not grid_errors and "grid" in data:
        errors.append("grid: must contain at least one cell")

    reps = data.get("replications")
    if not isinstance(reps, int) or isinstance(reps, bool) or reps < 1:
        errors.append(f"replications: must be a positive integer, got {reps!r}")

    estimators = data.get("estimators", ["qml"])
    methods = []
    if isinstance(estimators, str):
        estimators = [estimators]
    for e in estimators:
        try:
            methods.append(Method.parse(e))
        except ParameterError as exc:
            errors.append(f"estimators: {exc}")

    policy_raw = data.get("r_policy", {"kind": "true"})
    policy: RPolicy = TrueR()
    try:
        kind = policy_raw.get("kind", "true")
        if kind == "fixed":
            policy = FixedR(int(policy_raw["r"]))
        elif kind == "ic":
            policy = EstimateByIC(IcVariant.parse(policy_raw.get("variant", 1)), policy_raw.get("r_max"))
        elif kind != "true":
            errors.append(f"r_policy.kind: must be 'true', 'fixed' or 'ic', got {kind!r}")
    except (AttributeError, KeyError, TypeError, ValueError) as exc:
        errors.append(f"r_policy: malformed ({exc})")

    window = None
    try:
        window = SearchWindow(float(data.get("tau1", 0.15)), float(data.get("tau2", 0.85)))
        for i, cfg in enumerate(grid):
            try:
                window.bounds(cfg.t_len)
            except ParameterError as exc:
                errors.append(f"grid[{i}]: {exc}")
    except (ParameterError, TypeError, ValueError) as exc:
        errors.append(f"tau1/tau2: {exc}")

    floor = data.get("floor", DEFAULT_FLOOR)
    if not isinstance(floor, (int, float)) or floor <= 0:
        errors.append(f"floor: must be a positive number, got {floor!r}")
    base_seed = data.get("base_seed", 0)
    if not isinstance(base_seed, int) or not 0 <= base_seed < 2**64:
        errors.append(f"base_seed: must be an unsigned 64-bit integer, got {base_seed!r}")

    if errors:
        raise ParameterError("invalid experiment spec:\n  " + "\n  ".join(errors))
    return ExperimentSpec(
        grid=tuple(grid),
        replications=reps,
        estimators=tuple(methods),
        r_policy=policy,
        window=window,
        floor=float(floor),
        base_seed=base_seed,
    )
