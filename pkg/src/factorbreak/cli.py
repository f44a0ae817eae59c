"""Command-line interface.

Subcommands: ``simulate``, ``estimate``, ``ic``, ``experiment`` and
``limit-dist``.  Exit codes are 0 on success, 2 for invalid parameters or
input, 3 for I/O failures and 4 for numerical failures.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .break_estimators import (
    DEFAULT_FLOOR,
    LimitSpec,
    Method,
    SearchWindow,
    estimate_break,
    factor_xi_sampler,
    simulate_limit_distribution,
    wishart_xi_sampler,
    zero_xi_sampler,
)
from .dgp import DgpConfig, Scenario, gen_panel
from .errors import ExperimentError, NumericalError, ParameterError
from .factor_count import select_r
from .montecarlo import run_experiment, spec_from_dict
from .panel_model import PanelData, estimate_pca

EXIT_OK = 0
EXIT_PARAM = 2
EXIT_IO = 3
EXIT_NUMERIC = 4

SEED_ENV = "FACTORBREAK_SEED"


class CliIOError(Exception):
    """Filesystem failure, reported with the offending path."""


# ---------------------------------------------------------------------------
# Panel CSV I/O


def fmt(x: float) -> str:
    """Shortest decimal string that parses back to the same double."""
    return repr(float(x))


def write_panel_csv(path: Path, values: np.ndarray) -> None:
    t_len, n_len = values.shape
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([f"series_{i + 1}" for i in range(n_len)])
            for row in values:
                w.writerow([fmt(v) for v in row])
    except OSError as exc:
        raise CliIOError(f"cannot write {path}: {exc.strerror or exc}") from exc


def read_panel_csv(path: Path, transpose: bool = False) -> np.ndarray:
    """Parse a header-plus-numbers CSV into a float matrix.

    Raises ParameterError naming the line of the first malformed row.
    """
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise CliIOError(f"cannot read {path}: {exc.strerror or exc}") from exc
    rows = []
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ParameterError(f"{path}: file is empty")
        width = len(header)
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != width:
                raise ParameterError(f"{path}: line {line}: expected {width} fields, found {len(row)}")
            try:
                vals = [float(c) for c in row]
            except ValueError:
                bad = next(c for c in row if not _is_float(c))
                raise ParameterError(f"{path}: line {line}: cannot parse {bad!r} as a number") from None
            if not all(np.isfinite(vals)):
                raise ParameterError(f"{path}: line {line}: missing or non-finite value")
            rows.append(vals)
    if not rows:
        raise ParameterError(f"{path}: no data rows")
    x = np.array(rows, dtype=np.float64)
    return x.T if transpose else x


def _is_float(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def _write_rows(path: Path, header: list[str], rows) -> None:
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
    except OSError as exc:
        raise CliIOError(f"cannot write {path}: {exc.strerror or exc}") from exc


def _write_json(path: Path, payload) -> None:
    try:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=False)
            fh.write("\n")
    except OSError as exc:
        raise CliIOError(f"cannot write {path}: {exc.strerror or exc}") from exc


def _read_json(path: Path):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise CliIOError(f"cannot read {path}: {exc.strerror or exc}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParameterError(f"{path}: line {exc.lineno}: invalid JSON ({exc.msg})") from None


def sidecar_path(csv_path: Path) -> Path:
    return csv_path.with_suffix(".truth.json")


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get(SEED_ENV)
    if env:
        try:
            return int(env)
        except ValueError:
            raise ParameterError(f"{SEED_ENV}={env!r} is not an integer") from None
    return 0


def _load_panel(args) -> PanelData:
    panel = PanelData(read_panel_csv(Path(args.input), transpose=args.transpose))
    return panel.standardized() if args.standardize else panel


# ---------------------------------------------------------------------------
# Commands


def cmd_simulate(args) -> int:
    cfg = DgpConfig(
        n_len=args.n,
        t_len=args.t,
        scenario=Scenario.parse(args.scenario),
        r0=args.r0,
        k0=args.k0,
        rho=args.rho,
        alpha=args.alpha,
        beta=args.beta,
        m=args.m,
        seed=_seed(args),
    )
    sim = gen_panel(cfg)
    out = Path(args.out)
    write_panel_csv(out, sim.panel.values)
    truth = cfg.to_dict()
    truth.update(r_pseudo=sim.r_pseudo, r1=sim.r1, r2=sim.r2)
    _write_json(sidecar_path(out), truth)
    print(f"wrote {out} (T={cfg.t_len}, N={cfg.n_len}) and {sidecar_path(out)}")
    return EXIT_OK


def _curve_path(out: Path, method: Method, r: int, multi: bool) -> Path:
    if not multi:
        return out
    return out.with_name(f"{out.stem}_{method.value}_r{r}{out.suffix or '.csv'}")


def cmd_estimate(args) -> int:
    panel = _load_panel(args)
    window = SearchWindow(args.tau1, args.tau2)
    window.bounds(panel.t_len)
    methods = [Method.QML, Method.LS] if args.method == "both" else [Method.parse(args.method)]

    if args.auto_r:
        ic = select_r(panel, args.rmax, args.ic)
        rs = [ic.r_hat]
        print(f"# IC{int(ic.variant)} selected r={ic.r_hat}")
    else:
        rs = args.r or [3]
    limit = min(panel.t_len, panel.n_len)
    for r in rs:
        if not 1 <= r <= limit:
            raise ParameterError(f"--r {r} violates 1 <= r <= min(T, N) = {limit}")

    multi = len(rs) * len(methods) > 1
    print("method,r,k_hat,objective,floor_activations")
    for r in rs:
        fit = estimate_pca(panel, r)
        if fit.degenerate:
            print(f"# warning: eigenvalue {r} is tied with eigenvalue {r + 1}; factors are not unique", file=sys.stderr)
        for method in methods:
            est = estimate_break(fit.g_hat, method, window, args.floor)
            print(f"{method.value},{r},{est.k_hat},{fmt(est.min_objective)},{est.floor_activations}")
            if args.out:
                path = _curve_path(Path(args.out), method, r, multi)
                _write_rows(path, ["k", "U"], [(int(k), fmt(u)) for k, u in zip(est.candidates, est.objective)])
    return EXIT_OK


def cmd_ic(args) -> int:
    panel = _load_panel(args)
    res = select_r(panel, args.rmax, args.ic)
    print(f"r_hat={res.r_hat} criterion=IC{int(res.variant)}")
    print("r,criterion,V")
    rows = [
        (r, fmt(c), fmt(v))
        for r, c, v in zip(range(1, res.r_max + 1), res.criterion_values, res.residual_variance)
    ]
    for row in rows:
        print(",".join(str(x) for x in row))
    if args.out:
        _write_rows(Path(args.out), ["r", "criterion", "V"], rows)
    return EXIT_OK


def cmd_experiment(args) -> int:
    spec = spec_from_dict(_read_json(Path(args.spec)))
    if args.seed is not None:
        spec = replace(spec, base_seed=args.seed)
    report = run_experiment(spec, threads=args.threads)
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliIOError(f"cannot create {out}: {exc.strerror or exc}") from exc
    _write_json(out / "report.json", report.to_dict())
    print("cell,label,method,mae,rmse,p_correct,replications_used,failures")
    for c in report.cells:
        name = f"hist_cell{c.cell:02d}_{c.config.label()}_{c.method.value}.csv"
        _write_rows(out / name, ["deviation", "count"], sorted(c.histogram.items()))
        print(
            f"{c.cell},{c.config.label()},{c.method.value},{c.mae:.4f},{c.rmse:.4f},"
            f"{c.p_correct:.4f},{c.replications_used},{c.failures}"
        )
    print(f"# report written to {out / 'report.json'}")
    return EXIT_OK


def parse_matrix(text: str) -> np.ndarray:
    """Matrix from ``"a,b;c,d"``, a JSON nested list, or a path to either."""
    path = Path(text)
    if path.is_file():
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise CliIOError(f"cannot read {path}: {exc.strerror or exc}") from exc
    text = text.strip()
    try:
        if text.startswith("["):
            m = np.array(json.loads(text), dtype=np.float64)
        else:
            m = np.array(
                [[float(v) for v in row.split(",")] for row in text.replace("\n", ";").split(";") if row.strip()],
                dtype=np.float64,
            )
    except (ValueError, json.JSONDecodeError):
        raise ParameterError(f"cannot parse matrix {text!r}") from None
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ParameterError(f"matrix must be square, got shape {m.shape}")
    return m


def cmd_limit_dist(args) -> int:
    spec = LimitSpec(parse_matrix(args.sigma1), parse_matrix(args.sigma2))
    sampler = {
        "factor": lambda: factor_xi_sampler(spec),
        "wishart": lambda: wishart_xi_sampler(spec, args.xi_scale),
        "zero": lambda: zero_xi_sampler(spec),
    }[args.sampler]()
    dist = simulate_limit_distribution(spec, sampler, args.ell_max, args.draws, _seed(args))
    rows = list(zip(dist.lags.tolist(), dist.counts.tolist()))
    if args.out:
        _write_rows(Path(args.out), ["ell", "count"], rows)
    print("ell,count")
    for ell, count in rows:
        if count:
            print(f"{ell},{count}")
    return EXIT_OK


# ---------------------------------------------------------------------------


def _add_panel_input(p: argparse.ArgumentParser) -> None:
    p.add_argument("input", help="panel CSV: header row, rows = periods, columns = series")
    p.add_argument("--transpose", action="store_true", help="input rows are series, columns are periods")
    p.add_argument("--standardize", action="store_true", help="demean and scale each series first")


def _add_ic_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--rmax", type=int, default=None, help="largest r considered (default min(8, min(N,T)/4))")
    p.add_argument("--ic", type=int, choices=(1, 2), default=1, help="information criterion IC1 or IC2")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="factorbreak",
        description="Estimate a common break date in the factor loadings of a large panel.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="write a simulated panel CSV and its ground-truth sidecar")
    p.add_argument("--n", type=int, required=True, help="number of series N")
    p.add_argument("--t", type=int, required=True, help="number of periods T")
    p.add_argument("--scenario", default="1A", help="loading design: 1A, 1B, 1C or 1D")
    p.add_argument("--m", type=float, default=None, help="C[3,3] for scenario 1C")
    p.add_argument("--r0", type=int, default=3)
    p.add_argument("--k0", type=int, default=None, help="break date (default T/2)")
    p.add_argument("--rho", type=float, default=0.0)
    p.add_argument("--alpha", type=float, default=0.0)
    p.add_argument("--beta", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True, help="panel CSV path; sidecar goes to <stem>.truth.json")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate", help="estimate the break date of a panel CSV")
    _add_panel_input(p)
    p.add_argument("--r", type=int, action="append", help="number of factors; repeat to sweep")
    p.add_argument("--auto-r", action="store_true", help="choose r by information criterion")
    _add_ic_args(p)
    p.add_argument("--tau1", type=float, default=0.15)
    p.add_argument("--tau2", type=float, default=0.85)
    p.add_argument("--floor", type=float, default=DEFAULT_FLOOR, help="eigenvalue floor in log-determinants")
    p.add_argument("--method", choices=("qml", "ls", "both"), default="qml")
    p.add_argument("--out", help="objective-curve CSV (k, U); suffixed per method/r when several")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("ic", help="select the number of factors")
    _add_panel_input(p)
    _add_ic_args(p)
    p.add_argument("--out", help="criterion-curve CSV")
    p.set_defaults(func=cmd_ic)

    p = sub.add_parser("experiment", help="run a Monte Carlo experiment from a JSON spec")
    p.add_argument("spec", help="experiment spec JSON")
    p.add_argument("--threads", type=int, default=None, help="worker threads (default: all cores)")
    p.add_argument("--seed", type=int, default=None, help="override base_seed")
    p.add_argument("--out", default="experiment_out", help="output directory")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("limit-dist", help="simulate argmin of the limiting process W")
    p.add_argument("--sigma1", required=True, help='matrix "a,b;c,d", JSON list, or file')
    p.add_argument("--sigma2", required=True)
    p.add_argument("--ell-max", type=int, default=20)
    p.add_argument("--draws", type=int, default=1000)
    p.add_argument("--sampler", choices=("factor", "wishart", "zero"), default="factor")
    p.add_argument("--xi-scale", type=float, default=0.1, help="scale of the wishart sampler")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", help="histogram CSV (ell, count)")
    p.set_defaults(func=cmd_limit_dist)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except ParameterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARAM
    except CliIOError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (NumericalError, ExperimentError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
