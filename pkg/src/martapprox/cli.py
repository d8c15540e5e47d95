"""Command-line front end: chain spec files in, CSV / text tables out.

Spec file (line oriented, ``#`` starts a comment)::

    states 2
    labels a b            # optional
    kernel
    0.7 0.3
    0.1 0.9
    observable 3 -1
    m_grid 1 2 4 8        # optional run options
    n_grid 128 1024
    replicas 4000
    seed 42

CSV output is long format with the fixed header ``series,index,value,err``;
``err`` holds the standard error of Monte Carlo cells and the numerical
tolerance (or certified tail bound) of exact cells.
"""

from __future__ import annotations

import argparse
import hashlib
import io
import logging
import sys
import time
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import criteria, martingale, montecarlo, spectral
from .chain import (
    CHECK_TOL,
    SOLVE_TOL,
    FiniteMarkovChain,
    as_observable,
    build_chain,
    l2_0_spectral_radius,
    long_run_variance,
)
from .errors import MartApproxError, ParseError, UnknownCommand, ValidationError

log = logging.getLogger("martapprox")

COMMANDS = ("inspect", "approx", "criteria", "spectral", "inequalities", "fclt", "report")
CSV_HEADER = "series,index,value,err"
EXACT_TOL = 1e-12


@dataclass(frozen=True)
class RunOptions:
    m_grid: tuple = (1, 2, 4, 8, 16, 32, 64)
    n_grid: tuple = tuple(2**k for k in range(7, 15))
    replicas: int = 4000
    seed: int = 42
    labels: Optional[tuple] = None


@dataclass(frozen=True)
class Row:
    series: str
    index: float
    value: float
    err: float


@dataclass
class RunReport:
    command: str
    digest: str
    rows: list = field(default_factory=list)
    verdicts: dict = field(default_factory=dict)
    notes: dict = field(default_factory=dict)
    wall_clock: float = 0.0

    def add(self, series, index, value, err):
        self.rows.append(Row(series, index, float(value), float(err)))

    def add_series(self, series, indices, values, errs):
        errs = np.broadcast_to(np.asarray(errs, dtype=float), np.shape(values))
        for i, v, e in zip(indices, values, errs):
            self.add(series, i, v, e)

    @property
    def failures(self):
        return [name for name, ok in self.verdicts.items() if not ok]


# -- spec files ----------------------------------------------------------------


def _numbers(tokens, lineno, line, kind=float):
    out = []
    for tok in tokens:
        try:
            out.append(kind(tok))
        except ValueError:
            raise ParseError(f"cannot read {tok!r} as {kind.__name__}", lineno, line.find(tok) + 1)
    return out


def parse_chain_text(text: str):
    """Parse spec text into ``(chain, observable, RunOptions)``."""
    n_states = None
    rows = []
    kernel_line = None
    observable = None
    opts = {}
    pending = 0
    lineno = 0
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].rstrip()
        tokens = line.split()
        if not tokens:
            continue
        if pending:
            row = _numbers(tokens, lineno, line)
            if len(row) != n_states:
                raise ParseError(f"kernel row has {len(row)} entries, expected {n_states}", lineno, 1)
            rows.append(row)
            pending -= 1
            continue
        key, args = tokens[0].lower(), tokens[1:]
        if key == "states":
            (n_states,) = _numbers(args, lineno, line, int) or [None]
            if n_states is None or len(args) != 1 or n_states < 1:
                raise ParseError("states takes one positive integer", lineno, 1)
        elif key == "labels":
            opts["labels"] = tuple(args)
        elif key == "kernel":
            if n_states is None:
                raise ParseError("kernel block before 'states'", lineno, 1)
            pending, kernel_line = n_states, lineno
        elif key == "observable":
            observable = _numbers(args, lineno, line)
            if n_states is not None and len(observable) != n_states:
                raise ParseError(
                    f"observable has {len(observable)} values, expected {n_states}", lineno, 1
                )
        elif key in ("m_grid", "n_grid"):
            opts[key] = tuple(_numbers(args, lineno, line, int))
        elif key in ("replicas", "seed"):
            if len(args) != 1:
                raise ParseError(f"{key} takes one integer", lineno, 1)
            opts[key] = _numbers(args, lineno, line, int)[0]
        else:
            raise ParseError(f"unknown directive {tokens[0]!r}", lineno, raw.find(tokens[0]) + 1)
    if pending:
        raise ParseError(f"kernel block is missing {pending} row(s)", kernel_line, 1)
    if n_states is None or not rows:
        raise ParseError("spec needs 'states' and a 'kernel' block", lineno or 1)
    if observable is None:
        raise ParseError("spec needs an 'observable' line", lineno or 1)
    if "labels" in opts and len(opts["labels"]) != n_states:
        raise ParseError("labels count differs from states", 1)
    chain = build_chain(rows)
    mean = float(chain.pi @ np.asarray(observable))
    if abs(mean) > EXACT_TOL * max(1.0, float(np.max(np.abs(observable)))):
        warnings.warn(f"observable has pi-mean {mean!r}; centering it", stacklevel=2)
        f = as_observable(chain, observable, center=True)
    else:
        f = as_observable(chain, observable)
    return chain, f, RunOptions(**opts)


def parse_chain_spec(path):
    return parse_chain_text(Path(path).read_text())


def format_chain_spec(chain: FiniteMarkovChain, f, options: Optional[RunOptions] = None) -> str:
    """Inverse of ``parse_chain_text``; floats are written with repr for exact round trips."""
    lines = [f"states {chain.n_states}"]
    if options is not None and options.labels:
        lines.append("labels " + " ".join(options.labels))
    lines.append("kernel")
    lines += [" ".join(repr(float(v)) for v in row) for row in chain.kernel]
    lines.append("observable " + " ".join(repr(float(v)) for v in f))
    if options is not None:
        lines.append("m_grid " + " ".join(map(str, options.m_grid)))
        lines.append("n_grid " + " ".join(map(str, options.n_grid)))
        lines.append(f"replicas {options.replicas}")
        lines.append(f"seed {options.seed}")
    return "\n".join(lines) + "\n"


def chain_digest(chain: FiniteMarkovChain, f) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(chain.kernel, dtype="<f8").tobytes())
    h.update(np.ascontiguousarray(f, dtype="<f8").tobytes())
    return h.hexdigest()[:16]


# -- commands ------------------------------------------------------------------


def _inspect(report, chain, f, opts):
    report.add_series("pi", range(chain.n_states), chain.pi, SOLVE_TOL)
    report.add("sigma2", 0, long_run_variance(chain, f), CHECK_TOL)
    flags = spectral.structure_flags(chain)
    report.add("reversible", 0, flags.reversible, 0)
    report.add("normal", 0, flags.normal, 0)
    report.add("l2_0_spectral_radius", 0, l2_0_spectral_radius(chain), CHECK_TOL)


def _approx(report, chain, f, opts):
    limit = martingale.limit_diff_kernel(chain, f)
    report.add("limit_variance", 0, limit.variance, CHECK_TOL)
    n = opts.n_grid[-1]
    batch = montecarlo.simulate(chain, n, opts.replicas, opts.seed)
    for m in opts.m_grid:
        kernel = martingale.diff_kernel_m(chain, f, m)
        report.add("distance_Dm_D", m, martingale.diff_distance(chain, kernel, limit), EXACT_TOL)
        y = martingale.averaged_corrector(chain, f, m).y
        est = montecarlo.estimate_seminorm(chain, y, [n], opts.replicas, opts.seed, batch=batch)
        report.add("seminorm_Ym_max", m, *est.final)
        est = montecarlo.estimate_seminorm(
            chain, y, [n], opts.replicas, opts.seed, with_max=False, batch=batch
        )
        report.add("seminorm_Ym_plus", m, *est.final)
    curve = montecarlo.residual_decay_curve(chain, f, opts.n_grid, opts.replicas, opts.seed)
    report.add_series("residual_decay", curve.n_grid, curve.values, curve.std_errors)


def _criterion_rows(report, rep):
    report.add_series(rep.name, range(1, len(rep.terms) + 1), rep.partial_sums, EXACT_TOL)
    report.add(rep.name + "_total", len(rep.terms), rep.value, rep.tail_bound)
    report.notes[rep.name] = rep.verdict


def _criteria(report, chain, f, opts, K=64):
    for rep in (
        criteria.maxwell_woodroofe(chain, f, K),
        criteria.projective_series(chain, f, K),
        criteria.hannan_profile(chain, f, K),
        criteria.rho_dyadic_series(chain, 12),
        *criteria.gap_and_cor2(chain, f, K),
    ):
        _criterion_rows(report, rep)
    rio = criteria.rio_gamma_profile(chain, f, 16, K)
    _criterion_rows(report, rio)
    report.add_series("rio_cesaro", range(1, len(rio.terms) + 1), rio.details["cesaro"], rio.tail_bound)
    report.add_series("rho", range(1, 17), [criteria.rho_coefficient(chain, k) for k in range(1, 17)], EXACT_TOL)
    if chain.n_states <= criteria.ALPHA_EXACT_MAX_STATES:
        dmr = criteria.dmr_series(chain, f, 32)
        _criterion_rows(report, dmr)
        report.add_series("alpha", range(1, 33), dmr.details["alphas"], EXACT_TOL)
        report.add_series(
            "dmr_integral", range(1, 33), dmr.details["integral_partial_sums"], EXACT_TOL
        )
        report.add("dmr_integral_total", 32, dmr.details["integral_partial_sums"][-1],
                   dmr.details["integral_tail_bound"])
        report.notes["dmr_note"] = dmr.details["note"]
    else:
        report.notes["dmr"] = "skipped: exact alpha needs at most 20 states"


def _spectral(report, chain, f, opts):
    flags = spectral.structure_flags(chain)
    if not flags.normal:
        report.notes["spectral"] = "Q is not normal in L2(pi); spectral measure undefined"
        return
    measure = spectral.spectral_measure(chain, f)
    idx = range(len(measure.points))
    report.add_series("spectral_point_re", idx, np.real(measure.points), EXACT_TOL)
    report.add_series("spectral_point_im", idx, np.imag(measure.points), EXACT_TOL)
    report.add_series("spectral_weight", idx, measure.weights, SOLVE_TOL)
    if flags.reversible:
        report.add("kv_integral", 0, spectral.kv_integral(measure), CHECK_TOL)
        for m in opts.m_grid:
            report.add("reversible_bound", m, spectral.reversible_seminorm_bound(measure, m), CHECK_TOL)
    for m in opts.m_grid:
        nb = spectral.normal_integral_and_bound(measure, m)
        report.add("plus_bound", m, nb.plus_bound, CHECK_TOL)
    report.add("normcond_integral", 0, nb.normcond_integral, CHECK_TOL)
    for k in range(1, 17):
        report.add("conditional_norm_sq", k,
                   spectral.conditional_norm_identity(chain, f, measure, k), 1e-9)


def _inequalities(report, chain, f, opts):
    n = opts.n_grid[-1]
    batch = montecarlo.simulate(chain, n, opts.replicas, opts.seed)
    checks = [montecarlo.verify_rio, montecarlo.verify_pu, montecarlo.verify_dm, montecarlo.verify_lw]
    for check in checks:
        try:
            res = check(chain, f, n, opts.replicas, opts.seed, batch=batch)
        except MartApproxError as exc:
            report.notes[check.__name__] = f"not applicable: {exc}"
            continue
        report.add(res.name + "_lhs", n, res.lhs, res.lhs_stderr)
        report.add(res.name + "_rhs", n, res.rhs, CHECK_TOL)
        report.add(res.name + "_margin", n, res.margin, res.lhs_stderr)
        report.verdicts[res.name] = res.passed


def _fclt(report, chain, f, opts):
    n = opts.n_grid[-1]
    res = montecarlo.fclt_statistics(chain, f, n, opts.replicas, opts.seed)
    report.add("fclt_sigma2", 0, res.sigma2, CHECK_TOL)
    for i, group in enumerate((res.overall, *res.groups)):
        report.add("ks_terminal", i, group.terminal_ks, group.threshold)
        report.add("ks_running_max", i, group.max_ks, group.threshold)
        report.add("ks_count", i, group.count, 0)
        report.notes[f"ks_group_{i}"] = group.label
        report.verdicts[f"fclt_{group.label}"] = group.passed


_HANDLERS = {
    "inspect": _inspect,
    "approx": _approx,
    "criteria": _criteria,
    "spectral": _spectral,
    "inequalities": _inequalities,
    "fclt": _fclt,
}


def run(command: str, chain: FiniteMarkovChain, f, options: RunOptions = RunOptions()) -> RunReport:
    if command not in COMMANDS:
        raise UnknownCommand(f"unknown command {command!r}; choose from {', '.join(COMMANDS)}")
    started = time.perf_counter()
    report = RunReport(command=command, digest=chain_digest(chain, f))
    names = [c for c in COMMANDS if c != "report"] if command == "report" else [command]
    for name in names:
        try:
            _HANDLERS[name](report, chain, f, options)
        except MartApproxError as exc:
            raise type(exc)(f"{name}: {exc}") from exc
    report.wall_clock = time.perf_counter() - started
    return report


# -- output --------------------------------------------------------------------


def _num(x) -> str:
    x = float(x)
    if np.isfinite(x) and x == int(x) and abs(x) < 2**53:
        return str(int(x))
    return repr(x)


def to_csv(report: RunReport) -> str:
    buf = io.StringIO()
    buf.write(CSV_HEADER + "\n")
    order = []
    for row in report.rows:
        if row.series not in order:
            order.append(row.series)
    for name in order:
        for row in report.rows:
            if row.series == name:
                buf.write(f"{row.series},{_num(row.index)},{_num(row.value)},{_num(row.err)}\n")
    return buf.getvalue()


def to_text(report: RunReport) -> str:
    lines = [f"command: {report.command}", f"digest:  {report.digest}", ""]
    lines.append(f"{'series':<28}{'index':>10}{'value':>24}{'err':>14}")
    for row in report.rows:
        lines.append(f"{row.series:<28}{_num(row.index):>10}{row.value:>24.12g}{row.err:>14.3g}")
    if report.verdicts:
        lines.append("")
        for name, ok in report.verdicts.items():
            lines.append(f"{'PASS' if ok else 'FAIL'}  {name}")
    if report.notes:
        lines.append("")
        for name, note in report.notes.items():
            lines.append(f"{name}: {note}")
    return "\n".join(lines) + "\n"


def emit(report: RunReport, fmt: str = "csv", out_dir=None) -> Optional[Path]:
    """Write the report; returns the file path, or None when writing to stdout."""
    if fmt not in ("csv", "text"):
        raise ValueError(f"unknown format {fmt!r}")
    text = to_csv(report) if fmt == "csv" else to_text(report)
    if out_dir is None:
        sys.stdout.write(text)
        return None
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{report.command}.{'csv' if fmt == 'csv' else 'txt'}"
    path.write_text(text)
    return path


def read_csv(text: str):
    """Parse ``to_csv`` output back into rows; used for round-trip checks."""
    lines = text.splitlines()
    if not lines or lines[0] != CSV_HEADER:
        raise ParseError("missing CSV header", 1)
    rows = []
    for line in lines[1:]:
        series, index, value, err = line.rsplit(",", 3)
        rows.append(Row(series, float(index), float(value), float(err)))
    return rows


def _int_list(text):
    return tuple(int(v) for v in text.split(",") if v.strip())


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="martapprox", description=__doc__.splitlines()[0])
    p.add_argument("command", help=" | ".join(COMMANDS))
    p.add_argument("--spec", required=True, help="chain specification file")
    p.add_argument("--seed", type=int)
    p.add_argument("--replicas", type=int)
    p.add_argument("--n-grid", type=_int_list)
    p.add_argument("--m-grid", type=_int_list)
    p.add_argument("--out", help="output directory (default: stdout)")
    p.add_argument("--format", choices=("csv", "text"), default="csv")
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(name)s: %(message)s", stream=sys.stderr)
    args = build_parser().parse_args(argv)
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            chain, f, options = parse_chain_spec(args.spec)
        for w in caught:
            log.warning("%s", w.message)
        overrides = {
            k: v
            for k, v in dict(
                seed=args.seed, replicas=args.replicas, n_grid=args.n_grid, m_grid=args.m_grid
            ).items()
            if v is not None
        }
        options = replace(options, **overrides)
        report = run(args.command, chain, f, options)
    except (MartApproxError, ValidationError, OSError) as exc:
        log.error("%s", exc)
        return 1
    emit(report, args.format, args.out)
    log.info("%s finished in %.2fs", report.command, report.wall_clock)
    if report.failures:
        log.error("suite failures: %s", ", ".join(report.failures))
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
