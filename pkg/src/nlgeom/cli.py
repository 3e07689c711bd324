"""Experiment runner: text configs in, CSV artifacts and a pass/fail summary out.

The runner is a thin shell over the library: every number written to disk
is the return value of a public call with arguments taken verbatim from the
config file, so any CSV cell can be reproduced in a REPL.  Configs use
nested key-value blocks (see :func:`parse_config`); reruns with the same
config and seed produce byte-identical artifacts, and the optional per-eps
parallelism is a pure scheduling choice (results are reduced in config
order, so the worker count never changes the output).

Usage::

    nlgeom run experiment.cfg [--out DIR] [--workers N]
    nlgeom --list
"""

from __future__ import annotations

import argparse
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy import stats

from . import anisotropy, curvature, energy, flow, kernels, rate
from .fields import Ball, AxisBox, Box, GridField, save_field


class ConfigError(ValueError):
    """Base for anything wrong with a config file."""


class ConfigParseError(ConfigError):
    """Syntax problem; carries the 1-based line number."""

    def __init__(self, line: int, message: str):
        self.line = line
        super().__init__(f"line {line}: {message}")


class ConfigValueError(ConfigError):
    """Well-formed config with an invalid or missing value."""


class UsageError(ValueError):
    """Command-line level mistake (unknown experiment, bad flag value)."""


class CliDomainError(ValueError):
    pass


# --------------------------------------------------------------------------
# config parsing: nested key-value blocks


_REQ = object()  # sentinel: no default, the key must be present


class _Entry(NamedTuple):
    line: int
    value: object  # list[str] for scalar lines, _Section for blocks


class _Section:
    """One brace-delimited block: ordered key -> entry with line numbers."""

    def __init__(self, name: str, line: int):
        self.name = name
        self.line = line
        self._entries: dict[str, _Entry] = {}

    def _add(self, key: str, entry: _Entry) -> None:
        if key in self._entries:
            first = self._entries[key].line
            raise ConfigParseError(
                entry.line, f"duplicate key {key!r} (first seen on line {first})"
            )
        self._entries[key] = entry

    def _where(self, key: str) -> str:
        if self.name == "<top>":
            return f"key {key!r}"
        return f"key {key!r} in block {self.name!r}"

    def has(self, key: str) -> bool:
        return key in self._entries

    def block(self, key: str) -> "_Section | None":
        ent = self._entries.get(key)
        if ent is None:
            return None
        if not isinstance(ent.value, _Section):
            raise ConfigValueError(
                f"line {ent.line}: {self._where(key)} should be a block"
            )
        return ent.value

    def _tokens(self, key: str, default):
        ent = self._entries.get(key)
        if ent is None:
            if default is _REQ:
                raise ConfigValueError(f"{self._where(key)} is required")
            return None
        if isinstance(ent.value, _Section):
            raise ConfigValueError(
                f"line {ent.line}: {self._where(key)} should be a value, not a block"
            )
        return ent

    def _one(self, key: str, default, conv, what: str):
        ent = self._tokens(key, default)
        if ent is None:
            return default
        if len(ent.value) != 1:
            raise ConfigValueError(
                f"line {ent.line}: {self._where(key)} expects one {what}"
            )
        try:
            return conv(ent.value[0])
        except ValueError:
            raise ConfigValueError(
                f"line {ent.line}: {self._where(key)} expects a {what}, "
                f"got {ent.value[0]!r}"
            ) from None

    def str_(self, key: str, default=_REQ) -> str:
        return self._one(key, default, str, "word")

    def float_(self, key: str, default=_REQ) -> float:
        return self._one(key, default, float, "number")

    def int_(self, key: str, default=_REQ) -> int:
        return self._one(key, default, int, "integer")

    def floats(self, key: str, default=_REQ, n: int | None = None):
        ent = self._tokens(key, default)
        if ent is None:
            return default
        try:
            out = tuple(float(t) for t in ent.value)
        except ValueError:
            raise ConfigValueError(
                f"line {ent.line}: {self._where(key)} expects numbers"
            ) from None
        if n is not None and len(out) != n:
            raise ConfigValueError(
                f"line {ent.line}: {self._where(key)} expects {n} numbers"
            )
        return out

    def ints(self, key: str, default=_REQ):
        ent = self._tokens(key, default)
        if ent is None:
            return default
        try:
            return tuple(int(t) for t in ent.value)
        except ValueError:
            raise ConfigValueError(
                f"line {ent.line}: {self._where(key)} expects integers"
            ) from None


def parse_config(text: str) -> _Section:
    """Parse the block-structured config syntax.

    Grammar: ``key value...`` lines and ``key {`` ... ``}`` blocks, nested
    arbitrarily; ``#`` starts a comment; blank lines are skipped.  Keys are
    unique within their block.  Syntax errors report 1-based line numbers.
    """
    root = _Section("<top>", 0)
    stack = [root]
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line == "}":
            if len(stack) == 1:
                raise ConfigParseError(lineno, "unmatched '}'")
            stack.pop()
            continue
        if line.endswith("{"):
            name = line[:-1].strip()
            if not name or len(name.split()) != 1:
                raise ConfigParseError(
                    lineno, "block opener must be a single key followed by '{'"
                )
            child = _Section(name, lineno)
            stack[-1]._add(name, _Entry(lineno, child))
            stack.append(child)
            continue
        if "{" in line or "}" in line:
            raise ConfigParseError(lineno, "braces must stand at the end of a line")
        tokens = line.split()
        stack[-1]._add(tokens[0], _Entry(lineno, tokens[1:]))
    if len(stack) > 1:
        raise ConfigParseError(stack[-1].line, f"block {stack[-1].name!r} never closed")
    return root


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated run description: experiment name, sweep, seed, blocks."""

    experiment: str
    eps: tuple | None
    seed: int
    output: str
    tolerance: float | None
    root: _Section

    @classmethod
    def from_text(cls, text: str) -> "ExperimentConfig":
        root = parse_config(text)
        name = root.str_("experiment")
        if name not in EXPERIMENTS:
            known = ", ".join(sorted(EXPERIMENTS))
            raise UsageError(f"unknown experiment {name!r}; known: {known}")
        eps = root.floats("eps", None)
        if eps is not None:
            if len(eps) == 0:
                raise ConfigValueError("eps list is empty")
            if any(e <= 0.0 for e in eps):
                raise ConfigValueError("eps values must be positive")
            if any(b >= a for a, b in zip(eps, eps[1:])):
                raise ConfigValueError("eps list must be strictly decreasing")
        seed = root.int_("seed", 0)
        if seed < 0:
            raise ConfigValueError("seed must be nonnegative")
        return cls(
            experiment=name,
            eps=eps,
            seed=seed,
            output=root.str_("output", "out"),
            tolerance=root.float_("tolerance", None),
            root=root,
        )

    @classmethod
    def from_path(cls, path) -> "ExperimentConfig":
        return cls.from_text(Path(path).read_text(encoding="utf-8"))

    def require_eps(self) -> tuple:
        if self.eps is None:
            raise ConfigValueError(
                f"experiment {self.experiment!r} needs an 'eps' list"
            )
        return self.eps

    def require_block(self, name: str) -> _Section:
        block = self.root.block(name)
        if block is None:
            raise ConfigValueError(
                f"experiment {self.experiment!r} needs a {name!r} block"
            )
        return block

    def block_or_empty(self, name: str) -> _Section:
        return self.root.block(name) or _Section(name, 0)

    def tol(self, default: float) -> float:
        return default if self.tolerance is None else self.tolerance


# --------------------------------------------------------------------------
# report rows, rate fitting, check lines


class ReportRow(NamedTuple):
    key: float  # eps, time, dimension, ... depending on the experiment
    measured: float
    reference: float
    abs_gap: float
    rel_gap: float


class RateFit(NamedTuple):
    slope: float
    intercept: float
    band95: float  # half-width of the 95% confidence interval on the slope
    points: int


def fit_rate(rows: Sequence) -> RateFit | None:
    """Least-squares slope of log(gap) against log(eps).

    Rows are (eps, ..., abs_gap, ...) report rows or plain (eps, gap)
    pairs.  Returns None (rate undefined) when any gap is nonpositive;
    fewer than three rows is a caller error.
    """
    data = [
        (float(r[0]), float(r[3] if len(r) > 3 else r[1])) for r in rows
    ]
    if len(data) < 3:
        raise CliDomainError("rate fitting needs at least 3 rows")
    if any(g <= 0.0 for _, g in data) or any(e <= 0.0 for e, _ in data):
        return None
    x = np.log([e for e, _ in data])
    y = np.log([g for _, g in data])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    n = len(data)
    sxx = float(np.sum((x - x.mean()) ** 2))
    se = math.sqrt(max(float(np.sum(resid**2)), 0.0) / (n - 2) / sxx)
    band = float(stats.t.ppf(0.975, n - 2)) * se
    return RateFit(float(slope), float(intercept), band, n)


class CheckLine(NamedTuple):
    label: str
    passed: bool
    detail: str


@dataclass(frozen=True)
class ExperimentReport:
    """Rows, optional fitted rate, and the acceptance check lines."""

    experiment: str
    key_label: str
    rows: tuple
    rate: RateFit | None
    rate_note: str
    checks: tuple

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


def _make_report(cfg, rows, checks, key_label="eps", fit=False) -> ExperimentReport:
    rate_fit, note = None, "not fitted"
    if fit:
        if len(rows) < 3:
            note = "not fitted: fewer than 3 points"
        else:
            rate_fit = fit_rate(rows)
            note = "" if rate_fit else "undefined: nonpositive gap in the series"
    return ExperimentReport(
        cfg.experiment, key_label, tuple(rows), rate_fit, note, tuple(checks)
    )


# --------------------------------------------------------------------------
# artifacts


class CsvArtifact(NamedTuple):
    name: str
    header: tuple
    rows: tuple


class FieldArtifact(NamedTuple):
    name: str
    field: GridField


def _cell(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def write_csv(path, header: Sequence[str], rows) -> None:
    """UTF-8, comma-separated, header row, floats at 17 significant digits."""
    lines = [",".join(header)]
    lines.extend(",".join(_cell(c) for c in row) for row in rows)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _parallel_map(fn: Callable, items, workers: int) -> list:
    """Map preserving input order; thread count never affects the values."""
    items = list(items)
    if workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def _g(x: float) -> str:
    return format(float(x), ".4g")


# --------------------------------------------------------------------------
# config -> library objects


def _kernel_from(block: _Section, d_override: int | None = None):
    family = block.str_("family")
    d = d_override if d_override is not None else block.int_("d", 2)
    amp = block.float_("amplitude", 1.0)
    if family == "ball":
        return kernels.ball_indicator(d, block.float_("radius", 1.0), amp)
    if family == "annulus":
        return kernels.annulus_indicator(
            d, block.float_("r0", 0.2), block.float_("r1", 1.0), amp
        )
    if family == "fractional":
        return kernels.fractional(
            d,
            block.float_("sigma", 0.5),
            block.float_("radius", 1.0),
            block.float_("s", None),
            amp,
        )
    if family == "gaussian":
        return kernels.gaussian(d, block.float_("width", 1.0), amp)
    raise ConfigValueError(
        f"unknown kernel family {family!r}; expected ball, annulus, "
        "fractional or gaussian"
    )


def _shape_from(g: _Section):
    kind = g.str_("shape", "disk")
    if kind == "disk":
        center = g.floats("center", (0.0, 0.0), n=2)
        return Ball(tuple(center), g.float_("radius"))
    if kind == "rectangle":
        lo = g.floats("lo", n=2)
        hi = g.floats("hi", n=2)
        return AxisBox(tuple(lo), tuple(hi))
    raise ConfigValueError(f"unknown shape {kind!r}; expected disk or rectangle")


def _window_from(g: _Section):
    wr = g.float_("window_radius", None)
    return None if wr is None else Ball((0.0, 0.0), wr)


def _box_from(g: _Section, halfwidth: float, resolution: int) -> Box:
    return Box.cube(
        g.float_("halfwidth", halfwidth), g.int_("resolution", resolution)
    )


def _potential_from(block: _Section | None) -> rate.Potential:
    name = "quadratic" if block is None else block.str_("family", "quadratic")
    if name == "quadratic":
        return rate.Potential.quadratic()
    if name == "soft-quartic":
        return rate.Potential.soft_quartic()
    raise ConfigValueError(
        f"unknown potential {name!r}; expected quadratic or soft-quartic"
    )


def _profile_from(block: _Section | None, eps_min: float) -> rate.Profile1D:
    if block is None:
        block = _Section("profile", 0)
    family = block.str_("family", "parabola")
    interval = block.floats("interval", (-1.0, 1.0), n=2)
    span = interval[1] - interval[0]
    auto = max(1601, 1 + math.ceil(8.0 * span / eps_min))
    n = block.int_("samples", auto)
    if family == "parabola":
        return rate.Profile1D.from_function(
            lambda x: np.clip(1.0 - x * x, 0.0, None), interval, n
        )
    raise ConfigValueError(f"unknown profile family {family!r}; expected parabola")


def _bump_field(g: _Section, halfwidth: float = 1.1, resolution: int = 64) -> GridField:
    box = _box_from(g, halfwidth, resolution)
    r2 = np.sum(box.centers() ** 2, axis=-1)
    vals = np.clip(1.0 - r2, 0.0, None) ** 2
    return GridField(box, vals.reshape(box.resolution), "phase")


def _tent_field(g: _Section, halfwidth: float = 1.1, resolution: int = 192) -> GridField:
    box = _box_from(g, halfwidth, resolution)
    cc = box.centers()
    vals = (
        np.clip(0.5 - np.abs(cc[..., 0]), 0.0, None)
        * np.clip(1.0 - (cc[..., 1] / 0.9) ** 2, 0.0, None) ** 2
    )
    return GridField(box, vals.reshape(box.resolution), "phase")


# --------------------------------------------------------------------------
# experiments


def _exp_perimeter_limit(cfg: ExperimentConfig, workers: int):
    kern = _kernel_from(cfg.require_block("kernel"))
    g = cfg.require_block("geometry")
    shape = _shape_from(g)
    window = _window_from(g)
    grid = _box_from(g, halfwidth=1.1, resolution=288)
    eps = cfg.require_eps()
    limit = energy.limit_tv(shape, window, kern)

    def one(e):
        return energy.perimeter_k(shape, window, kernels.rescale(kern, e), grid)

    breakdowns = _parallel_map(one, eps, workers)
    rows, csv_rows = [], []
    for e, bd in zip(eps, breakdowns):
        total = bd.total / e
        gap = abs(total - limit)
        rel = gap / abs(limit)
        rows.append(ReportRow(e, total, limit, gap, rel))
        csv_rows.append((e, bd.j1 / e, bd.j2 / e, total, limit, gap, rel))
    tol = cfg.tol(0.05)
    cross = breakdowns[-1].j2 / eps[-1]
    checks = [
        CheckLine(
            "limit gap at the smallest eps below tolerance",
            rows[-1].rel_gap < tol,
            f"rel_gap={_g(rows[-1].rel_gap)} tolerance={_g(tol)}",
        ),
        CheckLine(
            "cross-term residue below 1% of the limit",
            cross <= 0.01 * limit,
            f"J2/eps={_g(cross)} limit={_g(limit)}",
        ),
    ]
    art = [
        CsvArtifact(
            "perimeter_limit.csv",
            ("eps", "J1", "J2", "total", "limit_value", "abs_gap", "rel_gap"),
            tuple(csv_rows),
        )
    ]
    return _make_report(cfg, rows, checks, fit=True), art


def _exp_sigma_derivatives(cfg: ExperimentConfig, workers: int):
    kern = _kernel_from(cfg.require_block("kernel"))
    if kern.d != 2:
        raise ConfigValueError("sigma-derivatives runs in d=2")
    n_dirs = cfg.root.int_("directions", 8)
    an = anisotropy.build(kern)
    h_grad, h_hess = 1e-5, 1e-3

    rows, csv_rows = [], []
    grad_err = hess_err = euler_err = 0.0
    eye = np.eye(2)
    for i in range(n_dirs):
        theta = 2.0 * math.pi * i / n_dirs
        p_hat = np.array([math.cos(theta), math.sin(theta)])
        t_hat = np.array([-p_hat[1], p_hat[0]])
        sig = an.value(p_hat)
        grad = an.gradient(p_hat)
        hess = an.hessian(p_hat)
        csv_rows.append((theta, sig, grad[0], grad[1], float(t_hat @ hess @ t_hat)))

        for j in range(2):
            fd = (
                an.value(p_hat + h_grad * eye[j]) - an.value(p_hat - h_grad * eye[j])
            ) / (2.0 * h_grad)
            grad_err = max(grad_err, abs(fd - grad[j]) / sig)
        h_scale = max(float(np.max(np.abs(hess))), 1e-30)
        for e in (t_hat, (p_hat + t_hat) / math.sqrt(2.0)):
            fd2 = (
                an.value(p_hat + h_hess * e)
                - 2.0 * sig
                + an.value(p_hat - h_hess * e)
            ) / h_hess**2
            hess_err = max(hess_err, abs(fd2 - float(e @ hess @ e)) / h_scale)
        p = 1.3 * p_hat
        homo = abs(float(np.dot(p, an.gradient(p))) - an.value(p)) / an.value(p)
        euler_err = max(euler_err, homo)
        rows.append(
            ReportRow(theta, sig, float(np.dot(p_hat, grad)),
                      abs(sig - float(np.dot(p_hat, grad))),
                      abs(sig - float(np.dot(p_hat, grad))) / sig)
        )

    checks = [
        CheckLine("gradient matches central differences",
                  grad_err < 1e-4, f"max rel err={_g(grad_err)}"),
        CheckLine("hessian matches second differences",
                  hess_err < 1e-3, f"max rel err={_g(hess_err)}"),
        CheckLine("euler identity p.grad(sigma) = sigma",
                  euler_err < 1e-6, f"max rel err={_g(euler_err)}"),
    ]
    if (
        kern.family == "ball-indicator"
        and kern.r1 == 1.0
        and kern.scale == 1.0
        and kern.amplitude == 1.0
    ):
        e1 = np.array([1.0, 0.0])
        v = an.value(e1)
        gv = an.gradient(e1)
        hv = an.hessian(e1)
        ok = (
            abs(v - 2.0 / 3.0) < 1e-3
            and np.max(np.abs(gv - np.array([2.0 / 3.0, 0.0]))) < 1e-3
            and np.max(np.abs(hv - np.array([[0.0, 0.0], [0.0, 2.0 / 3.0]]))) < 1e-3
        )
        checks.append(
            CheckLine("unit-ball closed forms at e1",
                      ok, f"sigma={_g(v)} expected 2/3")
        )
    art = [
        CsvArtifact(
            "sigma_derivatives.csv",
            ("direction_angle", "sigma", "grad_x", "grad_y", "hess_tangential"),
            tuple(csv_rows),
        )
    ]
    return _make_report(cfg, rows, checks, key_label="direction_angle"), art


def _exp_halfspace_cell(cfg: ExperimentConfig, workers: int):
    kern = _kernel_from(cfg.require_block("kernel"))
    g = cfg.block_or_empty("geometry")
    p_hat = g.floats("direction", (1.0, 0.0), n=2)
    resolution = g.int_("resolution", 384)
    an = anisotropy.build(kern)
    rep = anisotropy.halfspace_cell_experiment(
        an,
        p_hat,
        cfg.require_eps(),
        n_competitors=cfg.root.int_("competitors", 4),
        seed=cfg.seed,
        resolution=resolution,
    )
    rows = []
    csv_rows = []
    for e, v in zip(rep.eps, rep.halfspace_values):
        gap = abs(v - rep.sigma_ref)
        rows.append(ReportRow(e, v, rep.sigma_ref, gap, gap / rep.sigma_ref))
        csv_rows.append((e, "halfspace", v))
    rejected = []
    for comp in rep.competitors:
        if not comp.accepted:
            rejected.append(f"{comp.competitor_id} ({comp.reason})")
            continue
        for e, v in zip(rep.eps, comp.normalized_j1):
            csv_rows.append((e, comp.competitor_id, v))
    tol = cfg.tol(0.05)
    n_acc = sum(1 for c in rep.competitors if c.accepted)
    checks = [
        CheckLine(
            "halfspace energy at the smallest eps matches sigma",
            rep.halfspace_rel_gap < tol,
            f"rel_gap={_g(rep.halfspace_rel_gap)} tolerance={_g(tol)}",
        ),
        CheckLine(
            "no competitor beats the halfspace by more than 2%",
            rep.no_competitor_beats(0.02),
            f"accepted={n_acc}"
            + (f" rejected: {'; '.join(rejected)}" if rejected else ""),
        ),
    ]
    art = [
        CsvArtifact(
            "halfspace_cell.csv",
            ("eps", "competitor_id", "normalized_J1"),
            tuple(csv_rows),
        )
    ]
    return _make_report(cfg, rows, checks), art


def _exp_curvature_limit(cfg: ExperimentConfig, workers: int):
    kern = _kernel_from(cfg.require_block("kernel"))
    g = cfg.require_block("geometry")
    shape = _shape_from(g)
    samples = cfg.root.int_("boundary_samples", 16)
    rep = curvature.curvature_convergence(
        shape, kern, cfg.require_eps(), boundary_samples=samples
    )
    sample_rows = []
    for i, e in enumerate(rep.eps):
        for j, p in enumerate(rep.samples):
            sample_rows.append(
                (
                    e,
                    j,
                    p[0],
                    p[1],
                    rep.hk_over_eps[i, j],
                    rep.h0_values[j],
                    abs(rep.hk_over_eps[i, j] - rep.h0_values[j]),
                )
            )
    rows = []
    for i, r in enumerate(rep.rows):
        j = int(np.argmax(np.abs(rep.hk_over_eps[i] - rep.h0_values)))
        rows.append(
            ReportRow(
                r.eps,
                rep.hk_over_eps[i, j],
                rep.h0_values[j],
                r.sup_err,
                r.sup_err / abs(rep.h0_values[j]),
            )
        )
    sups = rep.sup_errors
    h0_scale = float(np.mean(np.abs(rep.h0_values)))
    tol = cfg.tol(0.05)
    checks = [
        CheckLine(
            "sup error strictly decreasing across eps",
            all(b < a for a, b in zip(sups, sups[1:])),
            "sup_err=" + " ".join(_g(s) for s in sups),
        ),
        CheckLine(
            "final relative sup error below tolerance",
            sups[-1] / h0_scale < tol,
            f"rel={_g(sups[-1] / h0_scale)} tolerance={_g(tol)}",
        ),
    ]
    art = [
        CsvArtifact(
            "curvature_samples.csv",
            ("eps", "sample_index", "x", "y", "hk_over_eps", "h0", "abs_err"),
            tuple(sample_rows),
        ),
        CsvArtifact(
            "curvature_report.csv",
            ("eps", "sup_err", "mean_err"),
            tuple((r.eps, r.sup_err, r.mean_err) for r in rep.rows),
        ),
    ]
    return _make_report(cfg, rows, checks, fit=True), art


def _exp_coarea(cfg: ExperimentConfig, workers: int):
    kern = _kernel_from(cfg.require_block("kernel"))
    g = cfg.require_block("geometry")
    box = _box_from(g, halfwidth=1.0, resolution=64)
    field = g.str_("field", "ramp")
    if field != "ramp":
        raise ConfigValueError(f"unknown coarea field {field!r}; expected ramp")
    cc = box.centers()
    u = GridField(box, np.clip(cc[..., 0] + 0.5, 0.0, 1.0), tag="phase")
    levels = cfg.root.int_("levels", 32)
    lhs, rhs, gap = energy.coarea_check(u, _window_from(g), kern, nlevels=levels)
    rel = abs(gap) / max(lhs, 1e-300)
    rows = [ReportRow(float(levels), rhs, lhs, abs(gap), rel)]
    tol = cfg.tol(0.02)
    checks = [
        CheckLine(
            "level-integrated perimeters match the total variation",
            rel < tol,
            f"rel_gap={_g(rel)} tolerance={_g(tol)}",
        )
    ]
    art = [
        CsvArtifact(
            "coarea.csv",
            ("levels", "tv_value", "level_integral", "abs_gap", "rel_gap"),
            ((levels, lhs, rhs, abs(gap), rel),),
        )
    ]
    return _make_report(cfg, rows, checks, key_label="levels"), art


def _exp_submodularity(cfg: ExperimentConfig, workers: int):
    kern = _kernel_from(cfg.require_block("kernel"))
    g = cfg.block_or_empty("geometry")
    grid = _box_from(g, halfwidth=1.0, resolution=96)
    pairs = cfg.root.int_("pairs", 100)
    rng = np.random.default_rng(cfg.seed)
    zg = kernels.zgrid(kern)

    rows, csv_rows = [], []
    failures = 0
    for i in range(pairs):
        lo1 = rng.uniform(-0.9, 0.4, 2)
        lo2 = rng.uniform(-0.9, 0.4, 2)
        r1 = AxisBox(tuple(lo1), tuple(lo1 + rng.uniform(0.2, 0.5, 2)))
        r2 = AxisBox(tuple(lo2), tuple(lo2 + rng.uniform(0.2, 0.5, 2)))
        slack = energy.submodularity_check(r1, r2, None, kern, grid)
        scale = (
            energy.perimeter_k(r1, None, kern, grid, zg).total
            + energy.perimeter_k(r2, None, kern, grid, zg).total
        )
        floor = -1e-9 * max(scale, 1e-30)
        if slack < floor:
            failures += 1
        rows.append(
            ReportRow(float(i), slack, 0.0, max(-slack, 0.0),
                      max(-slack, 0.0) / max(scale, 1e-30))
        )
        csv_rows.append((i, slack, scale))
    checks = [
        CheckLine(
            "submodular slack nonnegative up to roundoff for every pair",
            failures == 0,
            f"failures={failures}/{pairs}",
        )
    ]
    art = [CsvArtifact("submodularity.csv", ("pair", "slack", "scale"), tuple(csv_rows))]
    return _make_report(cfg, rows, checks, key_label="pair"), art


def _exp_bbm_1d(cfg: ExperimentConfig, workers: int):
    eps = cfg.require_eps()
    pot = _potential_from(cfg.root.block("potential"))
    prof = _profile_from(cfg.root.block("profile"), eps[-1])
    limit = rate.e1d_limit(prof, pot)
    f_0 = float(
        np.trapezoid(pot.f(prof.derivative_values()), dx=prof.spacing)
    )
    upper = 0.5 * pot.c * prof.derivative_energy() if pot.c is not None else math.nan

    def one(e):
        val = rate.e1d(prof, pot, e)
        low = rate.e1d_lower_bound(prof, pot, e) if pot.alpha > 0 else math.nan
        return val, low

    results = _parallel_map(one, eps, workers)
    rows, csv_rows = [], []
    lower_ok = upper_ok = True
    for e, (val, low) in zip(eps, results):
        gap = abs(val - limit)
        rows.append(ReportRow(e, val, limit, gap, gap / abs(limit)))
        csv_rows.append((e, f_0 - e * e * val, f_0, val, limit, low, upper))
        scale = float(np.trapezoid(pot.f(prof.values), dx=prof.spacing)) / e**2
        if not math.isnan(low):
            lower_ok = lower_ok and val >= low - 1e-6 * scale
        if not math.isnan(upper):
            upper_ok = upper_ok and val <= upper * (1.0 + 1e-12)
    tol = cfg.tol(0.02)
    checks = [
        CheckLine(
            "limit gap at the smallest eps below tolerance",
            rows[-1].rel_gap < tol,
            f"rel_gap={_g(rows[-1].rel_gap)} tolerance={_g(tol)}",
        ),
        CheckLine("window lower bound holds at every eps", lower_ok,
                  f"alpha={_g(pot.alpha)}"),
        CheckLine("curvature upper bound holds at every eps", upper_ok,
                  f"upper={_g(upper)}"),
    ]
    art = [
        CsvArtifact(
            "bbm_1d.csv",
            ("eps", "F_eps", "F_0", "E_eps", "E_0", "lower_bound", "upper_bound"),
            tuple(csv_rows),
        )
    ]
    return _make_report(cfg, rows, checks, fit=True), art


def _exp_bbm_slice(cfg: ExperimentConfig, workers: int):
    kern = _kernel_from(cfg.require_block("kernel"))
    pot = _potential_from(cfg.root.block("potential"))
    u = _bump_field(cfg.block_or_empty("geometry"))

    def one(e):
        return rate.slicing_check(u, kern, pot, e)

    reps = _parallel_map(one, cfg.require_eps(), workers)
    rows, csv_rows = [], []
    for rep in reps:
        gap = abs(rep.direct - rep.assembled)
        rows.append(ReportRow(rep.eps, rep.direct, rep.assembled, gap, rep.rel_gap))
        csv_rows.append((rep.eps, rep.direct, rep.assembled, gap, rep.rel_gap))
    tol = cfg.tol(0.01)
    worst = max(r.rel_gap for r in rows)
    checks = [
        CheckLine(
            "slice assembly matches the direct energy at every eps",
            worst < tol,
            f"max rel_gap={_g(worst)} tolerance={_g(tol)}",
        )
    ]
    art = [
        CsvArtifact(
            "slice_check.csv",
            ("eps", "direct", "assembled", "abs_gap", "rel_gap"),
            tuple(csv_rows),
        )
    ]
    return _make_report(cfg, rows, checks), art


def _exp_effective_kernel(cfg: ExperimentConfig, workers: int):
    block = cfg.require_block("kernel")
    dims = cfg.root.ints("dims", (2, 3))
    n_samples = cfg.root.int_("samples", 1000)
    rng = np.random.default_rng(cfg.seed)
    rows, csv_rows, checks = [], [], []
    for d in dims:
        if d not in rate.EFFECTIVE_RADIUS_FACTOR:
            raise ConfigValueError(f"effective kernel supports d in (2, 3), got {d}")
        G = _kernel_from(block, d_override=d)
        Gt = rate.effective_kernel(G)
        beta = rate.EFFECTIVE_RADIUS_FACTOR[d]
        r1 = G.effective_radius()
        radii = rng.uniform(0.0, 0.99 * beta * r1, n_samples)
        min_val = float(np.min(Gt.profile_at(radii)))
        mass_in = float(kernels.absolute_moment(G, 0.0))
        mass_out = float(kernels.absolute_moment(Gt, 0.0))
        rel = abs(mass_out - mass_in) / mass_in
        rows.append(ReportRow(float(d), mass_out, mass_in, abs(mass_out - mass_in), rel))
        csv_rows.append((d, n_samples, min_val, mass_in, mass_out, rel))
        checks.append(
            CheckLine(
                f"effective kernel positive on its guaranteed ball (d={d})",
                min_val > 0.0,
                f"min={_g(min_val)} over r<={_g(0.99 * beta * r1)}",
            )
        )
        checks.append(
            CheckLine(
                f"averaging preserves the kernel mass (d={d})",
                rel <= 1e-3,
                f"rel_gap={_g(rel)}",
            )
        )
    art = [
        CsvArtifact(
            "effective_kernel.csv",
            ("d", "samples", "min_value", "mass_input", "mass_effective",
             "rel_mass_gap"),
            tuple(csv_rows),
        )
    ]
    return _make_report(cfg, rows, checks, key_label="d"), art


def _flow_setup(cfg: ExperimentConfig):
    kern = _kernel_from(cfg.require_block("kernel"))
    g = cfg.require_block("geometry")
    box = _box_from(g, halfwidth=1.0, resolution=64)
    radius = g.float_("radius", 0.5)
    band = g.float_("band", 0.28)
    u0 = flow.shrinking_circle_datum(box, radius, band=band)
    f = cfg.block_or_empty("flow")
    kappa = flow.curvature_coefficient(kern)
    T = f.float_("T", None)
    if T is None:
        frac = f.float_("stop_fraction", 0.3)
        if not 0.0 < frac < 1.0:
            raise ConfigValueError("stop_fraction must lie in (0, 1)")
        T = radius**2 * (1.0 - frac**2) / (2.0 * kappa)
    return kern, u0, radius, kappa, T, f


def _traj_csv(name: str, traj) -> CsvArtifact:
    return CsvArtifact(
        name,
        ("t", "zero_level_area", "max_lipschitz", "holder_stat"),
        flow.trajectory_rows(traj),
    )


def _exp_flow_compare(cfg: ExperimentConfig, workers: int):
    kern, u0, radius, kappa, T, f = _flow_setup(cfg)
    eps = cfg.require_eps()
    n_snap = f.int_("snapshots", 10)
    dt = f.float_("dt", None)
    loc = flow.evolve(u0, "local", kern, T, dt=dt, n_snapshots=n_snap)
    t_arr = np.asarray(loc.times)
    r_loc = np.array([flow.zero_level_radius(s) for s in loc.snapshots])
    r_ref = np.sqrt(np.clip(radius**2 - 2.0 * kappa * t_arr, 0.0, None))
    local_err = float(np.max(np.abs(r_loc - r_ref) / r_ref))

    def one(e):
        traj = flow.evolve(u0, "nonlocal", kern, T, eps=e, dt=dt, n_snapshots=n_snap)
        r_nl = np.array([flow.zero_level_radius(s) for s in traj.snapshots])
        return traj, float(np.max(np.abs(r_nl - r_loc)))

    runs = _parallel_map(one, eps, workers)
    rows = [
        ReportRow(e, gap, 0.0, gap, gap / radius) for e, (_, gap) in zip(eps, runs)
    ]
    gaps = [r.abs_gap for r in rows]
    tol = cfg.tol(0.02)
    monotone = all(b < a for a, b in zip(gaps, gaps[1:])) if len(gaps) > 1 else True
    checks = [
        CheckLine(
            "local scheme tracks the shrinking-circle solution",
            local_err < tol,
            f"max rel err={_g(local_err)} tolerance={_g(tol)}",
        ),
        CheckLine(
            "radius gap to the local run strictly decreasing in eps",
            monotone,
            "gaps=" + " ".join(_g(x) for x in gaps),
        ),
    ]
    art = [
        _traj_csv("trajectory_local.csv", loc),
        CsvArtifact("radius_compare.csv", ("eps", "sup_radius_gap"),
                    tuple((e, gap) for e, (_, gap) in zip(eps, runs))),
        FieldArtifact("final_local.field", loc.final),
    ]
    for e, (traj, _) in zip(eps, runs):
        art.append(_traj_csv(f"trajectory_nonlocal_eps{e:g}.csv", traj))
        art.append(FieldArtifact(f"final_nonlocal_eps{e:g}.field", traj.final))
    return _make_report(cfg, rows, checks, fit=True), art


def _exp_flow_monitors(cfg: ExperimentConfig, workers: int):
    kern, u0, radius, kappa, T, f = _flow_setup(cfg)
    eps = cfg.require_eps()
    n_snap = f.int_("snapshots", 10)
    dt = f.float_("dt", None)

    def one(e):
        traj = flow.evolve(u0, "nonlocal", kern, T, eps=e, dt=dt, n_snapshots=n_snap)
        return flow.monitors(traj)

    reps = _parallel_map(one, eps, workers)
    holders = [rep.holder_constant for rep in reps]
    mean_h = float(np.mean(holders))
    slack = cfg.root.float_("lipschitz_slack", 1.05)
    band = cfg.root.float_("holder_band", 0.2)
    rows, csv_rows = [], []
    lip_ok = True
    for e, rep in zip(eps, reps):
        ratio = max(rep.spatial_lipschitz) / rep.spatial_lipschitz[0]
        lip_ok = lip_ok and rep.lipschitz_within(slack)
        rows.append(
            ReportRow(e, rep.holder_constant, mean_h,
                      abs(rep.holder_constant - mean_h),
                      abs(rep.holder_constant - mean_h) / mean_h)
        )
        csv_rows.append((e, ratio, rep.holder_constant))
    spread = max(r.rel_gap for r in rows)
    checks = [
        CheckLine(
            "spatial Lipschitz constant within slack of its initial value",
            lip_ok,
            f"slack={_g(slack)}",
        ),
        CheckLine(
            "time-Holder constant finite at every eps",
            all(math.isfinite(h) for h in holders),
            "holder=" + " ".join(_g(h) for h in holders),
        ),
        CheckLine(
            "time-Holder constant stable across the sweep",
            spread <= band or len(eps) == 1,
            f"max spread={_g(spread)} band={_g(band)}",
        ),
    ]
    art = [
        CsvArtifact(
            "monitors.csv",
            ("eps", "lipschitz_ratio", "holder_constant"),
            tuple(csv_rows),
        )
    ]
    return _make_report(cfg, rows, checks), art


def _exp_regularity(cfg: ExperimentConfig, workers: int):
    kern = _kernel_from(cfg.require_block("kernel"))
    pot = _potential_from(cfg.root.block("potential"))
    g = cfg.block_or_empty("geometry")
    field = g.str_("field", "bump")
    if field == "bump":
        u = _bump_field(g)
    elif field == "tent":
        u = _tent_field(g)
    else:
        raise ConfigValueError(f"unknown field {field!r}; expected bump or tent")
    n_angular = cfg.root.int_("angular", 32)
    rep = rate.regularity_criterion(
        u, kern, pot, cfg.require_eps(), n_angular=n_angular
    )
    rows = [
        ReportRow(e, v, rep.bound, rep.bound - v, (rep.bound - v) / max(rep.bound, 1e-300))
        for e, v in zip(rep.eps, rep.e_eps)
    ]
    expect = cfg.root.str_("expect", "bounded")
    if expect == "bounded":
        checks = [
            CheckLine(
                "rate energies stay below the curvature bound",
                rep.within_bound,
                f"max={_g(max(rep.e_eps))} bound={_g(rep.bound)}",
            ),
            CheckLine(
                "no growth under eps refinement",
                rep.growth_ratio <= cfg.root.float_("growth_max", 1.2),
                f"growth_ratio={_g(rep.growth_ratio)}",
            ),
        ]
    elif expect == "kink":
        checks = [
            CheckLine(
                "rate energies grow under eps refinement (gradient kink)",
                rep.growth_ratio >= cfg.root.float_("growth_min", 2.0),
                f"growth_ratio={_g(rep.growth_ratio)}",
            )
        ]
    else:
        raise ConfigValueError(f"unknown expectation {expect!r}; expected bounded or kink")
    art = [
        CsvArtifact(
            "regularity.csv",
            ("eps", "E_eps", "bound"),
            tuple((e, v, rep.bound) for e, v in zip(rep.eps, rep.e_eps)),
        )
    ]
    return _make_report(cfg, rows, checks), art


EXPERIMENTS: dict[str, Callable] = {
    "perimeter-limit": _exp_perimeter_limit,
    "sigma-derivatives": _exp_sigma_derivatives,
    "halfspace-cell": _exp_halfspace_cell,
    "curvature-limit": _exp_curvature_limit,
    "coarea": _exp_coarea,
    "submodularity": _exp_submodularity,
    "bbm-1d": _exp_bbm_1d,
    "bbm-slice": _exp_bbm_slice,
    "effective-kernel": _exp_effective_kernel,
    "flow-compare": _exp_flow_compare,
    "flow-monitors": _exp_flow_monitors,
    "regularity": _exp_regularity,
}


# --------------------------------------------------------------------------
# orchestration


def summary_text(report: ExperimentReport, cfg: ExperimentConfig) -> str:
    lines = [
        f"experiment: {report.experiment}",
        f"seed: {cfg.seed}",
        f"rows: {len(report.rows)}",
    ]
    if report.rate is not None:
        lines.append(
            f"rate: slope={report.rate.slope:.6g} "
            f"band95={report.rate.band95:.4g} points={report.rate.points}"
        )
    else:
        lines.append(f"rate: {report.rate_note}")
    for c in report.checks:
        lines.append(f"{'PASS' if c.passed else 'FAIL'} {c.label}: {c.detail}")
    done = sum(1 for c in report.checks if c.passed)
    lines.append(
        f"result: {'PASS' if report.passed else 'FAIL'} "
        f"({done}/{len(report.checks)} checks)"
    )
    return "\n".join(lines) + "\n"


def run(config_path, out_dir=None, workers: int = 1):
    """Execute one experiment config and write its artifacts.

    Returns (report, output directory).  The caller owns exit-code policy;
    :func:`main` maps a failed check to status 1 and config problems to 2.
    """
    if workers < 1:
        raise UsageError("worker count must be at least 1")
    cfg = ExperimentConfig.from_path(config_path)
    report, artifacts = EXPERIMENTS[cfg.experiment](cfg, workers)
    out = Path(out_dir) if out_dir is not None else Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(
        out / "report.csv",
        (report.key_label, "measured", "reference", "abs_gap", "rel_gap"),
        report.rows,
    )
    for item in artifacts:
        if isinstance(item, CsvArtifact):
            write_csv(out / item.name, item.header, item.rows)
        else:
            save_field(item.field, out / item.name)
    (out / "summary.txt").write_text(summary_text(report, cfg), encoding="utf-8")
    return report, out


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="nlgeom",
        description="Run nonlocal-geometry experiments from block-structured "
        "config files and emit CSV artifacts plus a pass/fail summary.",
    )
    parser.add_argument(
        "--list", action="store_true", help="list experiment names and exit"
    )
    sub = parser.add_subparsers(dest="command")
    run_p = sub.add_parser("run", help="run one experiment config")
    run_p.add_argument("config", help="path to the experiment config file")
    run_p.add_argument("--out", default=None, help="override the output directory")
    run_p.add_argument("--workers", type=int, default=1,
                       help="threads for the eps sweep (default 1)")
    run_p.add_argument("--list", action="store_true",
                       help="list experiment names and exit")
    args = parser.parse_args(argv)

    if args.list:
        for name in sorted(EXPERIMENTS):
            print(name)
        return 0
    if args.command != "run":
        parser.print_usage(sys.stderr)
        return 2
    try:
        report, out = run(args.config, args.out, args.workers)
    except (ConfigError, UsageError) as exc:
        print(f"nlgeom: error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"nlgeom: error: cannot read config: {exc}", file=sys.stderr)
        return 2
    cfg_summary = (out / "summary.txt").read_text(encoding="utf-8")
    sys.stdout.write(cfg_summary)
    print(f"artifacts: {out}")
    return 0 if report.passed else 1


if __name__ == "__main__":
    raise SystemExit(main())
