"""Run configuration: a small INI dialect mapped onto the geometry types.

Grammar (sections in any order, keys as shown):

    [chart]
    coords = x, y            ; comma-separated identifiers
    box_x = -1.0, 1.0        ; one interval per coordinate
    box_y = -1.0, 1.0

    [metric]                 ; upper triangle; omitted entries are zero
    g_0_0 = 1
    g_0_1 = 0.2*x
    g_1_1 = 1 + y^2

    [theta]
    expr = x

    [grid]                   ; at most one of the two keys
    counts = 5, 5            ; per-axis counts over the box
    points = 0.1 0.2; -0.3 0.4

    [tolerances]
    residual_tol = 1e-9
    fd_tol = 1e-5

    [quadrature]
    nodes = 32

    [output]
    path = out.csv
    format = csv             ; csv | json

    [cosmo]                  ; scale-factor integration parameters
    n = 3
    c = eds                  ; number, or "eds" for sqrt((n-1)/(2n))
    t0 = 1.0
    a0 = 0.0
    a_dot0 = 0.333...
    theta0 = 0.0
    t_end = 4.0
    step = 1e-3
    einstein_lambda = ricci-flat
    theta_sign = 1

    [variation]              ; action-variation parameters
    kind = bump              ; bump | zero
    support_x = -0.3, 0.3
    support_y = -0.3, 0.3
    seed = 7
    scale = 1.0

Every float is printed back with 17 significant digits, so serialize and
parse round-trip exactly.
"""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import io
import math
import re
from dataclasses import dataclass

from . import exprfield as ef
from . import graded as gd
from . import riemann as rm
from .errors import ConfigError, GradedGeoError
from .exprfield import ChartSpec

__all__ = [
    "CosmoParams",
    "RunConfig",
    "VariationParams",
    "build_graded_metric",
    "config_hash",
    "grid_points",
    "load_config",
    "parse_config",
    "serialize_config",
]

_METRIC_KEY = re.compile(r"^g_(\d+)_(\d+)$")

_KNOWN_KEYS = {
    "chart": {"coords"},
    "metric": None,
    "theta": {"expr"},
    "grid": {"counts", "points"},
    "tolerances": {"residual_tol", "fd_tol"},
    "quadrature": {"nodes"},
    "output": {"path", "format"},
    "cosmo": {
        "n", "c", "t0", "a0", "a_dot0", "theta0",
        "t_end", "step", "einstein_lambda", "theta_sign",
    },
    "variation": {"kind", "seed", "scale"},
}


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


@dataclass(frozen=True)
class CosmoParams:
    n: int
    c: float
    t0: float
    a0: float
    a_dot0: float
    theta0: float
    t_end: float
    step: float
    einstein_lambda: float = 0.0
    theta_sign: int = 1


@dataclass(frozen=True)
class VariationParams:
    kind: str
    support: tuple[tuple[float, float], ...]
    seed: int = 0
    scale: float = 1.0


@dataclass(frozen=True)
class RunConfig:
    """Everything a batch run needs, decoupled from where it came from."""

    chart: ChartSpec
    metric_exprs: tuple[tuple[tuple[int, int], str], ...]
    theta_expr: str
    grid_counts: tuple[int, ...] | None = None
    grid_points: tuple[tuple[float, ...], ...] | None = None
    residual_tol: float = 1e-9
    fd_tol: float = 1e-5
    quad_nodes: int = 32
    out_path: str | None = None
    out_format: str = "csv"
    cosmo: CosmoParams | None = None
    variation: VariationParams | None = None


def _cfg_error(section: str, key: str, message: str) -> ConfigError:
    return ConfigError(f"[{section}] {key}: {message}")


def _floats(section: str, key: str, raw: str, count: int | None = None) -> tuple[float, ...]:
    try:
        vals = tuple(float(tok) for tok in raw.split(","))
    except ValueError:
        raise _cfg_error(section, key, f"expected comma-separated numbers, got {raw!r}") from None
    if count is not None and len(vals) != count:
        raise _cfg_error(section, key, f"expected {count} numbers, got {len(vals)}")
    return vals


def _float(section: str, key: str, raw: str) -> float:
    try:
        v = float(raw)
    except ValueError:
        raise _cfg_error(section, key, f"expected a number, got {raw!r}") from None
    if not math.isfinite(v):
        raise _cfg_error(section, key, f"expected a finite number, got {raw!r}")
    return v


def _int(section: str, key: str, raw: str) -> int:
    try:
        return int(raw)
    except ValueError:
        raise _cfg_error(section, key, f"expected an integer, got {raw!r}") from None


def parse_config(text: str) -> RunConfig:
    """Parse the INI dialect; every complaint carries its section and key."""
    parser = configparser.ConfigParser(interpolation=None, strict=True)
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config syntax: {exc}") from None

    for section in parser.sections():
        if section not in _KNOWN_KEYS:
            raise ConfigError(f"unknown section [{section}]")
        allowed = _KNOWN_KEYS[section]
        if allowed is None:
            continue
        extra = None
        if section == "chart":
            extra = {k for k in parser[section] if k.startswith("box_")}
        elif section == "variation":
            extra = {k for k in parser[section] if k.startswith("support_")}
        for key in parser[section]:
            if key not in allowed and (extra is None or key not in extra):
                raise _cfg_error(section, key, "unknown key")

    if not parser.has_section("chart"):
        raise ConfigError("missing [chart] section")
    chart_sec = parser["chart"]
    if "coords" not in chart_sec:
        raise _cfg_error("chart", "coords", "missing")
    names = tuple(tok.strip() for tok in chart_sec["coords"].split(","))
    box = []
    for name in names:
        key = f"box_{name}"
        if key not in chart_sec:
            raise _cfg_error("chart", key, "missing interval for coordinate")
        lo, hi = _floats("chart", key, chart_sec[key], 2)
        box.append((lo, hi))
    try:
        chart = ChartSpec(names, tuple(box))
    except ValueError as exc:
        raise ConfigError(f"[chart]: {exc}") from None

    if not parser.has_section("metric"):
        raise ConfigError("missing [metric] section")
    entries: dict[tuple[int, int], str] = {}
    for key, raw in parser["metric"].items():
        m = _METRIC_KEY.match(key)
        if m is None:
            raise _cfg_error("metric", key, "keys must look like g_i_j")
        i, j = int(m.group(1)), int(m.group(2))
        if not (0 <= i <= j < chart.dim):
            raise _cfg_error("metric", key, f"indices must satisfy 0 <= i <= j < {chart.dim}")
        try:
            ef.parse_field(raw, chart)
        except GradedGeoError as exc:
            raise _cfg_error("metric", key, str(exc)) from None
        entries[(i, j)] = raw
    for i in range(chart.dim):
        if (i, i) not in entries:
            raise _cfg_error("metric", f"g_{i}_{i}", "missing diagonal entry")

    if not parser.has_section("theta") or "expr" not in parser["theta"]:
        raise ConfigError("missing [theta] expr")
    theta_expr = parser["theta"]["expr"]
    try:
        ef.parse_field(theta_expr, chart)
    except GradedGeoError as exc:
        raise _cfg_error("theta", "expr", str(exc)) from None

    counts = None
    points = None
    if parser.has_section("grid"):
        grid = parser["grid"]
        if "counts" in grid and "points" in grid:
            raise ConfigError("[grid]: give counts or points, not both")
        if "counts" in grid:
            vals = grid["counts"].split(",")
            counts = tuple(_int("grid", "counts", v) for v in vals)
            if len(counts) != chart.dim or any(c < 1 for c in counts):
                raise _cfg_error("grid", "counts", f"need {chart.dim} positive counts")
        if "points" in grid:
            rows = [row for row in grid["points"].split(";") if row.strip()]
            parsed = []
            for row in rows:
                vals = tuple(float(tok) for tok in row.split())
                if len(vals) != chart.dim:
                    raise _cfg_error("grid", "points", f"point {row.strip()!r} has wrong arity")
                try:
                    chart.require_point(vals)
                except GradedGeoError as exc:
                    raise _cfg_error("grid", "points", str(exc)) from None
                parsed.append(vals)
            if not parsed:
                raise _cfg_error("grid", "points", "empty point list")
            points = tuple(parsed)

    residual_tol = 1e-9
    fd_tol = 1e-5
    if parser.has_section("tolerances"):
        tol = parser["tolerances"]
        if "residual_tol" in tol:
            residual_tol = _float("tolerances", "residual_tol", tol["residual_tol"])
        if "fd_tol" in tol:
            fd_tol = _float("tolerances", "fd_tol", tol["fd_tol"])
        if residual_tol <= 0 or fd_tol <= 0:
            raise ConfigError("[tolerances]: tolerances must be positive")

    quad_nodes = 32
    if parser.has_section("quadrature") and "nodes" in parser["quadrature"]:
        quad_nodes = _int("quadrature", "nodes", parser["quadrature"]["nodes"])
        if quad_nodes < 1:
            raise _cfg_error("quadrature", "nodes", "need at least one node")

    out_path = None
    out_format = "csv"
    if parser.has_section("output"):
        out = parser["output"]
        out_path = out.get("path") or None
        out_format = out.get("format", "csv")
        if out_format not in ("csv", "json"):
            raise _cfg_error("output", "format", f"must be csv or json, got {out_format!r}")

    cosmo = None
    if parser.has_section("cosmo"):
        sec = parser["cosmo"]
        for key in ("n", "t0", "a0", "a_dot0", "theta0", "t_end", "step"):
            if key not in sec:
                raise _cfg_error("cosmo", key, "missing")
        n = _int("cosmo", "n", sec["n"])
        if n < 2:
            raise _cfg_error("cosmo", "n", "need n >= 2")
        raw_c = sec.get("c", "eds")
        c = math.sqrt((n - 1) / (2.0 * n)) if raw_c == "eds" else _float("cosmo", "c", raw_c)
        raw_lam = sec.get("einstein_lambda", "ricci-flat")
        lam = 0.0 if raw_lam == "ricci-flat" else _float("cosmo", "einstein_lambda", raw_lam)
        sign = _int("cosmo", "theta_sign", sec.get("theta_sign", "1"))
        if sign not in (1, -1):
            raise _cfg_error("cosmo", "theta_sign", "must be 1 or -1")
        cosmo = CosmoParams(
            n=n,
            c=c,
            t0=_float("cosmo", "t0", sec["t0"]),
            a0=_float("cosmo", "a0", sec["a0"]),
            a_dot0=_float("cosmo", "a_dot0", sec["a_dot0"]),
            theta0=_float("cosmo", "theta0", sec["theta0"]),
            t_end=_float("cosmo", "t_end", sec["t_end"]),
            step=_float("cosmo", "step", sec["step"]),
            einstein_lambda=lam,
            theta_sign=sign,
        )

    variation = None
    if parser.has_section("variation"):
        sec = parser["variation"]
        kind = sec.get("kind", "bump")
        if kind not in ("bump", "zero"):
            raise _cfg_error("variation", "kind", f"must be bump or zero, got {kind!r}")
        support = []
        for name in chart.coord_names:
            key = f"support_{name}"
            if key not in sec:
                raise _cfg_error("variation", key, "missing interval for coordinate")
            lo, hi = _floats("variation", key, sec[key], 2)
            if not lo < hi:
                raise _cfg_error("variation", key, "empty interval")
            support.append((lo, hi))
        variation = VariationParams(
            kind=kind,
            support=tuple(support),
            seed=_int("variation", "seed", sec.get("seed", "0")),
            scale=_float("variation", "scale", sec.get("scale", "1.0")),
        )

    return RunConfig(
        chart=chart,
        metric_exprs=tuple(sorted(entries.items())),
        theta_expr=theta_expr,
        grid_counts=counts,
        grid_points=points,
        residual_tol=residual_tol,
        fd_tol=fd_tol,
        quad_nodes=quad_nodes,
        out_path=out_path,
        out_format=out_format,
        cosmo=cosmo,
        variation=variation,
    )


def load_config(path: str) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text)


def serialize_config(cfg: RunConfig) -> str:
    """Canonical text form; parse_config(serialize_config(cfg)) == cfg."""
    out = io.StringIO()
    w = out.write
    w("[chart]\n")
    w(f"coords = {', '.join(cfg.chart.coord_names)}\n")
    for name, (lo, hi) in zip(cfg.chart.coord_names, cfg.chart.box):
        w(f"box_{name} = {_fmt(lo)}, {_fmt(hi)}\n")
    w("\n[metric]\n")
    for (i, j), expr in cfg.metric_exprs:
        w(f"g_{i}_{j} = {expr}\n")
    w("\n[theta]\n")
    w(f"expr = {cfg.theta_expr}\n")
    if cfg.grid_counts is not None or cfg.grid_points is not None:
        w("\n[grid]\n")
        if cfg.grid_counts is not None:
            w(f"counts = {', '.join(str(c) for c in cfg.grid_counts)}\n")
        if cfg.grid_points is not None:
            rows = "; ".join(" ".join(_fmt(x) for x in p) for p in cfg.grid_points)
            w(f"points = {rows}\n")
    w("\n[tolerances]\n")
    w(f"residual_tol = {_fmt(cfg.residual_tol)}\n")
    w(f"fd_tol = {_fmt(cfg.fd_tol)}\n")
    w("\n[quadrature]\n")
    w(f"nodes = {cfg.quad_nodes}\n")
    w("\n[output]\n")
    if cfg.out_path is not None:
        w(f"path = {cfg.out_path}\n")
    w(f"format = {cfg.out_format}\n")
    if cfg.cosmo is not None:
        cs = cfg.cosmo
        w("\n[cosmo]\n")
        w(f"n = {cs.n}\n")
        w(f"c = {_fmt(cs.c)}\n")
        w(f"t0 = {_fmt(cs.t0)}\n")
        w(f"a0 = {_fmt(cs.a0)}\n")
        w(f"a_dot0 = {_fmt(cs.a_dot0)}\n")
        w(f"theta0 = {_fmt(cs.theta0)}\n")
        w(f"t_end = {_fmt(cs.t_end)}\n")
        w(f"step = {_fmt(cs.step)}\n")
        w(f"einstein_lambda = {_fmt(cs.einstein_lambda)}\n")
        w(f"theta_sign = {cs.theta_sign}\n")
    if cfg.variation is not None:
        vs = cfg.variation
        w("\n[variation]\n")
        w(f"kind = {vs.kind}\n")
        for name, (lo, hi) in zip(cfg.chart.coord_names, vs.support):
            w(f"support_{name} = {_fmt(lo)}, {_fmt(hi)}\n")
        w(f"seed = {vs.seed}\n")
        w(f"scale = {_fmt(vs.scale)}\n")
    return out.getvalue()


def config_hash(cfg: RunConfig) -> str:
    """Digest of the run content; where the output goes does not count."""
    canonical = dataclasses.replace(cfg, out_path=None, out_format="csv")
    return hashlib.sha256(serialize_config(canonical).encode()).hexdigest()[:12]


def build_graded_metric(cfg: RunConfig) -> gd.GradedMetric:
    n = cfg.chart.dim
    zero = ef.constant(cfg.chart, 0.0)
    rows = [[zero] * n for _ in range(n)]
    for (i, j), expr in cfg.metric_exprs:
        f = ef.parse_field(expr, cfg.chart)
        rows[i][j] = f
        rows[j][i] = f
    metric = rm.MetricSpec(cfg.chart, rows)
    return gd.GradedMetric(metric, ef.parse_field(cfg.theta_expr, cfg.chart))


def grid_points(cfg: RunConfig) -> list[tuple[float, ...]]:
    """Evaluation points in grid order (first axis slowest)."""
    if cfg.grid_points is not None:
        return list(cfg.grid_points)
    counts = cfg.grid_counts or (3,) * cfg.chart.dim
    axes = []
    for count, (lo, hi) in zip(counts, cfg.chart.box):
        if count == 1:
            axes.append([0.5 * (lo + hi)])
        else:
            step = (hi - lo) / (count - 1)
            axes.append([lo + k * step for k in range(count)])
    pts: list[tuple[float, ...]] = [()]
    for axis in axes:
        pts = [p + (x,) for p in pts for x in axis]
    return pts
