import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Sequence

import numpy as np
from django.conf import settings
from scipy.optimize import least_squares, lsq_linear
from scipy.special import expit

from planning.errors import ScenarioError, require

logger = logging.getLogger('planning')

ANCHOR_CONVENTIONS = ('per_branch', 'total')


@dataclass(frozen=True)
class EfficiencyCurve:
    """Single-branch accuracy as a logistic function of log2(generated tokens)."""

    a_min: float
    a_max: float
    midpoint: float
    slope: float

    def __post_init__(self):
        require(0.0 <= self.a_min <= 1.0, 'a_min', 'must be in [0, 1]')
        require(0.0 <= self.a_max <= 1.0, 'a_max', 'must be in [0, 1]')
        require(self.a_min <= self.a_max, 'a_min', 'must not exceed a_max')
        require(math.isfinite(self.midpoint), 'midpoint', 'must be finite')
        require(math.isfinite(self.slope) and self.slope > 0, 'slope', 'must be > 0')


@dataclass(frozen=True)
class CurveAnchor:
    tokens: float
    accuracy: float

    def __post_init__(self):
        require(self.tokens >= 1, 'tokens', 'must be >= 1')
        require(0.0 <= self.accuracy <= 1.0, 'accuracy', 'must be in [0, 1]')


@dataclass(frozen=True)
class FitBounds:
    a_min: tuple = (0.0, 1.0)
    a_max: tuple = (0.0, 1.0)
    midpoint: tuple | None = None
    slope: tuple = (0.05, 20.0)


@dataclass(frozen=True)
class CurveFit:
    curve: EfficiencyCurve
    rms_residual: float
    degenerate: bool = False


def curve_eval(curve: EfficiencyCurve, tokens):
    """Accuracy of one branch after ``tokens`` generated tokens.

    Accepts a scalar or an array; scalars come back as ``float``.
    """
    t = np.asarray(tokens, dtype=float)
    if np.any(t < 1):
        raise ValueError(f"tokens must be >= 1, got {tokens}")
    z = expit(curve.slope * (np.log2(t) - curve.midpoint))
    value = np.clip(curve.a_min + (curve.a_max - curve.a_min) * z, curve.a_min, curve.a_max)
    return float(value) if value.ndim == 0 else value


def token_efficiency(curve: EfficiencyCurve, tokens: float) -> float:
    """Marginal accuracy per generated token at ``tokens``."""
    if tokens < 1:
        raise ValueError(f"tokens must be >= 1, got {tokens}")
    z = float(expit(curve.slope * (math.log2(tokens) - curve.midpoint)))
    return (curve.a_max - curve.a_min) * curve.slope * z * (1.0 - z) / (tokens * math.log(2.0))


def _logistic(params: np.ndarray, x: np.ndarray) -> np.ndarray:
    a_min, a_max, midpoint, slope = params
    return a_min + (a_max - a_min) * expit(slope * (x - midpoint))


def _grid_start(x: np.ndarray, y: np.ndarray, bounds: FitBounds, m_range: tuple) -> tuple[np.ndarray, float]:
    """Coarse (midpoint, slope) grid with a bounded linear solve for the two levels."""
    cfg = settings.TTSLAT
    midpoints = np.linspace(m_range[0], m_range[1], cfg['FIT_GRID_MIDPOINTS'])
    slopes = np.geomspace(bounds.slope[0], bounds.slope[1], cfg['FIT_GRID_SLOPES'])
    lower = np.array([bounds.a_min[0], bounds.a_max[0]])
    upper = np.array([bounds.a_min[1], bounds.a_max[1]])

    best = None
    best_cost = math.inf
    for midpoint in midpoints:
        for slope in slopes:
            z = expit(slope * (x - midpoint))
            design = np.column_stack([1.0 - z, z])
            solved = lsq_linear(design, y, bounds=(lower, upper))
            a_min, a_max = solved.x
            if a_min > a_max:
                continue
            cost = float(np.sum((design @ solved.x - y) ** 2))
            if cost < best_cost - 1e-15:
                best_cost = cost
                best = np.array([a_min, a_max, midpoint, slope])
    return best, best_cost


def curve_fit(anchors: Sequence[CurveAnchor], bounds: FitBounds | None = None) -> CurveFit:
    """Least-squares logistic fit over log2-token space.

    Deterministic: a fixed grid over (midpoint, slope) seeds a bounded
    trust-region refinement of all four parameters.
    """
    bounds = bounds or FitBounds()
    ordered = sorted(anchors, key=lambda a: (a.tokens, a.accuracy))
    distinct_tokens = {a.tokens for a in ordered}
    if len(distinct_tokens) < 2:
        raise ValueError("curve_fit needs at least 2 anchors with distinct token counts")

    x = np.log2(np.array([a.tokens for a in ordered], dtype=float))
    y = np.array([a.accuracy for a in ordered], dtype=float)
    m_range = bounds.midpoint or (float(x.min()) - 2.0, float(x.max()) + 2.0)

    if np.all(y == y[0]) and len(ordered) < 4:
        level = float(y.mean())
        curve = EfficiencyCurve(level, level, (float(x.min()) + float(x.max())) / 2.0, 1.0)
        logger.warning(f"Degenerate curve fit | anchors={len(ordered)} | level={level:.4f}")
        return CurveFit(curve=curve, rms_residual=0.0, degenerate=True)

    start, start_cost = _grid_start(x, y, bounds, m_range)
    if start is None:
        raise ValueError("curve_fit found no admissible starting point inside the bounds")

    lower = [bounds.a_min[0], bounds.a_max[0], m_range[0], bounds.slope[0]]
    upper = [bounds.a_min[1], bounds.a_max[1], m_range[1], bounds.slope[1]]
    refined = least_squares(
        lambda p: _logistic(p, x) - y,
        np.clip(start, lower, upper),
        bounds=(lower, upper),
        method='trf',
        ftol=1e-14,
        xtol=1e-14,
        gtol=1e-14,
        max_nfev=settings.TTSLAT['FIT_MAX_EVALUATIONS'],
    )
    params = refined.x
    if params[0] > params[1] or 2.0 * refined.cost > start_cost:
        params = start

    a_min, a_max, midpoint, slope = (float(v) for v in params)
    curve = EfficiencyCurve(a_min, a_max, midpoint, slope)
    rms = float(np.sqrt(np.mean((_logistic(params, x) - y) ** 2)))
    logger.info(
        f"Curve fit complete | anchors={len(ordered)} | a_min={a_min:.4f} | a_max={a_max:.4f} | "
        f"midpoint={midpoint:.4f} | slope={slope:.4f} | rms={rms:.3e}"
    )
    return CurveFit(curve=curve, rms_residual=rms)


def load_anchors(path: str | Path) -> List[CurveAnchor]:
    """Read ``tokens,accuracy[,convention,branches]`` rows as per-branch anchors."""
    path = Path(path)
    try:
        with open(path, newline='', encoding='utf-8') as f:
            reader = csv.DictReader(f)
            header = reader.fieldnames or []
            if 'tokens' not in header or 'accuracy' not in header:
                raise ScenarioError(f"{path}: header must start with tokens,accuracy", field='header')
            return list(_anchors_from_rows(reader, path))
    except FileNotFoundError:
        logger.error(f"Anchor file not found | path={path}")
        raise ScenarioError(f"{path}: file not found", field='path')


def _anchors_from_rows(rows: Iterable[dict], path: Path):
    for line, row in enumerate(rows, start=2):
        try:
            tokens = float(row['tokens'])
            accuracy = float(row['accuracy'])
            convention = (row.get('convention') or 'per_branch').strip()
            branches = int(row.get('branches') or 1)
        except (TypeError, ValueError) as e:
            raise ScenarioError(f"{path}:{line}: malformed anchor row ({e})", field=f'row {line}')
        if convention not in ANCHOR_CONVENTIONS:
            raise ScenarioError(f"{path}:{line}: unknown convention {convention!r}", field='convention')
        if convention == 'total':
            # figures that plot total tokens across B branches
            tokens = tokens / max(branches, 1)
        yield CurveAnchor(tokens=tokens, accuracy=accuracy)
