"""Capacity-miss-ratio curves: a double-exponential sigmoid family with
least-squares calibration and derivation of observed ratios from measured
per-LUP volumes.

Each role (l1, l2_load, l2_store, overmiss) carries one (a, b, c) triple
for ``a * exp(-b * exp(-c * x))``.  The first three are evaluated at an
oversubscription factor; the overmiss role is evaluated at the negated
cache-coverage factor so the same increasing form applies everywhere.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.optimize import least_squares

ROLES = ("l1", "l2_load", "l2_store", "overmiss")


class FitError(ValueError):
    """Invalid calibration input."""


@dataclass(frozen=True)
class GompertzParams:
    a: float
    b: float
    c: float
    role: str = ""

    def __post_init__(self):
        if not 0.0 <= self.a <= 1.0:
            raise FitError(f"amplitude a must be in [0, 1], got {self.a}")
        if self.b < 0.0:
            raise FitError(f"b must be >= 0, got {self.b}")

    @classmethod
    def zero(cls, role: str = "") -> "GompertzParams":
        return cls(0.0, 0.0, 1.0, role)

    @classmethod
    def one(cls, role: str = "") -> "GompertzParams":
        return cls(1.0, 0.0, 1.0, role)


def evaluate(params: GompertzParams, x: float) -> float:
    """a * exp(-b * exp(-c * x)), clamped to [0, 1]."""
    inner = -params.c * x
    if inner > 700.0:  # exp would overflow; the sigmoid is 0 here anyway
        return 0.0
    value = params.a * math.exp(-params.b * math.exp(inner))
    return min(1.0, max(0.0, value))


# Illustrative defaults: close to zero while a collaborative group fits in
# the cache, saturating once it is oversubscribed a few times over.  Not
# measured values; calibrate against hardware counters to replace them.
def default_fit_params() -> dict[str, GompertzParams]:
    return {role: GompertzParams(1.0, 5.0, 2.0, role) for role in ROLES}


def zero_fit_params() -> dict[str, GompertzParams]:
    return {role: GompertzParams.zero(role) for role in ROLES}


@dataclass(frozen=True)
class RatioObservation:
    x: float
    ratio: float
    weight: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.ratio)):
            raise FitError("observations must be finite")


@dataclass(frozen=True)
class FitResult:
    params: GompertzParams
    residual: float
    observation_count: int


def _residuals(theta: np.ndarray, x: np.ndarray, y: np.ndarray, w: np.ndarray) -> np.ndarray:
    a, b, c = theta
    return w * (a * np.exp(-b * np.exp(-c * x)) - y)


def calibrate(observations: Sequence[RatioObservation], role: str = "") -> FitResult:
    """Deterministic weighted least-squares fit: coarse grid search over
    (a, b, c) followed by bounded local refinement."""
    if len(observations) < 4:
        raise FitError(f"need at least 4 observations, got {len(observations)}")
    x = np.array([o.x for o in observations], dtype=float)
    y = np.clip(np.array([o.ratio for o in observations], dtype=float), 0.0, 1.0)
    w = np.sqrt(np.array([o.weight for o in observations], dtype=float))
    if np.ptp(x) == 0.0:
        raise FitError("degenerate input: all observations share one x value")

    a_grid = np.linspace(0.0, 1.0, 11)
    b_grid = np.array([0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0])
    # scale the transition-steepness grid to the observed x range
    span = float(np.ptp(x))
    c_grid = np.array([0.25, 0.5, 1.0, 2.0, 4.0, 8.0]) / max(span / 4.0, 1e-9)

    best = None
    for a in a_grid:
        for b in b_grid:
            for c in c_grid:
                cost = float(np.sum(_residuals(np.array([a, b, c]), x, y, w) ** 2))
                if best is None or cost < best[0]:
                    best = (cost, (a, b, c))
    theta0 = np.array(best[1])
    result = least_squares(
        _residuals,
        theta0,
        args=(x, y, w),
        bounds=([0.0, 0.0, 1e-6], [1.0, 100.0, 1e3]),
        xtol=1e-12,
        ftol=1e-12,
        gtol=1e-12,
    )
    a, b, c = result.x
    residual = float(np.sqrt(np.sum(result.fun**2)))
    return FitResult(GompertzParams(float(a), float(b), float(c), role), residual, len(observations))


# ---------------------------------------------------------------------------
# deriving observed ratios from measurements

LEVEL_L2L1 = "L2toL1"
LEVEL_DRAM = "DRAMtoL2"

MEASUREMENT_HEADER = ("configKey", "level", "kind", "measuredBytesPerLup")


@dataclass
class DerivedObservations:
    by_role: dict[str, list[RatioObservation]] = dc_field(
        default_factory=lambda: {role: [] for role in ROLES}
    )
    skipped: list[str] = dc_field(default_factory=list)


def read_measurement_csv(path: str | Path) -> list[dict]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(MEASUREMENT_HEADER) - set(reader.fieldnames or ())
        if missing:
            raise FitError(f"measurement CSV missing columns: {sorted(missing)}")
        rows = []
        for row in reader:
            rows.append(
                {
                    "configKey": row["configKey"],
                    "level": row["level"],
                    "kind": row["kind"],
                    "measuredBytesPerLup": float(row["measuredBytesPerLup"]),
                }
            )
        return rows


def _ratio_obs(x: float, numerator: float, denominator: float) -> RatioObservation | None:
    if denominator <= 0.0:
        return None
    return RatioObservation(x, min(1.0, max(0.0, numerator / denominator)))


def derive_observations(
    measurements: Iterable[Mapping],
    estimates: Mapping[str, Mapping[str, float]],
) -> DerivedObservations:
    """Turn measured per-LUP volumes into per-role ratio observations.

    ``estimates`` maps configKey to the estimator's sweep row (the ranking
    CSV columns).  Rows with unknown keys raise; rows whose denominators
    vanish are skipped and reported.
    """
    measurements = list(measurements)
    unknown = sorted({row["configKey"] for row in measurements} - set(estimates))
    if unknown:
        raise FitError(f"measurements reference unknown configurations: {unknown}")
    out = DerivedObservations()
    for row in measurements:
        key = row["configKey"]
        est = estimates[key]
        level, kind = row["level"], row["kind"]
        measured = float(row["measuredBytesPerLup"])
        if level == LEVEL_L2L1 and kind == "load":
            obs = _ratio_obs(
                float(est["l2l1LoadOversub"]),
                measured - float(est["l2l1LoadComp"]),
                float(est["l2l1LoadRed"]),
            )
            _record(out, "l1", key, level, kind, obs)
        elif level == LEVEL_DRAM and kind == "load":
            unique = float(est["dramLoadUnique"])
            overlap = float(est["dramLoadOverlap"])
            base = unique - overlap
            coverage = est.get("dramLoadCoverage")
            if coverage in (None, ""):
                out.skipped.append(f"{key}: no previous wave, skipping overmiss")
            else:
                obs = _ratio_obs(-float(coverage), measured - base, overlap)
                _record(out, "overmiss", key, level, kind, obs)
            obs = _ratio_obs(
                float(est["dramLoadOversub"]),
                measured - base - float(est["dramLoadOvermiss"]),
                float(est["dramLoadRedL2"]),
            )
            _record(out, "l2_load", key, level, kind, obs)
        elif level == LEVEL_DRAM and kind == "store":
            unique = float(est["dramStoreUnique"])
            obs = _ratio_obs(
                float(est["dramLoadOversub"]),
                measured - unique,
                float(est["dramStoreUp"]) - unique,
            )
            _record(out, "l2_store", key, level, kind, obs)
        else:
            out.skipped.append(f"{key}: no role for level={level!r} kind={kind!r}")
    return out


def _record(out, role, key, level, kind, obs):
    if obs is None:
        out.skipped.append(f"{key}: zero denominator for {role} ({level}/{kind})")
    else:
        out.by_role[role].append(obs)


def calibrate_all(derived: DerivedObservations) -> dict[str, FitResult]:
    results = {}
    for role, observations in derived.by_role.items():
        if len(observations) >= 4:
            results[role] = calibrate(observations, role)
    return results
