"""Simulation designs for the two experiments and GWAS summary-statistic ingestion."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import stats

from .errors import EmptyFile, ParseError

__all__ = [
    "SIM1_WEIGHTS",
    "SIM1_MEANS",
    "SIM1_COV",
    "Sim1Config",
    "Sim2Config",
    "GwasRecord",
    "simulate_sim1",
    "simulate_sim2",
    "gen_sim1",
    "gen_sim2",
    "sim1_density",
    "sim2_density",
    "ingest_gwas",
    "read_csv_columns",
    "write_csv_columns",
]

SIM1_WEIGHTS = np.array([0.3, 0.7])
SIM1_MEANS = np.array([[1.0, 2.0], [7.0, 8.0]])
SIM1_COV = np.array([[1.0, 0.5], [0.5, 2.0]])

SIM2_WEIGHTS = (0.8, 0.2)
SIM2_NORMAL_SD = 0.2
SIM2_T_DF = 5
NOISE_FLOOR = 1e-6


@dataclass(frozen=True)
class Sim1Config:
    n: int
    seed: int = 0


@dataclass(frozen=True)
class Sim2Config:
    n: int
    seed: int = 0


@dataclass(frozen=True)
class GwasRecord:
    id: str
    w: float
    sigma: float


def simulate_sim1(config: Sim1Config) -> np.ndarray:
    """Draws from ``0.3 N(mu_1, Sigma) + 0.7 N(mu_2, Sigma)`` in two dimensions."""
    if config.n < 1:
        raise ValueError("n must be positive")
    rng = np.random.default_rng(config.seed)
    comp = (rng.random(config.n) >= SIM1_WEIGHTS[0]).astype(np.int64)
    z = rng.standard_normal((config.n, 2))
    return SIM1_MEANS[comp] + z @ np.linalg.cholesky(SIM1_COV).T


def simulate_sim2(config: Sim2Config):
    """Returns ``(w, sigma, x_true)``.

    ``x`` follows ``0.8 N(0, 0.2^2) + 0.2 t_5``; the noise sd is
    ``|0.75 + x/4|`` floored at ``NOISE_FLOOR``; ``w = x + N(0, sigma^2)``.
    """
    if config.n < 1:
        raise ValueError("n must be positive")
    rng = np.random.default_rng(config.seed)
    n = config.n
    heavy = rng.random(n) >= SIM2_WEIGHTS[0]
    normal_part = SIM2_NORMAL_SD * rng.standard_normal(n)
    # t_5 as a normal over the root of a scaled chi-square
    t_part = rng.standard_normal(n) / np.sqrt(rng.chisquare(SIM2_T_DF, n) / SIM2_T_DF)
    x = np.where(heavy, t_part, normal_part)
    sigma = np.maximum(np.abs(0.75 + x / 4), NOISE_FLOOR)
    w = x + sigma * rng.standard_normal(n)
    return w, sigma, x


def sim1_density(points) -> np.ndarray:
    points = np.atleast_2d(points)
    return sum(
        wk * stats.multivariate_normal(mk, SIM1_COV).pdf(points)
        for wk, mk in zip(SIM1_WEIGHTS, SIM1_MEANS)
    )


def sim2_density(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return SIM2_WEIGHTS[0] * stats.norm.pdf(x, scale=SIM2_NORMAL_SD) + SIM2_WEIGHTS[1] * stats.t.pdf(x, SIM2_T_DF)


def write_csv_columns(path, header, columns):
    """Write equal-length columns with 17 significant digits."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arr = np.column_stack([np.asarray(c, dtype=float) for c in columns])
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        np.savetxt(fh, arr, delimiter=",", fmt="%.17g")


def read_csv_columns(path, required):
    """Read named float columns from a headed CSV; header matching ignores case and order."""
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyFile(f"{path} is empty") from None
        names = [h.strip().lower() for h in header]
        missing = [r for r in required if r not in names]
        if missing:
            raise ParseError(f"missing column(s) {missing} in {path}", line=1)
        idx = [names.index(r) for r in required]
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            vals = []
            for name, i in zip(required, idx):
                try:
                    vals.append(float(row[i]))
                except (ValueError, IndexError):
                    raise ParseError(f"bad value for {name!r}", line=lineno, column=i + 1) from None
            rows.append(vals)
    if not rows:
        raise EmptyFile(f"{path} has no data rows")
    arr = np.asarray(rows, dtype=float)
    return {name: arr[:, j] for j, name in enumerate(required)}


def gen_sim1(config: Sim1Config, path):
    x = simulate_sim1(config)
    write_csv_columns(path, ["x1", "x2"], [x[:, 0], x[:, 1]])
    return x


def gen_sim2(config: Sim2Config, path):
    w, sigma, x = simulate_sim2(config)
    write_csv_columns(path, ["w", "sigma", "x_true"], [w, sigma, x])
    return w, sigma, x


def ingest_gwas(path) -> list[GwasRecord]:
    """Parse ``id,w,sigma`` summary statistics; any extra columns are ignored."""
    path = Path(path)
    records = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyFile(f"{path} is empty") from None
        names = [h.strip().lower() for h in header]
        missing = [c for c in ("id", "w", "sigma") if c not in names]
        if missing:
            raise ParseError(f"missing column(s) {missing}", line=1)
        i_id, i_w, i_s = names.index("id"), names.index("w"), names.index("sigma")
        for lineno, row in enumerate(reader, start=2):
            if len(row) < 2 and not (row and row[0].strip()):
                continue
            try:
                w = float(row[i_w])
            except (ValueError, IndexError):
                raise ParseError("bad effect estimate", line=lineno, column=i_w + 1) from None
            try:
                sigma = float(row[i_s])
            except (ValueError, IndexError):
                raise ParseError("bad standard error", line=lineno, column=i_s + 1) from None
            if not math.isfinite(w):
                raise ParseError("effect estimate must be finite", line=lineno, column=i_w + 1)
            if not (sigma > 0 and math.isfinite(sigma)):
                raise ParseError(f"standard error must be positive, got {sigma}", line=lineno, column=i_s + 1)
            records.append(GwasRecord(row[i_id].strip(), w, sigma))
    if not records:
        raise EmptyFile(f"{path} has no data rows")
    return records
