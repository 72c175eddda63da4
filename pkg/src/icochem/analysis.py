"""IQR-ratio prediction cleaning and evaluation metrics.

Every molecule carries one prediction per augmented net, giving a spread of
predictions.  Cleaning keeps the predictions inside

    [q25 - c, q75 + c],   c = IQR * ratio,

and averages the survivors.  A negative ratio narrows the band inside the
interquartile range; when that empties the band (common near ratio -0.49),
both bounds widen step-by-step until at least one prediction survives.
Quantiles use linear interpolation between closest ranks throughout.

``r_squared`` is the squared Pearson correlation, not the coefficient of
determination.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateVariance

MAX_WIDEN_ITERATIONS = 100


@dataclass
class PredictionGroup:
    """Ground truth and the per-net prediction spread for one molecule."""

    mol_id: str
    y_true: float
    y_preds: np.ndarray

    def __post_init__(self):
        self.y_preds = np.asarray(self.y_preds, dtype=np.float64)
        if self.y_preds.size == 0:
            raise ValueError(f"{self.mol_id!r} has no predictions")
        if not (np.isfinite(self.y_preds).all() and math.isfinite(self.y_true)):
            raise ValueError(f"{self.mol_id!r} has non-finite values")


@dataclass
class CleaningConfig:
    ratio: float = -0.45
    fallback_widen_step: float = 0.05
    quantile_method: str = "linear"

    def __post_init__(self):
        if not -0.5 <= self.ratio <= 10.0:
            raise ValueError("ratio must lie in [-0.5, 10]")
        if self.fallback_widen_step <= 0:
            raise ValueError("fallback_widen_step must be positive")
        if self.quantile_method != "linear":
            raise ValueError("only the linear quantile convention is supported")


@dataclass
class MetricsReport:
    r_squared: float
    rmse: float
    mae: float
    n: int

    def as_dict(self) -> dict[str, float]:
        return {"r_squared": self.r_squared, "rmse": self.rmse,
                "mae": self.mae, "n": self.n}


def cleaning_band(preds: np.ndarray,
                  config: CleaningConfig | None = None
                  ) -> tuple[float, float]:
    """The [lo, hi] band actually used, after any fallback widening.

    Returns (nan, nan) when widening can never capture a point (IQR = 0
    with everything outside the degenerate band) and the median fallback
    takes over.
    """
    config = config or CleaningConfig()
    preds = np.asarray(preds, dtype=np.float64)
    if preds.size == 1:
        return float(preds[0]), float(preds[0])

    q25, q75 = np.quantile(preds, [0.25, 0.75], method="linear")
    iqr = q75 - q25
    cut = iqr * config.ratio
    lo, hi = q25 - cut, q75 + cut

    widen = config.fallback_widen_step * iqr
    iterations = 0
    while not ((preds >= lo) & (preds <= hi)).any():
        if iterations >= MAX_WIDEN_ITERATIONS:
            return math.nan, math.nan
        lo -= widen
        hi += widen
        iterations += 1
    return float(lo), float(hi)


def clean_predictions(group: PredictionGroup,
                      config: CleaningConfig | None = None) -> float:
    """Mean of the predictions surviving the IQR-ratio band."""
    config = config or CleaningConfig()
    preds = group.y_preds
    if preds.size == 1:
        return float(preds[0])
    lo, hi = cleaning_band(preds, config)
    if math.isnan(lo):  # zero-width band that can never grow (IQR == 0)
        return float(np.median(preds))
    return float(preds[(preds >= lo) & (preds <= hi)].mean())


def median_baseline(group: PredictionGroup) -> float:
    """Plain median of the prediction spread."""
    return float(np.median(group.y_preds))


def clean_all(groups: list[PredictionGroup],
              config: CleaningConfig | None = None,
              pooled: bool = False) -> dict[str, float]:
    """Cleaned prediction per molecule.

    ``pooled=True`` derives one band from all predictions pooled across
    molecules and filters each group against it (experimental; the default
    per-molecule mode is the documented behaviour).
    """
    config = config or CleaningConfig()
    if not pooled:
        return {g.mol_id: clean_predictions(g, config) for g in groups}

    everything = np.concatenate([g.y_preds for g in groups])
    q25, q75 = np.quantile(everything, [0.25, 0.75], method="linear")
    cut = (q75 - q25) * config.ratio
    lo, hi = q25 - cut, q75 + cut
    out = {}
    for g in groups:
        kept = g.y_preds[(g.y_preds >= lo) & (g.y_preds <= hi)]
        out[g.mol_id] = float(kept.mean()) if kept.size else \
            clean_predictions(g, config)
    return out


def metrics(y_true: np.ndarray, y_pred: np.ndarray) -> MetricsReport:
    """Squared Pearson correlation, RMSE and MAE for paired values."""
    y_true = np.asarray(y_true, dtype=np.float64)
    y_pred = np.asarray(y_pred, dtype=np.float64)
    if y_true.shape != y_pred.shape or y_true.ndim != 1:
        raise ValueError("y_true and y_pred must be 1-D and the same length")
    n = y_true.size
    residual = y_pred - y_true
    rmse = float(np.sqrt(np.mean(residual ** 2)))
    mae = float(np.mean(np.abs(residual)))

    if n < 2:
        raise DegenerateVariance("need at least 2 pairs for r_squared",
                                 rmse=rmse, mae=mae, n=n)
    dt = y_true - y_true.mean()
    dp = y_pred - y_pred.mean()
    vt, vp = (dt ** 2).sum(), (dp ** 2).sum()
    if vt <= 0.0 or vp <= 0.0:
        raise DegenerateVariance("zero variance on one side; r_squared "
                                 "undefined", rmse=rmse, mae=mae, n=n)
    r = (dt * dp).sum() / math.sqrt(vt * vp)
    return MetricsReport(r_squared=min(1.0, r * r), rmse=rmse, mae=mae, n=n)


def metrics_for_groups(groups: list[PredictionGroup],
                       predictions: dict[str, float]) -> MetricsReport:
    y_true = np.array([g.y_true for g in groups])
    y_pred = np.array([predictions[g.mol_id] for g in groups])
    return metrics(y_true, y_pred)


def ratio_sweep(groups: list[PredictionGroup], ratios,
                config: CleaningConfig | None = None
                ) -> list[tuple[float, MetricsReport]]:
    """Metrics after cleaning at each ratio, rows sorted by ratio."""
    ratios = sorted(float(r) for r in ratios)
    if not ratios:
        raise ValueError("ratios must be non-empty")
    base = config or CleaningConfig()
    rows = []
    for ratio in ratios:
        cfg = CleaningConfig(ratio=ratio,
                             fallback_widen_step=base.fallback_widen_step)
        cleaned = clean_all(groups, cfg)
        rows.append((ratio, metrics_for_groups(groups, cleaned)))
    return rows


# --- CSV interfaces -----------------------------------------------------------

def read_prediction_csv(text: str) -> list[PredictionGroup]:
    """Parse ``mol_id,y_true,y_pred`` rows (one row per net prediction)."""
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None:
        raise ValueError("prediction CSV is empty")
    cols = [c.strip().lower() for c in header]
    try:
        i_mol = cols.index("mol_id")
        i_true = cols.index("y_true")
        i_pred = cols.index("y_pred")
    except ValueError:
        raise ValueError(
            "prediction CSV needs mol_id,y_true,y_pred columns") from None

    y_true: dict[str, float] = {}
    preds: dict[str, list[float]] = {}
    order: list[str] = []
    for row_no, row in enumerate(reader, start=2):
        if not row or not "".join(row).strip():
            continue
        try:
            mol = row[i_mol].strip()
            truth = float(row[i_true])
            pred = float(row[i_pred])
        except (IndexError, ValueError):
            raise ValueError(f"malformed prediction row {row_no}: {row}") from None
        if mol not in preds:
            order.append(mol)
            preds[mol] = []
            y_true[mol] = truth
        elif y_true[mol] != truth:
            raise ValueError(f"conflicting y_true for {mol!r} at row {row_no}")
        preds[mol].append(pred)
    return [PredictionGroup(m, y_true[m], np.array(preds[m])) for m in order]


def cleaned_csv(groups: list[PredictionGroup],
                predictions: dict[str, float]) -> str:
    out = io.StringIO()
    writer = csv.writer(out)
    writer.writerow(["mol_id", "y_true", "y_clean"])
    for g in groups:
        writer.writerow([g.mol_id, repr(g.y_true), repr(predictions[g.mol_id])])
    return out.getvalue()


def sweep_csv(rows: list[tuple[float, MetricsReport]]) -> str:
    out = io.StringIO()
    writer = csv.writer(out)
    writer.writerow(["ratio", "r2", "rmse", "mae"])
    for ratio, report in rows:
        writer.writerow([repr(ratio), repr(report.r_squared),
                         repr(report.rmse), repr(report.mae)])
    return out.getvalue()
