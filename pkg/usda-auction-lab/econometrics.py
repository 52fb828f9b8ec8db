"""
Weighted least squares on bid records.

Three regressions are supported: bidder counts per item and bidder type,
log offer prices, and log winning prices. Set-aside effects enter as
(set-aside level x bidder type) cells against the (no set-aside, large)
baseline. Coefficients come from a QR decomposition of sqrt(W)X and
standard errors from the heteroskedasticity-consistent sandwich.

Usage:
    from econometrics import RegressionSpec, fit_regression, format_fit_table

    wls = fit_regression(records, RegressionSpec.offers())
    ols = fit_regression(records, RegressionSpec.offers(weighting="UNIT"))
    print(format_fit_table({"WLS": wls, "OLS": ols}))
"""

import logging
import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from enum import StrEnum
from typing import Literal, NamedTuple

import numpy as np
import pandas as pd
import scipy.linalg
from pydantic import BaseModel, ConfigDict

from domain import AuctionLabError, DomainValidationError, SizeClass, analysis_group_key
from simulation import BidRecord, records_to_frame

logger = logging.getLogger(__name__)

RANK_TOLERANCE = 1e-10

CONSTANT = "Constant"
SMALL = "Small"
NBID = "Number of bidders"
NBID_SQ = "Number of bidders^2"


# ── Errors ───────────────────────────────────────────────────────
class EconometricsError(AuctionLabError):
    pass


class RankDeficientError(EconometricsError):
    def __init__(self, groups: list[list[str]]):
        listed = "; ".join("{" + ", ".join(g) + "}" for g in groups)
        super().__init__(f"design matrix is rank deficient; collinear columns: {listed}")
        self.groups = groups


class UndefinedStatisticError(EconometricsError):
    pass


class MissingTermError(EconometricsError):
    def __init__(self, term: str):
        super().__init__(f"fit has no {term!r} coefficient")
        self.term = term


# ── Specification ────────────────────────────────────────────────
class Response(StrEnum):
    N_BIDDERS = "N_BIDDERS"
    LOG_OFFER = "LOG_OFFER"
    LOG_WIN = "LOG_WIN"


class Weighting(StrEnum):
    QUANTITY = "QUANTITY"
    PRODUCT_EQUALIZED = "PRODUCT_EQUALIZED"
    UNIT = "UNIT"


class Term(StrEnum):
    SET_ASIDE_CELLS = "SET_ASIDE_CELLS"
    DEMAND = "DEMAND"
    DEMAND_SQ = "DEMAND_SQ"
    NBID = "NBID"
    NBID_SQ = "NBID_SQ"
    LOG_WHOLESALE = "LOG_WHOLESALE"
    LOG_USDA = "LOG_USDA"
    PRODUCT_FE = "PRODUCT_FE"
    YEAR_FE = "YEAR_FE"
    VENDOR_FE = "VENDOR_FE"
    PACKAGE = "PACKAGE"
    SDVOSB = "SDVOSB"


COUNT_TERMS = (
    Term.SET_ASIDE_CELLS,
    Term.DEMAND,
    Term.DEMAND_SQ,
    Term.PRODUCT_FE,
    Term.YEAR_FE,
    Term.SDVOSB,
)
PRICE_TERMS = (
    Term.SET_ASIDE_CELLS,
    Term.DEMAND,
    Term.DEMAND_SQ,
    Term.NBID,
    Term.NBID_SQ,
    Term.LOG_WHOLESALE,
    Term.LOG_USDA,
    Term.PRODUCT_FE,
    Term.PACKAGE,
    Term.SDVOSB,
)
# Terms that need one row per bid rather than per (item, bidder type).
BID_LEVEL_TERMS = {Term.NBID, Term.NBID_SQ, Term.VENDOR_FE}


class RegressionSpec(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    response: Response
    terms: tuple[Term, ...]
    weighting: Weighting = Weighting.QUANTITY

    @classmethod
    def bidder_counts(cls, weighting: Weighting = Weighting.QUANTITY) -> "RegressionSpec":
        return cls(response=Response.N_BIDDERS, terms=COUNT_TERMS, weighting=weighting)

    @classmethod
    def offers(cls, weighting: Weighting = Weighting.QUANTITY) -> "RegressionSpec":
        return cls(response=Response.LOG_OFFER, terms=PRICE_TERMS, weighting=weighting)

    @classmethod
    def winners(cls, weighting: Weighting = Weighting.QUANTITY) -> "RegressionSpec":
        return cls(response=Response.LOG_WIN, terms=PRICE_TERMS, weighting=weighting)


class DesignMatrix(NamedTuple):
    X: np.ndarray
    y: np.ndarray
    w: np.ndarray
    columns: list[str]


@dataclass(frozen=True, eq=False)
class FitResult:
    coefficients: pd.Series
    robust_se: pd.Series
    covariance: pd.DataFrame
    n_obs: int
    weighted_r2: float
    flavor: str = "HC1"
    spec: RegressionSpec | None = None

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "term": self.coefficients.index,
                "coefficient": self.coefficients.to_numpy(),
                "robust_se": self.robust_se.to_numpy(),
            }
        )


# ── Design matrix ────────────────────────────────────────────────
def _cell_label(alpha: float, size_class: str) -> str:
    return f"SA{alpha * 100:g}%, {str(size_class).title()}"


def _bid_rows(frame: pd.DataFrame, response: Response) -> pd.DataFrame:
    rows = frame[frame["won"]] if response == Response.LOG_WIN else frame
    rows = rows.sort_values(["auction_id", "item_id", "vendor_id"], kind="mergesort", ignore_index=True)
    return rows.assign(y=np.log(rows["price_per_lb"].to_numpy(dtype=float)))


def _count_rows(frame: pd.DataFrame) -> pd.DataFrame:
    items = frame.groupby("item_id", sort=True).agg(
        auction_id=("auction_id", "first"),
        date=("date", "first"),
        product_code=("product_code", "first"),
        package_class=("package_class", "first"),
        set_aside=("set_aside", "first"),
        quantity_lbs=("quantity_lbs", "first"),
        demand_mlbs=("demand_mlbs", "first"),
        sdvosb=("sdvosb", "first"),
    )
    per_type = frame.groupby(["item_id", "vendor_type"]).agg(y=("vendor_id", "nunique"))
    rows = []
    for size_class in (SizeClass.LARGE, SizeClass.SMALL):
        part = items.assign(vendor_type=str(size_class))
        # Large vendors cannot bid under a full set-aside; those rows carry no information.
        if size_class == SizeClass.LARGE:
            part = part[part["set_aside"] < 1.0]
        keys = pd.MultiIndex.from_arrays([part.index, part["vendor_type"]])
        found = per_type.reindex(keys)
        part = part.assign(
            y=found["y"].fillna(0).to_numpy(dtype=float),
        )
        rows.append(part.reset_index())
    out = pd.concat(rows, ignore_index=True)
    return out.sort_values(["item_id", "vendor_type"], kind="mergesort", ignore_index=True)


def _dummies(values: pd.Series, prefix: str) -> dict[str, np.ndarray]:
    levels = sorted(values.unique())
    return {f"{prefix}[{level}]": (values == level).to_numpy(dtype=float) for level in levels[1:]}


def _indicator(columns: dict[str, np.ndarray], name: str, values: np.ndarray) -> None:
    if not values.any():
        logger.info("Indicator %s never fires in this sample; left out of the design", name)
        return
    columns[name] = values.astype(float)


def product_equalized_weights(records: Sequence[BidRecord] | pd.DataFrame) -> np.ndarray:
    """Quantity weights scaled so every product group's weights sum to 1."""
    frame = records if isinstance(records, pd.DataFrame) else records_to_frame(records)
    package = frame["package_class"] if "package_class" in frame else pd.Series("", index=frame.index)
    groups = pd.Series(
        [analysis_group_key(code, pkg) for code, pkg in zip(frame["product_code"], package)],
        index=frame.index,
    )
    quantity = frame["quantity_lbs"].astype(float)
    totals = quantity.groupby(groups).transform("sum")
    empty = sorted(set(groups[totals <= 0]))
    if empty:
        raise DomainValidationError(f"product groups with zero total quantity: {', '.join(empty)}")
    return (quantity / totals).to_numpy()


def build_design_matrix(records: Sequence[BidRecord] | pd.DataFrame, spec: RegressionSpec) -> DesignMatrix:
    frame = records_to_frame(records)
    if spec.response == Response.N_BIDDERS:
        bid_level = sorted(set(spec.terms) & BID_LEVEL_TERMS)
        if bid_level:
            raise DomainValidationError(
                f"terms {', '.join(bid_level)} need bid-level rows, not bidder counts"
            )
        rows = _count_rows(frame)
    else:
        rows = _bid_rows(frame, spec.response)
    if rows.empty:
        raise DomainValidationError(f"no observations for {spec.response}")

    groups = pd.Series(
        [analysis_group_key(c, p) for c, p in zip(rows["product_code"], rows["package_class"])]
    )
    columns: dict[str, np.ndarray] = {CONSTANT: np.ones(len(rows))}
    for term in spec.terms:
        match term:
            case Term.SET_ASIDE_CELLS:
                small = rows["vendor_type"].eq(SizeClass.SMALL).to_numpy()
                if small.any() and not small.all():
                    columns[SMALL] = small.astype(float)
                cells = sorted(
                    {(a, str(t)) for a, t in zip(rows["set_aside"], rows["vendor_type"]) if a > 0},
                    key=lambda cell: (cell[0], cell[1] != SizeClass.LARGE),
                )
                for alpha, size_class in cells:
                    hit = rows["set_aside"].eq(alpha) & rows["vendor_type"].eq(size_class)
                    columns[_cell_label(alpha, size_class)] = hit.to_numpy(dtype=float)
            case Term.DEMAND:
                columns["Demand"] = rows["demand_mlbs"].to_numpy(dtype=float)
            case Term.DEMAND_SQ:
                columns["Demand^2"] = rows["demand_mlbs"].to_numpy(dtype=float) ** 2
            case Term.NBID:
                columns[NBID] = rows["n_bidders_item"].to_numpy(dtype=float)
            case Term.NBID_SQ:
                columns[NBID_SQ] = rows["n_bidders_item"].to_numpy(dtype=float) ** 2
            case Term.LOG_WHOLESALE:
                columns["log(Wholesale price)"] = np.log(rows["wholesale_price"].to_numpy(dtype=float))
            case Term.LOG_USDA:
                columns["log(USDA price)"] = np.log(rows["usda_ref_price"].to_numpy(dtype=float))
            case Term.PRODUCT_FE:
                columns.update(_dummies(groups, "Product"))
            case Term.YEAR_FE:
                columns.update(_dummies(pd.to_datetime(rows["date"]).dt.year, "Year"))
            case Term.VENDOR_FE:
                columns.update(_dummies(rows["vendor_id"], "Vendor"))
            case Term.PACKAGE:
                default_package = rows["package_class"].groupby(groups.to_numpy()).transform("min")
                _indicator(columns, "Package", rows["package_class"].ne(default_package).to_numpy())
            case Term.SDVOSB:
                _indicator(columns, "SDVOSB", rows["sdvosb"].to_numpy(dtype=bool))

    names = list(columns)
    X = np.column_stack([columns[name] for name in names])
    check_rank(X, names)

    match spec.weighting:
        case Weighting.QUANTITY:
            w = rows["quantity_lbs"].to_numpy(dtype=float)
        case Weighting.PRODUCT_EQUALIZED:
            w = product_equalized_weights(rows)
        case Weighting.UNIT:
            w = np.ones(len(rows))
    y = rows["y"].to_numpy(dtype=float)
    logger.debug("Design for %s: %d rows, columns %s", spec.response, len(rows), names)
    return DesignMatrix(X=X, y=y, w=w, columns=names)


def check_rank(X: np.ndarray, columns: Sequence[str]) -> None:
    """Raise RankDeficientError naming each group of exactly collinear columns."""
    # Scale columns so the rank test does not depend on units.
    norms = np.linalg.norm(X, axis=0)
    scaled = X / np.where(norms > 0, norms, 1.0)
    basis = scipy.linalg.null_space(scaled, rcond=RANK_TOLERANCE)
    if basis.shape[1] == 0:
        return
    groups = []
    for vector in basis.T:
        members = [columns[j] for j in np.flatnonzero(np.abs(vector) > 1e-8)]
        if members not in groups:
            groups.append(members)
    raise RankDeficientError(groups)


# ── Estimation ───────────────────────────────────────────────────
def _bread(X: np.ndarray, w: np.ndarray) -> np.ndarray:
    """(X'WX)^-1 from the R factor of sqrt(W)X."""
    _, R = scipy.linalg.qr(np.sqrt(w)[:, None] * X, mode="economic")
    R_inv = scipy.linalg.solve_triangular(R, np.eye(X.shape[1]))
    return R_inv @ R_inv.T


def _check_weights(X: np.ndarray, y: np.ndarray, w: np.ndarray) -> None:
    if not len(X) == len(y) == len(w):
        raise DomainValidationError(f"length mismatch: X {len(X)}, y {len(y)}, w {len(w)}")
    if np.any(w <= 0):
        raise DomainValidationError("weights must be positive")


def robust_covariance(
    X: np.ndarray,
    w: np.ndarray,
    residuals: np.ndarray,
    flavor: Literal["HC0", "HC1"] = "HC1",
) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    w = np.asarray(w, dtype=float)
    residuals = np.asarray(residuals, dtype=float)
    bread = _bread(X, w)
    scores = X * (w * residuals)[:, None]
    cov = bread @ (scores.T @ scores) @ bread
    n, k = X.shape
    if flavor == "HC1":
        cov = cov * (n / (n - k))
    elif flavor != "HC0":
        raise ValueError(f"unknown covariance flavor {flavor!r}")
    return 0.5 * (cov + cov.T)


def weighted_r2(y, fitted, w) -> float:
    y = np.asarray(y, dtype=float)
    fitted = np.asarray(fitted, dtype=float)
    w = np.asarray(w, dtype=float)
    if not len(y) == len(fitted) == len(w):
        raise DomainValidationError("y, fitted and w must have the same length")
    mean = np.sum(w * y) / np.sum(w)
    total = np.sum(w * (y - mean) ** 2)
    if total <= 0:
        raise UndefinedStatisticError("weighted R^2 is undefined: the response has zero weighted variance")
    return float(1.0 - np.sum(w * (y - fitted) ** 2) / total)


def fit_wls(
    X: np.ndarray,
    y: np.ndarray,
    w: np.ndarray,
    columns: Sequence[str] | None = None,
    flavor: Literal["HC0", "HC1"] = "HC1",
    spec: RegressionSpec | None = None,
) -> FitResult:
    """Solve (X'WX) b = X'Wy through the QR decomposition of sqrt(W)X."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    w = np.asarray(w, dtype=float)
    _check_weights(X, y, w)
    names = list(columns) if columns is not None else [f"x{j}" for j in range(X.shape[1])]
    check_rank(X, names)

    root_w = np.sqrt(w)
    Q, R = scipy.linalg.qr(root_w[:, None] * X, mode="economic")
    beta = scipy.linalg.solve_triangular(R, Q.T @ (root_w * y))
    fitted = X @ beta
    residuals = y - fitted

    cov = robust_covariance(X, w, residuals, flavor)
    try:
        r2 = weighted_r2(y, fitted, w)
    except UndefinedStatisticError as e:
        logger.warning("%s", e)
        r2 = math.nan
    return FitResult(
        coefficients=pd.Series(beta, index=names),
        robust_se=pd.Series(np.sqrt(np.clip(np.diag(cov), 0.0, None)), index=names),
        covariance=pd.DataFrame(cov, index=names, columns=names),
        n_obs=len(y),
        weighted_r2=r2,
        flavor=flavor,
        spec=spec,
    )


def fit_regression(
    records: Sequence[BidRecord] | pd.DataFrame,
    spec: RegressionSpec,
    flavor: Literal["HC0", "HC1"] = "HC1",
) -> FitResult:
    design = build_design_matrix(records, spec)
    result = fit_wls(design.X, design.y, design.w, design.columns, flavor, spec)
    logger.info(
        "Fitted %s (%s weights): n=%d, k=%d, R^2=%.4f",
        spec.response,
        spec.weighting,
        result.n_obs,
        len(design.columns),
        result.weighted_r2,
    )
    return result


# ── Interpretation ───────────────────────────────────────────────
def interpret_log_coefficient(beta):
    """Percent change implied by a coefficient on a log response: exp(beta) - 1."""
    out = np.expm1(beta)
    return out if np.ndim(out) else float(out)


def marginal_effect_nbid(fit: FitResult, n: float) -> float:
    """Effect on a log response of going from n to n + 1 bidders."""
    for term in (NBID, NBID_SQ):
        if term not in fit.coefficients.index:
            raise MissingTermError(term)
    b1 = fit.coefficients[NBID]
    b2 = fit.coefficients[NBID_SQ]
    return float(np.expm1(b1 + b2 * (2 * n + 1)))


def format_fit_table(fits: Mapping[str, FitResult], title: str = "") -> str:
    """Coefficient / robust error columns per fit, with n and R^2 footer."""
    terms: list[str] = []
    for fit in fits.values():
        terms.extend(t for t in fit.coefficients.index if t not in terms)
    width = max([len(t) for t in terms] + [10]) + 2
    lines = [title] if title else []
    lines.append(" " * width + "".join(f"{name:>28}" for name in fits))
    lines.append(f"{'':<{width}}" + "".join(f"{'Coefficient':>14}{'Robust Error':>14}" for _ in fits))
    for term in terms:
        cells = ""
        for fit in fits.values():
            if term in fit.coefficients.index:
                cells += f"{fit.coefficients[term]:>14.4f}{fit.robust_se[term]:>14.4f}"
            else:
                cells += f"{'':>28}"
        lines.append(f"{term:<{width}}{cells}")
    lines.append(f"{'n':<{width}}" + "".join(f"{fit.n_obs:>28d}" for fit in fits.values()))
    lines.append(f"{'R^2':<{width}}" + "".join(f"{fit.weighted_r2:>28.4f}" for fit in fits.values()))
    return "\n".join(lines)
