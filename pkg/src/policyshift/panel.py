"""County-year ingestion and analysis-panel construction.

Raw inputs are a county-year table (counts, population, pharmacy
presence, a dispensing flag, covariates) and a state-level table of law
effective dates. This module resolves masked counts, computes rates per
100,000 residents aged 12+, codes continuous years-of-exposure and
binary yearly exposure trajectories, and assembles the point and
longitudinal panels the estimators consume.
"""

from __future__ import annotations

import datetime as dt
import re
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd

__all__ = [
    "LAW_CODES",
    "STRATUM_WINDOWS",
    "SchemaError",
    "AttritionReport",
    "PanelTable",
    "LongitudinalPanel",
    "load_county_year",
    "load_law_dates",
    "resolve_masked_counts",
    "compute_rate",
    "proportion_of_year_in_effect",
    "exposure_years",
    "state_year_law_table",
    "build_panel",
    "build_longitudinal_panel",
    "augment_with_loo_cluster_means",
]

LAW_CODES = (
    "NAL_P1",
    "NAL_P2",
    "NAL_P3",
    "NAL_P4",
    "GSL",
    "PMCL",
    "MML",
    "PDMP_OPERATIONAL",
    "PDMP_MUSTQUERY",
)

DEFAULT_EXPOSURE_LAWS = ("NAL_P1", "NAL_P2", "NAL_P3", "GSL")

COUNTY_YEAR_COLUMNS = (
    "county_id",
    "state_id",
    "year",
    "pop12plus",
    "naloxone_count",
    "overdose_count",
    "pharmacy_count",
    "opioid_dispensing_flag",
)


@dataclass(frozen=True)
class StratumWindow:
    start: dt.date
    end: dt.date
    baseline_year: int
    outcome_year: int


STRATUM_WINDOWS = {
    "EARLY": StratumWindow(dt.date(2007, 1, 1), dt.date(2012, 12, 31), 2007, 2013),
    "LATE": StratumWindow(dt.date(2013, 3, 19), dt.date(2017, 12, 31), 2013, 2018),
}


class SchemaError(ValueError):
    """An input table does not match its declared schema."""


@dataclass(frozen=True)
class AttritionReport:
    """How many rows survived mask resolution and unit exclusion.

    ``n_input`` counts counties entering construction,
    ``n_masked_resolved`` counts county-year cells whose masked count
    was resolved to zero, ``n_excluded`` counts counties dropped for an
    unresolvable mask in a needed year.
    """

    n_input: int
    n_masked_resolved: int
    n_excluded: int

    @property
    def fraction_excluded(self):
        return self.n_excluded / self.n_input if self.n_input else 0.0

    def to_dict(self):
        return {
            "n_input": self.n_input,
            "n_masked_resolved": self.n_masked_resolved,
            "n_excluded": self.n_excluded,
            "fraction_excluded": self.fraction_excluded,
        }


@dataclass
class PanelTable:
    """One row per unit: exposure, outcome, cluster id, covariates.

    ``data`` holds columns unit_id, cluster_id, exposure, outcome plus
    the covariate columns listed in ``covariates``. The exposure support
    maximum is always the observed maximum.
    """

    data: pd.DataFrame
    covariates: list
    stratum: str = "LATE"

    def __post_init__(self):
        self.covariates = list(self.covariates)
        required = ["unit_id", "cluster_id", "exposure", "outcome"] + self.covariates
        for col in required:
            if col not in self.data.columns:
                raise SchemaError(f"panel is missing column '{col}'")
        if self.data["unit_id"].duplicated().any():
            dup = self.data.loc[self.data["unit_id"].duplicated(), "unit_id"].iloc[0]
            raise SchemaError(f"duplicate unit_id '{dup}'")
        numeric = self.data[["exposure", "outcome"] + self.covariates].to_numpy(dtype=np.float64)
        if not np.isfinite(numeric).all():
            raise SchemaError("exposure, outcome, and covariates must be finite")
        if (self.data["exposure"] < 0).any():
            raise SchemaError("exposure must be nonnegative")
        if len(self.data) == 0:
            raise SchemaError("panel has no rows")
        self.data = self.data.reset_index(drop=True)

    def __len__(self):
        return len(self.data)

    @property
    def exposure(self):
        return self.data["exposure"].to_numpy(dtype=np.float64)

    @property
    def outcome(self):
        return self.data["outcome"].to_numpy(dtype=np.float64)

    @property
    def cluster_ids(self):
        return self.data["cluster_id"].to_numpy()

    @property
    def covariate_matrix(self):
        if not self.covariates:
            return np.empty((len(self.data), 0), dtype=np.float64)
        return self.data[self.covariates].to_numpy(dtype=np.float64)

    @property
    def exposure_max(self):
        return float(self.data["exposure"].max())

    @property
    def n_clusters(self):
        return int(self.data["cluster_id"].nunique())

    def to_csv(self, path):
        cols = ["unit_id", "cluster_id", "exposure", "outcome"] + self.covariates
        self.data[cols].to_csv(path, index=False)

    @classmethod
    def from_csv(cls, path, stratum="LATE"):
        df = pd.read_csv(path)
        fixed = {"unit_id", "cluster_id", "exposure", "outcome"}
        missing = fixed - set(df.columns)
        if missing:
            raise SchemaError(f"panel csv is missing columns {sorted(missing)}")
        covs = [c for c in df.columns if c not in fixed]
        return cls(data=df, covariates=covs, stratum=stratum)


@dataclass
class LongitudinalPanel:
    """Wide yearly panel: baseline covariates, binary exposure path, outcome.

    Exposure columns are ordered oldest first and each unit's trajectory
    is non-decreasing. ``tv_covariates`` maps step t (2-based, matching
    the convention that time-varying covariates precede that year's
    exposure) to its column names.
    """

    data: pd.DataFrame
    covariates: list
    exposure_cols: list
    tv_covariates: dict
    stratum: str = "LATE"

    def __post_init__(self):
        self.covariates = list(self.covariates)
        self.exposure_cols = list(self.exposure_cols)
        self.tv_covariates = {int(k): list(v) for k, v in self.tv_covariates.items()}
        tv_flat = [c for cols in self.tv_covariates.values() for c in cols]
        required = (
            ["unit_id", "cluster_id", "outcome"]
            + self.covariates
            + self.exposure_cols
            + tv_flat
        )
        for col in required:
            if col not in self.data.columns:
                raise SchemaError(f"longitudinal panel is missing column '{col}'")
        if not self.exposure_cols:
            raise SchemaError("need at least one exposure column")
        if self.data["unit_id"].duplicated().any():
            raise SchemaError("duplicate unit_id in longitudinal panel")
        traj = self.data[self.exposure_cols].to_numpy(dtype=np.float64)
        if not np.isin(np.unique(traj), (0.0, 1.0)).all():
            raise SchemaError("exposure trajectory entries must be 0/1")
        if np.any(np.diff(traj, axis=1) < 0):
            raise SchemaError("exposure trajectories must be non-decreasing")
        bad_t = [t for t in self.tv_covariates if not 2 <= t <= self.horizon]
        if bad_t:
            raise SchemaError(f"time-varying covariate steps out of range: {bad_t}")
        self.data = self.data.reset_index(drop=True)

    def __len__(self):
        return len(self.data)

    @property
    def horizon(self):
        return len(self.exposure_cols)

    @property
    def trajectories(self):
        return self.data[self.exposure_cols].to_numpy(dtype=np.float64)

    @property
    def outcome(self):
        return self.data["outcome"].to_numpy(dtype=np.float64)

    @property
    def cluster_ids(self):
        return self.data["cluster_id"].to_numpy()

    @property
    def covariate_matrix(self):
        if not self.covariates:
            return np.empty((len(self.data), 0), dtype=np.float64)
        return self.data[self.covariates].to_numpy(dtype=np.float64)

    @property
    def n_clusters(self):
        return int(self.data["cluster_id"].nunique())

    def tv_matrix(self, t):
        cols = self.tv_covariates.get(t, [])
        if not cols:
            return np.empty((len(self.data), 0), dtype=np.float64)
        return self.data[cols].to_numpy(dtype=np.float64)

    def to_csv(self, path):
        tv_flat = [c for t in sorted(self.tv_covariates) for c in self.tv_covariates[t]]
        cols = (
            ["unit_id", "cluster_id"]
            + self.covariates
            + self.exposure_cols
            + tv_flat
            + ["outcome"]
        )
        self.data[cols].to_csv(path, index=False)

    @classmethod
    def from_csv(cls, path, exposure_cols=None, tv_covariates=None, stratum="LATE"):
        """Reload a wide yearly panel written by ``to_csv``.

        When the column roles are not given they are inferred from the
        naming conventions used throughout: exposure columns match
        ``exp_*`` or ``a_*`` (sorted by trailing number) and columns
        containing ``__y`` or matching ``l_<t>`` are time-varying,
        keyed by step.
        """
        df = pd.read_csv(path)
        fixed = {"unit_id", "cluster_id", "outcome"}
        missing = fixed - set(df.columns)
        if missing:
            raise SchemaError(f"longitudinal csv is missing columns {sorted(missing)}")
        if exposure_cols is None:
            tagged = []
            for col in df.columns:
                m = re.fullmatch(r"(?:exp|a)_(\d+)", col)
                if m:
                    tagged.append((int(m.group(1)), col))
            exposure_cols = [col for _, col in sorted(tagged)]
            if not exposure_cols:
                raise SchemaError("could not infer exposure columns (exp_*/a_*)")
        exposure_cols = list(exposure_cols)
        if tv_covariates is None:
            periods = {}
            for _, col in sorted(
                (int(re.search(r"(\d+)$", c).group(1)), c)
                for c in df.columns
                if re.search(r"(?:__y|^l_)(\d+)$", c)
            ):
                idx = int(re.search(r"(\d+)$", col).group(1))
                if re.fullmatch(r"l_(\d+)", col):
                    step = idx
                else:
                    year_of = {
                        int(re.fullmatch(r"(?:exp|a)_(\d+)", e).group(1)): t
                        for t, e in enumerate(exposure_cols, start=1)
                        if re.fullmatch(r"(?:exp|a)_(\d+)", e)
                    }
                    step = year_of.get(idx)
                    if step is None:
                        continue
                if 2 <= step <= len(exposure_cols):
                    periods.setdefault(step, []).append(col)
            tv_covariates = periods
        tv_flat = {c for cols in tv_covariates.values() for c in cols}
        covariates = [
            c
            for c in df.columns
            if c not in fixed and c not in exposure_cols and c not in tv_flat
        ]
        return cls(
            data=df,
            covariates=covariates,
            exposure_cols=exposure_cols,
            tv_covariates=tv_covariates,
            stratum=stratum,
        )


def load_county_year(path):
    """Read and validate the raw county-year table.

    Any numeric column beyond the fixed schema is treated as a
    covariate. Masked event counts arrive as empty cells.
    """
    df = pd.read_csv(path)
    missing = set(COUNTY_YEAR_COLUMNS) - set(df.columns)
    if missing:
        raise SchemaError(f"county_year is missing columns {sorted(missing)}")
    for col in ("pop12plus", "naloxone_count", "overdose_count", "pharmacy_count"):
        df[col] = pd.to_numeric(df[col], errors="coerce")
    df["year"] = pd.to_numeric(df["year"], errors="coerce")
    if df["year"].isna().any():
        raise SchemaError("county_year has non-numeric year values")
    df["year"] = df["year"].astype(int)
    flag = pd.to_numeric(df["opioid_dispensing_flag"], errors="coerce")
    if not flag.dropna().isin((0, 1)).all():
        raise SchemaError("opioid_dispensing_flag must be 0/1 where present")
    df["opioid_dispensing_flag"] = flag
    if (df["pop12plus"].fillna(0) <= 0).any():
        raise SchemaError("pop12plus must be positive in every county-year")
    if df.duplicated(subset=["county_id", "year"]).any():
        raise SchemaError("duplicate (county_id, year) rows")
    covariate_cols = [c for c in df.columns if c not in COUNTY_YEAR_COLUMNS]
    for col in covariate_cols:
        df[col] = pd.to_numeric(df[col], errors="coerce")
        if df[col].isna().any():
            raise SchemaError(f"covariate column '{col}' has missing or non-numeric values")
    return df


def load_law_dates(path):
    """Read and validate the state law effective-date table."""
    df = pd.read_csv(path)
    for col in ("state_id", "law_code", "effective_date"):
        if col not in df.columns:
            raise SchemaError(f"law_dates is missing column '{col}'")
    bad = sorted(set(df["law_code"]) - set(LAW_CODES))
    if bad:
        raise SchemaError(f"unknown law codes {bad}; expected a subset of {list(LAW_CODES)}")
    try:
        df["effective_date"] = df["effective_date"].map(dt.date.fromisoformat)
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"effective_date must be ISO formatted YYYY-MM-DD: {exc}") from exc
    if df.duplicated(subset=["state_id", "law_code"]).any():
        raise SchemaError("more than one effective date for a (state_id, law_code) pair")
    return df


def resolve_masked_counts(county_df, count_col="naloxone_count"):
    """Resolve masked dispensing counts where the masking is informative.

    A masked count is set to zero when the dispensing flag shows opioid
    activity without the event, or when the county has more than two or
    zero retail pharmacies (masking there reflects absence, not
    suppression). Remaining masked cells stay missing and force the
    county out downstream.

    Returns the resolved copy plus (n_resolved, n_unresolved).
    """
    df = county_df.copy()
    masked = df[count_col].isna()
    flag = df["opioid_dispensing_flag"].fillna(0).astype(float) > 0
    pharmacies = df["pharmacy_count"]
    resolvable = masked & (
        flag | (pharmacies > 2) | (pharmacies == 0)
    )
    df.loc[resolvable, count_col] = 0.0
    n_resolved = int(resolvable.sum())
    n_unresolved = int((masked & ~resolvable).sum())
    return df, n_resolved, n_unresolved


def compute_rate(counts, population):
    """Events per 100,000 population aged 12+."""
    counts = np.asarray(counts, dtype=np.float64)
    population = np.asarray(population, dtype=np.float64)
    if np.any(population <= 0):
        raise ValueError("population must be positive")
    if np.any(counts[np.isfinite(counts)] < 0):
        raise ValueError("event counts must be nonnegative")
    return counts / population * 100_000.0


def proportion_of_year_in_effect(effective_date, year):
    """Fraction of a calendar year a law was in effect.

    Zero before enactment, one for laws effective on or before Jan 1,
    otherwise the count of days from the effective date through Dec 31
    inclusive over the exact length of the year (365 or 366).
    """
    if not isinstance(effective_date, dt.date):
        effective_date = dt.date.fromisoformat(str(effective_date))
    year = int(year)
    jan1 = dt.date(year, 1, 1)
    dec31 = dt.date(year, 12, 31)
    if effective_date > dec31:
        return 0.0
    if effective_date <= jan1:
        return 1.0
    days_in_effect = (dec31 - effective_date).days + 1
    days_in_year = (dec31 - jan1).days + 1
    return days_in_effect / days_in_year


def exposure_years(effective_dates, window_start, window_end, clip_to_window_start=True):
    """Continuous years of exposure within a calendar window.

    The bundle's exposure starts at the earliest of its effective dates.
    Dates after the window end give zero. With clipping (the default)
    dates before the window start count from the window start.
    """
    if window_end < window_start:
        raise ValueError(f"window end {window_end} precedes start {window_start}")
    dates = [d if isinstance(d, dt.date) else dt.date.fromisoformat(str(d)) for d in effective_dates]
    if not dates:
        return 0.0
    earliest = min(dates)
    if earliest > window_end:
        return 0.0
    if clip_to_window_start:
        earliest = max(earliest, window_start)
    return (window_end - earliest).days / 365.25


def state_year_law_table(law_df, years, law_codes=LAW_CODES):
    """Proportion-of-year-in-effect for every (state, year, law) cell."""
    years = list(years)
    states = sorted(law_df["state_id"].unique())
    lookup = {
        (row.state_id, row.law_code): row.effective_date
        for row in law_df.itertuples(index=False)
    }
    rows = []
    for state in states:
        for year in years:
            record = {"state_id": state, "year": year}
            for code in law_codes:
                eff = lookup.get((state, code))
                record[code] = (
                    proportion_of_year_in_effect(eff, year) if eff is not None else 0.0
                )
            rows.append(record)
    return pd.DataFrame(rows)


def _rates_for_year(df, year, count_col, label):
    sub = df[df["year"] == year]
    if sub.empty:
        raise SchemaError(f"no county-year rows for {label} year {year}")
    rates = compute_rate(sub[count_col].to_numpy(), sub["pop12plus"].to_numpy())
    return pd.Series(rates, index=sub["county_id"].to_numpy())


def build_panel(
    county_df,
    law_df,
    stratum="LATE",
    outcome="naloxone",
    exposure_laws=DEFAULT_EXPOSURE_LAWS,
    window=None,
    baseline_year=None,
    outcome_year=None,
    clip_to_window_start=True,
    loo_summaries=True,
):
    """Assemble the point-exposure analysis panel.

    Parameters
    ----------
    county_df : pandas.DataFrame
        Validated county-year rows (see load_county_year).
    law_df : pandas.DataFrame
        Validated law effective dates.
    stratum : str
        "EARLY" or "LATE"; picks default window and years.
    outcome : str
        "naloxone" or "overdose".
    exposure_laws : sequence of str
        Law bundle whose earliest effective date starts the exposure clock.
    window, baseline_year, outcome_year
        Override the stratum defaults.
    loo_summaries : bool
        Append leave-one-out within-state means of the covariates and
        exposure as additional covariates.

    Returns
    -------
    (PanelTable, AttritionReport)
    """
    if stratum not in STRATUM_WINDOWS:
        raise SchemaError(f"unknown stratum '{stratum}'; expected EARLY or LATE")
    defaults = STRATUM_WINDOWS[stratum]
    window = window or (defaults.start, defaults.end)
    baseline_year = baseline_year or defaults.baseline_year
    outcome_year = outcome_year or defaults.outcome_year
    count_col = _outcome_column(outcome)
    bad_laws = sorted(set(exposure_laws) - set(LAW_CODES))
    if bad_laws:
        raise SchemaError(f"unknown exposure laws {bad_laws}")

    df, n_resolved, _ = resolve_masked_counts(county_df)
    counties = df[["county_id", "state_id"]].drop_duplicates("county_id")
    n_input = len(counties)

    outcome_rates = _rates_for_year(df, outcome_year, count_col, "outcome")
    baseline_rates = _rates_for_year(df, baseline_year, count_col, "baseline")

    base = df[df["year"] == baseline_year].set_index("county_id")
    covariate_cols = [c for c in df.columns if c not in COUNTY_YEAR_COLUMNS]

    by_state = {
        state: group for state, group in law_df.groupby("state_id")
    }

    rows = []
    n_excluded = 0
    for county, state in counties.itertuples(index=False):
        y = outcome_rates.get(county, np.nan)
        y0 = baseline_rates.get(county, np.nan)
        if county not in base.index:
            n_excluded += 1
            continue
        if not (np.isfinite(y) and np.isfinite(y0)):
            n_excluded += 1
            continue
        state_laws = by_state.get(state)
        if state_laws is None:
            dates = []
        else:
            dates = state_laws.loc[
                state_laws["law_code"].isin(exposure_laws), "effective_date"
            ].tolist()
        a = exposure_years(dates, window[0], window[1], clip_to_window_start)
        record = {
            "unit_id": county,
            "cluster_id": state,
            "exposure": a,
            "outcome": float(y),
            "baseline_rate": float(y0),
        }
        for col in covariate_cols:
            record[col] = float(base.at[county, col])
        rows.append(record)

    if not rows:
        raise SchemaError("no counties survived panel construction")
    data = pd.DataFrame(rows)
    panel = PanelTable(
        data=data,
        covariates=["baseline_rate"] + covariate_cols,
        stratum=stratum,
    )
    if loo_summaries:
        panel = augment_with_loo_cluster_means(panel)
    report = AttritionReport(n_input, n_resolved, n_excluded)
    return panel, report


def _outcome_column(outcome):
    mapping = {"naloxone": "naloxone_count", "overdose": "overdose_count"}
    if outcome not in mapping:
        raise SchemaError(f"unknown outcome '{outcome}'; expected naloxone or overdose")
    return mapping[outcome]


def build_longitudinal_panel(
    county_df,
    law_df,
    exposure_years_list,
    stratum="LATE",
    outcome="naloxone",
    exposure_laws=DEFAULT_EXPOSURE_LAWS,
    outcome_year=None,
):
    """Assemble the yearly binary-exposure panel.

    A_t is 1 when the bundle's earliest law was in effect at any point
    of year t; trajectories are non-decreasing by construction. Baseline
    covariates come from the first exposure year; each later exposure
    year contributes that year's outcome rate and covariates as
    time-varying columns.
    """
    years = [int(y) for y in exposure_years_list]
    if sorted(years) != years or len(set(years)) != len(years):
        raise SchemaError("exposure years must be strictly increasing")
    if not years:
        raise SchemaError("need at least one exposure year")
    outcome_year = outcome_year or (
        STRATUM_WINDOWS[stratum].outcome_year if stratum in STRATUM_WINDOWS else years[-1] + 1
    )
    count_col = _outcome_column(outcome)

    df, n_resolved, _ = resolve_masked_counts(county_df)
    counties = df[["county_id", "state_id"]].drop_duplicates("county_id")
    n_input = len(counties)
    covariate_cols = [c for c in df.columns if c not in COUNTY_YEAR_COLUMNS]

    rate_by_year = {}
    for year in years + [outcome_year]:
        rate_by_year[year] = _rates_for_year(df, year, count_col, "panel")
    base = df[df["year"] == years[0]].set_index("county_id")
    per_year = {
        year: df[df["year"] == year].set_index("county_id") for year in years
    }

    earliest_by_state = {}
    for state, group in law_df.groupby("state_id"):
        dates = group.loc[group["law_code"].isin(exposure_laws), "effective_date"]
        if len(dates):
            earliest_by_state[state] = min(dates)

    exposure_cols = [f"exp_{year}" for year in years]
    tv_covariates = {}
    rows = []
    n_excluded = 0
    for county, state in counties.itertuples(index=False):
        needed = [rate_by_year[y].get(county, np.nan) for y in years + [outcome_year]]
        if county not in base.index or not np.all(np.isfinite(needed)):
            n_excluded += 1
            continue
        record = {"unit_id": county, "cluster_id": state}
        record["baseline_rate"] = float(rate_by_year[years[0]][county])
        for col in covariate_cols:
            record[col] = float(base.at[county, col])
        earliest = earliest_by_state.get(state)
        for year, col in zip(years, exposure_cols):
            in_effect = earliest is not None and earliest <= dt.date(year, 12, 31)
            record[col] = 1.0 if in_effect else 0.0
        for t, year in enumerate(years[1:], start=2):
            names = [f"rate__y{year}"] + [f"{c}__y{year}" for c in covariate_cols]
            tv_covariates[t] = names
            record[f"rate__y{year}"] = float(rate_by_year[year][county])
            for c in covariate_cols:
                record[f"{c}__y{year}"] = float(per_year[year].at[county, c])
        record["outcome"] = float(rate_by_year[outcome_year][county])
        rows.append(record)

    if not rows:
        raise SchemaError("no counties survived longitudinal construction")
    data = pd.DataFrame(rows)
    panel = LongitudinalPanel(
        data=data,
        covariates=["baseline_rate"] + covariate_cols,
        exposure_cols=exposure_cols,
        tv_covariates=tv_covariates,
        stratum=stratum,
    )
    return panel, AttritionReport(n_input, n_resolved, n_excluded)


def augment_with_loo_cluster_means(panel, columns=None):
    """Append leave-one-out within-cluster means as covariates.

    For each listed column (default: all covariates plus the exposure)
    every unit gets the mean of its cluster peers, excluding itself;
    units alone in their cluster keep their own value.
    """
    if columns is None:
        columns = list(panel.covariates) + ["exposure"]
    df = panel.data.copy()
    grouped = df.groupby("cluster_id")
    new_cols = []
    for col in columns:
        if col not in df.columns:
            raise SchemaError(f"cannot summarize unknown column '{col}'")
        total = grouped[col].transform("sum")
        size = grouped[col].transform("size")
        loo = np.where(
            size > 1,
            (total - df[col]) / np.maximum(size - 1, 1),
            df[col],
        )
        name = f"{col}_loo"
        df[name] = loo
        new_cols.append(name)
    return replace(
        panel,
        data=df,
        covariates=list(panel.covariates) + new_cols,
    )
