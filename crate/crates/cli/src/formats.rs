//! File formats: CSV ingestion and emission, fit-result JSON, and the
//! key = value scenario/run configuration files.
//!
//! Every parse error carries the 1-based data-row number (header and
//! comment lines do not count), so a bad cell in a large file is
//! locatable at a glance.

use previnc_core::data::{AgeInterval, AggregatedCounts, CurrentStatusTable, DataError};
use previnc_core::fit::FitResult;
use previnc_core::idm::{GompertzIncidence, InitialCondition};
use previnc_core::lifetable::{LifeTableColumn, LifeTableError};
use previnc_core::plugin::{IncidenceEstimate, MortalityContext};
use previnc_core::rates::{PiecewiseConstantRate, Rate, RateError};
use previnc_core::sim::Scenario;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FormatError {
    #[error("empty table: no data rows")]
    Empty,
    #[error("missing header line; expected `{expected}`")]
    MissingHeader { expected: &'static str },
    #[error("unexpected header `{got}`; expected `{expected}`")]
    WrongHeader { expected: &'static str, got: String },
    #[error("expected {expected} comma-separated fields at row {row}, got {got}")]
    FieldCount {
        row: usize,
        expected: usize,
        got: usize,
    },
    #[error("malformed number in `{field}` at row {row}: `{value}`")]
    Number {
        row: usize,
        field: &'static str,
        value: String,
    },
    #[error("c exceeds n at row {row}")]
    CountExceedsTotal { row: usize },
    #[error("invalid age interval at row {row}: {source}")]
    Interval { row: usize, source: DataError },
    #[error("overlapping age intervals at row {row}")]
    Overlap { row: usize },
    #[error("age intervals must be contiguous; gap before row {row}")]
    Gap { row: usize },
    #[error("non-positive life-table value at row {row}")]
    NonPositiveValue { row: usize },
    #[error("negative rate at row {row}")]
    NegativeRate { row: usize },
    #[error("malformed period directive: `{0}`")]
    BadPeriod(String),
    #[error("malformed config line {line}: `{text}` (expected `key = value`)")]
    BadConfigLine { line: usize, text: String },
    #[error("scenario config is missing required key `{0}`")]
    MissingKey(&'static str),
    #[error("scenario config key `{key}` has malformed value `{value}`")]
    BadValue { key: String, value: String },
    #[error(transparent)]
    LifeTable(#[from] LifeTableError),
    #[error(transparent)]
    Rate(#[from] RateError),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Split a CSV body into the period directive (from `# period=…`
/// comment lines) and its data rows, after validating the header.
fn csv_rows<'a>(
    text: &'a str,
    header: &'static str,
) -> Result<(Option<f64>, Vec<&'a str>), FormatError> {
    let mut period = None;
    let mut rows = Vec::new();
    let mut seen_header = false;
    for raw in text.lines() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            let comment = comment.trim();
            if let Some(value) = comment.strip_prefix("period=") {
                let value = value.trim();
                period = Some(
                    value
                        .parse::<f64>()
                        .map_err(|_| FormatError::BadPeriod(value.to_string()))?,
                );
            }
            continue;
        }
        if !seen_header {
            if line != header {
                return Err(FormatError::WrongHeader {
                    expected: header,
                    got: line.to_string(),
                });
            }
            seen_header = true;
            continue;
        }
        rows.push(line);
    }
    if !seen_header {
        return Err(FormatError::MissingHeader { expected: header });
    }
    Ok((period, rows))
}

fn split_fields(row: &str, row_no: usize, expected: usize) -> Result<Vec<&str>, FormatError> {
    let fields: Vec<&str> = row.split(',').map(str::trim).collect();
    if fields.len() != expected {
        return Err(FormatError::FieldCount {
            row: row_no,
            expected,
            got: fields.len(),
        });
    }
    Ok(fields)
}

fn parse_f64(s: &str, row: usize, field: &'static str) -> Result<f64, FormatError> {
    s.parse::<f64>().map_err(|_| FormatError::Number {
        row,
        field,
        value: s.to_string(),
    })
}

fn parse_u64(s: &str, row: usize, field: &'static str) -> Result<u64, FormatError> {
    s.parse::<u64>().map_err(|_| FormatError::Number {
        row,
        field,
        value: s.to_string(),
    })
}

fn parse_interval(fields: &[&str], row: usize) -> Result<AgeInterval, FormatError> {
    let lo = parse_f64(fields[0], row, "age_lo")?;
    let hi = parse_f64(fields[1], row, "age_hi")?;
    AgeInterval::new(lo, hi).map_err(|source| FormatError::Interval { row, source })
}

pub const CURRENT_STATUS_HEADER: &str = "age_lo,age_hi,n,c";

/// Parse an aggregated current-status table.
///
/// Format: header `age_lo,age_hi,n,c`, one row per age group, optional
/// `#` comment lines, optional `# period=<year>` directive tagging the
/// calendar period of the counts.
pub fn parse_current_status_csv(text: &str) -> Result<CurrentStatusTable, FormatError> {
    let (period, rows) = csv_rows(text, CURRENT_STATUS_HEADER)?;
    if rows.is_empty() {
        return Err(FormatError::Empty);
    }
    let mut groups = Vec::with_capacity(rows.len());
    for (idx, row) in rows.iter().enumerate() {
        let row_no = idx + 1;
        let fields = split_fields(row, row_no, 4)?;
        let interval = parse_interval(&fields, row_no)?;
        let n = parse_u64(fields[2], row_no, "n")?;
        let c = parse_u64(fields[3], row_no, "c")?;
        let group = AggregatedCounts::new(interval, n, c).map_err(|e| match e {
            DataError::CountExceedsTotal { .. } => FormatError::CountExceedsTotal { row: row_no },
            other => FormatError::Interval {
                row: row_no,
                source: other,
            },
        })?;
        groups.push((row_no, group));
    }
    // overlap detection with row attribution before the (sorted)
    // table constructor re-validates
    let mut sorted: Vec<&(usize, AggregatedCounts)> = groups.iter().collect();
    sorted.sort_by(|a, b| a.1.interval.lo().total_cmp(&b.1.interval.lo()));
    for pair in sorted.windows(2) {
        if pair[0].1.interval.overlaps(&pair[1].1.interval) {
            return Err(FormatError::Overlap {
                row: pair[0].0.max(pair[1].0),
            });
        }
    }
    Ok(CurrentStatusTable::new(
        groups.into_iter().map(|(_, g)| g).collect(),
        period,
    )?)
}

/// Serialize a table in the same format [`parse_current_status_csv`]
/// reads; parse ∘ serialize is the identity.
pub fn serialize_current_status_csv(table: &CurrentStatusTable) -> String {
    let mut out = String::new();
    if let Some(p) = table.period() {
        let _ = writeln!(out, "# period={p}");
    }
    let _ = writeln!(out, "{CURRENT_STATUS_HEADER}");
    for g in table.groups() {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            g.interval.lo(),
            g.interval.hi(),
            g.n(),
            g.c()
        );
    }
    out
}

pub const LIFETABLE_HEADER: &str = "age_lo,age_hi,general,diseased";

/// Parse the two survivor columns of a life table on a shared age grid.
pub fn parse_lifetable_csv(
    text: &str,
) -> Result<(LifeTableColumn, LifeTableColumn), FormatError> {
    let (_, rows) = csv_rows(text, LIFETABLE_HEADER)?;
    if rows.is_empty() {
        return Err(FormatError::Empty);
    }
    let mut general = Vec::with_capacity(rows.len());
    let mut diseased = Vec::with_capacity(rows.len());
    for (idx, row) in rows.iter().enumerate() {
        let row_no = idx + 1;
        let fields = split_fields(row, row_no, 4)?;
        let interval = parse_interval(&fields, row_no)?;
        let g = parse_f64(fields[2], row_no, "general")?;
        let d = parse_f64(fields[3], row_no, "diseased")?;
        if g <= 0.0 || d <= 0.0 {
            return Err(FormatError::NonPositiveValue { row: row_no });
        }
        general.push((interval, g));
        diseased.push((interval, d));
    }
    Ok((
        LifeTableColumn::new(general)?,
        LifeTableColumn::new(diseased)?,
    ))
}

/// Parse a two-column piecewise-constant rate file with the given
/// header (e.g. `age_lo,age_hi,m,m1` or `age_lo,age_hi,m,R`). The age
/// intervals must be contiguous and ascending; they become the step
/// function's breakpoints.
fn parse_two_rate_csv(
    text: &str,
    header: &'static str,
) -> Result<(PiecewiseConstantRate, PiecewiseConstantRate), FormatError> {
    let (_, rows) = csv_rows(text, header)?;
    if rows.is_empty() {
        return Err(FormatError::Empty);
    }
    let mut breakpoints: Vec<f64> = Vec::with_capacity(rows.len() + 1);
    let mut first = Vec::with_capacity(rows.len());
    let mut second = Vec::with_capacity(rows.len());
    for (idx, row) in rows.iter().enumerate() {
        let row_no = idx + 1;
        let fields = split_fields(row, row_no, 4)?;
        let interval = parse_interval(&fields, row_no)?;
        let a = parse_f64(fields[2], row_no, "first rate column")?;
        let b = parse_f64(fields[3], row_no, "second rate column")?;
        if a < 0.0 || b < 0.0 {
            return Err(FormatError::NegativeRate { row: row_no });
        }
        match breakpoints.last() {
            None => breakpoints.push(interval.lo()),
            Some(&prev_hi) => {
                if (interval.lo() - prev_hi).abs() > 1e-9 {
                    return Err(FormatError::Gap { row: row_no });
                }
            }
        }
        breakpoints.push(interval.hi());
        first.push(a);
        second.push(b);
    }
    Ok((
        PiecewiseConstantRate::new(breakpoints.clone(), first)?,
        PiecewiseConstantRate::new(breakpoints, second)?,
    ))
}

pub const RATES_HEADER: &str = "age_lo,age_hi,m,m1";

/// Annual mortality rates: general (`m`) and diseased (`m1`).
pub fn parse_rates_csv(
    text: &str,
) -> Result<(PiecewiseConstantRate, PiecewiseConstantRate), FormatError> {
    parse_two_rate_csv(text, RATES_HEADER)
}

/// Serialize general/diseased annual rates on their shared grid.
pub fn serialize_rates_csv(m: &PiecewiseConstantRate, m1: &PiecewiseConstantRate) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{RATES_HEADER}");
    let bps = m.breakpoints();
    for (k, pair) in bps.windows(2).enumerate() {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            pair[0],
            pair[1],
            m.values()[k],
            m1.values()[k]
        );
    }
    out
}

pub const MORTALITY_CONTEXT_HEADER: &str = "age_lo,age_hi,m,R";

/// General mortality and mortality rate ratio by age.
pub fn parse_mortality_context_csv(text: &str) -> Result<MortalityContext, FormatError> {
    let (mortality, rate_ratio) = parse_two_rate_csv(text, MORTALITY_CONTEXT_HEADER)?;
    Ok(MortalityContext {
        mortality,
        rate_ratio,
    })
}

/// Fit result as JSON:
/// `{"estimates":[...],"std_errors":[...],"ci95":[[lo,hi],...],
///   "max_loglik":...,"converged":...,"iterations":...}`.
pub fn fit_result_json(fit: &FitResult) -> String {
    let mut s = serde_json::to_string_pretty(fit).expect("fit result serializes");
    s.push('\n');
    s
}

/// Incidence curve CSV: `age,incidence,ci_lo,ci_hi`.
pub fn serialize_curve_csv(rows: &[(f64, f64, f64, f64)]) -> String {
    let mut out = String::from("age,incidence,ci_lo,ci_hi\n");
    for (age, inc, lo, hi) in rows {
        let _ = writeln!(out, "{age},{inc},{lo},{hi}");
    }
    out
}

/// Incidence curve without interval columns (the regression route
/// reports no uncertainty): `age,incidence`.
pub fn serialize_point_curve_csv(rows: &[(f64, f64)]) -> String {
    let mut out = String::from("age,incidence\n");
    for (age, inc) in rows {
        let _ = writeln!(out, "{age},{inc}");
    }
    out
}

/// Plug-in incidence curve; the fifth column flags negative point
/// estimates (1 = negative).
pub fn serialize_plugin_curve_csv(rows: &[IncidenceEstimate]) -> String {
    let mut out = String::from("age,incidence,ci_lo,ci_hi,negative\n");
    for e in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            e.age,
            e.point,
            e.ci95.0,
            e.ci95.1,
            u8::from(e.negative)
        );
    }
    out
}

/// `key = value` lines; `#` comments and blank lines ignored.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>, FormatError> {
    let mut map = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(FormatError::BadConfigLine {
                line: idx + 1,
                text: line.to_string(),
            });
        };
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

/// A parsed scenario file: the Gompertz forward model plus sampling
/// layout.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub scenario: Scenario<GompertzIncidence>,
    pub seed_from_file: Option<u64>,
}

fn required<'a>(
    map: &'a BTreeMap<String, String>,
    key: &'static str,
) -> Result<&'a str, FormatError> {
    map.get(key)
        .map(String::as_str)
        .ok_or(FormatError::MissingKey(key))
}

fn kv_f64(map: &BTreeMap<String, String>, key: &'static str) -> Result<f64, FormatError> {
    let raw = required(map, key)?;
    raw.parse::<f64>().map_err(|_| FormatError::BadValue {
        key: key.to_string(),
        value: raw.to_string(),
    })
}

fn parse_f64_list(key: &str, raw: &str) -> Result<Vec<f64>, FormatError> {
    raw.split(',')
        .map(|s| {
            s.trim().parse::<f64>().map_err(|_| FormatError::BadValue {
                key: key.to_string(),
                value: raw.to_string(),
            })
        })
        .collect()
}

/// Parse a scenario config (`key = value` lines).
///
/// Required keys: `beta0`, `beta1`, `a0`, `p0`, `boundaries`, `sizes`
/// (a single size broadcasts to every group). Optional: `seed`, and
/// `m0` / `m1` as per-cell rate lists; mortality defaults to zero.
pub fn parse_scenario(text: &str) -> Result<ScenarioConfig, FormatError> {
    let map = parse_key_values(text)?;
    let beta0 = kv_f64(&map, "beta0")?;
    let beta1 = kv_f64(&map, "beta1")?;
    let a0 = kv_f64(&map, "a0")?;
    let p0 = kv_f64(&map, "p0")?;
    let boundaries = parse_f64_list("boundaries", required(&map, "boundaries")?)?;

    let sizes_raw = required(&map, "sizes")?;
    let sizes: Vec<u64> = sizes_raw
        .split(',')
        .map(|s| {
            s.trim().parse::<u64>().map_err(|_| FormatError::BadValue {
                key: "sizes".to_string(),
                value: sizes_raw.to_string(),
            })
        })
        .collect::<Result<_, _>>()?;
    let cells = boundaries.len().saturating_sub(1);
    let group_sizes = if sizes.len() == 1 {
        vec![sizes[0]; cells]
    } else {
        sizes
    };

    let cell_rate = |key: &'static str| -> Result<PiecewiseConstantRate, FormatError> {
        match map.get(key) {
            None => Ok(PiecewiseConstantRate::constant(0.0)?),
            Some(raw) => {
                let values = parse_f64_list(key, raw)?;
                Ok(PiecewiseConstantRate::new(boundaries.clone(), values)?)
            }
        }
    };

    let seed_from_file = match map.get("seed") {
        None => None,
        Some(raw) => Some(raw.parse::<u64>().map_err(|_| FormatError::BadValue {
            key: "seed".to_string(),
            value: raw.to_string(),
        })?),
    };

    let ic = InitialCondition::new(a0, p0).map_err(|_| FormatError::BadValue {
        key: "p0".to_string(),
        value: format!("{p0}"),
    })?;

    Ok(ScenarioConfig {
        scenario: Scenario {
            incidence: GompertzIncidence::new(beta0, beta1),
            m0: cell_rate("m0")?,
            m1: cell_rate("m1")?,
            ic,
            age_grid: boundaries,
            group_sizes,
            seed: seed_from_file.unwrap_or(0),
        },
        seed_from_file,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINERS: &str = "\
age_lo,age_hi,n,c
20,25,1952,16
25,30,1791,32
";

    #[test]
    fn parses_counts_and_period() {
        let table = parse_current_status_csv(MINERS).unwrap();
        assert_eq!(table.len(), 2);
        assert_eq!(table.groups()[0].n(), 1952);
        assert_eq!(table.groups()[0].c(), 16);
        assert_eq!(table.period(), None);

        let with_period = format!("# period=2009\n{MINERS}");
        let table = parse_current_status_csv(&with_period).unwrap();
        assert_eq!(table.period(), Some(2009.0));
    }

    #[test]
    fn zero_count_rows_are_valid() {
        let table = parse_current_status_csv("age_lo,age_hi,n,c\n20,25,0,0\n").unwrap();
        assert_eq!(table.groups()[0].n(), 0);
    }

    #[test]
    fn count_error_carries_the_row_number() {
        let err = parse_current_status_csv("age_lo,age_hi,n,c\n20,25,10,11\n").unwrap_err();
        assert_eq!(err, FormatError::CountExceedsTotal { row: 1 });
        assert_eq!(err.to_string(), "c exceeds n at row 1");

        let err =
            parse_current_status_csv("age_lo,age_hi,n,c\n20,25,10,1\n25,30,10,11\n").unwrap_err();
        assert_eq!(err, FormatError::CountExceedsTotal { row: 2 });
    }

    #[test]
    fn malformed_number_is_reported_with_row() {
        let err = parse_current_status_csv("age_lo,age_hi,n,c\n20,25,abc,1\n").unwrap_err();
        assert!(matches!(err, FormatError::Number { row: 1, .. }));
    }

    #[test]
    fn overlap_is_reported_with_row() {
        let text = "age_lo,age_hi,n,c\n20,26,10,1\n25,30,10,1\n";
        assert_eq!(
            parse_current_status_csv(text).unwrap_err(),
            FormatError::Overlap { row: 2 }
        );
    }

    #[test]
    fn empty_and_headerless_inputs_fail_distinctly() {
        assert_eq!(
            parse_current_status_csv("age_lo,age_hi,n,c\n").unwrap_err(),
            FormatError::Empty
        );
        assert!(matches!(
            parse_current_status_csv("").unwrap_err(),
            FormatError::MissingHeader { .. }
        ));
        assert!(matches!(
            parse_current_status_csv("a,b\n1,2\n").unwrap_err(),
            FormatError::WrongHeader { .. }
        ));
    }

    #[test]
    fn lifetable_rejects_non_positive_values() {
        let text = "age_lo,age_hi,general,diseased\n20,25,481185,343937\n25,30,0,333343\n";
        assert_eq!(
            parse_lifetable_csv(text).unwrap_err(),
            FormatError::NonPositiveValue { row: 2 }
        );
    }

    #[test]
    fn lifetable_parses_both_columns() {
        let text = "age_lo,age_hi,general,diseased\n20,25,481185,343937\n25,30,478683,333343\n";
        let (g, d) = parse_lifetable_csv(text).unwrap();
        assert_eq!(g.entries()[0].1, 481_185.0);
        assert_eq!(d.entries()[1].1, 333_343.0);
        assert!(g.same_grid(&d));
    }

    #[test]
    fn rate_csv_requires_contiguous_grid() {
        let text = "age_lo,age_hi,m,m1\n20,25,0.001,0.002\n30,35,0.002,0.004\n";
        assert_eq!(
            parse_rates_csv(text).unwrap_err(),
            FormatError::Gap { row: 2 }
        );
    }

    #[test]
    fn mortality_context_round_trips_values() {
        let text = "age_lo,age_hi,m,R\n20,25,0.001,4.5\n25,30,0.0012,4.2\n";
        let ctx = parse_mortality_context_csv(text).unwrap();
        assert_eq!(ctx.mortality.value_at(22.0), 0.001);
        assert_eq!(ctx.rate_ratio.value_at(27.0), 4.2);
    }

    #[test]
    fn scenario_minimal_config() {
        let text = "\
beta0 = -7.8237
beta1 = 0.07559
a0 = 20
p0 = 0
boundaries = 20,25,30
sizes = 1000
seed = 42
";
        let cfg = parse_scenario(text).unwrap();
        assert_eq!(cfg.seed_from_file, Some(42));
        assert_eq!(cfg.scenario.group_sizes, vec![1000, 1000]);
        assert_eq!(cfg.scenario.age_grid, vec![20.0, 25.0, 30.0]);
    }

    #[test]
    fn scenario_missing_key_is_named() {
        let err = parse_scenario("beta0 = -7\n").unwrap_err();
        assert_eq!(err, FormatError::MissingKey("beta1"));
    }

    #[test]
    fn config_lines_must_be_key_value() {
        assert!(matches!(
            parse_key_values("a = 1\nnonsense\n").unwrap_err(),
            FormatError::BadConfigLine { line: 2, .. }
        ));
    }
}
