//! Command implementations behind the CLI verbs.
//!
//! Exit-code contract: 0 on success, 1 for input/validation problems,
//! 2 for numerical trouble (non-convergence, failed step-halving,
//! indefinite Fisher information). All referenced input files are read
//! and parsed before any computation starts, and every output file is
//! written atomically (temp file + rename), so a failed run never
//! leaves partial output behind.

use crate::formats::{
    fit_result_json, parse_current_status_csv, parse_key_values, parse_lifetable_csv,
    parse_mortality_context_csv, parse_scenario, serialize_current_status_csv,
    serialize_curve_csv, serialize_plugin_curve_csv, serialize_point_curve_csv,
    serialize_rates_csv,
};
use previnc_core::data::CurrentStatusTable;
use previnc_core::fit::{
    fd_gradient, fit_differential, fit_logit_linear, fit_nondifferential,
    incidence_from_logit_fit, FitError, FitResult, WALD_Z_95,
};
use previnc_core::idm::{GompertzIncidence, InitialCondition, SolverOptions};
use previnc_core::lifetable::{lifetable_to_rate, RateConversion};
use previnc_core::plugin::{
    fit_prevalence_surface, incidence_with_ci, IncidenceEstimate, MortalityContext, PluginError,
    SurfaceError, SurfaceFit,
};
use previnc_core::rates::PiecewiseConstantRate;
use statrs::distribution::ContinuousCDF;
use std::collections::BTreeMap;
use std::fmt;
use std::io::Write as _;
use std::path::{Path, PathBuf};

#[derive(Debug)]
pub enum CmdError {
    /// Bad inputs: missing files, malformed data, invalid options.
    Input(String),
    /// The data parsed but the numerics did not cooperate.
    Numerical(String),
}

impl CmdError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CmdError::Input(_) => 1,
            CmdError::Numerical(_) => 2,
        }
    }
}

impl fmt::Display for CmdError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CmdError::Input(msg) | CmdError::Numerical(msg) => f.write_str(msg),
        }
    }
}

impl std::error::Error for CmdError {}

fn input<E: fmt::Display>(e: E) -> CmdError {
    CmdError::Input(e.to_string())
}

fn numerical<E: fmt::Display>(e: E) -> CmdError {
    CmdError::Numerical(e.to_string())
}

fn fit_error(e: FitError) -> CmdError {
    match e {
        FitError::MidpointBelowInitial { .. }
        | FitError::DegenerateCounts { .. }
        | FitError::LogitBoundaryGroup { .. }
        | FitError::TooFewGroups => input(e),
        FitError::NotPositiveDefinite | FitError::ObjectiveInfeasible | FitError::Solver(_) => {
            numerical(e)
        }
    }
}

fn read_file(path: &Path) -> Result<String, CmdError> {
    std::fs::read_to_string(path)
        .map_err(|e| CmdError::Input(format!("cannot read {}: {e}", path.display())))
}

/// Atomic write: stage in a temp file next to the target, then rename.
fn write_atomic(path: &Path, content: &str) -> Result<(), CmdError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let mut tmp = tempfile::NamedTempFile::new_in(dir.unwrap_or(Path::new(".")))
        .map_err(|e| CmdError::Input(format!("cannot stage {}: {e}", path.display())))?;
    tmp.write_all(content.as_bytes())
        .map_err(|e| CmdError::Input(format!("cannot write {}: {e}", path.display())))?;
    tmp.persist(path)
        .map_err(|e| CmdError::Input(format!("cannot persist {}: {e}", path.display())))?;
    Ok(())
}

/// Two-sided normal quantile for the requested confidence level; the
/// default level uses the same pinned constant as the fit summaries.
fn wald_z(level: f64) -> Result<f64, CmdError> {
    if !(0.0 < level && level < 1.0) {
        return Err(CmdError::Input(format!(
            "confidence level must be in (0, 1), got {level}"
        )));
    }
    if (level - 0.95).abs() < 1e-12 {
        return Ok(WALD_Z_95);
    }
    let normal = statrs::distribution::Normal::new(0.0, 1.0).expect("unit normal");
    Ok(normal.inverse_cdf(0.5 + level / 2.0))
}

/// Options shared by the fitting commands, already merged with any
/// config-file values (flags win on conflict).
#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    pub a0: f64,
    pub p0: f64,
    pub level: f64,
    pub step: Option<f64>,
    pub threads: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            a0: 20.0,
            p0: 0.0,
            level: 0.95,
            step: None,
            threads: 1,
        }
    }
}

impl RunOptions {
    fn initial_condition(&self) -> Result<InitialCondition, CmdError> {
        InitialCondition::new(self.a0, self.p0).map_err(input)
    }

    fn solver(&self) -> SolverOptions {
        let mut opts = SolverOptions::default();
        if let Some(step) = self.step {
            opts.step = step;
        }
        opts
    }
}

/// Read a `key = value` run-config file and fold it under the explicit
/// flags.
pub fn merge_run_config(
    config_path: Option<&Path>,
    a0: Option<f64>,
    p0: Option<f64>,
    level: Option<f64>,
    step: Option<f64>,
    threads: Option<usize>,
) -> Result<RunOptions, CmdError> {
    let map = match config_path {
        None => BTreeMap::new(),
        Some(p) => parse_key_values(&read_file(p)?).map_err(input)?,
    };
    let from_cfg = |key: &str| -> Result<Option<f64>, CmdError> {
        map.get(key)
            .map(|raw| {
                raw.parse::<f64>().map_err(|_| {
                    CmdError::Input(format!("config key `{key}` has malformed value `{raw}`"))
                })
            })
            .transpose()
    };
    let defaults = RunOptions::default();
    Ok(RunOptions {
        a0: a0.or(from_cfg("a0")?).unwrap_or(defaults.a0),
        p0: p0.or(from_cfg("p0")?).unwrap_or(defaults.p0),
        level: level.or(from_cfg("level")?).unwrap_or(defaults.level),
        step: step.or(from_cfg("step")?),
        threads: threads
            .or(from_cfg("threads")?.map(|t| t as usize))
            .unwrap_or(defaults.threads),
    })
}

/// Config-file seed for `simulate` (its only config-only key besides
/// the shared options).
pub fn seed_from_run_config(config_path: Option<&Path>) -> Result<Option<u64>, CmdError> {
    let Some(p) = config_path else {
        return Ok(None);
    };
    let map = parse_key_values(&read_file(p)?).map_err(input)?;
    map.get("seed")
        .map(|raw| {
            raw.parse::<u64>().map_err(|_| {
                CmdError::Input(format!("config key `seed` has malformed value `{raw}`"))
            })
        })
        .transpose()
}

pub struct OutputPaths {
    pub json: Option<PathBuf>,
    pub curve: Option<PathBuf>,
}

/// Incidence curve for a fitted Gompertz model on the given ages, with
/// per-age delta-method intervals.
fn gompertz_curve(
    fit: &FitResult,
    ages: &[f64],
    z: f64,
) -> Result<Vec<(f64, f64, f64, f64)>, CmdError> {
    let cov = fit.covariance.as_ref().ok_or_else(|| {
        CmdError::Numerical(
            "Fisher information was not positive definite; incidence intervals withheld".into(),
        )
    })?;
    Ok(ages
        .iter()
        .map(|&a| {
            let inc = |beta: &[f64]| GompertzIncidence::new(beta[0], beta[1]).rate_at(a);
            let point = inc(&fit.estimates);
            let grad = fd_gradient(inc, &fit.estimates);
            let var = cov.quadratic_form(&grad).max(0.0);
            let half = z * var.sqrt();
            (a, point, point - half, point + half)
        })
        .collect())
}

fn finish_fit(
    fit: &FitResult,
    table: &CurrentStatusTable,
    opts: &RunOptions,
    out: &OutputPaths,
) -> Result<(), CmdError> {
    let json = fit_result_json(fit);
    print!("{json}");
    if let Some(path) = &out.json {
        write_atomic(path, &json)?;
    }
    if let Some(path) = &out.curve {
        let z = wald_z(opts.level)?;
        let curve = gompertz_curve(fit, &table.midpoints(), z)?;
        write_atomic(path, &serialize_curve_csv(&curve))?;
    }
    if fit.converged {
        Ok(())
    } else {
        Err(CmdError::Numerical(
            "optimizer did not converge within its iteration budget".into(),
        ))
    }
}

/// `fit`: maximum-likelihood Gompertz incidence without differential
/// mortality.
pub fn cmd_fit(data_path: &Path, opts: &RunOptions, out: &OutputPaths) -> Result<(), CmdError> {
    let table = parse_current_status_csv(&read_file(data_path)?).map_err(input)?;
    let ic = opts.initial_condition()?;
    let fit = fit_nondifferential(&table, &ic).map_err(fit_error)?;
    finish_fit(&fit, &table, opts, out)
}

/// `fit-mortality`: maximum-likelihood Gompertz incidence with
/// differential mortality taken from a life table.
pub fn cmd_fit_mortality(
    data_path: &Path,
    lifetable_path: &Path,
    opts: &RunOptions,
    out: &OutputPaths,
) -> Result<(), CmdError> {
    let table = parse_current_status_csv(&read_file(data_path)?).map_err(input)?;
    let (general, diseased) = parse_lifetable_csv(&read_file(lifetable_path)?).map_err(input)?;
    let ic = opts.initial_condition()?;

    let m = convert_with_warnings(&general, "general")?;
    let m1 = convert_with_warnings(&diseased, "diseased")?;

    let last_mid = *table.midpoints().last().expect("non-empty table");
    let covered_hi = m.last_breakpoint().min(m1.last_breakpoint());
    let covered_lo = m.first_breakpoint().max(m1.first_breakpoint());
    if covered_hi < last_mid || covered_lo > ic.a0 {
        return Err(CmdError::Input(format!(
            "life table covers ages [{covered_lo}, {covered_hi}) but the fit needs [{}, {last_mid}]",
            ic.a0
        )));
    }

    let fit = fit_differential(&table, &m1, &m, &ic, &opts.solver()).map_err(fit_error)?;
    finish_fit(&fit, &table, opts, out)
}

fn convert_with_warnings(
    col: &previnc_core::lifetable::LifeTableColumn,
    label: &str,
) -> Result<PiecewiseConstantRate, CmdError> {
    let RateConversion { rate, warnings } = lifetable_to_rate(col).map_err(input)?;
    for w in warnings {
        eprintln!("warning ({label} column): {w}");
    }
    Ok(rate)
}

/// `regress`: logit-linear least squares and its incidence curve.
pub fn cmd_regress(data_path: &Path, out: &OutputPaths) -> Result<(), CmdError> {
    let table = parse_current_status_csv(&read_file(data_path)?).map_err(input)?;
    let (beta0, beta1) = fit_logit_linear(&table).map_err(fit_error)?;
    println!("beta0 = {beta0}");
    println!("beta1 = {beta1}");
    if let Some(path) = &out.json {
        let json = serde_json::json!({ "beta0": beta0, "beta1": beta1 });
        write_atomic(path, &format!("{json:#}\n"))?;
    }
    if let Some(path) = &out.curve {
        let rows: Vec<(f64, f64)> = table
            .midpoints()
            .iter()
            .map(|&a| (a, incidence_from_logit_fit(beta0, beta1, a)))
            .collect();
        write_atomic(path, &serialize_point_curve_csv(&rows))?;
    }
    Ok(())
}

fn surface_error(e: SurfaceError) -> CmdError {
    match e {
        SurfaceError::MissingPeriod | SurfaceError::SamePeriod(_) | SurfaceError::GridMismatch => {
            input(e)
        }
        SurfaceError::Fit(f) => fit_error(f),
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AgeRange {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl AgeRange {
    fn ages(&self) -> Result<Vec<f64>, CmdError> {
        if !(self.step > 0.0) || self.max < self.min {
            return Err(CmdError::Input(format!(
                "invalid age range {}..{} step {}",
                self.min, self.max, self.step
            )));
        }
        let count = ((self.max - self.min) / self.step).round() as usize;
        Ok((0..=count)
            .map(|k| self.min + self.step * k as f64)
            .collect())
    }
}

/// Run `f` over `items` on up to `threads` scoped worker threads,
/// preserving order. Results are identical to the sequential path;
/// only wall time changes.
fn parallel_map<T, U, F>(items: &[T], threads: usize, f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync,
{
    if threads <= 1 || items.len() <= 1 {
        return items.iter().map(|x| f(x)).collect();
    }
    let chunk = items.len().div_ceil(threads);
    std::thread::scope(|scope| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|part| scope.spawn(|| part.iter().map(|x| f(x)).collect::<Vec<U>>()))
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("worker panicked"))
            .collect()
    })
}

fn period_label(p: f64) -> String {
    if p.fract() == 0.0 {
        format!("{}", p as i64)
    } else {
        format!("{p}")
    }
}

fn curve_path_for_period(base: &Path, period: f64, multiple: bool) -> PathBuf {
    if !multiple {
        return base.to_path_buf();
    }
    let stem = base.file_stem().and_then(|s| s.to_str()).unwrap_or("curve");
    let ext = base.extension().and_then(|s| s.to_str()).unwrap_or("csv");
    base.with_file_name(format!("{stem}.{}.{ext}", period_label(period)))
}

/// `plugin`: fit the logit-polynomial prevalence surface to two
/// periods and emit plug-in incidence with delta-method intervals, one
/// curve file per requested period.
pub fn cmd_plugin(
    first_path: &Path,
    second_path: &Path,
    mortality_path: &Path,
    opts: &RunOptions,
    range: &AgeRange,
    requested_periods: &[f64],
    out: &OutputPaths,
) -> Result<(), CmdError> {
    let first = parse_current_status_csv(&read_file(first_path)?).map_err(input)?;
    let second = parse_current_status_csv(&read_file(second_path)?).map_err(input)?;
    let ctx = parse_mortality_context_csv(&read_file(mortality_path)?).map_err(input)?;
    let ages = range.ages()?;

    let surface_fit = fit_prevalence_surface(&first, &second).map_err(surface_error)?;
    let json = fit_result_json(&surface_fit.fit);
    print!("{json}");
    if let Some(path) = &out.json {
        write_atomic(path, &json)?;
    }

    let periods: Vec<f64> = if requested_periods.is_empty() {
        let mut p = vec![
            first.period().expect("validated period"),
            second.period().expect("validated period"),
        ];
        p.sort_by(f64::total_cmp);
        p
    } else {
        requested_periods.to_vec()
    };

    if let Some(base) = &out.curve {
        for &period in &periods {
            let rows = plugin_rows(&surface_fit, period, &ages, &ctx, opts.threads)?;
            let path = curve_path_for_period(base, period, periods.len() > 1);
            write_atomic(&path, &serialize_plugin_curve_csv(&rows))?;
        }
    }

    if surface_fit.fit.converged {
        Ok(())
    } else {
        Err(CmdError::Numerical(
            "surface fit did not converge within its iteration budget".into(),
        ))
    }
}

fn plugin_rows(
    surface_fit: &SurfaceFit,
    period: f64,
    ages: &[f64],
    ctx: &MortalityContext,
    threads: usize,
) -> Result<Vec<IncidenceEstimate>, CmdError> {
    let results: Vec<Result<IncidenceEstimate, PluginError>> =
        parallel_map(ages, threads, |&a| {
            incidence_with_ci(surface_fit, period, a, ctx)
        });
    results
        .into_iter()
        .collect::<Result<Vec<_>, _>>()
        .map_err(numerical)
}

/// `simulate`: draw a synthetic current-status table from a scenario
/// file. The seed must come from `--seed`, the run config, or the
/// scenario file; runs are bit-reproducible given the same seed and
/// inputs.
pub fn cmd_simulate(
    scenario_path: &Path,
    seed_flag: Option<u64>,
    config_seed: Option<u64>,
    out_path: &Path,
) -> Result<(), CmdError> {
    let cfg = parse_scenario(&read_file(scenario_path)?).map_err(input)?;
    let seed = seed_flag
        .or(config_seed)
        .or(cfg.seed_from_file)
        .ok_or_else(|| {
            CmdError::Input(
                "simulate needs a seed: pass --seed or set `seed =` in the scenario file".into(),
            )
        })?;
    let mut scenario = cfg.scenario;
    scenario.seed = seed;
    scenario.validate().map_err(input)?;
    let table = scenario.sample_table().map_err(numerical)?;
    write_atomic(out_path, &serialize_current_status_csv(&table))?;
    println!("wrote {}", out_path.display());
    Ok(())
}

/// `convert-lifetable`: life-table survivor columns to annual rates.
pub fn cmd_convert_lifetable(lifetable_path: &Path, out_path: &Path) -> Result<(), CmdError> {
    let (general, diseased) = parse_lifetable_csv(&read_file(lifetable_path)?).map_err(input)?;
    let m = convert_with_warnings(&general, "general")?;
    let m1 = convert_with_warnings(&diseased, "diseased")?;
    write_atomic(out_path, &serialize_rates_csv(&m, &m1))?;
    println!("wrote {}", out_path.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wald_z_is_pinned_at_the_default_level() {
        assert_eq!(wald_z(0.95).unwrap(), WALD_Z_95);
        // other levels route through the inverse normal
        let z90 = wald_z(0.90).unwrap();
        assert!((z90 - 1.644_853_6).abs() < 1e-6);
        assert!(wald_z(0.0).is_err());
        assert!(wald_z(1.0).is_err());
    }

    #[test]
    fn age_range_is_inclusive() {
        let r = AgeRange {
            min: 20.0,
            max: 24.0,
            step: 1.0,
        };
        assert_eq!(r.ages().unwrap(), vec![20.0, 21.0, 22.0, 23.0, 24.0]);
        assert!(AgeRange {
            min: 20.0,
            max: 10.0,
            step: 1.0
        }
        .ages()
        .is_err());
    }

    #[test]
    fn parallel_map_matches_sequential() {
        let items: Vec<f64> = (0..97).map(|k| k as f64).collect();
        let seq = parallel_map(&items, 1, |x| x * x);
        let par = parallel_map(&items, 4, |x| x * x);
        assert_eq!(seq, par);
    }

    #[test]
    fn period_file_naming() {
        let base = Path::new("out/curve.csv");
        assert_eq!(curve_path_for_period(base, 2009.0, false), base);
        assert_eq!(
            curve_path_for_period(base, 2009.0, true),
            Path::new("out/curve.2009.csv")
        );
    }
}
