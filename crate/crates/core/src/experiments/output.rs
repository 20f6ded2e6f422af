use std::io::Write;
use std::path::{Path, PathBuf};

use super::battery::{Aggregate, BatteryRecord, ExperimentResult};
use super::plan::Scenario;
use super::rho_sweep::RhoSweepResult;
use super::surface::SurfaceScanResult;
use crate::error::{Error, Result};
use crate::estimators::Parameter;
use crate::io::write_atomic;
use crate::numeric::fmt_f64;

/// Result of any plan, ready to be written as CSV.
#[derive(Debug, Clone, PartialEq)]
pub enum PlanOutput {
    Battery(ExperimentResult),
    Surface(SurfaceScanResult),
    RhoSweep(RhoSweepResult),
}

const AGGREGATES_FILE: &str = "aggregates.csv";

fn battery_file(scenario: Scenario) -> &'static str {
    match scenario {
        Scenario::EpsKnownMu => "eps_battery.csv",
        Scenario::MuKnownEps => "mu_battery.csv",
        _ => "joint_battery.csv",
    }
}

fn estimate_column(scenario: Scenario) -> &'static str {
    match scenario {
        Scenario::EpsKnownMu => "eps_hat",
        Scenario::MuKnownEps => "mu_hat",
        _ => "estimate",
    }
}

const RECORD_COLUMNS: usize = 15;
const AGGREGATE_COLUMNS: usize = 18;

fn parameter_name(p: Parameter) -> &'static str {
    match p {
        Parameter::Epsilon => "epsilon",
        Parameter::Mu => "mu",
    }
}

impl PlanOutput {
    /// Writes every CSV of the result into `dir` (created if missing) and
    /// returns their paths.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        match self {
            PlanOutput::Battery(r) => write_battery(dir, r),
            PlanOutput::Surface(r) => write_surface(dir, r),
            PlanOutput::RhoSweep(r) => {
                let path = dir.join("rho_sweep.csv");
                write_atomic(&path, |w| {
                    writeln!(w, "rho,bias,bound")?;
                    for p in &r.points {
                        writeln!(w, "{},{},{}", fmt_f64(p.rho), fmt_f64(p.bias), fmt_f64(p.bound))?;
                    }
                    Ok(())
                })?;
                Ok(vec![path])
            }
        }
    }
}

fn write_battery(dir: &Path, r: &ExperimentResult) -> Result<Vec<PathBuf>> {
    let records = dir.join(battery_file(r.scenario));
    write_atomic(&records, |w| {
        writeln!(
            w,
            "N,T,eps_true,mu_true,q,k,parameter,{},error,exists,boundary_hit,flat_flag,n_minima,analytic_bias,analytic_variance",
            estimate_column(r.scenario)
        )?;
        for x in &r.records {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                x.n,
                x.t,
                fmt_f64(x.eps_true),
                fmt_f64(x.mu_true),
                x.q,
                x.k,
                parameter_name(x.parameter),
                fmt_f64(x.estimate),
                fmt_f64(x.error),
                x.exists,
                x.boundary_hit,
                x.flat,
                x.n_minima,
                fmt_f64(x.analytic_bias),
                fmt_f64(x.analytic_variance),
            )?;
        }
        Ok(())
    })?;
    let aggregates = dir.join(AGGREGATES_FILE);
    write_atomic(&aggregates, |w| {
        writeln!(
            w,
            "scenario,parameter,N,T,eps_true,mu_true,rho,count,excluded,mean_error,std_error,sem,\
             mean_abs_error,mean_analytic_bias,mean_analytic_variance,bound,boundary_fraction,flat_fraction"
        )?;
        for a in &r.aggregates {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                a.scenario.name(),
                parameter_name(a.parameter),
                a.n,
                a.t,
                fmt_f64(a.eps_true),
                fmt_f64(a.mu_true),
                fmt_f64(r.rho),
                a.count,
                a.excluded,
                fmt_f64(a.mean_error),
                fmt_f64(a.std_error),
                fmt_f64(a.sem),
                fmt_f64(a.mean_abs_error),
                fmt_f64(a.mean_analytic_bias),
                fmt_f64(a.mean_analytic_variance),
                fmt_f64(a.bound),
                fmt_f64(a.boundary_fraction),
                fmt_f64(a.flat_fraction),
            )?;
        }
        Ok(())
    })?;
    Ok(vec![records, aggregates])
}

fn write_surface(dir: &Path, r: &SurfaceScanResult) -> Result<Vec<PathBuf>> {
    let long = dir.join("surface_long.csv");
    write_atomic(&long, |w| {
        writeln!(w, "epsilon,mu,nll,cell_id")?;
        for c in &r.cells {
            let s = &c.surface;
            for (a, &eps) in s.eps_grid.iter().enumerate() {
                for (b, &mu) in s.mu_grid.iter().enumerate() {
                    writeln!(w, "{},{},{},{}", fmt_f64(eps), fmt_f64(mu), fmt_f64(s.get(a, b)), c.cell_id)?;
                }
            }
        }
        Ok(())
    })?;
    let cells = dir.join("surface_cells.csv");
    write_atomic(&cells, |w| {
        writeln!(
            w,
            "cell_id,N,T,eps_true,mu_true,q,k,n_minima,interior_minima,min_epsilon,min_mu,min_nll,nll_at_truth"
        )?;
        for c in &r.cells {
            let g = &c.global_minimum;
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                c.cell_id,
                c.n,
                c.t,
                fmt_f64(c.eps_true),
                fmt_f64(c.mu_true),
                c.q,
                c.k,
                c.n_minima(),
                c.interior_minima(),
                fmt_f64(g.epsilon),
                fmt_f64(g.mu),
                fmt_f64(g.nll),
                fmt_f64(c.nll_at_truth),
            )?;
        }
        Ok(())
    })?;
    let minima = dir.join("surface_minima.csv");
    write_atomic(&minima, |w| {
        writeln!(w, "cell_id,epsilon,mu,nll")?;
        for c in &r.cells {
            for m in &c.minima {
                writeln!(w, "{},{},{},{}", c.cell_id, fmt_f64(m.epsilon), fmt_f64(m.mu), fmt_f64(m.nll))?;
            }
        }
        Ok(())
    })?;
    Ok(vec![long, cells, minima])
}

struct Row<'a> {
    record: &'a csv::StringRecord,
    line: u64,
}

impl Row<'_> {
    fn field(&self, i: usize) -> Result<&str> {
        self.record
            .get(i)
            .ok_or_else(|| Error::Parse(format!("line {}: missing column {}", self.line, i + 1)))
    }

    fn parse<T: std::str::FromStr>(&self, i: usize) -> Result<T> {
        let s = self.field(i)?;
        s.parse()
            .map_err(|_| Error::Parse(format!("line {}: cannot parse `{s}` in column {}", self.line, i + 1)))
    }

    fn parameter(&self, i: usize) -> Result<Parameter> {
        match self.field(i)? {
            "epsilon" => Ok(Parameter::Epsilon),
            "mu" => Ok(Parameter::Mu),
            other => Err(Error::Parse(format!("line {}: unknown parameter `{other}`", self.line))),
        }
    }
}

fn read_rows<T>(path: &Path, columns: usize, mut f: impl FnMut(&Row) -> Result<T>) -> Result<Vec<T>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let width = reader.headers()?.len();
    if width != columns {
        return Err(Error::Parse(format!(
            "{}: expected {columns} columns, found {width}",
            path.display()
        )));
    }
    let mut out = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        out.push(f(&Row {
            record: &record,
            line: i as u64 + 2,
        })?);
    }
    Ok(out)
}

/// Reads a battery CSV written by [`PlanOutput::write`].
pub fn read_battery_csv(path: &Path) -> Result<Vec<BatteryRecord>> {
    read_rows(path, RECORD_COLUMNS, |r| {
        Ok(BatteryRecord {
            n: r.parse(0)?,
            t: r.parse(1)?,
            eps_true: r.parse(2)?,
            mu_true: r.parse(3)?,
            q: r.parse(4)?,
            k: r.parse(5)?,
            parameter: r.parameter(6)?,
            estimate: r.parse(7)?,
            error: r.parse(8)?,
            exists: r.parse(9)?,
            boundary_hit: r.parse(10)?,
            flat: r.parse(11)?,
            n_minima: r.parse(12)?,
            analytic_bias: r.parse(13)?,
            analytic_variance: r.parse(14)?,
        })
    })
}

/// Reads `aggregates.csv`, returning the rho of each row alongside it.
pub fn read_aggregates_csv(path: &Path) -> Result<Vec<(Aggregate, f64)>> {
    read_rows(path, AGGREGATE_COLUMNS, |r| {
        let scenario: Scenario = serde_json::from_value(serde_json::Value::String(r.field(0)?.to_string()))
            .map_err(|_| Error::Parse(format!("line {}: unknown scenario", r.line)))?;
        Ok((
            Aggregate {
                scenario,
                parameter: r.parameter(1)?,
                n: r.parse(2)?,
                t: r.parse(3)?,
                eps_true: r.parse(4)?,
                mu_true: r.parse(5)?,
                count: r.parse(7)?,
                excluded: r.parse(8)?,
                mean_error: r.parse(9)?,
                std_error: r.parse(10)?,
                sem: r.parse(11)?,
                mean_abs_error: r.parse(12)?,
                mean_analytic_bias: r.parse(13)?,
                mean_analytic_variance: r.parse(14)?,
                bound: r.parse(15)?,
                boundary_fraction: r.parse(16)?,
                flat_fraction: r.parse(17)?,
            },
            r.parse(6)?,
        ))
    })
}

/// Loads a battery written to `dir` and checks that the stored aggregates
/// are exactly those recomputed from the records.
pub fn load_battery(dir: &Path) -> Result<ExperimentResult> {
    let rows = read_aggregates_csv(&dir.join(AGGREGATES_FILE))?;
    let Some((first, rho)) = rows.first().cloned() else {
        return Err(Error::Parse("aggregates.csv has no rows".into()));
    };
    if rows.iter().any(|(a, r)| a.scenario != first.scenario || r.to_bits() != rho.to_bits()) {
        return Err(Error::Parse("aggregates.csv mixes scenarios or rho values".into()));
    }
    let records = read_battery_csv(&dir.join(battery_file(first.scenario)))?;
    let result = ExperimentResult {
        scenario: first.scenario,
        rho,
        records,
        aggregates: rows.into_iter().map(|(a, _)| a).collect(),
    };
    result.verify_aggregates()?;
    Ok(result)
}
