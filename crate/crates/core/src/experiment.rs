//! Runs, sweeps and trajectory CSV output.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::info;
use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::SeekerState;
use crate::error::{Error, Result};
use crate::integrator::{simulate, Status, Trajectory, PRESCRIBED_FRACTION};
use crate::oracle::{lyapunov_value, EquilibriumReport};
use crate::scenario::Scenario;

/// Terminal metrics of one run.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub scenario: String,
    pub tp: f64,
    pub status: Status,
    /// Time of the last sample.
    pub t_end: f64,
    pub consensus_error: f64,
    /// `max_i ‖x^i − x*‖` at the last sample.
    pub dist_to_nash: f64,
    /// `max_i ‖x^i − x*‖` at `0.99 Tp`, when the run got that far.
    pub dist_at_prescribed: Option<f64>,
    /// Largest constraint violation over all samples.
    pub max_constraint_violation: f64,
    pub sigma: Vec<f64>,
    pub omega: Vec<f64>,
    pub q: f64,
    pub q_capped_at: Option<f64>,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub equilibrium: EquilibriumReport,
}

impl RunSummary {
    /// Whether the integrator reached its horizon (or stopped on convergence).
    pub fn succeeded(&self) -> bool {
        matches!(self.status, Status::Completed | Status::Converged)
    }
}

/// A finished run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub summary: RunSummary,
    pub trajectory: Trajectory,
}

/// Largest `max(0, a_i·x_i − β_i)` over the actual actions.
pub fn constraint_violation(scenario: &Scenario, state: &SeekerState) -> f64 {
    let actions = state.actions(&scenario.game);
    (0..scenario.game.n_players())
        .map(|i| scenario.game.penalty_value(i, scenario.game.block(i, &actions)))
        .fold(0.0, f64::max)
}

/// Column names of the trajectory CSV.
pub fn csv_header(scenario: &Scenario) -> Vec<String> {
    let players = scenario.game.n_players();
    let n = scenario.game.total_dim();
    let mut cols = vec!["t".to_string(), "s".to_string()];
    for i in 1..=players {
        for j in 1..=n {
            cols.push(format!("x{i}_{j}"));
        }
    }
    cols.extend((1..=players).map(|i| format!("sigma_{i}")));
    cols.extend((1..=players).map(|i| format!("omega_{i}")));
    for c in ["q", "consensus_error", "dist_to_nash", "max_constraint_violation", "lyapunov_V"] {
        cols.push(c.to_string());
    }
    cols
}

fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes one row per sample. The Lyapunov column uses the terminal `σ` and
/// `ω` as reference gains.
pub fn write_csv<W: Write>(
    writer: W,
    scenario: &Scenario,
    trajectory: &Trajectory,
    x_star: &DVector<f64>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(csv_header(scenario))?;
    let last = &trajectory.last().state;
    let mut row = Vec::new();
    for sample in &trajectory.samples {
        let st = &sample.state;
        row.clear();
        row.push(fmt17(sample.t));
        row.push(fmt17(sample.s));
        row.extend(st.x.iter().chain(st.sigma.iter()).chain(st.omega.iter()).map(|&v| fmt17(v)));
        row.push(fmt17(st.q));
        row.push(fmt17(st.consensus_error(&scenario.graph)));
        row.push(fmt17(st.max_distance_to(x_star)));
        row.push(fmt17(constraint_violation(scenario, st)));
        row.push(fmt17(lyapunov_value(st, x_star, &last.sigma, &last.omega, &scenario.schedule)));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Solves for the equilibrium, simulates and, when `out` is given, writes the
/// trajectory CSV there.
pub fn run(scenario: &Scenario, out: Option<&Path>) -> Result<RunOutput> {
    let report = EquilibriumReport::build(&scenario.game, &scenario.graph, None)?;
    let x_star = report.x_star();
    let initial = scenario.initial_state();
    let trajectory = simulate(
        &scenario.game,
        &scenario.graph,
        &scenario.schedule,
        &initial,
        &scenario.integrator,
    )?;
    let last = trajectory.last();
    let omega_star = last.state.omega.min();
    let equilibrium = EquilibriumReport::build(&scenario.game, &scenario.graph, Some(omega_star))?;
    let tp = scenario.schedule.tp();
    let summary = RunSummary {
        scenario: scenario.name.clone(),
        tp,
        status: trajectory.status,
        t_end: last.t,
        consensus_error: last.state.consensus_error(&scenario.graph),
        dist_to_nash: last.state.max_distance_to(&x_star),
        dist_at_prescribed: trajectory
            .prescribed_sample()
            .map(|s| s.state.max_distance_to(&x_star)),
        max_constraint_violation: trajectory
            .samples
            .iter()
            .map(|s| constraint_violation(scenario, &s.state))
            .fold(0.0, f64::max),
        sigma: last.state.sigma.iter().copied().collect(),
        omega: last.state.omega.iter().copied().collect(),
        q: last.state.q,
        q_capped_at: trajectory.q_capped_at,
        accepted_steps: trajectory.stats.accepted,
        rejected_steps: trajectory.stats.rejected,
        equilibrium,
    };
    info!(
        "{}: status {}, distance at {:.4} = {:?}",
        summary.scenario,
        summary.status.as_str(),
        PRESCRIBED_FRACTION * tp,
        summary.dist_at_prescribed
    );
    if let Some(path) = out {
        let file = std::fs::File::create(path)?;
        write_csv(std::io::BufWriter::new(file), scenario, &trajectory, &x_star)?;
    }
    Ok(RunOutput { summary, trajectory })
}

/// The scenario parameter a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Tp,
    Seed,
    Amplitude,
    GammaScale,
}

impl SweepParam {
    pub fn as_str(&self) -> &'static str {
        match self {
            SweepParam::Tp => "tp",
            SweepParam::Seed => "seed",
            SweepParam::Amplitude => "amplitude",
            SweepParam::GammaScale => "gamma-scale",
        }
    }

    /// `scenario` with this parameter set to `value`.
    pub fn apply(&self, scenario: &Scenario, value: f64) -> Result<Scenario> {
        let s = scenario.clone();
        match self {
            SweepParam::Tp => s.with_tp(value),
            SweepParam::Seed => {
                if !(value >= 0.0 && value.fract() == 0.0 && value <= u64::MAX as f64) {
                    return Err(Error::Scenario(format!("seed must be a nonnegative integer, got {value}")));
                }
                Ok(s.with_seed(value as u64))
            }
            SweepParam::Amplitude => s.with_amplitude(value),
            SweepParam::GammaScale => s.with_gamma_scale(value),
        }
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tp" => Ok(SweepParam::Tp),
            "seed" => Ok(SweepParam::Seed),
            "amplitude" => Ok(SweepParam::Amplitude),
            "gamma-scale" | "gamma_scale" | "gamma" => Ok(SweepParam::GammaScale),
            other => Err(Error::Scenario(format!(
                "unknown sweep parameter '{other}' (expected tp, seed, amplitude or gamma-scale)"
            ))),
        }
    }
}

/// One row of a sweep table.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub status: Status,
    pub tp: f64,
    pub t_end: f64,
    pub dist_at_prescribed: Option<f64>,
    pub dist_to_nash: f64,
    pub consensus_error: f64,
    pub max_constraint_violation: f64,
    /// Per-run trajectory file, when an output directory was given.
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepTable {
    pub param: String,
    pub rows: Vec<SweepRow>,
    /// Largest distance to `x*` at `0.99 Tp` across runs.
    pub max_dist_at_prescribed: Option<f64>,
}

impl SweepTable {
    pub fn all_succeeded(&self) -> bool {
        self.rows.iter().all(|r| matches!(r.status, Status::Completed | Status::Converged))
    }
}

/// One independent run per value, in parallel. With `out_dir`, run `k`
/// writes `<name>-<param>-<k>.csv` there.
pub fn sweep(scenario: &Scenario, param: SweepParam, values: &[f64], out_dir: Option<&Path>) -> Result<SweepTable> {
    let scenarios = values
        .iter()
        .map(|&v| param.apply(scenario, v))
        .collect::<Result<Vec<_>>>()?;
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
    }
    let rows = scenarios
        .par_iter()
        .enumerate()
        .map(|(k, sc)| {
            let csv = out_dir.map(|d| d.join(format!("{}-{}-{k}.csv", scenario.name, param)));
            let out = run(sc, csv.as_deref())?;
            let s = out.summary;
            Ok(SweepRow {
                value: values[k],
                status: s.status,
                tp: s.tp,
                t_end: s.t_end,
                dist_at_prescribed: s.dist_at_prescribed,
                dist_to_nash: s.dist_to_nash,
                consensus_error: s.consensus_error,
                max_constraint_violation: s.max_constraint_violation,
                csv,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let max_dist_at_prescribed = rows
        .iter()
        .map(|r| r.dist_at_prescribed.unwrap_or(f64::INFINITY))
        .reduce(f64::max);
    Ok(SweepTable {
        param: param.to_string(),
        rows,
        max_dist_at_prescribed,
    })
}
