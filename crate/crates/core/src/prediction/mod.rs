//! Demand-side pairing model: how likely a passenger of each OD is to be
//! paired while waiting or while riding, and the distance saving to expect.

mod solver;
mod state_space;
mod tables;

pub use solver::{occupancy, pairing_probability, SolveReport, SolverOptions, State};
pub use state_space::{Match, SeekerState, StateSpace, TakerState, TieBreak};
pub use tables::{
    expected_saving_seeker, expected_saving_taker, expected_saving_vacant, expected_saving_wait, load_tables,
    save_tables, wait_factor, HourTables, PredictionTables, TableError, VacantSaving,
};

use crate::domain::Trip;

/// Poisson arrival rates per OD, one vector per hour of the study period.
#[derive(Debug, Clone, PartialEq)]
pub struct DemandProfile {
    pub ods: Vec<Trip>,
    /// `hourly[h][w]`: arrivals per second of OD `w` during hour `h`.
    pub hourly: Vec<Vec<f64>>,
}

#[derive(Debug, thiserror::Error)]
pub enum PredictionError {
    #[error("demand rate for OD {od} in hour {hour} must be finite and nonnegative, got {value}")]
    BadRate { hour: usize, od: usize, value: f64 },
    #[error("hour {hour} has {got} rates for {expected} ODs")]
    ShapeMismatch { hour: usize, got: usize, expected: usize },
    #[error("hour {hour} did not converge in {iterations} iterations (best residual {best_residual:e})")]
    NotConverged {
        hour: usize,
        iterations: usize,
        best_residual: f64,
        best: Box<HourTables>,
    },
    #[error("round {k} exceeds the waiting budget of {k_rounds} rounds")]
    RoundsExhausted { k: u32, k_rounds: u32 },
}

impl DemandProfile {
    pub fn new(ods: Vec<Trip>, hourly: Vec<Vec<f64>>) -> Result<Self, PredictionError> {
        for (hour, rates) in hourly.iter().enumerate() {
            if rates.len() != ods.len() {
                return Err(PredictionError::ShapeMismatch { hour, got: rates.len(), expected: ods.len() });
            }
            for (od, &value) in rates.iter().enumerate() {
                if !(value.is_finite() && value >= 0.0) {
                    return Err(PredictionError::BadRate { hour, od, value });
                }
            }
        }
        Ok(DemandProfile { ods, hourly })
    }

    pub fn hours(&self) -> usize {
        self.hourly.len()
    }

    /// Rates of the hour containing `t_s`, holding the last hour beyond the
    /// profile.
    pub fn rates_at(&self, t_s: f64) -> &[f64] {
        let h = ((t_s / 3600.0).floor().max(0.0) as usize).min(self.hourly.len().saturating_sub(1));
        &self.hourly[h]
    }

    /// Profile with every rate multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        DemandProfile {
            ods: self.ods.clone(),
            hourly: self
                .hourly
                .iter()
                .map(|r| r.iter().map(|v| v * factor).collect())
                .collect(),
        }
    }
}

/// Solves every hour of `demand` on `space`, whose seekers must be
/// `demand.ods` in order. Hours are independent and solved in parallel.
pub fn solve_fixed_point(
    space: &StateSpace,
    demand: &DemandProfile,
    opts: &SolverOptions,
) -> Result<(PredictionTables, Vec<SolveReport>), PredictionError> {
    use rayon::prelude::*;
    assert_eq!(
        space.seekers.iter().map(|s| s.trip).collect::<Vec<_>>(),
        demand.ods,
        "state space and demand profile list different ODs"
    );
    let solved: Vec<_> = demand
        .hourly
        .par_iter()
        .enumerate()
        .map(|(hour, rates)| {
            let (tables, report, ok) = tables::solve_hour(space, rates, opts);
            if ok {
                Ok((tables, report))
            } else {
                Err(PredictionError::NotConverged {
                    hour,
                    iterations: report.iterations,
                    best_residual: report.residuals.iter().copied().fold(f64::INFINITY, f64::min),
                    best: Box::new(tables),
                })
            }
        })
        .collect();
    let mut hours = Vec::with_capacity(solved.len());
    let mut reports = Vec::with_capacity(solved.len());
    for r in solved {
        let (t, rep) = r?;
        hours.push(t);
        reports.push(rep);
    }
    Ok((PredictionTables::new(space, hours), reports))
}

/// Equation residual of `state` under `lambda_w`.
pub fn residual(space: &StateSpace, lambda_w: &[f64], state: &State) -> f64 {
    solver::System::new(space, lambda_w).residual(state).0
}
