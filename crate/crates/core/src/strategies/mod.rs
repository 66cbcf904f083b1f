//! Per-round matching utilities, the assignment solver and the online
//! dispatch strategies.

mod assignment;
mod dispatch;
mod rtv;

pub use assignment::{solve_assignment, Assignment, AssignmentProblem, Choice, Score, VehicleEdge};
pub use dispatch::{dispatch_round, outlook, BatchMatchResult, Decision, DispatchContext, DispatchError, Snapshot, WaitingPassenger};
pub use rtv::{rtv_assign, RtvRequest, RtvTrip, RtvVehicle, RtvSolution};

use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Strategy {
    /// No pooling: nearest vacant vehicle.
    Np,
    /// Myopic batch matching on immediate net saving.
    Mb,
    /// Request-trip-vehicle assignment with pair trips.
    Rtv,
    /// Forward-looking matching with waiting as an option.
    Fl,
    /// Forward-looking values without the waiting option.
    FlNoDelay,
    /// Forward-looking values combined additively, without the waiting-time
    /// weight.
    FlNaive,
}

impl Strategy {
    pub const ALL: [Strategy; 6] =
        [Strategy::Np, Strategy::Mb, Strategy::Rtv, Strategy::Fl, Strategy::FlNoDelay, Strategy::FlNaive];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Np => "np",
            Strategy::Mb => "mb",
            Strategy::Rtv => "rtv",
            Strategy::Fl => "fl",
            Strategy::FlNoDelay => "fl-no-delay",
            Strategy::FlNaive => "fl-naive",
        }
    }

    pub fn needs_tables(self) -> bool {
        matches!(self, Strategy::Fl | Strategy::FlNoDelay | Strategy::FlNaive)
    }

    pub fn pools(self) -> bool {
        self != Strategy::Np
    }

    pub fn has_wait_option(self) -> bool {
        matches!(self, Strategy::Fl | Strategy::FlNaive)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown strategy `{0}` (expected np, mb, rtv, fl, fl-no-delay or fl-naive)")]
pub struct UnknownStrategy(pub String);

impl FromStr for Strategy {
    type Err = UnknownStrategy;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Strategy::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| UnknownStrategy(s.to_string()))
    }
}

/// Strategy parameters that do not come from the prediction tables.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UtilityParams {
    /// Per-round growth of forward-looking vehicle utilities.
    pub alpha: f64,
    /// Presumed per-round assignment probability.
    pub r_w: f64,
    /// Average pickup distance charged against waiting (m).
    pub l_bar: f64,
    /// Rounds a typical passenger waits before cancelling.
    pub k_rounds_pop: u32,
}

impl Default for UtilityParams {
    fn default() -> Self {
        UtilityParams { alpha: 1.01, r_w: 0.75, l_bar: 0.0, k_rounds_pop: 9 }
    }
}

/// What a passenger would be matched with.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptionValue {
    Vacant { pickup_m: f64 },
    Partial { pickup_m: f64, saving_m: f64 },
    Wait,
}

/// Predicted quantities of a passenger for the current round.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PassengerOutlook {
    /// Rounds taken part in, counting the current one.
    pub k: u32,
    /// Expected saving after boarding a vacant vehicle (m).
    pub e_vacant: f64,
    /// Expected saving of staying another round (m).
    pub e_wait: f64,
}

/// `value * value / (value + pickup) * alpha^k`, or 0 when `value <= 0`.
pub fn balanced_value(value: f64, pickup_m: f64, alpha: f64, k: u32) -> f64 {
    if value <= 0.0 {
        return 0.0;
    }
    value * (value / (value + pickup_m)) * alpha.powi(k as i32)
}

/// Immediate net saving. WAIT is not an option.
pub fn utility_myopic(option: OptionValue) -> Option<f64> {
    match option {
        OptionValue::Vacant { pickup_m } => Some(-pickup_m),
        OptionValue::Partial { pickup_m, saving_m } => Some(saving_m - pickup_m),
        OptionValue::Wait => None,
    }
}

/// Forward-looking utility: vehicle values grow with the rounds waited and
/// shrink with pickup distance; waiting is worth the expected saving of
/// staying minus the average pickup.
pub fn utility_fl(option: OptionValue, p: &PassengerOutlook, params: &UtilityParams) -> Option<f64> {
    Some(match option {
        OptionValue::Vacant { pickup_m } => balanced_value(p.e_vacant, pickup_m, params.alpha, p.k),
        OptionValue::Partial { pickup_m, saving_m } => balanced_value(saving_m, pickup_m, params.alpha, p.k),
        OptionValue::Wait => p.e_wait - params.l_bar,
    })
}

pub fn utility_fl_no_delay(option: OptionValue, p: &PassengerOutlook) -> Option<f64> {
    match option {
        OptionValue::Vacant { pickup_m } => Some(p.e_vacant - pickup_m),
        OptionValue::Partial { pickup_m, saving_m } => Some(saving_m - pickup_m),
        OptionValue::Wait => None,
    }
}

/// Additive forward-looking utility. It ignores the rounds already waited.
pub fn utility_naive_combined(option: OptionValue, p: &PassengerOutlook, params: &UtilityParams) -> Option<f64> {
    match option {
        OptionValue::Wait => Some(p.e_wait - params.l_bar),
        other => utility_fl_no_delay(other, p),
    }
}

/// Utility of `option` under `strategy`, `None` when the option is not
/// offered.
pub fn utility(strategy: Strategy, option: OptionValue, p: &PassengerOutlook, params: &UtilityParams) -> Option<f64> {
    match strategy {
        Strategy::Np => match option {
            OptionValue::Vacant { pickup_m } => Some(-pickup_m),
            _ => None,
        },
        Strategy::Mb | Strategy::Rtv => utility_myopic(option),
        Strategy::Fl => utility_fl(option, p, params),
        Strategy::FlNoDelay => utility_fl_no_delay(option, p),
        Strategy::FlNaive => utility_naive_combined(option, p, params),
    }
}
