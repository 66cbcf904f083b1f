//! Discrete-event fleet simulation with batch dispatch every interval.
//!
//! A run is a pure function of the network, the order stream, the config and
//! the prediction tables. Randomness comes from three ChaCha8 streams of one
//! seed: demand, vehicle mobility and fleet initialisation, so every strategy
//! run on the same seed sees the same orders and the same start positions.

mod demand;
mod events;
mod metrics;
mod world;

pub use demand::{generate_demand, initial_locations, replay_demand, Demand, TripRecord};
pub use events::{read_events, write_events, Event, EventKind, EventLogError, EVENT_HEADER};
pub use metrics::{
    audit_events, compute_profit, metrics_from_events, AuditViolation, RunMetrics, METRICS_HEADER, NUMERIC_COLUMNS,
};
pub use world::{fleet_size, run, run_with_fleet, RunOutput, SimError};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::domain::{ConfigError, PairingConfig};
use crate::strategies::UtilityParams;

pub const RNG_ALGORITHM: &str = "ChaCha8Rng::seed_from_u64+set_stream";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Demand = 0,
    Mobility = 1,
    Init = 2,
}

pub fn rng_stream(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Fares and driver pay per occupied kilometre.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pricing {
    pub solo_per_km: f64,
    pub shared_per_km: f64,
    pub driver_per_km: f64,
}

impl Default for Pricing {
    fn default() -> Self {
        Pricing { solo_per_km: 5.0, shared_per_km: 3.5, driver_per_km: 2.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub seed: u64,
    pub horizon_s: f64,
    pub batch_interval_s: f64,
    /// Vehicles per 100 orders of the horizon, rounded up.
    pub drivers_per_100_orders: f64,
    pub speed_mps: f64,
    pub max_wait_mean_s: f64,
    pub max_wait_sd_s: f64,
    pub alpha: f64,
    pub r_w: f64,
    pub max_pickup_m: f64,
    pub max_detour_m: f64,
    /// Pickup distance charged against waiting. `None` calibrates it from a
    /// myopic run on the same seed.
    pub l_bar_m: Option<f64>,
    pub pricing: Pricing,
    /// Time allowed after the horizon for waiting riders to be settled and
    /// vehicles to finish their trips.
    pub drain_s: f64,
    /// Digest of the network and demand source the run belongs to; empty
    /// when the caller does not track one.
    pub scenario_digest: String,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            seed: 0,
            horizon_s: 7200.0,
            batch_interval_s: 10.0,
            drivers_per_100_orders: 25.0,
            speed_mps: 30.0 / 3.6,
            max_wait_mean_s: 90.0,
            max_wait_sd_s: 10.0,
            alpha: 1.01,
            r_w: 0.75,
            max_pickup_m: 3000.0,
            max_detour_m: 3000.0,
            l_bar_m: None,
            pricing: Pricing::default(),
            drain_s: 4.0 * 3600.0,
            scenario_digest: String::new(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        use crate::domain::positive;
        positive("horizon_s", self.horizon_s)?;
        positive("batch_interval_s", self.batch_interval_s)?;
        positive("drivers_per_100_orders", self.drivers_per_100_orders)?;
        positive("speed_mps", self.speed_mps)?;
        positive("max_wait_mean_s", self.max_wait_mean_s)?;
        positive("alpha", self.alpha)?;
        positive("r_w", self.r_w)?;
        positive("max_pickup_m", self.max_pickup_m)?;
        positive("max_detour_m", self.max_detour_m)?;
        if !(self.max_wait_sd_s >= 0.0 && self.max_wait_sd_s.is_finite()) {
            return Err(ConfigError::Invalid(format!("max_wait_sd_s must be nonnegative, got {}", self.max_wait_sd_s)));
        }
        if self.r_w > 1.0 {
            return Err(ConfigError::NotProbability { name: "r_w", value: self.r_w });
        }
        if !(self.drain_s >= 0.0) {
            return Err(ConfigError::Invalid(format!("drain_s must be nonnegative, got {}", self.drain_s)));
        }
        Ok(())
    }

    pub fn pairing(&self) -> PairingConfig {
        PairingConfig {
            max_pickup_m: self.max_pickup_m,
            max_detour_m: self.max_detour_m,
            batch_interval_s: self.batch_interval_s,
        }
    }

    /// Rounds a passenger of mean patience takes part in.
    pub fn k_rounds_pop(&self) -> u32 {
        crate::domain::rounds_budget(self.max_wait_mean_s, self.batch_interval_s)
    }

    pub fn utility_params(&self, l_bar_m: f64) -> UtilityParams {
        UtilityParams { alpha: self.alpha, r_w: self.r_w, l_bar: l_bar_m, k_rounds_pop: self.k_rounds_pop() }
    }

    /// Canonical `key=value` lines, one per field, in a fixed order.
    pub fn to_kv(&self) -> Vec<(String, String)> {
        let l_bar = self.l_bar_m.map(|v| v.to_string()).unwrap_or_else(|| "auto".into());
        [
            ("seed", self.seed.to_string()),
            ("horizon_s", self.horizon_s.to_string()),
            ("batch_interval_s", self.batch_interval_s.to_string()),
            ("drivers_per_100_orders", self.drivers_per_100_orders.to_string()),
            ("speed_mps", self.speed_mps.to_string()),
            ("max_wait_mean_s", self.max_wait_mean_s.to_string()),
            ("max_wait_sd_s", self.max_wait_sd_s.to_string()),
            ("alpha", self.alpha.to_string()),
            ("r_w", self.r_w.to_string()),
            ("max_pickup_m", self.max_pickup_m.to_string()),
            ("max_detour_m", self.max_detour_m.to_string()),
            ("l_bar_m", l_bar),
            ("solo_per_km", self.pricing.solo_per_km.to_string()),
            ("shared_per_km", self.pricing.shared_per_km.to_string()),
            ("driver_per_km", self.pricing.driver_per_km.to_string()),
            ("drain_s", self.drain_s.to_string()),
            ("scenario_digest", self.scenario_digest.clone()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }

    /// First 16 hex digits of the SHA-256 of the canonical lines, seed
    /// excluded so that seeds of one scenario share a hash.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in self.to_kv() {
            if k != "seed" {
                h.update(format!("{k}={v}\n").as_bytes());
            }
        }
        h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}
