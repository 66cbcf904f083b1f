//! Damped Gauss-Seidel iteration for the seeker/taker equilibrium.
//!
//! Unknowns per hour: seeker pairing probability `p_s`, taker pairing
//! probability `p_t`, taker occupancy `rho`, per-(seeker, taker) opportunity
//! rate `eta_s`, total taker opportunity rate `eta`, and taker inflow
//! `lambda_t`.

use super::state_space::StateSpace;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Weight of the new iterate in `x <- (1 - damping) x + damping F(x)`.
    pub damping: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { tol: 1e-8, max_iter: 10_000, damping: 0.5 }
    }
}

/// Equilibrium values for one hour. Vectors are indexed by seeker, taker or
/// match id of the state space they were solved on.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct State {
    pub p_s: Vec<f64>,
    pub p_t: Vec<f64>,
    pub rho: Vec<f64>,
    pub eta_s: Vec<f64>,
    pub eta: Vec<f64>,
    pub lambda_t: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    /// Largest equation residual after each sweep.
    pub residuals: Vec<f64>,
    /// Occupancy values cut back to 1, summed over all sweeps.
    pub clip_events: usize,
    /// Occupancy components sitting at the clip bound at the returned state.
    pub clipped: usize,
}

impl SolveReport {
    pub fn final_residual(&self) -> f64 {
        self.residuals.last().copied().unwrap_or(0.0)
    }
}

pub(super) struct System<'a> {
    space: &'a StateSpace,
    lambda_w: &'a [f64],
}

/// Fraction of the inflow present on a link, `lambda (1 - e^{-eta tau}) / eta`,
/// capped at 1. Returns the capped value and whether the cap was hit.
pub fn occupancy(lambda_t: f64, eta: f64, tau: f64) -> (f64, bool) {
    let raw = if eta > 0.0 {
        lambda_t * -(-eta * tau).exp_m1() / eta
    } else {
        lambda_t * tau
    };
    if raw > 1.0 {
        (1.0, true)
    } else {
        (raw, false)
    }
}

pub fn pairing_probability(eta: f64, tau: f64) -> f64 {
    if eta > 0.0 {
        -(-eta * tau).exp_m1()
    } else {
        0.0
    }
}

impl<'a> System<'a> {
    pub(super) fn new(space: &'a StateSpace, lambda_w: &'a [f64]) -> Self {
        assert_eq!(space.seekers.len(), lambda_w.len());
        System { space, lambda_w }
    }

    /// Zero probabilities, unthinned inflows and uncontested opportunity
    /// rates.
    pub(super) fn initial(&self) -> State {
        let s = self.space;
        let mut x = State {
            p_s: vec![0.0; s.seekers.len()],
            p_t: vec![0.0; s.takers.len()],
            rho: vec![0.0; s.takers.len()],
            eta_s: s.matches.iter().map(|m| self.lambda_w[m.seeker]).collect(),
            eta: vec![0.0; s.takers.len()],
            lambda_t: s.takers.iter().map(|t| self.lambda_w[t.od]).collect(),
        };
        let mut eta = vec![0.0; s.takers.len()];
        self.f_eta(&x, &mut eta);
        x.eta = eta;
        x
    }

    fn f_rho(&self, x: &State, out: &mut [f64]) -> usize {
        let mut clipped = 0;
        for (t, taker) in self.space.takers.iter().enumerate() {
            let (v, hit) = occupancy(x.lambda_t[t], x.eta[t], taker.sojourn_s);
            out[t] = v;
            clipped += hit as usize;
        }
        clipped
    }

    fn f_eta_s(&self, x: &State, out: &mut [f64]) {
        let s = self.space;
        for list in &s.seeker_matches {
            // running product of (1 - rho) over the takers ranked above
            let mut prod = 1.0;
            let mut applied = 0;
            for &id in list {
                let m = &s.matches[id];
                while applied < s.outranked_by[id] {
                    prod *= 1.0 - x.rho[s.matches[list[applied]].taker];
                    applied += 1;
                }
                out[id] = self.lambda_w[m.seeker] * prod;
            }
        }
    }

    fn f_eta(&self, x: &State, out: &mut [f64]) {
        for (t, ids) in self.space.taker_matches.iter().enumerate() {
            out[t] = ids.iter().map(|&id| x.eta_s[id]).sum();
        }
    }

    fn f_p_t(&self, x: &State, out: &mut [f64]) {
        for (t, taker) in self.space.takers.iter().enumerate() {
            out[t] = pairing_probability(x.eta[t], taker.sojourn_s);
        }
    }

    fn f_p_s(&self, x: &State, out: &mut [f64]) {
        let s = self.space;
        for (w, list) in s.seeker_matches.iter().enumerate() {
            out[w] = if list.is_empty() {
                0.0
            } else {
                let miss: f64 = list.iter().map(|&id| 1.0 - x.rho[s.matches[id].taker]).product();
                1.0 - miss
            };
        }
    }

    fn f_lambda_t(&self, x: &State, out: &mut [f64]) {
        for (w, takers) in self.space.takers_of_od.iter().enumerate() {
            let mut inflow = self.lambda_w[w] * (1.0 - x.p_s[w]);
            for &t in takers {
                out[t] = inflow;
                inflow *= 1.0 - x.p_t[t];
            }
        }
    }

    /// All right-hand sides evaluated at `x`.
    pub(super) fn evaluate(&self, x: &State) -> (State, usize) {
        let mut f = x.clone();
        let clipped = self.f_rho(x, &mut f.rho);
        self.f_eta_s(x, &mut f.eta_s);
        self.f_eta(x, &mut f.eta);
        self.f_p_t(x, &mut f.p_t);
        self.f_p_s(x, &mut f.p_s);
        self.f_lambda_t(x, &mut f.lambda_t);
        (f, clipped)
    }

    /// Largest absolute gap between a left-hand side and its right-hand side.
    pub(super) fn residual(&self, x: &State) -> (f64, usize) {
        let (f, clipped) = self.evaluate(x);
        let pairs = [
            (&x.rho, &f.rho),
            (&x.eta_s, &f.eta_s),
            (&x.eta, &f.eta),
            (&x.p_t, &f.p_t),
            (&x.p_s, &f.p_s),
            (&x.lambda_t, &f.lambda_t),
        ];
        let r = pairs
            .iter()
            .flat_map(|(a, b)| a.iter().zip(b.iter()).map(|(u, v)| (u - v).abs()))
            .fold(0.0, f64::max);
        (r, clipped)
    }

    /// One sweep in the order rho, eta_s, eta, p_t, p_s, lambda_t, each family
    /// seeing the families already updated in this sweep.
    fn sweep(&self, x: &mut State, beta: f64, buf: &mut Vec<f64>) -> usize {
        fn blend(x: &mut [f64], f: &[f64], beta: f64) {
            for (a, b) in x.iter_mut().zip(f) {
                *a = (1.0 - beta) * *a + beta * b;
            }
        }
        let n_t = self.space.takers.len();
        let n_m = self.space.matches.len();
        let n_s = self.space.seekers.len();

        buf.resize(n_t, 0.0);
        let clipped = self.f_rho(x, buf);
        blend(&mut x.rho, buf, beta);

        buf.resize(n_m, 0.0);
        self.f_eta_s(x, buf);
        blend(&mut x.eta_s, buf, beta);

        buf.resize(n_t, 0.0);
        self.f_eta(x, buf);
        blend(&mut x.eta, buf, beta);

        self.f_p_t(x, buf);
        blend(&mut x.p_t, buf, beta);

        buf.resize(n_s, 0.0);
        self.f_p_s(x, buf);
        blend(&mut x.p_s, buf, beta);

        buf.resize(n_t, 0.0);
        self.f_lambda_t(x, buf);
        blend(&mut x.lambda_t, buf, beta);
        clipped
    }

    /// Iterates from the initial state until the residual drops to `tol`.
    /// On failure returns the state with the smallest residual seen.
    pub(super) fn solve(&self, opts: &SolverOptions) -> (State, SolveReport, bool) {
        let mut x = self.initial();
        let mut buf = Vec::new();
        let mut report = SolveReport { iterations: 0, residuals: Vec::new(), clip_events: 0, clipped: 0 };
        let mut best: Option<(f64, State, usize)> = None;
        for iter in 1..=opts.max_iter {
            report.clip_events += self.sweep(&mut x, opts.damping, &mut buf);
            let (r, clipped) = self.residual(&x);
            report.iterations = iter;
            report.residuals.push(r);
            if r <= opts.tol {
                report.clipped = clipped;
                return (x, report, true);
            }
            if best.as_ref().is_none_or(|b| r < b.0) {
                best = Some((r, x.clone(), clipped));
            }
        }
        match best {
            Some((_, state, clipped)) => {
                report.clipped = clipped;
                (state, report, false)
            }
            None => (x, report, false),
        }
    }
}
