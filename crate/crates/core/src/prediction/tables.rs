use std::fmt::Write as _;
use std::path::Path;

use super::solver::{SolveReport, SolverOptions, State, System};
use super::state_space::{Match, StateSpace, TakerState};
use super::PredictionError;
use crate::domain::Trip;

/// Solved equilibrium of one hour plus the derived expected savings.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct HourTables {
    pub lambda_w: Vec<f64>,
    pub state: State,
    /// Expected saving of a taker, per taker.
    pub e_taker: Vec<f64>,
    /// Expected saving of a seeker, per OD.
    pub e_seeker: Vec<f64>,
    /// Expected saving after assignment to a vacant vehicle, per OD.
    pub e_vacant: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
    pub clipped: usize,
}

/// Per-hour prediction tables together with the state layout they index.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionTables {
    pub seekers: Vec<Trip>,
    pub takers: Vec<TakerState>,
    pub matches: Vec<Match>,
    pub hours: Vec<HourTables>,
    seeker_matches: Vec<Vec<usize>>,
    taker_matches: Vec<Vec<usize>>,
    takers_of_od: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VacantSaving {
    pub meters: f64,
    /// No passenger of the OD ever becomes a taker, so the value is 0 by
    /// convention.
    pub degenerate: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum TableError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}, field `{field}`: {msg}")]
    Parse { line: usize, field: String, msg: String },
    #[error("missing section `{section}`{}", hour.map(|h| format!(" in hour {h}")).unwrap_or_default())]
    MissingSection { section: &'static str, hour: Option<usize> },
    #[error("section `{section}`{} has {got} rows, expected {expected}", hour.map(|h| format!(" in hour {h}")).unwrap_or_default())]
    RowCount { section: &'static str, hour: Option<usize>, got: usize, expected: usize },
}

impl PredictionTables {
    pub(super) fn new(space: &StateSpace, hours: Vec<HourTables>) -> Self {
        Self::from_layout(
            space.seekers.iter().map(|s| s.trip).collect(),
            space.takers.clone(),
            space.matches.clone(),
            hours,
        )
    }

    fn from_layout(seekers: Vec<Trip>, takers: Vec<TakerState>, matches: Vec<Match>, hours: Vec<HourTables>) -> Self {
        let mut seeker_matches = vec![Vec::new(); seekers.len()];
        let mut taker_matches = vec![Vec::new(); takers.len()];
        let mut takers_of_od = vec![Vec::new(); seekers.len()];
        for (id, m) in matches.iter().enumerate() {
            seeker_matches[m.seeker].push(id);
            taker_matches[m.taker].push(id);
        }
        for (t, taker) in takers.iter().enumerate() {
            takers_of_od[taker.od].push(t);
        }
        for list in &mut takers_of_od {
            list.sort_by_key(|&t| takers[t].position);
        }
        PredictionTables { seekers, takers, matches, hours, seeker_matches, taker_matches, takers_of_od }
    }

    /// Tables of the hour containing `t_s`; the last hour covers everything
    /// after it.
    pub fn hour_at(&self, t_s: f64) -> Option<&HourTables> {
        if self.hours.is_empty() {
            return None;
        }
        let h = ((t_s / 3600.0).floor().max(0.0) as usize).min(self.hours.len() - 1);
        Some(&self.hours[h])
    }

    pub fn od_of(&self, trip: &Trip) -> Option<usize> {
        self.seekers.iter().position(|s| s == trip)
    }

    pub fn seeker_matches(&self, seeker: usize) -> &[usize] {
        &self.seeker_matches[seeker]
    }

    pub fn taker_matches(&self, taker: usize) -> &[usize] {
        &self.taker_matches[taker]
    }

    pub fn takers_of_od(&self, od: usize) -> &[usize] {
        &self.takers_of_od[od]
    }
}

pub(super) fn solve_hour(space: &StateSpace, lambda_w: &[f64], opts: &SolverOptions) -> (HourTables, SolveReport, bool) {
    let system = System::new(space, lambda_w);
    let (state, report, ok) = system.solve(opts);
    let residual = system.residual(&state).0;
    let mut hour = HourTables {
        lambda_w: lambda_w.to_vec(),
        state,
        iterations: report.iterations,
        residual,
        clipped: report.clipped,
        ..Default::default()
    };
    let layout = PredictionTables::new(space, Vec::new());
    hour.e_taker = (0..space.takers.len())
        .map(|t| taker_saving(&layout, &hour.state, t))
        .collect();
    hour.e_seeker = (0..space.seekers.len())
        .map(|w| seeker_saving(&layout, &hour.state, w))
        .collect();
    hour.e_vacant = (0..space.seekers.len())
        .map(|w| vacant_saving(&layout, &hour.lambda_w, &hour.state, &hour.e_taker, w).meters)
        .collect();
    (hour, report, ok)
}

fn taker_saving(layout: &PredictionTables, state: &State, t: usize) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for &id in layout.taker_matches(t) {
        num += state.eta_s[id] * layout.matches[id].saving_m;
        den += state.eta_s[id];
    }
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

fn seeker_saving(layout: &PredictionTables, state: &State, w: usize) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for &id in layout.seeker_matches(w) {
        let m = &layout.matches[id];
        let weight = state.rho[m.taker] * state.eta_s[id];
        num += m.saving_m * weight;
        den += weight;
    }
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

fn vacant_saving(layout: &PredictionTables, lambda_w: &[f64], state: &State, e_taker: &[f64], w: usize) -> VacantSaving {
    let den = (1.0 - state.p_s[w]) * lambda_w[w];
    if den <= 0.0 {
        return VacantSaving { meters: 0.0, degenerate: true };
    }
    let num: f64 = layout
        .takers_of_od(w)
        .iter()
        .map(|&t| e_taker[t] * state.p_t[t] * state.lambda_t[t])
        .sum();
    VacantSaving { meters: num / den, degenerate: false }
}

/// Expected saving of taker `t` in `hour`: the opportunity-weighted mean of
/// the savings with the seekers it can pick up.
pub fn expected_saving_taker(tables: &PredictionTables, hour: usize, t: usize) -> f64 {
    taker_saving(tables, &tables.hours[hour].state, t)
}

/// Expected saving of a seeker of OD `w`, weighted by how often each
/// matchable taker is present and reaches the seeker.
pub fn expected_saving_seeker(tables: &PredictionTables, hour: usize, w: usize) -> f64 {
    seeker_saving(tables, &tables.hours[hour].state, w)
}

/// Expected saving of a passenger of OD `w` who boards a vacant vehicle and
/// rides as a taker.
pub fn expected_saving_vacant(tables: &PredictionTables, hour: usize, w: usize) -> VacantSaving {
    let h = &tables.hours[hour];
    let e_taker: Vec<f64> = (0..tables.takers.len()).map(|t| taker_saving(tables, &h.state, t)).collect();
    vacant_saving(tables, &h.lambda_w, &h.state, &e_taker, w)
}

/// Probability of being assigned in at least one of the rounds left after
/// round `k` of `k_rounds`, each succeeding with probability `r_w`.
pub fn wait_factor(r_w: f64, k_rounds: u32, k: u32) -> Result<f64, PredictionError> {
    if k > k_rounds {
        return Err(PredictionError::RoundsExhausted { k, k_rounds });
    }
    Ok(1.0 - (1.0 - r_w).powi((k_rounds - k) as i32))
}

/// Expected saving of keeping a passenger of OD `w` waiting after round `k`.
pub fn expected_saving_wait(
    tables: &PredictionTables,
    hour: usize,
    w: usize,
    r_w: f64,
    k_rounds: u32,
    k: u32,
) -> Result<f64, PredictionError> {
    let h = &tables.hours[hour];
    let p_s = h.state.p_s[w];
    Ok(wait_factor(r_w, k_rounds, k)? * (p_s * h.e_seeker[w] + (1.0 - p_s) * h.e_vacant[w]))
}

const MAGIC: &str = "# ridepool prediction tables";

/// Writes `tables` as sectioned CSV.
///
/// ```text
/// # ridepool prediction tables
/// # section,seekers
/// seeker,origin,destination
/// # section,takers
/// taker,od,link,position,head,tau_s
/// # section,E
/// seeker,taker,e_m
/// # hour,<h>,<iterations>,<residual>,<clipped>
/// # section,seekers
/// seeker,lambda_w,p_s,e_seeker,e_vacant
/// # section,takers
/// taker,lambda_t,rho,eta,p_t,e_taker
/// # section,eta
/// seeker,taker,eta_s
/// ```
///
/// The hour block repeats per hour. Floats use the shortest representation
/// that parses back to the same value.
pub fn save_tables(tables: &PredictionTables, path: &Path) -> Result<(), TableError> {
    std::fs::write(path, render(tables)).map_err(|source| TableError::Io { path: path.display().to_string(), source })
}

fn render(t: &PredictionTables) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{MAGIC}");
    let _ = writeln!(s, "# section,seekers\nseeker,origin,destination");
    for (i, trip) in t.seekers.iter().enumerate() {
        let _ = writeln!(s, "{i},{},{}", trip.origin, trip.destination);
    }
    let _ = writeln!(s, "# section,takers\ntaker,od,link,position,head,tau_s");
    for (i, k) in t.takers.iter().enumerate() {
        let _ = writeln!(s, "{i},{},{},{},{},{}", k.od, k.link, k.position, k.head, k.sojourn_s);
    }
    let _ = writeln!(s, "# section,E\nseeker,taker,e_m");
    for m in &t.matches {
        let _ = writeln!(s, "{},{},{}", m.seeker, m.taker, m.saving_m);
    }
    for (h, hour) in t.hours.iter().enumerate() {
        let _ = writeln!(s, "# hour,{h},{},{},{}", hour.iterations, hour.residual, hour.clipped);
        let _ = writeln!(s, "# section,seekers\nseeker,lambda_w,p_s,e_seeker,e_vacant");
        for w in 0..t.seekers.len() {
            let _ = writeln!(
                s,
                "{w},{},{},{},{}",
                hour.lambda_w[w], hour.state.p_s[w], hour.e_seeker[w], hour.e_vacant[w]
            );
        }
        let _ = writeln!(s, "# section,takers\ntaker,lambda_t,rho,eta,p_t,e_taker");
        for k in 0..t.takers.len() {
            let x = &hour.state;
            let _ = writeln!(
                s,
                "{k},{},{},{},{},{}",
                x.lambda_t[k], x.rho[k], x.eta[k], x.p_t[k], hour.e_taker[k]
            );
        }
        let _ = writeln!(s, "# section,eta\nseeker,taker,eta_s");
        for (m, e) in t.matches.iter().zip(&hour.state.eta_s) {
            let _ = writeln!(s, "{},{},{}", m.seeker, m.taker, e);
        }
    }
    s
}

pub fn load_tables(path: &Path) -> Result<PredictionTables, TableError> {
    let text =
        std::fs::read_to_string(path).map_err(|source| TableError::Io { path: path.display().to_string(), source })?;
    parse(&text)
}

struct Reader<'a> {
    lines: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
}

impl<'a> Reader<'a> {
    /// Consumes `# section,<name>` and its column header.
    fn section(&mut self, name: &'static str, columns: &str, hour: Option<usize>) -> Result<(), TableError> {
        let missing = TableError::MissingSection { section: name, hour };
        match self.lines.next() {
            Some((_, l)) if l == format!("# section,{name}") => {}
            _ => return Err(missing),
        }
        match self.lines.next() {
            Some((_, l)) if l == columns => Ok(()),
            Some((i, l)) => Err(TableError::Parse {
                line: i + 1,
                field: "header".into(),
                msg: format!("expected `{columns}`, found `{l}`"),
            }),
            None => Err(missing),
        }
    }

    /// Data rows up to the next `#` line, split into fields.
    fn rows(&mut self) -> Vec<(usize, Vec<&'a str>)> {
        let mut out = Vec::new();
        while let Some(&(i, l)) = self.lines.peek() {
            if l.starts_with('#') {
                break;
            }
            self.lines.next();
            if !l.is_empty() {
                out.push((i + 1, l.split(',').collect()));
            }
        }
        out
    }
}

fn field<T: std::str::FromStr>(row: &(usize, Vec<&str>), idx: usize, name: &str) -> Result<T, TableError>
where
    T::Err: std::fmt::Display,
{
    let err = |msg: String| TableError::Parse { line: row.0, field: name.to_string(), msg };
    let raw = row.1.get(idx).ok_or_else(|| err("missing".into()))?;
    raw.parse().map_err(|e: T::Err| err(format!("`{raw}`: {e}")))
}

fn check_len(rows: &[(usize, Vec<&str>)], width: usize) -> Result<(), TableError> {
    for r in rows {
        if r.1.len() != width {
            return Err(TableError::Parse {
                line: r.0,
                field: "row".into(),
                msg: format!("expected {width} fields, found {}", r.1.len()),
            });
        }
    }
    Ok(())
}

fn expect_rows(
    rows: &[(usize, Vec<&str>)],
    section: &'static str,
    hour: Option<usize>,
    expected: usize,
    width: usize,
) -> Result<(), TableError> {
    if rows.len() != expected {
        return Err(TableError::RowCount { section, hour, got: rows.len(), expected });
    }
    check_len(rows, width)
}

fn parse(text: &str) -> Result<PredictionTables, TableError> {
    let mut r = Reader { lines: text.lines().enumerate().peekable() };
    match r.lines.next() {
        Some((_, l)) if l == MAGIC => {}
        _ => {
            return Err(TableError::Parse { line: 1, field: "header".into(), msg: format!("expected `{MAGIC}`") })
        }
    }

    r.section("seekers", "seeker,origin,destination", None)?;
    let rows = r.rows();
    check_len(&rows, 3)?;
    let mut seekers = Vec::with_capacity(rows.len());
    for row in &rows {
        seekers.push(Trip::new(field(row, 1, "origin")?, field(row, 2, "destination")?));
    }

    r.section("takers", "taker,od,link,position,head,tau_s", None)?;
    let rows = r.rows();
    check_len(&rows, 6)?;
    let mut takers = Vec::with_capacity(rows.len());
    for row in &rows {
        let od: usize = field(row, 1, "od")?;
        if od >= seekers.len() {
            return Err(TableError::Parse { line: row.0, field: "od".into(), msg: format!("no seeker {od}") });
        }
        takers.push(TakerState {
            od,
            link: field(row, 2, "link")?,
            position: field(row, 3, "position")?,
            head: field(row, 4, "head")?,
            sojourn_s: field(row, 5, "tau_s")?,
        });
    }

    r.section("E", "seeker,taker,e_m", None)?;
    let rows = r.rows();
    check_len(&rows, 3)?;
    let mut matches = Vec::with_capacity(rows.len());
    for row in &rows {
        let m = Match { seeker: field(row, 0, "seeker")?, taker: field(row, 1, "taker")?, saving_m: field(row, 2, "e_m")? };
        if m.seeker >= seekers.len() || m.taker >= takers.len() {
            return Err(TableError::Parse { line: row.0, field: "seeker".into(), msg: "unknown state".into() });
        }
        matches.push(m);
    }

    let mut hours = Vec::new();
    while let Some((i, l)) = r.lines.next() {
        let h = hours.len();
        let parts: Vec<&str> = l.split(',').collect();
        if parts.len() != 5 || parts[0] != "# hour" {
            return Err(TableError::Parse { line: i + 1, field: "hour".into(), msg: format!("unexpected `{l}`") });
        }
        let head = (i + 1, parts);
        let idx: usize = field(&head, 1, "hour")?;
        if idx != h {
            return Err(TableError::Parse { line: i + 1, field: "hour".into(), msg: format!("expected hour {h}") });
        }
        let mut hour = HourTables {
            iterations: field(&head, 2, "iterations")?,
            residual: field(&head, 3, "residual")?,
            clipped: field(&head, 4, "clipped")?,
            ..Default::default()
        };

        r.section("seekers", "seeker,lambda_w,p_s,e_seeker,e_vacant", Some(h))?;
        let rows = r.rows();
        expect_rows(&rows, "seekers", Some(h), seekers.len(), 5)?;
        for row in &rows {
            hour.lambda_w.push(field(row, 1, "lambda_w")?);
            hour.state.p_s.push(field(row, 2, "p_s")?);
            hour.e_seeker.push(field(row, 3, "e_seeker")?);
            hour.e_vacant.push(field(row, 4, "e_vacant")?);
        }

        r.section("takers", "taker,lambda_t,rho,eta,p_t,e_taker", Some(h))?;
        let rows = r.rows();
        expect_rows(&rows, "takers", Some(h), takers.len(), 6)?;
        for row in &rows {
            hour.state.lambda_t.push(field(row, 1, "lambda_t")?);
            hour.state.rho.push(field(row, 2, "rho")?);
            hour.state.eta.push(field(row, 3, "eta")?);
            hour.state.p_t.push(field(row, 4, "p_t")?);
            hour.e_taker.push(field(row, 5, "e_taker")?);
        }

        r.section("eta", "seeker,taker,eta_s", Some(h))?;
        let rows = r.rows();
        expect_rows(&rows, "eta", Some(h), matches.len(), 3)?;
        for row in &rows {
            hour.state.eta_s.push(field(row, 2, "eta_s")?);
        }
        hours.push(hour);
    }
    Ok(PredictionTables::from_layout(seekers, takers, matches, hours))
}
