//! Seeded Monte-Carlo engines for the surplus process.
//!
//! All engines walk the process arrival to arrival. Between arrivals the
//! surplus falls linearly at rate `p`, so the first time to outage is found
//! exactly on the ramp rather than at an arrival epoch. A finite event source
//! means no further arrivals: after its last event the surplus ramps down
//! without end.
//!
//! Trials are independent. Trial `i` draws from [`trial_rng`]`(seed, i)`,
//! and results are aggregated from integer counts, so estimates do not depend
//! on the number of rayon workers.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{self, SystemParams, DEFAULT_ROOT_TOL};
use crate::distributions::{trial_rng, Event, EventSource, PoissonEvents};
use crate::error::{Error, Result};

/// Horizon used for eventual outage estimates unless overridden.
pub const DEFAULT_HORIZON: f64 = 1000.0;
pub const DEFAULT_TRIALS: u64 = 50_000;
pub const DEFAULT_LADDER_STEPS: u64 = 100_000;

/// A ladder walk that has fallen this many multiples of `1/r*` below its
/// running maximum is stopped: by the Lundberg bound the chance of climbing
/// back above the maximum is below `e^{-27.6} ≈ 1e-12`.
const LADDER_DROP_LOG_TOL: f64 = 27.631_021_115_928_547;

const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub outage: bool,
    /// First time to outage; present iff `outage`.
    pub tau: Option<f64>,
    pub arrivals_observed: u64,
}

/// Runs one surplus path until the first outage or the horizon.
///
/// The walk `S_n = Σ_{i<n} (p·A_i − X_i)` gives the trough just before arrival
/// `n` as `u₀ − S_n`. An outage happens on the ramp after arrival `n` when the
/// next trough is `≤ 0`; it is counted when the crossing time is within the
/// horizon.
pub fn simulate_first_passage<E: EventSource>(
    params: &SystemParams,
    horizon: f64,
    events: E,
) -> TrialOutcome {
    let p = params.p;
    let u0 = params.u0;
    let mut events = events.peekable();
    let mut t = 0.0;
    let mut s = 0.0;
    let mut arrivals = 0u64;
    let no_outage = |arrivals| TrialOutcome {
        outage: false,
        tau: None,
        arrivals_observed: arrivals,
    };
    while let Some(ev) = events.next() {
        arrivals += 1;
        let level = (u0 - s) + ev.energy;
        let s_next = s + (p * ev.inter_arrival - ev.energy);
        if s_next >= u0 || events.peek().is_none() {
            let tau = t + level / p;
            return if tau <= horizon {
                TrialOutcome {
                    outage: true,
                    tau: Some(tau),
                    arrivals_observed: arrivals,
                }
            } else {
                no_outage(arrivals)
            };
        }
        t += ev.inter_arrival;
        if t > horizon {
            break;
        }
        s = s_next;
    }
    no_outage(arrivals)
}

/// Same walk as [`simulate_first_passage`], deciding the outage for every
/// initial energy in `u0s` (ascending) from one path. Writes `true` into
/// `outages[j]` when `u0s[j]` runs out of energy within the horizon.
fn first_passage_many<E: EventSource>(
    p: f64,
    u0s: &[f64],
    horizon: f64,
    events: E,
    outages: &mut [bool],
) {
    let mut events = events.peekable();
    let mut next_open = 0;
    let mut t = 0.0;
    let mut s = 0.0;
    while let Some(ev) = events.next() {
        let s_next = s + (p * ev.inter_arrival - ev.energy);
        let last = events.peek().is_none();
        while next_open < u0s.len() && (s_next >= u0s[next_open] || last) {
            let level = (u0s[next_open] - s) + ev.energy;
            let tau = t + level / p;
            if tau > horizon {
                // later crossings for larger u0 come later still
                return;
            }
            outages[next_open] = true;
            next_open += 1;
        }
        if next_open == u0s.len() {
            return;
        }
        t += ev.inter_arrival;
        if t > horizon {
            return;
        }
        s = s_next;
    }
}

/// Normal-approximation 95% interval unless built with [`EstimateWithCI::wilson`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateWithCI {
    pub estimate: f64,
    pub stderr: f64,
    pub ci95_lo: f64,
    pub ci95_hi: f64,
    pub trials: u64,
    pub horizon: f64,
    pub seed: u64,
}

impl EstimateWithCI {
    pub fn from_counts(hits: u64, trials: u64, horizon: f64, seed: u64) -> Self {
        let n = trials as f64;
        let estimate = hits as f64 / n;
        let stderr = (estimate * (1.0 - estimate) / n).sqrt();
        Self {
            estimate,
            stderr,
            ci95_lo: (estimate - Z95 * stderr).max(0.0),
            ci95_hi: (estimate + Z95 * stderr).min(1.0),
            trials,
            horizon,
            seed,
        }
    }

    /// Same estimate with the Wilson score interval, which behaves better
    /// for estimates near 0 or 1.
    pub fn wilson(self) -> Self {
        let n = self.trials as f64;
        let z2 = Z95 * Z95;
        let p = self.estimate;
        let denom = 1.0 + z2 / n;
        let centre = (p + z2 / (2.0 * n)) / denom;
        let half = Z95 / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
        Self {
            ci95_lo: (centre - half).max(0.0).min(p),
            ci95_hi: (centre + half).min(1.0).max(p),
            ..self
        }
    }
}

fn check_trials(trials: u64, horizon: f64) -> Result<()> {
    if trials == 0 {
        return Err(Error::Value("trials must be at least 1".into()));
    }
    if !(horizon > 0.0) {
        return Err(Error::Value(format!("horizon must be positive, got {horizon}")));
    }
    Ok(())
}

fn poisson_events(params: &SystemParams, seed: u64, trial: u64) -> impl EventSource {
    PoissonEvents::new(params.lambda, params.packet, trial_rng(seed, trial))
}

/// Fraction of `trials` seeded paths that hit an outage before `horizon`.
pub fn estimate_eventual_outage(
    params: &SystemParams,
    horizon: f64,
    trials: u64,
    seed: u64,
) -> Result<EstimateWithCI> {
    check_trials(trials, horizon)?;
    let hits: u64 = (0..trials)
        .into_par_iter()
        .map(|i| simulate_first_passage(params, horizon, poisson_events(params, seed, i)).outage as u64)
        .sum();
    Ok(EstimateWithCI::from_counts(hits, trials, horizon, seed))
}

/// [`estimate_eventual_outage`] for several initial energies at once.
///
/// Each trial's path is shared by all entries of `u0s` (the path does not
/// depend on `u₀`), and entry `j` equals what `estimate_eventual_outage`
/// returns for `params.with_u0(u0s[j])` with the same seed.
pub fn estimate_eventual_outage_grid(
    params: &SystemParams,
    u0s: &[f64],
    horizon: f64,
    trials: u64,
    seed: u64,
) -> Result<Vec<EstimateWithCI>> {
    check_trials(trials, horizon)?;
    if let Some(bad) = u0s.iter().find(|u| !(**u >= 0.0 && u.is_finite())) {
        return Err(Error::Value(format!("u0 must be nonnegative, got {bad}")));
    }
    let mut order: Vec<usize> = (0..u0s.len()).collect();
    order.sort_by(|&a, &b| u0s[a].total_cmp(&u0s[b]));
    let sorted: Vec<f64> = order.iter().map(|&i| u0s[i]).collect();
    let n = sorted.len();

    let counts = (0..trials)
        .into_par_iter()
        .fold(
            || (vec![0u64; n], vec![false; n]),
            |(mut counts, mut flags), i| {
                flags.fill(false);
                first_passage_many(params.p, &sorted, horizon, poisson_events(params, seed, i), &mut flags);
                for (c, f) in counts.iter_mut().zip(&flags) {
                    *c += *f as u64;
                }
                (counts, flags)
            },
        )
        .map(|(counts, _)| counts)
        .reduce(
            || vec![0u64; n],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );

    let mut out = vec![EstimateWithCI::from_counts(0, trials, horizon, seed); n];
    for (pos, &idx) in order.iter().enumerate() {
        out[idx] = EstimateWithCI::from_counts(counts[pos], trials, horizon, seed);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LadderSample {
    /// The walk finished below its running maximum, so no ladder epoch was
    /// in progress when observation stopped.
    pub terminated: bool,
    /// Running maximum `M = max(0, S_1, …, S_n)` over the observed walk.
    pub max_s: f64,
    pub first_ladder_epoch: Option<u64>,
    pub first_ladder_height: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LadderLimits {
    pub max_steps: u64,
    /// Stop once `S_n` is this far below the running maximum.
    pub drop_cutoff: Option<f64>,
}

/// Walks `S_n = Σ (p·A_i − X_i)` for up to `max_steps` steps, recording the
/// first strict ascending ladder point and the running maximum.
pub fn simulate_ladder<E: EventSource>(
    params: &SystemParams,
    max_steps: u64,
    events: E,
) -> Result<LadderSample> {
    simulate_ladder_with(
        params,
        LadderLimits {
            max_steps,
            drop_cutoff: None,
        },
        events,
    )
}

pub fn simulate_ladder_with<E: EventSource>(
    params: &SystemParams,
    limits: LadderLimits,
    events: E,
) -> Result<LadderSample> {
    if limits.max_steps == 0 {
        return Err(Error::Value("max_steps must be at least 1".into()));
    }
    let p = params.p;
    let cutoff = limits.drop_cutoff.unwrap_or(f64::INFINITY);
    let mut s = 0.0;
    let mut max_s = 0.0f64;
    let mut first: Option<(u64, f64)> = None;
    for (n, ev) in (1..=limits.max_steps).zip(events) {
        s += p * ev.inter_arrival - ev.energy;
        if s > max_s {
            max_s = s;
            if first.is_none() {
                first = Some((n, s));
            }
        } else if max_s - s > cutoff {
            break;
        }
    }
    Ok(LadderSample {
        terminated: s < max_s,
        max_s,
        first_ladder_epoch: first.map(|f| f.0),
        first_ladder_height: first.map(|f| f.1),
    })
}

/// `walks` seeded ladder walks under Poisson arrivals.
///
/// When `ρ > 1` each walk stops early once it sits `27.6/r*` below its running
/// maximum (probability below 1e-12 of a later ladder point).
pub fn sample_ladder_walks(
    params: &SystemParams,
    max_steps: u64,
    walks: u64,
    seed: u64,
) -> Result<Vec<LadderSample>> {
    if walks == 0 {
        return Err(Error::Value("walks must be at least 1".into()));
    }
    let drop_cutoff = if params.rho() > 1.0 {
        let r = analytic::solve_adjustment_coefficient(params, DEFAULT_ROOT_TOL)?.r_star;
        Some(LADDER_DROP_LOG_TOL / r)
    } else {
        None
    };
    let limits = LadderLimits {
        max_steps,
        drop_cutoff,
    };
    (0..walks)
        .into_par_iter()
        .map(|i| simulate_ladder_with(params, limits, poisson_events(params, seed, i)))
        .collect()
}

/// Fraction of walks that reached a first ascending ladder point.
pub fn ladder_fraction(samples: &[LadderSample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Value("no ladder samples".into()));
    }
    let hits = samples
        .iter()
        .filter(|s| s.first_ladder_epoch.is_some())
        .count();
    Ok(hits as f64 / samples.len() as f64)
}

/// Empirical `F_M(u₀)`, the self-sustainability probability from walk maxima.
pub fn estimate_phi_from_max(samples: &[LadderSample], u0: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Value("no ladder samples".into()));
    }
    let below = samples.iter().filter(|s| s.max_s <= u0).count();
    Ok(below as f64 / samples.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LindleyStats {
    /// Share of post-burn-in time with an empty battery.
    pub time_empty_fraction: f64,
    /// Share of post-burn-in arrivals that find the battery empty.
    pub arrival_empty_fraction: f64,
    pub steps: u64,
    pub burn_in: u64,
}

/// One step of `W_{n+1} = max(0, W_n + X_n − p·A_n)`.
///
/// Returns the next level and the time spent empty during `A_n`.
#[inline]
pub fn lindley_step(w: f64, event: Event, p: f64) -> (f64, f64) {
    let level = w + event.energy;
    let next = (level - p * event.inter_arrival).max(0.0);
    let empty = (event.inter_arrival - level / p).max(0.0);
    (next, empty)
}

/// Battery level at arrival epochs, started from `W_0 = u₀`, with
/// empty-battery statistics collected after `burn_in` steps.
///
/// Stationary statistics only exist for `ρ < 1`.
pub fn simulate_lindley<E: EventSource>(
    params: &SystemParams,
    steps: u64,
    burn_in: u64,
    events: E,
) -> Result<LindleyStats> {
    let rho = params.rho();
    if rho >= 1.0 {
        return Err(Error::Precondition(format!(
            "stationary battery statistics need rho < 1, got {rho}"
        )));
    }
    if steps <= burn_in {
        return Err(Error::Value(format!(
            "steps ({steps}) must exceed burn_in ({burn_in})"
        )));
    }
    let p = params.p;
    let mut w = params.u0;
    let mut empty_arrivals = 0u64;
    let mut observed = 0u64;
    let mut empty_time = 0.0;
    let mut total_time = 0.0;
    let mut taken = 0u64;
    for (n, ev) in (0..steps).zip(events) {
        taken += 1;
        let (next, empty) = lindley_step(w, ev, p);
        if n >= burn_in {
            observed += 1;
            empty_arrivals += (w == 0.0) as u64;
            empty_time += empty;
            total_time += ev.inter_arrival;
        }
        w = next;
    }
    if observed == 0 {
        return Err(Error::Value("event source ended during burn-in".into()));
    }
    Ok(LindleyStats {
        time_empty_fraction: empty_time / total_time,
        arrival_empty_fraction: empty_arrivals as f64 / observed as f64,
        steps: taken,
        burn_in,
    })
}

/// [`simulate_lindley`] driven by the seeded Poisson source (stream 0).
pub fn estimate_battery_stationary(
    params: &SystemParams,
    steps: u64,
    burn_in: u64,
    seed: u64,
) -> Result<LindleyStats> {
    simulate_lindley(params, steps, burn_in, poisson_events(params, seed, 0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathPoint {
    pub time: f64,
    pub surplus: f64,
}

/// Breakpoints of the sawtooth `U(t)`: a vertical jump at each arrival and
/// a slope `−p` ramp between them. The path ends at the outage point
/// `(τ, 0)` or at the horizon.
pub fn record_path<E: EventSource>(
    params: &SystemParams,
    horizon: f64,
    events: E,
) -> Result<Vec<PathPoint>> {
    if !(horizon > 0.0) {
        return Err(Error::Value(format!("horizon must be positive, got {horizon}")));
    }
    let p = params.p;
    let u0 = params.u0;
    let point = |time, surplus| PathPoint { time, surplus };
    let mut path = vec![point(0.0, u0)];
    let mut events = events.peekable();
    let mut t = 0.0;
    let mut s = 0.0;
    let mut first = true;
    while let Some(ev) = events.next() {
        let trough = u0 - s;
        if !first {
            path.push(point(t, trough));
        }
        first = false;
        let level = trough + ev.energy;
        path.push(point(t, level));
        let s_next = s + (p * ev.inter_arrival - ev.energy);
        if s_next >= u0 || events.peek().is_none() {
            let tau = t + level / p;
            if tau <= horizon {
                path.push(point(tau, 0.0));
            } else {
                path.push(point(horizon, level - p * (horizon - t)));
            }
            return Ok(path);
        }
        let t_next = t + ev.inter_arrival;
        if t_next > horizon {
            path.push(point(horizon, level - p * (horizon - t)));
            return Ok(path);
        }
        t = t_next;
        s = s_next;
    }
    // empty source: the initial energy drains with no arrival at all
    let tau = u0 / p;
    if tau <= horizon {
        path.push(point(tau, 0.0));
    } else {
        path.push(point(horizon, u0 - p * horizon));
    }
    Ok(path)
}
