//! Packet-size laws and the arrival/packet event streams that drive the simulators.
//!
//! Every law is parameterized by its mean `X̄`. The uniform law lives on
//! `[0, 2·X̄]`, the deterministic law is a point mass at `X̄`. Arrivals in the
//! random sources are Poisson, so inter-arrival times are `Exp(λ)`.

use std::fmt;
use std::str::FromStr;

use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DistributionKind {
    Exponential,
    Deterministic,
    Uniform,
}

impl DistributionKind {
    pub fn tag(self) -> &'static str {
        match self {
            DistributionKind::Exponential => "exp",
            DistributionKind::Deterministic => "det",
            DistributionKind::Uniform => "unif",
        }
    }
}

/// Packet-size law, parameterized by its mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct DistributionSpec {
    kind: DistributionKind,
    mean: f64,
}

/// Below this `|r|` the uniform MGF switches to its Taylor series.
const UNIFORM_MGF_TAYLOR_CUTOFF: f64 = 1e-8;

impl DistributionSpec {
    pub fn new(kind: DistributionKind, mean: f64) -> Result<Self> {
        if !(mean.is_finite() && mean > 0.0) {
            return Err(Error::Value(format!(
                "packet mean must be positive and finite, got {mean}"
            )));
        }
        Ok(Self { kind, mean })
    }

    pub fn exponential(mean: f64) -> Result<Self> {
        Self::new(DistributionKind::Exponential, mean)
    }

    pub fn deterministic(mean: f64) -> Result<Self> {
        Self::new(DistributionKind::Deterministic, mean)
    }

    pub fn uniform(mean: f64) -> Result<Self> {
        Self::new(DistributionKind::Uniform, mean)
    }

    pub fn kind(&self) -> DistributionKind {
        self.kind
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Support of the law as `(lower, upper)`; the upper end is infinite for
    /// the exponential law.
    pub fn support(&self) -> (f64, f64) {
        match self.kind {
            DistributionKind::Exponential => (0.0, f64::INFINITY),
            DistributionKind::Deterministic => (self.mean, self.mean),
            DistributionKind::Uniform => (0.0, 2.0 * self.mean),
        }
    }

    /// One draw from the law.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.kind {
            DistributionKind::Exponential => {
                let e: f64 = rng.sample(Exp1);
                e * self.mean
            }
            DistributionKind::Deterministic => self.mean,
            DistributionKind::Uniform => {
                let u: f64 = rng.sample(Open01);
                2.0 * self.mean * u
            }
        }
    }

    /// Exact raw moments `(E[X], E[X²])`.
    pub fn moments(&self) -> (f64, f64) {
        let m = self.mean;
        let second = match self.kind {
            DistributionKind::Exponential => 2.0 * m * m,
            DistributionKind::Deterministic => m * m,
            DistributionKind::Uniform => 4.0 * m * m / 3.0,
        };
        (m, second)
    }

    pub fn variance(&self) -> f64 {
        let (m, second) = self.moments();
        second - m * m
    }

    /// Moment-generating function `E[e^{rX}]`.
    pub fn mgf(&self, r: f64) -> Result<f64> {
        let m = self.mean;
        match self.kind {
            DistributionKind::Exponential => {
                if r * m >= 1.0 {
                    return Err(Error::Domain(format!(
                        "exponential MGF diverges for r = {r} >= 1/mean = {}",
                        1.0 / m
                    )));
                }
                Ok(1.0 / (1.0 - r * m))
            }
            DistributionKind::Deterministic => Ok((m * r).exp()),
            DistributionKind::Uniform => {
                if r.abs() < UNIFORM_MGF_TAYLOR_CUTOFF {
                    // (e^a - 1)/a with a = 2·X̄·r
                    let a = 2.0 * m * r;
                    Ok(1.0 + a / 2.0 + a * a / 6.0 + a * a * a / 24.0)
                } else {
                    let a = 2.0 * m * r;
                    Ok(a.exp_m1() / a)
                }
            }
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let m = self.mean;
        match self.kind {
            DistributionKind::Exponential => {
                if x <= 0.0 {
                    0.0
                } else {
                    -(-x / m).exp_m1()
                }
            }
            DistributionKind::Deterministic => {
                if x >= m {
                    1.0
                } else {
                    0.0
                }
            }
            DistributionKind::Uniform => (x / (2.0 * m)).clamp(0.0, 1.0),
        }
    }
}

impl fmt::Display for DistributionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:mean={}", self.kind.tag(), self.mean)
    }
}

impl From<DistributionSpec> for String {
    fn from(spec: DistributionSpec) -> Self {
        spec.to_string()
    }
}

impl TryFrom<String> for DistributionSpec {
    type Error = Error;

    fn try_from(text: String) -> Result<Self> {
        text.parse()
    }
}

/// Parses `exp:mean=<float>`, `det:mean=<float>` or `unif:mean=<float>`,
/// case-insensitively.
impl FromStr for DistributionSpec {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let Some(colon) = text.find(':') else {
            return Err(Error::Parse {
                position: text.len(),
                message: "expected ':' after distribution kind".into(),
            });
        };
        let kind = match text[..colon].to_ascii_lowercase().as_str() {
            "exp" => DistributionKind::Exponential,
            "det" => DistributionKind::Deterministic,
            "unif" => DistributionKind::Uniform,
            other => {
                return Err(Error::Parse {
                    position: 0,
                    message: format!("expected one of `exp`, `det`, `unif`, found `{other}`"),
                })
            }
        };
        let rest = &text[colon + 1..];
        let key_pos = colon + 1;
        const KEY: &str = "mean=";
        if rest.len() < KEY.len() || !rest[..KEY.len()].eq_ignore_ascii_case(KEY) {
            return Err(Error::Parse {
                position: key_pos,
                message: "expected `mean=`".into(),
            });
        }
        let value_pos = key_pos + KEY.len();
        let value = &rest[KEY.len()..];
        let mean: f64 = value.parse().map_err(|_| Error::Parse {
            position: value_pos,
            message: format!("expected a floating-point number, found `{value}`"),
        })?;
        DistributionSpec::new(kind, mean)
    }
}

/// One energy arrival: packet energy `X_i` followed by the gap `A_i` until
/// the next arrival.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub inter_arrival: f64,
    pub energy: f64,
}

impl Event {
    pub fn new(inter_arrival: f64, energy: f64) -> Result<Self> {
        if !(inter_arrival > 0.0 && inter_arrival.is_finite()) {
            return Err(Error::Value(format!(
                "inter-arrival time must be positive, got {inter_arrival}"
            )));
        }
        if !(energy > 0.0 && energy.is_finite()) {
            return Err(Error::Value(format!(
                "packet energy must be positive, got {energy}"
            )));
        }
        Ok(Self {
            inter_arrival,
            energy,
        })
    }
}

/// A stream of `(A_i, X_i)` pairs. A finite source simply ends the run when
/// it is exhausted.
pub trait EventSource: Iterator<Item = Event> {}

impl<I: Iterator<Item = Event>> EventSource for I {}

/// Poisson arrivals of i.i.d. packets, drawn from `rng`.
#[derive(Debug, Clone)]
pub struct PoissonEvents<R> {
    lambda: f64,
    packet: DistributionSpec,
    rng: R,
}

impl<R: Rng> PoissonEvents<R> {
    pub fn new(lambda: f64, packet: DistributionSpec, rng: R) -> Self {
        Self {
            lambda,
            packet,
            rng,
        }
    }
}

impl<R: Rng> Iterator for PoissonEvents<R> {
    type Item = Event;

    #[inline]
    fn next(&mut self) -> Option<Event> {
        let energy = self.packet.sample(&mut self.rng);
        let e: f64 = self.rng.sample(Exp1);
        Some(Event {
            inter_arrival: e / self.lambda,
            energy,
        })
    }
}

/// A fixed list of events, validated up front.
#[derive(Debug, Clone)]
pub struct ScriptedEvents {
    events: Vec<Event>,
}

impl ScriptedEvents {
    pub fn new(pairs: &[(f64, f64)]) -> Result<Self> {
        let events = pairs
            .iter()
            .map(|&(a, x)| Event::new(a, x))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { events })
    }

    /// Builds events realizing the walk increments `z_i = p·A_i − X_i`, using
    /// `X_i = 1 + |z_i|`.
    pub fn from_increments(p: f64, increments: &[f64]) -> Result<Self> {
        let pairs: Vec<(f64, f64)> = increments
            .iter()
            .map(|&z| {
                let x = 1.0 + z.abs();
                ((z + x) / p, x)
            })
            .collect();
        Self::new(&pairs)
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    /// Finite stream over the script.
    pub fn iter(&self) -> impl EventSource + '_ {
        self.events.iter().copied()
    }

    /// The script repeated forever.
    pub fn cycle(&self) -> impl EventSource + '_ {
        self.events.iter().copied().cycle()
    }
}

/// Random stream for trial `trial` under master seed `seed`.
///
/// Streams are ChaCha8 streams keyed by the master seed and selected by the
/// trial index, so a trial's draws never depend on which worker runs it.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}
