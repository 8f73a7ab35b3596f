//! Closed-form and numeric analysis of the energy surplus process.
//!
//! The surplus `U(t) = u₀ − p·t + Σ X_i` is observed through the random walk
//! `S_n = Σ (p·A_i − X_i)`, whose increment is `Z = p·A − X`. Everything in
//! here assumes Poisson arrivals (`A ~ Exp(λ)`) unless stated otherwise.

use serde::{Deserialize, Serialize};

use crate::distributions::{DistributionKind, DistributionSpec};
use crate::error::{Error, Result};

/// Default tolerance on `|K_Z(r*)|`.
pub const DEFAULT_ROOT_TOL: f64 = 1e-12;

const MAX_BRACKET_STEPS: usize = 200;
const MAX_ROOT_ITERATIONS: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    /// Packet arrival rate.
    pub lambda: f64,
    pub packet: DistributionSpec,
    /// Constant consumption rate.
    pub p: f64,
    /// Initial battery energy.
    pub u0: f64,
}

impl SystemParams {
    pub fn new(lambda: f64, packet: DistributionSpec, p: f64, u0: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::Value(format!("lambda must be positive, got {lambda}")));
        }
        if !(p.is_finite() && p > 0.0) {
            return Err(Error::Value(format!("p must be positive, got {p}")));
        }
        if !(u0.is_finite() && u0 >= 0.0) {
            return Err(Error::Value(format!("u0 must be nonnegative, got {u0}")));
        }
        Ok(Self {
            lambda,
            packet,
            p,
            u0,
        })
    }

    /// Parameters with the arrival rate chosen to hit utilization `rho`.
    pub fn from_rho(rho: f64, packet: DistributionSpec, p: f64, u0: f64) -> Result<Self> {
        if !(rho.is_finite() && rho > 0.0) {
            return Err(Error::Value(format!("rho must be positive, got {rho}")));
        }
        Self::new(rho * p / packet.mean(), packet, p, u0)
    }

    pub fn with_u0(self, u0: f64) -> Result<Self> {
        Self::new(self.lambda, self.packet, self.p, u0)
    }

    pub fn rho(&self) -> f64 {
        self.lambda * self.packet.mean() / self.p
    }

    /// `(E[Z], Var[Z])` for `Z = p·A − X`.
    pub fn increment_mean_variance(&self) -> (f64, f64) {
        let mean = self.p / self.lambda - self.packet.mean();
        let var = (self.p / self.lambda).powi(2) + self.packet.variance();
        (mean, var)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sustainability {
    /// `ρ ≤ 1`: eventual outage happens with probability one.
    UnsustainableCertain,
    /// `ρ > 1`: the battery may never empty.
    SelfSustainablePossible,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SustainabilityVerdict {
    pub rho: f64,
    pub status: Sustainability,
}

pub fn utilization(params: &SystemParams) -> SustainabilityVerdict {
    let rho = params.rho();
    let status = if rho > 1.0 {
        Sustainability::SelfSustainablePossible
    } else {
        Sustainability::UnsustainableCertain
    };
    SustainabilityVerdict { rho, status }
}

fn require_sustainable(params: &SystemParams) -> Result<()> {
    let rho = params.rho();
    if rho > 1.0 {
        Ok(())
    } else {
        Err(Error::Precondition(format!(
            "self-sustainability needs rho > 1, got rho = {rho}"
        )))
    }
}

/// Large-time mean surplus `u₀ + (λX̄ − p)·t`.
pub fn expected_surplus(params: &SystemParams, t: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::Precondition(format!("t must be nonnegative, got {t}")));
    }
    Ok(params.u0 + (params.lambda * params.packet.mean() - params.p) * t)
}

/// Cumulant generating function of the walk increment,
/// `K_Z(r) = −log(1 − p·r/λ) + log M_X(−r)`.
pub fn cgf_z(params: &SystemParams, r: f64) -> Result<f64> {
    let x = params.p * r / params.lambda;
    if x >= 1.0 {
        return Err(Error::Domain(format!(
            "K_Z undefined for r = {r} >= lambda/p = {}",
            params.lambda / params.p
        )));
    }
    let mx = params.packet.mgf(-r)?;
    Ok(-(-x).ln_1p() + mx.ln())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveMethod {
    ClosedForm,
    Numeric,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdjustmentResult {
    pub r_star: f64,
    pub method: SolveMethod,
    /// `|K_Z(r_star)|`
    pub residual: f64,
    pub iterations: usize,
}

/// Positive root `r*` of `K_Z`. Exponential packets use the closed form,
/// other laws the bracketed numeric solver.
pub fn solve_adjustment_coefficient(params: &SystemParams, tol: f64) -> Result<AdjustmentResult> {
    require_sustainable(params)?;
    match params.packet.kind() {
        DistributionKind::Exponential => {
            let mean = params.packet.mean();
            let r_star = (params.rho() - 1.0) / mean;
            let residual = cgf_z(params, r_star)?.abs();
            Ok(AdjustmentResult {
                r_star,
                method: SolveMethod::ClosedForm,
                residual,
                iterations: 0,
            })
        }
        _ => solve_adjustment_coefficient_numeric(params, tol),
    }
}

/// Numeric root of `K_Z` on `(0, λ/p)` regardless of the packet law.
///
/// `K_Z` is convex with `K_Z(0) = 0` and `K_Z'(0) = E[Z] < 0`, so it is
/// negative on `(0, r*)` and positive on `(r*, λ/p)`. The bracket starts at
/// the mean-variance guess and is widened toward `λ/p`; the root is then
/// polished by Illinois-modified regula falsi, falling back to bisection
/// whenever the secant point leaves the bracket.
pub fn solve_adjustment_coefficient_numeric(
    params: &SystemParams,
    tol: f64,
) -> Result<AdjustmentResult> {
    require_sustainable(params)?;
    if !(tol > 0.0) {
        return Err(Error::Value(format!("tolerance must be positive, got {tol}")));
    }
    let k = |r: f64| cgf_z(params, r);
    let upper = params.lambda / params.p;
    let (mu, var) = params.increment_mean_variance();
    let mut seed = -2.0 * mu / var;
    if !(seed > 0.0 && seed < upper) {
        seed = 0.5 * upper;
    }

    let mut iterations = 0;
    let mut a = seed / 10.0;
    let mut fa = k(a)?;
    while fa >= 0.0 {
        iterations += 1;
        if iterations > MAX_BRACKET_STEPS {
            return Err(Error::Convergence(
                "could not find a point with K_Z < 0 near the origin".into(),
            ));
        }
        a /= 10.0;
        fa = k(a)?;
    }
    let mut b = seed.max(a);
    let mut fb = k(b)?;
    while fb <= 0.0 {
        if fb == 0.0 && b > 0.0 {
            return Ok(AdjustmentResult {
                r_star: b,
                method: SolveMethod::Numeric,
                residual: 0.0,
                iterations,
            });
        }
        iterations += 1;
        if iterations > MAX_BRACKET_STEPS {
            return Err(Error::Convergence(format!(
                "no sign change of K_Z below lambda/p = {upper}"
            )));
        }
        a = b;
        fa = fb;
        b += 0.5 * (upper - b);
        fb = match k(b) {
            Ok(v) => v,
            Err(_) => {
                return Err(Error::Convergence(format!(
                    "bracket left the MGF domain at r = {b}"
                )))
            }
        };
    }

    let mut last_side = 0i8;
    for _ in 0..MAX_ROOT_ITERATIONS {
        iterations += 1;
        let mut x = (a * fb - b * fa) / (fb - fa);
        if !(x > a && x < b) {
            x = 0.5 * (a + b);
        }
        let fx = k(x)?;
        if fx.abs() <= tol {
            return Ok(AdjustmentResult {
                r_star: x,
                method: SolveMethod::Numeric,
                residual: fx.abs(),
                iterations,
            });
        }
        if fx < 0.0 {
            a = x;
            fa = fx;
            if last_side < 0 {
                fb *= 0.5;
            }
            last_side = -1;
        } else {
            b = x;
            fb = fx;
            if last_side > 0 {
                fa *= 0.5;
            }
            last_side = 1;
        }
        if b - a <= 4.0 * f64::EPSILON * b {
            break;
        }
    }
    // Bracket collapsed; accept the better endpoint if it meets the tolerance.
    let (ra, rb) = (k(a)?.abs(), k(b)?.abs());
    let (r_star, residual) = if ra <= rb { (a, ra) } else { (b, rb) };
    if residual <= tol {
        Ok(AdjustmentResult {
            r_star,
            method: SolveMethod::Numeric,
            residual,
            iterations,
        })
    } else {
        Err(Error::Convergence(format!(
            "|K_Z| = {residual:e} above tolerance {tol:e} at r = {r_star}"
        )))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdjustmentApprox {
    /// Root of the fixed-point equation with `M_X(−r)` expanded to second order.
    pub quadratic_fixed_point: f64,
    /// `−2·E[Z]/Var[Z]`.
    pub mean_variance_guess: f64,
}

pub fn approx_adjustment_coefficient(params: &SystemParams) -> Result<AdjustmentApprox> {
    require_sustainable(params)?;
    let (_, second) = params.packet.moments();
    let quadratic_fixed_point =
        2.0 * params.p / (params.lambda * second) * (params.rho() - 1.0);
    let (mu, var) = params.increment_mean_variance();
    Ok(AdjustmentApprox {
        quadratic_fixed_point,
        mean_variance_guess: -2.0 * mu / var,
    })
}

/// Exponential bound `ψ(u₀) ≤ e^{−r*·u₀}`.
pub fn outage_bound(r_star: f64, u0: f64) -> Result<f64> {
    check_r_star(r_star)?;
    check_u0(u0)?;
    Ok((-r_star * u0).exp())
}

/// Exact eventual outage probability under Poisson arrivals,
/// `ψ(u₀) = (1 − r*·p/λ)·e^{−r*·u₀}`, evaluated at `params.u0`.
///
/// `r_star` is taken as given; it is the caller's job to pass the root for
/// these parameters.
pub fn eventual_outage_poisson_exact(params: &SystemParams, r_star: f64) -> Result<f64> {
    require_sustainable(params)?;
    check_r_star(r_star)?;
    let theta = ladder_mass_poisson(params, r_star)?;
    Ok(theta * (-r_star * params.u0).exp())
}

/// Total mass `θ = 1 − r*·p/λ` of the defective ladder-height law.
pub fn ladder_mass_poisson(params: &SystemParams, r_star: f64) -> Result<f64> {
    let theta = 1.0 - r_star * params.p / params.lambda;
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::Precondition(format!(
            "r* = {r_star} gives ladder mass {theta} outside (0, 1)"
        )));
    }
    Ok(theta)
}

/// Mean `μ̃_H = (λ/p − r*)⁻¹` of the exponentially tilted ladder height.
pub fn tilted_ladder_mean_poisson(params: &SystemParams, r_star: f64) -> Result<f64> {
    let rate = params.lambda / params.p - r_star;
    if !(rate > 0.0) {
        return Err(Error::Precondition(format!(
            "r* = {r_star} must be below lambda/p"
        )));
    }
    Ok(1.0 / rate)
}

/// Large-`u₀` approximation `((1 − θ)/(r*·μ̃_H))·e^{−r*·u₀}`.
pub fn asymptotic_outage(theta: f64, r_star: f64, mu_tilde: f64, u0: f64) -> Result<f64> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::Precondition(format!("theta must lie in (0, 1), got {theta}")));
    }
    check_r_star(r_star)?;
    if !(mu_tilde > 0.0 && mu_tilde.is_finite()) {
        return Err(Error::Precondition(format!("mu_tilde must be positive, got {mu_tilde}")));
    }
    check_u0(u0)?;
    Ok((1.0 - theta) / (r_star * mu_tilde) * (-r_star * u0).exp())
}

/// Smallest `u₀` whose exponential bound equals `epsilon`.
pub fn required_initial_energy(r_star: f64, epsilon: f64) -> Result<f64> {
    check_r_star(r_star)?;
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::Precondition(format!("epsilon must lie in (0, 1], got {epsilon}")));
    }
    Ok(-epsilon.ln() / r_star)
}

/// Defective ladder-height density `f_H(x) = (λ/p − r*)·e^{−λx/p}`.
pub fn ladder_height_density_poisson(params: &SystemParams, r_star: f64, x: f64) -> Result<f64> {
    require_sustainable(params)?;
    check_r_star(r_star)?;
    if !(x >= 0.0) {
        return Err(Error::Precondition(format!("x must be nonnegative, got {x}")));
    }
    let beta = params.lambda / params.p;
    Ok((beta - r_star) * (-beta * x).exp())
}

/// Samples `f` on `0, step, …, u_max`. `step` must divide `u_max`.
pub fn density_grid(u_max: f64, step: f64, f: impl Fn(f64) -> f64) -> Result<Vec<f64>> {
    let n = grid_len(u_max, step)?;
    Ok((0..=n).map(|i| f(i as f64 * step)).collect())
}

fn grid_len(u_max: f64, step: f64) -> Result<usize> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::Grid(format!("step must be positive, got {step}")));
    }
    if !(u_max >= 0.0 && u_max.is_finite()) {
        return Err(Error::Grid(format!("u_max must be nonnegative, got {u_max}")));
    }
    let n = (u_max / step).round();
    if (n * step - u_max).abs() > 1e-9 {
        return Err(Error::Grid(format!("step {step} does not divide u_max {u_max}")));
    }
    Ok(n as usize)
}

/// Solves `φ(u) = (1 − θ) + ∫₀ᵘ φ(u − x)·f_H(x) dx` on the grid of `f_h`.
///
/// `f_h[i]` is the ladder-height density at `i·step`. The convolution is
/// discretized with the trapezoidal rule and the solution is marched upward
/// from `φ(0) = 1 − θ`; the implicit diagonal term is solved for directly.
pub fn solve_renewal_equation(f_h: &[f64], theta: f64, step: f64) -> Result<Vec<f64>> {
    if f_h.is_empty() {
        return Err(Error::Grid("density grid is empty".into()));
    }
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::Grid(format!("step must be positive, got {step}")));
    }
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::Precondition(format!("theta must lie in [0, 1], got {theta}")));
    }
    if let Some(bad) = f_h.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::Precondition(format!(
            "ladder density must be nonnegative, found {bad}"
        )));
    }
    let mass = step * (f_h.iter().sum::<f64>() - 0.5 * (f_h[0] + f_h[f_h.len() - 1]));
    if mass > theta + step {
        return Err(Error::Precondition(format!(
            "discrete ladder mass {mass} exceeds theta = {theta}"
        )));
    }

    let base = 1.0 - theta;
    let diag = 1.0 - 0.5 * step * f_h[0];
    let mut phi = Vec::with_capacity(f_h.len());
    phi.push(base);
    for n in 1..f_h.len() {
        let interior: f64 = (1..n).map(|k| f_h[k] * phi[n - k]).sum();
        let rhs = base + step * (interior + 0.5 * f_h[n] * phi[0]);
        phi.push(rhs / diag);
    }
    Ok(phi)
}

/// Density of `Z = p·A − X` for Poisson arrivals:
/// `f_Z(z) = (λ/p)·e^{−λz/p}·∫_{max(0,−z)}^∞ e^{−λx/p} f_X(x) dx`.
pub fn density_z(params: &SystemParams, z: f64) -> f64 {
    let beta = params.lambda / params.p;
    let lower = (-z).max(0.0);
    let m = params.packet.mean();
    let tail = match params.packet.kind() {
        DistributionKind::Exponential => {
            let a = 1.0 / m;
            a / (a + beta) * (-(a + beta) * lower).exp()
        }
        DistributionKind::Deterministic => {
            if m >= lower {
                (-beta * m).exp()
            } else {
                0.0
            }
        }
        DistributionKind::Uniform => {
            let top = 2.0 * m;
            if lower >= top {
                0.0
            } else {
                ((-beta * lower).exp() - (-beta * top).exp()) / (top * beta)
            }
        }
    };
    beta * (-beta * z).exp() * tail
}

/// Stationary probability of an empty battery, `1 − ρ`, for `ρ < 1`.
pub fn stationary_outage(params: &SystemParams) -> Result<f64> {
    let rho = params.rho();
    if rho >= 1.0 {
        return Err(Error::Precondition(format!(
            "no stationary regime for rho = {rho} >= 1"
        )));
    }
    Ok(1.0 - rho)
}

/// Steady-state outage duration CDF, the residual-life law of `A`; for
/// Poisson arrivals `1 − e^{−λx}`.
pub fn outage_duration_cdf(params: &SystemParams, x: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::Precondition(format!("x must be nonnegative, got {x}")));
    }
    Ok(-(-params.lambda * x).exp_m1())
}

/// Inverse of [`outage_duration_cdf`].
pub fn outage_duration_quantile(params: &SystemParams, q: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&q) {
        return Err(Error::Precondition(format!("quantile must lie in [0, 1), got {q}")));
    }
    Ok(-(-q).ln_1p() / params.lambda)
}

fn check_r_star(r_star: f64) -> Result<()> {
    if r_star > 0.0 && r_star.is_finite() {
        Ok(())
    } else {
        Err(Error::Precondition(format!("r* must be positive, got {r_star}")))
    }
}

fn check_u0(u0: f64) -> Result<()> {
    if u0 >= 0.0 {
        Ok(())
    } else {
        Err(Error::Precondition(format!("u0 must be nonnegative, got {u0}")))
    }
}
