//! Closed-form step-size and rate quantities of the AsyRK convergence
//! theory, plus the RK / AsySCD / AsyRK comparison report.
//!
//! Everything here is a pure function of a handful of matrix statistics.

use std::f64::consts::E;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparsemat::SystemStats;

/// The matrix statistics the theory consumes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoryInputs {
    pub m: usize,
    pub n: usize,
    pub mu: usize,
    pub alpha: f64,
    pub lambda_max: f64,
    pub lambda_min: Option<f64>,
    pub delta: f64,
    pub l_max: f64,
    pub l_res: f64,
}

impl From<&SystemStats> for TheoryInputs {
    fn from(s: &SystemStats) -> Self {
        TheoryInputs {
            m: s.m,
            n: s.n,
            mu: s.mu,
            alpha: s.alpha,
            lambda_max: s.lambda_max,
            lambda_min: s.lambda_min,
            delta: s.delta,
            l_max: s.l_max,
            l_res: s.l_res,
        }
    }
}

impl TheoryInputs {
    fn require_spectral(&self) -> Result<()> {
        if !(self.lambda_max > 0.0 && self.lambda_max.is_finite()) {
            return Err(Error::MissingStats("lambda_max"));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::MissingStats("alpha"));
        }
        if self.mu == 0 || self.m == 0 {
            return Err(Error::MissingStats("mu"));
        }
        Ok(())
    }
}

/// ψ = μ + 2 λ_max τ ρ^τ / m.
pub fn psi(mu: usize, lambda_max: f64, tau: u32, rho: f64, m: usize) -> Result<f64> {
    if tau > 0 && !(rho > 1.0) {
        return Err(Error::InvalidRho(rho));
    }
    if m == 0 {
        return Err(Error::MissingStats("m"));
    }
    let t = tau as f64;
    Ok(mu as f64 + 2.0 * lambda_max * t * rho.powi(tau as i32) / m as f64)
}

/// The three admissible upper bounds on γ and their minimum.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaBounds {
    /// `1 / ψ`
    pub b1: f64,
    /// `m (ρ - 1) / (2 λ_max ρ^(τ+1))`
    pub b2: f64,
    /// `m sqrt((ρ - 1) / (ρ^τ (m α^2 + λ_max^2 τ ρ^τ)))`
    pub b3: f64,
    pub gamma: f64,
}

pub fn gamma_bounds(s: &TheoryInputs, tau: u32, rho: f64) -> Result<GammaBounds> {
    s.require_spectral()?;
    if !(rho > 1.0) {
        return Err(Error::InvalidRho(rho));
    }
    let m = s.m as f64;
    let lam = s.lambda_max;
    let t = tau as f64;
    let rho_tau = rho.powi(tau as i32);
    let b1 = 1.0 / psi(s.mu, lam, tau, rho, s.m)?;
    let b2 = m * (rho - 1.0) / (2.0 * lam * rho_tau * rho);
    let b3 = m * ((rho - 1.0) / (rho_tau * (m * s.alpha * s.alpha + lam * lam * t * rho_tau))).sqrt();
    Ok(GammaBounds {
        b1,
        b2,
        b3,
        gamma: b1.min(b2).min(b3),
    })
}

/// Step-size bundle for a staleness bound τ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepParams {
    pub tau: u32,
    pub rho: f64,
    pub psi: f64,
    pub gamma: f64,
    pub gamma_bounds: Option<GammaBounds>,
    /// `2 e λ_max (τ + 1) / m`; the parameters are usable when this is ≤ 1.
    pub feasibility_lhs: f64,
    pub feasible: bool,
    /// `1 - λ_min γ (2 - γ ψ) / m`
    pub rate_iter: Option<f64>,
    /// `1 - λ_min / (m (μ + 1))`
    pub rate_simplified: Option<f64>,
}

/// Parameters from the corollary: ρ = 1 + 2eλ_max(τ+1)/m and γ = 1/ψ.
///
/// Infeasibility is reported through `feasible`, never as an error; rate
/// fields stay empty for infeasible inputs and when λ_min is unknown.
pub fn corollary_params(s: &TheoryInputs, tau: u32) -> StepParams {
    let m = s.m as f64;
    let lhs = 2.0 * E * s.lambda_max * (tau as f64 + 1.0) / m;
    let feasible = lhs <= 1.0;
    let rho = 1.0 + lhs;
    let psi_v = psi(s.mu, s.lambda_max, tau, rho, s.m).unwrap_or(f64::NAN);
    let gamma = 1.0 / psi_v;
    let bounds = gamma_bounds(s, tau, rho).ok();
    let (rate_iter, rate_simplified) = match (feasible, s.lambda_min) {
        (true, Some(lmin)) => (
            Some(1.0 - lmin * gamma * (2.0 - gamma * psi_v) / m),
            Some(1.0 - lmin / (m * (s.mu as f64 + 1.0))),
        ),
        _ => (None, None),
    };
    StepParams {
        tau,
        rho,
        psi: psi_v,
        gamma,
        gamma_bounds: bounds,
        feasibility_lhs: lhs,
        feasible,
        rate_iter,
        rate_simplified,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateIteration {
    /// Expected contraction of the squared distance per update.
    pub per_iteration: f64,
    /// The same over `m` updates.
    pub per_epoch: f64,
}

pub fn rate_iteration(s: &TheoryInputs, gamma: f64, psi: f64) -> Result<RateIteration> {
    if !(gamma > 0.0) {
        return Err(Error::InvalidGamma(gamma));
    }
    let limit = 2.0 / psi;
    if gamma >= limit {
        return Err(Error::StepTooLarge { gamma, limit });
    }
    let lmin = s.lambda_min.ok_or(Error::MissingStats("lambda_min"))?;
    let m = s.m as f64;
    let per_iteration = 1.0 - lmin * gamma * (2.0 - gamma * psi) / m;
    Ok(RateIteration {
        per_iteration,
        per_epoch: per_iteration.powf(m),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbBound {
    pub epsilon: f64,
    pub eta: f64,
    pub j_min: u64,
}

/// Iterations after which `P(||x_j - x_j*||^2 <= ε) >= 1 - η`:
/// `ceil( m(μ+1)/λ_min · |log(||x_0 - x_0*||^2 / (η ε))| )`.
pub fn iteration_bound(s: &TheoryInputs, x0_dist_sq: f64, epsilon: f64, eta: f64) -> Result<ProbBound> {
    let lmin = match s.lambda_min {
        Some(l) if l > 0.0 => l,
        _ => return Err(Error::ZeroLambdaMin),
    };
    if !(epsilon > 0.0) || !(eta > 0.0 && eta < 1.0) || !(x0_dist_sq > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "need epsilon > 0, 0 < eta < 1, positive distance (got {epsilon}, {eta}, {x0_dist_sq})"
        )));
    }
    let scale = s.m as f64 * (s.mu as f64 + 1.0) / lmin;
    let j = scale * (x0_dist_sq / (eta * epsilon)).ln().abs();
    Ok(ProbBound {
        epsilon,
        eta,
        j_min: j.ceil() as u64,
    })
}

/// One row of the comparison table. Entries are `None` when they depend on
/// an unavailable quantity (λ_min at large scale).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub quantity: String,
    /// True for O(·) entries evaluated with unit constants.
    pub estimate: bool,
    pub rk: Option<f64>,
    pub asyscd: Option<f64>,
    pub asyrk: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub tau: u32,
    pub rows: Vec<RateRow>,
    /// `m / (2 e λ_max) - 1`, the processor count implied by the corollary's
    /// feasibility condition (alongside the O(m/λ_max) table entry).
    pub asyrk_processors_corollary: f64,
    pub corollary: StepParams,
}

pub fn rate_table(s: &TheoryInputs, tau: u32) -> Result<RateReport> {
    s.require_spectral()?;
    if !(s.l_max > 0.0) {
        return Err(Error::MissingStats("l_max"));
    }
    if !(s.l_res > 0.0) {
        return Err(Error::MissingStats("l_res"));
    }
    let (m, n, d) = (s.m as f64, s.n as f64, s.delta);
    let mu = s.mu as f64;
    let lmin = s.lambda_min;
    let rate = |denom: f64| lmin.map(|l| 1.0 - l / denom);

    let rows = vec![
        RateRow {
            quantity: "operations per iteration".into(),
            estimate: true,
            rk: Some(d * n),
            asyscd: Some((d * d * m * n).min(n)),
            asyrk: Some(d * n),
        },
        RateRow {
            quantity: "rate (iteration)".into(),
            estimate: false,
            rk: rate(m),
            asyscd: rate(2.0 * n * s.l_max),
            asyrk: rate(m * (mu + 1.0)),
        },
        RateRow {
            quantity: "processors".into(),
            estimate: true,
            rk: Some(1.0),
            asyscd: Some(n.sqrt() * s.l_max / s.l_res),
            asyrk: Some(m / s.lambda_max),
        },
        RateRow {
            quantity: "rate (running time)".into(),
            estimate: true,
            rk: rate(d * m * n),
            asyscd: rate(n.powf(1.5) * s.l_res * (d * d * m).min(1.0)),
            asyrk: rate(d * d * n * n * s.lambda_max),
        },
    ];
    Ok(RateReport {
        tau,
        rows,
        asyrk_processors_corollary: m / (2.0 * E * s.lambda_max) - 1.0,
        corollary: corollary_params(s, tau),
    })
}

fn cell(v: Option<f64>, is_rate: bool) -> String {
    match v {
        None => "n/a".to_string(),
        Some(x) if is_rate => format!("1 - {:.4e}", 1.0 - x),
        Some(x) => format!("{x:.4}"),
    }
}

const LABEL: usize = 31;

impl fmt::Display for RateReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<LABEL$} | {:>16} | {:>16} | {:>16}",
            "algorithms", "RK", "AsySCD", "AsyRK"
        )?;
        writeln!(f, "{}", "-".repeat(LABEL + 3 * 19))?;
        for r in &self.rows {
            let label = if r.estimate {
                format!("{} (est.)", r.quantity)
            } else {
                r.quantity.clone()
            };
            let is_rate = r.quantity.starts_with("rate");
            writeln!(
                f,
                "{:<LABEL$} | {:>16} | {:>16} | {:>16}",
                label,
                cell(r.rk, is_rate),
                cell(r.asyscd, is_rate),
                cell(r.asyrk, is_rate)
            )?;
        }
        writeln!(
            f,
            "AsyRK processors from feasibility condition m/(2e lambda_max) - 1 = {:.2}",
            self.asyrk_processors_corollary
        )?;
        write!(
            f,
            "tau = {}: feasible = {}, rho = {:.6}, psi = {:.6e}, gamma = {:.6e}",
            self.tau, self.corollary.feasible, self.corollary.rho, self.corollary.psi, self.corollary.gamma
        )
    }
}
