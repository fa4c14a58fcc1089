//! Velocity-dependent friction by the constant-velocity drag method, and
//! momentum diffusion of a particle held at a fixed position.
//!
//! The particle is dragged through the standing wave at `x(t) = v·t` while the
//! internal degrees of freedom are integrated with RK4. After a transient the
//! force is averaged over whole optical periods for `+v` and `−v`, and the odd
//! part gives the linear friction coefficient `f1 = −(⟨F⟩(v) − ⟨F⟩(−v)) / 2v`.
//! Positive `f1` cools.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{evolve, DynamicsError, IntegratorConfig, Scheme, State};
use crate::params::{derive, force_sc, steady_state_alpha, DerivedParams, ParamsError, SystemParams};

/// Relative period-to-period change of the averaged force tolerated once the
/// drag has settled onto its limit cycle.
pub const PERIOD_TOLERANCE: f64 = 1e-6;
/// Relative change of `f1` tolerated when the drag velocity is halved.
pub const LINEARITY_TOLERANCE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FrictionError {
    #[error(transparent)]
    Params(#[from] ParamsError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error("invalid friction configuration: {0}")]
    InvalidConfig(String),
    #[error("period-averaged force did not settle: relative change {relative_change:.3e} between the last two periods")]
    NotConverged { relative_change: f64 },
    #[error("drag integration produced a non-finite state")]
    NonFinite,
    #[error("no stationary temperature for f1 = {f1} (heating or no friction)")]
    NoStationaryTemperature { f1: f64 },
}

/// Cavity amplitude and low-saturation atomic coherence.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AtomFieldState {
    pub alpha: Complex64,
    pub sigma: Complex64,
}

/// Equations the drag integrates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrictionModel {
    /// Field and atomic coherence evolved together; includes the internal
    /// (Doppler) contribution to friction.
    #[default]
    PreAdiabatic,
    /// Atom eliminated; the field follows the effective particle drift, which
    /// isolates the cavity contribution.
    Adiabatic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DragConfig {
    /// Drag velocity `[ω_R/k]`.
    pub v: f64,
    pub n_transient_periods: u32,
    pub n_average_periods: u32,
    /// Largest RK4 step; the actual step divides one period evenly.
    pub dt: f64,
    pub model: FrictionModel,
    /// Repeat at `v/2` and report whether `f1` is in the linear regime.
    pub check_linearity: bool,
}

impl Default for DragConfig {
    fn default() -> Self {
        DragConfig {
            v: 0.05,
            n_transient_periods: 50,
            n_average_periods: 20,
            dt: 0.01,
            model: FrictionModel::PreAdiabatic,
            check_linearity: true,
        }
    }
}

impl DragConfig {
    pub fn validate(&self) -> Result<(), FrictionError> {
        if !(self.v.is_finite() && self.v != 0.0) {
            return Err(FrictionError::InvalidConfig(format!(
                "drag velocity must be finite and nonzero, got {}",
                self.v
            )));
        }
        if self.n_transient_periods < 1 || self.n_average_periods < 1 {
            return Err(FrictionError::InvalidConfig("period counts must be >= 1".into()));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(FrictionError::InvalidConfig(format!(
                "dt must be finite and > 0, got {}",
                self.dt
            )));
        }
        Ok(())
    }
}

/// Time derivative of the coupled atom and field:
/// `dσ/dt = (iΔa − Γ)σ − g0 cos x·α − Ω`, `dα/dt = (iΔc − κ)α + g0 cos x·σ + η_l`.
pub fn atom_field_drift(s: &AtomFieldState, x: f64, p: &SystemParams, omega: f64) -> AtomFieldState {
    pre_adiabatic_drift(s, x.cos(), &Coefficients::new(p, omega))
}

/// Semiclassical gradient force `2 g0 sin x Im(σ*α)`.
pub fn dipole_force(s: &AtomFieldState, x: f64, g0: f64) -> f64 {
    2.0 * g0 * x.sin() * (s.sigma.conj() * s.alpha).im
}

/// Fixed point of the coherence equation at frozen `α`.
pub fn steady_state_sigma(alpha: Complex64, x: f64, p: &SystemParams, omega: f64) -> Complex64 {
    let drive = p.g0 * x.cos() * alpha + omega;
    drive / Complex64::new(-p.gamma, p.delta_a)
}

#[derive(Debug, Clone, Copy)]
struct Coefficients {
    atom_rate: Complex64,
    cavity_rate: Complex64,
    g0: f64,
    omega: f64,
    eta_l: f64,
}

impl Coefficients {
    fn new(p: &SystemParams, omega: f64) -> Self {
        Coefficients {
            atom_rate: Complex64::new(-p.gamma, p.delta_a),
            cavity_rate: Complex64::new(-p.kappa, p.delta_c),
            g0: p.g0,
            omega,
            eta_l: p.eta_l,
        }
    }
}

#[inline]
fn pre_adiabatic_drift(s: &AtomFieldState, cos_x: f64, c: &Coefficients) -> AtomFieldState {
    let g = c.g0 * cos_x;
    AtomFieldState {
        sigma: c.atom_rate * s.sigma - g * s.alpha - c.omega,
        alpha: c.cavity_rate * s.alpha + g * s.sigma + c.eta_l,
    }
}

#[inline]
fn adiabatic_drift(s: &AtomFieldState, cos_x: f64, p: &SystemParams, d: &DerivedParams) -> AtomFieldState {
    let c2 = cos_x * cos_x;
    let rate = Complex64::new(-(p.kappa + d.gamma0 * c2), p.delta_c - d.u0 * c2);
    AtomFieldState {
        sigma: Complex64::new(0.0, 0.0),
        alpha: rate * s.alpha + Complex64::new(p.eta_l, -d.eta_eff * cos_x),
    }
}

#[inline]
fn axpy(s: &AtomFieldState, k: &AtomFieldState, h: f64) -> AtomFieldState {
    AtomFieldState {
        alpha: s.alpha + k.alpha * h,
        sigma: s.sigma + k.sigma * h,
    }
}

struct Drag<'a> {
    p: &'a SystemParams,
    d: DerivedParams,
    coeffs: Coefficients,
    model: FrictionModel,
}

impl Drag<'_> {
    #[inline]
    fn drift(&self, s: &AtomFieldState, cos_x: f64) -> AtomFieldState {
        match self.model {
            FrictionModel::PreAdiabatic => pre_adiabatic_drift(s, cos_x, &self.coeffs),
            FrictionModel::Adiabatic => adiabatic_drift(s, cos_x, self.p, &self.d),
        }
    }

    #[inline]
    fn force(&self, s: &AtomFieldState, sin_x: f64, cos_x: f64) -> f64 {
        match self.model {
            FrictionModel::PreAdiabatic => 2.0 * self.p.g0 * sin_x * (s.sigma.conj() * s.alpha).im,
            FrictionModel::Adiabatic => force_sc(sin_x, cos_x, s.alpha, &self.d),
        }
    }

    fn initial(&self) -> AtomFieldState {
        let alpha = steady_state_alpha(0.0, self.p, &self.d);
        let sigma = match self.model {
            FrictionModel::PreAdiabatic => steady_state_sigma(alpha, 0.0, self.p, self.coeffs.omega),
            FrictionModel::Adiabatic => Complex64::new(0.0, 0.0),
        };
        AtomFieldState { alpha, sigma }
    }

    /// Mean force over each of the averaging periods for a drag at `v`, plus
    /// the largest `|σ|` seen.
    fn period_means(&self, v: f64, cfg: &DragConfig) -> Result<(Vec<f64>, f64), FrictionError> {
        let period = TAU / v.abs();
        let n = (period / cfg.dt).ceil().max(4.0) as usize;
        let h = period / n as f64;
        // x on the half-step grid repeats exactly after one period.
        let table: Vec<(f64, f64)> = (0..2 * n).map(|j| (v * j as f64 * 0.5 * h).sin_cos()).collect();
        let mut s = self.initial();
        let mut max_sigma = s.sigma.norm();
        let total = cfg.n_transient_periods + cfg.n_average_periods;
        let mut means = Vec::with_capacity(cfg.n_average_periods as usize);
        for period_index in 0..total {
            let averaging = period_index >= cfg.n_transient_periods;
            let mut sum = 0.0;
            for k in 0..n {
                let (sin0, cos0) = table[2 * k];
                let cos_mid = table[2 * k + 1].1;
                let cos1 = table[(2 * k + 2) % (2 * n)].1;
                if averaging {
                    sum += self.force(&s, sin0, cos0);
                }
                let k1 = self.drift(&s, cos0);
                let k2 = self.drift(&axpy(&s, &k1, 0.5 * h), cos_mid);
                let k3 = self.drift(&axpy(&s, &k2, 0.5 * h), cos_mid);
                let k4 = self.drift(&axpy(&s, &k3, h), cos1);
                s = AtomFieldState {
                    alpha: s.alpha + (k1.alpha + (k2.alpha + k3.alpha) * 2.0 + k4.alpha) * (h / 6.0),
                    sigma: s.sigma + (k1.sigma + (k2.sigma + k3.sigma) * 2.0 + k4.sigma) * (h / 6.0),
                };
                max_sigma = max_sigma.max(s.sigma.norm());
            }
            if !(s.alpha.is_finite() && s.sigma.is_finite()) {
                return Err(FrictionError::NonFinite);
            }
            if averaging {
                means.push(sum / n as f64);
            }
        }
        Ok((means, max_sigma))
    }
}

/// Averaged force over whole periods for one drag direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DragAverage {
    pub v: f64,
    pub mean_force: f64,
    /// Relative change between the last two period means (0 with one period).
    pub period_change: f64,
    pub max_sigma: f64,
}

/// Drags at velocity `v` and returns the period-averaged force.
pub fn drag_average(p: &SystemParams, v: f64, cfg: &DragConfig) -> Result<DragAverage, FrictionError> {
    cfg.validate()?;
    let d = derive(p)?;
    let omega = match cfg.model {
        FrictionModel::PreAdiabatic => p.omega()?,
        FrictionModel::Adiabatic => 0.0,
    };
    let drag = Drag {
        p,
        d,
        coeffs: Coefficients::new(p, omega),
        model: cfg.model,
    };
    let stiffness = p.kappa.abs()
        + p.delta_c.abs()
        + d.u0.abs()
        + d.gamma0
        + match cfg.model {
            FrictionModel::PreAdiabatic => p.gamma + p.delta_a.abs() + p.g0,
            FrictionModel::Adiabatic => 0.0,
        };
    let h = (TAU / v.abs()) / (TAU / v.abs() / cfg.dt).ceil().max(4.0);
    if h * stiffness > 1.0 {
        return Err(FrictionError::InvalidConfig(format!(
            "dt = {} too large for the fastest rate {stiffness:.3}",
            cfg.dt
        )));
    }
    let (means, max_sigma) = drag.period_means(v, cfg)?;
    let mean_force = means.iter().sum::<f64>() / means.len() as f64;
    let period_change = match means.as_slice() {
        [.., a, b] => {
            let scale = b.abs().max(a.abs());
            if scale == 0.0 {
                0.0
            } else {
                (b - a).abs() / scale
            }
        }
        _ => 0.0,
    };
    if period_change > PERIOD_TOLERANCE {
        // Rounding in the period sums sets a floor far below any physical
        // signal; only report changes above it.
        let floor = 1e-12 * means.iter().map(|m| m.abs()).fold(0.0, f64::max).max(1e-300);
        let last = &means[means.len() - 2..];
        if (last[1] - last[0]).abs() > floor {
            return Err(FrictionError::NotConverged {
                relative_change: period_change,
            });
        }
    }
    if max_sigma > 1.0 {
        log::warn!("|σ| reached {max_sigma:.3}; low-saturation model is outside its range");
    }
    Ok(DragAverage {
        v,
        mean_force,
        period_change,
        max_sigma,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrictionEstimate {
    /// Linear friction coefficient `[ħk²]`; positive cools.
    pub f1: f64,
    /// `f1` recomputed at `v/2`, when requested.
    pub f1_half_v: Option<f64>,
    /// Whether halving `v` changed `f1` by less than [`LINEARITY_TOLERANCE`].
    pub linear: Option<bool>,
    pub max_sigma: f64,
}

fn odd_part(p: &SystemParams, v: f64, cfg: &DragConfig) -> Result<(f64, f64), FrictionError> {
    let plus = drag_average(p, v, cfg)?;
    let minus = drag_average(p, -v, cfg)?;
    let f1 = -(plus.mean_force - minus.mean_force) / (2.0 * v);
    Ok((f1, plus.max_sigma.max(minus.max_sigma)))
}

/// Linear friction coefficient averaged over one optical period.
pub fn friction_coefficient(p: &SystemParams, cfg: &DragConfig) -> Result<FrictionEstimate, FrictionError> {
    cfg.validate()?;
    let (f1, mut max_sigma) = odd_part(p, cfg.v, cfg)?;
    let (f1_half_v, linear) = if cfg.check_linearity {
        let (half, sigma) = odd_part(p, 0.5 * cfg.v, cfg)?;
        max_sigma = max_sigma.max(sigma);
        let linear = (half - f1).abs() <= LINEARITY_TOLERANCE * f1.abs();
        if !linear {
            log::debug!("f1 = {f1:.6e} at v = {}, {half:.6e} at v/2", cfg.v);
        }
        (Some(half), Some(linear))
    } else {
        (None, None)
    };
    Ok(FrictionEstimate {
        f1,
        f1_half_v,
        linear,
        max_sigma,
    })
}

/// One node of a friction map. `f1` is missing when the node failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrictionNode {
    pub delta_a: f64,
    pub delta_c: f64,
    pub f1: Option<f64>,
    pub linear: Option<bool>,
    pub error: Option<String>,
}

impl FrictionNode {
    pub fn converged(&self) -> bool {
        self.f1.is_some()
    }
}

/// Friction over a `(Δa, Δc)` grid, row-major with `Δa` as the outer axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrictionMap {
    pub delta_a: Vec<f64>,
    pub delta_c: Vec<f64>,
    pub nodes: Vec<FrictionNode>,
}

impl FrictionMap {
    pub fn get(&self, ia: usize, ic: usize) -> &FrictionNode {
        &self.nodes[ia * self.delta_c.len() + ic]
    }
}

pub fn friction_map(
    delta_a: &[f64],
    delta_c: &[f64],
    base: &SystemParams,
    cfg: &DragConfig,
) -> Result<FrictionMap, FrictionError> {
    friction_map_with_progress(delta_a, delta_c, base, cfg, &|_, _| {})
}

/// As [`friction_map`], calling `progress(done, total)` as nodes finish.
pub fn friction_map_with_progress(
    delta_a: &[f64],
    delta_c: &[f64],
    base: &SystemParams,
    cfg: &DragConfig,
    progress: &(dyn Fn(usize, usize) + Sync),
) -> Result<FrictionMap, FrictionError> {
    if delta_a.is_empty() || delta_c.is_empty() {
        return Err(FrictionError::InvalidConfig("friction grid is empty".into()));
    }
    cfg.validate()?;
    let total = delta_a.len() * delta_c.len();
    let done = std::sync::atomic::AtomicUsize::new(0);
    let nodes = (0..total)
        .into_par_iter()
        .map(|i| {
            let (da, dc) = (delta_a[i / delta_c.len()], delta_c[i % delta_c.len()]);
            let p = SystemParams {
                delta_a: da,
                delta_c: dc,
                ..*base
            };
            let node = match friction_coefficient(&p, cfg) {
                Ok(est) => FrictionNode {
                    delta_a: da,
                    delta_c: dc,
                    f1: Some(est.f1),
                    linear: est.linear,
                    error: None,
                },
                Err(e) => FrictionNode {
                    delta_a: da,
                    delta_c: dc,
                    f1: None,
                    linear: None,
                    error: Some(e.to_string()),
                },
            };
            let n = done.fetch_add(1, std::sync::atomic::Ordering::Relaxed) + 1;
            progress(n, total);
            node
        })
        .collect();
    Ok(FrictionMap {
        delta_a: delta_a.to_vec(),
        delta_c: delta_c.to_vec(),
        nodes,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffusionConfig {
    pub n_traj: usize,
    /// Relaxation with noise before momentum is recorded; default `20/κ`.
    pub t_relax: Option<f64>,
    /// Length of the recorded window; default `100/κ`.
    pub t_measure: Option<f64>,
    /// Number of regression points in the recorded window.
    pub n_samples: usize,
    /// Integrator step; default `0.02/(κ + Γ0 + |Δc| + |U0|)`.
    pub dt: Option<f64>,
    pub seed: u64,
}

impl Default for DiffusionConfig {
    fn default() -> Self {
        DiffusionConfig {
            n_traj: 400,
            t_relax: None,
            t_measure: None,
            n_samples: 20,
            dt: None,
            seed: 0,
        }
    }
}

/// Momentum diffusion coefficient `D` at a fixed position: half the growth
/// rate of `Var(p)` with the particle held at `x`, from a least-squares fit
/// over the recorded window.
pub fn diffusion_coefficient(p: &SystemParams, x: f64, cfg: &DiffusionConfig) -> Result<f64, FrictionError> {
    diffusion_at(p, x, cfg, 0)
}

/// [`diffusion_coefficient`] averaged uniformly over `n_x` positions of one
/// optical period.
pub fn average_diffusion(p: &SystemParams, n_x: usize, cfg: &DiffusionConfig) -> Result<f64, FrictionError> {
    if n_x == 0 {
        return Err(FrictionError::InvalidConfig("n_x must be >= 1".into()));
    }
    let mut sum = 0.0;
    for i in 0..n_x {
        let x = TAU * (i as f64 + 0.5) / n_x as f64;
        sum += diffusion_at(p, x, cfg, (i as u64) << 32)?;
    }
    Ok(sum / n_x as f64)
}

fn diffusion_at(
    p: &SystemParams,
    x: f64,
    cfg: &DiffusionConfig,
    stream_base: u64,
) -> Result<f64, FrictionError> {
    if cfg.n_traj < 2 || cfg.n_samples < 2 {
        return Err(FrictionError::InvalidConfig(
            "diffusion needs n_traj >= 2 and n_samples >= 2".into(),
        ));
    }
    let d = derive(p)?;
    let rate = p.kappa + d.gamma0 + p.delta_c.abs() + d.u0.abs();
    let dt = cfg.dt.unwrap_or(0.02 / rate);
    let t_relax = cfg.t_relax.unwrap_or(20.0 / p.kappa);
    let t_measure = cfg.t_measure.unwrap_or(100.0 / p.kappa);
    if !(t_relax >= 0.0 && t_measure > 0.0) {
        return Err(FrictionError::InvalidConfig(
            "diffusion times must be positive".into(),
        ));
    }
    let icfg = IntegratorConfig {
        dt,
        scheme: Scheme::EulerMaruyama,
        noise: true,
        freeze_position: true,
        seed: cfg.seed,
    };
    icfg.validate(p, &d)?;
    let steps = (t_measure / dt).round().max(cfg.n_samples as f64) as usize;
    let stride = (steps / cfg.n_samples).max(1);
    let steps = stride * cfg.n_samples;
    let t_measure = steps as f64 * dt;
    let alpha0 = steady_state_alpha(x, p, &d);
    let paths: Vec<Vec<f64>> = (0..cfg.n_traj)
        .into_par_iter()
        .map(|i| {
            let mut rng = icfg.rng(stream_base + i as u64);
            let relaxed = evolve(
                State::new(x, 0.0, alpha0),
                t_relax,
                &icfg,
                p,
                &d,
                &mut rng,
                usize::MAX,
                |_, _| {},
            )?;
            let mut samples = Vec::with_capacity(cfg.n_samples + 1);
            evolve(
                State { p: 0.0, ..relaxed },
                t_measure,
                &icfg,
                p,
                &d,
                &mut rng,
                stride,
                |_, s| samples.push(s.p),
            )?;
            Ok(samples)
        })
        .collect::<Result<_, DynamicsError>>()?;
    let n_points = paths[0].len();
    let n = cfg.n_traj as f64;
    let times: Vec<f64> = (0..n_points).map(|k| (k * stride) as f64 * dt).collect();
    let variances: Vec<f64> = (0..n_points)
        .map(|k| {
            let mean = paths.iter().map(|path| path[k]).sum::<f64>() / n;
            paths.iter().map(|path| (path[k] - mean).powi(2)).sum::<f64>() / (n - 1.0)
        })
        .collect();
    let t_mean = times.iter().sum::<f64>() / n_points as f64;
    let v_mean = variances.iter().sum::<f64>() / n_points as f64;
    let (sxy, sxx) = times
        .iter()
        .zip(&variances)
        .fold((0.0, 0.0), |(sxy, sxx), (t, v)| {
            (sxy + (t - t_mean) * (v - v_mean), sxx + (t - t_mean).powi(2))
        });
    Ok(0.5 * sxy / sxx)
}

/// Stationary temperature `k_B T = D / f1` `[ħω_R]`.
pub fn einstein_temperature(diffusion: f64, f1: f64) -> Result<f64, FrictionError> {
    if !(f1 > 0.0) {
        return Err(FrictionError::NoStationaryTemperature { f1 });
    }
    Ok(diffusion / f1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{force, TransversePump};
    use approx::assert_relative_eq;

    fn fig2_cavity(delta_a: f64, delta_c: f64) -> SystemParams {
        SystemParams {
            kappa: 1.0,
            gamma: 1.0,
            g0: 3.0,
            delta_a,
            delta_c,
            eta_l: 1.0,
            pump: TransversePump::EtaEff(0.0),
            ubar_sq: 0.4,
        }
    }

    fn quick() -> DragConfig {
        DragConfig {
            n_transient_periods: 4,
            n_average_periods: 2,
            check_linearity: false,
            ..DragConfig::default()
        }
    }

    #[test]
    fn sigma_fixed_point_solves_coherence_equation() {
        let p = fig2_cavity(-4.0, -2.0);
        let alpha = Complex64::new(0.3, -0.7);
        for &x in &[0.0, 0.4, 1.3, 2.9] {
            let sigma = steady_state_sigma(alpha, x, &p, 2.5);
            let ds = atom_field_drift(&AtomFieldState { alpha, sigma }, x, &p, 2.5).sigma;
            assert!(ds.norm() < 1e-13, "{ds}");
        }
    }

    #[test]
    fn adiabatic_substitution_reproduces_effective_field_drift() {
        let omega = 2.0;
        let p = SystemParams {
            pump: TransversePump::Omega(omega),
            ..fig2_cavity(7.0, -3.0)
        };
        let d = derive(&p).unwrap();
        let den = p.delta_a * p.delta_a + p.gamma * p.gamma;
        let dropped = p.g0 * omega * p.gamma / den;
        for &x in &[0.0, 0.5, 1.1, 2.0, 3.0] {
            let alpha = Complex64::new(-0.4, 1.2);
            let sigma = steady_state_sigma(alpha, x, &p, omega);
            let full = atom_field_drift(&AtomFieldState { alpha, sigma }, x, &p, omega).alpha;
            let effective = adiabatic_drift(&AtomFieldState { alpha, sigma }, x.cos(), &p, &d).alpha;
            let diff = full - effective + dropped * x.cos();
            assert!(diff.norm() < 1e-12, "x={x}: {diff}");
        }
    }

    #[test]
    fn undriven_origin_is_a_fixed_point() {
        let p = SystemParams {
            eta_l: 0.0,
            ..fig2_cavity(-3.0, 1.0)
        };
        let ds = atom_field_drift(&AtomFieldState::default(), 0.7, &p, 0.0);
        assert_eq!(ds, AtomFieldState::default());
    }

    #[test]
    fn dipole_force_at_fixed_point_matches_effective_force() {
        let omega = 1.5;
        let p = SystemParams {
            pump: TransversePump::Omega(omega),
            ..fig2_cavity(6.0, -2.0)
        };
        let d = derive(&p).unwrap();
        let den = p.delta_a * p.delta_a + p.gamma * p.gamma;
        for &x in &[0.3, 1.0, 2.2] {
            let alpha = Complex64::new(0.8, -0.25);
            let sigma = steady_state_sigma(alpha, x, &p, omega);
            let f = dipole_force(&AtomFieldState { alpha, sigma }, x, p.g0);
            let correction = -2.0 * p.g0 * omega * p.gamma / den * alpha.im * x.sin();
            assert_relative_eq!(f, force(x, alpha, &d) + correction, max_relative = 1e-10);
        }
    }

    #[test]
    fn dipole_force_trivial_cases() {
        let s = AtomFieldState {
            alpha: Complex64::new(1.0, 2.0),
            sigma: Complex64::new(-0.5, 0.3),
        };
        assert_eq!(dipole_force(&s, 0.0, 3.0), 0.0);
        let empty = AtomFieldState {
            alpha: Complex64::new(0.0, 0.0),
            ..s
        };
        assert_eq!(dipole_force(&empty, 1.0, 3.0), 0.0);
    }

    #[test]
    fn no_drive_no_friction() {
        let p = SystemParams {
            eta_l: 0.0,
            ..fig2_cavity(-3.0, -1.0)
        };
        let est = friction_coefficient(&p, &quick()).unwrap();
        assert_eq!(est.f1, 0.0);
    }

    #[test]
    fn red_detuning_near_intensity_maximum_cools() {
        // Δc − U0 ≈ 0 for Δa = −3, Δc = −2.7.
        let p = fig2_cavity(-3.0, -2.7);
        let est = friction_coefficient(&p, &DragConfig::default()).unwrap();
        assert!(est.f1 > 0.0, "{est:?}");
        assert_eq!(est.linear, Some(true), "{est:?}");
    }

    #[test]
    fn swapping_drag_direction_flips_sign_exactly() {
        let p = fig2_cavity(-3.0, -2.0);
        let cfg = quick();
        let plus = drag_average(&p, cfg.v, &cfg).unwrap().mean_force;
        let minus = drag_average(&p, -cfg.v, &cfg).unwrap().mean_force;
        let f = -(plus - minus) / (2.0 * cfg.v);
        let g = -(minus - plus) / (2.0 * -cfg.v);
        assert_eq!(f, g);
    }

    #[test]
    fn doubling_average_periods_is_stable() {
        let p = fig2_cavity(-3.0, -2.7);
        let cfg = DragConfig {
            n_transient_periods: 30,
            n_average_periods: 5,
            check_linearity: false,
            ..DragConfig::default()
        };
        let a = friction_coefficient(&p, &cfg).unwrap().f1;
        let b = friction_coefficient(
            &p,
            &DragConfig {
                n_average_periods: 10,
                ..cfg
            },
        )
        .unwrap()
        .f1;
        assert!((a - b).abs() < 1e-6 * a.abs(), "{a} {b}");
    }

    #[test]
    fn adiabatic_model_agrees_for_far_detuned_atom() {
        let p = fig2_cavity(-40.0, -1.2);
        let pre = DragConfig {
            dt: 0.005,
            check_linearity: false,
            n_transient_periods: 10,
            n_average_periods: 2,
            ..DragConfig::default()
        };
        let ad = DragConfig {
            model: FrictionModel::Adiabatic,
            ..pre
        };
        let a = friction_coefficient(&p, &pre).unwrap().f1;
        let b = friction_coefficient(&p, &ad).unwrap().f1;
        assert!((a - b).abs() < 0.1 * b.abs(), "pre {a} adiabatic {b}");
    }

    #[test]
    fn one_node_map_equals_direct_call() {
        let base = fig2_cavity(0.0, 0.0);
        let cfg = quick();
        let map = friction_map(&[-3.0], &[-2.0], &base, &cfg).unwrap();
        let direct = friction_coefficient(&fig2_cavity(-3.0, -2.0), &cfg).unwrap();
        assert_eq!(map.nodes.len(), 1);
        assert_eq!(map.get(0, 0).f1, Some(direct.f1));
    }

    #[test]
    fn failed_nodes_are_missing_not_fatal() {
        // Atom pump with Δa = 0 has no finite Ω.
        let base = SystemParams {
            pump: TransversePump::EtaEff(1.0),
            ..fig2_cavity(0.0, 0.0)
        };
        let map = friction_map(&[0.0, -2.0], &[-1.0], &base, &quick()).unwrap();
        assert!(map.get(0, 0).f1.is_none());
        assert!(map.get(0, 0).error.is_some());
        assert!(map.get(1, 0).f1.is_some());
    }

    #[test]
    fn map_is_deterministic() {
        let base = fig2_cavity(0.0, 0.0);
        let cfg = quick();
        let a = friction_map(&[-3.0, 2.0], &[-2.0, 1.0, 3.0], &base, &cfg).unwrap();
        let b = friction_map(&[-3.0, 2.0], &[-2.0, 1.0, 3.0], &base, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_drag_config_is_rejected() {
        let p = fig2_cavity(-3.0, -2.0);
        for cfg in [
            DragConfig { v: 0.0, ..quick() },
            DragConfig {
                n_average_periods: 0,
                ..quick()
            },
            DragConfig { dt: 1.0, ..quick() },
        ] {
            assert!(friction_coefficient(&p, &cfg).is_err(), "{cfg:?}");
        }
    }

    #[test]
    fn einstein_relation_rejects_heating() {
        assert!(matches!(
            einstein_temperature(1.0, -0.5),
            Err(FrictionError::NoStationaryTemperature { .. })
        ));
        assert!(einstein_temperature(1.0, 0.0).is_err());
        assert_eq!(einstein_temperature(1.0, 0.5).unwrap(), 2.0);
    }

    #[test]
    fn node_without_absorption_or_pump_has_no_diffusion() {
        let p = SystemParams {
            gamma: 0.0,
            ..fig2_cavity(-5.0, -1.0)
        };
        let cfg = DiffusionConfig {
            n_traj: 16,
            ..DiffusionConfig::default()
        };
        let d = diffusion_coefficient(&p, std::f64::consts::FRAC_PI_2, &cfg).unwrap();
        // cos(π/2) is 6e-17 in floating point, not zero.
        assert!(d.abs() < 1e-28, "{d}");
    }

    #[test]
    fn field_mediated_diffusion_at_node() {
        // At cos x = 0 the force is 2η_eff Re α and Re α is an OU process with
        // rate κ and rotation Δc, so D = η_eff² κ / (κ² + Δc²).
        let p = SystemParams {
            gamma: 0.0,
            pump: TransversePump::EtaEff(2.0),
            ..fig2_cavity(-5.0, -1.5)
        };
        let cfg = DiffusionConfig {
            n_traj: 2000,
            ..DiffusionConfig::default()
        };
        let d = diffusion_coefficient(&p, std::f64::consts::FRAC_PI_2, &cfg).unwrap();
        let expected = 4.0 * 1.0 / (1.0 + 2.25);
        assert_relative_eq!(d, expected, max_relative = 0.1);
    }

    #[test]
    fn antinode_diffusion_follows_momentum_channel() {
        // At x = 0 the force vanishes, so only ξ_p contributes:
        // D = Γ0 ū² ⟨|α|²⟩ with ⟨|α|²⟩ = |α_st|² + 1/2 from vacuum noise.
        for eta_l in [2.0, 4.0] {
            let p = SystemParams {
                eta_l,
                ..fig2_cavity(-5.0, -1.0)
            };
            let d = derive(&p).unwrap();
            let alpha_sq = steady_state_alpha(0.0, &p, &d).norm_sqr();
            let expected = d.gamma0 * p.ubar_sq * (alpha_sq + 0.5);
            let cfg = DiffusionConfig {
                n_traj: 1000,
                ..DiffusionConfig::default()
            };
            let got = diffusion_coefficient(&p, 0.0, &cfg).unwrap();
            assert_relative_eq!(got, expected, max_relative = 0.1);
        }
    }
}
