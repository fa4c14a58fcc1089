//! Semiclassical Langevin equations for the particle and the cavity field.
//!
//! The state is the particle phase-space point `(x, p)` and the complex field
//! amplitude `α`. Deterministic motion follows the adiabatic field equation
//! with the optical dipole force; fluctuations enter through the cavity input
//! noise `ξ_α` and the spontaneous-emission recoil noise `ξ_p`, which are
//! mutually correlated. The position has no noise of its own.
//!
//! The noise correlators are read as white-noise intensities, so increments
//! over a step `dt` have covariance `Σ·dt`. The conjugate-free correlator
//! `⟨ξ_α ξ_α⟩` is taken as zero, which splits the field noise evenly between
//! the two quadratures.

use nalgebra::{Matrix3, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::params::{force_sc, DerivedParams, SystemParams, MASS};

/// Eigenvalues below `-NOISE_PSD_TOLERANCE · trace` are treated as a broken
/// noise model; anything between that and zero is clipped.
pub const NOISE_PSD_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    #[error("non-finite state at t = {t}: {state:?}")]
    NonFinite { t: f64, state: State },
    #[error("noise covariance is indefinite (smallest eigenvalue {min_eigenvalue:e}, trace {trace:e})")]
    IndefiniteNoise { min_eigenvalue: f64, trace: f64 },
    #[error("time step {dt} violates the stability bound (dt·rate = {product:.3} >= 1)")]
    Unstable { dt: f64, product: f64 },
    #[error("invalid integrator configuration: {0}")]
    InvalidConfig(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct State {
    pub x: f64,
    pub p: f64,
    pub alpha: Complex64,
}

impl State {
    pub fn new(x: f64, p: f64, alpha: Complex64) -> Self {
        State { x, p, alpha }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.p.is_finite() && self.alpha.re.is_finite() && self.alpha.im.is_finite()
    }

    /// `p²/2m`, which is `p²` in recoil units.
    pub fn kinetic_energy(&self) -> f64 {
        self.p * self.p / (2.0 * MASS)
    }
}

/// Time derivative of a [`State`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Derivative {
    pub dx: f64,
    pub dp: f64,
    pub dalpha: Complex64,
}

pub fn drift(s: &State, p: &SystemParams, d: &DerivedParams) -> Derivative {
    let (sin_x, cos_x) = s.x.sin_cos();
    drift_sc(s, sin_x, cos_x, p, d)
}

#[inline]
fn drift_sc(s: &State, sin_x: f64, cos_x: f64, p: &SystemParams, d: &DerivedParams) -> Derivative {
    let c2 = cos_x * cos_x;
    let rate = Complex64::new(-(p.kappa + d.gamma0 * c2), p.delta_c - d.u0 * c2);
    let pump = Complex64::new(p.eta_l, -d.eta_eff * cos_x);
    Derivative {
        dx: s.p / MASS,
        dp: force_sc(sin_x, cos_x, s.alpha, d),
        dalpha: rate * s.alpha + pump,
    }
}

/// Conserved energy of the lossless, noiseless dynamics (`κ = Γ0 = 0`):
/// `p² + (U0cos²x − Δc)|α|² + 2η_l Im α + 2η_eff cos x Re α`.
pub fn effective_hamiltonian(s: &State, p: &SystemParams, d: &DerivedParams) -> f64 {
    let c = s.x.cos();
    s.kinetic_energy()
        + (d.u0 * c * c - p.delta_c) * s.alpha.norm_sqr()
        + 2.0 * p.eta_l * s.alpha.im
        + 2.0 * d.eta_eff * c * s.alpha.re
}

/// Symmetric covariance rate of `(ξ_p, Re ξ_α, Im ξ_α)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseCovariance(pub [[f64; 3]; 3]);

impl NoiseCovariance {
    pub const P: usize = 0;
    pub const RE: usize = 1;
    pub const IM: usize = 2;

    pub fn zero() -> Self {
        NoiseCovariance([[0.0; 3]; 3])
    }

    pub fn diagonal(v: [f64; 3]) -> Self {
        let mut m = [[0.0; 3]; 3];
        for i in 0..3 {
            m[i][i] = v[i];
        }
        NoiseCovariance(m)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[i][j]
    }

    pub fn trace(&self) -> f64 {
        self.0[0][0] + self.0[1][1] + self.0[2][2]
    }

    /// Square root `L` with `L·Lᵀ = Σ`, after clipping tiny negative
    /// eigenvalues.
    #[allow(clippy::needless_range_loop)]
    pub fn factor(&self) -> Result<NoiseFactor, DynamicsError> {
        let a = &self.0;
        let trace = self.trace();
        let tol = NOISE_PSD_TOLERANCE * trace.abs();
        let mut l = [[0.0; 3]; 3];
        for j in 0..3 {
            let mut diag = a[j][j];
            for k in 0..j {
                diag -= l[j][k] * l[j][k];
            }
            if diag > tol {
                let root = diag.sqrt();
                l[j][j] = root;
                for i in (j + 1)..3 {
                    let mut r = a[i][j];
                    for k in 0..j {
                        r -= l[i][k] * l[j][k];
                    }
                    l[i][j] = r / root;
                }
            } else if diag >= -tol {
                // zero pivot: the remaining column must vanish as well
                for i in (j + 1)..3 {
                    let mut r = a[i][j];
                    for k in 0..j {
                        r -= l[i][k] * l[j][k];
                    }
                    if r.abs() > tol.max(f64::MIN_POSITIVE) {
                        return self.factor_by_eigen(tol, trace);
                    }
                }
            } else {
                return self.factor_by_eigen(tol, trace);
            }
        }
        Ok(NoiseFactor(l))
    }

    fn factor_by_eigen(&self, tol: f64, trace: f64) -> Result<NoiseFactor, DynamicsError> {
        let m = Matrix3::from_fn(|i, j| 0.5 * (self.0[i][j] + self.0[j][i]));
        let eig = SymmetricEigen::new(m);
        let min = eig.eigenvalues.min();
        if min < -tol {
            return Err(DynamicsError::IndefiniteNoise {
                min_eigenvalue: min,
                trace,
            });
        }
        let mut l = [[0.0; 3]; 3];
        for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
            let root = lambda.max(0.0).sqrt();
            for (i, row) in l.iter_mut().enumerate() {
                row[k] = eig.eigenvectors[(i, k)] * root;
            }
        }
        Ok(NoiseFactor(l))
    }
}

/// A matrix square root of a [`NoiseCovariance`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseFactor(pub [[f64; 3]; 3]);

impl NoiseFactor {
    /// Maps three independent standard normals to correlated increments over
    /// a step of length `dt`.
    pub fn increments<R: Rng + ?Sized>(&self, dt: f64, rng: &mut R) -> [f64; 3] {
        let sq = dt.sqrt();
        let z: [f64; 3] = [
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        ];
        let l = &self.0;
        [
            sq * (l[0][0] * z[0] + l[0][1] * z[1] + l[0][2] * z[2]),
            sq * (l[1][0] * z[0] + l[1][1] * z[1] + l[1][2] * z[2]),
            sq * (l[2][0] * z[0] + l[2][1] * z[1] + l[2][2] * z[2]),
        ]
    }
}

pub fn noise_covariance(s: &State, p: &SystemParams, d: &DerivedParams) -> NoiseCovariance {
    let (sin_x, cos_x) = s.x.sin_cos();
    noise_covariance_sc(s, sin_x, cos_x, p, d)
}

#[inline]
fn noise_covariance_sc(
    s: &State,
    sin_x: f64,
    cos_x: f64,
    p: &SystemParams,
    d: &DerivedParams,
) -> NoiseCovariance {
    let c2 = cos_x * cos_x;
    let field = 0.5 * (p.kappa + d.gamma0 * c2);
    // ⟨ξ_p ξ_α⟩ = −iΓ0 α sin x
    let cross = Complex64::new(0.0, -d.gamma0 * sin_x) * s.alpha;
    let var_p = 2.0 * d.gamma0 * s.alpha.norm_sqr() * (c2 * p.ubar_sq + sin_x * sin_x);
    NoiseCovariance([
        [var_p, cross.re, cross.im],
        [cross.re, field, 0.0],
        [cross.im, 0.0, field],
    ])
}

/// Draws `(dW_p, dW_re, dW_im)` with covariance `c·dt`.
pub fn sample_noise<R: Rng + ?Sized>(
    c: &NoiseCovariance,
    dt: f64,
    rng: &mut R,
) -> Result<[f64; 3], DynamicsError> {
    if !(dt > 0.0) {
        return Err(DynamicsError::InvalidConfig("dt must be > 0"));
    }
    Ok(c.factor()?.increments(dt, rng))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// First-order Euler–Maruyama, all components from the start-of-step state.
    EulerMaruyama,
    /// Euler–Maruyama with the position advanced by the updated momentum
    /// (symplectic Euler for the mechanical degrees of freedom). Plain
    /// Euler–Maruyama pumps energy into trapped motion at a rate of order
    /// `ω_trap²·dt`; this variant does not, at the same cost per step.
    #[default]
    SemiImplicit,
    /// Classical RK4 for the drift, with the same Itô noise increment as
    /// Euler–Maruyama added on top.
    Rk4,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub scheme: Scheme,
    pub noise: bool,
    /// Holds `x` fixed while `p` still accumulates force and noise.
    pub freeze_position: bool,
    pub seed: u64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            dt: 5e-4,
            scheme: Scheme::SemiImplicit,
            noise: true,
            freeze_position: false,
            seed: 0,
        }
    }
}

impl IntegratorConfig {
    /// Checks `dt > 0` and `dt·(κ + Γ0 + |Δc| + |U0|) < 1`, warning above 0.5.
    pub fn validate(&self, p: &SystemParams, d: &DerivedParams) -> Result<(), DynamicsError> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(DynamicsError::InvalidConfig("dt must be finite and > 0"));
        }
        let product = self.dt * (p.kappa + d.gamma0 + p.delta_c.abs() + d.u0.abs());
        if product >= 1.0 {
            return Err(DynamicsError::Unstable { dt: self.dt, product });
        }
        if product > 0.5 {
            log::warn!(
                "dt = {} is close to the stability limit (dt·rate = {product:.3})",
                self.dt
            );
        }
        Ok(())
    }

    /// Independent random stream for one trajectory.
    pub fn rng(&self, stream: u64) -> ChaCha8Rng {
        trajectory_rng(self.seed, stream)
    }
}

pub fn trajectory_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[inline]
fn advance(s: &State, k: &Derivative, h: f64, freeze: bool) -> State {
    State {
        x: if freeze { s.x } else { s.x + h * k.dx },
        p: s.p + h * k.dp,
        alpha: s.alpha + k.dalpha * h,
    }
}

fn step_with<R: Rng + ?Sized>(
    s: &State,
    dt: f64,
    cfg: &IntegratorConfig,
    p: &SystemParams,
    d: &DerivedParams,
    rng: &mut R,
) -> Result<State, DynamicsError> {
    let (sin_x, cos_x) = s.x.sin_cos();
    let k1 = drift_sc(s, sin_x, cos_x, p, d);
    let freeze = cfg.freeze_position;
    let mut next = match cfg.scheme {
        Scheme::EulerMaruyama | Scheme::SemiImplicit => advance(s, &k1, dt, freeze),
        Scheme::Rk4 => {
            let k2 = drift(&advance(s, &k1, 0.5 * dt, freeze), p, d);
            let k3 = drift(&advance(s, &k2, 0.5 * dt, freeze), p, d);
            let k4 = drift(&advance(s, &k3, dt, freeze), p, d);
            let k = Derivative {
                dx: (k1.dx + 2.0 * k2.dx + 2.0 * k3.dx + k4.dx) / 6.0,
                dp: (k1.dp + 2.0 * k2.dp + 2.0 * k3.dp + k4.dp) / 6.0,
                dalpha: (k1.dalpha + k2.dalpha * 2.0 + k3.dalpha * 2.0 + k4.dalpha) / 6.0,
            };
            advance(s, &k, dt, freeze)
        }
    };
    if cfg.noise {
        let cov = noise_covariance_sc(s, sin_x, cos_x, p, d);
        let [dw_p, dw_re, dw_im] = cov.factor()?.increments(dt, rng);
        next.p += dw_p;
        next.alpha += Complex64::new(dw_re, dw_im);
    }
    if cfg.scheme == Scheme::SemiImplicit && !freeze {
        next.x = s.x + dt * next.p / MASS;
    }
    Ok(next)
}

/// One integrator step of length `cfg.dt`.
pub fn step<R: Rng + ?Sized>(
    s: &State,
    cfg: &IntegratorConfig,
    p: &SystemParams,
    d: &DerivedParams,
    rng: &mut R,
) -> Result<State, DynamicsError> {
    let next = step_with(s, cfg.dt, cfg, p, d, rng)?;
    if !next.is_finite() {
        return Err(DynamicsError::NonFinite {
            t: f64::NAN,
            state: *s,
        });
    }
    Ok(next)
}

/// Integrates from `s0` up to `t_final`, calling `observer(t, state)` at
/// `t = 0` and after every `stride` steps.
///
/// A final partial step is taken when `t_final` is not a multiple of `dt`.
#[allow(clippy::too_many_arguments)]
pub fn evolve<R, F>(
    s0: State,
    t_final: f64,
    cfg: &IntegratorConfig,
    p: &SystemParams,
    d: &DerivedParams,
    rng: &mut R,
    stride: usize,
    mut observer: F,
) -> Result<State, DynamicsError>
where
    R: Rng + ?Sized,
    F: FnMut(f64, &State),
{
    if !(t_final >= 0.0) {
        return Err(DynamicsError::InvalidConfig("t_final must be >= 0"));
    }
    if stride == 0 {
        return Err(DynamicsError::InvalidConfig("sampling stride must be >= 1"));
    }
    cfg.validate(p, d)?;
    observer(0.0, &s0);
    if t_final == 0.0 {
        return Ok(s0);
    }
    let full = (t_final / cfg.dt * (1.0 + 1e-12)).floor() as u64;
    let mut s = s0;
    for n in 1..=full {
        let next = step_with(&s, cfg.dt, cfg, p, d, rng)?;
        let t = n as f64 * cfg.dt;
        if !next.is_finite() {
            return Err(DynamicsError::NonFinite { t, state: s });
        }
        s = next;
        if n % stride as u64 == 0 {
            observer(t, &s);
        }
    }
    let rest = t_final - full as f64 * cfg.dt;
    if rest > 1e-9 * cfg.dt {
        let next = step_with(&s, rest, cfg, p, d, rng)?;
        if !next.is_finite() {
            return Err(DynamicsError::NonFinite { t: t_final, state: s });
        }
        s = next;
    }
    Ok(s)
}
