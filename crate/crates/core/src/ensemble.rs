//! Monte Carlo trajectory ensembles and the observables averaged over them.
//!
//! Each trajectory starts from a thermal momentum distribution and a Gaussian
//! position spread around the cell centre, with the cavity empty. Trajectories
//! are independent; trajectory `i` owns the ChaCha stream `i` of the ensemble
//! seed, and partial sums are merged in trajectory order so the result does
//! not depend on the number of worker threads.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_8, TAU};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{evolve, DynamicsError, IntegratorConfig, Scheme, State};
use crate::params::{derive, potential, DerivedParams, ParamsError, SystemParams, MASS};

/// Trajectories per work item. Fixed so that the reduction order is
/// independent of the thread pool.
const CHUNK: usize = 8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnsembleError {
    #[error(transparent)]
    Params(#[from] ParamsError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error("invalid ensemble configuration: {0}")]
    InvalidConfig(String),
    #[error("{excluded} of {total} trajectories failed (limit 1%); first failure: {first}")]
    TooManyExclusions {
        excluded: usize,
        total: usize,
        first: DynamicsError,
    },
    #[error("empty input")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialConditions {
    /// Initial kinetic temperature `k_B T0` in `ħω_R`.
    pub kbt0: f64,
    pub x_center: f64,
    pub x_sigma: f64,
    pub alpha0: Complex64,
}

impl Default for InitialConditions {
    /// `k_B T0 = 15ħκ` at κ = 40, centred on the field node `x = π/2`.
    fn default() -> Self {
        InitialConditions {
            kbt0: 600.0,
            x_center: FRAC_PI_2,
            x_sigma: FRAC_PI_8,
            alpha0: Complex64::new(0.0, 0.0),
        }
    }
}

impl InitialConditions {
    pub fn validate(&self) -> Result<(), EnsembleError> {
        if !(self.kbt0 >= 0.0 && self.kbt0.is_finite()) {
            return Err(EnsembleError::InvalidConfig(format!(
                "kbt0 = {} must be >= 0",
                self.kbt0
            )));
        }
        if !(self.x_sigma >= 0.0 && self.x_sigma.is_finite()) || !self.x_center.is_finite() {
            return Err(EnsembleError::InvalidConfig(format!(
                "x_center = {}, x_sigma = {}: sigma must be >= 0",
                self.x_center, self.x_sigma
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub n_traj: usize,
    pub t_final: f64,
    pub dt: f64,
    /// Integrator steps between recorded samples.
    pub sample_stride: usize,
    /// Length of the final window averaged for steady-state values.
    pub steady_window: f64,
    pub seed: u64,
    pub scheme: Scheme,
    pub noise: bool,
    /// Energy threshold for the cooling time; `None` means `ħκ`.
    pub cooling_threshold: Option<f64>,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig {
            n_traj: 2000,
            t_final: 100.0,
            dt: 5e-4,
            sample_stride: 200,
            steady_window: 20.0,
            seed: 0,
            scheme: Scheme::SemiImplicit,
            noise: true,
            cooling_threshold: None,
        }
    }
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<(), EnsembleError> {
        let bad = |msg: String| Err(EnsembleError::InvalidConfig(msg));
        if self.n_traj == 0 {
            return bad("n_traj must be >= 1".into());
        }
        if self.sample_stride == 0 {
            return bad("sample_stride must be >= 1".into());
        }
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return bad(format!("t_final = {} must be > 0", self.t_final));
        }
        if !(self.steady_window > 0.0 && self.steady_window <= self.t_final) {
            return bad(format!(
                "steady_window = {} must lie in (0, t_final = {}]",
                self.steady_window, self.t_final
            ));
        }
        if let Some(th) = self.cooling_threshold {
            if !(th > 0.0) {
                return bad(format!("cooling_threshold = {th} must be > 0"));
            }
        }
        Ok(())
    }

    pub fn integrator(&self) -> IntegratorConfig {
        IntegratorConfig {
            dt: self.dt,
            scheme: self.scheme,
            noise: self.noise,
            freeze_position: false,
            seed: self.seed,
        }
    }

    /// Sample times `k·stride·dt` up to `t_final`.
    pub fn sample_times(&self) -> Vec<f64> {
        let dt_sample = self.dt * self.sample_stride as f64;
        let steps = (self.t_final / self.dt * (1.0 + 1e-12)).floor() as usize;
        (0..=steps / self.sample_stride)
            .map(|k| k as f64 * dt_sample)
            .collect()
    }
}

/// Ensemble mean and standard error of a scalar.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_err: f64,
}

impl Estimate {
    fn from_samples(values: impl ExactSizeIterator<Item = f64> + Clone) -> Self {
        let n = values.len();
        if n == 0 {
            return Estimate {
                mean: f64::NAN,
                std_err: f64::NAN,
            };
        }
        let mean = values.clone().sum::<f64>() / n as f64;
        let var = if n > 1 {
            values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        Estimate {
            mean,
            std_err: (var / n as f64).sqrt(),
        }
    }
}

/// Time averages over the final steady window.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SteadyState {
    pub intensity: Estimate,
    /// Kinetic energy in `ħω_R`.
    pub e_kin: Estimate,
    pub bunching: Estimate,
    /// Relative change of `⟨E_kin⟩` between the two halves of the window.
    pub stationarity_drift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub times: Vec<f64>,
    /// `⟨|α|²⟩(t)`
    pub intensity: Vec<f64>,
    /// `⟨E_kin⟩(t)` in `ħω_R`.
    pub e_kin: Vec<f64>,
    /// `⟨cos²x⟩(t)`
    pub bunching: Vec<f64>,
    pub steady: SteadyState,
    pub steady_window: f64,
    pub cooling_threshold: f64,
    pub cooling_time: Option<f64>,
    /// `s·⟨|α|²⟩` over the steady window.
    pub saturation: f64,
    pub n_used: usize,
    pub n_excluded: usize,
}

/// A per-trajectory dump: `(t, state)` at every sample.
pub type TrajectoryRecord = Vec<(f64, State)>;

pub fn sample_initial<R: Rng + ?Sized>(ic: &InitialConditions, rng: &mut R) -> State {
    let x = Normal::new(ic.x_center, ic.x_sigma)
        .expect("validated spread")
        .sample(rng);
    let p = Normal::new(0.0, (MASS * ic.kbt0).sqrt())
        .expect("validated temperature")
        .sample(rng);
    State::new(x, p, ic.alpha0)
}

pub fn bunching(xs: &[f64]) -> Result<f64, EnsembleError> {
    if xs.is_empty() {
        return Err(EnsembleError::Empty);
    }
    Ok(xs.iter().map(|x| x.cos().powi(2)).sum::<f64>() / xs.len() as f64)
}

/// First sample time at which `⟨E_kin⟩` is below `threshold` and stays below
/// for one steady window (or until the end of the series).
pub fn cooling_time(stats: &EnsembleStats, threshold: f64) -> Option<f64> {
    first_sustained_below(&stats.times, &stats.e_kin, threshold, stats.steady_window)
}

fn first_sustained_below(times: &[f64], values: &[f64], threshold: f64, window: f64) -> Option<f64> {
    let n = times.len().min(values.len());
    // next_above[i]: first index >= i whose value is not below threshold
    let mut next_above = vec![n; n + 1];
    for i in (0..n).rev() {
        next_above[i] = if values[i] < threshold {
            next_above[i + 1]
        } else {
            i
        };
    }
    (0..n)
        .find(|&i| {
            values[i] < threshold && {
                let j = next_above[i];
                j == n || times[j] > times[i] + window * (1.0 + 1e-12)
            }
        })
        .map(|i| times[i])
}

struct TrajectorySeries {
    intensity: Vec<f64>,
    e_kin: Vec<f64>,
    bunching: Vec<f64>,
    record: Option<TrajectoryRecord>,
}

fn run_trajectory(
    index: usize,
    p: &SystemParams,
    d: &DerivedParams,
    ic: &InitialConditions,
    cfg: &EnsembleConfig,
    n_samples: usize,
    keep_record: bool,
) -> Result<TrajectorySeries, DynamicsError> {
    let integ = cfg.integrator();
    let mut rng = integ.rng(index as u64);
    let s0 = sample_initial(ic, &mut rng);
    let mut out = TrajectorySeries {
        intensity: Vec::with_capacity(n_samples),
        e_kin: Vec::with_capacity(n_samples),
        bunching: Vec::with_capacity(n_samples),
        record: keep_record.then(|| Vec::with_capacity(n_samples)),
    };
    evolve(
        s0,
        cfg.t_final,
        &integ,
        p,
        d,
        &mut rng,
        cfg.sample_stride,
        |t, s| {
            if out.intensity.len() < n_samples {
                out.intensity.push(s.alpha.norm_sqr());
                out.e_kin.push(s.kinetic_energy());
                out.bunching.push(s.x.cos().powi(2));
                if let Some(rec) = out.record.as_mut() {
                    rec.push((t, *s));
                }
            }
        },
    )?;
    Ok(out)
}

#[derive(Default)]
struct Partial {
    intensity: Vec<f64>,
    e_kin: Vec<f64>,
    bunching: Vec<f64>,
    steady: Vec<[f64; 4]>,
    failures: Vec<DynamicsError>,
    records: Vec<(usize, TrajectoryRecord)>,
}

impl Partial {
    fn zeros(n: usize) -> Self {
        Partial {
            intensity: vec![0.0; n],
            e_kin: vec![0.0; n],
            bunching: vec![0.0; n],
            ..Partial::default()
        }
    }

    fn absorb(&mut self, other: Partial) {
        for (a, b) in self.intensity.iter_mut().zip(&other.intensity) {
            *a += b;
        }
        for (a, b) in self.e_kin.iter_mut().zip(&other.e_kin) {
            *a += b;
        }
        for (a, b) in self.bunching.iter_mut().zip(&other.bunching) {
            *a += b;
        }
        self.steady.extend(other.steady);
        self.failures.extend(other.failures);
        self.records.extend(other.records);
    }
}

pub fn run_ensemble(
    p: &SystemParams,
    ic: &InitialConditions,
    cfg: &EnsembleConfig,
) -> Result<EnsembleStats, EnsembleError> {
    run_ensemble_with_dump(p, ic, cfg, 0).map(|(stats, _)| stats)
}

/// Like [`run_ensemble`], additionally returning the full sample series of
/// the first `dump` trajectories.
pub fn run_ensemble_with_dump(
    p: &SystemParams,
    ic: &InitialConditions,
    cfg: &EnsembleConfig,
    dump: usize,
) -> Result<(EnsembleStats, Vec<TrajectoryRecord>), EnsembleError> {
    run_ensemble_with_progress(p, ic, cfg, dump, &|_, _| {})
}

/// Like [`run_ensemble_with_dump`], calling `progress(done, total)` with
/// trajectory counts as work completes.
pub fn run_ensemble_with_progress(
    p: &SystemParams,
    ic: &InitialConditions,
    cfg: &EnsembleConfig,
    dump: usize,
    progress: &(dyn Fn(usize, usize) + Sync),
) -> Result<(EnsembleStats, Vec<TrajectoryRecord>), EnsembleError> {
    let d = derive(p)?;
    ic.validate()?;
    cfg.validate()?;
    cfg.integrator().validate(p, &d)?;

    let times = cfg.sample_times();
    let n_samples = times.len();
    let t_end = *times.last().expect("at least t = 0");
    let window_start = t_end - cfg.steady_window;
    let in_window: Vec<usize> = (0..n_samples)
        .filter(|&k| times[k] >= window_start - 1e-9 * cfg.dt)
        .collect();
    let mid = window_start + 0.5 * cfg.steady_window;

    let n_chunks = cfg.n_traj.div_ceil(CHUNK);
    let done = std::sync::atomic::AtomicUsize::new(0);
    let partials: Vec<Partial> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = Partial::zeros(n_samples);
            for i in c * CHUNK..((c + 1) * CHUNK).min(cfg.n_traj) {
                match run_trajectory(i, p, &d, ic, cfg, n_samples, i < dump) {
                    Ok(series) if series.intensity.len() == n_samples => {
                        for k in 0..n_samples {
                            acc.intensity[k] += series.intensity[k];
                            acc.e_kin[k] += series.e_kin[k];
                            acc.bunching[k] += series.bunching[k];
                        }
                        let avg = |v: &[f64], ks: &mut dyn Iterator<Item = usize>| {
                            let (sum, n) = ks.fold((0.0, 0usize), |(s, n), k| (s + v[k], n + 1));
                            sum / n.max(1) as f64
                        };
                        let w = &in_window;
                        let e_first = avg(&series.e_kin, &mut w.iter().copied().filter(|&k| times[k] < mid));
                        acc.steady.push([
                            avg(&series.intensity, &mut w.iter().copied()),
                            avg(&series.e_kin, &mut w.iter().copied()),
                            avg(&series.bunching, &mut w.iter().copied()),
                            e_first,
                        ]);
                        if let Some(rec) = series.record {
                            acc.records.push((i, rec));
                        }
                    }
                    Ok(_) => acc
                        .failures
                        .push(DynamicsError::InvalidConfig("truncated trajectory")),
                    Err(e) => acc.failures.push(e),
                }
            }
            let n = ((c + 1) * CHUNK).min(cfg.n_traj) - c * CHUNK;
            progress(
                done.fetch_add(n, std::sync::atomic::Ordering::Relaxed) + n,
                cfg.n_traj,
            );
            acc
        })
        .collect();

    let mut total = Partial::zeros(n_samples);
    for part in partials {
        total.absorb(part);
    }

    let n_excluded = total.failures.len();
    if n_excluded * 100 > cfg.n_traj {
        return Err(EnsembleError::TooManyExclusions {
            excluded: n_excluded,
            total: cfg.n_traj,
            first: total.failures.swap_remove(0),
        });
    }
    let n_used = cfg.n_traj - n_excluded;
    let norm = 1.0 / n_used as f64;
    let scale = |v: Vec<f64>| v.into_iter().map(|x| x * norm).collect::<Vec<_>>();
    let intensity = scale(total.intensity);
    let e_kin = scale(total.e_kin);
    let bunching = scale(total.bunching);

    let column = |j: usize| total.steady.iter().map(move |row| row[j]);
    let e_steady = Estimate::from_samples(column(1));
    let e_first = column(3).sum::<f64>() * norm;
    let e_second_half = 2.0 * e_steady.mean - e_first;
    let steady = SteadyState {
        intensity: Estimate::from_samples(column(0)),
        e_kin: e_steady,
        bunching: Estimate::from_samples(column(2)),
        stationarity_drift: (e_second_half - e_first) / e_steady.mean.abs().max(f64::MIN_POSITIVE),
    };

    let cooling_threshold = cfg.cooling_threshold.unwrap_or(p.kappa);
    let cooling_time = first_sustained_below(&times, &e_kin, cooling_threshold, cfg.steady_window);
    let records = total.records.into_iter().map(|(_, r)| r).collect();
    Ok((
        EnsembleStats {
            times,
            intensity,
            e_kin,
            bunching,
            saturation: d.s * steady.intensity.mean,
            steady,
            steady_window: cfg.steady_window,
            cooling_threshold,
            cooling_time,
            n_used,
            n_excluded,
        },
        records,
    ))
}

/// Steady-state positions folded into one optical wavelength `[0, 2π)`,
/// together with the potential evaluated at the ensemble-mean field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionHistogram {
    pub t_snapshot: f64,
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub n_excluded: usize,
    pub mean_alpha: Complex64,
    /// Mean field over trajectories with `Re α ≥ 0` / `Re α < 0`; `None`
    /// when no trajectory falls on that side.
    pub mean_alpha_re_pos: Option<Complex64>,
    pub mean_alpha_re_neg: Option<Complex64>,
    /// Potential at bin centres for `mean_alpha`.
    pub potential: Vec<f64>,
    pub potential_re_pos: Option<Vec<f64>>,
    pub potential_re_neg: Option<Vec<f64>>,
}

impl PositionHistogram {
    pub fn bin_centers(&self) -> Vec<f64> {
        self.bin_edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

pub fn position_histogram(
    p: &SystemParams,
    ic: &InitialConditions,
    cfg: &EnsembleConfig,
    t_snapshot: f64,
    n_bins: usize,
) -> Result<PositionHistogram, EnsembleError> {
    if n_bins == 0 {
        return Err(EnsembleError::InvalidConfig("n_bins must be >= 1".into()));
    }
    if !(t_snapshot >= 0.0 && t_snapshot <= cfg.t_final) {
        return Err(EnsembleError::InvalidConfig(format!(
            "t_snapshot = {t_snapshot} must lie in [0, t_final = {}]",
            cfg.t_final
        )));
    }
    let d = derive(p)?;
    ic.validate()?;
    cfg.validate()?;
    let integ = cfg.integrator();
    integ.validate(p, &d)?;

    let results: Vec<Result<State, DynamicsError>> = (0..cfg.n_traj)
        .into_par_iter()
        .map(|i| {
            let mut rng = integ.rng(i as u64);
            let s0 = sample_initial(ic, &mut rng);
            evolve(s0, t_snapshot, &integ, p, &d, &mut rng, usize::MAX, |_, _| {})
        })
        .collect();
    let mut finals = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(s) => finals.push(s),
            Err(e) => failures.push(e),
        }
    }
    if failures.len() * 100 > cfg.n_traj {
        return Err(EnsembleError::TooManyExclusions {
            excluded: failures.len(),
            total: cfg.n_traj,
            first: failures.swap_remove(0),
        });
    }

    let width = TAU / n_bins as f64;
    let bin_edges: Vec<f64> = (0..=n_bins).map(|k| k as f64 * width).collect();
    let mut counts = vec![0u64; n_bins];
    for s in &finals {
        let folded = s.x.rem_euclid(TAU);
        counts[((folded / width) as usize).min(n_bins - 1)] += 1;
    }

    let mean_of = |pred: &dyn Fn(&State) -> bool| {
        let (sum, n) = finals
            .iter()
            .filter(|s| pred(s))
            .fold((Complex64::new(0.0, 0.0), 0usize), |(acc, n), s| {
                (acc + s.alpha, n + 1)
            });
        (n > 0).then(|| sum / n as f64)
    };
    let mean_alpha = mean_of(&|_| true).unwrap_or_default();
    let mean_alpha_re_pos = mean_of(&|s| s.alpha.re >= 0.0);
    let mean_alpha_re_neg = mean_of(&|s| s.alpha.re < 0.0);
    let centers: Vec<f64> = bin_edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    let curve = |a: Complex64| centers.iter().map(|&x| potential(x, a, &d)).collect::<Vec<_>>();

    Ok(PositionHistogram {
        t_snapshot,
        potential: curve(mean_alpha),
        potential_re_pos: mean_alpha_re_pos.map(curve),
        potential_re_neg: mean_alpha_re_neg.map(curve),
        bin_edges,
        counts,
        n_excluded: failures.len(),
        mean_alpha,
        mean_alpha_re_pos,
        mean_alpha_re_neg,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::trajectory_rng;
    use approx::assert_relative_eq;

    fn quick(n_traj: usize, t_final: f64) -> EnsembleConfig {
        EnsembleConfig {
            n_traj,
            t_final,
            dt: 1e-3,
            sample_stride: 100,
            steady_window: t_final.min(1.0),
            seed: 11,
            ..EnsembleConfig::default()
        }
    }

    #[test]
    fn initial_momentum_matches_temperature() {
        let ic = InitialConditions::default();
        let mut rng = trajectory_rng(5, 0);
        let n = 100_000;
        let mean_e = (0..n)
            .map(|_| sample_initial(&ic, &mut rng).kinetic_energy())
            .sum::<f64>()
            / n as f64;
        // ⟨E_kin⟩ = k_B T0 / 2 = 7.5 ħκ at κ = 40
        assert!((mean_e - 300.0).abs() < 0.02 * 300.0, "{mean_e}");
    }

    #[test]
    fn cold_point_start_is_deterministic() {
        let ic = InitialConditions {
            kbt0: 0.0,
            x_sigma: 0.0,
            x_center: 0.7,
            alpha0: Complex64::new(0.2, 0.1),
        };
        let mut rng = trajectory_rng(0, 0);
        assert_eq!(
            sample_initial(&ic, &mut rng),
            State::new(0.7, 0.0, Complex64::new(0.2, 0.1))
        );
    }

    #[test]
    fn bunching_limits() {
        assert_eq!(bunching(&[0.0; 10]).unwrap(), 1.0);
        assert!(bunching(&[FRAC_PI_2; 10]).unwrap() < 1e-30);
        assert_eq!(bunching(&[]), Err(EnsembleError::Empty));
    }

    fn stats_from(times: Vec<f64>, e_kin: Vec<f64>, window: f64) -> EnsembleStats {
        let n = times.len();
        EnsembleStats {
            times,
            intensity: vec![0.0; n],
            e_kin,
            bunching: vec![0.5; n],
            steady: SteadyState::default(),
            steady_window: window,
            cooling_threshold: 40.0,
            cooling_time: None,
            saturation: 0.0,
            n_used: 1,
            n_excluded: 0,
        }
    }

    #[test]
    fn cooling_time_cases() {
        let times: Vec<f64> = (0..100).map(|k| k as f64).collect();
        let cold = stats_from(times.clone(), vec![10.0; 100], 20.0);
        assert_eq!(cooling_time(&cold, 40.0), Some(0.0));

        let heating = stats_from(times.clone(), times.iter().map(|t| 50.0 + t).collect(), 20.0);
        assert_eq!(cooling_time(&heating, 40.0), None);

        // dips below at t = 10 but bounces back at t = 15; settles from t = 30
        let e: Vec<f64> = times
            .iter()
            .map(|&t| {
                if (10.0..15.0).contains(&t) || t >= 30.0 {
                    30.0
                } else {
                    60.0
                }
            })
            .collect();
        let bouncing = stats_from(times, e, 20.0);
        assert_eq!(cooling_time(&bouncing, 40.0), Some(30.0));
    }

    #[test]
    fn free_particle_keeps_its_energy() {
        // no coupling, no pumps: only vacuum field noise, which cannot push the particle
        let p = SystemParams {
            g0: 0.0,
            delta_a: 100.0,
            delta_c: -40.0,
            ..SystemParams::baseline()
        };
        let cfg = EnsembleConfig {
            steady_window: 1.0,
            ..quick(64, 2.0)
        };
        let stats = run_ensemble(&p, &InitialConditions::default(), &cfg).unwrap();
        for w in stats.e_kin.windows(2) {
            assert!((w[0] - w[1]).abs() < 1e-9 * w[0]);
        }
        // vacuum floor D/(2κ) = 1/2 photon
        assert!(
            (stats.steady.intensity.mean - 0.5).abs() < 0.1,
            "{:?}",
            stats.steady
        );
    }

    #[test]
    fn uniform_positions_give_half_bunching() {
        let p = SystemParams {
            g0: 0.0,
            delta_a: 100.0,
            ..SystemParams::baseline()
        };
        let ic = InitialConditions {
            x_center: 0.0,
            x_sigma: 100.0,
            ..InitialConditions::default()
        };
        let cfg = quick(4000, 0.05);
        let stats = run_ensemble(&p, &ic, &cfg).unwrap();
        let se = (0.125f64 / 4000.0).sqrt();
        assert!(
            (stats.steady.bunching.mean - 0.5).abs() < 4.0 * se,
            "{}",
            stats.steady.bunching.mean
        );
        assert!(stats.bunching.iter().all(|b| (0.0..=1.0).contains(b)));
    }

    #[test]
    fn frozen_field_reaches_analytic_intensity() {
        let p = SystemParams {
            delta_a: 180.0,
            delta_c: -40.0,
            eta_l: 30.0,
            ..SystemParams::baseline()
        };
        let ic = InitialConditions {
            kbt0: 0.0,
            x_sigma: 0.0,
            ..InitialConditions::default()
        };
        let cfg = EnsembleConfig {
            noise: false,
            scheme: Scheme::Rk4,
            steady_window: 0.2,
            ..quick(2, 1.0)
        };
        let stats = run_ensemble(&p, &ic, &cfg).unwrap();
        assert_relative_eq!(stats.steady.intensity.mean, 0.28125, max_relative = 1e-10);
        assert_relative_eq!(*stats.intensity.last().unwrap(), 0.28125, max_relative = 1e-12);
    }

    #[test]
    fn ensemble_is_reproducible_and_thread_independent() {
        let p = SystemParams {
            delta_a: 180.0,
            delta_c: -40.0,
            eta_l: 60.0,
            ..SystemParams::baseline()
        };
        let cfg = quick(20, 0.5);
        let ic = InitialConditions::default();
        let a = run_ensemble(&p, &ic, &cfg).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| run_ensemble(&p, &ic, &cfg).unwrap());
        assert_eq!(a, b);
        let other = run_ensemble(&p, &ic, &EnsembleConfig { seed: 12, ..cfg }).unwrap();
        assert_ne!(a.e_kin, other.e_kin);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let p = SystemParams {
            delta_a: 10.0,
            ..SystemParams::baseline()
        };
        let ic = InitialConditions::default();
        let bad_window = EnsembleConfig {
            steady_window: 5.0,
            ..quick(1, 1.0)
        };
        assert!(matches!(
            run_ensemble(&p, &ic, &bad_window),
            Err(EnsembleError::InvalidConfig(_))
        ));
        let no_traj = quick(0, 1.0);
        assert!(run_ensemble(&p, &ic, &no_traj).is_err());
        let bad_ic = InitialConditions { kbt0: -1.0, ..ic };
        assert!(run_ensemble(&p, &bad_ic, &quick(1, 1.0)).is_err());
    }

    #[test]
    fn failing_trajectories_abort_the_run() {
        // Γ0 = 6400 ≫ κ makes the noise covariance indefinite once a field builds up
        let p = SystemParams {
            delta_a: 0.0,
            delta_c: 0.0,
            eta_l: 50.0,
            ..SystemParams::baseline()
        };
        let cfg = EnsembleConfig {
            dt: 1e-5,
            sample_stride: 10,
            steady_window: 0.001,
            ..quick(4, 0.002)
        };
        let err = run_ensemble(&p, &InitialConditions::default(), &cfg).unwrap_err();
        assert!(
            matches!(err, EnsembleError::TooManyExclusions { excluded: 4, .. }),
            "{err}"
        );
    }

    #[test]
    fn histogram_of_a_point_ensemble() {
        let p = SystemParams {
            delta_a: 180.0,
            delta_c: -40.0,
            eta_l: 30.0,
            ..SystemParams::baseline()
        };
        let ic = InitialConditions {
            kbt0: 0.0,
            x_sigma: 0.0,
            x_center: 1.0,
            ..InitialConditions::default()
        };
        let cfg = EnsembleConfig {
            noise: false,
            ..quick(10, 0.1)
        };
        let h = position_histogram(&p, &ic, &cfg, 0.0, 16).unwrap();
        assert_eq!(h.total(), 10);
        assert_eq!(h.counts.iter().filter(|&&c| c > 0).count(), 1);
        assert_eq!(h.potential.len(), 16);
        assert!(h.mean_alpha_re_neg.is_none());
    }

    #[test]
    fn histogram_conserves_trajectories() {
        let p = SystemParams {
            delta_a: 180.0,
            delta_c: -40.0,
            eta_l: 80.0,
            ..SystemParams::baseline()
        };
        let cfg = quick(50, 0.5);
        let h = position_histogram(&p, &InitialConditions::default(), &cfg, 0.5, 32).unwrap();
        assert_eq!(h.total() as usize + h.n_excluded, 50);
        assert!(h.bin_edges[0] == 0.0 && (h.bin_edges[32] - TAU).abs() < 1e-12);
        assert!(position_histogram(&p, &InitialConditions::default(), &cfg, 0.6, 32).is_err());
    }
}
