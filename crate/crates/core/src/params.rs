//! Physical parameters, derived cavity couplings and the analytic
//! relations of the adiabatic single-mode model.
//!
//! Everything is expressed in recoil units: `ħ = k = ω_R = 1`, so the
//! particle mass is `m = 1/2`, `ẋ = 2p` and `E_kin = p²`. Positions are in
//! `1/k`, momenta in `ħk`, energies and rates in `ω_R`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Particle mass in recoil units (`ω_R = ħk²/2m = 1`).
pub const MASS: f64 = 0.5;

/// Default averaged squared projection of the spontaneous emission
/// direction onto the cavity axis.
pub const DEFAULT_UBAR_SQ: f64 = 0.4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamsError {
    #[error("parameter `{name}` = {value} is invalid: {reason}")]
    Invalid {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("delta_a = gamma = 0: on-resonance lossless atom has no adiabatic limit")]
    Degenerate,
    #[error("effective detuning is zero: the temperature estimate diverges")]
    ZeroDetuning,
    #[error("g0 = 0: the total intensity normalisation Ω/g0 is undefined")]
    ZeroCoupling,
    #[error("cannot back-compute omega from eta_eff when g0·delta_a = 0")]
    OmegaUndefined,
}

/// How the transverse (atom) pump is specified.
///
/// Scans are naturally parameterised by the effective pump `η_eff`, while the
/// total-intensity observable needs the bare Rabi frequency `Ω`; exactly one of
/// the two is given and the other is derived.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransversePump {
    Omega(f64),
    EtaEff(f64),
}

impl Default for TransversePump {
    fn default() -> Self {
        TransversePump::EtaEff(0.0)
    }
}

/// The complete physical parameter set of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    /// Cavity field decay rate κ.
    pub kappa: f64,
    /// Spontaneous emission rate Γ.
    pub gamma: f64,
    /// Atom-field coupling g0.
    pub g0: f64,
    /// Pump-atom detuning Δa = ω_p − ω_a.
    pub delta_a: f64,
    /// Pump-cavity detuning Δc = ω_p − ω_c.
    pub delta_c: f64,
    /// Longitudinal (mirror) pump amplitude η_l.
    pub eta_l: f64,
    pub pump: TransversePump,
    /// ū², averaged over the spontaneous emission pattern.
    pub ubar_sq: f64,
}

impl SystemParams {
    /// The experimental baseline: κ = 40, Γ = 1, g0 = 80, no pumps.
    pub fn baseline() -> Self {
        SystemParams {
            kappa: 40.0,
            gamma: 1.0,
            g0: 80.0,
            delta_a: 0.0,
            delta_c: 0.0,
            eta_l: 0.0,
            pump: TransversePump::EtaEff(0.0),
            ubar_sq: DEFAULT_UBAR_SQ,
        }
    }

    pub fn validate(&self) -> Result<(), ParamsError> {
        let finite = [
            ("kappa", self.kappa),
            ("gamma", self.gamma),
            ("g0", self.g0),
            ("delta_a", self.delta_a),
            ("delta_c", self.delta_c),
            ("eta_l", self.eta_l),
            ("ubar_sq", self.ubar_sq),
        ];
        for (name, value) in finite {
            if !value.is_finite() {
                return Err(ParamsError::Invalid {
                    name,
                    value,
                    reason: "must be finite",
                });
            }
        }
        let check = |name, value: f64, ok: bool, reason| {
            if ok {
                Ok(())
            } else {
                Err(ParamsError::Invalid { name, value, reason })
            }
        };
        check("kappa", self.kappa, self.kappa > 0.0, "must be > 0")?;
        check("gamma", self.gamma, self.gamma >= 0.0, "must be >= 0")?;
        check("g0", self.g0, self.g0 >= 0.0, "must be >= 0")?;
        check("eta_l", self.eta_l, self.eta_l >= 0.0, "must be >= 0")?;
        check(
            "ubar_sq",
            self.ubar_sq,
            (0.0..=1.0).contains(&self.ubar_sq),
            "must lie in [0, 1]",
        )?;
        match self.pump {
            TransversePump::Omega(omega) => check(
                "omega",
                omega,
                omega.is_finite() && omega >= 0.0,
                "must be finite and >= 0",
            ),
            TransversePump::EtaEff(eta) => check("eta_eff", eta, eta.is_finite(), "must be finite"),
        }
    }

    fn lorentz_denominator(&self) -> Result<f64, ParamsError> {
        let den = self.delta_a * self.delta_a + self.gamma * self.gamma;
        if den > 0.0 {
            Ok(den)
        } else {
            Err(ParamsError::Degenerate)
        }
    }

    /// Bare transverse Rabi frequency Ω, back-computed from η_eff when the
    /// pump was given that way.
    pub fn omega(&self) -> Result<f64, ParamsError> {
        match self.pump {
            TransversePump::Omega(omega) => Ok(omega),
            TransversePump::EtaEff(eta) => {
                if eta == 0.0 {
                    return Ok(0.0);
                }
                let scale = self.g0 * self.delta_a;
                if scale == 0.0 {
                    return Err(ParamsError::OmegaUndefined);
                }
                Ok(eta * self.lorentz_denominator()? / scale)
            }
        }
    }

    /// Returns a copy with the transverse pump given as η_eff.
    pub fn with_eta_eff(mut self, eta_eff: f64) -> Self {
        self.pump = TransversePump::EtaEff(eta_eff);
        self
    }
}

/// Couplings of the adiabatically eliminated atom.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedParams {
    /// Dispersive cavity shift per photon U0.
    pub u0: f64,
    /// Absorptive cavity broadening per photon Γ0.
    pub gamma0: f64,
    /// Effective transverse pump η_eff.
    pub eta_eff: f64,
    /// Excited-state saturation per cavity photon.
    pub s: f64,
}

pub fn derive(p: &SystemParams) -> Result<DerivedParams, ParamsError> {
    p.validate()?;
    let den = p.lorentz_denominator()?;
    let s = p.g0 * p.g0 / den;
    let eta_eff = match p.pump {
        TransversePump::Omega(omega) => omega * p.g0 * p.delta_a / den,
        TransversePump::EtaEff(eta) => eta,
    };
    Ok(DerivedParams {
        u0: s * p.delta_a,
        gamma0: s * p.gamma,
        eta_eff,
        s,
    })
}

/// Intracavity optical potential `U0|α|²cos²x + 2η_eff Re(α) cos x`.
pub fn potential(x: f64, alpha: Complex64, d: &DerivedParams) -> f64 {
    let c = x.cos();
    d.u0 * alpha.norm_sqr() * c * c + 2.0 * d.eta_eff * alpha.re * c
}

/// Dipole force, the exact negative gradient of [`potential`].
pub fn force(x: f64, alpha: Complex64, d: &DerivedParams) -> f64 {
    let (s, c) = x.sin_cos();
    force_sc(s, c, alpha, d)
}

#[inline]
pub(crate) fn force_sc(sin_x: f64, cos_x: f64, alpha: Complex64, d: &DerivedParams) -> f64 {
    2.0 * sin_x * (d.u0 * alpha.norm_sqr() * cos_x + d.eta_eff * alpha.re)
}

/// Effective cavity detuning `Δc − U0 cos²x` seen at position `x`.
pub fn effective_detuning(x: f64, p: &SystemParams, d: &DerivedParams) -> f64 {
    let c = x.cos();
    p.delta_c - d.u0 * c * c
}

/// Stationary cavity amplitude for a particle frozen at `x`, i.e. the fixed
/// point of the noiseless field equation including atomic absorption.
pub fn steady_state_alpha(x: f64, p: &SystemParams, d: &DerivedParams) -> Complex64 {
    let c = x.cos();
    let drive = Complex64::new(p.eta_l, -d.eta_eff * c);
    let den = Complex64::new(p.kappa + d.gamma0 * c * c, -(p.delta_c - d.u0 * c * c));
    drive / den
}

/// Same as [`steady_state_alpha`] but without the `Γ0 cos²x` absorption, which
/// gives the familiar estimate `|α|² = η_l² / (κ² + Δ_eff²)` for a cavity pump.
pub fn steady_state_alpha_simplified(x: f64, p: &SystemParams, d: &DerivedParams) -> Complex64 {
    let c = x.cos();
    let drive = Complex64::new(p.eta_l, -d.eta_eff * c);
    let den = Complex64::new(p.kappa, -(p.delta_c - d.u0 * c * c));
    drive / den
}

/// Cavity-cooling temperature estimate `k_B T = (κ² + Δ_eff²) / (4|Δ_eff|)`.
pub fn predicted_temperature(p: &SystemParams, delta_eff: f64) -> Result<f64, ParamsError> {
    if delta_eff == 0.0 || !delta_eff.is_finite() {
        return Err(ParamsError::ZeroDetuning);
    }
    Ok((p.kappa * p.kappa + delta_eff * delta_eff) / (4.0 * delta_eff.abs()))
}

/// Lower bound of the cavity-cooling temperature, `k_B T_min = κ/2`.
pub fn min_temperature(p: &SystemParams) -> f64 {
    p.kappa / 2.0
}

/// Total intracavity intensity `|α cos x + Ω/g0|²` including the coherently
/// scattered transverse pump.
pub fn total_intensity(x: f64, alpha: Complex64, p: &SystemParams) -> Result<f64, ParamsError> {
    if p.g0 <= 0.0 {
        return Err(ParamsError::ZeroCoupling);
    }
    let omega = p.omega()?;
    Ok((alpha * x.cos() + omega / p.g0).norm_sqr())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    fn params(g0: f64, delta_a: f64, gamma: f64) -> SystemParams {
        SystemParams {
            g0,
            delta_a,
            gamma,
            ..SystemParams::baseline()
        }
    }

    #[test]
    fn derive_blue_baseline() {
        // 6400·180/32401 and 6400/32401.
        let d = derive(&params(80.0, 180.0, 1.0)).unwrap();
        assert_relative_eq!(d.u0, 1_152_000.0 / 32_401.0, max_relative = 1e-15);
        assert_relative_eq!(d.u0, 35.554458, max_relative = 1e-7);
        assert_relative_eq!(d.gamma0, 0.197525, max_relative = 1e-5);
        assert_relative_eq!(d.s, 0.197525, max_relative = 1e-5);
    }

    #[test]
    fn derive_on_resonance() {
        let mut p = params(80.0, 0.0, 1.0);
        p.pump = TransversePump::Omega(10.0);
        let d = derive(&p).unwrap();
        assert_eq!(d.u0, 0.0);
        assert_eq!(d.eta_eff, 0.0);
        assert_eq!(d.gamma0, 6400.0);
    }

    #[test]
    fn derive_friction_scale() {
        let d = derive(&params(3.0, 3.0, 1.0)).unwrap();
        assert_relative_eq!(d.u0, 2.7, max_relative = 1e-14);
        assert_relative_eq!(d.gamma0, 0.9, max_relative = 1e-14);
        assert_relative_eq!(d.s, 0.9, max_relative = 1e-14);
    }

    #[test]
    fn derive_rejects_degenerate_atom() {
        assert_eq!(derive(&params(80.0, 0.0, 0.0)), Err(ParamsError::Degenerate));
    }

    #[test]
    fn derive_rejects_bad_invariants() {
        let mut p = SystemParams::baseline();
        p.kappa = 0.0;
        assert!(matches!(
            derive(&p),
            Err(ParamsError::Invalid { name: "kappa", .. })
        ));
        let mut p = params(80.0, 10.0, 1.0);
        p.ubar_sq = 1.5;
        assert!(matches!(
            derive(&p),
            Err(ParamsError::Invalid { name: "ubar_sq", .. })
        ));
    }

    #[test]
    fn eta_eff_from_omega_and_back() {
        let mut p = params(80.0, 180.0, 1.0);
        p.pump = TransversePump::Omega(30.0);
        let d = derive(&p).unwrap();
        assert_relative_eq!(d.eta_eff, 30.0 * 80.0 * 180.0 / 32_401.0, max_relative = 1e-15);
        let q = p.with_eta_eff(d.eta_eff);
        assert_relative_eq!(q.omega().unwrap(), 30.0, max_relative = 1e-14);
    }

    #[test]
    fn potential_examples() {
        let d = derive(&params(80.0, 180.0, 1.0)).unwrap();
        assert_eq!(potential(1.234, Complex64::new(0.0, 0.0), &d), 0.0);
        assert!(potential(FRAC_PI_2, Complex64::new(3.0, -2.0), &d).abs() < 1e-12);
        assert_relative_eq!(
            potential(0.0, Complex64::new(0.5, 0.0), &d),
            8.888_614,
            max_relative = 1e-6
        );
    }

    #[test]
    fn force_examples() {
        let d = derive(&params(80.0, 180.0, 1.0)).unwrap();
        let a = Complex64::new(0.7, 0.3);
        assert_eq!(force(0.0, a, &d), 0.0);
        assert!(force(FRAC_PI_2, a, &d).abs() < 1e-12);
        let unit = DerivedParams {
            u0: 1.0,
            gamma0: 0.0,
            eta_eff: 0.0,
            s: 0.0,
        };
        assert_relative_eq!(
            force(FRAC_PI_4, Complex64::new(1.0, 0.0), &unit),
            1.0,
            max_relative = 1e-15
        );
    }

    #[test]
    fn force_matches_finite_difference() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let d = DerivedParams {
            u0: 35.5,
            gamma0: 0.2,
            eta_eff: -12.0,
            s: 0.2,
        };
        let h = 1e-6;
        for _ in 0..100 {
            let x: f64 = rng.random_range(-10.0..10.0);
            let a = Complex64::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
            let fd = -(potential(x + h, a, &d) - potential(x - h, a, &d)) / (2.0 * h);
            let f = force(x, a, &d);
            // relative to the force scale at this amplitude
            let scale = d.u0 * a.norm_sqr() + 2.0 * d.eta_eff.abs() * a.re.abs();
            assert!((f - fd).abs() <= 1e-8 * scale.max(f.abs()), "x={x} f={f} fd={fd}");
        }
    }

    #[test]
    fn steady_state_examples() {
        let mut p = params(80.0, 180.0, 1.0);
        p.eta_l = 30.0;
        p.delta_c = -40.0;
        let d = derive(&p).unwrap();
        assert_relative_eq!(
            steady_state_alpha(FRAC_PI_2, &p, &d).norm_sqr(),
            0.28125,
            max_relative = 1e-12
        );
        // 900 / ((40 + Γ0)² + (40 + U0)²), evaluated at 30 digits
        assert_relative_eq!(
            steady_state_alpha(0.0, &p, &d).norm_sqr(),
            0.122_878_349_132_293_25,
            max_relative = 1e-12
        );
        p.eta_l = 0.0;
        assert_eq!(steady_state_alpha(0.3, &p, &d).norm_sqr(), 0.0);
    }

    #[test]
    fn simplified_steady_state_is_lorentzian() {
        let mut p = params(80.0, 180.0, 1.0);
        p.eta_l = 30.0;
        p.delta_c = -40.0;
        let d = derive(&p).unwrap();
        for x in [0.0, 0.4, 1.0, 2.5] {
            let de = effective_detuning(x, &p, &d);
            let expected = p.eta_l * p.eta_l / (p.kappa * p.kappa + de * de);
            assert_relative_eq!(
                steady_state_alpha_simplified(x, &p, &d).norm_sqr(),
                expected,
                max_relative = 1e-13
            );
        }
    }

    #[test]
    fn temperature_examples() {
        let p = SystemParams::baseline();
        assert_eq!(predicted_temperature(&p, -40.0).unwrap(), 20.0);
        assert_eq!(predicted_temperature(&p, -80.0).unwrap(), 25.0);
        assert_eq!(min_temperature(&p), 20.0);
        assert_eq!(predicted_temperature(&p, 0.0), Err(ParamsError::ZeroDetuning));
    }

    #[test]
    fn total_intensity_examples() {
        let mut p = params(80.0, 180.0, 1.0);
        p.pump = TransversePump::Omega(30.0);
        let ratio = 30.0 / 80.0;
        // destructive interference
        let x: f64 = 0.3;
        let a = Complex64::new(-ratio / x.cos(), 0.0);
        assert!(total_intensity(x, a, &p).unwrap() < 1e-28);
        assert_relative_eq!(
            total_intensity(FRAC_PI_2, Complex64::new(5.0, 1.0), &p).unwrap(),
            ratio * ratio,
            max_relative = 1e-12
        );
        p.pump = TransversePump::Omega(0.0);
        let a = Complex64::new(0.4, -0.9);
        assert_relative_eq!(
            total_intensity(x, a, &p).unwrap(),
            a.norm_sqr() * x.cos().powi(2),
            max_relative = 1e-14
        );
        p.g0 = 0.0;
        assert_eq!(total_intensity(x, a, &p), Err(ParamsError::ZeroCoupling));
    }

    fn residual(x: f64, p: &SystemParams, d: &DerivedParams) -> f64 {
        let a = steady_state_alpha(x, p, d);
        let c = x.cos();
        let rate = Complex64::new(-(p.kappa + d.gamma0 * c * c), p.delta_c - d.u0 * c * c);
        let drift = rate * a + Complex64::new(p.eta_l, -d.eta_eff * c);
        drift.norm() / (p.eta_l.abs() + d.eta_eff.abs()).max(1.0)
    }

    proptest! {
        #[test]
        fn derived_identities(g0 in 0.0..200.0f64, da in -500.0..500.0f64, gamma in 0.0..10.0f64) {
            prop_assume!(da * da + gamma * gamma > 1e-6);
            let d = derive(&params(g0, da, gamma)).unwrap();
            prop_assert!((d.gamma0 - d.s * gamma).abs() <= 1e-15 * d.gamma0.abs().max(1e-300));
            prop_assert!((d.u0 - d.s * da).abs() <= 1e-15 * d.u0.abs().max(1e-300));
            prop_assert!(d.gamma0 >= 0.0 && d.s >= 0.0);
            if g0 > 0.0 && da != 0.0 {
                prop_assert_eq!(d.u0.signum(), da.signum());
            }
        }

        #[test]
        fn steady_state_zeroes_drift(
            x in -10.0..10.0f64,
            da in -300.0..300.0f64,
            dc in -200.0..200.0f64,
            eta_l in 0.0..150.0f64,
            eta_eff in -150.0..150.0f64,
        ) {
            prop_assume!(da.abs() > 1e-3);
            let mut p = params(80.0, da, 1.0);
            p.delta_c = dc;
            p.eta_l = eta_l;
            p.pump = TransversePump::EtaEff(eta_eff);
            let d = derive(&p).unwrap();
            prop_assert!(residual(x, &p, &d) < 1e-12);
        }

        #[test]
        fn temperature_bounded_below(kappa in 0.1..100.0f64, de in -500.0..500.0f64) {
            prop_assume!(de != 0.0);
            let p = SystemParams { kappa, ..SystemParams::baseline() };
            let t = predicted_temperature(&p, de).unwrap();
            prop_assert!(t >= min_temperature(&p) * (1.0 - 1e-15));
        }
    }

    #[test]
    fn temperature_minimum_only_at_kappa() {
        let p = SystemParams::baseline();
        assert_eq!(predicted_temperature(&p, 40.0).unwrap(), min_temperature(&p));
        assert!(predicted_temperature(&p, 40.1).unwrap() > min_temperature(&p));
        assert!(predicted_temperature(&p, -39.9).unwrap() > min_temperature(&p));
    }
}
