//! Bath model: the spectral-density family and everything derived
//! from it (noise power, autocorrelation, relaxation integral,
//! reorganization energy, damped-exponential mode expansion).
//!
//! Units: hbar = 1 and omega_q = 1 throughout; times are in 1/omega_q
//! and frequencies in omega_q.

pub mod expansion;
pub mod quadrature;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use quadrature::{adaptive, osc_upper, singular_lower, smooth_upper, Quad, QuadTol, Trig};

pub use expansion::{fit_mode_expansion, ExpansionConfig, Mode, ModeExpansion};

use num_complex::Complex64;

/// Parameters of the spectral-density family
/// `J_s(w) = sgn(w) kappa w_ph^(1-s) |w|^s / (1 + (w/w_c)^2)^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BathSpec {
    /// Spectral exponent; s = 1 is Ohmic, s < 1 sub-Ohmic.
    pub s: f64,
    /// Coupling strength; the reference configuration has 2*pi*kappa = 0.04.
    pub kappa: f64,
    /// Cutoff frequency (units of omega_q).
    pub omega_c: f64,
    /// Reference frequency fixing the unit of kappa across exponents.
    pub omega_ph: f64,
    /// Inverse temperature beta*hbar*omega_q (dimensionless).
    pub beta: f64,
}

/// The paper-style reference exponents, from Ohmic to deep sub-Ohmic.
pub const REFERENCE_EXPONENTS: [f64; 5] = [1.0, 0.5, 0.25, 0.125, 1.0 / 14.0];

impl BathSpec {
    pub fn new(s: f64, kappa: f64, omega_c: f64, omega_ph: f64, beta: f64) -> Result<Self> {
        let spec = BathSpec {
            s,
            kappa,
            omega_c,
            omega_ph,
            beta,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Reference configuration: beta = 5, omega_c = 50, omega_ph = 1,
    /// 2*pi*kappa = 0.04.
    pub fn reference(s: f64) -> Self {
        BathSpec {
            s,
            kappa: 0.04 / (2.0 * std::f64::consts::PI),
            omega_c: 50.0,
            omega_ph: 1.0,
            beta: 5.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("s", self.s),
            ("omega_c", self.omega_c),
            ("omega_ph", self.omega_ph),
            ("beta", self.beta),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "bath parameter {name} must be positive and finite, got {v}"
                )));
            }
        }
        // kappa = 0 is a valid decoupled qubit.
        if !(self.kappa >= 0.0) || !self.kappa.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "bath parameter kappa must be nonnegative and finite, got {}",
                self.kappa
            )));
        }
        Ok(())
    }

    /// Spectral density `J_s(omega)`; odd in omega.
    pub fn spectral_density(&self, omega: f64) -> f64 {
        if omega == 0.0 {
            return 0.0;
        }
        omega.signum() * omega.abs().powf(self.s) * self.envelope(omega)
    }

    /// The smooth non-power-law factor `kappa w_ph^(1-s) / (1+(w/w_c)^2)^2`,
    /// so that `J(w) = w^s * envelope(w)` for w > 0.
    #[inline]
    fn envelope(&self, omega: f64) -> f64 {
        let x = omega / self.omega_c;
        self.kappa * self.omega_ph.powf(1.0 - self.s) / (1.0 + x * x).powi(2)
    }

    /// coth(beta*omega/2), stable for small arguments.
    #[inline]
    pub fn coth_half_beta(&self, omega: f64) -> f64 {
        1.0 / (0.5 * self.beta * omega).tanh()
    }

    /// `J(w) coth(beta w / 2)` as `w^(s-1) * thermal_envelope(w)` with a
    /// smooth positive even-extension factor.
    #[inline]
    fn thermal_envelope(&self, omega: f64) -> f64 {
        let x = 0.5 * self.beta * omega;
        // w * coth(beta w / 2) = (2/beta) * x coth x, smooth at 0.
        self.envelope(omega) * (2.0 / self.beta) * (x / x.tanh())
    }

    /// Spectral noise power `S_beta(w) = J(w) / (1 - e^(-beta w))`.
    ///
    /// At w = 0 the analytic limit is used; for s < 1 it diverges and a
    /// typed error is returned so callers must branch explicitly.
    pub fn noise_power(&self, omega: f64) -> Result<f64> {
        if omega == 0.0 {
            if self.s < 1.0 {
                return Err(Error::DivergentAtZeroFrequency { s: self.s });
            }
            if self.s == 1.0 {
                return Ok(self.kappa / self.beta);
            }
            return Ok(0.0);
        }
        Ok(self.spectral_density(omega) / (-(-self.beta * omega).exp_m1()))
    }

    /// Real part of the bath autocorrelation,
    /// `C'(t) = int_0^inf J(w) coth(beta w/2) cos(w t) dw`.
    pub fn correlation_real(&self, t: f64, tol: QuadTol) -> Result<f64> {
        let q = self.spectral_cos_integral(|w| self.thermal_envelope(w), t, tol)?;
        Ok(q.value)
    }

    /// Imaginary part, `C''(t) = -int_0^inf J(w) sin(w t) dw`.
    pub fn correlation_imag(&self, t: f64, tol: QuadTol) -> Result<f64> {
        if t == 0.0 {
            return Ok(0.0);
        }
        let s = self.s;
        let low = singular_lower(s, 1.0, |w| w * self.envelope(w) * (w * t).sin(), tol, t)?;
        let up = osc_upper(|w| w.powf(s) * self.envelope(w), 1.0, t, Trig::Sin, tol)?;
        Ok(-(low.value + up.value))
    }

    /// Complex autocorrelation `C(t) = C'(t) + i C''(t)`, t >= 0.
    pub fn correlation(&self, t: f64, tol: QuadTol) -> Result<Complex64> {
        Ok(Complex64::new(
            self.correlation_real(t, tol)?,
            self.correlation_imag(t, tol)?,
        ))
    }

    /// Relaxation integral `Lbar(t) = int_0^inf (J(w)/w) cos(w t) dw`.
    ///
    /// Satisfies `d Lbar/dt = C''(t)` with `Lbar(0) = lambda` (hbar = 1).
    pub fn relaxation_integral(&self, t: f64, tol: QuadTol) -> Result<f64> {
        let q = self.spectral_cos_integral(|w| self.envelope(w), t, tol)?;
        Ok(q.value)
    }

    /// Reorganization energy `lambda = int_0^inf J(w)/w dw`.
    pub fn reorganization_energy(&self, tol: QuadTol) -> Result<f64> {
        self.relaxation_integral(0.0, tol)
    }

    /// Running integral of the relaxation function,
    /// `int_0^t Lbar(t') dt' = int_0^inf (J(w)/w^2) sin(w t) dw`.
    pub fn relaxation_phase(&self, t: f64, tol: QuadTol) -> Result<f64> {
        if t == 0.0 {
            return Ok(0.0);
        }
        let s = self.s;
        let low = singular_lower(s, 1.0, |w| self.envelope(w) * (w * t).sin() / w, tol, t)?;
        let up = osc_upper(
            |w| w.powf(s - 2.0) * self.envelope(w),
            1.0,
            t,
            Trig::Sin,
            tol,
        )?;
        Ok(low.value + up.value)
    }

    /// Thermal moment `int_0^inf J(w) coth(beta w/2) dw` (= C'(0)); the
    /// exponent of the saturated small-interval CPMG decay is
    /// `dt^2` times this value.
    pub fn thermal_moment(&self, tol: QuadTol) -> Result<f64> {
        self.spectral_cos_integral(|w| self.thermal_envelope(w), 0.0, tol)
            .map(|q| q.value)
    }

    /// `int_0^inf w^(s-1) h(w) cos(w t) dw` for a smooth positive
    /// envelope `h`, split into the desingularized lower part, an
    /// oscillation-aware upper part, and an accelerated or extrapolated
    /// tail.
    fn spectral_cos_integral<H: Fn(f64) -> f64>(&self, h: H, t: f64, tol: QuadTol) -> Result<Quad> {
        let s = self.s;
        if t == 0.0 {
            let low = singular_lower(s, 1.0, &h, tol, 0.0)?;
            let far = 20.0 * self.omega_c;
            let mid = adaptive(|w| w.powf(s - 1.0) * h(w), 1.0, far, tol, None)?;
            let tail = smooth_upper(|w| w.powf(s - 1.0) * h(w), far, tol)?;
            return Ok(low.combine(mid).combine(tail));
        }
        let low = singular_lower(s, 1.0, |w| h(w) * (w * t).cos(), tol, t)?;
        let up = osc_upper(|w| w.powf(s - 1.0) * h(w), 1.0, t, Trig::Cos, tol)?;
        Ok(low.combine(up))
    }

    /// Markov pure-dephasing rate `gamma_pd = 4 pi lim_(w->0) S_beta(w)`;
    /// only finite for s >= 1.
    pub fn markov_dephasing_rate(&self) -> Result<f64> {
        let limit = self.noise_power(0.0)?;
        Ok(4.0 * std::f64::consts::PI * limit)
    }

    /// Windowed moments of the autocorrelation,
    /// `(int_0^T C(t) dt, int_0^T t C(t) dt)`, evaluated on the
    /// spectral side so they are independent of any time-domain
    /// approximation of `C`. Decoherence exponents at long times are
    /// controlled by these integrals, so expansion fits pin them.
    pub fn correlation_window_moments(
        &self,
        t_end: f64,
        tol: QuadTol,
    ) -> Result<(Complex64, Complex64)> {
        if !(t_end > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "moment window must be positive: {t_end}"
            )));
        }
        let s = self.s;
        let far = 20.0 * self.omega_c;

        // Re int C = int Jcoth sin(wT)/w dw.
        let f_re = {
            let low = singular_lower(
                s,
                1.0,
                |w| self.thermal_envelope(w) * (w * t_end).sin() / w,
                tol,
                t_end,
            )?;
            let up = osc_upper(
                |w| w.powf(s - 2.0) * self.thermal_envelope(w),
                1.0,
                t_end,
                Trig::Sin,
                tol,
            )?;
            low.value + up.value
        };
        // Im int C = Lbar-integral identity: -(lambda - Lbar(T)).
        let f_im = self.relaxation_integral(t_end, tol)? - self.reorganization_energy(tol)?;

        // Re int tC = int Jcoth [T sin(wT)/w + (cos(wT) - 1)/w^2] dw.
        let g_re = {
            let low = singular_lower(
                s,
                1.0,
                |w| {
                    self.thermal_envelope(w)
                        * (t_end * (w * t_end).sin() / w + ((w * t_end).cos() - 1.0) / (w * w))
                },
                tol,
                t_end,
            )?;
            let up_sin = osc_upper(
                |w| w.powf(s - 2.0) * self.thermal_envelope(w),
                1.0,
                t_end,
                Trig::Sin,
                tol,
            )?;
            let up_cos = osc_upper(
                |w| w.powf(s - 3.0) * self.thermal_envelope(w),
                1.0,
                t_end,
                Trig::Cos,
                tol,
            )?;
            let flat = adaptive(
                |w| w.powf(s - 3.0) * self.thermal_envelope(w),
                1.0,
                far,
                tol,
                None,
            )?;
            let tail = smooth_upper(|w| w.powf(s - 3.0) * self.thermal_envelope(w), far, tol)?;
            low.value + t_end * up_sin.value + up_cos.value - flat.value - tail.value
        };
        // Im int tC = -int J [sin(wT)/w^2 - T cos(wT)/w] dw.
        let g_im = {
            let low = singular_lower(
                s,
                1.0,
                |w| self.envelope(w) * ((w * t_end).sin() / w - t_end * (w * t_end).cos()),
                tol,
                t_end,
            )?;
            let up_sin = osc_upper(
                |w| w.powf(s - 2.0) * self.envelope(w),
                1.0,
                t_end,
                Trig::Sin,
                tol,
            )?;
            let up_cos = osc_upper(
                |w| w.powf(s - 1.0) * self.envelope(w),
                1.0,
                t_end,
                Trig::Cos,
                tol,
            )?;
            -(low.value + up_sin.value - t_end * up_cos.value)
        };

        Ok((Complex64::new(f_re, f_im), Complex64::new(g_re, g_im)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tol() -> QuadTol {
        QuadTol::default()
    }

    #[test]
    fn spectral_density_reference_values() {
        let spec = BathSpec::reference(1.0);
        // At w = 0 the density vanishes for any s > 0.
        assert_eq!(spec.spectral_density(0.0), 0.0);
        // Direct evaluation at w = 1.
        let kappa = 0.04 / (2.0 * std::f64::consts::PI);
        let expect = kappa / (1.0 + (1.0f64 / 50.0).powi(2)).powi(2);
        assert!((spec.spectral_density(1.0) - expect).abs() < 1e-15);
    }

    #[test]
    fn noise_power_limits() {
        let ohmic = BathSpec::reference(1.0);
        let expect = (0.04 / (2.0 * std::f64::consts::PI)) / 5.0;
        assert!((ohmic.noise_power(0.0).unwrap() - expect).abs() < 1e-15);

        let sub = BathSpec::reference(0.5);
        assert!(matches!(
            sub.noise_power(0.0),
            Err(Error::DivergentAtZeroFrequency { .. })
        ));

        // Cutoff dominance: far above omega_c the power sits below the
        // quartic tail bound kappa (w_c/w)^4 w^s.
        for &s in &REFERENCE_EXPONENTS {
            let spec = BathSpec::reference(s);
            let w = 40.0 * spec.omega_c;
            let bound = spec.kappa * (spec.omega_c / w).powi(4) * w.powf(s);
            assert!(spec.noise_power(w).unwrap() < bound);
        }
    }

    #[test]
    fn markov_rate_reference() {
        let spec = BathSpec::reference(1.0);
        let rate = spec.markov_dephasing_rate().unwrap();
        assert!((rate - 0.016).abs() < 1e-15, "rate {rate}");
        assert!(BathSpec::reference(0.5).markov_dephasing_rate().is_err());

        let mut weak = BathSpec::reference(1.0);
        weak.kappa = 1e-30;
        assert!(weak.markov_dephasing_rate().unwrap() < 1e-25);
    }

    #[test]
    fn correlation_imag_zero_at_origin() {
        for &s in &REFERENCE_EXPONENTS {
            assert_eq!(
                BathSpec::reference(s).correlation_imag(0.0, tol()).unwrap(),
                0.0
            );
        }
    }

    #[test]
    fn reorganization_energy_linear_in_kappa() {
        let spec = BathSpec::reference(0.5);
        let mut double = spec;
        double.kappa *= 2.0;
        let l1 = spec.reorganization_energy(tol()).unwrap();
        let l2 = double.reorganization_energy(tol()).unwrap();
        assert!((l2 - 2.0 * l1).abs() < 1e-12 * l1.abs());
        assert!(l1 > 0.0);
    }

    #[test]
    fn relaxation_integral_at_zero_is_reorganization_energy() {
        for &s in &[1.0, 0.125] {
            let spec = BathSpec::reference(s);
            let lam = spec.reorganization_energy(tol()).unwrap();
            let l0 = spec.relaxation_integral(0.0, tol()).unwrap();
            assert!((lam - l0).abs() <= 1e-12 * lam);
        }
    }

    #[test]
    fn correlation_decays_for_ohmic() {
        let spec = BathSpec::reference(1.0);
        let c0 = spec.correlation(0.0, tol()).unwrap().norm();
        for &t in &[100.0, 150.0] {
            let c = spec.correlation(t, tol()).unwrap().norm();
            assert!(c < 1e-6 * c0, "|C({t})| = {c}, C(0) = {c0}");
        }
    }

    #[test]
    fn serde_roundtrip_is_bit_exact() {
        for &s in &REFERENCE_EXPONENTS {
            let spec = BathSpec::reference(s);
            let json = serde_json::to_string(&spec).unwrap();
            let back: BathSpec = serde_json::from_str(&json).unwrap();
            assert_eq!(spec, back);
            let toml_s = toml::to_string(&spec).unwrap();
            let back2: BathSpec = toml::from_str(&toml_s).unwrap();
            assert_eq!(spec, back2);
        }
    }

    proptest! {
        #[test]
        fn spectral_density_is_odd(
            s in 0.05f64..2.0,
            omega in -100.0f64..100.0,
        ) {
            let spec = BathSpec::reference(s);
            let plus = spec.spectral_density(omega);
            let minus = spec.spectral_density(-omega);
            prop_assert!((plus + minus).abs() <= 1e-15 * plus.abs().max(1e-300));
        }

        #[test]
        fn detailed_balance(
            s in prop::sample::select(REFERENCE_EXPONENTS.to_vec()),
            omega in 0.01f64..10.0,
        ) {
            let spec = BathSpec::reference(s);
            let sp = spec.noise_power(omega).unwrap();
            let sm = spec.noise_power(-omega).unwrap();
            let lhs = sp * (-spec.beta * omega).exp();
            prop_assert!((lhs - sm).abs() <= 1e-9 * sp.abs());
        }
    }
}
