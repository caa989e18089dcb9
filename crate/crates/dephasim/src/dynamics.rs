//! Coherence dynamics: complex traces of the off-diagonal element
//! rho_eg(t) for factorized and correlated initial preparations under
//! any pulse schedule, the mode-propagated and direct 2D-time routes to
//! the decoherence exponent, and a brute-force label-path oracle.

use std::collections::HashMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bath::quadrature::QuadTol;
use crate::bath::{BathSpec, ModeExpansion};
use crate::error::{Error, Result};
use crate::sequence::{
    ramsey_base_integral, ramsey_exponent_with_base, PulseSchedule, SwitchingProfile,
};

/// Qubit frequency in the global units (everything is measured in it).
pub const OMEGA_Q: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialState {
    /// `(|0> + |1>)(<0| + <1|)/2 (x) rho_R,eq`.
    Factorized,
    /// Rotated Boltzmann state of the total Hamiltonian.
    Correlated,
}

/// Sampled complex coherence rho_eg(t) with its preparation metadata.
#[derive(Debug, Clone, Serialize)]
pub struct CoherenceTrace {
    pub times: Vec<f64>,
    pub values: Vec<Complex64>,
    pub schedule: PulseSchedule,
    pub initial: InitialState,
    pub spec: BathSpec,
}

impl CoherenceTrace {
    pub fn magnitudes(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.norm()).collect()
    }
}

/// `1 - exp(-x)` without cancellation for small complex `x`.
#[inline]
fn one_minus_exp_neg(x: Complex64) -> Complex64 {
    if x.norm_sqr() < 1e-6 {
        x * (1.0 - x / 2.0 * (1.0 - x / 3.0 * (1.0 - x / 4.0)))
    } else {
        1.0 - (-x).exp()
    }
}

/// `(x - (1 - exp(-x))) / x^2`, the second-order remainder that enters
/// the same-segment double integral; stable for small `x`.
#[inline]
fn exp_remainder(x: Complex64) -> Complex64 {
    if x.norm_sqr() < 1e-6 {
        0.5 - x / 6.0 * (1.0 - x / 4.0 * (1.0 - x / 5.0))
    } else {
        (x - one_minus_exp_neg(x)) / (x * x)
    }
}

/// Decoherence exponent by the time-domain mode route:
/// `Gamma(t) = Re sum_k d_k A_k(t)` with per-mode accumulators
/// `s_k' = -z_k s_k + v(t)`, `A_k = int v s_k dt`, updated in closed
/// form over each constant-`v` segment of the profile truncated at `t`.
pub fn mode_propagated_exponent(
    expansion: &ModeExpansion,
    profile: &SwitchingProfile,
    t: f64,
) -> Result<f64> {
    if t == 0.0 {
        return Ok(0.0);
    }
    if t > expansion.t_max * (1.0 + 1e-9) {
        return Err(Error::BeyondExpansionHorizon {
            t,
            t_max: expansion.t_max,
        });
    }
    let prof = profile.truncated(t)?;
    let k = expansion.modes.len();
    let mut s = vec![Complex64::new(0.0, 0.0); k];
    let mut a = vec![Complex64::new(0.0, 0.0); k];
    for (lo, hi, v) in prof.segments() {
        let dt = hi - lo;
        for (i, m) in expansion.modes.iter().enumerate() {
            let z = m.pole();
            let x = z * dt;
            let e = (-x).exp();
            let u = one_minus_exp_neg(x) / z;
            a[i] += v * (s[i] * u + v * dt * dt * exp_remainder(x));
            s[i] = s[i] * e + v * u;
        }
    }
    let gamma: Complex64 = expansion
        .modes
        .iter()
        .zip(&a)
        .map(|(m, &ai)| m.amplitude * ai)
        .sum();
    Ok(gamma.re)
}

/// Decoherence exponents at many ascending sample times in a single
/// forward pass over the profile, splitting segments at the sample
/// instants. The exponent is orientation-independent, so no
/// re-orientation per sample is needed; cost is O((segments + samples)
/// * modes) instead of quadratic.
pub fn mode_exponent_profile_samples(
    expansion: &ModeExpansion,
    profile: &SwitchingProfile,
    times: &[f64],
) -> Result<Vec<f64>> {
    let total = profile.total_time();
    check_times(times, total)?;
    if let Some(&last) = times.last() {
        if last > expansion.t_max * (1.0 + 1e-9) {
            return Err(Error::BeyondExpansionHorizon {
                t: last,
                t_max: expansion.t_max,
            });
        }
    }
    let k = expansion.modes.len();
    let mut s = vec![Complex64::new(0.0, 0.0); k];
    let mut a = vec![Complex64::new(0.0, 0.0); k];
    let mut out = Vec::with_capacity(times.len());
    let mut idx = 0;
    while idx < times.len() && times[idx] == 0.0 {
        out.push(0.0);
        idx += 1;
    }
    let advance = |s: &mut [Complex64], a: &mut [Complex64], dt: f64, v: f64| {
        if dt <= 0.0 {
            return;
        }
        for (i, m) in expansion.modes.iter().enumerate() {
            let x = m.pole() * dt;
            let e = (-x).exp();
            let u = one_minus_exp_neg(x) / m.pole();
            a[i] += v * (s[i] * u + v * dt * dt * exp_remainder(x));
            s[i] = s[i] * e + v * u;
        }
    };
    let snapshot = |a: &[Complex64]| -> f64 {
        expansion
            .modes
            .iter()
            .zip(a)
            .map(|(m, &ai)| (m.amplitude * ai).re)
            .sum()
    };
    for (lo, hi, v) in profile.segments() {
        let mut cur = lo;
        while idx < times.len() && times[idx] <= hi * (1.0 + 1e-15) {
            advance(&mut s, &mut a, times[idx] - cur, v);
            cur = times[idx];
            out.push(snapshot(&a));
            idx += 1;
        }
        advance(&mut s, &mut a, hi - cur, v);
    }
    while idx < times.len() {
        // Samples equal to the total duration up to rounding.
        out.push(snapshot(&a));
        idx += 1;
    }
    Ok(out)
}

/// `int v(t') v(t' - tau) dt'` over the overlap of the profile with its
/// own shift; piecewise constant in `t'`, merged breakpoint sweep.
fn switching_autocorrelation(profile: &SwitchingProfile, tau: f64) -> f64 {
    let total = profile.total_time();
    if tau < 0.0 || tau >= total {
        return 0.0;
    }
    let mut events: Vec<f64> = Vec::new();
    for (lo, hi, _) in profile.segments() {
        for e in [lo, hi, lo + tau, hi + tau] {
            if e >= tau - 1e-15 && e <= total + 1e-15 {
                events.push(e);
            }
        }
    }
    events.sort_by(f64::total_cmp);
    events.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
    let mut acc = 0.0;
    for w in events.windows(2) {
        let mid = 0.5 * (w[0] + w[1]);
        acc += profile.value_at(mid) * profile.value_at(mid - tau) * (w[1] - w[0]);
    }
    acc
}

/// Decoherence exponent by direct 2D time quadrature,
/// `Gamma = int_0^T C'(tau) w(tau) dtau` with the switching
/// autocorrelation `w`; the outer integral is split at the kinks of `w`
/// (pairwise breakpoint differences) so every panel is smooth.
pub fn twod_time_exponent(
    spec: &BathSpec,
    profile: &SwitchingProfile,
    tol: QuadTol,
) -> Result<f64> {
    let total = profile.total_time();
    let times: Vec<f64> = std::iter::once(0.0)
        .chain(profile.segments().map(|(_, hi, _)| hi))
        .collect();
    let mut kinks: Vec<f64> = Vec::new();
    for (i, &ti) in times.iter().enumerate() {
        for &tj in &times[i..] {
            kinks.push(tj - ti);
        }
    }
    kinks.sort_by(f64::total_cmp);
    kinks.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    if *kinks.last().unwrap() < total {
        kinks.push(total);
    }

    let inner = QuadTol::new(tol.abs * 1e-2, tol.rel * 1e-2);
    let mut gamma = 0.0;
    for w in kinks.windows(2) {
        if w[1] - w[0] < 1e-13 {
            continue;
        }
        let q = crate::bath::quadrature::adaptive(
            |tau| {
                let c = spec
                    .correlation_real(tau, inner)
                    .expect("inner correlation quadrature");
                c * switching_autocorrelation(profile, tau)
            },
            w[0],
            w[1],
            tol,
            None,
        )?;
        gamma += q.value;
    }
    Ok(gamma)
}

/// Markov-limit pure-dephasing rate `gamma_pd = 4 pi lim S_beta(0)`;
/// typed divergence for s < 1.
pub fn markov_dephasing_rate(spec: &BathSpec) -> Result<f64> {
    spec.markov_dephasing_rate()
}

/// Cache of the relaxation-phase integral `int_0^t Lbar`; breakpoints
/// recur across samples of a trace, so memoizing keeps the correlated
/// state as cheap as the factorized one.
struct PhaseTable<'a> {
    spec: &'a BathSpec,
    tol: QuadTol,
    cache: HashMap<u64, f64>,
}

impl<'a> PhaseTable<'a> {
    fn new(spec: &'a BathSpec, tol: QuadTol) -> Self {
        PhaseTable {
            spec,
            tol,
            cache: HashMap::new(),
        }
    }

    fn get(&mut self, t: f64) -> Result<f64> {
        if let Some(&v) = self.cache.get(&t.to_bits()) {
            return Ok(v);
        }
        let v = self.spec.relaxation_phase(t, self.tol)?;
        self.cache.insert(t.to_bits(), v);
        Ok(v)
    }

    /// `M(t) = int_0^t v(t') Lbar(t') dt'` for a (truncated, oriented)
    /// profile, via exact per-segment differences of the running
    /// integral of Lbar.
    fn shift_integral(&mut self, profile: &SwitchingProfile) -> Result<f64> {
        let mut m = 0.0;
        for (lo, hi, v) in profile.segments() {
            m += v * (self.get(hi)? - self.get(lo)?);
        }
        Ok(m)
    }
}

fn correlated_combination(beta_b: f64, m: f64) -> Complex64 {
    // (e^b e^(-2iM) - e^(-b) e^(2iM)) / (4 cosh b)
    let rot = Complex64::from_polar(1.0, -2.0 * m);
    (beta_b.exp() * rot - (-beta_b).exp() * rot.conj()) / (4.0 * beta_b.cosh())
}

/// Free-induction (Ramsey) trace by the closed-form exponent route.
pub fn ramsey_trace(
    spec: &BathSpec,
    initial: InitialState,
    times: &[f64],
    tol: QuadTol,
) -> Result<CoherenceTrace> {
    check_times(times, f64::INFINITY)?;
    let base = ramsey_base_integral(spec, tol)?;
    let b = 0.5 * spec.beta * OMEGA_Q;
    let mut phase_table = PhaseTable::new(spec, tol);
    let mut values = Vec::with_capacity(times.len());
    for &t in times {
        let gamma = ramsey_exponent_with_base(spec, t, base, tol)?;
        let rotor = Complex64::from_polar((-gamma).exp(), -OMEGA_Q * t);
        let v = match initial {
            InitialState::Factorized => 0.5 * rotor,
            InitialState::Correlated => {
                let m = 2.0 * phase_table.get(t)?;
                rotor * correlated_combination(b, m)
            }
        };
        values.push(v);
    }
    Ok(CoherenceTrace {
        times: times.to_vec(),
        values,
        schedule: PulseSchedule::Ramsey {
            duration: *times.last().unwrap_or(&0.0),
        },
        initial,
        spec: *spec,
    })
}

fn check_times(times: &[f64], total: f64) -> Result<()> {
    if times.is_empty() {
        return Err(Error::InvalidParameter("empty sample grid".into()));
    }
    let mut prev = -1.0;
    for &t in times {
        if !(t >= 0.0) || t > total * (1.0 + 1e-12) {
            return Err(Error::InvalidParameter(format!(
                "sample time {t} outside [0, {total}]"
            )));
        }
        if t <= prev {
            return Err(Error::InvalidParameter(
                "sample times must be ascending".into(),
            ));
        }
        prev = t;
    }
    Ok(())
}

/// Coherence value at one instant of a schedule, shared by
/// [`sequence_trace`] and the path oracle. `t` truncates the schedule:
/// pulses at or after `t` have not fired.
fn coherence_at(
    spec: &BathSpec,
    expansion: &ModeExpansion,
    initial: InitialState,
    full: &SwitchingProfile,
    t: f64,
    phase_table: &mut PhaseTable<'_>,
) -> Result<Complex64> {
    let b = 0.5 * spec.beta * OMEGA_Q;
    if t == 0.0 {
        return Ok(match initial {
            InitialState::Factorized => Complex64::new(0.5, 0.0),
            InitialState::Correlated => Complex64::new(0.5 * b.tanh(), 0.0),
        });
    }
    let prof = full.truncated(t)?.oriented_to_end();
    let gamma = mode_propagated_exponent(expansion, &prof, t)?;
    let phi = OMEGA_Q * prof.signed_duration();
    let rotor = Complex64::from_polar((-gamma).exp(), -phi);
    Ok(match initial {
        InitialState::Factorized => 0.5 * rotor,
        InitialState::Correlated => {
            let m = phase_table.shift_integral(&prof)?;
            rotor * correlated_combination(b, m)
        }
    })
}

/// Whole-dynamics trace of a pulsed schedule; each sample truncates the
/// final pending interval. The decay exponent uses the certified mode
/// expansion, the frequency-shift term exact segment integrals of Lbar.
pub fn sequence_trace(
    spec: &BathSpec,
    expansion: &ModeExpansion,
    initial: InitialState,
    schedule: &PulseSchedule,
    times: &[f64],
    tol: QuadTol,
) -> Result<CoherenceTrace> {
    let full = schedule.profile()?;
    check_times(times, full.total_time())?;
    let mut phase_table = PhaseTable::new(spec, tol);
    let mut values = Vec::with_capacity(times.len());
    for &t in times {
        values.push(coherence_at(
            spec,
            expansion,
            initial,
            &full,
            t,
            &mut phase_table,
        )?);
    }
    Ok(CoherenceTrace {
        times: times.to_vec(),
        values,
        schedule: schedule.clone(),
        initial,
        spec: *spec,
    })
}

const ORACLE_PULSE_LIMIT: usize = 8;

/// Brute-force path sum over all bra/ket label sequences with explicit
/// rotation matrix elements, Boltzmann weights and per-path influence
/// functional. Exponentially sized; refuses beyond 2 CPMG cycles.
pub fn path_sum_oracle(
    spec: &BathSpec,
    expansion: &ModeExpansion,
    initial: InitialState,
    schedule: &PulseSchedule,
    t: f64,
    tol: QuadTol,
) -> Result<Complex64> {
    let pulses = schedule.pulse_count();
    if pulses > ORACLE_PULSE_LIMIT {
        return Err(Error::OracleTooLarge {
            pulses,
            limit: ORACLE_PULSE_LIMIT,
        });
    }
    let full = schedule.profile()?;
    if t == 0.0 {
        let b = 0.5 * spec.beta * OMEGA_Q;
        return Ok(match initial {
            InitialState::Factorized => Complex64::new(0.5, 0.0),
            InitialState::Correlated => Complex64::new(0.5 * b.tanh(), 0.0),
        });
    }
    let prof = full.truncated(t)?;
    let times: Vec<f64> = std::iter::once(0.0)
        .chain(prof.segments().map(|(_, hi, _)| hi))
        .collect();
    let k = times.len() - 1; // segments = label slots

    // R_y(pi/2) and R_y(-pi/2) as prepared/closing matrices.
    let c = std::f64::consts::FRAC_1_SQRT_2;
    let ry_plus = [[c, -c], [c, c]]; // <row| R_y(pi/2) |col>
    let ry_minus = [[c, c], [-c, c]]; // <row| R_y(-pi/2) |col>

    // Boltzmann weights of the bare levels omega_0 = -wq/2, omega_1 = +wq/2.
    let b = 0.5 * spec.beta * OMEGA_Q;
    let z = 2.0 * b.cosh();
    let weights = match initial {
        InitialState::Factorized => [1.0, 0.0],
        InitialState::Correlated => [b.exp() / z, (-b).exp() / z],
    };

    let mut phase_table = PhaseTable::new(spec, tol);
    let mut rho = Complex64::new(0.0, 0.0);
    // Enumerate ket labels a_1..a_k and bra labels b_1..b_k with the
    // measured element fixed to rho_10: a_k = 1, b_k = 0.
    for amask in 0..(1u32 << k) {
        let a: Vec<u32> = (0..k).map(|l| (amask >> l) & 1).collect();
        if a[k - 1] != 1 {
            continue;
        }
        // R_x(pi) = -i sigma_x: only label flips survive; the b side
        // carries R_x(-pi) = +i sigma_x and the phases cancel pairwise.
        if (1..k).any(|l| a[l] == a[l - 1]) {
            continue;
        }
        for bmask in 0..(1u32 << k) {
            let bb: Vec<u32> = (0..k).map(|l| (bmask >> l) & 1).collect();
            if bb[k - 1] != 0 || (1..k).any(|l| bb[l] == bb[l - 1]) {
                continue;
            }
            // (-i)^pulses from the a side, (+i)^pulses from the b side.
            let r_product = 1.0;

            // Free phase sum_l omega_{a_l b_l} * dt_l.
            let mut phi = 0.0;
            let mut vx_times = vec![0.0];
            let mut vx_vals = Vec::with_capacity(k);
            for l in 0..k {
                let dt = times[l + 1] - times[l];
                phi += (a[l] as f64 - bb[l] as f64) * OMEGA_Q * dt;
                vx_times.push(times[l + 1]);
                vx_vals.push(2.0 * (a[l] as f64 - bb[l] as f64));
            }
            let vx = SwitchingProfile::from_parts(vx_times, vx_vals);
            let gamma = mode_propagated_exponent(expansion, &vx, t)?;
            let m = phase_table.shift_integral(&vx)?;

            for (ci, &w) in weights.iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                let prep = ry_plus[a[0] as usize][ci] * ry_minus[ci][bb[0] as usize];
                let corr_sign = match initial {
                    InitialState::Factorized => 0.0,
                    // (-1)^(c+1): -1 for the ground level c = 0.
                    InitialState::Correlated => {
                        if ci == 0 {
                            -1.0
                        } else {
                            1.0
                        }
                    }
                };
                let influence = (-gamma + Complex64::new(0.0, corr_sign * 2.0 * m)).exp();
                rho += w * prep * r_product * Complex64::from_polar(1.0, -phi) * influence;
            }
        }
    }
    Ok(rho)
}
