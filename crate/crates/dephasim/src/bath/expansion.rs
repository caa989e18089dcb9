//! Damped-exponential expansion of the bath autocorrelation,
//! `C(t) ~= sum_k d_k exp(-(gamma_k + i w_k) t)`, fitted by a
//! multi-window matrix pencil with global amplitude least squares and
//! certified a posteriori on a dense grid disjoint from the fit grid.

use nalgebra::{Complex, DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::quadrature::QuadTol;
use super::BathSpec;
use crate::error::{Error, Result};
use crate::parallel::par_map;

/// One damped complex exponential `d * exp(-(gamma + i*freq) t)`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Mode {
    pub amplitude: Complex64,
    /// Decay rate gamma_k >= 0.
    pub decay: f64,
    /// Signed oscillation frequency w_k.
    pub frequency: f64,
}

impl Mode {
    #[inline]
    pub fn pole(&self) -> Complex64 {
        Complex64::new(self.decay, self.frequency)
    }

    #[inline]
    fn eval(&self, t: f64) -> Complex64 {
        self.amplitude * (-self.pole() * t).exp()
    }
}

/// Certified expansion of `C(t)` on `[0, t_max]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModeExpansion {
    pub modes: Vec<Mode>,
    pub t_max: f64,
    /// Requested ceiling on `max |C - sum| / |C(0)|`.
    pub tol: f64,
    /// Achieved value of the same ratio on the certification grid.
    pub certified_error: f64,
}

impl ModeExpansion {
    /// Evaluate the expansion; times beyond the certified horizon are a
    /// typed error rather than a silent extrapolation.
    pub fn eval(&self, t: f64) -> Result<Complex64> {
        if t > self.t_max * (1.0 + 1e-9) {
            return Err(Error::BeyondExpansionHorizon {
                t,
                t_max: self.t_max,
            });
        }
        Ok(self.eval_unchecked(t))
    }

    #[inline]
    pub fn eval_unchecked(&self, t: f64) -> Complex64 {
        self.modes.iter().map(|m| m.eval(t)).sum()
    }

    /// `C(0) = sum_k d_k`.
    pub fn at_zero(&self) -> Complex64 {
        self.modes.iter().map(|m| m.amplitude).sum()
    }
}

/// Fit controls; defaults match the reference configuration.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ExpansionConfig {
    pub tol: f64,
    pub k_max: usize,
    pub t_max: f64,
}

impl Default for ExpansionConfig {
    fn default() -> Self {
        ExpansionConfig {
            tol: 1e-4,
            k_max: 64,
            t_max: 200.0,
        }
    }
}

/// Signal poles of uniform samples `y_n = sum d_k z_k^n` by the matrix
/// pencil method, returned as `(gamma, freq)` pairs for the continuous
/// pole `z = exp(-(gamma + i freq) dt)`.
fn matrix_pencil(y: &[Complex64], dt: f64, max_poles: usize) -> Vec<(f64, f64)> {
    let n = y.len();
    if n < 8 {
        return Vec::new();
    }
    let l = ((n as f64 * 0.4) as usize).clamp(4, n - 4);
    let rows = n - l;
    let h = DMatrix::from_fn(rows, l + 1, |i, j| y[i + j]);
    let svd = h.svd(false, true);
    let smax = svd.singular_values[0];
    if !(smax > 0.0) {
        return Vec::new();
    }
    let p = svd
        .singular_values
        .iter()
        .filter(|&&sv| sv > smax * 1e-11)
        .count()
        .clamp(1, max_poles.min(rows.saturating_sub(1)).max(1));
    let vt = svd.v_t.expect("requested V^T");
    let v = vt.rows(0, p).adjoint(); // (l+1) x p, right singular vectors
    let v1 = v.rows(0, l).into_owned();
    let v2 = v.rows(1, l).into_owned();
    let Ok(a) = v1.svd(true, true).solve(&v2, smax * 1e-13) else {
        return Vec::new();
    };

    // nalgebra has no complex eigensolver; embed A = R + iI as the real
    // matrix [[R, -I], [I, R]] whose spectrum is eig(A) plus conjugates.
    let b = DMatrix::from_fn(2 * p, 2 * p, |i, j| {
        let (bi, bj) = (i % p, j % p);
        match (i / p, j / p) {
            (0, 0) | (1, 1) => a[(bi, bj)].re,
            (0, 1) => -a[(bi, bj)].im,
            _ => a[(bi, bj)].im,
        }
    });
    let eig = b.complex_eigenvalues();

    let mut out = Vec::new();
    for lam in eig.iter() {
        let z = Complex64::new(lam.re, lam.im);
        let r = z.norm();
        if !(r > 1e-200) || r > 1.0 + 1e-6 {
            continue;
        }
        let log = z.ln();
        let gamma = (-log.re / dt).max(1e-9);
        let freq = -log.im / dt;
        out.push((gamma, freq));
    }
    out
}

fn push_dedup(pool: &mut Vec<(f64, f64)>, cand: (f64, f64)) {
    let near = pool.iter().any(|&(g, w)| {
        (cand.1 - w).abs() < 1e-4 * (1.0 + w.abs())
            && (cand.0 - g).abs() < 1e-3 * (1.0 + g.abs().max(cand.0.abs()))
    });
    if !near {
        pool.push(cand);
    }
}

/// Soft equality constraints on integrated quantities of the
/// expansion: the windowed moments `int_0^T C` and `int_0^T t C`.
/// Pointwise residuals below the certification tolerance can still
/// integrate to a sizable bias over a long horizon, which is exactly
/// what long-time decoherence exponents are sensitive to; these rows
/// pin that bias down.
struct MomentConstraints {
    t_max: f64,
    zeroth: Complex64,
    first: Complex64,
}

impl MomentConstraints {
    fn new(zeroth: Complex64, first: Complex64, t_max: f64) -> Self {
        MomentConstraints {
            t_max,
            zeroth,
            first,
        }
    }

    /// `int_0^T e^(-zt) dt` and `int_0^T t e^(-zt) dt`.
    fn basis(&self, z: Complex64) -> (Complex64, Complex64) {
        let x = z * self.t_max;
        if x.norm() < 1e-3 {
            let t = self.t_max;
            (
                t * (1.0 - x / 2.0 + x * x / 6.0),
                t * t * (0.5 - x / 3.0 + x * x / 8.0),
            )
        } else {
            let e = (-x).exp();
            ((1.0 - e) / z, (1.0 - e * (1.0 + x)) / (z * z))
        }
    }
}

/// Weighted complex least squares for the amplitudes on the fit grid,
/// with column equilibration and SVD truncation.
fn solve_amplitudes(
    freqs: &[(f64, f64)],
    grid: &[(f64, Complex64)],
    weights: &[f64],
    moments: Option<&MomentConstraints>,
) -> Option<Vec<Complex64>> {
    let (n, k) = (grid.len(), freqs.len());
    if k == 0 || n < k {
        return None;
    }
    let extra = if moments.is_some() { 2 } else { 0 };
    // Scale the constraint rows to a fixed multiple of the typical data
    // row so that they steer the solution without drowning the
    // pointwise fit in the SVD truncation.
    let (w0, w1) = if let Some(m) = moments {
        let data_fro: f64 = grid
            .iter()
            .enumerate()
            .map(|(i, &(t, _))| {
                freqs
                    .iter()
                    .map(|&(g, _)| (weights[i] * (-g * t).exp()).powi(2))
                    .sum::<f64>()
            })
            .sum::<f64>()
            .sqrt();
        let row_target = 30.0 * data_fro / (n as f64).sqrt();
        let norm_of = |pick0: bool| -> f64 {
            freqs
                .iter()
                .map(|&(g, w)| {
                    let (b0, b1) = m.basis(Complex64::new(g, w));
                    if pick0 {
                        b0.norm_sqr()
                    } else {
                        b1.norm_sqr()
                    }
                })
                .sum::<f64>()
                .sqrt()
        };
        (
            row_target / norm_of(true).max(1e-300),
            row_target / norm_of(false).max(1e-300),
        )
    } else {
        (0.0, 0.0)
    };
    let mut a = DMatrix::from_fn(n + extra, k, |i, j| {
        let z = Complex::new(freqs[j].0, freqs[j].1);
        if i < n {
            Complex::from(weights[i]) * (-z * grid[i].0).exp()
        } else {
            let (b0, b1) = moments.unwrap().basis(z);
            if i == n {
                b0 * w0
            } else {
                b1 * w1
            }
        }
    });
    let mut scale = vec![1.0f64; k];
    for j in 0..k {
        let nrm = a.column(j).norm();
        if nrm > 0.0 {
            scale[j] = nrm;
            let inv = Complex::from(1.0 / nrm);
            a.column_mut(j).iter_mut().for_each(|v| *v *= inv);
        }
    }
    let rhs = DVector::from_fn(n + extra, |i, _| {
        if i < n {
            Complex::from(weights[i]) * grid[i].1
        } else {
            let m = moments.unwrap();
            if i == n {
                m.zeroth * w0
            } else {
                m.first * w1
            }
        }
    });
    let svd = a.svd(true, true);
    let eps = svd.singular_values[0] * 1e-11;
    let x = svd.solve(&rhs, eps).ok()?;
    Some((0..k).map(|j| x[j] / scale[j]).collect())
}

fn assemble(freqs: &[(f64, f64)], amps: &[Complex64]) -> Vec<Mode> {
    freqs
        .iter()
        .zip(amps)
        .map(|(&(g, w), &d)| Mode {
            amplitude: d,
            decay: g,
            frequency: w,
        })
        .collect()
}

fn max_residual(modes: &[Mode], grid: &[(f64, Complex64)]) -> f64 {
    grid.iter()
        .map(|&(t, c)| {
            let s: Complex64 = modes.iter().map(|m| m.eval(t)).sum();
            (c - s).norm()
        })
        .fold(0.0, f64::max)
}

fn sample_correlation(spec: &BathSpec, ts: &[f64]) -> Result<Vec<(f64, Complex64)>> {
    let tol = QuadTol::new(1e-11, 1e-10);
    let vals = par_map(ts, |&t| spec.correlation(t, tol));
    ts.iter()
        .zip(vals)
        .map(|(&t, v)| v.map(|c| (t, c)))
        .collect()
}

/// Fit a certified damped-exponential expansion of the autocorrelation
/// of `spec` on `[0, t_max]`.
pub fn fit_mode_expansion(spec: &BathSpec, cfg: &ExpansionConfig) -> Result<ModeExpansion> {
    if !(cfg.tol > 0.0) || cfg.k_max == 0 || !(cfg.t_max > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "expansion config must have positive tol/t_max and k_max >= 1: {cfg:?}"
        )));
    }

    // Fit windows: ultra-short/short/medium/full span, uniformly sampled.
    let windows: Vec<(f64, usize)> = vec![
        (cfg.t_max * 5e-4, 240),
        (cfg.t_max * 0.01, 240),
        (cfg.t_max * 0.12, 240),
        (cfg.t_max, 400),
    ];
    let mut win_samples = Vec::new();
    let mut fit_grid: Vec<(f64, Complex64)> = Vec::new();
    for &(hi, n) in &windows {
        let dt = hi / (n - 1) as f64;
        let ts: Vec<f64> = (0..n).map(|i| i as f64 * dt).collect();
        let samples = sample_correlation(spec, &ts)?;
        fit_grid.extend(samples.iter().copied());
        win_samples.push((dt, samples));
    }

    // Certification grid: offset uniform plus log-spaced short times,
    // disjoint from the fit grid.
    let mut cert_ts: Vec<f64> = (0..1600)
        .map(|i| (i as f64 + 0.37) / 1600.0 * cfg.t_max)
        .collect();
    let lo: f64 = 1e-3 * cfg.t_max.min(1.0);
    let hi = cfg.t_max * 0.013;
    cert_ts.extend((0..400).map(|i| lo * (hi / lo).powf((i as f64 + 0.5) / 400.0)));
    let cert_grid = sample_correlation(spec, &cert_ts)?;

    let c0 = spec.correlation(0.0, QuadTol::new(1e-12, 1e-11))?.norm();
    let target = cfg.tol * c0;

    // Soft constraint rows only need ~1e-6 relative accuracy, but use
    // the tightest tolerance the oscillatory moment integrals can
    // certify: 1e-11 relative is reachable for short horizons, not for
    // t_max = 200, where the fallback still leaves plenty of margin.
    let (m0, m1) = spec
        .correlation_window_moments(cfg.t_max, QuadTol::new(1e-12, 1e-11))
        .or_else(|_| spec.correlation_window_moments(cfg.t_max, QuadTol::new(1e-10, 1e-9)))
        .or_else(|_| spec.correlation_window_moments(cfg.t_max, QuadTol::new(1e-8, 1e-7)))?;
    let constraints = MomentConstraints::new(m0, m1, cfg.t_max);

    let mut best: Option<(f64, Vec<Mode>)> = None;
    let weights = vec![1.0f64; fit_grid.len()];

    // Non-oscillatory content (thermal poles, cutoff poles, power-law
    // branch cut) lives on a ladder of real decay rates; the pencil
    // only has to supply corrections on top of it.
    let ladder_of = |n: usize| -> Vec<(f64, f64)> {
        let gmin = 0.25 / cfg.t_max;
        let gmax = 4.0 * spec.omega_c;
        (0..n)
            .map(|i| (gmin * (gmax / gmin).powf(i as f64 / (n - 1) as f64), 0.0))
            .collect()
    };

    // The first pass solves with the moment-constraint rows; if their
    // bias pull leaves the pointwise fit uncertifiable (the rows
    // compete for mode capacity on deep sub-Ohmic baths), further
    // passes run without them and with a denser rate ladder. An
    // unconstrained fit that certifies does so far below `tol`, which
    // bounds the integrated-moment drift the constraints exist to
    // control, so the fallback is safe.
    for (constraints_opt, ladder_n) in [
        (Some(&constraints), 32),
        (None, 32),
        (Some(&constraints), 44),
        (None, 44),
    ] {
        let ladder = ladder_of(ladder_n);
        let mut modes: Vec<Mode> = Vec::new();
        for _round in 0..6 {
            // Restart the pool from the surviving modes so rejected
            // candidates do not accumulate across rounds.
            let mut freqs: Vec<(f64, f64)> = modes.iter().map(|m| (m.decay, m.frequency)).collect();
            for &g in &ladder {
                push_dedup(&mut freqs, g);
            }
            for (dt, samples) in &win_samples {
                let resid: Vec<Complex64> = samples
                    .iter()
                    .map(|&(t, c)| c - modes.iter().map(|m| m.eval(t)).sum::<Complex64>())
                    .collect();
                let peak = resid.iter().map(|r| r.norm()).fold(0.0, f64::max);
                if peak < 0.05 * target {
                    continue;
                }
                for cand in matrix_pencil(&resid, *dt, 24) {
                    push_dedup(&mut freqs, cand);
                }
            }

            let Some(mut amps) = solve_amplitudes(&freqs, &fit_grid, &weights, constraints_opt)
            else {
                continue;
            };
            // Drop modes that can never matter, then re-solve once.
            let floor = 1e-3 * target;
            let kept: Vec<(f64, f64)> = freqs
                .iter()
                .zip(&amps)
                .filter(|(_, d)| d.norm() > floor)
                .map(|(&f, _)| f)
                .collect();
            if kept.len() != freqs.len() && !kept.is_empty() {
                if let Some(a2) = solve_amplitudes(&kept, &fit_grid, &weights, constraints_opt) {
                    freqs = kept;
                    amps = a2;
                }
            }
            // Enforce the mode budget, ranking by RMS contribution on the
            // grid (raw amplitude over-ranks fast modes that only matter
            // near t = 0).
            if freqs.len() > cfg.k_max {
                let score: Vec<f64> = freqs
                    .iter()
                    .zip(&amps)
                    .map(|(&(g, _), d)| {
                        let e2: f64 = fit_grid.iter().map(|&(t, _)| (-2.0 * g * t).exp()).sum();
                        d.norm() * e2.sqrt()
                    })
                    .collect();
                let mut idx: Vec<usize> = (0..freqs.len()).collect();
                idx.sort_by(|&i, &j| score[j].total_cmp(&score[i]));
                idx.truncate(cfg.k_max);
                idx.sort_unstable();
                let trimmed: Vec<(f64, f64)> = idx.iter().map(|&i| freqs[i]).collect();
                if let Some(a2) = solve_amplitudes(&trimmed, &fit_grid, &weights, constraints_opt) {
                    freqs = trimmed;
                    amps = a2;
                }
            }
            modes = assemble(&freqs, &amps);

            let err = max_residual(&modes, &cert_grid);
            if std::env::var_os("DEPHASIM_EXPANSION_DEBUG").is_some() {
                let (t_at, _) = cert_grid
                    .iter()
                    .map(|&(t, c)| {
                        (
                            t,
                            (c - modes.iter().map(|m| m.eval(t)).sum::<Complex64>()).norm(),
                        )
                    })
                    .max_by(|a, b| a.1.total_cmp(&b.1))
                    .unwrap();
                eprintln!(
                "round {_round} (moments: {}, ladder: {ladder_n}): K={} err={err:.3e} target={target:.3e} argmax t={t_at:.4}",
                constraints_opt.is_some(),
                modes.len()
            );
            }
            if best.as_ref().map_or(true, |(e, _)| err < *e) {
                best = Some((err, modes.clone()));
            }
            if err <= target {
                return Ok(ModeExpansion {
                    modes,
                    t_max: cfg.t_max,
                    tol: cfg.tol,
                    certified_error: err / c0,
                });
            }
        }
    }

    let (err, _) = best.unwrap_or((f64::INFINITY, Vec::new()));
    Err(Error::ExpansionTolerance {
        tol: cfg.tol,
        k_max: cfg.k_max,
        achieved: err / c0,
    })
}
