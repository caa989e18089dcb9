//! Deterministic multi-start nonlinear least squares for the four
//! decay models used to extract coherence-time constants. The linear
//! coefficients are eliminated exactly for each trial of the decay
//! rates (variable projection), so the outer search runs over one or
//! two log-rates only.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FitModel {
    /// `A e^(-Bt) + C e^(-Dt) + E`, time constant `1/D` with `D < B`.
    TwoExp,
    /// `A e^(-Bt) + C e^(-(Dt)^2) + E`, time constant `1/D`.
    ExpPlusGauss,
    /// `a e^(-bt) + c`, time constant `1/b`.
    SingleExp,
    /// `a e^(-(bt)^2) + c`, time constant `1/b`.
    Gaussian,
}

impl FitModel {
    pub fn param_names(&self) -> &'static [&'static str] {
        match self {
            FitModel::TwoExp | FitModel::ExpPlusGauss => &["A", "B", "C", "D", "E"],
            FitModel::SingleExp | FitModel::Gaussian => &["a", "b", "c"],
        }
    }

    fn rate_count(&self) -> usize {
        match self {
            FitModel::TwoExp | FitModel::ExpPlusGauss => 2,
            FitModel::SingleExp | FitModel::Gaussian => 1,
        }
    }

    /// Basis columns (excluding the constant offset) at time `t` for
    /// the given positive rates.
    fn basis(&self, t: f64, rates: &[f64]) -> [f64; 2] {
        match self {
            FitModel::TwoExp => [(-rates[0] * t).exp(), (-rates[1] * t).exp()],
            FitModel::ExpPlusGauss => [(-rates[0] * t).exp(), (-(rates[1] * t).powi(2)).exp()],
            FitModel::SingleExp => [(-rates[0] * t).exp(), 0.0],
            FitModel::Gaussian => [(-(rates[0] * t).powi(2)).exp(), 0.0],
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FitResult {
    pub model: FitModel,
    /// Coefficients in the order given by [`FitModel::param_names`].
    pub params: Vec<f64>,
    /// Sum of squared errors over the supplied samples.
    pub residual: f64,
    /// Extracted time constant (`1/D` resp. `1/b`).
    pub time_constant: f64,
}

/// Solve the linear least-squares subproblem for fixed rates. Returns
/// (amplitudes, offset, sse). With `offset_nonneg`, a negative offset
/// is clamped to zero and the amplitudes refitted.
fn linear_solve(
    model: FitModel,
    samples: &[(f64, f64)],
    rates: &[f64],
    offset_nonneg: bool,
) -> (Vec<f64>, f64, f64) {
    let n = samples.len();
    let k = model.rate_count();
    let build = |with_offset: bool| -> (Vec<f64>, f64, f64) {
        let cols = k + usize::from(with_offset);
        let mut x = DMatrix::zeros(n, cols);
        let mut y = DVector::zeros(n);
        for (i, &(t, v)) in samples.iter().enumerate() {
            let b = model.basis(t, rates);
            for j in 0..k {
                x[(i, j)] = b[j];
            }
            if with_offset {
                x[(i, k)] = 1.0;
            }
            y[i] = v;
        }
        let svd = x.clone().svd(true, true);
        let beta = svd
            .solve(&y, 1e-12)
            .unwrap_or_else(|_| DVector::zeros(cols));
        let sse = (x * &beta - y).norm_squared();
        let offset = if with_offset { beta[k] } else { 0.0 };
        (beta.iter().take(k).copied().collect(), offset, sse)
    };
    let (amps, offset, sse) = build(true);
    if offset_nonneg && offset < 0.0 {
        build(false)
    } else {
        (amps, offset, sse)
    }
}

/// Nelder-Mead over `dim` log-rates. Deterministic, bounded iteration.
fn nelder_mead(
    f: &dyn Fn(&[f64]) -> f64,
    start: &[f64],
    dim: usize,
    max_iter: usize,
) -> (Vec<f64>, f64) {
    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(dim + 1);
    simplex.push(start.to_vec());
    for i in 0..dim {
        let mut p = start.to_vec();
        p[i] += 0.5;
        simplex.push(p);
    }
    let mut values: Vec<f64> = simplex.iter().map(|p| f(p)).collect();
    for _ in 0..max_iter {
        let mut order: Vec<usize> = (0..=dim).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let best = order[0];
        let worst = order[dim];
        let second_worst = order[dim.saturating_sub(1).max(0)];
        let spread: f64 = simplex
            .iter()
            .flat_map(|p| p.iter().zip(&simplex[best]).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if spread < 1e-11
            && (values[worst] - values[best]).abs() <= 1e-15 * (1.0 + values[best].abs())
        {
            break;
        }
        let centroid: Vec<f64> = (0..dim)
            .map(|j| order[..dim].iter().map(|&i| simplex[i][j]).sum::<f64>() / dim as f64)
            .collect();
        let blend = |a: f64| -> Vec<f64> {
            (0..dim)
                .map(|j| centroid[j] + a * (simplex[worst][j] - centroid[j]))
                .collect()
        };
        let reflected = blend(-1.0);
        let fr = f(&reflected);
        if fr < values[best] {
            let expanded = blend(-2.0);
            let fe = f(&expanded);
            if fe < fr {
                simplex[worst] = expanded;
                values[worst] = fe;
            } else {
                simplex[worst] = reflected;
                values[worst] = fr;
            }
        } else if fr < values[second_worst] {
            simplex[worst] = reflected;
            values[worst] = fr;
        } else {
            let contracted = if fr < values[worst] {
                blend(-0.5)
            } else {
                blend(0.5)
            };
            let fc = f(&contracted);
            if fc < values[worst].min(fr) {
                simplex[worst] = contracted;
                values[worst] = fc;
            } else {
                // Shrink toward the best vertex.
                for i in 0..=dim {
                    if i == best {
                        continue;
                    }
                    for j in 0..dim {
                        simplex[i][j] = 0.5 * (simplex[i][j] + simplex[best][j]);
                    }
                    values[i] = f(&simplex[i]);
                }
            }
        }
    }
    let (idx, _) = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .unwrap();
    (simplex[idx].clone(), values[idx])
}

/// Slope-based rate seed: ordinary regression of `ln y` against `t`.
fn log_linear_rate(samples: &[(f64, f64)]) -> f64 {
    let n = samples.len() as f64;
    let (mut st, mut sl, mut stt, mut stl) = (0.0, 0.0, 0.0, 0.0);
    for &(t, y) in samples {
        let l = y.max(1e-300).ln();
        st += t;
        sl += l;
        stt += t * t;
        stl += t * l;
    }
    let denom = n * stt - st * st;
    let span = samples.last().unwrap().0 - samples[0].0;
    let floor = 0.05 / span.max(1e-12);
    if denom.abs() < 1e-300 {
        return floor;
    }
    let slope = (n * stl - st * sl) / denom;
    (-slope).max(floor)
}

fn fit_one_model(
    model: FitModel,
    samples: &[(f64, f64)],
    offset_nonneg: bool,
) -> Result<FitResult> {
    let dim = model.rate_count();
    let b0 = log_linear_rate(samples);
    // Deterministic multi-start: the slow rate brackets the regression
    // estimate, the fast one sits a factor above it.
    let starts: Vec<Vec<f64>> = if dim == 1 {
        [1.0, 0.3, 3.0, 0.1, 10.0]
            .iter()
            .map(|f| vec![(b0 * f).ln()])
            .collect()
    } else {
        [(3.0, 1.0), (10.0, 1.0), (3.0, 0.3), (1.0, 0.3), (30.0, 3.0)]
            .iter()
            .map(|&(fb, fd)| vec![(b0 * fb).ln(), (b0 * fd).ln()])
            .collect()
    };
    let objective = |theta: &[f64]| -> f64 {
        let rates: Vec<f64> = theta.iter().map(|x| x.exp()).collect();
        if rates.iter().any(|r| !r.is_finite()) {
            return f64::INFINITY;
        }
        linear_solve(model, samples, &rates, offset_nonneg).2
    };
    let mut best: Option<(Vec<f64>, f64)> = None;
    for start in &starts {
        let (theta, sse) = nelder_mead(&objective, start, dim, 250 * dim + 250);
        if sse.is_finite() && best.as_ref().map_or(true, |(_, b)| sse < *b) {
            best = Some((theta, sse));
        }
    }
    let (theta, residual) = best.ok_or_else(|| {
        Error::FitFailure(format!(
            "no convergent start for {model:?} over {} samples (seed rate {b0:.3e})",
            samples.len()
        ))
    })?;
    let mut rates: Vec<f64> = theta.iter().map(|x| x.exp()).collect();
    let (mut amps, offset, _) = linear_solve(model, samples, &rates, offset_nonneg);
    // Two-exponential labels obey D < B; the basis is symmetric there,
    // so swap components rather than rely on the optimizer's ordering.
    if model == FitModel::TwoExp && rates[1] > rates[0] {
        rates.swap(0, 1);
        amps.swap(0, 1);
    }
    let (params, time_constant) = match model {
        FitModel::TwoExp | FitModel::ExpPlusGauss => (
            vec![amps[0], rates[0], amps[1], rates[1], offset],
            1.0 / rates[1],
        ),
        FitModel::SingleExp | FitModel::Gaussian => {
            (vec![amps[0], rates[0], offset], 1.0 / rates[0])
        }
    };
    if !time_constant.is_finite() || time_constant <= 0.0 {
        return Err(Error::FitFailure(format!(
            "{model:?} fit produced non-positive time constant {time_constant}"
        )));
    }
    Ok(FitResult {
        model,
        params,
        residual,
        time_constant,
    })
}

/// Fit every candidate model and return the one with the smallest
/// residual, with the time constant extracted per the model's rule.
pub fn fit_time_constant(samples: &[(f64, f64)], models: &[FitModel]) -> Result<FitResult> {
    // Five-parameter models need more support than three-parameter ones
    // (echo-peak series can legitimately be as short as a handful of
    // spacings).
    let min_samples = if models.iter().any(|m| m.rate_count() == 2) {
        8
    } else {
        4
    };
    if samples.len() < min_samples {
        return Err(Error::FitFailure(format!(
            "need at least {min_samples} samples, got {}",
            samples.len()
        )));
    }
    if samples.iter().any(|&(t, y)| !t.is_finite() || !(y > 0.0)) {
        return Err(Error::FitFailure(
            "samples must be finite with positive y".into(),
        ));
    }
    if models.is_empty() {
        return Err(Error::FitFailure("empty model set".into()));
    }
    let mut best: Option<FitResult> = None;
    let mut failures = Vec::new();
    for &m in models {
        match fit_one_model(m, samples, false) {
            Ok(r) => {
                if best.as_ref().map_or(true, |b| r.residual < b.residual) {
                    best = Some(r);
                }
            }
            Err(e) => failures.push(format!("{m:?}: {e}")),
        }
    }
    best.ok_or_else(|| Error::FitFailure(format!("all models failed: {}", failures.join("; "))))
}

/// Single-exponential fit with an optional nonnegativity constraint on
/// the offset; relaxed sample-count floor for short sweep series.
pub(crate) fn fit_single_exp(samples: &[(f64, f64)], offset_nonneg: bool) -> Result<FitResult> {
    if samples.len() < 4 {
        return Err(Error::FitFailure(format!(
            "need at least 4 samples for a single-exponential fit, got {}",
            samples.len()
        )));
    }
    fit_one_model(FitModel::SingleExp, samples, offset_nonneg)
}
