//! Measurements on a canonical MPS and the two spectral fits.

use std::ops::RangeInclusive;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::models::Model;
use crate::mps::{close, transfer_left, Environments, LocalOp, SymmetricMps};
use crate::scalar::Field;

#[derive(Debug, Error, PartialEq)]
pub enum FitError {
    #[error("need at least {need} points in the fit window, got {got}")]
    TooFewPoints { need: usize, got: usize },
    #[error("value {value} at position {index} is not positive and finite")]
    NonPositive { index: usize, value: f64 },
    #[error("window {start}..={end} is outside 1..={max}")]
    Window { start: usize, end: usize, max: usize },
    #[error("the data show no decay")]
    Flat,
}

/// `⟨H⟩/⟨ψ|ψ⟩` from onsite and coupling terms.
pub fn energy<T: Field>(mps: &SymmetricMps<T>, model: &Model) -> f64 {
    let env = Environments::new(mps);
    let basis = mps.basis();
    let onsite = LocalOp::<T>::new(basis, &model.onsite());
    let couplings: Vec<(LocalOp<T>, LocalOp<T>)> = model
        .coupling_terms()
        .iter()
        .map(|(a, b)| (LocalOp::new(basis, a), LocalOp::new(basis, b)))
        .collect();
    let mut e = 0.0;
    for j in 0..mps.len() {
        e += env.string(mps, j, [Some(&onsite)]).re();
        if j + 1 < mps.len() {
            for (a, b) in &couplings {
                e += env.string(mps, j, [Some(a), Some(b)]).re();
            }
        }
    }
    e / env.norm_squared()
}

/// `⟨X_k X_k'⟩` over all component spins, `k = j·W + i` (`W = 1` for the chain).
pub fn correlation_matrix<T: Field>(mps: &SymmetricMps<T>, model: &Model) -> Array2<f64> {
    let env = Environments::new(mps);
    let norm = env.norm_squared();
    let basis = mps.basis();
    let raw = model.order_operators();
    let w = raw.len();
    let ops: Vec<LocalOp<T>> = raw.iter().map(|o| LocalOp::new(basis, o)).collect();
    let products: Vec<Vec<LocalOp<T>>> = raw
        .iter()
        .map(|a| raw.iter().map(|b| LocalOp::new(basis, &a.dot(b))).collect())
        .collect();
    let l = mps.len();
    let mut corr = Array2::zeros((l * w, l * w));
    for j in 0..l {
        for i in 0..w {
            for i2 in 0..w {
                corr[[j * w + i, j * w + i2]] = env.string(mps, j, [Some(&products[i][i2])]).re() / norm;
            }
            let mut e = transfer_left(&env.left[j], mps.site(j), Some(&ops[i]));
            for k in j + 1..l {
                for i2 in 0..w {
                    let t = transfer_left(&e, mps.site(k), Some(&ops[i2]));
                    let v = close(&t, &env.right[k + 1]).re() / norm;
                    corr[[j * w + i, k * w + i2]] = v;
                    corr[[k * w + i2, j * w + i]] = v;
                }
                if k + 1 < l {
                    e = transfer_left(&e, mps.site(k), None);
                }
            }
        }
    }
    corr
}

/// `M = sqrt(Σ_{k≠k'} ⟨X_k X_k'⟩ / N(N−1))`.
pub fn magnetization_from(corr: &Array2<f64>) -> f64 {
    let n = corr.nrows();
    if n < 2 {
        return 0.0;
    }
    let off: f64 = corr.sum() - corr.diag().sum();
    let m2 = off / (n * (n - 1)) as f64;
    if m2 < 0.0 {
        if m2 < -1e-12 {
            log::warn!("negative magnetization radicand {m2:e} clamped to zero");
        }
        return 0.0;
    }
    m2.sqrt()
}

pub fn magnetization<T: Field>(mps: &SymmetricMps<T>, model: &Model) -> f64 {
    magnetization_from(&correlation_matrix(mps, model))
}

/// Central half of the chain, `⌊L/4⌋ ≤ j < ⌊3L/4⌋`.
pub fn bulk_window(length: usize) -> std::ops::Range<usize> {
    let lo = length / 4;
    let hi = (3 * length / 4).max(lo + 1);
    lo..hi
}

/// `C_r` for `r = 0..L`: bulk average of `⟨X_{i,j} X_{i,j+r}⟩` over bulk
/// sites `j` and components `i`. Pairs running off the chain count as zero
/// against a fixed denominator.
pub fn correlation_function(corr: &Array2<f64>, length: usize, components: usize) -> Vec<f64> {
    let bulk = bulk_window(length);
    let denom = (bulk.len() * components) as f64;
    (0..length)
        .map(|r| {
            let mut acc = 0.0;
            for j in bulk.clone() {
                if j + r >= length {
                    continue;
                }
                for i in 0..components {
                    acc += corr[[j * components + i, (j + r) * components + i]];
                }
            }
            acc / denom
        })
        .collect()
}

/// `ξ̄ = sqrt(Σ_{r>1}(r−1)²C_r / Σ_{r>1}C_r)`; `None` when undefined.
pub fn correlation_length_from(c: &[f64]) -> Option<f64> {
    let (mut num, mut den) = (0.0, 0.0);
    for (r, &v) in c.iter().enumerate().skip(2) {
        let k = (r - 1) as f64;
        num += k * k * v;
        den += v;
    }
    if !(den > 0.0) || num < 0.0 {
        return None;
    }
    Some((num / den).sqrt())
}

pub fn correlation_length<T: Field>(mps: &SymmetricMps<T>, model: &Model) -> Option<f64> {
    let c = correlation_function(&correlation_matrix(mps, model), model.length(), model.components());
    correlation_length_from(&c)
}

/// `−Σ w ln w` with `w = λ²/Σλ²` over all sectors.
pub fn entropy(lambda: &[Array1<f64>]) -> f64 {
    let total: f64 = lambda.iter().flat_map(|l| l.iter()).map(|x| x * x).sum();
    if !(total > 0.0) {
        return 0.0;
    }
    lambda
        .iter()
        .flat_map(|l| l.iter())
        .map(|x| x * x / total)
        .filter(|&w| w > 0.0)
        .map(|w| -w * w.ln())
        .sum()
}

/// `S_N(j)` for the interior bonds `j = 1..L−1`.
pub fn entropy_profile<T: Field>(mps: &SymmetricMps<T>) -> Vec<f64> {
    (1..mps.len()).map(|k| entropy(mps.lambda(k))).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FitParams {
    /// `σ_k ≈ (C1·k + C2)^(−γ)`.
    PowerLaw { c1: f64, c2: f64, gamma: f64 },
    /// `S(j) ≈ a + (c/6)·ln((L/π)·sin(πj/L))`.
    Calabrese { a: f64, c: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: FitParams,
    /// Root-mean-square residual, in log σ for the power law.
    pub rms: f64,
    /// First and last index used (k for spectra, j for entropies).
    pub window: (usize, usize),
}

impl FitResult {
    pub fn gamma(&self) -> Option<f64> {
        match self.params {
            FitParams::PowerLaw { gamma, .. } => Some(gamma),
            _ => None,
        }
    }

    pub fn central_charge(&self) -> Option<f64> {
        match self.params {
            FitParams::Calabrese { c, .. } => Some(c),
            _ => None,
        }
    }
}

/// Least-squares line; returns (intercept, slope, rms).
fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let icpt = my - slope * mx;
    let rss: f64 = x.iter().zip(y).map(|(a, b)| (b - icpt - slope * a).powi(2)).sum();
    (icpt, slope, (rss / n).sqrt())
}

/// Fit `σ_k ≈ (C1·k + C2)^(−γ)` for `k = 1..n` by a 1-D search over
/// `c = C2/C1` with linear regression of `ln σ` on `ln(k + c)` inside.
/// With `two_d` set, `C2 = 0`.
pub fn powerlaw_fit(sigma: &[f64], two_d: bool) -> Result<FitResult, FitError> {
    if sigma.len() < 4 {
        return Err(FitError::TooFewPoints {
            need: 4,
            got: sigma.len(),
        });
    }
    if let Some((index, &value)) = sigma.iter().enumerate().find(|(_, v)| !(**v > 0.0 && v.is_finite())) {
        return Err(FitError::NonPositive { index, value });
    }
    let y: Vec<f64> = sigma.iter().map(|v| v.ln()).collect();
    let eval = |c: f64| {
        let x: Vec<f64> = (1..=sigma.len()).map(|k| (k as f64 + c).ln()).collect();
        linear_fit(&x, &y)
    };
    let c_of = |t: f64| -1.0 + 10f64.powf(t);
    let c = if two_d {
        0.0
    } else {
        let grid: Vec<f64> = (0..=240).map(|i| -6.0 + 0.05 * i as f64).collect();
        let scores: Vec<f64> = grid.iter().map(|&t| eval(c_of(t)).2).collect();
        let best = (0..grid.len())
            .min_by(|&a, &b| scores[a].total_cmp(&scores[b]))
            .expect("non-empty grid");
        let (mut lo, mut hi) = (grid[best.saturating_sub(1)], grid[(best + 1).min(grid.len() - 1)]);
        let phi = (5f64.sqrt() - 1.0) / 2.0;
        let mut t1 = hi - phi * (hi - lo);
        let mut t2 = lo + phi * (hi - lo);
        let (mut f1, mut f2) = (eval(c_of(t1)).2, eval(c_of(t2)).2);
        while hi - lo > 1e-13 {
            if f1 <= f2 {
                hi = t2;
                t2 = t1;
                f2 = f1;
                t1 = hi - phi * (hi - lo);
                f1 = eval(c_of(t1)).2;
            } else {
                lo = t1;
                t1 = t2;
                f1 = f2;
                t2 = lo + phi * (hi - lo);
                f2 = eval(c_of(t2)).2;
            }
        }
        let t = 0.5 * (lo + hi);
        if eval(c_of(t)).2 <= scores[best] {
            c_of(t)
        } else {
            c_of(grid[best])
        }
    };
    let (alpha, beta, rms) = eval(c);
    if !(beta.abs() > 1e-300) {
        return Err(FitError::Flat);
    }
    let gamma = -beta;
    let c1 = (alpha / beta).exp();
    Ok(FitResult {
        params: FitParams::PowerLaw { c1, c2: c * c1, gamma },
        rms,
        window: (1, sigma.len()),
    })
}

/// Fit window for a sector spectrum: the first `chi_s` values, dropping
/// anything below `1e-13`.
pub fn powerlaw_window(values: &[f64], chi_s: usize) -> Vec<f64> {
    values.iter().take(chi_s).copied().filter(|&v| v >= 1e-13).collect()
}

/// Linear regression of `S(j)` on `ln((L/π)·sin(πj/L))` over `window`;
/// `profile[j−1]` is the entropy of bond `j`.
pub fn calabrese_fit(profile: &[f64], length: usize, window: RangeInclusive<usize>) -> Result<FitResult, FitError> {
    let (start, end) = (*window.start(), *window.end());
    let max = length.saturating_sub(1).min(profile.len());
    if start < 1 || end > max || start > end {
        return Err(FitError::Window { start, end, max });
    }
    if end - start + 1 < 3 {
        return Err(FitError::TooFewPoints {
            need: 3,
            got: end - start + 1,
        });
    }
    let lf = length as f64;
    let x: Vec<f64> = window
        .clone()
        .map(|j| ((lf / std::f64::consts::PI) * (std::f64::consts::PI * j as f64 / lf).sin()).ln())
        .collect();
    let y: Vec<f64> = window.map(|j| profile[j - 1]).collect();
    let (a, slope, rms) = linear_fit(&x, &y);
    Ok(FitResult {
        params: FitParams::Calabrese { a, c: 6.0 * slope },
        rms,
        window: (start, end),
    })
}

/// Default entropy fit window: bonds `⌈L/8⌉ ..= L − ⌈L/8⌉`.
pub fn calabrese_window(length: usize) -> RangeInclusive<usize> {
    let edge = length.div_ceil(8).max(1);
    edge..=length.saturating_sub(edge).max(edge)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BondSpectrum {
    pub bond: usize,
    pub even: Vec<f64>,
    pub odd: Vec<f64>,
}

impl BondSpectrum {
    pub fn sector(&self, s: usize) -> &[f64] {
        if s == 0 {
            &self.even
        } else {
            &self.odd
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservableReport {
    pub energy: f64,
    pub energy_per_site: f64,
    pub magnetization: f64,
    pub correlation_length: Option<f64>,
    /// `C_r`, `r = 0..L`.
    pub correlations: Vec<f64>,
    /// Natural-log entropies of bonds `1..L`.
    pub entropy: Vec<f64>,
    pub spectra: Vec<BondSpectrum>,
}

/// All observables of a canonical state.
pub fn measure<T: Field>(mps: &SymmetricMps<T>, model: &Model) -> ObservableReport {
    let corr = correlation_matrix(mps, model);
    let correlations = correlation_function(&corr, model.length(), model.components());
    let e = energy(mps, model);
    ObservableReport {
        energy: e,
        energy_per_site: e / model.length() as f64,
        magnetization: magnetization_from(&corr),
        correlation_length: correlation_length_from(&correlations),
        correlations,
        entropy: entropy_profile(mps),
        spectra: mps
            .spectra()
            .into_iter()
            .enumerate()
            .map(|(i, [even, odd])| BondSpectrum { bond: i + 1, even, odd })
            .collect(),
    }
}
