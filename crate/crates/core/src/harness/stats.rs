//! Rank correlation and measure-vs-accuracy binning.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

/// Largest sample size for which the p-value is computed by enumerating
/// every permutation.
pub const EXACT_P_MAX_N: usize = 10;

/// Bonferroni-corrected significance level reported in summaries.
pub const BONFERRONI_ALPHA: f64 = 0.00625;

/// 1-based fractional ranks; tied values share the mean of their ranks.
pub fn fractional_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1..=end
        let shared = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = shared;
        }
        start = end;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)
}

/// Spearman's rho with a two-sided p-value: exact permutation for
/// `n <= 10`, Student-t approximation above.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if x.len() != y.len() {
        return Err(Error::DegenerateInput(format!(
            "length mismatch: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 3 {
        return Err(Error::DegenerateInput(format!(
            "need at least 3 points, got {}",
            x.len()
        )));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::DegenerateInput("non-finite value".into()));
    }
    let constant = |v: &[f64]| v.iter().all(|a| *a == v[0]);
    if constant(x) || constant(y) {
        return Err(Error::DegenerateInput("constant sequence".into()));
    }
    let rx = fractional_ranks(x);
    let ry = fractional_ranks(y);
    let rho = pearson(&rx, &ry);
    let p = if x.len() <= EXACT_P_MAX_N {
        exact_p_value(&rx, &ry, rho)
    } else {
        t_p_value(rho, x.len())
    };
    Ok((rho, p))
}

fn t_p_value(rho: f64, n: usize) -> f64 {
    let df = (n - 2) as f64;
    if rho.abs() >= 1.0 {
        return 0.0;
    }
    let t = rho * (df / (1.0 - rho * rho)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).expect("df > 0");
    (2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0)
}

/// Share of permutations of `ry` whose |rho| reaches the observed |rho|.
///
/// Only the cross product changes between permutations, and each Heap swap
/// touches two terms of it, so it is updated in place. Ranks are multiples
/// of one half, which keeps the running sum exact.
fn exact_p_value(rx: &[f64], ry: &[f64], observed: f64) -> f64 {
    let n = rx.len();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / n as f64;
    let (mx, my) = (mean(rx), mean(ry));
    let a: Vec<f64> = rx.iter().map(|v| v - mx).collect();
    let mut b: Vec<f64> = ry.iter().map(|v| v - my).collect();
    let norm = (a.iter().map(|v| v * v).sum::<f64>() * b.iter().map(|v| v * v).sum::<f64>()).sqrt();
    let threshold = (observed.abs() - 1e-12) * norm;
    let mut dot: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
    let mut hits = u64::from(dot.abs() >= threshold);
    let mut total = 1u64;
    let swap = |b: &mut [f64], i: usize, j: usize, dot: &mut f64| {
        *dot += (a[i] - a[j]) * (b[j] - b[i]);
        b.swap(i, j);
    };
    // Heap's algorithm, iterative form.
    let mut c = vec![0usize; n];
    let mut i = 0;
    while i < n {
        if c[i] < i {
            let j = if i % 2 == 0 { 0 } else { c[i] };
            swap(&mut b, j, i, &mut dot);
            total += 1;
            if dot.abs() >= threshold {
                hits += 1;
            }
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    hits as f64 / total as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    /// Midpoint of the measure range covered by the bin.
    pub measure: f64,
    pub accuracy: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub bins: Vec<Bin>,
    pub rho: f64,
    pub p_value: f64,
    pub n_bins: usize,
    pub n_records: usize,
}

impl CorrelationReport {
    pub fn significant(&self) -> bool {
        self.p_value < BONFERRONI_ALPHA
    }
}

/// Splits `(measure, correct)` points into `n_bins` equal-frequency bins by
/// measure and correlates bin midpoints with bin accuracy.
pub fn bin_and_correlate(points: &[(f64, bool)], n_bins: usize) -> Result<CorrelationReport> {
    if n_bins < 3 {
        return Err(Error::DegenerateInput(format!("need at least 3 bins, got {n_bins}")));
    }
    if points.len() < n_bins {
        return Err(Error::DegenerateInput(format!(
            "{} records cannot fill {n_bins} bins",
            points.len()
        )));
    }
    if points.iter().any(|(m, _)| !m.is_finite()) {
        return Err(Error::DegenerateInput("non-finite measure".into()));
    }
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let base = sorted.len() / n_bins;
    let extra = sorted.len() % n_bins;
    let mut bins = Vec::with_capacity(n_bins);
    let mut start = 0;
    for i in 0..n_bins {
        let size = base + usize::from(i < extra);
        let chunk = &sorted[start..start + size];
        start += size;
        let lo = chunk.first().expect("bins are non-empty").0;
        let hi = chunk.last().expect("bins are non-empty").0;
        let correct = chunk.iter().filter(|(_, ok)| *ok).count();
        bins.push(Bin {
            measure: (lo + hi) / 2.0,
            accuracy: correct as f64 / size as f64,
            count: size,
        });
    }
    let xs: Vec<f64> = bins.iter().map(|b| b.measure).collect();
    let ys: Vec<f64> = bins.iter().map(|b| b.accuracy).collect();
    let (rho, p_value) = spearman(&xs, &ys)?;
    Ok(CorrelationReport {
        bins,
        rho,
        p_value,
        n_bins,
        n_records: points.len(),
    })
}
