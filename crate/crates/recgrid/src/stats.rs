//! Paired comparison statistics: percentile bootstrap, paired t, Wilcoxon
//! signed-rank (exact up to n = 20, normal approximation with tie-corrected
//! variance above), both Cohen's d variants, Cliff's delta, win/loss/tie
//! buckets, and accuracy histograms.

use crate::error::{Error, Result};
use crate::seeding::{rng_for, SeedPart};
use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

// ── Bootstrap ───────────────────────────────────────────────────────────

/// Percentile bootstrap CI of the mean of `diffs`: resample with
/// replacement `b` times, take the (1-level)/2 and 1-(1-level)/2 empirical
/// percentiles of the resampled means. Deterministic given `seed`.
pub fn bootstrap_ci(diffs: &[f64], b: usize, level: f64, seed: u64) -> Result<(f64, f64)> {
    if diffs.is_empty() {
        return Err(Error::InvalidInput("bootstrap on empty vector".into()));
    }
    if b == 0 {
        return Err(Error::InvalidInput("bootstrap needs at least 1 resample".into()));
    }
    if !(0.0 < level && level < 1.0) {
        return Err(Error::InvalidInput(format!(
            "confidence level must lie in (0, 1), got {level}"
        )));
    }
    let n = diffs.len();
    let mut rng = rng_for(seed, &[SeedPart::Str("bootstrap")]);
    let mut means = Vec::with_capacity(b);
    for _ in 0..b {
        let mut sum = 0.0;
        for _ in 0..n {
            sum += diffs[rng.gen_range(0..n)];
        }
        means.push(sum / n as f64);
    }
    means.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let alpha = (1.0 - level) / 2.0;
    Ok((percentile(&means, alpha), percentile(&means, 1.0 - alpha)))
}

/// Linear-interpolation percentile of a sorted slice (R type 7).
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let frac = pos - lo as f64;
    if lo + 1 >= n {
        sorted[n - 1]
    } else {
        sorted[lo] * (1.0 - frac) + sorted[lo + 1] * frac
    }
}

// ── Paired t ────────────────────────────────────────────────────────────

/// Two-sided paired t-test on d = x - y.
pub fn paired_t(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    check_paired(x, y)?;
    let n = x.len();
    if n < 2 {
        return Err(Error::InvalidInput("paired t needs n >= 2".into()));
    }
    let d: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    if var == 0.0 {
        return Err(Error::DegenerateInput(
            "paired differences have zero variance".into(),
        ));
    }
    let t = mean / (var.sqrt() / (n as f64).sqrt());
    let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .map_err(|e| Error::InvalidInput(e.to_string()))?;
    let p = 2.0 * (1.0 - dist.cdf(t.abs()));
    Ok((t, p.clamp(0.0, 1.0)))
}

// ── Wilcoxon signed-rank ────────────────────────────────────────────────

/// How zero differences are treated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZeroPolicy {
    /// Wilcoxon's original method: discard zero differences.
    Drop,
    /// Pratt: rank zeros with the rest, then discard their contribution.
    Pratt,
}

/// Two-sided Wilcoxon signed-rank test with zero differences dropped.
/// Returns (W, p) with W = min(W+, W-). Exact enumeration for n <= 20.
pub fn wilcoxon_signed_rank(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    wilcoxon_signed_rank_with(x, y, ZeroPolicy::Drop)
}

pub fn wilcoxon_signed_rank_with(
    x: &[f64],
    y: &[f64],
    policy: ZeroPolicy,
) -> Result<(f64, f64)> {
    check_paired(x, y)?;
    if x.is_empty() {
        return Err(Error::InvalidInput("wilcoxon needs n >= 1".into()));
    }
    let d: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    let nonzero: Vec<f64> = d.iter().copied().filter(|v| *v != 0.0).collect();
    if nonzero.is_empty() {
        return Err(Error::DegenerateInput("all paired differences are zero".into()));
    }

    // doubled average ranks stay integral under ties
    let (signs, ranks2): (Vec<f64>, Vec<u64>) = match policy {
        ZeroPolicy::Drop => {
            let abs: Vec<f64> = nonzero.iter().map(|v| v.abs()).collect();
            let r2 = doubled_ranks(&abs);
            (nonzero.iter().map(|v| v.signum()).collect(), r2)
        }
        ZeroPolicy::Pratt => {
            let abs: Vec<f64> = d.iter().map(|v| v.abs()).collect();
            let r2 = doubled_ranks(&abs);
            let mut signs = Vec::new();
            let mut kept = Vec::new();
            for (v, r) in d.iter().zip(r2) {
                if *v != 0.0 {
                    signs.push(v.signum());
                    kept.push(r);
                }
            }
            (signs, kept)
        }
    };

    let w_plus2: u64 = signs
        .iter()
        .zip(&ranks2)
        .filter(|(s, _)| **s > 0.0)
        .map(|(_, r)| *r)
        .sum();
    let total2: u64 = ranks2.iter().sum();
    let w_minus2 = total2 - w_plus2;
    let w = w_plus2.min(w_minus2) as f64 / 2.0;

    let n = ranks2.len();
    let p = if n <= 20 {
        exact_two_sided_p(&ranks2, w_plus2)
    } else {
        // W+ = sum r_i B_i with B_i ~ Bernoulli(1/2): mean sum(r)/2,
        // var sum(r^2)/4 (this form absorbs tie corrections)
        let mean = total2 as f64 / 2.0 / 2.0;
        let var = ranks2.iter().map(|&r| (r as f64 / 2.0).powi(2)).sum::<f64>() / 4.0;
        let z = (w - mean + 0.5) / var.sqrt();
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        (2.0 * normal.cdf(z)).clamp(0.0, 1.0)
    };
    Ok((w, p))
}

/// Average ranks of `values`, doubled so ties (.5 ranks) stay integral.
fn doubled_ranks(values: &[f64]) -> Vec<u64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
    let mut ranks = vec![0u64; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // positions i+1..=j+1 share the average rank; doubled it is i+j+2
        let doubled = (i + j + 2) as u64;
        for &idx in &order[i..=j] {
            ranks[idx] = doubled;
        }
        i = j + 1;
    }
    ranks
}

/// Exact two-sided p via the null distribution of W+ built by dynamic
/// programming over the rank multiset: p = min(1, 2 min(P(W+ <= w), P(W+ >= w))).
fn exact_two_sided_p(ranks2: &[u64], w_plus2: u64) -> f64 {
    let total: u64 = ranks2.iter().sum();
    let mut counts = vec![0.0f64; total as usize + 1];
    counts[0] = 1.0;
    let mut reach = 0usize;
    for &r in ranks2 {
        let r = r as usize;
        reach += r;
        for s in (r..=reach).rev() {
            counts[s] += counts[s - r];
        }
    }
    let denom = 2f64.powi(ranks2.len() as i32);
    let below: f64 = counts[..=w_plus2 as usize].iter().sum();
    let above: f64 = counts[w_plus2 as usize..].iter().sum();
    (2.0 * (below.min(above)) / denom).min(1.0)
}

// ── Effect sizes ────────────────────────────────────────────────────────

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct CohensD {
    /// (mean(y) - mean(x)) / pooled sd, n-1 variances.
    pub pooled: f64,
    /// mean(y - x) / sd(y - x); None when the differences are constant.
    pub paired: Option<f64>,
}

pub fn cohens_d(x: &[f64], y: &[f64]) -> Result<CohensD> {
    if x.len() < 2 || y.len() < 2 {
        return Err(Error::InvalidInput("cohens_d needs n >= 2 per sample".into()));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let var = |v: &[f64], m: f64| v.iter().map(|a| (a - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64;
    let (mx, my) = (mean(x), mean(y));
    let (vx, vy) = (var(x, mx), var(y, my));
    let pooled_var = ((x.len() - 1) as f64 * vx + (y.len() - 1) as f64 * vy)
        / (x.len() + y.len() - 2) as f64;
    if pooled_var == 0.0 {
        return Err(Error::DegenerateInput("zero pooled standard deviation".into()));
    }
    let pooled = (my - mx) / pooled_var.sqrt();

    let paired = if x.len() == y.len() {
        let d: Vec<f64> = y.iter().zip(x).map(|(b, a)| b - a).collect();
        let md = mean(&d);
        let vd = var(&d, md);
        (vd > 0.0).then(|| md / vd.sqrt())
    } else {
        None
    };
    Ok(CohensD { pooled, paired })
}

/// Cliff's delta over all cross pairs, computed by sorting x and binary
/// searching each y (O((n+m) log n)).
pub fn cliffs_delta(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::InvalidInput("cliffs_delta needs non-empty samples".into()));
    }
    let mut sorted = x.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    let mut net = 0i64;
    for &v in y {
        let lt = sorted.partition_point(|&a| a < v); // x values below v
        let le = sorted.partition_point(|&a| a <= v);
        let gt = n - le; // x values above v
        net += lt as i64 - gt as i64;
    }
    Ok(net as f64 / (n as f64 * y.len() as f64))
}

// ── Win/loss/tie buckets ────────────────────────────────────────────────

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WinLossTie {
    /// y beats x beyond tolerance.
    pub wins: usize,
    /// both within tolerance of 1.
    pub both_one: usize,
    /// both within tolerance of 0.
    pub both_zero: usize,
    /// tied elsewhere.
    pub other_tie: usize,
    /// x beats y beyond tolerance.
    pub losses: usize,
}

impl WinLossTie {
    pub fn total(&self) -> usize {
        self.wins + self.both_one + self.both_zero + self.other_tie + self.losses
    }
}

pub fn win_loss_tie(x: &[f64], y: &[f64], tol: f64) -> Result<WinLossTie> {
    check_paired(x, y)?;
    if tol < 0.0 {
        return Err(Error::InvalidInput("tolerance must be non-negative".into()));
    }
    let mut out = WinLossTie::default();
    for (&a, &b) in x.iter().zip(y) {
        if (b - a).abs() <= tol {
            if (a - 1.0).abs() <= tol && (b - 1.0).abs() <= tol {
                out.both_one += 1;
            } else if a.abs() <= tol && b.abs() <= tol {
                out.both_zero += 1;
            } else {
                out.other_tie += 1;
            }
        } else if b > a {
            out.wins += 1;
        } else {
            out.losses += 1;
        }
    }
    Ok(out)
}

// ── Histogram ───────────────────────────────────────────────────────────

/// Equal-width bins over [0, 1]; the value 1.0 lands in the last bin.
pub fn histogram(values: &[f64], bins: usize) -> Result<Vec<usize>> {
    if bins == 0 {
        return Err(Error::InvalidInput("histogram needs at least one bin".into()));
    }
    let mut counts = vec![0usize; bins];
    for &v in values {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::InvalidInput(format!(
                "histogram value {v} outside [0, 1]"
            )));
        }
        let idx = ((v * bins as f64) as usize).min(bins - 1);
        counts[idx] += 1;
    }
    Ok(counts)
}

fn check_paired(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::Contract(format!(
            "paired vectors differ in length: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    Ok(())
}
