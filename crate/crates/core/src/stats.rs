//! Comparison metrics and statistics.
//!
//! Per-objective geometric means summarize a run over its timesteps. Across
//! approaches the means are normalized against the observed best/worst and
//! folded into two scalars:
//!
//! ```text
//! HV = prod_i (1 - norm_i)          higher is better
//! ED = (1/n) * sqrt(sum_i norm_i^2) lower is better
//! ```
//!
//! Significance of paired per-timestep comparisons uses the two-tailed
//! Wilcoxon signed-rank test: the exact sign-flip distribution up to n = 25
//! (midranks for ties), the tie-corrected normal approximation with
//! continuity correction beyond. Effect size is r = |z| / sqrt(n) with the
//! 0.1 / 0.3 / 0.5 category cutoffs.

use thiserror::Error;

/// Floor applied before taking logarithms; observed zeros are clamped here.
pub const GM_EPSILON: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("empty series")]
    EmptySeries,
    #[error("paired series lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least two approaches to normalize, got {0}")]
    TooFewApproaches(usize),
    #[error("objective counts differ across approaches")]
    ObjectiveMismatch,
}

/// Geometric mean with epsilon flooring: `exp(mean(ln(max(v, eps))))`.
pub fn geometric_mean(values: &[f64]) -> Result<f64, StatsError> {
    if values.is_empty() {
        return Err(StatsError::EmptySeries);
    }
    let sum: f64 = values.iter().map(|&v| v.max(GM_EPSILON).ln()).sum();
    Ok((sum / values.len() as f64).exp())
}

/// One approach's per-objective geometric means, all minimized-oriented
/// (maximizing objectives inverted by the caller before summarizing).
#[derive(Debug, Clone)]
pub struct SeriesSummary {
    pub label: String,
    pub gms: Vec<f64>,
}

/// Normalized means plus the two aggregate scores, per approach.
#[derive(Debug, Clone)]
pub struct AggregateScores {
    pub normalized: Vec<Vec<f64>>,
    pub hv: Vec<f64>,
    pub ed: Vec<f64>,
}

/// Normalizes each objective's means against the observed best/worst across
/// the approaches and computes HV and ED. A degenerate axis (best equals
/// worst) contributes neutrally: factor 1 in HV, term 0 in ED.
pub fn aggregate_scores(summaries: &[SeriesSummary]) -> Result<AggregateScores, StatsError> {
    if summaries.len() < 2 {
        return Err(StatsError::TooFewApproaches(summaries.len()));
    }
    let objectives = summaries[0].gms.len();
    if summaries.iter().any(|s| s.gms.len() != objectives) {
        return Err(StatsError::ObjectiveMismatch);
    }
    let mut best = vec![f64::INFINITY; objectives];
    let mut worst = vec![f64::NEG_INFINITY; objectives];
    for s in summaries {
        for (m, &v) in s.gms.iter().enumerate() {
            best[m] = best[m].min(v);
            worst[m] = worst[m].max(v);
        }
    }
    let normalized: Vec<Vec<f64>> = summaries
        .iter()
        .map(|s| {
            s.gms
                .iter()
                .enumerate()
                .map(|(m, &v)| {
                    let span = worst[m] - best[m];
                    if span > 0.0 {
                        (v - best[m]) / span
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    let hv = normalized
        .iter()
        .map(|norm| norm.iter().map(|&x| 1.0 - x).product())
        .collect();
    let ed = normalized
        .iter()
        .map(|norm| {
            let sum: f64 = norm.iter().map(|&x| x * x).sum();
            sum.sqrt() / objectives as f64
        })
        .collect();
    Ok(AggregateScores { normalized, hv, ed })
}

/// Mean fraction of valid solutions over per-timestep final populations.
pub fn valid_fraction(per_timestep: &[f64]) -> Result<f64, StatsError> {
    if per_timestep.is_empty() {
        return Err(StatsError::EmptySeries);
    }
    Ok(per_timestep.iter().sum::<f64>() / per_timestep.len() as f64)
}

// ---------------------------------------------------------------------------
// Wilcoxon signed-rank
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EffectMagnitude {
    Trivial,
    Small,
    Medium,
    Large,
}

impl EffectMagnitude {
    fn from_r(r: f64) -> Self {
        if r < 0.1 {
            EffectMagnitude::Trivial
        } else if r < 0.3 {
            EffectMagnitude::Small
        } else if r < 0.5 {
            EffectMagnitude::Medium
        } else {
            EffectMagnitude::Large
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            EffectMagnitude::Trivial => "trivial",
            EffectMagnitude::Small => "small",
            EffectMagnitude::Medium => "medium",
            EffectMagnitude::Large => "large",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PMethod {
    Exact,
    Normal,
}

#[derive(Debug, Clone)]
pub struct TestResult {
    /// Two-tailed p-value.
    pub p_value: f64,
    /// Effect size r = |z| / sqrt(n).
    pub effect_size: f64,
    pub magnitude: EffectMagnitude,
    /// Sum of ranks of positive differences.
    pub w_statistic: f64,
    /// Pairs remaining after zero-difference removal.
    pub n_used: usize,
    pub method: PMethod,
}

struct RankedDiffs {
    /// Rank (midrank under ties) and sign per non-zero difference.
    ranks: Vec<(f64, bool)>,
    /// Sum over tie groups of t^3 - t.
    tie_term: f64,
}

fn rank_differences(diffs: &[f64]) -> RankedDiffs {
    let mut order: Vec<usize> = (0..diffs.len()).collect();
    order.sort_by(|&a, &b| {
        diffs[a]
            .abs()
            .partial_cmp(&diffs[b].abs())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut ranks = vec![(0.0, false); diffs.len()];
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && diffs[order[j + 1]].abs() == diffs[order[i]].abs() {
            j += 1;
        }
        let midrank = (i + 1 + j + 1) as f64 / 2.0;
        let t = (j - i + 1) as f64;
        if t > 1.0 {
            tie_term += t * t * t - t;
        }
        for &k in &order[i..=j] {
            ranks[k] = (midrank, diffs[k] > 0.0);
        }
        i = j + 1;
    }
    RankedDiffs { ranks, tie_term }
}

/// Exact two-tailed p over the 2^n sign assignments, counting with dynamic
/// programming over doubled (integer) midranks.
fn exact_p(ranks: &[(f64, bool)], w_plus: f64) -> f64 {
    let scaled: Vec<u64> = ranks.iter().map(|(r, _)| (r * 2.0).round() as u64).collect();
    let total: u64 = scaled.iter().sum();
    let mut counts = vec![0.0f64; total as usize + 1];
    counts[0] = 1.0;
    for &r in &scaled {
        for s in (r as usize..counts.len()).rev() {
            counts[s] += counts[s - r as usize];
        }
    }
    let denom = 2f64.powi(ranks.len() as i32);
    let w = (w_plus * 2.0).round() as usize;
    let lo: f64 = counts[..=w].iter().sum::<f64>() / denom;
    let hi: f64 = counts[w..].iter().sum::<f64>() / denom;
    (2.0 * lo.min(hi)).min(1.0)
}

/// Standard normal CDF via the Abramowitz-Stegun 7.1.26 polynomial,
/// |error| < 1.5e-7.
fn normal_cdf(x: f64) -> f64 {
    let t = 1.0 / (1.0 + 0.3275911 * x.abs() / std::f64::consts::SQRT_2);
    let poly = t
        * (0.254829592
            + t * (-0.284496736 + t * (1.421413741 + t * (-1.453152027 + t * 1.061405429))));
    let erf = 1.0 - poly * (-(x / std::f64::consts::SQRT_2).powi(2)).exp();
    if x >= 0.0 {
        0.5 * (1.0 + erf)
    } else {
        0.5 * (1.0 - erf)
    }
}

fn moments(n: usize, tie_term: f64) -> (f64, f64) {
    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
    (mean, var.max(0.0))
}

fn normal_p(n: usize, tie_term: f64, w_plus: f64) -> f64 {
    let (mean, var) = moments(n, tie_term);
    if var <= 0.0 {
        return 1.0;
    }
    // continuity correction toward the mean
    let shifted = if w_plus > mean {
        w_plus - 0.5
    } else if w_plus < mean {
        w_plus + 0.5
    } else {
        w_plus
    };
    let z = (shifted - mean) / var.sqrt();
    (2.0 * (1.0 - normal_cdf(z.abs()))).min(1.0)
}

/// Two-tailed Wilcoxon signed-rank test on paired series. `method` overrides
/// the automatic choice (exact for n <= 25).
pub fn wilcoxon_signed_rank_with(
    x: &[f64],
    y: &[f64],
    method: Option<PMethod>,
) -> Result<TestResult, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.is_empty() {
        return Err(StatsError::EmptySeries);
    }
    let diffs: Vec<f64> = x
        .iter()
        .zip(y.iter())
        .map(|(a, b)| a - b)
        .filter(|d| *d != 0.0)
        .collect();
    if diffs.is_empty() {
        return Ok(TestResult {
            p_value: 1.0,
            effect_size: 0.0,
            magnitude: EffectMagnitude::Trivial,
            w_statistic: 0.0,
            n_used: 0,
            method: PMethod::Exact,
        });
    }
    let n = diffs.len();
    let ranked = rank_differences(&diffs);
    let w_plus: f64 = ranked
        .ranks
        .iter()
        .filter(|(_, pos)| *pos)
        .map(|(r, _)| r)
        .sum();
    let method = method.unwrap_or(if n <= 25 { PMethod::Exact } else { PMethod::Normal });
    let p_value = match method {
        PMethod::Exact => exact_p(&ranked.ranks, w_plus),
        PMethod::Normal => normal_p(n, ranked.tie_term, w_plus),
    };
    // effect size from the (uncorrected) normal deviate
    let (mean, var) = moments(n, ranked.tie_term);
    let z = if var > 0.0 {
        (w_plus - mean) / var.sqrt()
    } else {
        0.0
    };
    let effect_size = z.abs() / (n as f64).sqrt();
    Ok(TestResult {
        p_value,
        effect_size,
        magnitude: EffectMagnitude::from_r(effect_size),
        w_statistic: w_plus,
        n_used: n,
        method,
    })
}

pub fn wilcoxon_signed_rank(x: &[f64], y: &[f64]) -> Result<TestResult, StatsError> {
    wilcoxon_signed_rank_with(x, y, None)
}
