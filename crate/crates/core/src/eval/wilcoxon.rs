use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest number of non-zero differences for which the null distribution
/// is computed exactly.
pub const EXACT_MAX_N: usize = 25;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Alternative {
    /// `a` tends to be larger than `b`.
    #[default]
    Greater,
    Less,
    TwoSided,
}

/// Treatment of zero differences.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ZeroMethod {
    /// Drop zeros before ranking.
    #[default]
    Wilcox,
    /// Rank zeros with the rest, then drop them.
    Pratt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestMethod {
    Exact,
    Normal,
    /// Every difference was zero.
    Degenerate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// Number of non-zero differences.
    pub n: usize,
    /// Sum of ranks of the positive differences.
    pub w_plus: f64,
    pub p_value: f64,
    pub method: TestMethod,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

/// Average ranks (1-based) of `values`, ties sharing the mean rank.
fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j + 2) as f64 / 2.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Number of sign patterns reaching each doubled rank sum.
fn null_counts(doubled: &[u64]) -> Vec<u64> {
    let total: u64 = doubled.iter().sum();
    let mut counts = vec![0u64; total as usize + 1];
    counts[0] = 1;
    let mut reach = 0usize;
    for &r in doubled {
        let r = r as usize;
        for s in (0..=reach).rev() {
            let c = counts[s];
            if c != 0 {
                counts[s + r] += c;
            }
        }
        reach += r;
    }
    counts
}

fn normal_sf(z: f64) -> f64 {
    0.5 * libm::erfc(z / std::f64::consts::SQRT_2)
}

/// Paired signed-rank test on `d = a - b`.
///
/// Up to [`EXACT_MAX_N`] non-zero differences the p-value comes from the
/// exact distribution of the positive rank sum over all `2ⁿ` sign patterns
/// (ties keep their average ranks). Beyond that a normal approximation with
/// tie-corrected variance and continuity correction is used.
pub fn wilcoxon_signed_rank(
    a: &[f64],
    b: &[f64],
    alternative: Alternative,
    zero_method: ZeroMethod,
) -> Result<WilcoxonResult> {
    if a.len() != b.len() {
        return Err(Error::Usage(format!(
            "paired samples differ in length: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::Usage("Wilcoxon test of zero pairs".into()));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    if d.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("non-finite paired difference".into()));
    }
    let (diffs, ranks): (Vec<f64>, Vec<f64>) = match zero_method {
        ZeroMethod::Wilcox => {
            let nz: Vec<f64> = d.iter().copied().filter(|&x| x != 0.0).collect();
            let r = midranks(&nz.iter().map(|x| x.abs()).collect::<Vec<_>>());
            (nz, r)
        }
        ZeroMethod::Pratt => {
            let r = midranks(&d.iter().map(|x| x.abs()).collect::<Vec<_>>());
            d.iter().zip(r).filter(|(x, _)| **x != 0.0).map(|(&x, r)| (x, r)).unzip()
        }
    };
    let n = diffs.len();
    if n == 0 {
        return Ok(WilcoxonResult {
            n: 0,
            w_plus: 0.0,
            p_value: 1.0,
            method: TestMethod::Degenerate,
            z: None,
            warning: Some("all paired differences are zero".into()),
        });
    }
    let w_plus: f64 = diffs.iter().zip(&ranks).filter(|(x, _)| **x > 0.0).map(|(_, r)| r).sum();

    if n <= EXACT_MAX_N {
        let doubled: Vec<u64> = ranks.iter().map(|r| (2.0 * r).round() as u64).collect();
        let observed = (2.0 * w_plus).round() as usize;
        let counts = null_counts(&doubled);
        let total = (1u64 << n) as f64;
        let upper = counts[observed..].iter().sum::<u64>() as f64 / total;
        let lower = counts[..=observed].iter().sum::<u64>() as f64 / total;
        let p_value = match alternative {
            Alternative::Greater => upper,
            Alternative::Less => lower,
            Alternative::TwoSided => (2.0 * upper.min(lower)).min(1.0),
        };
        return Ok(WilcoxonResult {
            n,
            w_plus,
            p_value,
            method: TestMethod::Exact,
            z: None,
            warning: None,
        });
    }

    let mean: f64 = ranks.iter().sum::<f64>() / 2.0;
    let sd = (ranks.iter().map(|r| r * r).sum::<f64>() / 4.0).sqrt();
    let centred = w_plus - mean;
    let (z, p_value) = match alternative {
        Alternative::Greater => {
            let z = (centred - 0.5) / sd;
            (z, normal_sf(z))
        }
        Alternative::Less => {
            let z = (centred + 0.5) / sd;
            (z, normal_sf(-z))
        }
        Alternative::TwoSided => {
            let z = ((centred.abs() - 0.5) / sd).max(0.0);
            (z, (2.0 * normal_sf(z)).min(1.0))
        }
    };
    Ok(WilcoxonResult {
        n,
        w_plus,
        p_value,
        method: TestMethod::Normal,
        z: Some(z),
        warning: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn midranks_average_ties() {
        assert_eq!(midranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn null_counts_small() {
        // ranks 1, 2: sums 0, 1, 2, 3 once each (doubled: 0, 2, 4, 6)
        let c = null_counts(&[2, 4]);
        assert_eq!(c, vec![1, 0, 1, 0, 1, 0, 1]);
    }
}
