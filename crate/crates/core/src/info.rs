//! Entropy and divergence helpers. Everything here is in bits.

/// `-x log2 x`, with the `0 log 0 = 0` convention.
pub fn surprisal_term(x: f64) -> f64 {
    if x > 0.0 {
        -x * x.log2()
    } else {
        0.0
    }
}

/// Binary entropy `h(x) = -x log2 x - (1-x) log2 (1-x)`.
pub fn binary_entropy(x: f64) -> f64 {
    surprisal_term(x) + surprisal_term(1.0 - x)
}

/// Shannon entropy of a probability vector.
pub fn entropy_bits(probs: &[f64]) -> f64 {
    probs.iter().map(|&p| surprisal_term(p)).sum()
}

pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    assert_eq!(p.len(), q.len());
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// `KL(p || q)`; infinite when `p` puts mass where `q` has none.
pub fn kl_bits(p: &[f64], q: &[f64]) -> f64 {
    assert_eq!(p.len(), q.len());
    let mut acc = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        if a > 0.0 {
            if b <= 0.0 {
                return f64::INFINITY;
            }
            acc += a * (a / b).log2();
        }
    }
    acc.max(0.0)
}

/// Plug-in entropy of a vector of counts.
pub fn plugin_entropy_from_counts<I: IntoIterator<Item = u64>>(counts: I) -> f64 {
    let counts: Vec<u64> = counts.into_iter().filter(|&c| c > 0).collect();
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let t = total as f64;
    counts.iter().map(|&c| surprisal_term(c as f64 / t)).sum()
}

/// Miller–Madow bias-corrected entropy: plug-in plus `(K - 1) / (2 N ln 2)`.
pub fn miller_madow_from_counts<I: IntoIterator<Item = u64>>(counts: I) -> f64 {
    let counts: Vec<u64> = counts.into_iter().filter(|&c| c > 0).collect();
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let k = counts.len() as f64;
    plugin_entropy_from_counts(counts) + (k - 1.0) / (2.0 * total as f64 * std::f64::consts::LN_2)
}
