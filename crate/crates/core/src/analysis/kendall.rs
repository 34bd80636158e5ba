use crate::error::{HfmError, Result};
use crate::sample::EmpiricalSample;

/// Tie-corrected Kendall `tau_b`, `O(N log N)` (Knight's algorithm).
///
/// `None` when fewer than two points are given or either variable is constant.
pub fn kendall_tau_b(x: &[f64], y: &[f64]) -> Option<f64> {
    assert_eq!(x.len(), y.len());
    let n = x.len();
    if n < 2 {
        return None;
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(y[a].total_cmp(&y[b])));

    let pairs = |run: u64| run * (run.saturating_sub(1)) / 2;
    let (mut tied_x, mut tied_xy) = (0u64, 0u64);
    let (mut run_x, mut run_xy) = (1u64, 1u64);
    for w in idx.windows(2) {
        let (a, b) = (w[0], w[1]);
        if x[a] == x[b] {
            run_x += 1;
            if y[a] == y[b] {
                run_xy += 1;
            } else {
                tied_xy += pairs(run_xy);
                run_xy = 1;
            }
        } else {
            tied_x += pairs(run_x);
            tied_xy += pairs(run_xy);
            run_x = 1;
            run_xy = 1;
        }
    }
    tied_x += pairs(run_x);
    tied_xy += pairs(run_xy);

    let ys: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
    let (sorted, swaps) = merge_count(ys);

    let mut tied_y = 0u64;
    let mut run_y = 1u64;
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            run_y += 1;
        } else {
            tied_y += pairs(run_y);
            run_y = 1;
        }
    }
    tied_y += pairs(run_y);

    let total = pairs(n as u64);
    let denom = ((total - tied_x) as f64 * (total - tied_y) as f64).sqrt();
    if denom == 0.0 {
        return None;
    }
    let s = total as i128 - tied_x as i128 - tied_y as i128 + tied_xy as i128 - 2 * swaps as i128;
    Some((s as f64 / denom).clamp(-1.0, 1.0))
}

/// Stable merge sort returning the number of strictly inverted pairs.
fn merge_count(v: Vec<f64>) -> (Vec<f64>, u64) {
    if v.len() < 2 {
        return (v, 0);
    }
    let mut right = v;
    let left = right.drain(..right.len() / 2).collect();
    let (left, a) = merge_count(left);
    let (right, b) = merge_count(right);
    let mut out = Vec::with_capacity(left.len() + right.len());
    let mut swaps = a + b;
    let (mut i, mut j) = (0, 0);
    while i < left.len() && j < right.len() {
        if right[j] < left[i] {
            swaps += (left.len() - i) as u64;
            out.push(right[j]);
            j += 1;
        } else {
            out.push(left[i]);
            i += 1;
        }
    }
    out.extend_from_slice(&left[i..]);
    out.extend_from_slice(&right[j..]);
    (out, swaps)
}

/// `d = 1 + tau_b(k_s, m_s)` over the distinct observed states, in `[0, 2]`.
/// `d = 0` means counts fall strictly with the level, as under the HFM.
pub fn kendall_distance(sample: &EmpiricalSample) -> Result<f64> {
    let (k, m): (Vec<f64>, Vec<f64>) = sample.iter().map(|(s, c)| (c as f64, s.level() as f64)).unzip();
    kendall_tau_b(&k, &m)
        .map(|t| 1.0 + t)
        .ok_or_else(|| HfmError::Undefined("Kendall tau needs two distinct states with varying counts and levels".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textbook_values() {
        assert_eq!(kendall_tau_b(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]), Some(1.0));
        assert_eq!(kendall_tau_b(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), Some(-1.0));
        assert_eq!(kendall_tau_b(&[1.0, 1.0], &[1.0, 2.0]), None);
        // C = 3, D = 1, one tie in each variable: 2 / sqrt(5 * 5)
        let t = kendall_tau_b(&[1.0, 2.0, 2.0, 3.0], &[1.0, 3.0, 2.0, 2.0]).unwrap();
        assert!((t - 0.4).abs() < 1e-12, "{t}");
    }
}
