//! Brute-force enumeration for small models. Distributions are vectors over
//! `2^n` states indexed by `sum_i s_i 2^i`, the same convention as
//! [`hfm::DenseDistribution`].

use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{DbnError, Result};
use crate::model::Dbn;
use crate::rbm::Rbm;
use crate::train::Gradient;

/// Largest layer width accepted by the enumeration routines.
pub const MAX_EXACT_WIDTH: usize = 16;

fn check_width(n: usize) -> Result<()> {
    if n > MAX_EXACT_WIDTH {
        Err(DbnError::Shape(format!("exact enumeration limited to width {MAX_EXACT_WIDTH}, got {n}")))
    } else {
        Ok(())
    }
}

/// All `2^n` binary rows in index order.
pub fn all_states(n: usize) -> Array2<f64> {
    Array2::from_shape_fn((1 << n, n), |(i, j)| ((i >> j) & 1) as f64)
}

pub fn row_index(row: ndarray::ArrayView1<f64>) -> usize {
    row.iter().enumerate().map(|(j, &v)| (v > 0.5) as usize * (1 << j)).sum()
}

fn log_sum_exp(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Factorized Bernoulli probabilities of every target state for every source
/// row of `means`: `out[r, t] = prod_j means[r,j]^{t_j} (1 - means[r,j])^{1 - t_j}`.
fn product_bernoulli(means: &Array2<f64>) -> Array2<f64> {
    let (rows, n) = means.dim();
    let mut out = Array2::zeros((rows, 1 << n));
    for r in 0..rows {
        for t in 0..1usize << n {
            let mut p = 1.0;
            for j in 0..n {
                let m = means[[r, j]];
                p *= if (t >> j) & 1 == 1 { m } else { 1.0 - m };
            }
            out[[r, t]] = p;
        }
    }
    out
}

/// `P[x, s] = p(s | x)` over all visible and hidden states.
pub fn up_matrix(rbm: &Rbm) -> Result<Array2<f64>> {
    check_width(rbm.visible_width())?;
    check_width(rbm.hidden_width())?;
    let xs = all_states(rbm.visible_width());
    Ok(product_bernoulli(&rbm.hidden_means_batch(xs.view())?))
}

/// `P[s, x] = p(x | s)`.
pub fn down_matrix(rbm: &Rbm) -> Result<Array2<f64>> {
    check_width(rbm.visible_width())?;
    check_width(rbm.hidden_width())?;
    let ss = all_states(rbm.hidden_width());
    Ok(product_bernoulli(&rbm.visible_means_batch(ss.view())?))
}

/// `ln Z`, summing the free energy over the narrower layer.
pub fn log_partition(rbm: &Rbm) -> Result<f64> {
    if rbm.visible_width() <= rbm.hidden_width() {
        check_width(rbm.visible_width())?;
        let xs = all_states(rbm.visible_width());
        Ok(log_sum_exp(xs.rows().into_iter().map(|x| -rbm.free_energy_visible(x))))
    } else {
        check_width(rbm.hidden_width())?;
        let ss = all_states(rbm.hidden_width());
        Ok(log_sum_exp(ss.rows().into_iter().map(|s| -rbm.free_energy_hidden(s))))
    }
}

/// Joint `p(x, s)` as a `2^m x 2^n` matrix.
pub fn joint(rbm: &Rbm) -> Result<Array2<f64>> {
    check_width(rbm.visible_width())?;
    check_width(rbm.hidden_width())?;
    let xs = all_states(rbm.visible_width());
    let ss = all_states(rbm.hidden_width());
    let log_z = log_partition(rbm)?;
    Ok(Array2::from_shape_fn((xs.nrows(), ss.nrows()), |(i, j)| {
        (-rbm.energy(xs.row(i), ss.row(j)) - log_z).exp()
    }))
}

pub fn visible_marginal(rbm: &Rbm) -> Result<Array1<f64>> {
    check_width(rbm.visible_width())?;
    let log_z = log_partition(rbm)?;
    let xs = all_states(rbm.visible_width());
    Ok(xs.rows().into_iter().map(|x| (-rbm.free_energy_visible(x) - log_z).exp()).collect())
}

pub fn hidden_marginal(rbm: &Rbm) -> Result<Array1<f64>> {
    check_width(rbm.hidden_width())?;
    let log_z = log_partition(rbm)?;
    let ss = all_states(rbm.hidden_width());
    Ok(ss.rows().into_iter().map(|s| (-rbm.free_energy_hidden(s) - log_z).exp()).collect())
}

/// Mean `ln p(x)` over the rows of `data`.
pub fn log_likelihood(rbm: &Rbm, data: ArrayView2<f64>) -> Result<f64> {
    let log_z = log_partition(rbm)?;
    let total: f64 = data.rows().into_iter().map(|x| -rbm.free_energy_visible(x) - log_z).sum();
    Ok(total / data.nrows() as f64)
}

/// Gradient of the mean log-likelihood: data statistics minus model statistics.
pub fn log_likelihood_gradient(rbm: &Rbm, data: ArrayView2<f64>) -> Result<Gradient> {
    let positive = Gradient::statistics(rbm, data)?;
    let p = visible_marginal(rbm)?;
    let xs = all_states(rbm.visible_width());
    let h = rbm.hidden_means_batch(xs.view())?;
    let weighted = &xs * &p.view().insert_axis(ndarray::Axis(1));
    let negative = Gradient {
        weights: weighted.t().dot(&h),
        visible_bias: p.dot(&xs),
        hidden_bias: p.dot(&h),
    };
    Ok(positive.minus(&negative))
}

/// Empirical distribution of the rows of `data`.
pub fn empirical(data: ArrayView2<f64>) -> Result<Array1<f64>> {
    check_width(data.ncols())?;
    let mut p = Array1::zeros(1 << data.ncols());
    for row in data.rows() {
        p[row_index(row)] += 1.0;
    }
    Ok(p / data.nrows() as f64)
}

/// Distribution of layer `l` obtained by clamping the data and sampling upward.
pub fn clamped_distribution(dbn: &Dbn, data: ArrayView2<f64>, l: usize) -> Result<Array1<f64>> {
    dbn.check_layer(l)?;
    let mut p = empirical(data)?;
    for rbm in &dbn.rbms()[..l] {
        p = p.dot(&up_matrix(rbm)?);
    }
    Ok(p)
}

/// Equilibrium distribution of layer `l` (`0..=L`): the top RBM's marginal,
/// pushed down through the generative conditionals.
pub fn equilibrium_distribution(dbn: &Dbn, l: usize) -> Result<Array1<f64>> {
    let depth = dbn.depth();
    if l > depth {
        return Err(DbnError::Layer { layer: l, depth });
    }
    if l == depth {
        return hidden_marginal(dbn.top());
    }
    let mut p = visible_marginal(dbn.top())?;
    for k in (l + 1..depth).rev() {
        p = p.dot(&down_matrix(&dbn.rbms()[k - 1])?);
    }
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn conditionals_match_joint_enumeration() {
        let rbm = Rbm::new(
            array![[0.7, -1.2], [0.3, 0.9]],
            array![0.1, -0.4],
            array![-0.2, 0.5],
        )
        .unwrap();
        let j = joint(&rbm).unwrap();
        assert!((j.sum() - 1.0).abs() < 1e-12);
        let up = up_matrix(&rbm).unwrap();
        let down = down_matrix(&rbm).unwrap();
        for x in 0..4 {
            let px: f64 = j.row(x).sum();
            for s in 0..4 {
                assert!((j[[x, s]] / px - up[[x, s]]).abs() < 1e-12);
            }
        }
        for s in 0..4 {
            let ps: f64 = j.column(s).sum();
            for x in 0..4 {
                assert!((j[[x, s]] / ps - down[[s, x]]).abs() < 1e-12);
            }
        }
        let vm = visible_marginal(&rbm).unwrap();
        let hm = hidden_marginal(&rbm).unwrap();
        for i in 0..4 {
            assert!((vm[i] - j.row(i).sum()).abs() < 1e-12);
            assert!((hm[i] - j.column(i).sum()).abs() < 1e-12);
        }
    }
}
