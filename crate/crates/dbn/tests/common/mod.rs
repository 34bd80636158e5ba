#![allow(dead_code)]

use hfm_dbn::exact::row_index;
use hfm_dbn::{Dbn, Rbm};
use ndarray::{Array1, Array2, ArrayView2};
use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::Rng;
use rand_distr::Normal;

pub fn random_rbm<R: Rng>(m: usize, n: usize, scale: f64, rng: &mut R) -> Rbm {
    let normal = Normal::new(0.0, scale).unwrap();
    Rbm::new(
        Array2::from_shape_simple_fn((m, n), || normal.sample(rng)),
        Array1::from_shape_simple_fn(m, || normal.sample(rng)),
        Array1::from_shape_simple_fn(n, || normal.sample(rng)),
    )
    .unwrap()
}

pub fn random_dbn<R: Rng>(sizes: &[usize], scale: f64, rng: &mut R) -> Dbn {
    Dbn::new(sizes.windows(2).map(|w| random_rbm(w[0], w[1], scale, rng)).collect()).unwrap()
}

/// Rows drawn i.i.d. from a distribution over `2^width` indexed states.
pub fn draw_rows<R: Rng>(probs: &Array1<f64>, width: usize, count: usize, rng: &mut R) -> Array2<f64> {
    let dist = WeightedIndex::new(probs.iter().copied()).unwrap();
    let mut out = Array2::zeros((count, width));
    for r in 0..count {
        let i = dist.sample(rng);
        for j in 0..width {
            out[[r, j]] = ((i >> j) & 1) as f64;
        }
    }
    out
}

pub fn histogram(rows: ArrayView2<f64>) -> Array1<f64> {
    let mut p = Array1::zeros(1 << rows.ncols());
    for row in rows.rows() {
        p[row_index(row)] += 1.0;
    }
    p / rows.nrows() as f64
}

pub fn tv(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}
