//! A single restricted Boltzmann machine with {0,1} units and energy
//! `E(x, s) = -c.x - b.s - x^T W s`.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{DbnError, Result};

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp()
    } else {
        x.exp().ln_1p()
    }
}

/// Replaces every mean by a Bernoulli draw.
pub fn bernoulli<R: Rng>(means: &Array2<f64>, rng: &mut R) -> Array2<f64> {
    means.mapv(|p| if rng.random::<f64>() < p { 1.0 } else { 0.0 })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rbm {
    /// `m x n`, visible by hidden.
    pub weights: Array2<f64>,
    /// `c`, length `m`.
    pub visible_bias: Array1<f64>,
    /// `b`, length `n`.
    pub hidden_bias: Array1<f64>,
}

impl Rbm {
    pub fn new(weights: Array2<f64>, visible_bias: Array1<f64>, hidden_bias: Array1<f64>) -> Result<Self> {
        let rbm = Self {
            weights,
            visible_bias,
            hidden_bias,
        };
        rbm.validate()?;
        Ok(rbm)
    }

    pub fn zeros(m: usize, n: usize) -> Self {
        Self {
            weights: Array2::zeros((m, n)),
            visible_bias: Array1::zeros(m),
            hidden_bias: Array1::zeros(n),
        }
    }

    /// Small Gaussian weights, zero biases.
    pub fn random<R: Rng>(m: usize, n: usize, scale: f64, rng: &mut R) -> Self {
        let normal = Normal::new(0.0, scale).expect("finite scale");
        let weights = Array2::from_shape_simple_fn((m, n), || normal.sample(rng));
        Self {
            weights,
            visible_bias: Array1::zeros(m),
            hidden_bias: Array1::zeros(n),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (m, n) = self.weights.dim();
        if self.visible_bias.len() != m || self.hidden_bias.len() != n {
            return Err(DbnError::Shape(format!(
                "weights are {m}x{n} but biases have lengths {} and {}",
                self.visible_bias.len(),
                self.hidden_bias.len()
            )));
        }
        let finite = self.weights.iter().chain(&self.visible_bias).chain(&self.hidden_bias).all(|v| v.is_finite());
        if !finite {
            return Err(DbnError::Shape("non-finite parameter".into()));
        }
        Ok(())
    }

    pub fn visible_width(&self) -> usize {
        self.weights.nrows()
    }

    pub fn hidden_width(&self) -> usize {
        self.weights.ncols()
    }

    pub fn mean_abs_weight(&self) -> f64 {
        self.weights.iter().map(|w| w.abs()).sum::<f64>() / self.weights.len().max(1) as f64
    }

    fn check_rows(&self, rows: &ArrayView2<f64>, width: usize, what: &str) -> Result<()> {
        if rows.ncols() == width {
            Ok(())
        } else {
            Err(DbnError::Shape(format!("{what} rows have width {}, expected {width}", rows.ncols())))
        }
    }

    /// `p(s_j = 1 | x) = sigmoid(b_j + sum_i W_ij x_i)` for one visible row.
    pub fn hidden_means(&self, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        Ok(self.hidden_means_batch(x.insert_axis(Axis(0)))?.row(0).to_owned())
    }

    /// `p(x_i = 1 | s) = sigmoid(c_i + sum_j W_ij s_j)` for one hidden row.
    pub fn visible_means(&self, s: ArrayView1<f64>) -> Result<Array1<f64>> {
        Ok(self.visible_means_batch(s.insert_axis(Axis(0)))?.row(0).to_owned())
    }

    pub fn hidden_means_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_rows(&x, self.visible_width(), "visible")?;
        let mut a = x.dot(&self.weights);
        a += &self.hidden_bias;
        a.mapv_inplace(sigmoid);
        Ok(a)
    }

    pub fn visible_means_batch(&self, s: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_rows(&s, self.hidden_width(), "hidden")?;
        let mut a = s.dot(&self.weights.t());
        a += &self.visible_bias;
        a.mapv_inplace(sigmoid);
        Ok(a)
    }

    pub fn sample_hidden<R: Rng>(&self, x: ArrayView2<f64>, rng: &mut R) -> Result<Array2<f64>> {
        Ok(bernoulli(&self.hidden_means_batch(x)?, rng))
    }

    pub fn sample_visible<R: Rng>(&self, s: ArrayView2<f64>, rng: &mut R) -> Result<Array2<f64>> {
        Ok(bernoulli(&self.visible_means_batch(s)?, rng))
    }

    /// One block Gibbs sweep `x -> s -> x'`; returns `(s, x')`.
    pub fn gibbs_sweep<R: Rng>(&self, x: ArrayView2<f64>, rng: &mut R) -> Result<(Array2<f64>, Array2<f64>)> {
        let s = self.sample_hidden(x, rng)?;
        let x2 = self.sample_visible(s.view(), rng)?;
        Ok((s, x2))
    }

    pub fn energy(&self, x: ArrayView1<f64>, s: ArrayView1<f64>) -> f64 {
        -self.visible_bias.dot(&x) - self.hidden_bias.dot(&s) - x.dot(&self.weights.dot(&s))
    }

    /// `F(x) = -c.x - sum_j softplus(b_j + (x W)_j)`, so `p(x) = e^{-F(x)} / Z`.
    pub fn free_energy_visible(&self, x: ArrayView1<f64>) -> f64 {
        let a = x.dot(&self.weights) + &self.hidden_bias;
        -self.visible_bias.dot(&x) - a.iter().map(|&v| softplus(v)).sum::<f64>()
    }

    /// Same for the hidden layer: `p(s) = e^{-F(s)} / Z`.
    pub fn free_energy_hidden(&self, s: ArrayView1<f64>) -> f64 {
        let a = self.weights.dot(&s) + &self.visible_bias;
        -self.hidden_bias.dot(&s) - a.iter().map(|&v| softplus(v)).sum::<f64>()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn zero_model_means_are_one_half() {
        let rbm = Rbm::zeros(3, 2);
        assert_eq!(rbm.hidden_means(array![1.0, 0.0, 1.0].view()).unwrap(), array![0.5, 0.5]);
        assert_eq!(rbm.visible_means(array![1.0, 1.0].view()).unwrap(), array![0.5, 0.5, 0.5]);
    }

    #[test]
    fn saturated_bias() {
        let mut rbm = Rbm::zeros(1, 1);
        rbm.hidden_bias[0] = 800.0;
        assert_eq!(rbm.hidden_means(array![0.0].view()).unwrap()[0], 1.0);
        assert_eq!(sigmoid(-800.0), 0.0);
        assert!((softplus(800.0) - 800.0).abs() < 1e-12);
    }

    #[test]
    fn width_mismatch_is_an_error() {
        let rbm = Rbm::zeros(3, 2);
        assert!(rbm.hidden_means(array![1.0, 0.0].view()).is_err());
        assert!(Rbm::new(Array2::zeros((2, 2)), Array1::zeros(3), Array1::zeros(2)).is_err());
    }
}
