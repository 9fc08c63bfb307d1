//! Scalar helpers and the column-per-word matrix used for every embedding
//! and decoder table in the crate.

use serde::{Deserialize, Serialize};

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Element-wise hidden-layer nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Nonlinearity {
    #[default]
    Sigmoid,
    Tanh,
}

impl Nonlinearity {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Nonlinearity::Sigmoid => sigmoid(x),
            Nonlinearity::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the activation value `y = h(x)`.
    #[inline]
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Nonlinearity::Sigmoid => y * (1.0 - y),
            Nonlinearity::Tanh => 1.0 - y * y,
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Nonlinearity::Sigmoid => 0,
            Nonlinearity::Tanh => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Nonlinearity::Sigmoid),
            1 => Some(Nonlinearity::Tanh),
            _ => None,
        }
    }
}

/// A `dim x count` matrix stored one column at a time, so that the vector of
/// word `i` is the contiguous slice `[i * dim, (i + 1) * dim)`.
///
/// The same layout doubles as a `count x dim` row-major matrix, which is how
/// decoder weight tables (one row per output word or tree node) are kept.
#[derive(Debug, Clone, PartialEq)]
pub struct WordMatrix {
    dim: usize,
    count: usize,
    data: Vec<f64>,
}

impl WordMatrix {
    pub fn zeros(dim: usize, count: usize) -> Self {
        WordMatrix {
            dim,
            count,
            data: vec![0.0; dim * count],
        }
    }

    pub fn from_columns(dim: usize, count: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), dim * count, "column data length");
        WordMatrix { dim, count, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> usize {
        self.count
    }

    #[inline]
    pub fn column(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub fn column_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn columns(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim.max(1)).take(self.count)
    }

    /// Entry at row `d`, column `i` of the `dim x count` view.
    pub fn get(&self, d: usize, i: usize) -> f64 {
        self.data[i * self.dim + d]
    }

    pub fn fill(&mut self, value: f64) {
        self.data.iter_mut().for_each(|x| *x = value);
    }

    pub fn same_shape(&self, other: &WordMatrix) -> bool {
        self.dim == other.dim && self.count == other.count
    }
}
