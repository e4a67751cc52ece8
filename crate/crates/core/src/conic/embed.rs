//! Complex Hermitian PSD variables expressed through real symmetric blocks.
//!
//! A Hermitian `X = A + jB` maps to `[[A, -B], [B, A]]`, which is PSD exactly
//! when `X` is, with every eigenvalue duplicated. The embedding doubles the
//! trace; functional coefficients carry a factor `1/2` to compensate, so
//! `Re tr(C X)` is read off the real block without rescaling.

use nalgebra::DMatrix;

use super::problem::{BlockId, Var};
use crate::model::C64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HermitianEmbedding {
    dim: usize,
}

pub fn embed_hermitian(dim: usize) -> HermitianEmbedding {
    assert!(dim >= 1, "embedding dimension must be positive");
    HermitianEmbedding { dim }
}

impl HermitianEmbedding {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn real_dim(&self) -> usize {
        2 * self.dim
    }

    pub fn embed(&self, x: &DMatrix<C64>) -> DMatrix<f64> {
        let n = self.dim;
        assert_eq!(x.shape(), (n, n));
        DMatrix::from_fn(2 * n, 2 * n, |r, c| {
            let z = x[(r % n, c % n)];
            match (r < n, c < n) {
                (true, true) | (false, false) => z.re,
                (true, false) => -z.im,
                (false, true) => z.im,
            }
        })
    }

    /// Inverse of [`embed`](Self::embed). Unstructured symmetric input is
    /// averaged onto the structured subspace first, which keeps PSD inputs PSD.
    pub fn extract(&self, y: &DMatrix<f64>) -> DMatrix<C64> {
        let n = self.dim;
        assert_eq!(y.shape(), (2 * n, 2 * n));
        DMatrix::from_fn(n, n, |i, j| {
            let re = 0.5 * (y[(i, j)] + y[(i + n, j + n)]);
            let im = 0.5 * (y[(i + n, j)] - y[(i, j + n)]);
            C64::new(re, im)
        })
    }

    /// Terms on the real block `block` whose weighted sum equals
    /// `Re tr(C X)` for Hermitian `C`.
    pub fn functional(&self, block: BlockId, c: &DMatrix<C64>) -> Vec<(Var, f64)> {
        let k = self.embed(c) * 0.5;
        let mut terms = Vec::new();
        for i in 0..k.nrows() {
            for j in i..k.ncols() {
                let v = if i == j { k[(i, i)] } else { 2.0 * k[(i, j)] };
                if v != 0.0 {
                    terms.push((block.entry(i, j), v));
                }
            }
        }
        terms
    }

    /// Terms reading `[X]_{nn}`.
    pub fn diagonal(&self, block: BlockId, n: usize) -> [(Var, f64); 2] {
        [
            (block.entry(n, n), 0.5),
            (block.entry(n + self.dim, n + self.dim), 0.5),
        ]
    }

    /// Terms reading `Tr X`.
    pub fn trace(&self, block: BlockId) -> Vec<(Var, f64)> {
        (0..self.real_dim()).map(|i| (block.entry(i, i), 0.5)).collect()
    }
}
