//! Row-stochastic adjacency matrices and the dominant-eigenpair routines the
//! analysis needs. Only nonnegative matrices appear here, so power iteration
//! with Collatz-Wielandt bounds is enough; there is no general eigensolver.

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::digraph::ProximityDigraph;
use crate::error::{Error, Result};
use crate::io::format_g17;

/// Relative tolerance of [`spectral_radius`].
pub const SPECTRAL_TOL: f64 = 1e-12;
/// Sup-norm tolerance on successive iterates of [`left_perron_vector`].
pub const PERRON_TOL: f64 = 1e-13;
pub const MAX_POWER_ITERATIONS: usize = 1_000_000;

/// `A(y)`: row `i` holds `1/|N_i|` on the columns of `i`'s out-neighbors.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjacencyMatrix(DMatrix<f64>);

impl AdjacencyMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.0.nrows() == 0
    }

    pub fn apply(&self, y: &[f64]) -> Vec<f64> {
        let v = &self.0 * DVector::from_column_slice(y);
        v.iter().copied().collect()
    }

    /// Writes one row per line with 17 significant digits.
    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        write_matrix_csv(&self.0, out)
    }
}

pub fn adjacency_matrix(g: &ProximityDigraph) -> AdjacencyMatrix {
    let n = g.len();
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        let nbrs = g.out_neighbors(i);
        let w = 1.0 / nbrs.len() as f64;
        for &j in nbrs {
            a[(i, j)] = w;
        }
    }
    AdjacencyMatrix(a)
}

pub fn write_matrix_csv<W: Write>(m: &DMatrix<f64>, mut out: W) -> std::io::Result<()> {
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format_g17(m[(i, j)])).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

/// Spectral radius of a square nonnegative matrix by power iteration from the
/// uniform vector.
///
/// While the iterate stays positive, the Collatz-Wielandt quotients bracket the
/// radius and iteration stops once the bracket is within [`SPECTRAL_TOL`]
/// relative width. For reducible input whose bracket cannot close, the
/// Rayleigh-type estimate `sum(A x) / sum(x)` is accepted once it has been
/// stable to the same tolerance for several consecutive steps.
pub fn spectral_radius(block: &DMatrix<f64>) -> Result<f64> {
    let n = block.nrows();
    assert_eq!(n, block.ncols(), "spectral_radius needs a square matrix");
    if n == 0 {
        return Ok(0.0);
    }
    let mut x = DVector::from_element(n, 1.0 / n as f64);
    let mut prev_estimate = f64::NAN;
    let mut stable = 0;
    for _ in 0..MAX_POWER_ITERATIONS {
        let y = block * &x;
        let total: f64 = y.sum();
        if total == 0.0 {
            return Ok(0.0);
        }
        if x.iter().all(|&v| v > 0.0) {
            let (lo, hi) = x.iter().zip(y.iter()).fold((f64::INFINITY, 0.0f64), |(lo, hi), (&xi, &yi)| {
                let q = yi / xi;
                (lo.min(q), hi.max(q))
            });
            if hi - lo <= SPECTRAL_TOL * hi {
                return Ok(0.5 * (lo + hi));
            }
        }
        // x sums to one, so `total` estimates the radius.
        if (total - prev_estimate).abs() <= SPECTRAL_TOL * total {
            stable += 1;
            if stable >= 8 {
                return Ok(total);
            }
        } else {
            stable = 0;
        }
        prev_estimate = total;
        x = y / total;
    }
    Err(Error::NonConvergence { what: "spectral radius power iteration", iterations: MAX_POWER_ITERATIONS })
}

/// Left eigenvector for eigenvalue one of a row-stochastic primitive matrix,
/// normalized to sum one. Power iteration on the transpose from the uniform vector.
pub fn left_perron_vector(m: &DMatrix<f64>) -> Result<DVector<f64>> {
    let n = m.nrows();
    assert_eq!(n, m.ncols(), "left_perron_vector needs a square matrix");
    let mt = m.transpose();
    let mut nu = DVector::from_element(n, 1.0 / n as f64);
    for _ in 0..MAX_POWER_ITERATIONS {
        let mut next = &mt * &nu;
        let s = next.sum();
        if !(s > 0.0) {
            return Err(Error::Singular("left Perron vector"));
        }
        next /= s;
        let diff = (&next - &nu).amax();
        nu = next;
        if diff <= PERRON_TOL {
            return Ok(nu);
        }
    }
    Err(Error::NonConvergence { what: "left Perron vector power iteration", iterations: MAX_POWER_ITERATIONS })
}

/// `lim M^t` for a row-stochastic primitive block: the rank-one matrix whose
/// rows all equal the normalized left Perron vector.
pub fn m_star(m_block: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let nu = left_perron_vector(m_block)?;
    let n = m_block.nrows();
    Ok(DMatrix::from_fn(n, n, |_, j| nu[j]))
}
