use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::network::{NetworkCase, Topology};

/// Reduced incidence matrix of a radial feeder.
///
/// Column `j - 1` describes line `j` (the line feeding bus `j`): `+1` at the
/// sending bus, `-1` at the receiving bus. Row 0 of the full matrix is split
/// off as `m0`; the remaining rows (buses `1..=N`) form the square `M`.
#[derive(Debug, Clone)]
pub struct IncidenceDecomposition {
    m0: DVector<f64>,
    m: DMatrix<f64>,
    order: Vec<usize>,
}

/// Builds `m0` and `M` for the case.
pub fn incidence(case: &NetworkCase, topo: &Topology) -> IncidenceDecomposition {
    let n = case.n();
    let mut m0 = DVector::zeros(n);
    let mut m = DMatrix::zeros(n, n);
    for line in case.lines() {
        let col = line.to - 1;
        if line.from == 0 {
            m0[col] = 1.0;
        } else {
            m[(line.from - 1, col)] = 1.0;
        }
        m[(line.to - 1, col)] = -1.0;
    }
    IncidenceDecomposition {
        m0,
        m,
        order: topo.order().to_vec(),
    }
}

impl IncidenceDecomposition {
    pub fn n(&self) -> usize {
        self.m.nrows()
    }

    pub fn m0(&self) -> &DVector<f64> {
        &self.m0
    }

    pub fn m(&self) -> &DMatrix<f64> {
        &self.m
    }

    /// The full `(N+1) x N` incidence matrix `[m0; M]`.
    pub fn full(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut full = DMatrix::zeros(n + 1, n);
        full.row_mut(0).copy_from(&self.m0.transpose());
        full.rows_mut(1, n).copy_from(&self.m);
        full
    }

    // In topological order M is upper triangular: the +1 of column j sits on
    // the row of j's parent, which comes earlier.
    fn entry(&self, row_pos: usize, col_pos: usize) -> f64 {
        self.m[(self.order[row_pos] - 1, self.order[col_pos] - 1)]
    }

    /// Solves `M z = b` by back substitution in topological order.
    pub fn solve(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        let n = self.n();
        check_len(n, b.len())?;
        let mut z = DVector::zeros(n);
        for k in (0..n).rev() {
            let mut acc = b[self.order[k] - 1];
            for l in k + 1..n {
                acc -= self.entry(k, l) * z[self.order[l] - 1];
            }
            let pivot = self.entry(k, k);
            if pivot == 0.0 {
                return Err(Error::Factorization(format!(
                    "zero pivot for bus {} in incidence solve",
                    self.order[k]
                )));
            }
            z[self.order[k] - 1] = acc / pivot;
        }
        Ok(z)
    }

    /// Solves `M^T u = b` by forward substitution in topological order.
    pub fn solve_transpose(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        let n = self.n();
        check_len(n, b.len())?;
        let mut u = DVector::zeros(n);
        for k in 0..n {
            let mut acc = b[self.order[k] - 1];
            for l in 0..k {
                acc -= self.entry(l, k) * u[self.order[l] - 1];
            }
            let pivot = self.entry(k, k);
            if pivot == 0.0 {
                return Err(Error::Factorization(format!(
                    "zero pivot for bus {} in incidence solve",
                    self.order[k]
                )));
            }
            u[self.order[k] - 1] = acc / pivot;
        }
        Ok(u)
    }

    /// `M^{-T} D M^{-1}` for a diagonal `D` given by `diag`, assembled one
    /// column at a time with two triangular solves.
    pub fn congruence(&self, diag: &DVector<f64>) -> Result<DMatrix<f64>> {
        let n = self.n();
        check_len(n, diag.len())?;
        let mut out = DMatrix::zeros(n, n);
        let mut e = DVector::zeros(n);
        for k in 0..n {
            e[k] = 1.0;
            let z = self.solve(&e)?;
            let w = z.component_mul(diag);
            out.set_column(k, &self.solve_transpose(&w)?);
            e[k] = 0.0;
        }
        // symmetric by construction; remove rounding asymmetry
        let sym = (&out + out.transpose()) * 0.5;
        Ok(sym)
    }
}

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension { expected, got })
    }
}
