//! Linearized branch-flow model: `V = A q_g + V_par(d)`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::network::{IncidenceDecomposition, Line, NetworkCase, Topology};
use crate::synthesis::PhiModel;

/// Linear VAr-to-voltage sensitivities of a radial feeder.
#[derive(Debug, Clone)]
pub struct SensitivityModel {
    a: DMatrix<f64>,
    r_s: DMatrix<f64>,
    base_term: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
}

/// Exogenous injections `d`: net real power and load reactive consumption, pu.
#[derive(Debug, Clone, PartialEq)]
pub struct ExogenousState {
    pub p: DVector<f64>,
    pub q_c: DVector<f64>,
}

impl ExogenousState {
    pub fn new(p: DVector<f64>, q_c: DVector<f64>) -> Result<Self> {
        if p.len() != q_c.len() {
            return Err(Error::Dimension {
                expected: p.len(),
                got: q_c.len(),
            });
        }
        if p.iter().chain(q_c.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite exogenous injection".into()));
        }
        Ok(ExogenousState { p, q_c })
    }

    pub fn zeros(n: usize) -> Self {
        ExogenousState {
            p: DVector::zeros(n),
            q_c: DVector::zeros(n),
        }
    }

    /// Nominal loads of the case with no PV output.
    pub fn nominal(case: &NetworkCase) -> Self {
        ExogenousState {
            p: DVector::from_iterator(case.n(), case.buses().iter().map(|b| b.p_load)),
            q_c: DVector::from_iterator(case.n(), case.buses().iter().map(|b| -b.q_load)),
        }
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }
}

/// Assembles `A = M^-T X M^-1`, `R_s = M^-T R M^-1` and `-V0 M^-T m0`.
pub fn build_sensitivity(case: &NetworkCase, inc: &IncidenceDecomposition) -> Result<SensitivityModel> {
    let x = DVector::from_iterator(case.n(), case.lines().iter().map(|l| l.x));
    let r = DVector::from_iterator(case.n(), case.lines().iter().map(|l| l.r));
    let a = inc.congruence(&x)?;
    let r_s = inc.congruence(&r)?;
    let base_term = inc.solve_transpose(inc.m0())? * (-case.slack_voltage());
    SensitivityModel::from_parts(a, r_s, base_term)
}

impl SensitivityModel {
    /// Wraps precomputed matrices; fails if `a` is not positive definite.
    pub fn from_parts(a: DMatrix<f64>, r_s: DMatrix<f64>, base_term: DVector<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n || r_s.shape() != (n, n) || base_term.len() != n {
            return Err(Error::Dimension {
                expected: n,
                got: base_term.len(),
            });
        }
        let chol = Cholesky::new(a.clone()).ok_or_else(|| {
            Error::Factorization("sensitivity matrix A is not positive definite".into())
        })?;
        Ok(SensitivityModel {
            a,
            r_s,
            base_term,
            chol,
        })
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn r_s(&self) -> &DMatrix<f64> {
        &self.r_s
    }

    pub fn base_term(&self) -> &DVector<f64> {
        &self.base_term
    }

    pub fn cholesky(&self) -> &Cholesky<f64, Dyn> {
        &self.chol
    }

    /// Smallest eigenvalue of `A` by inverse power iteration on the Cholesky factor.
    pub fn sigma_min(&self) -> f64 {
        let n = self.n();
        let mut v = DVector::from_element(n, 1.0 / (n as f64).sqrt());
        let mut lambda = 0.0;
        for _ in 0..500 {
            let w = self.chol.solve(&v);
            let norm = w.norm();
            let next = 1.0 / norm;
            v = w / norm;
            if (next - lambda).abs() <= 1e-14 * next {
                lambda = next;
                break;
            }
            lambda = next;
        }
        // Rayleigh quotient is accurate to second order in the eigenvector error
        let rq = v.dot(&(&self.a * &v));
        if rq.is_finite() && rq > 0.0 {
            rq
        } else {
            lambda
        }
    }

    /// `V_par(d) = R_s p - A q_c + base_term`.
    pub fn v_par(&self, d: &ExogenousState) -> Result<DVector<f64>> {
        check(self.n(), d.len())?;
        Ok(&self.r_s * &d.p - &self.a * &d.q_c + &self.base_term)
    }

    /// `V = A q_g + V_par(d)`.
    pub fn v_linear(&self, q_g: &DVector<f64>, d: &ExogenousState) -> Result<DVector<f64>> {
        check(self.n(), q_g.len())?;
        Ok(&self.a * q_g + self.v_par(d)?)
    }

    /// `f = 1/2 ||V - V_r||^2_Phi`.
    pub fn objective_f(
        &self,
        phi: &PhiModel,
        q_g: &DVector<f64>,
        d: &ExogenousState,
        v_ref: &DVector<f64>,
    ) -> Result<f64> {
        check(self.n(), v_ref.len())?;
        let e = self.v_linear(q_g, d)? - v_ref;
        Ok(0.5 * e.dot(&phi.apply(&e)))
    }

    /// `grad f = A Phi (V - V_r)`. With `Phi = A^-1` this is `V - V_r` and is
    /// returned without the round trip through `A Phi`.
    pub fn grad_f(
        &self,
        phi: &PhiModel,
        q_g: &DVector<f64>,
        d: &ExogenousState,
        v_ref: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        check(self.n(), v_ref.len())?;
        let e = self.v_linear(q_g, d)? - v_ref;
        if phi.is_inverse_of_a() {
            return Ok(e);
        }
        Ok(&self.a * phi.apply(&e))
    }
}

/// Independent construction of a path-sum matrix: entry `(i, j)` is the sum
/// of `weight(line)` over lines shared by the root paths of buses `i` and `j`.
pub fn path_overlap_matrix(
    case: &NetworkCase,
    topo: &Topology,
    weight: impl Fn(&Line) -> f64,
) -> DMatrix<f64> {
    let n = case.n();
    let mut on_path = vec![vec![false; n + 1]; n + 1];
    for (j, row) in on_path.iter_mut().enumerate().skip(1) {
        for b in topo.path_to_root(j) {
            row[b] = true;
        }
    }
    DMatrix::from_fn(n, n, |i, j| {
        (1..=n)
            .filter(|&b| on_path[i + 1][b] && on_path[j + 1][b])
            .map(|b| weight(case.line_into(b)))
            .sum()
    })
}

fn check(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension { expected, got })
    }
}
