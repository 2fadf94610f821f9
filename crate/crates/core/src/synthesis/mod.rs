//! Weight `Phi = A^-1` and the diagonal metric `L >= A`.

mod lp;

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::network::{IncidenceDecomposition, NetworkCase};
use lp::CoveringLp;

/// Symmetric positive-definite weight of the voltage-mismatch objective.
///
/// When built by [`phi_from_a`] the product `Phi v` is evaluated through the
/// factored form `M X^-1 M^T`, which only touches the incidence pattern.
#[derive(Debug, Clone)]
pub struct PhiModel {
    dense: DMatrix<f64>,
    e: DMatrix<f64>,
    factored: Option<(DMatrix<f64>, DVector<f64>)>,
}

impl PhiModel {
    /// Wraps an arbitrary SPD matrix.
    pub fn from_matrix(phi: DMatrix<f64>) -> Result<Self> {
        let sym = (&phi + phi.transpose()) * 0.5;
        let chol = Cholesky::new(sym.clone())
            .ok_or_else(|| Error::Factorization("weight matrix is not positive definite".into()))?;
        Ok(PhiModel {
            dense: sym,
            e: chol.l().transpose(),
            factored: None,
        })
    }

    pub fn identity(n: usize) -> Self {
        PhiModel {
            dense: DMatrix::identity(n, n),
            e: DMatrix::identity(n, n),
            factored: None,
        }
    }

    pub fn n(&self) -> usize {
        self.dense.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.dense
    }

    /// Upper-triangular `E` with `E^T E = Phi`.
    pub fn e(&self) -> &DMatrix<f64> {
        &self.e
    }

    /// `||E||_2`, i.e. `sqrt(lambda_max(Phi))`.
    pub fn e_norm(&self) -> f64 {
        spectral_norm(&self.dense).sqrt()
    }

    /// True when built by [`phi_from_a`], so that `A Phi = I` by construction.
    pub fn is_inverse_of_a(&self) -> bool {
        self.factored.is_some()
    }

    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        match &self.factored {
            Some((m, x_inv)) => m * (m.tr_mul(v).component_mul(x_inv)),
            None => &self.dense * v,
        }
    }
}

/// `Phi = A^-1 = M X^-1 M^T`, checked against `A` assembled from the same incidence.
pub fn phi_from_a(case: &NetworkCase, inc: &IncidenceDecomposition) -> Result<PhiModel> {
    let n = case.n();
    let x = DVector::from_iterator(n, case.lines().iter().map(|l| l.x));
    let x_inv = x.map(|v| 1.0 / v);
    let m = inc.m().clone();
    let dense = &m * DMatrix::from_diagonal(&x_inv) * m.transpose();
    let chol = Cholesky::new(dense.clone())
        .ok_or_else(|| Error::Factorization("Phi = A^-1 is not positive definite".into()))?;
    let a = inc.congruence(&x)?;
    let err = (&dense * &a - DMatrix::identity(n, n)).amax();
    if err > 1e-9 {
        return Err(Error::Factorization(format!(
            "Phi * A deviates from identity by {err:.3e}"
        )));
    }
    Ok(PhiModel {
        dense,
        e: chol.l().transpose(),
        factored: Some((m, x_inv)),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Seed,
    Optimized,
}

/// Diagonal metric `L = diag(L_1..L_N)` with `L - A` positive semidefinite.
#[derive(Debug, Clone, PartialEq)]
pub struct LDiag {
    values: DVector<f64>,
    provenance: Provenance,
    min_eig: f64,
    lower_bound: Option<f64>,
}

impl LDiag {
    /// Wraps caller-supplied entries without any feasibility check. Used for
    /// deliberately infeasible metrics in tests and experiments.
    pub fn unchecked(values: DVector<f64>, provenance: Provenance) -> Self {
        LDiag {
            values,
            provenance,
            min_eig: f64::NAN,
            lower_bound: None,
        }
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn get(&self, i: usize) -> f64 {
        self.values[i]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn trace(&self) -> f64 {
        self.values.sum()
    }

    /// Smallest eigenvalue of `L - A` recorded at certification.
    pub fn min_eig(&self) -> f64 {
        self.min_eig
    }

    /// LP lower bound on the optimal trace, when produced by the SDP solve.
    pub fn lower_bound(&self) -> Option<f64> {
        self.lower_bound
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.values)
    }

    /// `||v||^2_L`.
    pub fn norm_sq(&self, v: &DVector<f64>) -> f64 {
        v.iter().zip(self.values.iter()).map(|(a, l)| l * a * a).sum()
    }

    pub fn scaled(&self, factor: f64) -> LDiag {
        LDiag::unchecked(&self.values * factor, self.provenance)
    }
}

/// Outcome of the `L >= A` check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PsdCheck {
    pub feasible: bool,
    pub min_eig: f64,
    pub tolerance: f64,
}

/// Largest eigenvalue of a symmetric matrix.
pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    SymmetricEigen::new(a.clone())
        .eigenvalues
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Checks `L - A >= 0` up to `1e-9 ||A||_2` by attempting a Cholesky of the
/// shifted difference; also reports its smallest eigenvalue.
pub fn verify_psd(l: &DMatrix<f64>, a: &DMatrix<f64>) -> Result<PsdCheck> {
    if l.shape() != a.shape() || !a.is_square() {
        return Err(Error::Dimension {
            expected: a.nrows(),
            got: l.nrows(),
        });
    }
    let n = a.nrows();
    let tolerance = 1e-9 * spectral_norm(a);
    let diff = l - a;
    let diff = (&diff + diff.transpose()) * 0.5;
    let shifted = &diff + DMatrix::identity(n, n) * tolerance;
    let feasible = Cholesky::new(shifted).is_some();
    let min_eig = if diff.iter().all(|v| *v == 0.0) {
        0.0
    } else {
        SymmetricEigen::new(diff).eigenvalues.min()
    };
    Ok(PsdCheck {
        feasible,
        min_eig,
        tolerance,
    })
}

/// Row sums of `|A|`: `L - A` is then diagonally dominant, hence PSD.
pub fn diag_dominant_seed(a: &DMatrix<f64>) -> LDiag {
    let values = DVector::from_iterator(a.nrows(), a.row_iter().map(|r| r.abs().sum()));
    let min_eig = verify_psd(&DMatrix::from_diagonal(&values), a)
        .map(|c| c.min_eig)
        .unwrap_or(f64::NAN);
    LDiag {
        values,
        provenance: Provenance::Seed,
        min_eig,
        lower_bound: None,
    }
}

/// Algorithm used by [`solve_trace_min_l`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SdpMethod {
    /// Log-det barrier with damped Newton steps on the diagonal.
    #[default]
    Barrier,
    /// Eigenvector cutting planes over an LP relaxation.
    CuttingPlane,
}

/// Solver knobs for [`solve_trace_min_l`].
#[derive(Debug, Clone, Copy)]
pub struct SynthesisOptions {
    pub method: SdpMethod,
    /// Barrier: relative duality gap. Cutting planes: eigenvalue tolerance
    /// relative to `||A||_2`.
    pub tol: f64,
    /// Cut budget for the cutting-plane method; `None` means `10 N`.
    pub max_cuts: Option<usize>,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        SynthesisOptions {
            method: SdpMethod::Barrier,
            tol: 1e-8,
            max_cuts: None,
        }
    }
}

/// Minimizes `tr L` subject to `diag(L) >= A`.
///
/// The returned metric is certified with [`verify_psd`]. The
/// diagonal-dominance seed is kept as an incumbent and returned if its trace
/// is no larger. `lower_bound` holds a dual bound on the optimal trace.
pub fn solve_trace_min_l(a: &DMatrix<f64>, opts: SynthesisOptions) -> Result<LDiag> {
    let n = a.nrows();
    if !a.is_square() || n == 0 {
        return Err(Error::Dimension {
            expected: a.ncols(),
            got: n,
        });
    }
    let scale = spectral_norm(a);
    if !(scale > 0.0) {
        return Err(Error::InvalidInput("sensitivity matrix is zero".into()));
    }
    let ahat = a / scale;
    let (l_hat, lower_hat) = match opts.method {
        SdpMethod::Barrier => barrier(&ahat, opts.tol)?,
        SdpMethod::CuttingPlane => cutting_plane(&ahat, opts.tol, opts.max_cuts.unwrap_or(10 * n))?,
    };
    let values = l_hat * scale;
    let check = verify_psd(&DMatrix::from_diagonal(&values), a)?;
    if !check.feasible {
        return Err(Error::Factorization(format!(
            "synthesized L fails the PSD check (min eig {:.3e})",
            check.min_eig
        )));
    }
    let seed = diag_dominant_seed(a);
    let (values, min_eig) = if seed.trace() <= values.sum() {
        (seed.values, seed.min_eig)
    } else {
        (values, check.min_eig)
    };
    Ok(LDiag {
        values,
        provenance: Provenance::Optimized,
        min_eig,
        lower_bound: Some(lower_hat * scale),
    })
}

/// Path-following on `tr L - mu log det(diag(L) - A)`. Returns a strictly
/// feasible `L` and the dual bound from the normalized `mu S^-1`.
fn barrier(ahat: &DMatrix<f64>, tol: f64) -> Result<(DVector<f64>, f64)> {
    let n = ahat.nrows();
    let slack = |l: &DVector<f64>| DMatrix::from_diagonal(l) - ahat;
    let potential = |l: &DVector<f64>, mu: f64| -> Option<f64> {
        let chol = Cholesky::new(slack(l))?;
        let logdet: f64 = chol.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
        Some(l.sum() - mu * logdet)
    };

    let mut l = diag_dominant_seed(ahat).values.add_scalar(1.0);
    let mut mu = 1.0;
    let mut newton_steps = 0usize;
    loop {
        // centre for the current mu
        loop {
            newton_steps += 1;
            if newton_steps > 2000 {
                return Err(Error::NonConvergence {
                    iterations: newton_steps,
                    last_change: mu,
                });
            }
            let s_inv = Cholesky::new(slack(&l))
                .ok_or_else(|| Error::Factorization("barrier iterate left the feasible set".into()))?
                .inverse();
            let g = DVector::from_fn(n, |i, _| 1.0 - mu * s_inv[(i, i)]);
            let h = s_inv.component_mul(&s_inv) * mu;
            let step = Cholesky::new(h)
                .ok_or_else(|| Error::Factorization("singular barrier Hessian".into()))?
                .solve(&(-&g));
            let decrement = -g.dot(&step) / mu;
            if decrement <= 1e-6 {
                break;
            }
            let f0 = potential(&l, mu).expect("current iterate is feasible");
            let slope = g.dot(&step);
            let mut t = 1.0;
            let mut improved = false;
            while t >= 1e-20 {
                let trial = &l + &step * t;
                if let Some(f) = potential(&trial, mu) {
                    if f <= f0 + 0.25 * t * slope {
                        improved = f < f0;
                        l = trial;
                        break;
                    }
                }
                t *= 0.5;
            }
            // rounding floor reached
            if !improved {
                break;
            }
        }
        if n as f64 * mu <= tol * l.sum() {
            break;
        }
        mu *= 0.1;
    }

    let z = Cholesky::new(slack(&l))
        .ok_or_else(|| Error::Factorization("barrier iterate left the feasible set".into()))?
        .inverse();
    let d = z.diagonal().map(|v| 1.0 / v.sqrt());
    let z = DMatrix::from_diagonal(&d) * z * DMatrix::from_diagonal(&d);
    let lower = ahat.component_mul(&z).sum();
    Ok((l, lower))
}

/// Kelley cutting planes: each round solves an LP over the cuts so far and
/// adds `sum_i v_i^2 L_i >= v'Av` for every eigenvector `v` of `diag(L) - A`
/// with a sufficiently negative eigenvalue. The final LP point is scaled up by
/// the smallest factor that makes it feasible.
fn cutting_plane(ahat: &DMatrix<f64>, tol: f64, max_cuts: usize) -> Result<(DVector<f64>, f64)> {
    let n = ahat.nrows();
    let lower = ahat.diagonal();
    let mut lp = CoveringLp::new(n);
    let mut l_hat = lower.clone();
    loop {
        let eig = SymmetricEigen::new(DMatrix::from_diagonal(&l_hat) - ahat);
        let min_eig = eig.eigenvalues.min();
        if min_eig >= -tol {
            break;
        }
        let mut violated: Vec<usize> = (0..n).filter(|&k| eig.eigenvalues[k] < -tol).collect();
        violated.sort_by(|&p, &q| eig.eigenvalues[p].total_cmp(&eig.eigenvalues[q]));
        for k in violated {
            if lp.cut_count() >= max_cuts {
                return Err(Error::CutBudgetExhausted {
                    cuts: lp.cut_count(),
                    min_eig,
                });
            }
            let v = eig.eigenvectors.column(k);
            let coeffs = v.component_mul(&v);
            let rhs = v.dot(&(ahat * v)) - coeffs.dot(&lower);
            lp.add_cut(coeffs, rhs);
        }
        lp.solve()?;
        l_hat = &lower + lp.multipliers().map(|z| z.max(0.0));
    }
    let bound = lower.sum() + lp.value();

    let inv_sqrt = l_hat.map(|v| 1.0 / v.sqrt());
    let pre = DMatrix::from_diagonal(&inv_sqrt) * ahat * DMatrix::from_diagonal(&inv_sqrt);
    let factor = spectral_norm(&pre).max(1.0) * (1.0 + 4.0 * f64::EPSILON * n as f64);
    Ok((l_hat * factor, bound))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lindistflow::build_sensitivity;
    use crate::network::{random_radial_case, BusData, Line, Network};

    fn chain_a() -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[0.01, 0.01, 0.01, 0.02])
    }

    fn chain_net() -> Network {
        let case = NetworkCase::new(
            1.0,
            4.16,
            100.0,
            vec![
                Line { from: 0, to: 1, r: 0.01, x: 0.01 },
                Line { from: 1, to: 2, r: 0.01, x: 0.01 },
            ],
            vec![BusData::default(); 2],
        )
        .unwrap();
        Network::new(case).unwrap()
    }

    #[test]
    fn phi_single_line() {
        let case = NetworkCase::new(
            1.0,
            4.16,
            100.0,
            vec![Line { from: 0, to: 1, r: 0.01, x: 0.02 }],
            vec![BusData::default()],
        )
        .unwrap();
        let net = Network::new(case).unwrap();
        let phi = phi_from_a(&net.case, &net.inc).unwrap();
        assert!((phi.matrix()[(0, 0)] - 50.0).abs() < 1e-12);
    }

    #[test]
    fn phi_chain() {
        let net = chain_net();
        let phi = phi_from_a(&net.case, &net.inc).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[200.0, -100.0, -100.0, 100.0]);
        assert!((phi.matrix() - expected).amax() < 1e-10);
        let e = phi.e();
        assert!((e.transpose() * e - phi.matrix()).amax() < 1e-10);
        assert_eq!(e[(1, 0)], 0.0);
    }

    #[test]
    fn phi_inverts_a_on_random_case() {
        let net = Network::new(random_radial_case(30, 11)).unwrap();
        let model = build_sensitivity(&net.case, &net.inc).unwrap();
        let phi = phi_from_a(&net.case, &net.inc).unwrap();
        assert!((phi.matrix() * model.a() - DMatrix::identity(30, 30)).amax() < 1e-9);
        let v = DVector::from_fn(30, |i, _| (i as f64).sin());
        assert!((phi.apply(&v) - phi.matrix() * &v).amax() < 1e-9);
    }

    #[test]
    fn identity_phi_has_unit_e_norm() {
        assert!((PhiModel::identity(4).e_norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn seed_values() {
        let single = DMatrix::from_element(1, 1, 0.02);
        assert!((diag_dominant_seed(&single).get(0) - 0.02).abs() < 1e-15);
        let s = diag_dominant_seed(&chain_a());
        assert!((s.get(0) - 0.02).abs() < 1e-15);
        assert!((s.get(1) - 0.03).abs() < 1e-15);
        assert!(verify_psd(&s.to_matrix(), &chain_a()).unwrap().feasible);
    }

    #[test]
    fn psd_negative_and_degenerate() {
        let a = chain_a();
        let half = DMatrix::from_diagonal(&(a.diagonal() * 0.5));
        let check = verify_psd(&half, &a).unwrap();
        assert!(!check.feasible);
        assert!(check.min_eig < 0.0);

        let same = verify_psd(&a, &a).unwrap();
        assert!(same.feasible);
        assert_eq!(same.min_eig, 0.0);
    }

    #[test]
    fn scalar_sdp() {
        let a = DMatrix::from_element(1, 1, 0.02);
        let l = solve_trace_min_l(&a, SynthesisOptions::default()).unwrap();
        assert!((l.get(0) - 0.02).abs() < 1e-12);
    }

    #[test]
    fn chain_sdp_matches_hand_kkt() {
        let l = solve_trace_min_l(&chain_a(), SynthesisOptions::default()).unwrap();
        assert!((l.get(0) - 0.02).abs() < 1e-6, "{}", l.values());
        assert!((l.get(1) - 0.03).abs() < 1e-6, "{}", l.values());
        assert!((l.trace() - 0.05).abs() < 1e-6);
    }

    #[test]
    fn optimized_trace_never_exceeds_seed() {
        for seed in 0..5 {
            let net = Network::new(random_radial_case(30, 100 + seed)).unwrap();
            let model = build_sensitivity(&net.case, &net.inc).unwrap();
            let l = solve_trace_min_l(model.a(), SynthesisOptions::default()).unwrap();
            let s = diag_dominant_seed(model.a());
            assert!(l.trace() <= s.trace());
            assert!(verify_psd(&l.to_matrix(), model.a()).unwrap().feasible);
            let lb = l.lower_bound().unwrap();
            assert!(lb <= l.trace() * (1.0 + 1e-9));
        }
    }

    #[test]
    fn frustrated_matrix_beats_seed() {
        // off-diagonal signs no +-1 vector can align with
        let a = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 1.0, 1.0, 2.0, -1.0, 1.0, -1.0, 2.0]);
        let barrier = solve_trace_min_l(&a, SynthesisOptions::default()).unwrap();
        let cuts = solve_trace_min_l(
            &a,
            SynthesisOptions {
                method: SdpMethod::CuttingPlane,
                tol: 1e-10,
                max_cuts: Some(5000),
            },
        )
        .unwrap();
        assert!(barrier.trace() < 11.9, "{}", barrier.values());
        assert!((barrier.trace() - cuts.trace()).abs() < 1e-6 * barrier.trace());
        let lb = barrier.lower_bound().unwrap();
        assert!(lb <= barrier.trace() && barrier.trace() - lb < 1e-7 * barrier.trace());
    }

    #[test]
    fn cutting_plane_agrees_on_small_feeder() {
        let net = Network::new(random_radial_case(6, 3)).unwrap();
        let model = build_sensitivity(&net.case, &net.inc).unwrap();
        let opts = SynthesisOptions {
            method: SdpMethod::CuttingPlane,
            tol: 1e-9,
            max_cuts: Some(20_000),
        };
        let cuts = solve_trace_min_l(model.a(), opts).unwrap();
        let barrier = solve_trace_min_l(model.a(), SynthesisOptions::default()).unwrap();
        assert!((cuts.trace() - barrier.trace()).abs() < 1e-6 * barrier.trace());
    }

    #[test]
    fn cut_budget_is_reported() {
        let net = Network::new(random_radial_case(30, 100)).unwrap();
        let model = build_sensitivity(&net.case, &net.inc).unwrap();
        let opts = SynthesisOptions {
            method: SdpMethod::CuttingPlane,
            tol: 1e-8,
            max_cuts: Some(10),
        };
        assert!(matches!(
            solve_trace_min_l(model.a(), opts),
            Err(Error::CutBudgetExhausted { .. })
        ));
    }
}
