//! Generalized fast gradient method over box-constrained quadratics, the
//! centralized reference solver, and the convergence-bound checkers.

use std::io::Write;

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lindistflow::{ExogenousState, SensitivityModel};
use crate::synthesis::{spectral_norm, LDiag, PhiModel};

/// `min f(q) = 1/2 ||A q + c - V_r||^2_Phi` over `lower <= q <= upper`.
#[derive(Debug, Clone)]
pub struct BoxQP {
    a: DMatrix<f64>,
    phi: PhiModel,
    c: DVector<f64>,
    v_ref: DVector<f64>,
    lower: DVector<f64>,
    upper: DVector<f64>,
}

impl BoxQP {
    /// Problem for the exogenous state `d` of a feeder.
    pub fn new(
        model: &SensitivityModel,
        phi: &PhiModel,
        d: &ExogenousState,
        v_ref: DVector<f64>,
        lower: DVector<f64>,
        upper: DVector<f64>,
    ) -> Result<Self> {
        let c = model.v_par(d)?;
        Self::from_parts(model.a().clone(), phi.clone(), c, v_ref, lower, upper)
    }

    pub fn from_parts(
        a: DMatrix<f64>,
        phi: PhiModel,
        c: DVector<f64>,
        v_ref: DVector<f64>,
        lower: DVector<f64>,
        upper: DVector<f64>,
    ) -> Result<Self> {
        let n = a.nrows();
        for len in [a.ncols(), phi.n(), c.len(), v_ref.len(), lower.len(), upper.len()] {
            if len != n {
                return Err(Error::Dimension { expected: n, got: len });
            }
        }
        if let Some(i) = (0..n).find(|&i| !(lower[i] <= upper[i])) {
            return Err(Error::InvalidInput(format!(
                "bounds inverted at index {i}: [{}, {}]",
                lower[i], upper[i]
            )));
        }
        Ok(BoxQP {
            a,
            phi,
            c,
            v_ref,
            lower,
            upper,
        })
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn phi(&self) -> &PhiModel {
        &self.phi
    }

    /// `V^par(d)`.
    pub fn c(&self) -> &DVector<f64> {
        &self.c
    }

    pub fn v_ref(&self) -> &DVector<f64> {
        &self.v_ref
    }

    pub fn lower(&self) -> &DVector<f64> {
        &self.lower
    }

    pub fn upper(&self) -> &DVector<f64> {
        &self.upper
    }

    pub fn with_bounds(&self, lower: DVector<f64>, upper: DVector<f64>) -> Result<Self> {
        Self::from_parts(
            self.a.clone(),
            self.phi.clone(),
            self.c.clone(),
            self.v_ref.clone(),
            lower,
            upper,
        )
    }

    /// Linear-model voltages `A q + c`.
    pub fn voltage(&self, q: &DVector<f64>) -> DVector<f64> {
        &self.a * q + &self.c
    }

    pub fn objective(&self, q: &DVector<f64>) -> f64 {
        let e = self.voltage(q) - &self.v_ref;
        0.5 * e.dot(&self.phi.apply(&e))
    }

    pub fn gradient(&self, q: &DVector<f64>) -> DVector<f64> {
        let e = self.voltage(q) - &self.v_ref;
        if self.phi.is_inverse_of_a() {
            e
        } else {
            &self.a * self.phi.apply(&e)
        }
    }

    /// `H = A Phi A`.
    pub fn hessian(&self) -> DMatrix<f64> {
        if self.phi.is_inverse_of_a() {
            self.a.clone()
        } else {
            &self.a * self.phi.matrix() * &self.a
        }
    }

    pub fn clamp(&self, q: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(q.len(), |i, _| q[i].clamp(self.lower[i], self.upper[i]))
    }

    pub fn contains(&self, q: &DVector<f64>) -> bool {
        (0..self.n()).all(|i| q[i] >= self.lower[i] && q[i] <= self.upper[i])
    }

    /// Natural KKT residual `||q - clamp(q - grad f(q))||_inf`.
    pub fn kkt_residual(&self, q: &DVector<f64>) -> f64 {
        let g = self.gradient(q);
        (q - self.clamp(&(q - g))).amax()
    }
}

/// `p_L(y) = clamp(y - L^-1 grad f(y))`.
pub fn p_l_step(problem: &BoxQP, l: &LDiag, y: &DVector<f64>) -> DVector<f64> {
    let g = problem.gradient(y);
    let raw = DVector::from_fn(y.len(), |i, _| y[i] - g[i] / l.get(i));
    problem.clamp(&raw)
}

/// `Q_L(q, y) = f(y) + <grad f(y), q - y> + 1/2 ||q - y||^2_L`.
pub fn q_l(problem: &BoxQP, l: &LDiag, q: &DVector<f64>, y: &DVector<f64>) -> f64 {
    let step = q - y;
    problem.objective(y) + problem.gradient(y).dot(&step) + 0.5 * l.norm_sq(&step)
}

/// `gamma(k+1) = (1 + sqrt(1 + 4 gamma(k)^2)) / 2`.
pub fn gamma_next(gamma: f64) -> f64 {
    0.5 * (1.0 + (1.0 + 4.0 * gamma * gamma).sqrt())
}

/// `y = q + (gamma - 1) / gamma_next * (q - q_prev)`.
pub fn extrapolate(q: &DVector<f64>, q_prev: &DVector<f64>, gamma: f64, gamma_next: f64) -> DVector<f64> {
    let mu = (gamma - 1.0) / gamma_next;
    q + (q - q_prev) * mu
}

/// One iterate of the fast gradient recurrence.
#[derive(Debug, Clone, PartialEq)]
pub struct GfgmState {
    pub k: usize,
    pub q: DVector<f64>,
    pub q_prev: DVector<f64>,
    /// Point the step at `k` was taken from, `y(k)`.
    pub y: DVector<f64>,
    /// `gamma(k)`.
    pub gamma: f64,
    /// `f(q(k))`.
    pub f: f64,
}

#[derive(Debug, Clone)]
pub struct GfgmTrajectory {
    /// `states[k]` holds `q(k)`; entry 0 is the starting point.
    pub states: Vec<GfgmState>,
    pub converged: bool,
}

impl GfgmTrajectory {
    pub fn iterations(&self) -> usize {
        self.states.len() - 1
    }

    pub fn last(&self) -> &GfgmState {
        self.states.last().expect("trajectory holds the starting point")
    }

    pub fn iterates(&self) -> impl Iterator<Item = &DVector<f64>> {
        self.states.iter().map(|s| &s.q)
    }
}

/// Termination rule shared by the iterative solvers and the simulator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopRule {
    /// Stop once `||q(k) - q(k-1)||_inf <= tol`; a negative value never stops early.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for StopRule {
    fn default() -> Self {
        StopRule {
            tol: 1e-6,
            max_iter: 10_000,
        }
    }
}

impl StopRule {
    /// Exactly `iterations` steps.
    pub fn fixed(iterations: usize) -> Self {
        StopRule {
            tol: -1.0,
            max_iter: iterations,
        }
    }
}

/// Runs the recurrence from `q(0) = y(1) = 0`, `gamma(1) = 1`.
pub fn gfgm_solve(problem: &BoxQP, l: &LDiag, stop: StopRule) -> GfgmTrajectory {
    gfgm_from(problem, l, &DVector::zeros(problem.n()), stop)
}

/// Runs the recurrence from an arbitrary starting point `q(0) = y(1)`.
pub fn gfgm_from(problem: &BoxQP, l: &LDiag, q0: &DVector<f64>, stop: StopRule) -> GfgmTrajectory {
    let mut states = vec![GfgmState {
        k: 0,
        q: q0.clone(),
        q_prev: q0.clone(),
        y: q0.clone(),
        gamma: 1.0,
        f: problem.objective(q0),
    }];
    let mut y = q0.clone();
    let mut gamma = 1.0;
    let mut converged = false;
    for k in 1..=stop.max_iter {
        let q_prev = states[k - 1].q.clone();
        let q = p_l_step(problem, l, &y);
        let change = (&q - &q_prev).amax();
        let g_next = gamma_next(gamma);
        let y_next = extrapolate(&q, &q_prev, gamma, g_next);
        states.push(GfgmState {
            k,
            f: problem.objective(&q),
            q,
            q_prev,
            y,
            gamma,
        });
        y = y_next;
        gamma = g_next;
        if change <= stop.tol {
            converged = true;
            break;
        }
    }
    GfgmTrajectory { states, converged }
}

/// Reference minimizer of a [`BoxQP`] with its certificate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleSolution {
    #[serde(skip)]
    pub q: DVector<f64>,
    pub f: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
}

const ORACLE_TARGET: f64 = 1e-12;
const ORACLE_ACCEPT: f64 = 1e-10;
const ORACLE_BUDGET: usize = 1_000_000;

/// Solves the box QP to a natural KKT residual of `1e-12`.
///
/// Projected gradient with the fixed step `1 / lambda_max(A Phi A)` does the
/// work, with a momentum term that is dropped whenever the objective goes up.
/// Every 100 iterations the bound pattern of the current point is tried as an
/// active set: the free coordinates are solved exactly and the candidate is
/// kept if it is feasible and has a smaller residual.
pub fn centralized_oracle(problem: &BoxQP) -> Result<OracleSolution> {
    let n = problem.n();
    let h = problem.hessian();
    let lipschitz = spectral_norm(&h);
    if !(lipschitz > 0.0) {
        return Err(Error::Factorization("zero Hessian in box QP".into()));
    }
    let step = 1.0 / lipschitz;
    let mut q = problem.clamp(&DVector::zeros(n));
    let mut q_prev = q.clone();
    let mut f = problem.objective(&q);
    let mut t = 1.0f64;
    let mut best = problem.kkt_residual(&q);
    for it in 0..ORACLE_BUDGET {
        if best <= ORACLE_TARGET {
            return Ok(OracleSolution {
                f: problem.objective(&q),
                q,
                kkt_residual: best,
                iterations: it,
            });
        }
        let t_next = gamma_next(t);
        let y = &q + (&q - &q_prev) * ((t - 1.0) / t_next);
        let g = problem.gradient(&y);
        let cand = problem.clamp(&(&y - g * step));
        let f_cand = problem.objective(&cand);
        if f_cand > f {
            // restart the momentum from a plain projected step
            t = 1.0;
            let g = problem.gradient(&q);
            let plain = problem.clamp(&(&q - g * step));
            q_prev = q.clone();
            f = problem.objective(&plain);
            q = plain;
        } else {
            q_prev = std::mem::replace(&mut q, cand);
            f = f_cand;
            t = t_next;
        }
        if it % 100 == 99 {
            if let Some(polished) = active_set_polish(problem, &h, &q) {
                let r = problem.kkt_residual(&polished);
                if r < problem.kkt_residual(&q) {
                    q_prev = polished.clone();
                    q = polished;
                    f = problem.objective(&q);
                    t = 1.0;
                }
            }
        }
        best = problem.kkt_residual(&q);
    }
    if best <= ORACLE_ACCEPT {
        return Ok(OracleSolution {
            f: problem.objective(&q),
            q,
            kkt_residual: best,
            iterations: ORACLE_BUDGET,
        });
    }
    Err(Error::OracleKkt {
        residual: best,
        iterations: ORACLE_BUDGET,
    })
}

/// Fixes every coordinate sitting on a bound whose gradient pushes outward,
/// then solves the stationarity conditions of the remaining ones.
fn active_set_polish(problem: &BoxQP, h: &DMatrix<f64>, q: &DVector<f64>) -> Option<DVector<f64>> {
    let n = problem.n();
    let g = problem.gradient(q);
    let (lo, hi) = (problem.lower(), problem.upper());
    let pinned: Vec<bool> = (0..n)
        .map(|i| {
            let width = (hi[i] - lo[i]).abs().max(1.0);
            let eps = 1e-12 * width;
            lo[i] == hi[i] || (q[i] <= lo[i] + eps && g[i] > 0.0) || (q[i] >= hi[i] - eps && g[i] < 0.0)
        })
        .collect();
    let free: Vec<usize> = (0..n).filter(|&i| !pinned[i]).collect();
    let mut out = q.clone();
    for i in 0..n {
        if pinned[i] {
            out[i] = if q[i] - lo[i] <= hi[i] - q[i] { lo[i] } else { hi[i] };
        }
    }
    if free.is_empty() {
        return Some(out);
    }
    // Newton step on the free block: H_ff dq_f = -g_f(out)
    let g_out = problem.gradient(&out);
    let m = free.len();
    let h_ff = DMatrix::from_fn(m, m, |r, c| h[(free[r], free[c])]);
    let rhs = DVector::from_fn(m, |r, _| -g_out[free[r]]);
    let dq = Cholesky::new(h_ff)?.solve(&rhs);
    for (r, &i) in free.iter().enumerate() {
        out[i] += dq[r];
    }
    if problem.contains(&out) {
        Some(out)
    } else {
        None
    }
}

/// One row of a bound check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundCheck {
    pub k: usize,
    pub value: f64,
    pub bound: f64,
    pub holds: bool,
}

/// Rounding slack for comparing two evaluated objective values.
fn eval_slack(a: f64, b: f64) -> f64 {
    16.0 * f64::EPSILON * (a.abs() + b.abs())
}

/// `F(q(k)) - F* <= 2 ||q(0) - q*||^2_L / (k+1)^2` for every `k >= 1`.
pub fn check_rate_bound(
    traj: &GfgmTrajectory,
    problem: &BoxQP,
    q_star: &DVector<f64>,
    l: &LDiag,
) -> Vec<BoundCheck> {
    let f_star = problem.objective(q_star);
    let r0 = l.norm_sq(&(&traj.states[0].q - q_star));
    traj.states
        .iter()
        .skip(1)
        .map(|s| {
            let value = s.f - f_star;
            let bound = 2.0 * r0 / ((s.k + 1) as f64).powi(2);
            BoundCheck {
                k: s.k,
                value,
                bound,
                holds: value <= bound + eval_slack(s.f, f_star),
            }
        })
        .collect()
}

/// `||q(k) - q*||_2 <= 2 ||q(0) - q*||_L / ((k+1) sqrt(sigma_min))`.
pub fn check_distance_bound(
    traj: &GfgmTrajectory,
    q_star: &DVector<f64>,
    l: &LDiag,
    sigma_min: f64,
) -> Vec<BoundCheck> {
    let r0 = l.norm_sq(&(&traj.states[0].q - q_star)).sqrt();
    traj.states
        .iter()
        .skip(1)
        .map(|s| {
            let value = (&s.q - q_star).norm();
            let bound = 2.0 * r0 / ((s.k + 1) as f64 * sigma_min.sqrt());
            BoundCheck {
                k: s.k,
                value,
                bound,
                holds: value <= bound + 1e-14 * q_star.amax().max(1e-3),
            }
        })
        .collect()
}

/// Writes `k, f, gap, bound_eq11, dist, bound_prop3` rows.
pub fn write_trajectory_csv<W: Write>(
    out: W,
    traj: &GfgmTrajectory,
    rate: &[BoundCheck],
    dist: &[BoundCheck],
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["k", "f", "gap", "bound_eq11", "dist", "bound_prop3"])?;
    for ((s, r), d) in traj.states.iter().skip(1).zip(rate).zip(dist) {
        w.write_record(&[
            s.k.to_string(),
            format!("{:e}", s.f),
            format!("{:e}", r.value),
            format!("{:e}", r.bound),
            format!("{:e}", d.value),
            format!("{:e}", d.bound),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<trajectory csv>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lindistflow::build_sensitivity;
    use crate::network::{random_radial_case, BusData, Line, Network, NetworkCase};
    use crate::synthesis::{diag_dominant_seed, phi_from_a, solve_trace_min_l, Provenance, SynthesisOptions};

    fn single_line_problem(lo: f64, hi: f64) -> (BoxQP, LDiag) {
        let case = NetworkCase::new(
            1.0,
            4.16,
            100.0,
            vec![Line { from: 0, to: 1, r: 0.01, x: 0.02 }],
            vec![BusData::default()],
        )
        .unwrap();
        let net = Network::new(case).unwrap();
        let model = build_sensitivity(&net.case, &net.inc).unwrap();
        let phi = phi_from_a(&net.case, &net.inc).unwrap();
        let d = ExogenousState::new(DVector::from_vec(vec![-0.5]), DVector::from_vec(vec![0.2])).unwrap();
        let p = BoxQP::new(
            &model,
            &phi,
            &d,
            DVector::from_element(1, 1.0),
            DVector::from_element(1, lo),
            DVector::from_element(1, hi),
        )
        .unwrap();
        let l = diag_dominant_seed(model.a());
        (p, l)
    }

    fn random_problem(n: usize, seed: u64) -> (BoxQP, LDiag, f64) {
        let net = Network::new(random_radial_case(n, seed)).unwrap();
        let model = build_sensitivity(&net.case, &net.inc).unwrap();
        let phi = phi_from_a(&net.case, &net.inc).unwrap();
        let (lo, hi) = net.case.static_limits();
        let p = BoxQP::new(
            &model,
            &phi,
            &ExogenousState::nominal(&net.case),
            DVector::from_element(n, 1.0),
            DVector::from_vec(lo),
            DVector::from_vec(hi),
        )
        .unwrap();
        let l = solve_trace_min_l(model.a(), SynthesisOptions::default()).unwrap();
        (p, l, model.sigma_min())
    }

    #[test]
    fn p_l_step_single_line() {
        let (p, l) = single_line_problem(-1.0, 1.0);
        let q = p_l_step(&p, &l, &DVector::zeros(1));
        assert!((q[0] - 0.45).abs() < 1e-12);
    }

    #[test]
    fn p_l_step_stays_in_bounds() {
        let (p, l, _) = random_problem(15, 7);
        for s in 0..20 {
            let y = DVector::from_fn(15, |i, _| ((i + s) as f64).sin());
            assert!(p.contains(&p_l_step(&p, &l, &y)));
        }
    }

    #[test]
    fn gamma_recurrence() {
        assert!((gamma_next(1.0) - 1.618_033_988_749_895).abs() < 1e-15);
        assert!((gamma_next(1.61803) - 2.19353).abs() < 1e-5);
        let mut g = 1.0;
        for k in 1..=10_000usize {
            assert!(g >= (k as f64 + 1.0) / 2.0);
            let next = gamma_next(g);
            assert!(next > g);
            g = next;
        }
    }

    #[test]
    fn extrapolation_examples() {
        let q = DVector::from_vec(vec![0.45]);
        let prev = DVector::from_vec(vec![0.40]);
        assert_eq!(extrapolate(&q, &q, 1.7, 2.2), q);
        assert_eq!(extrapolate(&q, &prev, 1.0, gamma_next(1.0)), q);
        let y = extrapolate(&q, &prev, 1.618, 2.1935);
        assert!((y[0] - 0.46409).abs() < 1e-5);
    }

    #[test]
    fn scalar_interior_converges_in_one_step() {
        let (p, _) = single_line_problem(-1.0, 1.0);
        let l = LDiag::unchecked(p.a().diagonal(), Provenance::Seed);
        let traj = gfgm_solve(&p, &l, StopRule::default());
        assert!((traj.states[1].q[0] - 0.45).abs() < 1e-14);
        assert!(traj.converged);
        assert!(traj.iterations() <= 2);
    }

    #[test]
    fn degenerate_box_pins_iterates() {
        let (p, l) = single_line_problem(0.0, 0.0);
        let traj = gfgm_solve(&p, &l, StopRule::fixed(20));
        assert!(traj.iterates().all(|q| q[0] == 0.0));
        assert_eq!(centralized_oracle(&p).unwrap().q[0], 0.0);
    }

    #[test]
    fn oracle_single_line() {
        let (p, _) = single_line_problem(-1.0, 1.0);
        let sol = centralized_oracle(&p).unwrap();
        assert!((sol.q[0] - 0.45).abs() < 1e-12);
        assert!(sol.f < 1e-24);
    }

    #[test]
    fn oracle_satisfies_kkt_on_random_cases() {
        for seed in 0..10 {
            let (p, _, _) = random_problem(5 + 3 * seed as usize, seed);
            let sol = centralized_oracle(&p).unwrap();
            assert!(sol.kkt_residual <= 1e-12);
            let g = p.gradient(&sol.q);
            for i in 0..p.n() {
                let at_lo = sol.q[i] == p.lower()[i];
                let at_hi = sol.q[i] == p.upper()[i];
                if !at_lo && !at_hi {
                    assert!(g[i].abs() <= 1e-11, "interior gradient {}", g[i]);
                } else if at_lo && !at_hi {
                    assert!(g[i] >= -1e-11);
                } else if at_hi && !at_lo {
                    assert!(g[i] <= 1e-11);
                }
            }
        }
    }

    #[test]
    fn gfgm_matches_oracle_on_random_case() {
        let (p, l, _) = random_problem(20, 3);
        let sol = centralized_oracle(&p).unwrap();
        let traj = gfgm_solve(
            &p,
            &l,
            StopRule {
                tol: 1e-13,
                max_iter: 200_000,
            },
        );
        assert!(traj.converged);
        assert!((&traj.last().q - &sol.q).amax() <= 1e-8);
    }

    #[test]
    fn bounds_hold_on_random_cases() {
        for seed in 0..5 {
            let (p, l, sigma) = random_problem(20, 40 + seed);
            let sol = centralized_oracle(&p).unwrap();
            let traj = gfgm_solve(&p, &l, StopRule::fixed(200));
            let rate = check_rate_bound(&traj, &p, &sol.q, &l);
            let dist = check_distance_bound(&traj, &sol.q, &l, sigma);
            assert!(rate.iter().all(|c| c.holds));
            assert!(dist.iter().all(|c| c.holds));
            assert!(dist.windows(2).all(|w| w[0].bound >= w[1].bound));
        }
    }

    #[test]
    fn starting_at_optimum_gives_zero_gap() {
        let (p, l, sigma) = random_problem(10, 5);
        let sol = centralized_oracle(&p).unwrap();
        let traj = gfgm_from(&p, &l, &sol.q, StopRule::fixed(20));
        for c in check_rate_bound(&traj, &p, &sol.q, &l) {
            assert_eq!(c.bound, 0.0);
            assert!(c.holds, "{c:?}");
        }
        for c in check_distance_bound(&traj, &sol.q, &l, sigma) {
            assert!(c.holds, "{c:?}");
        }
    }

    #[test]
    fn approximation_model_upper_bounds_objective() {
        let (p, l, _) = random_problem(12, 8);
        for s in 0..50 {
            let q = p.clamp(&DVector::from_fn(12, |i, _| ((i * 7 + s) as f64).sin()));
            let y = p.clamp(&DVector::from_fn(12, |i, _| ((i * 3 + 2 * s) as f64).cos()));
            assert!(p.objective(&q) <= q_l(&p, &l, &q, &y) + 1e-15);
        }
    }

    #[test]
    fn undersized_metric_breaks_upper_bound() {
        let (p, _, _) = random_problem(12, 8);
        let small = diag_dominant_seed(p.a()).scaled(0.1);
        let witness = (0..50).any(|s| {
            let q = p.clamp(&DVector::from_fn(12, |i, _| ((i * 7 + s) as f64).sin()));
            let y = p.clamp(&DVector::from_fn(12, |i, _| ((i * 3 + 2 * s) as f64).cos()));
            p.objective(&q) > q_l(&p, &small, &q, &y)
        });
        assert!(witness);
    }

    #[test]
    fn trajectory_csv_header() {
        let (p, l, sigma) = random_problem(6, 1);
        let sol = centralized_oracle(&p).unwrap();
        let traj = gfgm_solve(&p, &l, StopRule::fixed(5));
        let rate = check_rate_bound(&traj, &p, &sol.q, &l);
        let dist = check_distance_bound(&traj, &sol.q, &l, sigma);
        let mut buf = Vec::new();
        write_trajectory_csv(&mut buf, &traj, &rate, &dist).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("k,f,gap,bound_eq11,dist,bound_prop3\n"));
        assert_eq!(text.lines().count(), 6);
    }
}
