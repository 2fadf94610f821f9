//! Nonlinear branch-flow solution of radial feeders by backward/forward sweep.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lindistflow::ExogenousState;
use crate::network::{NetworkCase, Topology};
use crate::optimizer::{centralized_oracle, BoxQP};
use crate::synthesis::PhiModel;

/// Squared-voltage floor below which the sweep reports collapse.
pub const V_SQ_FLOOR: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepOptions {
    /// Stop when the largest voltage change between sweeps is at most `tol`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            tol: 1e-10,
            max_iter: 200,
        }
    }
}

/// Converged branch-flow state. Vectors are indexed by non-slack bus; the
/// flow entries belong to the line feeding that bus.
#[derive(Debug, Clone, PartialEq)]
pub struct PFSolution {
    pub v: DVector<f64>,
    pub p_flow: DVector<f64>,
    pub q_flow: DVector<f64>,
    pub iterations: usize,
    /// Largest absolute residual of the three line equations.
    pub residual: f64,
}

/// Solves the branch-flow equations for net injections `p`, `q` (pu,
/// consumption negative).
pub fn solve_branch_flow(
    case: &NetworkCase,
    topo: &Topology,
    p: &DVector<f64>,
    q: &DVector<f64>,
    opts: SweepOptions,
) -> Result<PFSolution> {
    let n = case.n();
    for len in [p.len(), q.len()] {
        if len != n {
            return Err(Error::Dimension { expected: n, got: len });
        }
    }
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidInput("sweep tolerance must be positive".into()));
    }
    let v0 = case.slack_voltage();
    // index 0 is the slack bus
    let mut v = vec![v0; n + 1];
    let mut pf = vec![0.0; n + 1];
    let mut qf = vec![0.0; n + 1];
    let mut last_change = f64::INFINITY;

    for iter in 1..=opts.max_iter {
        for &j in topo.order().iter().rev() {
            let line = case.line_into(j);
            let vi_sq = v[topo.parent(j).expect("non-slack bus")].powi(2);
            let s_sq = pf[j] * pf[j] + qf[j] * qf[j];
            let (mut p_sum, mut q_sum) = (0.0, 0.0);
            for &k in topo.children(j) {
                p_sum += pf[k];
                q_sum += qf[k];
            }
            pf[j] = p_sum - p[j - 1] + line.r * s_sq / vi_sq;
            qf[j] = q_sum - q[j - 1] + line.x * s_sq / vi_sq;
        }
        last_change = 0.0;
        for &j in topo.order() {
            let line = case.line_into(j);
            let vi_sq = v[topo.parent(j).expect("non-slack bus")].powi(2);
            let s_sq = pf[j] * pf[j] + qf[j] * qf[j];
            let z_sq = line.r * line.r + line.x * line.x;
            let vj_sq = vi_sq - 2.0 * (line.r * pf[j] + line.x * qf[j]) + z_sq * s_sq / vi_sq;
            if !vj_sq.is_finite() {
                return Err(Error::NonConvergence {
                    iterations: iter,
                    last_change,
                });
            }
            if vj_sq < V_SQ_FLOOR {
                return Err(Error::VoltageCollapse { bus: j, v_sq: vj_sq });
            }
            let vj = vj_sq.sqrt();
            last_change = f64::max(last_change, (vj - v[j]).abs());
            v[j] = vj;
        }
        if last_change <= opts.tol {
            let residual = branch_residual(case, topo, p, q, &v, &pf, &qf);
            return Ok(PFSolution {
                v: DVector::from_column_slice(&v[1..]),
                p_flow: DVector::from_column_slice(&pf[1..]),
                q_flow: DVector::from_column_slice(&qf[1..]),
                iterations: iter,
                residual,
            });
        }
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iter,
        last_change,
    })
}

fn branch_residual(
    case: &NetworkCase,
    topo: &Topology,
    p: &DVector<f64>,
    q: &DVector<f64>,
    v: &[f64],
    pf: &[f64],
    qf: &[f64],
) -> f64 {
    let mut worst = 0.0f64;
    for &j in topo.order() {
        let line = case.line_into(j);
        let vi_sq = v[topo.parent(j).expect("non-slack bus")].powi(2);
        let s_sq = pf[j] * pf[j] + qf[j] * qf[j];
        let p_out: f64 = topo.children(j).iter().map(|&k| pf[k]).sum();
        let q_out: f64 = topo.children(j).iter().map(|&k| qf[k]).sum();
        let r_p = pf[j] - p_out + p[j - 1] - line.r * s_sq / vi_sq;
        let r_q = qf[j] - q_out + q[j - 1] - line.x * s_sq / vi_sq;
        let z_sq = line.r * line.r + line.x * line.x;
        let r_v = vi_sq - v[j] * v[j] - 2.0 * (line.r * pf[j] + line.x * qf[j]) + z_sq * s_sq / vi_sq;
        worst = worst.max(r_p.abs()).max(r_q.abs()).max(r_v.abs());
    }
    worst
}

/// Exact-model voltages `h(q_g, d)`.
pub fn plant_voltages(
    case: &NetworkCase,
    topo: &Topology,
    q_g: &DVector<f64>,
    d: &ExogenousState,
    opts: SweepOptions,
) -> Result<PFSolution> {
    if q_g.len() != d.len() {
        return Err(Error::Dimension {
            expected: d.len(),
            got: q_g.len(),
        });
    }
    solve_branch_flow(case, topo, &d.p, &(q_g - &d.q_c), opts)
}

/// `m(q_g) = 1/2 ||h(q_g, d) - V_r||^2_Phi`.
pub fn objective_m(
    case: &NetworkCase,
    topo: &Topology,
    phi: &PhiModel,
    q_g: &DVector<f64>,
    d: &ExogenousState,
    v_ref: &DVector<f64>,
) -> Result<f64> {
    let sol = plant_voltages(case, topo, q_g, d, SweepOptions::default())?;
    let e = sol.v - v_ref;
    Ok(0.5 * e.dot(&phi.apply(&e)))
}

/// Sampling and grid settings for [`measure_gap`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapOptions {
    /// Random interior points in addition to the box corners.
    pub samples: usize,
    pub seed: u64,
    /// Points per axis of the grid search for the exact-model minimizer;
    /// zero skips the grid search.
    pub grid_points: usize,
    /// Zoom passes around the best grid point.
    pub refine_rounds: usize,
}

impl Default for GapOptions {
    fn default() -> Self {
        GapOptions {
            samples: 200,
            seed: 0,
            grid_points: 0,
            refine_rounds: 4,
        }
    }
}

/// Linearization error and the pieces of the exact-model suboptimality bound.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapReport {
    /// Largest sampled `||h(q) - h_l(q)||_2`; a lower estimate of the true maximum.
    pub delta: f64,
    /// `|m(q_hat*) - f(q*)|` from the grid search, when run.
    pub tau: Option<f64>,
    /// `||E||_2` with `E^T E = Phi`.
    pub e_norm: f64,
    /// Grid-search estimate of `min m` over the box.
    pub m_star: Option<f64>,
    /// `f(q*)` of the linear problem.
    pub f_star: f64,
    pub samples: usize,
}

impl GapReport {
    /// `1/2 ||E||^2 delta^2 + 2 r0 / (k+1)^2 + tau` with `r0 = ||q(0) - q*||^2_L`.
    pub fn bound(&self, r0: f64, k: usize) -> f64 {
        0.5 * self.e_norm.powi(2) * self.delta.powi(2)
            + 2.0 * r0 / ((k + 1) as f64).powi(2)
            + self.tau.unwrap_or(0.0)
    }
}

/// Measures the gap between an exact plant `h` and the linear model of `problem`.
pub fn measure_gap(
    problem: &BoxQP,
    plant: impl Fn(&DVector<f64>) -> Result<DVector<f64>>,
    opts: GapOptions,
) -> Result<GapReport> {
    let n = problem.n();
    if opts.grid_points > 0 && n > 3 {
        return Err(Error::GridTooLarge(n));
    }
    let (lo, hi) = (problem.lower(), problem.upper());
    if lo.iter().chain(hi.iter()).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("gap measurement needs finite bounds".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut points = Vec::new();
    if n < 16 && (1usize << n) <= opts.samples.max(1) {
        for mask in 0..(1usize << n) {
            points.push(DVector::from_fn(n, |i, _| if mask >> i & 1 == 1 { hi[i] } else { lo[i] }));
        }
    } else {
        for _ in 0..opts.samples.max(1) {
            points.push(DVector::from_fn(n, |i, _| if rng.random_bool(0.5) { hi[i] } else { lo[i] }));
        }
    }
    for _ in 0..opts.samples {
        points.push(DVector::from_fn(n, |i, _| lo[i] + (hi[i] - lo[i]) * rng.random::<f64>()));
    }
    let mut delta = 0.0f64;
    for q in &points {
        let gap = (plant(q)? - problem.voltage(q)).norm();
        delta = delta.max(gap);
    }

    let f_star = centralized_oracle(problem)?.f;
    let m = |q: &DVector<f64>| -> Result<f64> {
        let e = plant(q)? - problem.v_ref();
        Ok(0.5 * e.dot(&problem.phi().apply(&e)))
    };
    let m_star = if opts.grid_points > 0 {
        Some(grid_minimum(n, lo, hi, opts, &m)?)
    } else {
        None
    };
    Ok(GapReport {
        delta,
        tau: m_star.map(|ms| (ms - f_star).abs()),
        e_norm: problem.phi().e_norm(),
        m_star,
        f_star,
        samples: points.len(),
    })
}

fn grid_minimum(
    n: usize,
    lo: &DVector<f64>,
    hi: &DVector<f64>,
    opts: GapOptions,
    m: &impl Fn(&DVector<f64>) -> Result<f64>,
) -> Result<f64> {
    let pts = opts.grid_points.max(2);
    let mut lo = lo.clone();
    let mut hi = hi.clone();
    let mut best = f64::INFINITY;
    for _ in 0..=opts.refine_rounds {
        let mut best_q = lo.clone();
        let total = pts.pow(n as u32);
        for idx in 0..total {
            let mut rem = idx;
            let q = DVector::from_fn(n, |i, _| {
                let c = rem % pts;
                rem /= pts;
                lo[i] + (hi[i] - lo[i]) * c as f64 / (pts - 1) as f64
            });
            let val = m(&q)?;
            if val < best {
                best = val;
                best_q = q;
            }
        }
        // zoom to two cells around the best point
        for i in 0..n {
            let cell = (hi[i] - lo[i]) / (pts - 1) as f64;
            let (a, b) = (best_q[i] - 2.0 * cell, best_q[i] + 2.0 * cell);
            lo[i] = a.max(lo[i]);
            hi[i] = b.min(hi[i]);
        }
    }
    Ok(best)
}
