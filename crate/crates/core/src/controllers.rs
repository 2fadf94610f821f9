//! Local volt/var controllers. Every bus step sees only that bus's voltage
//! measurement, its own state and its own limits.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lindistflow::SensitivityModel;
use crate::optimizer::{gamma_next, gfgm_solve, BoxQP, StopRule};
use crate::synthesis::LDiag;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControllerKind {
    /// Inverters hold zero VAr output.
    None,
    Cdc,
    Ddc,
    Gpdc,
    Sgpdc,
    Asalvc,
}

impl ControllerKind {
    pub const ALL: [ControllerKind; 6] = [
        ControllerKind::None,
        ControllerKind::Cdc,
        ControllerKind::Ddc,
        ControllerKind::Gpdc,
        ControllerKind::Sgpdc,
        ControllerKind::Asalvc,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ControllerKind::None => "none",
            ControllerKind::Cdc => "cdc",
            ControllerKind::Ddc => "ddc",
            ControllerKind::Gpdc => "gpdc",
            ControllerKind::Sgpdc => "sgpdc",
            ControllerKind::Asalvc => "asalvc",
        }
    }
}

impl fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ControllerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ControllerKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidInput(format!("unknown controller '{s}'")))
    }
}

fn unit_voltage() -> f64 {
    1.0
}

/// Per-bus parameters of one controller family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerConfig {
    pub kind: ControllerKind,
    /// Droop slope `a_i` (CDC, DDC, GPDC, SGPDC).
    #[serde(default)]
    pub a: Vec<f64>,
    /// DDC weight `alpha_i` in (0, 1).
    #[serde(default)]
    pub alpha: Vec<f64>,
    /// SGPDC scale `d_i`.
    #[serde(default)]
    pub d: Vec<f64>,
    /// ASALVC metric `L_i`.
    #[serde(default)]
    pub l: Vec<f64>,
    /// ASALVC momentum reset period in steps; `None` never resets.
    #[serde(default)]
    pub t_gamma: Option<usize>,
    #[serde(default = "unit_voltage")]
    pub v_ref: f64,
    /// Symmetric CDC dead band in pu.
    #[serde(default)]
    pub dead_band: f64,
}

impl ControllerConfig {
    /// Settings used for the controller comparisons: `a = 1` for CDC, DDC and
    /// GPDC, `alpha = 0.1`, SGPDC `a = 0.01` with `d_i = 1 / A_ii`, ASALVC with
    /// the supplied metric and a six-step reset.
    pub fn standard(kind: ControllerKind, model: &SensitivityModel, l: &LDiag) -> Self {
        let n = model.n();
        let a = match kind {
            ControllerKind::Sgpdc => vec![0.01; n],
            ControllerKind::Cdc | ControllerKind::Ddc | ControllerKind::Gpdc => vec![1.0; n],
            _ => Vec::new(),
        };
        ControllerConfig {
            kind,
            a,
            alpha: if kind == ControllerKind::Ddc { vec![0.1; n] } else { Vec::new() },
            d: if kind == ControllerKind::Sgpdc {
                model.a().diagonal().iter().map(|v| 1.0 / v).collect()
            } else {
                Vec::new()
            },
            l: if kind == ControllerKind::Asalvc { l.values().iter().copied().collect() } else { Vec::new() },
            t_gamma: if kind == ControllerKind::Asalvc { Some(6) } else { None },
            v_ref: 1.0,
            dead_band: 0.0,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let need = |name: &str, v: &[f64], ok: &dyn Fn(f64) -> bool| -> Result<()> {
            if v.len() != n {
                return Err(Error::InvalidInput(format!(
                    "{} needs {n} values of {name}, got {}",
                    self.kind,
                    v.len()
                )));
            }
            if let Some(bad) = v.iter().find(|&&x| !ok(x)) {
                return Err(Error::InvalidInput(format!("{} has invalid {name} = {bad}", self.kind)));
            }
            Ok(())
        };
        let positive = |x: f64| x > 0.0 && x.is_finite();
        match self.kind {
            ControllerKind::None => {}
            ControllerKind::Cdc | ControllerKind::Gpdc => need("a", &self.a, &positive)?,
            ControllerKind::Ddc => {
                need("a", &self.a, &positive)?;
                need("alpha", &self.alpha, &|x| x > 0.0 && x < 1.0)?;
            }
            ControllerKind::Sgpdc => {
                need("a", &self.a, &positive)?;
                need("d", &self.d, &positive)?;
            }
            ControllerKind::Asalvc => {
                need("l", &self.l, &positive)?;
                if self.t_gamma == Some(0) {
                    return Err(Error::InvalidInput("t_gamma must be at least 1".into()));
                }
            }
        }
        if !self.v_ref.is_finite() || !(self.dead_band >= 0.0) {
            return Err(Error::InvalidInput("v_ref must be finite and dead_band nonnegative".into()));
        }
        Ok(())
    }
}

/// Reactive-power window of one inverter for the current step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarLimits {
    pub q_min: f64,
    pub q_max: f64,
}

impl VarLimits {
    pub fn new(q_min: f64, q_max: f64) -> Self {
        VarLimits { q_min, q_max }
    }

    pub fn clamp(&self, q: f64) -> f64 {
        q.clamp(self.q_min, self.q_max)
    }

    pub fn contains(&self, q: f64, slack: f64) -> bool {
        q >= self.q_min - slack && q <= self.q_max + slack
    }
}

/// `clamp(-a (V - V_r))`, optionally with a symmetric dead band.
pub fn cdc_step(v: f64, a: f64, v_ref: f64, dead_band: f64, limits: VarLimits) -> f64 {
    let e = v - v_ref;
    let e = if e.abs() <= dead_band { 0.0 } else { e - dead_band.copysign(e) };
    limits.clamp(-a * e)
}

/// `(1 - alpha) q_prev + alpha clamp(-a (V - V_r))`.
pub fn ddc_step(q_prev: f64, v: f64, a: f64, alpha: f64, v_ref: f64, limits: VarLimits) -> f64 {
    (1.0 - alpha) * q_prev + alpha * cdc_step(v, a, v_ref, 0.0, limits)
}

/// `clamp(q_prev - a (V - V_r))`.
pub fn gpdc_step(q_prev: f64, v: f64, a: f64, v_ref: f64, limits: VarLimits) -> f64 {
    limits.clamp(q_prev - a * (v - v_ref))
}

/// `clamp(q_prev - a d (V - V_r))`.
pub fn sgpdc_step(q_prev: f64, v: f64, a: f64, d: f64, v_ref: f64, limits: VarLimits) -> f64 {
    limits.clamp(q_prev - a * d * (v - v_ref))
}

/// History of one self-adaptive controller.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AsalvcBusState {
    pub q_prev: f64,
    pub q_prev2: f64,
    /// Voltage measured two steps back.
    pub v_prev2: f64,
    pub gamma: f64,
    pub mu: f64,
    pub a: f64,
    pub b: f64,
    /// Steps taken so far.
    pub step: usize,
}

impl AsalvcBusState {
    /// Zero output history and a neutral voltage memory.
    pub fn new(v_ref: f64) -> Self {
        AsalvcBusState {
            q_prev: 0.0,
            q_prev2: 0.0,
            v_prev2: v_ref,
            gamma: 1.0,
            mu: 0.0,
            a: 0.0,
            b: 0.0,
            step: 0,
        }
    }

    /// One step driven by the voltage measured after the previous output.
    pub fn offline_step(&mut self, v_meas_prev: f64, l: f64, v_ref: f64, limits: VarLimits) -> f64 {
        self.advance(v_meas_prev, l, v_ref, None, limits)
    }

    /// Online step: `limits` come from the current real power and the
    /// momentum restarts at every multiple of `t_gamma`.
    pub fn online_step(
        &mut self,
        v_meas_prev: f64,
        l: f64,
        v_ref: f64,
        t_gamma: usize,
        limits: VarLimits,
    ) -> f64 {
        self.advance(v_meas_prev, l, v_ref, Some(t_gamma), limits)
    }

    fn advance(&mut self, v: f64, l: f64, v_ref: f64, t_gamma: Option<usize>, limits: VarLimits) -> f64 {
        let k = self.step + 1;
        let reset = t_gamma.is_some_and(|t| k.is_multiple_of(t));
        if k == 1 || reset {
            self.gamma = 1.0;
            self.mu = 0.0;
        } else {
            let next = gamma_next(self.gamma);
            self.mu = (self.gamma - 1.0) / next;
            self.gamma = next;
        }
        let mu = self.mu;
        self.a = (1.0 + mu) / l;
        self.b = (1.0 + mu) * self.q_prev - mu * self.q_prev2 + (mu / l) * (self.v_prev2 - v_ref);
        let q = limits.clamp(-self.a * (v - v_ref) + self.b);
        self.q_prev2 = self.q_prev;
        self.q_prev = q;
        self.v_prev2 = v;
        self.step = k;
        q
    }
}

/// Controller attached to one bus.
#[derive(Debug, Clone, PartialEq)]
pub enum BusController {
    None,
    Cdc { a: f64, dead_band: f64 },
    Ddc { a: f64, alpha: f64, q: f64 },
    Gpdc { a: f64, q: f64 },
    Sgpdc { a: f64, d: f64, q: f64 },
    Asalvc { l: f64, t_gamma: Option<usize>, state: AsalvcBusState },
}

impl BusController {
    /// Next VAr output from this bus's latest voltage measurement.
    pub fn step(&mut self, v: f64, v_ref: f64, limits: VarLimits) -> f64 {
        match self {
            BusController::None => 0.0,
            BusController::Cdc { a, dead_band } => cdc_step(v, *a, v_ref, *dead_band, limits),
            BusController::Ddc { a, alpha, q } => {
                *q = ddc_step(*q, v, *a, *alpha, v_ref, limits);
                *q
            }
            BusController::Gpdc { a, q } => {
                *q = gpdc_step(*q, v, *a, v_ref, limits);
                *q
            }
            BusController::Sgpdc { a, d, q } => {
                *q = sgpdc_step(*q, v, *a, *d, v_ref, limits);
                *q
            }
            BusController::Asalvc { l, t_gamma, state } => match t_gamma {
                Some(t) => state.online_step(v, *l, v_ref, *t, limits),
                None => state.offline_step(v, *l, v_ref, limits),
            },
        }
    }
}

/// One controller per bus, all of the same family.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerBank {
    kind: ControllerKind,
    v_ref: f64,
    buses: Vec<BusController>,
}

impl ControllerBank {
    pub fn new(cfg: &ControllerConfig, n: usize) -> Result<Self> {
        cfg.validate(n)?;
        let buses = (0..n)
            .map(|i| match cfg.kind {
                ControllerKind::None => BusController::None,
                ControllerKind::Cdc => BusController::Cdc {
                    a: cfg.a[i],
                    dead_band: cfg.dead_band,
                },
                ControllerKind::Ddc => BusController::Ddc {
                    a: cfg.a[i],
                    alpha: cfg.alpha[i],
                    q: 0.0,
                },
                ControllerKind::Gpdc => BusController::Gpdc { a: cfg.a[i], q: 0.0 },
                ControllerKind::Sgpdc => BusController::Sgpdc {
                    a: cfg.a[i],
                    d: cfg.d[i],
                    q: 0.0,
                },
                ControllerKind::Asalvc => BusController::Asalvc {
                    l: cfg.l[i],
                    t_gamma: cfg.t_gamma,
                    state: AsalvcBusState::new(cfg.v_ref),
                },
            })
            .collect();
        Ok(ControllerBank {
            kind: cfg.kind,
            v_ref: cfg.v_ref,
            buses,
        })
    }

    pub fn kind(&self) -> ControllerKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.buses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buses.is_empty()
    }

    pub fn buses(&self) -> &[BusController] {
        &self.buses
    }

    /// Steps every bus on its own scalar measurement and limits.
    pub fn step(&mut self, v_meas: &DVector<f64>, limits: &[VarLimits]) -> Result<DVector<f64>> {
        let n = self.buses.len();
        for len in [v_meas.len(), limits.len()] {
            if len != n {
                return Err(Error::Dimension { expected: n, got: len });
            }
        }
        let v_ref = self.v_ref;
        Ok(DVector::from_iterator(
            n,
            self.buses
                .iter_mut()
                .zip(v_meas.iter().zip(limits))
                .map(|(bus, (&v, &lim))| bus.step(v, v_ref, lim)),
        ))
    }

    /// Dumps per-bus state: `bus, kind, q_prev, q_prev2, v_prev2, gamma, mu, a, b, step`.
    pub fn write_state_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["bus", "kind", "q_prev", "q_prev2", "v_prev2", "gamma", "mu", "a", "b", "step"])?;
        for (i, bus) in self.buses.iter().enumerate() {
            let nan = f64::NAN;
            let row = match bus {
                BusController::None => [0.0, nan, nan, nan, nan, nan, nan, 0.0],
                BusController::Cdc { a, .. } => [nan, nan, nan, nan, nan, *a, nan, 0.0],
                BusController::Ddc { a, q, .. } | BusController::Gpdc { a, q } => {
                    [*q, nan, nan, nan, nan, *a, nan, 0.0]
                }
                BusController::Sgpdc { a, d, q } => [*q, nan, nan, nan, nan, a * d, nan, 0.0],
                BusController::Asalvc { state: s, .. } => {
                    [s.q_prev, s.q_prev2, s.v_prev2, s.gamma, s.mu, s.a, s.b, s.step as f64]
                }
            };
            let mut rec = vec![(i + 1).to_string(), self.kind.to_string()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<state csv>", e))?;
        Ok(())
    }
}

/// Paired trajectories of the fast gradient solver and the local
/// self-adaptive controllers fed by the linear model.
#[derive(Debug, Clone)]
pub struct EquivalenceTrace {
    pub gfgm: Vec<DVector<f64>>,
    pub local: Vec<DVector<f64>>,
}

impl EquivalenceTrace {
    /// Largest per-step infinity-norm deviation.
    pub fn max_deviation(&self) -> f64 {
        self.gfgm
            .iter()
            .zip(&self.local)
            .map(|(g, l)| (g - l).amax())
            .fold(0.0, f64::max)
    }
}

/// Runs both forms for `steps` iterations from `q(0) = 0`.
pub fn asalvc_equivalence_trace(problem: &BoxQP, l: &LDiag, steps: usize) -> Result<EquivalenceTrace> {
    let n = problem.n();
    let traj = gfgm_solve(problem, l, StopRule::fixed(steps));
    let gfgm: Vec<DVector<f64>> = traj.iterates().cloned().collect();

    let v_ref = problem.v_ref()[0];
    if problem.v_ref().iter().any(|&v| v != v_ref) {
        return Err(Error::InvalidInput("local controllers take a uniform reference voltage".into()));
    }
    let cfg = ControllerConfig {
        kind: ControllerKind::Asalvc,
        a: Vec::new(),
        alpha: Vec::new(),
        d: Vec::new(),
        l: l.values().iter().copied().collect(),
        t_gamma: None,
        v_ref,
        dead_band: 0.0,
    };
    let mut bank = ControllerBank::new(&cfg, n)?;
    let limits: Vec<VarLimits> = (0..n)
        .map(|i| VarLimits::new(problem.lower()[i], problem.upper()[i]))
        .collect();
    let mut q = DVector::zeros(n);
    let mut local = vec![q.clone()];
    for _ in 0..steps {
        let v = problem.voltage(&q);
        q = bank.step(&v, &limits)?;
        local.push(q.clone());
    }
    Ok(EquivalenceTrace { gfgm, local })
}
