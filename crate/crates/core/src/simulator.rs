//! Closed-loop time stepping of a controller bank against a feeder model.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::acpf::{plant_voltages, SweepOptions};
use crate::controllers::{ControllerBank, ControllerConfig, ControllerKind, VarLimits};
use crate::error::{Error, Result};
use crate::lindistflow::{build_sensitivity, ExogenousState, SensitivityModel};
use crate::network::{Network, NetworkCase};
use crate::optimizer::{BoxQP, StopRule};
use crate::synthesis::{phi_from_a, solve_trace_min_l, LDiag, PhiModel, SynthesisOptions};

/// Lower and upper edge of the acceptable voltage band, pu.
pub const VOLTAGE_BAND: (f64, f64) = (0.95, 1.05);
/// Tolerance when judging whether an output exceeds its limits.
const LIMIT_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PlantKind {
    Linear,
    #[default]
    Nonlinear,
}

/// Voltage response of the feeder to VAr outputs.
#[derive(Debug, Clone)]
pub struct Plant<'a> {
    pub net: &'a Network,
    pub model: &'a SensitivityModel,
    pub kind: PlantKind,
    pub sweep: SweepOptions,
}

impl<'a> Plant<'a> {
    pub fn new(net: &'a Network, model: &'a SensitivityModel, kind: PlantKind) -> Self {
        Plant {
            net,
            model,
            kind,
            sweep: SweepOptions::default(),
        }
    }

    pub fn voltage(&self, q_g: &DVector<f64>, d: &ExogenousState) -> Result<DVector<f64>> {
        match self.kind {
            PlantKind::Linear => self.model.v_linear(q_g, d),
            PlantKind::Nonlinear => Ok(plant_voltages(&self.net.case, &self.net.topo, q_g, d, self.sweep)?.v),
        }
    }
}

/// A feeder with everything the controllers and oracles need.
#[derive(Debug, Clone)]
pub struct Study {
    pub net: Network,
    pub model: SensitivityModel,
    pub phi: PhiModel,
    pub l: LDiag,
}

impl Study {
    pub fn new(case: NetworkCase) -> Result<Self> {
        let net = Network::new(case)?;
        let model = build_sensitivity(&net.case, &net.inc)?;
        let phi = phi_from_a(&net.case, &net.inc)?;
        let l = solve_trace_min_l(model.a(), SynthesisOptions::default())?;
        Ok(Study { net, model, phi, l })
    }

    pub fn n(&self) -> usize {
        self.net.n()
    }

    pub fn plant(&self, kind: PlantKind) -> Plant<'_> {
        Plant::new(&self.net, &self.model, kind)
    }

    pub fn static_limits(&self) -> Vec<VarLimits> {
        let (lo, hi) = self.net.case.static_limits();
        lo.into_iter().zip(hi).map(|(a, b)| VarLimits::new(a, b)).collect()
    }

    /// Box QP for state `d` with a flat reference and the given limits.
    pub fn problem(&self, d: &ExogenousState, v_ref: f64, limits: &[VarLimits]) -> Result<BoxQP> {
        let n = self.n();
        BoxQP::new(
            &self.model,
            &self.phi,
            d,
            DVector::from_element(n, v_ref),
            DVector::from_iterator(n, limits.iter().map(|l| l.q_min)),
            DVector::from_iterator(n, limits.iter().map(|l| l.q_max)),
        )
    }

    pub fn config(&self, kind: ControllerKind) -> ControllerConfig {
        ControllerConfig::standard(kind, &self.model, &self.l)
    }
}

/// Per-step load and PV series, pu.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioTimeline {
    pub dt: f64,
    pub time_s: Vec<f64>,
    pub p_load: Vec<DVector<f64>>,
    pub q_load: Vec<DVector<f64>>,
    pub p_pv: Vec<DVector<f64>>,
}

impl ScenarioTimeline {
    pub fn new(
        dt: f64,
        p_load: Vec<DVector<f64>>,
        q_load: Vec<DVector<f64>>,
        p_pv: Vec<DVector<f64>>,
    ) -> Result<Self> {
        let time_s = (0..p_load.len()).map(|t| t as f64 * dt).collect();
        let tl = ScenarioTimeline {
            dt,
            time_s,
            p_load,
            q_load,
            p_pv,
        };
        tl.validate()?;
        Ok(tl)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(Error::Timeline("step duration must be positive".into()));
        }
        let t = self.p_load.len();
        if t == 0 {
            return Err(Error::Timeline("timeline has no steps".into()));
        }
        if self.q_load.len() != t || self.p_pv.len() != t || self.time_s.len() != t {
            return Err(Error::Timeline("series lengths differ".into()));
        }
        let n = self.p_load[0].len();
        let all = self.p_load.iter().chain(&self.q_load).chain(&self.p_pv);
        for v in all {
            if v.len() != n {
                return Err(Error::Timeline("bus count changes between steps".into()));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Timeline("non-finite value".into()));
            }
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        self.p_load.len()
    }

    pub fn n(&self) -> usize {
        self.p_load[0].len()
    }

    /// Exogenous state at step `t`: PV adds to the net real injection.
    pub fn exogenous(&self, t: usize) -> ExogenousState {
        ExogenousState {
            p: &self.p_load[t] + &self.p_pv[t],
            q_c: -&self.q_load[t],
        }
    }

    /// Inverter windows at step `t` given the PV real power.
    pub fn limits(&self, net: &Network, t: usize) -> Vec<VarLimits> {
        net.case
            .buses()
            .iter()
            .zip(self.p_pv[t].iter())
            .map(|(b, &p)| {
                let (lo, hi) = b.der.limits_at(p);
                VarLimits::new(lo, hi)
            })
            .collect()
    }

    /// CSV with `time_s` followed by `p_load_i, q_load_i, p_pv_i` per bus.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let n = self.n();
        let mut header = vec!["time_s".to_string()];
        for i in 1..=n {
            header.extend([format!("p_load_{i}"), format!("q_load_{i}"), format!("p_pv_{i}")]);
        }
        w.write_record(&header)?;
        for t in 0..self.steps() {
            let mut rec = vec![self.time_s[t].to_string()];
            for i in 0..n {
                rec.extend([
                    self.p_load[t][i].to_string(),
                    self.q_load[t][i].to_string(),
                    self.p_pv[t][i].to_string(),
                ]);
            }
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<timeline csv>", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let header = r.headers()?.clone();
        if header.get(0) != Some("time_s") || header.len() < 4 || (header.len() - 1) % 3 != 0 {
            return Err(Error::Timeline(
                "header must be time_s followed by p_load, q_load, p_pv per bus".into(),
            ));
        }
        let n = (header.len() - 1) / 3;
        let (mut time_s, mut p_load, mut q_load, mut p_pv) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for (row, rec) in r.records().enumerate() {
            let rec = rec?;
            let vals: Vec<f64> = rec
                .iter()
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Timeline(format!("row {}: {e}", row + 1)))?;
            if vals.len() != 1 + 3 * n {
                return Err(Error::Timeline(format!("row {} has {} fields", row + 1, vals.len())));
            }
            time_s.push(vals[0]);
            p_load.push(DVector::from_fn(n, |i, _| vals[1 + 3 * i]));
            q_load.push(DVector::from_fn(n, |i, _| vals[2 + 3 * i]));
            p_pv.push(DVector::from_fn(n, |i, _| vals[3 + 3 * i]));
        }
        let dt = if time_s.len() > 1 { time_s[1] - time_s[0] } else { 1.0 };
        if time_s.windows(2).any(|w| ((w[1] - w[0]) - dt).abs() > 1e-9 * dt.abs().max(1.0)) {
            return Err(Error::Timeline("time_s must be evenly spaced".into()));
        }
        let tl = ScenarioTimeline {
            dt,
            time_s,
            p_load,
            q_load,
            p_pv,
        };
        tl.validate()?;
        Ok(tl)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(std::io::BufReader::new(f))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Static,
    SuddenChange,
    Continuous,
}

/// Knobs for [`make_scenario`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioParams {
    pub steps: usize,
    pub dt: f64,
    /// Step at which the sudden load change applies.
    pub change_step: usize,
    /// Load multiplier after the change.
    pub multiplier: f64,
    /// Peak PV output per inverter, pu. Capped at each inverter's capacity.
    pub pv_peak: f64,
    /// Relative standard deviation of the per-step load perturbation.
    pub load_noise: f64,
    /// Depth of the fast PV (cloud) fluctuation, 0..1.
    pub cloud_depth: f64,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        ScenarioParams {
            steps: 60,
            dt: 1.0,
            change_step: 10,
            multiplier: 1.5,
            pv_peak: 0.0,
            load_noise: 0.02,
            cloud_depth: 0.3,
        }
    }
}

impl ScenarioParams {
    /// A day at 6 s resolution.
    pub fn daily() -> Self {
        ScenarioParams {
            steps: 14_400,
            dt: 6.0,
            ..ScenarioParams::default()
        }
    }
}

/// Step-to-step correlation of the per-bus load and PV fluctuations.
const LOAD_CORRELATION: f64 = 0.98;

/// Relative residential load over the day, peak 1.
fn load_shape(hour: f64) -> f64 {
    let bump = |c: f64, w: f64| (-((hour - c) / w).powi(2)).exp();
    (0.55 + 0.25 * bump(8.0, 2.0) + 0.45 * bump(19.5, 2.5)).min(1.0)
}

/// Clear-sky PV output over the day, peak 1 at noon.
fn pv_shape(hour: f64) -> f64 {
    if (6.0..=18.0).contains(&hour) {
        (std::f64::consts::PI * (hour - 6.0) / 12.0).sin().powf(1.5)
    } else {
        0.0
    }
}

/// Builds a timeline from the case's nominal loads. Deterministic in `seed`.
pub fn make_scenario(net: &Network, kind: ScenarioKind, params: &ScenarioParams, seed: u64) -> Result<ScenarioTimeline> {
    if params.steps == 0 || !(params.dt > 0.0) {
        return Err(Error::Timeline("need at least one step and a positive dt".into()));
    }
    let n = net.n();
    let base_p = DVector::from_iterator(n, net.case.buses().iter().map(|b| b.p_load));
    let base_q = DVector::from_iterator(n, net.case.buses().iter().map(|b| b.q_load));
    let pv_cap = DVector::from_iterator(
        n,
        net.case.buses().iter().map(|b| {
            if b.der.capacity > 0.0 {
                params.pv_peak.min(b.der.capacity)
            } else {
                0.0
            }
        }),
    );
    let mut p_load = Vec::with_capacity(params.steps);
    let mut q_load = Vec::with_capacity(params.steps);
    let mut p_pv = Vec::with_capacity(params.steps);
    match kind {
        ScenarioKind::Static | ScenarioKind::SuddenChange => {
            for t in 0..params.steps {
                let m = if kind == ScenarioKind::SuddenChange && t >= params.change_step {
                    params.multiplier
                } else {
                    1.0
                };
                p_load.push(&base_p * m);
                q_load.push(&base_q * m);
                p_pv.push(&pv_cap * 1.0);
            }
        }
        ScenarioKind::Continuous => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let noise = Normal::new(0.0, params.load_noise.max(0.0))
                .map_err(|e| Error::InvalidInput(format!("load noise: {e}")))?;
            let shock = Normal::new(0.0, 1.0).expect("unit normal");
            // per-bus load wander and PV flicker are AR(1) with unit-variance
            // shocks scaled so the stationary spread is `load_noise`; the cloud
            // cover shared by the feeder moves in ramps (an AR(1) driven by an
            // AR(1) rate)
            let keep = LOAD_CORRELATION;
            let kick = (1.0 - keep * keep).sqrt();
            let mut wander: Vec<f64> = (0..n).map(|_| noise.sample(&mut rng)).collect();
            let mut flicker = vec![0.0f64; n];
            let mut cloud = 0.0f64;
            let mut ramp = 0.0f64;
            for t in 0..params.steps {
                let hour = (t as f64 * params.dt / 3600.0) % 24.0;
                let ls = load_shape(hour);
                let mut pl = &base_p * ls;
                let mut ql = &base_q * ls;
                for i in 0..n {
                    wander[i] = keep * wander[i] + kick * noise.sample(&mut rng);
                    pl[i] *= 1.0 + wander[i];
                    ql[i] *= 1.0 + wander[i];
                }
                ramp = 0.9 * ramp + 0.1 * shock.sample(&mut rng);
                cloud = 0.995 * cloud + 0.1 * ramp;
                let shade = 1.0 - params.cloud_depth * 0.5 * (1.0 + (2.0 * cloud - 1.0).tanh());
                let ps = pv_shape(hour) * shade;
                let pv = DVector::from_fn(n, |i, _| {
                    flicker[i] = keep * flicker[i] + kick * shock.sample(&mut rng);
                    let f = 1.0 - 0.05 * params.cloud_depth * flicker[i].abs().min(2.0);
                    (pv_cap[i] * ps * f).clamp(0.0, pv_cap[i])
                });
                p_load.push(pl);
                q_load.push(ql);
                p_pv.push(pv);
            }
        }
    }
    ScenarioTimeline::new(params.dt, p_load, q_load, p_pv)
}

/// One recorded step of a closed-loop run.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub time_s: f64,
    pub v: DVector<f64>,
    pub q: DVector<f64>,
    pub limits: Vec<VarLimits>,
    /// `1/2 ||V - V_r||^2_Phi` at the plant voltages.
    pub objective: f64,
    /// `||V - V_r||_2`.
    pub mismatch: f64,
}

impl StepRecord {
    pub fn saturated(&self) -> Vec<bool> {
        self.q
            .iter()
            .zip(&self.limits)
            .map(|(&q, l)| l.q_max > l.q_min && ((q - l.q_max).abs() <= LIMIT_SLACK || (q - l.q_min).abs() <= LIMIT_SLACK))
            .collect()
    }

    pub fn band_violations(&self) -> Vec<bool> {
        self.v.iter().map(|&v| v < VOLTAGE_BAND.0 || v > VOLTAGE_BAND.1).collect()
    }

    pub fn capacity_violations(&self) -> Vec<bool> {
        self.q.iter().zip(&self.limits).map(|(&q, l)| !l.contains(q, LIMIT_SLACK)).collect()
    }
}

/// Outcome of a closed-loop run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationTrace {
    pub controller: ControllerKind,
    pub plant: PlantKind,
    /// Entry 0 is the measurement before any control action.
    pub steps: Vec<StepRecord>,
    /// Offline runs: the change criterion was met.
    pub converged: bool,
    /// Set when the plant failed mid-run; the trace stops at the last good step.
    pub failure: Option<(usize, String)>,
}

impl SimulationTrace {
    /// Control steps taken (excludes the initial measurement).
    pub fn iterations(&self) -> usize {
        self.steps.len().saturating_sub(1)
    }

    pub fn last(&self) -> &StepRecord {
        self.steps.last().expect("trace has the initial step")
    }

    /// Last step whose output moved by more than `tol` in the infinity norm.
    pub fn settling_step(&self, tol: f64) -> usize {
        self.steps
            .windows(2)
            .rev()
            .find(|w| (&w[1].q - &w[0].q).amax() > tol)
            .map_or(0, |w| w[1].step)
    }

    /// CSV: `step, time_s, objective, mismatch, band_violations,
    /// capacity_violations, saturated, v_1..v_N, q_1..q_N`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let n = self.steps.first().map_or(0, |s| s.v.len());
        let mut header: Vec<String> = [
            "step",
            "time_s",
            "objective",
            "mismatch",
            "band_violations",
            "capacity_violations",
            "saturated",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        header.extend((1..=n).map(|i| format!("v_{i}")));
        header.extend((1..=n).map(|i| format!("q_{i}")));
        w.write_record(&header)?;
        let count = |v: Vec<bool>| v.into_iter().filter(|&b| b).count().to_string();
        for s in &self.steps {
            let mut rec = vec![
                s.step.to_string(),
                s.time_s.to_string(),
                format!("{:e}", s.objective),
                format!("{:e}", s.mismatch),
                count(s.band_violations()),
                count(s.capacity_violations()),
                count(s.saturated()),
            ];
            rec.extend(s.v.iter().map(|v| v.to_string()));
            rec.extend(s.q.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<trace csv>", e))?;
        Ok(())
    }
}

fn record(
    step: usize,
    time_s: f64,
    v: DVector<f64>,
    q: DVector<f64>,
    limits: Vec<VarLimits>,
    phi: &PhiModel,
    v_ref: f64,
) -> StepRecord {
    let e = v.add_scalar(-v_ref);
    StepRecord {
        step,
        time_s,
        objective: 0.5 * e.dot(&phi.apply(&e)),
        mismatch: e.norm(),
        v,
        q,
        limits,
    }
}

/// Fixed exogenous state: iterate measure, control, plant until the outputs settle.
pub fn run_offline(
    plant: &Plant,
    phi: &PhiModel,
    cfg: &ControllerConfig,
    d: &ExogenousState,
    limits: &[VarLimits],
    stop: StopRule,
) -> Result<SimulationTrace> {
    let n = plant.net.n();
    let mut bank = ControllerBank::new(cfg, n)?;
    let mut q = DVector::zeros(n);
    let mut v = plant.voltage(&q, d)?;
    let mut steps = vec![record(0, 0.0, v.clone(), q.clone(), limits.to_vec(), phi, cfg.v_ref)];
    let mut converged = false;
    for k in 1..=stop.max_iter {
        let next = bank.step(&v, limits)?;
        let change = (&next - &q).amax();
        q = next;
        v = plant.voltage(&q, d).map_err(|e| Error::Diverged {
            step: k,
            source: Box::new(e),
        })?;
        steps.push(record(k, k as f64, v.clone(), q.clone(), limits.to_vec(), phi, cfg.v_ref));
        if change <= stop.tol {
            converged = true;
            break;
        }
    }
    Ok(SimulationTrace {
        controller: cfg.kind,
        plant: plant.kind,
        steps,
        converged,
        failure: None,
    })
}

/// Optional additive Gaussian noise on the voltage measurements.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct OnlineOptions {
    pub noise_std: f64,
    pub seed: u64,
}

/// Time-varying run: each step reads the voltage measured after the previous
/// step's outputs, then the plant is solved for the new state.
pub fn run_online(
    plant: &Plant,
    phi: &PhiModel,
    cfg: &ControllerConfig,
    timeline: &ScenarioTimeline,
    opts: OnlineOptions,
) -> Result<SimulationTrace> {
    let n = plant.net.n();
    if timeline.n() != n {
        return Err(Error::Dimension {
            expected: n,
            got: timeline.n(),
        });
    }
    let mut bank = ControllerBank::new(cfg, n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let noise = if opts.noise_std > 0.0 {
        Some(Normal::new(0.0, opts.noise_std).map_err(|e| Error::InvalidInput(format!("noise: {e}")))?)
    } else {
        None
    };
    let mut trace = SimulationTrace {
        controller: cfg.kind,
        plant: plant.kind,
        steps: Vec::with_capacity(timeline.steps() + 1),
        converged: false,
        failure: None,
    };
    let d0 = timeline.exogenous(0);
    let mut q = DVector::zeros(n);
    let mut v = plant.voltage(&q, &d0)?;
    trace
        .steps
        .push(record(0, 0.0, v.clone(), q.clone(), timeline.limits(plant.net, 0), phi, cfg.v_ref));
    for t in 0..timeline.steps() {
        let d = timeline.exogenous(t);
        let limits = timeline.limits(plant.net, t);
        let mut meas = v.clone();
        if let Some(nd) = &noise {
            for x in meas.iter_mut() {
                *x += nd.sample(&mut rng);
            }
        }
        q = bank.step(&meas, &limits)?;
        v = match plant.voltage(&q, &d) {
            Ok(v) => v,
            Err(e) => {
                trace.failure = Some((t + 1, e.to_string()));
                return Ok(trace);
            }
        };
        trace
            .steps
            .push(record(t + 1, timeline.time_s[t], v.clone(), q.clone(), limits, phi, cfg.v_ref));
    }
    Ok(trace)
}

/// Summary statistics of a trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    pub controller: ControllerKind,
    pub steps: usize,
    pub converged: bool,
    pub time_average_objective: f64,
    pub final_objective: f64,
    pub final_mismatch: f64,
    pub max_voltage: f64,
    pub min_voltage: f64,
    /// Steps with at least one bus outside the voltage band.
    pub voltage_violation_steps: usize,
    /// Bus-steps outside the voltage band.
    pub voltage_violations: usize,
    /// Bus-steps whose output exceeded its limits.
    pub capacity_violations: usize,
    pub failure: Option<String>,
}

/// Statistics over the control steps (the initial measurement is excluded
/// unless it is the only entry).
pub fn metrics(trace: &SimulationTrace) -> Metrics {
    let body: &[StepRecord] = if trace.steps.len() > 1 { &trace.steps[1..] } else { &trace.steps };
    let mut m = Metrics {
        controller: trace.controller,
        steps: trace.iterations(),
        converged: trace.converged,
        time_average_objective: 0.0,
        final_objective: body.last().map_or(f64::NAN, |s| s.objective),
        final_mismatch: body.last().map_or(f64::NAN, |s| s.mismatch),
        max_voltage: f64::NEG_INFINITY,
        min_voltage: f64::INFINITY,
        voltage_violation_steps: 0,
        voltage_violations: 0,
        capacity_violations: 0,
        failure: trace.failure.as_ref().map(|(t, e)| format!("step {t}: {e}")),
    };
    for s in body {
        m.time_average_objective += s.objective;
        m.max_voltage = m.max_voltage.max(s.v.max());
        m.min_voltage = m.min_voltage.min(s.v.min());
        let band = s.band_violations().into_iter().filter(|&b| b).count();
        m.voltage_violations += band;
        m.voltage_violation_steps += usize::from(band > 0);
        m.capacity_violations += s.capacity_violations().into_iter().filter(|&b| b).count();
    }
    if !body.is_empty() {
        m.time_average_objective /= body.len() as f64;
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lindistflow::build_sensitivity;
    use crate::network::{random_radial_case, synthetic_feeder, BusData, DerSpec, FeederParams, Line, NetworkCase};
    use crate::optimizer::{centralized_oracle, BoxQP};
    use crate::synthesis::{phi_from_a, solve_trace_min_l, LDiag, SynthesisOptions};

    struct Fixture {
        net: Network,
        model: SensitivityModel,
        phi: PhiModel,
        l: LDiag,
    }

    fn fixture(case: NetworkCase) -> Fixture {
        let net = Network::new(case).unwrap();
        let model = build_sensitivity(&net.case, &net.inc).unwrap();
        let phi = phi_from_a(&net.case, &net.inc).unwrap();
        let l = solve_trace_min_l(model.a(), SynthesisOptions::default()).unwrap();
        Fixture { net, model, phi, l }
    }

    fn static_limits(net: &Network) -> Vec<VarLimits> {
        let (lo, hi) = net.case.static_limits();
        lo.into_iter().zip(hi).map(|(a, b)| VarLimits::new(a, b)).collect()
    }

    fn single_line() -> NetworkCase {
        NetworkCase::new(
            1.0,
            4.16,
            100.0,
            vec![Line { from: 0, to: 1, r: 0.01, x: 0.02 }],
            vec![BusData {
                p_load: -0.5,
                q_load: -0.2,
                der: DerSpec::fixed(-1.0, 1.0),
            }],
        )
        .unwrap()
    }

    #[test]
    fn asalvc_desk_case_converges_fast() {
        let fx = fixture(single_line());
        let plant = Plant::new(&fx.net, &fx.model, PlantKind::Linear);
        let cfg = ControllerConfig::standard(ControllerKind::Asalvc, &fx.model, &fx.l);
        let d = ExogenousState::nominal(&fx.net.case);
        let tr = run_offline(&plant, &fx.phi, &cfg, &d, &static_limits(&fx.net), StopRule::default()).unwrap();
        assert!(tr.converged && tr.iterations() <= 2);
        assert!((tr.last().q[0] - 0.45).abs() < 1e-12);
    }

    #[test]
    fn zero_capacity_matches_no_control() {
        let case = random_radial_case(10, 4).with_der(DerSpec::with_capacity(0.0));
        let fx = fixture(case);
        let plant = Plant::new(&fx.net, &fx.model, PlantKind::Nonlinear);
        let d = ExogenousState::nominal(&fx.net.case);
        let free = plant.voltage(&DVector::zeros(10), &d).unwrap();
        for kind in ControllerKind::ALL {
            let cfg = ControllerConfig::standard(kind, &fx.model, &fx.l);
            let tr = run_offline(&plant, &fx.phi, &cfg, &d, &static_limits(&fx.net), StopRule::fixed(5)).unwrap();
            assert!(tr.steps.iter().all(|s| s.v == free), "{kind}");
        }
    }

    #[test]
    fn asalvc_not_slower_than_gpdc() {
        let fx = fixture(random_radial_case(40, 21));
        let plant = Plant::new(&fx.net, &fx.model, PlantKind::Linear);
        let d = ExogenousState::nominal(&fx.net.case);
        let lim = static_limits(&fx.net);
        let stop = StopRule {
            tol: 1e-6,
            max_iter: 20_000,
        };
        let run = |kind| {
            let cfg = ControllerConfig::standard(kind, &fx.model, &fx.l);
            run_offline(&plant, &fx.phi, &cfg, &d, &lim, stop).unwrap().iterations()
        };
        let mut cfg = ControllerConfig::standard(ControllerKind::Asalvc, &fx.model, &fx.l);
        cfg.t_gamma = None;
        let asalvc = run_offline(&plant, &fx.phi, &cfg, &d, &lim, stop).unwrap().iterations();
        assert!(asalvc <= run(ControllerKind::Gpdc));
    }

    fn oracle_q(fx: &Fixture) -> DVector<f64> {
        let n = fx.net.n();
        let d = ExogenousState::nominal(&fx.net.case);
        let (lo, hi) = fx.net.case.static_limits();
        let p = BoxQP::new(
            &fx.model,
            &fx.phi,
            &d,
            DVector::from_element(n, 1.0),
            DVector::from_vec(lo),
            DVector::from_vec(hi),
        )
        .unwrap();
        centralized_oracle(&p).unwrap().q
    }

    fn constant_run(fx: &Fixture, steps: usize) -> SimulationTrace {
        let plant = Plant::new(&fx.net, &fx.model, PlantKind::Linear);
        let params = ScenarioParams {
            steps,
            ..ScenarioParams::default()
        };
        let tl = make_scenario(&fx.net, ScenarioKind::Static, &params, 0).unwrap();
        let cfg = ControllerConfig::standard(ControllerKind::Asalvc, &fx.model, &fx.l);
        run_online(&plant, &fx.phi, &cfg, &tl, OnlineOptions::default()).unwrap()
    }

    #[test]
    fn constant_timeline_reaches_offline_fixed_point() {
        let params = FeederParams {
            buses: 30,
            trunk_len: 10,
            ..FeederParams::default()
        };
        let fx = fixture(synthetic_feeder(&params, 2));
        let online = constant_run(&fx, 60);
        let q_star = oracle_q(&fx);
        assert!((&online.last().q - &q_star).amax() <= 1e-6);

        // heterogeneous impedances converge linearly and need a longer horizon
        let fx = fixture(random_radial_case(15, 2));
        let online = constant_run(&fx, 1500);
        assert!((&online.last().q - oracle_q(&fx)).amax() <= 1e-6);
    }

    #[test]
    fn full_pv_pins_output() {
        let case = random_radial_case(5, 3).with_der(DerSpec::with_capacity(0.1));
        let fx = fixture(case);
        let plant = Plant::new(&fx.net, &fx.model, PlantKind::Nonlinear);
        let params = ScenarioParams {
            steps: 5,
            pv_peak: 0.1,
            ..ScenarioParams::default()
        };
        let tl = make_scenario(&fx.net, ScenarioKind::Static, &params, 0).unwrap();
        let cfg = ControllerConfig::standard(ControllerKind::Asalvc, &fx.model, &fx.l);
        let tr = run_online(&plant, &fx.phi, &cfg, &tl, OnlineOptions::default()).unwrap();
        assert!(tr.steps[1..].iter().all(|s| s.q.iter().all(|&q| q == 0.0)));
    }

    #[test]
    fn scenario_shapes() {
        let net = Network::new(synthetic_feeder(&FeederParams::default(), 1)).unwrap();
        let tl = make_scenario(&net, ScenarioKind::Static, &ScenarioParams::default(), 0).unwrap();
        assert!(tl.p_load.iter().all(|p| p.iter().all(|&v| (v + 0.01).abs() < 1e-15)));
        assert!(tl.q_load.iter().all(|q| q.iter().all(|&v| (v + 0.005).abs() < 1e-15)));

        let s = make_scenario(&net, ScenarioKind::SuddenChange, &ScenarioParams::default(), 0).unwrap();
        assert!((0..10).all(|t| s.p_load[t] == s.p_load[0]));
        assert!((10..s.steps()).all(|t| (&s.p_load[t] - &s.p_load[0] * 1.5).amax() < 1e-15));

        let params = ScenarioParams {
            steps: 500,
            dt: 6.0,
            pv_peak: 0.3,
            ..ScenarioParams::default()
        };
        let a = make_scenario(&net, ScenarioKind::Continuous, &params, 9).unwrap();
        let b = make_scenario(&net, ScenarioKind::Continuous, &params, 9).unwrap();
        let c = make_scenario(&net, ScenarioKind::Continuous, &params, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn timeline_csv_round_trip() {
        let net = Network::new(random_radial_case(3, 1)).unwrap();
        let params = ScenarioParams {
            steps: 20,
            dt: 6.0,
            pv_peak: 0.05,
            ..ScenarioParams::default()
        };
        let tl = make_scenario(&net, ScenarioKind::Continuous, &params, 4).unwrap();
        let mut buf = Vec::new();
        tl.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("time_s,p_load_1,q_load_1,p_pv_1,p_load_2"));
        let back = ScenarioTimeline::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, tl);
        assert!(ScenarioTimeline::read_csv("time_s,a,b\n0,1,2\n".as_bytes()).is_err());
    }

    fn fake_step(step: usize, v: Vec<f64>, objective: f64) -> StepRecord {
        let n = v.len();
        StepRecord {
            step,
            time_s: step as f64,
            v: DVector::from_vec(v),
            q: DVector::zeros(n),
            limits: vec![VarLimits::new(-0.1, 0.1); n],
            objective,
            mismatch: 0.0,
        }
    }

    fn fake_trace(steps: Vec<StepRecord>) -> SimulationTrace {
        SimulationTrace {
            controller: ControllerKind::None,
            plant: PlantKind::Linear,
            steps,
            converged: false,
            failure: None,
        }
    }

    #[test]
    fn metric_arithmetic() {
        let flat = fake_trace(vec![fake_step(0, vec![1.0; 2], 0.0), fake_step(1, vec![1.0; 2], 0.0)]);
        assert_eq!(metrics(&flat).time_average_objective, 0.0);
        let two = fake_trace(vec![
            fake_step(0, vec![1.0], 9.0),
            fake_step(1, vec![1.0], 2.0),
            fake_step(2, vec![1.0], 4.0),
        ]);
        assert_eq!(metrics(&two).time_average_objective, 3.0);
        let excursion = fake_trace(vec![
            fake_step(0, vec![1.0, 1.0], 0.0),
            fake_step(1, vec![1.0, 1.0], 0.0),
            fake_step(2, vec![1.06, 1.0], 0.0),
            fake_step(3, vec![1.0, 1.0], 0.0),
        ]);
        let m = metrics(&excursion);
        assert_eq!((m.voltage_violations, m.voltage_violation_steps), (1, 1));
        assert_eq!(m.max_voltage, 1.06);
    }

    #[test]
    fn trace_csv_and_determinism() {
        let fx = fixture(random_radial_case(6, 8).with_der(DerSpec::with_capacity(0.2)));
        let plant = Plant::new(&fx.net, &fx.model, PlantKind::Nonlinear);
        let params = ScenarioParams {
            steps: 50,
            dt: 6.0,
            pv_peak: 0.1,
            ..ScenarioParams::default()
        };
        let tl = make_scenario(&fx.net, ScenarioKind::Continuous, &params, 3).unwrap();
        let cfg = ControllerConfig::standard(ControllerKind::Asalvc, &fx.model, &fx.l);
        let opts = OnlineOptions {
            noise_std: 1e-4,
            seed: 5,
        };
        let a = run_online(&plant, &fx.phi, &cfg, &tl, opts).unwrap();
        let b = run_online(&plant, &fx.phi, &cfg, &tl, opts).unwrap();
        assert_eq!(a, b);
        let mut buf = Vec::new();
        a.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("step,time_s,objective,mismatch,band_violations,capacity_violations,saturated,v_1"));
        assert_eq!(text.lines().count(), 52);
    }
}
