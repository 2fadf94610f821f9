use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A line segment feeding bus `to` from its predecessor `from`. Impedances in pu.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Line {
    pub from: usize,
    pub to: usize,
    pub r: f64,
    pub x: f64,
}

/// How an inverter's reactive-power window is determined.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VarMode {
    /// Fixed window in pu. When the inverter also has a nonzero capacity the
    /// window is intersected with the capacity circle.
    Fixed { q_min: f64, q_max: f64 },
    /// `|q| <= sqrt(S^2 - p_pv^2)`.
    CapacityDerived,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerSpec {
    /// Apparent-power rating in pu. Zero means no inverter unless a fixed
    /// window is given.
    pub capacity: f64,
    pub mode: VarMode,
}

impl DerSpec {
    pub const NONE: DerSpec = DerSpec {
        capacity: 0.0,
        mode: VarMode::CapacityDerived,
    };

    pub fn fixed(q_min: f64, q_max: f64) -> Self {
        DerSpec {
            capacity: 0.0,
            mode: VarMode::Fixed { q_min, q_max },
        }
    }

    pub fn with_capacity(capacity: f64) -> Self {
        DerSpec {
            capacity,
            mode: VarMode::CapacityDerived,
        }
    }

    /// Reactive-power window while the inverter injects `p_pv` real power.
    pub fn limits_at(&self, p_pv: f64) -> (f64, f64) {
        let headroom = if self.capacity > 0.0 {
            (self.capacity * self.capacity - p_pv * p_pv).max(0.0).sqrt()
        } else {
            0.0
        };
        match self.mode {
            VarMode::CapacityDerived => (-headroom, headroom),
            VarMode::Fixed { q_min, q_max } if self.capacity > 0.0 => {
                (q_min.max(-headroom), q_max.min(headroom))
            }
            VarMode::Fixed { q_min, q_max } => (q_min, q_max),
        }
    }
}

/// Per-bus nominal data. Loads are signed injections in pu (consumption negative).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BusData {
    pub p_load: f64,
    pub q_load: f64,
    pub der: DerSpec,
}

impl Default for BusData {
    fn default() -> Self {
        BusData {
            p_load: 0.0,
            q_load: 0.0,
            der: DerSpec::NONE,
        }
    }
}

/// A validated radial feeder. Bus 0 is the slack bus; buses `1..=N` are
/// dense indices and line `j - 1` feeds bus `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkCase {
    labels: Vec<String>,
    slack_voltage: f64,
    base_kv: f64,
    base_kva: f64,
    lines: Vec<Line>,
    buses: Vec<BusData>,
}

impl NetworkCase {
    /// Builds a case from dense-indexed parts. `lines` may come in any order;
    /// each non-slack bus must be the receiving end of exactly one line.
    pub fn new(
        slack_voltage: f64,
        base_kv: f64,
        base_kva: f64,
        lines: Vec<Line>,
        buses: Vec<BusData>,
    ) -> Result<Self> {
        let labels = (0..=buses.len()).map(|i| i.to_string()).collect();
        Self::with_labels(labels, slack_voltage, base_kv, base_kva, lines, buses)
    }

    pub fn with_labels(
        labels: Vec<String>,
        slack_voltage: f64,
        base_kv: f64,
        base_kva: f64,
        lines: Vec<Line>,
        buses: Vec<BusData>,
    ) -> Result<Self> {
        let n = buses.len();
        if n == 0 {
            return Err(Error::InvalidCase("case has no non-slack buses".into()));
        }
        if labels.len() != n + 1 {
            return Err(Error::Dimension {
                expected: n + 1,
                got: labels.len(),
            });
        }
        if !(slack_voltage.is_finite() && slack_voltage > 0.0) {
            return Err(Error::InvalidCase(format!(
                "slack voltage must be positive, got {slack_voltage}"
            )));
        }
        if !(base_kv > 0.0 && base_kva > 0.0) {
            return Err(Error::InvalidCase("bases must be positive".into()));
        }

        let mut slots: Vec<Option<Line>> = vec![None; n];
        for line in lines {
            if line.to == 0 {
                return Err(Error::NotRadial(format!(
                    "line {} -> {} feeds the slack bus",
                    labels[line.from.min(n)],
                    labels[0]
                )));
            }
            if line.to > n || line.from > n {
                return Err(Error::InvalidCase(format!(
                    "line {} -> {} references an unknown bus",
                    line.from, line.to
                )));
            }
            if line.from == line.to {
                return Err(Error::NotRadial(format!(
                    "self-loop at bus {}",
                    labels[line.to]
                )));
            }
            if !(line.x > 0.0) {
                return Err(Error::NonpositiveReactance(labels[line.to].clone()));
            }
            if !(line.r >= 0.0) || !line.r.is_finite() || !line.x.is_finite() {
                return Err(Error::InvalidCase(format!(
                    "invalid resistance on line into bus {}",
                    labels[line.to]
                )));
            }
            match &slots[line.to - 1] {
                Some(prev) if prev.from == line.from => {
                    return Err(Error::DuplicateLine(labels[line.to].clone()))
                }
                Some(_) => {
                    return Err(Error::NotRadial(format!(
                        "bus {} has two incoming lines",
                        labels[line.to]
                    )))
                }
                None => slots[line.to - 1] = Some(line),
            }
        }
        let lines: Vec<Line> = slots
            .into_iter()
            .enumerate()
            .map(|(k, s)| s.ok_or_else(|| Error::Disconnected(labels[k + 1].clone())))
            .collect::<Result<_>>()?;

        for (k, b) in buses.iter().enumerate() {
            let finite = b.p_load.is_finite() && b.q_load.is_finite() && b.der.capacity.is_finite();
            if !finite || b.der.capacity < 0.0 {
                return Err(Error::InvalidCase(format!(
                    "bus {} has invalid load or DER data",
                    labels[k + 1]
                )));
            }
            if let VarMode::Fixed { q_min, q_max } = b.der.mode {
                if !(q_min <= q_max) {
                    return Err(Error::InvalidCase(format!(
                        "bus {} has q_min > q_max",
                        labels[k + 1]
                    )));
                }
            }
        }

        // every bus must hang off the slack bus
        let mut children = vec![Vec::new(); n + 1];
        for l in &lines {
            children[l.from].push(l.to);
        }
        let mut seen = vec![false; n + 1];
        seen[0] = true;
        let mut queue = VecDeque::from([0usize]);
        while let Some(b) = queue.pop_front() {
            for &c in &children[b] {
                if !seen[c] {
                    seen[c] = true;
                    queue.push_back(c);
                }
            }
        }
        if let Some(b) = seen.iter().position(|s| !s) {
            return Err(Error::Disconnected(labels[b].clone()));
        }

        Ok(NetworkCase {
            labels,
            slack_voltage,
            base_kv,
            base_kva,
            lines,
            buses,
        })
    }

    /// The same case renumbered the way [`parse_case`] numbers a file:
    /// breadth-first from the slack bus, children in label order. Writing a
    /// canonical case and loading it back gives an identical case.
    pub fn canonical(&self) -> NetworkCase {
        let n = self.n();
        let mut children = vec![Vec::new(); n + 1];
        for l in &self.lines {
            children[l.from].push(l.to);
        }
        let mut order = Vec::with_capacity(n + 1);
        let mut queue = VecDeque::from([0usize]);
        while let Some(b) = queue.pop_front() {
            order.push(b);
            let mut cs = children[b].clone();
            cs.sort_by(|a, b| natural_cmp(&self.labels[*a], &self.labels[*b]));
            queue.extend(cs);
        }
        let mut index = vec![0usize; n + 1];
        for (new, &old) in order.iter().enumerate() {
            index[old] = new;
        }
        let lines = self
            .lines
            .iter()
            .map(|l| Line {
                from: index[l.from],
                to: index[l.to],
                ..*l
            })
            .collect();
        NetworkCase {
            labels: order.iter().map(|&b| self.labels[b].clone()).collect(),
            buses: order[1..].iter().map(|&b| self.buses[b - 1]).collect(),
            lines,
            ..self.clone()
        }
        .with_sorted_lines()
    }

    fn with_sorted_lines(mut self) -> NetworkCase {
        self.lines.sort_by_key(|l| l.to);
        self
    }

    /// Number of non-slack buses.
    pub fn n(&self) -> usize {
        self.buses.len()
    }

    pub fn slack_voltage(&self) -> f64 {
        self.slack_voltage
    }

    pub fn base_kv(&self) -> f64 {
        self.base_kv
    }

    pub fn base_kva(&self) -> f64 {
        self.base_kva
    }

    /// Base impedance in ohm.
    pub fn base_ohm(&self) -> f64 {
        self.base_kv * self.base_kv * 1000.0 / self.base_kva
    }

    /// Lines ordered by receiving bus: `lines()[j - 1]` feeds bus `j`.
    pub fn lines(&self) -> &[Line] {
        &self.lines
    }

    pub fn line_into(&self, bus: usize) -> &Line {
        &self.lines[bus - 1]
    }

    /// `buses()[i - 1]` is bus `i`.
    pub fn buses(&self) -> &[BusData] {
        &self.buses
    }

    pub fn bus(&self, bus: usize) -> &BusData {
        &self.buses[bus - 1]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, bus: usize) -> &str {
        &self.labels[bus]
    }

    /// Returns a copy with every bus load multiplied by `factor`.
    pub fn scaled_loads(&self, factor: f64) -> NetworkCase {
        let mut out = self.clone();
        for b in &mut out.buses {
            b.p_load *= factor;
            b.q_load *= factor;
        }
        out
    }

    /// Returns a copy with the DER spec replaced on every bus.
    pub fn with_der(&self, der: DerSpec) -> NetworkCase {
        let mut out = self.clone();
        for b in &mut out.buses {
            b.der = der;
        }
        out
    }

    /// Static reactive-power window per bus (no PV real power).
    pub fn static_limits(&self) -> (Vec<f64>, Vec<f64>) {
        self.buses.iter().map(|b| b.der.limits_at(0.0)).unzip()
    }
}

// ---------------------------------------------------------------------------
// File format

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
enum Label {
    Num(i64),
    Str(String),
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Num(n) => write!(f, "{n}"),
            Label::Str(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CaseFile {
    base_kv: f64,
    base_kva: f64,
    slack_voltage: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    slack: Option<Label>,
    #[serde(default)]
    buses: Vec<BusEntry>,
    lines: Vec<LineEntry>,
}

/// Loads are consumption-positive. Each quantity may be given in physical
/// units or in pu, not both.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BusEntry {
    id: Label,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    p_load_kw: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    q_load_kvar: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    p_load_pu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    q_load_pu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    der: Option<DerEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DerEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    capacity_kva: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    capacity_pu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    q_min_kvar: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    q_max_kvar: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    q_min_pu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    q_max_pu: Option<f64>,
}

/// One quantity given either in physical units (divided by `base`) or in pu.
fn either_unit(phys: Option<f64>, pu: Option<f64>, base: f64, what: &str, bus: &str) -> Result<Option<f64>> {
    match (phys, pu) {
        (Some(_), Some(_)) => Err(Error::InvalidCase(format!(
            "bus {bus}: {what} given both in physical units and in pu"
        ))),
        (Some(v), None) => Ok(Some(v / base)),
        (None, v) => Ok(v),
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LineEntry {
    from: Label,
    to: Label,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    r_ohm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    x_ohm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    r_pu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    x_pu: Option<f64>,
}

/// Numeric labels compare as numbers, everything else lexically.
fn natural_cmp(a: &str, b: &str) -> Ordering {
    match (a.parse::<i64>(), b.parse::<i64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y),
        (Ok(_), Err(_)) => Ordering::Less,
        (Err(_), Ok(_)) => Ordering::Greater,
        _ => a.cmp(b),
    }
}

/// Reads and validates a JSON case file.
pub fn load_case(path: impl AsRef<Path>) -> Result<NetworkCase> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_case(&text)
}

/// Parses a JSON case document. Bus labels are renumbered to dense indices
/// in breadth-first order from the slack bus, children visited in label order.
pub fn parse_case(text: &str) -> Result<NetworkCase> {
    let file: CaseFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    if file.lines.is_empty() {
        return Err(Error::InvalidCase("case has no lines".into()));
    }
    if !(file.base_kv > 0.0 && file.base_kva > 0.0) {
        return Err(Error::InvalidCase("bases must be positive".into()));
    }
    let base_ohm = file.base_kv * file.base_kv * 1000.0 / file.base_kva;

    let ohm = file
        .lines
        .iter()
        .all(|l| l.r_ohm.is_some() && l.x_ohm.is_some() && l.r_pu.is_none() && l.x_pu.is_none());
    let pu = file
        .lines
        .iter()
        .all(|l| l.r_pu.is_some() && l.x_pu.is_some() && l.r_ohm.is_none() && l.x_ohm.is_none());
    if !ohm && !pu {
        return Err(Error::Parse(
            "line impedances must be given either all in ohm (r_ohm, x_ohm) or all in pu (r_pu, x_pu)"
                .into(),
        ));
    }

    // incoming line per receiving label
    let mut incoming: HashMap<String, (String, f64, f64)> = HashMap::new();
    for l in &file.lines {
        let (from, to) = (l.from.to_string(), l.to.to_string());
        let (r, x) = if ohm {
            (l.r_ohm.unwrap() / base_ohm, l.x_ohm.unwrap() / base_ohm)
        } else {
            (l.r_pu.unwrap(), l.x_pu.unwrap())
        };
        if from == to {
            return Err(Error::NotRadial(format!("self-loop at bus {to}")));
        }
        if let Some((prev_from, _, _)) = incoming.get(&to) {
            if *prev_from == from {
                return Err(Error::DuplicateLine(to));
            }
            return Err(Error::NotRadial(format!("bus {to} has two incoming lines")));
        }
        incoming.insert(to, (from, r, x));
    }

    let slack = match &file.slack {
        Some(s) => s.to_string(),
        None => {
            let mut roots: Vec<String> = file
                .lines
                .iter()
                .map(|l| l.from.to_string())
                .filter(|f| !incoming.contains_key(f))
                .collect();
            roots.sort_by(|a, b| natural_cmp(a, b));
            roots.dedup();
            match roots.len() {
                1 => roots.pop().unwrap(),
                0 => return Err(Error::NotRadial("no root bus: every bus has an incoming line".into())),
                _ => {
                    return Err(Error::Disconnected(format!(
                        "{} (multiple root buses: {})",
                        roots[1],
                        roots.join(", ")
                    )))
                }
            }
        }
    };
    if incoming.contains_key(&slack) {
        return Err(Error::NotRadial(format!("line feeds the slack bus {slack}")));
    }

    // label-keyed children, BFS for dense numbering
    let mut children: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for (to, (from, _, _)) in &incoming {
        children.entry(from.clone()).or_default().push(to.clone());
    }
    for c in children.values_mut() {
        c.sort_by(|a, b| natural_cmp(a, b));
    }
    let mut labels = vec![slack.clone()];
    let mut index: HashMap<String, usize> = HashMap::from([(slack.clone(), 0)]);
    let mut queue = VecDeque::from([slack.clone()]);
    while let Some(b) = queue.pop_front() {
        if let Some(cs) = children.get(&b) {
            for c in cs {
                if !index.contains_key(c) {
                    index.insert(c.clone(), labels.len());
                    labels.push(c.clone());
                    queue.push_back(c.clone());
                }
            }
        }
    }
    if let Some(to) = incoming.keys().filter(|k| !index.contains_key(*k)).min_by(|a, b| natural_cmp(a, b)) {
        return Err(Error::Disconnected(to.clone()));
    }
    let n = labels.len() - 1;

    let mut lines = Vec::with_capacity(n);
    for (to, (from, r, x)) in &incoming {
        lines.push(Line {
            from: index[from],
            to: index[to],
            r: *r,
            x: *x,
        });
    }

    let mut buses = vec![BusData::default(); n];
    let mut seen = vec![false; n + 1];
    for entry in &file.buses {
        let label = entry.id.to_string();
        let Some(&i) = index.get(&label) else {
            return Err(Error::Disconnected(label));
        };
        if i == 0 {
            return Err(Error::InvalidCase(format!(
                "slack bus {label} cannot carry load or DER data"
            )));
        }
        if seen[i] {
            return Err(Error::InvalidCase(format!("bus {label} listed twice")));
        }
        seen[i] = true;
        let kva = file.base_kva;
        let der = match &entry.der {
            None => DerSpec::NONE,
            Some(d) => {
                let capacity = either_unit(d.capacity_kva, d.capacity_pu, kva, "capacity", &label)?.unwrap_or(0.0);
                let lo = either_unit(d.q_min_kvar, d.q_min_pu, kva, "q_min", &label)?;
                let hi = either_unit(d.q_max_kvar, d.q_max_pu, kva, "q_max", &label)?;
                match (lo, hi) {
                    (Some(q_min), Some(q_max)) => DerSpec {
                        capacity,
                        mode: VarMode::Fixed { q_min, q_max },
                    },
                    (None, None) => DerSpec::with_capacity(capacity),
                    _ => {
                        return Err(Error::Parse(format!(
                            "bus {label}: q_min and q_max must be given together"
                        )))
                    }
                }
            }
        };
        let p = either_unit(entry.p_load_kw, entry.p_load_pu, kva, "p_load", &label)?.unwrap_or(0.0);
        let q = either_unit(entry.q_load_kvar, entry.q_load_pu, kva, "q_load", &label)?.unwrap_or(0.0);
        buses[i - 1] = BusData {
            p_load: -p,
            q_load: -q,
            der,
        };
    }

    NetworkCase::with_labels(
        labels,
        file.slack_voltage,
        file.base_kv,
        file.base_kva,
        lines,
        buses,
    )
}

/// Serializes a case back to the JSON schema, all quantities in pu.
pub fn case_to_json(case: &NetworkCase) -> Result<String> {
    let label = |i: usize| -> Label {
        let s = case.label(i);
        match s.parse::<i64>() {
            Ok(n) if n.to_string() == s => Label::Num(n),
            _ => Label::Str(s.to_string()),
        }
    };
    let kva = case.base_kva();
    let file = CaseFile {
        base_kv: case.base_kv(),
        base_kva: kva,
        slack_voltage: case.slack_voltage(),
        slack: Some(label(0)),
        buses: (1..=case.n())
            .map(|i| {
                let b = case.bus(i);
                let der = if b.der == DerSpec::NONE {
                    None
                } else {
                    let (lo, hi) = match b.der.mode {
                        VarMode::Fixed { q_min, q_max } => (Some(q_min), Some(q_max)),
                        VarMode::CapacityDerived => (None, None),
                    };
                    Some(DerEntry {
                        capacity_kva: None,
                        capacity_pu: Some(b.der.capacity),
                        q_min_kvar: None,
                        q_max_kvar: None,
                        q_min_pu: lo,
                        q_max_pu: hi,
                    })
                };
                BusEntry {
                    id: label(i),
                    p_load_kw: None,
                    q_load_kvar: None,
                    p_load_pu: Some(-b.p_load),
                    q_load_pu: Some(-b.q_load),
                    der,
                }
            })
            .collect(),
        lines: case
            .lines()
            .iter()
            .map(|l| LineEntry {
                from: label(l.from),
                to: label(l.to),
                r_ohm: None,
                x_ohm: None,
                r_pu: Some(l.r),
                x_pu: Some(l.x),
            })
            .collect(),
    };
    Ok(serde_json::to_string_pretty(&file)?)
}

pub fn write_case(case: &NetworkCase, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, case_to_json(case)?).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    const ONE_LINE: &str = r#"{
        "base_kv": 4.16, "base_kva": 100, "slack_voltage": 1.0,
        "buses": [{"id": 1, "p_load_kw": 1.0, "q_load_kvar": 0.5}],
        "lines": [{"from": 0, "to": 1, "r_pu": 0.01, "x_pu": 0.02}]
    }"#;

    #[test]
    fn minimal_case_loads() {
        let case = parse_case(ONE_LINE).unwrap();
        assert_eq!(case.n(), 1);
        assert_eq!(case.lines().len(), 1);
        let l = case.line_into(1);
        assert_eq!((l.from, l.to), (0, 1));
        assert_eq!((l.r, l.x), (0.01, 0.02));
        assert!((case.bus(1).p_load + 0.01).abs() < 1e-15);
        assert!((case.bus(1).q_load + 0.005).abs() < 1e-15);
    }

    #[test]
    fn two_lines_into_one_bus_is_not_radial() {
        let text = r#"{
            "base_kv": 4.16, "base_kva": 100, "slack_voltage": 1.0, "slack": 0,
            "lines": [{"from": 0, "to": 1, "r_pu": 0.01, "x_pu": 0.02},
                      {"from": 0, "to": 2, "r_pu": 0.01, "x_pu": 0.02},
                      {"from": 2, "to": 1, "r_pu": 0.01, "x_pu": 0.02}]
        }"#;
        let err = parse_case(text).unwrap_err();
        assert!(matches!(err, Error::NotRadial(_)), "{err}");
        assert!(err.to_string().contains("not radial"));
    }

    #[test]
    fn duplicate_line_is_rejected() {
        let text = r#"{
            "base_kv": 4.16, "base_kva": 100, "slack_voltage": 1.0,
            "lines": [{"from": 0, "to": 1, "r_pu": 0.01, "x_pu": 0.02},
                      {"from": 0, "to": 1, "r_pu": 0.01, "x_pu": 0.02}]
        }"#;
        assert!(matches!(parse_case(text), Err(Error::DuplicateLine(_))));
    }

    #[test]
    fn zero_reactance_is_rejected() {
        let text = ONE_LINE.replace("\"x_pu\": 0.02", "\"x_pu\": 0.0");
        let err = parse_case(&text).unwrap_err();
        assert!(matches!(err, Error::NonpositiveReactance(_)));
        assert!(err.to_string().contains("nonpositive reactance"));
    }

    #[test]
    fn disconnected_component_is_rejected() {
        // 3 -> 4 -> 3 is a cycle detached from the slack bus; with explicit slack
        let text = r#"{
            "base_kv": 4.16, "base_kva": 100, "slack_voltage": 1.0, "slack": 0,
            "lines": [{"from": 0, "to": 1, "r_pu": 0.01, "x_pu": 0.02},
                      {"from": 3, "to": 4, "r_pu": 0.01, "x_pu": 0.02},
                      {"from": 4, "to": 3, "r_pu": 0.01, "x_pu": 0.02}]
        }"#;
        assert!(matches!(parse_case(text), Err(Error::Disconnected(_))));

        let text = r#"{
            "base_kv": 4.16, "base_kva": 100, "slack_voltage": 1.0,
            "lines": [{"from": 0, "to": 1, "r_pu": 0.01, "x_pu": 0.02},
                      {"from": 5, "to": 6, "r_pu": 0.01, "x_pu": 0.02}]
        }"#;
        assert!(matches!(parse_case(text), Err(Error::Disconnected(_))));
    }

    #[test]
    fn mixed_units_are_rejected() {
        let text = r#"{
            "base_kv": 4.16, "base_kva": 100, "slack_voltage": 1.0,
            "lines": [{"from": 0, "to": 1, "r_pu": 0.01, "x_pu": 0.02},
                      {"from": 1, "to": 2, "r_ohm": 0.1, "x_ohm": 0.2}]
        }"#;
        assert!(matches!(parse_case(text), Err(Error::Parse(_))));
    }

    #[test]
    fn ohm_values_convert_to_pu() {
        let text = r#"{
            "base_kv": 4.16, "base_kva": 100, "slack_voltage": 1.0,
            "lines": [{"from": "sub", "to": "a", "r_ohm": 1.73056, "x_ohm": 3.46112}]
        }"#;
        let case = parse_case(text).unwrap();
        assert!((case.base_ohm() - 173.056).abs() < 1e-9);
        assert!((case.line_into(1).r - 0.01).abs() < 1e-12);
        assert!((case.line_into(1).x - 0.02).abs() < 1e-12);
        assert_eq!(case.label(0), "sub");
        assert_eq!(case.label(1), "a");
    }

    #[test]
    fn labels_renumber_breadth_first() {
        let text = r#"{
            "base_kv": 4.16, "base_kva": 100, "slack_voltage": 1.0,
            "lines": [{"from": 10, "to": 7, "r_pu": 0.01, "x_pu": 0.02},
                      {"from": 7, "to": 12, "r_pu": 0.01, "x_pu": 0.02},
                      {"from": 10, "to": 9, "r_pu": 0.01, "x_pu": 0.02}]
        }"#;
        let case = parse_case(text).unwrap();
        assert_eq!(case.labels(), &["10", "7", "9", "12"]);
        assert_eq!(case.line_into(3).from, 1);
    }

    #[test]
    fn der_limits() {
        let d = DerSpec::with_capacity(0.5);
        assert_eq!(d.limits_at(0.5), (0.0, 0.0));
        let (lo, hi) = d.limits_at(0.3);
        assert!((hi - 0.4).abs() < 1e-12 && (lo + 0.4).abs() < 1e-12);
        assert_eq!(DerSpec::NONE.limits_at(0.0), (0.0, 0.0));
        let f = DerSpec {
            capacity: 0.5,
            mode: VarMode::Fixed { q_min: -0.1, q_max: 0.1 },
        };
        assert_eq!(f.limits_at(0.0), (-0.1, 0.1));
        assert_eq!(f.limits_at(0.5), (0.0, 0.0));
    }

    #[test]
    fn bus_quantities_in_pu() {
        let text = r#"{
            "base_kv": 4.16, "base_kva": 100, "slack_voltage": 1.0,
            "buses": [{"id": 1, "p_load_pu": 0.01, "q_load_kvar": 0.5,
                       "der": {"capacity_pu": 0.5, "q_min_pu": -0.1, "q_max_kvar": 10}}],
            "lines": [{"from": 0, "to": 1, "r_pu": 0.01, "x_pu": 0.02}]
        }"#;
        let case = parse_case(text).unwrap();
        let b = case.bus(1);
        assert_eq!((b.p_load, b.q_load, b.der.capacity), (-0.01, -0.005, 0.5));
        assert_eq!(b.der.mode, VarMode::Fixed { q_min: -0.1, q_max: 0.1 });
    }

    #[test]
    fn bus_quantity_in_both_units_is_rejected() {
        let text = r#"{
            "base_kv": 4.16, "base_kva": 100, "slack_voltage": 1.0,
            "buses": [{"id": 1, "p_load_pu": 0.01, "p_load_kw": 1.0}],
            "lines": [{"from": 0, "to": 1, "r_pu": 0.01, "x_pu": 0.02}]
        }"#;
        assert!(matches!(parse_case(text), Err(Error::InvalidCase(_))));
    }

    #[test]
    fn canonical_numbering_is_idempotent() {
        let case = NetworkCase::new(
            1.0,
            4.16,
            100.0,
            vec![
                Line { from: 0, to: 1, r: 0.01, x: 0.02 },
                Line { from: 1, to: 2, r: 0.01, x: 0.03 },
                Line { from: 0, to: 3, r: 0.01, x: 0.04 },
            ],
            vec![BusData::default(); 3],
        )
        .unwrap();
        let c = case.canonical();
        assert_eq!(c.labels(), ["0", "1", "3", "2"]);
        assert_eq!(c.line_into(2).x, 0.04);
        assert_eq!(c.canonical(), c);
        assert_eq!(parse_case(&case_to_json(&c).unwrap()).unwrap(), c);
    }

    #[test]
    fn json_round_trip() {
        let case = parse_case(ONE_LINE).unwrap();
        let again = parse_case(&case_to_json(&case).unwrap()).unwrap();
        assert_eq!(case.labels(), again.labels());
        assert_eq!(case.lines(), again.lines());
        assert!((case.bus(1).p_load - again.bus(1).p_load).abs() < 1e-15);
    }
}
