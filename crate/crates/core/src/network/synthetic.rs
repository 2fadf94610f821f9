use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::network::{BusData, DerSpec, Line, NetworkCase, VarMode};

/// Shape of a synthetic feeder: a main trunk with short laterals hanging off it.
///
/// All lines share one resistance-to-reactance ratio (a single conductor
/// family), and every bus carries the same load and inverter rating.
#[derive(Debug, Clone, PartialEq)]
pub struct FeederParams {
    /// Non-slack bus count.
    pub buses: usize,
    pub trunk_len: usize,
    pub max_lateral_depth: usize,
    pub trunk_x_ohm: f64,
    pub lateral_x_ohm: f64,
    pub r_over_x: f64,
    pub base_kv: f64,
    pub base_kva: f64,
    pub slack_voltage: f64,
    pub p_load_kw: f64,
    pub q_load_kvar: f64,
    pub der_capacity_kva: f64,
    /// Fixed symmetric VAr window in kVAr; `None` derives it from capacity.
    pub der_q_limit_kvar: Option<f64>,
}

impl Default for FeederParams {
    fn default() -> Self {
        FeederParams {
            buses: 123,
            trunk_len: 20,
            max_lateral_depth: 4,
            trunk_x_ohm: 0.15,
            lateral_x_ohm: 0.6,
            r_over_x: 0.8,
            base_kv: 4.16,
            base_kva: 100.0,
            slack_voltage: 1.0,
            p_load_kw: 1.0,
            q_load_kvar: 0.5,
            der_capacity_kva: 50.0,
            der_q_limit_kvar: Some(10.0),
        }
    }
}

/// Generates a trunk-and-laterals feeder. Deterministic in `seed`.
pub fn synthetic_feeder(params: &FeederParams, seed: u64) -> NetworkCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = params.buses.max(1);
    let trunk = params.trunk_len.clamp(1, n);
    let base_ohm = params.base_kv * params.base_kv * 1000.0 / params.base_kva;

    let mut lines = Vec::with_capacity(n);
    let push = |lines: &mut Vec<Line>, from: usize, x_ohm: f64| {
        let x = x_ohm / base_ohm;
        lines.push(Line {
            from,
            to: lines.len() + 1,
            r: params.r_over_x * x,
            x,
        });
    };
    for j in 1..=trunk {
        let x = params.trunk_x_ohm * rng.random_range(0.5..1.5);
        push(&mut lines, j - 1, x);
    }
    while lines.len() < n {
        let mut prev = rng.random_range(1..=trunk);
        let depth = rng.random_range(1..=params.max_lateral_depth.max(1));
        for _ in 0..depth {
            if lines.len() >= n {
                break;
            }
            let x = params.lateral_x_ohm * rng.random_range(0.5..1.5);
            push(&mut lines, prev, x);
            prev = lines.len();
        }
    }

    let kva = params.base_kva;
    let der = DerSpec {
        capacity: params.der_capacity_kva / kva,
        mode: match params.der_q_limit_kvar {
            Some(q) => VarMode::Fixed {
                q_min: -q / kva,
                q_max: q / kva,
            },
            None => VarMode::CapacityDerived,
        },
    };
    let bus = BusData {
        p_load: -params.p_load_kw / kva,
        q_load: -params.q_load_kvar / kva,
        der,
    };
    NetworkCase::new(
        params.slack_voltage,
        params.base_kv,
        params.base_kva,
        lines,
        vec![bus; n],
    )
    .expect("generator produces a valid radial case")
    .canonical()
}

/// A random radial case for property tests: random tree, heterogeneous
/// impedances, loads and fixed VAr windows. Some buses have no inverter.
pub fn random_radial_case(n: usize, seed: u64) -> NetworkCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = n.max(1);
    let mut lines = Vec::with_capacity(n);
    for j in 1..=n {
        // bias towards recent buses for deeper trees
        let lo = j.saturating_sub(4);
        let from = if rng.random_bool(0.7) {
            rng.random_range(lo..j)
        } else {
            rng.random_range(0..j)
        };
        let x = rng.random_range(0.002..0.03);
        lines.push(Line {
            from,
            to: j,
            r: x * rng.random_range(0.3..1.5),
            x,
        });
    }
    let buses = (0..n)
        .map(|_| {
            let q = rng.random_range(0.01..0.2);
            let der = if rng.random_bool(0.85) {
                DerSpec::fixed(-q, q)
            } else {
                DerSpec::NONE
            };
            BusData {
                p_load: rng.random_range(-0.06..0.03),
                q_load: rng.random_range(-0.03..0.01),
                der,
            }
        })
        .collect();
    let v0 = rng.random_range(0.98..1.04);
    NetworkCase::new(v0, 4.16, 100.0, lines, buses)
        .expect("generator produces a valid radial case")
        .canonical()
}
