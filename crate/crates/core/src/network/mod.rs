//! Radial feeder description, tree topology and incidence machinery.

mod case;
mod incidence;
mod synthetic;
mod topology;

pub use case::{
    case_to_json, load_case, parse_case, write_case, BusData, DerSpec, Line, NetworkCase, VarMode,
};
pub use incidence::{incidence, IncidenceDecomposition};
pub use synthetic::{random_radial_case, synthetic_feeder, FeederParams};
pub use topology::{build_topology, Topology};

/// A case bundled with its derived topology and incidence decomposition.
#[derive(Debug, Clone)]
pub struct Network {
    pub case: NetworkCase,
    pub topo: Topology,
    pub inc: IncidenceDecomposition,
}

impl Network {
    pub fn new(case: NetworkCase) -> crate::Result<Self> {
        let topo = build_topology(&case)?;
        let inc = incidence(&case, &topo);
        Ok(Network { case, topo, inc })
    }

    pub fn n(&self) -> usize {
        self.case.n()
    }
}
