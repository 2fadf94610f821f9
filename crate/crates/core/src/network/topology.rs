use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::network::NetworkCase;

/// Parent/child structure of a radial feeder rooted at the slack bus.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    parent: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
    descendants: Vec<Vec<usize>>,
    order: Vec<usize>,
    position: Vec<usize>,
    depth: Vec<usize>,
}

impl Topology {
    /// Predecessor of bus `j` (`None` for the slack bus).
    pub fn parent(&self, j: usize) -> Option<usize> {
        self.parent[j]
    }

    /// Children of `j`, sorted by index.
    pub fn children(&self, j: usize) -> &[usize] {
        &self.children[j]
    }

    /// Buses strictly downstream of `j`, sorted by index.
    pub fn descendants(&self, j: usize) -> &[usize] {
        &self.descendants[j]
    }

    /// Non-slack buses in breadth-first order; parents precede children.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// Position of non-slack bus `j` in [`Topology::order`].
    pub fn position(&self, j: usize) -> usize {
        self.position[j]
    }

    /// Number of lines between `j` and the slack bus.
    pub fn depth(&self, j: usize) -> usize {
        self.depth[j]
    }

    pub fn n(&self) -> usize {
        self.order.len()
    }

    /// Buses on the path from `j` up to (excluding) the slack bus, starting at `j`.
    pub fn path_to_root(&self, mut j: usize) -> Vec<usize> {
        let mut path = Vec::with_capacity(self.depth[j]);
        while j != 0 {
            path.push(j);
            j = self.parent[j].expect("non-slack bus has a parent");
        }
        path
    }
}

/// Derives the tree structure from the case's line list.
pub fn build_topology(case: &NetworkCase) -> Result<Topology> {
    let n = case.n();
    let mut parent = vec![None; n + 1];
    let mut children = vec![Vec::new(); n + 1];
    for line in case.lines() {
        parent[line.to] = Some(line.from);
        children[line.from].push(line.to);
    }
    for c in &mut children {
        c.sort_unstable();
    }

    // a walk up the parent chain longer than n means a cycle
    for start in 1..=n {
        let mut j = start;
        let mut steps = 0;
        while j != 0 {
            j = parent[j].ok_or_else(|| Error::Disconnected(case.label(start).to_string()))?;
            steps += 1;
            if steps > n {
                return Err(Error::Cycle(case.label(start).to_string()));
            }
        }
    }

    let mut order = Vec::with_capacity(n);
    let mut depth = vec![0; n + 1];
    let mut queue = VecDeque::from([0usize]);
    while let Some(b) = queue.pop_front() {
        for &c in &children[b] {
            depth[c] = depth[b] + 1;
            order.push(c);
            queue.push_back(c);
        }
    }
    if order.len() != n {
        let mut reached = vec![false; n + 1];
        for &b in &order {
            reached[b] = true;
        }
        let missing = (1..=n).find(|&b| !reached[b]).unwrap_or(0);
        return Err(Error::Disconnected(case.label(missing).to_string()));
    }
    let mut position = vec![usize::MAX; n + 1];
    for (k, &b) in order.iter().enumerate() {
        position[b] = k;
    }

    let mut descendants: Vec<Vec<usize>> = vec![Vec::new(); n + 1];
    for &b in order.iter().rev().chain(std::iter::once(&0)) {
        let mut d = Vec::new();
        for &c in &children[b] {
            d.push(c);
            d.extend_from_slice(&descendants[c]);
        }
        d.sort_unstable();
        descendants[b] = d;
    }

    Ok(Topology {
        parent,
        children,
        descendants,
        order,
        position,
        depth,
    })
}
