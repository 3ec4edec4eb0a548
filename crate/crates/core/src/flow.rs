//! Edmonds–Karp max-flow over exact rationals.

use std::collections::VecDeque;

use num_traits::{Signed, Zero};

use crate::rational::Rational;

#[derive(Clone, Debug)]
pub struct FlowNetwork {
    /// `capacity[u][v]`; residual capacities during a run.
    capacity: Vec<Vec<Rational>>,
}

#[derive(Clone, Debug)]
pub struct MaxFlow {
    pub value: Rational,
    /// Nodes reachable from the source in the final residual graph.
    pub source_side: Vec<bool>,
}

impl FlowNetwork {
    pub fn new(nodes: usize) -> Self {
        FlowNetwork {
            capacity: vec![vec![Rational::zero(); nodes]; nodes],
        }
    }

    pub fn nodes(&self) -> usize {
        self.capacity.len()
    }

    /// Adds `cap` to the arc `u → v`.
    pub fn add_arc(&mut self, u: usize, v: usize, cap: Rational) {
        assert!(!cap.is_negative(), "negative capacity");
        self.capacity[u][v] += cap;
    }

    pub fn max_flow(mut self, source: usize, sink: usize) -> MaxFlow {
        let n = self.nodes();
        let mut value = Rational::zero();
        loop {
            let mut parent = vec![usize::MAX; n];
            parent[source] = source;
            let mut queue = VecDeque::from([source]);
            while let Some(u) = queue.pop_front() {
                if u == sink {
                    break;
                }
                for v in 0..n {
                    if parent[v] == usize::MAX && self.capacity[u][v].is_positive() {
                        parent[v] = u;
                        queue.push_back(v);
                    }
                }
            }
            if parent[sink] == usize::MAX {
                let source_side = parent.iter().map(|&p| p != usize::MAX).collect();
                return MaxFlow { value, source_side };
            }
            let mut bottleneck: Option<Rational> = None;
            let mut v = sink;
            while v != source {
                let u = parent[v];
                let c = &self.capacity[u][v];
                if bottleneck.as_ref().map_or(true, |b| c < b) {
                    bottleneck = Some(c.clone());
                }
                v = u;
            }
            let b = bottleneck.expect("path has at least one arc");
            let mut v = sink;
            while v != source {
                let u = parent[v];
                self.capacity[u][v] -= &b;
                self.capacity[v][u] += &b;
                v = u;
            }
            value += b;
        }
    }
}
