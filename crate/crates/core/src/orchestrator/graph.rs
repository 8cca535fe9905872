use std::collections::BTreeMap;

use serde::Serialize;

use crate::agents::AgentRole;

/// A node of the daily agent graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    Summarizer,
    TechnicalAnalyst,
    ReflectionPerformance,
    ReflectionVisual,
    Decision,
    Execute,
}

impl Node {
    pub fn roles(self) -> &'static [AgentRole] {
        match self {
            Node::Summarizer => &[AgentRole::Summarizer],
            Node::TechnicalAnalyst => &[AgentRole::TechnicalAnalyst],
            Node::ReflectionPerformance => &[
                AgentRole::ReflectionPerformanceShort,
                AgentRole::ReflectionPerformanceMedium,
            ],
            Node::ReflectionVisual => &[AgentRole::ReflectionVisual],
            Node::Decision => &[AgentRole::Decision],
            Node::Execute => &[],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgentGraph {
    edges: Vec<(Node, Node)>,
}

impl Default for AgentGraph {
    fn default() -> Self {
        let mut edges = Vec::new();
        for n in [
            Node::Summarizer,
            Node::TechnicalAnalyst,
            Node::ReflectionPerformance,
            Node::ReflectionVisual,
        ] {
            edges.push((n, Node::Decision));
        }
        edges.push((Node::Decision, Node::Execute));
        Self { edges }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("agent graph has a cycle through {0:?}")]
pub struct CycleError(pub Vec<Node>);

/// Topological layers: nodes within a layer have no edges between them
/// and may run concurrently.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ExecutionPlan {
    pub layers: Vec<Vec<Node>>,
}

impl ExecutionPlan {
    pub fn order(&self) -> impl Iterator<Item = Node> + '_ {
        self.layers.iter().flatten().copied()
    }

    pub fn position(&self, node: Node) -> Option<usize> {
        self.order().position(|n| n == node)
    }
}

impl AgentGraph {
    pub fn add_edge(&mut self, from: Node, to: Node) {
        self.edges.push((from, to));
    }

    /// Kahn's algorithm, one layer at a time.
    pub fn plan(&self) -> Result<ExecutionPlan, CycleError> {
        let mut indegree: BTreeMap<Node, usize> = BTreeMap::new();
        for &(a, b) in &self.edges {
            indegree.entry(a).or_default();
            *indegree.entry(b).or_default() += 1;
        }
        let mut layers = Vec::new();
        while !indegree.is_empty() {
            let ready: Vec<Node> = indegree
                .iter()
                .filter(|(_, d)| **d == 0)
                .map(|(n, _)| *n)
                .collect();
            if ready.is_empty() {
                return Err(CycleError(indegree.keys().copied().collect()));
            }
            for n in &ready {
                indegree.remove(n);
                for &(a, b) in &self.edges {
                    if a == *n {
                        if let Some(d) = indegree.get_mut(&b) {
                            *d -= 1;
                        }
                    }
                }
            }
            layers.push(ready);
        }
        Ok(ExecutionPlan { layers })
    }
}

pub fn validate_graph() -> Result<ExecutionPlan, CycleError> {
    AgentGraph::default().plan()
}
