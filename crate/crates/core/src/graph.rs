//! The skill dependency DAG.
//!
//! Edges run prerequisite → dependent and come from both `requires_before`
//! (reversed) and `enables_after`. Topological order is Kahn's algorithm with
//! ties broken by name, so every run sees the same canonical order.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, VecDeque};
use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use crate::contract::{normalize_rel, ProducerLookup};
use crate::document::{DependencyManifest, Finding, Parallelism, ParallelismClass, Severity, ValidationReport};

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("dependency cycle: {}", .witness.join(" -> "))]
    CycleDetected { witness: Vec<String> },
    #[error("`{path}` is written by more than one skill: {}", .producers.join(", "))]
    MultipleProducers { path: String, producers: Vec<String> },
    #[error("unknown skill `{0}`")]
    UnknownSkill(String),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct IoEntry {
    pub producers: BTreeSet<String>,
    pub consumers: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SkillGraph {
    nodes: BTreeSet<String>,
    edges: BTreeSet<(String, String)>,
    successors: BTreeMap<String, BTreeSet<String>>,
    predecessors: BTreeMap<String, BTreeSet<String>>,
    io_index: BTreeMap<String, IoEntry>,
    order: Vec<String>,
    unresolved: BTreeSet<String>,
}

pub fn build_graph(manifest: &DependencyManifest) -> Result<SkillGraph, GraphError> {
    let mut nodes: BTreeSet<String> = manifest.entries.keys().cloned().collect();
    let mut edges = BTreeSet::new();
    let mut io_index: BTreeMap<String, IoEntry> = BTreeMap::new();
    for (name, entry) in &manifest.entries {
        for before in &entry.requires_before {
            nodes.insert(before.clone());
            edges.insert((before.clone(), name.clone()));
        }
        for after in &entry.enables_after {
            nodes.insert(after.clone());
            edges.insert((name.clone(), after.clone()));
        }
        for path in &entry.writes {
            io_index.entry(normalize_rel(path)).or_default().producers.insert(name.clone());
        }
        for path in &entry.reads {
            io_index.entry(normalize_rel(path)).or_default().consumers.insert(name.clone());
        }
    }
    if let Some((path, io)) = io_index.iter().find(|(_, io)| io.producers.len() > 1) {
        return Err(GraphError::MultipleProducers {
            path: path.clone(),
            producers: io.producers.iter().cloned().collect(),
        });
    }

    let mut successors: BTreeMap<String, BTreeSet<String>> = nodes.iter().map(|n| (n.clone(), BTreeSet::new())).collect();
    let mut predecessors = successors.clone();
    for (from, to) in &edges {
        successors.get_mut(from).expect("node").insert(to.clone());
        predecessors.get_mut(to).expect("node").insert(from.clone());
    }

    let order = kahn(&nodes, &successors, &predecessors)
        .map_err(|remaining| GraphError::CycleDetected {
            witness: cycle_witness(&remaining, &predecessors),
        })?;

    Ok(SkillGraph {
        nodes,
        edges,
        successors,
        predecessors,
        io_index,
        order,
        unresolved: manifest.unresolved.clone(),
    })
}

/// Lexicographic Kahn. On a cycle, returns the nodes that never reached
/// in-degree zero.
fn kahn(
    nodes: &BTreeSet<String>,
    successors: &BTreeMap<String, BTreeSet<String>>,
    predecessors: &BTreeMap<String, BTreeSet<String>>,
) -> Result<Vec<String>, BTreeSet<String>> {
    let mut indegree: BTreeMap<&str, usize> = predecessors.iter().map(|(n, p)| (n.as_str(), p.len())).collect();
    let mut ready: BinaryHeap<Reverse<&str>> = indegree
        .iter()
        .filter(|(_, d)| **d == 0)
        .map(|(n, _)| Reverse(*n))
        .collect();
    let mut order = Vec::with_capacity(nodes.len());
    while let Some(Reverse(node)) = ready.pop() {
        order.push(node.to_string());
        for next in &successors[node] {
            let d = indegree.get_mut(next.as_str()).expect("node");
            *d -= 1;
            if *d == 0 {
                ready.push(Reverse(next.as_str()));
            }
        }
    }
    if order.len() == nodes.len() {
        Ok(order)
    } else {
        let done: BTreeSet<&String> = order.iter().collect();
        Err(nodes.iter().filter(|n| !done.contains(n)).cloned().collect())
    }
}

/// A closed walk among the nodes Kahn could not place, rotated to start at
/// its smallest member and closed by repeating it: `[A, B, A]`.
fn cycle_witness(remaining: &BTreeSet<String>, predecessors: &BTreeMap<String, BTreeSet<String>>) -> Vec<String> {
    // Every leftover node keeps a leftover predecessor, so a backwards walk
    // never dead-ends and must revisit a node.
    let start = remaining.iter().next().expect("cycle leaves nodes").clone();
    let mut path = vec![start.clone()];
    let mut seen: BTreeMap<String, usize> = BTreeMap::from([(start, 0)]);
    loop {
        let current = path.last().expect("nonempty");
        let next = predecessors[current]
            .iter()
            .find(|n| remaining.contains(*n))
            .expect("leftover node has a leftover predecessor")
            .clone();
        if let Some(&at) = seen.get(&next) {
            let mut cycle: Vec<String> = path[at..].to_vec();
            cycle.reverse();
            let min_pos = cycle
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.cmp(b.1))
                .map(|(i, _)| i)
                .expect("nonempty cycle");
            cycle.rotate_left(min_pos);
            cycle.push(cycle[0].clone());
            return cycle;
        }
        seen.insert(next.clone(), path.len());
        path.push(next);
    }
}

impl SkillGraph {
    pub fn nodes(&self) -> &BTreeSet<String> {
        &self.nodes
    }

    pub fn edges(&self) -> &BTreeSet<(String, String)> {
        &self.edges
    }

    pub fn contains(&self, skill: &str) -> bool {
        self.nodes.contains(skill)
    }

    pub fn io_index(&self) -> &BTreeMap<String, IoEntry> {
        &self.io_index
    }

    pub fn unresolved(&self) -> &BTreeSet<String> {
        &self.unresolved
    }

    /// Canonical topological order.
    pub fn topo_order(&self) -> &[String] {
        &self.order
    }

    pub fn successors(&self, skill: &str) -> impl Iterator<Item = &String> {
        self.successors.get(skill).into_iter().flatten()
    }

    pub fn predecessors(&self, skill: &str) -> impl Iterator<Item = &String> {
        self.predecessors.get(skill).into_iter().flatten()
    }

    fn reach(&self, skill: &str, adjacency: &BTreeMap<String, BTreeSet<String>>) -> Result<BTreeSet<String>, GraphError> {
        if !self.nodes.contains(skill) {
            return Err(GraphError::UnknownSkill(skill.to_string()));
        }
        let mut seen = BTreeSet::new();
        let mut queue: VecDeque<&str> = VecDeque::from([skill]);
        while let Some(node) = queue.pop_front() {
            for next in &adjacency[node] {
                if seen.insert(next.clone()) {
                    queue.push_back(next);
                }
            }
        }
        seen.remove(skill);
        Ok(seen)
    }

    /// Every skill transitively downstream of `skill`, excluding itself.
    pub fn impact_of(&self, skill: &str) -> Result<BTreeSet<String>, GraphError> {
        self.reach(skill, &self.successors)
    }

    /// Every skill transitively upstream of `skill`, excluding itself.
    pub fn prerequisites_of(&self, skill: &str) -> Result<BTreeSet<String>, GraphError> {
        self.reach(skill, &self.predecessors)
    }

    /// The single skill that writes `path`.
    pub fn producer_of(&self, path: &str) -> Option<&str> {
        self.io_index
            .get(&normalize_rel(path))
            .and_then(|io| io.producers.iter().next())
            .map(String::as_str)
    }

    /// Graphviz rendering.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph skills {\n  rankdir=LR;\n");
        for node in &self.order {
            let _ = writeln!(out, "  \"{node}\";");
        }
        for (from, to) in &self.edges {
            let _ = writeln!(out, "  \"{from}\" -> \"{to}\";");
        }
        out.push_str("}\n");
        out
    }
}

impl ProducerLookup for SkillGraph {
    fn producer_of(&self, path: &str) -> Option<String> {
        SkillGraph::producer_of(self, path).map(str::to_string)
    }
}

/// Groups of names meant to run concurrently, in execution order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct DispatchPlan {
    pub groups: Vec<BTreeSet<String>>,
    pub constraints: BTreeMap<String, Parallelism>,
}

impl DispatchPlan {
    pub fn new(groups: Vec<Vec<&str>>, constraints: BTreeMap<String, Parallelism>) -> Self {
        Self {
            groups: groups
                .into_iter()
                .map(|g| g.into_iter().map(str::to_string).collect())
                .collect(),
            constraints,
        }
    }
}

fn dispatch_finding(rule: &str, message: String) -> Finding {
    Finding::new(Severity::Error, "dispatch", rule, message)
}

/// Static checks on a dispatch plan: co-scheduled dependents, dependents
/// ahead of their prerequisites, global singletons sharing a group, and
/// groups larger than a member's `max_concurrent`.
pub fn validate_dispatch(graph: &SkillGraph, plan: &DispatchPlan) -> ValidationReport {
    let mut report = ValidationReport::default();

    // Dependency relation over graph edges plus declared depends_on.
    let mut adjacency: BTreeMap<String, BTreeSet<String>> = graph.successors.clone();
    for (name, parallelism) in &plan.constraints {
        adjacency.entry(name.clone()).or_default();
        if let ParallelismClass::DependsOn(deps) = &parallelism.class {
            for dep in deps {
                adjacency.entry(dep.clone()).or_default().insert(name.clone());
            }
        }
    }
    let upstream_of = |target: &str| -> BTreeSet<String> {
        let mut reverse: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for (from, tos) in &adjacency {
            for to in tos {
                reverse.entry(to.as_str()).or_default().push(from.as_str());
            }
        }
        let mut seen = BTreeSet::new();
        let mut queue = VecDeque::from([target]);
        while let Some(node) = queue.pop_front() {
            for prev in reverse.get(node).into_iter().flatten() {
                if seen.insert(prev.to_string()) {
                    queue.push_back(prev);
                }
            }
        }
        seen
    };

    let mut position: BTreeMap<&str, usize> = BTreeMap::new();
    for (i, group) in plan.groups.iter().enumerate() {
        for name in group {
            if !adjacency.contains_key(name) {
                report.push(dispatch_finding("unknown_name", format!("`{name}` is not a known skill or agent")));
            }
            position.entry(name.as_str()).or_insert(i);
        }
    }

    for (i, group) in plan.groups.iter().enumerate() {
        for name in group {
            let upstream = upstream_of(name);
            for other in group.iter().filter(|o| upstream.contains(*o)) {
                report.push(dispatch_finding(
                    "dependency_violation",
                    format!("group {i}: `{name}` depends on `{other}` but runs alongside it"),
                ));
            }
            for other in upstream.iter() {
                if let Some(&j) = position.get(other.as_str()) {
                    if j > i {
                        report.push(dispatch_finding(
                            "order_violation",
                            format!("`{name}` (group {i}) runs before its prerequisite `{other}` (group {j})"),
                        ));
                    }
                }
            }
            if let Some(parallelism) = plan.constraints.get(name) {
                if parallelism.class == ParallelismClass::GlobalSingleton && group.len() > 1 {
                    report.push(dispatch_finding(
                        "global_singleton",
                        format!("group {i}: `{name}` is a global singleton but shares its group"),
                    ));
                }
                if group.len() > parallelism.max_concurrent as usize {
                    report.push(dispatch_finding(
                        "concurrency_cap",
                        format!(
                            "group {i} has {} members but `{name}` allows at most {}",
                            group.len(),
                            parallelism.max_concurrent
                        ),
                    ));
                }
            }
        }
    }
    report
}
