//! Dinic max flow on small layered graphs.

use std::collections::VecDeque;

#[derive(Debug, Clone)]
struct Edge {
    to: usize,
    cap: u64,
}

#[derive(Debug, Clone)]
pub(crate) struct FlowGraph {
    edges: Vec<Edge>,
    adj: Vec<Vec<usize>>,
    level: Vec<u32>,
    cursor: Vec<usize>,
}

impl FlowGraph {
    pub(crate) fn new(nodes: usize) -> Self {
        FlowGraph {
            edges: Vec::new(),
            adj: vec![Vec::new(); nodes],
            level: vec![0; nodes],
            cursor: vec![0; nodes],
        }
    }

    /// Adds `from -> to` with capacity `cap` and returns its edge id.
    pub(crate) fn add_edge(&mut self, from: usize, to: usize, cap: u64) -> usize {
        let id = self.edges.len();
        self.edges.push(Edge { to, cap });
        self.edges.push(Edge { to: from, cap: 0 });
        self.adj[from].push(id);
        self.adj[to].push(id + 1);
        id
    }

    /// Flow currently routed through edge `id`.
    pub(crate) fn flow(&self, id: usize) -> u64 {
        self.edges[id ^ 1].cap
    }

    pub(crate) fn max_flow(&mut self, source: usize, sink: usize) -> u64 {
        let mut total = 0;
        while self.build_levels(source, sink) {
            self.cursor.iter_mut().for_each(|c| *c = 0);
            loop {
                let pushed = self.augment(source, sink, u64::MAX);
                if pushed == 0 {
                    break;
                }
                total += pushed;
            }
        }
        total
    }

    fn build_levels(&mut self, source: usize, sink: usize) -> bool {
        self.level.iter_mut().for_each(|l| *l = u32::MAX);
        self.level[source] = 0;
        let mut queue = VecDeque::from([source]);
        while let Some(v) = queue.pop_front() {
            for &id in &self.adj[v] {
                let e = &self.edges[id];
                if e.cap > 0 && self.level[e.to] == u32::MAX {
                    self.level[e.to] = self.level[v] + 1;
                    queue.push_back(e.to);
                }
            }
        }
        self.level[sink] != u32::MAX
    }

    fn augment(&mut self, v: usize, sink: usize, limit: u64) -> u64 {
        if v == sink {
            return limit;
        }
        while self.cursor[v] < self.adj[v].len() {
            let id = self.adj[v][self.cursor[v]];
            let Edge { to, cap } = self.edges[id];
            if cap > 0 && self.level[to] == self.level[v] + 1 {
                let pushed = self.augment(to, sink, limit.min(cap));
                if pushed > 0 {
                    self.edges[id].cap -= pushed;
                    self.edges[id ^ 1].cap += pushed;
                    return pushed;
                }
            }
            self.cursor[v] += 1;
        }
        0
    }
}
