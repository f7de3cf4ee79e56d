use rand::seq::SliceRandom;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::Graph;
use crate::linalg::norm;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderStrategy {
    Degree,
    Eigencentrality,
    Shuffle,
}

/// Scores closer than this are ties.
const TIE_TOL: f64 = 1e-9;

/// Node order by ascending importance, ties shuffled with `rng`.
///
/// `order[p]` is the node placed at position `p`.
pub fn order_nodes(graph: &Graph, strategy: OrderStrategy, rng: &mut (impl RngCore + ?Sized)) -> Vec<usize> {
    let n = graph.n();
    let mut order: Vec<usize> = (0..n).collect();
    let scores = match strategy {
        OrderStrategy::Shuffle => {
            order.shuffle(rng);
            return order;
        }
        OrderStrategy::Degree => graph.degrees().into_iter().map(|d| d as f64).collect(),
        OrderStrategy::Eigencentrality => eigencentrality(graph),
    };
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && scores[order[end]] - scores[order[end - 1]] <= TIE_TOL {
            end += 1;
        }
        order[start..end].shuffle(rng);
        start = end;
    }
    order
}

fn components(graph: &Graph) -> Vec<Vec<usize>> {
    let n = graph.n();
    let mut adj = vec![Vec::new(); n];
    for &(i, j) in graph.edges() {
        adj[i].push(j);
        adj[j].push(i);
    }
    let mut label = vec![usize::MAX; n];
    let mut comps = Vec::new();
    for s in 0..n {
        if label[s] != usize::MAX {
            continue;
        }
        let id = comps.len();
        let mut stack = vec![s];
        let mut members = Vec::new();
        label[s] = id;
        while let Some(v) = stack.pop() {
            members.push(v);
            for &w in &adj[v] {
                if label[w] == usize::MAX {
                    label[w] = id;
                    stack.push(w);
                }
            }
        }
        members.sort_unstable();
        comps.push(members);
    }
    comps
}

/// Principal eigenvector of each component's adjacency, unit 2-norm per
/// component; power iteration on `A + I` keeps bipartite graphs convergent.
fn eigencentrality(graph: &Graph) -> Vec<f64> {
    let a = graph.adjacency();
    let mut scores = vec![0.0; graph.n()];
    for comp in components(graph) {
        let m = comp.len();
        let mut v = vec![1.0 / (m as f64).sqrt(); m];
        for _ in 0..10_000 {
            let mut next: Vec<f64> = (0..m)
                .map(|p| v[p] + (0..m).map(|q| a[(comp[p], comp[q])] * v[q]).sum::<f64>())
                .collect();
            let s = norm(&next);
            next.iter_mut().for_each(|x| *x /= s);
            let change = next.iter().zip(&v).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            v = next;
            if change < 1e-14 {
                break;
            }
        }
        for (p, &node) in comp.iter().enumerate() {
            scores[node] = v[p];
        }
    }
    scores
}
