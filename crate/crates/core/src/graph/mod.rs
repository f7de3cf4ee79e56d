//! Equivariant graph layers, positional encodings, node ordering and
//! structured sequence mixers.

mod egcl;
mod mixer;
mod order;
mod pe;

pub use egcl::{egcl_forward, EgclParams};
pub use mixer::{hydra_flops, qs_mix, ss_scan, FlopsReport, MixerParams, ScanParams};
pub use order::{order_nodes, OrderStrategy};
pub use pe::{laplacian_pe, sinusoidal_pe, LaplacianPe};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg::Matrix;

/// Undirected graph with node features, 3D coordinates and edge attributes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GraphRepr", into = "GraphRepr")]
pub struct Graph {
    n: usize,
    feat: Matrix,
    coords: Vec<[f64; 3]>,
    edges: Vec<(usize, usize)>,
    edge_attr: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct GraphRepr {
    n: usize,
    edges: Vec<[usize; 2]>,
    coords: Vec<[f64; 3]>,
    feat: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    edge_attr: Vec<Vec<f64>>,
}

impl TryFrom<GraphRepr> for Graph {
    type Error = crate::Error;

    fn try_from(r: GraphRepr) -> Result<Self> {
        if r.n != r.coords.len() {
            return invalid(format!("n = {} but {} coordinate rows", r.n, r.coords.len()));
        }
        let feat = if r.feat.is_empty() {
            Matrix::zeros(r.n, 0)
        } else {
            Matrix::from_rows(&r.feat)?
        };
        let edges = r.edges.iter().map(|e| (e[0], e[1])).collect();
        let attr = if r.edge_attr.is_empty() { None } else { Some(r.edge_attr) };
        Graph::new(feat, r.coords, edges, attr)
    }
}

impl From<Graph> for GraphRepr {
    fn from(g: Graph) -> Self {
        let has_attr = g.edge_attr.iter().any(|a| !a.is_empty());
        GraphRepr {
            n: g.n,
            edges: g.edges.iter().map(|&(i, j)| [i, j]).collect(),
            coords: g.coords,
            feat: g.feat.to_rows(),
            edge_attr: if has_attr { g.edge_attr } else { Vec::new() },
        }
    }
}

impl Graph {
    /// `feat` is `n×h`; each edge `(i, j)` is undirected with attribute
    /// `edge_attr[e]` (empty when `None`).
    pub fn new(
        feat: Matrix,
        coords: Vec<[f64; 3]>,
        edges: Vec<(usize, usize)>,
        edge_attr: Option<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        let n = coords.len();
        if feat.rows() != n {
            return invalid(format!("{} feature rows for {n} nodes", feat.rows()));
        }
        if coords.iter().flatten().any(|c| !c.is_finite()) || !feat.all_finite() {
            return invalid("graph coordinates and features must be finite");
        }
        for &(i, j) in &edges {
            if i >= n || j >= n {
                return invalid(format!("edge ({i}, {j}) outside 0..{n}"));
            }
            if i == j {
                return invalid(format!("self-loop at node {i}"));
            }
        }
        let edge_attr = match edge_attr {
            Some(a) => {
                if a.len() != edges.len() {
                    return invalid("edge_attr needs one entry per edge");
                }
                let width = a.first().map_or(0, Vec::len);
                if a.iter().any(|v| v.len() != width) {
                    return invalid("edge attributes must share one width");
                }
                a
            }
            None => vec![Vec::new(); edges.len()],
        };
        Ok(Self {
            n,
            feat,
            coords,
            edges,
            edge_attr,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn features(&self) -> &Matrix {
        &self.feat
    }

    pub fn coords(&self) -> &[[f64; 3]] {
        &self.coords
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge_attr(&self) -> &[Vec<f64>] {
        &self.edge_attr
    }

    pub fn edge_attr_dim(&self) -> usize {
        self.edge_attr.first().map_or(0, Vec::len)
    }

    /// Symmetric 0/1 adjacency; repeated edges count once.
    pub fn adjacency(&self) -> Matrix {
        let mut a = Matrix::zeros(self.n, self.n);
        for &(i, j) in &self.edges {
            a[(i, j)] = 1.0;
            a[(j, i)] = 1.0;
        }
        a
    }

    pub fn degrees(&self) -> Vec<usize> {
        let a = self.adjacency();
        (0..self.n)
            .map(|i| a.row(i).iter().filter(|v| **v != 0.0).count())
            .collect()
    }

    /// Directed neighbor list `(i, j, edge index)`, both directions per edge.
    pub(crate) fn directed_edges(&self) -> Vec<(usize, usize, usize)> {
        let mut out = Vec::with_capacity(2 * self.edges.len());
        for (e, &(i, j)) in self.edges.iter().enumerate() {
            out.push((i, j, e));
            out.push((j, i, e));
        }
        out
    }

    /// Graph with nodes relabeled so that old node `i` becomes `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.n;
        let mut seen = vec![false; n];
        if perm.len() != n || perm.iter().any(|&p| p >= n || std::mem::replace(&mut seen[p], true)) {
            return invalid("not a permutation of the nodes");
        }
        let mut feat = Matrix::zeros(n, self.feat.cols());
        let mut coords = vec![[0.0; 3]; n];
        for i in 0..n {
            feat.row_mut(perm[i]).copy_from_slice(self.feat.row(i));
            coords[perm[i]] = self.coords[i];
        }
        let edges = self.edges.iter().map(|&(i, j)| (perm[i], perm[j])).collect();
        Graph::new(feat, coords, edges, Some(self.edge_attr.clone()))
    }

    pub(crate) fn with_state(&self, feat: Matrix, coords: Vec<[f64; 3]>) -> Self {
        Self {
            n: self.n,
            feat,
            coords,
            edges: self.edges.clone(),
            edge_attr: self.edge_attr.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_graphs() {
        let f = Matrix::zeros(2, 1);
        let c = vec![[0.0; 3]; 2];
        assert!(Graph::new(f.clone(), c.clone(), vec![(0, 0)], None).is_err());
        assert!(Graph::new(f.clone(), c.clone(), vec![(0, 2)], None).is_err());
        assert!(Graph::new(f.clone(), vec![[f64::NAN, 0.0, 0.0]; 2], vec![], None).is_err());
        assert!(Graph::new(f, c, vec![(0, 1)], None).is_ok());
    }

    #[test]
    fn json_format() {
        let j = serde_json::json!({
            "n": 3,
            "edges": [[0, 1], [1, 2]],
            "coords": [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]],
            "feat": [[1.0], [2.0], [3.0]]
        });
        let g: Graph = serde_json::from_value(j.clone()).unwrap();
        assert_eq!(g.degrees(), vec![1, 2, 1]);
        assert_eq!(serde_json::to_value(&g).unwrap(), j);
    }
}
