use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::Graph;
use crate::error::{invalid, Result};
use crate::field::{Activation, OneLayerMap};
use crate::linalg::Matrix;

/// The three maps of one equivariant layer and the coordinate normalizer.
///
/// `φ_e: [h_i, h_j, ‖x_i − x_j‖², a_ij] → m_ij`, `φ_x: m_ij → scalar`,
/// `φ_h: [h_i, Σ_j m_ij] → h_i'`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EgclParams {
    pub phi_e: OneLayerMap,
    pub phi_x: OneLayerMap,
    pub phi_h: OneLayerMap,
    /// `C`; `None` means `1/(n − 1)`.
    pub c: Option<f64>,
}

impl EgclParams {
    pub fn random(
        feat_dim: usize,
        edge_dim: usize,
        message_dim: usize,
        hidden: usize,
        activation: Activation,
        rng: &mut (impl RngCore + ?Sized),
    ) -> Self {
        Self {
            phi_e: OneLayerMap::random(2 * feat_dim + 1 + edge_dim, hidden, message_dim, activation, 1.0, rng),
            phi_x: OneLayerMap::random(message_dim, hidden, 1, activation, 1.0, rng),
            phi_h: OneLayerMap::random(feat_dim + message_dim, hidden, feat_dim, activation, 1.0, rng),
            c: None,
        }
    }

    fn validate(&self, graph: &Graph) -> Result<()> {
        let h = graph.features().cols();
        let m = self.phi_e.output_dim();
        if self.phi_e.input_dim() != 2 * h + 1 + graph.edge_attr_dim() {
            return invalid("φ_e input must be 2·h + 1 + edge attribute width");
        }
        if self.phi_x.input_dim() != m || self.phi_x.output_dim() != 1 {
            return invalid("φ_x must map messages to one scalar");
        }
        if self.phi_h.input_dim() != h + m {
            return invalid("φ_h input must be h + message width");
        }
        if let Some(c) = self.c {
            if !(c > 0.0) || !c.is_finite() {
                return invalid("C must be positive");
            }
        }
        Ok(())
    }
}

/// One equivariant graph convolution over the graph's edges.
pub fn egcl_forward(graph: &Graph, params: &EgclParams) -> Result<Graph> {
    params.validate(graph)?;
    let n = graph.n();
    let h = graph.features();
    let x = graph.coords();
    let m_dim = params.phi_e.output_dim();
    let c = params
        .c
        .unwrap_or(if n > 1 { 1.0 / (n - 1) as f64 } else { 1.0 });

    let mut aggregate = Matrix::zeros(n, m_dim);
    let mut shift = vec![[0.0; 3]; n];
    let mut input = Vec::with_capacity(params.phi_e.input_dim());
    for (i, j, e) in graph.directed_edges() {
        let diff = [x[i][0] - x[j][0], x[i][1] - x[j][1], x[i][2] - x[j][2]];
        let dist2 = diff.iter().map(|v| v * v).sum::<f64>();
        input.clear();
        input.extend_from_slice(h.row(i));
        input.extend_from_slice(h.row(j));
        input.push(dist2);
        input.extend_from_slice(&graph.edge_attr()[e]);
        let m_ij = params.phi_e.forward(&input);
        let w = params.phi_x.forward(&m_ij)[0];
        for k in 0..3 {
            shift[i][k] += diff[k] * w;
        }
        for (a, v) in aggregate.row_mut(i).iter_mut().zip(&m_ij) {
            *a += v;
        }
    }

    let coords = (0..n)
        .map(|i| {
            [
                x[i][0] + c * shift[i][0],
                x[i][1] + c * shift[i][1],
                x[i][2] + c * shift[i][2],
            ]
        })
        .collect();
    let out_dim = params.phi_h.output_dim();
    let mut feat = Matrix::zeros(n, out_dim);
    for i in 0..n {
        let mut node_in = h.row(i).to_vec();
        node_in.extend_from_slice(aggregate.row(i));
        feat.row_mut(i).copy_from_slice(&params.phi_h.forward(&node_in));
    }
    Ok(graph.with_state(feat, coords))
}
