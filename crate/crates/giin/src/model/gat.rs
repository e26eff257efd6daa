//! Multi-head graph attention over a fixed topology.
//!
//! For receiver u with in-neighborhood N(u), each head scores
//! `e_uv = leaky_relu(a . [W h_u || W h_v])` with the receiver's transform
//! first, normalizes with softmax over N(u), aggregates the transformed
//! senders with those coefficients, and applies an exponential linear unit.
//! Heads concatenate. The linear transforms carry no bias.

use crate::autodiff::{Graph, InitScheme, Node, ParamId, ParamStore};
use crate::error::Result;
use crate::model::topology::Topology;

pub const ATTENTION_SLOPE: f64 = 0.2;

#[derive(Debug, Clone)]
struct GatHead {
    w: ParamId,
    a: ParamId,
}

#[derive(Debug, Clone)]
pub struct GatLayer {
    heads: Vec<GatHead>,
    pub in_dim: usize,
    pub out_per_head: usize,
}

/// Attention coefficients of one layer: `alpha[head][receiver]` is the
/// softmax node over that receiver's in-neighborhood, sender order matching
/// [`Topology::in_neighbors`].
#[derive(Debug, Clone)]
pub struct LayerAttention {
    pub alpha: Vec<Vec<Node>>,
}

impl GatLayer {
    pub fn register(
        ps: &mut ParamStore,
        prefix: &str,
        num_heads: usize,
        in_dim: usize,
        out_per_head: usize,
        seed: u64,
    ) -> Result<GatLayer> {
        let mut heads = Vec::with_capacity(num_heads);
        for k in 0..num_heads {
            let w = ps.register(
                &format!("{prefix}.h{k}.w"),
                &[out_per_head, in_dim],
                InitScheme::Glorot,
                seed,
            )?;
            let a = ps.register(
                &format!("{prefix}.h{k}.a"),
                &[2 * out_per_head],
                InitScheme::Glorot,
                seed,
            )?;
            heads.push(GatHead { w, a });
        }
        Ok(GatLayer {
            heads,
            in_dim,
            out_per_head,
        })
    }

    pub fn num_heads(&self) -> usize {
        self.heads.len()
    }

    /// One attention pass. `inputs` must hold one node per topology node.
    /// Returns per-node outputs of width `heads * out_per_head` and the
    /// attention coefficients for inspection.
    pub fn forward(
        &self,
        g: &mut Graph,
        topo: &Topology,
        inputs: &[Node],
    ) -> Result<(Vec<Node>, LayerAttention)> {
        if inputs.len() != topo.num_nodes {
            return Err(crate::error::Error::shape(
                "attention inputs",
                &[topo.num_nodes],
                &[inputs.len()],
            ));
        }
        let mut per_head_outputs: Vec<Vec<Node>> = Vec::with_capacity(self.heads.len());
        let mut alpha_rows: Vec<Vec<Node>> = Vec::with_capacity(self.heads.len());
        for head in &self.heads {
            let w = g.param(head.w)?;
            let a = g.param(head.a)?;
            let transformed: Vec<Node> = inputs
                .iter()
                .map(|&x| g.matvec(w, x))
                .collect::<Result<_>>()?;
            let mut outputs = Vec::with_capacity(topo.num_nodes);
            let mut alphas = Vec::with_capacity(topo.num_nodes);
            for u in 0..topo.num_nodes {
                let senders = topo.in_neighbors(u);
                let mut scores = Vec::with_capacity(senders.len());
                for &v in senders {
                    let pair = g.concat(&[transformed[u], transformed[v]])?;
                    let e = g.dot(pair, a)?;
                    scores.push(g.leaky_relu(e, ATTENTION_SLOPE));
                }
                let row = g.concat(&scores)?;
                let alpha = g.softmax(row)?;
                let sent: Vec<Node> = senders.iter().map(|&v| transformed[v]).collect();
                let agg = g.weighted_sum(alpha, &sent)?;
                outputs.push(g.elu(agg));
                alphas.push(alpha);
            }
            per_head_outputs.push(outputs);
            alpha_rows.push(alphas);
        }

        let outputs = if self.heads.len() == 1 {
            per_head_outputs.pop().unwrap()
        } else {
            let mut joined = Vec::with_capacity(topo.num_nodes);
            for u in 0..topo.num_nodes {
                let parts: Vec<Node> = per_head_outputs.iter().map(|h| h[u]).collect();
                joined.push(g.concat(&parts)?);
            }
            joined
        };
        Ok((outputs, LayerAttention { alpha: alpha_rows }))
    }
}
