//! Graph-level building blocks of the network.
//!
//! Every function records its computation on the supplied [`Graph`] so the
//! same code serves inference and training. Patch matrices are `M × D` with
//! one row per patch; attention vectors are `M × 1` columns.

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};

/// Gated attention weights over the patches of `patches`:
/// `softmax_m(scoreᵀ tanh(hiddenᵀ v_m))`, normalised across the `M` rows.
pub fn head_attention(
    g: &mut Graph,
    patches: NodeId,
    hidden: NodeId,
    score: NodeId,
) -> Result<NodeId> {
    let pre = g.matmul(patches, hidden)?;
    let act = g.tanh(pre)?;
    let logits = g.matmul(act, score)?;
    g.softmax(logits, 0)
}

/// Scales every patch row by its attention weight. The `M × 1` weight column
/// is duplicated across the `D` feature columns and multiplied element-wise.
pub fn head_feature(g: &mut Graph, patches: NodeId, weights: NodeId) -> Result<NodeId> {
    let (m, d) = g.value(patches).dims2()?;
    let (wm, wc) = g.value(weights).dims2()?;
    if wm != m || wc != 1 {
        return Err(Error::dim(
            "head_feature",
            g.value(patches).shape(),
            g.value(weights).shape(),
        ));
    }
    let wide = g.broadcast_cols(weights, d)?;
    g.mul(patches, wide)
}

/// Residual aggregation shared by both patch-mixing variants:
/// `relu(V + [h_1, …, h_H] · projection)`.
fn residual_merge(
    g: &mut Graph,
    patches: NodeId,
    head_outputs: &[NodeId],
    projection: NodeId,
) -> Result<NodeId> {
    let cat = g.concat_cols(head_outputs)?;
    let mixed = g.matmul(cat, projection)?;
    let sum = g.add(patches, mixed)?;
    g.relu(sum)
}

/// Multi-head gated patch transformation. `heads` holds `(hidden, score)`
/// per head in concatenation order. Returns the transformed patches and each
/// head's `M × 1` weights.
pub fn patch_transform(
    g: &mut Graph,
    patches: NodeId,
    heads: &[(NodeId, NodeId)],
    projection: NodeId,
) -> Result<(NodeId, Vec<NodeId>)> {
    let mut weights = Vec::with_capacity(heads.len());
    let mut features = Vec::with_capacity(heads.len());
    for &(hidden, score) in heads {
        let a = head_attention(g, patches, hidden, score)?;
        features.push(head_feature(g, patches, a)?);
        weights.push(a);
    }
    let out = residual_merge(g, patches, &features, projection)?;
    Ok((out, weights))
}

/// Scaled dot-product self-attention alternative. `heads` holds
/// `(query, key, value)` maps of width `D / H`. Returns the transformed
/// patches and each head's `M × M` row-stochastic attention matrix.
pub fn sdpa_transform(
    g: &mut Graph,
    patches: NodeId,
    heads: &[(NodeId, NodeId, NodeId)],
    projection: NodeId,
) -> Result<(NodeId, Vec<NodeId>)> {
    let mut attention = Vec::with_capacity(heads.len());
    let mut outputs = Vec::with_capacity(heads.len());
    for &(wq, wk, wv) in heads {
        let width = g.value(wq).cols();
        let q = g.matmul(patches, wq)?;
        let k = g.matmul(patches, wk)?;
        let v = g.matmul(patches, wv)?;
        let kt = g.transpose(k)?;
        let scores = g.matmul(q, kt)?;
        let scaled = g.scale(scores, 1.0 / (width as f64).sqrt())?;
        let attn = g.softmax(scaled, 1)?;
        outputs.push(g.matmul(attn, v)?);
        attention.push(attn);
    }
    let out = residual_merge(g, patches, &outputs, projection)?;
    Ok((out, attention))
}

/// Tag-specific pooling: attention weights in the gated form, then the
/// weighted sum of patch rows. Returns `(t_k as 1 × D, weights as M × 1)`.
pub fn tag_attention(
    g: &mut Graph,
    patches: NodeId,
    hidden: NodeId,
    score: NodeId,
) -> Result<(NodeId, NodeId)> {
    let alpha = head_attention(g, patches, hidden, score)?;
    let row = g.transpose(alpha)?;
    let pooled = g.matmul(row, patches)?;
    Ok((pooled, alpha))
}

/// Class probabilities `softmax(classifierᵀ t)` as a `1 × D_k` row.
pub fn predict_tag(g: &mut Graph, pooled: NodeId, classifier: NodeId) -> Result<NodeId> {
    let logits = g.matmul(pooled, classifier)?;
    g.softmax(logits, 1)
}
