//! CNN/MLP feature extraction and the two attention layers.
//!
//! The attention here is deliberately lean: key and value share one weight
//! matrix per head, the query is a fixed learnable vector, scores pass
//! through a leaky rectifier before the neighborhood softmax, and the heads
//! are averaged rather than concatenated with tanh applied after the
//! average.

use super::{EncoderConfig, LocalObservation};
use crate::comm::NeighborSet;
use crate::error::{Error, Result};
use crate::nn::{node, NodeId, NodeMap, ParamInit, ParamSpec, Tape, LEAKY_SLOPE};

/// Initialization layout for the feature extractor and both attention
/// layers. Names are stable; checkpoints and gradient maps key off them.
pub fn encoder_param_spec(enc: &EncoderConfig) -> ParamSpec {
    let (_, _, flat) = enc.conv_dims();
    let mut spec = ParamSpec::default();
    spec.push(
        "enc.cnn.conv1.w",
        ParamInit::ConvXavier {
            out_c: enc.cnn_channels1,
            in_c: 2,
            kh: 5,
            kw: 5,
        },
    );
    spec.push(
        "enc.cnn.conv2.w",
        ParamInit::ConvXavier {
            out_c: enc.cnn_channels2,
            in_c: enc.cnn_channels1,
            kh: 3,
            kw: 3,
        },
    );
    spec.push(
        "enc.cnn.fc.w",
        ParamInit::DenseXavier {
            rows: enc.cnn_out,
            cols: flat,
        },
    );
    spec.push("enc.cnn.fc.b", ParamInit::Zeros { shape: vec![enc.cnn_out] });
    spec.push(
        "enc.mlp.fc1.w",
        ParamInit::DenseXavier {
            rows: enc.mlp_hidden,
            cols: enc.status_len(),
        },
    );
    spec.push(
        "enc.mlp.fc1.b",
        ParamInit::Zeros { shape: vec![enc.mlp_hidden] },
    );
    spec.push(
        "enc.mlp.fc2.w",
        ParamInit::DenseXavier {
            rows: enc.mlp_out,
            cols: enc.mlp_hidden,
        },
    );
    spec.push("enc.mlp.fc2.b", ParamInit::Zeros { shape: vec![enc.mlp_out] });
    for layer in 1..=2 {
        let in_dim = if layer == 1 {
            enc.feature_dim()
        } else {
            enc.gat_dim
        };
        for head in 0..enc.gat_heads {
            spec.push(
                format!("gat{layer}.h{head}.w"),
                ParamInit::DenseXavier {
                    rows: enc.gat_dim,
                    cols: in_dim,
                },
            );
            spec.push(
                format!("gat{layer}.h{head}.a"),
                ParamInit::VectorXavier { len: enc.gat_dim },
            );
        }
    }
    spec
}

/// Extracts one UAV's node feature: the grid image through two convolutions
/// and a dense head, the status vector through a two-layer MLP, outputs
/// concatenated.
pub fn encode_observation(
    tape: &mut Tape,
    params: &NodeMap,
    obs: &LocalObservation,
    enc: &EncoderConfig,
) -> Result<NodeId> {
    if obs.status.len() != enc.status_len() {
        return Err(Error::contract(format!(
            "status vector of {} entries, expected {}",
            obs.status.len(),
            enc.status_len()
        )));
    }
    let (_, _, flat) = enc.conv_dims();

    let map = tape.leaf(obs.map.clone());
    let c1 = tape.conv2d(map, node(params, "enc.cnn.conv1.w")?, 2)?;
    let c1 = tape.leaky_relu(c1, LEAKY_SLOPE);
    let c2 = tape.conv2d(c1, node(params, "enc.cnn.conv2.w")?, 2)?;
    let c2 = tape.leaky_relu(c2, LEAKY_SLOPE);
    let flat_map = tape.reshape(c2, vec![flat])?;
    let cnn = tape.dense(
        flat_map,
        node(params, "enc.cnn.fc.w")?,
        Some(node(params, "enc.cnn.fc.b")?),
    )?;
    let cnn = tape.leaky_relu(cnn, LEAKY_SLOPE);

    let status = tape.leaf(crate::nn::RealArray::vector(obs.status.clone()));
    let h = tape.dense(
        status,
        node(params, "enc.mlp.fc1.w")?,
        Some(node(params, "enc.mlp.fc1.b")?),
    )?;
    let h = tape.leaky_relu(h, LEAKY_SLOPE);
    let mlp = tape.dense(
        h,
        node(params, "enc.mlp.fc2.w")?,
        Some(node(params, "enc.mlp.fc2.b")?),
    )?;

    tape.concat(&[cnn, mlp])
}

/// One attention layer for one node, given the features of its neighborhood
/// (itself included, any order). Per head: transform every member, score it
/// against the learnable query, softmax over the neighborhood, and sum the
/// transformed members under those weights. Head outputs are averaged and
/// squashed.
pub fn gat_layer(
    tape: &mut Tape,
    params: &NodeMap,
    prefix: &str,
    neighborhood: &[NodeId],
    enc: &EncoderConfig,
) -> Result<NodeId> {
    if neighborhood.is_empty() {
        return Err(Error::contract("attention over an empty neighborhood"));
    }
    let mut head_sum: Option<NodeId> = None;
    for head in 0..enc.gat_heads {
        let w = node(params, &format!("{prefix}.h{head}.w"))?;
        let a = node(params, &format!("{prefix}.h{head}.a"))?;
        let transformed: Vec<NodeId> = neighborhood
            .iter()
            .map(|&g| tape.dense(g, w, None))
            .collect::<Result<_>>()?;
        let scores: Vec<NodeId> = transformed
            .iter()
            .map(|&wg| {
                let s = tape.dot(a, wg)?;
                Ok(tape.leaky_relu(s, LEAKY_SLOPE))
            })
            .collect::<Result<_>>()?;
        let stacked = tape.stack(&scores)?;
        let alpha = tape.softmax(stacked)?;
        let mut agg: Option<NodeId> = None;
        for (pos, &wg) in transformed.iter().enumerate() {
            let weight = tape.slice(alpha, pos, 1)?;
            let term = tape.scale_by(wg, weight)?;
            agg = Some(match agg {
                Some(acc) => tape.add(acc, term)?,
                None => term,
            });
        }
        let agg = agg.expect("neighborhood checked non-empty");
        head_sum = Some(match head_sum {
            Some(acc) => tape.add(acc, agg)?,
            None => agg,
        });
    }
    let mean = tape.scale(
        head_sum.expect("at least one attention head"),
        1.0 / enc.gat_heads as f64,
    );
    Ok(tape.tanh(mean))
}

/// Runs both attention layers over the whole fleet and concatenates each
/// node's own feature with its second-layer output. Every node reads only
/// features of its neighborhood, so information travels at most two hops.
pub fn encode_graph(
    tape: &mut Tape,
    params: &NodeMap,
    features: &[NodeId],
    neighbors: &NeighborSet,
    enc: &EncoderConfig,
) -> Result<Vec<NodeId>> {
    if features.len() != neighbors.len() {
        return Err(Error::contract(format!(
            "{} features for {} neighbor lists",
            features.len(),
            neighbors.len()
        )));
    }
    let gather = |source: &[NodeId], i: usize| -> Vec<NodeId> {
        neighbors.members(i).iter().map(|&j| source[j]).collect()
    };
    let layer1: Vec<NodeId> = (0..features.len())
        .map(|i| gat_layer(tape, params, "gat1", &gather(features, i), enc))
        .collect::<Result<_>>()?;
    let layer2: Vec<NodeId> = (0..features.len())
        .map(|i| gat_layer(tape, params, "gat2", &gather(&layer1, i), enc))
        .collect::<Result<_>>()?;
    features
        .iter()
        .zip(&layer2)
        .map(|(&g, &out)| tape.concat(&[g, out]))
        .collect()
}

/// Convenience pass from raw observations to per-UAV encodings on one tape.
pub fn encode_all(
    tape: &mut Tape,
    params: &NodeMap,
    observations: &[LocalObservation],
    neighbors: &NeighborSet,
    enc: &EncoderConfig,
) -> Result<Vec<NodeId>> {
    let features: Vec<NodeId> = observations
        .iter()
        .map(|obs| encode_observation(tape, params, obs, enc))
        .collect::<Result<_>>()?;
    encode_graph(tape, params, &features, neighbors, enc)
}
