//! Observation building and the graph-attention encoder.
//!
//! Each UAV turns its partial view of the world into a fixed-length
//! observation (status vector plus a two-channel grid image), runs it through
//! a small CNN/MLP pair to get a node feature, and then exchanges features
//! with its neighbors through two multi-head attention layers. The final
//! encoding concatenates the node's own feature with the attention output so
//! the policy always sees its own state undiluted.

mod gat;
mod obs;

pub use gat::{encode_all, encode_graph, encode_observation, encoder_param_spec, gat_layer};
pub use obs::{observe, LocalObservation};

use crate::error::{Error, Result};

/// Shapes of the observation and encoder stack. Widths are free knobs; the
/// grid side length must match the world's visit grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncoderConfig {
    /// Neighbor slots in the observation and the attention truncation limit.
    pub max_neighbors: usize,
    /// User slots in the observation; also the size of the serve action head
    /// minus the "serve nobody" entry.
    pub max_obs_users: usize,
    /// Side length of the visit grid.
    pub grid_dim: usize,
    pub mlp_hidden: usize,
    pub mlp_out: usize,
    pub cnn_channels1: usize,
    pub cnn_channels2: usize,
    pub cnn_out: usize,
    /// Width of both attention layers.
    pub gat_dim: usize,
    pub gat_heads: usize,
}

impl EncoderConfig {
    /// Length of the flat status vector: own state (position, battery,
    /// radii), neighbor slots (battery, distance, validity), and user slots
    /// (relative position, remaining tasks, validity).
    pub fn status_len(&self) -> usize {
        5 + 3 * self.max_neighbors + 4 * self.max_obs_users
    }

    /// Node feature dimension entering the first attention layer.
    pub fn feature_dim(&self) -> usize {
        self.cnn_out + self.mlp_out
    }

    /// Encoded-state dimension: own feature concatenated with the second
    /// attention layer's output.
    pub fn z_dim(&self) -> usize {
        self.feature_dim() + self.gat_dim
    }

    /// Serve head width: one logit per user slot plus "serve nobody".
    pub fn serve_actions(&self) -> usize {
        self.max_obs_users + 1
    }

    /// Spatial sides after the two fixed convolutions (5x5 then 3x3, both
    /// stride 2) and the resulting flattened length.
    pub fn conv_dims(&self) -> (usize, usize, usize) {
        let o1 = (self.grid_dim.saturating_sub(5)) / 2 + 1;
        let o2 = (o1.saturating_sub(3)) / 2 + 1;
        (o1, o2, self.cnn_channels2 * o2 * o2)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("max_obs_users", self.max_obs_users),
            ("grid_dim", self.grid_dim),
            ("mlp_hidden", self.mlp_hidden),
            ("mlp_out", self.mlp_out),
            ("cnn_channels1", self.cnn_channels1),
            ("cnn_channels2", self.cnn_channels2),
            ("cnn_out", self.cnn_out),
            ("gat_dim", self.gat_dim),
            ("gat_heads", self.gat_heads),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::config(format!("{name} must be positive")));
            }
        }
        if self.grid_dim < 5 {
            return Err(Error::config(format!(
                "grid of {0}x{0} cells is too small for the 5x5 convolution",
                self.grid_dim
            )));
        }
        let (o1, _, _) = self.conv_dims();
        if o1 < 3 {
            return Err(Error::config(format!(
                "grid of {0}x{0} cells is too small for the second convolution",
                self.grid_dim
            )));
        }
        Ok(())
    }
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            max_neighbors: 4,
            max_obs_users: 10,
            grid_dim: 25,
            mlp_hidden: 64,
            mlp_out: 64,
            cnn_channels1: 8,
            cnn_channels2: 16,
            cnn_out: 64,
            gat_dim: 128,
            gat_heads: 4,
        }
    }
}
