use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub d_token: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_hidden: usize,
    pub d_ff: usize,
    pub gnn_layers: usize,
    pub gnn_hops: usize,
    pub conv_kernel_widths: Vec<usize>,
    pub kernels_per_width: usize,
    pub dropout: f64,
    pub max_seq_len: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            d_token: 128,
            n_layers: 6,
            n_heads: 8,
            d_hidden: 256,
            d_ff: 1024,
            gnn_layers: 2,
            gnn_hops: 2,
            conv_kernel_widths: vec![2, 3, 4],
            kernels_per_width: 64,
            dropout: 0.1,
            max_seq_len: 512,
        }
    }
}

impl EncoderConfig {
    pub fn toy() -> Self {
        EncoderConfig {
            d_token: 8,
            n_layers: 1,
            n_heads: 2,
            d_hidden: 16,
            d_ff: 32,
            gnn_layers: 1,
            gnn_hops: 2,
            conv_kernel_widths: vec![2, 3],
            kernels_per_width: 2,
            dropout: 0.1,
            max_seq_len: 128,
        }
    }

    pub fn n_kernels(&self) -> usize {
        self.conv_kernel_widths.len() * self.kernels_per_width
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_heads == 0 || !self.d_hidden.is_multiple_of(self.n_heads) {
            return Err(Error::invalid(format!("d_hidden {} not divisible by {} heads", self.d_hidden, self.n_heads)));
        }
        if self.conv_kernel_widths.is_empty() || self.conv_kernel_widths.contains(&0) || self.kernels_per_width == 0 {
            return Err(Error::invalid("conv widths must be >= 1 and non-empty"));
        }
        if self.gnn_hops == 0 {
            return Err(Error::ZeroHop);
        }
        if !(0.0..1.0).contains(&self.dropout) || self.max_seq_len < 2 {
            return Err(Error::invalid("dropout must lie in [0, 1) and max_seq_len >= 2"));
        }
        Ok(())
    }
}
