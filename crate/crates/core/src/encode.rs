//! Flattening of a [`FrameInput`] into the network input vector.
//!
//! Layout: `N` broadcast headings scaled by `1/π`, then for every slot in
//! the given order `[x, y, φ/π, γ]`. Length is `N + 4M`.

use std::f64::consts::PI;

use crate::types::FrameInput;
use crate::{Error, Result};

pub const VALUES_PER_SLOT: usize = 4;

pub fn input_dim(n: usize, m: usize) -> usize {
    n + VALUES_PER_SLOT * m
}

pub fn encode_frame(frame: &FrameInput, n: usize, m: usize) -> Result<Vec<f64>> {
    let mut out = vec![0.0; input_dim(n, m)];
    encode_into(frame, n, m, &mut out)?;
    Ok(out)
}

/// Writes the encoding into `out`, which must have length `N + 4M`.
pub fn encode_into(frame: &FrameInput, n: usize, m: usize, out: &mut [f64]) -> Result<()> {
    if frame.broadcasts.len() != n {
        return Err(Error::Shape(format!("{} broadcasts, expected {n}", frame.broadcasts.len())));
    }
    if frame.slots.len() != m {
        return Err(Error::Shape(format!("{} slots, expected {m}", frame.slots.len())));
    }
    if out.len() != input_dim(n, m) {
        return Err(Error::Shape(format!("output buffer {} != {}", out.len(), input_dim(n, m))));
    }
    for (o, b) in out.iter_mut().zip(&frame.broadcasts) {
        *o = b / PI;
    }
    for (chunk, d) in out[n..].chunks_exact_mut(VALUES_PER_SLOT).zip(&frame.slots) {
        if d.is_empty() {
            chunk.fill(0.0);
        } else {
            chunk.copy_from_slice(&[d.x, d.y, d.phi / PI, d.gamma]);
        }
    }
    Ok(())
}
