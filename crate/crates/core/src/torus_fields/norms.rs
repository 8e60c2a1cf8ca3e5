//! Norm estimators.

use serde::{Deserialize, Serialize};

use super::{sup_of_samples, Field};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HolderEstimate {
    pub value: f64,
    /// sum_{k <= m} max_{|gamma| = k} sup |D^gamma f|
    pub integer_part: f64,
    /// [f]_{m + alpha} when alpha > 0
    pub seminorm: Option<f64>,
    /// false when a noticeable share of the weighted spectrum sits in the top third of the band
    pub resolved: bool,
}

pub fn multi_indices(order: u32) -> Vec<[u32; 3]> {
    let mut out = Vec::new();
    for a in (0..=order).rev() {
        for b in (0..=order - a).rev() {
            out.push([a, b, order - a - b]);
        }
    }
    out
}

fn shifted_difference_max(samples: &[Vec<f64>], rank: super::Rank, n: usize, axis: usize, shift: usize) -> f64 {
    let len = n * n * n;
    let mut best = 0.0f64;
    let stride = [n * n, n, 1][axis];
    for idx in 0..len {
        let coord = (idx / stride) % n;
        let other = idx - coord * stride + ((coord + shift) % n) * stride;
        let mut s = 0.0;
        for (c, comp) in samples.iter().enumerate() {
            let d = comp[other] - comp[idx];
            s += super::component_weight(rank, c) * d * d;
        }
        best = best.max(s);
    }
    best.sqrt()
}

/// C^{m + alpha} norm estimate: sup norms of derivatives plus a dyadic-offset seminorm.
pub fn holder_norm(field: &Field, order: f64) -> HolderEstimate {
    let m = order.floor().max(0.0) as u32;
    let alpha = order - m as f64;
    let mut integer_part = 0.0;
    let mut top: Vec<Vec<Vec<f64>>> = Vec::new();
    for k in 0..=m {
        let mut best = 0.0f64;
        for g in multi_indices(k) {
            let s = field.derivative(g).samples();
            best = best.max(sup_of_samples(field.rank, &s));
            if k == m && alpha > 0.0 {
                top.push(s);
            }
        }
        integer_part += best;
    }
    let seminorm = if alpha > 0.0 {
        let n = field.grid.n;
        let h = field.grid.step();
        let mut best = 0.0f64;
        for s in &top {
            let mut shift = 1;
            while shift <= n / 2 {
                let dist = h * shift as f64;
                for axis in 0..3 {
                    let d = shifted_difference_max(s, field.rank, n, axis, shift);
                    best = best.max(d / dist.powf(alpha));
                }
                shift *= 2;
            }
        }
        Some(best)
    } else {
        None
    };
    HolderEstimate {
        value: integer_part + seminorm.unwrap_or(0.0),
        integer_part,
        seminorm,
        resolved: tail_ratio(field, order) <= 1e-3,
    }
}

fn tail_ratio(field: &Field, order: f64) -> f64 {
    let g = field.grid;
    let cut = g.n as i64 / 3;
    let (mut total, mut tail) = (0.0, 0.0);
    for comp in &field.comps {
        for (idx, z) in comp.iter().enumerate() {
            let k = g.wavevector(idx);
            let k2 = (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]) as f64;
            let w = g.weight(idx) * z.norm() * k2.max(1.0).powf(order / 2.0);
            total += w;
            if k.iter().any(|c| c.abs() > cut) {
                tail += w;
            }
        }
    }
    if total == 0.0 {
        0.0
    } else {
        tail / total
    }
}

/// Homogeneous Sobolev norm with the box-volume normalization.
pub fn sobolev_norm(field: &Field, s: f64) -> f64 {
    field.hs_norm_sq(s).sqrt()
}

pub fn l2_norm(field: &Field) -> f64 {
    field.l2_norm()
}

/// Spatial average of each component.
pub fn mean(field: &Field) -> Vec<f64> {
    field.mean()
}
