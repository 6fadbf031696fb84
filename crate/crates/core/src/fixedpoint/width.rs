//! Symbolic register-width growth of dot-product layers.

use serde::{Deserialize, Serialize};

fn ceil_log2(n: usize) -> u32 {
    if n <= 1 {
        0
    } else {
        usize::BITS - (n - 1).leading_zeros()
    }
}

/// Output width of a multiply-accumulate layer: the product doubles the
/// operand width and the sum of `fan_in` products adds `ceil(log2(fan_in))`.
pub fn mac_layer_width(input_bits: u32, weight_bits: u32, fan_in: usize) -> u32 {
    input_bits + weight_bits + ceil_log2(fan_in)
}

/// Output width of an MP layer: one bit for the weight/input addition and
/// `ceil(log2(fan_in))` for the residual sum.
pub fn mp_layer_width(input_bits: u32, fan_in: usize) -> u32 {
    input_bits + 1 + ceil_log2(fan_in)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WidthGrowth {
    pub input_bits: u32,
    pub fan_in: usize,
    /// Width after each layer.
    pub mac: Vec<u32>,
    pub mp: Vec<u32>,
}

/// Widths through `layers` cascaded layers of equal fan-in, where each MAC
/// layer's weights are as wide as its inputs.
pub fn width_growth(input_bits: u32, fan_in: usize, layers: usize) -> WidthGrowth {
    let mut mac = Vec::with_capacity(layers);
    let mut mp = Vec::with_capacity(layers);
    let (mut wm, mut wp) = (input_bits, input_bits);
    for _ in 0..layers {
        wm = mac_layer_width(wm, wm, fan_in);
        wp = mp_layer_width(wp, fan_in);
        mac.push(wm);
        mp.push(wp);
    }
    WidthGrowth {
        input_bits,
        fan_in,
        mac,
        mp,
    }
}
