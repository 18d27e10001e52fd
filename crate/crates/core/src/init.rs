//! Seeded parameter initialization.

#[cfg(not(feature = "std"))]
use num_traits::Float;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::tensor::Tensor;

/// Independent, reproducible random stream `stream` of `seed`.
pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Kaiming-normal `[cout, cin, kh, kw]` kernel with standard deviation
/// `gain * sqrt(2 / fan_in)`.
pub fn conv_kernel<R: Rng + ?Sized>(rng: &mut R, cout: usize, cin: usize, kh: usize, kw: usize, gain: f64) -> Tensor<f32> {
    let fan_in = (cin * kh * kw) as f64;
    let std = gain * (2.0 / fan_in).sqrt();
    let data: Vec<f32> = (0..cout * cin * kh * kw)
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            (z * std) as f32
        })
        .collect();
    Tensor::from_data(&[cout, cin, kh, kw], data).expect("kernel shape")
}
