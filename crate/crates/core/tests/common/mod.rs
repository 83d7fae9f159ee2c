#![allow(dead_code)]

use limoe_core::datagen::SensorModel;
use limoe_core::encoders::EncoderConfig;
use limoe_core::nn::{Graph, Real, Tensor, Var};
use limoe_core::{Point, PointCloud};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn micro_sensor() -> SensorModel {
    SensorModel {
        beam_count: 4,
        azimuth_steps: 16,
        range_height: 4,
        range_width: 16,
        ..SensorModel::default()
    }
}

pub fn micro_config() -> EncoderConfig {
    EncoderConfig {
        dim: 8,
        hidden: 8,
        num_classes: 4,
        voxel_size: [1.0; 3],
        centroids: 6,
        neighbors: 4,
        ..EncoderConfig::default()
    }
}

/// `n` labelled points inside the sensor's vertical field of view.
pub fn micro_cloud(n: usize, classes: i32, seed: u64) -> PointCloud {
    let sensor = micro_sensor();
    let mut r = rng(seed);
    let points = (0..n)
        .map(|_| {
            let az: f64 = r.gen_range(-3.1..3.1);
            let el: f64 = r.gen_range(-sensor.fov_down + 0.01..sensor.fov_total - sensor.fov_down - 0.01);
            let d: f64 = r.gen_range(1.0..6.0);
            Point {
                xyz: [d * el.cos() * az.cos(), d * el.cos() * az.sin(), d * el.sin()],
                intensity: r.gen_range(0.0..1.0),
                beam: r.gen_range(0..sensor.beam_count as u16),
                label: r.gen_range(-1..classes),
            }
        })
        .collect();
    PointCloud::new(points)
}

pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> Vec<f64> {
    let mut r = rng(seed);
    (0..rows * cols).map(|_| r.gen_range(-1.0..1.0)).collect()
}

pub fn random_tensor(rows: usize, cols: usize, seed: u64) -> Tensor<f32> {
    Tensor::matrix(
        rows,
        cols,
        random_matrix(rows, cols, seed).into_iter().map(|v| v as f32).collect(),
    )
    .unwrap()
}

/// `Σ x ⊙ R` for a fixed random `R`, a loss with a dense gradient.
pub fn probe_loss<T: Real>(g: &mut Graph<T>, x: Var, seed: u64) -> Var {
    let (n, d) = g.shape(x);
    let r = g.constant_f64(n, d, &random_matrix(n, d, seed)).unwrap();
    let m = g.mul(x, r).unwrap();
    g.sum(m).unwrap()
}
