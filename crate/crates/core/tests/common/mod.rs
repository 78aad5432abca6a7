#![allow(dead_code)]

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use wbkmeans::{ClusterBounds, SiteSet, WeightedDataset};

pub struct Instance {
    pub data: WeightedDataset,
    pub bounds: ClusterBounds,
    pub sites: Vec<Vec<f64>>,
}

impl Instance {
    pub fn site_set(&self) -> SiteSet {
        SiteSet::new(self.sites.clone()).unwrap()
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn points(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..d).map(|_| rng.gen_range(-5.0..5.0)).collect()).collect()
}

pub fn weights(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(0.5..2.0)).collect()
}

/// Random bounds around `W/k` that always admit a feasible assignment; one in
/// four draws is exactly balanced.
pub fn bounds(rng: &mut ChaCha8Rng, k: usize, total: f64) -> ClusterBounds {
    let mean = total / k as f64;
    if rng.gen_bool(0.25) {
        return ClusterBounds::new(vec![mean; k], vec![mean; k]).unwrap();
    }
    let lower = (0..k).map(|_| mean * rng.gen_range(0.3..1.0)).collect();
    let upper = (0..k).map(|_| mean * rng.gen_range(1.0..1.7)).collect();
    ClusterBounds::new(lower, upper).unwrap()
}

pub fn weighted_instance(rng: &mut ChaCha8Rng, k: usize, n: usize, d: usize) -> Instance {
    let data = WeightedDataset::new(&points(rng, n, d), weights(rng, n)).unwrap();
    let bounds = bounds(rng, k, data.total_weight());
    let sites = points(rng, k, d);
    Instance { data, bounds, sites }
}

pub fn line(xs: &[f64], ws: &[f64]) -> WeightedDataset {
    let pts: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x]).collect();
    WeightedDataset::new(&pts, ws.to_vec()).unwrap()
}
