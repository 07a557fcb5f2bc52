//! Shared fixtures for the criterion benchmarks.

use caf_core::{Activation, Coupling, CouplingMode, DetRng, MlpModel};

/// The toy-scale architecture: five hidden layers of 128 units.
pub fn toy_velocity_net(seed: u64) -> MlpModel {
    MlpModel::new(&[3, 128, 128, 128, 128, 128, 2], Activation::Relu, seed).expect("valid dims")
}

pub fn random_coupling(n: usize, seed: u64) -> Coupling {
    let mut rng = DetRng::new(seed);
    let pairs = (0..n)
        .map(|_| {
            let x0: Vec<f64> = (0..2).map(|_| rng.standard_normal()).collect();
            let x1: Vec<f64> = (0..2).map(|_| rng.uniform(-3.0, 3.0)).collect();
            (x0, x1)
        })
        .collect();
    Coupling::new(pairs, CouplingMode::Stochastic, "bench").expect("valid pairs")
}
