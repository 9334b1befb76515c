//! Shared fixtures for the criterion benches in `benches/`.

use hexpepo_core::{observable_library, Lattice, PauliSum, Tensor};

pub fn device() -> Lattice {
    Lattice::ibm127().expect("bundled device lattice")
}

pub fn z62() -> PauliSum {
    observable_library("Z62").expect("library observable")
}

/// The Z62 light cone of depth `steps` with Z62 relabelled onto it.
pub fn z62_lightcone(steps: usize) -> (Lattice, PauliSum) {
    let (sub, map) = device().extract_lightcone(&[62], steps).expect("light cone");
    let obs = z62().relabel(|s| map.local(s)).expect("Z62 lies in its light cone");
    (sub, obs)
}

/// A deterministic dense matrix with a slowly decaying spectrum.
pub fn test_matrix(rows: usize, cols: usize) -> Tensor<f64> {
    Tensor::from_fn(vec![rows, cols], |ix| {
        let (i, j) = (ix[0] as f64, ix[1] as f64);
        (1.0 + 0.37 * i + 0.11 * j).sin() / (1.0 + 0.05 * (i - j).abs())
    })
}
