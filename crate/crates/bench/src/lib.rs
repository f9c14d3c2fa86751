//! Shared fixtures for the benchmarks.

use orthoiv::dgp::{make_params, DgpParams, DrawnSample, Sampler};

/// Default-scale design (n=200, p_x=200, p_z=150) and one draw from it.
pub fn default_scale_draw(seed: u64) -> (DgpParams, DrawnSample) {
    let params = make_params(200, 200, 150).expect("valid design");
    let drawn = Sampler::new(&params).expect("sampler").draw(seed);
    (params, drawn)
}

/// Reduced-scale design for whole-replication benchmarks.
pub fn small_scale_draw(seed: u64) -> (DgpParams, DrawnSample) {
    let params = make_params(100, 60, 40).expect("valid design");
    let drawn = Sampler::new(&params).expect("sampler").draw(seed);
    (params, drawn)
}
