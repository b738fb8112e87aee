//! Shared fixtures for the criterion benches.

use lfintrinsic_core::synth::{generate, SceneSpec};
use lfintrinsic_core::{LightField, ScalarLightField};

/// A small noisy Mondrian scene used by all benches.
pub fn bench_scene(width: usize, height: usize) -> LightField {
    let spec = SceneSpec {
        width,
        height,
        noise_amplitude: 0.02,
        ..SceneSpec::default()
    };
    generate(&spec, 42).expect("bench scene").0
}

/// The single-channel norm of the bench scene (for scalar-field benches).
pub fn bench_scalar(width: usize, height: usize) -> ScalarLightField {
    bench_scene(width, height).per_ray_l2_norm()
}
