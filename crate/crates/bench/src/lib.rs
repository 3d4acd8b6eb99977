//! Shared fixtures for the benchmarks.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ampd_core::replay::DualReplayBuffer;
use ampd_core::{generate_synthetic_table, EventTable, Experience, SynthSpec, Tensor};

pub fn synthetic_table(n_cases: usize) -> EventTable {
    let spec = SynthSpec {
        n_cases,
        noise_rate: 0.1,
        ..SynthSpec::default()
    };
    generate_synthetic_table(&spec, 1).expect("valid spec").table
}

/// Dual buffer holding `n` experiences with uniform random fitness.
pub fn filled_dual_buffer(n: usize, side: usize) -> DualReplayBuffer {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let state = Arc::new(ampd_core::initial_state(side));
    let mut buf = DualReplayBuffer::new(n, 0.7);
    for i in 0..n {
        let fitness = rng.random::<f64>();
        buf.store(Experience {
            state: Arc::clone(&state),
            action_index: i % 200,
            reward: fitness,
            next_state: Arc::clone(&state),
            fitness,
            success: false,
        });
    }
    buf
}

pub fn random_states(batch: usize, side: usize) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = batch * 3 * side * side;
    Tensor::from_vec(&[batch, 3, side, side], (0..n).map(|_| rng.random::<f64>()).collect()).expect("shape")
}
