//! Counter-based random streams.
//!
//! Every stochastic object (a trajectory, a lattice node's transition batch,
//! an audit sample) draws from its own ChaCha8 stream addressed by
//! `(seed, purpose, index)`. Results therefore do not depend on the order in
//! which workers pick up work, nor on the number of workers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Stream families. Distinct purposes never share a key even for equal seeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Trajectory = 1,
    BsdeNode = 2,
    Audit = 3,
    Convexity = 4,
    Pilot = 5,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// The stream for object `index` of family `purpose` under `seed`.
pub fn stream(seed: u64, purpose: Purpose, index: u64) -> ChaCha8Rng {
    let key = splitmix64(seed ^ splitmix64(purpose as u64));
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    rng.set_stream(index);
    rng
}

/// Stream for trajectory `index`. The same index gives the same noise at every
/// noise level, so studies over an epsilon ladder use common random numbers.
pub fn trajectory_stream(seed: u64, index: u64) -> ChaCha8Rng {
    stream(seed, Purpose::Trajectory, index)
}

/// Stream for the transition batch of lattice node `node` at time index `step`.
pub fn node_stream(seed: u64, step: usize, node: usize) -> ChaCha8Rng {
    stream(seed, Purpose::BsdeNode, ((step as u64) << 32) | node as u64)
}

/// Fill `out` with independent N(0, variance) draws.
pub fn fill_normal<R: Rng + ?Sized>(rng: &mut R, variance: f64, out: &mut [f64]) {
    let sd = variance.sqrt();
    for v in out.iter_mut() {
        let z: f64 = rng.sample(StandardNormal);
        *v = sd * z;
    }
}
