//! Named random streams derived from one master seed.
//!
//! Each stream is keyed by a stable string ("agent:ego/sensor:0",
//! "link:rsu1->ego", ...) so adding an agent never shifts another agent's
//! draws.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use sha2::{Digest, Sha256};

pub type StreamRng = ChaCha8Rng;

pub fn stream_seed(master: u64, key: &str) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(b"/");
    h.update(key.as_bytes());
    h.finalize().into()
}

pub fn stream(master: u64, key: &str) -> StreamRng {
    ChaCha8Rng::from_seed(stream_seed(master, key))
}

pub fn sensor_key(agent: &str, sensor: usize) -> String {
    format!("agent:{agent}/sensor:{sensor}")
}

pub fn link_key(from: &str, to: &str) -> String {
    format!("link:{from}->{to}")
}

pub fn worker_key(agent: &str) -> String {
    format!("worker:{agent}")
}

/// Zero-mean Gaussian draw; `sigma == 0` consumes nothing.
pub fn gauss<R: Rng + ?Sized>(rng: &mut R, sigma: f64) -> f64 {
    if sigma == 0.0 {
        0.0
    } else {
        let z: f64 = StandardNormal.sample(rng);
        z * sigma
    }
}

pub fn poisson<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    // mean is validated finite and non-negative upstream
    let d = Poisson::new(mean).expect("finite positive poisson mean");
    d.sample(rng) as u64
}

pub fn bernoulli<R: Rng + ?Sized>(rng: &mut R, p: f64) -> bool {
    if p <= 0.0 {
        false
    } else if p >= 1.0 {
        true
    } else {
        rng.random::<f64>() < p
    }
}

pub fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        lo
    } else {
        lo + (hi - lo) * rng.random::<f64>()
    }
}
