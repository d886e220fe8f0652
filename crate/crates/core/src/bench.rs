//! Micro-benchmarks for the signing primitives.
//!
//! Each iteration is timed on its own so min and max are per-operation.
//! Inputs are drawn from a seeded stream and prepared outside the timed
//! section; only the operation itself is measured.

use std::fmt;
use std::hint::black_box;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::crypto::{generate_keypair, hash, sign, verify};

/// Message length for sign, verify and hash: one encoded PoL response.
pub const MESSAGE_LEN: usize = 250;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BenchOp {
    Keygen,
    Sign,
    Verify,
    Hash,
}

impl BenchOp {
    pub const ALL: [BenchOp; 4] = [BenchOp::Keygen, BenchOp::Sign, BenchOp::Verify, BenchOp::Hash];

    pub fn name(self) -> &'static str {
        match self {
            BenchOp::Keygen => "keygen",
            BenchOp::Sign => "sign",
            BenchOp::Verify => "verify",
            BenchOp::Hash => "hash",
        }
    }
}

impl fmt::Display for BenchOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BenchOp {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        BenchOp::ALL
            .into_iter()
            .find(|op| op.name() == s)
            .ok_or_else(|| format!("unknown bench op `{s}` (expected keygen, sign, verify or hash)"))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchStats {
    pub op: BenchOp,
    pub iterations: usize,
    pub min: Duration,
    pub mean: Duration,
    pub max: Duration,
    /// Iterations whose result checked out: a produced key or signature
    /// that verifies, or a verify call that accepted a valid signature.
    pub successes: usize,
}

impl BenchStats {
    pub fn success_rate(&self) -> f64 {
        if self.iterations == 0 {
            return 1.0;
        }
        self.successes as f64 / self.iterations as f64
    }

    pub const CSV_COLUMNS: &'static str = "op,iterations,min_ns,mean_ns,max_ns,success_rate";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{:.6}",
            self.op,
            self.iterations,
            self.min.as_nanos(),
            self.mean.as_nanos(),
            self.max.as_nanos(),
            self.success_rate()
        )
    }
}

impl fmt::Display for BenchStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<7} iters={} min={:?} mean={:?} max={:?} success={:.2}%",
            self.op.name(),
            self.iterations,
            self.min,
            self.mean,
            self.max,
            100.0 * self.success_rate()
        )
    }
}

fn summarize(op: BenchOp, samples: &[Duration], successes: usize) -> BenchStats {
    let total: Duration = samples.iter().sum();
    BenchStats {
        op,
        iterations: samples.len(),
        min: samples.iter().min().copied().unwrap_or_default(),
        mean: if samples.is_empty() { Duration::ZERO } else { total / samples.len() as u32 },
        max: samples.iter().max().copied().unwrap_or_default(),
        successes,
    }
}

fn message(rng: &mut ChaCha20Rng) -> Vec<u8> {
    let mut m = vec![0u8; MESSAGE_LEN];
    rng.fill_bytes(&mut m);
    m
}

/// Times `iterations` runs of `op`.
pub fn run_bench(op: BenchOp, iterations: usize, seed: u64) -> BenchStats {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(iterations);
    let mut successes = 0;
    for _ in 0..iterations {
        let ok = match op {
            BenchOp::Keygen => {
                let start = Instant::now();
                let kp = black_box(generate_keypair(&mut rng));
                samples.push(start.elapsed());
                let m = message(&mut rng);
                kp.sign(&m).is_ok_and(|s| verify(&kp.public, &m, &s))
            }
            BenchOp::Sign => {
                let kp = generate_keypair(&mut rng);
                let m = message(&mut rng);
                let start = Instant::now();
                let sig = black_box(sign(&kp.secret, &m));
                samples.push(start.elapsed());
                sig.is_ok_and(|s| verify(&kp.public, &m, &s))
            }
            BenchOp::Verify => {
                let kp = generate_keypair(&mut rng);
                let m = message(&mut rng);
                let sig = kp.sign(&m).expect("fresh key signs");
                let start = Instant::now();
                let ok = black_box(verify(&kp.public, &m, &sig));
                samples.push(start.elapsed());
                ok
            }
            BenchOp::Hash => {
                let m = message(&mut rng);
                let start = Instant::now();
                let h = black_box(hash(&m));
                samples.push(start.elapsed());
                h == hash(&m)
            }
        };
        successes += usize::from(ok);
    }
    summarize(op, &samples, successes)
}
