//! Deterministic initial-state generation.
//!
//! The generator is splitmix64 with uniforms taken from the top 53 bits and
//! momenta drawn through Box–Muller, spelled out here rather than taken from
//! a library so that any reimplementation reproduces identical streams from
//! a seed.

use crate::lattice::PhaseState;

/// splitmix64: `state += 0x9E3779B97F4A7C15`, then two xor-multiply rounds.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in `[0, 1)` from the top 53 bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `(0, 1]`; the open lower end feeds the Box–Muller log.
    fn next_f64_open(&mut self) -> f64 {
        ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// One Box–Muller pair of standard normals.
    pub fn next_normal_pair(&mut self) -> (f64, f64) {
        let u1 = self.next_f64_open();
        let u2 = self.next_f64();
        let radius = (-2.0 * u1.ln()).sqrt();
        let angle = 2.0 * std::f64::consts::PI * u2;
        (radius * angle.cos(), radius * angle.sin())
    }
}

/// Parameters of a seeded random state: positions laid on a descending
/// ladder `spacing · (N−1−i)` plus a uniform jitter in `[−q_box, q_box]`,
/// momenta Gaussian with deviation `p_sigma`.
#[derive(Debug, Clone, Copy)]
pub struct StateDistribution {
    pub q_box: f64,
    pub p_sigma: f64,
    pub spacing: f64,
}

/// Draws a phase state: first `N` uniforms for the positions (in site
/// order), then `⌈N/2⌉` Box–Muller pairs for the momenta, extras discarded.
pub fn sample_state(seed: u64, sites: usize, dist: &StateDistribution) -> PhaseState {
    let mut rng = SplitMix64::new(seed);
    let q = (0..sites)
        .map(|i| {
            dist.spacing * (sites - 1 - i) as f64 + dist.q_box * (2.0 * rng.next_f64() - 1.0)
        })
        .collect();
    let mut p = Vec::with_capacity(sites);
    while p.len() < sites {
        let (z0, z1) = rng.next_normal_pair();
        p.push(dist.p_sigma * z0);
        if p.len() < sites {
            p.push(dist.p_sigma * z1);
        }
    }
    PhaseState { q, p }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splitmix_reference_stream() {
        // Published reference: seed 1234567 produces 0x599ed017fb08fc85.
        let mut rng = SplitMix64::new(1234567);
        assert_eq!(rng.next_u64(), 0x599ed017fb08fc85);
        assert_eq!(rng.next_u64(), 0x2c73f08458540fa5);
        assert_eq!(rng.next_u64(), 0x883ebce5a3f27c77);

        // Frozen stream for a second seed: any change to the generator
        // breaks cross-run reproducibility.
        let mut rng = SplitMix64::new(0x1234_5678);
        let got: Vec<u64> = (0..4).map(|_| rng.next_u64()).collect();
        assert_eq!(
            got,
            vec![
                0x38f1dc39d1906b6f,
                0xdfe4142236dd9517,
                0x30c0356884c4f31f,
                0x3e293305663e57f9,
            ]
        );
    }

    #[test]
    fn uniforms_in_range_and_deterministic() {
        let mut a = SplitMix64::new(7);
        let mut b = SplitMix64::new(7);
        for _ in 0..1000 {
            let x = a.next_f64();
            assert!((0.0..1.0).contains(&x));
            assert_eq!(x, b.next_f64());
        }
    }

    #[test]
    fn sampled_states_reproduce_and_differ_by_seed() {
        let dist = StateDistribution {
            q_box: 0.5,
            p_sigma: 0.3,
            spacing: 2.0,
        };
        let s1 = sample_state(42, 5, &dist);
        let s2 = sample_state(42, 5, &dist);
        assert_eq!(s1, s2);
        let s3 = sample_state(43, 5, &dist);
        assert_ne!(s1, s3);
        // ladder ordering survives a small jitter
        for i in 0..4 {
            assert!(s1.q[i] > s1.q[i + 1]);
        }
    }

    #[test]
    fn normals_have_sane_moments() {
        let mut rng = SplitMix64::new(99);
        let n = 20_000;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..n / 2 {
            let (a, b) = rng.next_normal_pair();
            sum += a + b;
            sumsq += a * a + b * b;
        }
        let mean = sum / n as f64;
        let var = sumsq / n as f64 - mean * mean;
        assert!(mean.abs() < 0.05, "mean {mean}");
        assert!((var - 1.0).abs() < 0.05, "variance {var}");
    }
}
