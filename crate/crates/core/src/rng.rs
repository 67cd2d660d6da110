//! Seeded random streams keyed by `(agent, role, outer k, inner t)`.
//!
//! Every stream is ChaCha8 under the master seed with its 64-bit stream id
//! derived from the key, so draws never depend on evaluation order or on
//! the number of worker threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a stream is used for.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Role {
    /// Inner-loop lower-level gradient samples `ξ`.
    Inner = 1,
    /// Outer hypergradient samples `φ` (and the Neumann depth).
    Outer = 2,
    /// Stochastic JHIP Hessian/Jacobian samples.
    Jhip = 3,
    /// Anything outside the solvers (problem generation, tests).
    Aux = 4,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RngPlan {
    pub seed: u64,
}

/// splitmix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl RngPlan {
    pub fn new(seed: u64) -> Self {
        RngPlan { seed }
    }

    /// Stream id of a key; distinct keys collide with probability ~2⁻⁶⁴.
    pub fn stream_id(agent: usize, role: Role, k: usize, t: usize) -> u64 {
        let mut h = mix(role as u64);
        for part in [agent as u64, k as u64, t as u64] {
            h = mix(h ^ part);
        }
        h
    }

    pub fn stream(&self, agent: usize, role: Role, k: usize, t: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(Self::stream_id(agent, role, k, t));
        rng
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn draws(mut rng: ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.random::<f64>()).collect()
    }

    fn correlation(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    #[test]
    fn same_key_same_stream() {
        let plan = RngPlan::new(7);
        assert_eq!(draws(plan.stream(3, Role::Outer, 5, 0), 100), draws(plan.stream(3, Role::Outer, 5, 0), 100));
        assert_ne!(draws(plan.stream(3, Role::Outer, 5, 0), 10), draws(RngPlan::new(8).stream(3, Role::Outer, 5, 0), 10));
    }

    #[test]
    fn distinct_keys_are_uncorrelated() {
        let plan = RngPlan::new(2024);
        let keys = [
            (0, Role::Inner, 0, 0),
            (1, Role::Inner, 0, 0),
            (0, Role::Outer, 0, 0),
            (0, Role::Inner, 1, 0),
            (0, Role::Inner, 0, 1),
            (0, Role::Jhip, 0, 0),
            (5, Role::Aux, 3, 2),
        ];
        let seqs: Vec<Vec<f64>> = keys.iter().map(|&(a, r, k, t)| draws(plan.stream(a, r, k, t), 10_000)).collect();
        for i in 0..seqs.len() {
            for j in i + 1..seqs.len() {
                let r = correlation(&seqs[i], &seqs[j]);
                assert!(r.abs() < 0.05, "{:?} vs {:?}: r = {r}", keys[i], keys[j]);
            }
        }
    }

    #[test]
    fn stream_ids_do_not_collide_on_a_grid() {
        let mut ids = std::collections::HashSet::new();
        for a in 0..20 {
            for role in [Role::Inner, Role::Outer, Role::Jhip, Role::Aux] {
                for k in 0..20 {
                    for t in 0..20 {
                        assert!(ids.insert(RngPlan::stream_id(a, role, k, t)));
                    }
                }
            }
        }
    }
}
