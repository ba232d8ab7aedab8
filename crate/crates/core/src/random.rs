//! Seeded generators of random laws, fields and models for property checks.
//!
//! Every draw goes through [`stream_rng`] so that trial `k` of a check sees the
//! same numbers regardless of how trials are scheduled across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::distributions::AtomicDistribution;
use crate::error::Result;
use crate::mdp::{FiniteMdp, Policy, ReturnField, Support};

/// Generator for trial `stream` of a run seeded with `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Flat Dirichlet weights of length `n`.
pub fn dirichlet_weights<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

/// Between `min_atoms` and `max_atoms` atoms placed uniformly in `[lo, hi]`.
pub fn random_law<R: Rng>(
    rng: &mut R,
    lo: f64,
    hi: f64,
    min_atoms: usize,
    max_atoms: usize,
) -> AtomicDistribution {
    let n = rng.gen_range(min_atoms.max(1)..=max_atoms.max(min_atoms.max(1)));
    let weights = dirichlet_weights(rng, n);
    let pairs: Vec<(f64, f64)> = weights
        .into_iter()
        .map(|w| (rng.gen_range(lo..=hi), w))
        .collect();
    AtomicDistribution::new(pairs).expect("random law is valid")
}

/// Field of 2–6 atom laws inside `[lo, hi]`, which must lie in `support`.
pub fn random_field<R: Rng>(
    rng: &mut R,
    n_states: usize,
    n_actions: usize,
    support: Support,
    lo: f64,
    hi: f64,
) -> Result<ReturnField> {
    let laws = (0..n_states * n_actions)
        .map(|_| random_law(rng, lo, hi, 2, 6))
        .collect();
    ReturnField::atomic(n_states, n_actions, support, laws)
}

/// Field filling the whole return support of `mdp`.
pub fn random_field_for<R: Rng>(rng: &mut R, mdp: &FiniteMdp) -> Result<ReturnField> {
    let support = mdp.return_support();
    random_field(
        rng,
        mdp.n_states(),
        mdp.n_actions(),
        support,
        support.lo,
        support.hi,
    )
}

/// Dense random model with 1–3 reward atoms per transition in `[-r_max, r_max]`.
pub fn random_mdp<R: Rng>(
    rng: &mut R,
    n_states: usize,
    n_actions: usize,
    gamma: f64,
    r_max: f64,
) -> Result<FiniteMdp> {
    let transition = (0..n_states)
        .map(|_| {
            (0..n_actions)
                .map(|_| dirichlet_weights(rng, n_states))
                .collect()
        })
        .collect();
    let reward = (0..n_states)
        .map(|_| {
            (0..n_actions)
                .map(|_| {
                    (0..n_states)
                        .map(|_| random_law(rng, -r_max, r_max, 1, 3))
                        .collect()
                })
                .collect()
        })
        .collect();
    FiniteMdp::new(gamma, transition, reward, Some(r_max))
}

pub fn random_policy<R: Rng>(rng: &mut R, n_states: usize, n_actions: usize) -> Result<Policy> {
    Policy::new(
        (0..n_states)
            .map(|_| dirichlet_weights(rng, n_actions))
            .collect(),
    )
}
