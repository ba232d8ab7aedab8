//! Finite MDPs, stationary policies, return-distribution fields, and the two
//! classical oracles (linear-solve Q-values and Monte Carlo rollouts).

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::distributions::{AtomicDistribution, GridCdf, ReturnLaw};
use crate::error::{Error, Result};

/// Tolerance on probability-vector row sums.
pub const ROW_SUM_TOLERANCE: f64 = 1e-12;

fn check_row(row: &[f64], what: impl Fn() -> String) -> std::result::Result<(), String> {
    if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(format!("{} has a negative or non-finite entry", what()));
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
        return Err(format!("{} sums to {sum}", what()));
    }
    Ok(())
}

fn sample_index<R: Rng>(rng: &mut R, probs: &[f64]) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

/// Closed interval `[lo, hi]` containing every return.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Support {
    pub lo: f64,
    pub hi: f64,
}

impl Support {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::InvalidParameter(format!("support [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi })
    }

    /// `[-r_max / (1 - gamma), r_max / (1 - gamma)]`.
    pub fn for_returns(r_max: f64, gamma: f64) -> Self {
        let b = r_max / (1.0 - gamma);
        Self { lo: -b, hi: b }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    /// Slack for rounding in `r + gamma * x` near the boundary.
    pub fn slack(&self) -> f64 {
        1e-9 * self.width().max(1.0)
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo - self.slack() && x <= self.hi + self.slack()
    }

    pub(crate) fn check(&self, law: &AtomicDistribution) -> Result<()> {
        for &x in [law.min_location(), law.max_location()].iter() {
            if !self.contains(x) {
                return Err(Error::SupportBound {
                    location: x,
                    lo: self.lo,
                    hi: self.hi,
                });
            }
        }
        Ok(())
    }
}

/// Finite MDP with per-transition atomic reward laws.
#[derive(Clone, Debug, PartialEq)]
pub struct FiniteMdp {
    n_states: usize,
    n_actions: usize,
    gamma: f64,
    /// `P(s' | s, a)` at `(s * n_actions + a) * n_states + s'`.
    transition: Vec<f64>,
    /// Reward law of `(s, a, s')`, same indexing as `transition`.
    reward: Vec<AtomicDistribution>,
    r_max: f64,
}

impl FiniteMdp {
    /// Validates and builds a model. `r_max` defaults to the largest absolute
    /// reward atom; when given it must dominate every reward atom.
    pub fn new(
        gamma: f64,
        transition: Vec<Vec<Vec<f64>>>,
        reward: Vec<Vec<Vec<AtomicDistribution>>>,
        r_max: Option<f64>,
    ) -> Result<Self> {
        let n_states = transition.len();
        if n_states == 0 {
            return Err(Error::InvalidMdp("no states".into()));
        }
        let n_actions = transition[0].len();
        if n_actions == 0 {
            return Err(Error::InvalidMdp("no actions".into()));
        }
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::InvalidMdp(format!("gamma {gamma} not in (0, 1)")));
        }
        if reward.len() != n_states {
            return Err(Error::InvalidMdp(format!(
                "reward table has {} states, expected {n_states}",
                reward.len()
            )));
        }
        let mut flat_t = Vec::with_capacity(n_states * n_actions * n_states);
        let mut flat_r = Vec::with_capacity(n_states * n_actions * n_states);
        for (s, (t_rows, r_rows)) in transition.into_iter().zip(reward).enumerate() {
            if t_rows.len() != n_actions || r_rows.len() != n_actions {
                return Err(Error::InvalidMdp(format!(
                    "state {s}: expected {n_actions} actions"
                )));
            }
            for (a, (row, rewards)) in t_rows.into_iter().zip(r_rows).enumerate() {
                if row.len() != n_states || rewards.len() != n_states {
                    return Err(Error::InvalidMdp(format!(
                        "(s={s}, a={a}): expected {n_states} successor entries"
                    )));
                }
                check_row(&row, || format!("transition row (s={s}, a={a})"))
                    .map_err(Error::InvalidMdp)?;
                flat_t.extend(row);
                flat_r.extend(rewards);
            }
        }
        let observed = flat_r
            .iter()
            .map(|d| d.min_location().abs().max(d.max_location().abs()))
            .fold(0.0_f64, f64::max);
        let r_max = match r_max {
            Some(r) if !(r.is_finite() && r >= 0.0) => {
                return Err(Error::InvalidMdp(format!(
                    "r_max {r} must be finite and >= 0"
                )))
            }
            Some(r) => {
                if let Some((i, d)) = flat_r
                    .iter()
                    .enumerate()
                    .find(|(_, d)| d.min_location() < -r || d.max_location() > r)
                {
                    let s = i / (n_actions * n_states);
                    let a = (i / n_states) % n_actions;
                    let sp = i % n_states;
                    return Err(Error::InvalidMdp(format!(
                        "reward (s={s}, a={a}, s'={sp}) has support [{}, {}] beyond r_max {r}",
                        d.min_location(),
                        d.max_location()
                    )));
                }
                r
            }
            None => observed,
        };
        Ok(Self {
            n_states,
            n_actions,
            gamma,
            transition: flat_t,
            reward: flat_r,
            r_max,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn n_pairs(&self) -> usize {
        self.n_states * self.n_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    /// Same model with a different discount factor.
    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::InvalidMdp(format!("gamma {gamma} not in (0, 1)")));
        }
        Ok(Self {
            gamma,
            ..self.clone()
        })
    }

    /// Interval containing every discounted return of this model.
    pub fn return_support(&self) -> Support {
        Support::for_returns(self.r_max, self.gamma)
    }

    pub fn transition_row(&self, s: usize, a: usize) -> &[f64] {
        let base = (s * self.n_actions + a) * self.n_states;
        &self.transition[base..base + self.n_states]
    }

    pub fn reward(&self, s: usize, a: usize, s_next: usize) -> &AtomicDistribution {
        &self.reward[(s * self.n_actions + a) * self.n_states + s_next]
    }

    fn check_pair(&self, s: usize, a: usize) -> Result<()> {
        if s >= self.n_states || a >= self.n_actions {
            return Err(Error::Dimension(format!(
                "(s={s}, a={a}) outside {}x{}",
                self.n_states, self.n_actions
            )));
        }
        Ok(())
    }

    /// Law of the one-step reward `R(s, a)`: the transition-weighted mixture
    /// of the per-successor reward laws.
    pub fn reward_marginal(&self, s: usize, a: usize) -> Result<AtomicDistribution> {
        self.check_pair(s, a)?;
        AtomicDistribution::mixture(
            self.transition_row(s, a)
                .iter()
                .enumerate()
                .map(|(sp, &p)| (p, self.reward(s, a, sp))),
        )
    }

    /// Mean one-step reward for every `(s, a)`.
    pub fn mean_rewards(&self) -> Vec<f64> {
        (0..self.n_states)
            .flat_map(|s| (0..self.n_actions).map(move |a| (s, a)))
            .map(|(s, a)| {
                self.transition_row(s, a)
                    .iter()
                    .enumerate()
                    .map(|(sp, p)| p * self.reward(s, a, sp).mean())
                    .sum()
            })
            .collect()
    }
}

/// Stationary stochastic policy `pi(a | s)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Policy {
    n_states: usize,
    n_actions: usize,
    probs: Vec<f64>,
}

impl Policy {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n_states = rows.len();
        if n_states == 0 {
            return Err(Error::InvalidPolicy("no states".into()));
        }
        let n_actions = rows[0].len();
        let mut probs = Vec::with_capacity(n_states * n_actions);
        for (s, row) in rows.into_iter().enumerate() {
            if row.len() != n_actions {
                return Err(Error::InvalidPolicy(format!(
                    "state {s} has {} actions, expected {n_actions}",
                    row.len()
                )));
            }
            check_row(&row, || format!("policy row s={s}")).map_err(Error::InvalidPolicy)?;
            probs.extend(row);
        }
        Ok(Self {
            n_states,
            n_actions,
            probs,
        })
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Self {
            n_states,
            n_actions,
            probs: vec![1.0 / n_actions as f64; n_states * n_actions],
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n_states).map(|s| self.row(s).to_vec()).collect()
    }

    pub fn check_compatible(&self, mdp: &FiniteMdp) -> Result<()> {
        if self.n_states != mdp.n_states || self.n_actions != mdp.n_actions {
            return Err(Error::Dimension(format!(
                "policy is {}x{}, MDP is {}x{}",
                self.n_states, self.n_actions, mdp.n_states, mdp.n_actions
            )));
        }
        Ok(())
    }
}

/// Joint successor kernel `P^pi((s', a') | (s, a))` over flattened pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct JointKernel {
    n: usize,
    /// Row-major dense `n x n` matrix.
    dense: Vec<f64>,
}

impl JointKernel {
    /// Builds a kernel from dense rows; each row must be a probability vector.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        let mut dense = Vec::with_capacity(n * n);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != n {
                return Err(Error::Dimension(format!(
                    "kernel row {i} has {} entries",
                    row.len()
                )));
            }
            check_row(&row, || format!("kernel row {i}")).map_err(Error::InvalidParameter)?;
            dense.extend(row);
        }
        Ok(Self { n, dense })
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.dense[i * self.n..(i + 1) * self.n]
    }

    /// Nonzero successors of flattened pair `i`.
    pub fn successors(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.row(i)
            .iter()
            .copied()
            .enumerate()
            .filter(|(_, p)| *p > 0.0)
    }
}

/// `P^pi((s', a') | (s, a)) = P(s' | s, a) * pi(a' | s')`.
pub fn policy_kernel(mdp: &FiniteMdp, policy: &Policy) -> Result<JointKernel> {
    policy.check_compatible(mdp)?;
    let n = mdp.n_pairs();
    let na = mdp.n_actions;
    let mut dense = vec![0.0; n * n];
    for s in 0..mdp.n_states {
        for a in 0..na {
            let i = s * na + a;
            for (sp, &p) in mdp.transition_row(s, a).iter().enumerate() {
                for (ap, &q) in policy.row(sp).iter().enumerate() {
                    dense[i * n + sp * na + ap] = p * q;
                }
            }
        }
    }
    Ok(JointKernel { n, dense })
}

/// Solves `Q = r_bar + gamma P^pi Q` by LU factorisation. Indexed `s * n_actions + a`.
pub fn classical_q_values(mdp: &FiniteMdp, policy: &Policy) -> Result<Vec<f64>> {
    let kernel = policy_kernel(mdp, policy)?;
    let n = kernel.size();
    let lhs = DMatrix::from_fn(n, n, |i, j| {
        let id = if i == j { 1.0 } else { 0.0 };
        id - mdp.gamma * kernel.row(i)[j]
    });
    let rhs = DVector::from_vec(mdp.mean_rewards());
    let q = lhs.lu().solve(&rhs).ok_or(Error::Singular)?;
    if q.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular);
    }
    Ok(q.iter().copied().collect())
}

/// Sup-norm residual `|| Q - r_bar - gamma P^pi Q ||_inf`.
pub fn q_residual(mdp: &FiniteMdp, policy: &Policy, q: &[f64]) -> Result<f64> {
    let kernel = policy_kernel(mdp, policy)?;
    let r = mdp.mean_rewards();
    Ok((0..kernel.size())
        .map(|i| {
            let next: f64 = kernel.row(i).iter().zip(q).map(|(p, v)| p * v).sum();
            (q[i] - r[i] - mdp.gamma * next).abs()
        })
        .fold(0.0, f64::max))
}

/// Smallest horizon `T` with `gamma^T r_max / (1 - gamma) <= bias`.
pub fn horizon_for_bias(mdp: &FiniteMdp, bias: f64) -> usize {
    let scale = mdp.r_max / (1.0 - mdp.gamma);
    if scale <= bias {
        return 1;
    }
    ((bias / scale).ln() / mdp.gamma.ln()).ceil().max(1.0) as usize
}

/// Empirical law of the truncated discounted return from `(s, a)`.
///
/// Sample `i` draws from a ChaCha8 stream `i` keyed by `seed`, so the output
/// depends only on `(seed, n_samples)` and not on scheduling.
pub fn monte_carlo_returns(
    mdp: &FiniteMdp,
    policy: &Policy,
    s: usize,
    a: usize,
    horizon: usize,
    n_samples: usize,
    seed: u64,
) -> Result<AtomicDistribution> {
    mdp.check_pair(s, a)?;
    policy.check_compatible(mdp)?;
    if n_samples == 0 {
        return Err(Error::InvalidParameter("n_samples must be positive".into()));
    }
    let returns: Vec<f64> = (0..n_samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i);
            rollout(mdp, policy, s, a, horizon, &mut rng)
        })
        .collect();
    let w = 1.0 / n_samples as f64;
    Ok(AtomicDistribution::from_pairs_unchecked(
        returns.into_iter().map(|g| (g, w)).collect(),
    ))
}

fn rollout<R: Rng>(
    mdp: &FiniteMdp,
    policy: &Policy,
    mut s: usize,
    mut a: usize,
    horizon: usize,
    rng: &mut R,
) -> f64 {
    let mut g = 0.0;
    let mut discount = 1.0;
    for _ in 0..horizon {
        let sp = sample_index(rng, mdp.transition_row(s, a));
        let reward = mdp.reward(s, a, sp);
        let r = reward.locations()[sample_index(rng, reward.weights())];
        g += discount * r;
        discount *= mdp.gamma;
        s = sp;
        a = sample_index(rng, policy.row(s));
    }
    g
}

/// Which carrier a field uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Atomic,
    Grid,
}

impl std::str::FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "atomic" => Ok(Self::Atomic),
            "grid" => Ok(Self::Grid),
            other => Err(Error::InvalidParameter(format!(
                "unknown backend {other:?}"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum FieldEntries {
    Atomic(Vec<AtomicDistribution>),
    Grid(Vec<GridCdf>),
}

/// Table `(s, a) -> return law`, one carrier per field.
#[derive(Clone, Debug, PartialEq)]
pub struct ReturnField {
    n_states: usize,
    n_actions: usize,
    support: Support,
    entries: FieldEntries,
}

impl ReturnField {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        support: Support,
        entries: FieldEntries,
    ) -> Result<Self> {
        let len = match &entries {
            FieldEntries::Atomic(v) => v.len(),
            FieldEntries::Grid(v) => v.len(),
        };
        if n_states == 0 || n_actions == 0 || len != n_states * n_actions {
            return Err(Error::Dimension(format!(
                "field with {len} entries for {n_states}x{n_actions} pairs"
            )));
        }
        match &entries {
            FieldEntries::Atomic(v) => {
                for d in v {
                    support.check(d)?;
                }
            }
            FieldEntries::Grid(v) => {
                let first = &v[0];
                if v.iter().any(|g| {
                    g.x_min() != first.x_min() || g.step() != first.step() || g.len() != first.len()
                }) {
                    return Err(Error::InvalidGrid(
                        "all grid entries of a field must share one grid".into(),
                    ));
                }
                for g in v {
                    support.check(&g.to_atomic())?;
                }
            }
        }
        Ok(Self {
            n_states,
            n_actions,
            support,
            entries,
        })
    }

    pub fn atomic(
        n_states: usize,
        n_actions: usize,
        support: Support,
        entries: Vec<AtomicDistribution>,
    ) -> Result<Self> {
        Self::new(n_states, n_actions, support, FieldEntries::Atomic(entries))
    }

    /// Every entry equal to `law`.
    pub fn constant(
        n_states: usize,
        n_actions: usize,
        support: Support,
        law: AtomicDistribution,
    ) -> Result<Self> {
        Self::atomic(
            n_states,
            n_actions,
            support,
            vec![law; n_states * n_actions],
        )
    }

    /// The default starting field: `delta_0` everywhere on the model's return support.
    pub fn zeros_for(mdp: &FiniteMdp) -> Self {
        Self::constant(
            mdp.n_states(),
            mdp.n_actions(),
            mdp.return_support(),
            AtomicDistribution::point_mass(0.0),
        )
        .expect("delta_0 lies in every return support")
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn len(&self) -> usize {
        self.n_states * self.n_actions
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn support(&self) -> Support {
        self.support
    }

    pub fn backend(&self) -> Backend {
        match self.entries {
            FieldEntries::Atomic(_) => Backend::Atomic,
            FieldEntries::Grid(_) => Backend::Grid,
        }
    }

    pub fn entries(&self) -> &FieldEntries {
        &self.entries
    }

    pub fn atomic_entries(&self) -> Option<&[AtomicDistribution]> {
        match &self.entries {
            FieldEntries::Atomic(v) => Some(v),
            FieldEntries::Grid(_) => None,
        }
    }

    pub fn grid_entries(&self) -> Option<&[GridCdf]> {
        match &self.entries {
            FieldEntries::Grid(v) => Some(v),
            FieldEntries::Atomic(_) => None,
        }
    }

    pub fn index(&self, s: usize, a: usize) -> usize {
        s * self.n_actions + a
    }

    /// Entry `(s, a)` as a generic law.
    pub fn law(&self, s: usize, a: usize) -> &dyn ReturnLaw {
        self.law_at(self.index(s, a))
    }

    pub fn law_at(&self, i: usize) -> &dyn ReturnLaw {
        match &self.entries {
            FieldEntries::Atomic(v) => &v[i],
            FieldEntries::Grid(v) => &v[i],
        }
    }

    /// Entry means, flattened.
    pub fn means(&self) -> Vec<f64> {
        match &self.entries {
            FieldEntries::Atomic(v) => v.iter().map(AtomicDistribution::mean).collect(),
            FieldEntries::Grid(v) => v.iter().map(GridCdf::mean).collect(),
        }
    }

    /// Largest atom (or node) count among entries.
    pub fn max_atoms(&self) -> usize {
        match &self.entries {
            FieldEntries::Atomic(v) => v.iter().map(AtomicDistribution::len).max().unwrap_or(0),
            FieldEntries::Grid(v) => v.iter().map(GridCdf::len).max().unwrap_or(0),
        }
    }

    pub fn same_shape(&self, other: &ReturnField) -> Result<()> {
        if self.n_states != other.n_states || self.n_actions != other.n_actions {
            return Err(Error::Dimension(format!(
                "fields are {}x{} and {}x{}",
                self.n_states, self.n_actions, other.n_states, other.n_actions
            )));
        }
        Ok(())
    }

    pub(crate) fn with_atomic(&self, entries: Vec<AtomicDistribution>) -> Result<Self> {
        Self::atomic(self.n_states, self.n_actions, self.support, entries)
    }

    pub(crate) fn with_grid(&self, entries: Vec<GridCdf>) -> Result<Self> {
        Self::new(
            self.n_states,
            self.n_actions,
            self.support,
            FieldEntries::Grid(entries),
        )
    }
}
