//! CDF-level distributional Bellman operator for policy evaluation.
//!
//! The three primitive operators act entrywise on a [`ReturnField`]:
//! reward translation `(S_R F)(x) = E_r F(x - r)`, discount scaling
//! `(D_g F)(x) = F(x / g)` and conditional expectation
//! `(C F)(s, a) = sum P^pi((s', a') | (s, a)) F(s', a')`.
//!
//! The full update [`bellman_apply`] is the law-level map
//! `Z(s, a) <- Law(R(s, a, s') + gamma Z(s', a'))`, whose CDF is
//! `E_{r, (s', a')} F_{s', a'}((x - r) / gamma)`; [`bellman_cdf_pointwise`]
//! evaluates that CDF directly and serves as a cross-check.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::{cramer_distance, AtomicDistribution, GridCdf};
use crate::error::{Error, Result};
pub use crate::mdp::Backend;
use crate::mdp::{FieldEntries, FiniteMdp, JointKernel, Policy, ReturnField, Support};

/// Uniform grid used by the grid backend.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub x_min: f64,
    pub step: f64,
    pub n: usize,
}

impl GridSpec {
    /// `n` nodes spanning `support` end to end.
    pub fn covering(support: Support, n: usize) -> Self {
        let n = n.max(2);
        Self {
            x_min: support.lo,
            step: support.width().max(f64::MIN_POSITIVE) / (n - 1) as f64,
            n,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.step > 0.0 && self.step.is_finite() && self.x_min.is_finite()) || self.n < 2 {
            return Err(Error::InvalidGrid(format!("{self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BellmanConfig {
    /// Atom-merge span applied after every atomic update; 0 disables merging.
    pub merge_delta: f64,
    pub backend: Backend,
    /// Required for, and only for, the grid backend.
    pub grid: Option<GridSpec>,
    /// Atomic backend only: Cramér projection onto these nodes after every
    /// update, as an alternative to merging.
    #[serde(default)]
    pub lattice: Option<GridSpec>,
    /// Stop once the a-posteriori Banach bound falls to this value.
    pub stop_tol: f64,
    pub max_iter: usize,
}

impl BellmanConfig {
    /// Exact atomic updates (no merging).
    pub fn exact(stop_tol: f64, max_iter: usize) -> Self {
        Self {
            merge_delta: 0.0,
            backend: Backend::Atomic,
            grid: None,
            lattice: None,
            stop_tol,
            max_iter,
        }
    }

    pub fn with_merge_delta(mut self, delta: f64) -> Self {
        self.merge_delta = delta;
        self
    }

    pub fn with_lattice(mut self, lattice: GridSpec) -> Self {
        self.lattice = Some(lattice);
        self
    }

    pub fn grid(grid: GridSpec, stop_tol: f64, max_iter: usize) -> Self {
        Self {
            merge_delta: 0.0,
            backend: Backend::Grid,
            grid: Some(grid),
            lattice: None,
            stop_tol,
            max_iter,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.stop_tol.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
            return Err(Error::InvalidParameter(format!(
                "stop_tol {} must be positive",
                self.stop_tol
            )));
        }
        if !(self.merge_delta >= 0.0 && self.merge_delta.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "merge_delta {} must be nonnegative",
                self.merge_delta
            )));
        }
        if let Some(l) = &self.lattice {
            l.validate()?;
            if self.backend != Backend::Atomic || self.merge_delta > 0.0 {
                return Err(Error::InvalidParameter(
                    "lattice projection needs the atomic backend and merge_delta = 0".into(),
                ));
            }
        }
        match (self.backend, &self.grid) {
            (Backend::Grid, Some(g)) => g.validate(),
            (Backend::Atomic, None) => Ok(()),
            (Backend::Grid, None) => Err(Error::InvalidParameter(
                "grid backend requires a grid spec".into(),
            )),
            (Backend::Atomic, Some(_)) => Err(Error::InvalidParameter(
                "grid spec given for the atomic backend".into(),
            )),
        }
    }
}

fn check_shape(field: &ReturnField, mdp: &FiniteMdp) -> Result<()> {
    if field.n_states() != mdp.n_states() || field.n_actions() != mdp.n_actions() {
        return Err(Error::Dimension(format!(
            "field is {}x{}, MDP is {}x{}",
            field.n_states(),
            field.n_actions(),
            mdp.n_states(),
            mdp.n_actions()
        )));
    }
    Ok(())
}

fn grid_map<F>(template: &GridCdf, f: F) -> GridCdf
where
    F: Fn(f64) -> f64,
{
    let values = (0..template.len()).map(|i| f(template.node(i))).collect();
    GridCdf::from_raw(template.x_min(), template.step(), values)
}

/// `(S_R F)(s, a)(x) = E_{r ~ R(s, a)} F_{s, a}(x - r)`.
pub fn apply_reward_translation(field: &ReturnField, mdp: &FiniteMdp) -> Result<ReturnField> {
    check_shape(field, mdp)?;
    let na = mdp.n_actions();
    let rewards: Vec<AtomicDistribution> = (0..field.len())
        .map(|i| mdp.reward_marginal(i / na, i % na))
        .collect::<Result<_>>()?;
    match field.entries() {
        FieldEntries::Atomic(v) => {
            field.with_atomic(v.iter().zip(&rewards).map(|(d, r)| d.convolve(r)).collect())
        }
        FieldEntries::Grid(v) => field.with_grid(
            v.iter()
                .zip(&rewards)
                .map(|(g, r)| grid_map(g, |x| r.atoms().map(|(rj, q)| q * g.interp(x - rj)).sum()))
                .collect(),
        ),
    }
}

/// `(D_g F)(x) = F(x / g)`: pushforward under `x -> g x`.
pub fn apply_discount_scale(field: &ReturnField, gamma: f64) -> Result<ReturnField> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "gamma {gamma} not in (0, 1)"
        )));
    }
    match field.entries() {
        FieldEntries::Atomic(v) => field.with_atomic(v.iter().map(|d| d.scale(gamma)).collect()),
        FieldEntries::Grid(v) => field.with_grid(
            v.iter()
                .map(|g| grid_map(g, |x| g.interp(x / gamma)))
                .collect(),
        ),
    }
}

/// `(C F)(s, a) = sum_{(s', a')} K((s', a') | (s, a)) F(s', a')`.
pub fn apply_conditional_expectation(
    field: &ReturnField,
    kernel: &JointKernel,
) -> Result<ReturnField> {
    if kernel.size() != field.len() {
        return Err(Error::Dimension(format!(
            "kernel over {} pairs, field has {}",
            kernel.size(),
            field.len()
        )));
    }
    match field.entries() {
        FieldEntries::Atomic(v) => field.with_atomic(
            (0..field.len())
                .map(|i| AtomicDistribution::mixture(kernel.successors(i).map(|(j, w)| (w, &v[j]))))
                .collect::<Result<_>>()?,
        ),
        FieldEntries::Grid(v) => {
            let template = &v[0];
            field.with_grid(
                (0..field.len())
                    .map(|i| {
                        let mut values = vec![0.0; template.len()];
                        for (j, w) in kernel.successors(i) {
                            for (acc, y) in values.iter_mut().zip(v[j].values()) {
                                *acc += w * y;
                            }
                        }
                        GridCdf::from_raw(template.x_min(), template.step(), values)
                    })
                    .collect(),
            )
        }
    }
}

/// Exact law-level update of one atomic entry, before merging.
fn atomic_update(
    entries: &[AtomicDistribution],
    mdp: &FiniteMdp,
    policy: &Policy,
    s: usize,
    a: usize,
) -> AtomicDistribution {
    let gamma = mdp.gamma();
    let na = mdp.n_actions();
    let mut pairs = Vec::new();
    for (sp, &p) in mdp.transition_row(s, a).iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        let reward = mdp.reward(s, a, sp);
        for (ap, &q) in policy.row(sp).iter().enumerate() {
            if q == 0.0 {
                continue;
            }
            let w = p * q;
            let z = &entries[sp * na + ap];
            for (r, rw) in reward.atoms() {
                let wr = w * rw;
                pairs.extend(z.atoms().map(|(x, zw)| (r + gamma * x, wr * zw)));
            }
        }
    }
    AtomicDistribution::from_pairs_unchecked(pairs)
}

/// One Bellman update; also returns the largest per-entry Cramér
/// perturbation introduced by atom merging or lattice projection (0 when
/// both are off).
pub fn bellman_apply_with_bound(
    field: &ReturnField,
    mdp: &FiniteMdp,
    policy: &Policy,
    config: &BellmanConfig,
) -> Result<(ReturnField, f64)> {
    check_shape(field, mdp)?;
    policy.check_compatible(mdp)?;
    let na = mdp.n_actions();
    let gamma = mdp.gamma();
    match field.entries() {
        FieldEntries::Atomic(v) => {
            let updated: Vec<(AtomicDistribution, f64)> = (0..field.len())
                .into_par_iter()
                .map(|i| {
                    let raw = atomic_update(v, mdp, policy, i / na, i % na);
                    match &config.lattice {
                        Some(l) => raw.project_to_lattice(l.x_min, l.step, l.n),
                        None => Ok(raw.merge_atoms_with_bound(config.merge_delta)),
                    }
                })
                .collect::<Result<_>>()?;
            let bound = updated.iter().map(|u| u.1).fold(0.0, f64::max);
            let out = field.with_atomic(updated.into_iter().map(|u| u.0).collect())?;
            Ok((out, bound))
        }
        FieldEntries::Grid(v) => {
            let template = &v[0];
            let out: Vec<GridCdf> = (0..field.len())
                .into_par_iter()
                .map(|i| {
                    let (s, a) = (i / na, i % na);
                    grid_map(template, |x| {
                        let mut acc = 0.0;
                        for (sp, &p) in mdp.transition_row(s, a).iter().enumerate() {
                            if p == 0.0 {
                                continue;
                            }
                            let reward = mdp.reward(s, a, sp);
                            for (ap, &q) in policy.row(sp).iter().enumerate() {
                                if q == 0.0 {
                                    continue;
                                }
                                let g = &v[sp * na + ap];
                                for (r, rw) in reward.atoms() {
                                    acc += p * q * rw * g.interp((x - r) / gamma);
                                }
                            }
                        }
                        acc
                    })
                })
                .collect();
            Ok((field.with_grid(out)?, 0.0))
        }
    }
}

/// One application of the CDF-level Bellman operator, followed by atom
/// merging per `config`.
pub fn bellman_apply(
    field: &ReturnField,
    mdp: &FiniteMdp,
    policy: &Policy,
    config: &BellmanConfig,
) -> Result<ReturnField> {
    bellman_apply_with_bound(field, mdp, policy, config).map(|(f, _)| f)
}

/// `E_{r, (s', a')} F_{s', a'}((x - r) / gamma)`, evaluated directly.
pub fn bellman_cdf_pointwise(
    field: &ReturnField,
    mdp: &FiniteMdp,
    policy: &Policy,
    s: usize,
    a: usize,
    x: f64,
) -> f64 {
    let gamma = mdp.gamma();
    let mut acc = 0.0;
    for (sp, &p) in mdp.transition_row(s, a).iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        let reward = mdp.reward(s, a, sp);
        for (ap, &q) in policy.row(sp).iter().enumerate() {
            if q == 0.0 {
                continue;
            }
            let law = field.law(sp, ap);
            for (r, rw) in reward.atoms() {
                acc += p * q * rw * law.cdf((x - r) / gamma);
            }
        }
    }
    acc
}

/// Supremum over `(s, a)` of the entrywise Cramér distance.
pub fn field_distance(f1: &ReturnField, f2: &ReturnField) -> Result<f64> {
    f1.same_shape(f2)?;
    Ok((0..f1.len())
        .map(|i| cramer_distance(f1.law_at(i), f2.law_at(i)))
        .fold(0.0, f64::max))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub successive_distance: f64,
    pub banach_bound: f64,
    pub atom_count_max: usize,
}

#[derive(Clone, Debug)]
pub struct EvaluationResult {
    /// Last iterate.
    pub field: ReturnField,
    pub trace: Vec<TraceRow>,
    pub converged: bool,
    /// `sqrt(g) / (1 - sqrt(g)) * d(F_{n-1}, F_n)` at the last iterate.
    pub banach_bound: f64,
    /// Sum over iterations of the per-step merge perturbation bounds.
    pub merge_perturbation: f64,
    /// Certified distance from the last iterate to the true fixed point,
    /// `(sqrt(g) d_n + e) / (1 - sqrt(g))` with `e` the largest merge bound.
    pub certified_error: f64,
}

impl EvaluationResult {
    pub fn iterations(&self) -> usize {
        self.trace.len()
    }
}

pub(crate) fn to_backend(field: &ReturnField, config: &BellmanConfig) -> Result<ReturnField> {
    match (config.backend, field.entries()) {
        (Backend::Atomic, FieldEntries::Atomic(_)) => Ok(field.clone()),
        (Backend::Grid, FieldEntries::Grid(_)) => Ok(field.clone()),
        (Backend::Grid, FieldEntries::Atomic(v)) => {
            let g = config.grid.expect("validated grid spec");
            field.with_grid(
                v.iter()
                    .map(|d| d.to_grid(g.x_min, g.step, g.n))
                    .collect::<Result<_>>()?,
            )
        }
        (Backend::Atomic, FieldEntries::Grid(_)) => Err(Error::Backend(
            "cannot start an atomic evaluation from a grid field".into(),
        )),
    }
}

/// Banach iteration `F_{n+1} = T F_n` from `init` (all `delta_0` when `None`).
///
/// Stops once `d(F_n, F_{n+1}) sqrt(g) / (1 - sqrt(g)) <= stop_tol`, or after
/// `max_iter` updates with `converged = false`.
pub fn evaluate_policy(
    mdp: &FiniteMdp,
    policy: &Policy,
    config: &BellmanConfig,
    init: Option<&ReturnField>,
) -> Result<EvaluationResult> {
    config.validate()?;
    policy.check_compatible(mdp)?;
    let start = match init {
        Some(f) => f.clone(),
        None => ReturnField::zeros_for(mdp),
    };
    check_shape(&start, mdp)?;
    let mut field = to_backend(&start, config)?;
    let root = mdp.gamma().sqrt();
    let factor = root / (1.0 - root);
    let mut trace = Vec::new();
    let mut converged = false;
    let mut banach_bound = f64::INFINITY;
    let mut merge_total = 0.0;
    let mut merge_max = 0.0_f64;
    let mut last_distance = f64::INFINITY;
    for iteration in 1..=config.max_iter {
        let (next, merge) = bellman_apply_with_bound(&field, mdp, policy, config)?;
        let distance = field_distance(&field, &next)?;
        merge_total += merge;
        merge_max = merge_max.max(merge);
        banach_bound = distance * factor;
        last_distance = distance;
        trace.push(TraceRow {
            iteration,
            successive_distance: distance,
            banach_bound,
            atom_count_max: next.max_atoms(),
        });
        field = next;
        if banach_bound <= config.stop_tol {
            converged = true;
            break;
        }
    }
    let certified_error = (root * last_distance + merge_max) / (1.0 - root);
    Ok(EvaluationResult {
        field,
        trace,
        converged,
        banach_bound,
        merge_perturbation: merge_total,
        certified_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::policy_kernel;

    fn single_state(r: f64, gamma: f64) -> FiniteMdp {
        FiniteMdp::new(
            gamma,
            vec![vec![vec![1.0]]],
            vec![vec![vec![AtomicDistribution::point_mass(r)]]],
            None,
        )
        .unwrap()
    }

    fn bern(lo: f64) -> AtomicDistribution {
        AtomicDistribution::two_point(lo, lo + 1.0, 0.5).unwrap()
    }

    fn wide() -> Support {
        Support::new(-10.0, 10.0).unwrap()
    }

    #[test]
    fn reward_translation_examples() {
        let mdp = single_state(1.0, 0.5);
        let f = ReturnField::constant(1, 1, wide(), AtomicDistribution::point_mass(0.0)).unwrap();
        let out = apply_reward_translation(&f, &mdp).unwrap();
        assert_eq!(
            out.atomic_entries().unwrap()[0],
            AtomicDistribution::point_mass(1.0)
        );

        let mdp_b = FiniteMdp::new(
            0.5,
            vec![vec![vec![1.0]]],
            vec![vec![vec![bern(0.0)]]],
            None,
        )
        .unwrap();
        let out = apply_reward_translation(&f, &mdp_b).unwrap();
        assert_eq!(out.atomic_entries().unwrap()[0], bern(0.0));

        let f = ReturnField::constant(1, 1, wide(), bern(0.0)).unwrap();
        let out = apply_reward_translation(&f, &mdp).unwrap();
        assert_eq!(out.atomic_entries().unwrap()[0], bern(1.0));
    }

    #[test]
    fn reward_translation_rejects_support_overflow() {
        let mdp = single_state(1.0, 0.5);
        let narrow = Support::new(-1.0, 1.0).unwrap();
        let f = ReturnField::constant(1, 1, narrow, AtomicDistribution::point_mass(0.5)).unwrap();
        assert!(matches!(
            apply_reward_translation(&f, &mdp),
            Err(Error::SupportBound { .. })
        ));
    }

    #[test]
    fn discount_scale_examples() {
        let f = ReturnField::constant(1, 1, wide(), AtomicDistribution::point_mass(1.0)).unwrap();
        let out = apply_discount_scale(&f, 0.5).unwrap();
        assert_eq!(
            out.atomic_entries().unwrap()[0],
            AtomicDistribution::point_mass(0.5)
        );
        let f = ReturnField::constant(1, 1, wide(), AtomicDistribution::point_mass(0.0)).unwrap();
        let out = apply_discount_scale(&f, 0.3).unwrap();
        assert_eq!(out, f);
        assert!(apply_discount_scale(&f, 1.0).is_err());
    }

    #[test]
    fn conditional_expectation_examples() {
        let f = ReturnField::atomic(
            2,
            1,
            wide(),
            vec![
                AtomicDistribution::point_mass(0.0),
                AtomicDistribution::point_mass(1.0),
            ],
        )
        .unwrap();
        let route = JointKernel::from_rows(vec![vec![0.0, 1.0], vec![0.0, 1.0]]).unwrap();
        let out = apply_conditional_expectation(&f, &route).unwrap();
        assert_eq!(
            out.atomic_entries().unwrap()[0],
            AtomicDistribution::point_mass(1.0)
        );
        let mix = JointKernel::from_rows(vec![vec![0.5, 0.5], vec![1.0, 0.0]]).unwrap();
        let out = apply_conditional_expectation(&f, &mix).unwrap();
        assert_eq!(out.atomic_entries().unwrap()[0], bern(0.0));
        let bad = JointKernel::from_rows(vec![vec![1.0]]).unwrap();
        assert!(matches!(
            apply_conditional_expectation(&f, &bad),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn bellman_apply_single_state() {
        let mdp = single_state(1.0, 0.5);
        let pi = Policy::uniform(1, 1);
        let cfg = BellmanConfig::exact(1e-12, 10);
        let support = mdp.return_support();
        let f = ReturnField::zeros_for(&mdp);
        let out = bellman_apply(&f, &mdp, &pi, &cfg).unwrap();
        // Law-level update: 1 + 0.5 * 0.
        assert_eq!(
            out.atomic_entries().unwrap()[0],
            AtomicDistribution::point_mass(1.0)
        );
        let fixed =
            ReturnField::constant(1, 1, support, AtomicDistribution::point_mass(2.0)).unwrap();
        assert_eq!(bellman_apply(&fixed, &mdp, &pi, &cfg).unwrap(), fixed);
    }

    #[test]
    fn bellman_apply_matches_pointwise_form() {
        let mdp = FiniteMdp::new(
            0.6,
            vec![vec![vec![0.3, 0.7]], vec![vec![1.0, 0.0]]],
            vec![
                vec![vec![bern(0.0), AtomicDistribution::point_mass(-0.5)]],
                vec![vec![AtomicDistribution::point_mass(0.25), bern(-1.0)]],
            ],
            None,
        )
        .unwrap();
        let pi = Policy::uniform(2, 1);
        let f = ReturnField::atomic(
            2,
            1,
            mdp.return_support(),
            vec![
                bern(-0.3),
                AtomicDistribution::new([(0.1, 0.2), (0.7, 0.8)]).unwrap(),
            ],
        )
        .unwrap();
        let out = bellman_apply(&f, &mdp, &pi, &BellmanConfig::exact(1e-9, 1)).unwrap();
        for i in 0..200 {
            let x = -2.5 + i as f64 * 0.0251;
            for s in 0..2 {
                let direct = bellman_cdf_pointwise(&f, &mdp, &pi, s, 0, x);
                let got = out.law(s, 0).cdf(x);
                assert!(
                    (direct - got).abs() < 1e-12,
                    "x={x} s={s}: {direct} vs {got}"
                );
            }
        }
    }

    #[test]
    fn field_distance_examples() {
        let f = ReturnField::atomic(
            2,
            1,
            wide(),
            vec![bern(0.0), AtomicDistribution::point_mass(0.0)],
        )
        .unwrap();
        assert_eq!(field_distance(&f, &f).unwrap(), 0.0);
        let g = ReturnField::atomic(
            2,
            1,
            wide(),
            vec![bern(0.0), AtomicDistribution::point_mass(1.0)],
        )
        .unwrap();
        assert_eq!(field_distance(&f, &g).unwrap(), 1.0);
        let h = ReturnField::constant(1, 2, wide(), bern(0.0)).unwrap();
        assert!(matches!(field_distance(&f, &h), Err(Error::Dimension(_))));
    }

    #[test]
    fn evaluate_single_state_reaches_delta_two() {
        let mdp = single_state(1.0, 0.5);
        let pi = Policy::uniform(1, 1);
        let res = evaluate_policy(&mdp, &pi, &BellmanConfig::exact(1e-12, 500), None).unwrap();
        assert!(res.converged);
        assert_eq!(
            res.field.atomic_entries().unwrap()[0],
            AtomicDistribution::point_mass(2.0)
        );
    }

    #[test]
    fn evaluate_zero_reward_is_delta_zero() {
        let mdp = single_state(0.0, 0.7);
        let pi = Policy::uniform(1, 1);
        let init =
            ReturnField::constant(1, 1, Support::new(-1.0, 1.0).unwrap(), bern(-0.5)).unwrap();
        let res =
            evaluate_policy(&mdp, &pi, &BellmanConfig::exact(1e-10, 2000), Some(&init)).unwrap();
        assert!(res.converged);
        let d = crate::distributions::cramer_distance(
            &res.field.atomic_entries().unwrap()[0],
            &AtomicDistribution::point_mass(0.0),
        );
        assert!(d <= 1e-10 + res.certified_error);
        assert!(res.field.means()[0].abs() < 1e-12);
    }

    #[test]
    fn evaluate_reports_non_convergence() {
        let mdp = single_state(1.0, 0.5);
        let pi = Policy::uniform(1, 1);
        let res = evaluate_policy(&mdp, &pi, &BellmanConfig::exact(1e-12, 1), None).unwrap();
        assert!(!res.converged);
        assert_eq!(res.trace.len(), 1);
    }

    #[test]
    fn grid_backend_single_state() {
        let mdp = single_state(1.0, 0.5);
        let pi = Policy::uniform(1, 1);
        let grid = GridSpec::covering(mdp.return_support(), 2001);
        let res = evaluate_policy(&mdp, &pi, &BellmanConfig::grid(grid, 1e-6, 500), None).unwrap();
        assert!(res.converged);
        assert!(
            (res.field.means()[0] - 2.0).abs() < 0.01,
            "{}",
            res.field.means()[0]
        );
    }

    #[test]
    fn grid_components_match_atomic_in_distance() {
        let mdp = single_state(1.0, 0.5);
        let pi = Policy::uniform(1, 1);
        let kernel = policy_kernel(&mdp, &pi).unwrap();
        let grid = GridSpec::covering(mdp.return_support(), 4001);
        let atomic = ReturnField::constant(1, 1, mdp.return_support(), bern(-0.5)).unwrap();
        let g = atomic
            .with_grid(vec![bern(-0.5)
                .to_grid(grid.x_min, grid.step, grid.n)
                .unwrap()])
            .unwrap();
        let a_out = apply_conditional_expectation(
            &apply_discount_scale(&apply_reward_translation(&atomic, &mdp).unwrap(), 0.5).unwrap(),
            &kernel,
        )
        .unwrap();
        let g_out = apply_conditional_expectation(
            &apply_discount_scale(&apply_reward_translation(&g, &mdp).unwrap(), 0.5).unwrap(),
            &kernel,
        )
        .unwrap();
        assert!(field_distance(&a_out, &g_out).unwrap() < 0.05);
    }

    #[test]
    fn config_validation() {
        assert!(BellmanConfig::exact(0.0, 1).validate().is_err());
        assert!(BellmanConfig::exact(1e-3, 1)
            .with_merge_delta(-1.0)
            .validate()
            .is_err());
        let mut c = BellmanConfig::exact(1e-3, 1);
        c.backend = Backend::Grid;
        assert!(c.validate().is_err());
    }

    #[test]
    fn lattice_config_validation() {
        let grid = GridSpec::covering(Support::new(0.0, 2.0).unwrap(), 5);
        assert!(BellmanConfig::exact(1e-3, 1)
            .with_lattice(grid)
            .validate()
            .is_ok());
        let merged = BellmanConfig::exact(1e-3, 1)
            .with_merge_delta(0.1)
            .with_lattice(grid);
        assert!(merged.validate().is_err());
        let mut on_grid = BellmanConfig::grid(grid, 1e-3, 1);
        on_grid.lattice = Some(grid);
        assert!(on_grid.validate().is_err());
        let bad = GridSpec {
            x_min: 0.0,
            step: 0.0,
            n: 5,
        };
        assert!(BellmanConfig::exact(1e-3, 1)
            .with_lattice(bad)
            .validate()
            .is_err());
    }

    #[test]
    fn lattice_update_splits_onto_nodes() {
        // delta_0 -> delta_{1} under r = 1, gamma = 0.5; with nodes at
        // multiples of 0.75 the mass 1 splits 2/3 at 0.75 and 1/3 at 1.5.
        let mdp = single_state(1.0, 0.5);
        let pi = Policy::uniform(1, 1);
        let grid = GridSpec {
            x_min: 0.0,
            step: 0.75,
            n: 4,
        };
        let config = BellmanConfig::exact(1e-12, 1).with_lattice(grid);
        let f = ReturnField::zeros_for(&mdp);
        let (out, moved) = bellman_apply_with_bound(&f, &mdp, &pi, &config).unwrap();
        let law = &out.atomic_entries().unwrap()[0];
        assert_eq!(law.locations(), &[0.75, 1.5]);
        assert!((law.weights()[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((law.mean() - 1.0).abs() < 1e-15);
        assert!(
            (moved - (0.75_f64 * 2.0 / 9.0).sqrt()).abs() < 1e-12,
            "{moved}"
        );
    }

    #[test]
    fn lattice_iteration_reaches_exact_fixed_point() {
        let mdp = single_state(1.0, 0.5);
        let pi = Policy::uniform(1, 1);
        let grid = GridSpec::covering(mdp.return_support(), 101);
        let config = BellmanConfig::exact(1e-14, 500).with_lattice(grid);
        let res = evaluate_policy(&mdp, &pi, &config, None).unwrap();
        assert!(res.converged);
        let again = bellman_apply(&res.field, &mdp, &pi, &config).unwrap();
        assert!(field_distance(&again, &res.field).unwrap() < 1e-14);
        assert!((res.field.means()[0] - 2.0).abs() < 1e-12);
    }
}
