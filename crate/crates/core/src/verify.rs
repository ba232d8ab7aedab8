//! Executable checks of the operator and representation properties.
//!
//! Each check returns [`CheckReport`]s with the worst measured slack and the
//! tolerance it is held to. Randomised checks draw trial `k` from stream `k`
//! of the report's seed, so reports are reproducible apart from `runtime`.

use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bellman::{
    apply_conditional_expectation, apply_discount_scale, apply_reward_translation, bellman_apply,
    bellman_apply_with_bound, bellman_cdf_pointwise, evaluate_policy, field_distance, to_backend,
    BellmanConfig, GridSpec,
};
use crate::distributions::{cramer_distance, AtomicDistribution, JumpFunction};
use crate::error::{Error, Result};
use crate::io::bundled_examples;
use crate::mdp::{
    classical_q_values, horizon_for_bias, monte_carlo_returns, policy_kernel, Backend, FiniteMdp,
    Policy, ReturnField, Support,
};
use crate::random::{random_field, random_law, stream_rng};
use crate::spectral::{
    cdf_side_norm_quadrature, default_eps_list, eps_sweep, h_eps_norm, induced_field_distance,
    lift_v, reg_distance, spectral_bellman_apply, spectral_bellman_direct, spectral_embed,
    transport_u, transport_u_inv, EpsGeometry, QuadratureSpec,
};

/// Outcome of one named check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckReport {
    pub check_name: String,
    pub trials: usize,
    pub worst_slack: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub seed: u64,
    /// Wall-clock seconds.
    pub runtime: f64,
}

impl CheckReport {
    pub fn new(
        check_name: impl Into<String>,
        trials: usize,
        worst_slack: f64,
        tolerance: f64,
        seed: u64,
        runtime: f64,
    ) -> Self {
        Self {
            check_name: check_name.into(),
            trials,
            worst_slack,
            tolerance,
            passed: worst_slack <= tolerance,
            seed,
            runtime,
        }
    }

    /// Same report with `runtime` zeroed, for reproducibility comparisons.
    pub fn without_runtime(&self) -> Self {
        Self {
            runtime: 0.0,
            ..self.clone()
        }
    }
}

/// Tolerances by computation class. Overriding one makes the checks that use
/// it stricter or looser without touching the measured slack.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Allowed excess of the contraction ratio over `sqrt(gamma)`.
    pub contraction: f64,
    /// Exact-arithmetic identities.
    pub exact: f64,
    /// Quadrature-limited relative agreement.
    pub quadrature: f64,
    /// Allowed factor between the observed gap ratio and 2.
    pub recovery_factor: f64,
    /// Fixed-point means against the linear solve.
    pub means: f64,
    /// Multiple of `width / sqrt(n)` allowed against Monte Carlo.
    pub monte_carlo_factor: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            contraction: 1e-9,
            exact: 1e-12,
            quadrature: 1e-6,
            recovery_factor: 1.2,
            means: 1e-6,
            monte_carlo_factor: 3.0,
        }
    }
}

fn random_field_in(
    rng: &mut impl Rng,
    mdp: &FiniteMdp,
    support: Support,
    lo: f64,
    hi: f64,
) -> Result<ReturnField> {
    random_field(rng, mdp.n_states(), mdp.n_actions(), support, lo, hi)
}

/// Draws a pair of distinct random fields, resampling degenerate pairs.
pub fn random_field_pair(
    rng: &mut impl Rng,
    mdp: &FiniteMdp,
    lo: f64,
    hi: f64,
) -> Result<(ReturnField, ReturnField, f64)> {
    let support = mdp.return_support();
    for _ in 0..100 {
        let f1 = random_field_in(rng, mdp, support, lo, hi)?;
        let f2 = random_field_in(rng, mdp, support, lo, hi)?;
        let d = field_distance(&f1, &f2)?;
        if d > 0.0 {
            return Ok((f1, f2, d));
        }
    }
    Err(Error::InvalidParameter(
        "could not draw a non-degenerate field pair".into(),
    ))
}

fn worst(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().fold(0.0, |acc, v| {
        if v.is_nan() || acc.is_nan() {
            f64::NAN
        } else {
            acc.max(v)
        }
    })
}

fn run_trials<F>(trials: usize, seed: u64, f: F) -> Result<Vec<f64>>
where
    F: Fn(&mut rand_chacha::ChaCha8Rng) -> Result<f64> + Sync,
{
    (0..trials as u64)
        .into_par_iter()
        .map(|k| f(&mut stream_rng(seed, k)))
        .collect()
}

/// Worst ratio `d(T f1, T f2) / d(f1, f2)` over random field pairs, exact updates.
pub fn check_contraction(
    mdp: &FiniteMdp,
    policy: &Policy,
    trials: usize,
    seed: u64,
    tol: &Tolerances,
) -> Result<CheckReport> {
    let start = Instant::now();
    let config = BellmanConfig::exact(1e-12, 1);
    let b = mdp.return_support();
    let ratios = run_trials(trials, seed, |rng| {
        let (f1, f2, d) = random_field_pair(rng, mdp, b.lo, b.hi)?;
        let t1 = bellman_apply(&f1, mdp, policy, &config)?;
        let t2 = bellman_apply(&f2, mdp, policy, &config)?;
        Ok(field_distance(&t1, &t2)? / d)
    })?;
    Ok(CheckReport::new(
        "contraction",
        trials,
        worst(ratios),
        mdp.gamma().sqrt() + tol.contraction,
        seed,
        start.elapsed().as_secs_f64(),
    ))
}

/// Reward translation and conditional expectation are non-expansive; discount
/// scaling multiplies every distance by exactly `sqrt(gamma)`.
pub fn check_component_lemmas(
    mdp: &FiniteMdp,
    policy: &Policy,
    trials: usize,
    seed: u64,
    tol: &Tolerances,
) -> Result<Vec<CheckReport>> {
    let b = mdp.return_support();
    let gamma = mdp.gamma();
    let inner = gamma * b.hi;

    let start = Instant::now();
    let reward = run_trials(trials, seed, |rng| {
        let (f1, f2, d) = random_field_pair(rng, mdp, -inner, inner)?;
        let t1 = apply_reward_translation(&f1, mdp)?;
        let t2 = apply_reward_translation(&f2, mdp)?;
        Ok(field_distance(&t1, &t2)? / d)
    })?;
    let reward = CheckReport::new(
        "reward_translation_nonexpansive",
        trials,
        worst(reward),
        1.0 + tol.exact,
        seed,
        start.elapsed().as_secs_f64(),
    );

    let start = Instant::now();
    let root = gamma.sqrt();
    let discount = run_trials(trials, seed, |rng| {
        let (f1, f2, d) = random_field_pair(rng, mdp, b.lo, b.hi)?;
        let t1 = apply_discount_scale(&f1, gamma)?;
        let t2 = apply_discount_scale(&f2, gamma)?;
        Ok((field_distance(&t1, &t2)? / d - root).abs())
    })?;
    let discount = CheckReport::new(
        "discount_scale_equality",
        trials,
        worst(discount),
        tol.exact,
        seed,
        start.elapsed().as_secs_f64(),
    );

    let start = Instant::now();
    let kernel = policy_kernel(mdp, policy)?;
    let expectation = run_trials(trials, seed, |rng| {
        let (f1, f2, d) = random_field_pair(rng, mdp, b.lo, b.hi)?;
        let t1 = apply_conditional_expectation(&f1, &kernel)?;
        let t2 = apply_conditional_expectation(&f2, &kernel)?;
        Ok(field_distance(&t1, &t2)? / d)
    })?;
    let expectation = CheckReport::new(
        "conditional_expectation_nonexpansive",
        trials,
        worst(expectation),
        1.0 + tol.exact,
        seed,
        start.elapsed().as_secs_f64(),
    );
    Ok(vec![reward, discount, expectation])
}

fn term_mismatch(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    worst(
        a.iter()
            .zip(b)
            .map(|(p, q)| (p.0 - q.0).abs().max((p.1 - q.1).abs())),
    )
}

/// Norm preservation of `U` between `H^cdf_eps` (by quadrature) and `H_eps`
/// (closed form), plus the exact identities `U^{-1} U = id` and
/// `U(F_1 - F_2) = Phi(P_1) - Phi(P_2)`.
pub fn check_isometry_and_transport(
    trials: usize,
    seed: u64,
    quad: &QuadratureSpec,
    tol: &Tolerances,
) -> Result<Vec<CheckReport>> {
    let start = Instant::now();
    let eps_values = [1.0, 1e-2, 1e-4];
    let results: Vec<(f64, f64)> = (0..trials as u64)
        .into_par_iter()
        .map(|k| -> Result<(f64, f64)> {
            let mut rng = stream_rng(seed, k);
            let p1 = random_law(&mut rng, -2.0, 2.0, 2, 6);
            let p2 = random_law(&mut rng, -2.0, 2.0, 2, 6);
            let geom = EpsGeometry::new(eps_values[k as usize % eps_values.len()])?;
            let h = JumpFunction::cdf_difference(&p1, &p2);
            let uh = transport_u(&h)?;
            let closed = h_eps_norm(&uh, geom);
            let quadrature = cdf_side_norm_quadrature(&h, geom, quad)?.value;
            let rel = (closed - quadrature).abs() / closed.max(f64::MIN_POSITIVE);
            let back = transport_u_inv(&uh)?;
            let embedded = spectral_embed(&p1).sub(&spectral_embed(&p2));
            let exact = term_mismatch(back.jumps(), h.jumps())
                .max(term_mismatch(uh.terms(), embedded.terms()));
            Ok((rel, exact))
        })
        .collect::<Result<_>>()?;
    let runtime = start.elapsed().as_secs_f64();
    Ok(vec![
        CheckReport::new(
            "isometry_norm",
            trials,
            worst(results.iter().map(|r| r.0)),
            tol.quadrature,
            seed,
            runtime,
        ),
        CheckReport::new(
            "transport_exact",
            trials,
            worst(results.iter().map(|r| r.1)),
            0.0,
            seed,
            runtime,
        ),
    ])
}

/// The atomic update agrees with the pointwise CDF form at random abscissae,
/// and the spectral diagram commutes: lifting `T F` equals both the
/// conjugated and the direct spectral update of the lifted `F`.
pub fn check_intertwining(
    mdp: &FiniteMdp,
    policy: &Policy,
    trials: usize,
    seed: u64,
    tol: &Tolerances,
) -> Result<Vec<CheckReport>> {
    let start = Instant::now();
    let config = BellmanConfig::exact(1e-12, 1);
    let b = mdp.return_support();
    let results: Vec<(f64, f64)> = (0..trials as u64)
        .into_par_iter()
        .map(|k| -> Result<(f64, f64)> {
            let mut rng = stream_rng(seed, k);
            let field = random_field_in(&mut rng, mdp, b, b.lo, b.hi)?;
            let updated = bellman_apply(&field, mdp, policy, &config)?;
            let mut pointwise = 0.0_f64;
            for _ in 0..16 {
                let x = rng.gen_range(b.lo..=b.hi);
                for s in 0..mdp.n_states() {
                    for a in 0..mdp.n_actions() {
                        let direct = bellman_cdf_pointwise(&field, mdp, policy, s, a, x);
                        let via_law = updated.law(s, a).cdf(x);
                        pointwise = pointwise.max((direct - via_law).abs());
                    }
                }
            }
            let lifted = lift_v(&field)?;
            let image = lift_v(&updated)?;
            let conjugated = spectral_bellman_apply(&lifted, mdp, policy, &config)?;
            let direct = spectral_bellman_direct(&lifted, mdp, policy)?;
            let diagram = induced_field_distance(&image, &conjugated)?
                .max(induced_field_distance(&image, &direct)?);
            Ok((pointwise, diagram))
        })
        .collect::<Result<_>>()?;
    let runtime = start.elapsed().as_secs_f64();
    Ok(vec![
        CheckReport::new(
            "cdf_intertwining",
            trials,
            worst(results.iter().map(|r| r.0)),
            tol.exact,
            seed,
            runtime,
        ),
        CheckReport::new(
            "spectral_intertwining",
            trials,
            worst(results.iter().map(|r| r.1)),
            tol.exact,
            seed,
            runtime,
        ),
    ])
}

/// `d_C^2 - d_eps^2`.
fn squared_gap(p1: &AtomicDistribution, p2: &AtomicDistribution, eps: f64) -> Result<f64> {
    let full = cramer_distance(p1, p2);
    let reg = reg_distance(p1, p2, EpsGeometry::new(eps)?);
    Ok(full * full - reg * reg)
}

/// Along a decreasing `eps` list the regularised distance never decreases and
/// stays below the Cramér distance; at the smallest `eps` the squared gap
/// halves when `eps` is quartered. Pairs with equal means have a higher-order
/// gap and only contribute the monotonicity part; identical pairs must give
/// zeros throughout.
///
/// The slack is the worst of `max(ratio / 2, 2 / ratio)`, or infinity on a
/// monotonicity or bound violation.
pub fn check_monotone_recovery(
    pairs: &[(AtomicDistribution, AtomicDistribution)],
    eps_list: &[f64],
    tol: &Tolerances,
) -> Result<CheckReport> {
    let start = Instant::now();
    let mut slack = 1.0_f64;
    for (p1, p2) in pairs {
        let rows = eps_sweep(p1, p2, eps_list)?;
        let full = cramer_distance(p1, p2);
        if rows
            .iter()
            .any(|r| !r.monotone || r.reg_distance > full * (1.0 + tol.exact))
        {
            slack = f64::INFINITY;
            continue;
        }
        if full == 0.0 {
            if rows.iter().any(|r| r.reg_distance != 0.0) {
                slack = f64::INFINITY;
            }
            continue;
        }
        let dmean = p1.mean() - p2.mean();
        if dmean.abs() <= 1e-9 * full {
            continue;
        }
        let eps = *eps_list.last().expect("validated non-empty");
        let ratio = squared_gap(p1, p2, 4.0 * eps)? / squared_gap(p1, p2, eps)?;
        let s = (ratio / 2.0).max(2.0 / ratio);
        slack = if s.is_nan() {
            f64::INFINITY
        } else {
            slack.max(s)
        };
    }
    Ok(CheckReport::new(
        "monotone_recovery",
        pairs.len(),
        slack,
        tol.recovery_factor,
        0,
        start.elapsed().as_secs_f64(),
    ))
}

/// The pairs used by the default recovery check.
pub fn standard_recovery_pairs(
    seed: u64,
    n_random: usize,
) -> Vec<(AtomicDistribution, AtomicDistribution)> {
    let d0 = AtomicDistribution::point_mass(0.0);
    let d1 = AtomicDistribution::point_mass(1.0);
    let bern = AtomicDistribution::two_point(0.0, 1.0, 0.5).expect("valid");
    let mut pairs = vec![(d0.clone(), d1), (bern.clone(), bern.clone()), (d0, bern)];
    for k in 0..n_random as u64 {
        let mut rng = stream_rng(seed, k);
        pairs.push((
            random_law(&mut rng, -2.0, 2.0, 2, 6),
            random_law(&mut rng, -2.0, 2.0, 2, 6),
        ));
    }
    pairs
}

/// Settings of [`check_fixed_point`].
#[derive(Clone, Debug, PartialEq)]
pub struct FixedPointOptions {
    pub config: BellmanConfig,
    /// Monte Carlo rollouts per `(s, a)`; 0 skips that part.
    pub mc_samples: usize,
    /// Truncation bias allowed in the Monte Carlo returns.
    pub mc_bias: f64,
}

impl FixedPointOptions {
    pub fn new(config: BellmanConfig, mc_samples: usize) -> Self {
        Self {
            config,
            mc_samples,
            mc_bias: 1e-9,
        }
    }
}

/// Fixed-point certification against a reference solution `F*` computed by
/// [`evaluate_policy`]:
///
/// * `rate`: `d(F_n, F*) <= g^{n/2} (d(F_0, F*) + e*) + e* + e_n` along the
///   iterates, where `e*` is the reference's certified error and `e_n` the
///   accumulated merge perturbation of `F_n` (both 0 for exact updates);
/// * `means`: means of `F*` against the classical linear solve;
/// * `monte_carlo`: Cramér distance to empirical return laws, against
///   `factor * width / sqrt(n)`;
/// * `spectral_invariance`: the lifted `F*` is fixed by the spectral operator.
pub fn check_fixed_point(
    mdp: &FiniteMdp,
    policy: &Policy,
    opts: &FixedPointOptions,
    seed: u64,
    tol: &Tolerances,
) -> Result<Vec<CheckReport>> {
    let config = &opts.config;
    let start = Instant::now();
    let reference = evaluate_policy(mdp, policy, config, None)?;
    let star = &reference.field;
    // Against a lattice reference the iterates and the reference come from
    // the same contraction, so only the reference's own Banach bound enters.
    let e_ref = if config.lattice.is_some() {
        reference.banach_bound
    } else {
        reference.certified_error
    };
    let root = mdp.gamma().sqrt();
    let field = to_backend(&ReturnField::zeros_for(mdp), config)?;
    let d0 = field_distance(&field, star)?;
    let mut field = field;
    let mut e_n = 0.0;
    let mut rate_slack = f64::NEG_INFINITY;
    for n in 1..=reference.iterations() {
        let (next, merge) = bellman_apply_with_bound(&field, mdp, policy, config)?;
        field = next;
        if config.lattice.is_none() {
            e_n = root * e_n + merge;
        }
        let bound = root.powi(n as i32) * (d0 + e_ref) + e_ref + e_n;
        rate_slack = rate_slack.max(field_distance(&field, star)? - bound);
    }
    let rate = CheckReport::new(
        "fixed_point_rate",
        reference.iterations(),
        rate_slack.max(0.0),
        tol.exact,
        seed,
        start.elapsed().as_secs_f64(),
    );

    let start = Instant::now();
    let q = classical_q_values(mdp, policy)?;
    let mean_gap = worst(star.means().iter().zip(&q).map(|(m, q)| (m - q).abs()));
    let means = CheckReport::new(
        "fixed_point_means",
        q.len(),
        mean_gap,
        tol.means,
        seed,
        start.elapsed().as_secs_f64(),
    );
    let mut reports = vec![rate, means];

    if opts.mc_samples > 0 {
        let start = Instant::now();
        let horizon = horizon_for_bias(mdp, opts.mc_bias);
        let mut gap = 0.0_f64;
        for s in 0..mdp.n_states() {
            for a in 0..mdp.n_actions() {
                let stream_seed =
                    seed ^ ((s * mdp.n_actions() + a) as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
                let empirical =
                    monte_carlo_returns(mdp, policy, s, a, horizon, opts.mc_samples, stream_seed)?;
                gap = gap.max(cramer_distance(star.law(s, a), &empirical));
            }
        }
        let width = mdp.return_support().width();
        reports.push(CheckReport::new(
            "fixed_point_monte_carlo",
            opts.mc_samples,
            gap,
            tol.monte_carlo_factor * width / (opts.mc_samples as f64).sqrt(),
            seed,
            start.elapsed().as_secs_f64(),
        ));
    }

    if config.backend == Backend::Atomic {
        let start = Instant::now();
        let lifted = lift_v(star)?;
        let image = spectral_bellman_apply(&lifted, mdp, policy, config)?;
        reports.push(CheckReport::new(
            "fixed_point_spectral_invariance",
            1,
            induced_field_distance(&image, &lifted)?,
            tol.exact,
            seed,
            start.elapsed().as_secs_f64(),
        ));
    }
    Ok(reports)
}

/// Settings of the default suite.
#[derive(Clone, Debug, PartialEq)]
pub struct SuiteConfig {
    pub seed: u64,
    pub trials: usize,
    pub mc_samples: usize,
    pub tolerances: Tolerances,
    pub quadrature: QuadratureSpec,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            trials: 100,
            mc_samples: 100_000,
            tolerances: Tolerances::default(),
            quadrature: QuadratureSpec::default(),
        }
    }
}

fn tagged(mut reports: Vec<CheckReport>, tag: &str) -> Vec<CheckReport> {
    for r in &mut reports {
        r.check_name = format!("{}[{tag}]", r.check_name);
    }
    reports
}

/// Fixed-point settings used for the bundled models: projection onto 4097
/// nodes spanning the return support.
pub fn default_fixed_point_config(mdp: &FiniteMdp) -> BellmanConfig {
    BellmanConfig::exact(1e-13, 2000).with_lattice(GridSpec::covering(mdp.return_support(), 4097))
}

/// Model-dependent checks on one model, tagged `name[tag]`.
pub fn run_model_checks(
    mdp: &FiniteMdp,
    policy: &Policy,
    tag: &str,
    cfg: &SuiteConfig,
) -> Result<Vec<CheckReport>> {
    let tol = &cfg.tolerances;
    let mut reports = vec![check_contraction(mdp, policy, cfg.trials, cfg.seed, tol)?];
    reports.extend(check_component_lemmas(
        mdp, policy, cfg.trials, cfg.seed, tol,
    )?);
    reports.extend(check_intertwining(mdp, policy, cfg.trials, cfg.seed, tol)?);
    let opts = FixedPointOptions::new(default_fixed_point_config(mdp), cfg.mc_samples);
    reports.extend(check_fixed_point(mdp, policy, &opts, cfg.seed, tol)?);
    Ok(tagged(reports, tag))
}

/// Isometry, transport and recovery checks, which need no model.
pub fn run_model_free_checks(cfg: &SuiteConfig) -> Result<Vec<CheckReport>> {
    let tol = &cfg.tolerances;
    let mut reports = check_isometry_and_transport(cfg.trials, cfg.seed, &cfg.quadrature, tol)?;
    let mut recovery = check_monotone_recovery(
        &standard_recovery_pairs(cfg.seed, cfg.trials),
        &default_eps_list(),
        tol,
    )?;
    recovery.seed = cfg.seed;
    reports.push(recovery);
    Ok(reports)
}

/// All checks on every bundled model, plus the model-free checks.
pub fn run_default_suite(cfg: &SuiteConfig) -> Result<Vec<CheckReport>> {
    let mut reports = Vec::new();
    for (name, mdp, policy) in bundled_examples()? {
        reports.extend(run_model_checks(&mdp, &policy, name, cfg)?);
    }
    reports.extend(run_model_free_checks(cfg)?);
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::FiniteMdp;

    fn single_state(gamma: f64) -> (FiniteMdp, Policy) {
        let mdp = FiniteMdp::new(
            gamma,
            vec![vec![vec![1.0]]],
            vec![vec![vec![AtomicDistribution::point_mass(1.0)]]],
            None,
        )
        .unwrap();
        (mdp, Policy::uniform(1, 1))
    }

    #[test]
    fn report_passes_iff_slack_within_tolerance() {
        assert!(CheckReport::new("x", 1, 0.5, 0.5, 0, 0.0).passed);
        assert!(!CheckReport::new("x", 1, 0.6, 0.5, 0, 0.0).passed);
        assert!(!CheckReport::new("x", 1, f64::NAN, 0.5, 0, 0.0).passed);
    }

    #[test]
    fn contraction_single_state_quarter() {
        let (mdp, pol) = single_state(0.25);
        let r = check_contraction(&mdp, &pol, 50, 3, &Tolerances::default()).unwrap();
        assert!(r.passed, "{r:?}");
        assert!(r.worst_slack <= 0.5 + 1e-9);
    }

    #[test]
    fn contraction_is_tight_on_point_masses() {
        // Deterministic transition, constant reward: point masses map to point
        // masses and the ratio is exactly sqrt(gamma).
        let (mdp, pol) = single_state(0.64);
        let b = mdp.return_support();
        let config = BellmanConfig::exact(1e-12, 1);
        let f1 = ReturnField::constant(1, 1, b, AtomicDistribution::point_mass(-1.0)).unwrap();
        let f2 = ReturnField::constant(1, 1, b, AtomicDistribution::point_mass(2.0)).unwrap();
        let ratio = field_distance(
            &bellman_apply(&f1, &mdp, &pol, &config).unwrap(),
            &bellman_apply(&f2, &mdp, &pol, &config).unwrap(),
        )
        .unwrap()
            / field_distance(&f1, &f2).unwrap();
        assert!((ratio - 0.8).abs() < 1e-15);
    }

    #[test]
    fn tampered_tolerance_fails_named_check() {
        let (mdp, pol) = single_state(0.5);
        let tol = Tolerances {
            contraction: -0.5,
            ..Tolerances::default()
        };
        let r = check_contraction(&mdp, &pol, 10, 1, &tol).unwrap();
        assert!(!r.passed);
        assert_eq!(r.check_name, "contraction");
    }

    #[test]
    fn reports_reproducible_from_seed() {
        let (mdp, pol) = single_state(0.5);
        let tol = Tolerances::default();
        let a = check_component_lemmas(&mdp, &pol, 20, 9, &tol).unwrap();
        let b = check_component_lemmas(&mdp, &pol, 20, 9, &tol).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.without_runtime(), y.without_runtime());
            assert_eq!(x.worst_slack.to_bits(), y.worst_slack.to_bits());
        }
        assert!(a.iter().all(|r| r.passed), "{a:?}");
    }

    #[test]
    fn single_state_fixed_point() {
        let (mdp, pol) = single_state(0.5);
        let opts = FixedPointOptions::new(BellmanConfig::exact(1e-13, 200), 2000);
        let reports = check_fixed_point(&mdp, &pol, &opts, 5, &Tolerances::default()).unwrap();
        assert_eq!(reports.len(), 4);
        assert!(reports.iter().all(|r| r.passed), "{reports:?}");
    }

    #[test]
    fn recovery_on_standard_pairs() {
        let r = check_monotone_recovery(
            &standard_recovery_pairs(1, 5),
            &default_eps_list(),
            &Tolerances::default(),
        )
        .unwrap();
        assert!(r.passed, "{r:?}");
        let eps_rising = [1e-4, 1e-2];
        assert!(check_monotone_recovery(
            &standard_recovery_pairs(1, 0),
            &eps_rising,
            &Tolerances::default()
        )
        .is_err());
    }
}
