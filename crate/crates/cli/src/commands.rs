use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use serde::Serialize;

use cramer_core::bellman::{evaluate_policy, GridSpec};
use cramer_core::distributions::AtomicDistribution;
use cramer_core::io::{
    bundled_json, distribution_from_json, load_field, load_mdp_document, load_policy,
    mdp_from_json, save_field, save_report, save_sweep, save_trace, ExperimentConfig, MdpDocument,
    BUNDLED_NAMES,
};
use cramer_core::mdp::classical_q_values;
use cramer_core::spectral::{default_eps_list, eps_sweep, validate_eps_list};
use cramer_core::verify::{
    run_default_suite, run_model_checks, run_model_free_checks, SuiteConfig, Tolerances,
};
use cramer_core::{Backend, BellmanConfig, FiniteMdp, Policy};

use crate::{BackendArg, EvaluateArgs, InfoArgs, SweepArgs, VerifyArgs};

const NOT_CONVERGED: u8 = 2;
const CHECK_FAILED: u8 = 3;

/// A model file, or a bundled model when no file of that name exists.
fn load_document(path: &Path) -> Result<MdpDocument> {
    if !path.exists() {
        if let Some(text) = path.to_str().and_then(bundled_json) {
            return Ok(mdp_from_json(text)?);
        }
    }
    load_mdp_document(path).with_context(|| format!("loading model {}", path.display()))
}

fn load_model(
    path: &Path,
    policy: Option<&str>,
    gamma: Option<f64>,
) -> Result<(FiniteMdp, Policy)> {
    let doc = load_document(path)?;
    let mdp = match gamma {
        Some(g) => doc.mdp.with_gamma(g)?,
        None => doc.mdp,
    };
    let policy = match policy {
        Some(p) => {
            load_policy(Path::new(p), &mdp).with_context(|| format!("loading policy {p}"))?
        }
        None => doc
            .policy
            .unwrap_or_else(|| Policy::uniform(mdp.n_states(), mdp.n_actions())),
    };
    policy.check_compatible(&mdp)?;
    Ok((mdp, policy))
}

fn create_out(out: &Path) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating output directory {}", out.display()))
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn bellman_config(cfg: &ExperimentConfig, mdp: &FiniteMdp) -> BellmanConfig {
    let support = mdp.return_support();
    match cfg.backend {
        Backend::Grid => {
            let mut c = BellmanConfig::grid(
                GridSpec::covering(support, cfg.grid_nodes),
                cfg.stop_tol,
                cfg.max_iter,
            );
            c.merge_delta = cfg.merge_delta;
            c
        }
        Backend::Atomic => {
            let c =
                BellmanConfig::exact(cfg.stop_tol, cfg.max_iter).with_merge_delta(cfg.merge_delta);
            match cfg.lattice_nodes {
                Some(n) => c.with_lattice(GridSpec::covering(support, n)),
                None => c,
            }
        }
    }
}

#[derive(Serialize)]
struct Summary {
    config: ExperimentConfig,
    bellman: BellmanConfig,
    converged: bool,
    iterations: usize,
    banach_bound: f64,
    certified_error: f64,
    merge_perturbation: f64,
    max_atoms: usize,
    /// `[s][a]`.
    means: Vec<Vec<f64>>,
}

pub fn evaluate(a: EvaluateArgs) -> Result<ExitCode> {
    let cfg = ExperimentConfig {
        policy: a.model.policy.clone(),
        gamma: a.model.gamma,
        backend: match a.backend {
            BackendArg::Atomic => Backend::Atomic,
            BackendArg::Grid => Backend::Grid,
        },
        merge_delta: a.merge_delta,
        lattice_nodes: a.lattice,
        grid_nodes: a.grid_nodes,
        stop_tol: a.tol,
        max_iter: a.max_iter,
        seed: a.seed,
        out: a.out.clone(),
        ..ExperimentConfig::new(a.model.mdp.clone())
    };
    let (mdp, policy) = load_model(&cfg.mdp, cfg.policy.as_deref(), cfg.gamma)?;
    let bellman = bellman_config(&cfg, &mdp);
    bellman.validate()?;
    create_out(&cfg.out)?;

    let result = evaluate_policy(&mdp, &policy, &bellman, None)?;
    save_field(&result.field, &cfg.out.join("field.json"))?;
    save_trace(&result.trace, &cfg.out.join("trace.csv"))?;
    let means = result.field.means();
    let summary = Summary {
        converged: result.converged,
        iterations: result.iterations(),
        banach_bound: result.banach_bound,
        certified_error: result.certified_error,
        merge_perturbation: result.merge_perturbation,
        max_atoms: result.field.max_atoms(),
        means: means.chunks(mdp.n_actions()).map(<[f64]>::to_vec).collect(),
        config: cfg.clone(),
        bellman,
    };
    write_json(&summary, &cfg.out.join("summary.json"))?;

    if result.converged {
        println!(
            "converged after {} iterations, Banach bound {:.3e}",
            summary.iterations, summary.banach_bound
        );
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!(
            "not converged after {} iterations, Banach bound {:.3e}",
            summary.iterations, summary.banach_bound
        );
        Ok(ExitCode::from(NOT_CONVERGED))
    }
}

fn override_tolerances(overrides: &[String]) -> Result<Tolerances> {
    let mut value = serde_json::to_value(Tolerances::default())?;
    let map = value
        .as_object_mut()
        .expect("tolerances serialise to an object");
    for item in overrides {
        let Some((name, v)) = item.split_once('=') else {
            bail!("tolerance override {item:?} is not NAME=VALUE");
        };
        let v: f64 = v
            .trim()
            .parse()
            .with_context(|| format!("tolerance {name}: {v:?} is not a number"))?;
        match map.get_mut(name.trim()) {
            Some(slot) => *slot = serde_json::json!(v),
            None => {
                let known: Vec<&str> = map.keys().map(String::as_str).collect();
                bail!("unknown tolerance {name:?}; known: {}", known.join(", "));
            }
        }
    }
    Ok(serde_json::from_value(value)?)
}

pub fn verify(a: VerifyArgs) -> Result<ExitCode> {
    let suite = SuiteConfig {
        seed: a.seed,
        trials: a.trials,
        mc_samples: a.mc_samples,
        tolerances: override_tolerances(&a.tolerances)?,
        ..SuiteConfig::default()
    };
    let reports = match &a.mdp {
        Some(path) => {
            let (mdp, policy) = load_model(path, a.policy.as_deref(), a.gamma)?;
            let tag = path.file_stem().and_then(|s| s.to_str()).unwrap_or("model");
            let mut r = run_model_checks(&mdp, &policy, tag, &suite)?;
            r.extend(run_model_free_checks(&suite)?);
            r
        }
        None => run_default_suite(&suite)?,
    };
    create_out(&a.out)?;
    save_report(&reports, &a.out.join("report.json"))?;
    let mut failed = 0;
    for r in &reports {
        let mark = if r.passed { "PASS" } else { "FAIL" };
        println!(
            "{mark} {} slack {:.3e} tolerance {:.3e}",
            r.check_name, r.worst_slack, r.tolerance
        );
        if !r.passed {
            failed += 1;
            eprintln!("check failed: {}", r.check_name);
        }
    }
    println!(
        "seed {}: {} of {} checks passed",
        a.seed,
        reports.len() - failed,
        reports.len()
    );
    Ok(if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(CHECK_FAILED)
    })
}

/// `delta:X`, `bernoulli:LO,HI,P`, or a distribution file.
fn parse_law(spec: &str) -> Result<AtomicDistribution> {
    let numbers = |s: &str| -> Result<Vec<f64>> {
        s.split(',')
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .with_context(|| format!("{t:?} in {spec:?} is not a number"))
            })
            .collect()
    };
    if let Some(rest) = spec.strip_prefix("delta:") {
        let v = numbers(rest)?;
        if v.len() != 1 || !v[0].is_finite() {
            bail!("expected delta:X, got {spec:?}");
        }
        return Ok(AtomicDistribution::point_mass(v[0]));
    }
    if let Some(rest) = spec.strip_prefix("bernoulli:") {
        let v = numbers(rest)?;
        if v.len() != 3 {
            bail!("expected bernoulli:LO,HI,P, got {spec:?}");
        }
        return Ok(AtomicDistribution::two_point(v[0], v[1], v[2])?);
    }
    let text = fs::read_to_string(spec).with_context(|| format!("reading distribution {spec}"))?;
    distribution_from_json(&text).with_context(|| format!("parsing distribution {spec}"))
}

fn parse_eps_list(list: Option<&str>) -> Result<Vec<f64>> {
    let eps = match list {
        None => default_eps_list(),
        Some(s) => s
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .with_context(|| format!("epsilon {t:?} is not a number"))
            })
            .collect::<Result<_>>()?,
    };
    validate_eps_list(&eps)?;
    Ok(eps)
}

pub fn sweep(a: SweepArgs) -> Result<ExitCode> {
    let eps = parse_eps_list(a.eps_list.as_deref())?;
    let pairs: Vec<(PathBuf, AtomicDistribution, AtomicDistribution)> = match &a.fields {
        Some(paths) => {
            let f1 = load_field(&paths[0])?;
            let f2 = load_field(&paths[1])?;
            f1.same_shape(&f2)?;
            let (Some(e1), Some(e2)) = (f1.atomic_entries(), f2.atomic_entries()) else {
                bail!("sweeps need atomic fields");
            };
            let n_actions = f1.n_actions();
            e1.iter()
                .zip(e2)
                .enumerate()
                .map(|(i, (l1, l2))| {
                    let name = format!("sweep_s{}_a{}.csv", i / n_actions, i % n_actions);
                    (PathBuf::from(name), l1.clone(), l2.clone())
                })
                .collect()
        }
        None => vec![(
            PathBuf::from("sweep.csv"),
            parse_law(&a.p1)?,
            parse_law(&a.p2)?,
        )],
    };
    create_out(&a.out)?;
    for (name, p1, p2) in pairs {
        let rows = eps_sweep(&p1, &p2, &eps)?;
        save_sweep(&rows, &a.out.join(&name))?;
        let last = rows.last().expect("validated non-empty list");
        println!(
            "{}: distance {:.6e} at epsilon {:.1e}, gap {:.3e}, monotone {}",
            name.display(),
            last.reg_distance,
            last.epsilon,
            last.gap,
            rows.iter().all(|r| r.monotone)
        );
    }
    Ok(ExitCode::SUCCESS)
}

pub fn info(a: InfoArgs) -> Result<ExitCode> {
    let Some(path) = a.mdp else {
        println!("cramer {}", env!("CARGO_PKG_VERSION"));
        println!("bundled models: {}", BUNDLED_NAMES.join(", "));
        return Ok(ExitCode::SUCCESS);
    };
    let (mdp, policy) = load_model(&path, a.policy.as_deref(), a.gamma)?;
    let support = mdp.return_support();
    println!("states {}, actions {}", mdp.n_states(), mdp.n_actions());
    println!("gamma {}, reward bound {}", mdp.gamma(), mdp.r_max());
    println!("return support [{}, {}]", support.lo, support.hi);
    let q = classical_q_values(&mdp, &policy)?;
    for s in 0..mdp.n_states() {
        let row: Vec<String> = (0..mdp.n_actions())
            .map(|act| format!("{:.10}", q[s * mdp.n_actions() + act]))
            .collect();
        println!("state {s}: policy {:?}, Q {}", policy.row(s), row.join(" "));
    }
    Ok(ExitCode::SUCCESS)
}
