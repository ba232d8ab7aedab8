//! JSON and CSV persistence of models, policies, fields, traces and reports.
//!
//! Numbers in field and distribution files are written with 17 significant
//! digits and parsed with correct rounding, so atomic fields round-trip
//! exactly. Every object schema rejects unknown keys.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

use crate::bellman::{Backend, TraceRow};
use crate::distributions::{AtomicDistribution, GridCdf};
use crate::error::{Error, Result};
use crate::mdp::{FieldEntries, FiniteMdp, Policy, ReturnField, Support};
use crate::spectral::{default_eps_list, SweepRow};
use crate::verify::CheckReport;

const SINGLE_STATE: &str = include_str!("../fixtures/single_state.json");
const TWO_STATE: &str = include_str!("../fixtures/two_state.json");
const THREE_STATE: &str = include_str!("../fixtures/three_state.json");

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|source| Error::Io {
            path: dir.display().to_string(),
            source,
        })?;
    }
    fs::write(path, contents).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

fn parse<'a, T: Deserialize<'a>>(text: &'a str, what: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Schema(format!("{what}: {e}")))
}

/// Decimal text with 17 significant digits.
fn number(x: f64) -> Result<Box<RawValue>> {
    if !x.is_finite() {
        return Err(Error::NonFinite(format!("cannot encode {x}")));
    }
    Ok(RawValue::from_string(format!("{x:.16e}"))?)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GridJson {
    x_min: f64,
    step: f64,
    values: Vec<f64>,
}

#[derive(Serialize)]
struct GridOut {
    x_min: Box<RawValue>,
    step: Box<RawValue>,
    values: Vec<Box<RawValue>>,
}

/// `{"atoms": [[x, w], ...]}` or `{"grid": {"x_min", "step", "values"}}`.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DistributionJson {
    #[serde(default)]
    atoms: Option<Vec<(f64, f64)>>,
    #[serde(default)]
    grid: Option<GridJson>,
}

#[derive(Serialize)]
#[serde(rename_all = "lowercase")]
enum DistributionOut {
    Atoms(Vec<[Box<RawValue>; 2]>),
    Grid(GridOut),
}

enum Law {
    Atomic(AtomicDistribution),
    Grid(GridCdf),
}

impl DistributionJson {
    fn into_law(self, at: &str) -> Result<Law> {
        match (self.atoms, self.grid) {
            (Some(atoms), None) => AtomicDistribution::from_atoms(atoms)
                .map(Law::Atomic)
                .map_err(|e| Error::Schema(format!("{at}: {e}"))),
            (None, Some(g)) => GridCdf::new(g.x_min, g.step, g.values)
                .map(Law::Grid)
                .map_err(|e| Error::Schema(format!("{at}: {e}"))),
            _ => Err(Error::Schema(format!(
                "{at}: expected exactly one of \"atoms\" or \"grid\""
            ))),
        }
    }

    fn into_atomic(self, at: &str) -> Result<AtomicDistribution> {
        match self.into_law(at)? {
            Law::Atomic(d) => Ok(d),
            Law::Grid(_) => Err(Error::Schema(format!("{at}: expected an atomic law"))),
        }
    }
}

fn atomic_out(d: &AtomicDistribution) -> Result<DistributionOut> {
    Ok(DistributionOut::Atoms(
        d.atoms()
            .map(|(x, w)| Ok([number(x)?, number(w)?]))
            .collect::<Result<_>>()?,
    ))
}

fn grid_out(g: &GridCdf) -> Result<DistributionOut> {
    Ok(DistributionOut::Grid(GridOut {
        x_min: number(g.x_min())?,
        step: number(g.step())?,
        values: g
            .values()
            .iter()
            .map(|&v| number(v))
            .collect::<Result<_>>()?,
    }))
}

pub fn distribution_to_json(d: &AtomicDistribution) -> Result<String> {
    Ok(serde_json::to_string(&atomic_out(d)?)?)
}

pub fn distribution_from_json(text: &str) -> Result<AtomicDistribution> {
    parse::<DistributionJson>(text, "distribution")?.into_atomic("distribution")
}

pub fn save_distribution(d: &AtomicDistribution, path: &Path) -> Result<()> {
    write(path, &distribution_to_json(d)?)
}

pub fn load_distribution(path: &Path) -> Result<AtomicDistribution> {
    distribution_from_json(&read(path)?)
        .map_err(|e| Error::Schema(format!("{}: {e}", path.display())))
}

/// A policy given inline: the keyword `"uniform"` or a table of rows.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(untagged)]
enum PolicyJson {
    Keyword(String),
    Rows(Vec<Vec<f64>>),
}

impl PolicyJson {
    fn build(self, mdp: &FiniteMdp) -> Result<Policy> {
        let policy = match self {
            PolicyJson::Keyword(k) if k == "uniform" => {
                Policy::uniform(mdp.n_states(), mdp.n_actions())
            }
            PolicyJson::Keyword(k) => {
                return Err(Error::InvalidPolicy(format!(
                    "unknown policy keyword {k:?}"
                )))
            }
            PolicyJson::Rows(rows) => Policy::new(rows)?,
        };
        policy.check_compatible(mdp)?;
        Ok(policy)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MdpJson {
    n_states: usize,
    n_actions: usize,
    gamma: f64,
    /// `[s][a][s']`.
    transition: Vec<Vec<Vec<f64>>>,
    /// Reward law per `[s][a][s']`.
    reward: Vec<Vec<Vec<DistributionJson>>>,
    #[serde(default)]
    policy: Option<PolicyJson>,
    #[serde(default)]
    r_max: Option<f64>,
}

/// A model file and the policy it carries, if any.
pub struct MdpDocument {
    pub mdp: FiniteMdp,
    pub policy: Option<Policy>,
}

pub fn mdp_from_json(text: &str) -> Result<MdpDocument> {
    let doc: MdpJson = parse(text, "MDP")?;
    if doc.transition.len() != doc.n_states || doc.reward.len() != doc.n_states {
        return Err(Error::InvalidMdp(format!(
            "n_states is {} but the tables have {} transition and {} reward rows",
            doc.n_states,
            doc.transition.len(),
            doc.reward.len()
        )));
    }
    for (s, row) in doc.transition.iter().enumerate() {
        if row.len() != doc.n_actions {
            return Err(Error::InvalidMdp(format!(
                "state {s}: {} actions, expected {}",
                row.len(),
                doc.n_actions
            )));
        }
    }
    let reward = doc
        .reward
        .into_iter()
        .enumerate()
        .map(|(s, per_a)| {
            per_a
                .into_iter()
                .enumerate()
                .map(|(a, per_sp)| {
                    per_sp
                        .into_iter()
                        .enumerate()
                        .map(|(sp, d)| d.into_atomic(&format!("reward (s={s}, a={a}, s'={sp})")))
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let mdp = FiniteMdp::new(doc.gamma, doc.transition, reward, doc.r_max)?;
    let policy = doc.policy.map(|p| p.build(&mdp)).transpose()?;
    Ok(MdpDocument { mdp, policy })
}

pub fn load_mdp_document(path: &Path) -> Result<MdpDocument> {
    mdp_from_json(&read(path)?).map_err(|e| match e {
        Error::Io { .. } => e,
        other => Error::Schema(format!("{}: {other}", path.display())),
    })
}

pub fn load_mdp(path: &Path) -> Result<FiniteMdp> {
    load_mdp_document(path).map(|d| d.mdp)
}

/// Policy from a file holding `"uniform"` or a table of rows; the literal
/// argument `uniform` needs no file.
pub fn load_policy(path: &Path, mdp: &FiniteMdp) -> Result<Policy> {
    if path.as_os_str() == "uniform" {
        return PolicyJson::Keyword("uniform".into()).build(mdp);
    }
    let doc: PolicyJson = parse(&read(path)?, &path.display().to_string())?;
    doc.build(mdp)
}

pub fn policy_to_json(policy: &Policy) -> Result<String> {
    Ok(serde_json::to_string(&policy.rows())?)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FieldJson {
    n_states: usize,
    n_actions: usize,
    backend: Backend,
    support: Support,
    /// `[s][a]`.
    entries: Vec<Vec<DistributionJson>>,
}

#[derive(Serialize)]
struct FieldOut {
    n_states: usize,
    n_actions: usize,
    backend: Backend,
    support: SupportOut,
    entries: Vec<Vec<DistributionOut>>,
}

#[derive(Serialize)]
struct SupportOut {
    lo: Box<RawValue>,
    hi: Box<RawValue>,
}

pub fn field_to_json(field: &ReturnField) -> Result<String> {
    let na = field.n_actions();
    let flat: Vec<DistributionOut> = match field.entries() {
        FieldEntries::Atomic(v) => v.iter().map(atomic_out).collect::<Result<_>>()?,
        FieldEntries::Grid(v) => v.iter().map(grid_out).collect::<Result<_>>()?,
    };
    let mut entries: Vec<Vec<DistributionOut>> = Vec::with_capacity(field.n_states());
    let mut it = flat.into_iter();
    for _ in 0..field.n_states() {
        entries.push(it.by_ref().take(na).collect());
    }
    let support = field.support();
    Ok(serde_json::to_string(&FieldOut {
        n_states: field.n_states(),
        n_actions: na,
        backend: field.backend(),
        support: SupportOut {
            lo: number(support.lo)?,
            hi: number(support.hi)?,
        },
        entries,
    })?)
}

pub fn field_from_json(text: &str) -> Result<ReturnField> {
    let doc: FieldJson = parse(text, "field")?;
    if doc.entries.is_empty() {
        return Err(Error::Schema("field has an empty entry table".into()));
    }
    if doc.entries.len() != doc.n_states {
        return Err(Error::Schema(format!(
            "field declares {} states but has {} rows",
            doc.n_states,
            doc.entries.len()
        )));
    }
    let support = Support::new(doc.support.lo, doc.support.hi)?;
    let mut atomic = Vec::new();
    let mut grid = Vec::new();
    for (s, row) in doc.entries.into_iter().enumerate() {
        if row.len() != doc.n_actions {
            return Err(Error::Schema(format!(
                "field row {s} has {} entries, expected {}",
                row.len(),
                doc.n_actions
            )));
        }
        for (a, d) in row.into_iter().enumerate() {
            let at = format!("field entry (s={s}, a={a})");
            match (d.into_law(&at)?, doc.backend) {
                (Law::Atomic(d), Backend::Atomic) => atomic.push(d),
                (Law::Grid(g), Backend::Grid) => grid.push(g),
                _ => {
                    return Err(Error::Schema(format!(
                        "{at}: carrier does not match backend {:?}",
                        doc.backend
                    )))
                }
            }
        }
    }
    let entries = match doc.backend {
        Backend::Atomic => FieldEntries::Atomic(atomic),
        Backend::Grid => FieldEntries::Grid(grid),
    };
    ReturnField::new(doc.n_states, doc.n_actions, support, entries)
}

pub fn save_field(field: &ReturnField, path: &Path) -> Result<()> {
    write(path, &field_to_json(field)?)
}

pub fn load_field(path: &Path) -> Result<ReturnField> {
    field_from_json(&read(path)?).map_err(|e| match e {
        Error::Io { .. } => e,
        other => Error::Schema(format!("{}: {other}", path.display())),
    })
}

/// As [`load_field`], rejecting a file stored with another backend.
pub fn load_field_as(path: &Path, backend: Backend) -> Result<ReturnField> {
    let field = load_field(path)?;
    if field.backend() != backend {
        return Err(Error::Schema(format!(
            "{}: field uses the {:?} backend, expected {backend:?}",
            path.display(),
            field.backend()
        )));
    }
    Ok(field)
}

fn default_stop_tol() -> f64 {
    1e-8
}

fn default_max_iter() -> usize {
    1000
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

/// Everything needed to reproduce a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mdp: PathBuf,
    /// Path to a policy file, or `uniform`. When absent, the policy carried
    /// by the model file, else uniform.
    #[serde(default)]
    pub policy: Option<String>,
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default = "default_backend")]
    pub backend: Backend,
    #[serde(default)]
    pub merge_delta: f64,
    /// Atomic backend: project onto this many nodes spanning the return
    /// support after every update.
    #[serde(default)]
    pub lattice_nodes: Option<usize>,
    /// Grid backend: node count spanning the return support.
    #[serde(default = "default_grid_nodes")]
    pub grid_nodes: usize,
    #[serde(default = "default_stop_tol")]
    pub stop_tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_eps_list")]
    pub eps_list: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
}

fn default_grid_nodes() -> usize {
    2001
}

fn default_backend() -> Backend {
    Backend::Atomic
}

impl ExperimentConfig {
    pub fn new(mdp: impl Into<PathBuf>) -> Self {
        Self {
            mdp: mdp.into(),
            policy: None,
            gamma: None,
            backend: Backend::Atomic,
            merge_delta: 0.0,
            lattice_nodes: None,
            grid_nodes: default_grid_nodes(),
            stop_tol: default_stop_tol(),
            max_iter: default_max_iter(),
            eps_list: default_eps_list(),
            seed: 0,
            out: default_out(),
        }
    }
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    parse(&read(path)?, &path.display().to_string())
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source: std::io::Error::other(e),
    }
}

fn write_csv<T: Serialize>(rows: &[T], header: &[&str], path: &Path) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(vec![]);
    w.write_record(header).map_err(|e| csv_error(path, e))?;
    for row in rows {
        w.serialize(row).map_err(|e| csv_error(path, e))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: std::io::Error::other(e.to_string()),
    })?;
    write(
        path,
        &String::from_utf8(bytes).expect("csv output is utf-8"),
    )
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let text = read(path)?;
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Schema(format!("{}: {e}", path.display())))
}

pub const TRACE_HEADER: [&str; 4] = [
    "iteration",
    "successive_distance",
    "banach_bound",
    "atom_count_max",
];

pub const SWEEP_HEADER: [&str; 5] = [
    "epsilon",
    "reg_distance",
    "cdf_side_distance",
    "gap",
    "monotone",
];

pub fn save_trace(trace: &[TraceRow], path: &Path) -> Result<()> {
    write_csv(trace, &TRACE_HEADER, path)
}

pub fn load_trace(path: &Path) -> Result<Vec<TraceRow>> {
    read_csv(path)
}

pub fn save_sweep(rows: &[SweepRow], path: &Path) -> Result<()> {
    write_csv(rows, &SWEEP_HEADER, path)
}

pub fn load_sweep(path: &Path) -> Result<Vec<SweepRow>> {
    read_csv(path)
}

pub fn save_report(reports: &[CheckReport], path: &Path) -> Result<()> {
    write(path, &serde_json::to_string_pretty(reports)?)
}

pub fn load_report(path: &Path) -> Result<Vec<CheckReport>> {
    parse(&read(path)?, &path.display().to_string())
}

/// Names of the bundled example models.
pub const BUNDLED_NAMES: [&str; 3] = ["single_state", "two_state", "three_state"];

/// A bundled model by name, with its policy (uniform when the file has none).
pub fn bundled(name: &str) -> Result<(FiniteMdp, Policy)> {
    let text = match name {
        "single_state" => SINGLE_STATE,
        "two_state" => TWO_STATE,
        "three_state" => THREE_STATE,
        other => {
            return Err(Error::InvalidParameter(format!(
                "no bundled model named {other:?}"
            )))
        }
    };
    let doc = mdp_from_json(text)?;
    let policy = doc
        .policy
        .unwrap_or_else(|| Policy::uniform(doc.mdp.n_states(), doc.mdp.n_actions()));
    Ok((doc.mdp, policy))
}

/// Raw JSON of a bundled model.
pub fn bundled_json(name: &str) -> Option<&'static str> {
    match name {
        "single_state" => Some(SINGLE_STATE),
        "two_state" => Some(TWO_STATE),
        "three_state" => Some(THREE_STATE),
        _ => None,
    }
}

pub fn bundled_examples() -> Result<Vec<(&'static str, FiniteMdp, Policy)>> {
    BUNDLED_NAMES
        .iter()
        .map(|&n| bundled(n).map(|(m, p)| (n, m, p)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_single_state() {
        let (mdp, policy) = bundled("single_state").unwrap();
        assert_eq!((mdp.n_states(), mdp.n_actions()), (1, 1));
        assert_eq!(mdp.gamma(), 0.5);
        assert_eq!(*mdp.reward(0, 0, 0), AtomicDistribution::point_mass(1.0));
        assert_eq!(policy.row(0), &[1.0]);
        for (name, mdp, _) in bundled_examples().unwrap() {
            assert!(mdp.n_states() >= 1, "{name}");
        }
        assert_eq!(bundled("three_state").unwrap().0.n_actions(), 2);
    }

    #[test]
    fn row_sum_violation_names_pair() {
        let text = r#"{"n_states": 2, "n_actions": 1, "gamma": 0.5,
            "transition": [[[1.0, 0.0]], [[0.4, 0.5]]],
            "reward": [[[{"atoms": [[0, 1]]}, {"atoms": [[0, 1]]}]],
                       [[{"atoms": [[0, 1]]}, {"atoms": [[0, 1]]}]]]}"#;
        let err = mdp_from_json(text).err().unwrap().to_string();
        assert!(err.contains("s=1, a=0"), "{err}");
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = SINGLE_STATE.replacen('{', r#"{"colour": 1, "#, 1);
        assert!(matches!(mdp_from_json(&text), Err(Error::Schema(_))));
        assert!(distribution_from_json(r#"{"atoms": [[0, 1]], "x": 2}"#).is_err());
        assert!(distribution_from_json(r#"{}"#).is_err());
    }

    #[test]
    fn uniform_policy_keyword() {
        let (mdp, _) = bundled("three_state").unwrap();
        let p = load_policy(Path::new("uniform"), &mdp).unwrap();
        assert_eq!(p.row(1), &[0.5, 0.5]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.json");
        fs::write(&path, "\"uniform\"").unwrap();
        assert_eq!(load_policy(&path, &mdp).unwrap(), p);
        fs::write(&path, "[[1, 0], [0.25, 0.75], [0, 1]]").unwrap();
        assert_eq!(load_policy(&path, &mdp).unwrap().row(1), &[0.25, 0.75]);
        fs::write(&path, "[[1, 0]]").unwrap();
        assert!(load_policy(&path, &mdp).is_err());
    }

    #[test]
    fn field_round_trip_is_exact() {
        let support = Support::new(-3.0, 3.0).unwrap();
        let laws = vec![
            AtomicDistribution::new([(0.1, 1.0 / 3.0), (2.0 / 3.0, 2.0 / 3.0)]).unwrap(),
            AtomicDistribution::new([(-1e-300, 0.1), (std::f64::consts::PI - 1.0, 0.9)]).unwrap(),
        ];
        let field = ReturnField::atomic(1, 2, support, laws).unwrap();
        let back = field_from_json(&field_to_json(&field).unwrap()).unwrap();
        assert_eq!(back, field);
        let g = ReturnField::new(
            1,
            1,
            support,
            FieldEntries::Grid(vec![AtomicDistribution::point_mass(0.3)
                .to_grid(-3.0, 0.1, 61)
                .unwrap()]),
        )
        .unwrap();
        assert_eq!(field_from_json(&field_to_json(&g).unwrap()).unwrap(), g);
    }

    #[test]
    fn field_schema_errors() {
        let empty = r#"{"n_states": 0, "n_actions": 1, "backend": "atomic",
            "support": {"lo": -1, "hi": 1}, "entries": []}"#;
        assert!(matches!(field_from_json(empty), Err(Error::Schema(_))));
        let mixed = r#"{"n_states": 1, "n_actions": 1, "backend": "grid",
            "support": {"lo": -1, "hi": 1}, "entries": [[{"atoms": [[0, 1]]}]]}"#;
        assert!(matches!(field_from_json(mixed), Err(Error::Schema(_))));

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.json");
        let field = ReturnField::constant(
            1,
            1,
            Support::new(-1.0, 1.0).unwrap(),
            AtomicDistribution::point_mass(0.5),
        )
        .unwrap();
        save_field(&field, &path).unwrap();
        assert_eq!(load_field_as(&path, Backend::Atomic).unwrap(), field);
        assert!(matches!(
            load_field_as(&path, Backend::Grid),
            Err(Error::Schema(_))
        ));
        assert!(matches!(
            load_field(&dir.path().join("missing.json")),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn csv_and_report_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let trace = vec![TraceRow {
            iteration: 1,
            successive_distance: 0.1 + 0.2,
            banach_bound: 1.0 / 3.0,
            atom_count_max: 7,
        }];
        let path = dir.path().join("trace.csv");
        save_trace(&trace, &path).unwrap();
        assert_eq!(load_trace(&path).unwrap(), trace);
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("iteration,successive_distance,banach_bound,atom_count_max\n"));

        let sweep = vec![SweepRow {
            epsilon: 1e-8,
            reg_distance: 0.99995,
            cdf_side_distance: 1.0,
            gap: 5e-5,
            monotone: true,
        }];
        let path = dir.path().join("sweep.csv");
        save_sweep(&sweep, &path).unwrap();
        assert_eq!(load_sweep(&path).unwrap(), sweep);

        let reports = vec![CheckReport::new("contraction", 3, 0.5, 0.7, 11, 0.25)];
        let path = dir.path().join("report.json");
        save_report(&reports, &path).unwrap();
        assert_eq!(load_report(&path).unwrap(), reports);
    }

    #[test]
    fn config_rejects_unknown_keys() {
        let cfg: ExperimentConfig = serde_json::from_str(r#"{"mdp": "m.json"}"#).unwrap();
        assert_eq!(cfg, ExperimentConfig::new("m.json"));
        assert!(
            serde_json::from_str::<ExperimentConfig>(r#"{"mdp": "m.json", "tol": 1}"#).is_err()
        );
    }
}
