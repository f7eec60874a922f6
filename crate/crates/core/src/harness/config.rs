use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::population::ParticipationProcess;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    SconvexRate,
    NonconvexRate,
    FedavgBias,
    Speedup,
    MnistLr,
    Impossibility,
    Pac,
    PositivelyRelated,
}

impl Scenario {
    pub const ALL: [Scenario; 8] = [
        Scenario::SconvexRate,
        Scenario::NonconvexRate,
        Scenario::FedavgBias,
        Scenario::Speedup,
        Scenario::MnistLr,
        Scenario::Impossibility,
        Scenario::Pac,
        Scenario::PositivelyRelated,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Scenario::SconvexRate => "sconvex-rate",
            Scenario::NonconvexRate => "nonconvex-rate",
            Scenario::FedavgBias => "fedavg-bias",
            Scenario::Speedup => "speedup",
            Scenario::MnistLr => "mnist-lr",
            Scenario::Impossibility => "impossibility",
            Scenario::Pac => "pac",
            Scenario::PositivelyRelated => "positively-related",
        }
    }

    /// Scenarios that train models round by round and emit per-round CSVs.
    pub fn is_training(&self) -> bool {
        !matches!(self, Scenario::Impossibility | Scenario::Pac | Scenario::PositivelyRelated)
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown scenario '{s}'")))
    }
}

/// Server step-size rule as a function of the run length `R`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Schedule {
    /// `η_s` as configured.
    Constant,
    /// `η_s = c · ln R / R`.
    LnROverR,
    /// `η_s = c / √R`.
    InvSqrtR,
}

/// How `q` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QRule {
    Fixed,
    /// `q = 1 − 1/(mK)`.
    OneMinusInvMk,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopulationConfig {
    /// `M`.
    pub clients: usize,
    pub dim: usize,
    pub spread: f64,
    /// Every coordinate of the point `c̄` the quadratic centers spread around.
    pub center: f64,
    /// Common scalar Hessian `h` of the quadratic clients.
    pub hessian: f64,
    /// Client gradient noise.
    pub sigma: f64,
    /// Server gradient noise.
    pub sigma_s: f64,
    pub seed: u64,
    /// Classes per client for label-skew partitions.
    pub labels_per_client: usize,
    /// Synthetic samples per client (MLP scenarios).
    pub samples_per_client: usize,
    pub hidden: usize,
    /// Magnitude of the per-client input shift (MLP scenarios).
    pub shift: f64,
    pub batch_size: usize,
    pub l2: f64,
    /// Server samples `n_T` (dataset scenarios).
    pub n_t: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParticipationConfig {
    /// Participants per client round.
    pub m: usize,
    /// Clients that never participate.
    pub s: usize,
}

impl ParticipationConfig {
    pub fn process(&self, clients: usize) -> ParticipationProcess {
        if self.s > 0 {
            ParticipationProcess::Excluded { s: self.s, m: self.m }
        } else if self.m == clients {
            ParticipationProcess::Full
        } else {
            ParticipationProcess::Uniform { m: self.m }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmConfig {
    pub q: f64,
    pub q_rule: QRule,
    pub eta_c: f64,
    pub eta_s: f64,
    pub schedule: Schedule,
    pub schedule_scale: f64,
    /// `K`; `0` means one pass over the client's shard per round.
    pub local_steps: usize,
    pub rounds: usize,
    pub couple_steps: bool,
    pub track_diagnostics: bool,
    /// Constant `c` of the admissible `R_s/R_c` band; no band check when absent.
    pub ratio_band_c: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub seeds: Vec<u64>,
    pub q: Vec<f64>,
    pub s: Vec<usize>,
    pub p: Vec<usize>,
    pub n_t: Vec<usize>,
    pub rounds: Vec<usize>,
    pub m: Vec<usize>,
    pub local_steps: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnabilityConfig {
    pub omega: Vec<f64>,
    pub clients: usize,
    pub samples: Vec<usize>,
    pub trials: usize,
    pub a: f64,
    pub b: f64,
    pub a_d: f64,
    pub b_d: f64,
    pub t_star: f64,
    pub n_grid: Vec<usize>,
    /// `n_T / (n_T + n_S)` in the PAC experiment.
    pub server_fraction: f64,
    /// Weight of `D` in the positively-related check.
    pub lambda1: f64,
    pub t_grid_points: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub train_images: Option<PathBuf>,
    pub train_labels: Option<PathBuf>,
    pub test_images: Option<PathBuf>,
    pub test_labels: Option<PathBuf>,
}

/// A complete, validated experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub out_dir: PathBuf,
    pub population: PopulationConfig,
    pub participation: ParticipationConfig,
    pub algorithm: AlgorithmConfig,
    pub sweep: SweepConfig,
    pub learnability: LearnabilityConfig,
    pub data: DataConfig,
}

fn seeds(n: u64) -> Vec<u64> {
    (0..n).collect()
}

impl ExperimentConfig {
    /// Built-in defaults for a scenario.
    pub fn defaults(scenario: Scenario) -> Self {
        let mut cfg = ExperimentConfig {
            scenario,
            out_dir: PathBuf::from("out").join(scenario.as_str()),
            population: PopulationConfig {
                clients: 10,
                dim: 10,
                spread: 1.0,
                center: 1.0,
                hessian: 1.0,
                sigma: 0.1,
                sigma_s: 0.1,
                seed: 0,
                labels_per_client: 1,
                samples_per_client: 64,
                hidden: 16,
                shift: 1.0,
                batch_size: 8,
                l2: 0.0,
                n_t: 1000,
            },
            participation: ParticipationConfig { m: 5, s: 4 },
            algorithm: AlgorithmConfig {
                q: 0.5,
                q_rule: QRule::Fixed,
                eta_c: 0.02,
                eta_s: 0.1,
                schedule: Schedule::Constant,
                schedule_scale: 1.0,
                local_steps: 5,
                rounds: 1024,
                couple_steps: true,
                track_diagnostics: true,
                ratio_band_c: None,
            },
            sweep: SweepConfig { seeds: seeds(20), ..SweepConfig::default() },
            learnability: LearnabilityConfig {
                omega: vec![0.25, 0.5, 0.75],
                clients: 10,
                samples: vec![20, 200],
                trials: 10_000,
                a: 0.0,
                b: 1.0,
                a_d: 0.2,
                b_d: 0.7,
                t_star: 0.5,
                n_grid: vec![100, 1_000, 10_000, 100_000],
                server_fraction: 0.1,
                lambda1: 1.0,
                t_grid_points: 41,
            },
            data: DataConfig::default(),
        };
        let (pop, alg, sweep) = (&mut cfg.population, &mut cfg.algorithm, &mut cfg.sweep);
        match scenario {
            Scenario::SconvexRate => {
                alg.schedule = Schedule::LnROverR;
                alg.schedule_scale = 2.0;
                sweep.rounds = (7..=13).map(|k| 1 << k).collect();
            }
            Scenario::FedavgBias => {
                pop.sigma = 0.0;
                pop.sigma_s = 0.0;
                alg.q = 1.0;
                alg.couple_steps = false;
                alg.rounds = 500;
            }
            Scenario::NonconvexRate | Scenario::Speedup => {
                pop.dim = 2;
                cfg.participation = ParticipationConfig { m: 5, s: 0 };
                alg.schedule = Schedule::InvSqrtR;
                alg.track_diagnostics = false;
                if scenario == Scenario::NonconvexRate {
                    sweep.rounds = (6..=12).map(|k| 1 << k).collect();
                } else {
                    alg.q_rule = QRule::OneMinusInvMk;
                    sweep.m = vec![2, 8];
                    sweep.local_steps = vec![2, 8];
                }
            }
            Scenario::MnistLr => {
                pop.dim = 784;
                pop.batch_size = 64;
                alg.couple_steps = false;
                alg.eta_c = 0.1;
                alg.eta_s = 0.1;
                alg.local_steps = 0;
                alg.rounds = 150;
                alg.track_diagnostics = false;
                sweep.seeds = vec![0];
                sweep.q = vec![1.0, 0.8];
                sweep.p = vec![1, 10];
            }
            Scenario::Pac => {
                cfg.learnability.trials = 200;
            }
            Scenario::PositivelyRelated => {
                cfg.learnability.a_d = 0.25;
                cfg.learnability.b_d = 0.75;
            }
            Scenario::Impossibility => {}
        }
        cfg
    }

    /// Parses a config file, applies `section.key=value` overrides on top and
    /// validates the result.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::ConfigNotFound(path.to_path_buf()),
            _ => Error::Config(format!("{}: {e}", path.display())),
        })?;
        Self::from_toml_str(&text, overrides).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self> {
        let file: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        let scenario: Scenario = match file.get("scenario") {
            Some(toml::Value::String(s)) => s.parse()?,
            Some(_) => return Err(Error::Config("'scenario' must be a string".into())),
            None => return Err(Error::Config("missing required key 'scenario'".into())),
        };
        Self::from_table(scenario, file, overrides)
    }

    /// Defaults for `scenario` with overrides applied.
    pub fn with_overrides(scenario: Scenario, overrides: &[String]) -> Result<Self> {
        Self::from_table(scenario, toml::Table::new(), overrides)
    }

    fn from_table(scenario: Scenario, file: toml::Table, overrides: &[String]) -> Result<Self> {
        let mut merged = match toml::Value::try_from(Self::defaults(scenario)) {
            Ok(toml::Value::Table(t)) => t,
            _ => return Err(Error::Config("defaults do not serialise to a table".into())),
        };
        merge(&mut merged, file, "")?;
        for ov in overrides {
            apply_override(&mut merged, ov)?;
        }
        let cfg: Self = toml::Value::Table(merged).try_into().map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        if cfg.scenario != scenario {
            return Err(Error::Config("overrides may not change the scenario".into()));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        let pop = &self.population;
        let part = &self.participation;
        if pop.clients == 0 {
            return bad("population.clients must be >= 1".into());
        }
        let ms = if self.sweep.m.is_empty() { vec![part.m] } else { self.sweep.m.clone() };
        let ss = if self.sweep.s.is_empty() { vec![part.s] } else { self.sweep.s.clone() };
        if self.scenario.is_training() {
            for &m in &ms {
                for &s in &ss {
                    if m == 0 || m + s > pop.clients {
                        return bad(format!("participation needs 1 <= m and m + s <= M; got m={m}, s={s}, M={}", pop.clients));
                    }
                }
            }
            if self.sweep.seeds.is_empty() {
                return bad("sweep.seeds must not be empty".into());
            }
            for q in std::iter::once(&self.algorithm.q).chain(&self.sweep.q) {
                if !(0.0..=1.0).contains(q) {
                    return bad(format!("q must lie in [0, 1], got {q}"));
                }
            }
            if self.algorithm.rounds == 0 || self.sweep.rounds.contains(&0) {
                return bad("rounds must be >= 1".into());
            }
        }
        for (name, v) in [("sigma", pop.sigma), ("sigma_s", pop.sigma_s), ("spread", pop.spread), ("l2", pop.l2)] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("population.{name} must be finite and >= 0, got {v}"));
            }
        }
        if !pop.center.is_finite() {
            return bad(format!("population.center must be finite, got {}", pop.center));
        }
        if !(pop.hessian.is_finite() && pop.hessian > 0.0) {
            return bad(format!("population.hessian must be > 0, got {}", pop.hessian));
        }
        for (name, v) in [("eta_c", self.algorithm.eta_c), ("eta_s", self.algorithm.eta_s), ("schedule_scale", self.algorithm.schedule_scale)] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("algorithm.{name} must be finite and >= 0, got {v}"));
            }
        }
        let l = &self.learnability;
        if let Some(w) = l.omega.iter().find(|w| !(**w > 0.0 && **w < 1.0)) {
            return bad(format!("learnability.omega values must lie in (0, 1), got {w}"));
        }
        if !(l.server_fraction >= 0.0 && l.server_fraction <= 1.0) || !(l.lambda1 >= 0.0 && l.lambda1 <= 1.0) {
            return bad("learnability.server_fraction and lambda1 must lie in [0, 1]".into());
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form, excluding the output directory.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.out_dir = PathBuf::new();
        let bytes = serde_json::to_vec(&canonical).expect("config serialises");
        let digest = Sha256::digest(&bytes);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Server step size for a run of `rounds` rounds.
    pub fn eta_s_for(&self, rounds: usize) -> f64 {
        let alg = &self.algorithm;
        let r = rounds as f64;
        match alg.schedule {
            Schedule::Constant => alg.eta_s,
            Schedule::LnROverR => alg.schedule_scale * r.ln() / r,
            Schedule::InvSqrtR => alg.schedule_scale / r.sqrt(),
        }
    }
}

fn merge(base: &mut toml::Table, overlay: toml::Table, prefix: &str) -> Result<()> {
    for (key, value) in overlay {
        let path = if prefix.is_empty() { key.clone() } else { format!("{prefix}.{key}") };
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o, &path)?,
            (Some(toml::Value::Table(_)), _) => return Err(Error::Config(format!("'{path}' must be a section"))),
            (_, v) => {
                // unknown keys are caught when deserialising with deny_unknown_fields
                base.insert(key, v);
            }
        }
    }
    Ok(())
}

/// Applies `section.key=value`. The value is parsed as a TOML value and falls
/// back to a bare string.
pub fn apply_override(table: &mut toml::Table, ov: &str) -> Result<()> {
    let (key, raw) = ov
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override '{ov}' is not of the form key=value")))?;
    let key = key.trim();
    let raw = raw.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("override key '{key}' is malformed")));
    }
    let mut cur = table;
    for section in &parts[..parts.len() - 1] {
        cur = match cur.get_mut(*section) {
            Some(toml::Value::Table(t)) => t,
            _ => return Err(Error::Config(format!("unknown section '{section}' in override '{key}'"))),
        };
    }
    let leaf = parts[parts.len() - 1];
    // optional keys are absent from the serialised defaults; let deserialisation judge them
    if !cur.contains_key(leaf) && !OPTIONAL_KEYS.contains(&key) {
        return Err(Error::Config(format!("unknown key '{key}'")));
    }
    cur.insert(leaf.to_string(), value);
    Ok(())
}

const OPTIONAL_KEYS: [&str; 5] = [
    "algorithm.ratio_band_c",
    "data.train_images",
    "data.train_labels",
    "data.test_images",
    "data.test_labels",
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_roundtrip_every_scenario() {
        for sc in Scenario::ALL {
            let cfg = ExperimentConfig::with_overrides(sc, &[]).unwrap();
            assert_eq!(cfg, ExperimentConfig::defaults(sc));
        }
    }

    #[test]
    fn file_and_overrides() {
        let text = "scenario = \"sconvex-rate\"\n[algorithm]\nq = 0.25\n[sweep]\nseeds = [1, 2]\n";
        let cfg = ExperimentConfig::from_toml_str(text, &["algorithm.local_steps=3".into(), "data.train_images=a/b".into()]).unwrap();
        assert_eq!(cfg.algorithm.q, 0.25);
        assert_eq!(cfg.algorithm.local_steps, 3);
        assert_eq!(cfg.sweep.seeds, vec![1, 2]);
        assert_eq!(cfg.data.train_images, Some(PathBuf::from("a/b")));
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(ExperimentConfig::from_toml_str("scenario = \"pac\"\nbogus = 1\n", &[]).is_err());
        assert!(ExperimentConfig::from_toml_str("scenario = \"pac\"\n[algorithm]\nqq = 1\n", &[]).is_err());
        assert!(ExperimentConfig::with_overrides(Scenario::Pac, &["algorithm.qq=1".into()]).is_err());
        assert!(ExperimentConfig::with_overrides(Scenario::Pac, &["nosection.q=1".into()]).is_err());
        assert!(ExperimentConfig::with_overrides(Scenario::Pac, &["algorithm.q".into()]).is_err());
        assert!(ExperimentConfig::from_toml_str("[algorithm]\nq = 1\n", &[]).is_err());
        assert!(ExperimentConfig::from_toml_str("scenario = \"nope\"\n", &[]).is_err());
    }

    #[test]
    fn validation_errors_are_config_errors() {
        let err = ExperimentConfig::with_overrides(Scenario::SconvexRate, &["algorithm.q=1.5".into()]).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        let err = ExperimentConfig::with_overrides(Scenario::SconvexRate, &["participation.m=7".into()]).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn hash_ignores_out_dir_only() {
        let a = ExperimentConfig::defaults(Scenario::Pac);
        let mut b = a.clone();
        b.out_dir = PathBuf::from("elsewhere");
        assert_eq!(a.hash(), b.hash());
        b.learnability.trials += 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn schedules() {
        let cfg = ExperimentConfig::defaults(Scenario::SconvexRate);
        assert!((cfg.eta_s_for(128) - 2.0 * 128f64.ln() / 128.0).abs() < 1e-15);
        let cfg = ExperimentConfig::defaults(Scenario::NonconvexRate);
        assert!((cfg.eta_s_for(64) - 0.125).abs() < 1e-15);
    }
}
