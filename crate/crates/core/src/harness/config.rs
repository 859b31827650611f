//! Experiment configuration and per-cell seed derivation.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::HarnessError;
use crate::bpi::BonusVariant;
use crate::instances::{random_mdp, tree_mdp, TreeSpec};
use crate::mdp::Mdp;
use crate::mdp_file::load_mdp;

/// Where an instance comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum InstanceSource {
    File {
        path: PathBuf,
    },
    Tree {
        num_states: usize,
        num_actions: usize,
        horizon: usize,
        gap: f64,
        /// Bernoulli rewards instead of unit-variance Gaussians (required by BPI-UCRL).
        #[serde(default)]
        bernoulli: bool,
    },
    Random {
        num_states: usize,
        num_actions: usize,
        horizon: usize,
        seed: u64,
        #[serde(default)]
        deterministic: bool,
    },
}

impl InstanceSource {
    pub fn label(&self) -> String {
        match self {
            InstanceSource::File { path } => format!("file:{}", path.display()),
            InstanceSource::Tree { num_states, num_actions, horizon, gap, bernoulli } => {
                let rewards = if *bernoulli { "bernoulli" } else { "gaussian" };
                format!("tree-S{num_states}-A{num_actions}-H{horizon}-gap{gap}-{rewards}")
            }
            InstanceSource::Random { num_states, num_actions, horizon, seed, deterministic } => {
                let kind = if *deterministic { "det" } else { "sto" };
                format!("random-S{num_states}-A{num_actions}-H{horizon}-seed{seed}-{kind}")
            }
        }
    }

    pub fn build(&self) -> Result<Mdp, HarnessError> {
        Ok(match self {
            InstanceSource::File { path } => load_mdp(path)?,
            InstanceSource::Tree { num_states, num_actions, horizon, gap, bernoulli } => {
                let spec = TreeSpec::new(*num_states, *num_actions, *horizon, *gap);
                tree_mdp(&if *bernoulli { spec.bernoulli() } else { spec })?
            }
            InstanceSource::Random { num_states, num_actions, horizon, seed, deterministic } => {
                random_mdp(*num_states, *num_actions, *horizon, *seed, !*deterministic)?
            }
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    #[default]
    BpiUcrl,
    Ucbvi,
}

/// Seeds as an explicit list or a half-open range.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SeedSpec {
    List(Vec<u64>),
    Range { start: u64, end: u64 },
}

impl SeedSpec {
    pub fn seeds(&self) -> Vec<u64> {
        match self {
            SeedSpec::List(v) => v.clone(),
            SeedSpec::Range { start, end } => (*start..*end).collect(),
        }
    }
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub instances: Vec<InstanceSource>,
    #[serde(default)]
    pub algorithm: Algorithm,
    pub epsilon: f64,
    pub delta: f64,
    pub seeds: SeedSpec,
    /// Mixed into every per-cell seed.
    #[serde(default)]
    pub master_seed: u64,
    /// Good-event, targeting and lemma diagnostics on every BPI-UCRL cell.
    #[serde(default)]
    pub diagnostics: bool,
    #[serde(default)]
    pub variant: BonusVariant,
    /// BPI-UCRL episode cap; `None` uses ten times the explicit bound.
    #[serde(default)]
    pub max_episodes: Option<u64>,
    /// UCBVI episodes per cell.
    #[serde(default)]
    pub episodes: Option<u64>,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    /// Worker threads; `None` uses the global pool.
    #[serde(default)]
    pub jobs: Option<usize>,
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)?;
        let config: ExperimentConfig = serde_json::from_str(&text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |msg: String| Err(HarnessError::Config(msg));
        if self.instances.is_empty() {
            return bad("at least one instance is required".into());
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return bad(format!("epsilon must be positive (got {})", self.epsilon));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad(format!("delta must lie in (0, 1) (got {})", self.delta));
        }
        let seeds = self.seeds.seeds();
        if seeds.is_empty() {
            return bad("the seed list is empty".into());
        }
        let mut seen = HashSet::new();
        if let Some(dup) = seeds.iter().find(|s| !seen.insert(**s)) {
            return bad(format!("seed {dup} appears twice"));
        }
        if self.algorithm == Algorithm::Ucbvi && self.episodes.unwrap_or(0) == 0 {
            return bad("ucbvi sweeps need a positive `episodes`".into());
        }
        if self.jobs == Some(0) {
            return bad("jobs must be positive".into());
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serialises");
        hex(&Sha256::digest(&json))
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// 32-byte seed for cell `(instance_id, seed)`: SHA-256 over the master seed,
/// the length-prefixed instance id and the cell seed.
pub fn derive_seed(master_seed: u64, instance_id: &str, seed: u64) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(b"optpac/cell");
    h.update(master_seed.to_le_bytes());
    h.update((instance_id.len() as u64).to_le_bytes());
    h.update(instance_id.as_bytes());
    h.update(seed.to_le_bytes());
    h.finalize().into()
}

pub fn cell_rng(master_seed: u64, instance_id: &str, seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::from_seed(derive_seed(master_seed, instance_id, seed))
}

/// First eight bytes of [`derive_seed`] as an integer.
pub fn derive_u64(master_seed: u64, instance_id: &str, seed: u64) -> u64 {
    let d = derive_seed(master_seed, instance_id, seed);
    u64::from_le_bytes(d[..8].try_into().expect("eight bytes"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config() -> ExperimentConfig {
        serde_json::from_str(
            r#"{"instances":[{"kind":"random","num_states":3,"num_actions":2,"horizon":3,"seed":0}],
                "epsilon":0.2,"delta":0.1,"seeds":{"start":0,"end":3}}"#,
        )
        .unwrap()
    }

    #[test]
    fn parses_with_defaults() {
        let c = config();
        assert_eq!(c.algorithm, Algorithm::BpiUcrl);
        assert_eq!(c.seeds.seeds(), vec![0, 1, 2]);
        assert_eq!(c.out_dir, PathBuf::from("out"));
        c.validate().unwrap();
        let list: SeedSpec = serde_json::from_str("[4, 5]").unwrap();
        assert_eq!(list, SeedSpec::List(vec![4, 5]));
    }

    #[test]
    fn rejects_bad_configs() {
        let mut c = config();
        c.seeds = SeedSpec::List(vec![1, 2, 1]);
        assert!(matches!(c.validate(), Err(HarnessError::Config(_))));
        let mut c = config();
        c.delta = 1.0;
        assert!(c.validate().is_err());
        let mut c = config();
        c.algorithm = Algorithm::Ucbvi;
        assert!(c.validate().is_err());
    }

    #[test]
    fn seeds_separate_cells() {
        let a = derive_seed(0, "x", 1);
        assert_eq!(a, derive_seed(0, "x", 1));
        assert_ne!(a, derive_seed(1, "x", 1));
        assert_ne!(a, derive_seed(0, "y", 1));
        assert_ne!(a, derive_seed(0, "x", 2));
        // length prefix keeps ("ab", _) and ("a", _) apart even with shared bytes
        assert_ne!(derive_seed(0, "ab", 0), derive_seed(0, "a", 0));
    }

    #[test]
    fn hash_tracks_content() {
        let a = config();
        let mut b = config();
        assert_eq!(a.hash(), b.hash());
        b.epsilon = 0.3;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
