//! JSON MDP spec files.
//!
//! ```json
//! { "S": 2, "A": 1, "H": 1, "s1": 0,
//!   "masks": [[[0], [0]]],
//!   "transitions": [[[[0.0, 1.0]], [[1.0, 0.0]]]],
//!   "rewards": [[[{"kind": "bernoulli", "mean": 0.5}], [{"kind": "fixed", "mean": 0.0}]]] }
//! ```
//!
//! Arrays are indexed `[h-1][s][a]` (and `[s']` for transitions). `masks` is optional
//! and defaults to every action; entries of unavailable actions may be `null`.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::mdp::{Mdp, MdpBuilder, MdpError, RewardModel};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MdpFile {
    #[serde(rename = "S")]
    pub num_states: usize,
    #[serde(rename = "A")]
    pub num_actions: usize,
    #[serde(rename = "H")]
    pub horizon: usize,
    pub s1: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub masks: Option<Vec<Vec<Vec<usize>>>>,
    pub transitions: Vec<StageTransitions>,
    pub rewards: Vec<StageRewards>,
}

fn check_len(field: String, expected: usize, found: usize) -> Result<(), MdpError> {
    if expected == found {
        Ok(())
    } else {
        Err(MdpError::ShapeMismatch { field, expected, found })
    }
}

/// `[s][a]` rows of one stage; `None` for masked actions.
pub type StageTransitions = Vec<Vec<Option<Vec<f64>>>>;
pub type StageRewards = Vec<Vec<Option<RewardModel>>>;

impl MdpFile {
    pub fn from_mdp(mdp: &Mdp) -> Self {
        let (ns, na, horizon) = (mdp.num_states(), mdp.num_actions(), mdp.horizon());
        let shape = mdp.shape();
        let stage = |h: usize| -> (StageTransitions, StageRewards) {
            let mut t = Vec::with_capacity(ns);
            let mut r = Vec::with_capacity(ns);
            for s in 0..ns {
                let avail = |a: usize| shape.is_available(h, s, a);
                t.push((0..na).map(|a| avail(a).then(|| mdp.transition(h, s, a).to_vec())).collect());
                r.push((0..na).map(|a| avail(a).then(|| *mdp.reward(h, s, a))).collect());
            }
            (t, r)
        };
        let (transitions, rewards) = (1..=horizon).map(stage).unzip();
        let masks = (1..=horizon).map(|h| (0..ns).map(|s| shape.actions(h, s).to_vec()).collect()).collect();
        MdpFile {
            num_states: ns,
            num_actions: na,
            horizon,
            s1: mdp.initial_state(),
            masks: Some(masks),
            transitions,
            rewards,
        }
    }

    /// Validates shapes and every MDP invariant; the first violation is reported
    /// with its coordinates (stages 1-based).
    pub fn into_mdp(self) -> Result<Mdp, MdpError> {
        let (ns, na, horizon) = (self.num_states, self.num_actions, self.horizon);
        if ns == 0 || na == 0 || horizon == 0 {
            return Err(MdpError::InvalidDimensions { states: ns, actions: na, horizon });
        }
        let mut b = MdpBuilder::new(ns, na, horizon);
        if self.s1 >= ns {
            return Err(MdpError::InitialStateOutOfRange(self.s1));
        }
        b.initial_state(self.s1);
        if let Some(masks) = &self.masks {
            check_len("masks".into(), horizon, masks.len())?;
            for (hi, stage) in masks.iter().enumerate() {
                check_len(format!("masks[{hi}]"), ns, stage.len())?;
                for (s, mask) in stage.iter().enumerate() {
                    if let Some(&a) = mask.iter().find(|&&a| a >= na) {
                        return Err(MdpError::MaskActionOutOfRange { h: hi + 1, s, a });
                    }
                    b.mask(hi + 1, s, mask.clone());
                }
            }
        }
        let masks = self.masks.as_ref();
        let available = |h: usize, s: usize, a: usize| masks.is_none_or(|m| m[h - 1][s].contains(&a));
        check_len("transitions".into(), horizon, self.transitions.len())?;
        check_len("rewards".into(), horizon, self.rewards.len())?;
        for h in 1..=horizon {
            let t_stage = &self.transitions[h - 1];
            let r_stage = &self.rewards[h - 1];
            check_len(format!("transitions[{}]", h - 1), ns, t_stage.len())?;
            check_len(format!("rewards[{}]", h - 1), ns, r_stage.len())?;
            for s in 0..ns {
                check_len(format!("transitions[{}][{s}]", h - 1), na, t_stage[s].len())?;
                check_len(format!("rewards[{}][{s}]", h - 1), na, r_stage[s].len())?;
                for a in 0..na {
                    if !available(h, s, a) {
                        continue;
                    }
                    let row = t_stage[s][a].as_ref().ok_or(MdpError::Missing { field: "transition", h, s, a })?;
                    check_len(format!("transitions[{}][{s}][{a}]", h - 1), ns, row.len())?;
                    b.transition(h, s, a, row);
                    let reward = r_stage[s][a].ok_or(MdpError::Missing { field: "reward", h, s, a })?;
                    b.reward(h, s, a, reward);
                }
            }
        }
        b.build()
    }
}

pub fn read_mdp<R: Read>(reader: R) -> Result<Mdp, MdpError> {
    let file: MdpFile = serde_json::from_reader(reader)?;
    file.into_mdp()
}

pub fn load_mdp(path: impl AsRef<Path>) -> Result<Mdp, MdpError> {
    let f = std::fs::File::open(path)?;
    read_mdp(std::io::BufReader::new(f))
}

pub fn write_mdp<W: Write>(mdp: &Mdp, writer: W) -> Result<(), MdpError> {
    serde_json::to_writer_pretty(writer, &MdpFile::from_mdp(mdp))?;
    Ok(())
}

pub fn to_json_string(mdp: &Mdp) -> String {
    serde_json::to_string(&MdpFile::from_mdp(mdp)).expect("MDP serialization cannot fail")
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = r#"{
        "S": 2, "A": 2, "H": 1, "s1": 0,
        "masks": [[[0], [0, 1]]],
        "transitions": [[[[0.0, 1.0], null], [[1.0, 0.0], [0.5, 0.5]]]],
        "rewards": [[[{"kind": "bernoulli", "mean": 0.5}, null],
                     [{"kind": "fixed", "mean": 0.0}, {"kind": "gaussian", "mean": 0.1, "variance": 1.0}]]]
    }"#;

    #[test]
    fn parses_masked_file_and_roundtrips() {
        let mdp = read_mdp(SMALL.as_bytes()).unwrap();
        assert_eq!(mdp.actions(1, 0), &[0]);
        assert_eq!(mdp.reward(1, 1, 1).mean(), 0.1);
        let text = to_json_string(&mdp);
        let again = read_mdp(text.as_bytes()).unwrap();
        assert_eq!(mdp, again);
    }

    #[test]
    fn reports_first_violation_with_coordinates() {
        let bad = SMALL.replace("[0.5, 0.5]", "[0.5, 0.6]");
        let err = read_mdp(bad.as_bytes()).unwrap_err();
        assert!(matches!(err, MdpError::RowNotStochastic { h: 1, s: 1, a: 1, .. }), "{err}");

        let missing = SMALL.replace("[[0.0, 1.0], null]", "[null, null]");
        let err = read_mdp(missing.as_bytes()).unwrap_err();
        assert!(matches!(err, MdpError::Missing { field: "transition", h: 1, s: 0, a: 0 }), "{err}");

        let short = SMALL.replace("[[1.0, 0.0], [0.5, 0.5]]", "[[1.0, 0.0]]");
        let err = read_mdp(short.as_bytes()).unwrap_err();
        assert!(matches!(err, MdpError::ShapeMismatch { .. }), "{err}");
    }
}
