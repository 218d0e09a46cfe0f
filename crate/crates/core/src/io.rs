//! JSON game file format.
//!
//! A game document carries `num_states`, `num_actions_user`,
//! `num_actions_adv`, `discount`, a dense `transition[a][b][s][s']` tensor, a
//! `reward[a][b][s]` tensor, and an optional `sampling` object
//! `{p, beta, phi}`. No other top-level keys are accepted. A reward entry may
//! be a scalar expected reward or a per-next-state list; lists are reduced to
//! the expected reward by transition-weighted averaging at load time.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{validate_game, Dims, GameSpec, SamplingModel};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GameDocument {
    num_states: usize,
    num_actions_user: usize,
    num_actions_adv: usize,
    discount: f64,
    transition: Vec<Vec<Vec<Vec<f64>>>>,
    reward: Vec<Vec<Vec<RewardEntry>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sampling: Option<SamplingDocument>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum RewardEntry {
    Scalar(f64),
    PerNextState(Vec<f64>),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SamplingDocument {
    p: Vec<f64>,
    beta: Vec<Vec<f64>>,
    phi: Vec<Vec<f64>>,
}

/// A parsed game file: the game itself plus its optional sampling model.
#[derive(Debug, Clone)]
pub struct LoadedGame {
    pub spec: GameSpec,
    pub sampling: Option<SamplingModel>,
}

pub fn load_game(path: impl AsRef<Path>) -> Result<LoadedGame> {
    let text = fs::read_to_string(path)?;
    parse_game(&text)
}

/// Parses and fully validates a game document.
pub fn parse_game(text: &str) -> Result<LoadedGame> {
    let doc: GameDocument = serde_json::from_str(text).map_err(|e| Error::Load {
        field: "document".into(),
        reason: e.to_string(),
    })?;
    let dims =
        Dims::new(doc.num_actions_user, doc.num_actions_adv, doc.num_states).map_err(|e| {
            Error::Load {
                field: "dimensions".into(),
                reason: e.to_string(),
            }
        })?;

    let shape_err = |reason: String| Error::Load {
        field: "transition shape".into(),
        reason,
    };
    if doc.transition.len() != dims.num_actions_user {
        return Err(shape_err(format!(
            "outer level has {} entries, expected {} user actions",
            doc.transition.len(),
            dims.num_actions_user
        )));
    }
    let mut transition = Vec::with_capacity(dims.n() * dims.num_states);
    // Assemble in flat (a, b, s) row order so rows line up with Q indexing.
    for (a, per_a) in doc.transition.iter().enumerate() {
        if per_a.len() != dims.num_actions_adv {
            return Err(shape_err(format!(
                "transition[{a}] has {} entries, expected {} adversary actions",
                per_a.len(),
                dims.num_actions_adv
            )));
        }
        for (b, per_b) in per_a.iter().enumerate() {
            if per_b.len() != dims.num_states {
                return Err(shape_err(format!(
                    "transition[{a}][{b}] has {} entries, expected {} states",
                    per_b.len(),
                    dims.num_states
                )));
            }
            for (s, row) in per_b.iter().enumerate() {
                if row.len() != dims.num_states {
                    return Err(shape_err(format!(
                        "transition[{a}][{b}][{s}] has {} entries, expected {} states",
                        row.len(),
                        dims.num_states
                    )));
                }
                transition.extend_from_slice(row);
            }
        }
    }

    let reward_err = |reason: String| Error::Load {
        field: "reward shape".into(),
        reason,
    };
    if doc.reward.len() != dims.num_actions_user {
        return Err(reward_err(format!(
            "outer level has {} entries, expected {} user actions",
            doc.reward.len(),
            dims.num_actions_user
        )));
    }
    let mut reward = vec![0.0; dims.n()];
    for (a, per_a) in doc.reward.iter().enumerate() {
        if per_a.len() != dims.num_actions_adv {
            return Err(reward_err(format!(
                "reward[{a}] has {} entries, expected {} adversary actions",
                per_a.len(),
                dims.num_actions_adv
            )));
        }
        for (b, per_b) in per_a.iter().enumerate() {
            if per_b.len() != dims.num_states {
                return Err(reward_err(format!(
                    "reward[{a}][{b}] has {} entries, expected {} states",
                    per_b.len(),
                    dims.num_states
                )));
            }
            for (s, entry) in per_b.iter().enumerate() {
                let f = dims.flat(a, b, s);
                reward[f] = match entry {
                    RewardEntry::Scalar(r) => *r,
                    RewardEntry::PerNextState(per_next) => {
                        if per_next.len() != dims.num_states {
                            return Err(reward_err(format!(
                                "reward[{a}][{b}][{s}] has {} entries, expected {} states",
                                per_next.len(),
                                dims.num_states
                            )));
                        }
                        let row = &transition[f * dims.num_states..(f + 1) * dims.num_states];
                        row.iter().zip(per_next).map(|(p, r)| p * r).sum()
                    }
                };
            }
        }
    }

    let spec = GameSpec::new(dims, transition, reward, doc.discount).map_err(|e| Error::Load {
        field: "discount".into(),
        reason: e.to_string(),
    })?;
    let report = validate_game(&spec);
    if !report.is_ok() {
        return Err(Error::InvalidGame(report.to_string()));
    }

    let sampling = match doc.sampling {
        None => None,
        Some(sd) => {
            let beta = flatten_rows("sampling.beta", sd.beta, dims.num_states)?;
            let phi = flatten_rows("sampling.phi", sd.phi, dims.num_states)?;
            Some(
                SamplingModel::new(dims, sd.p, beta, phi).map_err(|e| Error::Load {
                    field: "sampling".into(),
                    reason: e.to_string(),
                })?,
            )
        }
    };

    Ok(LoadedGame { spec, sampling })
}

fn flatten_rows(field: &str, rows: Vec<Vec<f64>>, num_states: usize) -> Result<Vec<f64>> {
    if rows.len() != num_states {
        return Err(Error::Load {
            field: field.into(),
            reason: format!("{} rows, expected {}", rows.len(), num_states),
        });
    }
    let width = rows.first().map(|r| r.len()).unwrap_or(0);
    let mut out = Vec::with_capacity(num_states * width);
    for row in rows {
        if row.len() != width {
            return Err(Error::Load {
                field: field.into(),
                reason: "ragged rows".into(),
            });
        }
        out.extend(row);
    }
    Ok(out)
}

pub fn save_game(
    path: impl AsRef<Path>,
    spec: &GameSpec,
    sampling: Option<&SamplingModel>,
) -> Result<()> {
    fs::write(path, game_to_json(spec, sampling)?)?;
    Ok(())
}

pub fn game_to_json(spec: &GameSpec, sampling: Option<&SamplingModel>) -> Result<String> {
    let dims = spec.dims();
    let transition = (0..dims.num_actions_user)
        .map(|a| {
            (0..dims.num_actions_adv)
                .map(|b| {
                    (0..dims.num_states)
                        .map(|s| spec.transition_row(s, a, b).to_vec())
                        .collect()
                })
                .collect()
        })
        .collect();
    let reward = (0..dims.num_actions_user)
        .map(|a| {
            (0..dims.num_actions_adv)
                .map(|b| {
                    (0..dims.num_states)
                        .map(|s| RewardEntry::Scalar(spec.reward_at(s, a, b)))
                        .collect()
                })
                .collect()
        })
        .collect();
    let sampling = sampling.map(|m| SamplingDocument {
        p: m.state_dist().to_vec(),
        beta: (0..dims.num_states)
            .map(|s| m.user_policy_row(s).to_vec())
            .collect(),
        phi: (0..dims.num_states)
            .map(|s| m.adv_policy_row(s).to_vec())
            .collect(),
    });
    let doc = GameDocument {
        num_states: dims.num_states,
        num_actions_user: dims.num_actions_user,
        num_actions_adv: dims.num_actions_adv,
        discount: spec.discount(),
        transition,
        reward,
        sampling,
    };
    serde_json::to_string_pretty(&doc).map_err(|e| Error::Load {
        field: "document".into(),
        reason: e.to_string(),
    })
}
