use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DataError, LabelTable};

/// Partition a molecule belongs to within one dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Split {
    #[serde(rename = "train")]
    Train,
    #[serde(rename = "val")]
    Val,
    #[serde(rename = "test")]
    Test,
    /// Auxiliary-dataset test molecules that also appear in the primary
    /// dataset's training split.
    #[serde(rename = "test-seen")]
    TestSeen,
}

impl Split {
    pub const ALL: [Split; 4] = [Split::Train, Split::Val, Split::Test, Split::TestSeen];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
            Split::TestSeen => "test-seen",
        }
    }

    pub fn from_name(s: &str) -> Option<Split> {
        Split::ALL.into_iter().find(|x| x.name() == s || (s == "test_seen" && *x == Split::TestSeen))
    }
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ratios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for Ratios {
    fn default() -> Self {
        Ratios {
            train: 0.8,
            val: 0.1,
            test: 0.1,
        }
    }
}

impl Ratios {
    pub fn validate(&self) -> Result<(), DataError> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|r| !(0.0..=1.0).contains(r)) || (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(DataError::Split(format!("ratios {parts:?} must be in [0, 1] and sum to 1")));
        }
        Ok(())
    }

    /// Rounded train/val counts with the remainder going to test, so every
    /// key is assigned.
    pub fn counts(&self, n: usize) -> [usize; 3] {
        let train = ((n as f64 * self.train).round() as usize).min(n);
        let val = ((n as f64 * self.val).round() as usize).min(n - train);
        [train, val, n - train - val]
    }
}

/// Split tag of every row of one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub dataset: String,
    pub seed: u64,
    pub ratios: Ratios,
    pub tags: Vec<Split>,
}

impl SplitAssignment {
    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.tags.len()).filter(|&i| self.tags[i] == split).collect()
    }

    pub fn count(&self, split: Split) -> usize {
        self.tags.iter().filter(|&&t| t == split).count()
    }

    /// `{"train": [...], "val": [...], "test": [...], "test-seen": [...]}`
    /// with ascending row indices.
    pub fn to_json(&self) -> String {
        let map: BTreeMap<&str, Vec<usize>> = Split::ALL.iter().map(|&s| (s.name(), self.indices(s))).collect();
        serde_json::to_string_pretty(&map).expect("index lists serialize")
    }

    /// Parses the JSON form; every row in `0..rows` must appear exactly once.
    pub fn from_json(dataset: &str, rows: usize, text: &str) -> Result<SplitAssignment, DataError> {
        let map: BTreeMap<String, Vec<usize>> = serde_json::from_str(text)?;
        let mut tags: Vec<Option<Split>> = vec![None; rows];
        for (name, idx) in &map {
            let split = Split::from_name(name).ok_or_else(|| DataError::Split(format!("unknown split `{name}`")))?;
            for &i in idx {
                match tags.get_mut(i) {
                    Some(slot @ None) => *slot = Some(split),
                    Some(Some(_)) => return Err(DataError::Split(format!("row {i} assigned twice"))),
                    None => return Err(DataError::Split(format!("row {i} out of range for {rows} rows"))),
                }
            }
        }
        let tags = tags
            .into_iter()
            .enumerate()
            .map(|(i, t)| t.ok_or_else(|| DataError::Split(format!("row {i} unassigned"))))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(SplitAssignment {
            dataset: dataset.to_string(),
            seed: 0,
            ratios: Ratios::default(),
            tags,
        })
    }
}

fn random_tags(n: usize, ratios: &Ratios, rng: &mut ChaCha8Rng) -> Vec<Split> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let [train, val, _] = ratios.counts(n);
    let mut tags = vec![Split::Test; n];
    for (pos, &i) in order.iter().enumerate() {
        if pos < train {
            tags[i] = Split::Train;
        } else if pos < train + val {
            tags[i] = Split::Val;
        }
    }
    tags
}

/// Splits the primary dataset at random per `ratios`. In every auxiliary
/// dataset, molecules present in the primary training split become
/// `test-seen`; the rest are split per `ratios`. Each dataset draws from its
/// own stream of a generator seeded with `seed`.
pub fn make_splits(
    tables: &[LabelTable],
    primary: usize,
    ratios: Ratios,
    seed: u64,
) -> Result<Vec<SplitAssignment>, DataError> {
    ratios.validate()?;
    if primary >= tables.len() {
        return Err(DataError::Split(format!("primary dataset index {primary} out of range")));
    }
    let rng_for = |i: usize| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        rng
    };
    let primary_tags = random_tags(tables[primary].len(), &ratios, &mut rng_for(primary));
    let primary_train: HashSet<&str> = tables[primary]
        .rows
        .iter()
        .zip(&primary_tags)
        .filter(|(_, &t)| t == Split::Train)
        .map(|(r, _)| r.key.as_str())
        .collect();
    let mut out = Vec::with_capacity(tables.len());
    for (i, table) in tables.iter().enumerate() {
        let tags = if i == primary {
            primary_tags.clone()
        } else {
            let seen: Vec<bool> = table.rows.iter().map(|r| primary_train.contains(r.key.as_str())).collect();
            let rest: Vec<usize> = (0..table.len()).filter(|&r| !seen[r]).collect();
            let rest_tags = random_tags(rest.len(), &ratios, &mut rng_for(i));
            let mut tags = vec![Split::TestSeen; table.len()];
            for (&r, t) in rest.iter().zip(rest_tags) {
                tags[r] = t;
            }
            tags
        };
        out.push(SplitAssignment {
            dataset: table.name().to_string(),
            seed,
            ratios,
            tags,
        });
    }
    Ok(out)
}
