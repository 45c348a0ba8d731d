//! Group-level, label-stratified outer and inner fold assignment.
//!
//! Groups are binned into quartiles by mean label. Within each quartile the
//! groups (shuffled, then stably sorted by mean label) are dealt in blocks
//! of `k`, each block to `k` distinct folds chosen least-loaded first with
//! random tie-breaks. Per-quartile counts and total group counts per fold
//! therefore differ by at most one.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{quartile_bins_with_ids, GroupAssignment};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub repetition: usize,
    pub k_outer: usize,
    pub k_inner: usize,
    /// Outer fold per participant.
    pub outer: Vec<usize>,
    /// Per outer fold, the inner validation fold of each participant
    /// (`None` for that outer fold's test participants).
    pub inner: Vec<Vec<Option<usize>>>,
}

impl FoldAssignment {
    pub fn test_indices(&self, outer: usize) -> Vec<usize> {
        (0..self.outer.len())
            .filter(|&i| self.outer[i] == outer)
            .collect()
    }

    pub fn train_indices(&self, outer: usize) -> Vec<usize> {
        (0..self.outer.len())
            .filter(|&i| self.outer[i] != outer)
            .collect()
    }

    pub fn inner_validation_indices(&self, outer: usize, inner: usize) -> Vec<usize> {
        (0..self.outer.len())
            .filter(|&i| self.inner[outer][i] == Some(inner))
            .collect()
    }

    pub fn inner_training_indices(&self, outer: usize, inner: usize) -> Vec<usize> {
        (0..self.outer.len())
            .filter(|&i| matches!(self.inner[outer][i], Some(v) if v != inner))
            .collect()
    }
}

struct Groups {
    ids: Vec<String>,
    members: Vec<Vec<usize>>,
    means: Vec<f64>,
}

fn collect_groups(labels: &[f64], groups: &GroupAssignment) -> Groups {
    let mut ids: Vec<String> = Vec::new();
    let mut members: Vec<Vec<usize>> = Vec::new();
    for (i, g) in groups.group_ids().iter().enumerate() {
        match ids.iter().position(|x| x == g) {
            Some(k) => members[k].push(i),
            None => {
                ids.push(g.clone());
                members.push(vec![i]);
            }
        }
    }
    let means = members
        .iter()
        .map(|m| m.iter().map(|&i| labels[i]).sum::<f64>() / m.len() as f64)
        .collect();
    Groups {
        ids,
        members,
        means,
    }
}

/// Fold index for each of `subset` (indices into the group list).
fn deal(g: &Groups, subset: &[usize], k: usize, rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
    let means: Vec<f64> = subset.iter().map(|&s| g.means[s]).collect();
    let ids: Vec<String> = subset.iter().map(|&s| g.ids[s].clone()).collect();
    let bins = quartile_bins_with_ids(&means, &ids)?.bins;
    let mut load = vec![0usize; k];
    let mut out = vec![0usize; subset.len()];
    for q in 0..4u8 {
        let mut members: Vec<usize> = (0..subset.len()).filter(|&i| bins[i] == q).collect();
        members.shuffle(rng);
        members.sort_by(|&a, &b| means[a].total_cmp(&means[b]));
        for block in members.chunks(k) {
            let keys: Vec<u64> = (0..k).map(|_| rng.random()).collect();
            let mut folds: Vec<usize> = (0..k).collect();
            folds.sort_by_key(|&f| (load[f], keys[f]));
            let mut block = block.to_vec();
            block.shuffle(rng);
            for (&m, &f) in block.iter().zip(&folds) {
                out[m] = f;
                load[f] += 1;
            }
        }
    }
    Ok(out)
}

/// `labels` are aligned with `groups.participant_ids()`.
pub fn make_folds(
    labels: &[f64],
    groups: &GroupAssignment,
    k_outer: usize,
    k_inner: usize,
    seed: u64,
) -> Result<FoldAssignment> {
    let n = groups.participant_ids().len();
    if labels.len() != n {
        return Err(Error::LengthMismatch(labels.len(), n));
    }
    if k_outer < 2 || k_inner < 2 {
        return Err(Error::Config("fold counts must be at least 2".into()));
    }
    let g = collect_groups(labels, groups);
    let n_groups = g.ids.len();
    if n_groups < k_outer {
        return Err(Error::TooFewGroups {
            needed: k_outer,
            got: n_groups,
        });
    }
    let min_train = n_groups - n_groups.div_ceil(k_outer);
    if min_train < k_inner {
        return Err(Error::TooFewGroups {
            needed: k_inner,
            got: min_train,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let all: Vec<usize> = (0..n_groups).collect();
    let outer_of_group = deal(&g, &all, k_outer, &mut rng)?;
    let mut outer = vec![0; n];
    for (k, m) in g.members.iter().enumerate() {
        for &i in m {
            outer[i] = outer_of_group[k];
        }
    }

    let mut inner = Vec::with_capacity(k_outer);
    for o in 0..k_outer {
        let train: Vec<usize> = all
            .iter()
            .copied()
            .filter(|&k| outer_of_group[k] != o)
            .collect();
        let assigned = deal(&g, &train, k_inner, &mut rng)?;
        let mut per = vec![None; n];
        for (&k, &v) in train.iter().zip(&assigned) {
            for &i in &g.members[k] {
                per[i] = Some(v);
            }
        }
        inner.push(per);
    }
    Ok(FoldAssignment {
        repetition: 0,
        k_outer,
        k_inner,
        outer,
        inner,
    })
}
