//! Detection and removal of cross-group near-duplicates with opposite labels.
//!
//! Two groups are compared: privileged rows with the favorable label (`pf`)
//! and unprivileged rows with the unfavorable label (`uu`). Any row whose
//! cosine similarity to some row of the opposite group reaches the threshold
//! is flagged. Flagged rows are ranked by how many opposite-group rows they
//! match, and the top of each ranking is removed up to a budget of k% of the
//! rows sharing that group's protected value.

use std::cmp::Ordering;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::EncodedMatrix;

pub const DEFAULT_SIMILARITY_THRESHOLD: f64 = 0.99;

/// Slack on the threshold comparison so that exact duplicates reach 1.0
/// despite rounding in the norm product.
pub const SIMILARITY_EPS: f64 = 1e-12;

/// Resolution of reported similarities. Maxima are rounded to this grid so the
/// ranking's secondary key ignores rounding noise between duplicates.
pub const SIMILARITY_RESOLUTION: f64 = 1e-12;

/// Number of pf rows handed to one worker at a time.
const SCAN_BLOCK: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Group {
    /// Privileged protected value, favorable label.
    #[serde(rename = "pf")]
    PrivilegedFavorable,
    /// Unprivileged protected value, unfavorable label.
    #[serde(rename = "uu")]
    UnprivilegedUnfavorable,
}

impl Group {
    pub fn tag(self) -> &'static str {
        match self {
            Group::PrivilegedFavorable => "pf",
            Group::UnprivilegedUnfavorable => "uu",
        }
    }
}

/// Row ids of the two compared groups and of everything else.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupPartition {
    pub pf: Vec<usize>,
    pub uu: Vec<usize>,
    pub remainder: Vec<usize>,
}

pub fn partition_groups(train: &EncodedMatrix) -> Result<GroupPartition> {
    let mut part = GroupPartition {
        pf: Vec::new(),
        uu: Vec::new(),
        remainder: Vec::new(),
    };
    for m in &train.meta {
        match (m.privileged, m.favorable) {
            (true, true) => part.pf.push(m.row_id),
            (false, false) => part.uu.push(m.row_id),
            _ => part.remainder.push(m.row_id),
        }
    }
    if part.pf.is_empty() {
        return Err(Error::EmptyGroup("privileged & favorable"));
    }
    if part.uu.is_empty() {
        return Err(Error::EmptyGroup("unprivileged & unfavorable"));
    }
    Ok(part)
}

fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

/// Cosine similarity. A zero vector has similarity 0 with everything.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            expected: u.len(),
            found: v.len(),
        });
    }
    let (nu, nv) = (dot(u, u).sqrt(), dot(v, v).sqrt());
    if nu == 0.0 || nv == 0.0 {
        warn!("cosine similarity with a zero vector defined as 0");
        return Ok(0.0);
    }
    Ok(dot(u, v) / (nu * nv))
}

/// A row participating in the similarity scan.
#[derive(Debug, Clone, Copy)]
pub struct Member<'a> {
    pub row_id: usize,
    pub features: &'a [f64],
}

/// Collects the members of `ids` from `matrix`, in matrix order.
pub fn members<'a>(matrix: &'a EncodedMatrix, ids: &[usize]) -> Vec<Member<'a>> {
    let wanted: std::collections::HashSet<usize> = ids.iter().copied().collect();
    matrix
        .rows
        .iter()
        .zip(&matrix.meta)
        .filter(|(_, m)| wanted.contains(&m.row_id))
        .map(|(r, m)| Member {
            row_id: m.row_id,
            features: r,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Flag {
    pub row_id: usize,
    pub group: Group,
    pub match_count: usize,
    pub max_similarity: f64,
}

/// Ranking order: match count descending, max similarity descending, row id
/// ascending.
pub fn rank_order(a: &Flag, b: &Flag) -> Ordering {
    b.match_count
        .cmp(&a.match_count)
        .then_with(|| b.max_similarity.total_cmp(&a.max_similarity))
        .then_with(|| a.row_id.cmp(&b.row_id))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlagRanking {
    pub threshold: f64,
    pub pf: Vec<Flag>,
    pub uu: Vec<Flag>,
}

impl FlagRanking {
    pub fn for_group(&self, g: Group) -> &[Flag] {
        match g {
            Group::PrivilegedFavorable => &self.pf,
            Group::UnprivilegedUnfavorable => &self.uu,
        }
    }
}

#[derive(Clone)]
struct Tally {
    count: usize,
    max: f64,
}

impl Tally {
    const EMPTY: Tally = Tally {
        count: 0,
        max: f64::NEG_INFINITY,
    };

    fn merge(&mut self, other: &Tally) {
        self.count += other.count;
        self.max = self.max.max(other.max);
    }
}

/// Flags every row with at least one opposite-group row at cosine similarity
/// `>= threshold` and ranks each group's flagged rows.
///
/// The scan is exact over all `|pf| × |uu|` pairs and runs in parallel over
/// blocks of pf rows; integer counts and maxima are merged, so the result does
/// not depend on the number of workers.
pub fn flag_and_rank(pf: &[Member<'_>], uu: &[Member<'_>], threshold: f64) -> Result<FlagRanking> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "similarity threshold must lie in (0, 1], got {threshold}"
        )));
    }
    let dim = pf.first().or(uu.first()).map_or(0, |m| m.features.len());
    for m in pf.iter().chain(uu) {
        if m.features.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: m.features.len(),
            });
        }
    }
    let norm = |m: &Member<'_>| dot(m.features, m.features).sqrt();
    let uu_norms: Vec<f64> = uu.iter().map(norm).collect();
    if uu_norms.contains(&0.0) || pf.iter().any(|m| norm(m) == 0.0) {
        warn!("zero feature vectors present; they cannot be flagged");
    }
    let cut = threshold - SIMILARITY_EPS;

    let (pf_tallies, uu_tallies) = pf
        .par_chunks(SCAN_BLOCK)
        .map(|block| {
            let mut own = Vec::with_capacity(block.len());
            let mut other = vec![Tally::EMPTY; uu.len()];
            for p in block {
                let np = norm(p);
                let mut t = Tally::EMPTY;
                if np > 0.0 {
                    for (j, (q, &nq)) in uu.iter().zip(&uu_norms).enumerate() {
                        if nq == 0.0 {
                            continue;
                        }
                        let s = dot(p.features, q.features) / (np * nq);
                        if s >= cut {
                            t.count += 1;
                            t.max = t.max.max(s);
                            other[j].count += 1;
                            other[j].max = other[j].max.max(s);
                        }
                    }
                }
                own.push(t);
            }
            (own, other)
        })
        .reduce(
            || (Vec::new(), vec![Tally::EMPTY; uu.len()]),
            |(mut own_a, mut other_a), (own_b, other_b)| {
                own_a.extend(own_b);
                for (a, b) in other_a.iter_mut().zip(&other_b) {
                    a.merge(b);
                }
                (own_a, other_a)
            },
        );

    let collect = |members: &[Member<'_>], tallies: &[Tally], group: Group| {
        let mut flags: Vec<Flag> = members
            .iter()
            .zip(tallies)
            .filter(|(_, t)| t.count > 0)
            .map(|(m, t)| Flag {
                row_id: m.row_id,
                group,
                match_count: t.count,
                max_similarity: quantize(t.max),
            })
            .collect();
        flags.sort_by(rank_order);
        flags
    };
    Ok(FlagRanking {
        threshold,
        pf: collect(pf, &pf_tallies, Group::PrivilegedFavorable),
        uu: collect(uu, &uu_tallies, Group::UnprivilegedUnfavorable),
    })
}

fn quantize(s: f64) -> f64 {
    ((s / SIMILARITY_RESOLUTION).round() * SIMILARITY_RESOLUTION).min(1.0)
}

/// `floor(group_total × k_percent / 100)`, where `group_total` counts every
/// row sharing the group's protected value (not only the flagged rows).
pub fn removal_budget(group_total: usize, k_percent: f64) -> Result<usize> {
    if !(k_percent >= 0.0 && k_percent.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "removal percent must be non-negative, got {k_percent}"
        )));
    }
    // Integral percentages are computed exactly.
    if k_percent.fract() == 0.0 {
        return Ok(group_total * k_percent as usize / 100);
    }
    Ok((group_total as f64 * k_percent / 100.0 + 1e-9).floor() as usize)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemovalPlan {
    pub k_percent: f64,
    pub threshold: f64,
    pub budget_pf: usize,
    pub budget_uu: usize,
    pub removed_pf: Vec<Flag>,
    pub removed_uu: Vec<Flag>,
    pub shortfall_pf: usize,
    pub shortfall_uu: usize,
}

impl RemovalPlan {
    pub fn empty(k_percent: f64, threshold: f64) -> Self {
        RemovalPlan {
            k_percent,
            threshold,
            budget_pf: 0,
            budget_uu: 0,
            removed_pf: Vec::new(),
            removed_uu: Vec::new(),
            shortfall_pf: 0,
            shortfall_uu: 0,
        }
    }

    pub fn removed_ids(&self) -> impl Iterator<Item = usize> + '_ {
        self.removed_pf
            .iter()
            .chain(&self.removed_uu)
            .map(|f| f.row_id)
    }

    pub fn removed_count(&self) -> usize {
        self.removed_pf.len() + self.removed_uu.len()
    }

    /// CSV with columns `row_id,group,match_count,max_similarity`.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["row_id", "group", "match_count", "max_similarity"])?;
        for f in self.removed_pf.iter().chain(&self.removed_uu) {
            w.write_record([
                f.row_id.to_string(),
                f.group.tag().to_string(),
                f.match_count.to_string(),
                format!("{:.12}", f.max_similarity),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::io("<memory>", e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// Removes the first `budget_pf` / `budget_uu` entries of each ranking from
/// `train`. A budget larger than the flagged count removes every flagged row
/// and records the shortfall.
pub fn remove_top_k(
    train: &EncodedMatrix,
    ranking: &FlagRanking,
    k_percent: f64,
    budget_pf: usize,
    budget_uu: usize,
) -> (EncodedMatrix, RemovalPlan) {
    let take = |flags: &[Flag], budget: usize| flags[..budget.min(flags.len())].to_vec();
    let removed_pf = take(&ranking.pf, budget_pf);
    let removed_uu = take(&ranking.uu, budget_uu);
    let plan = RemovalPlan {
        k_percent,
        threshold: ranking.threshold,
        budget_pf,
        budget_uu,
        shortfall_pf: budget_pf - removed_pf.len(),
        shortfall_uu: budget_uu - removed_uu.len(),
        removed_pf,
        removed_uu,
    };
    let gone: std::collections::HashSet<usize> = plan.removed_ids().collect();
    let filtered = train.filter(|m| !gone.contains(&m.row_id));
    (filtered, plan)
}
