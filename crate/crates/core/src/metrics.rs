//! Accuracy and group fairness metrics on test-set predictions.
//!
//! Differences are signed privileged minus unprivileged: a positive value
//! favors the privileged group.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Confusion counts with the favorable label as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn favorable_rate(&self) -> Option<f64> {
        ratio(self.tp + self.fp, self.total())
    }

    pub fn tpr(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn fpr(&self) -> Option<f64> {
        ratio(self.fp, self.fp + self.tn)
    }

    fn record(&mut self, pred: bool, truth: bool) {
        match (pred, truth) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, false) => self.tn += 1,
            (false, true) => self.fn_ += 1,
        }
    }
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupConfusion {
    pub privileged: Confusion,
    pub unprivileged: Confusion,
}

impl GroupConfusion {
    pub fn from_predictions(preds: &[bool], truths: &[bool], protected: &[bool]) -> Result<Self> {
        check_len(preds.len(), truths.len())?;
        check_len(preds.len(), protected.len())?;
        let mut out = GroupConfusion::default();
        for ((&p, &t), &g) in preds.iter().zip(truths).zip(protected) {
            if g {
                out.privileged.record(p, t);
            } else {
                out.unprivileged.record(p, t);
            }
        }
        Ok(out)
    }

    /// Statistical parity difference from the confusion counts.
    pub fn spd(&self) -> Result<f64> {
        let p = self
            .privileged
            .favorable_rate()
            .ok_or(Error::MissingGroup("privileged"))?;
        let u = self
            .unprivileged
            .favorable_rate()
            .ok_or(Error::MissingGroup("unprivileged"))?;
        Ok(p - u)
    }

    /// Average odds difference from the confusion counts.
    pub fn aod(&self) -> Result<f64> {
        let rate = |c: &Confusion, group, name, f: fn(&Confusion) -> Option<f64>| {
            f(c).ok_or(Error::ZeroDenominator { group, rate: name })
        };
        let tpr_p = rate(&self.privileged, "privileged", "TPR", Confusion::tpr)?;
        let tpr_u = rate(&self.unprivileged, "unprivileged", "TPR", Confusion::tpr)?;
        let fpr_p = rate(&self.privileged, "privileged", "FPR", Confusion::fpr)?;
        let fpr_u = rate(&self.unprivileged, "unprivileged", "FPR", Confusion::fpr)?;
        Ok(0.5 * ((tpr_p - tpr_u) + (fpr_p - fpr_u)))
    }
}

fn check_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch {
            expected: a,
            found: b,
        });
    }
    Ok(())
}

pub fn accuracy(preds: &[bool], truths: &[bool]) -> Result<f64> {
    check_len(preds.len(), truths.len())?;
    if preds.is_empty() {
        return Err(Error::EmptyInput("predictions"));
    }
    let hits = preds.iter().zip(truths).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / preds.len() as f64)
}

/// `P(pred = fav | privileged) − P(pred = fav | unprivileged)`, computed
/// directly from the predictions.
pub fn spd(preds: &[bool], protected: &[bool]) -> Result<f64> {
    check_len(preds.len(), protected.len())?;
    let (mut fav, mut n) = ([0usize; 2], [0usize; 2]);
    for (&p, &g) in preds.iter().zip(protected) {
        n[g as usize] += 1;
        fav[g as usize] += p as usize;
    }
    let p = ratio(fav[1], n[1]).ok_or(Error::MissingGroup("privileged"))?;
    let u = ratio(fav[0], n[0]).ok_or(Error::MissingGroup("unprivileged"))?;
    Ok(p - u)
}

/// `½[(TPR_priv − TPR_unpriv) + (FPR_priv − FPR_unpriv)]`.
pub fn aod(preds: &[bool], truths: &[bool], protected: &[bool]) -> Result<f64> {
    GroupConfusion::from_predictions(preds, truths, protected)?.aod()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemovalStats {
    pub k_percent: f64,
    pub similarity_threshold: f64,
    pub flagged_pf: usize,
    pub flagged_uu: usize,
    pub removed_pf: usize,
    pub removed_uu: usize,
    pub budget_pf: usize,
    pub budget_uu: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    pub accuracy: f64,
    /// Signed, privileged minus unprivileged.
    pub spd: f64,
    /// Signed, privileged minus unprivileged.
    pub aod: f64,
    pub test_size: usize,
    pub train_size: usize,
    pub group_confusion: GroupConfusion,
    pub removal: RemovalStats,
    pub reweighed: bool,
}

impl FairnessReport {
    pub fn evaluate(
        preds: &[bool],
        truths: &[bool],
        protected: &[bool],
        train_size: usize,
        removal: RemovalStats,
        reweighed: bool,
    ) -> Result<Self> {
        let group_confusion = GroupConfusion::from_predictions(preds, truths, protected)?;
        Ok(FairnessReport {
            accuracy: accuracy(preds, truths)?,
            spd: spd(preds, protected)?,
            aod: group_confusion.aod()?,
            test_size: preds.len(),
            train_size,
            group_confusion,
            removal,
            reweighed,
        })
    }
}
