use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::eval::metrics::{pcc, rmse, ScoredChannels};

pub const LADDER: &str =
    "per channel over frames -> mean over channels -> frame-weighted mean over utterances -> mean over folds";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UtteranceScore {
    pub id: String,
    pub speaker: String,
    pub frames: usize,
    /// Channel-mean RMSE, mm.
    pub rmse: f64,
    /// Channel-mean PCC; `None` when the utterance is too short or flat.
    pub pcc: Option<f64>,
    pub rmse_channels: Vec<f64>,
    pub pcc_channels: Vec<Option<f64>>,
}

/// Scores `pred` against `target` (both `[T x 12]`, mm) on `channels`.
pub fn score_utterance(
    id: &str,
    speaker: &str,
    pred: &Tensor,
    target: &Tensor,
    channels: ScoredChannels,
) -> Result<UtteranceScore> {
    if pred.shape() != target.shape() {
        return Err(Error::data(
            id,
            format!("prediction {:?} vs target {:?}", pred.shape(), target.shape()),
        ));
    }
    let idx = channels.indices();
    let pick = |t: &Tensor| -> Tensor {
        let rows: Vec<Vec<f64>> = (0..t.rows()).map(|i| idx.iter().map(|&j| t.at(i, j)).collect()).collect();
        Tensor::new([t.rows(), idx.len()], rows.concat()).expect("selected shape")
    };
    let (p, y) = (pick(pred), pick(target));
    let r = rmse(&p, &y).map_err(|e| Error::data(id, e.to_string()))?;
    let c = match pcc(&p, &y) {
        Ok(c) => Some(c),
        Err(e) => {
            log::warn!("{id}: PCC undefined ({e}); utterance excluded from PCC pooling");
            None
        }
    };
    Ok(UtteranceScore {
        id: id.to_string(),
        speaker: speaker.to_string(),
        frames: pred.rows(),
        rmse: r.mean,
        pcc: c.as_ref().map(|c| c.mean),
        rmse_channels: r.per_channel,
        pcc_channels: c.map(|c| c.per_channel).unwrap_or_else(|| vec![None; idx.len()]),
    })
}

/// Frame-weighted means of utterance RMSE and PCC.
pub fn pool(scores: &[UtteranceScore]) -> Result<(f64, f64)> {
    let frames: usize = scores.iter().map(|s| s.frames).sum();
    if frames == 0 {
        return Err(Error::invalid("no scored frames"));
    }
    let rmse = scores.iter().map(|s| s.rmse * s.frames as f64).sum::<f64>() / frames as f64;
    let pcc_frames: usize = scores.iter().filter(|s| s.pcc.is_some()).map(|s| s.frames).sum();
    if pcc_frames == 0 {
        return Err(Error::invalid("no utterance has a defined PCC"));
    }
    let pcc = scores
        .iter()
        .filter_map(|s| s.pcc.map(|p| p * s.frames as f64))
        .sum::<f64>()
        / pcc_frames as f64;
    Ok((rmse, pcc))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum FoldStatus {
    Ok { rmse: f64, pcc: f64 },
    Failed { reason: String, numerical: bool },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldRow {
    pub fold: usize,
    /// Held-out speaker, or the scored speaker when evaluating one model.
    pub speaker: String,
    pub train_utterances: usize,
    pub val_utterances: usize,
    pub test_utterances: usize,
    pub frames: usize,
    pub status: FoldStatus,
}

impl FoldRow {
    pub fn scores(&self) -> Option<(f64, f64)> {
        match self.status {
            FoldStatus::Ok { rmse, pcc } => Some((rmse, pcc)),
            FoldStatus::Failed { .. } => None,
        }
    }
}

/// Scores of one model output (for example the full-model estimate of S3).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputReport {
    pub name: String,
    pub folds: Vec<FoldRow>,
    /// `(rmse, pcc)` over folds; present only when every fold succeeded.
    pub grand: Option<(f64, f64)>,
    pub utterances: Vec<UtteranceScore>,
}

impl OutputReport {
    pub fn new(name: impl Into<String>, folds: Vec<FoldRow>, utterances: Vec<UtteranceScore>) -> Self {
        let grand = grand_mean(&folds);
        OutputReport {
            name: name.into(),
            folds,
            grand,
            utterances,
        }
    }
}

/// Arithmetic mean over folds, in fold order; `None` if any fold failed.
pub fn grand_mean(folds: &[FoldRow]) -> Option<(f64, f64)> {
    if folds.is_empty() {
        return None;
    }
    let scores: Option<Vec<(f64, f64)>> = folds.iter().map(FoldRow::scores).collect();
    let scores = scores?;
    let n = scores.len() as f64;
    Some((
        scores.iter().map(|s| s.0).sum::<f64>() / n,
        scores.iter().map(|s| s.1).sum::<f64>() / n,
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Arm or scenario label, for example `S3` or `SPN-S`.
    pub label: String,
    pub seed: u64,
    pub channels: Vec<String>,
    pub outputs: Vec<OutputReport>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

impl EvalReport {
    pub fn output(&self, name: &str) -> Option<&OutputReport> {
        self.outputs.iter().find(|o| o.name == name)
    }

    pub fn all_ok(&self) -> bool {
        self.outputs.iter().all(|o| o.grand.is_some())
    }

    pub fn any_numerical_failure(&self) -> bool {
        self.outputs
            .iter()
            .flat_map(|o| &o.folds)
            .any(|f| matches!(f.status, FoldStatus::Failed { numerical: true, .. }))
    }

    /// One row per fold and output plus a `mean` row per output.
    pub fn folds_csv(&self) -> String {
        let mut out = String::from("output,fold,speaker,train_utts,val_utts,test_utts,frames,rmse_mm,pcc,status\n");
        for o in &self.outputs {
            for f in &o.folds {
                let (r, p, status) = match &f.status {
                    FoldStatus::Ok { rmse, pcc } => (rmse.to_string(), pcc.to_string(), "ok".to_string()),
                    FoldStatus::Failed { reason, .. } => {
                        (String::new(), String::new(), format!("failed: {}", reason.replace([',', '\n'], ";")))
                    }
                };
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{r},{p},{status}",
                    o.name, f.fold, f.speaker, f.train_utterances, f.val_utterances, f.test_utterances, f.frames
                );
            }
            let status = if o.grand.is_some() { "ok" } else { "incomplete" };
            let _ = writeln!(
                out,
                "{},mean,,,,,,{},{},{status}",
                o.name,
                fmt_opt(o.grand.map(|g| g.0)),
                fmt_opt(o.grand.map(|g| g.1))
            );
        }
        out
    }

    pub fn utterances_csv(&self) -> String {
        let mut out = String::from("output,utterance_id,speaker,frames,rmse_mm,pcc");
        for c in &self.channels {
            let _ = write!(out, ",rmse_{c}");
        }
        for c in &self.channels {
            let _ = write!(out, ",pcc_{c}");
        }
        out.push('\n');
        for o in &self.outputs {
            for u in &o.utterances {
                let _ = write!(out, "{},{},{},{},{},{}", o.name, u.id, u.speaker, u.frames, u.rmse, fmt_opt(u.pcc));
                for v in &u.rmse_channels {
                    let _ = write!(out, ",{v}");
                }
                for v in &u.pcc_channels {
                    let _ = write!(out, ",{}", fmt_opt(*v));
                }
                out.push('\n');
            }
        }
        out
    }

    /// Aligned table: one column per fold, RMSE and PCC rows, `Avg` last.
    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# {} (seed {})", self.label, self.seed);
        let _ = writeln!(out, "# scored channels: {}", self.channels.join(" "));
        let _ = writeln!(out, "# aggregation: {LADDER}");
        for o in &self.outputs {
            let mut header = vec![o.name.clone()];
            header.extend(o.folds.iter().map(|f| f.speaker.clone()));
            header.push("Avg".into());
            let mut rmse_row = vec!["RMSE(mm)".to_string()];
            let mut pcc_row = vec!["PCC".to_string()];
            for f in &o.folds {
                match f.scores() {
                    Some((r, p)) => {
                        rmse_row.push(format!("{r:.3}"));
                        pcc_row.push(format!("{p:.3}"));
                    }
                    None => {
                        rmse_row.push("failed".into());
                        pcc_row.push("failed".into());
                    }
                }
            }
            match o.grand {
                Some((r, p)) => {
                    rmse_row.push(format!("{r:.3}"));
                    pcc_row.push(format!("{p:.3}"));
                }
                None => {
                    rmse_row.push("-".into());
                    pcc_row.push("-".into());
                }
            }
            let rows = [header, rmse_row, pcc_row];
            let widths: Vec<usize> = (0..rows[0].len())
                .map(|j| rows.iter().map(|r| r[j].len()).max().unwrap_or(0))
                .collect();
            out.push('\n');
            for r in &rows {
                let cells: Vec<String> = r
                    .iter()
                    .zip(&widths)
                    .enumerate()
                    .map(|(j, (c, w))| if j == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
                    .collect();
                let _ = writeln!(out, "{}", cells.join("  ").trim_end());
            }
        }
        out
    }
}
