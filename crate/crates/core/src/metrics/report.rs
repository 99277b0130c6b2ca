use std::fmt::Write as _;

use super::CccBreakdown;
use crate::error::{Error, Result};

pub const REPORT_CSV_HEADER: &str = "fold,ccc_valence,ccc_arousal,p_va,n_valid";

/// Published baseline scores (valence, arousal, average) shown beside every report.
pub const BASELINE: (f64, f64, f64) = (0.2400, 0.2000, 0.2200);

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalReport {
    pub valence: CccBreakdown,
    pub arousal: CccBreakdown,
    pub p_va: f64,
    pub n_valid: usize,
}

impl EvalReport {
    pub fn row(&self, fold: impl Into<String>) -> FoldRow {
        FoldRow {
            fold: fold.into(),
            ccc_valence: self.valence.ccc,
            ccc_arousal: self.arousal.ccc,
            p_va: self.p_va,
            n_valid: Some(self.n_valid),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FoldRow {
    pub fold: String,
    pub ccc_valence: f64,
    pub ccc_arousal: f64,
    pub p_va: f64,
    pub n_valid: Option<usize>,
}

impl FoldRow {
    pub fn from_cccs(fold: impl Into<String>, ccc_valence: f64, ccc_arousal: f64) -> Self {
        Self {
            fold: fold.into(),
            ccc_valence,
            ccc_arousal,
            p_va: super::p_va(ccc_valence, ccc_arousal),
            n_valid: None,
        }
    }

    pub fn to_csv(&self) -> String {
        format!(
            "{},{:.4},{:.4},{:.4},{}",
            self.fold,
            self.ccc_valence,
            self.ccc_arousal,
            self.p_va,
            self.n_valid.map(|n| n.to_string()).unwrap_or_default()
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FoldTable {
    pub rows: Vec<FoldRow>,
    /// Mean over folds; only present with two or more folds.
    pub mean: Option<FoldRow>,
    pub baseline: FoldRow,
}

/// Per-fold rows, their mean when there is more than one, and the baseline row.
pub fn fold_report(rows: Vec<FoldRow>) -> Result<FoldTable> {
    if rows.is_empty() {
        return Err(Error::Config("fold report needs at least one fold".into()));
    }
    let mean = (rows.len() > 1).then(|| {
        let k = rows.len() as f64;
        let v = rows.iter().map(|r| r.ccc_valence).sum::<f64>() / k;
        let a = rows.iter().map(|r| r.ccc_arousal).sum::<f64>() / k;
        FoldRow {
            fold: "mean".into(),
            ccc_valence: v,
            ccc_arousal: a,
            p_va: rows.iter().map(|r| r.p_va).sum::<f64>() / k,
            n_valid: rows.iter().map(|r| r.n_valid).sum(),
        }
    });
    let baseline = FoldRow {
        fold: "baseline".into(),
        ccc_valence: BASELINE.0,
        ccc_arousal: BASELINE.1,
        p_va: BASELINE.2,
        n_valid: None,
    };
    Ok(FoldTable {
        rows,
        mean,
        baseline,
    })
}

impl FoldTable {
    fn all_rows(&self) -> impl Iterator<Item = &FoldRow> {
        self.rows
            .iter()
            .chain(self.mean.as_ref())
            .chain(std::iter::once(&self.baseline))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(REPORT_CSV_HEADER);
        out.push('\n');
        for r in self.all_rows() {
            out.push_str(&r.to_csv());
            out.push('\n');
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<10} {:>13} {:>13} {:>13}",
            "Fold", "Valence(CCC)", "Arousal(CCC)", "Average(CCC)"
        );
        for (i, r) in self.all_rows().enumerate() {
            if i == self.rows.len() + usize::from(self.mean.is_some()) {
                let _ = writeln!(out, "{}", "-".repeat(52));
            }
            let _ = writeln!(
                out,
                "{:<10} {:>13.4} {:>13.4} {:>13.4}",
                r.fold, r.ccc_valence, r.ccc_arousal, r.p_va
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_fold_has_no_mean() {
        let t = fold_report(vec![FoldRow::from_cccs("0", 0.5, 0.4)]).unwrap();
        assert!(t.mean.is_none());
        assert_eq!(t.to_csv().lines().count(), 3);
    }

    #[test]
    fn empty_is_an_error() {
        assert!(fold_report(vec![]).is_err());
    }

    #[test]
    fn baseline_row() {
        let t = fold_report(vec![FoldRow::from_cccs("0", 0.5, 0.4)]).unwrap();
        assert_eq!(t.baseline.to_csv(), "baseline,0.2400,0.2000,0.2200,");
        let text = t.to_text();
        let line = text.lines().find(|l| l.starts_with("baseline")).unwrap();
        assert_eq!(
            line.split_whitespace().collect::<Vec<_>>(),
            ["baseline", "0.2400", "0.2000", "0.2200"]
        );
    }
}
