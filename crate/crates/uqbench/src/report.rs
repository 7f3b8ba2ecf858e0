//! The evaluation report and its plain-text rendering.

use std::collections::BTreeMap;
use std::fmt::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use uqbench_core::metrics::{PrrResult, TieBreak};
use uqbench_core::{Level, NormalizerKind};

use crate::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrrSummary {
    pub prr: f64,
    pub auc_unc: f64,
    pub auc_oracle: f64,
    pub auc_rnd: f64,
    /// `(rejected fraction, mean retained quality)` for the method's ordering.
    pub curve: Vec<(f64, f64)>,
}

impl From<PrrResult> for PrrSummary {
    fn from(r: PrrResult) -> Self {
        Self { prr: r.prr, auc_unc: r.auc_unc, auc_oracle: r.auc_oracle, auc_rnd: r.auc_rnd, curve: r.curve.points }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: String,
    pub level: Level,
    /// Scores that entered the metrics.
    pub scored: usize,
    pub skipped: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prr: Option<PrrSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub roc_auc: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pr_auc: Option<f64>,
    /// normalizer id → MSE between calibrated confidence and quality.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub calibration_mse: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub errors: Vec<String>,
}

impl MethodReport {
    pub fn new(method: String, level: Level) -> Self {
        Self {
            method,
            level,
            scored: 0,
            skipped: 0,
            prr: None,
            roc_auc: None,
            pr_auc: None,
            calibration_mse: BTreeMap::new(),
            errors: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub quality_metric: String,
    pub max_rejection: f64,
    pub tie_break: TieBreak,
    pub records: usize,
    /// Score-file entries for lines that could not be used as records.
    pub rejected_lines: usize,
    pub methods: Vec<MethodReport>,
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_owned(), |v| format!("{v:.4}"))
}

impl EvalReport {
    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format(path, e))
    }

    pub fn method(&self, id: &str) -> Option<&MethodReport> {
        self.methods.iter().find(|m| m.method == id)
    }

    pub fn render_table(&self) -> String {
        let mut header = vec!["method".to_owned(), "level".into(), "n".into(), "skip".into()];
        header.extend(["PRR", "ROC-AUC", "PR-AUC"].map(String::from));
        header.extend(NormalizerKind::ALL.iter().map(|k| format!("MSE {}", k.id())));
        let rows: Vec<Vec<String>> = self
            .methods
            .iter()
            .map(|m| {
                let mut row = vec![
                    m.method.clone(),
                    format!("{:?}", m.level).to_lowercase(),
                    m.scored.to_string(),
                    m.skipped.to_string(),
                    cell(m.prr.as_ref().map(|p| p.prr)),
                    cell(m.roc_auc),
                    cell(m.pr_auc),
                ];
                row.extend(NormalizerKind::ALL.iter().map(|k| cell(m.calibration_mse.get(k.id()).copied())));
                row
            })
            .collect();
        let widths: Vec<usize> = (0..header.len())
            .map(|c| rows.iter().map(|r| r[c].len()).chain([header[c].len()]).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        let _ = writeln!(
            out,
            "quality metric: {}  records: {}  max rejection: {}",
            self.quality_metric, self.records, self.max_rejection
        );
        for row in std::iter::once(&header).chain(&rows) {
            let cells: Vec<String> = row
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(c, (v, w))| if c == 0 { format!("{v:<w$}") } else { format!("{v:>w$}") })
                .collect();
            let _ = writeln!(out, "{}", cells.join("  ").trim_end());
        }
        for m in self.methods.iter().filter(|m| !m.errors.is_empty()) {
            for e in &m.errors {
                let _ = writeln!(out, "{}: {e}", m.method);
            }
        }
        out
    }
}
