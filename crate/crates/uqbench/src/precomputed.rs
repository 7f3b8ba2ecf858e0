//! Externally computed sample-similarity matrices.
//!
//! One JSON object per line: `{"record_id": ..., "kind": ..., "entries": [...]}`
//! with the `K × K` entries in row-major order.

use std::collections::HashMap;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};
use uqbench_core::catalog::MatrixStore;
use uqbench_core::linalg::Matrix;
use uqbench_core::SimilarityMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixLine {
    pub record_id: String,
    #[serde(default)]
    pub kind: Option<String>,
    pub entries: Vec<f64>,
}

#[derive(Debug, thiserror::Error)]
pub enum MatrixFileError {
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Invalid { line: usize, message: String },
}

#[derive(Debug, Clone, Default)]
pub struct PrecomputedMatrices {
    matrices: HashMap<String, SimilarityMatrix>,
}

impl PrecomputedMatrices {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, MatrixFileError> {
        let file = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut matrices = HashMap::new();
        for (i, line) in file.lines().enumerate() {
            let line_no = i + 1;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let invalid = |message: String| MatrixFileError::Invalid { line: line_no, message };
            let parsed: MatrixLine = serde_json::from_str(&line).map_err(|e| invalid(e.to_string()))?;
            let k = (parsed.entries.len() as f64).sqrt().round() as usize;
            if k * k != parsed.entries.len() || k == 0 {
                return Err(invalid(format!("{} entries do not form a square matrix", parsed.entries.len())));
            }
            let entries = Matrix::from_row_major(k, k, parsed.entries).expect("length checked above");
            let matrix = SimilarityMatrix::new(entries).map_err(|e| invalid(e.to_string()))?;
            if matrices.insert(parsed.record_id.clone(), matrix).is_some() {
                return Err(invalid(format!("duplicate matrix for record {}", parsed.record_id)));
            }
        }
        Ok(Self { matrices })
    }

    pub fn insert(&mut self, record_id: impl Into<String>, matrix: SimilarityMatrix) {
        self.matrices.insert(record_id.into(), matrix);
    }

    pub fn len(&self) -> usize {
        self.matrices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrices.is_empty()
    }
}

impl MatrixStore for PrecomputedMatrices {
    fn matrix(&self, record_id: &str) -> Option<SimilarityMatrix> {
        self.matrices.get(record_id).cloned()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loads_square_symmetric_matrices() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        std::fs::write(
            &path,
            "{\"record_id\":\"a\",\"kind\":\"nli_entail\",\"entries\":[1,0.5,0.5,1]}\n\n{\"record_id\":\"b\",\"entries\":[1]}\n",
        )
        .unwrap();
        let store = PrecomputedMatrices::load(&path).unwrap();
        assert_eq!(store.len(), 2);
        assert_eq!(store.matrix("a").unwrap().get(0, 1), 0.5);
        assert!(store.matrix("c").is_none());

        std::fs::write(&path, "{\"record_id\":\"a\",\"entries\":[1,0.5,1]}\n").unwrap();
        assert!(matches!(PrecomputedMatrices::load(&path), Err(MatrixFileError::Invalid { line: 1, .. })));
    }
}
