//! Columnar storage for integer-coded responses.
//!
//! Each column keeps its sorted support (distinct codes) and stores every cell
//! as a one-byte index into it, so a million synthetic rows over a few hundred
//! items stay compact.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MatrixError {
    #[error("column {0:?} not present")]
    UnknownColumn(String),
    #[error("column {column:?} has {size} distinct codes; at most 256 supported")]
    SupportTooLarge { column: String, size: usize },
    #[error("row {row}: code {code} not in the support of column {column:?}")]
    CodeNotInSupport { row: usize, column: String, code: i32 },
    #[error("row {row} has {got} cells, expected {expected}")]
    RaggedRow { row: usize, got: usize, expected: usize },
    #[error("column layouts differ")]
    LayoutMismatch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodeMatrix {
    names: Vec<String>,
    supports: Vec<Vec<i32>>,
    columns: Vec<Vec<u8>>,
    n_rows: usize,
}

impl CodeMatrix {
    /// Empty matrix with the given column layout.
    pub fn with_layout(names: Vec<String>, supports: Vec<Vec<i32>>) -> Result<Self, MatrixError> {
        assert_eq!(names.len(), supports.len());
        for (name, s) in names.iter().zip(&supports) {
            if s.len() > 256 {
                return Err(MatrixError::SupportTooLarge {
                    column: name.clone(),
                    size: s.len(),
                });
            }
            debug_assert!(s.windows(2).all(|w| w[0] < w[1]));
        }
        let columns = vec![Vec::new(); names.len()];
        Ok(Self {
            names,
            supports,
            columns,
            n_rows: 0,
        })
    }

    /// Build from row-major codes, taking each column's support from the data.
    pub fn from_rows(names: Vec<String>, rows: &[Vec<i32>]) -> Result<Self, MatrixError> {
        let p = names.len();
        let mut supports = vec![Vec::new(); p];
        for (r, row) in rows.iter().enumerate() {
            if row.len() != p {
                return Err(MatrixError::RaggedRow {
                    row: r,
                    got: row.len(),
                    expected: p,
                });
            }
            for (j, &c) in row.iter().enumerate() {
                supports[j].push(c);
            }
        }
        for s in &mut supports {
            s.sort_unstable();
            s.dedup();
        }
        let mut m = Self::with_layout(names, supports)?;
        for row in rows {
            m.push_codes(row)?;
        }
        Ok(m)
    }

    pub fn push_codes(&mut self, row: &[i32]) -> Result<(), MatrixError> {
        if row.len() != self.n_cols() {
            return Err(MatrixError::RaggedRow {
                row: self.n_rows,
                got: row.len(),
                expected: self.n_cols(),
            });
        }
        let mut levels = Vec::with_capacity(row.len());
        for (j, &c) in row.iter().enumerate() {
            let idx = self.supports[j]
                .binary_search(&c)
                .map_err(|_| MatrixError::CodeNotInSupport {
                    row: self.n_rows,
                    column: self.names[j].clone(),
                    code: c,
                })?;
            levels.push(idx as u8);
        }
        self.push_levels(&levels);
        Ok(())
    }

    /// Append a row given as level indices. Panics on out-of-support indices.
    pub fn push_levels(&mut self, levels: &[u8]) {
        assert_eq!(levels.len(), self.n_cols());
        for (j, &l) in levels.iter().enumerate() {
            assert!((l as usize) < self.supports[j].len());
            self.columns[j].push(l);
        }
        self.n_rows += 1;
    }

    pub fn append(&mut self, other: &CodeMatrix) -> Result<(), MatrixError> {
        if self.names != other.names || self.supports != other.supports {
            return Err(MatrixError::LayoutMismatch);
        }
        for (a, b) in self.columns.iter_mut().zip(&other.columns) {
            a.extend_from_slice(b);
        }
        self.n_rows += other.n_rows;
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn supports(&self) -> &[Vec<i32>] {
        &self.supports
    }

    pub fn support(&self, col: usize) -> &[i32] {
        &self.supports[col]
    }

    pub fn column_levels(&self, col: usize) -> &[u8] {
        &self.columns[col]
    }

    pub fn level(&self, row: usize, col: usize) -> u8 {
        self.columns[col][row]
    }

    pub fn code(&self, row: usize, col: usize) -> i32 {
        self.supports[col][self.columns[col][row] as usize]
    }

    pub fn row_codes(&self, row: usize) -> Vec<i32> {
        (0..self.n_cols()).map(|j| self.code(row, j)).collect()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Indices of the named columns, in the given order.
    pub fn column_indices(&self, names: &[String]) -> Result<Vec<usize>, MatrixError> {
        names
            .iter()
            .map(|n| {
                self.column_index(n)
                    .ok_or_else(|| MatrixError::UnknownColumn(n.clone()))
            })
            .collect()
    }

    /// Copy of the named columns.
    pub fn select_columns(&self, names: &[String]) -> Result<CodeMatrix, MatrixError> {
        let idx = self.column_indices(names)?;
        Ok(CodeMatrix {
            names: names.to_vec(),
            supports: idx.iter().map(|&j| self.supports[j].clone()).collect(),
            columns: idx.iter().map(|&j| self.columns[j].clone()).collect(),
            n_rows: self.n_rows,
        })
    }

    /// Copy of a contiguous row range.
    pub fn slice_rows(&self, range: std::ops::Range<usize>) -> CodeMatrix {
        CodeMatrix {
            names: self.names.clone(),
            supports: self.supports.clone(),
            columns: self.columns.iter().map(|c| c[range.clone()].to_vec()).collect(),
            n_rows: range.len(),
        }
    }

    /// Copy of an arbitrary set of rows.
    pub fn take_rows(&self, rows: &[usize]) -> CodeMatrix {
        CodeMatrix {
            names: self.names.clone(),
            supports: self.supports.clone(),
            columns: self
                .columns
                .iter()
                .map(|c| rows.iter().map(|&r| c[r]).collect())
                .collect(),
            n_rows: rows.len(),
        }
    }

    /// Per-column code lookup tables, for hot loops that compare codes.
    pub fn code_tables(&self) -> Vec<Vec<i32>> {
        self.supports.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_codes() {
        let rows = vec![vec![1, 10], vec![3, 10], vec![1, 20]];
        let m = CodeMatrix::from_rows(vec!["a".into(), "b".into()], &rows).unwrap();
        assert_eq!(m.support(0), &[1, 3]);
        assert_eq!(m.support(1), &[10, 20]);
        for (r, row) in rows.iter().enumerate() {
            assert_eq!(&m.row_codes(r), row);
        }
        let b = m.select_columns(&["b".into()]).unwrap();
        assert_eq!(b.row_codes(2), vec![20]);
        assert_eq!(m.slice_rows(1..3).row_codes(0), vec![3, 10]);
        assert_eq!(m.take_rows(&[2, 0]).row_codes(1), vec![1, 10]);
    }

    #[test]
    fn rejects_bad_rows() {
        let mut m = CodeMatrix::from_rows(vec!["a".into()], &[vec![1], vec![2]]).unwrap();
        assert!(matches!(
            m.push_codes(&[5]),
            Err(MatrixError::CodeNotInSupport { code: 5, .. })
        ));
        assert!(matches!(m.push_codes(&[1, 2]), Err(MatrixError::RaggedRow { .. })));
        assert!(m.select_columns(&["zz".into()]).is_err());
    }
}
