//! Item bank, response datasets and outcome derivation.
//!
//! Every other module consumes the types defined here. Item response codes are
//! ordered integers; splits downstream are always of the form `code <= b`.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::{CodeMatrix, MatrixError};

/// Default maximum number of response levels an item may declare.
pub const DEFAULT_MAX_LEVELS: usize = 6;

/// Name of the outcome column in dataset files.
pub const OUTCOME_COLUMN: &str = "Y";

#[derive(Debug, Error)]
pub enum ItemError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("item bank schema violation: {0}")]
    Schema(String),
    #[error("duplicate item id {0:?}")]
    DuplicateItemId(String),
    #[error("item {item:?}: {reason}")]
    InvalidItem { item: String, reason: String },
    #[error("outcome item {0:?} is not declared in the item bank")]
    UnknownOutcomeItem(String),
    #[error("dataset: {0}")]
    Csv(String),
    #[error("dataset: unknown column {0:?}")]
    UnknownColumn(String),
    #[error("dataset: missing column {0:?}")]
    MissingColumn(String),
    #[error("dataset row {row}, column {item:?}: missing value")]
    MissingValue { row: usize, item: String },
    #[error("dataset row {row}, column {item:?}: code {code} is not a declared level")]
    CodeOutOfRange { row: usize, item: String, code: i64 },
    #[error("dataset row {row}, column {item:?}: cannot parse {value:?} as an integer")]
    NotAnInteger { row: usize, item: String, value: String },
    #[error("dataset row {row}: outcome must be 0 or 1, got {value}")]
    NonBinaryOutcome { row: usize, value: i64 },
    #[error("dataset has no rows")]
    Empty,
}

/// One ordered response level of an item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Level {
    pub code: i32,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemDef {
    pub id: String,
    #[serde(default)]
    pub text: String,
    pub levels: Vec<Level>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<String>,
}

impl ItemDef {
    pub fn codes(&self) -> impl Iterator<Item = i32> + '_ {
        self.levels.iter().map(|l| l.code)
    }

    pub fn has_code(&self, code: i32) -> bool {
        self.levels.binary_search_by_key(&code, |l| l.code).is_ok()
    }

    fn validate(&self, max_levels: usize) -> Result<(), ItemError> {
        let bad = |reason: String| ItemError::InvalidItem {
            item: self.id.clone(),
            reason,
        };
        if self.id.trim().is_empty() {
            return Err(ItemError::Schema("item with empty id".into()));
        }
        if self.levels.len() < 2 {
            return Err(bad(format!(
                "needs at least 2 response levels, has {}",
                self.levels.len()
            )));
        }
        if self.levels.len() > max_levels {
            return Err(bad(format!(
                "declares {} levels, maximum is {max_levels}",
                self.levels.len()
            )));
        }
        if self.levels.windows(2).any(|w| w[0].code >= w[1].code) {
            return Err(bad("level codes must be strictly increasing".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum VarType {
    #[default]
    Integer,
}

/// Auxiliary variable used to condition the target population (e.g. age).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditioningVar {
    pub name: String,
    #[serde(rename = "type", default)]
    pub var_type: VarType,
}

/// The universe of administered items.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemBank {
    pub items: Vec<ItemDef>,
    #[serde(default)]
    pub outcome_items: Vec<String>,
    #[serde(default)]
    pub conditioning_vars: Vec<ConditioningVar>,
}

impl ItemBank {
    pub fn new(
        items: Vec<ItemDef>,
        outcome_items: Vec<String>,
        conditioning_vars: Vec<ConditioningVar>,
    ) -> Result<Self, ItemError> {
        let bank = Self {
            items,
            outcome_items,
            conditioning_vars,
        };
        bank.validate(DEFAULT_MAX_LEVELS)?;
        Ok(bank)
    }

    pub fn validate(&self, max_levels: usize) -> Result<(), ItemError> {
        if self.items.is_empty() {
            return Err(ItemError::Schema("item bank declares no items".into()));
        }
        let mut seen = HashSet::new();
        for item in &self.items {
            item.validate(max_levels)?;
            if !seen.insert(item.id.as_str()) {
                return Err(ItemError::DuplicateItemId(item.id.clone()));
            }
        }
        for id in &self.outcome_items {
            if !seen.contains(id.as_str()) {
                return Err(ItemError::UnknownOutcomeItem(id.clone()));
            }
        }
        for var in &self.conditioning_vars {
            if var.name.trim().is_empty() {
                return Err(ItemError::Schema("conditioning variable with empty name".into()));
            }
            if var.name == OUTCOME_COLUMN || !seen.insert(var.name.as_str()) {
                return Err(ItemError::DuplicateItemId(var.name.clone()));
            }
        }
        if self.splitting_items().next().is_none() {
            return Err(ItemError::Schema(
                "every item is an outcome item; nothing left to split on".into(),
            ));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn item(&self, id: &str) -> Option<&ItemDef> {
        self.items.iter().find(|i| i.id == id)
    }

    pub fn is_outcome_item(&self, id: &str) -> bool {
        self.outcome_items.iter().any(|o| o == id)
    }

    /// Items eligible as splitting variables: everything except outcome items,
    /// in bank order.
    pub fn splitting_items(&self) -> impl Iterator<Item = &ItemDef> + '_ {
        self.items.iter().filter(|i| !self.is_outcome_item(&i.id))
    }

    pub fn splitting_item_ids(&self) -> Vec<String> {
        self.splitting_items().map(|i| i.id.clone()).collect()
    }

    pub fn conditioning_names(&self) -> Vec<String> {
        self.conditioning_vars.iter().map(|v| v.name.clone()).collect()
    }

    pub fn from_json(text: &str) -> Result<Self, ItemError> {
        let bank: ItemBank =
            serde_json::from_str(text).map_err(|e| ItemError::Schema(e.to_string()))?;
        bank.validate(DEFAULT_MAX_LEVELS)?;
        Ok(bank)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("item bank serializes")
    }
}

pub fn load_item_bank(path: impl AsRef<Path>) -> Result<ItemBank, ItemError> {
    let path = path.as_ref();
    let mut text = String::new();
    File::open(path)
        .and_then(|f| BufReader::new(f).read_to_string(&mut text))
        .map_err(|source| ItemError::Io {
            path: path.display().to_string(),
            source,
        })?;
    ItemBank::from_json(&text)
}

/// Binary risk status.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RiskClass {
    NotAtRisk = 0,
    AtRisk = 1,
}

impl RiskClass {
    pub fn from_bool(at_risk: bool) -> Self {
        if at_risk {
            RiskClass::AtRisk
        } else {
            RiskClass::NotAtRisk
        }
    }

    pub fn value(self) -> u8 {
        self as u8
    }

    pub fn label(self) -> &'static str {
        match self {
            RiskClass::NotAtRisk => "not at-risk",
            RiskClass::AtRisk => "at-risk",
        }
    }
}

/// At-risk iff any outcome item was answered "yes".
pub fn derive_outcome(outcome_item_responses: &[u8]) -> RiskClass {
    RiskClass::from_bool(outcome_item_responses.iter().any(|&v| v == 1))
}

/// Complete-case response data.
///
/// `responses` holds one row per subject with a code for every splitting item
/// (bank order); `conditioning` holds the auxiliary variables in declaration
/// order.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub item_ids: Vec<String>,
    pub conditioning_names: Vec<String>,
    pub responses: Vec<Vec<i32>>,
    pub outcomes: Vec<u8>,
    pub conditioning: Vec<Vec<i32>>,
    pub row_ids: Vec<String>,
}

impl Dataset {
    pub fn n_rows(&self) -> usize {
        self.responses.len()
    }

    pub fn n_items(&self) -> usize {
        self.item_ids.len()
    }

    /// Column names of the augmented vector (items then conditioning vars).
    pub fn augmented_names(&self) -> Vec<String> {
        self.item_ids
            .iter()
            .chain(&self.conditioning_names)
            .cloned()
            .collect()
    }

    /// Row `i` of the augmented vector (items then conditioning vars).
    pub fn augmented_row(&self, i: usize) -> Vec<i32> {
        let mut row = self.responses[i].clone();
        row.extend_from_slice(&self.conditioning[i]);
        row
    }

    /// Items then conditioning variables as a code matrix.
    pub fn augmented_matrix(&self) -> Result<CodeMatrix, MatrixError> {
        let rows: Vec<Vec<i32>> = (0..self.n_rows()).map(|i| self.augmented_row(i)).collect();
        CodeMatrix::from_rows(self.augmented_names(), &rows)
    }

    pub fn base_rate(&self) -> f64 {
        self.outcomes.iter().map(|&y| y as f64).sum::<f64>() / self.n_rows().max(1) as f64
    }

    /// Keep only rows for which `keep` returns true.
    pub fn filter_rows(&self, mut keep: impl FnMut(usize) -> bool) -> Dataset {
        let idx: Vec<usize> = (0..self.n_rows()).filter(|&i| keep(i)).collect();
        Dataset {
            item_ids: self.item_ids.clone(),
            conditioning_names: self.conditioning_names.clone(),
            responses: idx.iter().map(|&i| self.responses[i].clone()).collect(),
            outcomes: idx.iter().map(|&i| self.outcomes[i]).collect(),
            conditioning: idx.iter().map(|&i| self.conditioning[i].clone()).collect(),
            row_ids: idx.iter().map(|&i| self.row_ids[i].clone()).collect(),
        }
    }

    /// Serialize in the dataset CSV layout (items, `Y`, conditioning columns).
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let header: Vec<&str> = self
            .item_ids
            .iter()
            .map(String::as_str)
            .chain(std::iter::once(OUTCOME_COLUMN))
            .chain(self.conditioning_names.iter().map(String::as_str))
            .collect();
        out.push_str(&header.join(","));
        out.push('\n');
        for i in 0..self.n_rows() {
            let cells: Vec<String> = self.responses[i]
                .iter()
                .map(|c| c.to_string())
                .chain(std::iter::once(self.outcomes[i].to_string()))
                .chain(self.conditioning[i].iter().map(|c| c.to_string()))
                .collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

enum ColumnRole {
    Item(usize),
    OutcomeItem(usize),
    Outcome,
    Conditioning(usize),
    RowId,
}

pub fn load_dataset(path: impl AsRef<Path>, bank: &ItemBank) -> Result<Dataset, ItemError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| ItemError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_dataset(file, bank)
}

/// Parse a dataset CSV. The outcome column `Y` may be omitted when the bank
/// declares outcome items, in which case `Y` is derived from their 0/1 codes.
/// An optional `id` column supplies row identifiers.
pub fn read_dataset<R: Read>(reader: R, bank: &ItemBank) -> Result<Dataset, ItemError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| ItemError::Csv(e.to_string()))?
        .clone();

    let split_ids = bank.splitting_item_ids();
    let cond_names = bank.conditioning_names();
    let mut roles = Vec::with_capacity(headers.len());
    let mut seen = HashSet::new();
    for h in headers.iter() {
        if !seen.insert(h.to_string()) {
            return Err(ItemError::Csv(format!("duplicate column {h:?}")));
        }
        let role = if h == OUTCOME_COLUMN {
            ColumnRole::Outcome
        } else if h == "id" {
            ColumnRole::RowId
        } else if let Some(j) = split_ids.iter().position(|s| s == h) {
            ColumnRole::Item(j)
        } else if let Some(j) = bank.outcome_items.iter().position(|s| s == h) {
            ColumnRole::OutcomeItem(j)
        } else if let Some(j) = cond_names.iter().position(|s| s == h) {
            ColumnRole::Conditioning(j)
        } else {
            return Err(ItemError::UnknownColumn(h.to_string()));
        };
        roles.push(role);
    }
    for id in split_ids.iter().chain(&cond_names) {
        if !seen.contains(id) {
            return Err(ItemError::MissingColumn(id.clone()));
        }
    }
    let has_y = seen.contains(OUTCOME_COLUMN);
    let derive_y = !has_y && !bank.outcome_items.is_empty();
    if !has_y && !derive_y {
        return Err(ItemError::MissingColumn(OUTCOME_COLUMN.into()));
    }
    if derive_y {
        for id in &bank.outcome_items {
            if !seen.contains(id) {
                return Err(ItemError::MissingColumn(id.clone()));
            }
        }
    }

    let defs: HashMap<&str, &ItemDef> = bank.items.iter().map(|i| (i.id.as_str(), i)).collect();
    let mut data = Dataset {
        item_ids: split_ids.clone(),
        conditioning_names: cond_names.clone(),
        responses: Vec::new(),
        outcomes: Vec::new(),
        conditioning: Vec::new(),
        row_ids: Vec::new(),
    };

    for (r, record) in rdr.records().enumerate() {
        let row = r + 1;
        let record = record.map_err(|e| ItemError::Csv(format!("row {row}: {e}")))?;
        let mut responses = vec![0i32; split_ids.len()];
        let mut conditioning = vec![0i32; cond_names.len()];
        let mut outcome_items = vec![0u8; bank.outcome_items.len()];
        let mut y = None;
        let mut row_id = None;
        for (col, (cell, role)) in record.iter().zip(&roles).enumerate() {
            let name = &headers[col];
            if let ColumnRole::RowId = role {
                row_id = Some(cell.to_string());
                continue;
            }
            if cell.is_empty() || cell.eq_ignore_ascii_case("na") {
                return Err(ItemError::MissingValue {
                    row,
                    item: name.to_string(),
                });
            }
            let value: i64 = cell.parse().map_err(|_| ItemError::NotAnInteger {
                row,
                item: name.to_string(),
                value: cell.to_string(),
            })?;
            let out_of_range = || ItemError::CodeOutOfRange {
                row,
                item: name.to_string(),
                code: value,
            };
            match role {
                ColumnRole::Item(j) => {
                    let code = i32::try_from(value).map_err(|_| out_of_range())?;
                    if !defs[name].has_code(code) {
                        return Err(out_of_range());
                    }
                    responses[*j] = code;
                }
                ColumnRole::OutcomeItem(j) => {
                    let code = i32::try_from(value).map_err(|_| out_of_range())?;
                    if !defs[name].has_code(code) {
                        return Err(out_of_range());
                    }
                    if derive_y && code != 0 && code != 1 {
                        return Err(ItemError::NonBinaryOutcome { row, value });
                    }
                    outcome_items[*j] = code as u8;
                }
                ColumnRole::Outcome => {
                    if value != 0 && value != 1 {
                        return Err(ItemError::NonBinaryOutcome { row, value });
                    }
                    y = Some(value as u8);
                }
                ColumnRole::Conditioning(j) => {
                    conditioning[*j] = i32::try_from(value).map_err(|_| out_of_range())?;
                }
                ColumnRole::RowId => unreachable!(),
            }
        }
        let y = match y {
            Some(y) => y,
            None => derive_outcome(&outcome_items).value(),
        };
        data.responses.push(responses);
        data.conditioning.push(conditioning);
        data.outcomes.push(y);
        data.row_ids.push(row_id.unwrap_or_else(|| row.to_string()));
    }
    if data.responses.is_empty() {
        return Err(ItemError::Empty);
    }
    Ok(data)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn likert(id: &str, n: i32) -> ItemDef {
        ItemDef {
            id: id.into(),
            text: format!("Prompt for {id}"),
            levels: (1..=n)
                .map(|c| Level {
                    code: c,
                    label: c.to_string(),
                })
                .collect(),
            scale: None,
        }
    }

    fn bank2() -> ItemBank {
        ItemBank::new(
            vec![likert("Q1", 5), likert("Q2", 5)],
            vec![],
            vec![ConditioningVar {
                name: "age".into(),
                var_type: VarType::Integer,
            }],
        )
        .unwrap()
    }

    #[test]
    fn minimal_bank_parses() {
        let json = r#"{"items":[
            {"id":"Q1","text":"a","levels":[{"code":1,"label":"1"},{"code":2,"label":"2"},{"code":3,"label":"3"},{"code":4,"label":"4"},{"code":5,"label":"5"}]},
            {"id":"Q2","text":"b","levels":[{"code":1,"label":"1"},{"code":2,"label":"2"},{"code":3,"label":"3"},{"code":4,"label":"4"},{"code":5,"label":"5"}]}
        ],"outcome_items":[],"conditioning_vars":[]}"#;
        let bank = ItemBank::from_json(json).unwrap();
        assert_eq!(bank.len(), 2);
    }

    #[test]
    fn large_bank() {
        let items = (0..173).map(|i| likert(&format!("I{i}"), 4)).collect();
        let bank = ItemBank::new(items, vec![], vec![]).unwrap();
        assert_eq!(bank.len(), 173);
        let back = ItemBank::from_json(&bank.to_json()).unwrap();
        assert_eq!(back, bank);
    }

    #[test]
    fn duplicate_id_rejected() {
        let err = ItemBank::new(vec![likert("IRf3", 4), likert("IRf3", 4)], vec![], vec![])
            .unwrap_err();
        assert!(matches!(err, ItemError::DuplicateItemId(id) if id == "IRf3"));
    }

    #[test]
    fn level_rules() {
        let mut one = likert("A", 1);
        let err = ItemBank::new(vec![one.clone()], vec![], vec![]).unwrap_err();
        assert!(matches!(err, ItemError::InvalidItem { .. }));
        one.levels.clear();
        assert!(ItemBank::new(vec![one], vec![], vec![]).is_err());
        assert!(ItemBank::new(vec![likert("B", 7)], vec![], vec![]).is_err());
        let mut unordered = likert("C", 3);
        unordered.levels.swap(0, 1);
        assert!(ItemBank::new(vec![unordered], vec![], vec![]).is_err());
    }

    #[test]
    fn outcome_items_excluded_from_splitting() {
        let bank = ItemBank::new(
            vec![likert("Q1", 4), likert("V1", 2), likert("Q2", 4)],
            vec!["V1".into()],
            vec![],
        )
        .unwrap();
        assert_eq!(bank.splitting_item_ids(), vec!["Q1", "Q2"]);
        let err = ItemBank::new(vec![likert("Q1", 3)], vec!["V9".into()], vec![]).unwrap_err();
        assert!(matches!(err, ItemError::UnknownOutcomeItem(_)));
    }

    #[test]
    fn derive_outcome_is_max() {
        assert_eq!(derive_outcome(&[0, 0, 0]), RiskClass::NotAtRisk);
        assert_eq!(derive_outcome(&[0, 1, 0]), RiskClass::AtRisk);
        assert_eq!(derive_outcome(&[1, 1, 1]), RiskClass::AtRisk);
        for bits in 0u8..8 {
            let v = [bits & 1, (bits >> 1) & 1, (bits >> 2) & 1];
            assert_eq!(derive_outcome(&v).value(), *v.iter().max().unwrap());
        }
    }

    #[test]
    fn dataset_valid() {
        let csv = "Q1,Q2,Y,age\n1,2,0,12\n5,5,1,16\n3,1,0,14\n2,4,1,18\n";
        let ds = read_dataset(csv.as_bytes(), &bank2()).unwrap();
        assert_eq!(ds.n_rows(), 4);
        assert_eq!(ds.responses[1], vec![5, 5]);
        assert_eq!(ds.outcomes, vec![0, 1, 0, 1]);
        assert_eq!(ds.conditioning[3], vec![18]);
        let back = read_dataset(ds.to_csv().as_bytes(), &bank2()).unwrap();
        assert_eq!(back.responses, ds.responses);
    }

    #[test]
    fn dataset_code_out_of_range() {
        let csv = "Q1,Q2,Y,age\n1,2,0,12\n7,5,1,16\n";
        let err = read_dataset(csv.as_bytes(), &bank2()).unwrap_err();
        assert!(
            matches!(err, ItemError::CodeOutOfRange { row: 2, ref item, code: 7 } if item == "Q1"),
            "{err}"
        );
    }

    #[test]
    fn dataset_missing_cell() {
        let csv = "Q1,Q2,Y,age\n1,,0,12\n";
        let err = read_dataset(csv.as_bytes(), &bank2()).unwrap_err();
        assert!(matches!(err, ItemError::MissingValue { row: 1, ref item } if item == "Q2"));
    }

    #[test]
    fn dataset_unknown_and_missing_columns() {
        let err = read_dataset("Q1,Q2,Y,age,Z\n1,1,0,1,1\n".as_bytes(), &bank2()).unwrap_err();
        assert!(matches!(err, ItemError::UnknownColumn(c) if c == "Z"));
        let err = read_dataset("Q1,Y,age\n1,0,1\n".as_bytes(), &bank2()).unwrap_err();
        assert!(matches!(err, ItemError::MissingColumn(c) if c == "Q2"));
        let err = read_dataset("Q1,Q2,Y,age\n1,1,2,1\n".as_bytes(), &bank2()).unwrap_err();
        assert!(matches!(err, ItemError::NonBinaryOutcome { .. }));
    }

    #[test]
    fn outcome_derived_from_outcome_items() {
        let mut v = likert("V1", 2);
        v.levels[0].code = 0;
        v.levels[1].code = 1;
        let mut v2 = v.clone();
        v2.id = "V2".into();
        let bank = ItemBank::new(
            vec![likert("Q1", 3), v, v2],
            vec!["V1".into(), "V2".into()],
            vec![],
        )
        .unwrap();
        let ds = read_dataset("Q1,V1,V2\n1,0,0\n2,0,1\n3,1,1\n".as_bytes(), &bank).unwrap();
        assert_eq!(ds.outcomes, vec![0, 1, 1]);
        assert_eq!(ds.item_ids, vec!["Q1"]);
    }
}
