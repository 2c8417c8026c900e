//! Portable `adaptive-test/v1` documents and tree-driven administration.
//!
//! A deployment document is self-contained: it embeds the text and response
//! levels of every item the tree asks, the node list, the cutoff and
//! provenance hashes. [`Session`] routes one subject through a document,
//! asking each item at most once.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::items::{ItemBank, Level};
use crate::tree::{unique_items_per_path, Constraint, RegressionTree, Split, TreeMetadata, TreeNode};

pub const SCHEMA: &str = "adaptive-test/v1";

#[derive(Debug, Error)]
pub enum DeployError {
    #[error("item {0:?} is not in the item bank")]
    UnknownItem(String),
    #[error("threshold {0} is outside [0, 1]")]
    InvalidThreshold(f64),
    #[error("value is not serializable: {0}")]
    Unserializable(String),
    #[error("corrupt deployment document: {0}")]
    Corrupt(String),
    #[error("response code {code} is not a level of item {item:?}")]
    InvalidResponse { item: String, code: i32 },
    #[error("session is already finished")]
    Finished,
    #[error("session is not finished")]
    Unfinished,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeployedItem {
    pub id: String,
    pub text: String,
    pub levels: Vec<Level>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DeployedNode {
    Split {
        id: usize,
        item: String,
        cutpoint: f64,
        left: usize,
        right: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        value: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n: Option<usize>,
    },
    Leaf {
        id: usize,
        leaf_prob: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n: Option<usize>,
    },
}

impl DeployedNode {
    pub fn id(&self) -> usize {
        match self {
            DeployedNode::Split { id, .. } | DeployedNode::Leaf { id, .. } => *id,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Provenance {
    /// sha256 of the canonical node list.
    pub tree_hash: String,
    #[serde(default)]
    pub training_hash: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constraint: Option<Constraint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w: Option<f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub inputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeploymentFile {
    pub schema: String,
    pub items: Vec<DeployedItem>,
    pub nodes: Vec<DeployedNode>,
    pub threshold: f64,
    /// Largest number of distinct items any session can be asked.
    pub maxipp: usize,
    pub provenance: Provenance,
}

/// Extra provenance recorded alongside the tree's own metadata.
#[derive(Debug, Clone, Default)]
pub struct ExportContext {
    pub w: Option<f64>,
    pub inputs: BTreeMap<String, String>,
}

fn hash_nodes(nodes: &[DeployedNode]) -> Result<String, DeployError> {
    let bytes = serde_json::to_vec(nodes).map_err(|e| DeployError::Unserializable(e.to_string()))?;
    Ok(hex::encode(Sha256::digest(bytes)))
}

/// Build the deployment document for `tree` with cutoff `threshold`.
pub fn export_document(
    tree: &RegressionTree,
    bank: &ItemBank,
    threshold: f64,
    ctx: &ExportContext,
) -> Result<DeploymentFile, DeployError> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(DeployError::InvalidThreshold(threshold));
    }
    let used = tree.split_items();
    let items = used
        .iter()
        .map(|id| {
            let def = bank.item(id).ok_or_else(|| DeployError::UnknownItem(id.clone()))?;
            Ok(DeployedItem {
                id: def.id.clone(),
                text: def.text.clone(),
                levels: def.levels.clone(),
            })
        })
        .collect::<Result<Vec<_>, DeployError>>()?;
    let mut nodes = Vec::with_capacity(tree.nodes.len());
    for (id, node) in tree.nodes.iter().enumerate() {
        let check = |v: f64| {
            if v.is_finite() {
                Ok(v)
            } else {
                Err(DeployError::Unserializable(format!("non-finite value at node {id}")))
            }
        };
        nodes.push(match node.split {
            Some(s) => DeployedNode::Split {
                id,
                item: tree.items[s.item].clone(),
                cutpoint: check(s.cutpoint)?,
                left: s.left,
                right: s.right,
                value: Some(check(node.value)?),
                n: Some(node.n),
            },
            None => DeployedNode::Leaf {
                id,
                leaf_prob: check(node.value)?,
                n: Some(node.n),
            },
        });
    }
    let tree_hash = hash_nodes(&nodes)?;
    Ok(DeploymentFile {
        schema: SCHEMA.into(),
        items,
        nodes,
        threshold,
        maxipp: unique_items_per_path(tree),
        provenance: Provenance {
            tree_hash,
            training_hash: tree.metadata.training_hash.clone(),
            seed: tree.metadata.seed,
            constraint: Some(tree.constraint),
            w: ctx.w,
            inputs: ctx.inputs.clone(),
        },
    })
}

/// Write the deployment document for `tree` to `path`.
pub fn export_tree(
    tree: &RegressionTree,
    bank: &ItemBank,
    threshold: f64,
    ctx: &ExportContext,
    path: impl AsRef<Path>,
) -> Result<DeploymentFile, DeployError> {
    let doc = export_document(tree, bank, threshold, ctx)?;
    std::fs::write(path, doc.to_json()?)?;
    Ok(doc)
}

impl DeploymentFile {
    pub fn to_json(&self) -> Result<String, DeployError> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// Parse and validate a document.
    pub fn from_json(text: &str) -> Result<Self, DeployError> {
        let doc: DeploymentFile =
            serde_json::from_str(text).map_err(|e| DeployError::Corrupt(e.to_string()))?;
        doc.validate()?;
        Ok(doc)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DeployError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn item(&self, id: &str) -> Option<&DeployedItem> {
        self.items.iter().find(|i| i.id == id)
    }

    pub fn n_internal(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, DeployedNode::Split { .. }))
            .count()
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.len() - self.n_internal()
    }

    /// Structural checks: schema tag, dense ids, a single tree rooted at 0,
    /// known items, probabilities in range, and a consistent maxipp.
    pub fn validate(&self) -> Result<(), DeployError> {
        let bad = |m: String| Err(DeployError::Corrupt(m));
        if self.schema != SCHEMA {
            return bad(format!("schema {:?}, expected {SCHEMA:?}", self.schema));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return bad(format!("threshold {} outside [0, 1]", self.threshold));
        }
        if self.nodes.is_empty() {
            return bad("no nodes".into());
        }
        let n = self.nodes.len();
        let mut parents = vec![0usize; n];
        for (pos, node) in self.nodes.iter().enumerate() {
            if node.id() != pos {
                return bad(format!("node at position {pos} has id {}", node.id()));
            }
            match node {
                DeployedNode::Split {
                    item, cutpoint, left, right, ..
                } => {
                    if self.item(item).is_none() {
                        return bad(format!("node {pos} splits on undeclared item {item:?}"));
                    }
                    if !cutpoint.is_finite() {
                        return bad(format!("node {pos} has a non-finite cutpoint"));
                    }
                    for &c in [left, right] {
                        if c >= n || c == 0 || c == pos {
                            return bad(format!("node {pos} has invalid child {c}"));
                        }
                        parents[c] += 1;
                    }
                }
                DeployedNode::Leaf { leaf_prob, .. } => {
                    if !(0.0..=1.0).contains(leaf_prob) {
                        return bad(format!("leaf {pos} probability {leaf_prob} outside [0, 1]"));
                    }
                }
            }
        }
        if parents.iter().skip(1).any(|&p| p != 1) {
            return bad("nodes do not form a single tree".into());
        }
        // Each non-root node has one parent and the root has none, so the
        // graph is a tree iff every node is reachable from the root.
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        while let Some(i) = stack.pop() {
            if std::mem::replace(&mut seen[i], true) {
                return bad("cycle in node graph".into());
            }
            if let DeployedNode::Split { left, right, .. } = &self.nodes[i] {
                stack.push(*left);
                stack.push(*right);
            }
        }
        if seen.iter().any(|s| !s) {
            return bad("unreachable nodes".into());
        }
        for it in &self.items {
            if it.levels.windows(2).any(|w| w[0].code >= w[1].code) || it.levels.is_empty() {
                return bad(format!("item {:?} has invalid levels", it.id));
            }
        }
        let tree = self.to_tree_unchecked();
        let observed = unique_items_per_path(&tree);
        if observed > self.maxipp {
            return bad(format!("maxipp {} but a path uses {observed} items", self.maxipp));
        }
        Ok(())
    }

    fn to_tree_unchecked(&self) -> RegressionTree {
        let index: HashMap<&str, usize> = self
            .items
            .iter()
            .enumerate()
            .map(|(i, it)| (it.id.as_str(), i))
            .collect();
        let nodes = self
            .nodes
            .iter()
            .map(|node| match node {
                DeployedNode::Split {
                    item,
                    cutpoint,
                    left,
                    right,
                    value,
                    n,
                    ..
                } => TreeNode {
                    value: value.unwrap_or(f64::NAN),
                    n: n.unwrap_or(0),
                    sse: 0.0,
                    split: Some(Split {
                        item: index[item.as_str()],
                        cutpoint: *cutpoint,
                        left: *left,
                        right: *right,
                    }),
                },
                DeployedNode::Leaf { leaf_prob, n, .. } => TreeNode {
                    value: *leaf_prob,
                    n: n.unwrap_or(0),
                    sse: 0.0,
                    split: None,
                },
            })
            .collect();
        RegressionTree {
            items: self.items.iter().map(|i| i.id.clone()).collect(),
            nodes,
            constraint: self.provenance.constraint.unwrap_or(Constraint::MaxIpp(self.maxipp)),
            metadata: TreeMetadata {
                training_hash: self.provenance.training_hash.clone(),
                seed: self.provenance.seed,
            },
        }
    }

    /// The tree encoded by the document. Its item list is the document's
    /// item list; training SSE is not carried and reads as 0.
    pub fn to_tree(&self) -> Result<RegressionTree, DeployError> {
        self.validate()?;
        Ok(self.to_tree_unchecked())
    }

    /// sha256 of the whole document as serialized.
    pub fn document_hash(&self) -> Result<String, DeployError> {
        Ok(hex::encode(Sha256::digest(self.to_json()?.as_bytes())))
    }
}

/// Read a deployment file back into a tree and its cutoff.
pub fn import_tree(path: impl AsRef<Path>) -> Result<(RegressionTree, f64, DeploymentFile), DeployError> {
    let doc = DeploymentFile::load(path)?;
    let tree = doc.to_tree()?;
    Ok((tree, doc.threshold, doc))
}

/// True when two trees ask the same items at the same nodes with the same
/// cutpoints and leaf values, regardless of how item lists are indexed.
pub fn structurally_equal(a: &RegressionTree, b: &RegressionTree) -> bool {
    a.nodes.len() == b.nodes.len()
        && a.nodes.iter().zip(&b.nodes).all(|(x, y)| match (&x.split, &y.split) {
            (None, None) => x.value == y.value,
            (Some(s), Some(t)) => {
                a.items[s.item] == b.items[t.item]
                    && s.cutpoint == t.cutpoint
                    && s.left == t.left
                    && s.right == t.right
            }
            _ => false,
        })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SessionResult {
    pub leaf: usize,
    pub leaf_prob: f64,
    /// 1 = at risk.
    pub class: u8,
    pub threshold: f64,
}

/// One subject's walk through a deployment document.
#[derive(Debug, Clone)]
pub struct Session<'a> {
    doc: &'a DeploymentFile,
    node: usize,
    answered: Vec<(String, i32)>,
    path: Vec<usize>,
}

impl<'a> Session<'a> {
    pub fn new(doc: &'a DeploymentFile) -> Self {
        let mut s = Self {
            doc,
            node: 0,
            answered: Vec::new(),
            path: vec![0],
        };
        s.advance();
        s
    }

    fn stored(&self, item: &str) -> Option<i32> {
        self.answered.iter().find(|(i, _)| i == item).map(|&(_, c)| c)
    }

    // Route through nodes whose item was already answered.
    fn advance(&mut self) {
        while let DeployedNode::Split {
            item, cutpoint, left, right, ..
        } = &self.doc.nodes[self.node]
        {
            let Some(code) = self.stored(item) else { break };
            self.node = if code as f64 <= *cutpoint { *left } else { *right };
            self.path.push(self.node);
        }
    }

    /// The item to ask next; `None` once a leaf is reached.
    pub fn current_item(&self) -> Option<&'a DeployedItem> {
        match &self.doc.nodes[self.node] {
            DeployedNode::Split { item, .. } => self.doc.item(item),
            DeployedNode::Leaf { .. } => None,
        }
    }

    pub fn answer(&mut self, code: i32) -> Result<(), DeployError> {
        let item = self.current_item().ok_or(DeployError::Finished)?;
        if !item.levels.iter().any(|l| l.code == code) {
            return Err(DeployError::InvalidResponse {
                item: item.id.clone(),
                code,
            });
        }
        self.answered.push((item.id.clone(), code));
        self.advance();
        Ok(())
    }

    pub fn is_finished(&self) -> bool {
        self.current_item().is_none()
    }

    pub fn answers(&self) -> &[(String, i32)] {
        &self.answered
    }

    pub fn path(&self) -> &[usize] {
        &self.path
    }

    pub fn result(&self) -> Result<SessionResult, DeployError> {
        match &self.doc.nodes[self.node] {
            DeployedNode::Leaf { leaf_prob, .. } => Ok(SessionResult {
                leaf: self.node,
                leaf_prob: *leaf_prob,
                class: u8::from(*leaf_prob >= self.doc.threshold),
                threshold: self.doc.threshold,
            }),
            DeployedNode::Split { .. } => Err(DeployError::Unfinished),
        }
    }
}

/// Administer a whole session from a full response lookup.
pub fn administer(
    doc: &DeploymentFile,
    responses: &HashMap<String, i32>,
) -> Result<(SessionResult, Vec<(String, i32)>), DeployError> {
    let mut s = Session::new(doc);
    while let Some(item) = s.current_item() {
        let code = *responses
            .get(&item.id)
            .ok_or_else(|| DeployError::Corrupt(format!("no response for item {:?}", item.id)))?;
        s.answer(code)?;
    }
    Ok((s.result()?, s.answers().to_vec()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::items::ItemDef;

    fn item(id: &str, k: i32) -> ItemDef {
        ItemDef {
            id: id.into(),
            text: format!("Question {}", &id[1..]),
            levels: (1..=k)
                .map(|c| Level {
                    code: c,
                    label: c.to_string(),
                })
                .collect(),
            scale: None,
        }
    }

    fn bank() -> ItemBank {
        ItemBank::new(vec![item("Q1", 3), item("Q2", 5), item("Q3", 4)], vec![], vec![]).unwrap()
    }

    fn node(value: f64, split: Option<(usize, f64, usize, usize)>) -> TreeNode {
        TreeNode {
            value,
            n: 10,
            sse: 0.0,
            split: split.map(|(item, cutpoint, left, right)| Split {
                item,
                cutpoint,
                left,
                right,
            }),
        }
    }

    // Root on Q1, then Q2 on the right, then Q1 again.
    fn figure_tree() -> RegressionTree {
        RegressionTree {
            items: vec!["Q1".into(), "Q2".into(), "Q3".into()],
            nodes: vec![
                node(0.4, Some((0, 1.5, 1, 2))),
                node(0.1, None),
                node(0.5, Some((1, 2.5, 3, 4))),
                node(0.3, None),
                node(0.7, Some((0, 2.5, 5, 6))),
                node(0.6, None),
                node(0.79, None),
            ],
            constraint: Constraint::MaxIpp(2),
            metadata: TreeMetadata::default(),
        }
    }

    #[test]
    fn figure_document_shape() {
        let doc = export_document(&figure_tree(), &bank(), 0.5, &ExportContext::default()).unwrap();
        assert_eq!(doc.items.len(), 2);
        assert_eq!(doc.n_internal(), 3);
        assert_eq!(doc.n_leaves(), 4);
        assert_eq!(doc.maxipp, 2);
        let responses = HashMap::from([("Q1".to_string(), 3), ("Q2".to_string(), 4)]);
        let (r, answers) = administer(&doc, &responses).unwrap();
        assert_eq!(r.leaf_prob, 0.79);
        assert_eq!(r.class, 1);
        assert_eq!(answers.len(), 2);
    }

    #[test]
    fn round_trip() {
        let tree = figure_tree();
        let doc = export_document(&tree, &bank(), 0.25, &ExportContext::default()).unwrap();
        let back = DeploymentFile::from_json(&doc.to_json().unwrap()).unwrap();
        assert_eq!(back, doc);
        let t2 = back.to_tree().unwrap();
        assert!(structurally_equal(&tree, &t2));
        let again = export_document(&t2, &bank(), 0.25, &ExportContext::default()).unwrap();
        assert_eq!(again.nodes, doc.nodes);
    }

    #[test]
    fn unknown_item() {
        let small = ItemBank::new(vec![item("Q1", 3)], vec![], vec![]).unwrap();
        let err = export_document(&figure_tree(), &small, 0.5, &ExportContext::default());
        assert!(matches!(err, Err(DeployError::UnknownItem(id)) if id == "Q2"));
    }

    #[test]
    fn corrupt_documents_rejected() {
        let doc = export_document(&figure_tree(), &bank(), 0.5, &ExportContext::default()).unwrap();
        let mut d = doc.clone();
        d.schema = "adaptive-test/v0".into();
        assert!(d.validate().is_err());
        let mut d = doc.clone();
        if let DeployedNode::Split { right, .. } = &mut d.nodes[0] {
            *right = 1;
        }
        assert!(d.validate().is_err());
        let mut d = doc.clone();
        d.maxipp = 1;
        assert!(d.validate().is_err());
        assert!(DeploymentFile::from_json("{").is_err());
    }

    #[test]
    fn session_asks_each_item_once() {
        let doc = export_document(&figure_tree(), &bank(), 0.5, &ExportContext::default()).unwrap();
        let mut s = Session::new(&doc);
        assert_eq!(s.current_item().unwrap().text, "Question 1");
        assert!(s.result().is_err());
        s.answer(3).unwrap();
        assert_eq!(s.current_item().unwrap().id, "Q2");
        assert!(s.answer(9).is_err());
        s.answer(1).unwrap();
        assert!(s.is_finished());
        assert_eq!(s.result().unwrap().leaf_prob, 0.3);
        assert!(matches!(s.answer(1), Err(DeployError::Finished)));
    }
}
