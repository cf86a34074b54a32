//! Versioned JSON form of a forest with nodes as nested objects.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Forest, ForestConfig, ForestKind, Node, NodeKind, Tree};
use crate::error::{Error, Result};

pub const FORMAT: &str = "consensus-fuse/forest";
pub const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum NodeDoc {
    Split {
        n: usize,
        feature: usize,
        threshold: f64,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        estimates: Vec<f64>,
        left: Box<NodeDoc>,
        right: Box<NodeDoc>,
    },
    Leaf {
        n: usize,
        histogram: [f64; 2],
    },
}

#[derive(Debug, Serialize, Deserialize)]
struct ForestDoc {
    format: String,
    version: u32,
    kind: ForestKind,
    seed: u64,
    config: ForestConfig,
    trees: Vec<NodeDoc>,
}

fn to_doc(tree: &Tree, i: usize) -> NodeDoc {
    let node = &tree.nodes[i];
    match &node.kind {
        NodeKind::Leaf { histogram } => NodeDoc::Leaf {
            n: node.n_samples,
            histogram: *histogram,
        },
        NodeKind::Split {
            feature,
            threshold,
            left,
            right,
            gain_estimates,
        } => NodeDoc::Split {
            n: node.n_samples,
            feature: *feature,
            threshold: *threshold,
            estimates: gain_estimates.clone(),
            left: Box::new(to_doc(tree, *left)),
            right: Box::new(to_doc(tree, *right)),
        },
    }
}

fn from_doc(doc: &NodeDoc, parent: Option<usize>, depth: usize, nodes: &mut Vec<Node>) -> usize {
    let id = nodes.len();
    match doc {
        NodeDoc::Leaf { n, histogram } => nodes.push(Node {
            parent,
            depth,
            n_samples: *n,
            kind: NodeKind::Leaf {
                histogram: *histogram,
            },
        }),
        NodeDoc::Split {
            n,
            feature,
            threshold,
            estimates,
            left,
            right,
        } => {
            nodes.push(Node {
                parent,
                depth,
                n_samples: *n,
                kind: NodeKind::Leaf {
                    histogram: [0.0; 2],
                },
            });
            let l = from_doc(left, Some(id), depth + 1, nodes);
            let r = from_doc(right, Some(id), depth + 1, nodes);
            nodes[id].kind = NodeKind::Split {
                feature: *feature,
                threshold: *threshold,
                left: l,
                right: r,
                gain_estimates: estimates.clone(),
            };
        }
    }
    id
}

impl Forest {
    pub fn to_json(&self) -> Result<String> {
        let doc = ForestDoc {
            format: FORMAT.into(),
            version: VERSION,
            kind: self.kind,
            seed: self.seed,
            config: self.config.clone(),
            trees: self.trees.iter().map(|t| to_doc(t, 0)).collect(),
        };
        Ok(serde_json::to_string(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ForestDoc = serde_json::from_str(text)?;
        if doc.format != FORMAT || doc.version != VERSION {
            return Err(Error::InvalidInput(format!(
                "unsupported forest document {} v{}",
                doc.format, doc.version
            )));
        }
        let trees = doc
            .trees
            .iter()
            .map(|d| {
                let mut nodes = Vec::new();
                from_doc(d, None, 0, &mut nodes);
                Tree { nodes }
            })
            .collect();
        Ok(Forest {
            kind: doc.kind,
            config: doc.config,
            seed: doc.seed,
            trees,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
