//! Similarity graph in node-link form, readable by common graph tools
//! (for example networkx `node_link_graph`).

use serde::{Deserialize, Serialize};

use super::{AnalyticsError, SimilarityMatrix};
use crate::corpus::Period;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkNode {
    pub id: String,
    pub title: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub period: Option<Period>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkLink {
    pub source: String,
    pub target: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkGraphAttrs {
    pub threshold: f64,
    pub weight: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkDocument {
    pub directed: bool,
    pub multigraph: bool,
    pub graph: NetworkGraphAttrs,
    pub nodes: Vec<NetworkNode>,
    pub links: Vec<NetworkLink>,
}

/// Keeps every pair with similarity at or above `threshold`. `nodes` must
/// follow the matrix's id order.
pub fn network_export(
    sim: &SimilarityMatrix,
    nodes: &[NetworkNode],
    threshold: f64,
) -> Result<NetworkDocument, AnalyticsError> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(AnalyticsError::Threshold(threshold));
    }
    assert_eq!(nodes.len(), sim.len(), "one node per matrix row");
    let mut links = Vec::new();
    for i in 0..sim.len() {
        for j in i + 1..sim.len() {
            if sim.sim[i][j] >= threshold {
                links.push(NetworkLink {
                    source: sim.ids[i].clone(),
                    target: sim.ids[j].clone(),
                    weight: sim.sim[i][j],
                });
            }
        }
    }
    Ok(NetworkDocument {
        directed: false,
        multigraph: false,
        graph: NetworkGraphAttrs { threshold, weight: "cosine similarity".into() },
        nodes: nodes.to_vec(),
        links,
    })
}
