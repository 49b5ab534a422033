use serde::{Deserialize, Serialize};

use super::profile::{divide_3sigma, Divisions};
use crate::error::{Error, Result};

pub const GRAPH_NEIGHBORS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphNode {
    pub id: String,
    pub score: f64,
    pub division: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphEdge {
    pub source: String,
    pub target: String,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileGraph {
    pub nodes: Vec<GraphNode>,
    /// Undirected, one entry per pair, `source` listed before `target` in
    /// node order.
    pub edges: Vec<GraphEdge>,
    pub division_counts: [usize; 5],
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// The `k` nearest other nodes of `i`, ties by ascending id.
pub fn nearest(ids: &[String], profiles: &[Vec<f64>], i: usize, k: usize) -> Vec<usize> {
    let mut others: Vec<(f64, usize)> = (0..ids.len())
        .filter(|&j| j != i)
        .map(|j| (euclidean(&profiles[i], &profiles[j]), j))
        .collect();
    others.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| ids[a.1].cmp(&ids[b.1])));
    others.truncate(k);
    others.into_iter().map(|(_, j)| j).collect()
}

/// kNN similarity graph over profile vectors: every node links to its
/// `GRAPH_NEIGHBORS` nearest; the edge set is the deduplicated union.
/// Divisions come from the 3σ rule on `scores`.
pub fn build_similarity_graph(ids: &[String], profiles: &[Vec<f64>], scores: &[f64]) -> Result<ProfileGraph> {
    if ids.len() != profiles.len() || ids.len() != scores.len() {
        return Err(Error::Shape("ids, profiles and scores must align".into()));
    }
    let n = ids.len();
    let mut adj = vec![Vec::new(); n];
    for i in 0..n {
        for j in nearest(ids, profiles, i, GRAPH_NEIGHBORS) {
            let (a, b) = (i.min(j), i.max(j));
            if !adj[a].contains(&b) {
                adj[a].push(b);
            }
        }
    }
    let mut edges = Vec::new();
    for (a, list) in adj.iter_mut().enumerate() {
        list.sort_unstable();
        for &b in list.iter() {
            edges.push(GraphEdge {
                source: ids[a].clone(),
                target: ids[b].clone(),
                distance: euclidean(&profiles[a], &profiles[b]),
            });
        }
    }
    let Divisions { division, counts, .. } = divide_3sigma(scores);
    Ok(ProfileGraph {
        nodes: (0..n)
            .map(|i| GraphNode {
                id: ids[i].clone(),
                score: scores[i],
                division: division[i],
            })
            .collect(),
        edges,
        division_counts: counts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("P{i:02}")).collect()
    }

    #[test]
    fn three_nodes_form_a_triangle() {
        let p = vec![vec![0.0], vec![0.5], vec![1.0]];
        let g = build_similarity_graph(&ids(3), &p, &[0.1, 0.5, 0.9]).unwrap();
        assert_eq!(g.edges.len(), 3);
    }

    #[test]
    fn identical_profiles_use_id_order() {
        let p = vec![vec![0.3, 0.3]; 13];
        assert_eq!(nearest(&ids(13), &p, 12, 10), (0..10).collect::<Vec<_>>());
        let g = build_similarity_graph(&ids(13), &p, &[0.5; 13]).unwrap();
        assert!(g.edges.iter().all(|e| e.distance == 0.0));
    }

    #[test]
    fn single_node_has_no_edges() {
        let g = build_similarity_graph(&ids(1), &[vec![0.2]], &[0.5]).unwrap();
        assert!(g.edges.is_empty());
        assert_eq!(g.nodes.len(), 1);
    }
}
