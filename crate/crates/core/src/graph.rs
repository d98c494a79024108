//! Heterogeneous multi-relation user graphs.
//!
//! Every declared relation is stored twice: the forward adjacency and its
//! transpose as a separate reverse relation. Relation ids interleave, so
//! relation `2k` is the k-th declared relation and `2k + 1` its reverse.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Duplicates, SparseMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Forward,
    Reverse,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationKind {
    pub id: usize,
    pub name: String,
    pub direction: Direction,
}

/// One directed interaction `src -> dst` of a named relation.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub relation: String,
}

impl Edge {
    pub fn new(src: usize, dst: usize, relation: impl Into<String>) -> Self {
        Self {
            src,
            dst,
            relation: relation.into(),
        }
    }
}

/// Whether repeated interactions add up or collapse to a single link.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum EdgeWeighting {
    #[default]
    Binary,
    Multiplicity,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeteroGraph {
    n: usize,
    relations: Vec<(RelationKind, SparseMatrix)>,
    node_names: Option<Vec<String>>,
}

#[derive(Clone, Debug)]
pub struct NormalizedGraph {
    /// Row-normalized adjacency with self-loops, one per relation (forward and reverse).
    pub relations: Arc<[SparseMatrix]>,
    /// Binarized sum of the forward relations, without self-loops or normalization.
    pub summed_adjacency: Arc<SparseMatrix>,
}

impl NormalizedGraph {
    pub fn n(&self) -> usize {
        self.summed_adjacency.rows()
    }

    pub fn relation_count(&self) -> usize {
        self.relations.len()
    }
}

pub fn build_graph(edges: &[Edge], n: usize, declared: &[String]) -> Result<HeteroGraph> {
    build_graph_weighted(edges, n, declared, EdgeWeighting::Binary)
}

/// Builds one adjacency per declared relation plus its reverse.
pub fn build_graph_weighted(
    edges: &[Edge],
    n: usize,
    declared: &[String],
    weighting: EdgeWeighting,
) -> Result<HeteroGraph> {
    let mut seen = std::collections::HashSet::new();
    for name in declared {
        if !seen.insert(name.as_str()) {
            return Err(Error::Data(format!("relation {name:?} declared twice")));
        }
    }
    let index: BTreeMap<&str, usize> = declared
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();
    let mut per_relation: Vec<Vec<(usize, usize, f64)>> = vec![Vec::new(); declared.len()];
    for (k, e) in edges.iter().enumerate() {
        if e.src >= n || e.dst >= n {
            return Err(Error::Data(format!(
                "edge #{k} ({} -> {}, {}) references a node outside 0..{n}",
                e.src, e.dst, e.relation
            )));
        }
        let r = *index.get(e.relation.as_str()).ok_or_else(|| {
            Error::Data(format!(
                "edge #{k} has unknown relation {:?}; declared relations: {}",
                e.relation,
                declared.join(", ")
            ))
        })?;
        per_relation[r].push((e.src, e.dst, 1.0));
    }
    let dup = match weighting {
        EdgeWeighting::Binary => Duplicates::Collapse,
        EdgeWeighting::Multiplicity => Duplicates::Sum,
    };
    let mut relations = Vec::with_capacity(2 * declared.len());
    for (r, name) in declared.iter().enumerate() {
        let forward = SparseMatrix::from_triplets(n, n, &per_relation[r], dup)?;
        let reverse = forward.transpose();
        relations.push((
            RelationKind {
                id: 2 * r,
                name: name.clone(),
                direction: Direction::Forward,
            },
            forward,
        ));
        relations.push((
            RelationKind {
                id: 2 * r + 1,
                name: format!("{name}_rev"),
                direction: Direction::Reverse,
            },
            reverse,
        ));
    }
    Ok(HeteroGraph {
        n,
        relations,
        node_names: None,
    })
}

impl HeteroGraph {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn relations(&self) -> &[(RelationKind, SparseMatrix)] {
        &self.relations
    }

    pub fn relation(&self, name: &str) -> Option<&SparseMatrix> {
        self.relations
            .iter()
            .find(|(k, _)| k.name == name)
            .map(|(_, a)| a)
    }

    pub fn forward_relations(&self) -> impl Iterator<Item = &(RelationKind, SparseMatrix)> {
        self.relations
            .iter()
            .filter(|(k, _)| k.direction == Direction::Forward)
    }

    /// Names of the declared (forward) relations, in id order.
    pub fn declared_relations(&self) -> Vec<String> {
        self.forward_relations()
            .map(|(k, _)| k.name.clone())
            .collect()
    }

    pub fn node_names(&self) -> Option<&[String]> {
        self.node_names.as_deref()
    }

    pub fn set_node_names(&mut self, names: Vec<String>) -> Result<()> {
        if names.len() != self.n {
            return Err(Error::Data(format!(
                "{} node names for {} nodes",
                names.len(),
                self.n
            )));
        }
        self.node_names = Some(names);
        Ok(())
    }

    /// Forward-relation edges, sorted.
    pub fn edges(&self) -> Vec<Edge> {
        let mut out = Vec::new();
        for (kind, adj) in self.forward_relations() {
            for (i, j, _) in adj.triplets() {
                out.push(Edge::new(i, j, kind.name.clone()));
            }
        }
        out.sort();
        out
    }

    /// Binarized sum of the forward relations.
    pub fn summed_adjacency(&self) -> SparseMatrix {
        let mats: Vec<&SparseMatrix> = self.forward_relations().map(|(_, a)| a).collect();
        if mats.is_empty() {
            return SparseMatrix::empty(self.n, self.n);
        }
        SparseMatrix::sum_of(&mats, Duplicates::Collapse)
            .expect("relations share the graph shape")
            .map_values(|_| 1.0)
    }

    /// Total degree (in + out over all relations) of every node.
    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n];
        for (_, adj) in &self.relations {
            for (i, d) in deg.iter_mut().enumerate() {
                *d += adj.row_nnz(i);
            }
        }
        deg
    }
}

/// Self-loops plus random-walk (row) normalization for every relation.
pub fn normalize(g: &HeteroGraph) -> NormalizedGraph {
    let identity = SparseMatrix::identity(g.n);
    let relations: Vec<SparseMatrix> = g
        .relations
        .iter()
        .map(|(_, adj)| {
            let looped = SparseMatrix::sum_of(&[adj, &identity], Duplicates::Sum)
                .expect("identity matches adjacency shape");
            let inv: Vec<f64> = looped.row_sums().into_iter().map(|d| 1.0 / d).collect();
            looped.scale_rows(&inv)
        })
        .collect();
    NormalizedGraph {
        relations: relations.into(),
        summed_adjacency: Arc::new(g.summed_adjacency()),
    }
}

/// Relabels node `i` as `perm[i]` in every relation.
pub fn permute_nodes(g: &HeteroGraph, perm: &[usize]) -> Result<HeteroGraph> {
    validate_permutation(perm, g.n)?;
    let relations = g
        .relations
        .iter()
        .map(|(kind, adj)| {
            let t: Vec<_> = adj
                .triplets()
                .into_iter()
                .map(|(i, j, v)| (perm[i], perm[j], v))
                .collect();
            let permuted = SparseMatrix::from_triplets(g.n, g.n, &t, Duplicates::Sum)?;
            Ok((kind.clone(), permuted))
        })
        .collect::<Result<Vec<_>>>()?;
    let node_names = g.node_names.as_ref().map(|names| {
        let mut out = vec![String::new(); g.n];
        for (i, name) in names.iter().enumerate() {
            out[perm[i]] = name.clone();
        }
        out
    });
    Ok(HeteroGraph {
        n: g.n,
        relations,
        node_names,
    })
}

pub fn validate_permutation(perm: &[usize], n: usize) -> Result<()> {
    if perm.len() != n {
        return Err(Error::Data(format!(
            "permutation has {} entries for {n} nodes",
            perm.len()
        )));
    }
    let mut hit = vec![false; n];
    for &p in perm {
        if p >= n || std::mem::replace(&mut hit[p], true) {
            return Err(Error::Data(format!(
                "permutation is not a bijection (entry {p})"
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rels(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn single_edge_and_its_reverse() {
        let g = build_graph(&[Edge::new(0, 1, "follow")], 2, &rels(&["follow"])).unwrap();
        assert_eq!(g.relation("follow").unwrap().get(0, 1), 1.0);
        assert_eq!(g.relation("follow_rev").unwrap().get(1, 0), 1.0);
        assert_eq!(g.relation("follow_rev").unwrap().nnz(), 1);
    }

    #[test]
    fn duplicates_collapse() {
        let e = Edge::new(0, 1, "follow");
        let g = build_graph(&[e.clone(), e], 2, &rels(&["follow"])).unwrap();
        assert_eq!(g.relation("follow").unwrap().nnz(), 1);
        assert_eq!(g.relation("follow").unwrap().get(0, 1), 1.0);
    }

    #[test]
    fn multiplicity_weighting_counts_repeats() {
        let e = Edge::new(0, 1, "like");
        let g = build_graph_weighted(
            &[e.clone(), e],
            2,
            &rels(&["like"]),
            EdgeWeighting::Multiplicity,
        )
        .unwrap();
        assert_eq!(g.relation("like").unwrap().get(0, 1), 2.0);
    }

    #[test]
    fn five_relations_give_ten_matrices() {
        let names = rels(&["follow", "retweet", "reply", "mention", "like"]);
        let edges: Vec<Edge> = names
            .iter()
            .enumerate()
            .map(|(k, r)| Edge::new(k, (k + 1) % 6, r.clone()))
            .collect();
        let g = build_graph(&edges, 6, &names).unwrap();
        assert_eq!(g.relations().len(), 10);
        for (k, (kind, adj)) in g.relations().iter().enumerate() {
            assert_eq!(kind.id, k);
            if kind.direction == Direction::Reverse {
                let fwd = &g.relations()[k - 1].1;
                assert_eq!(adj, &fwd.transpose());
            }
        }
    }

    #[test]
    fn out_of_range_and_unknown_relation_fail() {
        let err = build_graph(&[Edge::new(0, 5, "follow")], 2, &rels(&["follow"])).unwrap_err();
        assert!(err.to_string().contains("edge #0"));
        let err = build_graph(&[Edge::new(0, 1, "poke")], 2, &rels(&["follow"])).unwrap_err();
        assert!(err.to_string().contains("follow"));
    }

    #[test]
    fn isolated_single_node_normalizes_to_one() {
        let g = build_graph(&[], 1, &rels(&["follow"])).unwrap();
        let ng = normalize(&g);
        for a in ng.relations.iter() {
            assert_eq!(a.to_dense().as_slice(), &[1.0]);
        }
    }

    #[test]
    fn three_out_edges_plus_self_loop_quarter_each() {
        let edges: Vec<Edge> = (1..4).map(|j| Edge::new(0, j, "follow")).collect();
        let ng = normalize(&build_graph(&edges, 4, &rels(&["follow"])).unwrap());
        let a = &ng.relations[0];
        for j in 0..4 {
            assert_eq!(a.get(0, j), 0.25);
        }
    }

    #[test]
    fn summed_adjacency_is_binary_over_forward_relations() {
        let edges = vec![
            Edge::new(0, 1, "follow"),
            Edge::new(0, 1, "retweet"),
            Edge::new(2, 0, "retweet"),
        ];
        let g = build_graph(&edges, 3, &rels(&["follow", "retweet"])).unwrap();
        let s = g.summed_adjacency();
        assert_eq!(s.get(0, 1), 1.0);
        assert_eq!(s.get(2, 0), 1.0);
        assert_eq!(s.get(1, 0), 0.0);
        assert_eq!(s.nnz(), 2);
    }

    #[test]
    fn permutation_identity_and_involution() {
        let edges = vec![Edge::new(0, 1, "follow"), Edge::new(2, 0, "follow")];
        let g = build_graph(&edges, 3, &rels(&["follow"])).unwrap();
        assert_eq!(permute_nodes(&g, &[0, 1, 2]).unwrap(), g);
        let swapped = permute_nodes(&g, &[1, 0, 2]).unwrap();
        assert_ne!(swapped, g);
        assert_eq!(permute_nodes(&swapped, &[1, 0, 2]).unwrap(), g);
        assert!(permute_nodes(&g, &[0, 0, 1]).is_err());
        assert!(permute_nodes(&g, &[0, 1]).is_err());
    }
}
