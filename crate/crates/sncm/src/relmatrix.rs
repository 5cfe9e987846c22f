//! Relationship matrices R encoding predictor similarity, built from a
//! hierarchical grouping: r_{j,j'} = exp(a/c)/b, where a is the depth of the
//! deepest group shared by j and j', b is that group's size (number of
//! predictors in its subtree), and c is the maximum attachment depth in the
//! hierarchy. Predictors sharing no group get 0.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SncmError};

/// A node in the predictor hierarchy. The root acts as a virtual container at
/// depth 0; its children are the top-level categories at depth 1. Predictors
/// may be attached at any node via `members`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HierarchyNode {
    pub name: String,
    #[serde(default)]
    pub children: Vec<HierarchyNode>,
    #[serde(default)]
    pub members: Vec<usize>,
}

impl HierarchyNode {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            children: Vec::new(),
            members: Vec::new(),
        }
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    fn subtree_size(&self) -> usize {
        self.members.len() + self.children.iter().map(|c| c.subtree_size()).sum::<usize>()
    }
}

/// Symmetric p x p matrix with zero diagonal and non-negative off-diagonals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationshipMatrix {
    p: usize,
    names: Vec<String>,
    entries: Vec<f64>, // row-major
}

impl RelationshipMatrix {
    pub fn zeros(p: usize) -> Self {
        Self {
            p,
            names: default_names(p),
            entries: vec![0.0; p * p],
        }
    }

    /// Validates symmetry, zero diagonal, and non-negative off-diagonals.
    pub fn from_entries(p: usize, names: Option<Vec<String>>, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != p * p {
            return Err(SncmError::dimension(format!(
                "expected {} entries for a {p}x{p} matrix, got {}",
                p * p,
                entries.len()
            )));
        }
        let names = match names {
            Some(n) if n.len() == p => n,
            Some(n) => {
                return Err(SncmError::dimension(format!(
                    "expected {p} predictor names, got {}",
                    n.len()
                )))
            }
            None => default_names(p),
        };
        let m = Self { p, names, entries };
        m.validate()?;
        Ok(m)
    }

    fn validate(&self) -> Result<()> {
        for i in 0..self.p {
            if self.get(i, i) != 0.0 {
                return Err(SncmError::structure(format!("nonzero diagonal at {i}")));
            }
            for j in (i + 1)..self.p {
                let a = self.get(i, j);
                let b = self.get(j, i);
                if (a - b).abs() > 1e-12 {
                    return Err(SncmError::structure(format!(
                        "asymmetric entries at ({i}, {j}): {a} vs {b}"
                    )));
                }
                if a < 0.0 || !a.is_finite() {
                    return Err(SncmError::structure(format!(
                        "invalid off-diagonal {a} at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.p
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.p + j]
    }

    fn set_sym(&mut self, i: usize, j: usize, v: f64) {
        self.entries[i * self.p + j] = v;
        self.entries[j * self.p + i] = v;
    }

    /// Largest entry (0 for an all-zero matrix).
    pub fn max_entry(&self) -> f64 {
        self.entries.iter().cloned().fold(0.0, f64::max)
    }

    /// Sparse adjacency: for each row, the nonzero (column, value) pairs.
    pub fn neighbor_lists(&self) -> Vec<Vec<(usize, f64)>> {
        (0..self.p)
            .map(|i| {
                (0..self.p)
                    .filter(|&j| j != i && self.get(i, j) != 0.0)
                    .map(|j| (j, self.get(i, j)))
                    .collect()
            })
            .collect()
    }

    /// Apply the same permutation to rows and columns: out[i][j] = in[perm[i]][perm[j]].
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.p {
            return Err(SncmError::dimension("permutation length mismatch"));
        }
        let mut entries = vec![0.0; self.p * self.p];
        for i in 0..self.p {
            for j in 0..self.p {
                entries[i * self.p + j] = self.get(perm[i], perm[j]);
            }
        }
        Ok(Self {
            p: self.p,
            names: perm.iter().map(|&k| self.names[k].clone()).collect(),
            entries,
        })
    }

    /// R with its diagonal replaced by ones (the predictor covariance used in
    /// the correlated-predictors setting).
    pub fn with_unit_diagonal(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::from_row_slice(self.p, self.p, &self.entries);
        for i in 0..self.p {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Dense CSV with a header row of predictor names.
    pub fn csv_bytes(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.names)?;
        for i in 0..self.p {
            let row: Vec<String> = (0..self.p).map(|j| format!("{:.17e}", self.get(i, j))).collect();
            w.write_record(&row)?;
        }
        w.flush().map_err(std::io::Error::from)?;
        w.into_inner()
            .map_err(|e| SncmError::domain(format!("csv buffer error: {e}")))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.csv_bytes()?)?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let names: Vec<String> = r.headers()?.iter().map(|s| s.to_string()).collect();
        let p = names.len();
        let mut entries = Vec::with_capacity(p * p);
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            if rec.len() != p {
                return Err(SncmError::Parse {
                    row: i + 2,
                    column: String::new(),
                    message: format!("expected {p} columns, found {}", rec.len()),
                });
            }
            for (j, field) in rec.iter().enumerate() {
                let v: f64 = field.trim().parse().map_err(|_| SncmError::Parse {
                    row: i + 2,
                    column: names[j].clone(),
                    message: format!("non-numeric cell '{field}'"),
                })?;
                entries.push(v);
            }
        }
        Self::from_entries(p, Some(names), entries)
    }
}

fn default_names(p: usize) -> Vec<String> {
    (0..p).map(|j| format!("x{}", j + 1)).collect()
}

/// Build R from a hierarchy. Predictor indices must be contiguous 0..p-1 and
/// each must appear in exactly one member list.
pub fn build_relationship_matrix(tree: &HierarchyNode) -> Result<RelationshipMatrix> {
    // collect (predictor, path of (node id, depth, subtree_size)) for every
    // node on the predictor's attachment path; node ids keep structurally
    // identical but distinct categories from comparing equal
    let mut assignments: Vec<(usize, Vec<(usize, usize, usize)>)> = Vec::new();
    let mut max_depth = 0usize;
    let mut next_id = 0usize;
    collect(tree, 0, &mut next_id, &mut Vec::new(), &mut assignments, &mut max_depth)?;
    if assignments.is_empty() {
        return Err(SncmError::structure("hierarchy contains no predictors"));
    }
    let p = assignments.len();
    let mut seen = vec![false; p];
    for &(idx, _) in &assignments {
        if idx >= p {
            return Err(SncmError::structure(format!(
                "predictor indices must be contiguous 0..{}, found {idx}",
                p - 1
            )));
        }
        if seen[idx] {
            return Err(SncmError::structure(format!(
                "predictor {idx} appears in more than one member list"
            )));
        }
        seen[idx] = true;
    }
    if max_depth == 0 {
        return Err(SncmError::structure(
            "predictors may not be attached to the root; use at least one category",
        ));
    }
    let mut paths: Vec<Vec<(usize, usize, usize)>> = vec![Vec::new(); p];
    for (idx, path) in assignments {
        paths[idx] = path;
    }
    let c = max_depth as f64;
    let mut m = RelationshipMatrix::zeros(p);
    for i in 0..p {
        for j in (i + 1)..p {
            // deepest common prefix of the two attachment paths
            let mut shared: Option<(usize, usize, usize)> = None;
            for (a, b) in paths[i].iter().zip(paths[j].iter()) {
                if a == b {
                    shared = Some(*a);
                } else {
                    break;
                }
            }
            if let Some((_, depth, size)) = shared {
                m.set_sym(i, j, (depth as f64 / c).exp() / size as f64);
            }
        }
    }
    Ok(m)
}

fn collect(
    node: &HierarchyNode,
    depth: usize,
    next_id: &mut usize,
    path: &mut Vec<(usize, usize, usize)>,
    out: &mut Vec<(usize, Vec<(usize, usize, usize)>)>,
    max_depth: &mut usize,
) -> Result<()> {
    if depth > 0 {
        if node.members.is_empty() && node.children.is_empty() {
            return Err(SncmError::structure(format!(
                "node '{}' has neither members nor children",
                node.name
            )));
        }
        let id = *next_id;
        *next_id += 1;
        path.push((id, depth, node.subtree_size()));
    }
    if !node.members.is_empty() {
        if depth > *max_depth {
            *max_depth = depth;
        }
        for &idx in &node.members {
            out.push((idx, path.clone()));
        }
    }
    for child in &node.children {
        collect(child, depth + 1, next_id, path, out, max_depth)?;
    }
    if depth > 0 {
        path.pop();
    }
    Ok(())
}

/// The simulation design: `blocks` identical categories of `block_size`
/// predictors. Within each category (taking block_size = 20): predictors 1-5
/// sit directly in the category, 6-10 form a subcategory, 11-20 form a second
/// subcategory of which 16-20 are a sub-subcategory.
pub fn simulation_r(blocks: usize, block_size: usize) -> Result<RelationshipMatrix> {
    assert_eq!(block_size, 20, "the simulation design uses blocks of 20");
    let mut root = HierarchyNode::new("root");
    for b in 0..blocks {
        let base = b * block_size;
        let mut block = HierarchyNode::new(format!("block{}", b + 1));
        block.members = (base..base + 5).collect();
        let mut sub1 = HierarchyNode::new(format!("block{}_sub1", b + 1));
        sub1.members = (base + 5..base + 10).collect();
        let mut sub2 = HierarchyNode::new(format!("block{}_sub2", b + 1));
        sub2.members = (base + 10..base + 15).collect();
        let mut subsub = HierarchyNode::new(format!("block{}_subsub", b + 1));
        subsub.members = (base + 15..base + 20).collect();
        sub2.children.push(subsub);
        block.children.push(sub1);
        block.children.push(sub2);
        root.children.push(block);
    }
    build_relationship_matrix(&root)
}
