//! Must-link constraints by merging linked points into one weighted point.
//!
//! A group `I` is replaced by `x_I = (1/ω_I) Σ_{i∈I} ω_i x_i` with weight
//! `ω_I = Σ_{i∈I} ω_i`. Every member later copies the group's fractions.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::data::{squared_distance, Assignment, WeightedDataset};
use crate::dsu::DisjointSet;
use crate::error::{Error, Result};

/// Disjoint groups of linked points, each of size at least two.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MustLinkGroups {
    points: usize,
    groups: Vec<Vec<usize>>,
}

impl MustLinkGroups {
    /// Validates explicit groups over `points` indices.
    pub fn new(points: usize, groups: Vec<Vec<usize>>) -> Result<Self> {
        let mut seen = vec![false; points];
        for (g, members) in groups.iter().enumerate() {
            if members.len() < 2 {
                return Err(Error::InvalidInput(format!("must-link group {g} has fewer than two points")));
            }
            for &j in members {
                if j >= points {
                    return Err(Error::InvalidInput(format!("must-link group {g} names point {j} of {points}")));
                }
                if std::mem::replace(&mut seen[j], true) {
                    return Err(Error::InvalidInput(format!("point {j} appears in two must-link groups")));
                }
            }
        }
        let mut groups: Vec<Vec<usize>> = groups
            .into_iter()
            .map(|mut g| {
                g.sort_unstable();
                g
            })
            .collect();
        groups.sort();
        Ok(Self { points, groups })
    }

    /// Transitive closure of pairwise declarations.
    pub fn from_pairs(points: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        let mut dsu = DisjointSet::new(points);
        for (p, &(a, b)) in pairs.iter().enumerate() {
            if a >= points || b >= points {
                return Err(Error::InvalidInput(format!("must-link pair {p} names a point outside 0..{points}")));
            }
            if a == b {
                return Err(Error::InvalidInput(format!("must-link pair {p} links point {a} to itself")));
            }
            dsu.union(a, b);
        }
        let groups = dsu.groups().into_iter().filter(|g| g.len() > 1).collect();
        Self::new(points, groups)
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    /// Every linked pair `(a, b)` with `a < b`.
    pub fn linked_pairs(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for g in &self.groups {
            for (x, &a) in g.iter().enumerate() {
                out.extend(g[x + 1..].iter().map(|&b| (a, b)));
            }
        }
        out
    }
}

/// Map from original point indices to points of a reduced data set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexMapping {
    to_reduced: Vec<usize>,
    reduced_len: usize,
}

impl IndexMapping {
    pub fn original_len(&self) -> usize {
        self.to_reduced.len()
    }

    pub fn reduced_len(&self) -> usize {
        self.reduced_len
    }

    pub fn reduced_index(&self, j: usize) -> usize {
        self.to_reduced[j]
    }

    /// Original points merged into each reduced point.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.reduced_len];
        for (j, &r) in self.to_reduced.iter().enumerate() {
            out[r].push(j);
        }
        out
    }
}

fn coordinate_key(x: &[f64]) -> Vec<u64> {
    x.iter().map(|c| (c + 0.0).to_bits()).collect()
}

/// Replaces each group by its weighted mean. Merged points that land exactly
/// on another point are fused with it, weights summed.
pub fn merge_must_link(data: &WeightedDataset, groups: &MustLinkGroups) -> Result<(WeightedDataset, IndexMapping)> {
    if groups.points() != data.len() {
        return Err(Error::Dimension(format!(
            "must-link groups cover {} points, dataset has {}",
            groups.points(),
            data.len()
        )));
    }
    let n = data.len();
    let dim = data.dim();
    let mut group_of = vec![usize::MAX; n];
    for (g, members) in groups.groups().iter().enumerate() {
        for &j in members {
            group_of[j] = g;
        }
    }

    // candidates in order of their smallest original index
    let mut candidates: Vec<(Vec<f64>, f64)> = Vec::new();
    let mut candidate_of = vec![usize::MAX; n];
    let mut group_candidate = vec![usize::MAX; groups.groups().len()];
    for j in 0..n {
        let g = group_of[j];
        if g == usize::MAX {
            candidate_of[j] = candidates.len();
            candidates.push((data.point(j).to_vec(), data.weight(j)));
        } else if group_candidate[g] == usize::MAX {
            let members = &groups.groups()[g];
            let w: f64 = members.iter().map(|&m| data.weight(m)).sum();
            let mut x = vec![0.0; dim];
            for &m in members {
                for (a, c) in x.iter_mut().zip(data.point(m)) {
                    *a += data.weight(m) * c;
                }
            }
            x.iter_mut().for_each(|a| *a /= w);
            group_candidate[g] = candidates.len();
            candidate_of[j] = candidates.len();
            candidates.push((x, w));
        } else {
            candidate_of[j] = group_candidate[g];
        }
    }

    let mut slot: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut coords: Vec<f64> = Vec::new();
    let mut weights: Vec<f64> = Vec::new();
    let mut reduced_of_candidate = Vec::with_capacity(candidates.len());
    for (x, w) in candidates {
        let next = weights.len();
        let r = *slot.entry(coordinate_key(&x)).or_insert(next);
        if r == next {
            coords.extend_from_slice(&x);
            weights.push(w);
        } else {
            weights[r] += w;
        }
        reduced_of_candidate.push(r);
    }
    let reduced = WeightedDataset::from_flat(dim, coords, weights)?;
    let mapping = IndexMapping {
        to_reduced: candidate_of.iter().map(|&c| reduced_of_candidate[c]).collect(),
        reduced_len: reduced.len(),
    };
    Ok((reduced, mapping))
}

/// Copies each reduced column to every original point mapped onto it.
pub fn expand_assignment(reduced: &Assignment, mapping: &IndexMapping) -> Result<Assignment> {
    if reduced.points() != mapping.reduced_len() {
        return Err(Error::Dimension(format!(
            "assignment has {} columns, mapping expects {}",
            reduced.points(),
            mapping.reduced_len()
        )));
    }
    let n = mapping.original_len();
    let mut values = Vec::with_capacity(reduced.clusters() * n);
    for i in 0..reduced.clusters() {
        let row = reduced.row(i);
        values.extend(mapping.to_reduced.iter().map(|&r| row[r]));
    }
    Ok(Assignment::from_raw(reduced.clusters(), n, values))
}

/// `Σ_j ω_j ‖x_j − x_{r(j)}‖²`: the clustering-independent gap between the
/// squared error of an expanded assignment and that of its reduced original.
pub fn dispersion_constant(data: &WeightedDataset, reduced: &WeightedDataset, mapping: &IndexMapping) -> f64 {
    (0..data.len())
        .map(|j| data.weight(j) * squared_distance(data.point(j), reduced.point(mapping.reduced_index(j))))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::squared_error_for_sites;
    use approx::assert_abs_diff_eq;

    fn line(xs: &[f64], ws: &[f64]) -> WeightedDataset {
        let pts: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x]).collect();
        WeightedDataset::new(&pts, ws.to_vec()).unwrap()
    }

    #[test]
    fn pair_merges_to_weighted_mean() {
        let d = line(&[0.0, 2.0, 7.0], &[1.0, 1.0, 1.0]);
        let g = MustLinkGroups::from_pairs(3, &[(0, 1)]).unwrap();
        let (r, m) = merge_must_link(&d, &g).unwrap();
        assert_eq!(r.len(), 2);
        assert_eq!(r.point(0), &[1.0]);
        assert_eq!(r.weight(0), 2.0);
        assert_eq!((m.reduced_index(0), m.reduced_index(1), m.reduced_index(2)), (0, 0, 1));
    }

    #[test]
    fn groups_are_validated_and_closed() {
        assert!(MustLinkGroups::new(3, vec![vec![1]]).is_err());
        assert!(MustLinkGroups::new(3, vec![vec![0, 1], vec![1, 2]]).is_err());
        assert!(MustLinkGroups::new(3, vec![vec![0, 5]]).is_err());
        assert!(MustLinkGroups::from_pairs(3, &[(2, 2)]).is_err());
        let g = MustLinkGroups::from_pairs(5, &[(3, 1), (1, 4)]).unwrap();
        assert_eq!(g.groups(), &[vec![1, 3, 4]]);
        assert_eq!(g.linked_pairs(), vec![(1, 3), (1, 4), (3, 4)]);
    }

    #[test]
    fn colliding_groups_fuse() {
        let d = line(&[0.0, 2.0, -1.0, 3.0, 9.0], &[1.0, 1.0, 1.0, 1.0, 2.0]);
        let g = MustLinkGroups::from_pairs(5, &[(0, 1), (2, 3)]).unwrap();
        let (r, m) = merge_must_link(&d, &g).unwrap();
        assert_eq!(r.len(), 2);
        assert_eq!(r.point(0), &[1.0]);
        assert_eq!(r.weight(0), 4.0);
        assert_abs_diff_eq!(r.total_weight(), d.total_weight(), epsilon = 1e-12);
        assert_eq!(m.members(), vec![vec![0, 1, 2, 3], vec![4]]);
    }

    #[test]
    fn merged_point_onto_singleton_fuses() {
        let d = line(&[0.0, 2.0, 1.0], &[1.0, 1.0, 0.5]);
        let g = MustLinkGroups::from_pairs(3, &[(0, 1)]).unwrap();
        let (r, _) = merge_must_link(&d, &g).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r.weight(0), 2.5);
    }

    #[test]
    fn expansion_copies_columns() {
        let d = line(&[0.0, 2.0, 7.0], &[1.0, 1.0, 1.0]);
        let g = MustLinkGroups::from_pairs(3, &[(0, 1)]).unwrap();
        let (r, m) = merge_must_link(&d, &g).unwrap();
        let y = Assignment::new(2, 2, vec![0.5, 0.0, 0.5, 1.0]).unwrap();
        let full = expand_assignment(&y, &m).unwrap();
        assert_eq!(full.values(), &[0.5, 0.5, 0.0, 0.5, 0.5, 1.0]);
        let whole = Assignment::new(2, 2, vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        assert_eq!(expand_assignment(&whole, &m).unwrap().row(1), &[1.0, 1.0, 1.0]);
        assert!(expand_assignment(&Assignment::from_labels(2, &[0, 1, 1]).unwrap(), &m).is_err());

        let sites = vec![vec![0.5], vec![6.0]];
        let reduced_se = squared_error_for_sites(&y, &r, &sites).unwrap();
        let full_se = squared_error_for_sites(&full, &d, &sites).unwrap();
        assert_abs_diff_eq!(full_se - reduced_se, dispersion_constant(&d, &r, &m), epsilon = 1e-12);
        assert_abs_diff_eq!(dispersion_constant(&d, &r, &m), 2.0, epsilon = 1e-12);
    }
}
