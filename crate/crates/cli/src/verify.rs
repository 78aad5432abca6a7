//! Certifying an external assignment, and the tiny-instance oracle.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde_json::json;
use wbkmeans::{
    brute_force_integral, centroids, enumerate_optimal_vertices, sigma_feasibility_lp, verify_strongly_feasible,
    Assignment, ClusterBounds, Execution, SiteSet, TinyInstance, Verdict, WeightedDataset,
};

use crate::ingest::parse_triplets;

/// Reads sites from a `sites.json` artifact or a bare array of points.
pub fn read_sites(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let value: serde_json::Value = serde_json::from_str(&text).with_context(|| format!("in {}", path.display()))?;
    let array = value.get("centroids").cloned().unwrap_or(value);
    serde_json::from_value(array).with_context(|| format!("{}: expected an array of points", path.display()))
}

pub fn read_assignment(path: &Path, clusters: Option<usize>, points: usize) -> Result<Assignment> {
    let file = std::fs::File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    parse_triplets(file, clusters, points).with_context(|| format!("in {}", path.display()))
}

/// Looks for `σ` that makes the power diagram of `sites` contain `y`, then runs
/// the strong check on it. Sites default to the centroids of `y`.
pub fn certify(
    data: &WeightedDataset,
    y: &Assignment,
    sites: Option<Vec<Vec<f64>>>,
) -> Result<(Verdict, serde_json::Value)> {
    let sites = match sites {
        Some(s) => s,
        None => centroids(y, data)?.centers,
    };
    if sites.len() != y.clusters() {
        bail!("{} sites for {} clusters", sites.len(), y.clusters());
    }
    let Some(diagram) = sigma_feasibility_lp(y, data, &sites)? else {
        let report = json!({
            "verdict": Verdict::Infeasible,
            "reason": "no weights make every supported point lie in its cluster's cell",
            "sites": sites,
        });
        return Ok((Verdict::Infeasible, report));
    };
    let cert = verify_strongly_feasible(&diagram, y, data)?;
    let report = json!({
        "verdict": cert.verdict,
        "witness": cert.witness,
        "sites": diagram.sites(),
        "sigma": diagram.sigma(),
        "fractional_count": y.fractional_count(),
    });
    Ok((cert.verdict, report))
}

/// Exhaustive LP and integral optima of a tiny instance.
pub fn oracle(data: WeightedDataset, bounds: &ClusterBounds, sites: Vec<Vec<f64>>, exec: Execution) -> Result<serde_json::Value> {
    let sites = SiteSet::new(sites)?;
    let tiny = TinyInstance::new(data, bounds, &sites)?;
    let vertices = enumerate_optimal_vertices(&tiny, exec)?;
    let integral = brute_force_integral(&tiny, exec)?;
    Ok(json!({ "lp": vertices, "integral": integral }))
}
