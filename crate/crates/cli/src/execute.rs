//! Running jobs and writing their artifacts.

use std::fs;
use std::io::BufWriter;
use std::path::Path;

use anyhow::{Context, Result};
use log::info;
use serde::Serialize;
use serde_json::json;
use wbkmeans::data::{squared_error_for_sites, ZERO_TOL};
use wbkmeans::parallel::map_slice;
use wbkmeans::{
    dispersion_constant, expand_assignment, init_sites, kernel_run_with, merge_must_link, multi_start, Assignment,
    Execution, FeasibilityCertificate, ImplicitSite, IndexMapping, KernelMatrix, RunTrace, RunVerdict,
    WeightedDataset,
};

use crate::ingest::write_triplets;
use crate::job::ResolvedJob;

/// Process exit status of a finished job.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Converged,
    IterationCap,
}

impl Status {
    pub fn code(self) -> u8 {
        match self {
            Status::Converged => 0,
            Status::IterationCap => 2,
        }
    }
}

#[derive(Serialize)]
struct SeedSummary {
    seed: u64,
    verdict: RunVerdict,
    theta: f64,
    squared_error: f64,
    iterations: usize,
    pivots: usize,
}

#[derive(Serialize)]
struct SeedTrace<'a, S> {
    seed: u64,
    trace: &'a RunTrace<S>,
}

#[derive(Serialize)]
struct Summary {
    command: &'static str,
    verdict: RunVerdict,
    theta: f64,
    squared_error: f64,
    fractional_count: usize,
    iterations: usize,
    points: usize,
    clusters: usize,
    merged_groups: Vec<Vec<usize>>,
    must_link_applied: bool,
    reduced_points: usize,
    dispersion_constant: Option<f64>,
    certificate: Option<wbkmeans::Verdict>,
    best_seed: u64,
    seeds: Vec<SeedSummary>,
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let path = dir.join(name);
    let file = fs::File::create(&path).with_context(|| format!("cannot create {}", path.display()))?;
    let mut out = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut out, value)?;
    std::io::Write::write_all(&mut out, b"\n")?;
    Ok(())
}

fn write_assignment(dir: &Path, y: &Assignment) -> Result<()> {
    let path = dir.join("assignment.csv");
    let file = fs::File::create(&path).with_context(|| format!("cannot create {}", path.display()))?;
    write_triplets(BufWriter::new(file), y, ZERO_TOL)
}

/// The data actually clustered, plus the way back to the original points.
struct Prepared {
    data: WeightedDataset,
    mapping: Option<IndexMapping>,
}

impl Prepared {
    fn new(job: &ResolvedJob) -> Result<Self> {
        match &job.must_link {
            None => Ok(Self {
                data: job.data.clone(),
                mapping: None,
            }),
            Some(groups) => {
                let (data, mapping) = merge_must_link(&job.data, groups)?;
                info!("must-link: {} points reduced to {}", job.data.len(), data.len());
                Ok(Self {
                    data,
                    mapping: Some(mapping),
                })
            }
        }
    }

    fn expand(&self, y: &Assignment) -> Result<Assignment> {
        match &self.mapping {
            None => Ok(y.clone()),
            Some(m) => Ok(expand_assignment(y, m)?),
        }
    }

    fn dispersion(&self, original: &WeightedDataset) -> f64 {
        self.mapping
            .as_ref()
            .map_or(0.0, |m| dispersion_constant(original, &self.data, m))
    }
}

fn status(verdict: RunVerdict) -> Status {
    match verdict {
        RunVerdict::Converged => Status::Converged,
        RunVerdict::IterationCap => Status::IterationCap,
    }
}

fn merged_groups(groups: &[Vec<usize>]) -> Vec<Vec<usize>> {
    groups.iter().filter(|g| g.len() > 1).cloned().collect()
}

/// Plain weight-balanced k-means over every seed; writes all artifacts.
pub fn run_plain(job: &ResolvedJob, exec: Execution) -> Result<Status> {
    let prep = Prepared::new(job)?;
    let out = multi_start(&prep.data, &job.bounds, &job.config, &job.seeds, exec)?;
    let best = out.best_run();
    info!("best seed {} with squared error {}", out.seeds[out.best], best.squared_error);

    let full = prep.expand(&best.assignment)?;
    let dispersion = prep.dispersion(&job.data);
    let squared_error = if prep.mapping.is_some() {
        squared_error_for_sites(&full, &job.data, &best.centroids.centers)?
    } else {
        best.squared_error
    };
    fs::create_dir_all(&job.out_dir).with_context(|| format!("cannot create {}", job.out_dir.display()))?;
    write_assignment(&job.out_dir, &full)?;
    write_json(
        &job.out_dir,
        "sites.json",
        &json!({
            "centroids": best.centroids.centers,
            "sites": best.diagram.sites(),
            "sigma": best.diagram.sigma(),
            "groups": best.groups,
        }),
    )?;
    let traces: Vec<_> = out
        .seeds
        .iter()
        .zip(&out.runs)
        .map(|(&seed, r)| SeedTrace { seed, trace: &r.trace })
        .collect();
    write_json(&job.out_dir, "trace.json", &traces)?;
    write_json(&job.out_dir, "certificate.json", &certificate_report(&best.certificate, prep.mapping.is_some()))?;

    let summary = Summary {
        command: "run",
        verdict: best.trace.verdict,
        theta: best.theta,
        squared_error,
        fractional_count: best.assignment.fractional_count(),
        iterations: best.trace.iterations(),
        points: job.data.len(),
        clusters: job.bounds.len(),
        merged_groups: merged_groups(&best.groups),
        must_link_applied: prep.mapping.is_some(),
        reduced_points: prep.data.len(),
        dispersion_constant: Some(dispersion),
        certificate: Some(best.certificate.verdict),
        best_seed: out.seeds[out.best],
        seeds: out
            .seeds
            .iter()
            .zip(&out.runs)
            .map(|(&seed, r)| SeedSummary {
                seed,
                verdict: r.trace.verdict,
                theta: r.theta,
                squared_error: r.squared_error,
                iterations: r.trace.iterations(),
                pivots: r.trace.total_pivots(),
            })
            .collect(),
    };
    write_json(&job.out_dir, "summary.json", &summary)?;
    Ok(status(best.trace.verdict))
}

fn certificate_report(cert: &FeasibilityCertificate, reduced: bool) -> serde_json::Value {
    json!({
        "verdict": cert.verdict,
        "witness": cert.witness,
        "points": if reduced { "merged" } else { "original" },
    })
}

/// Kernel k-means over every seed. No power diagram exists in feature space,
/// so no certificate is written.
pub fn run_kernel(job: &ResolvedJob, exec: Execution) -> Result<Status> {
    let kernel = job.kernel.expect("kernel job");
    let prep = Prepared::new(job)?;
    let km = KernelMatrix::new(&prep.data, kernel, exec)?;
    let k = job.bounds.len();
    let runs = map_slice(exec, &job.seeds, |&seed| {
        let sites = init_sites(&prep.data, k, &job.config.init, seed)?;
        let sites: Vec<ImplicitSite> = sites.sites().iter().cloned().map(ImplicitSite::Explicit).collect();
        let config = wbkmeans::RunConfig {
            seed,
            ..job.config.clone()
        };
        kernel_run_with(&km, &job.bounds, &sites, &config)
    })
    .into_iter()
    .collect::<wbkmeans::Result<Vec<_>>>()?;
    let best = (0..runs.len())
        .min_by(|&a, &b| runs[a].squared_error.total_cmp(&runs[b].squared_error).then(a.cmp(&b)))
        .expect("at least one seed");
    let run = &runs[best];

    fs::create_dir_all(&job.out_dir).with_context(|| format!("cannot create {}", job.out_dir.display()))?;
    write_assignment(&job.out_dir, &prep.expand(&run.assignment)?)?;
    write_json(
        &job.out_dir,
        "sites.json",
        &json!({ "kernel": kernel, "centroids": run.centroids, "groups": run.groups }),
    )?;
    let traces: Vec<_> = job
        .seeds
        .iter()
        .zip(&runs)
        .map(|(&seed, r)| SeedTrace { seed, trace: &r.trace })
        .collect();
    write_json(&job.out_dir, "trace.json", &traces)?;

    let summary = Summary {
        command: "kernel-run",
        verdict: run.trace.verdict,
        theta: run.theta,
        squared_error: run.squared_error,
        fractional_count: run.assignment.fractional_count(),
        iterations: run.trace.iterations(),
        points: job.data.len(),
        clusters: k,
        merged_groups: merged_groups(&run.groups),
        must_link_applied: prep.mapping.is_some(),
        reduced_points: prep.data.len(),
        dispersion_constant: None,
        certificate: None,
        best_seed: job.seeds[best],
        seeds: job
            .seeds
            .iter()
            .zip(&runs)
            .map(|(&seed, r)| SeedSummary {
                seed,
                verdict: r.trace.verdict,
                theta: r.theta,
                squared_error: r.squared_error,
                iterations: r.trace.iterations(),
                pivots: r.trace.total_pivots(),
            })
            .collect(),
    };
    write_json(&job.out_dir, "summary.json", &summary)?;
    Ok(status(run.trace.verdict))
}
