//! Job specifications: a TOML document, overridden field by field from flags.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::Deserialize;
use wbkmeans::data::SITE_MERGE_TOL;
use wbkmeans::{ClusterBounds, InitStrategy, KernelFunction, MustLinkGroups, RunConfig, WeightedDataset};

use crate::ingest::{read_points, Header};

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobSpec {
    pub input: Option<PathBuf>,
    pub k: Option<usize>,
    pub header: Option<bool>,
    pub delimiter: Option<char>,
    #[serde(default)]
    pub bounds: BoundsSpec,
    pub kernel: Option<KernelFunction>,
    #[serde(default)]
    pub init: InitSpec,
    #[serde(default)]
    pub tolerances: ToleranceSpec,
    #[serde(default)]
    pub must_link: MustLinkSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsSpec {
    pub balanced: Option<Fraction>,
    pub lower: Option<Vec<f64>>,
    pub upper: Option<Vec<f64>>,
}

/// A slack given as `0.1` or `"10%"`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum Fraction {
    Number(f64),
    Text(String),
}

impl Fraction {
    pub fn value(&self) -> Result<f64> {
        match self {
            Fraction::Number(v) => Ok(*v),
            Fraction::Text(t) => {
                let t = t.trim();
                match t.strip_suffix('%') {
                    Some(p) => p.trim().parse::<f64>().map(|v| v / 100.0),
                    None => t.parse(),
                }
                .map_err(|_| anyhow!("bounds.balanced: {t:?} is neither a fraction nor a percentage"))
            }
        }
    }
}

impl std::str::FromStr for Fraction {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(Fraction::Text(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum StrategyName {
    WeightedFarthest,
    UniformSample,
    Explicit,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitSpec {
    pub strategy: Option<StrategyName>,
    pub seeds: Option<Vec<u64>>,
    pub sites: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceSpec {
    pub max_iterations: Option<usize>,
    pub objective: Option<f64>,
    pub site_merge: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MustLinkSpec {
    #[serde(default)]
    pub pairs: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: Option<PathBuf>,
    pub record_assignments: Option<bool>,
}

impl JobSpec {
    /// Reads a job file; relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        let mut spec: JobSpec = toml::from_str(&text).with_context(|| format!("invalid job file {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut spec.input, &mut spec.output.dir].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(spec)
    }
}

/// A job with data loaded and every field checked.
#[derive(Debug, Clone)]
pub struct ResolvedJob {
    pub data: WeightedDataset,
    pub bounds: ClusterBounds,
    pub config: RunConfig,
    pub seeds: Vec<u64>,
    pub must_link: Option<MustLinkGroups>,
    pub kernel: Option<KernelFunction>,
    pub out_dir: PathBuf,
}

pub fn parse_delimiter(c: Option<char>) -> Result<u8> {
    let c = c.unwrap_or(',');
    u8::try_from(c).map_err(|_| anyhow!("delimiter {c:?} must be a single-byte character"))
}

pub fn resolve_bounds(spec: &BoundsSpec, k: usize, total_weight: f64) -> Result<ClusterBounds> {
    let bounds = match (&spec.balanced, &spec.lower, &spec.upper) {
        (Some(_), Some(_), _) | (Some(_), _, Some(_)) => {
            bail!("bounds: give either balanced or lower/upper, not both")
        }
        (Some(p), None, None) => ClusterBounds::balanced(k, total_weight, p.value()?).context("bounds.balanced")?,
        (None, Some(lo), Some(hi)) => {
            if lo.len() != k || hi.len() != k {
                bail!("bounds: k = {k} but lower has {} entries and upper {}", lo.len(), hi.len());
            }
            ClusterBounds::new(lo.clone(), hi.clone()).context("bounds")?
        }
        (None, None, None) => bail!("bounds: missing; set bounds.balanced or bounds.lower and bounds.upper"),
        _ => bail!("bounds: lower and upper must be given together"),
    };
    bounds.check_feasible(total_weight)?;
    Ok(bounds)
}

impl JobSpec {
    pub fn resolve(&self, require_kernel: bool) -> Result<ResolvedJob> {
        let input = self.input.as_ref().ok_or_else(|| anyhow!("input: no point file given"))?;
        let k = self.k.ok_or_else(|| anyhow!("k: number of clusters not given"))?;
        if k == 0 {
            bail!("k: must be at least 1");
        }
        let data = read_points(input, parse_delimiter(self.delimiter)?, Header::from_flag(self.header))?;
        let bounds = resolve_bounds(&self.bounds, k, data.total_weight())?;

        let kernel = match (require_kernel, self.kernel) {
            (true, None) => bail!("kernel: kernel-run needs an explicit kernel and its parameters"),
            (true, Some(kf)) => {
                kf.validate().context("kernel")?;
                Some(kf)
            }
            (false, Some(_)) => bail!("kernel: set only for kernel-run"),
            (false, None) => None,
        };

        let init = match (self.init.strategy, &self.init.sites) {
            (Some(StrategyName::Explicit) | None, Some(sites)) => {
                if sites.len() != k {
                    bail!("init.sites: {} sites given for k = {k}", sites.len());
                }
                InitStrategy::Explicit(sites.clone())
            }
            (Some(StrategyName::Explicit), None) => bail!("init.sites: explicit strategy needs sites"),
            (Some(_), Some(_)) => bail!("init.sites: only allowed with the explicit strategy"),
            (Some(StrategyName::UniformSample), None) => InitStrategy::UniformSample,
            (Some(StrategyName::WeightedFarthest) | None, None) => InitStrategy::WeightedFarthest,
        };
        let seeds = self.init.seeds.clone().unwrap_or_else(|| vec![0]);
        if seeds.is_empty() {
            bail!("init.seeds: empty list");
        }

        let defaults = RunConfig::default();
        let config = RunConfig {
            max_iterations: self.tolerances.max_iterations.unwrap_or(defaults.max_iterations),
            objective_tolerance: self.tolerances.objective.unwrap_or(defaults.objective_tolerance),
            site_merge_tolerance: self.tolerances.site_merge.unwrap_or(SITE_MERGE_TOL),
            init,
            record_assignments: self.output.record_assignments.unwrap_or(false),
            ..defaults
        };
        config.validate().context("tolerances")?;

        let must_link = if self.must_link.pairs.is_empty() {
            None
        } else {
            Some(MustLinkGroups::from_pairs(data.len(), &self.must_link.pairs).context("must_link.pairs")?)
        };
        Ok(ResolvedJob {
            data,
            bounds,
            config,
            seeds,
            must_link,
            kernel,
            out_dir: self.output.dir.clone().unwrap_or_else(|| PathBuf::from("wbkmeans-out")),
        })
    }
}
