//! Seeded set-cover and capacitated facility location generators.

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::dataset::Split;
use crate::error::{Error, Result};
use crate::milp::{MilpInstance, Sense};
use crate::util::{derive_seed, rng_for};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Setcover,
    Facilities,
    /// Reserved; not generated.
    Fcmcnf,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Setcover => "setcover",
            Family::Facilities => "facilities",
            Family::Fcmcnf => "fcmcnf",
        })
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "setcover" => Ok(Family::Setcover),
            "facilities" => Ok(Family::Facilities),
            "fcmcnf" => Ok(Family::Fcmcnf),
            _ => Err(Error::Config(format!("unknown family `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SetcoverConfig {
    pub rows: usize,
    pub cols: usize,
    pub density: f64,
    pub cost_lo: u32,
    pub cost_hi: u32,
}

impl Default for SetcoverConfig {
    fn default() -> Self {
        Self { rows: 100, cols: 200, density: 0.05, cost_lo: 1, cost_hi: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FacilitiesConfig {
    pub customers: usize,
    pub facilities: usize,
    /// Total capacity over total demand.
    pub capacity_ratio: f64,
}

impl Default for FacilitiesConfig {
    fn default() -> Self {
        Self { customers: 15, facilities: 8, capacity_ratio: 5.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    pub family: Family,
    pub setcover: SetcoverConfig,
    pub facilities: FacilitiesConfig,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self { family: Family::Setcover, setcover: SetcoverConfig::default(), facilities: FacilitiesConfig::default() }
    }
}

impl GenConfig {
    pub fn generate(&self, seed: u64) -> Result<MilpInstance> {
        match self.family {
            Family::Setcover => gen_setcover(&self.setcover, seed),
            Family::Facilities => gen_facilities(&self.facilities, seed),
            Family::Fcmcnf => Err(Error::InfeasibleConfig("the fcmcnf family is reserved and not generated".into())),
        }
    }

    /// Short size tag for manifests.
    pub fn size_tag(&self) -> String {
        match self.family {
            Family::Setcover => format!("{}x{}", self.setcover.rows, self.setcover.cols),
            Family::Facilities => format!("{}x{}", self.facilities.customers, self.facilities.facilities),
            Family::Fcmcnf => "-".into(),
        }
    }

    /// Stable text identifying every generator parameter.
    pub fn fingerprint(&self) -> String {
        serde_json::to_string(self).expect("plain config")
    }
}

/// `min c.x` subject to every row being covered by at least one chosen column.
pub fn gen_setcover(cfg: &SetcoverConfig, seed: u64) -> Result<MilpInstance> {
    let bad = |m: String| Err(Error::InfeasibleConfig(m));
    if cfg.rows < 2 || cfg.cols < 2 {
        return bad(format!("set cover needs at least 2 rows and 2 columns, got {}x{}", cfg.rows, cfg.cols));
    }
    if !(cfg.density > 0.0 && cfg.density <= 1.0) {
        return bad(format!("density {} outside (0, 1]", cfg.density));
    }
    if (cfg.cols as f64) * cfg.density < 1.0 {
        return bad(format!("cols * density = {} leaves rows uncoverable", cfg.cols as f64 * cfg.density));
    }
    if cfg.cost_lo == 0 || cfg.cost_lo > cfg.cost_hi {
        return bad(format!("cost range [{}, {}] is invalid", cfg.cost_lo, cfg.cost_hi));
    }
    let mut rng = rng_for(seed, &[0x5c]);
    let per_row = Binomial::new(cfg.cols as u64, cfg.density).expect("density checked");
    let mut rows = Vec::with_capacity(cfg.rows);
    for _ in 0..cfg.rows {
        let k = (per_row.sample(&mut rng) as usize).max(2);
        let mut cols = index::sample(&mut rng, cfg.cols, k).into_vec();
        cols.sort_unstable();
        MilpInstance::push_row(&mut rows, cols.into_iter().map(|j| (j, 1.0)).collect(), Sense::Ge, 1.0);
    }
    let c = (0..cfg.cols).map(|_| rng.gen_range(cfg.cost_lo..=cfg.cost_hi) as f64).collect();
    MilpInstance::new(cfg.cols, c, vec![0.0; cfg.cols], vec![1.0; cfg.cols], rows)
}

/// Capacitated facility location with binary openings `y_j` (first
/// `facilities` columns) and fractional assignments `x_ij` (customer-major).
pub fn gen_facilities(cfg: &FacilitiesConfig, seed: u64) -> Result<MilpInstance> {
    let (nc, nf) = (cfg.customers, cfg.facilities);
    if nc == 0 || nf == 0 {
        return Err(Error::InfeasibleConfig("facilities needs at least one customer and one facility".into()));
    }
    if !(cfg.capacity_ratio >= 1.2) {
        return Err(Error::InfeasibleConfig(format!("capacity ratio {} is below 1.2", cfg.capacity_ratio)));
    }
    let mut rng = rng_for(seed, &[0xfac]);
    let cust: Vec<(f64, f64)> = (0..nc).map(|_| (rng.gen(), rng.gen())).collect();
    let fac: Vec<(f64, f64)> = (0..nf).map(|_| (rng.gen(), rng.gen())).collect();
    let demand: Vec<f64> = (0..nc).map(|_| rng.gen_range(5..=35) as f64).collect();
    let raw_cap: Vec<f64> = (0..nf).map(|_| rng.gen_range(10..=160) as f64).collect();
    let fixed: Vec<f64> = raw_cap
        .iter()
        .map(|s| (rng.gen_range(100..=110) as f64 * s.sqrt() + rng.gen_range(0..=90) as f64).floor())
        .collect();
    let total_demand: f64 = demand.iter().sum();
    let total_raw: f64 = raw_cap.iter().sum();
    let cap: Vec<f64> = raw_cap.iter().map(|s| (s * cfg.capacity_ratio * total_demand / total_raw).floor()).collect();
    let cap_sum: f64 = cap.iter().sum();
    if cap_sum < 1.2 * total_demand {
        return Err(Error::InfeasibleConfig(format!("capacity {cap_sum} is below 1.2 x demand {total_demand}")));
    }

    let n = nf + nc * nf;
    let x = |i: usize, j: usize| nf + i * nf + j;
    let mut c = fixed.clone();
    for i in 0..nc {
        for j in 0..nf {
            let d = ((cust[i].0 - fac[j].0).powi(2) + (cust[i].1 - fac[j].1).powi(2)).sqrt();
            c.push(d * 10.0 * demand[i]);
        }
    }
    let mut rows = Vec::new();
    // Capacity: sum_i d_i x_ij - s_j y_j <= 0.
    for j in 0..nf {
        let mut coeffs: Vec<(usize, f64)> = (0..nc).map(|i| (x(i, j), demand[i])).collect();
        coeffs.insert(0, (j, -cap[j]));
        MilpInstance::push_row(&mut rows, coeffs, Sense::Le, 0.0);
    }
    // Demand: sum_j x_ij >= 1.
    for i in 0..nc {
        MilpInstance::push_row(&mut rows, (0..nf).map(|j| (x(i, j), 1.0)).collect(), Sense::Ge, 1.0);
    }
    // Linking: x_ij - y_j <= 0.
    for i in 0..nc {
        for j in 0..nf {
            MilpInstance::push_row(&mut rows, vec![(j, -1.0), (x(i, j), 1.0)], Sense::Le, 0.0);
        }
    }
    // Total capacity covers total demand.
    MilpInstance::push_row(&mut rows, (0..nf).map(|j| (j, cap[j])).collect(), Sense::Ge, total_demand);
    MilpInstance::new(nf, c, vec![0.0; n], vec![1.0; n], rows)
}

/// One planned corpus instance.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub id: String,
    pub family: Family,
    pub split: Split,
    pub seed: u64,
    pub size: String,
    pub optimum: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub generator: GenConfig,
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self { generator: GenConfig::default(), train: 200, val: 40, test: 20 }
    }
}

impl CorpusConfig {
    pub fn count(&self, split: Split) -> usize {
        match split {
            Split::Train => self.train,
            Split::Val => self.val,
            Split::Test => self.test,
        }
    }

    /// Instance ids and seeds for every split, in split then index order.
    pub fn plan(&self, master_seed: u64) -> Vec<ManifestEntry> {
        let fam = self.generator.family;
        let mut out = Vec::new();
        for (k, split) in [Split::Train, Split::Val, Split::Test].into_iter().enumerate() {
            for i in 0..self.count(split) {
                out.push(ManifestEntry {
                    id: format!("{fam}-{split}-{i:04}"),
                    family: fam,
                    split,
                    seed: derive_seed(master_seed, &[fam as u64, k as u64, i as u64]),
                    size: self.generator.size_tag(),
                    optimum: None,
                });
            }
        }
        out
    }
}

const MANIFEST_HEADER: &str = "id\tfamily\tsplit\tseed\tsize\toptimum";

pub fn manifest_tsv(entries: &[ManifestEntry]) -> String {
    let mut out = String::from(MANIFEST_HEADER);
    out.push('\n');
    for e in entries {
        let opt = e.optimum.map(|v| format!("{v}")).unwrap_or_default();
        out.push_str(&format!("{}\t{}\t{}\t{}\t{}\t{}\n", e.id, e.family, e.split, e.seed, e.size, opt));
    }
    out
}

pub fn parse_manifest(text: &str) -> Result<Vec<ManifestEntry>> {
    let mut lines = text.lines();
    if lines.next() != Some(MANIFEST_HEADER) {
        return Err(Error::Dataset("manifest header missing".into()));
    }
    let mut out = Vec::new();
    for (k, line) in lines.enumerate().filter(|(_, l)| !l.is_empty()) {
        let f: Vec<&str> = line.split('\t').collect();
        let bad = || Error::Dataset(format!("manifest line {}: `{line}`", k + 2));
        if f.len() != 6 {
            return Err(bad());
        }
        out.push(ManifestEntry {
            id: f[0].to_string(),
            family: f[1].parse().map_err(|_| bad())?,
            split: f[2].parse().map_err(|_| bad())?,
            seed: f[3].parse().map_err(|_| bad())?,
            size: f[4].to_string(),
            optimum: if f[5].is_empty() { None } else { Some(f[5].parse().map_err(|_| bad())?) },
        });
    }
    Ok(out)
}
