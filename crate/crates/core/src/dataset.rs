//! Behaviour datasets: expert decisions on ordered node pairs.
//!
//! File layout:
//!
//! ```text
//! # symnode-dataset v1
//! # mode=pair
//! # features=GAPINF,GAP,...
//! # generator=<free text>
//! # split=train
//! # instances=<sha256 of the instance id list>
//! # instance=setcover-0003 samples=2
//! -1,x1,...,x40
//! 1,x1,...,x40
//! ```

use std::collections::{BTreeSet, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::features::{feature_map, PairFeatures, N_PAIR_FEATURES};
use crate::milp::Decision;
use crate::util::{sha256_hex, write_atomic};

const MAGIC: &str = "# symnode-dataset v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => Err(Error::Dataset(format!("unknown split `{s}`"))),
        }
    }
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Split::parse(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BehaviorSample {
    pub features: PairFeatures,
    pub decision: Decision,
    pub instance: String,
    /// Index of the comparison within its instance's solve.
    pub step: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub split: Split,
    pub generator: String,
    /// Every instance that contributed, in collection order, including
    /// those that produced no comparisons.
    pub instances: Vec<String>,
    pub samples: Vec<BehaviorSample>,
}

/// Column-major view used for vectorised reward evaluation.
#[derive(Debug, Clone)]
pub struct Columns {
    pub n: usize,
    pub cols: Vec<Vec<f64>>,
    pub node1: Vec<bool>,
}

impl Columns {
    pub fn column(&self, var: usize) -> &[f64] {
        &self.cols[var - 1]
    }

    /// Rows at `idx`, in that order.
    pub fn select(&self, idx: &[usize]) -> Columns {
        Columns {
            n: idx.len(),
            cols: self.cols.iter().map(|c| idx.iter().map(|&i| c[i]).collect()).collect(),
            node1: idx.iter().map(|&i| self.node1[i]).collect(),
        }
    }
}

impl Dataset {
    pub fn new(split: Split, generator: impl Into<String>) -> Self {
        Self { split, generator: generator.into(), instances: Vec::new(), samples: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Appends one instance's samples as a block.
    pub fn push_instance(&mut self, id: impl Into<String>, samples: Vec<BehaviorSample>) {
        let id = id.into();
        debug_assert!(samples.iter().all(|s| s.instance == id));
        self.instances.push(id);
        self.samples.extend(samples);
    }

    pub fn instance_hash(&self) -> String {
        sha256_hex(self.instances.join("\n").as_bytes())
    }

    pub fn samples_of<'a>(&'a self, id: &'a str) -> impl Iterator<Item = &'a BehaviorSample> + 'a {
        self.samples.iter().filter(move |s| s.instance == id)
    }

    pub fn columns(&self) -> Columns {
        let n = self.samples.len();
        let mut cols = vec![Vec::with_capacity(n); N_PAIR_FEATURES];
        for s in &self.samples {
            for (c, &v) in cols.iter_mut().zip(s.features.as_slice()) {
                c.push(v);
            }
        }
        Columns { n, cols, node1: self.samples.iter().map(|s| s.decision == Decision::Node1).collect() }
    }

    /// Share of samples labelled `Node1`.
    pub fn node1_share(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().filter(|s| s.decision == Decision::Node1).count() as f64 / self.samples.len() as f64
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{MAGIC}");
        let _ = writeln!(out, "# mode=pair");
        let _ = writeln!(out, "# features={}", feature_map());
        let _ = writeln!(out, "# generator={}", self.generator.replace('\n', " "));
        let _ = writeln!(out, "# split={}", self.split.as_str());
        let _ = writeln!(out, "# instances={}", self.instance_hash());
        for id in &self.instances {
            let block: Vec<_> = self.samples_of(id).collect();
            let _ = writeln!(out, "# instance={id} samples={}", block.len());
            for s in block {
                out.push_str(if s.decision == Decision::Node1 { "-1" } else { "1" });
                for v in s.features.as_slice() {
                    let _ = write!(out, ",{v}");
                }
                out.push('\n');
            }
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        Ok(write_atomic(path, self.to_text().as_bytes())?)
    }

    pub fn parse(text: &str) -> Result<Dataset> {
        let bad = |line: usize, msg: String| Error::Dataset(format!("line {}: {msg}", line + 1));
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, l)) if l.trim() == MAGIC => {}
            _ => return Err(Error::Dataset("missing dataset header".into())),
        }
        let mut split = None;
        let mut generator = String::new();
        let mut hash = None;
        let mut ds = Dataset::new(Split::Train, "");
        let mut current: Option<(String, usize, usize)> = None;
        for (ln, line) in lines {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let rest = rest.trim();
                if let Some((id, count)) = rest.strip_prefix("instance=").and_then(|r| r.split_once(" samples=")) {
                    close_block(&current, ln, &bad)?;
                    let count = count.parse().map_err(|_| bad(ln, format!("bad sample count `{count}`")))?;
                    ds.instances.push(id.to_string());
                    current = Some((id.to_string(), count, 0));
                } else if let Some((key, value)) = rest.split_once('=') {
                    match key {
                        "mode" if value != "pair" => return Err(bad(ln, format!("unsupported mode `{value}`"))),
                        "features" if value != feature_map() => {
                            return Err(bad(ln, "feature map differs from this build".into()))
                        }
                        "generator" => generator = value.to_string(),
                        "split" => split = Some(Split::parse(value)?),
                        "instances" => hash = Some(value.to_string()),
                        _ => {}
                    }
                }
                continue;
            }
            let Some((id, _, seen)) = current.as_mut() else {
                return Err(bad(ln, "record outside an instance block".into()));
            };
            let mut fields = line.split(',');
            let d: i64 = fields
                .next()
                .and_then(|f| f.trim().parse().ok())
                .ok_or_else(|| bad(ln, "missing decision".into()))?;
            let decision = Decision::from_label(d).ok_or_else(|| bad(ln, format!("decision must be -1 or 1, got {d}")))?;
            let mut features = [0.0; N_PAIR_FEATURES];
            let mut k = 0;
            for f in fields {
                if k == N_PAIR_FEATURES {
                    return Err(bad(ln, "too many feature values".into()));
                }
                let v: f64 = f.trim().parse().map_err(|_| bad(ln, format!("bad number `{f}`")))?;
                if !v.is_finite() {
                    return Err(bad(ln, "non-finite feature".into()));
                }
                features[k] = v;
                k += 1;
            }
            if k != N_PAIR_FEATURES {
                return Err(bad(ln, format!("expected {N_PAIR_FEATURES} features, found {k}")));
            }
            ds.samples.push(BehaviorSample { features: PairFeatures(features), decision, instance: id.clone(), step: *seen });
            *seen += 1;
        }
        close_block(&current, text.lines().count(), &bad)?;
        ds.split = split.ok_or_else(|| Error::Dataset("header lacks split".into()))?;
        ds.generator = generator;
        if let Some(h) = hash {
            if h != ds.instance_hash() {
                return Err(Error::Dataset("instance list hash mismatch".into()));
            }
        }
        Ok(ds)
    }

    pub fn read(path: &Path) -> Result<Dataset> {
        let text = std::fs::read_to_string(path)?;
        Dataset::parse(&text).map_err(|e| Error::Parse { path: path.to_path_buf(), msg: e.to_string() })
    }
}

fn close_block(current: &Option<(String, usize, usize)>, ln: usize, bad: &dyn Fn(usize, String) -> Error) -> Result<()> {
    if let Some((id, want, got)) = current {
        if want != got {
            return Err(bad(ln, format!("instance {id} declares {want} samples but has {got}")));
        }
    }
    Ok(())
}

/// Fails if any instance id appears in more than one dataset.
pub fn check_disjoint(sets: &[&Dataset]) -> Result<()> {
    let mut seen: HashSet<&str> = HashSet::new();
    for ds in sets {
        let ids: BTreeSet<&str> = ds.instances.iter().map(String::as_str).collect();
        for id in ids {
            if !seen.insert(id) {
                return Err(Error::Dataset(format!("instance {id} appears in more than one split")));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(id: &str, step: usize, d: Decision, seed: f64) -> BehaviorSample {
        let mut f = [0.0; N_PAIR_FEATURES];
        for (i, v) in f.iter_mut().enumerate() {
            *v = seed * (i as f64 + 0.1) / 3.0 - 1e-7 * i as f64;
        }
        BehaviorSample { features: PairFeatures(f), decision: d, instance: id.into(), step }
    }

    #[test]
    fn text_round_trip_is_exact() {
        let mut ds = Dataset::new(Split::Val, "setcover rows=100 cols=200");
        ds.push_instance("a", vec![sample("a", 0, Decision::Node1, 0.3), sample("a", 1, Decision::Node2, -7.1)]);
        ds.push_instance("empty", vec![]);
        ds.push_instance("b", vec![sample("b", 0, Decision::Node2, 1e-300)]);
        let text = ds.to_text();
        let back = Dataset::parse(&text).unwrap();
        assert_eq!(back, ds);
        assert_eq!(back.to_text(), text);
    }

    #[test]
    fn rejects_bad_inputs() {
        let mut ds = Dataset::new(Split::Train, "g");
        ds.push_instance("a", vec![sample("a", 0, Decision::Node1, 1.0)]);
        let text = ds.to_text();
        assert!(Dataset::parse(&text.replace("samples=1", "samples=2")).is_err());
        assert!(Dataset::parse(&text.replace("# mode=pair", "# mode=tri")).is_err());
        assert!(Dataset::parse(&text.replace("GAPINF", "GAP_INF")).is_err());
        assert!(Dataset::parse(&text.replace("\n-1,", "\n0,")).is_err());
        assert!(Dataset::parse(&text.replace("instance=a", "instance=b")).is_err());
        assert!(Dataset::parse("").is_err());
    }

    #[test]
    fn split_hygiene() {
        let mut a = Dataset::new(Split::Train, "");
        a.push_instance("x", vec![]);
        let mut b = Dataset::new(Split::Val, "");
        b.push_instance("y", vec![]);
        assert!(check_disjoint(&[&a, &b]).is_ok());
        b.push_instance("x", vec![]);
        assert!(check_disjoint(&[&a, &b]).is_err());
    }

    #[test]
    fn columns_layout() {
        let mut ds = Dataset::new(Split::Train, "");
        ds.push_instance("a", vec![sample("a", 0, Decision::Node1, 1.0), sample("a", 1, Decision::Node2, 2.0)]);
        let c = ds.columns();
        assert_eq!(c.n, 2);
        assert_eq!(c.column(1)[1], ds.samples[1].features.0[0]);
        assert_eq!(c.column(40)[0], ds.samples[0].features.0[39]);
        assert_eq!(c.node1, vec![true, false]);
        let s = c.select(&[1]);
        assert_eq!(s.node1, vec![false]);
    }
}
