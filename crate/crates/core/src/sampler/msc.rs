//! Maximum source contribution: the largest share of a synthetic graph that
//! any single source persona accounts for. A node drawn from `k` personas
//! credits each of them `1/k`.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use serde::Serialize;

use super::FrankenGraph;
use crate::graph::{NodeId, PersonaId};

pub const DEFAULT_MSC_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MscError {
    #[error("synthetic graph {0} has no nodes")]
    EmptyGraph(String),
    #[error("node {0} has empty provenance")]
    EmptyProvenance(NodeId),
    #[error("empty synthetic bank")]
    EmptyBank,
    #[error("threshold must lie in [0, 1], got {0}")]
    InvalidThreshold(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MscEntry {
    pub synthetic_id: String,
    pub msc: f64,
    /// Source with the largest credit; ties go to the smallest id.
    pub dominant_source: PersonaId,
    pub sources_drawn: usize,
    pub node_count: usize,
    pub credits: BTreeMap<PersonaId, f64>,
}

pub fn msc(f: &FrankenGraph) -> Result<MscEntry, MscError> {
    if f.nodes.is_empty() {
        return Err(MscError::EmptyGraph(f.synthetic_id.clone()));
    }
    let mut credits: BTreeMap<PersonaId, f64> = BTreeMap::new();
    for node in f.nodes.values() {
        if node.provenance.is_empty() {
            return Err(MscError::EmptyProvenance(node.id.clone()));
        }
        let share = 1.0 / node.provenance.len() as f64;
        for p in &node.provenance {
            *credits.entry(p.clone()).or_default() += share;
        }
    }
    let (dominant, top) = credits
        .iter()
        .fold(None::<(&PersonaId, f64)>, |best, (p, &c)| match best {
            Some((_, b)) if b >= c => best,
            _ => Some((p, c)),
        })
        .expect("at least one source");
    Ok(MscEntry {
        synthetic_id: f.synthetic_id.clone(),
        msc: top / f.nodes.len() as f64,
        dominant_source: dominant.clone(),
        sources_drawn: credits.len(),
        node_count: f.nodes.len(),
        credits,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MscReport {
    pub entries: Vec<MscEntry>,
    pub threshold: f64,
    pub mean: f64,
    /// Sample standard deviation; 0 for a single entry.
    pub sd: f64,
    pub min: f64,
    pub max: f64,
    /// Fraction of entries with `msc < threshold`.
    pub fraction_below: f64,
    /// Ids of entries with `msc >= threshold`.
    pub flagged: Vec<String>,
    pub mean_sources_drawn: f64,
}

pub fn bank_msc(bank: &[FrankenGraph], threshold: f64) -> Result<MscReport, MscError> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(MscError::InvalidThreshold(threshold));
    }
    if bank.is_empty() {
        return Err(MscError::EmptyBank);
    }
    let entries = bank.iter().map(msc).collect::<Result<Vec<_>, _>>()?;
    let n = entries.len() as f64;
    let values: Vec<f64> = entries.iter().map(|e| e.msc).collect();
    let mean = values.iter().sum::<f64>() / n;
    let sd = if entries.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let flagged: Vec<String> =
        entries.iter().filter(|e| e.msc >= threshold).map(|e| e.synthetic_id.clone()).collect();
    Ok(MscReport {
        threshold,
        mean,
        sd,
        min: values.iter().copied().fold(f64::INFINITY, f64::min),
        max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        fraction_below: (entries.len() - flagged.len()) as f64 / n,
        mean_sources_drawn: entries.iter().map(|e| e.sources_drawn as f64).sum::<f64>() / n,
        flagged,
        entries,
    })
}

impl fmt::Display for MscReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut out = String::new();
        writeln!(out, "{:<20} {:>6} {:>7} {:>7}  dominant", "synthetic_id", "nodes", "msc", "sources")?;
        for e in &self.entries {
            writeln!(
                out,
                "{:<20} {:>6} {:>7.3} {:>7}  {}",
                e.synthetic_id, e.node_count, e.msc, e.sources_drawn, e.dominant_source
            )?;
        }
        writeln!(
            out,
            "mean {:.3} (sd {:.3}, min {:.3}, max {:.3}); {:.1}% below {}; {} flagged",
            self.mean,
            self.sd,
            self.min,
            self.max,
            100.0 * self.fraction_below,
            self.threshold,
            self.flagged.len()
        )?;
        f.write_str(&out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Node, NodeKind, Provenance};
    use crate::sampler::WalkParams;

    fn graph(id: &str, provenance: &[&[&str]]) -> FrankenGraph {
        let nodes = provenance
            .iter()
            .enumerate()
            .map(|(i, srcs)| {
                let mut n = Node::new(format!("n{i}"), NodeKind::Factual, format!("event {i}"));
                n.provenance = srcs.iter().map(|s| PersonaId::from(*s)).collect::<Provenance>();
                (n.id.clone(), n)
            })
            .collect();
        FrankenGraph {
            synthetic_id: id.into(),
            anchor: NodeId::from("n0"),
            params: WalkParams::new("n0"),
            nodes,
            edges: vec![],
            perturbed: BTreeMap::new(),
        }
    }

    #[test]
    fn fractional_credit() {
        // A: 1 + 1/2 = 1.5, B: 1/2 + 1 + 1/2 = 2, C: 1/2.
        let f = graph("g", &[&["A"], &["A", "B"], &["B"], &["B", "C"]]);
        let e = msc(&f).unwrap();
        assert_eq!(e.msc, 0.5);
        assert_eq!(e.dominant_source, PersonaId::from("B"));
        assert_eq!(e.sources_drawn, 3);
    }

    #[test]
    fn one_source_per_node() {
        for n in 1..=12 {
            let names: Vec<String> = (0..n).map(|i| format!("p{i:02}")).collect();
            let provs: Vec<Vec<&str>> = names.iter().map(|s| vec![s.as_str()]).collect();
            let refs: Vec<&[&str]> = provs.iter().map(|v| v.as_slice()).collect();
            let e = msc(&graph("g", &refs)).unwrap();
            assert_eq!(e.msc, 1.0 / n as f64);
            assert_eq!(e.dominant_source, PersonaId::from("p00"));
        }
    }

    #[test]
    fn single_source_is_one() {
        let e = msc(&graph("g", &[&["A"], &["A"], &["A"]])).unwrap();
        assert_eq!(e.msc, 1.0);
    }

    #[test]
    fn errors() {
        assert_eq!(msc(&graph("g", &[])), Err(MscError::EmptyGraph("g".into())));
        assert_eq!(msc(&graph("g", &[&[]])), Err(MscError::EmptyProvenance(NodeId::from("n0"))));
        assert_eq!(bank_msc(&[], 0.5), Err(MscError::EmptyBank));
    }

    #[test]
    fn bank_summary() {
        let bank = vec![graph("a", &[&["A"], &["B"]]), graph("b", &[&["A"]]), graph("c", &[&["A"], &["B"], &["C"], &["D"]])];
        let r = bank_msc(&bank, 0.5).unwrap();
        assert_eq!(r.flagged, vec!["a".to_string(), "b".to_string()]);
        assert!((r.fraction_below - 1.0 / 3.0).abs() < 1e-12);
        assert!((r.mean - (0.5 + 1.0 + 0.25) / 3.0).abs() < 1e-12);
        assert_eq!((r.min, r.max), (0.25, 1.0));
        let mean: f64 = (0.5 + 1.0 + 0.25) / 3.0;
        let sd = (((0.5 - mean).powi(2) + (1.0 - mean).powi(2) + (0.25 - mean).powi(2)) / 2.0).sqrt();
        assert!((r.sd - sd).abs() < 1e-12);
        assert!(r.to_string().contains("2 flagged"));
    }
}
