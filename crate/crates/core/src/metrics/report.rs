//! Per-item enrichment and transformation distances across three banks.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use super::distance::{distribution, emd_ordinal, emd_raw, tvd_nominal};
use super::items::{ItemSpec, ResponseTable};
use super::wilcoxon::{wilcoxon_one_sided, TestResult};
use super::MetricError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum DistanceKind {
    #[serde(rename = "EMD")]
    Emd,
    #[serde(rename = "TVD")]
    Tvd,
}

impl DistanceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DistanceKind::Emd => "EMD",
            DistanceKind::Tvd => "TVD",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CompareOptions {
    /// Report EMD in category units instead of dividing by `K - 1`.
    pub raw_emd: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ItemDistance {
    pub item_id: String,
    pub kind: DistanceKind,
    pub options_count: usize,
    pub enrichment: f64,
    pub transformation: f64,
}

impl ItemDistance {
    pub fn below_diagonal(&self) -> bool {
        self.transformation < self.enrichment
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KindSummary {
    pub kind: DistanceKind,
    pub items: usize,
    pub mean_enrichment: f64,
    pub mean_transformation: f64,
    /// Fraction of items with transformation < enrichment.
    pub fraction_below: f64,
    /// Omitted when every item's two distances are equal.
    pub test: Option<TestResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistanceReport {
    pub raw_emd: bool,
    pub items: Vec<ItemDistance>,
    pub summaries: Vec<KindSummary>,
}

impl DistanceReport {
    pub fn summary(&self, kind: DistanceKind) -> Option<&KindSummary> {
        self.summaries.iter().find(|s| s.kind == kind)
    }

    /// `transformation - enrichment` per item of one kind, in item order.
    pub fn differences(&self, kind: DistanceKind) -> Vec<f64> {
        self.items.iter().filter(|i| i.kind == kind).map(|i| i.transformation - i.enrichment).collect()
    }

    /// Scatter data of enrichment against transformation, one row per item.
    pub fn plot_csv(&self) -> String {
        let mut out = String::from("item_id,kind,enrichment,transformation,below_diagonal\n");
        for i in &self.items {
            writeln!(out, "{},{},{},{},{}", i.item_id, i.kind.as_str(), i.enrichment, i.transformation, i.below_diagonal())
                .expect("string write");
        }
        out
    }
}

/// Compares D, L and F banks on every non-demographic item.
pub fn compare_banks(
    d: &ResponseTable,
    l: &ResponseTable,
    f: &ResponseTable,
    items: &[ItemSpec],
    options: CompareOptions,
) -> Result<DistanceReport, MetricError> {
    let mut selected: Vec<&ItemSpec> = items.iter().filter(|i| !i.demographic).collect();
    if selected.is_empty() {
        return Err(MetricError::EmptyItemSet);
    }
    selected.sort_by(|a, b| a.item_id.cmp(&b.item_id));
    let mut rows = Vec::with_capacity(selected.len());
    for item in selected {
        let (pd, pl, pf) = (distribution(d, item)?, distribution(l, item)?, distribution(f, item)?);
        let (kind, dist): (_, fn(&[f64], &[f64]) -> Result<f64, MetricError>) = match (item.ordinal, options.raw_emd) {
            (true, false) => (DistanceKind::Emd, emd_ordinal),
            (true, true) => (DistanceKind::Emd, emd_raw),
            (false, _) => (DistanceKind::Tvd, tvd_nominal),
        };
        rows.push(ItemDistance {
            item_id: item.item_id.clone(),
            kind,
            options_count: item.options_count,
            enrichment: dist(&pd, &pl)?,
            transformation: dist(&pl, &pf)?,
        });
    }
    let mut by_kind: BTreeMap<DistanceKind, Vec<&ItemDistance>> = BTreeMap::new();
    for r in &rows {
        by_kind.entry(r.kind).or_default().push(r);
    }
    let summaries = by_kind
        .into_iter()
        .map(|(kind, rs)| {
            let n = rs.len() as f64;
            let diffs: Vec<f64> = rs.iter().map(|r| r.transformation - r.enrichment).collect();
            KindSummary {
                kind,
                items: rs.len(),
                mean_enrichment: rs.iter().map(|r| r.enrichment).sum::<f64>() / n,
                mean_transformation: rs.iter().map(|r| r.transformation).sum::<f64>() / n,
                fraction_below: rs.iter().filter(|r| r.below_diagonal()).count() as f64 / n,
                test: wilcoxon_one_sided(&diffs).ok(),
            }
        })
        .collect();
    Ok(DistanceReport { raw_emd: options.raw_emd, items: rows, summaries })
}
