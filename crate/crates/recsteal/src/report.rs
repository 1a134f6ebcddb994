//! Aggregation of per-seed rows into mean and sample standard deviation.

use std::fmt::Write as _;

use serde::Serialize;

use crate::experiment::ResultRow;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stat {
    pub mean: f64,
    /// Sample (n - 1) standard deviation; 0 for a single value.
    pub std: f64,
    pub n: usize,
}

impl Stat {
    pub fn of(values: &[f64]) -> Option<Self> {
        let n = values.len();
        if n == 0 {
            return None;
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Some(Self { mean, std, n })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Group {
    pub experiment: String,
    pub method: String,
    pub target_kind: String,
    pub clone_kind: String,
    pub k: usize,
    pub available_fraction: f64,
    pub aux_fraction: f64,
    pub overlap_ratio: f64,
    pub query_budget: Option<f64>,
    pub mix_count: usize,
    pub agreement: Option<Stat>,
    pub recall_raw: Option<Stat>,
    pub recall_defended: Option<Stat>,
    pub errors: usize,
}

impl Group {
    fn matches(&self, r: &ResultRow) -> bool {
        self.experiment == r.experiment
            && self.method == r.method
            && self.target_kind == r.target_kind
            && self.clone_kind == r.clone_kind
            && self.k == r.k
            && self.available_fraction.to_bits() == r.available_fraction.to_bits()
            && self.aux_fraction.to_bits() == r.aux_fraction.to_bits()
            && self.overlap_ratio.to_bits() == r.overlap_ratio.to_bits()
            && self.query_budget.map(f64::to_bits) == r.query_budget.map(f64::to_bits)
            && self.mix_count == r.mix_count
    }
}

/// Groups rows that differ only in seed, keeping first-appearance order.
pub fn aggregate(rows: &[ResultRow]) -> Vec<Group> {
    let mut groups: Vec<(Group, Vec<&ResultRow>)> = Vec::new();
    for r in rows {
        match groups.iter_mut().find(|(g, _)| g.matches(r)) {
            Some((_, members)) => members.push(r),
            None => groups.push((
                Group {
                    experiment: r.experiment.clone(),
                    method: r.method.clone(),
                    target_kind: r.target_kind.clone(),
                    clone_kind: r.clone_kind.clone(),
                    k: r.k,
                    available_fraction: r.available_fraction,
                    aux_fraction: r.aux_fraction,
                    overlap_ratio: r.overlap_ratio,
                    query_budget: r.query_budget,
                    mix_count: r.mix_count,
                    agreement: None,
                    recall_raw: None,
                    recall_defended: None,
                    errors: 0,
                },
                vec![r],
            )),
        }
    }
    groups
        .into_iter()
        .map(|(mut g, members)| {
            let col = |f: fn(&ResultRow) -> Option<f64>| {
                let v: Vec<f64> = members.iter().filter_map(|r| f(r)).collect();
                Stat::of(&v)
            };
            g.agreement = col(|r| r.agreement);
            g.recall_raw = col(|r| r.recall_raw);
            g.recall_defended = col(|r| r.recall_defended);
            g.errors = members.iter().filter(|r| !r.error.is_empty()).count();
            g
        })
        .collect()
}

fn cell(s: Option<Stat>) -> String {
    s.map_or_else(|| "-".into(), |s| format!("{:.4} ± {:.4}", s.mean, s.std))
}

/// Markdown table, one line per group.
pub fn render_table(groups: &[Group]) -> String {
    let mut out = String::from(
        "| experiment | method | target | clone | K | avail | aux | overlap | budget | d | Agreement | Recall | Recall (defended) | n | errors |\n\
         |---|---|---|---|---|---|---|---|---|---|---|---|---|---|---|\n",
    );
    for g in groups {
        let budget = g
            .query_budget
            .map_or_else(|| "all".into(), |q| q.to_string());
        let n = g.agreement.map_or(0, |s| s.n);
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} | {} | {} | {} | {} | {} | {} | {} | {} | {} | {} |",
            g.experiment,
            g.method,
            g.target_kind,
            g.clone_kind,
            g.k,
            g.available_fraction,
            g.aux_fraction,
            g.overlap_ratio,
            budget,
            g.mix_count,
            cell(g.agreement),
            cell(g.recall_raw),
            cell(g.recall_defended),
            n,
            g.errors
        );
    }
    out
}
