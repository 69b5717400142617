use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::harness::MetricsReport;
use super::metrics::{Metric, METRICS};
use super::stats::{wilcoxon_signed_rank, Wilcoxon};
use crate::error::{Error, Result};
use crate::sim::Category;

/// Reports of several algorithms on one scenario with matched seeds, plus
/// paired tests of each against the reference.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub scenario: String,
    pub category: Category,
    pub reference: String,
    pub seeds: Vec<u64>,
    pub reports: Vec<MetricsReport>,
    /// `tests[alg][metric]`; `None` when there are too few non-zero pairs.
    pub tests: BTreeMap<String, BTreeMap<Metric, Option<Wilcoxon>>>,
}

pub fn compare(reports: Vec<MetricsReport>, reference: &str) -> Result<Comparison> {
    let Some(first) = reports.first() else {
        return Err(Error::InvalidArgument("nothing to compare".into()));
    };
    for r in &reports {
        if r.seeds != first.seeds {
            return Err(Error::InvalidArgument(format!(
                "{} ran different seeds than {}; episodes are not paired",
                r.algorithm, first.algorithm
            )));
        }
        if r.scenario != first.scenario {
            return Err(Error::InvalidArgument(format!(
                "reports span scenarios {} and {}",
                first.scenario, r.scenario
            )));
        }
    }
    let refr = reports
        .iter()
        .find(|r| r.algorithm == reference)
        .ok_or_else(|| Error::Unknown {
            kind: "reference algorithm",
            name: reference.to_string(),
        })?;
    let mut tests = BTreeMap::new();
    for r in &reports {
        let per: BTreeMap<Metric, Option<Wilcoxon>> = METRICS
            .iter()
            .map(|&m| (m, wilcoxon_signed_rank(&r.values(m), &refr.values(m)).ok()))
            .collect();
        tests.insert(r.algorithm.clone(), per);
    }
    Ok(Comparison {
        scenario: first.scenario.clone(),
        category: first.category,
        reference: reference.to_string(),
        seeds: first.seeds.clone(),
        tests,
        reports,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mark {
    Best,
    Second,
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub mark: Mark,
    /// Wilcoxon p against the reference.
    pub p: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub algorithm: String,
    pub cells: Vec<Cell>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareTable {
    pub scenario: String,
    pub reference: String,
    pub metrics: Vec<Metric>,
    pub rows: Vec<TableRow>,
}

/// Best and second-best marks per column: the top two distinct means in the
/// metric's preferred direction.
pub fn marks(values: &[f64], lower_is_better: bool) -> Vec<Mark> {
    let mut distinct: Vec<f64> = values.iter().copied().filter(|v| !v.is_nan()).collect();
    distinct.sort_by(|a, b| if lower_is_better { a.total_cmp(b) } else { b.total_cmp(a) });
    distinct.dedup();
    values
        .iter()
        .map(|v| match distinct.iter().position(|d| d == v) {
            Some(0) => Mark::Best,
            Some(1) => Mark::Second,
            _ => Mark::None,
        })
        .collect()
}

pub fn compare_table(cmp: &Comparison) -> CompareTable {
    let mut rows: Vec<TableRow> = cmp
        .reports
        .iter()
        .map(|r| TableRow {
            algorithm: r.algorithm.clone(),
            cells: METRICS
                .iter()
                .map(|m| {
                    let s = r.aggregates[m];
                    Cell {
                        mean: s.mean,
                        ci_low: s.ci_low,
                        ci_high: s.ci_high,
                        mark: Mark::None,
                        p: cmp.tests.get(&r.algorithm).and_then(|t| t[m]).map(|w| w.p),
                    }
                })
                .collect(),
        })
        .collect();
    for (j, m) in METRICS.iter().enumerate() {
        let vals: Vec<f64> = rows.iter().map(|r| r.cells[j].mean).collect();
        for (row, mark) in rows.iter_mut().zip(marks(&vals, m.lower_is_better())) {
            row.cells[j].mark = mark;
        }
    }
    CompareTable {
        scenario: cmp.scenario.clone(),
        reference: cmp.reference.clone(),
        metrics: METRICS.to_vec(),
        rows,
    }
}

fn mark_str(m: Mark) -> &'static str {
    match m {
        Mark::Best => "best",
        Mark::Second => "second",
        Mark::None => "",
    }
}

fn opt(p: Option<f64>) -> String {
    p.map_or_else(String::new, |p| p.to_string())
}

impl CompareTable {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Corrupt(format!("table json: {e}")))
    }

    /// One row per algorithm; per metric: mean, CI bounds, mark and p.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["algorithm".to_string()];
        for m in &self.metrics {
            for suffix in ["mean", "ci_low", "ci_high", "mark", "p"] {
                header.push(format!("{}_{suffix}", m.as_str()));
            }
        }
        let err = |e: csv::Error| Error::Corrupt(format!("table csv: {e}"));
        w.write_record(&header).map_err(err)?;
        for r in &self.rows {
            let mut rec = vec![r.algorithm.clone()];
            for c in &r.cells {
                rec.extend([
                    c.mean.to_string(),
                    c.ci_low.to_string(),
                    c.ci_high.to_string(),
                    mark_str(c.mark).to_string(),
                    opt(c.p),
                ]);
            }
            w.write_record(&rec).map_err(err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Corrupt(format!("table csv: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Fixed-width text; `*` marks the best value in a column, `+` the second.
    pub fn to_text(&self) -> String {
        let mut head = vec![format!("{:<12}", "algorithm")];
        for m in &self.metrics {
            head.push(format!("{:>20}", format!("{} {}", m.as_str(), m.arrow())));
        }
        let mut out = String::new();
        let _ = writeln!(out, "scenario {}, p vs {}", self.scenario, self.reference);
        let _ = writeln!(out, "{}", head.join(" "));
        for r in &self.rows {
            let mut line = vec![format!("{:<12}", r.algorithm)];
            for c in &r.cells {
                let tag = match c.mark {
                    Mark::Best => "*",
                    Mark::Second => "+",
                    Mark::None => " ",
                };
                line.push(format!("{:>19}{tag}", format!("{:.3}±{:.3}", c.mean, (c.ci_high - c.ci_low) / 2.0)));
            }
            let _ = writeln!(out, "{}", line.join(" "));
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlotRow {
    pub category: Category,
    pub algorithm: String,
    pub metric: Metric,
    /// Mean over the category's scenarios of per-scenario means.
    pub mean: f64,
    pub scenarios: usize,
}

/// Per-category, per-algorithm averages for bar plots.
pub fn category_plot(comparisons: &[Comparison]) -> Vec<PlotRow> {
    let mut acc: BTreeMap<(usize, String, Metric), (f64, usize)> = BTreeMap::new();
    for c in comparisons {
        let cat = Category::ALL.iter().position(|&x| x == c.category).unwrap_or(0);
        for r in &c.reports {
            for m in METRICS {
                let e = acc.entry((cat, r.algorithm.clone(), m)).or_insert((0.0, 0));
                e.0 += r.aggregates[&m].mean;
                e.1 += 1;
            }
        }
    }
    acc.into_iter()
        .map(|((cat, algorithm, metric), (sum, k))| PlotRow {
            category: Category::ALL[cat],
            algorithm,
            metric,
            mean: sum / k as f64,
            scenarios: k,
        })
        .collect()
}

pub fn plot_csv(rows: &[PlotRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| Error::Corrupt(format!("plot csv: {e}"));
    w.write_record(["category", "algorithm", "metric", "mean", "scenarios"]).map_err(err)?;
    for r in rows {
        w.write_record([
            r.category.as_str().to_string(),
            r.algorithm.clone(),
            r.metric.as_str().to_string(),
            r.mean.to_string(),
            r.scenarios.to_string(),
        ])
        .map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Corrupt(format!("plot csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
