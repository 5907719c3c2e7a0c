//! Seed aggregation, long-format CSV, the rendered results table and plot data.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{CellKey, EffortCondition, Intervention, RunDigest};
use crate::config::Group;
use crate::error::{Error, Result};
use crate::metrics::{aggregate, MetricValue, RunMetrics, Stat, SuccessRecord};

pub const METRICS_CSV: &str = "metrics.csv";
pub const CELLS_FILE: &str = "cells.csv";
pub const ETR_SERIES_FILE: &str = "etr_series.csv";
pub const AGENTS_FILE: &str = "agent_outcomes.csv";
pub const WEIGHTS_FILE: &str = "weights.csv";

const ALL: &str = "all";

/// One line of the long-format aggregate. `timestep` is `None` for whole-run values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub metric: String,
    pub group: String,
    pub timestep: Option<usize>,
    pub stat: Option<Stat>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellReport {
    pub key: CellKey,
    pub cell_hash: String,
    pub seeds: Vec<u64>,
    pub horizon: usize,
    pub rows: Vec<AggregateRow>,
    /// Successful agents of the first seed, for distribution plots.
    pub agents: Vec<(u64, SuccessRecord)>,
    /// Scorer weights per step and seed, for runs that retrain.
    pub weights: Vec<(u64, Vec<Vec<f64>>)>,
}

impl CellReport {
    pub fn stat(&self, metric: &str, group: &str, timestep: Option<usize>) -> Option<Stat> {
        self.rows
            .iter()
            .find(|r| r.metric == metric && r.group == group && r.timestep == timestep)
            .and_then(|r| r.stat)
    }

    /// Whole-run value of a between-group metric such as `retr` or `dttr`.
    pub fn summary(&self, metric: &str) -> Option<Stat> {
        self.stat(metric, ALL, None)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsReport {
    pub cells: Vec<CellReport>,
}

/// Picks one series out of a run, given a group index.
type Series = for<'r> fn(&'r RunMetrics, usize) -> &'r [MetricValue];

impl MetricsReport {
    pub fn from_runs(entries: Vec<(CellKey, String, Vec<RunDigest>)>) -> Self {
        let mut cells: Vec<CellReport> = entries
            .into_iter()
            .map(|(key, hash, runs)| aggregate_cell(key, hash, &runs))
            .collect();
        cells.sort_by(|a, b| a.key.order(&b.key));
        MetricsReport { cells }
    }

    pub fn write_aggregate(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut cells = csv::Writer::from_path(dir.join(CELLS_FILE))?;
        cells.write_record(["config", "intervention", "q", "e_a", "e_d", "seeds"])?;
        for c in &self.cells {
            let seeds: Vec<String> = c.seeds.iter().map(u64::to_string).collect();
            cells.write_record([
                c.cell_hash.clone(),
                c.key.intervention.to_string(),
                c.key.q.to_string(),
                c.key.effort.e_a.to_string(),
                c.key.effort.e_d.to_string(),
                seeds.join(" "),
            ])?;
        }
        cells.flush().map_err(|e| Error::io(dir.join(CELLS_FILE), e))?;

        let mut w = csv::Writer::from_path(dir.join(METRICS_CSV))?;
        w.write_record(["config", "seed_count", "metric", "group", "timestep", "mean", "stderr"])?;
        for c in &self.cells {
            for r in &c.rows {
                let (n, mean, se) = match r.stat {
                    Some(s) => (s.n.to_string(), s.mean.to_string(), s.stderr.to_string()),
                    None => ("0".to_string(), String::new(), String::new()),
                };
                w.write_record([
                    c.cell_hash.as_str(),
                    &n,
                    &r.metric,
                    &r.group,
                    &r.timestep.map(|t| t.to_string()).unwrap_or_default(),
                    &mean,
                    &se,
                ])?;
            }
        }
        w.flush().map_err(|e| Error::io(dir.join(METRICS_CSV), e))
    }

    /// Reads what [`write_aggregate`](Self::write_aggregate) wrote. Per-agent and
    /// weight samples are not part of the aggregate and come back empty.
    pub fn read_aggregate(dir: &Path) -> Result<Self> {
        let mut cells = Vec::new();
        let mut index = BTreeMap::new();
        let mut r = open_csv(&dir.join(CELLS_FILE))?;
        for rec in r.records() {
            let rec = rec?;
            let field = |i: usize| rec.get(i).unwrap_or_default();
            let num = |i: usize| -> Result<f64> {
                field(i)
                    .parse()
                    .map_err(|_| Error::Harness(format!("bad number '{}' in {CELLS_FILE}", field(i))))
            };
            let seeds = field(5)
                .split_whitespace()
                .map(|s| {
                    s.parse()
                        .map_err(|_| Error::Harness(format!("bad seed '{s}' in {CELLS_FILE}")))
                })
                .collect::<Result<Vec<u64>>>()?;
            index.insert(field(0).to_string(), cells.len());
            cells.push(CellReport {
                key: CellKey {
                    intervention: field(1).parse::<Intervention>()?,
                    q: num(2)?,
                    effort: EffortCondition {
                        e_a: num(3)?,
                        e_d: num(4)?,
                    },
                },
                cell_hash: field(0).to_string(),
                seeds,
                horizon: 0,
                rows: Vec::new(),
                agents: Vec::new(),
                weights: Vec::new(),
            });
        }
        let mut r = open_csv(&dir.join(METRICS_CSV))?;
        for rec in r.records() {
            let rec = rec?;
            let field = |i: usize| rec.get(i).unwrap_or_default();
            let Some(&ci) = index.get(field(0)) else {
                return Err(Error::Harness(format!("unknown config '{}' in {METRICS_CSV}", field(0))));
            };
            let bad = || Error::Harness(format!("malformed row in {METRICS_CSV}: {rec:?}"));
            let timestep = match field(4) {
                "" => None,
                t => Some(t.parse::<usize>().map_err(|_| bad())?),
            };
            let stat = match field(5) {
                "" => None,
                m => Some(Stat {
                    mean: m.parse().map_err(|_| bad())?,
                    stderr: field(6).parse().map_err(|_| bad())?,
                    n: field(1).parse().map_err(|_| bad())?,
                }),
            };
            let cell = &mut cells[ci];
            if let Some(t) = timestep {
                cell.horizon = cell.horizon.max(t + 1);
            }
            cell.rows.push(AggregateRow {
                metric: field(2).to_string(),
                group: field(3).to_string(),
                timestep,
                stat,
            });
        }
        Ok(MetricsReport { cells })
    }
}

fn open_csv(path: &Path) -> Result<csv::Reader<fs::File>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Reader::from_reader(file))
}

fn aggregate_cell(key: CellKey, cell_hash: String, runs: &[RunDigest]) -> CellReport {
    let horizon = runs.iter().map(|r| r.metrics.horizon).max().unwrap_or(0);
    let mut rows = Vec::new();
    let mut push_series = |metric: &str, group: Option<Group>, series: Series| {
        let label = group.map_or(ALL, Group::as_str);
        let i = group.map_or(0, Group::index);
        for t in 0..horizon {
            rows.push(AggregateRow {
                metric: metric.to_string(),
                group: label.to_string(),
                timestep: Some(t),
                stat: aggregate(runs.iter().map(|r| series(&r.metrics, i).get(t).copied().flatten())),
            });
        }
    };
    for g in Group::BOTH.map(Some) {
        push_series("etr_step", g, |m, i| &m.etr_step[i]);
        push_series("etr_cum", g, |m, i| &m.etr_cum[i]);
        push_series("ttr_step", g, |m, i| &m.ttr_step[i]);
        push_series("ttr_cum", g, |m, i| &m.ttr_cum[i]);
        push_series("wasted", g, |m, i| &m.wasted[i]);
    }
    push_series("retr_step", None, |m, _| &m.retr_step);
    push_series("retr_cum", None, |m, _| &m.retr_cum);
    push_series("dttr_step", None, |m, _| &m.dttr_step);
    push_series("dttr_cum", None, |m, _| &m.dttr_cum);
    push_series("dp", None, |m, _| &m.dp);

    let summaries: Vec<_> = runs.iter().map(|r| r.metrics.summary()).collect();
    let mut whole = |metric: &str, group: &str, values: Vec<MetricValue>| {
        rows.push(AggregateRow {
            metric: metric.to_string(),
            group: group.to_string(),
            timestep: None,
            stat: aggregate(values),
        });
    };
    whole("retr", ALL, summaries.iter().map(|s| s.retr).collect());
    whole("dttr", ALL, summaries.iter().map(|s| s.dttr).collect());
    whole("dp_mean", ALL, summaries.iter().map(|s| s.dp).collect());
    whole("wasted_ratio", ALL, summaries.iter().map(|s| s.wasted_ratio).collect());
    for g in Group::BOTH {
        let i = g.index();
        whole("etr", g.as_str(), summaries.iter().map(|s| s.etr[i]).collect());
        whole("ttr", g.as_str(), summaries.iter().map(|s| s.ttr[i]).collect());
        whole("wasted", g.as_str(), summaries.iter().map(|s| s.wasted[i]).collect());
    }

    let agents = runs
        .iter()
        .find(|r| !r.metrics.successes.is_empty())
        .map(|r| r.metrics.successes.iter().map(|s| (r.seed, s.clone())).collect())
        .unwrap_or_default();
    let weights = if key.intervention.retraining() == crate::config::Retraining::None {
        Vec::new()
    } else {
        runs.iter().map(|r| (r.seed, r.metrics.weights.clone())).collect()
    };
    CellReport {
        key,
        cell_hash,
        seeds: runs.iter().map(|r| r.seed).collect(),
        horizon,
        rows,
        agents,
        weights,
    }
}

/// Index of the value closest to `fair`; the first one wins ties.
pub fn best_index(values: &[Option<f64>], fair: f64) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.iter().enumerate() {
        if let Some(v) = v {
            let d = (v - fair).abs();
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((i, d));
            }
        }
    }
    best.map(|(i, _)| i)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderedTable {
    pub text: String,
    pub csv: String,
}

const FOOTER: &str = "* best in row: rETR closest to 1, dTTR closest to 0. Values are judged by distance \
from the fair point, so an rETR below 1 is not counted as better than 1.\n\
Values are mean +/- standard error over seeds, cumulative from the first step to the horizon.";

/// Rows grouped by effort condition then q, one rETR/dTTR column pair per intervention.
pub fn render_table(report: &MetricsReport) -> RenderedTable {
    let mut interventions: Vec<Intervention> = report.cells.iter().map(|c| c.key.intervention).collect();
    interventions.sort();
    interventions.dedup();

    let mut rows: Vec<(EffortCondition, f64)> = Vec::new();
    for c in &report.cells {
        let row = (c.key.effort, c.key.q);
        if !rows.contains(&row) {
            rows.push(row);
        }
    }

    let fmt_stat = |s: Option<Stat>| s.map_or("-".to_string(), |s| format!("{:.3} ± {:.3}", s.mean, s.stderr));
    let mut text = String::new();
    let _ = write!(text, "{:<8} {:>4}", "effort", "q");
    for i in &interventions {
        let _ = write!(text, " | {:<17} {:<17}", format!("{i} rETR"), format!("{i} dTTR"));
    }
    text.push('\n');
    let mut csv = String::from(
        "effort,e_a,e_d,q,intervention,retr_mean,retr_stderr,dttr_mean,dttr_stderr,retr_best,dttr_best,config,seeds\n",
    );

    for (effort, q) in rows {
        let cells: Vec<Option<&CellReport>> = interventions
            .iter()
            .map(|i| {
                report
                    .cells
                    .iter()
                    .find(|c| c.key.intervention == *i && c.key.effort == effort && c.key.q == q)
            })
            .collect();
        let retr: Vec<Option<Stat>> = cells.iter().map(|c| c.and_then(|c| c.summary("retr"))).collect();
        let dttr: Vec<Option<Stat>> = cells.iter().map(|c| c.and_then(|c| c.summary("dttr"))).collect();
        let best_r = best_index(&retr.iter().map(|s| s.map(|s| s.mean)).collect::<Vec<_>>(), 1.0);
        let best_d = best_index(&dttr.iter().map(|s| s.map(|s| s.mean)).collect::<Vec<_>>(), 0.0);

        let _ = write!(text, "{:<8} {:>4}", effort.label(), q);
        for (j, cell) in cells.iter().enumerate() {
            let mark = |best: Option<usize>| if best == Some(j) { "*" } else { "" };
            let _ = write!(
                text,
                " | {:<17} {:<17}",
                format!("{}{}", fmt_stat(retr[j]), mark(best_r)),
                format!("{}{}", fmt_stat(dttr[j]), mark(best_d)),
            );
            if let Some(c) = cell {
                let num = |s: Option<Stat>, f: fn(Stat) -> f64| s.map(|s| f(s).to_string()).unwrap_or_default();
                let seeds: Vec<String> = c.seeds.iter().map(u64::to_string).collect();
                let _ = writeln!(
                    csv,
                    "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                    effort.label(),
                    effort.e_a,
                    effort.e_d,
                    q,
                    interventions[j],
                    num(retr[j], |s| s.mean),
                    num(retr[j], |s| s.stderr),
                    num(dttr[j], |s| s.mean),
                    num(dttr[j], |s| s.stderr),
                    best_r == Some(j),
                    best_d == Some(j),
                    c.cell_hash,
                    seeds.join(" "),
                );
            }
        }
        text.push('\n');
    }
    text.push('\n');
    text.push_str(FOOTER);
    text.push('\n');
    RenderedTable { text, csv }
}

fn key_fields(c: &CellReport) -> [String; 5] {
    [
        c.cell_hash.clone(),
        c.key.intervention.to_string(),
        c.key.q.to_string(),
        c.key.effort.e_a.to_string(),
        c.key.effort.e_d.to_string(),
    ]
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// Writes the ETR series, per-agent outcome and scorer-weight files into `dir`.
pub fn emit_plot_data(report: &MetricsReport, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let key_header = ["config", "intervention", "q", "e_a", "e_d"];

    let etr_path = dir.join(ETR_SERIES_FILE);
    let mut w = csv::Writer::from_path(&etr_path)?;
    w.write_record(
        key_header
            .iter()
            .chain(&["group", "timestep", "step_mean", "step_stderr", "cum_mean", "cum_stderr"]),
    )?;
    for c in &report.cells {
        for g in Group::BOTH {
            for t in 0..c.horizon {
                let step = c.stat("etr_step", g.as_str(), Some(t));
                let cum = c.stat("etr_cum", g.as_str(), Some(t));
                let mut rec: Vec<String> = key_fields(c).to_vec();
                rec.extend([
                    g.as_str().to_string(),
                    t.to_string(),
                    opt(step.map(|s| s.mean)),
                    opt(step.map(|s| s.stderr)),
                    opt(cum.map(|s| s.mean)),
                    opt(cum.map(|s| s.stderr)),
                ]);
                w.write_record(&rec)?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(&etr_path, e))?;

    let agents_path = dir.join(AGENTS_FILE);
    let mut w = csv::Writer::from_path(&agents_path)?;
    w.write_record(
        key_header
            .iter()
            .chain(&["seed", "agent_id", "group", "total_cost", "delta"]),
    )?;
    for c in &report.cells {
        for (seed, s) in &c.agents {
            let mut rec: Vec<String> = key_fields(c).to_vec();
            rec.extend([
                seed.to_string(),
                s.agent_id.to_string(),
                s.group.as_str().to_string(),
                s.total_cost.to_string(),
                s.delta.to_string(),
            ]);
            w.write_record(&rec)?;
        }
    }
    w.flush().map_err(|e| Error::io(&agents_path, e))?;

    let weights_path = dir.join(WEIGHTS_FILE);
    let mut w = csv::Writer::from_path(&weights_path)?;
    w.write_record(key_header.iter().chain(&["seed", "timestep", "w1", "w2", "bias"]))?;
    for c in &report.cells {
        for (seed, traj) in &c.weights {
            for (t, ws) in traj.iter().enumerate() {
                let mut rec: Vec<String> = key_fields(c).to_vec();
                rec.extend([seed.to_string(), t.to_string()]);
                rec.extend(ws.iter().map(f64::to_string));
                w.write_record(&rec)?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(&weights_path, e))?;

    Ok(vec![etr_path, agents_path, weights_path])
}
