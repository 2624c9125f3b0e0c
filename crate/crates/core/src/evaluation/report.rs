use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{run_pairing_episodes, EvalError, PairingSpec, SeatPolicy};
use crate::agents::Agent;
use crate::kitchen::Layout;
use crate::training::mean_sem;

/// An evaluation partner, optionally different per layout (e.g. one
/// behavior-cloned proxy per layout).
#[derive(Clone)]
pub struct Teammate {
    pub name: String,
    pub default: Option<Arc<dyn Agent>>,
    pub per_layout: BTreeMap<String, Arc<dyn Agent>>,
}

impl Teammate {
    pub fn everywhere(name: impl Into<String>, agent: Arc<dyn Agent>) -> Teammate {
        Teammate {
            name: name.into(),
            default: Some(agent),
            per_layout: BTreeMap::new(),
        }
    }

    pub fn for_layout(&self, layout: &str) -> Option<&Arc<dyn Agent>> {
        self.per_layout.get(layout).or(self.default.as_ref())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SuiteConfig {
    pub trials: usize,
    /// Defaults to each layout's own horizon.
    pub horizon: Option<u32>,
    pub seed: u64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            trials: 10,
            horizon: None,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportCell {
    pub mean: f64,
    /// Standard error across training seeds.
    pub se: f64,
    pub seeds: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub label: String,
    pub modified: bool,
    /// One cell per method, in [`EvalReport::methods`] order.
    pub cells: Vec<ReportCell>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub methods: Vec<String>,
    pub teammates: Vec<String>,
    pub trials: usize,
    pub averaging: String,
    /// Layout rows, their average, then the same for modified layouts.
    pub rows: Vec<ReportRow>,
}

impl EvalReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("block,layout,method,mean,se,seeds\n");
        for row in &self.rows {
            let block = if row.modified { "modified" } else { "original" };
            for (m, c) in self.methods.iter().zip(&row.cells) {
                out.push_str(&format!("{block},{},{m},{:.3},{:.3},{}\n", row.label, c.mean, c.se, c.seeds));
            }
        }
        out
    }

    /// Fixed-width text table, one column per method.
    pub fn to_table(&self) -> String {
        let label_w = self.rows.iter().map(|r| r.label.len()).max().unwrap_or(6).max(6);
        let col_w = self.methods.iter().map(String::len).max().unwrap_or(0).max(14);
        let mut out = format!("{:<label_w$}", "layout");
        for m in &self.methods {
            out.push_str(&format!(" | {m:>col_w$}"));
        }
        out.push('\n');
        out.push_str(&"-".repeat(label_w + self.methods.len() * (col_w + 3)));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&format!("{:<label_w$}", row.label));
            for c in &row.cells {
                let cell = format!("{:.1} ± {:.1}", c.mean, c.se);
                out.push_str(&format!(" | {cell:>col_w$}"));
            }
            out.push('\n');
        }
        out
    }
}

fn cell(per_seed: &[f64]) -> ReportCell {
    let (mean, se) = mean_sem(per_seed);
    ReportCell {
        mean,
        se,
        seeds: per_seed.len(),
    }
}

/// Average of one agent with each teammate (equal weight per teammate).
fn score_with_teammates(
    agent: &dyn Agent,
    teammates: &[Teammate],
    layout: &Layout,
    cfg: &SuiteConfig,
    seed: u64,
) -> Result<f64, EvalError> {
    let mut per_teammate = Vec::with_capacity(teammates.len());
    for (ti, t) in teammates.iter().enumerate() {
        let mate = t.for_layout(layout.name()).ok_or_else(|| EvalError::MissingTeammate {
            teammate: t.name.clone(),
            layout: layout.name().to_string(),
        })?;
        per_teammate.push(mean_pairing(agent, mate.as_ref(), layout, cfg, seed + 1000 * ti as u64)?);
    }
    Ok(per_teammate.iter().sum::<f64>() / per_teammate.len().max(1) as f64)
}

fn mean_pairing(a: &dyn Agent, b: &dyn Agent, layout: &Layout, cfg: &SuiteConfig, seed: u64) -> Result<f64, EvalError> {
    let mut spec = PairingSpec::new(a, b, layout);
    spec.trials = cfg.trials;
    spec.seats = SeatPolicy::Alternate;
    if let Some(h) = cfg.horizon {
        spec.horizon = h;
    }
    let eps = run_pairing_episodes(&spec, seed)?;
    Ok(eps.iter().map(|e| e.score() as f64).sum::<f64>() / eps.len().max(1) as f64)
}

/// Score each method (one agent per training seed) with every teammate on
/// `layouts`, and paired with itself on `modified` layouts.
pub fn unseen_agent_suite(
    methods: &[(String, Vec<Arc<dyn Agent>>)],
    teammates: &[Teammate],
    layouts: &[Layout],
    modified: &[Layout],
    cfg: &SuiteConfig,
) -> Result<EvalReport, EvalError> {
    if methods.iter().any(|(_, seeds)| seeds.is_empty()) {
        return Err(EvalError::Invalid("every method needs at least one seed".into()));
    }
    let mut rows = Vec::new();
    for (block, block_layouts) in [(false, layouts), (true, modified)] {
        if block_layouts.is_empty() {
            continue;
        }
        // per_layout[layout][method][seed]
        let mut per_layout: Vec<Vec<Vec<f64>>> = Vec::new();
        for (li, layout) in block_layouts.iter().enumerate() {
            let mut row = Vec::new();
            for (mi, (_, seeds)) in methods.iter().enumerate() {
                let mut scores = Vec::new();
                for (si, agent) in seeds.iter().enumerate() {
                    let seed = cfg.seed + ((((block as u64) * 64 + li as u64) * 64 + mi as u64) * 64 + si as u64) * 100_000;
                    scores.push(if block {
                        mean_pairing(agent.as_ref(), agent.as_ref(), layout, cfg, seed)?
                    } else {
                        score_with_teammates(agent.as_ref(), teammates, layout, cfg, seed)?
                    });
                }
                row.push(scores);
            }
            rows.push(ReportRow {
                label: layout.name().to_string(),
                modified: block,
                cells: row.iter().map(|s| cell(s)).collect(),
            });
            per_layout.push(row);
        }
        let average_cells = (0..methods.len())
            .map(|mi| {
                let n_seeds = methods[mi].1.len();
                let per_seed: Vec<f64> = (0..n_seeds)
                    .map(|si| per_layout.iter().map(|l| l[mi][si]).sum::<f64>() / per_layout.len() as f64)
                    .collect();
                cell(&per_seed)
            })
            .collect();
        rows.push(ReportRow {
            label: if block { "~average".into() } else { "average".into() },
            modified: block,
            cells: average_cells,
        });
    }
    Ok(EvalReport {
        methods: methods.iter().map(|(n, _)| n.clone()).collect(),
        teammates: teammates.iter().map(|t| t.name.clone()).collect(),
        trials: cfg.trials,
        averaging: "equal weight per teammate; modified layouts use self-pairing".into(),
        rows,
    })
}
