use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use ha2_core::agents::{load_agent, save_flat_bundle, ActMode, Agent};
use ha2_core::evaluation::{unseen_agent_suite, SuiteConfig, Teammate};
use ha2_core::kitchen::{render_text, replay as resimulate, swap_tiles, Pos, ReplayLog, CANONICAL_LAYOUT_NAMES};
use ha2_core::training::{
    import_human_dataset, resolve_layout, train_bc, train_selfplay_population, train_variant, BcConfig,
    PopulationConfig, TrainConfig, TrajectoryDataset,
};
use serde::de::DeserializeOwned;
use serde::Deserialize;

use crate::{Render, TrainKind};

pub fn parse_cell(s: &str) -> Result<(i32, i32), String> {
    let (r, c) = s.split_once(',').ok_or_else(|| format!("expected row,col, got {s:?}"))?;
    let num = |v: &str| v.trim().parse::<i32>().map_err(|e| format!("{v:?}: {e}"));
    Ok((num(r)?, num(c)?))
}

fn read_config<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    } else {
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PopulationRun {
    layouts: Vec<String>,
    out_dir: PathBuf,
    #[serde(default)]
    population: PopulationConfig,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BcRun {
    dataset: PathBuf,
    layouts: Vec<String>,
    out_dir: PathBuf,
    #[serde(default)]
    bc: BcConfig,
}

pub fn train(config: &Path, kind: TrainKind) -> Result<()> {
    match kind {
        TrainKind::Variant => {
            let cfg = TrainConfig::load(config)?;
            let summary = train_variant(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        TrainKind::Population => {
            let run: PopulationRun = read_config(config)?;
            let layouts = run.layouts.iter().map(|n| resolve_layout(n)).collect::<Result<Vec<_>, _>>()?;
            let pop = train_selfplay_population(&layouts, &run.population, &run.out_dir)?;
            println!("{} checkpoints in {}", pop.entries.len(), run.out_dir.display());
        }
        TrainKind::Bc => {
            let run: BcRun = read_config(config)?;
            let dataset = TrajectoryDataset::load(&run.dataset)?;
            for name in &run.layouts {
                let layout = resolve_layout(name)?;
                let models = train_bc(&dataset, &layout, &run.bc)?;
                let dir = run.out_dir.join(name);
                save_flat_bundle(&dir.join("proxy"), &models.proxy)?;
                save_flat_bundle(&dir.join("bc"), &models.bc)?;
                let scores = serde_json::json!({"proxy": models.scores[0], "bc": models.scores[1]});
                std::fs::write(dir.join("scores.json"), scores.to_string())?;
                println!("{name}: proxy {:.1}, bc {:.1}", models.scores[0], models.scores[1]);
            }
        }
    }
    Ok(())
}

pub struct EvalArgs {
    pub bundles: Vec<String>,
    pub teammates: Vec<String>,
    pub layouts: Vec<String>,
    pub out: PathBuf,
    pub trials: usize,
    pub horizon: Option<u32>,
    pub seed: u64,
    pub greedy: bool,
}

/// `NAME=REST` or a bare spec named after its last path component.
fn split_named(arg: &str) -> (String, &str) {
    match arg.split_once('=') {
        Some((name, rest)) => (name.to_string(), rest),
        None => {
            let name = Path::new(arg).file_name().map(|n| n.to_string_lossy().into_owned());
            (name.unwrap_or_else(|| arg.to_string()), arg)
        }
    }
}

fn load(spec: &str, mode: ActMode) -> Result<Arc<dyn Agent>> {
    let agent = load_agent(spec, mode).with_context(|| format!("loading {spec}"))?;
    Ok(Arc::from(agent))
}

pub fn eval(args: &EvalArgs) -> Result<()> {
    let mode = if args.greedy { ActMode::Greedy } else { ActMode::Stochastic };
    let names: Vec<String> = if args.layouts.is_empty() {
        CANONICAL_LAYOUT_NAMES.iter().map(|s| s.to_string()).collect()
    } else {
        args.layouts.clone()
    };
    if let Some(bad) = names.iter().find(|n| n.starts_with('~')) {
        bail!("{bad}: pass base layout names; modified rows are added automatically");
    }
    let layouts = names.iter().map(|n| resolve_layout(n)).collect::<Result<Vec<_>, _>>()?;
    let modified = names.iter().map(|n| resolve_layout(&format!("~{n}"))).collect::<Result<Vec<_>, _>>()?;

    let mut methods = Vec::new();
    for arg in &args.bundles {
        let (name, rest) = split_named(arg);
        let seeds = rest.split(',').map(|s| load(s, mode)).collect::<Result<Vec<_>>>()?;
        methods.push((name, seeds));
    }
    let mut teammates = Vec::new();
    for arg in &args.teammates {
        let (name, spec) = split_named(arg);
        if spec.contains("{layout}") {
            let mut mate = Teammate {
                name,
                default: None,
                per_layout: Default::default(),
            };
            for n in &names {
                mate.per_layout.insert(n.clone(), load(&spec.replace("{layout}", n), mode)?);
            }
            teammates.push(mate);
        } else {
            teammates.push(Teammate::everywhere(name, load(spec, mode)?));
        }
    }
    let cfg = SuiteConfig {
        trials: args.trials,
        horizon: args.horizon,
        seed: args.seed,
    };
    let report = unseen_agent_suite(&methods, &teammates, &layouts, &modified, &cfg)?;
    std::fs::write(&args.out, report.to_csv()).with_context(|| format!("writing {}", args.out.display()))?;
    print!("{}", report.to_table());
    Ok(())
}

pub fn replay(log_path: &Path, render: Render) -> Result<()> {
    let log = ReplayLog::load(log_path)?;
    let layout = resolve_layout(&log.header.layout)?;
    if render == Render::Text {
        for state in log.states(&layout)? {
            println!("{}", render_text(&state, &layout));
        }
    }
    let last = resimulate(&layout, &log)?;
    println!("final score {} after {} ticks, state {}", last.score, log.actions.len(), last.state_hash());
    Ok(())
}

pub fn perturb(name: &str, a: (i32, i32), b: (i32, i32), out: Option<&Path>) -> Result<()> {
    let layout = resolve_layout(name)?;
    let swapped = swap_tiles(&layout, Pos::new(a.0, a.1), Pos::new(b.0, b.1))?;
    let text = swapped.to_ascii();
    match out {
        Some(path) => std::fs::write(path, &text).with_context(|| format!("writing {}", path.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}

pub fn bc_import(raw: &Path, out: &Path) -> Result<()> {
    let text = std::fs::read_to_string(raw).with_context(|| format!("reading {}", raw.display()))?;
    let value: serde_json::Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", raw.display()))?;
    let (dataset, summary) = import_human_dataset(&value)?;
    if dataset.episodes.is_empty() {
        bail!("no usable trials in {} ({} skipped)", raw.display(), summary.skipped.len());
    }
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let file = dataset.save(out)?;
    eprintln!("wrote {}", file.display());
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}
