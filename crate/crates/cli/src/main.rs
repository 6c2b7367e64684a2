//! `crtfrag`: simulate excursion trees, their fragmentation and the
//! dislocation pipelines, and run the verification checks.

mod config;
mod output;

use std::path::Path;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use crtfrag::par::par_map;
use crtfrag::verify::{run_check, two_pipeline_report, two_pipeline_samples, CheckReport, TwoPipelineConfig};
use crtfrag::{
    assign_cut_times, build_with_limits, dislocation_timeline, excursion_path, fragments_at,
    BuildLimits, BuildOutcome, JumpTree, RngStream,
};

use config::{CommonArgs, ConfigError, RunConfig};
use output::{Csv, EVENTS, FRAGMENTS, REPORTS, SPLITS, TREES};

#[derive(Parser)]
#[command(name = "crtfrag", version, about = "Fragmentation at nodes of Lévy trees")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Check that the mechanism is admissible.
    Validate,
    /// Simulate trees and write per-tree statistics (trees.csv).
    Tree,
    /// Fragment masses on a grid of times (fragments.csv).
    Fragment,
    /// Dislocations of the root's fragment (events.csv).
    Timeline,
    /// Run named checks (reports.csv).
    Verify,
    /// Compare tree-side and subordinator-side dislocations (splits.csv, reports.csv).
    DislocationCompare,
    /// Stack-height profile of one tree (profile.dat).
    Profile,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Validate => "validate",
            Command::Tree => "tree",
            Command::Fragment => "fragment",
            Command::Timeline => "timeline",
            Command::Verify => "verify",
            Command::DislocationCompare => "dislocation-compare",
            Command::Profile => "profile",
        }
    }
}

enum Failure {
    Usage(String),
    Checks,
    Runtime(String),
}

impl From<crtfrag::Error> for Failure {
    fn from(e: crtfrag::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Usage(e.msg)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command, &cli.common) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Checks) => ExitCode::from(1),
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}\n\nFor more information, try '--help'.");
            ExitCode::from(2)
        }
    }
}

fn run(command: Command, args: &CommonArgs) -> Result<(), Failure> {
    let cfg = match RunConfig::resolve(args) {
        Ok(c) => c,
        Err(e) if e.inadmissible && matches!(command, Command::Validate) => {
            println!("admissible = false\n{}", e.msg);
            return Err(Failure::Checks);
        }
        Err(e) => return Err(e.into()),
    };
    if let Some(w) = cfg.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()
            .map_err(|e| Failure::Runtime(e.to_string()))?;
    }
    std::fs::create_dir_all(&cfg.out_dir)?;
    std::fs::write(cfg.out_dir.join("config.txt"), cfg.to_file(command.name()))?;
    match command {
        Command::Validate => validate(&cfg),
        Command::Tree => trees(&cfg),
        Command::Fragment => fragment(&cfg),
        Command::Timeline => timeline(&cfg),
        Command::Verify => verify(&cfg),
        Command::DislocationCompare => compare(&cfg),
        Command::Profile => profile(&cfg),
    }
}

fn limits(cfg: &RunConfig) -> BuildLimits {
    BuildLimits::nodes(cfg.node_cap).with_mass_cap(cfg.mass_cap)
}

/// Tree `i` always comes from stream `(seed, i)`, so `tree`, `fragment`
/// and `timeline` see the same trees.
fn for_each_tree<T, F>(cfg: &RunConfig, f: F) -> Result<Vec<T>, Failure>
where
    T: Send,
    F: Fn(BuildOutcome, &mut RngStream) -> crtfrag::Result<T> + Sync,
{
    let trunc = cfg.mechanism.truncate(cfg.epsilon)?;
    let lim = limits(cfg);
    let n = cfg.n.unwrap_or(1000);
    let out: crtfrag::Result<Vec<T>> = par_map(cfg.seed, 0..n, |_, rng| {
        let o = build_with_limits(&trunc, rng, lim)?;
        f(o, rng)
    })
    .into_iter()
    .collect();
    Ok(out?)
}

fn validate(cfg: &RunConfig) -> Result<(), Failure> {
    let a = cfg.mechanism.admissibility()?;
    let trunc = cfg.mechanism.truncate(cfg.epsilon)?;
    let mut text = String::new();
    text.push_str(&format!("admissible = {}\n", a.admissible));
    text.push_str(&format!("moment = {}\n", a.moment));
    if let Some(r) = a.increment_ratio {
        text.push_str(&format!("increment_ratio = {r}\n"));
    }
    text.push_str(&format!("assumed_below_floor = {}\n", a.assumed_below_floor));
    text.push_str(&format!("drain_rate = {}\n", trunc.drain_rate()));
    text.push_str(&format!("jump_rate = {}\n", trunc.jump_rate()));
    text.push_str(&format!("offspring_rate = {}\n", trunc.offspring_rate()));
    for r in &a.reasons {
        text.push_str(&format!("reason = {r}\n"));
    }
    print!("{text}");
    std::fs::write(cfg.out_dir.join("validate.txt"), &text)?;
    if a.admissible {
        Ok(())
    } else {
        Err(Failure::Checks)
    }
}

fn trees(cfg: &RunConfig) -> Result<(), Failure> {
    let rows = for_each_tree(cfg, |o, _| {
        let t = o.tree();
        Ok((t.sigma(), t.len(), t.max_delta(), o.is_oversize()))
    })?;
    let mut w = Csv::create(&cfg.out_dir, TREES)?;
    let mut oversize = 0;
    for (i, (sigma, len, max_delta, over)) in rows.iter().enumerate() {
        oversize += *over as usize;
        w.row(&[i.to_string(), sigma.to_string(), len.to_string(), max_delta.to_string(), (*over as u8).to_string()])?;
    }
    w.finish()?;
    eprintln!("{} trees, {oversize} oversize", rows.len());
    Ok(())
}

fn fragment(cfg: &RunConfig) -> Result<(), Failure> {
    let grid = cfg.theta_grid.clone();
    let rows = for_each_tree(cfg, |o, rng| {
        if o.is_oversize() {
            return Ok(None);
        }
        let mut t = o.into_tree();
        assign_cut_times(&mut t, rng)?;
        grid.iter().map(|&th| fragments_at(&t, th)).collect::<crtfrag::Result<Vec<_>>>().map(Some)
    })?;
    let mut w = Csv::create(&cfg.out_dir, FRAGMENTS)?;
    let mut skipped = 0;
    for (i, snaps) in rows.iter().enumerate() {
        let Some(snaps) = snaps else {
            skipped += 1;
            continue;
        };
        for s in snaps {
            let tagged = s.masses.iter().position(|&m| s.tagged_mass > 0.0 && m == s.tagged_mass);
            if s.masses.is_empty() {
                w.row(&[i.to_string(), s.theta.to_string(), "0".into(), "0".into(), s.dust.to_string(), "0".into()])?;
            }
            for (k, m) in s.masses.iter().enumerate() {
                let is_tagged = (tagged == Some(k)) as u8;
                w.row(&[
                    i.to_string(),
                    s.theta.to_string(),
                    (k + 1).to_string(),
                    m.to_string(),
                    s.dust.to_string(),
                    is_tagged.to_string(),
                ])?;
            }
        }
    }
    w.finish()?;
    eprintln!("{} trees, {skipped} oversize trees skipped", rows.len());
    Ok(())
}

fn timeline(cfg: &RunConfig) -> Result<(), Failure> {
    let rows = for_each_tree(cfg, |o, rng| {
        let BuildOutcome::Complete(mut t) = o else {
            return Ok(None);
        };
        assign_cut_times(&mut t, rng)?;
        dislocation_timeline(&t).map(Some)
    })?;
    let mut w = Csv::create(&cfg.out_dir, EVENTS)?;
    let mut skipped = 0;
    for (i, tl) in rows.iter().enumerate() {
        let Some(tl) = tl else {
            skipped += 1;
            continue;
        };
        for e in &tl.events {
            for (k, c) in e.children.iter().enumerate() {
                w.row(&[
                    i.to_string(),
                    e.theta.to_string(),
                    e.parent_mass.to_string(),
                    (k + 1).to_string(),
                    c.to_string(),
                    e.cut_node_delta.to_string(),
                ])?;
            }
            if e.children.is_empty() {
                w.row(&[i.to_string(), e.theta.to_string(), e.parent_mass.to_string(), "0".into(), "0".into(), e.cut_node_delta.to_string()])?;
            }
        }
    }
    w.finish()?;
    eprintln!("{} trees, {skipped} oversize trees skipped", rows.len());
    Ok(())
}

fn write_reports(dir: &Path, reports: &[CheckReport]) -> Result<(), Failure> {
    let mut w = Csv::create(dir, REPORTS)?;
    for rep in reports {
        for r in &rep.rows {
            let pass = match (r.gating, r.pass) {
                (false, _) => "info",
                (true, true) => "true",
                (true, false) => "false",
            };
            w.row(&[
                format!("{}: {}", rep.name, r.label),
                r.target.to_string(),
                r.estimate.to_string(),
                r.std_error.to_string(),
                r.tolerance.to_string(),
                pass.to_string(),
            ])?;
        }
    }
    w.finish()?;
    Ok(())
}

fn verify(cfg: &RunConfig) -> Result<(), Failure> {
    let mut check_cfg = cfg.check_config();
    let m: usize = cfg.checks.iter().map(|c| crtfrag::verify::p_value_rows(c)).sum();
    check_cfg.p_threshold = crtfrag::verify::bonferroni_floor(check_cfg.p_threshold, m);
    let mut reports = Vec::new();
    for name in &cfg.checks {
        let rep = run_check(name, &check_cfg)?;
        println!("{rep}");
        reports.push(rep);
    }
    write_reports(&cfg.out_dir, &reports)?;
    if reports.iter().all(|r| r.pass()) {
        Ok(())
    } else {
        Err(Failure::Checks)
    }
}

fn compare(cfg: &RunConfig) -> Result<(), Failure> {
    cfg.mechanism
        .stable_alpha()
        .ok_or_else(|| Failure::Usage("dislocation-compare needs a stable mechanism (--alpha)".into()))?;
    let check_cfg = cfg.check_config();
    let p = TwoPipelineConfig {
        r: cfg.r,
        delta_rel: cfg.delta,
        ..TwoPipelineConfig::default()
    };
    let (tree, sub) = two_pipeline_samples(&check_cfg, &p)?;
    let mut w = Csv::create(&cfg.out_dir, SPLITS)?;
    for (side, splits) in [("tree", &tree.splits), ("subordinator", &sub.splits)] {
        for s in splits.iter() {
            w.row(&[
                side.to_string(),
                s.parent_mass.to_string(),
                s.largest_fraction.to_string(),
                s.count_above.to_string(),
                s.weight.to_string(),
            ])?;
        }
    }
    w.finish()?;
    let rep = two_pipeline_report(&check_cfg, &p, &tree, &sub)?;
    println!("{rep}");
    write_reports(&cfg.out_dir, std::slice::from_ref(&rep))?;
    if rep.pass() {
        Ok(())
    } else {
        Err(Failure::Checks)
    }
}

fn profile(cfg: &RunConfig) -> Result<(), Failure> {
    let trunc = cfg.mechanism.truncate(cfg.epsilon)?;
    let mut rng = RngStream::new(cfg.seed, cfg.tree_id);
    let o = build_with_limits(&trunc, &mut rng, limits(cfg))?;
    if o.is_oversize() {
        return Err(Failure::Runtime(format!("tree {} exceeds the build caps", cfg.tree_id)));
    }
    let t: JumpTree = o.into_tree();
    let p = excursion_path(&t);
    let mut text = format!(
        "# crtfrag profile v1: tree {} (seed {}), columns t height\n",
        cfg.tree_id, cfg.seed
    );
    let mut prev: Option<u32> = None;
    for &(t, h) in &p.breakpoints {
        if let Some(ph) = prev {
            text.push_str(&format!("{t} {ph}\n"));
        }
        text.push_str(&format!("{t} {h}\n"));
        prev = Some(h);
    }
    std::fs::write(cfg.out_dir.join("profile.dat"), text)?;
    eprintln!("sigma = {}, {} nodes, max height {}", t.sigma(), t.len(), p.max_height());
    Ok(())
}
