//! Command-line front end: builds raster domains, Whitney decompositions and
//! spanning trees, evaluates tree Hardy constants, fractional seminorms and
//! rigid-motion projections, and runs the full Korn-quotient report.
//!
//! Every subcommand prints a JSON object to stdout; table-shaped artifacts
//! (cube lists, trees) go to CSV files named by `--out` flags.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use korn_lab::geometry::{
    build_domain, load_domain, save_domain, DomainKind, DomainSpec, GridDomain,
};
use korn_lab::hardy::{c_tree, c_tree_bound, hardy_best_constant, SumConvention, TreeWeights};
use korn_lab::lab::{
    battery_quotients, field_by_name, fmt_f64, korn_quotient, run_report, write_csv, KornMode,
    KornParams, KornResult, ReportConfig,
};
use korn_lab::rigid::{local_projections, min_over_rigid, project_p2, weight_sum, weighted_mean};
use korn_lab::seminorms::{DiscreteField, KernelSpec, Kind, PairEngine, DEFAULT_MAX_CELLS};
use korn_lab::tree::{build_tree, shadow_stats, Tree, TreeStrategy};
use korn_lab::whitney::{decompose, smooth_cube, smooth_cube_cells};
use korn_lab::{Error, Result};

#[derive(Parser)]
#[command(
    name = "korn-lab",
    about = "Numerical laboratory for fractional Korn inequalities on raster domains",
    version
)]
struct Cli {
    /// Seed for random field generators and stochastic estimators.
    #[arg(long, global = true, default_value_t = 7)]
    seed: u64,
    /// Worker threads for pair sweeps (default: all cores). Results do not
    /// depend on the thread count.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Cell budget for untruncated double sums; exceeding it is an error.
    #[arg(long, global = true, default_value_t = DEFAULT_MAX_CELLS)]
    max_cells: usize,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Rasterize a bundled domain and dump it to a portable file.
    Domain(DomainArgs),
    /// Whitney-decompose a domain; dump cubes and neighbor edges as CSV.
    Whitney(WhitneyArgs),
    /// Build the rooted spanning tree over the Whitney cubes.
    Tree(TreeArgs),
    /// Sufficient Hardy constant on a cube tree with size-power weights.
    Ctree(CtreeArgs),
    /// Empirical best Hardy constant on a cube tree (power iteration).
    Hardy(HardyArgs),
    /// Evaluate one fractional seminorm of a field.
    Seminorm(SeminormArgs),
    /// Least-squares rigid approximations on smoothened Whitney cubes.
    Project(ProjectArgs),
    /// Minimize a seminorm of `u - r` over rigid motions `r`.
    Minrm(MinrmArgs),
    /// Korn quotient of one field or the standard battery.
    Korn(KornArgs),
    /// Full experiment sweep: tables, plots and report.json.
    Report(ReportArgs),
}

#[derive(Args)]
struct DomainArgs {
    /// JSON file with {"kind", "resolution", "depth"?}.
    #[arg(long, conflicts_with_all = ["kind", "resolution"])]
    spec: Option<PathBuf>,
    /// Bundled domain kind (unit-square, l-shape, slit-square,
    /// koch-prefractal, cube-3d); alternative to --spec.
    #[arg(long, requires = "resolution")]
    kind: Option<String>,
    /// Cells per unit length.
    #[arg(long)]
    resolution: Option<u32>,
    /// Construction depth for the Koch prefractal.
    #[arg(long)]
    depth: Option<u32>,
    /// Where to write the domain dump.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct WhitneyArgs {
    /// Domain dump produced by `domain --out`.
    #[arg(long)]
    domain: PathBuf,
    /// Cube table: id, level, center, side.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Touching-cube pairs as an edge list.
    #[arg(long)]
    edges: Option<PathBuf>,
}

#[derive(Args)]
struct TreeArgs {
    /// Domain dump; the decomposition is recomputed (it is a pure function
    /// of the domain), which keeps the tree consistent with the cube table
    /// `whitney` would emit.
    #[arg(long)]
    domain: PathBuf,
    /// bfs (default) or lex-dfs.
    #[arg(long, default_value = "bfs")]
    strategy: String,
    /// Tree table: id, parent, depth, level.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Where to write the stats JSON (printed to stdout regardless).
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct CtreeArgs {
    /// Tree table written by `tree --out`.
    #[arg(long)]
    tree: PathBuf,
    /// Cube table written by `whitney --out`; provides the cube sides the
    /// weights are powers of.
    #[arg(long)]
    cubes: PathBuf,
    /// Weight exponent: node weight is side^(dim + p*gamma).
    #[arg(long)]
    gamma: f64,
    #[arg(long)]
    p: f64,
    /// Ambient dimension of the cubes.
    #[arg(long, default_value_t = 2)]
    dim: usize,
    /// Comma-separated theta values; defaults to a built-in grid.
    #[arg(long)]
    theta_grid: Option<String>,
    /// strict-top or inclusive-top path sums.
    #[arg(long, default_value = "strict-top")]
    convention: String,
}

#[derive(Args)]
struct HardyArgs {
    #[arg(long)]
    tree: PathBuf,
    #[arg(long)]
    cubes: PathBuf,
    #[arg(long)]
    gamma: f64,
    #[arg(long)]
    p: f64,
    #[arg(long, default_value_t = 2)]
    dim: usize,
    /// Random restarts of the nonlinear power method (p != 2).
    #[arg(long, default_value_t = 20)]
    trials: usize,
    #[arg(long, default_value = "strict-top")]
    convention: String,
}

#[derive(Args)]
struct SeminormArgs {
    #[arg(long)]
    domain: PathBuf,
    /// gagliardo or x (projected differences).
    #[arg(long)]
    kind: String,
    #[arg(long)]
    s: f64,
    #[arg(long)]
    p: f64,
    /// Truncation multiplier: pairs with |x-y| < tau * delta(x) contribute.
    #[arg(long)]
    tau: Option<f64>,
    /// Weight exponent: each pair is weighted by min(delta)^(p*beta).
    /// Requires --tau.
    #[arg(long)]
    beta: Option<f64>,
    /// Built-in field name (constant, identity, shear, skew, vortex,
    /// jump-slit, random-smooth) or a CSV file of (cell index, v_1..v_n).
    #[arg(long)]
    field: String,
}

#[derive(Args)]
struct ProjectArgs {
    #[arg(long)]
    domain: PathBuf,
    /// `cube:ID` for a single smoothened cube, or `all`.
    #[arg(long, default_value = "all")]
    region: String,
    #[arg(long)]
    s: f64,
    #[arg(long, default_value_t = 2.0)]
    p: f64,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    field: String,
}

#[derive(Args)]
struct MinrmArgs {
    #[arg(long)]
    domain: PathBuf,
    /// full, truncated (needs --tau), or weighted (needs --tau and --beta).
    #[arg(long)]
    kind: String,
    #[arg(long)]
    s: f64,
    #[arg(long)]
    p: f64,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    field: String,
}

#[derive(Args)]
struct KornArgs {
    #[arg(long)]
    domain: PathBuf,
    /// uniform, john, or weighted.
    #[arg(long)]
    mode: String,
    #[arg(long)]
    s: f64,
    #[arg(long)]
    p: f64,
    /// Numerator truncation multiplier (john/weighted; default 0.9/(36 sqrt n)).
    #[arg(long)]
    tau_num: Option<f64>,
    /// Denominator truncation multiplier (john/weighted; default 0.7).
    #[arg(long)]
    tau_den: Option<f64>,
    /// Weight exponent (weighted mode only).
    #[arg(long)]
    beta: Option<f64>,
    /// Skip the range checks on the truncation multipliers.
    #[arg(long)]
    allow_large_tau: bool,
    /// Evaluate a single named field instead of the battery.
    #[arg(long)]
    field: Option<String>,
    /// Random smooth fields in the battery.
    #[arg(long, default_value_t = 2)]
    random: usize,
}

#[derive(Args)]
struct ReportArgs {
    /// JSON experiment config; defaults speak when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides the config's).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: building the thread pool: {e}");
            return ExitCode::FAILURE;
        }
    }
    match run(&cli) {
        Ok(v) => {
            println!("{}", serde_json::to_string_pretty(&v).expect("JSON output"));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: &Cli) -> Result<Value> {
    match &cli.cmd {
        Cmd::Domain(a) => cmd_domain(a),
        Cmd::Whitney(a) => cmd_whitney(a),
        Cmd::Tree(a) => cmd_tree(a),
        Cmd::Ctree(a) => cmd_ctree(a),
        Cmd::Hardy(a) => cmd_hardy(a, cli.seed),
        Cmd::Seminorm(a) => cmd_seminorm(a, cli),
        Cmd::Project(a) => cmd_project(a, cli),
        Cmd::Minrm(a) => cmd_minrm(a, cli),
        Cmd::Korn(a) => cmd_korn(a, cli),
        Cmd::Report(a) => cmd_report(a),
    }
}

fn parse_kind(s: &str) -> Result<DomainKind> {
    const ALL: [DomainKind; 5] = [
        DomainKind::UnitSquare,
        DomainKind::LShape,
        DomainKind::SlitSquare,
        DomainKind::KochPrefractal,
        DomainKind::Cube3d,
    ];
    ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| {
        Error::InvalidParameter(format!(
            "unknown domain kind '{s}'; expected one of {}",
            ALL.map(DomainKind::name).join(", ")
        ))
    })
}

fn parse_strategy(s: &str) -> Result<TreeStrategy> {
    match s {
        "bfs" => Ok(TreeStrategy::Bfs),
        "lex-dfs" => Ok(TreeStrategy::LexDfs),
        other => Err(Error::InvalidParameter(format!(
            "unknown strategy '{other}'; expected bfs or lex-dfs"
        ))),
    }
}

fn parse_convention(s: &str) -> Result<SumConvention> {
    match s {
        "strict-top" => Ok(SumConvention::StrictTop),
        "inclusive-top" => Ok(SumConvention::InclusiveTop),
        other => Err(Error::InvalidParameter(format!(
            "unknown convention '{other}'; expected strict-top or inclusive-top"
        ))),
    }
}

fn parse_mode(s: &str) -> Result<KornMode> {
    match s {
        "uniform" => Ok(KornMode::Uniform),
        "john" => Ok(KornMode::John),
        "weighted" => Ok(KornMode::Weighted),
        other => Err(Error::InvalidParameter(format!(
            "unknown mode '{other}'; expected uniform, john, or weighted"
        ))),
    }
}

fn parse_err(path: &Path, lineno: usize, detail: String) -> Error {
    Error::Parse { what: format!("{}:{}", path.display(), lineno), detail }
}

/// Builds a kernel spec from the truncation/weight flags, enforcing that a
/// weight always comes with a truncation.
fn kernel_from_flags(
    kind: Kind,
    s: f64,
    p: f64,
    tau: Option<f64>,
    beta: Option<f64>,
) -> Result<KernelSpec> {
    let spec = match (tau, beta) {
        (Some(t), Some(b)) => KernelSpec::weighted(kind, s, p, Some(t), b),
        (Some(t), None) => KernelSpec::truncated(kind, s, p, t),
        (None, None) => KernelSpec::plain(kind, s, p),
        (None, Some(_)) => {
            return Err(Error::InvalidParameter(
                "a weight exponent requires a truncation (--beta needs --tau)".into(),
            ))
        }
    };
    spec.validate()?;
    Ok(spec)
}

/// A named built-in field, or a CSV file of (cell index, v_1..v_n).
fn resolve_field(dom: &GridDomain, what: &str, seed: u64) -> Result<DiscreteField> {
    let path = Path::new(what);
    if path.exists() {
        let text = fs::read_to_string(path)?;
        let dim = dom.dim;
        let mut values = vec![f64::NAN; dom.n_cells() * dim];
        let mut seen = 0usize;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if lineno == 0 && cols[0].parse::<usize>().is_err() {
                continue; // header
            }
            let bad = || {
                parse_err(
                    path,
                    lineno + 1,
                    format!("expected cell index and {dim} components"),
                )
            };
            if cols.len() != dim + 1 {
                return Err(bad());
            }
            let r: usize = cols[0].parse().map_err(|_| bad())?;
            if r >= dom.n_cells() {
                return Err(parse_err(
                    path,
                    lineno + 1,
                    format!("cell index {r} out of range ({} cells)", dom.n_cells()),
                ));
            }
            for c in 0..dim {
                values[r * dim + c] = cols[c + 1].parse().map_err(|_| bad())?;
            }
            seen += 1;
        }
        if seen != dom.n_cells() || values.iter().any(|v| v.is_nan()) {
            return Err(Error::Parse {
                what: path.display().to_string(),
                detail: format!("field covers {seen} of {} cells", dom.n_cells()),
            });
        }
        Ok(DiscreteField { dim, values })
    } else {
        field_by_name(dom, what, seed)
    }
}

fn domain_summary(dom: &GridDomain) -> Value {
    let max_delta = dom.delta.iter().fold(0.0f64, |m, &d| m.max(d));
    json!({
        "kind": dom.spec.as_ref().map(|s| s.kind.name()),
        "resolution": dom.spec.as_ref().map(|s| s.resolution),
        "depth": dom.spec.as_ref().and_then(|s| s.depth),
        "dim": dom.dim,
        "h": dom.h,
        "cells": dom.n_cells(),
        "volume": dom.volume(),
        "pruned_cells": dom.pruned_cells,
        "max_delta": max_delta,
        "slit": dom.slit,
    })
}

fn cmd_domain(a: &DomainArgs) -> Result<Value> {
    let spec = if let Some(path) = &a.spec {
        let text = fs::read_to_string(path)?;
        serde_json::from_str::<DomainSpec>(&text)?
    } else {
        let kind = a.kind.as_deref().ok_or_else(|| {
            Error::InvalidParameter("pass either --spec FILE or --kind/--resolution".into())
        })?;
        DomainSpec {
            kind: parse_kind(kind)?,
            resolution: a.resolution.expect("clap requires --resolution with --kind"),
            depth: a.depth,
        }
    };
    let dom = build_domain(&spec)?;
    let mut out = domain_summary(&dom);
    if let Some(path) = &a.out {
        save_domain(&dom, path)?;
        out["file"] = json!(path.display().to_string());
    }
    Ok(out)
}

fn cmd_whitney(a: &WhitneyArgs) -> Result<Value> {
    let dom = load_domain(&a.domain)?;
    let dec = decompose(&dom)?;
    let report = dec.validate(&dom);
    if let Some(path) = &a.out {
        let center_cols: &[&str] = if dom.dim == 3 {
            &["id", "level", "cx", "cy", "cz", "side"]
        } else {
            &["id", "level", "cx", "cy", "side"]
        };
        let rows: Vec<Vec<String>> = dec
            .cubes
            .iter()
            .enumerate()
            .map(|(id, q)| {
                let c = q.center(dom.dim);
                let mut row = vec![id.to_string(), q.level.to_string()];
                row.extend(c[..dom.dim].iter().map(|&v| fmt_f64(v)));
                row.push(fmt_f64(q.side));
                row
            })
            .collect();
        write_csv(path, center_cols, &rows)?;
    }
    if let Some(path) = &a.edges {
        let rows: Vec<Vec<String>> = dec
            .touching_pairs(&dom)
            .iter()
            .map(|&(x, y)| vec![x.to_string(), y.to_string()])
            .collect();
        write_csv(path, &["a", "b"], &rows)?;
    }
    Ok(json!({
        "cubes": dec.cubes.len(),
        "report": report,
        "residual_fraction": dec.residual_fraction(),
    }))
}

fn cmd_tree(a: &TreeArgs) -> Result<Value> {
    let dom = load_domain(&a.domain)?;
    let dec = decompose(&dom)?;
    let tree = build_tree(&dom, &dec, parse_strategy(&a.strategy)?)?;
    let stats = shadow_stats(&dom, &dec, &tree.tree);
    if let Some(path) = &a.out {
        let rows: Vec<Vec<String>> = (0..tree.tree.n())
            .map(|t| {
                vec![
                    t.to_string(),
                    tree.tree.parent_of(t).map_or("-1".into(), |p| p.to_string()),
                    tree.tree.depth(t).to_string(),
                    dec.cubes[t].level.to_string(),
                ]
            })
            .collect();
        write_csv(path, &["id", "parent", "depth", "level"], &rows)?;
    }
    let max_ratio = stats.ratio.iter().fold(0.0f64, |m, &r| m.max(r));
    let out = json!({
        "strategy": a.strategy,
        "nodes": tree.tree.n(),
        "root": tree.tree.root(),
        "max_depth": stats.max_depth,
        "john_constant": stats.john_constant,
        "max_shadow_ratio": max_ratio,
    });
    if let Some(path) = &a.report {
        fs::write(path, serde_json::to_string_pretty(&out)?)?;
    }
    Ok(out)
}

/// Reads a tree table (id, parent, depth, level) back into a `Tree`.
fn read_tree_csv(path: &Path) -> Result<Tree> {
    let text = fs::read_to_string(path)?;
    let mut parents: Vec<(usize, i32)> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if lineno == 0 && cols[0].parse::<usize>().is_err() {
            continue;
        }
        if cols.len() < 2 {
            return Err(parse_err(
                path,
                lineno + 1,
                "expected at least id and parent columns".into(),
            ));
        }
        let id: usize = cols[0]
            .parse()
            .map_err(|_| parse_err(path, lineno + 1, format!("bad id '{}'", cols[0])))?;
        let parent: i32 = cols[1]
            .parse()
            .map_err(|_| parse_err(path, lineno + 1, format!("bad parent '{}'", cols[1])))?;
        parents.push((id, parent));
    }
    parents.sort_unstable();
    if parents.iter().enumerate().any(|(i, &(id, _))| i != id) {
        return Err(Error::Parse {
            what: path.display().to_string(),
            detail: "node ids must cover 0..n without gaps".into(),
        });
    }
    Tree::from_parent(parents.into_iter().map(|(_, p)| p).collect())
}

/// Reads cube sides (by id) from a cube table written by `whitney --out`.
fn read_cube_sides(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path)?;
    let mut sides: Vec<(usize, f64)> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if lineno == 0 && cols[0].parse::<usize>().is_err() {
            continue;
        }
        let bad = |what: &str| parse_err(path, lineno + 1, format!("bad {what}"));
        let id: usize = cols[0].parse().map_err(|_| bad("id"))?;
        let side: f64 = cols
            .last()
            .ok_or_else(|| bad("row"))?
            .parse()
            .map_err(|_| bad("side"))?;
        sides.push((id, side));
    }
    sides.sort_unstable_by(|a, b| a.0.cmp(&b.0));
    if sides.iter().enumerate().any(|(i, &(id, _))| i != id) {
        return Err(Error::Parse {
            what: path.display().to_string(),
            detail: "cube ids must cover 0..n without gaps".into(),
        });
    }
    Ok(sides.into_iter().map(|(_, s)| s).collect())
}

fn size_power_weights(sides: &[f64], dim: usize, p: f64, gamma: f64) -> TreeWeights {
    let e = dim as f64 + p * gamma;
    let w: Vec<f64> = sides.iter().map(|&s| s.powf(e)).collect();
    TreeWeights { mu: w.clone(), nu: w }
}

fn load_weighted_tree(
    tree_path: &Path,
    cubes_path: &Path,
    dim: usize,
    p: f64,
    gamma: f64,
) -> Result<(Tree, TreeWeights)> {
    let tree = read_tree_csv(tree_path)?;
    let sides = read_cube_sides(cubes_path)?;
    if sides.len() != tree.n() {
        return Err(Error::InvalidParameter(format!(
            "tree has {} nodes but the cube table has {} cubes",
            tree.n(),
            sides.len()
        )));
    }
    Ok((tree, size_power_weights(&sides, dim, p, gamma)))
}

fn cmd_ctree(a: &CtreeArgs) -> Result<Value> {
    let conv = parse_convention(&a.convention)?;
    let (tree, weights) = load_weighted_tree(&a.tree, &a.cubes, a.dim, a.p, a.gamma)?;
    let pp = a.p / (a.p - 1.0);
    let (bound, best_theta, best_c) = if let Some(grid) = &a.theta_grid {
        let mut best = (f64::INFINITY, f64::NAN, f64::NAN);
        for part in grid.split(',') {
            let theta: f64 = part.trim().parse().map_err(|_| {
                Error::InvalidParameter(format!("bad theta '{}'", part.trim()))
            })?;
            let c = c_tree(&tree, &weights, a.p, theta, conv)?;
            let b = (theta / (theta - 1.0)).powf(1.0 / pp) * c;
            if b < best.0 {
                best = (b, theta, c);
            }
        }
        best
    } else {
        let (b, theta) = c_tree_bound(&tree, &weights, a.p, conv)?;
        let c = c_tree(&tree, &weights, a.p, theta, conv)?;
        (b, theta, c)
    };
    Ok(json!({
        "c_tree": best_c,
        "best_theta": best_theta,
        "bound": bound,
        "gamma": a.gamma,
        "p": a.p,
        "convention": a.convention,
    }))
}

fn cmd_hardy(a: &HardyArgs, seed: u64) -> Result<Value> {
    let conv = parse_convention(&a.convention)?;
    let (tree, weights) = load_weighted_tree(&a.tree, &a.cubes, a.dim, a.p, a.gamma)?;
    let est = hardy_best_constant(&tree, &weights, a.p, conv, seed, a.trials)?;
    let (bound, best_theta) = c_tree_bound(&tree, &weights, a.p, conv)?;
    let argmax = est
        .maximizer
        .iter()
        .enumerate()
        .max_by(|x, y| x.1.abs().total_cmp(&y.1.abs()))
        .map(|(i, _)| i);
    Ok(json!({
        "hardy_estimate": est.constant,
        "converged": est.converged,
        "iterations": est.iterations,
        "argmax_node": argmax,
        "bound": bound,
        "best_theta": best_theta,
    }))
}

fn parse_seminorm_kind(s: &str) -> Result<Kind> {
    match s {
        "gagliardo" => Ok(Kind::Gagliardo),
        "x" | "projected" => Ok(Kind::Projected),
        other => Err(Error::InvalidParameter(format!(
            "unknown seminorm kind '{other}'; expected gagliardo or x"
        ))),
    }
}

fn cmd_seminorm(a: &SeminormArgs, cli: &Cli) -> Result<Value> {
    let dom = load_domain(&a.domain)?;
    let spec = kernel_from_flags(parse_seminorm_kind(&a.kind)?, a.s, a.p, a.tau, a.beta)?;
    let field = resolve_field(&dom, &a.field, cli.seed)?;
    let engine = PairEngine::whole_domain(&dom);
    let power = engine.seminorms_p(&[&field], &spec, cli.max_cells)?[0];
    Ok(json!({
        "value": power.powf(1.0 / a.p),
        "p_power": power,
        "kind": a.kind,
        "s": a.s,
        "p": a.p,
        "tau": a.tau,
        "beta": a.beta,
        "cells": dom.n_cells(),
        "field": a.field,
    }))
}

fn cmd_project(a: &ProjectArgs, cli: &Cli) -> Result<Value> {
    let dom = load_domain(&a.domain)?;
    let dec = decompose(&dom)?;
    let spec = kernel_from_flags(Kind::Gagliardo, a.s, a.p, a.tau, a.beta)?;
    let field = resolve_field(&dom, &a.field, cli.seed)?;
    if let Some(id_str) = a.region.strip_prefix("cube:") {
        let id: usize = id_str.parse().map_err(|_| {
            Error::InvalidParameter(format!("bad cube id '{id_str}' in --region"))
        })?;
        if id >= dec.cubes.len() {
            return Err(Error::InvalidParameter(format!(
                "cube {id} out of range ({} cubes)",
                dec.cubes.len()
            )));
        }
        let region = smooth_cube(&dec.cubes[id], dom.dim);
        let engine = PairEngine::new(&dom, smooth_cube_cells(&dom, &region))?;
        let fit = project_p2(&engine, &[&field], &spec, cli.max_cells)?.remove(0);
        Ok(json!({
            "cube": id,
            "coefficients": fit.coeffs,
            "residual": fit.residual_p.powf(1.0 / a.p),
            "cells": engine.len(),
        }))
    } else if a.region == "all" {
        let fits = local_projections(&dom, &dec, &field, &spec, cli.max_cells)?;
        let mean = weighted_mean(&fits);
        let total = weight_sum(&fits);
        let rows: Vec<Value> = fits
            .iter()
            .map(|f| {
                json!({
                    "cube": f.cube,
                    "coefficients": f.coeffs,
                    "cells": f.cells,
                    "weight": f.weight,
                })
            })
            .collect();
        Ok(json!({
            "cubes": rows.len(),
            "weighted_mean": mean,
            "weight_sum": total,
            "covered_volume": dec.covered_cells as f64 * dom.h.powi(dom.dim as i32),
            "projections": rows,
        }))
    } else {
        Err(Error::InvalidParameter(format!(
            "bad --region '{}': expected cube:ID or all",
            a.region
        )))
    }
}

fn cmd_minrm(a: &MinrmArgs, cli: &Cli) -> Result<Value> {
    let dom = load_domain(&a.domain)?;
    let spec = match a.kind.as_str() {
        "full" => kernel_from_flags(Kind::Gagliardo, a.s, a.p, None, None)?,
        "truncated" => {
            let tau = a.tau.ok_or_else(|| {
                Error::InvalidParameter("truncated kind needs --tau".into())
            })?;
            kernel_from_flags(Kind::Gagliardo, a.s, a.p, Some(tau), None)?
        }
        "weighted" => {
            let beta = a.beta.ok_or_else(|| {
                Error::InvalidParameter("weighted kind needs --beta".into())
            })?;
            kernel_from_flags(Kind::Gagliardo, a.s, a.p, a.tau, Some(beta))?
        }
        other => {
            return Err(Error::InvalidParameter(format!(
                "unknown kind '{other}'; expected full, truncated, or weighted"
            )))
        }
    };
    let field = resolve_field(&dom, &a.field, cli.seed)?;
    let engine = PairEngine::whole_domain(&dom);
    let fit = min_over_rigid(&engine, &field, &spec, cli.max_cells)?;
    Ok(json!({
        "coefficients": fit.coeffs,
        "value": fit.residual_p.powf(1.0 / a.p),
        "residual_p": fit.residual_p,
        "passes": fit.passes,
        "converged": fit.converged,
    }))
}

fn korn_row(name: &str, r: &KornResult) -> Value {
    json!({
        "field": name,
        "numerator": r.numerator,
        "denominator": r.denominator,
        "quotient": r.quotient,
        "degenerate": r.degenerate,
        "passes": r.passes,
    })
}

fn cmd_korn(a: &KornArgs, cli: &Cli) -> Result<Value> {
    let dom = load_domain(&a.domain)?;
    let mut params = KornParams::new(parse_mode(&a.mode)?, a.s, a.p);
    params.tau_num = a.tau_num;
    params.tau_den = a.tau_den;
    params.beta = a.beta;
    params.allow_large_tau = a.allow_large_tau;
    params.max_cells = cli.max_cells;
    if let Some(name) = &a.field {
        let field = resolve_field(&dom, name, cli.seed)?;
        let r = korn_quotient(&dom, &field, &params)?;
        Ok(json!({
            "mode": a.mode, "s": a.s, "p": a.p,
            "results": [korn_row(name, &r)],
            "constant": r.quotient,
        }))
    } else {
        let battery = korn_lab::lab::field_battery(&dom, cli.seed, a.random)?;
        let results = battery_quotients(&dom, &battery, &params)?;
        let constant = results
            .iter()
            .map(|(_, r)| r.quotient)
            .fold(0.0f64, f64::max);
        let rows: Vec<Value> = results.iter().map(|(n, r)| korn_row(n, r)).collect();
        Ok(json!({
            "mode": a.mode, "s": a.s, "p": a.p,
            "results": rows,
            "constant": constant,
        }))
    }
}

fn cmd_report(a: &ReportArgs) -> Result<Value> {
    let mut cfg = if let Some(path) = &a.config {
        let text = fs::read_to_string(path)?;
        serde_json::from_str::<ReportConfig>(&text)?
    } else {
        ReportConfig::default()
    };
    if let Some(dir) = &a.out {
        cfg.out_dir = dir.clone();
    }
    let summary = run_report(&cfg)?;
    Ok(serde_json::to_value(&summary)?)
}
