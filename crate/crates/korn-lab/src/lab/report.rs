//! Report generation: one config in, a directory of CSV tables, SVG plots,
//! and a JSON summary out. All outputs are byte-deterministic for a fixed
//! config and seed, independent of the thread count.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    assouad_estimate, boundary_cloud, build_domain, ratio_ladder, DomainKind, DomainSpec,
    GridDomain,
};
use crate::lab::experiments::{
    battery_quotients, condition_check, field_battery, slit_dichotomy, ConditionPoint,
    DichotomySample, KornMode, KornParams,
};
use crate::seminorms::DEFAULT_MAX_CELLS;
use crate::tree::{build_tree, shadow_stats, TreeStrategy};
use crate::whitney::{decompose, WhitneyReport};

/// Shortest decimal representation that round-trips the value; the one
/// float-to-text mapping every table in the report goes through.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v}")
    }
}

fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Writes a CSV table with minimal quoting and `\n` line endings.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut buf = String::new();
    let join = |cells: Vec<String>| cells.join(",");
    buf.push_str(&join(header.iter().map(|h| csv_field(h)).collect()));
    buf.push('\n');
    for row in rows {
        buf.push_str(&join(row.iter().map(|c| csv_field(c)).collect()));
        buf.push('\n');
    }
    fs::write(path, buf.as_bytes())?;
    Ok(())
}

/// One polyline in a plot.
#[derive(Clone, Debug)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

fn tick_label(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 {
        "0".into()
    } else if (0.01..10000.0).contains(&a) {
        let s = format!("{v:.3}");
        let s = s.trim_end_matches('0').trim_end_matches('.');
        s.to_string()
    } else {
        format!("{v:.2e}")
    }
}

/// Renders series as a simple standalone line plot. Non-finite points are
/// dropped; with `log_y` nonpositive points are dropped too and the y axis
/// is log10-scaled.
pub fn svg_line_plot(
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[Series],
    log_y: bool,
) -> String {
    let (w, h) = (720.0, 480.0);
    let (ml, mr, mt, mb) = (74.0, 20.0, 38.0, 52.0);
    let keep = |&(x, y): &(f64, f64)| x.is_finite() && y.is_finite() && (!log_y || y > 0.0);
    let mapped: Vec<(usize, Vec<(f64, f64)>)> = series
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let pts = s
                .points
                .iter()
                .filter(|p| keep(p))
                .map(|&(x, y)| (x, if log_y { y.log10() } else { y }))
                .collect();
            (i, pts)
        })
        .collect();
    let all: Vec<(f64, f64)> = mapped.iter().flat_map(|(_, p)| p.iter().copied()).collect();
    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" \
         viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    ));
    out.push_str(&format!(
        "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">{title}</text>\n",
        w / 2.0
    ));
    if all.is_empty() {
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">no finite data</text>\n</svg>\n",
            w / 2.0,
            h / 2.0
        ));
        return out;
    }
    let (mut x0, mut x1) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in &all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if x1 == x0 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    if y1 == y0 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let pad = 0.04;
    let (xr, yr) = (x1 - x0, y1 - y0);
    let (x0, x1) = (x0 - pad * xr, x1 + pad * xr);
    let (y0, y1) = (y0 - pad * yr, y1 + pad * yr);
    let px = |x: f64| ml + (x - x0) / (x1 - x0) * (w - ml - mr);
    let py = |y: f64| h - mb - (y - y0) / (y1 - y0) * (h - mt - mb);
    // Axes and ticks.
    out.push_str(&format!(
        "<line x1=\"{ml}\" y1=\"{0}\" x2=\"{1}\" y2=\"{0}\" stroke=\"black\"/>\n\
         <line x1=\"{ml}\" y1=\"{mt}\" x2=\"{ml}\" y2=\"{0}\" stroke=\"black\"/>\n",
        h - mb,
        w - mr
    ));
    for k in 0..=4 {
        let f = k as f64 / 4.0;
        let xv = x0 + f * (x1 - x0);
        let yv = y0 + f * (y1 - y0);
        let (xp, yp) = (px(xv), py(yv));
        out.push_str(&format!(
            "<line x1=\"{xp:.2}\" y1=\"{0}\" x2=\"{xp:.2}\" y2=\"{1}\" stroke=\"black\"/>\n\
             <text x=\"{xp:.2}\" y=\"{2}\" text-anchor=\"middle\">{3}</text>\n",
            h - mb,
            h - mb + 5.0,
            h - mb + 18.0,
            tick_label(xv)
        ));
        let ylab = if log_y {
            format!("1e{}", tick_label(yv))
        } else {
            tick_label(yv)
        };
        out.push_str(&format!(
            "<line x1=\"{0}\" y1=\"{yp:.2}\" x2=\"{ml}\" y2=\"{yp:.2}\" stroke=\"black\"/>\n\
             <text x=\"{1}\" y=\"{2:.2}\" text-anchor=\"end\">{ylab}</text>\n",
            ml - 5.0,
            ml - 8.0,
            yp + 4.0
        ));
    }
    out.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{x_label}</text>\n\
         <text x=\"16\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {2})\">{y_label}</text>\n",
        (ml + w - mr) / 2.0,
        h - 10.0,
        (mt + h - mb) / 2.0
    ));
    // Data.
    for (i, pts) in &mapped {
        let color = PALETTE[i % PALETTE.len()];
        if pts.len() > 1 {
            let path: Vec<String> = pts
                .iter()
                .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
                .collect();
            out.push_str(&format!(
                "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
                path.join(" ")
            ));
        }
        for &(x, y) in pts {
            out.push_str(&format!(
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"2.5\" fill=\"{color}\"/>\n",
                px(x),
                py(y)
            ));
        }
        let ly = mt + 14.0 * (*i as f64 + 1.0);
        out.push_str(&format!(
            "<rect x=\"{0}\" y=\"{1:.2}\" width=\"10\" height=\"3\" fill=\"{color}\"/>\n\
             <text x=\"{2}\" y=\"{3:.2}\">{4}</text>\n",
            w - mr - 180.0,
            ly - 2.0,
            w - mr - 165.0,
            ly + 3.0,
            series[*i].name
        ));
    }
    out.push_str("</svg>\n");
    out
}

/// Slit-dichotomy section of the report.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DichotomyConfig {
    pub resolutions: Vec<u32>,
    pub s: f64,
    pub p: f64,
    pub tau: f64,
}

/// Everything `run_report` needs. Serializable so a JSON config file maps
/// onto it one-to-one.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct ReportConfig {
    pub out_dir: PathBuf,
    pub domains: Vec<DomainSpec>,
    pub modes: Vec<KornMode>,
    pub s_values: Vec<f64>,
    pub p_values: Vec<f64>,
    /// Weight exponent used by weighted mode (ignored otherwise).
    pub beta: Option<f64>,
    pub seed: u64,
    /// Number of random smooth fields in the battery.
    pub random_fields: usize,
    pub max_cells: usize,
    pub tree_strategy: TreeStrategy,
    pub dichotomy: Option<DichotomyConfig>,
}

impl Default for ReportConfig {
    fn default() -> Self {
        ReportConfig {
            out_dir: PathBuf::from("korn-report"),
            domains: vec![
                DomainSpec { kind: DomainKind::UnitSquare, resolution: 64, depth: None },
                DomainSpec { kind: DomainKind::SlitSquare, resolution: 64, depth: None },
            ],
            modes: vec![KornMode::Uniform, KornMode::John],
            s_values: vec![0.25, 0.5, 0.75],
            p_values: vec![2.0],
            beta: None,
            seed: 7,
            random_fields: 2,
            max_cells: DEFAULT_MAX_CELLS,
            tree_strategy: TreeStrategy::Bfs,
            dichotomy: Some(DichotomyConfig {
                resolutions: vec![32, 64],
                s: 0.75,
                p: 2.0,
                tau: 0.5,
            }),
        }
    }
}

impl ReportConfig {
    /// Default config rooted at `out_dir`.
    pub fn quick(out_dir: impl Into<PathBuf>) -> Self {
        ReportConfig { out_dir: out_dir.into(), ..ReportConfig::default() }
    }
}

/// One quotient measurement in the summary.
#[derive(Clone, Debug, Serialize)]
pub struct KornRow {
    pub domain: String,
    pub mode: KornMode,
    pub s: f64,
    pub p: f64,
    pub field: String,
    pub numerator: f64,
    pub denominator: f64,
    pub quotient: f64,
    pub degenerate: bool,
}

/// Empirical Korn constant of one parameter point: the max quotient over
/// the field battery.
#[derive(Clone, Debug, Serialize)]
pub struct KornConstant {
    pub domain: String,
    pub mode: KornMode,
    pub s: f64,
    pub p: f64,
    pub constant: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct DomainSummary {
    pub name: String,
    pub cells: usize,
    pub volume: f64,
    pub whitney: WhitneyReport,
    pub cubes: usize,
    pub john_constant: f64,
    pub tree_depth: u32,
    /// Boundary homogeneity-exponent estimate; absent when the scale ladder
    /// did not fit on the grid.
    pub lambda_hat: Option<f64>,
    pub condition: Vec<ConditionPoint>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ReportSummary {
    pub files: Vec<String>,
    pub domains: Vec<DomainSummary>,
    pub korn: Vec<KornRow>,
    pub constants: Vec<KornConstant>,
    pub dichotomy: Vec<DichotomySample>,
    pub skipped: Vec<String>,
}

fn domain_label(spec: &DomainSpec) -> String {
    match spec.depth {
        Some(d) => format!("{}-{}-{}", spec.kind.name(), d, spec.resolution),
        None => format!("{}-{}", spec.kind.name(), spec.resolution),
    }
}

/// Boundary homogeneity exponent from a greedy-covering fit on the boundary
/// face cloud; errors out when the grid is too coarse for a 3-pair ladder.
fn boundary_dimension(dom: &GridDomain) -> Result<f64> {
    let cloud = boundary_cloud(dom, dom.h)?;
    let mut diag = 0.0;
    for a in 0..dom.dim {
        let w = dom.ext[a] as f64 * dom.h;
        diag += w * w;
    }
    let diag = diag.sqrt();
    let r_min = 2.0 * dom.h;
    let mut pairs = ratio_ladder(0.5 * diag, r_min);
    pairs.extend(ratio_ladder(0.25 * diag, r_min));
    let max_centers = if dom.dim == 3 { 64 } else { 512 };
    Ok(assouad_estimate(&cloud, &pairs, max_centers)?.lambda)
}

/// Runs the whole pipeline per domain (rasterize, decompose, tree, shadow
/// stats, admissibility, quotient battery), then writes `tables/*.csv`,
/// `plots/*.svg`, and `report.json` under the config's output directory.
pub fn run_report(cfg: &ReportConfig) -> Result<ReportSummary> {
    if cfg.domains.is_empty() || cfg.s_values.is_empty() || cfg.p_values.is_empty() {
        return Err(Error::InvalidParameter(
            "report config needs at least one domain, one s, and one p".into(),
        ));
    }
    let tables = cfg.out_dir.join("tables");
    let plots = cfg.out_dir.join("plots");
    fs::create_dir_all(&tables)?;
    fs::create_dir_all(&plots)?;

    let mut files: Vec<String> = Vec::new();
    let mut skipped: Vec<String> = Vec::new();
    let mut whitney_rows: Vec<Vec<String>> = Vec::new();
    let mut tree_rows: Vec<Vec<String>> = Vec::new();
    let mut condition_rows: Vec<Vec<String>> = Vec::new();
    let mut korn_rows: Vec<Vec<String>> = Vec::new();
    let mut korn: Vec<KornRow> = Vec::new();
    let mut constants: Vec<KornConstant> = Vec::new();
    let mut domains: Vec<DomainSummary> = Vec::new();

    for spec in &cfg.domains {
        let label = domain_label(spec);
        let dom = build_domain(spec).map_err(|e| e.at_stage("domain"))?;
        let dec = decompose(&dom).map_err(|e| e.at_stage("whitney"))?;
        let wrep = dec.validate(&dom);
        whitney_rows.push(vec![
            label.clone(),
            dec.cubes.len().to_string(),
            wrep.covered_cells.to_string(),
            wrep.total_cells.to_string(),
            fmt_f64(wrep.residual_fraction),
            wrep.dist_violations_low.to_string(),
            wrep.dist_violations_high.to_string(),
            wrep.side_ratio_violations.to_string(),
            wrep.is_valid().to_string(),
        ]);
        let ctree = build_tree(&dom, &dec, cfg.tree_strategy).map_err(|e| e.at_stage("tree"))?;
        let stats = shadow_stats(&dom, &dec, &ctree.tree);
        tree_rows.push(vec![
            label.clone(),
            dec.cubes.len().to_string(),
            fmt_f64(stats.john_constant),
            stats.max_depth.to_string(),
        ]);
        let lambda_hat = match boundary_dimension(&dom) {
            Ok(l) => Some(l),
            Err(e) => {
                skipped.push(format!("{label}: boundary dimension not estimated ({e})"));
                None
            }
        };
        let condition = match lambda_hat {
            Some(l) => {
                let beta = cfg.beta.unwrap_or(0.0);
                let pts: Vec<(f64, f64, f64)> = cfg
                    .s_values
                    .iter()
                    .flat_map(|&s| cfg.p_values.iter().map(move |&p| (s, p, beta)))
                    .collect();
                condition_check(&dec, &ctree.tree, dom.dim, l, &pts)
                    .map_err(|e| e.at_stage("condition"))?
            }
            None => Vec::new(),
        };
        for c in &condition {
            condition_rows.push(vec![
                label.clone(),
                fmt_f64(c.s),
                fmt_f64(c.p),
                fmt_f64(c.beta),
                fmt_f64(c.gamma),
                fmt_f64(c.threshold),
                c.admissible.to_string(),
                fmt_f64(c.c_tree_bound),
                fmt_f64(c.best_theta),
            ]);
        }

        let fields =
            field_battery(&dom, cfg.seed, cfg.random_fields).map_err(|e| e.at_stage("fields"))?;
        for &mode in &cfg.modes {
            if mode == KornMode::Uniform && spec.kind == DomainKind::SlitSquare {
                skipped.push(format!("{label}: uniform mode is not certified on a slit domain"));
                continue;
            }
            if mode == KornMode::Weighted && cfg.beta.is_none() {
                skipped.push(format!("{label}: weighted mode skipped, config sets no beta"));
                continue;
            }
            for &s in &cfg.s_values {
                for &p in &cfg.p_values {
                    let mut params = KornParams::new(mode, s, p);
                    params.max_cells = cfg.max_cells;
                    if mode == KornMode::Weighted {
                        params.beta = cfg.beta;
                    }
                    let results = battery_quotients(&dom, &fields, &params)
                        .map_err(|e| e.at_stage("korn"))?;
                    let mut cmax = 0.0f64;
                    for (fname, r) in results {
                        cmax = cmax.max(r.quotient);
                        korn_rows.push(vec![
                            label.clone(),
                            mode.name().to_string(),
                            fmt_f64(s),
                            fmt_f64(p),
                            fname.clone(),
                            fmt_f64(r.numerator),
                            fmt_f64(r.denominator),
                            fmt_f64(r.quotient),
                            r.degenerate.to_string(),
                            r.passes.to_string(),
                        ]);
                        korn.push(KornRow {
                            domain: label.clone(),
                            mode,
                            s,
                            p,
                            field: fname,
                            numerator: r.numerator,
                            denominator: r.denominator,
                            quotient: r.quotient,
                            degenerate: r.degenerate,
                        });
                    }
                    constants.push(KornConstant { domain: label.clone(), mode, s, p, constant: cmax });
                }
            }
        }

        domains.push(DomainSummary {
            name: label,
            cells: dom.n_cells(),
            volume: dom.volume(),
            whitney: wrep,
            cubes: dec.cubes.len(),
            john_constant: stats.john_constant,
            tree_depth: stats.max_depth,
            lambda_hat,
            condition,
        });
    }

    fn write_table(
        tables: &Path,
        files: &mut Vec<String>,
        name: &str,
        header: &[&str],
        rows: &[Vec<String>],
    ) -> Result<()> {
        write_csv(&tables.join(name), header, rows)?;
        files.push(format!("tables/{name}"));
        Ok(())
    }
    write_table(
        &tables,
        &mut files,
        "whitney.csv",
        &[
            "domain", "cubes", "covered_cells", "total_cells", "residual_fraction",
            "dist_violations_low", "dist_violations_high", "side_ratio_violations", "valid",
        ],
        &whitney_rows,
    )?;
    write_table(
        &tables,
        &mut files,
        "tree.csv",
        &["domain", "nodes", "john_constant", "max_depth"],
        &tree_rows,
    )?;
    write_table(
        &tables,
        &mut files,
        "condition.csv",
        &[
            "domain", "s", "p", "beta", "gamma", "threshold", "admissible", "c_tree_bound",
            "best_theta",
        ],
        &condition_rows,
    )?;
    write_table(
        &tables,
        &mut files,
        "korn.csv",
        &[
            "domain", "mode", "s", "p", "field", "numerator", "denominator", "quotient",
            "degenerate", "passes",
        ],
        &korn_rows,
    )?;

    // Quotient vs s: one series per (domain, mode, p), y = empirical constant.
    let mut q_series: Vec<Series> = Vec::new();
    for c in &constants {
        let name = format!("{} {} p={}", c.domain, c.mode.name(), fmt_f64(c.p));
        match q_series.iter_mut().find(|sr| sr.name == name) {
            Some(sr) => sr.points.push((c.s, c.constant)),
            None => q_series.push(Series { name, points: vec![(c.s, c.constant)] }),
        }
    }
    fs::write(
        plots.join("quotient_vs_s.svg"),
        svg_line_plot(
            "Empirical Korn constant",
            "s",
            "max quotient over battery",
            &q_series,
            false,
        ),
    )?;
    files.push("plots/quotient_vs_s.svg".into());

    // Tree-constant bound vs gamma: one series per (domain, p).
    let mut g_series: Vec<Series> = Vec::new();
    for d in &domains {
        for c in &d.condition {
            let name = format!("{} p={}", d.name, fmt_f64(c.p));
            match g_series.iter_mut().find(|sr| sr.name == name) {
                Some(sr) => sr.points.push((c.gamma, c.c_tree_bound)),
                None => g_series.push(Series { name, points: vec![(c.gamma, c.c_tree_bound)] }),
            }
        }
    }
    for sr in &mut g_series {
        sr.points.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    fs::write(
        plots.join("ctree_vs_gamma.svg"),
        svg_line_plot(
            "Hardy-constant bound on the cube tree",
            "gamma",
            "bound",
            &g_series,
            false,
        ),
    )?;
    files.push("plots/ctree_vs_gamma.svg".into());

    let mut dichotomy = Vec::new();
    if let Some(d) = &cfg.dichotomy {
        dichotomy = slit_dichotomy(&d.resolutions, d.s, d.p, d.tau, cfg.max_cells)
            .map_err(|e| e.at_stage("dichotomy"))?;
        let rows: Vec<Vec<String>> = dichotomy
            .iter()
            .map(|s| {
                vec![
                    s.resolution.to_string(),
                    s.cells.to_string(),
                    fmt_f64(s.full),
                    fmt_f64(s.truncated),
                ]
            })
            .collect();
        write_table(&tables, &mut files, "dichotomy.csv", &["resolution", "cells", "full", "truncated"], &rows)?;
        let series = [
            Series {
                name: "plain".into(),
                points: dichotomy.iter().map(|s| (s.resolution as f64, s.full)).collect(),
            },
            Series {
                name: "truncated".into(),
                points: dichotomy.iter().map(|s| (s.resolution as f64, s.truncated)).collect(),
            },
        ];
        fs::write(
            plots.join("dichotomy.svg"),
            svg_line_plot(
                "Jump field on the slit square",
                "resolution",
                "seminorm",
                &series,
                false,
            ),
        )?;
        files.push("plots/dichotomy.svg".into());
    }

    files.push("report.json".into());
    let summary =
        ReportSummary { files, domains, korn, constants, dichotomy, skipped };
    fs::write(
        cfg.out_dir.join("report.json"),
        serde_json::to_string_pretty(&summary)?,
    )?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_formatting_round_trips_and_names_specials() {
        for v in [0.1, 1.0 / 3.0, 1e-300, -2.5e17, 0.0, f64::MIN_POSITIVE] {
            let s = fmt_f64(v);
            assert_eq!(s.parse::<f64>().unwrap(), v, "{s}");
        }
        assert_eq!(fmt_f64(f64::NAN), "nan");
        assert_eq!(fmt_f64(f64::INFINITY), "inf");
        assert_eq!(fmt_f64(f64::NEG_INFINITY), "-inf");
    }

    #[test]
    fn csv_quotes_only_what_needs_quoting() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        write_csv(
            &path,
            &["a", "b"],
            &[vec!["plain".into(), "with,comma".into()], vec!["with\"quote".into(), "x".into()]],
        )
        .unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "a,b\nplain,\"with,comma\"\n\"with\"\"quote\",x\n");
    }

    #[test]
    fn svg_plot_contains_polylines_and_skips_nonfinite_points() {
        let s = svg_line_plot(
            "t",
            "x",
            "y",
            &[Series {
                name: "a".into(),
                points: vec![(0.0, 1.0), (1.0, f64::NAN), (2.0, 3.0), (3.0, 4.0)],
            }],
            false,
        );
        assert!(s.contains("<polyline"));
        assert_eq!(s.matches("<circle").count(), 3);
        let empty = svg_line_plot("t", "x", "y", &[], false);
        assert!(empty.contains("no finite data"));
    }

    #[test]
    fn quick_report_writes_every_advertised_file() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = ReportConfig::quick(dir.path());
        // Keep the smoke test fast: one small domain, no dichotomy.
        cfg.domains = vec![DomainSpec {
            kind: DomainKind::UnitSquare,
            resolution: 64,
            depth: None,
        }];
        cfg.dichotomy = None;
        cfg.random_fields = 1;
        let summary = run_report(&cfg).unwrap();
        for f in &summary.files {
            assert!(dir.path().join(f).is_file(), "missing {f}");
        }
        assert!(summary.korn.iter().all(|r| r.quotient.is_finite()));
        assert_eq!(summary.domains.len(), 1);
        assert!(summary.domains[0].whitney.is_valid());
        assert!(summary.domains[0].lambda_hat.is_some());
    }

    #[test]
    fn reports_are_byte_identical_across_thread_counts() {
        let read_tables = |root: &Path| -> Vec<(String, Vec<u8>)> {
            let mut out = Vec::new();
            let mut names: Vec<_> = std::fs::read_dir(root.join("tables"))
                .unwrap()
                .map(|e| e.unwrap().file_name().into_string().unwrap())
                .collect();
            names.sort();
            for n in names {
                out.push((n.clone(), std::fs::read(root.join("tables").join(n)).unwrap()));
            }
            out
        };
        let small = |out: &Path| {
            let mut cfg = ReportConfig::quick(out);
            cfg.domains = vec![DomainSpec {
                kind: DomainKind::SlitSquare,
                resolution: 64,
                depth: None,
            }];
            cfg.modes = vec![KornMode::John];
            cfg.s_values = vec![0.5];
            cfg.random_fields = 1;
            cfg.dichotomy =
                Some(DichotomyConfig { resolutions: vec![16, 32], s: 0.75, p: 2.0, tau: 0.5 });
            cfg
        };
        let d1 = tempfile::tempdir().unwrap();
        let d3 = tempfile::tempdir().unwrap();
        rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| run_report(&small(d1.path())).unwrap());
        rayon::ThreadPoolBuilder::new()
            .num_threads(3)
            .build()
            .unwrap()
            .install(|| run_report(&small(d3.path())).unwrap());
        let (t1, t3) = (read_tables(d1.path()), read_tables(d3.path()));
        assert_eq!(t1.len(), t3.len());
        for ((n1, b1), (n3, b3)) in t1.iter().zip(&t3) {
            assert_eq!(n1, n3);
            assert_eq!(b1, b3, "table {n1} differs between thread counts");
        }
    }
}
