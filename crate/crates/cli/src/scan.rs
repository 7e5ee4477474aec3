//! `scan`: singularity maps and reference scans of the stability matrices.

use serde::Serialize;
use twosite::analysis::{self, CellStatus, ScanKind, ScanResult};
use twosite::normal_form::{self, Variant};

use crate::config::{EigQConfig, SingularityConfig, Y2ScanConfig};
use crate::context::Context;
use crate::error::CliError;
use crate::output::{flag, header, num};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ScanArg {
    Singularity,
    #[value(alias = "eigQ")]
    EigQ,
    #[value(alias = "eigQtilde")]
    EigQtilde,
    Tracking,
}

pub fn run(ctx: &mut Context, kind: ScanArg) -> Result<(), CliError> {
    match kind {
        ScanArg::Singularity => singularity(ctx),
        ScanArg::EigQ => {
            let cfg: EigQConfig = ctx.config(Some(EigQConfig::default()))?;
            cfg.y1.validate("y1")?;
            let res = analysis::scan_references(&ctx.model, ScanKind::Q, &cfg.y1.points(), cfg.yhat2_ref, 0.0);
            write_reference_scan(ctx, "eig_q", "y1_ref", &res, None)
        }
        ScanArg::EigQtilde | ScanArg::Tracking => {
            let default = Y2ScanConfig {
                k: (kind == ScanArg::Tracking).then_some(0.01),
                ..Y2ScanConfig::default()
            };
            let cfg: Y2ScanConfig = ctx.config(Some(default))?;
            cfg.y2.validate("y2")?;
            let (scan_kind, name, k) = match (kind, cfg.k) {
                (ScanArg::EigQtilde, None) => (ScanKind::QTilde, "eig_qtilde", 0.0),
                (ScanArg::Tracking, Some(k)) => (ScanKind::Tracking, "tracking", k),
                (ScanArg::EigQtilde, Some(_)) => {
                    return Err(CliError::Validation("`k` is not used by the eig-qtilde scan".into()))
                }
                _ => return Err(CliError::Validation("the tracking scan needs `k`".into())),
            };
            if !(k.is_finite() && k >= 0.0) {
                return Err(CliError::Validation(format!("`k` must be non-negative, got {k}")));
            }
            let res = analysis::scan_references(&ctx.model, scan_kind, &cfg.y2.points(), cfg.y1_ref, k);
            let boundary = (cfg.refine_tol > 0.0)
                .then(|| boundary(ctx, &res, cfg.refine_tol))
                .flatten();
            write_reference_scan(ctx, name, "y2_ref", &res, boundary)
        }
    }
}

/// Bisects between the last cell of the leading stable run and its successor.
fn boundary(ctx: &Context, res: &ScanResult, tol: f64) -> Option<f64> {
    let n = res.cells.iter().take_while(|c| c.stable).count();
    if n == 0 || n == res.cells.len() {
        return None;
    }
    let (lo, hi) = (res.cells[n - 1].reference, res.cells[n].reference);
    Some(analysis::refine_boundary(&ctx.model, res.kind, lo, hi, res.fixed, res.k, tol))
}

#[derive(Debug, Serialize)]
struct ReferenceSummary {
    kind: ScanKind,
    fixed: f64,
    k: f64,
    cells: usize,
    failed_cells: usize,
    crossings: Vec<f64>,
    stable_up_to: Option<f64>,
    /// `[first, last]` reference of each run of consecutive stable cells.
    stable_intervals: Vec<[f64; 2]>,
    refined_boundary: Option<f64>,
}

fn stable_intervals(res: &ScanResult) -> Vec<[f64; 2]> {
    let mut out: Vec<[f64; 2]> = Vec::new();
    let mut open = false;
    for c in &res.cells {
        match (c.stable, open) {
            (true, false) => out.push([c.reference; 2]),
            (true, true) => out.last_mut().unwrap()[1] = c.reference,
            _ => {}
        }
        open = c.stable;
    }
    out
}

fn write_reference_scan(
    ctx: &mut Context,
    name: &str,
    reference: &str,
    res: &ScanResult,
    refined: Option<f64>,
) -> Result<(), CliError> {
    let width = res.cells.iter().map(|c| c.eigenvalues.len()).max().unwrap_or(0);
    let mut cols = header(&[reference, "status", "in_region", "reversed_flow", "stable", "max_real"]);
    for i in 1..=width {
        cols.push(format!("re{i}"));
        cols.push(format!("im{i}"));
    }
    cols.push("detail".into());
    let rows: Vec<Vec<String>> = res
        .cells
        .iter()
        .map(|c| {
            let (status, detail) = match &c.status {
                CellStatus::Ok => ("ok", String::new()),
                CellStatus::Failed(m) => ("failed", m.replace([',', '\n'], ";")),
            };
            let mut r = vec![
                num(c.reference),
                status.into(),
                flag(c.in_region).into(),
                flag(c.reversed_flow).into(),
                flag(c.stable).into(),
                num(c.max_real),
            ];
            for i in 0..width {
                let z = c.eigenvalues.get(i);
                r.push(num(z.map_or(f64::NAN, |z| z.re)));
                r.push(num(z.map_or(f64::NAN, |z| z.im)));
            }
            r.push(detail);
            r
        })
        .collect();
    ctx.out.csv(&format!("{name}.csv"), &cols, &rows)?;
    let failed = res.cells.iter().filter(|c| c.status != CellStatus::Ok).count();
    ctx.out.json(
        &format!("{name}_summary.json"),
        &ReferenceSummary {
            kind: res.kind,
            fixed: res.fixed,
            k: res.k,
            cells: res.cells.len(),
            failed_cells: failed,
            crossings: res.crossings(),
            stable_up_to: res.stable_up_to(),
            stable_intervals: stable_intervals(res),
            refined_boundary: refined,
        },
    )?;
    if failed == res.cells.len() {
        return Err(CliError::Numerical(format!("every cell of the {name} scan failed")));
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct SingularitySummary {
    variant: Variant,
    grid: [usize; 2],
    base_y1: f64,
    region_cells: usize,
    crossing_a_cells: usize,
    crossing_dphi_cells: usize,
    origin_in_region: bool,
}

fn singularity(ctx: &mut Context) -> Result<(), CliError> {
    let cfg: SingularityConfig = ctx.config(Some(SingularityConfig::default()))?;
    cfg.validate()?;
    let base = analysis::solve_equilibrium(&ctx.model, cfg.base_y1, 0.0)?.x_star;
    let scan = normal_form::singularity_scan(&ctx.model, &cfg.x_e1.points(), &cfg.x_e3.points(), cfg.variant, &base)?;
    let cols = header(&["x_e1", "x_e3", "det_a", "det_dphi", "crossing_a", "crossing_dphi", "in_region"]);
    let rows: Vec<Vec<String>> = scan
        .cells
        .iter()
        .map(|c| {
            vec![
                num(c.x_e1),
                num(c.x_e3),
                num(c.det_a),
                num(c.det_dphi),
                flag(c.crossing_a).into(),
                flag(c.crossing_dphi).into(),
                flag(c.in_region).into(),
            ]
        })
        .collect();
    ctx.out.csv("singularity.csv", &cols, &rows)?;
    let count = |p: fn(&normal_form::SingularityCell) -> bool| scan.cells.iter().filter(|c| p(c)).count();
    ctx.out.json(
        "singularity_summary.json",
        &SingularitySummary {
            variant: cfg.variant,
            grid: [scan.x_e1.len(), scan.x_e3.len()],
            base_y1: cfg.base_y1,
            region_cells: count(|c| c.in_region),
            crossing_a_cells: count(|c| c.crossing_a),
            crossing_dphi_cells: count(|c| c.crossing_dphi),
            origin_in_region: normal_form::in_region(&ctx.model, 0.0, 0.0, cfg.variant),
        },
    )?;
    Ok(())
}
