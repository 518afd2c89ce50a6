//! CSV and JSON emission. Plot files use the two-column header `x,y`.

use std::fs;
use std::path::Path;

use atmpc_core::certify::Certificate;
use atmpc_core::perf_bound::BoundReport;
use atmpc_core::Vector;
use serde::Serialize;

use crate::sim::SimResult;
use crate::sweep::{SweepKind, SweepResult};
use crate::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

pub fn write_xy(path: &Path, points: &[(f64, f64)]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["x", "y"])?;
    for (x, y) in points {
        w.write_record([x.to_string(), y.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// State trajectory as plot data: `(x_1, x_2)`, or `(k, x_1)` for scalar
/// states.
pub fn trajectory_points(states: &[Vector]) -> Vec<(f64, f64)> {
    states
        .iter()
        .enumerate()
        .map(|(k, x)| {
            if x.len() >= 2 {
                (x[0], x[1])
            } else {
                (k as f64, x[0])
            }
        })
        .collect()
}

pub fn write_table(
    path: &Path,
    header: &[String],
    rows: &[Vec<String>],
) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<(), HarnessError> {
    fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

#[derive(Serialize)]
struct StepRow {
    k: usize,
    x: Vec<f64>,
    u: Vec<f64>,
    stage_cost: f64,
    value: f64,
    theta_hat: Vec<f64>,
    facets: usize,
    vertices: usize,
    hull_dim: usize,
    volume: f64,
}

#[derive(Serialize)]
struct RunJson<'a> {
    converged: bool,
    cost: f64,
    tail: f64,
    theta_err0: f64,
    pred_err_bound: f64,
    invariants: &'a crate::sim::InvariantReport,
    steps: Vec<StepRow>,
    final_state: Vec<f64>,
}

fn step_rows(r: &SimResult) -> Vec<StepRow> {
    let log = &r.log;
    (0..log.inputs.len())
        .map(|k| {
            let s = log.membership_sets[k];
            StepRow {
                k,
                x: log.states[k].iter().copied().collect(),
                u: log.inputs[k].iter().copied().collect(),
                stage_cost: log.stage_costs[k],
                value: log.values[k],
                theta_hat: log.estimates[k].iter().copied().collect(),
                facets: s.facets,
                vertices: s.vertices,
                hull_dim: s.hull_dim,
                volume: s.volume,
            }
        })
        .collect()
}

/// `trajectory.csv` plus `run.csv`, or `run.json`.
pub fn write_run(dir: &Path, r: &SimResult, format: Format) -> Result<(), HarnessError> {
    fs::create_dir_all(dir)?;
    write_xy(
        &dir.join("trajectory.csv"),
        &trajectory_points(&r.log.states),
    )?;
    let rows = step_rows(r);
    match format {
        Format::Json => write_json(
            &dir.join("run.json"),
            &RunJson {
                converged: r.converged,
                cost: r.cost,
                tail: r.tail,
                theta_err0: r.theta_err0,
                pred_err_bound: r.pred_err_bound,
                invariants: &r.invariants,
                steps: rows,
                final_state: r
                    .log
                    .states
                    .last()
                    .map(|x| x.iter().copied().collect())
                    .unwrap_or_default(),
            },
        ),
        Format::Csv => {
            let n = r.log.states[0].len();
            let m = r.log.inputs.first().map_or(0, |u| u.len());
            let p = r.log.estimates.first().map_or(0, |t| t.len());
            let mut header = vec!["k".to_string()];
            header.extend((1..=n).map(|i| format!("x{i}")));
            header.extend((1..=m).map(|i| format!("u{i}")));
            header.extend(["stage_cost".into(), "value".into()]);
            header.extend((1..=p).map(|i| format!("theta_hat{i}")));
            header.extend([
                "facets".into(),
                "vertices".into(),
                "hull_dim".into(),
                "volume".into(),
            ]);
            let body: Vec<Vec<String>> = rows
                .iter()
                .map(|s| {
                    let mut row = vec![s.k.to_string()];
                    row.extend(s.x.iter().map(f64::to_string));
                    row.extend(s.u.iter().map(f64::to_string));
                    row.push(s.stage_cost.to_string());
                    row.push(s.value.to_string());
                    row.extend(s.theta_hat.iter().map(f64::to_string));
                    row.extend([
                        s.facets.to_string(),
                        s.vertices.to_string(),
                        s.hull_dim.to_string(),
                        s.volume.to_string(),
                    ]);
                    row
                })
                .collect();
            write_table(&dir.join("run.csv"), &header, &body)
        }
    }
}

pub fn bound_text(r: &BoundReport<f64>) -> String {
    let mut out = String::new();
    for (k, v) in r.entries() {
        out.push_str(&format!("{k} = {v:.6e}\n"));
    }
    out.push_str(&format!(
        "bound = {:.6e} * V_inf(x0) + {:.6e}\n",
        r.alpha_v,
        r.intercept()
    ));
    out
}

pub fn write_bound(dir: &Path, r: &BoundReport<f64>, format: Format) -> Result<(), HarnessError> {
    fs::create_dir_all(dir)?;
    let entries = r.entries();
    match format {
        Format::Csv => {
            let rows: Vec<Vec<String>> = entries
                .iter()
                .map(|(k, v)| vec![k.to_string(), v.to_string()])
                .collect();
            write_table(
                &dir.join("bound_report.csv"),
                &["name".into(), "value".into()],
                &rows,
            )
        }
        Format::Json => {
            let map: serde_json::Map<String, serde_json::Value> = entries
                .into_iter()
                .map(|(k, v)| (k.to_string(), serde_json::json!(v)))
                .collect();
            write_json(&dir.join("bound_report.json"), &map)
        }
    }
}

pub fn certificate_text(name: &str, c: &Certificate<f64>) -> String {
    let mut out = format!(
        "{name}: {:?} (min eigenvalue {:.6e})\n",
        c.verdict(),
        c.min_eigenvalue
    );
    for v in &c.vertex_reports {
        let th: Vec<String> = v.theta.iter().map(|t| format!("{t:.4}")).collect();
        out.push_str(&format!(
            "  theta = [{}]  margin = {:.6e}\n",
            th.join(", "),
            v.margin
        ));
    }
    out
}

fn fmt_level(x: f64) -> String {
    format!("{x:e}")
}

/// Sweep tables: one long table of runs, a per-level summary and one
/// trajectory file per level (the first sample of the level).
pub fn write_sweep(dir: &Path, s: &SweepResult, format: Format) -> Result<(), HarnessError> {
    fs::create_dir_all(dir)?;
    let tag = match s.spec.kind {
        SweepKind::ThetaSetVolume => "sweep_set",
        SweepKind::ThetaErrorNorm => "sweep_error",
    };
    if format == Format::Json {
        write_json(&dir.join(format!("{tag}.json")), s)?;
    } else {
        let header: Vec<String> = [
            "level",
            "sample",
            "theta_hat0",
            "theta_err_norm",
            "cost",
            "converged",
            "steps",
            "status",
        ]
        .iter()
        .map(|h| h.to_string())
        .collect();
        let rows: Vec<Vec<String>> = s
            .records
            .iter()
            .map(|r| {
                let th: Vec<String> = r.theta_hat0.iter().map(f64::to_string).collect();
                vec![
                    fmt_level(r.level),
                    r.sample.to_string(),
                    th.join(" "),
                    r.theta_err_norm.to_string(),
                    r.cost.to_string(),
                    r.converged.to_string(),
                    r.steps.to_string(),
                    if r.violations.is_empty() {
                        r.status.clone()
                    } else {
                        format!("{}; {}", r.status, r.violations.join("; "))
                    },
                ]
            })
            .collect();
        write_table(&dir.join(format!("{tag}_runs.csv")), &header, &rows)?;
    }

    let levels = &s.spec.levels;
    match s.spec.kind {
        SweepKind::ThetaSetVolume => {
            // Box-plot source: one column per volume, one row per sample.
            let header: Vec<String> = levels.iter().map(|l| fmt_level(*l)).collect();
            let rows: Vec<Vec<String>> = (0..s.spec.samples_per_level)
                .map(|j| {
                    (0..levels.len())
                        .map(|i| {
                            s.level_records(i)
                                .find(|r| r.sample == j)
                                .map_or(String::new(), |r| r.cost.to_string())
                        })
                        .collect()
                })
                .collect();
            write_table(&dir.join("sweep_set_costs.csv"), &header, &rows)?;
        }
        SweepKind::ThetaErrorNorm => {
            let worst: Vec<(f64, f64)> = (0..levels.len())
                .map(|i| (levels[i], s.worst_cost(i)))
                .collect();
            write_xy(&dir.join("sweep_error_worst.csv"), &worst)?;
        }
    }
    for i in 0..levels.len() {
        if let Some(r) = s.level_records(i).find(|r| r.sample == 0) {
            write_xy(
                &dir.join(format!("{tag}_trajectory_{i}.csv")),
                &trajectory_points(&r.trajectory),
            )?;
        }
    }
    Ok(())
}
