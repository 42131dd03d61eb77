//! Experiment commands. Each writes delimited tables plus a `summary.json`
//! (deterministic, no timings) and a `timings.json` into the output directory.

use std::fs::File;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context as _};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use stcca::eval::{benchmark, inject_noise, project, PcaModel, Report};
use stcca::graph::{build_graph, multi_order};
use stcca::solver::fit_views;
use stcca::MultiViewDataset;

use crate::config::RunConfig;
use crate::dataset::{format_float, write_matrix};

/// Shared inputs of every command.
pub struct Context<'a> {
    pub dataset: &'a MultiViewDataset,
    pub config: &'a RunConfig,
    pub out_dir: &'a Path,
    pub jobs: usize,
}

impl Context<'_> {
    fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    fn dataset_info(&self) -> Value {
        json!({
            "n_samples": self.dataset.n_samples(),
            "n_views": self.dataset.n_views(),
            "dims": self.dataset.dims(),
            "n_classes": self.dataset.n_classes(),
            "names": self.dataset.names(),
        })
    }

    fn write_summary(&self, command: &str, result: Value) -> anyhow::Result<()> {
        let doc = json!({
            "command": command,
            "config": self.config,
            "dataset": self.dataset_info(),
            "result": result,
        });
        let path = self.path("summary.json");
        std::fs::write(&path, serde_json::to_string_pretty(&doc)? + "\n")
            .with_context(|| format!("cannot write {}", path.display()))
    }

    fn write_timings(&self, command: &str, total: f64, items: Value) -> anyhow::Result<()> {
        let doc = json!({ "command": command, "total_seconds": total, "items": items });
        std::fs::write(self.path("timings.json"), serde_json::to_string_pretty(&doc)? + "\n")?;
        Ok(())
    }

    fn csv(&self, name: &str) -> anyhow::Result<csv::Writer<File>> {
        let path = self.path(name);
        csv::Writer::from_path(&path).with_context(|| format!("cannot create {}", path.display()))
    }
}

/// Per-view PCA on all samples, as used by `fit` and `graph-export`.
fn reduce_all(ds: &MultiViewDataset, pca_dim: Option<usize>) -> anyhow::Result<(Vec<DMatrix<f64>>, Vec<PcaModel>)> {
    let mut views = Vec::new();
    let mut models = Vec::new();
    for (p, x) in ds.views().iter().enumerate() {
        let dim = pca_dim.unwrap_or(x.nrows()).min(x.nrows()).min(x.ncols());
        let model = PcaModel::fit(x, dim).with_context(|| format!("PCA of view {p}"))?;
        let reduced = if pca_dim.is_some() {
            model.transform(x)?
        } else {
            let mut c = x.clone();
            for mut col in c.column_iter_mut() {
                col -= model.mean();
            }
            c
        };
        views.push(reduced);
        models.push(model);
    }
    Ok((views, models))
}

pub fn fit(ctx: &Context) -> anyhow::Result<()> {
    let start = Instant::now();
    let eval = ctx.config.eval();
    let problem = ctx.config.problem()?;
    let (views, models) = reduce_all(ctx.dataset, eval.pca_dim)?;
    let result = fit_views(&views, &problem)?;

    let mut nonzero_rows = Vec::new();
    for (p, h) in result.projections.views().iter().enumerate() {
        // loadings on the original (centered) features
        let loadings = match eval.pca_dim {
            Some(_) => models[p].components() * h,
            None => h.clone(),
        };
        nonzero_rows.push((0..loadings.nrows()).filter(|&i| loadings.row(i).norm() > 0.0).count());
        let header: Vec<String> = (0..h.ncols()).map(|j| format!("c{j}")).collect();
        write_matrix(&ctx.path(&format!("projections_view{p}.csv")), &loadings, Some(&header))?;
    }

    let z = project(&views, &result.projections)?;
    let mut w = ctx.csv("embedding.csv")?;
    let r = result.projections.rank();
    let mut header = vec!["label".to_string()];
    for p in 0..views.len() {
        header.extend((0..r).map(|j| format!("view{p}_c{j}")));
    }
    w.write_record(&header)?;
    for (i, row) in z.row_iter().enumerate() {
        let mut rec = vec![ctx.dataset.labels()[i].to_string()];
        rec.extend(row.iter().map(|v| format_float(*v)));
        w.write_record(&rec)?;
    }
    w.flush()?;

    let mut w = ctx.csv("trace.csv")?;
    w.write_record(["iteration", "objective", "stationarity", "feasibility"])?;
    for (k, obj) in result.state.objective_trace.iter().enumerate() {
        let stat = match k {
            0 => String::new(),
            _ => format_float(result.state.direction_norms[k - 1]),
        };
        w.write_record([
            k.to_string(),
            format_float(*obj),
            stat,
            format_float(result.state.feasibility_trace[k]),
        ])?;
    }
    w.flush()?;

    let mut summary = serde_json::to_value(result.summary())?;
    summary["nonzero_rows"] = json!(nonzero_rows);
    ctx.write_summary("fit", summary)?;
    ctx.write_timings(
        "fit",
        start.elapsed().as_secs_f64(),
        json!({ "solver_seconds": result.wall_time.as_secs_f64() }),
    )?;
    log::info!(
        "fit: {} iterations, converged {}, objective {:.6e}",
        result.iterations,
        result.converged,
        result.final_objective
    );
    Ok(())
}

fn report_row(r: &Report) -> [String; 4] {
    [
        format_float(r.mean_accuracy),
        format_float(r.std_accuracy),
        format_float(r.mean_f1),
        format_float(r.std_f1),
    ]
}

fn run_benchmark(ds: &MultiViewDataset, cfg: &RunConfig) -> anyhow::Result<Report> {
    Ok(benchmark(ds, &cfg.problem()?, &cfg.eval())?)
}

pub fn evaluate(ctx: &Context) -> anyhow::Result<()> {
    let start = Instant::now();
    let report = run_benchmark(ctx.dataset, ctx.config)?;
    let mut w = ctx.csv("repeats.csv")?;
    w.write_record(["repeat", "accuracy", "f1"])?;
    for (i, (a, f)) in report.accuracy.iter().zip(&report.f1).enumerate() {
        w.write_record([i.to_string(), format_float(*a), format_float(*f)])?;
    }
    w.flush()?;
    ctx.write_summary("evaluate", serde_json::to_value(&report)?)?;
    ctx.write_timings("evaluate", start.elapsed().as_secs_f64(), json!(report.wall_times))?;
    log::info!(
        "evaluate: accuracy {:.4} ± {:.4}, macro-F1 {:.4}",
        report.mean_accuracy,
        report.std_accuracy,
        report.mean_f1
    );
    Ok(())
}

/// Runs `cells` in chunks of `jobs` parallel cells, handing finished rows to
/// `emit` in cell order after every chunk.
fn run_cells<T: Send>(
    n: usize,
    jobs: usize,
    compute: impl Fn(usize) -> anyhow::Result<T> + Sync,
    mut emit: impl FnMut(usize, &T) -> anyhow::Result<()>,
) -> anyhow::Result<Vec<T>> {
    let jobs = jobs.max(1);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build()?;
    let mut out = Vec::with_capacity(n);
    for chunk_start in (0..n).step_by(jobs) {
        let end = (chunk_start + jobs).min(n);
        let rows: Vec<anyhow::Result<T>> =
            pool.install(|| (chunk_start..end).into_par_iter().map(&compute).collect());
        for (i, row) in (chunk_start..end).zip(rows) {
            let row = row?;
            emit(i, &row)?;
            out.push(row);
        }
    }
    Ok(out)
}

#[derive(Serialize)]
struct Cell {
    #[serde(flatten)]
    key: Value,
    mean_accuracy: f64,
    std_accuracy: f64,
    mean_f1: f64,
    std_f1: f64,
    #[serde(skip)]
    seconds: f64,
}

fn cell(key: Value, ds: &MultiViewDataset, cfg: &RunConfig) -> anyhow::Result<Cell> {
    let start = Instant::now();
    let r = run_benchmark(ds, cfg)?;
    Ok(Cell {
        key,
        mean_accuracy: r.mean_accuracy,
        std_accuracy: r.std_accuracy,
        mean_f1: r.mean_f1,
        std_f1: r.std_f1,
        seconds: start.elapsed().as_secs_f64(),
    })
}

pub fn dim_sweep(ctx: &Context, dims: &[usize]) -> anyhow::Result<()> {
    let start = Instant::now();
    let max_r = ctx.dataset.dims().into_iter().min().unwrap_or(0);
    let (usable, skipped): (Vec<usize>, Vec<usize>) = dims.iter().partition(|&&r| r <= max_r);
    for r in &skipped {
        log::warn!("dim-sweep: skipping r = {r}, larger than the smallest view ({max_r} features)");
    }
    let cap = ctx.config.pca_dim;
    let configs: Vec<RunConfig> = usable
        .iter()
        .map(|&r| RunConfig {
            r,
            pca_dim: if cap == 0 { 0 } else { r.max(cap) },
            ..ctx.config.clone()
        })
        .collect();
    let mut w = ctx.csv("dim_sweep.csv")?;
    w.write_record(["r", "pca_dim", "mean_accuracy", "std_accuracy", "mean_f1", "std_f1"])?;
    let cells = run_cells(
        configs.len(),
        ctx.jobs,
        |i| cell(json!({ "r": configs[i].r, "pca_dim": configs[i].pca_dim }), ctx.dataset, &configs[i]),
        |i, c| {
            let mut rec = vec![configs[i].r.to_string(), configs[i].pca_dim.to_string()];
            rec.extend(report_cells(c));
            w.write_record(&rec)?;
            w.flush()?;
            Ok(())
        },
    )?;
    ctx.write_summary("dim-sweep", json!({ "cells": cells, "skipped_r": skipped }))?;
    let times: Vec<f64> = cells.iter().map(|c| c.seconds).collect();
    ctx.write_timings("dim-sweep", start.elapsed().as_secs_f64(), json!(times))?;
    Ok(())
}

fn report_cells(c: &Cell) -> [String; 4] {
    [
        format_float(c.mean_accuracy),
        format_float(c.std_accuracy),
        format_float(c.mean_f1),
        format_float(c.std_f1),
    ]
}

pub fn grid(ctx: &Context, lambdas: &[f64], orders: &[usize]) -> anyhow::Result<()> {
    let start = Instant::now();
    if lambdas.is_empty() || orders.is_empty() {
        bail!("grid needs at least one lambda and one order");
    }
    let mut configs = Vec::new();
    for &lambda in lambdas {
        for &order in orders {
            let cfg = RunConfig {
                lambda: crate::config::PerView::One(lambda),
                order,
                order_weights: None,
                ..ctx.config.clone()
            };
            cfg.validate()?;
            configs.push((lambda, order, cfg));
        }
    }
    let mut w = ctx.csv("grid.csv")?;
    w.write_record(["lambda", "order", "mean_accuracy", "std_accuracy", "mean_f1", "std_f1"])?;
    let cells = run_cells(
        configs.len(),
        ctx.jobs,
        |i| {
            let (lambda, order, cfg) = &configs[i];
            cell(json!({ "lambda": lambda, "order": order }), ctx.dataset, cfg)
        },
        |i, c| {
            let mut rec = vec![format_float(configs[i].0), configs[i].1.to_string()];
            rec.extend(report_cells(c));
            w.write_record(&rec)?;
            w.flush()?;
            Ok(())
        },
    )?;

    let mut m = ctx.csv("grid_accuracy.csv")?;
    let mut header = vec!["lambda".to_string()];
    header.extend(orders.iter().map(|l| format!("l={l}")));
    m.write_record(&header)?;
    for (a, &lambda) in lambdas.iter().enumerate() {
        let mut rec = vec![format_float(lambda)];
        rec.extend((0..orders.len()).map(|b| format_float(cells[a * orders.len() + b].mean_accuracy)));
        m.write_record(&rec)?;
    }
    m.flush()?;

    ctx.write_summary("grid", json!({ "lambdas": lambdas, "orders": orders, "cells": cells }))?;
    let times: Vec<f64> = cells.iter().map(|c| c.seconds).collect();
    ctx.write_timings("grid", start.elapsed().as_secs_f64(), json!(times))?;
    Ok(())
}

pub fn noise_sweep(ctx: &Context, fractions: &[f64]) -> anyhow::Result<()> {
    let start = Instant::now();
    for &f in fractions {
        if !(0.0..=1.0).contains(&f) {
            bail!("noise fraction {f} outside [0, 1]");
        }
    }
    let mut w = ctx.csv("noise.csv")?;
    w.write_record(["fraction", "mean_accuracy", "std_accuracy", "mean_f1", "std_f1"])?;
    let cfg = ctx.config;
    let cells = run_cells(
        fractions.len(),
        ctx.jobs,
        |i| {
            let noisy = inject_noise(ctx.dataset, fractions[i], cfg.noise_sigma, cfg.seed)?;
            let start = Instant::now();
            let report = run_benchmark(&noisy, cfg)?;
            Ok((report, start.elapsed().as_secs_f64()))
        },
        |i, (report, _)| {
            let mut rec = vec![format_float(fractions[i])];
            rec.extend(report_row(report));
            w.write_record(&rec)?;
            w.flush()?;
            Ok(())
        },
    )?;
    let rows: Vec<Value> = fractions
        .iter()
        .zip(&cells)
        .map(|(f, (r, _))| json!({ "fraction": f, "report": r }))
        .collect();
    ctx.write_summary("noise-sweep", json!({ "rows": rows }))?;
    let times: Vec<f64> = cells.iter().map(|(_, s)| *s).collect();
    ctx.write_timings("noise-sweep", start.elapsed().as_secs_f64(), json!(times))?;
    Ok(())
}

pub fn graph_export(ctx: &Context, view: Option<usize>) -> anyhow::Result<()> {
    let start = Instant::now();
    let problem = ctx.config.problem()?;
    let (views, _) = reduce_all(ctx.dataset, ctx.config.eval().pca_dim)?;
    let selected: Vec<usize> = match view {
        Some(p) if p >= views.len() => bail!("view {p} out of range (dataset has {})", views.len()),
        Some(p) => vec![p],
        None => (0..views.len()).collect(),
    };
    let mut info = Vec::new();
    for p in selected {
        let g = build_graph(&views[p], &problem.graph)?;
        let multi = multi_order(&g, &problem.graph.orders)?;
        let header: Vec<String> = (0..g.n()).map(|j| format!("n{j}")).collect();
        write_matrix(&ctx.path(&format!("graph_view{p}.csv")), &multi.w_multi, Some(&header))?;
        info.push(json!({
            "view": p,
            "first_order_nonzeros": g.nnz(),
            "multi_order_nonzeros": multi.w_multi.iter().filter(|v| **v != 0.0).count(),
        }));
    }
    ctx.write_summary("graph-export", json!({ "graphs": info }))?;
    ctx.write_timings("graph-export", start.elapsed().as_secs_f64(), json!([]))?;
    Ok(())
}
