use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use asfw_core::aasm::{aasm_minimize, AasmOptions};
use asfw_core::asfw::{asfw_run_with_callback, AsfwOptions, RunResult, TraceRow};
use asfw_core::bench::{self, BenchmarkInstance};
use asfw_core::rng::GENERATOR_NAME;
use asfw_core::selftest::{run_all, SelftestOptions};
use asfw_core::abs_linearize;
use rayon::prelude::*;
use serde_json::{json, Map, Value};

use crate::config::{step_label, Rho, RunConfig, Sweep};
use crate::{EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_SOLVER};

pub const CSV_HEADER: &str = "t,alpha,gap,fval,inner_polyhedra,lp_calls,elapsed_ms";

pub fn build_instance(cfg: &RunConfig) -> (BenchmarkInstance, Option<f64>) {
    let n = cfg.n;
    match cfg.problem.as_str() {
        "maxq" => (bench::maxq(n, cfg.set), None),
        "chained_lq" => (bench::chained_lq(n), None),
        "rosenbrock_nesterov1" => (bench::rosenbrock_nesterov1(n), None),
        "rosenbrock_nesterov2" => (bench::rosenbrock_nesterov2(n), None),
        "chained_crescent1" => (bench::chained_crescent1(n), None),
        "mifflin2" => (bench::mifflin2(), None),
        "active_faces" => (bench::active_faces(n), None),
        "chained_mifflin2" => (bench::chained_mifflin2(n), None),
        "chained_crescent2" => (bench::chained_crescent2(n), None),
        "lasso" => {
            let data = bench::lasso_data(n, cfg.p, cfg.seed);
            let rho = match cfg.rho {
                Rho::Auto => bench::lasso_auto_rho(&data),
                Rho::Value(v) => v,
            };
            let inst = bench::lasso_from_data(&data, rho, cfg.variant);
            (inst, Some(rho))
        }
        other => unreachable!("problem `{other}` passed validation"),
    }
}

fn csv_line(r: &TraceRow) -> String {
    format!("{},{},{},{},{},{},{}", r.t, r.alpha, r.gap, r.fval, r.inner_polyhedra, r.lp_calls, r.elapsed_ms)
}

fn meta_json(cfg: &RunConfig, inst: &BenchmarkInstance, rho: Option<f64>, outcome: &Outcome) -> Value {
    let mut m = Map::new();
    for (k, v) in &inst.meta {
        m.insert(k.clone(), Value::String(v.clone()));
    }
    m.insert("step".into(), json!(step_label(cfg.step)));
    m.insert("monotone".into(), json!(cfg.monotone));
    m.insert("max_iters".into(), json!(cfg.max_iters));
    m.insert("gap_tol".into(), json!(cfg.gap_tol));
    if let Some(k) = cfg.partial_inner_limit {
        m.insert("partial_inner_limit".into(), json!(k));
    }
    if let Some(rho) = rho {
        m.insert("rho".into(), json!(rho));
        m.insert("rho_setting".into(), json!(cfg.rho.to_string()));
        m.insert("seed".into(), json!(cfg.seed));
        m.insert("generator".into(), json!(GENERATOR_NAME));
    }
    match outcome {
        Outcome::Done(res) => {
            m.insert("status".into(), json!(format!("{:?}", res.status)));
            m.insert("rows".into(), json!(res.trace.rows.len()));
            m.insert("f_final".into(), json!(res.f_final));
        }
        Outcome::Failed { message, rows } => {
            m.insert("status".into(), json!("SolverError"));
            m.insert("error".into(), json!(message));
            m.insert("rows".into(), json!(rows));
        }
    }
    Value::Object(m)
}

enum Outcome {
    Done(RunResult),
    Failed { message: String, rows: usize },
}

fn meta_path(csv: &Path) -> PathBuf {
    csv.with_extension("meta.json")
}

/// Runs one configuration, streaming CSV rows to `sink`. Returns the exit code.
fn run_one(cfg: &RunConfig, sink: &mut dyn Write, meta_out: Option<&Path>) -> Result<u8> {
    let (inst, rho) = build_instance(cfg);
    let opts = AsfwOptions {
        rule: cfg.rule(),
        max_iters: cfg.max_iters,
        gap_tol: cfg.gap_tol,
        aasm: AasmOptions { partial_inner_limit: cfg.partial_inner_limit, ..AasmOptions::default() },
    };
    writeln!(sink, "{CSV_HEADER}")?;
    let mut io_err = None;
    let res = asfw_run_with_callback(&inst.tape, &inst.poly, &inst.x0, &opts, &mut |row, _, _| {
        if io_err.is_none() {
            if let Err(e) = writeln!(sink, "{}", csv_line(row)) {
                io_err = Some(e);
            }
        }
    });
    sink.flush()?;
    if let Some(e) = io_err {
        return Err(e).context("writing trace");
    }
    let (outcome, code) = match res {
        Ok(r) => (Outcome::Done(r), 0),
        Err(e) => {
            eprintln!("{}: solver error at iteration {}: {e:#}", cfg.stem(), e.iteration);
            (Outcome::Failed { message: format!("{e:#}"), rows: e.trace.rows.len() }, EXIT_SOLVER)
        }
    };
    if let Outcome::Done(r) = &outcome {
        eprintln!(
            "{}: status={:?} rows={} f={}",
            cfg.stem(),
            r.status,
            r.trace.rows.len(),
            r.f_final
        );
    }
    let meta = serde_json::to_string_pretty(&meta_json(cfg, &inst, rho, &outcome))?;
    match meta_out {
        Some(p) => std::fs::write(p, meta + "\n").with_context(|| format!("writing {}", p.display()))?,
        None => eprintln!("{meta}"),
    }
    Ok(code)
}

fn run_to_file(cfg: &RunConfig, csv: &Path) -> Result<u8> {
    let file = File::create(csv).with_context(|| format!("creating {}", csv.display()))?;
    let mut w = BufWriter::new(file);
    run_one(cfg, &mut w, Some(&meta_path(csv)))
}

pub fn cmd_run(sweep: &Sweep) -> u8 {
    let result = if sweep.runs.len() == 1 {
        let cfg = &sweep.runs[0];
        match &sweep.output {
            Some(path) => run_to_file(cfg, path),
            None => run_one(cfg, &mut io::stdout().lock(), None),
        }
    } else {
        let dir = sweep.output.as_ref().expect("sweeps carry an output directory");
        if let Err(e) = std::fs::create_dir_all(dir) {
            eprintln!("error: creating {}: {e}", dir.display());
            return EXIT_CONFIG;
        }
        let pool = match rayon::ThreadPoolBuilder::new().num_threads(sweep.jobs).build() {
            Ok(p) => p,
            Err(e) => {
                eprintln!("error: thread pool: {e}");
                return EXIT_CONFIG;
            }
        };
        let codes: Vec<Result<u8>> = pool.install(|| {
            sweep
                .runs
                .par_iter()
                .map(|cfg| run_to_file(cfg, &dir.join(format!("{}.csv", cfg.stem()))))
                .collect()
        });
        codes.into_iter().try_fold(0u8, |acc, c| c.map(|c| acc.max(c)))
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_SOLVER
        }
    }
}

pub fn cmd_aasm_table(n_max: usize) -> u8 {
    println!("{:>3} {:>8} {:>8} {:>8} {:>6} {:>8} {:>9}", "n", "visited", "target", "bound", "pass", "reached", "secs");
    let mut all_pass = true;
    for n in 1..=n_max {
        let inst = bench::rosenbrock_nesterov2(n);
        let t0 = Instant::now();
        let form = match abs_linearize(&inst.tape, &vec![0.0; n]) {
            Ok(f) => f,
            Err(e) => {
                eprintln!("n={n}: {e}");
                return EXIT_SOLVER;
            }
        };
        let res = match aasm_minimize(&form, &inst.poly, &inst.x0, &AasmOptions::default()) {
            Ok(r) => r,
            Err(e) => {
                eprintln!("n={n}: {e}");
                return EXIT_SOLVER;
            }
        };
        let secs = t0.elapsed().as_secs_f64();
        let pass = res.polyhedra_visited <= 1usize << n;
        let reached = res.v_star.iter().all(|v| (v - 1.0).abs() <= 1e-8);
        all_pass &= pass && reached;
        println!(
            "{n:>3} {:>8} {:>8} {:>8} {:>6} {:>8} {secs:>9.3}",
            res.polyhedra_visited,
            1usize << (n - 1),
            1usize << n,
            if pass { "yes" } else { "NO" },
            if reached { "yes" } else { "NO" },
        );
    }
    if all_pass {
        0
    } else {
        EXIT_CHECK_FAILED
    }
}

pub fn cmd_selftest(seed: Option<u64>, corrupt_l: bool) -> u8 {
    let mut opts = SelftestOptions { corrupt_l, ..SelftestOptions::default() };
    if let Some(s) = seed {
        opts.seed = s;
    }
    let reports = run_all(&opts);
    for r in &reports {
        println!("{r}");
    }
    let failed = reports.iter().filter(|r| !r.passed()).count();
    println!("selftest: {} of {} suites passed", reports.len() - failed, reports.len());
    if failed == 0 {
        0
    } else {
        EXIT_CHECK_FAILED
    }
}
