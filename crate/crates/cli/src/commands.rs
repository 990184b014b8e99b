//! The subcommand implementations.
//!
//! Solver configuration has one source of truth: `SolverConfig`. A
//! JSON config file mirrors its field names exactly, CLI flags override
//! the file, and `compare` run specs (`algo:key=value,...`) override
//! both.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::Args;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use spectrafw::certify::{growth_constant, kkt_certificate, DEFAULT_RANK_TOL};
use spectrafw::error::{Error, Result};
use spectrafw::linalg::{sym_eig_full, SymMatrix};
use spectrafw::model::{
    generate_quadratic_sensing, load_instance, objective, recovery_error, save_instance,
    IterateState, ProblemInstance,
};
use spectrafw::sketch::{sketch_init, sketch_reconstruct, sketch_update};
use spectrafw::solvers::{
    gblockfw_preset_beta, run, run_with_sink, Algorithm, RunRecord, SolverConfig, Subproblem,
};

use crate::output::{
    fmt_f64, kv, kvf, read_sym_f64, write_iter_row, write_matrix_f64, CsvSink, RunManifest,
    CSV_HEADER,
};

// ---------------------------------------------------------------------------
// shared configuration plumbing

/// Solver knobs shared by `solve`, `compare` and `certify`. Every flag
/// mirrors a `SolverConfig` field and overrides the config file.
#[derive(Debug, Clone, Args)]
pub struct ConfigArgs {
    /// JSON config whose keys mirror SolverConfig field names exactly.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Eigenvector count for the block and spectral solvers.
    #[arg(long)]
    pub k: Option<usize>,
    /// Fixed step of the block solver, in (0, 1].
    #[arg(long)]
    pub eta: Option<f64>,
    /// Smoothness constant on the original scale; estimated when absent.
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub time_limit_s: Option<f64>,
    /// Stop once the Frank-Wolfe gap falls below this.
    #[arg(long)]
    pub gap_tol: Option<f64>,
    /// Spectral subproblem back-end: exact, g_model or f_model.
    #[arg(long)]
    pub subproblem: Option<Subproblem>,
    #[arg(long)]
    pub sub_tol: Option<f64>,
    #[arg(long)]
    pub sub_max_iters: Option<usize>,
    #[arg(long)]
    pub lanczos_tol: Option<f64>,
    /// Keep the iterate as a streaming sketch instead of a dense matrix
    /// (spectral and classical solvers only).
    #[arg(long)]
    pub sketch: bool,
    #[arg(long)]
    pub sketch_rank: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

impl ConfigArgs {
    /// Config file (or `base`) first, then flag overrides, then
    /// validation.
    fn build(&self, base: SolverConfig, algo: Option<Algorithm>) -> Result<SolverConfig> {
        let mut cfg: SolverConfig = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path)?;
                serde_json::from_str(&text)
                    .map_err(|e| Error::parse(path.display().to_string(), e.to_string()))?
            }
            None => base,
        };
        if let Some(a) = algo {
            cfg.algorithm = a;
        }
        if let Some(v) = self.k {
            cfg.k = v;
        }
        if let Some(v) = self.eta {
            cfg.eta = v;
        }
        if let Some(v) = self.beta {
            cfg.beta = Some(v);
        }
        if let Some(v) = self.max_iters {
            cfg.max_iters = v;
        }
        if let Some(v) = self.time_limit_s {
            cfg.time_limit_s = Some(v);
        }
        if let Some(v) = self.gap_tol {
            cfg.gap_tol = Some(v);
        }
        if let Some(v) = self.subproblem {
            cfg.subproblem = v;
        }
        if let Some(v) = self.sub_tol {
            cfg.sub_tol = v;
        }
        if let Some(v) = self.sub_max_iters {
            cfg.sub_max_iters = v;
        }
        if let Some(v) = self.lanczos_tol {
            cfg.lanczos_tol = v;
        }
        if self.sketch {
            cfg.use_sketch = true;
        }
        if let Some(v) = self.sketch_rank {
            cfg.sketch_rank = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// [`load_instance`] with the directory named in the error.
fn load_instance_at(dir: &Path) -> Result<ProblemInstance> {
    load_instance(dir).map_err(|e| match e {
        Error::Io(io) => Error::input(format!("cannot read instance at {}: {io}", dir.display())),
        other => other,
    })
}

/// Experiment default: the block solver on a generated instance uses
/// the `2.5 n^2` step constant unless overridden.
fn apply_instance_presets(inst: &ProblemInstance, cfg: &mut SolverConfig) {
    if cfg.algorithm == Algorithm::Gblockfw && cfg.beta.is_none() && inst.ground_truth().is_some()
    {
        cfg.beta = Some(gblockfw_preset_beta(inst.n()));
    }
}

/// Final iterate as a symmetric matrix on the original scale,
/// reconstructing from the sketch when necessary.
fn final_sym(rec: &RunRecord) -> Result<SymMatrix> {
    if let Some(x) = rec.final_dense() {
        return Ok(x.clone());
    }
    let factors = rec
        .reconstruct_sketched()?
        .expect("a run is either dense or sketched");
    SymMatrix::symmetrize(factors.reconstruct_dense())
}

fn objective_at(inst: &ProblemInstance, x: &SymMatrix) -> f64 {
    let z = inst.map().apply_dense(x);
    inst.outer().value(&z) + inst.c_matrix().map_or(0.0, |c| c.dot(x))
}

// ---------------------------------------------------------------------------
// gen

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Destination directory for the instance.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Ambient dimension; the iterate is n x n.
    #[arg(long)]
    pub n: usize,
    /// Planted rank; the generator draws m = 15 n r_nat measurements.
    #[arg(long, default_value_t = 3)]
    pub r_nat: usize,
    /// Noise-to-signal ratio; 0 keeps the exact measurements.
    #[arg(long, default_value_t = 0.5)]
    pub noise_c: f64,
    /// Trace bound of the feasible set.
    #[arg(long, default_value_t = 0.5)]
    pub tau: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

pub fn cmd_gen(args: &GenArgs) -> Result<()> {
    let inst = generate_quadratic_sensing(args.n, args.r_nat, args.noise_c, args.tau, args.seed)?;
    save_instance(&inst, &args.out)?;
    println!(
        "wrote instance n={} m={} r_nat={} noise_c={} tau={} seed={} -> {}",
        inst.n(),
        inst.m(),
        args.r_nat,
        args.noise_c,
        args.tau,
        args.seed,
        args.out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// solve

#[derive(Debug, Args)]
pub struct SolveArgs {
    /// Instance directory written by `gen`.
    #[arg(long, value_name = "DIR")]
    pub instance: PathBuf,
    #[arg(long)]
    pub algo: Algorithm,
    /// CSV destination; the manifest lands next to it.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Also write the final iterate (raw little-endian f64, n x n,
    /// row-major).
    #[arg(long, value_name = "FILE")]
    pub save_iterate: Option<PathBuf>,
    #[command(flatten)]
    pub cfg: ConfigArgs,
}

pub fn cmd_solve(args: &SolveArgs) -> Result<()> {
    let inst = load_instance_at(&args.instance)?;
    let mut cfg = args.cfg.build(SolverConfig::default(), Some(args.algo))?;
    apply_instance_presets(&inst, &mut cfg);

    let manifest = RunManifest::new("solve", &args.instance, vec![cfg.clone()]);
    let manifest_file = manifest.write_next_to(&args.out)?;
    let file = fs::File::create(&args.out)?;
    let mut sink = CsvSink::new(BufWriter::new(file))?;
    let rec = run_with_sink(&inst, &cfg, &mut sink)?;
    sink.finish()?;

    report_run(&inst, &rec);
    if let Some(truth) = inst.ground_truth() {
        let x = final_sym(&rec)?;
        kvf("recovery_error", recovery_error(&x, rec.tau, &truth.u_nat)?);
    }
    kv("csv", args.out.display());
    kv("manifest", manifest_file.display());
    if let Some(path) = &args.save_iterate {
        let x = final_sym(&rec)?;
        write_matrix_f64(path, x.as_matrix())?;
        kv("iterate", path.display());
    }
    Ok(())
}

fn report_run(inst: &ProblemInstance, rec: &RunRecord) {
    kv("algorithm", rec.algorithm);
    kv("n", inst.n());
    kv("m", inst.m());
    kvf("tau", rec.tau);
    kvf("beta", rec.beta);
    kv("stop_reason", rec.stop_reason);
    kv("iterations", rec.rows.last().map_or(0, |r| r.iter));
    kvf("final_objective", rec.final_objective);
    if let Some(last) = rec.rows.last() {
        kvf("final_fw_gap", last.fw_gap);
        kvf("wall_time_s", last.wall_time_s);
    }
    kv("fallback_steps", rec.fallback_iters.len());
}

// ---------------------------------------------------------------------------
// compare

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Instance directory shared by all runs.
    #[arg(long, value_name = "DIR")]
    pub instance: PathBuf,
    /// Run specs `algo[:key=value,...]`, e.g. `specfw:k=4`; keys mirror
    /// SolverConfig fields and apply on top of --config and the shared
    /// flags.
    #[arg(long, num_args = 1.., required = true, value_name = "SPEC")]
    pub runs: Vec<String>,
    /// Combined CSV destination, one block per run.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    #[command(flatten)]
    pub cfg: ConfigArgs,
}

pub fn cmd_compare(args: &CompareArgs) -> Result<()> {
    let inst = load_instance_at(&args.instance)?;
    let base = args.cfg.build(SolverConfig::default(), None)?;
    let mut configs = Vec::with_capacity(args.runs.len());
    for spec in &args.runs {
        let mut cfg = apply_run_spec(&base, spec)?;
        apply_instance_presets(&inst, &mut cfg);
        configs.push(cfg);
    }
    let manifest = RunManifest::new("compare", &args.instance, configs.clone());
    let manifest_file = manifest.write_next_to(&args.out)?;

    let mut records = Vec::with_capacity(configs.len());
    for cfg in &configs {
        records.push(run(&inst, cfg)?);
    }
    let f_star = records
        .iter()
        .map(|r| r.final_objective)
        .fold(f64::INFINITY, f64::min);
    let denom = f_star.abs().max(1.0);

    let mut out = BufWriter::new(fs::File::create(&args.out)?);
    writeln!(out, "run,algorithm,rel_objective,{CSV_HEADER}")?;
    for (i, rec) in records.iter().enumerate() {
        for row in &rec.rows {
            write!(
                out,
                "{i},{},{},",
                rec.algorithm,
                fmt_f64((row.objective - f_star) / denom)
            )?;
            write_iter_row(&mut out, row)?;
        }
    }
    out.flush()?;

    kvf("f_star", f_star);
    for (i, (rec, spec)) in records.iter().zip(&args.runs).enumerate() {
        let last = rec.rows.last().expect("every run logs a terminal row");
        println!(
            "run {i}: spec={spec} algorithm={} stop_reason={} iterations={} \
             final_objective={} final_rel_objective={}",
            rec.algorithm,
            rec.stop_reason,
            last.iter,
            fmt_f64(rec.final_objective),
            fmt_f64((rec.final_objective - f_star) / denom)
        );
    }
    kv("csv", args.out.display());
    kv("manifest", manifest_file.display());
    Ok(())
}

/// `algo[:key=value,...]` on top of the shared base config.
fn apply_run_spec(base: &SolverConfig, spec: &str) -> Result<SolverConfig> {
    let (algo_part, overrides) = match spec.split_once(':') {
        Some((a, rest)) => (a, Some(rest)),
        None => (spec, None),
    };
    let algorithm: Algorithm = algo_part.trim().parse()?;
    let mut value =
        serde_json::to_value(base).map_err(|e| Error::parse("config", e.to_string()))?;
    let obj = value.as_object_mut().expect("config serializes to an object");
    obj.insert(
        "algorithm".into(),
        serde_json::Value::String(algorithm.to_string()),
    );
    if let Some(rest) = overrides {
        for pair in rest.split(',') {
            let pair = pair.trim();
            if pair.is_empty() {
                continue;
            }
            let (key, raw) = pair
                .split_once('=')
                .ok_or_else(|| Error::parse("runs", format!("override {pair:?} is not key=value")))?;
            if !obj.contains_key(key) {
                return Err(Error::parse("runs", format!("unknown config key {key:?}")));
            }
            // Bare words like g_model are string values.
            let parsed = serde_json::from_str::<serde_json::Value>(raw)
                .unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
            obj.insert(key.to_string(), parsed);
        }
    }
    let cfg: SolverConfig = serde_json::from_value(value)
        .map_err(|e| Error::parse("runs", format!("spec {spec:?}: {e}")))?;
    cfg.validate()?;
    Ok(cfg)
}

// ---------------------------------------------------------------------------
// certify

#[derive(Debug, Args)]
pub struct CertifyArgs {
    /// Instance directory to certify.
    #[arg(long, value_name = "DIR", conflicts_with = "preset_n")]
    pub instance: Option<PathBuf>,
    /// Iterate to certify (raw little-endian f64, n x n, row-major);
    /// default is the uniform start (tau/n) I.
    #[arg(long, value_name = "FILE", conflicts_with_all = ["solve_first", "preset_n"])]
    pub iterate: Option<PathBuf>,
    /// Solve before certifying (spectral solver, tight gap tolerance).
    #[arg(long)]
    pub solve_first: bool,
    /// Relative eigenvalue cutoff deciding numerical ranks.
    #[arg(long, default_value_t = DEFAULT_RANK_TOL)]
    pub rank_tol: f64,
    /// Sweep mode: generate, solve and certify quadratic-sensing
    /// instances at this dimension, then report means.
    #[arg(long, value_name = "N")]
    pub preset_n: Option<usize>,
    /// Number of sweep seeds (0..seeds).
    #[arg(long, default_value_t = 1)]
    pub seeds: u64,
    /// Planted rank in sweep mode.
    #[arg(long, default_value_t = 3)]
    pub r_nat: usize,
    /// Noise ratio in sweep mode.
    #[arg(long, default_value_t = 0.5)]
    pub noise_c: f64,
    /// Trace bound in sweep mode.
    #[arg(long, default_value_t = 0.5)]
    pub tau: f64,
    /// Solver for --solve-first and sweep mode (default specfw, k=4).
    #[arg(long)]
    pub algo: Option<Algorithm>,
    #[command(flatten)]
    pub cfg: ConfigArgs,
}

pub fn cmd_certify(args: &CertifyArgs) -> Result<()> {
    match (&args.instance, args.preset_n) {
        (Some(dir), None) => certify_single(args, dir),
        (None, Some(n)) => certify_sweep(args, n),
        (None, None) => Err(Error::config("pass either --instance or --preset-n")),
        (Some(_), Some(_)) => unreachable!("flags conflict"),
    }
}

/// Solver defaults for certification runs: spectral solver with a block
/// of 4 and a gap tolerance tight enough for rank detection.
fn certify_solver_config(args: &CertifyArgs, inst: &ProblemInstance) -> Result<SolverConfig> {
    let mut base = SolverConfig::new(Algorithm::Specfw);
    base.k = 4;
    base.max_iters = 2000;
    let mut cfg = args.cfg.build(base, args.algo)?;
    apply_instance_presets(inst, &mut cfg);
    if cfg.gap_tol.is_none() {
        let f0 = objective(inst, &IterateState::init_dense(inst));
        cfg.gap_tol = Some(1e-9 * f0.abs().max(1.0));
    }
    Ok(cfg)
}

fn certify_single(args: &CertifyArgs, dir: &Path) -> Result<()> {
    let inst = load_instance_at(dir)?;
    let x = if let Some(path) = &args.iterate {
        read_sym_f64(path, inst.n())?
    } else if args.solve_first {
        let cfg = certify_solver_config(args, &inst)?;
        let rec = run(&inst, &cfg)?;
        kv("solver", rec.algorithm);
        kv("stop_reason", rec.stop_reason);
        kv("iterations", rec.rows.last().map_or(0, |r| r.iter));
        kvf("final_fw_gap", rec.rows.last().map_or(f64::NAN, |r| r.fw_gap));
        final_sym(&rec)?
    } else {
        let n = inst.n();
        SymMatrix::from_diagonal(&DVector::from_element(n, inst.tau() / n as f64))
    };
    print_certificate(&inst, &x, args.rank_tol)
}

fn print_certificate(inst: &ProblemInstance, x: &SymMatrix, rank_tol: f64) -> Result<()> {
    let cert = kkt_certificate(inst, x, rank_tol)?;
    kv("n", inst.n());
    kv("m", inst.m());
    kvf("tau", inst.tau());
    kvf("objective", objective_at(inst, x));
    kvf("s_star", cert.s_star);
    kv("rank_x", cert.rank_x);
    kv("rank_z", cert.rank_z);
    kvf("eigengap", cert.eigengap);
    kvf("comp_residual", cert.comp_residual);
    kv("strict_comp", cert.strict_comp);
    match growth_constant(inst, &cert, x) {
        Ok(g) => {
            kvf("gamma", g.gamma);
            kv("growth_case", g.case);
            if let Some(c) = &g.components {
                kvf("lambda_z", c.lambda_z);
                kvf("sigma_max", c.sigma_max);
                kvf("sigma_min", c.sigma_min);
                kvf("alpha", c.alpha);
            }
        }
        Err(Error::Certificate(msg)) => kv("gamma", format_args!("unavailable ({msg})")),
        Err(e) => return Err(e),
    }
    if let Some(truth) = inst.ground_truth() {
        kvf("recovery_error", recovery_error(x, inst.tau(), &truth.u_nat)?);
    }
    Ok(())
}

fn certify_sweep(args: &CertifyArgs, n: usize) -> Result<()> {
    if args.seeds == 0 {
        return Err(Error::config("--seeds must be at least 1"));
    }
    let mut gaps = Vec::new();
    let mut errors = Vec::new();
    let mut strict = 0u64;
    for seed in 0..args.seeds {
        let inst = generate_quadratic_sensing(n, args.r_nat, args.noise_c, args.tau, seed)?;
        let mut cfg = certify_solver_config(args, &inst)?;
        if args.cfg.seed.is_none() {
            cfg.seed = seed;
        }
        let rec = run(&inst, &cfg)?;
        let x = final_sym(&rec)?;
        let cert = kkt_certificate(&inst, &x, args.rank_tol)?;
        let truth = inst.ground_truth().expect("generated instances carry truth");
        let err = recovery_error(&x, inst.tau(), &truth.u_nat)?;
        println!(
            "seed={seed} stop_reason={} rank_x={} rank_z={} eigengap={} comp_residual={} \
             strict_comp={} recovery_error={}",
            rec.stop_reason,
            cert.rank_x,
            cert.rank_z,
            fmt_f64(cert.eigengap),
            fmt_f64(cert.comp_residual),
            cert.strict_comp,
            fmt_f64(err)
        );
        gaps.push(cert.eigengap);
        errors.push(err);
        strict += u64::from(cert.strict_comp);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    kv("seeds", args.seeds);
    kvf("mean_eigengap", mean(&gaps));
    kvf("mean_recovery_error", mean(&errors));
    kv("strict_comp_count", format_args!("{strict}/{}", args.seeds));
    Ok(())
}

// ---------------------------------------------------------------------------
// sketch-demo

#[derive(Debug, Args)]
pub struct SketchDemoArgs {
    /// Ambient dimension of the streamed matrix.
    #[arg(long)]
    pub n: usize,
    /// Rank of the streamed updates (and default sketch target rank).
    #[arg(long)]
    pub r: usize,
    /// Number of random updates to stream.
    #[arg(long)]
    pub steps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Reconstruction rank; defaults to r.
    #[arg(long)]
    pub sketch_rank: Option<usize>,
}

pub fn cmd_sketch_demo(args: &SketchDemoArgs) -> Result<()> {
    let (n, r) = (args.n, args.r);
    if r == 0 || r > n {
        return Err(Error::input(format!("need 1 <= r <= n, got r={r}, n={n}")));
    }
    let target = args.sketch_rank.unwrap_or(r);
    // The sketch's test matrices must be independent of the stream, so
    // they draw from a separated seed.
    let mut sk = sketch_init(n, target, args.seed ^ 0x5ce7_c4aa_0011_55aa)?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let mut u = DMatrix::zeros(n, r);
    for j in 0..r {
        for i in 0..n {
            u[(i, j)] = rng.sample::<f64, _>(StandardNormal);
        }
    }
    let mut shadow = DMatrix::<f64>::zeros(n, n);
    for _ in 0..args.steps {
        let g = DMatrix::from_fn(r, r, |_, _| rng.sample::<f64, _>(StandardNormal));
        let s = (&g * g.transpose()).scale(1.0 / r as f64);
        let keep = rng.gen_range(0.2..0.9);
        shadow = shadow.scale(keep) + &u * &s * u.transpose();
        sketch_update(&mut sk, &u, &s, keep)?;
    }
    kv("n", n);
    kv("r", r);
    kv("sketch_rank", target);
    kv("steps", args.steps);
    if args.steps == 0 {
        // Nothing streamed: sketch and shadow are both exactly zero.
        kvf("rel_err", 0.0);
        kvf("lambda_min", 0.0);
        kv("ill_conditioned", false);
        return Ok(());
    }
    let factors = sketch_reconstruct(&sk)?;
    let xhat = factors.reconstruct_dense();
    kvf("rel_err", (&xhat - &shadow).norm() / shadow.norm().max(1e-300));
    let eig = sym_eig_full(&SymMatrix::symmetrize(xhat)?)?;
    kvf("lambda_min", eig.values[n - 1]);
    kv("ill_conditioned", factors.ill_conditioned);
    Ok(())
}
