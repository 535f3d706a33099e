//! Subcommand implementations.

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;

use tracereg::error::{Error, Result};
use tracereg::experiments::{
    self, check_block_design_vacuous, check_orthonormal_limit, fit_tau_model, gen_subspace_t,
    run_estimator_comparison, run_spiked, run_tau_phase, write_fit_csv, write_fit_curves_csv,
    CompareSpec, PhaseSpec, RankRule, SpikedSpec,
};
use tracereg::geometry::{self, compute_geometry_report, GeometryRequest, EFFECTIVE_ZERO};
use tracereg::sampling::{
    gen_block_design, gen_goe, gen_orthonormal_basis_design, gen_wishart, SamplingOperator,
};
use tracereg::solvers::{
    solve_chen, solve_cls, solve_nucreg, solve_ols, solve_psd_tracereg, solve_spiked, SolverConfig,
    SolverReport,
};
use tracereg::symmat::{sym_dim, SymMat};
use tracereg::RngSeed;

use crate::args::Params;
use crate::config::manifest_text;
use crate::ingest::{ingest_csv, sample_covariance, CovarianceMode};

const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Shared run scaffolding: output directory, seed, thread pool, manifest.
pub struct RunContext {
    pub out_dir: PathBuf,
    pub seed: RngSeed,
    pub quiet: bool,
    started: Instant,
}

impl RunContext {
    pub fn new(params: &Params) -> Result<Self> {
        let out_dir = PathBuf::from(params.str_or("out", "tracereg-out"));
        fs::create_dir_all(&out_dir)?;
        let seed = RngSeed(params.u64_or("seed", 12345)?);
        if let Some(threads) = params.opt_usize("threads")? {
            if threads == 0 {
                return Err(Error::InvalidInput("--threads must be positive".into()));
            }
            // ignore the error when a pool already exists (tests, repeat calls)
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build_global();
        }
        Ok(Self {
            out_dir,
            seed,
            quiet: params.flag("quiet"),
            started: Instant::now(),
        })
    }

    pub fn say(&self, msg: &str) {
        if !self.quiet {
            println!("{msg}");
        }
    }

    pub fn write_file(&self, name: &str, contents: &[u8]) -> Result<PathBuf> {
        let path = self.out_dir.join(name);
        fs::write(&path, contents)?;
        Ok(path)
    }

    pub fn finish(&self, params: &Params) -> Result<()> {
        let manifest = manifest_text(
            &params.to_config(),
            VERSION,
            self.started.elapsed().as_secs_f64(),
        );
        self.write_file("run.manifest", manifest.as_bytes())?;
        Ok(())
    }
}

fn solver_config(params: &Params) -> Result<SolverConfig> {
    let mut cfg = SolverConfig::default();
    cfg.max_iters = params.usize_or("max-iters", cfg.max_iters)?;
    cfg.rel_obj_tol = params.f64_or("rel-obj-tol", cfg.rel_obj_tol)?;
    cfg.fixed_point_tol = params.f64_or("fp-tol", cfg.fixed_point_tol)?;
    cfg.acceleration = !params.flag("no-accel");
    cfg.restart_on_nonmonotone = !params.flag("no-restart");
    cfg.validate()?;
    Ok(cfg)
}

fn load_operator(path: &str) -> Result<SamplingOperator> {
    let file = fs::File::open(path)
        .map_err(|e| Error::InvalidInput(format!("cannot open operator file {path}: {e}")))?;
    SamplingOperator::read_text(BufReader::new(file))
}

fn load_vector(path: &str) -> Result<DVector<f64>> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::InvalidInput(format!("cannot read vector file {path}: {e}")))?;
    let values: Vec<f64> = text
        .split_whitespace()
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| Error::InvalidInput(format!("bad number `{s}` in {path}")))
        })
        .collect::<Result<_>>()?;
    if values.is_empty() {
        return Err(Error::InvalidInput(format!("{path} holds no numbers")));
    }
    Ok(DVector::from_vec(values))
}

fn format_matrix(m: &SymMat) -> String {
    let mut out = String::new();
    for j in 0..m.dim() {
        let row: Vec<String> = (0..m.dim()).map(|k| format!("{:.16e}", m.get(j, k))).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

fn report_text(report: &SolverReport) -> String {
    format!(
        "objective {:.16e}\niterations {}\nconverged {}\nfixed_point_residual {:.16e}\n",
        report.objective, report.iterations, report.converged, report.fixed_point_residual
    )
}

pub fn cmd_solve(params: &Params) -> Result<()> {
    params.validate_keys(&[
        "op", "y", "method", "lambda", "sigma-sq", "max-iters", "rel-obj-tol", "fp-tol",
        "no-accel", "no-restart",
    ])?;

    let ctx = RunContext::new(params)?;
    let op = load_operator(params.require_str("op")?)?;
    let y = load_vector(params.require_str("y")?)?;
    let cfg = solver_config(params)?;
    let method = params.require_str("method")?;
    let report = match method {
        "cls" => solve_cls(&op, &y, &cfg)?,
        "ols" => solve_ols(&op, &y)?,
        "nucreg" => solve_nucreg(&op, &y, params.f64_or("lambda", 0.0)?, &cfg)?,
        "tracereg" => solve_psd_tracereg(&op, &y, params.f64_or("lambda", 0.0)?, &cfg)?,
        "chen" => solve_chen(&op, &y, params.f64_or("lambda", 0.0)?, &cfg)?,
        "spiked" => solve_spiked(&op, &y, params.f64_or("sigma-sq", 0.0)?, &cfg)?,
        other => {
            return Err(Error::InvalidInput(format!(
                "unknown method `{other}`; expected cls|ols|nucreg|tracereg|chen|spiked"
            )))
        }
    };
    ctx.write_file("estimate.txt", format_matrix(&report.estimate).as_bytes())?;
    ctx.write_file("report.txt", report_text(&report).as_bytes())?;
    ctx.say(&format!(
        "{method}: objective {:.6e}, {} iterations, converged {}",
        report.objective, report.iterations, report.converged
    ));
    ctx.finish(params)
}

fn build_ensemble(params: &Params, ctx: &RunContext, m: usize) -> Result<SamplingOperator> {
    if let Some(path) = params.opt_str("op") {
        return load_operator(path);
    }
    let ensemble = params.str_or("ensemble", "wishart");
    let op = match ensemble.as_str() {
        "orthonormal" => gen_orthonormal_basis_design(m),
        "goe" => gen_goe(m, params.require_usize("n")?, ctx.seed.child(&[0x71])),
        "wishart" => gen_wishart(
            m,
            params.require_usize("n")?,
            params.usize_or("q", 1)?,
            ctx.seed.child(&[0x71]),
        ),
        "block" => gen_block_design(m, params.require_usize("n")?, ctx.seed.child(&[0x71]))?,
        other => {
            return Err(Error::InvalidInput(format!(
                "unknown ensemble `{other}`; expected orthonormal|goe|wishart|block"
            )))
        }
    };
    Ok(op)
}

pub fn cmd_constants(params: &Params) -> Result<()> {
    params.validate_keys(&[
        "m", "n", "ensemble", "q", "op", "rank", "sigma", "tail-mu", "r-grid", "norm1-target",
        "zeta", "restarts",
    ])?;

    let ctx = RunContext::new(params)?;
    let m = params.require_usize("m")?;
    let op = build_ensemble(params, &ctx, m)?;
    let subspace = params
        .opt_usize("rank")?
        .map(|r| gen_subspace_t(op.dim_m(), r, ctx.seed.child(&[0x72])))
        .transpose()?;
    let sigma = params.f64_or("sigma", 1.0)?;
    let mut rng = ctx.seed.stream(&[0x73]);
    let noise =
        DVector::from_fn(op.n(), |_, _| sigma * rng.sample::<f64, _>(StandardNormal));
    let request = GeometryRequest {
        subspace: subspace.as_ref(),
        noise: Some(&noise),
        sigma,
        tail_mu: params.f64_or("tail-mu", 1.0)?,
        r_grid: params.list_f64_or("r-grid", &[1.5, 2.0, 4.0])?,
        norm1_target: params.opt_f64("norm1-target")?,
        prop3_zeta: params.f64_or("zeta", 2.0)?,
        restarts: params.usize_or("restarts", 10)?,
        seed: ctx.seed.child(&[0x74]),
    };
    let report = compute_geometry_report(&op, &request)?;
    let text = report.to_text();
    ctx.write_file("constants.txt", text.as_bytes())?;
    ctx.say(&text.trim_end().to_string());
    ctx.finish(params)
}

fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    (0..count)
        .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
        .collect()
}

pub fn cmd_tau_phase(params: &Params) -> Result<()> {
    params.validate_keys(&[
        "m-list", "alpha-grid", "r-list", "reps", "q", "quantile", "zero-threshold", "fit",
    ])?;

    let ctx = RunContext::new(params)?;
    let full = params.flag("full-scale");
    let m_list = params.list_usize_or("m-list", if full { &[30, 50, 70, 100] } else { &[30] })?;
    let alpha_default = linspace(0.16, 1.1, if full { 20 } else { 10 });
    let alpha_grid = params.list_f64_or("alpha-grid", &alpha_default)?;
    let r_rule = match params.list_usize("r-list")? {
        Some(list) => RankRule::Explicit(list),
        None if full => RankRule::UpToFifth,
        None => RankRule::Explicit(vec![1, 2, 3, 4, 5, 6]),
    };
    let spec = PhaseSpec {
        m_list,
        alpha_grid,
        r_rule,
        reps: params.usize_or("reps", if full { 50 } else { 25 })?,
        q: params.usize_or("q", 1)?,
        seed: ctx.seed,
        quantile: params.f64_or("quantile", 0.05)?,
        zero_threshold: params.f64_or("zero-threshold", 1e-6)?,
    };
    let table = run_tau_phase(&spec)?;
    let mut csv = Vec::new();
    table.write_csv(&mut csv)?;
    ctx.write_file("tau_phase.csv", &csv)?;
    ctx.say(&format!("tau-phase: {} rows", table.rows.len()));
    if params.flag("fit") {
        let outcomes = fit_tau_model(&table.rows, spec.quantile, spec.zero_threshold);
        let mut fit_csv = Vec::new();
        write_fit_csv(&outcomes, &mut fit_csv)?;
        ctx.write_file("tau_fit.csv", &fit_csv)?;
        let max_rank = table.rows.iter().map(|r| r.r).max().unwrap_or(1);
        let mut curves = Vec::new();
        write_fit_curves_csv(&outcomes, max_rank, &mut curves)?;
        ctx.write_file("tau_fit_curves.csv", &curves)?;
        ctx.say(&format!("fit: {} (m, n) groups", outcomes.len()));
    }
    ctx.finish(params)
}

pub fn cmd_compare(params: &Params) -> Result<()> {
    params.validate_keys(&[
        "m", "n-grid", "r-grid", "sigma", "reps", "lambda-factors", "chen-factors",
    ])?;

    let ctx = RunContext::new(params)?;
    let full = params.flag("full-scale");
    let m = params.usize_or("m", if full { 50 } else { 20 })?;
    let n_default: Vec<usize> = if full {
        [0.24, 0.26, 0.28, 0.30, 0.32, 0.34, 0.36, 0.40, 0.44, 0.48, 0.52, 0.56]
            .iter()
            .map(|f| (f * (m * m) as f64).round() as usize)
            .collect()
    } else {
        vec![(0.4 * sym_dim(m) as f64).round() as usize]
    };
    let r_default: Vec<usize> = if full { (1..=10).collect() } else { vec![1, 3] };
    let spec = CompareSpec {
        m,
        n_grid: params.list_usize_or("n-grid", &n_default)?,
        r_grid: params.list_usize_or("r-grid", &r_default)?,
        sigma: params.f64_or("sigma", 0.1)?,
        reps: params.usize_or("reps", if full { 50 } else { 25 })?,
        lambda_grid_factors: params
            .list_f64_or("lambda-factors", &CompareSpec::default_lambda_factors())?,
        chen_grid_factors: params
            .list_f64_or("chen-factors", &CompareSpec::default_chen_factors())?,
        seed: ctx.seed,
    };
    let table = run_estimator_comparison(&spec)?;
    let mut csv = Vec::new();
    table.write_csv(&mut csv)?;
    ctx.write_file("compare.csv", &csv)?;
    ctx.say(&format!("compare: {} rows", table.rows.len()));
    ctx.finish(params)
}

pub fn cmd_spiked(params: &Params) -> Result<()> {
    params.validate_keys(&[
        "m", "spikes", "sigma-sq", "c-grid", "beta-grid", "reps", "data", "rank", "mode",
    ])?;

    let ctx = RunContext::new(params)?;
    let full = params.flag("full-scale");
    let c_default: Vec<f64> = if full {
        vec![0.25, 0.5, 1.0, 2.0, 3.0, 4.0, 6.0, 8.0, 10.0, 12.0]
    } else {
        vec![0.5, 1.0, 2.0, 4.0, 6.0]
    };
    let beta_default: Vec<f64> = if full { vec![1.0, 0.4, 0.08] } else { vec![1.0] };
    let sigma_sq = params.f64_or("sigma-sq", 0.0)?;

    let (target, r, data) = match params.opt_str("data") {
        Some(path) => {
            let mut data = ingest_csv(Path::new(path))?;
            let mode = match params.str_or("mode", "covariance").as_str() {
                "covariance" | "cov" => CovarianceMode::Covariance,
                "correlation" | "corr" => CovarianceMode::Correlation,
                other => {
                    return Err(Error::InvalidInput(format!(
                        "unknown mode `{other}`; expected covariance|correlation"
                    )))
                }
            };
            let target = sample_covariance(&data, mode)?;
            // measurements see second moments of rows, so bring the rows to
            // the scale the target was computed on
            match mode {
                CovarianceMode::Covariance => data.center(),
                CovarianceMode::Correlation => data.standardize()?,
            }
            let r = params.require_usize("rank")?;
            ctx.say(&format!(
                "data: {} rows of dimension {} from {}",
                data.n_rows(),
                data.n_cols(),
                data.source.display()
            ));
            (target, r, Some(data))
        }
        None => {
            let m = params.usize_or("m", 20)?;
            let spikes = params.list_f64_or("spikes", &[10.0, 5.0, 2.0])?;
            let target = experiments::gen_spiked_target(m, &spikes, sigma_sq, ctx.seed.child(&[0x75]))?;
            (target, spikes.len(), None)
        }
    };
    let spec = SpikedSpec {
        target,
        r,
        c_grid: params.list_f64_or("c-grid", &c_default)?,
        beta_grid: params.list_f64_or("beta-grid", &beta_default)?,
        reps: params.usize_or("reps", if full { 20 } else { 10 })?,
        sigma_sq,
        seed: ctx.seed,
    };
    let table = run_spiked(&spec, data.as_ref().map(|d| &d.rows))?;
    let mut csv = Vec::new();
    table.write_csv(&mut csv)?;
    ctx.write_file("spiked.csv", &csv)?;
    ctx.say(&format!("spiked: {} rows", table.rows.len()));
    ctx.finish(params)
}

pub fn cmd_checks(suite: &str, params: &Params) -> Result<()> {
    params.validate_keys(&[
        "m", "n", "reps", "trials", "sigma", "n-below", "n-above", "rank", "factor",
    ])?;

    let ctx = RunContext::new(params)?;
    let mut lines: Vec<String> = Vec::new();
    match suite {
        "prop1" => {
            let m = params.usize_or("m", 40)?;
            let sigma = params.f64_or("sigma", 1.0)?;
            let reps = params.usize_or("reps", 20)?;
            let out = check_orthonormal_limit(m, sigma, reps, ctx.seed)?;
            let half = sigma * sigma / 2.0;
            let lo = 0.8 * half;
            let hi = 1.2 * half;
            let pass = out.mean >= lo && out.mean <= hi;
            lines.push(format!(
                "prop1 mean {:.6e} target [{:.3}, {:.3}] {}",
                out.mean,
                lo,
                hi,
                if pass { "PASS" } else { "FAIL" }
            ));
            lines.push(format!(
                "prop1 closed-form gap {:.3e} {}",
                out.max_closed_form_gap,
                if out.max_closed_form_gap <= 1e-6 { "PASS" } else { "FAIL" }
            ));
        }
        "prop2" => {
            let m = params.usize_or("m", 20)?;
            let n_below = params.usize_or("n-below", 80)?;
            let n_above = params.usize_or("n-above", 170)?;
            let trials = params.usize_or("trials", 20)?;
            let mut zero_below = 0;
            let mut positive_above = 0;
            for t in 0..trials {
                let below = gen_goe(m, n_below, ctx.seed.child(&[0x81, t as u64]));
                if geometry::tau0_sq(&below)?.value <= EFFECTIVE_ZERO {
                    zero_below += 1;
                }
                let above = gen_goe(m, n_above, ctx.seed.child(&[0x82, t as u64]));
                if geometry::tau0_sq(&above)?.value > EFFECTIVE_ZERO {
                    positive_above += 1;
                }
            }
            let need = (trials * 9).div_ceil(10);
            lines.push(format!(
                "prop2 n={n_below}: effective zero in {zero_below}/{trials} {}",
                if zero_below >= need { "PASS" } else { "FAIL" }
            ));
            lines.push(format!(
                "prop2 n={n_above}: positive in {positive_above}/{trials} {}",
                if positive_above >= need { "PASS" } else { "FAIL" }
            ));
        }
        "example1" => {
            let m = params.usize_or("m", 12)?;
            let n = params.usize_or("n", 40)?;
            let vacuous = check_block_design_vacuous(m, n, ctx.seed)?;
            lines.push(format!(
                "example1 m={m} n={n}: constrained and unconstrained objectives agree: {} {}",
                vacuous,
                if vacuous { "PASS" } else { "FAIL" }
            ));
            let op = gen_block_design(m, n, ctx.seed.child(&[0x83]))?;
            let target = experiments::gen_low_rank_target(m, (m / 4).max(1), ctx.seed.child(&[0x84]))?;
            let err = experiments::noiseless_recovery_error(&op, &target)?;
            lines.push(format!(
                "example1 noiseless recovery error {:.3} (> 0.1 expected) {}",
                err,
                if err > 0.1 { "PASS" } else { "FAIL" }
            ));
        }
        "prop4" => {
            let m = params.usize_or("m", 12)?;
            let r = params.usize_or("rank", 2)?;
            let factor = params.f64_or("factor", 3.0)?;
            let trials = params.usize_or("trials", 20)?;
            let n = ((factor * (m * r) as f64).round() as usize).max(1);
            let mut ok = 0;
            for t in 0..trials {
                let op = gen_wishart(m, n, 1, ctx.seed.child(&[0x85, t as u64]));
                let subspace = gen_subspace_t(m, r, ctx.seed.child(&[0x86, t as u64]))?;
                let mut rng = ctx.seed.stream(&[0x87, t as u64]);
                let c = nalgebra::DMatrix::from_fn(r, r, |_, _| {
                    rng.sample::<f64, _>(StandardNormal)
                });
                let core = &c * c.transpose();
                let target = SymMat::new(subspace.u_par() * core * subspace.u_par().transpose())?;
                let tau = geometry::tau_sq_t(&op, &subspace)?.value;
                let phi = geometry::phi_sq_t(&op, &subspace, 5, ctx.seed.child(&[0x88, t as u64]))?;
                let err = experiments::noiseless_recovery_error(&op, &target)?;
                if tau > 1e-3 && phi.certified_lower > 0.0 && err <= 1e-4 {
                    ok += 1;
                }
            }
            let need = (trials * 19).div_ceil(20);
            lines.push(format!(
                "prop4 m={m} r={r} n={n}: recovery with positive constants in {ok}/{trials} {}",
                if ok >= need { "PASS" } else { "FAIL" }
            ));
        }
        other => {
            return Err(Error::InvalidInput(format!(
                "unknown checks suite `{other}`; expected prop1|prop2|example1|prop4"
            )))
        }
    }
    let mut text = lines.join("\n");
    text.push('\n');
    ctx.write_file("checks.txt", text.as_bytes())?;
    for line in &lines {
        ctx.say(line);
    }
    ctx.finish(params)
}
