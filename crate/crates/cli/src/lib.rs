//! `brw`: sampling, estimation and validation runs with manifests.
//!
//! The binary is a thin wrapper over [`main_with`], which the acceptance
//! suite also calls in-process.
//!
//! Exit codes: 0 success, 1 usage or input error, 2 validation failure.

mod manifest;
mod options;
mod table;

use std::ffi::OsString;
use std::fmt::Write as _;

use anyhow::{anyhow, bail, Context, Result};
use brw_core::brw::{BrwSampler, Centering, ComparisonSampler};
use brw_core::estimators::shard::run_shards;
use brw_core::estimators::{
    estimate_conditional_mean, estimate_max_cdf, estimate_positivity, eval_lefttail_bounds, eval_positivity_bounds,
    lambda_prime_residual, log_sum_lemma, sig17, solve_lambda_prime, tilted_left_tail, BoundParams, EstimateRecord,
    FieldModel, PositivityMethod,
};
use brw_core::oracle::{exact_cov_matrix, CovSource};
use brw_core::rng::DEFAULT_SEED;
use brw_core::ssbrw::PhiTildeSampler;
use brw_core::validate::{run_validation, Tier};
use brw_core::{SampleMode, TreeShape};
use clap::{Parser, Subcommand, ValueEnum};

use manifest::{now, RunManifest};
use options::{Format, List, Method, Mode, Model, Options};
use table::{Cell, Row};

#[derive(Debug, Parser)]
#[command(name = "brw", version, about = "Branching random walks under a hard wall")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    opts: Options,
}

#[derive(Debug, Clone, Subcommand)]
enum Command {
    /// Draw fields: leaf values (--mode full) or maxima (--mode max-only)
    Sample,
    /// Exact covariance matrix of a kernel (--model brw|phi_tilde)
    Cov,
    /// CDF of the maximum on --thresholds, or tilted left tail at --lambda
    Tail,
    /// Probability that every leaf is nonnegative
    Positivity,
    /// Mean leaf height given that every leaf is nonnegative
    CondMean,
    /// Optimizing shift lambda' for --cpp
    LambdaPrime,
    /// Positivity bounds, and left-tail bounds at --lambda
    Bounds,
    /// Weighted log sum against d^n and its closed-form bound
    LemmaSum,
    /// Oracle cross-check suite; exits 2 on any failure
    Validate {
        /// Reduced budgets, about ten seconds (default)
        #[arg(long, conflicts_with = "full")]
        quick: bool,
        /// Acceptance budgets
        #[arg(long)]
        full: bool,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Sample => "sample",
            Command::Cov => "cov",
            Command::Tail => "tail",
            Command::Positivity => "positivity",
            Command::CondMean => "cond-mean",
            Command::LambdaPrime => "lambda-prime",
            Command::Bounds => "bounds",
            Command::LemmaSum => "lemma-sum",
            Command::Validate { .. } => "validate",
        }
    }
}

/// Result of a subcommand: the payload and whether it counts as a pass.
struct Output {
    text: String,
    shapes: Vec<[u32; 2]>,
    passed: bool,
}

impl Output {
    fn ok(text: String, shapes: Vec<[u32; 2]>) -> Self {
        Self { text, shapes, passed: true }
    }
}

/// Runs one command line (program name first) and returns its exit code.
pub fn main_with<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return 0;
            }
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid usage").trim_start_matches("error: ");
            eprintln!("brw: error: {first} (see brw --help)");
            return 1;
        }
    };
    let command_line = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    match run(cli, command_line) {
        Ok(true) => 0,
        Ok(false) => 2,
        Err(e) => {
            eprintln!("brw: error: {}", format!("{e:#}").replace('\n', " "));
            1
        }
    }
}

/// Settings after defaults are applied.
struct Run {
    opts: Options,
    seed: u64,
    shards: u32,
    format: Format,
}

impl Run {
    fn shape(&self) -> Result<TreeShape> {
        let d = self.opts.d.ok_or_else(|| anyhow!("--d is required"))?;
        let n = self.opts.n.ok_or_else(|| anyhow!("--n is required"))?;
        Ok(TreeShape::new(d, n)?)
    }

    fn samples(&self, default: u64) -> u64 {
        self.opts.samples.unwrap_or(default)
    }

    fn params(&self) -> BoundParams {
        let o = &self.opts;
        let p = BoundParams::default();
        BoundParams {
            k1: o.k1.unwrap_or(p.k1),
            k2: o.k2.unwrap_or(p.k2),
            k3: o.k3.unwrap_or(p.k3),
            cp: o.cp.unwrap_or(p.cp),
            cpp: o.cpp.unwrap_or(p.cpp),
            kp: o.kp.unwrap_or(p.kp),
            kpp: o.kpp.unwrap_or(p.kpp),
            c_star: o.c_star.unwrap_or(p.c_star),
            p_bar: o.p_bar.unwrap_or(p.p_bar),
            a_bar: o.a_bar.unwrap_or(p.a_bar),
        }
    }

    fn records(&self, records: &[EstimateRecord]) -> String {
        match self.format {
            Format::Jsonl => records.iter().map(|r| r.to_json() + "\n").collect(),
            Format::Csv => {
                let mut out = format!("{}\n", EstimateRecord::CSV_HEADER);
                records.iter().for_each(|r| out.push_str(&(r.to_csv_row() + "\n")));
                out
            }
        }
    }

    fn rows(&self, rows: &[Row]) -> String {
        match self.format {
            Format::Jsonl => rows.iter().map(table::json_line).collect(),
            Format::Csv => table::csv(rows),
        }
    }
}

fn run(cli: Cli, command_line: Vec<String>) -> Result<bool> {
    let Cli { command, mut opts } = cli;
    opts.merge_config()?;
    let run = Run {
        seed: opts.seed.unwrap_or(DEFAULT_SEED),
        shards: opts.shards.unwrap_or(1),
        format: opts.format.unwrap_or(Format::Jsonl),
        opts,
    };
    if run.shards == 0 {
        bail!("--shards must be at least 1");
    }
    let mut config = run.opts.snapshot();
    config.insert("seed".into(), run.seed.to_string());
    config.insert("shards".into(), run.shards.to_string());
    config.insert("format".into(), format!("{:?}", run.format).to_lowercase());
    if let Command::Validate { full, .. } = &command {
        config.insert("tier".into(), if *full { "full" } else { "quick" }.into());
    }
    let mut replay = vec![command.name().to_owned()];
    for (k, v) in &config {
        if k == "config" || k == "tier" {
            continue;
        }
        replay.push(format!("--{k}"));
        replay.push(v.clone());
    }
    if let Command::Validate { full: true, .. } = &command {
        replay.push("--full".into());
    }

    let mut manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION"),
        command_line,
        subcommand: command.name().to_owned(),
        config,
        replay,
        seed: run.seed,
        shards: run.shards,
        shapes: run.shape().map(|s| vec![[s.d(), s.n()]]).unwrap_or_default(),
        started: now(),
        finished: None,
        status: "running".into(),
        outputs: run.opts.out.iter().cloned().collect(),
    };
    let manifest_path = run.opts.out.as_ref().map(|p| RunManifest::path_for(p));
    if let Some(path) = &manifest_path {
        manifest.write(path)?;
    }

    let result = dispatch(&command, &run);
    let (status, passed) = match &result {
        Ok(out) => (if out.passed { "ok" } else { "failed" }, out.passed),
        Err(_) => ("error", false),
    };
    if let Ok(out) = &result {
        match &run.opts.out {
            Some(path) => {
                std::fs::write(path, &out.text).with_context(|| format!("writing {}", path.display()))?;
            }
            None if !matches!(command, Command::Validate { .. }) => print!("{}", out.text),
            None => {}
        }
        if !out.shapes.is_empty() {
            manifest.shapes = out.shapes.clone();
        }
    }
    if let Some(path) = &manifest_path {
        manifest.finished = Some(now());
        manifest.status = status.into();
        manifest.write(path)?;
    }
    result.map(|_| passed)
}

fn dispatch(command: &Command, run: &Run) -> Result<Output> {
    match command {
        Command::Sample => sample(run),
        Command::Cov => cov(run),
        Command::Tail => tail(run),
        Command::Positivity => {
            let sh = run.shape()?;
            let method = match run.opts.method.unwrap_or(Method::Conditional) {
                Method::Naive => PositivityMethod::Naive,
                Method::Conditional => PositivityMethod::Conditional,
            };
            let r = estimate_positivity(&sh, run.samples(100_000), run.seed, run.shards, method)?;
            Ok(Output::ok(run.records(&[r]), vec![[sh.d(), sh.n()]]))
        }
        Command::CondMean => {
            let sh = run.shape()?;
            let r = estimate_conditional_mean(&sh, run.samples(100_000), run.seed, run.shards)?;
            if let Some(w) = &r.warning {
                eprintln!("brw: warning: {w}");
            }
            Ok(Output::ok(run.records(&[r]), vec![[sh.d(), sh.n()]]))
        }
        Command::LambdaPrime => {
            let sh = run.shape()?;
            let cpp = run.opts.cpp.unwrap_or(1.0);
            let c = Centering::<f64>::for_shape(&sh);
            let lp = solve_lambda_prime(&sh, cpp, &c)?;
            let res = lambda_prime_residual(sh.d(), sh.n(), cpp, &c, lp);
            let growth = (c.c * lp * (sh.d() as f64).ln()).exp();
            let row = vec![
                ("d", sh.d().into()),
                ("n", sh.n().into()),
                ("cpp", Cell::num(cpp)),
                ("lambda_prime", Cell::num(lp)),
                ("residual", Cell::num(res)),
                ("growth_over_n", Cell::num(growth / sh.n() as f64)),
            ];
            Ok(Output::ok(run.rows(&[row]), vec![[sh.d(), sh.n()]]))
        }
        Command::Bounds => bounds(run),
        Command::LemmaSum => {
            let d = run.opts.d.ok_or_else(|| anyhow!("--d is required"))?;
            let n = run.opts.n.ok_or_else(|| anyhow!("--n is required"))?;
            let l = log_sum_lemma(n, d)?;
            let row = vec![
                ("d", d.into()),
                ("n", n.into()),
                ("sum", Cell::num(l.sum)),
                ("ratio", Cell::num(l.ratio)),
                ("upper", Cell::num(l.paper_upper)),
                ("log_sum", Cell::num(l.log_sum)),
                ("log_upper", Cell::num(l.log_paper_upper)),
                ("within_upper", (l.log_sum <= l.log_paper_upper).into()),
            ];
            Ok(Output::ok(run.rows(&[row]), vec![]))
        }
        Command::Validate { full, .. } => {
            let tier = if *full { Tier::Full } else { Tier::Quick };
            let report = run_validation(tier, run.seed, run.shards)?;
            print!("{}", report.table());
            eprint!("{}", report.details());
            Ok(Output { text: report.payload(), shapes: vec![], passed: report.passed() })
        }
    }
}

fn sample(run: &Run) -> Result<Output> {
    let sh = run.shape()?;
    let model = run.opts.model.unwrap_or(Model::Brw);
    let mode = run.opts.mode.unwrap_or(Mode::MaxOnly);
    let samples = run.samples(1);
    if model == Model::Comparison && mode == Mode::Full {
        bail!("the comparison field is sampled max-only; use --mode max-only");
    }
    let sample_mode = match mode {
        Mode::Full => SampleMode::Full,
        Mode::MaxOnly => SampleMode::MaxOnly,
    };
    let n_prime = run.opts.n_prime;
    let model_name = model.to_possible_value().map(|v| v.get_name().to_owned()).unwrap_or_default();
    // one row per draw: (max, argmax digits, leaf values, shared Gaussian)
    type Draw = (f64, Option<Vec<u32>>, Option<Vec<f64>>, Option<f64>);
    let parts = run_shards(samples, run.seed, run.shards, |mut stream, count| -> brw_core::Result<Vec<Draw>> {
        let mut rows = Vec::with_capacity(count as usize);
        match model {
            Model::Brw => {
                let mut s = BrwSampler::<f64>::new(sh);
                for _ in 0..count {
                    let x = s.sample(&mut stream, sample_mode)?;
                    rows.push((x.max, Some(x.argmax.digits().to_vec()), x.values, None));
                }
            }
            Model::PhiTilde => {
                let mut s = PhiTildeSampler::<f64>::new(sh)?;
                for _ in 0..count {
                    let x = s.sample(&mut stream, sample_mode)?;
                    rows.push((x.max, Some(x.argmax.digits().to_vec()), x.phi_tilde, Some(x.x_shared)));
                }
            }
            Model::Comparison => {
                let np = n_prime.ok_or_else(|| brw_core::Error::InvalidArgument("--n-prime is required".into()))?;
                let mut s = ComparisonSampler::<f64>::new(sh, np)?;
                for _ in 0..count {
                    rows.push((s.sample(&mut stream).max, None, None, None));
                }
            }
        }
        Ok(rows)
    });
    let mut text = String::new();
    if run.format == Format::Csv {
        text.push_str(match mode {
            Mode::Full => "sample,leaf,value,x_shared\n",
            Mode::MaxOnly => "sample,max,x_shared\n",
        });
    }
    let mut index = 0u64;
    for part in parts {
        for (max, argmax, values, x) in part? {
            match run.format {
                Format::Jsonl => {
                    let mut row: Row = vec![
                        ("model", model_name.as_str().into()),
                        ("shape", Cell::Shape { d: sh.d(), n: sh.n() }),
                        ("seed", run.seed.into()),
                        ("shards", run.shards.into()),
                        ("sample", index.into()),
                        ("max", Cell::num(max)),
                    ];
                    if let Some(a) = argmax {
                        row.push(("argmax", Cell::Ints(a)));
                    }
                    if let Some(v) = values {
                        row.push(("values", Cell::nums(&v)));
                    }
                    if let Some(x) = x {
                        row.push(("x_shared", Cell::num(x)));
                    }
                    text.push_str(&table::json_line(&row));
                }
                Format::Csv => {
                    let xs = x.map(sig17).unwrap_or_default();
                    match values {
                        Some(v) => {
                            for (leaf, value) in v.into_iter().enumerate() {
                                let _ = writeln!(text, "{index},{leaf},{},{xs}", sig17(value));
                            }
                        }
                        None => {
                            let _ = writeln!(text, "{index},{},{xs}", sig17(max));
                        }
                    }
                }
            }
            index += 1;
        }
    }
    Ok(Output::ok(text, vec![[sh.d(), sh.n()]]))
}

fn cov(run: &Run) -> Result<Output> {
    let sh = run.shape()?;
    let source = match run.opts.model.unwrap_or(Model::Brw) {
        Model::Brw => CovSource::BrwKernel,
        Model::PhiTilde => CovSource::PhiTildeKernel,
        Model::Comparison => bail!("cov supports --model brw or phi_tilde"),
    };
    let m = exact_cov_matrix(&sh, source)?;
    let text = match run.format {
        Format::Csv => m.to_csv(),
        Format::Jsonl => (0..m.dim())
            .map(|i| {
                let values: Vec<f64> = (0..m.dim()).map(|j| m.get(i, j)).collect();
                table::json_line(&vec![("row", (i as u64).into()), ("values", Cell::nums(&values))])
            })
            .collect(),
    };
    Ok(Output::ok(text, vec![[sh.d(), sh.n()]]))
}

fn tail(run: &Run) -> Result<Output> {
    let sh = run.shape()?;
    let samples = run.samples(100_000);
    if let Some(List(lambdas)) = &run.opts.lambda {
        let tilt = run.opts.tilt.unwrap_or(0.0);
        let records = lambdas
            .iter()
            .map(|&l| tilted_left_tail(&sh, l, tilt, samples, run.seed, run.shards))
            .collect::<brw_core::Result<Vec<_>>>()?;
        for r in &records {
            if let Some(w) = &r.warning {
                eprintln!("brw: warning: lambda {}: {w}", r.lambda.unwrap_or(f64::NAN));
            }
        }
        return Ok(Output::ok(run.records(&records), vec![[sh.d(), sh.n()]]));
    }
    let List(thresholds) = run.opts.thresholds.clone().ok_or_else(|| anyhow!("tail needs --thresholds or --lambda"))?;
    let model = match run.opts.model.unwrap_or(Model::PhiTilde) {
        Model::Brw => FieldModel::Brw,
        Model::PhiTilde => FieldModel::PhiTilde,
        Model::Comparison => FieldModel::Comparison {
            n_prime: run.opts.n_prime.ok_or_else(|| anyhow!("--model comparison needs --n-prime"))?,
        },
    };
    let curve = estimate_max_cdf(&sh, model, &thresholds, samples, run.seed, run.shards)?;
    let text = match run.format {
        Format::Csv => curve.to_csv(),
        Format::Jsonl => run.records(&curve.estimates),
    };
    Ok(Output::ok(text, vec![[sh.d(), sh.n()]]))
}

fn bounds(run: &Run) -> Result<Output> {
    let sh = run.shape()?;
    let params = run.params();
    params.validate()?;
    let c = Centering::<f64>::for_shape(&sh);
    let lp = match run.opts.lambda_prime {
        Some(lp) => lp,
        None => solve_lambda_prime(&sh, params.cpp, &c)?,
    };
    let pb = eval_positivity_bounds(&sh, &params, lp, &c);
    let row = |bound: &str, lambda: Option<f64>, lo: f64, hi: f64| -> Row {
        vec![
            ("bound", bound.into()),
            ("d", sh.d().into()),
            ("n", sh.n().into()),
            ("lambda_prime", Cell::num(lp)),
            ("lambda", Cell::opt(lambda)),
            ("log_lower", Cell::num(lo)),
            ("log_upper", Cell::num(hi)),
        ]
        .into_iter()
        .chain(params.named().into_iter().map(|(k, v)| (k, Cell::num(v))))
        .collect()
    };
    let mut rows = vec![row("positivity", None, pb.log_lower, pb.log_upper)];
    if let Some(List(lambdas)) = &run.opts.lambda {
        for &l in lambdas {
            let tb = eval_lefttail_bounds(&sh, l, &params, &c);
            rows.push(row("left_tail", Some(l), tb.log_lower, tb.log_upper));
        }
    }
    Ok(Output::ok(run.rows(&rows), vec![[sh.d(), sh.n()]]))
}
