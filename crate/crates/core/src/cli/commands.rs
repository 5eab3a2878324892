use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use super::checkpoint::{self, infer_token_config};
use super::config::RunConfig;
use super::suites::{self, SuiteResult};
use super::{BenchArgs, EvalArgs, GenDataArgs, GradcheckArgs, ParamsArgs, EXIT_FAILURE, EXIT_OK};
use crate::error::{Error, Result};
use crate::network::{build_model, ModelConfig, ModelParams, Preset};
use crate::numcore::{Real, Tensor};
use crate::rng::{self, Stream};
use crate::tasks::{LengthMode, Task, DEFAULT_ALPHABET};
use crate::train::{
    bench_forward, evaluate, fit_points, train_loop, write_csv, BenchOptions, TrainMetrics, TrainSink, CSV_HEADER,
};

pub const BENCH_CSV_HEADER: &str = "length,mean_s,min_s,status";

fn parse_lengths(text: &str) -> Result<Vec<usize>> {
    text.split(',')
        .map(|v| v.trim().parse().map_err(|_| Error::invalid(format!("invalid length `{v}`"))))
        .collect()
}

fn io(e: std::io::Error) -> Error {
    Error::Io(e)
}

// ------------------------------------------------------------------ train

struct FileSink {
    dir: PathBuf,
    csv: BufWriter<File>,
}

impl<T: Real> TrainSink<T> for FileSink {
    fn metrics(&mut self, row: &TrainMetrics) -> Result<()> {
        writeln!(self.csv, "{}", row.csv_row())?;
        self.csv.flush()?;
        Ok(())
    }

    fn checkpoint(&mut self, step: u64, params: &ModelParams<Tensor<T>>) -> Result<()> {
        checkpoint::save(&self.dir.join(format!("step_{step:08}.rse")), params)
    }
}

/// `args` is `[CONFIG] [--key value ...]`.
pub(super) fn train(args: &[String], out: &mut dyn Write) -> Result<i32> {
    let (mut cfg, overrides) = match args.first() {
        Some(first) if !first.starts_with("--") => (RunConfig::load(Path::new(first))?, &args[1..]),
        _ => (RunConfig::default(), args),
    };
    cfg.apply_overrides(overrides)?;
    cfg.validate()?;
    let model = cfg.model_config();
    let train = cfg.train_config();

    fs::create_dir_all(&cfg.out_dir)?;
    fs::write(cfg.out_dir.join("config.txt"), cfg.to_text())?;
    let mut csv = BufWriter::new(File::create(cfg.out_dir.join("metrics.csv"))?);
    writeln!(csv, "{CSV_HEADER}")?;
    let mut sink = FileSink { dir: cfg.out_dir.clone(), csv };

    let mut params = build_model::<f32>(&model, cfg.seed)?;
    writeln!(
        out,
        "training {} with m={} blocks={} ({} parameters) for {} steps",
        cfg.task,
        model.feature_maps,
        model.blocks,
        params.param_count(),
        train.steps
    )
    .map_err(io)?;
    match train_loop(&model, &mut params, &train, &mut sink, cfg.checkpoint_every) {
        Ok(outcome) => {
            checkpoint::save(&cfg.out_dir.join("final.rse"), &params)?;
            for e in &outcome.last_eval {
                writeln!(
                    out,
                    "length {:>5}: per-symbol {:.4}  sequence {:.4}",
                    e.length, e.per_symbol_acc, e.seq_acc
                )
                .map_err(io)?;
            }
            writeln!(out, "{} steps; outputs in {}", outcome.steps_run, cfg.out_dir.display()).map_err(io)?;
            Ok(EXIT_OK)
        }
        Err(e @ Error::Diverged { .. }) => {
            checkpoint::save(&cfg.out_dir.join("diverged.rse"), &params)?;
            Err(e)
        }
        Err(e) => Err(e),
    }
}

// ------------------------------------------------------------------- eval

/// One evaluation row per length, in the metrics CSV layout. The loss column
/// carries the evaluation loss.
pub fn eval_rows<T: Real>(
    config: &ModelConfig,
    params: &ModelParams<Tensor<T>>,
    task: Task,
    lengths: &[usize],
    examples: usize,
    seed: u64,
) -> Result<Vec<TrainMetrics>> {
    lengths
        .iter()
        .map(|&len| {
            let e = evaluate(config, params, task, len, examples, seed)?;
            Ok(TrainMetrics {
                step: 0,
                task: task.name().to_string(),
                bucket: 0,
                train_loss: e.loss,
                eval_length: len,
                per_symbol_acc: e.per_symbol_acc,
                seq_acc: e.seq_acc,
                wallclock_s: 0.0,
            })
        })
        .collect()
}

pub(super) fn eval(a: &EvalArgs, out: &mut dyn Write) -> Result<i32> {
    let lengths = parse_lengths(&a.lengths)?;
    let base_run = match &a.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let task = Task::from_name(&a.task, a.alphabet.unwrap_or(DEFAULT_ALPHABET))?;
    let stored = checkpoint::load(&a.checkpoint)?;
    let mut base = base_run.model_config();
    base.n_max = lengths.iter().copied().max().unwrap_or(base.n_max);
    let config = infer_token_config(&stored, &base)?;
    if let crate::network::InputKind::Tokens { vocab } = config.input {
        if vocab != task.vocab() || config.classes != task.classes() {
            return Err(Error::invalid(format!(
                "checkpoint has vocabulary {vocab} and {} classes; task {} needs {} and {}",
                config.classes,
                task,
                task.vocab(),
                task.classes()
            )));
        }
    }
    let mut params = build_model::<f32>(&config, 0)?;
    params.load_named(stored.iter().map(|(n, t)| (n.clone(), t.to_tensor())).collect())?;

    let rows = eval_rows(&config, &params, task, &lengths, a.examples, a.seed)?;
    writeln!(out, "{:>8}  {:>10}  {:>10}", "length", "per-symbol", "sequence").map_err(io)?;
    for r in &rows {
        writeln!(out, "{:>8}  {:>10.4}  {:>10.4}", r.eval_length, r.per_symbol_acc, r.seq_acc).map_err(io)?;
    }
    let csv_path = a.csv.clone().unwrap_or_else(|| {
        a.checkpoint.parent().map_or_else(|| PathBuf::from("eval.csv"), |d| d.join("eval.csv"))
    });
    let fresh = !csv_path.exists() || fs::metadata(&csv_path)?.len() == 0;
    let mut f = OpenOptions::new().create(true).append(true).open(&csv_path)?;
    write_csv(&mut f, &rows, fresh)?;
    Ok(EXIT_OK)
}

// -------------------------------------------------------------- gradcheck

fn report_line(out: &mut dyn Write, r: &SuiteResult, tol: f64) -> Result<()> {
    writeln!(
        out,
        "{:<16} points={:<2} max_rel_err={:.3e} tol={:.0e} {}",
        r.name,
        r.points,
        r.worst.max_rel_error,
        tol,
        if r.passes(tol) { "PASS" } else { "FAIL" }
    )
    .map_err(io)
}

pub(super) fn gradcheck(a: &GradcheckArgs, out: &mut dyn Write) -> Result<i32> {
    let names: Vec<&'static str> = if a.scope == "all" {
        suites::all_suites().collect()
    } else {
        let name = suites::all_suites().find(|s| *s == a.scope).ok_or_else(|| {
            Error::invalid(format!(
                "unknown gradcheck suite `{}`; expected `all` or one of: {}",
                a.scope,
                suites::all_suites().collect::<Vec<_>>().join(", ")
            ))
        })?;
        vec![name]
    };
    let single = match a.precision.as_str() {
        "double" | "f64" => false,
        "single" | "f32" => true,
        other => return Err(Error::invalid(format!("unknown precision `{other}`: expected double or single"))),
    };
    let mut worst: Option<(f64, SuiteResult)> = None;
    let mut failed = 0;
    for name in names {
        let points = a.points.unwrap_or_else(|| suites::default_points(name));
        let r = if single {
            suites::run_suite::<f32>(name, points, a.seed, suites::default_step::<f32>())?
        } else {
            suites::run_suite::<f64>(name, points, a.seed, suites::default_step::<f64>())?
        };
        let tol = a.tol.unwrap_or_else(|| suites::default_tolerance(name));
        report_line(out, &r, tol)?;
        if !r.passes(tol) {
            failed += 1;
        }
        let ratio = r.worst.max_rel_error / tol;
        if worst.as_ref().is_none_or(|(w, _)| ratio > *w) {
            worst = Some((ratio, r));
        }
    }
    if let Some((_, r)) = worst {
        let w = &r.worst;
        writeln!(
            out,
            "worst offender: {} input {} index {}: analytic {:.6e} numeric {:.6e} rel_err {:.3e}",
            r.name, w.worst.0, w.worst.1, w.analytic, w.numeric, w.max_rel_error
        )
        .map_err(io)?;
    }
    if failed > 0 {
        writeln!(out, "{failed} suite(s) above threshold").map_err(io)?;
        Ok(EXIT_FAILURE)
    } else {
        Ok(EXIT_OK)
    }
}

// ------------------------------------------------------------------ bench

pub(super) fn bench(a: &BenchArgs, out: &mut dyn Write) -> Result<i32> {
    let lengths = match &a.lengths {
        Some(l) => parse_lengths(l)?,
        None => {
            if !a.min_length.is_power_of_two() || !a.max_length.is_power_of_two() || a.min_length > a.max_length {
                return Err(Error::invalid("--min-length and --max-length must be powers of two, min <= max"));
            }
            std::iter::successors(Some(a.min_length), |&n| Some(n * 2)).take_while(|&n| n <= a.max_length).collect()
        }
    };
    if a.repeats == 0 {
        return Err(Error::invalid("--repeats must be positive"));
    }
    let config = ModelConfig::tokens(4, 4, a.m, a.blocks);
    config.validate()?;
    let params = build_model::<f32>(&config, 0)?;
    let opts = BenchOptions { repeats: a.repeats, warmup: 1, with_backward: a.backward };
    let mut text = format!("{BENCH_CSV_HEADER}\n");
    let mut points = Vec::new();
    writeln!(out, "{BENCH_CSV_HEADER}").map_err(io)?;
    for &n in &lengths {
        // One length at a time so rows appear as they finish.
        let p = bench_forward(&config, &params, &[n], opts)?.remove(0);
        let row = match &p.unsupported {
            Some(why) => format!("{n},,,unsupported: {why}"),
            None => format!("{n},{:.6},{:.6},ok", p.mean(), p.min()),
        };
        writeln!(out, "{row}").map_err(io)?;
        out.flush().map_err(io)?;
        text.push_str(&row);
        text.push('\n');
        points.push(p);
    }
    let timed: Vec<_> = points.into_iter().filter(|p| p.unsupported.is_none()).collect();
    if timed.len() >= 2 {
        let fit = fit_points(&timed)?;
        let line = format!("slope {:.4} ± {:.4} (95% CI, {} samples)", fit.slope, fit.ci95, fit.points);
        writeln!(out, "{line}").map_err(io)?;
    } else {
        writeln!(out, "slope: need at least two timed lengths").map_err(io)?;
    }
    if let Some(path) = &a.csv {
        fs::write(path, text)?;
    }
    Ok(EXIT_OK)
}

// ----------------------------------------------------------------- params

pub(super) fn params(a: &ParamsArgs, out: &mut dyn Write) -> Result<i32> {
    let preset = Preset::from_name(&a.preset)?;
    let config = preset.config();
    let p = build_model::<f32>(&config, 0)?;
    writeln!(out, "preset {}", preset.name()).map_err(io)?;
    for (group, count) in p.breakdown() {
        writeln!(out, "  {group:<24} {count:>12}").map_err(io)?;
    }
    writeln!(out, "  {:<24} {:>12}", "switch units", p.switch_unit_count()).map_err(io)?;
    writeln!(out, "  {:<24} {:>12}", "total", p.param_count()).map_err(io)?;
    Ok(EXIT_OK)
}

// --------------------------------------------------------------- gen-data

pub(super) fn gen_data(a: &GenDataArgs, out: &mut dyn Write) -> Result<i32> {
    let task = Task::from_name(&a.task, a.alphabet.unwrap_or(DEFAULT_ALPHABET))?;
    let mode = match a.mode.as_str() {
        "full" => LengthMode::Full,
        "bucket" => LengthMode::Bucket,
        other => return Err(Error::invalid(format!("unknown mode `{other}`: expected full or bucket"))),
    };
    let mut rng = rng::stream(a.seed, Stream::Data);
    let mut text = String::new();
    for _ in 0..a.count {
        text.push_str(&task.sample(a.length, mode, &mut rng)?.to_line());
        text.push('\n');
    }
    match &a.out {
        Some(path) => fs::write(path, text)?,
        None => out.write_all(text.as_bytes()).map_err(io)?,
    }
    Ok(EXIT_OK)
}
