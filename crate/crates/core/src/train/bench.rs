use std::time::Instant;

use rand::Rng;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::network::{body, ModelConfig, ModelParams};
use crate::numcore::{Eager, Graph, Real, Tape, Tensor};
use crate::rng::{self, Stream};
use crate::units::AblationFlags;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchPoint {
    pub length: usize,
    /// Seconds per pass, one entry per timed repeat; empty when unsupported.
    pub samples: Vec<f64>,
    /// Why the length was skipped, if it was.
    pub unsupported: Option<String>,
}

impl BenchPoint {
    pub fn mean(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.samples.len().max(1) as f64
    }

    pub fn min(&self) -> f64 {
        self.samples.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// Half-width of the 95% confidence interval on the slope.
    pub ci95: f64,
    pub points: usize,
}

/// Least-squares line through `(ln x, ln y)` with a Student-t interval on
/// the slope.
pub fn loglog_fit(points: &[(f64, f64)]) -> Result<SlopeFit> {
    if points.len() < 2 {
        return Err(Error::invalid("need at least two points for a fit"));
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("all x values are equal"));
    }
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ci95 = if logs.len() > 2 {
        let rss: f64 = logs.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
        let se = (rss / (n - 2.0) / sxx).sqrt();
        let t = StudentsT::new(0.0, 1.0, n - 2.0)
            .map_err(|e| Error::invalid(format!("t distribution: {e}")))?
            .inverse_cdf(0.975);
        t * se
    } else {
        f64::INFINITY
    };
    Ok(SlopeFit { slope, intercept, ci95, points: logs.len() })
}

/// Rough peak bytes of one eager pass of the body at length `n`.
pub fn estimate_forward_bytes(feature_maps: usize, hidden: usize, n: usize, elem: usize) -> usize {
    // Live at once inside a switch layer: input, pairs view, hidden,
    // normalized hidden, output, plus slack for the allocator.
    let seq = n * feature_maps * elem;
    let wide = n / 2 * hidden * elem;
    4 * seq + 2 * wide
}

/// `MemAvailable` from `/proc/meminfo`, when readable.
pub fn available_memory() -> Option<usize> {
    let info = std::fs::read_to_string("/proc/meminfo").ok()?;
    let line = info.lines().find(|l| l.starts_with("MemAvailable:"))?;
    let kb: usize = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb * 1024)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchOptions {
    pub repeats: usize,
    pub warmup: usize,
    /// Time forward + backward instead of forward only.
    pub with_backward: bool,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self { repeats: 5, warmup: 1, with_backward: false }
    }
}

fn one_pass<T: Real>(
    params: &ModelParams<Tensor<T>>,
    flags: &AblationFlags,
    x: &Tensor<T>,
    with_backward: bool,
) -> Result<()> {
    if with_backward {
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape);
        let input = tape.constant(x.clone());
        let out = body(&mut tape, &bound, input, flags, None)?;
        let root = tape.sum(&out);
        tape.backward(root)
    } else {
        let mut g = Eager;
        let bound = params.bind(&mut g);
        let input = g.constant(x.clone());
        let out = body(&mut g, &bound, input, flags, None)?;
        std::hint::black_box(out.data()[0]);
        Ok(())
    }
}

/// Wall-clock of the shuffle-exchange body (batch 1) at each length. Lengths
/// whose estimated footprint exceeds available memory are reported as
/// unsupported instead of attempted.
pub fn bench_forward<T: Real>(
    config: &ModelConfig,
    params: &ModelParams<Tensor<T>>,
    lengths: &[usize],
    opts: BenchOptions,
) -> Result<Vec<BenchPoint>> {
    let m = config.feature_maps;
    let mut out = Vec::with_capacity(lengths.len());
    for &n in lengths {
        if !n.is_power_of_two() || n < 4 {
            return Err(Error::invalid(format!("benchmark length {n} is not a power of two >= 4")));
        }
        let factor = if opts.with_backward { 4 * (2 * config.blocks * n.trailing_zeros() as usize + 1) } else { 1 };
        let need = estimate_forward_bytes(m, config.hidden, n, std::mem::size_of::<T>()) * factor;
        if let Some(avail) = available_memory() {
            if need > avail {
                out.push(BenchPoint {
                    length: n,
                    samples: Vec::new(),
                    unsupported: Some(format!("needs ~{} MiB, {} MiB available", need >> 20, avail >> 20)),
                });
                continue;
            }
        }
        let mut rng = rng::indexed(0, Stream::Probe, n as u64);
        let data: Vec<T> = (0..n * m).map(|_| T::lit(rng.random_range(-0.4..0.4))).collect();
        let x = Tensor::new([1, n, m], data)?;
        for _ in 0..opts.warmup {
            one_pass(params, &config.flags, &x, opts.with_backward)?;
        }
        let mut samples = Vec::with_capacity(opts.repeats);
        for _ in 0..opts.repeats {
            let t = Instant::now();
            one_pass(params, &config.flags, &x, opts.with_backward)?;
            samples.push(t.elapsed().as_secs_f64());
        }
        out.push(BenchPoint { length: n, samples, unsupported: None });
    }
    Ok(out)
}

/// Fit over every timed repeat of the supported lengths.
pub fn fit_points(points: &[BenchPoint]) -> Result<SlopeFit> {
    let pairs: Vec<(f64, f64)> = points
        .iter()
        .flat_map(|p| p.samples.iter().map(move |&s| (p.length as f64, s)))
        .collect();
    loglog_fit(&pairs)
}
