use std::io::{Read, Write};

use super::fit::{fit, FitOptions, FitProblem, Provider};
use super::histogram::sample_histogram;
use super::model::{initial, truth, GaussSumModel};
use super::FitError;
use crate::error::Result;

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub gaussians: Vec<usize>,
    pub events: u64,
    pub repeats: usize,
    pub seed: u64,
    pub bins: usize,
    pub range: (f64, f64),
    pub options: FitOptions,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            gaussians: vec![1, 2, 4, 8],
            events: 100_000,
            repeats: 5,
            seed: 42,
            bins: 1000,
            range: (-5.0, 5.0),
            options: FitOptions::default(),
        }
    }
}

/// One (K, provider) line of the scaling table.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub k: usize,
    pub params: usize,
    pub provider: Provider,
    /// Median over repeats of the mean wall time of one gradient.
    pub median_wall_ns: u64,
    pub grad_evals: usize,
    pub primal_opcount: u64,
    pub grad_opcount: u64,
    pub converged: bool,
    /// Fitted parameters; not part of the CSV.
    pub final_params: Vec<f64>,
}

impl BenchRow {
    pub fn cost_ratio(&self) -> f64 {
        self.grad_opcount as f64 / self.primal_opcount as f64
    }
}

pub const CSV_HEADER: [&str; 8] = ["K", "params", "provider", "median_wall_ns", "grad_evals", "primal_opcount", "grad_opcount", "converged"];

/// Fit every `K` with both providers from the same data and starting point.
/// Data for each `K` is drawn from [`truth`] with seed `seed + K`.
pub fn bench_scaling(cfg: &BenchConfig) -> Result<Vec<BenchRow>> {
    if cfg.gaussians.is_empty() {
        return Err(FitError::EmptyKList.into());
    }
    if cfg.repeats == 0 {
        return Err(FitError::Invalid("repeats must be at least 1".into()).into());
    }
    let mut rows = Vec::new();
    for &k in &cfg.gaussians {
        let model = GaussSumModel::new(truth(k));
        let h = sample_histogram(&model, cfg.events, cfg.bins, cfg.range, cfg.seed.wrapping_add(k as u64))?;
        let problem = FitProblem::new(&h, k, model.integral())?;
        let init = initial(k);
        for provider in Provider::ALL {
            let mut walls = Vec::with_capacity(cfg.repeats);
            let mut last = None;
            for _ in 0..cfg.repeats {
                let r = fit(&problem, provider, &init, &cfg.options)?;
                walls.push(r.wall_per_gradient().as_nanos() as u64);
                last = Some(r);
            }
            let r = last.expect("at least one repeat");
            walls.sort_unstable();
            log::info!("K={k} {provider}: {} gradients, chi2 {:.3}, stop {:?}", r.grad_evals, r.chi2, r.stop);
            rows.push(BenchRow {
                k,
                params: 3 * k,
                provider,
                median_wall_ns: walls[walls.len() / 2],
                grad_evals: r.grad_evals,
                primal_opcount: r.primal_ops.total(),
                grad_opcount: r.grad_ops.total(),
                converged: r.converged,
                final_params: r.params,
            });
        }
    }
    Ok(rows)
}

pub fn write_csv<W: Write>(rows: &[BenchRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record([
            r.k.to_string(),
            r.params.to_string(),
            r.provider.to_string(),
            r.median_wall_ns.to_string(),
            r.grad_evals.to_string(),
            r.primal_opcount.to_string(),
            r.grad_opcount.to_string(),
            r.converged.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<BenchRow>> {
    let mut rd = csv::Reader::from_reader(input);
    let bad = |what: &str| FitError::Invalid(format!("malformed scaling table: bad {what}"));
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        if rec.len() != CSV_HEADER.len() {
            return Err(bad("row width").into());
        }
        let num = |i: usize| rec[i].parse::<u64>().map_err(|_| bad(CSV_HEADER[i]));
        rows.push(BenchRow {
            k: num(0)? as usize,
            params: num(1)? as usize,
            provider: rec[2].parse()?,
            median_wall_ns: num(3)?,
            grad_evals: num(4)? as usize,
            primal_opcount: num(5)?,
            grad_opcount: num(6)?,
            converged: rec[7].parse().map_err(|_| bad("converged"))?,
            final_params: Vec::new(),
        });
    }
    Ok(rows)
}

/// Whitespace table for gnuplot: one line per parameter count, wall time per
/// gradient of each provider in nanoseconds (`NaN` when missing).
///
/// `plot "t.dat" using 1:2 title "ad-reverse", "" using 1:3 title "numeric"`
pub fn plot_table(rows: &[BenchRow]) -> String {
    let mut params: Vec<usize> = rows.iter().map(|r| r.params).collect();
    params.sort_unstable();
    params.dedup();
    let mut s = String::from("# params ad-reverse_ns numeric_ns\n");
    for p in params {
        let get = |prov: Provider| {
            rows.iter().find(|r| r.params == p && r.provider == prov).map(|r| r.median_wall_ns.to_string()).unwrap_or_else(|| "NaN".into())
        };
        s.push_str(&format!("{p} {} {}\n", get(Provider::AdReverse), get(Provider::Numeric)));
    }
    s
}
