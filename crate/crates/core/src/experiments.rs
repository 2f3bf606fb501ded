//! Monte Carlo SNR sweeps, DoF utilities and plot-ready output.
//!
//! SNR is the total transmit power per user with unit-variance noise, so
//! `P = 10^(snr_db / 10)`. Channel coefficients are unit-variance complex
//! Gaussian unless a bounded model is selected.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;

use crate::channel::{draw_channel, ExtendedChannel, ExtensionConfig, GainModel};
use crate::error::{Error, Result};
use crate::receivers::PowerAllocation;
use crate::strong_ia::{prepare, run_adaptive, run_linear_fallback, Scheme, SchemeOptions};

pub const CSV_HEADER: &str = "snr_db,scheme,trials,condition_rate,rate_u1,rate_u2,rate_u3,sum_rate";

/// Fresh draws allowed per trial before it is counted as degenerate.
pub const MAX_DRAW_ATTEMPTS: u64 = 10;

/// Slack on the pairwise DoF constraint so that grid points such as
/// `0.29 + 0.71` are not rejected by rounding.
const DOF_SLACK: f64 = 1e-12;

/// A DoF triple `(d1, d2, d3)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DofPoint(pub [f64; 3]);

impl DofPoint {
    pub fn new(d: [f64; 3]) -> Result<Self> {
        if d.iter().all(|x| x.is_finite()) {
            Ok(Self(d))
        } else {
            Err(Error::InvalidInput(format!("DoF point {d:?} is not finite")))
        }
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }
}

/// Membership in `{d >= 0 : d_i + d_j <= 1 for all i != j}`.
pub fn dof_region_contains(d: &DofPoint) -> bool {
    let [a, b, c] = d.0;
    d.0.iter().all(|&x| x >= 0.0) && a + b <= 1.0 + DOF_SLACK && a + c <= 1.0 + DOF_SLACK && b + c <= 1.0 + DOF_SLACK
}

/// Exhaustive search over the grid `{0, 1/steps, ..., 1}^3`.
///
/// Returns the largest total DoF found inside the region and every grid
/// point attaining it.
pub fn dof_grid_maximizers(steps: usize) -> (f64, Vec<DofPoint>) {
    let mut best_units = 0usize;
    let mut maximizers = Vec::new();
    let scale = steps as f64;
    for i in 0..=steps {
        for j in 0..=steps {
            for k in 0..=steps {
                let d = DofPoint([i as f64 / scale, j as f64 / scale, k as f64 / scale]);
                if !dof_region_contains(&d) {
                    continue;
                }
                let units = i + j + k;
                if units > best_units {
                    best_units = units;
                    maximizers.clear();
                }
                if units == best_units {
                    maximizers.push(d);
                }
            }
        }
    }
    (best_units as f64 / scale, maximizers)
}

/// Least-squares slope of rate against `log2(P)` for `(snr_db, rate)` pairs.
pub fn estimate_dof_slope(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::InvalidInput("slope needs at least two points".into()));
    }
    let xs: Vec<f64> = points.iter().map(|&(db, _)| db / 10.0 * 10f64.log2()).collect();
    let x_mean = xs.iter().sum::<f64>() / xs.len() as f64;
    let y_mean = points.iter().map(|p| p.1).sum::<f64>() / points.len() as f64;
    let sxx: f64 = xs.iter().map(|x| (x - x_mean).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidInput("slope needs distinct SNR values".into()));
    }
    let sxy: f64 = xs.iter().zip(points).map(|(x, p)| (x - x_mean) * (p.1 - y_mean)).sum();
    Ok(sxy / sxx)
}

/// Multiplies `H[rx][tx]` of every realization by `factor`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainBoost {
    pub rx: usize,
    pub tx: usize,
    pub factor: f64,
}

impl GainBoost {
    /// Parses a link written as two digits, e.g. `"23"` for `H[2][3]`.
    pub fn parse(link: &str, factor: f64) -> Result<Self> {
        let digits: Vec<usize> = link
            .chars()
            .map(|c| c.to_digit(10).map(|d| d as usize))
            .collect::<Option<Vec<_>>>()
            .unwrap_or_default();
        let boost = match digits.as_slice() {
            [rx, tx] => Self { rx: *rx, tx: *tx, factor },
            _ => return Err(Error::Config(format!("link {link:?} is not two user digits"))),
        };
        boost.validate()?;
        Ok(boost)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.rx) || !(1..=3).contains(&self.tx) {
            return Err(Error::Config(format!("no link H{}{}", self.rx, self.tx)));
        }
        if !(self.factor.is_finite() && self.factor > 0.0) {
            return Err(Error::Config(format!("gain boost factor {} must be positive", self.factor)));
        }
        Ok(())
    }

    pub fn apply(&self, ch: &ExtendedChannel) -> ExtendedChannel {
        ch.with_gain_boost(self.rx, self.tx, self.factor)
    }
}

/// Inclusive SNR grid `start, start + step, ..., <= stop`.
pub fn snr_grid(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    if !(start.is_finite() && stop.is_finite() && step.is_finite()) || step <= 0.0 || stop < start {
        return Err(Error::Config(format!("bad SNR range {start}:{step}:{stop}")));
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|k| start + k as f64 * step).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Streams per user; realizations have `2n` slots.
    pub n: usize,
    pub trials: usize,
    /// Realizations per condition evaluation.
    pub block_size: usize,
    pub snr_grid_db: Vec<f64>,
    pub gain_model: GainModel,
    pub gain_boosts: Vec<GainBoost>,
    pub seed: u64,
    pub schemes: Vec<Scheme>,
    pub options: SchemeOptions,
    /// Grid points at or above this SNR enter the DoF slope estimate.
    pub slope_from_db: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n: 3,
            trials: 100,
            block_size: 1,
            snr_grid_db: (0..=10).map(|k| 5.0 * k as f64).collect(),
            gain_model: GainModel::UnboundedGaussian,
            gain_boosts: Vec::new(),
            seed: 1,
            schemes: vec![Scheme::StrongIa, Scheme::LinearFallback],
            options: SchemeOptions::default(),
            slope_from_db: 30.0,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("n must be at least 1".into()));
        }
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.block_size == 0 {
            return Err(Error::Config("block size must be at least 1".into()));
        }
        if self.snr_grid_db.is_empty() || self.snr_grid_db.iter().any(|x| !x.is_finite()) {
            return Err(Error::Config("SNR grid must be nonempty and finite".into()));
        }
        if self.snr_grid_db.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("SNR grid must be strictly increasing".into()));
        }
        if self.schemes.is_empty() {
            return Err(Error::Config("select at least one scheme".into()));
        }
        if self.schemes.len() == 2 && self.schemes[0] == self.schemes[1] {
            return Err(Error::Config("schemes must not repeat".into()));
        }
        self.gain_model.validate()?;
        for b in &self.gain_boosts {
            b.validate()?;
        }
        Ok(())
    }
}

/// One CSV row: averaged rates of one scheme at one SNR point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub snr_db: f64,
    pub scheme: Scheme,
    pub trials_used: usize,
    /// Fraction of blocks in which strong IA was run.
    pub condition_rate: f64,
    pub rates: [f64; 3],
    pub sum_rate: f64,
    /// Standard error of the sum rate across blocks.
    pub sum_rate_stderr: f64,
    pub dof_estimate: Option<f64>,
    pub skipped: usize,
}

/// Realization index for trial `trial`; the draw attempt occupies separate
/// bits so resampling never collides.
fn realization_index(trial: usize, attempt: u64) -> u64 {
    (attempt << 32) | trial as u64
}

fn draw_trial(cfg: &ExperimentConfig, ext: &ExtensionConfig, trial: usize) -> Result<Option<ExtendedChannel>> {
    for attempt in 0..MAX_DRAW_ATTEMPTS {
        let index = realization_index(trial, attempt);
        let ch = draw_channel(ext, &cfg.gain_model, cfg.seed, index)?;
        let ch = cfg.gain_boosts.iter().fold(ch, |acc, b| b.apply(&acc));
        match prepare(&ch, cfg.n, &cfg.options) {
            Ok(_) => return Ok(Some(ch)),
            Err(Error::DegenerateChannel(_) | Error::SingularChannel { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    Ok(None)
}

/// The realizations shared by every SNR point and scheme, and how many
/// trials had to be dropped after exhausting their draw attempts.
pub fn sweep_realizations(cfg: &ExperimentConfig) -> Result<(Vec<ExtendedChannel>, usize)> {
    cfg.validate()?;
    let ext = ExtensionConfig::new(cfg.n)?;
    let draws = (0..cfg.trials)
        .into_par_iter()
        .map(|t| draw_trial(cfg, &ext, t))
        .collect::<Result<Vec<_>>>()?;
    let dropped = draws.iter().filter(|d| d.is_none()).count();
    Ok((draws.into_iter().flatten().collect(), dropped))
}

struct BlockOutcome {
    strong_ran: bool,
    results: Vec<(Scheme, [f64; 3], usize, usize)>,
}

fn run_block(cfg: &ExperimentConfig, block: &[ExtendedChannel], p_total: f64) -> Result<BlockOutcome> {
    let opts = &cfg.options;
    let adaptive = run_adaptive(block, p_total, cfg.n, opts)?;
    let strong_ran = adaptive.scheme == Scheme::StrongIa;
    let mut results = Vec::with_capacity(cfg.schemes.len());
    for &scheme in &cfg.schemes {
        let r = match scheme {
            Scheme::StrongIa => adaptive.clone(),
            Scheme::LinearFallback => run_linear_fallback(block, &PowerAllocation::uniform(p_total, cfg.n)?, opts)?,
        };
        results.push((scheme, r.rates, r.used, r.skipped));
    }
    Ok(BlockOutcome { strong_ran, results })
}

/// Runs every scheme at every SNR point; rows are ordered by SNR, then by
/// the order of `cfg.schemes`.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    let mut rows = Vec::with_capacity(cfg.snr_grid_db.len() * cfg.schemes.len());
    let (realizations, dropped) = sweep_realizations(cfg)?;
    if realizations.is_empty() {
        return Err(Error::AllDegenerate(cfg.trials));
    }
    let blocks: Vec<&[ExtendedChannel]> = realizations.chunks(cfg.block_size).collect();
    for &snr_db in &cfg.snr_grid_db {
        let p_total = 10f64.powf(snr_db / 10.0);
        let outcomes = blocks
            .par_iter()
            .map(|block| run_block(cfg, block, p_total))
            .collect::<Result<Vec<_>>>()?;
        let condition_rate = outcomes.iter().filter(|o| o.strong_ran).count() as f64 / outcomes.len() as f64;

        for (slot, &scheme) in cfg.schemes.iter().enumerate() {
            let mut weighted = [0.0; 3];
            let mut used = 0usize;
            let mut skipped = dropped;
            let mut block_sums = Vec::with_capacity(outcomes.len());
            for o in &outcomes {
                let (_, rates, u, s) = o.results[slot];
                for k in 0..3 {
                    weighted[k] += rates[k] * u as f64;
                }
                used += u;
                skipped += s;
                block_sums.push(rates.iter().sum::<f64>());
            }
            let rates = weighted.map(|w| w / used as f64);
            rows.push(SweepRow {
                snr_db,
                scheme,
                trials_used: used,
                condition_rate,
                rates,
                sum_rate: rates.iter().sum(),
                sum_rate_stderr: standard_error(&block_sums),
                dof_estimate: None,
                skipped,
            });
        }
    }
    for &scheme in &cfg.schemes {
        let points: Vec<(f64, f64)> = rows
            .iter()
            .filter(|r| r.scheme == scheme && r.snr_db >= cfg.slope_from_db)
            .map(|r| (r.snr_db, r.sum_rate))
            .collect();
        let slope = estimate_dof_slope(&points).ok();
        for r in rows.iter_mut().filter(|r| r.scheme == scheme) {
            r.dof_estimate = slope;
        }
    }
    Ok(rows)
}

fn standard_error(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (var / n).sqrt()
}

pub fn write_csv<W: Write>(rows: &[SweepRow], mut out: W) -> Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{:.6},{:.9},{:.9},{:.9},{:.9}",
            r.snr_db,
            r.scheme.label(),
            r.trials_used,
            r.condition_rate,
            r.rates[0],
            r.rates[1],
            r.rates[2],
            r.sum_rate
        )?;
    }
    Ok(())
}

/// Companion metadata for a sweep.
#[derive(Debug, Clone, Serialize)]
pub struct Summary<'a> {
    pub version: String,
    pub config: &'a ExperimentConfig,
    pub snr_definition: &'static str,
    pub channel_law: &'static str,
    pub rate_unit: &'static str,
    pub dof_slopes: BTreeMap<&'static str, Option<f64>>,
    pub rows: &'a [SweepRow],
}

impl<'a> Summary<'a> {
    pub fn new(config: &'a ExperimentConfig, rows: &'a [SweepRow]) -> Self {
        let dof_slopes = config
            .schemes
            .iter()
            .map(|s| {
                let slope = rows.iter().find(|r| r.scheme == *s).and_then(|r| r.dof_estimate);
                (s.label(), slope)
            })
            .collect();
        Self {
            version: format!("{} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION")),
            config,
            snr_definition: "snr_db = 10 log10(P), P = total transmit power per user, unit-variance noise",
            channel_law: "i.i.d. per slot and link; unit-variance circularly-symmetric complex Gaussian, \
                          optionally conditioned on h_min <= |h| <= h_max",
            rate_unit: "bits per channel use",
            dof_slopes,
            rows,
        }
    }
}

pub fn write_summary<W: Write>(cfg: &ExperimentConfig, rows: &[SweepRow], mut out: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, &Summary::new(cfg, rows))?;
    writeln!(out)?;
    Ok(())
}

/// Writes every realization of the sweep as channel-dump records.
pub fn write_channel_dump<W: Write>(cfg: &ExperimentConfig, mut out: W) -> Result<()> {
    let (realizations, _) = sweep_realizations(cfg)?;
    for ch in &realizations {
        writeln!(out, "{}", ch.to_dump_record())?;
    }
    Ok(())
}
