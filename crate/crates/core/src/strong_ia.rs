//! The strong-interference decision and the two transmission schemes.
//!
//! Receiver 2 sees `n + 1` interference dimensions under the strong-IA
//! precoders: the `n` aligned ones plus one leftover stream. If that stream
//! can be decoded at receiver 2 at least as fast as at its own receiver, it is
//! decoded, subtracted, and every user gets `n` interference-free streams over
//! `2n` channel uses. Otherwise receiver 2 gives up one of its own streams and
//! zero-forces the `n + 1` interference dimensions instead.
//!
//! Candidate strong streams are the droppable column of user 3 and the first
//! column of user 1; removing either leaves `n` aligned dimensions at
//! receiver 2.

use serde::{Deserialize, Serialize};

use crate::channel::ExtendedChannel;
use crate::error::{Error, Result};
use crate::numerics::{CMat, CVec, Tolerance, C64};
use crate::precoding::{construct_precoders, verify_alignment, AlignmentReport, Generator, PrecoderSet};
use crate::receivers::{
    interference_covariance, mmse_combiner_for, received_covariance, signature, stream_rates_zf, zf_filter_toward,
    PowerAllocation,
};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SchemeOptions {
    pub tol: Tolerance,
    pub generator: Generator,
}

/// Precoders and alignment data for one realization.
#[derive(Debug, Clone)]
pub struct PreparedRealization {
    pub channel: ExtendedChannel,
    /// Chain output, used for the literal alignment checks.
    pub raw: PrecoderSet,
    /// Unit-norm columns, used for transmission.
    pub precoders: PrecoderSet,
    pub report: AlignmentReport,
    /// Droppable column of user 3 (1-based).
    pub strong_stream: usize,
}

impl PreparedRealization {
    pub fn n(&self) -> usize {
        self.raw.n()
    }

    pub fn tau(&self) -> usize {
        self.channel.tau()
    }

    /// Stream of user `j` that would be decoded at receiver 2.
    pub fn candidate_stream(&self, j: usize) -> usize {
        if j == 3 {
            self.strong_stream
        } else {
            1
        }
    }
}

pub fn prepare(ch: &ExtendedChannel, n: usize, opts: &SchemeOptions) -> Result<PreparedRealization> {
    if n == 0 || ch.tau() != 2 * n {
        return Err(Error::Shape(format!(
            "need a {}-slot extension for n = {n}, got {}",
            2 * n,
            ch.tau()
        )));
    }
    let raw = construct_precoders(ch, n, &opts.generator, &opts.tol)?;
    let report = verify_alignment(ch, &raw, &opts.tol)?;
    if !report.holds() {
        return Err(Error::DegenerateChannel(format!(
            "precoders fail alignment checks: {report:?}"
        )));
    }
    let strong_stream = report.droppable.expect("holds() implies a droppable column");
    Ok(PreparedRealization {
        channel: ch.clone(),
        precoders: raw.normalized(),
        raw,
        report,
        strong_stream,
    })
}

fn is_skippable(err: &Error) -> bool {
    matches!(
        err,
        Error::DegenerateChannel(_)
            | Error::SingularChannel { .. }
            | Error::DegenerateEffectiveChannel(_)
            | Error::IllConditioned(_)
    )
}

/// Applies `f` to every realization, dropping degenerate ones.
///
/// Results keep input order so that later reductions are reproducible.
fn map_realizations<T>(
    realizations: &[ExtendedChannel],
    n: usize,
    opts: &SchemeOptions,
    mut f: impl FnMut(&PreparedRealization) -> Result<T>,
) -> Result<(Vec<T>, usize)> {
    if realizations.is_empty() {
        return Err(Error::InvalidInput("empty realization set".into()));
    }
    let mut out = Vec::with_capacity(realizations.len());
    let mut skipped = 0;
    for ch in realizations {
        match prepare(ch, n, opts).and_then(|prep| f(&prep)) {
            Ok(v) => out.push(v),
            Err(e) if is_skippable(&e) => skipped += 1,
            Err(e) => return Err(e),
        }
    }
    if out.is_empty() {
        return Err(Error::AllDegenerate(realizations.len()));
    }
    Ok((out, skipped))
}

fn mean(xs: impl ExactSizeIterator<Item = f64>) -> f64 {
    let len = xs.len();
    xs.sum::<f64>() / len as f64
}

fn check_candidate(j: usize) -> Result<()> {
    if j == 1 || j == 3 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("strong interferer must be user 1 or 3, got {j}")))
    }
}

/// Rate (bits per channel use) of user `j`'s candidate stream at receiver 2
/// under the SINR-maximizing combiner.
pub fn cross_rate_one(prep: &PreparedRealization, pa: &PowerAllocation, j: usize) -> Result<f64> {
    check_candidate(j)?;
    let r = mmse_combiner_for(&prep.channel, &prep.precoders, pa, 2, j, prep.candidate_stream(j))?;
    Ok((1.0 + r.sinr).log2() / prep.tau() as f64)
}

/// Rate (bits per channel use) of user `j`'s candidate stream at receiver `j`
/// after zero-forcing the aligned interference.
pub fn own_rate_one(prep: &PreparedRealization, pa: &PowerAllocation, j: usize, tol: &Tolerance) -> Result<f64> {
    check_candidate(j)?;
    let rates = zf_stream_rates(prep, pa, j, tol)?;
    Ok(rates[prep.candidate_stream(j) - 1] / prep.tau() as f64)
}

/// Sample mean over the usable realizations of a set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    pub mean: f64,
    pub used: usize,
    pub skipped: usize,
}

pub fn cross_rate_c23(
    realizations: &[ExtendedChannel],
    pa: &PowerAllocation,
    j: usize,
    opts: &SchemeOptions,
) -> Result<RateEstimate> {
    check_candidate(j)?;
    let (rates, skipped) = map_realizations(realizations, pa.n(), opts, |prep| cross_rate_one(prep, pa, j))?;
    Ok(RateEstimate {
        mean: mean(rates.iter().copied()),
        used: rates.len(),
        skipped,
    })
}

pub fn own_rate_c33(
    realizations: &[ExtendedChannel],
    pa: &PowerAllocation,
    j: usize,
    opts: &SchemeOptions,
) -> Result<RateEstimate> {
    check_candidate(j)?;
    let (rates, skipped) =
        map_realizations(realizations, pa.n(), opts, |prep| own_rate_one(prep, pa, j, &opts.tol))?;
    Ok(RateEstimate {
        mean: mean(rates.iter().copied()),
        used: rates.len(),
        skipped,
    })
}

/// Cross and own rate of one candidate strong stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CandidateRates {
    pub user: usize,
    pub stream: usize,
    /// Rate at receiver 2.
    pub cross_rate: f64,
    /// Rate at the stream's own receiver.
    pub own_rate: f64,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrongDecision {
    pub satisfied: bool,
    /// Interferer whose stream is decoded at receiver 2, when satisfied.
    pub strong_user: Option<usize>,
    pub strong_stream: usize,
    /// Cross rate of the best candidate (bits per channel use).
    pub c23: f64,
    /// Own rate of the best candidate (bits per channel use).
    pub c33: f64,
    pub margin: f64,
    /// Candidates for users 3 and 1, in that order.
    pub candidates: Vec<CandidateRates>,
    pub used: usize,
    pub skipped: usize,
}

/// Averages cross and own rates of both candidates over the set and checks
/// whether at least one candidate's cross rate reaches its own rate.
pub fn evaluate_condition(
    realizations: &[ExtendedChannel],
    pa: &PowerAllocation,
    opts: &SchemeOptions,
) -> Result<StrongDecision> {
    let (per_realization, skipped) = map_realizations(realizations, pa.n(), opts, |prep| {
        let mut out = [(0usize, 0.0, 0.0); 2];
        for (slot, j) in [3, 1].into_iter().enumerate() {
            out[slot] = (
                prep.candidate_stream(j),
                cross_rate_one(prep, pa, j)?,
                own_rate_one(prep, pa, j, &opts.tol)?,
            );
        }
        Ok(out)
    })?;
    let candidates: Vec<CandidateRates> = [3, 1]
        .into_iter()
        .enumerate()
        .map(|(slot, user)| {
            let cross_rate = mean(per_realization.iter().map(|r| r[slot].1));
            let own_rate = mean(per_realization.iter().map(|r| r[slot].2));
            CandidateRates {
                user,
                stream: per_realization[0][slot].0,
                cross_rate,
                own_rate,
                margin: cross_rate - own_rate,
            }
        })
        .collect();
    // Ties go to user 3.
    let best = if candidates[1].margin > candidates[0].margin {
        candidates[1]
    } else {
        candidates[0]
    };
    let satisfied = best.margin >= 0.0;
    Ok(StrongDecision {
        satisfied,
        strong_user: satisfied.then_some(best.user),
        strong_stream: best.stream,
        c23: best.cross_rate,
        c33: best.own_rate,
        margin: best.margin,
        candidates,
        used: per_realization.len(),
        skipped,
    })
}

/// Receiver-`rx` frame `sum_k H[rx][k] V[k] x_k + z`.
pub fn received_frame(ch: &ExtendedChannel, p: &PrecoderSet, rx: usize, symbols: &[CVec; 3], noise: &CVec) -> Result<CVec> {
    if noise.len() != ch.tau() || symbols.iter().any(|x| x.len() != p.n()) {
        return Err(Error::Shape("frame dimensions do not match the precoders".into()));
    }
    let mut y = noise.clone();
    for k in 1..=3 {
        y += signature(ch, p, rx, k) * &symbols[k - 1];
    }
    Ok(y)
}

/// Removes the reconstructed strong stream `(tx, stream)` from `y2`, given
/// its transmitted symbol (error-free decoding).
pub fn sic_subtract(
    y2: &CVec,
    ch: &ExtendedChannel,
    p: &PrecoderSet,
    strong: (usize, usize),
    symbol: C64,
) -> Result<CVec> {
    let (tx, stream) = strong;
    if y2.len() != ch.tau() || stream == 0 || stream > p.n() {
        return Err(Error::Shape("strong stream does not fit the frame".into()));
    }
    let h = signature(ch, p, 2, tx).column(stream - 1).into_owned();
    Ok(y2 - h * symbol)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    StrongIa,
    LinearFallback,
}

impl Scheme {
    pub fn label(&self) -> &'static str {
        match self {
            Scheme::StrongIa => "strong-ia",
            Scheme::LinearFallback => "linear-fallback",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeResult {
    pub scheme: Scheme,
    /// Streams per user of the precoders that were used.
    pub n: usize,
    /// Per-user rate in bits per channel use.
    pub rates: [f64; 3],
    pub sum_rate: f64,
    /// Decoded streams per user per block.
    pub dof_streams: [usize; 3],
    /// Channel uses per block.
    pub block_length: usize,
    pub decision: Option<StrongDecision>,
    pub used: usize,
    pub skipped: usize,
}

/// Per-stream rates (bits per block) at receiver `rx` after nulling its
/// interference with an `n`-dimensional filter.
fn zf_stream_rates(prep: &PreparedRealization, pa: &PowerAllocation, rx: usize, tol: &Tolerance) -> Result<Vec<f64>> {
    let q = interference_covariance(&prep.channel, &prep.precoders, pa, rx)?;
    filtered_rates(prep, pa, rx, &q, prep.n(), tol)
}

fn filtered_rates(
    prep: &PreparedRealization,
    pa: &PowerAllocation,
    rx: usize,
    q: &CMat,
    m: usize,
    tol: &Tolerance,
) -> Result<Vec<f64>> {
    let desired = signature(&prep.channel, &prep.precoders, rx, rx);
    let zf = zf_filter_toward(q, m, &desired, tol)?;
    stream_rates_zf(&prep.channel, &prep.precoders, pa, rx, &zf, tol)
}

fn zf_user_rate(prep: &PreparedRealization, pa: &PowerAllocation, rx: usize, tol: &Tolerance) -> Result<f64> {
    let rates = zf_stream_rates(prep, pa, rx, tol)?;
    Ok(rates.iter().sum::<f64>() / prep.tau() as f64)
}

/// Per-user rates with error-free cancellation of `strong` at receiver 2.
pub fn strong_rates_one(
    prep: &PreparedRealization,
    pa: &PowerAllocation,
    strong: (usize, usize),
    tol: &Tolerance,
) -> Result<[f64; 3]> {
    let r1 = zf_user_rate(prep, pa, 1, tol)?;
    let r3 = zf_user_rate(prep, pa, 3, tol)?;
    let q2 = received_covariance(&prep.channel, &prep.precoders, pa, 2, &[1, 3], Some(strong))?;
    let rates = filtered_rates(prep, pa, 2, &q2, prep.n(), tol)?;
    Ok([r1, rates.iter().sum::<f64>() / prep.tau() as f64, r3])
}

/// Per-user rates when receiver 2 drops its last stream and zero-forces all
/// of its interference.
pub fn fallback_rates_one(prep: &PreparedRealization, pa: &PowerAllocation, tol: &Tolerance) -> Result<[f64; 3]> {
    let n = prep.n();
    let pa = pa.with_stream(2, n, 0.0)?;
    let r1 = zf_user_rate(prep, &pa, 1, tol)?;
    let r3 = zf_user_rate(prep, &pa, 3, tol)?;
    let q2 = interference_covariance(&prep.channel, &prep.precoders, &pa, 2)?;
    let rates = filtered_rates(prep, &pa, 2, &q2, n - 1, tol)?;
    Ok([r1, rates.iter().sum::<f64>() / prep.tau() as f64, r3])
}

fn average_rates(rates: &[[f64; 3]]) -> [f64; 3] {
    std::array::from_fn(|k| mean(rates.iter().map(|r| r[k])))
}

fn assemble(
    scheme: Scheme,
    n: usize,
    rates: [f64; 3],
    decision: Option<StrongDecision>,
    used: usize,
    skipped: usize,
) -> SchemeResult {
    let dof_streams = match scheme {
        Scheme::StrongIa => [n, n, n],
        Scheme::LinearFallback => [n, n - 1, n],
    };
    SchemeResult {
        scheme,
        n,
        rates,
        sum_rate: rates.iter().sum(),
        dof_streams,
        block_length: 2 * n,
        decision,
        used,
        skipped,
    }
}

/// Strong IA at `n = pa.n()` streams per user when the condition holds over
/// the set, otherwise the linear fallback on the same realizations.
pub fn run_strong_ia(realizations: &[ExtendedChannel], pa: &PowerAllocation, opts: &SchemeOptions) -> Result<SchemeResult> {
    let decision = evaluate_condition(realizations, pa, opts)?;
    match decision.strong_user {
        Some(user) => {
            let strong = (user, decision.strong_stream);
            let n = pa.n();
            let (rates, skipped) =
                map_realizations(realizations, n, opts, |prep| strong_rates_one(prep, pa, strong, &opts.tol))?;
            Ok(assemble(
                Scheme::StrongIa,
                n,
                average_rates(&rates),
                Some(decision),
                rates.len(),
                skipped,
            ))
        }
        None => {
            let mut result = run_linear_fallback(realizations, pa, opts)?;
            result.decision = Some(decision);
            Ok(result)
        }
    }
}

/// The linear fallback: `(n, n - 1, n)` streams over `2n` channel uses.
pub fn run_linear_fallback(
    realizations: &[ExtendedChannel],
    pa: &PowerAllocation,
    opts: &SchemeOptions,
) -> Result<SchemeResult> {
    let n = pa.n();
    let (rates, skipped) = map_realizations(realizations, n, opts, |prep| fallback_rates_one(prep, pa, &opts.tol))?;
    Ok(assemble(
        Scheme::LinearFallback,
        n,
        average_rates(&rates),
        None,
        rates.len(),
        skipped,
    ))
}

/// Full decision procedure over a `2 * n_max`-slot realization set.
///
/// The condition is checked for every `n <= n_max` on the leading `2n`
/// slots with uniform power `p_total / n`; strong IA runs at the largest `n`
/// that satisfies it, and the linear fallback at `n_max` otherwise.
pub fn run_adaptive(
    realizations: &[ExtendedChannel],
    p_total: f64,
    n_max: usize,
    opts: &SchemeOptions,
) -> Result<SchemeResult> {
    if n_max == 0 {
        return Err(Error::InvalidInput("need at least one stream".into()));
    }
    // Searching downward stops at the largest satisfying n.
    let mut full_decision = None;
    for n in (1..=n_max).rev() {
        let pa = PowerAllocation::uniform(p_total, n)?;
        let subset = realizations
            .iter()
            .map(|ch| ch.truncated(2 * n))
            .collect::<Result<Vec<_>>>()?;
        let decision = evaluate_condition(&subset, &pa, opts)?;
        if decision.satisfied {
            return run_strong_ia(&subset, &pa, opts);
        }
        if n == n_max {
            full_decision = Some(decision);
        }
    }
    let pa = PowerAllocation::uniform(p_total, n_max)?;
    let mut result = run_linear_fallback(realizations, &pa, opts)?;
    result.decision = full_decision;
    Ok(result)
}
