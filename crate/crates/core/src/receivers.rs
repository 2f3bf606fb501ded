//! Receive-side processing: interference covariances, the SINR-maximizing
//! combiner for a single target stream, zero-forcing filters taken from the
//! smallest eigenvectors of an interference covariance, and per-stream rates.
//!
//! Noise is unit-variance `CN(0, I)` on every slot. Rates returned here are in
//! bits per extended symbol (`tau` channel uses); callers divide by `tau`.

use serde::{Deserialize, Serialize};

use crate::channel::ExtendedChannel;
use crate::error::{Error, Result};
use crate::numerics::{hermitian_eigen, numerical_rank, normalize_columns, CMat, CVec, Tolerance, C64};
use crate::precoding::PrecoderSet;

/// Per-stream transmit powers for the three users.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerAllocation {
    p_total: f64,
    per_stream: [Vec<f64>; 3],
}

impl PowerAllocation {
    /// `p_total / n` on every stream of every user.
    pub fn uniform(p_total: f64, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidInput("need at least one stream".into()));
        }
        let each = p_total / n as f64;
        Self::from_streams(p_total, std::array::from_fn(|_| vec![each; n]))
    }

    pub fn from_streams(p_total: f64, per_stream: [Vec<f64>; 3]) -> Result<Self> {
        if !(p_total.is_finite() && p_total >= 0.0) {
            return Err(Error::InvalidInput(format!("total power {p_total} is invalid")));
        }
        let n = per_stream[0].len();
        for (k, powers) in per_stream.iter().enumerate() {
            if powers.len() != n {
                return Err(Error::Shape("users must have the same stream count".into()));
            }
            if powers.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                return Err(Error::InvalidInput(format!("user {} has a negative or non-finite power", k + 1)));
            }
            let sum: f64 = powers.iter().sum();
            if sum > p_total * (1.0 + 1e-12) {
                return Err(Error::InvalidInput(format!(
                    "user {} allocates {sum} above the budget {p_total}",
                    k + 1
                )));
            }
        }
        Ok(Self { p_total, per_stream })
    }

    pub fn p_total(&self) -> f64 {
        self.p_total
    }

    pub fn n(&self) -> usize {
        self.per_stream[0].len()
    }

    /// Per-stream powers of user `k` (1-based).
    pub fn user(&self, k: usize) -> &[f64] {
        &self.per_stream[k - 1]
    }

    /// Power of stream `s` (1-based) of user `k` (1-based).
    pub fn stream(&self, k: usize, s: usize) -> f64 {
        self.per_stream[k - 1][s - 1]
    }

    /// Copy with one stream set to `power`.
    pub fn with_stream(&self, k: usize, s: usize, power: f64) -> Result<Self> {
        if !(1..=3).contains(&k) || s == 0 || s > self.n() {
            return Err(Error::InvalidInput(format!("no stream {s} for user {k}")));
        }
        let mut per_stream = self.per_stream.clone();
        per_stream[k - 1][s - 1] = power;
        Self::from_streams(self.p_total, per_stream)
    }

    /// Copy with every power of user `k` multiplied by `factor`, ignoring the
    /// budget (used to probe invariances).
    pub fn scaled_user(&self, k: usize, factor: f64) -> Self {
        let mut out = self.clone();
        for p in &mut out.per_stream[k - 1] {
            *p *= factor;
        }
        out.p_total = out.p_total.max(out.per_stream[k - 1].iter().sum());
        out
    }
}

fn check_user(k: usize) -> Result<()> {
    if (1..=3).contains(&k) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("user index {k} outside 1..=3")))
    }
}

fn check_dims(ch: &ExtendedChannel, p: &PrecoderSet, pa: &PowerAllocation) -> Result<()> {
    if p.tau() != ch.tau() || pa.n() != p.n() {
        return Err(Error::Shape(format!(
            "channel tau {}, precoders {}x{}, powers for {} streams",
            ch.tau(),
            p.tau(),
            p.n(),
            pa.n()
        )));
    }
    Ok(())
}

/// Received signature `H[rx][tx] V[tx]`.
pub fn signature(ch: &ExtendedChannel, p: &PrecoderSet, rx: usize, tx: usize) -> CMat {
    ch.apply(rx, tx, p.v(tx))
}

/// `sum_tx sum_s P[tx][s] h_s h_s^H` over the listed transmitters, skipping
/// `exclude = (tx, stream)` (1-based) if given.
pub fn received_covariance(
    ch: &ExtendedChannel,
    p: &PrecoderSet,
    pa: &PowerAllocation,
    rx: usize,
    txs: &[usize],
    exclude: Option<(usize, usize)>,
) -> Result<CMat> {
    check_dims(ch, p, pa)?;
    check_user(rx)?;
    let tau = ch.tau();
    let mut q = CMat::zeros(tau, tau);
    for &tx in txs {
        check_user(tx)?;
        let sig = signature(ch, p, rx, tx);
        for (s, col) in sig.column_iter().enumerate() {
            if exclude == Some((tx, s + 1)) {
                continue;
            }
            let power = pa.stream(tx, s + 1);
            if power == 0.0 {
                continue;
            }
            q += (col * col.adjoint()).scale(power);
        }
    }
    Ok(q)
}

/// Covariance of the signals of every user other than `rx` at receiver `rx`.
pub fn interference_covariance(ch: &ExtendedChannel, p: &PrecoderSet, pa: &PowerAllocation, rx: usize) -> Result<CMat> {
    check_user(rx)?;
    let others: Vec<usize> = (1..=3).filter(|&k| k != rx).collect();
    received_covariance(ch, p, pa, rx, &others, None)
}

/// Zero-forcing filter: the `m` least-interfered directions of `q`.
#[derive(Debug, Clone, PartialEq)]
pub struct ZfFilter {
    pub u: CMat,
    pub q: CMat,
    /// All eigenvalues of `q`, ascending.
    pub eigenvalues: Vec<f64>,
    /// Interference power left after filtering, `trace(U^H Q U)`.
    pub residual_leakage: f64,
}

impl ZfFilter {
    pub fn m(&self) -> usize {
        self.u.ncols()
    }

    pub fn leakage_per_column(&self) -> f64 {
        if self.m() == 0 {
            0.0
        } else {
            self.residual_leakage / self.m() as f64
        }
    }
}

pub fn zf_filter(q: &CMat, m: usize, tol: &Tolerance) -> Result<ZfFilter> {
    if m > q.nrows() {
        return Err(Error::InvalidInput(format!(
            "cannot keep {m} dimensions of a {}-dimensional space",
            q.nrows()
        )));
    }
    let (eigenvalues, vectors) = hermitian_eigen(q, tol)?;
    let u = vectors.columns(0, m).into_owned();
    let residual_leakage = (u.adjoint() * q * &u).trace().re;
    Ok(ZfFilter {
        u,
        q: q.clone(),
        eigenvalues,
        residual_leakage,
    })
}

/// Like [`zf_filter`], but when `q` has more than `m` null directions the
/// filter keeps the `m` of them that capture most of `desired`.
///
/// If the null space has exactly `m` dimensions this is the same subspace as
/// [`zf_filter`].
pub fn zf_filter_toward(q: &CMat, m: usize, desired: &CMat, tol: &Tolerance) -> Result<ZfFilter> {
    let base = zf_filter(q, m, tol)?;
    let lambda_max = base.eigenvalues.last().copied().unwrap_or(0.0).max(0.0);
    let null_dim = base
        .eigenvalues
        .iter()
        .take_while(|&&l| l <= tol.threshold(lambda_max))
        .count();
    if m == 0 || null_dim <= m || desired.nrows() != q.nrows() {
        return Ok(base);
    }
    let (_, vectors) = hermitian_eigen(q, tol)?;
    let null = vectors.columns(0, null_dim).into_owned();
    let coords = null.adjoint() * desired;
    if coords.norm() == 0.0 {
        return Ok(base);
    }
    let svd = coords.svd(true, false);
    let left = svd.u.expect("left singular vectors requested");
    let sv = &svd.singular_values;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]));
    // Pad with the remaining null directions when desired has fewer columns.
    let mut cols: Vec<CVec> = order.iter().map(|&i| left.column(i).into_owned()).collect();
    let mut extra = (0..null_dim).map(|i| {
        let mut e = CVec::zeros(null_dim);
        e[i] = C64::from(1.0);
        e
    });
    while cols.len() < m {
        let e = extra.next().expect("null space has more than m dimensions");
        let mut r = e.clone();
        for c in &cols {
            r -= c * c.dotc(&e);
        }
        let norm = r.norm();
        if norm > 1e-8 {
            cols.push(r.unscale(norm));
        }
    }
    cols.truncate(m);
    let u = &null * CMat::from_columns(&cols);
    let residual_leakage = (u.adjoint() * q * &u).trace().re;
    Ok(ZfFilter {
        u,
        residual_leakage,
        ..base
    })
}

/// SINR-maximizing combiner for one target stream.
#[derive(Debug, Clone, PartialEq)]
pub struct CombinerResult {
    /// Unit-norm combining vector.
    pub c2: CVec,
    /// Noise-plus-interference covariance seen by the target stream.
    pub b: CMat,
    pub sinr: f64,
    /// Target signature `H[rx][tx] v_s`.
    pub signature: CVec,
    /// Target stream power.
    pub power: f64,
}

impl CombinerResult {
    /// SINR obtained with an arbitrary combiner `c`.
    pub fn sinr_for(&self, c: &CVec) -> f64 {
        let gain = c.dotc(&self.signature).norm_sqr();
        let noise = c.dotc(&(&self.b * c)).re;
        self.power * gain / noise
    }
}

/// Combiner at receiver 2 for stream `strong_index` (1-based) of user 3.
pub fn mmse_combiner(ch: &ExtendedChannel, p: &PrecoderSet, pa: &PowerAllocation, strong_index: usize) -> Result<CombinerResult> {
    mmse_combiner_for(ch, p, pa, 2, 3, strong_index)
}

/// Combiner at receiver `rx` for stream `stream` of transmitter `tx`.
///
/// `B = I + sum of every other stream's received covariance` and
/// `c = B^-1 h / |B^-1 h|`, giving `sinr = P_s h^H B^-1 h`.
pub fn mmse_combiner_for(
    ch: &ExtendedChannel,
    p: &PrecoderSet,
    pa: &PowerAllocation,
    rx: usize,
    tx: usize,
    stream: usize,
) -> Result<CombinerResult> {
    check_dims(ch, p, pa)?;
    check_user(tx)?;
    if stream == 0 || stream > p.n() {
        return Err(Error::InvalidInput(format!("no stream {stream} for user {tx}")));
    }
    let mut b = received_covariance(ch, p, pa, rx, &[1, 2, 3], Some((tx, stream)))?;
    for i in 0..b.nrows() {
        b[(i, i)] += C64::from(1.0);
    }
    let h: CVec = signature(ch, p, rx, tx).column(stream - 1).into_owned();
    let chol = b
        .clone()
        .cholesky()
        .ok_or_else(|| Error::IllConditioned("noise-plus-interference covariance is not positive definite".into()))?;
    let x = chol.solve(&h);
    let x_norm = x.norm();
    if x_norm == 0.0 || !x_norm.is_finite() {
        return Err(Error::DegenerateEffectiveChannel("target signature vanishes".into()));
    }
    let power = pa.stream(tx, stream);
    let sinr = power * h.dotc(&x).re;
    Ok(CombinerResult {
        c2: x.unscale(x_norm),
        b,
        sinr,
        signature: h,
        power,
    })
}

/// Per-stream rates of user `rx` after projecting onto `span(U)` and
/// zero-forcing the effective channel `G = U^H H[rx][rx] V[rx]`.
///
/// Streams with zero power get rate 0 and are left out of the equalizer.
/// Residual interference is taken from `zf.q`.
pub fn stream_rates_zf(
    ch: &ExtendedChannel,
    p: &PrecoderSet,
    pa: &PowerAllocation,
    rx: usize,
    zf: &ZfFilter,
    tol: &Tolerance,
) -> Result<Vec<f64>> {
    check_dims(ch, p, pa)?;
    check_user(rx)?;
    let n = p.n();
    let active: Vec<usize> = (0..n).filter(|&s| pa.stream(rx, s + 1) > 0.0).collect();
    let mut rates = vec![0.0; n];
    if active.is_empty() {
        return Ok(rates);
    }
    if zf.m() < active.len() {
        return Err(Error::DegenerateEffectiveChannel(format!(
            "{} active streams through a {}-dimensional filter",
            active.len(),
            zf.m()
        )));
    }
    let desired = signature(ch, p, rx, rx);
    let cols: Vec<CVec> = active.iter().map(|&s| desired.column(s).into_owned()).collect();
    let g = zf.u.adjoint() * CMat::from_columns(&cols);
    if numerical_rank(&normalize_columns(&g), tol)? < active.len() {
        return Err(Error::DegenerateEffectiveChannel(format!(
            "effective channel at receiver {rx} is rank deficient"
        )));
    }
    let gram = g.adjoint() * &g;
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::DegenerateEffectiveChannel("effective Gram matrix is singular".into()))?;
    // Rows of the pseudo-inverse.
    let w = chol.solve(&g.adjoint());
    let q_eff = zf.u.adjoint() * &zf.q * &zf.u;
    for (row, &s) in active.iter().enumerate() {
        let wr = w.row(row).transpose();
        let wr_conj = wr.map(|z| z.conj());
        let noise = wr.norm_squared();
        let interference = wr_conj.dotc(&(&q_eff * &wr_conj)).re.max(0.0);
        let sinr = pa.stream(rx, s + 1) / (noise + interference);
        rates[s] = (1.0 + sinr).log2();
    }
    Ok(rates)
}
