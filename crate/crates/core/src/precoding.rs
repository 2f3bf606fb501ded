//! Transmit precoders for strong interference alignment.
//!
//! User 3's precoder is a Krylov-type sequence `[w, T w, ..., T^(n-1) w]` of
//! the alignment operator; users 2 and 1 follow by inverting the channels so
//! that interference lines up at receivers 1 and 3. At receiver 2 all but one
//! column of `H23 V3` coincide with columns of `H21 V1`; the leftover column is
//! the stream that must be strong enough to be decoded and cancelled there.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{alignment_operator, derive_seed, standard_complex_normal, AlignmentOperator, ExtendedChannel};
use crate::error::{Error, Result};
use crate::numerics::{
    column_subset, column_subset_residual, drop_column, normalize_columns, numerical_rank, orthonormal_basis,
    subspace_residual, CMat, CVec, Tolerance, C64,
};

/// Choice of the generator vector `w` (must have no zero entry).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Generator {
    #[default]
    Ones,
    /// i.i.d. `CN(0, 1)` entries from the given seed.
    Random { seed: u64 },
}

impl Generator {
    pub fn vector(&self, tau: usize) -> CVec {
        match *self {
            Generator::Ones => CVec::from_element(tau, C64::from(1.0)),
            Generator::Random { seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                CVec::from_fn(tau, |_, _| standard_complex_normal(&mut rng))
            }
        }
    }
}

/// Precoders `V1, V2, V3` (each `tau x n`) and the generator `w`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecoderSet {
    v: [CMat; 3],
    w: CVec,
}

impl PrecoderSet {
    pub fn new(v1: CMat, v2: CMat, v3: CMat, w: CVec) -> Result<Self> {
        let (tau, n) = v3.shape();
        if v1.shape() != (tau, n) || v2.shape() != (tau, n) || w.len() != tau {
            return Err(Error::Shape(format!(
                "precoders must all be {tau}x{n} with a length-{tau} generator"
            )));
        }
        Ok(Self { v: [v1, v2, v3], w })
    }

    /// Precoder of user `k` (1-based).
    pub fn v(&self, k: usize) -> &CMat {
        assert!((1..=3).contains(&k), "user index {k} outside 1..=3");
        &self.v[k - 1]
    }

    pub fn w(&self) -> &CVec {
        &self.w
    }

    pub fn n(&self) -> usize {
        self.v[0].ncols()
    }

    pub fn tau(&self) -> usize {
        self.v[0].nrows()
    }

    /// Same column directions with unit-norm columns.
    ///
    /// Spans and column directions are unchanged, so every alignment property
    /// holds up to scale; this is the form used for power accounting.
    pub fn normalized(&self) -> Self {
        Self {
            v: [
                normalize_columns(&self.v[0]),
                normalize_columns(&self.v[1]),
                normalize_columns(&self.v[2]),
            ],
            w: self.w.clone(),
        }
    }
}

/// `[w, T w, ..., T^(n-1) w]`.
pub fn build_v3(t: &AlignmentOperator, w: &CVec, n: usize, tol: &Tolerance) -> Result<CMat> {
    if w.len() != t.tau() {
        return Err(Error::Shape(format!(
            "generator has length {} but the extension is {}",
            w.len(),
            t.tau()
        )));
    }
    if n == 0 {
        return Err(Error::InvalidInput("need at least one stream".into()));
    }
    if w.iter().any(|z| z.norm() == 0.0) {
        return Err(Error::InvalidInput("generator vector has a zero entry".into()));
    }
    let mut cols = Vec::with_capacity(n);
    let mut col = CMat::from_column_slice(w.len(), 1, w.as_slice());
    for _ in 0..n {
        cols.push(col.column(0).into_owned());
        col = t.apply(&col);
    }
    let v3 = CMat::from_columns(&cols);
    let rank = numerical_rank(&normalize_columns(&v3), tol)?;
    if rank < n {
        return Err(Error::DegenerateChannel(format!(
            "user-3 precoder has rank {rank} < {n}"
        )));
    }
    Ok(v3)
}

/// `V2 = H12^-1 H13 V3` and `V1 = H31^-1 H32 V2`.
pub fn derive_v2_v1(ch: &ExtendedChannel, v3: &CMat) -> Result<(CMat, CMat)> {
    if v3.nrows() != ch.tau() {
        return Err(Error::Shape(format!(
            "precoder has {} rows but the extension is {}",
            v3.nrows(),
            ch.tau()
        )));
    }
    let v2 = ch.apply_inverse(1, 2, &ch.apply(1, 3, v3))?;
    let v1 = ch.apply_inverse(3, 1, &ch.apply(3, 2, &v2))?;
    Ok((v2, v1))
}

/// Full precoder chain for one realization.
pub fn construct_precoders(ch: &ExtendedChannel, n: usize, generator: &Generator, tol: &Tolerance) -> Result<PrecoderSet> {
    let t = alignment_operator(ch)?;
    let w = generator.vector(ch.tau());
    let v3 = build_v3(&t, &w, n, tol)?;
    let (v2, v1) = derive_v2_v1(ch, &v3)?;
    PrecoderSet::new(v1, v2, v3, w)
}

/// Outcome of checking the three alignment conditions on a precoder set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentReport {
    /// `span(H12 V2) == span(H13 V3)`.
    pub rx1_aligned: bool,
    /// `span(H31 V1) == span(H32 V2)`.
    pub rx3_aligned: bool,
    /// Columns `i` (1-based) of `V3` whose removal leaves every column of
    /// `H23 V3` among the columns of `H21 V1`.
    pub droppable_candidates: Vec<usize>,
    /// First droppable column, if any.
    pub droppable: Option<usize>,
    pub droppable_unique: bool,
    pub rx1_residual: f64,
    pub rx3_residual: f64,
    /// Relative column-match residual for each candidate column.
    pub rx2_subset_residuals: Vec<f64>,
}

impl AlignmentReport {
    pub fn holds(&self) -> bool {
        self.rx1_aligned && self.rx3_aligned && self.droppable_unique
    }
}

fn span_residual(a: &CMat, b: &CMat, tol: &Tolerance) -> Result<(bool, f64)> {
    // Column scaling does not move a span but improves conditioning.
    let sa = orthonormal_basis(&normalize_columns(a), tol)?;
    let sb = orthonormal_basis(&normalize_columns(b), tol)?;
    let residual = subspace_residual(&sa, &sb)?;
    Ok((sa.dim() == sb.dim() && residual <= tol.threshold(1.0), residual))
}

/// Evaluates the alignment conditions literally on `p`.
///
/// The receiver-2 condition is a column-set relation, so it should be checked
/// on the raw (unnormalized) chain output.
pub fn verify_alignment(ch: &ExtendedChannel, p: &PrecoderSet, tol: &Tolerance) -> Result<AlignmentReport> {
    if p.tau() != ch.tau() {
        return Err(Error::Shape(format!(
            "precoders have {} rows but the extension is {}",
            p.tau(),
            ch.tau()
        )));
    }
    let (rx1_aligned, rx1_residual) = span_residual(&ch.apply(1, 2, p.v(2)), &ch.apply(1, 3, p.v(3)), tol)?;
    let (rx3_aligned, rx3_residual) = span_residual(&ch.apply(3, 1, p.v(1)), &ch.apply(3, 2, p.v(2)), tol)?;

    let h23v3 = ch.apply(2, 3, p.v(3));
    let h21v1 = ch.apply(2, 1, p.v(1));
    let mut droppable_candidates = Vec::new();
    let mut rx2_subset_residuals = Vec::with_capacity(p.n());
    for i in 0..p.n() {
        let rest = drop_column(&h23v3, i);
        if column_subset(&rest, &h21v1, tol, false)? {
            droppable_candidates.push(i + 1);
        }
        rx2_subset_residuals.push(column_subset_residual(&rest, &h21v1, false)?);
    }
    Ok(AlignmentReport {
        rx1_aligned,
        rx3_aligned,
        droppable: droppable_candidates.first().copied(),
        droppable_unique: droppable_candidates.len() == 1,
        droppable_candidates,
        rx1_residual,
        rx3_residual,
        rx2_subset_residuals,
    })
}

/// Rank check of the desired and interfering signals at receiver 1 under
/// a linear alignment attempt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InfeasibilityReport {
    pub n: usize,
    /// Numerical rank of `[H11 V1, H12 V2]`.
    pub rank: usize,
    pub full_rank: usize,
    /// True when the desired streams cannot be separated from interference.
    pub rank_deficient: bool,
    /// Whether the receiver-2 span equality also happens to hold.
    pub rx2_aligned: bool,
}

const FILL_TAG: u64 = 0x1f11;

fn generic_columns(ch: &ExtendedChannel, count: usize) -> Vec<CVec> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(ch.seed(), &[ch.index(), FILL_TAG]));
    (0..count)
        .map(|_| CVec::from_fn(ch.tau(), |_, _| standard_complex_normal(&mut rng)))
        .collect()
}

fn check_distinct_spectrum(t: &AlignmentOperator, tol: &Tolerance) -> Result<()> {
    let d = t.diagonal();
    for a in 0..d.len() {
        for b in a + 1..d.len() {
            if (d[a] - d[b]).norm() <= tol.threshold(d[a].norm().max(d[b].norm())) {
                return Err(Error::DegenerateChannel(format!(
                    "alignment operator repeats an eigenvalue at slots {a} and {b}"
                )));
            }
        }
    }
    Ok(())
}

fn linear_chain_report(ch: &ExtendedChannel, n: usize, v1: CMat, tol: &Tolerance) -> Result<InfeasibilityReport> {
    // Interference aligned at receiver 3, then at receiver 1.
    let v2 = ch.apply_inverse(3, 2, &ch.apply(3, 1, &v1))?;
    let v3 = ch.apply_inverse(1, 3, &ch.apply(1, 2, &v2))?;
    let desired = ch.apply(1, 1, &v1);
    let interference = ch.apply(1, 2, &v2);
    let stack = CMat::from_columns(
        &desired
            .column_iter()
            .chain(interference.column_iter())
            .map(|c| c.into_owned())
            .collect::<Vec<_>>(),
    );
    let rank = numerical_rank(&normalize_columns(&stack), tol)?;
    let (rx2_aligned, _) = span_residual(&ch.apply(2, 3, &v3), &ch.apply(2, 1, &v1), tol)?;
    Ok(InfeasibilityReport {
        n,
        rank,
        full_rank: 2 * n,
        rank_deficient: rank < 2 * n,
        rx2_aligned,
    })
}

fn check_extension(ch: &ExtendedChannel, n: usize) -> Result<()> {
    if n == 0 || ch.tau() != 2 * n {
        return Err(Error::Shape(format!(
            "need a {}-slot extension for n = {n}, got {}",
            2 * n,
            ch.tau()
        )));
    }
    Ok(())
}

/// Linear alignment with `e_1` in `span(V1)`.
///
/// Any span invariant under the diagonal operator must contain a coordinate
/// vector, and a coordinate vector is mapped onto itself by every diagonal
/// channel. `V1 = [e_1, g_2, ..., g_n]` with generic `g`, and `V2`, `V3` are
/// chained so that interference aligns at receivers 3 and 1. Receiver 1 then
/// sees `e_1` in both its desired and its interference space, so
/// `[H11 V1, H12 V2]` loses rank.
pub fn demonstrate_linear_infeasibility(ch: &ExtendedChannel, n: usize, tol: &Tolerance) -> Result<InfeasibilityReport> {
    check_extension(ch, n)?;
    check_distinct_spectrum(&alignment_operator(ch)?, tol)?;
    let mut cols = vec![CVec::from_fn(ch.tau(), |r, _| {
        if r == 0 {
            C64::from(1.0)
        } else {
            C64::from(0.0)
        }
    })];
    cols.extend(generic_columns(ch, n - 1));
    linear_chain_report(ch, n, CMat::from_columns(&cols), tol)
}

/// The same chain started from a fully generic `V1` (control case).
pub fn linear_control_construction(ch: &ExtendedChannel, n: usize, tol: &Tolerance) -> Result<InfeasibilityReport> {
    check_extension(ch, n)?;
    check_distinct_spectrum(&alignment_operator(ch)?, tol)?;
    let v1 = CMat::from_columns(&generic_columns(ch, n));
    linear_chain_report(ch, n, v1, tol)
}
