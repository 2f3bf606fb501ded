//! Seeded realizations of the symbol-extended 3-user channel.
//!
//! Every coefficient `h[rx][tx](slot)` is drawn from its own ChaCha stream
//! keyed by `(seed, realization index, link, slot)`, so a realization does not
//! depend on generation order and truncating the extension keeps the leading
//! slots unchanged.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::numerics::{CMat, CVec, C64};

pub const USERS: usize = 3;

const MAX_REJECTIONS: usize = 1_000_000;

/// Streams per user and the matching extension length `tau = 2n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtensionConfig {
    n: usize,
}

impl ExtensionConfig {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Config("streams per user must be at least 1".into()));
        }
        Ok(Self { n })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn tau(&self) -> usize {
        2 * self.n
    }
}

/// Distribution of each channel coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GainModel {
    /// Unit-variance circularly-symmetric complex Gaussian.
    #[default]
    UnboundedGaussian,
    /// The Gaussian law conditioned on `h_min <= |h| <= h_max`.
    BoundedMagnitude { h_min: f64, h_max: f64 },
}

impl GainModel {
    pub fn validate(&self) -> Result<()> {
        match *self {
            GainModel::UnboundedGaussian => Ok(()),
            GainModel::BoundedMagnitude { h_min, h_max } => {
                if h_min.is_finite() && h_max.is_finite() && 0.0 < h_min && h_min < h_max {
                    Ok(())
                } else {
                    Err(Error::Config(format!(
                        "bounded gain model needs 0 < h_min < h_max < inf (got {h_min}, {h_max})"
                    )))
                }
            }
        }
    }
}

/// Draws one `CN(0, 1)` sample.
pub fn standard_complex_normal<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// SplitMix64 finalizer.
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Combines a seed with further integers into one well-mixed key.
pub fn derive_seed(seed: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(mix64(seed), |acc, &p| mix64(acc ^ mix64(p.wrapping_add(0x5851_f42d_4c95_7f2d))))
}

fn coefficient_rng(seed: u64, index: u64, rx: usize, tx: usize, slot: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[index]));
    let link = (3 * (rx - 1) + (tx - 1)) as u64;
    rng.set_stream((link << 32) | slot as u64);
    rng
}

fn check_user(u: usize) {
    assert!((1..=USERS).contains(&u), "user index {u} outside 1..=3");
}

/// One realization: nine `tau x tau` diagonal channel matrices, stored as
/// their diagonals. Users are indexed from 1 as `(rx, tx)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedChannel {
    gains: [[Vec<C64>; USERS]; USERS],
    seed: u64,
    index: u64,
}

impl ExtendedChannel {
    /// Builds a realization from explicit diagonals `gains[rx-1][tx-1]`.
    ///
    /// Entries must be finite; zero entries are accepted here and rejected by
    /// the operations that need to invert the corresponding link.
    pub fn from_diagonals(gains: [[Vec<C64>; USERS]; USERS], seed: u64, index: u64) -> Result<Self> {
        let tau = gains[0][0].len();
        if tau == 0 {
            return Err(Error::InvalidInput("extension length must be positive".into()));
        }
        for row in &gains {
            for d in row {
                if d.len() != tau {
                    return Err(Error::Shape(format!(
                        "link diagonals have lengths {} and {tau}",
                        d.len()
                    )));
                }
                if d.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
                    return Err(Error::InvalidInput("channel entry is not finite".into()));
                }
            }
        }
        Ok(Self { gains, seed, index })
    }

    /// Every link equal to the identity.
    pub fn identity(tau: usize) -> Self {
        let ones = vec![C64::from(1.0); tau];
        Self {
            gains: std::array::from_fn(|_| std::array::from_fn(|_| ones.clone())),
            seed: 0,
            index: 0,
        }
    }

    pub fn tau(&self) -> usize {
        self.gains[0][0].len()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn index(&self) -> u64 {
        self.index
    }

    /// Diagonal of `H[rx][tx]`.
    pub fn gain(&self, rx: usize, tx: usize) -> &[C64] {
        check_user(rx);
        check_user(tx);
        &self.gains[rx - 1][tx - 1]
    }

    pub fn matrix(&self, rx: usize, tx: usize) -> CMat {
        CMat::from_diagonal(&CVec::from_column_slice(self.gain(rx, tx)))
    }

    /// `H[rx][tx] * m`.
    pub fn apply(&self, rx: usize, tx: usize, m: &CMat) -> CMat {
        scale_rows(self.gain(rx, tx), m)
    }

    /// `H[rx][tx]^-1 * m`.
    pub fn apply_inverse(&self, rx: usize, tx: usize, m: &CMat) -> Result<CMat> {
        let inv = self.inverse_diagonal(rx, tx)?;
        Ok(scale_rows(&inv, m))
    }

    fn inverse_diagonal(&self, rx: usize, tx: usize) -> Result<Vec<C64>> {
        self.gain(rx, tx)
            .iter()
            .enumerate()
            .map(|(slot, &h)| {
                if h.norm() == 0.0 {
                    Err(Error::SingularChannel { rx, tx, slot })
                } else {
                    Ok(h.inv())
                }
            })
            .collect()
    }

    /// Copy with `H[rx][tx]` multiplied by `factor`.
    pub fn with_gain_boost(&self, rx: usize, tx: usize, factor: f64) -> Self {
        check_user(rx);
        check_user(tx);
        let mut out = self.clone();
        for h in &mut out.gains[rx - 1][tx - 1] {
            *h *= factor;
        }
        out
    }

    /// Copy restricted to the first `tau` slots.
    pub fn truncated(&self, tau: usize) -> Result<Self> {
        if tau == 0 || tau > self.tau() {
            return Err(Error::InvalidInput(format!(
                "cannot truncate a {}-slot channel to {tau} slots",
                self.tau()
            )));
        }
        let mut out = self.clone();
        for row in &mut out.gains {
            for d in row.iter_mut() {
                d.truncate(tau);
            }
        }
        Ok(out)
    }

    /// One dump record: `seed,index` followed by `re,im` for every entry in
    /// `(rx, tx, slot)` row-major order. Floats use shortest round-trip form.
    pub fn to_dump_record(&self) -> String {
        let mut line = format!("{},{}", self.seed, self.index);
        for row in &self.gains {
            for d in row {
                for z in d {
                    write!(line, ",{:?},{:?}", z.re, z.im).expect("writing to a String");
                }
            }
        }
        line
    }

    pub fn from_dump_record(line: &str) -> Result<Self> {
        let bad = |msg: String| Error::InvalidInput(format!("malformed dump record: {msg}"));
        let fields: Vec<&str> = line.trim().split(',').collect();
        if fields.len() < 2 + 18 || !(fields.len() - 2).is_multiple_of(18) {
            return Err(bad(format!("{} fields", fields.len())));
        }
        let seed = fields[0].parse::<u64>().map_err(|e| bad(e.to_string()))?;
        let index = fields[1].parse::<u64>().map_err(|e| bad(e.to_string()))?;
        let values = fields[2..]
            .iter()
            .map(|f| f.parse::<f64>().map_err(|e| bad(e.to_string())))
            .collect::<Result<Vec<f64>>>()?;
        let tau = values.len() / 18;
        let mut entries = values.chunks_exact(2).map(|p| C64::new(p[0], p[1]));
        let gains = std::array::from_fn(|_| {
            std::array::from_fn(|_| entries.by_ref().take(tau).collect::<Vec<_>>())
        });
        Self::from_diagonals(gains, seed, index)
    }
}

fn scale_rows(d: &[C64], m: &CMat) -> CMat {
    assert_eq!(d.len(), m.nrows(), "diagonal length must match row count");
    let mut out = m.clone();
    for (r, mut row) in out.row_iter_mut().enumerate() {
        row *= d[r];
    }
    out
}

/// Deterministic realization for `(seed, index)`.
pub fn draw_channel(cfg: &ExtensionConfig, gm: &GainModel, seed: u64, index: u64) -> Result<ExtendedChannel> {
    gm.validate()?;
    let tau = cfg.tau();
    let mut gains: [[Vec<C64>; USERS]; USERS] = Default::default();
    for rx in 1..=USERS {
        for tx in 1..=USERS {
            gains[rx - 1][tx - 1] = (0..tau)
                .map(|slot| draw_coefficient(gm, seed, index, rx, tx, slot))
                .collect::<Result<Vec<_>>>()?;
        }
    }
    Ok(ExtendedChannel { gains, seed, index })
}

fn draw_coefficient(gm: &GainModel, seed: u64, index: u64, rx: usize, tx: usize, slot: usize) -> Result<C64> {
    let mut rng = coefficient_rng(seed, index, rx, tx, slot);
    match *gm {
        GainModel::UnboundedGaussian => Ok(standard_complex_normal(&mut rng)),
        GainModel::BoundedMagnitude { h_min, h_max } => {
            for _ in 0..MAX_REJECTIONS {
                let h = standard_complex_normal(&mut rng);
                let mag = h.norm();
                if (h_min..=h_max).contains(&mag) {
                    return Ok(h);
                }
            }
            Err(Error::Config(format!(
                "no coefficient in [{h_min}, {h_max}] after {MAX_REJECTIONS} draws"
            )))
        }
    }
}

/// The diagonal operator
/// `T = H13^-1 H23 H21^-1 H12 H32^-1 H31` whose powers generate the precoders.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentOperator {
    diag: Vec<C64>,
}

impl AlignmentOperator {
    pub fn from_diagonal(diag: Vec<C64>) -> Result<Self> {
        if diag.is_empty() || diag.iter().any(|z| z.norm() == 0.0 || !z.norm().is_finite()) {
            return Err(Error::InvalidInput(
                "alignment operator must have nonzero finite diagonal".into(),
            ));
        }
        Ok(Self { diag })
    }

    pub fn diagonal(&self) -> &[C64] {
        &self.diag
    }

    pub fn tau(&self) -> usize {
        self.diag.len()
    }

    pub fn matrix(&self) -> CMat {
        CMat::from_diagonal(&CVec::from_column_slice(&self.diag))
    }

    pub fn apply(&self, m: &CMat) -> CMat {
        scale_rows(&self.diag, m)
    }

    pub fn apply_inverse(&self, m: &CMat) -> CMat {
        let inv: Vec<C64> = self.diag.iter().map(|z| z.inv()).collect();
        scale_rows(&inv, m)
    }
}

pub fn alignment_operator(ch: &ExtendedChannel) -> Result<AlignmentOperator> {
    let h13 = ch.inverse_diagonal(1, 3)?;
    let h21 = ch.inverse_diagonal(2, 1)?;
    let h32 = ch.inverse_diagonal(3, 2)?;
    let diag = (0..ch.tau())
        .map(|t| h13[t] * ch.gain(2, 3)[t] * h21[t] * ch.gain(1, 2)[t] * h32[t] * ch.gain(3, 1)[t])
        .collect();
    Ok(AlignmentOperator { diag })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag(v: &[(f64, f64)]) -> Vec<C64> {
        v.iter().map(|&(re, im)| C64::new(re, im)).collect()
    }

    #[test]
    fn extension_config_validates() {
        assert!(ExtensionConfig::new(0).is_err());
        let cfg = ExtensionConfig::new(3).unwrap();
        assert_eq!(cfg.tau(), 6);
    }

    #[test]
    fn draw_is_deterministic() {
        let cfg = ExtensionConfig::new(2).unwrap();
        let gm = GainModel::UnboundedGaussian;
        let a = draw_channel(&cfg, &gm, 42, 7).unwrap();
        let b = draw_channel(&cfg, &gm, 42, 7).unwrap();
        let c = draw_channel(&cfg, &gm, 42, 8).unwrap();
        assert_eq!(a.to_dump_record(), b.to_dump_record());
        assert_ne!(a, c);
    }

    #[test]
    fn bounded_model_respects_bounds() {
        let cfg = ExtensionConfig::new(3).unwrap();
        let gm = GainModel::BoundedMagnitude { h_min: 0.1, h_max: 10.0 };
        for index in 0..20 {
            let ch = draw_channel(&cfg, &gm, 5, index).unwrap();
            for rx in 1..=3 {
                for tx in 1..=3 {
                    assert!(ch.gain(rx, tx).iter().all(|h| (0.1..=10.0).contains(&h.norm())));
                }
            }
        }
    }

    #[test]
    fn bounded_model_rejects_inverted_bounds() {
        let cfg = ExtensionConfig::new(1).unwrap();
        let gm = GainModel::BoundedMagnitude { h_min: 2.0, h_max: 1.0 };
        assert!(matches!(draw_channel(&cfg, &gm, 0, 0), Err(Error::Config(_))));
        let gm = GainModel::BoundedMagnitude { h_min: 0.0, h_max: 1.0 };
        assert!(gm.validate().is_err());
    }

    #[test]
    fn unit_variance_moment() {
        // Monte Carlo oracle: |h|^2 ~ Exp(1), so the sample mean of 1e5 draws
        // has standard error 1/sqrt(1e5).
        let draws = 100_000u64;
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mean = (0..draws)
            .map(|_| standard_complex_normal(&mut rng).norm_sqr())
            .sum::<f64>()
            / draws as f64;
        let sigma = 1.0 / (draws as f64).sqrt();
        assert!((mean - 1.0).abs() < 3.0 * sigma, "mean {mean}");
    }

    #[test]
    fn truncation_keeps_leading_slots() {
        let gm = GainModel::UnboundedGaussian;
        let long = draw_channel(&ExtensionConfig::new(3).unwrap(), &gm, 1, 2).unwrap();
        let short = draw_channel(&ExtensionConfig::new(1).unwrap(), &gm, 1, 2).unwrap();
        assert_eq!(long.truncated(2).unwrap(), short);
        assert!(long.truncated(7).is_err());
    }

    #[test]
    fn identity_channels_give_identity_operator() {
        let t = alignment_operator(&ExtendedChannel::identity(4)).unwrap();
        assert!(t.diagonal().iter().all(|&z| z == C64::from(1.0)));
    }

    #[test]
    fn symmetric_cross_links_cancel() {
        let cfg = ExtensionConfig::new(2).unwrap();
        let ch = draw_channel(&cfg, &GainModel::UnboundedGaussian, 3, 0).unwrap();
        let mut gains: [[Vec<C64>; 3]; 3] =
            std::array::from_fn(|r| std::array::from_fn(|c| ch.gain(r + 1, c + 1).to_vec()));
        gains[1][2] = gains[0][2].clone(); // H23 = H13
        gains[0][1] = gains[1][0].clone(); // H12 = H21
        gains[2][0] = gains[2][1].clone(); // H31 = H32
        let sym = ExtendedChannel::from_diagonals(gains, 0, 0).unwrap();
        let t = alignment_operator(&sym).unwrap();
        assert!(t.diagonal().iter().all(|z| (z - C64::from(1.0)).norm() < 1e-12));
    }

    #[test]
    fn explicit_two_slot_operator() {
        // Oracle: the per-slot scalar formula h23*h12*h31 / (h13*h21*h32).
        let one = diag(&[(1.0, 0.0), (1.0, 0.0)]);
        let mut gains: [[Vec<C64>; 3]; 3] = std::array::from_fn(|_| std::array::from_fn(|_| one.clone()));
        gains[0][2] = diag(&[(2.0, 0.0), (0.0, 1.0)]); // H13
        gains[1][2] = diag(&[(1.0, 1.0), (3.0, 0.0)]); // H23
        gains[1][0] = diag(&[(0.5, 0.0), (1.0, -1.0)]); // H21
        gains[0][1] = diag(&[(0.0, 2.0), (1.0, 0.0)]); // H12
        gains[2][1] = diag(&[(4.0, 0.0), (0.0, -2.0)]); // H32
        gains[2][0] = diag(&[(1.0, 0.0), (2.0, 2.0)]); // H31
        let ch = ExtendedChannel::from_diagonals(gains.clone(), 0, 0).unwrap();
        let t = alignment_operator(&ch).unwrap();
        for s in 0..2 {
            let expected = gains[1][2][s] * gains[0][1][s] * gains[2][0][s]
                / (gains[0][2][s] * gains[1][0][s] * gains[2][1][s]);
            assert!((t.diagonal()[s] - expected).norm() < 1e-14);
        }
        // Slot 0: (1+i)(2i)(1) / (2 * 0.5 * 4) = (-2+2i)/4.
        assert!((t.diagonal()[0] - C64::new(-0.5, 0.5)).norm() < 1e-15);
    }

    #[test]
    fn zero_entry_is_singular() {
        let mut gains: [[Vec<C64>; 3]; 3] =
            std::array::from_fn(|_| std::array::from_fn(|_| vec![C64::from(1.0); 2]));
        gains[1][0][1] = C64::from(0.0);
        let ch = ExtendedChannel::from_diagonals(gains, 0, 0).unwrap();
        assert!(matches!(
            alignment_operator(&ch),
            Err(Error::SingularChannel { rx: 2, tx: 1, slot: 1 })
        ));
    }

    #[test]
    fn dump_record_round_trips() {
        let cfg = ExtensionConfig::new(2).unwrap();
        let ch = draw_channel(&cfg, &GainModel::UnboundedGaussian, 11, 4).unwrap();
        let line = ch.to_dump_record();
        assert_eq!(line.split(',').count(), 2 + 9 * 4 * 2);
        assert_eq!(ExtendedChannel::from_dump_record(&line).unwrap(), ch);
        assert!(ExtendedChannel::from_dump_record("1,2,3").is_err());
    }

    #[test]
    fn gain_boost_scales_operator() {
        let cfg = ExtensionConfig::new(2).unwrap();
        let ch = draw_channel(&cfg, &GainModel::UnboundedGaussian, 2, 2).unwrap();
        let t = alignment_operator(&ch).unwrap();
        let tb = alignment_operator(&ch.with_gain_boost(2, 3, 7.5)).unwrap();
        for (a, b) in t.diagonal().iter().zip(tb.diagonal()) {
            assert!((a * 7.5 - b).norm() <= 1e-12 * b.norm());
        }
    }
}
