//! Seedable random-variate primitives and positive-definite matrix helpers.
//!
//! All sampler blocks draw through [`RngStream`], a ChaCha stream addressed
//! by a `(seed, stream id)` pair: identical configuration and call sequence
//! reproduce identical variates, and distinct stream ids give independent
//! streams for concurrent workers.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Beta as BetaDist, Distribution, Gamma as GammaDist, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance for the symmetry check of [`PsdMatrix`].
const SYMMETRY_RTOL: f64 = 1e-10;

/// Deterministic random stream.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha12Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Fresh stream with the same seed and a different stream id, starting
    /// at position zero. Used to hand independent streams to workers.
    pub fn substream(&self, stream_id: u64) -> Self {
        Self::new(self.seed, stream_id)
    }

    /// Current position within the stream, for exact resume.
    pub fn word_pos(&self) -> u128 {
        self.rng.get_word_pos()
    }

    pub fn set_word_pos(&mut self, pos: u128) {
        self.rng.set_word_pos(pos);
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.rng.fill_bytes(dest)
    }
}

/// Symmetric positive-definite matrix, validated on construction.
///
/// Positive definiteness is established by a successful Cholesky
/// factorization; `site` in the error names the update that produced the
/// offending matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsdMatrix {
    dim: usize,
    entries: DMatrix<f64>,
}

impl PsdMatrix {
    pub fn new(entries: DMatrix<f64>, site: &str) -> Result<Self> {
        if entries.nrows() != entries.ncols() {
            return Err(Error::Parameter(format!(
                "{site}: matrix is {}x{}, expected square",
                entries.nrows(),
                entries.ncols()
            )));
        }
        let dim = entries.nrows();
        if dim == 0 {
            // Zero-dimensional block: no continuous covariates.
            return Ok(Self { dim, entries });
        }
        let scale = entries.amax().max(1e-300);
        for i in 0..dim {
            for j in (i + 1)..dim {
                if (entries[(i, j)] - entries[(j, i)]).abs() > SYMMETRY_RTOL * scale {
                    return Err(Error::Parameter(format!(
                        "{site}: matrix is not symmetric at ({i},{j})"
                    )));
                }
            }
        }
        // Store the symmetrized matrix so downstream factorizations see an
        // exactly symmetric input.
        let entries = (&entries + entries.transpose()) * 0.5;
        cholesky(&entries, site)?;
        Ok(Self { dim, entries })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            dim,
            entries: DMatrix::identity(dim, dim),
        }
    }

    /// Zero-dimensional matrix for models without continuous clustering
    /// covariates.
    pub fn empty() -> Self {
        Self {
            dim: 0,
            entries: DMatrix::zeros(0, 0),
        }
    }

    pub fn scaled_identity(dim: usize, scale: f64) -> Result<Self> {
        Self::new(DMatrix::identity(dim, dim) * scale, "scaled_identity")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.entries
    }

    pub fn cholesky(&self, site: &str) -> Result<Cholesky<f64, Dyn>> {
        cholesky(&self.entries, site)
    }
}

/// Cholesky factorization with a single jitter retry.
///
/// Conjugate updates can produce near-singular scatter matrices (duplicated
/// covariate rows); one additive jitter of `1e-10 * trace / dim` is allowed
/// before the matrix is declared non-PD.
pub fn cholesky(m: &DMatrix<f64>, site: &str) -> Result<Cholesky<f64, Dyn>> {
    if let Some(c) = Cholesky::new(m.clone()) {
        return Ok(c);
    }
    let jitter = 1e-10 * m.trace() / m.nrows() as f64;
    if jitter.is_finite() && jitter > 0.0 {
        let mut jittered = m.clone();
        for i in 0..m.nrows() {
            jittered[(i, i)] += jitter;
        }
        if let Some(c) = Cholesky::new(jittered) {
            return Ok(c);
        }
    }
    Err(Error::NotPositiveDefinite { site: site.into() })
}

/// Vector of independent standard normals.
pub fn sample_std_normal_vec(dim: usize, rng: &mut RngStream) -> DVector<f64> {
    DVector::from_fn(dim, |_, _| StandardNormal.sample(rng))
}

/// Draw from N(mean, cov) via the Cholesky factor of `cov`.
pub fn sample_mvn(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    site: &str,
    rng: &mut RngStream,
) -> Result<DVector<f64>> {
    if mean.len() != cov.nrows() {
        return Err(Error::Parameter(format!(
            "{site}: mean has dim {}, covariance has dim {}",
            mean.len(),
            cov.nrows()
        )));
    }
    let chol = cholesky(cov, site)?;
    let z = sample_std_normal_vec(mean.len(), rng);
    Ok(mean + chol.l() * z)
}

/// Draw from N(mean, P^-1) given the Cholesky factorization of the
/// precision matrix P = L L^T: x = mean + L^-T z.
pub fn sample_mvn_from_precision_chol(
    mean: &DVector<f64>,
    prec_chol: &Cholesky<f64, Dyn>,
    rng: &mut RngStream,
) -> DVector<f64> {
    let z = sample_std_normal_vec(mean.len(), rng);
    let x = prec_chol
        .l()
        .tr_solve_lower_triangular(&z)
        .expect("Cholesky factor has positive diagonal");
    mean + x
}

/// Chi-squared draw with (possibly fractional) degrees of freedom.
fn sample_chi2(dof: f64, rng: &mut RngStream) -> Result<f64> {
    sample_gamma(dof / 2.0, 0.5, rng)
}

/// Draw from the inverse-Wishart IW(scale, dof) via the Bartlett
/// decomposition of the corresponding Wishart.
///
/// With scale = L L^T and A the Bartlett lower-triangular factor, the draw
/// is Y^T Y where Y = A^-1 L^T; both factors stay triangular throughout.
pub fn sample_inverse_wishart(
    scale: &PsdMatrix,
    dof: f64,
    site: &str,
    rng: &mut RngStream,
) -> Result<PsdMatrix> {
    let p = scale.dim();
    if p == 0 {
        return Ok(PsdMatrix::empty());
    }
    if !(dof > p as f64 - 1.0) {
        return Err(Error::Parameter(format!(
            "{site}: inverse-Wishart dof {dof} must exceed dim-1 = {}",
            p - 1
        )));
    }
    let l = scale.cholesky(site)?;
    let mut bartlett = DMatrix::<f64>::zeros(p, p);
    for i in 0..p {
        let chi2 = sample_chi2(dof - i as f64, rng)?;
        if chi2 <= 0.0 || !chi2.is_finite() {
            return Err(Error::Numerical(format!(
                "{site}: degenerate chi-squared draw in Bartlett factor"
            )));
        }
        bartlett[(i, i)] = chi2.sqrt();
        for j in 0..i {
            bartlett[(i, j)] = StandardNormal.sample(rng);
        }
    }
    let y = bartlett
        .solve_lower_triangular(&l.l().transpose())
        .ok_or_else(|| Error::Numerical(format!("{site}: singular Bartlett factor")))?;
    let draw = y.transpose() * y;
    PsdMatrix::new(draw, site)
}

/// Gamma draw parameterized by (shape, rate); mean = shape / rate.
pub fn sample_gamma(shape: f64, rate: f64, rng: &mut RngStream) -> Result<f64> {
    if !(shape > 0.0 && shape.is_finite()) || !(rate > 0.0 && rate.is_finite()) {
        return Err(Error::Parameter(format!(
            "gamma(shape={shape}, rate={rate}): parameters must be positive and finite"
        )));
    }
    let dist = GammaDist::new(shape, 1.0 / rate)
        .map_err(|e| Error::Parameter(format!("gamma(shape={shape}, rate={rate}): {e}")))?;
    Ok(dist.sample(rng))
}

/// Beta draw; mean = a / (a + b).
pub fn sample_beta(a: f64, b: f64, rng: &mut RngStream) -> Result<f64> {
    if !(a > 0.0 && a.is_finite()) || !(b > 0.0 && b.is_finite()) {
        return Err(Error::Parameter(format!(
            "beta(a={a}, b={b}): parameters must be positive and finite"
        )));
    }
    let dist = BetaDist::new(a, b)
        .map_err(|e| Error::Parameter(format!("beta(a={a}, b={b}): {e}")))?;
    Ok(dist.sample(rng))
}

/// Dirichlet draw via normalized Gamma variates.
pub fn sample_dirichlet(alpha: &[f64], rng: &mut RngStream) -> Result<Vec<f64>> {
    if alpha.is_empty() {
        return Err(Error::Parameter("dirichlet: empty concentration".into()));
    }
    if let Some(bad) = alpha.iter().find(|a| !(**a > 0.0 && a.is_finite())) {
        return Err(Error::Parameter(format!(
            "dirichlet: concentration entry {bad} must be positive and finite"
        )));
    }
    // A re-draw covers the (measure-zero, underflow-induced) all-zero case.
    for _ in 0..16 {
        let mut draws: Vec<f64> = Vec::with_capacity(alpha.len());
        for &a in alpha {
            draws.push(sample_gamma(a, 1.0, rng)?);
        }
        let total: f64 = draws.iter().sum();
        if total > 0.0 && total.is_finite() {
            for d in &mut draws {
                *d /= total;
            }
            return Ok(draws);
        }
    }
    Err(Error::Numerical(
        "dirichlet: gamma draws underflowed to zero".into(),
    ))
}

/// Categorical index drawn proportionally to nonnegative `weights`.
pub fn sample_categorical(weights: &[f64], rng: &mut RngStream) -> Result<usize> {
    if weights.is_empty() {
        return Err(Error::Parameter("categorical: empty weights".into()));
    }
    let mut total = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        if !(w >= 0.0) || !w.is_finite() {
            return Err(Error::Parameter(format!(
                "categorical: weight {w} at index {i} must be nonnegative and finite"
            )));
        }
        total += w;
    }
    if !(total > 0.0) {
        return Err(Error::Parameter(
            "categorical: weights sum to zero".into(),
        ));
    }
    let u: f64 = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last_positive = i;
            if u < acc {
                return Ok(i);
            }
        }
    }
    // Rounding can leave u marginally above the final accumulator.
    Ok(last_positive)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    const N: usize = 100_000;

    fn rng() -> RngStream {
        RngStream::new(42, 0)
    }

    #[test]
    fn identical_streams_reproduce_sequences() {
        let mut a = RngStream::new(7, 3);
        let mut b = RngStream::new(7, 3);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
        let mut c = RngStream::new(7, 4);
        let first: Vec<u64> = (0..8).map(|_| RngStream::new(7, 3).next_u64()).collect();
        assert!(first.iter().any(|&w| w != c.next_u64()));
    }

    #[test]
    fn substream_is_independent_of_parent_position() {
        let mut a = RngStream::new(11, 0);
        let _ = a.next_u64();
        let mut sub = a.substream(5);
        let mut fresh = RngStream::new(11, 5);
        assert_eq!(sub.next_u64(), fresh.next_u64());
    }

    #[test]
    fn word_pos_roundtrip_resumes_exactly() {
        let mut a = rng();
        for _ in 0..17 {
            let _ = a.next_u64();
        }
        let pos = a.word_pos();
        let upcoming: Vec<u64> = (0..5).map(|_| a.next_u64()).collect();
        let mut b = rng();
        b.set_word_pos(pos);
        let resumed: Vec<u64> = (0..5).map(|_| b.next_u64()).collect();
        assert_eq!(upcoming, resumed);
    }

    #[test]
    fn psd_rejects_asymmetric_and_non_pd() {
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.2, 1.0]);
        assert!(PsdMatrix::new(asym, "test").is_err());
        let zero = DMatrix::from_row_slice(1, 1, &[0.0]);
        assert!(matches!(
            PsdMatrix::new(zero, "degenerate"),
            Err(Error::NotPositiveDefinite { site }) if site == "degenerate"
        ));
        let ok = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        assert!(PsdMatrix::new(ok, "test").is_ok());
    }

    #[test]
    fn mvn_standard_normal_moments() {
        let mut r = rng();
        let mean = DVector::zeros(2);
        let cov = DMatrix::identity(2, 2);
        let mut sum = DVector::zeros(2);
        let mut sum_sq = DVector::zeros(2);
        for _ in 0..N {
            let x = sample_mvn(&mean, &cov, "test", &mut r).unwrap();
            sum += &x;
            sum_sq += x.component_mul(&x);
        }
        let n = N as f64;
        for k in 0..2 {
            let m = sum[k] / n;
            let v = sum_sq[k] / n - m * m;
            // SE(mean) = 1/sqrt(N); SE(var) ~ sqrt(2/N) for a unit normal.
            assert!(m.abs() < 3.0 / n.sqrt(), "mean {m}");
            assert!((v - 1.0).abs() < 3.0 * (2.0 / n).sqrt(), "var {v}");
        }
    }

    #[test]
    fn mvn_degenerate_cov_is_rejected() {
        let mut r = rng();
        let mean = DVector::from_element(1, 5.0);
        let cov = DMatrix::from_row_slice(1, 1, &[0.0]);
        assert!(sample_mvn(&mean, &cov, "test", &mut r).is_err());
    }

    #[test]
    fn mvn_correlated_covariance_recovered() {
        let mut r = rng();
        let mean = DVector::from_row_slice(&[1.0, 2.0]);
        let cov = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let mut s = DVector::zeros(2);
        let mut sxx = DMatrix::zeros(2, 2);
        for _ in 0..N {
            let x = sample_mvn(&mean, &cov, "test", &mut r).unwrap();
            s += &x;
            sxx += &x * x.transpose();
        }
        let n = N as f64;
        let mhat = s / n;
        let chat = sxx / n - &mhat * mhat.transpose();
        for i in 0..2 {
            for j in 0..2 {
                // SE of a sample covariance entry.
                let se = ((cov[(i, i)] * cov[(j, j)] + cov[(i, j)].powi(2)) / n).sqrt();
                assert!(
                    (chat[(i, j)] - cov[(i, j)]).abs() < 3.0 * se,
                    "cov[{i},{j}] = {}",
                    chat[(i, j)]
                );
            }
        }
    }

    #[test]
    fn inverse_wishart_mean_matches_closed_form() {
        let mut r = rng();
        let scale = PsdMatrix::identity(2);
        let dof = 5.0;
        let mut acc = DMatrix::zeros(2, 2);
        for _ in 0..N {
            let w = sample_inverse_wishart(&scale, dof, "test", &mut r).unwrap();
            acc += w.matrix();
        }
        let mean = acc / N as f64;
        // E[IW(I, 5)] = I / (5 - 2 - 1) = 0.5 I. Diagonal entries of a 2x2
        // IW with dof 5 have finite variance; 0.01 is ~5 empirical SEs.
        for i in 0..2 {
            for j in 0..2 {
                let expect = if i == j { 0.5 } else { 0.0 };
                assert!(
                    (mean[(i, j)] - expect).abs() < 0.02,
                    "mean[{i},{j}] = {}",
                    mean[(i, j)]
                );
            }
        }
    }

    #[test]
    fn inverse_wishart_scalar_matches_inverse_gamma() {
        let mut r = rng();
        let scale = PsdMatrix::new(DMatrix::from_row_slice(1, 1, &[4.0]), "test").unwrap();
        let mut acc = 0.0;
        let mut acc_sq = 0.0;
        for _ in 0..N {
            let w = sample_inverse_wishart(&scale, 6.0, "test", &mut r).unwrap();
            acc += w.matrix()[(0, 0)];
            acc_sq += w.matrix()[(0, 0)].powi(2);
        }
        let n = N as f64;
        let mean = acc / n;
        let var = acc_sq / n - mean * mean;
        // IW(4, 6) in 1-D is InvGamma(3, 2): mean 1, variance 1.
        assert!((mean - 1.0).abs() < 3.0 * (var / n).sqrt() + 1e-3, "mean {mean}");
    }

    #[test]
    fn inverse_wishart_draws_are_pd_and_dof_checked() {
        let mut r = rng();
        let scale = PsdMatrix::identity(3);
        assert!(sample_inverse_wishart(&scale, 1.5, "test", &mut r).is_err());
        for _ in 0..100 {
            let w = sample_inverse_wishart(&scale, 4.0, "test", &mut r).unwrap();
            assert!(w.cholesky("test").is_ok());
        }
    }

    #[test]
    fn gamma_moments() {
        let mut r = rng();
        let n = N as f64;
        let mean = |shape: f64, rate: f64, r: &mut RngStream| {
            (0..N).map(|_| sample_gamma(shape, rate, r).unwrap()).sum::<f64>() / n
        };
        let m = mean(2.0, 2.0, &mut r);
        assert!((m - 1.0).abs() < 3.0 * (0.5f64 / n).sqrt(), "{m}");
        let m = mean(3.5, 0.5, &mut r);
        assert!((m - 7.0).abs() < 3.0 * (14.0f64 / n).sqrt(), "{m}");
        let draws: Vec<f64> = (0..N).map(|_| sample_gamma(1.0, 1.0, &mut r).unwrap()).collect();
        let m: f64 = draws.iter().sum::<f64>() / n;
        let v: f64 = draws.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
        assert!((v - 1.0).abs() < 0.05, "exponential variance {v}");
        assert!(sample_gamma(0.0, 1.0, &mut r).is_err());
        assert!(sample_gamma(1.0, -1.0, &mut r).is_err());
    }

    #[test]
    fn beta_moments() {
        let mut r = rng();
        let n = N as f64;
        let draws: Vec<f64> = (0..N).map(|_| sample_beta(1.0, 1.0, &mut r).unwrap()).collect();
        let m: f64 = draws.iter().sum::<f64>() / n;
        assert!((m - 0.5).abs() < 3.0 * (1.0f64 / 12.0 / n).sqrt(), "{m}");
        let m: f64 = (0..N).map(|_| sample_beta(1.0, 9.0, &mut r).unwrap()).sum::<f64>() / n;
        assert!((m - 0.1).abs() < 0.005, "{m}");
        let draws: Vec<f64> = (0..N).map(|_| sample_beta(2.0, 3.0, &mut r).unwrap()).collect();
        let m: f64 = draws.iter().sum::<f64>() / n;
        let v: f64 = draws.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
        // Var Beta(2,3) = 6 / (25 * 6) = 0.04.
        assert!((v - 0.04).abs() < 0.002, "{v}");
        assert!(sample_beta(0.0, 1.0, &mut r).is_err());
    }

    #[test]
    fn dirichlet_mean_and_simplex() {
        let mut r = rng();
        let n = N as f64;
        let mut acc = [0.0; 2];
        for _ in 0..N {
            let d = sample_dirichlet(&[2.0, 6.0], &mut r).unwrap();
            assert_abs_diff_eq!(d.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
            acc[0] += d[0];
            acc[1] += d[1];
        }
        assert!((acc[0] / n - 0.25).abs() < 0.005);
        assert!((acc[1] / n - 0.75).abs() < 0.005);
        for _ in 0..1000 {
            let d = sample_dirichlet(&[10.0, 10.0, 10.0], &mut r).unwrap();
            assert_abs_diff_eq!(d.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        }
        assert!(sample_dirichlet(&[1.0, 0.0], &mut r).is_err());
        assert!(sample_dirichlet(&[], &mut r).is_err());
    }

    #[test]
    fn categorical_frequencies() {
        let mut r = rng();
        for _ in 0..1000 {
            assert_eq!(sample_categorical(&[1.0, 0.0, 0.0], &mut r).unwrap(), 0);
        }
        let mut counts = [0usize; 3];
        for _ in 0..N {
            counts[sample_categorical(&[2.0, 3.0, 5.0], &mut r).unwrap()] += 1;
        }
        let n = N as f64;
        for (k, expect) in [(0usize, 0.2), (1, 0.3), (2, 0.5)] {
            let freq = counts[k] as f64 / n;
            let se = (expect * (1.0 - expect) / n).sqrt();
            assert!((freq - expect).abs() < 3.0 * se, "freq[{k}] = {freq}");
        }
        assert!(sample_categorical(&[0.0, 0.0], &mut r).is_err());
        assert!(sample_categorical(&[1.0, -0.5], &mut r).is_err());
    }
}
