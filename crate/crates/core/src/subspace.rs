//! Canonical covariate reduction.
//!
//! Class means are averaged without weighting to form the grand mean, the
//! between-class scatter `β` is the covariance of the class means and the
//! pooled within-class covariance `Σ` shares one `1/(N-1)` normalizer across
//! classes. Directions are eigenvectors of `Σ⁻¹β`, found through the
//! symmetric whitened problem `L⁻¹ β L⁻ᵀ` with `Σ' = LLᵀ`.
//!
//! Raw Gabor features have `d ≫ N`, so `Σ` is singular in feature space. The
//! fit first projects onto the top `r = N - C` principal components of the
//! training data and adds a ridge proportional to the mean eigenvalue of `Σ`.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-class feature vectors, all of dimension `d`.
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    dim: usize,
    classes: Vec<Vec<Vec<f64>>>,
}

impl LabeledDataset {
    pub fn new(classes: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let dim = classes
            .iter()
            .flatten()
            .map(Vec::len)
            .next()
            .ok_or_else(|| Error::InvalidTrainSet("no samples".into()))?;
        for (c, samples) in classes.iter().enumerate() {
            if samples.is_empty() {
                return Err(Error::EmptyClass(c));
            }
            for s in samples {
                if s.len() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        got: s.len(),
                    });
                }
            }
        }
        Ok(Self { dim, classes })
    }

    /// Group samples by integer label `0..C`.
    pub fn from_labeled(samples: Vec<Vec<f64>>, labels: &[usize]) -> Result<Self> {
        if samples.len() != labels.len() {
            return Err(Error::InvalidTrainSet(format!(
                "{} samples, {} labels",
                samples.len(),
                labels.len()
            )));
        }
        let c = labels.iter().max().map_or(0, |m| m + 1);
        let mut classes = vec![Vec::new(); c];
        for (s, &l) in samples.into_iter().zip(labels) {
            classes[l].push(s);
        }
        Self::new(classes)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn num_samples(&self) -> usize {
        self.classes.iter().map(Vec::len).sum()
    }

    pub fn classes(&self) -> &[Vec<Vec<f64>>] {
        &self.classes
    }

    pub fn class_sizes(&self) -> Vec<usize> {
        self.classes.iter().map(Vec::len).collect()
    }
}

#[derive(Debug, Clone)]
pub struct ClassStats {
    pub class_means: Vec<DVector<f64>>,
    /// Unweighted mean of the class means.
    pub grand_mean: DVector<f64>,
}

pub fn class_stats(data: &LabeledDataset) -> Result<ClassStats> {
    let mut class_means = Vec::with_capacity(data.num_classes());
    for (c, samples) in data.classes().iter().enumerate() {
        if samples.is_empty() {
            return Err(Error::EmptyClass(c));
        }
        let mut mean = DVector::zeros(data.dim());
        for s in samples {
            mean += DVector::from_column_slice(s);
        }
        mean /= samples.len() as f64;
        class_means.push(mean);
    }
    let mut grand_mean = DVector::zeros(data.dim());
    for m in &class_means {
        grand_mean += m;
    }
    grand_mean /= class_means.len() as f64;
    Ok(ClassStats {
        class_means,
        grand_mean,
    })
}

/// `β = 1/(C-1) Σ_j (μ_j - μ̄)(μ_j - μ̄)ᵀ`.
pub fn between_scatter(class_means: &[DVector<f64>], grand_mean: &DVector<f64>) -> Result<DMatrix<f64>> {
    let c = class_means.len();
    if c < 2 {
        return Err(Error::SingleClass);
    }
    let d = grand_mean.len();
    let mut beta = DMatrix::zeros(d, d);
    for m in class_means {
        let dev = m - grand_mean;
        beta.ger(1.0, &dev, &dev, 1.0);
    }
    beta /= (c - 1) as f64;
    Ok(beta)
}

/// `Σ = 1/(N-1) Σ_s Σ_i (g_si - μ_s)(g_si - μ_s)ᵀ`.
pub fn pooled_covariance(data: &LabeledDataset, class_means: &[DVector<f64>]) -> Result<DMatrix<f64>> {
    let n = data.num_samples();
    if n < 2 {
        return Err(Error::InvalidTrainSet("pooled covariance needs N >= 2".into()));
    }
    if class_means.len() != data.num_classes() {
        return Err(Error::InvalidTrainSet(format!(
            "{} class means for {} classes",
            class_means.len(),
            data.num_classes()
        )));
    }
    let d = data.dim();
    let mut sigma = DMatrix::zeros(d, d);
    for (samples, mean) in data.classes().iter().zip(class_means) {
        for s in samples {
            let dev = DVector::from_column_slice(s) - mean;
            sigma.ger(1.0, &dev, &dev, 1.0);
        }
    }
    sigma /= (n - 1) as f64;
    Ok(sigma)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitParams {
    /// Output dimension; `None` means `C - 1`.
    pub k: Option<usize>,
    /// PCA rank; `None` means `N - C` (capped at `d`).
    pub r: Option<usize>,
    /// Ridge relative to the mean eigenvalue of `Σ`.
    pub eps: f64,
}

impl Default for FitParams {
    fn default() -> Self {
        Self {
            k: None,
            r: None,
            eps: 1e-4,
        }
    }
}

/// PCA basis followed by the canonical eigenbasis.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalProjection {
    pca_mean: DVector<f64>,
    pca_basis: DMatrix<f64>,
    canon_basis: DMatrix<f64>,
    eigenvalues: Vec<f64>,
    eps: f64,
    // pca_basis * canon_basis, d x k
    combined: DMatrix<f64>,
}

// Relative eigenvalue floor below which principal components are dropped.
const PCA_RANK_TOL: f64 = 1e-10;

fn sign_fix_by_largest(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v.get(best).is_some_and(|x| *x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

fn descending_order(values: &DVector<f64>) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    order
}

/// Top principal directions of the centered rows of `x` (n x d), as a d x r
/// orthonormal basis. Column signs make each component's largest-magnitude
/// training score positive.
fn principal_basis(centered: &DMatrix<f64>, r: usize) -> Result<DMatrix<f64>> {
    let (n, d) = centered.shape();
    let mut basis = if d <= n {
        let cov = centered.transpose() * centered;
        let eig = SymmetricEigen::new(cov);
        let order = descending_order(&eig.eigenvalues);
        let floor = PCA_RANK_TOL * eig.eigenvalues[order[0]].max(0.0);
        let keep: Vec<usize> = order
            .into_iter()
            .take(r)
            .take_while(|&i| eig.eigenvalues[i] > floor)
            .collect();
        DMatrix::from_fn(d, keep.len(), |row, col| eig.eigenvectors[(row, keep[col])])
    } else {
        let gram = centered * centered.transpose();
        let eig = SymmetricEigen::new(gram);
        let order = descending_order(&eig.eigenvalues);
        let floor = PCA_RANK_TOL * eig.eigenvalues[order[0]].max(0.0);
        let keep: Vec<usize> = order
            .into_iter()
            .take(r)
            .take_while(|&i| eig.eigenvalues[i] > floor)
            .collect();
        let mut basis = DMatrix::zeros(d, keep.len());
        for (col, &i) in keep.iter().enumerate() {
            let u = eig.eigenvectors.column(i);
            let v = centered.transpose() * u / eig.eigenvalues[i].sqrt();
            basis.set_column(col, &v);
        }
        basis
    };
    // modified Gram-Schmidt to clean up the small components
    for j in 0..basis.ncols() {
        for i in 0..j {
            let proj = basis.column(i).dot(&basis.column(j));
            let ci = basis.column(i).clone_owned();
            basis.column_mut(j).axpy(-proj, &ci, 1.0);
        }
        let norm = basis.column(j).norm();
        if norm < 1e-12 {
            return Err(Error::Numerical("principal basis lost rank".into()));
        }
        basis.column_mut(j).scale_mut(1.0 / norm);
    }
    for j in 0..basis.ncols() {
        let mut scores: Vec<f64> = (centered * basis.column(j)).iter().copied().collect();
        let before = scores.clone();
        sign_fix_by_largest(&mut scores);
        if scores != before {
            basis.column_mut(j).neg_mut();
        }
    }
    Ok(basis)
}

/// Fitted pieces of the whitened generalized eigenproblem, exposed for checks.
#[derive(Debug, Clone)]
pub struct GeneralizedEigen {
    /// Descending, clamped at zero.
    pub eigenvalues: Vec<f64>,
    /// Unit-length eigenvectors as columns, same order.
    pub eigenvectors: DMatrix<f64>,
    /// Regularized within-class matrix the problem was solved against.
    pub sigma_reg: DMatrix<f64>,
}

/// Solve `β v = λ Σ' v` with `Σ' = Σ + eps·(tr Σ / r)·I` by Cholesky whitening.
pub fn canonical_eigen(beta: &DMatrix<f64>, sigma: &DMatrix<f64>, eps: f64) -> Result<GeneralizedEigen> {
    let r = sigma.nrows();
    if beta.shape() != sigma.shape() || r != sigma.ncols() {
        return Err(Error::DimensionMismatch {
            expected: r,
            got: beta.nrows(),
        });
    }
    let mean_eig = sigma.trace() / r as f64;
    let ridge = if mean_eig > 0.0 { eps * mean_eig } else { eps };
    let mut sigma_reg = sigma.clone();
    for i in 0..r {
        sigma_reg[(i, i)] += ridge;
    }
    let sigma_reg = (&sigma_reg + sigma_reg.transpose()) * 0.5;
    let chol = sigma_reg
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("regularized within-class matrix is not positive definite".into()))?;
    let l = chol.l();
    let a = l
        .solve_lower_triangular(beta)
        .ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;
    let m = l
        .solve_lower_triangular(&a.transpose())
        .ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;
    let m = (&m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(m);
    let order = descending_order(&eig.eigenvalues);
    let lt = l.transpose();
    let mut vectors = DMatrix::zeros(r, r);
    let mut values = Vec::with_capacity(r);
    for (col, &i) in order.iter().enumerate() {
        let w = eig.eigenvectors.column(i).clone_owned();
        let mut v = lt
            .solve_upper_triangular(&w)
            .ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;
        v.normalize_mut();
        sign_fix_by_largest(v.as_mut_slice());
        vectors.set_column(col, &v);
        values.push(eig.eigenvalues[i].max(0.0));
    }
    Ok(GeneralizedEigen {
        eigenvalues: values,
        eigenvectors: vectors,
        sigma_reg,
    })
}

/// Fit the PCA + canonical covariate projection on labeled training features.
pub fn fit(data: &LabeledDataset, params: &FitParams) -> Result<CanonicalProjection> {
    let c = data.num_classes();
    let n = data.num_samples();
    let d = data.dim();
    if c < 2 {
        return Err(Error::SingleClass);
    }
    let k = params.k.unwrap_or(c - 1);
    if k > c - 1 {
        return Err(Error::TargetTooLarge {
            requested: k,
            max: c - 1,
        });
    }
    if k == 0 {
        return Err(Error::Config("target dimension must be >= 1".into()));
    }
    let r_max = (n - 1).min(d);
    let r = match params.r {
        Some(r) if r > r_max || r == 0 => {
            return Err(Error::RankDeficient {
                requested: r,
                max: r_max,
            })
        }
        Some(r) => r,
        None => (n - c).min(d).max(1),
    };
    if !(params.eps >= 0.0) {
        return Err(Error::Config(format!("ridge eps {} must be >= 0", params.eps)));
    }

    let samples: Vec<&Vec<f64>> = data.classes().iter().flatten().collect();
    let mut pca_mean = DVector::zeros(d);
    for s in &samples {
        pca_mean += DVector::from_column_slice(s);
    }
    pca_mean /= n as f64;
    let centered = DMatrix::from_fn(n, d, |i, j| samples[i][j] - pca_mean[j]);
    let pca_basis = principal_basis(&centered, r)?;
    let r = pca_basis.ncols();

    let scores = &centered * &pca_basis;
    let mut reduced = Vec::with_capacity(c);
    let mut row = 0;
    for class in data.classes() {
        let mut members = Vec::with_capacity(class.len());
        for _ in class {
            members.push(scores.row(row).iter().copied().collect::<Vec<f64>>());
            row += 1;
        }
        reduced.push(members);
    }
    let reduced = LabeledDataset::new(reduced)?;
    let stats = class_stats(&reduced)?;
    let beta = between_scatter(&stats.class_means, &stats.grand_mean)?;
    let sigma = pooled_covariance(&reduced, &stats.class_means)?;
    let eig = canonical_eigen(&beta, &sigma, params.eps)?;

    let k = k.min(r);
    let canon_basis = eig.eigenvectors.columns(0, k).clone_owned();
    let eigenvalues = eig.eigenvalues[..k].to_vec();
    Ok(CanonicalProjection::from_parts(
        pca_mean,
        pca_basis,
        canon_basis,
        eigenvalues,
        params.eps,
    ))
}

#[derive(Debug, Serialize, Deserialize)]
struct ProjectionHeader {
    d: usize,
    r: usize,
    k: usize,
    eps: f64,
    eigenvalues: Vec<f64>,
}

pub(crate) fn write_f64s<W: Write>(w: &mut W, values: &[f64]) -> Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub(crate) fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; n * 8];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
        .collect())
}

pub(crate) fn write_json_header<W: Write, T: Serialize>(w: &mut W, header: &T) -> Result<()> {
    let json = serde_json::to_vec(header)?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    Ok(())
}

pub(crate) fn read_json_header<R: Read, T: for<'de> Deserialize<'de>>(r: &mut R) -> Result<T> {
    let mut len = [0u8; 8];
    r.read_exact(&mut len)?;
    let len = u64::from_le_bytes(len) as usize;
    if len > 1 << 30 {
        return Err(Error::CorruptFile(format!("header length {len}")));
    }
    let mut json = vec![0u8; len];
    r.read_exact(&mut json)?;
    Ok(serde_json::from_slice(&json)?)
}

impl CanonicalProjection {
    pub fn from_parts(
        pca_mean: DVector<f64>,
        pca_basis: DMatrix<f64>,
        canon_basis: DMatrix<f64>,
        eigenvalues: Vec<f64>,
        eps: f64,
    ) -> Self {
        let combined = &pca_basis * &canon_basis;
        Self {
            pca_mean,
            pca_basis,
            canon_basis,
            eigenvalues,
            eps,
            combined,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.pca_mean.len()
    }

    pub fn pca_rank(&self) -> usize {
        self.pca_basis.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.canon_basis.ncols()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn pca_mean(&self) -> &DVector<f64> {
        &self.pca_mean
    }

    pub fn pca_basis(&self) -> &DMatrix<f64> {
        &self.pca_basis
    }

    pub fn canon_basis(&self) -> &DMatrix<f64> {
        &self.canon_basis
    }

    /// Canonical directions expressed in input feature space (d x k).
    pub fn directions(&self) -> &DMatrix<f64> {
        &self.combined
    }

    /// `y = canon_basisᵀ · pca_basisᵀ · (x - pca_mean)`.
    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        let mut y = vec![0.0; self.output_dim()];
        for (j, out) in y.iter_mut().enumerate() {
            let col = self.combined.column(j);
            *out = col
                .iter()
                .zip(x)
                .zip(self.pca_mean.iter())
                .map(|((w, xi), m)| w * (xi - m))
                .sum();
        }
        Ok(y)
    }

    /// JSON header `{d, r, k, eps, eigenvalues}` then little-endian f64 blocks
    /// for `pca_mean`, `pca_basis` and `canon_basis` (column-major).
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        write_json_header(
            w,
            &ProjectionHeader {
                d: self.input_dim(),
                r: self.pca_rank(),
                k: self.output_dim(),
                eps: self.eps,
                eigenvalues: self.eigenvalues.clone(),
            },
        )?;
        write_f64s(w, self.pca_mean.as_slice())?;
        write_f64s(w, self.pca_basis.as_slice())?;
        write_f64s(w, self.canon_basis.as_slice())?;
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let h: ProjectionHeader = read_json_header(r)?;
        if h.eigenvalues.len() != h.k || h.k > h.r || h.r > h.d {
            return Err(Error::CorruptFile(format!(
                "projection header d={} r={} k={} with {} eigenvalues",
                h.d,
                h.r,
                h.k,
                h.eigenvalues.len()
            )));
        }
        let mean = DVector::from_vec(read_f64s(r, h.d)?);
        let basis = DMatrix::from_vec(h.d, h.r, read_f64s(r, h.d * h.r)?);
        let canon = DMatrix::from_vec(h.r, h.k, read_f64s(r, h.r * h.k)?);
        Ok(Self::from_parts(mean, basis, canon, h.eigenvalues, h.eps))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn grand_mean_of_two_means() {
        let data = LabeledDataset::new(vec![vec![vec![0.0, 0.0]], vec![vec![2.0, 2.0]]]).unwrap();
        let s = class_stats(&data).unwrap();
        assert_eq!(s.grand_mean, v(&[1.0, 1.0]));
    }

    #[test]
    fn grand_mean_ignores_class_sizes() {
        let mut big = vec![vec![2.0]; 49];
        big.extend(vec![vec![4.0]; 49]);
        big.push(vec![3.0]);
        let data = LabeledDataset::new(vec![vec![vec![3.0]], big]).unwrap();
        let s = class_stats(&data).unwrap();
        assert_eq!(data.class_sizes(), vec![1, 99]);
        assert!((s.grand_mean[0] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn single_sample_class() {
        let data = LabeledDataset::new(vec![vec![vec![4.0, -1.0]]]).unwrap();
        let s = class_stats(&data).unwrap();
        assert_eq!(s.class_means[0], v(&[4.0, -1.0]));
        assert_eq!(s.grand_mean, v(&[4.0, -1.0]));
    }

    #[test]
    fn empty_class_rejected() {
        assert!(matches!(
            LabeledDataset::new(vec![vec![vec![1.0]], vec![]]),
            Err(Error::EmptyClass(1))
        ));
    }

    // Direct double-sum scatter, independent of the ger-based path.
    fn beta_oracle(means: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let c = means.len();
        let d = means[0].len();
        let bar: Vec<f64> = (0..d).map(|j| means.iter().map(|m| m[j]).sum::<f64>() / c as f64).collect();
        let mut out = vec![vec![0.0; d]; d];
        for m in means {
            for a in 0..d {
                for b in 0..d {
                    out[a][b] += (m[a] - bar[a]) * (m[b] - bar[b]) / (c - 1) as f64;
                }
            }
        }
        out
    }

    #[test]
    fn between_scatter_two_means() {
        let beta = between_scatter(&[v(&[0.0, 0.0]), v(&[2.0, 2.0])], &v(&[1.0, 1.0])).unwrap();
        let oracle = beta_oracle(&[vec![0.0, 0.0], vec![2.0, 2.0]]);
        for a in 0..2 {
            for b in 0..2 {
                assert!((beta[(a, b)] - 2.0).abs() < 1e-15);
                assert!((beta[(a, b)] - oracle[a][b]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn between_scatter_equal_means_is_zero() {
        let m = v(&[1.0, 2.0, 3.0]);
        let beta = between_scatter(&[m.clone(), m.clone(), m.clone()], &m).unwrap();
        assert!(beta.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn between_scatter_collinear_rank_one() {
        let means = [v(&[0.0, 0.0, 0.0]), v(&[1.0, 2.0, -1.0]), v(&[3.0, 6.0, -3.0])];
        let bar = (&means[0] + &means[1] + &means[2]) / 3.0;
        let beta = between_scatter(&means, &bar).unwrap();
        let ev = SymmetricEigen::new(beta).eigenvalues;
        let nonzero = ev.iter().filter(|x| x.abs() > 1e-10).count();
        assert_eq!(nonzero, 1);
    }

    #[test]
    fn single_class_between_scatter() {
        assert!(matches!(between_scatter(&[v(&[1.0])], &v(&[1.0])), Err(Error::SingleClass)));
    }

    #[test]
    fn pooled_covariance_hand_example() {
        let data = LabeledDataset::new(vec![
            vec![vec![0.0, 0.0], vec![2.0, 0.0]],
            vec![vec![0.0, 2.0], vec![2.0, 2.0]],
        ])
        .unwrap();
        let s = class_stats(&data).unwrap();
        let sigma = pooled_covariance(&data, &s.class_means).unwrap();
        assert!((sigma[(0, 0)] - 4.0 / 3.0).abs() < 1e-15);
        assert_eq!(sigma[(0, 1)], 0.0);
        assert_eq!(sigma[(1, 1)], 0.0);
    }

    #[test]
    fn pooled_covariance_zero_deviation() {
        let data = LabeledDataset::new(vec![vec![vec![1.0, 1.0]; 3], vec![vec![5.0, 0.0]; 2]]).unwrap();
        let s = class_stats(&data).unwrap();
        assert!(pooled_covariance(&data, &s.class_means).unwrap().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn pooled_covariance_one_dimensional() {
        let data = LabeledDataset::new(vec![vec![vec![0.0], vec![2.0]]]).unwrap();
        let s = class_stats(&data).unwrap();
        assert_eq!(pooled_covariance(&data, &s.class_means).unwrap()[(0, 0)], 2.0);
    }

    fn gaussian_classes(rng: &mut ChaCha8Rng, means: &[Vec<f64>], per_class: usize) -> LabeledDataset {
        let classes = means
            .iter()
            .map(|m| {
                (0..per_class)
                    .map(|_| m.iter().map(|c| c + rng.sample::<f64, _>(StandardNormal)).collect())
                    .collect()
            })
            .collect();
        LabeledDataset::new(classes).unwrap()
    }

    #[test]
    fn isotropic_two_class_direction() {
        // Symmetric design with pooled Σ = I exactly: 8 samples, deviations ±a on each axis, 4a²/7 = 1.
        let a = (7.0f64 / 4.0).sqrt();
        let offsets = [(a, 0.0), (-a, 0.0), (0.0, a), (0.0, -a)];
        let classes: Vec<Vec<Vec<f64>>> = [(0.0, 0.0), (2.0, 0.0)]
            .iter()
            .map(|(mx, my)| offsets.iter().map(|(dx, dy)| vec![mx + dx, my + dy]).collect())
            .collect();
        let data = LabeledDataset::new(classes).unwrap();
        let p = fit(&data, &FitParams { eps: 0.0, ..Default::default() }).unwrap();
        let dir = p.directions().column(0);
        assert!(dir[1].abs() < 1e-9, "{dir}");
        assert!((dir[0].abs() - 1.0).abs() < 1e-9);
        // β = [[2,0],[0,0]] and Σ = I, so the leading eigenvalue is 2
        let s = class_stats(&data).unwrap();
        let sigma = pooled_covariance(&data, &s.class_means).unwrap();
        assert!((sigma - DMatrix::<f64>::identity(2, 2)).amax() < 1e-12);
        assert!((p.eigenvalues()[0] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn eigenvalue_count_bounded_by_classes() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let means: Vec<Vec<f64>> = (0..3).map(|i| vec![i as f64 * 2.0, 0.0, 1.0, -(i as f64), 0.5]).collect();
        let data = gaussian_classes(&mut rng, &means, 8);
        let s = class_stats(&data).unwrap();
        let beta = between_scatter(&s.class_means, &s.grand_mean).unwrap();
        let sigma = pooled_covariance(&data, &s.class_means).unwrap();
        let eig = canonical_eigen(&beta, &sigma, 1e-4).unwrap();
        assert!(eig.eigenvalues.iter().filter(|&&l| l > 1e-8).count() <= 2);
    }

    #[test]
    fn duplicated_feature_survives() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let classes: Vec<Vec<Vec<f64>>> = (0..3)
            .map(|c| {
                (0..5)
                    .map(|_| {
                        let a = c as f64 + rng.random_range(-0.5..0.5);
                        let b = rng.random_range(-1.0..1.0);
                        vec![a, a, b]
                    })
                    .collect()
            })
            .collect();
        let data = LabeledDataset::new(classes).unwrap();
        let p = fit(&data, &FitParams::default()).unwrap();
        assert_eq!(p.output_dim(), 2);
    }

    #[test]
    fn target_too_large_and_rank_checks() {
        let data = LabeledDataset::new(vec![vec![vec![0.0, 1.0], vec![1.0, 0.0]], vec![vec![3.0, 3.0], vec![4.0, 2.0]]]).unwrap();
        assert!(matches!(
            fit(&data, &FitParams { k: Some(2), ..Default::default() }),
            Err(Error::TargetTooLarge { .. })
        ));
        assert!(matches!(
            fit(&data, &FitParams { r: Some(4), ..Default::default() }),
            Err(Error::RankDeficient { .. })
        ));
    }

    #[test]
    fn projection_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let means = vec![vec![0.0, 0.0, 0.0, 0.0], vec![4.0, 1.0, 0.0, -1.0]];
        let data = gaussian_classes(&mut rng, &means, 10);
        let p = fit(&data, &FitParams::default()).unwrap();
        // centering
        let y0 = p.project(p.pca_mean().as_slice()).unwrap();
        assert!(y0.iter().all(|v| v.abs() < 1e-12));
        // affine about the mean
        let x = &data.classes()[0][0];
        let a = 2.5;
        let mixed: Vec<f64> = x.iter().zip(p.pca_mean().iter()).map(|(xi, m)| a * xi + (1.0 - a) * m).collect();
        let (yx, ym) = (p.project(x).unwrap(), p.project(&mixed).unwrap());
        assert!((ym[0] - a * yx[0]).abs() < 1e-9);
        // training classes separate on the leading axis
        let proj = |c: usize| -> Vec<f64> { data.classes()[c].iter().map(|x| p.project(x).unwrap()[0]).collect() };
        let (p0, p1) = (proj(0), proj(1));
        let (lo0, hi0) = (p0.iter().cloned().fold(f64::MAX, f64::min), p0.iter().cloned().fold(f64::MIN, f64::max));
        let (lo1, hi1) = (p1.iter().cloned().fold(f64::MAX, f64::min), p1.iter().cloned().fold(f64::MIN, f64::max));
        assert!(hi0 < lo1 || hi1 < lo0);
        assert!(matches!(p.project(&[1.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn pca_basis_orthonormal_wide_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let means: Vec<Vec<f64>> = (0..4).map(|c| (0..60).map(|j| ((c * 7 + j) % 5) as f64).collect()).collect();
        let data = gaussian_classes(&mut rng, &means, 4);
        let p = fit(&data, &FitParams::default()).unwrap();
        assert_eq!(p.pca_rank(), 12);
        let gram = p.pca_basis().transpose() * p.pca_basis();
        assert!((gram - DMatrix::identity(12, 12)).amax() < 1e-8);
        assert!(p.eigenvalues().windows(2).all(|w| w[0] >= w[1]));
        assert!(p.eigenvalues().iter().all(|&l| l >= 0.0));
    }

    #[test]
    fn persistence_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let means: Vec<Vec<f64>> = (0..3).map(|c| (0..7).map(|j| (c + j) as f64).collect()).collect();
        let data = gaussian_classes(&mut rng, &means, 5);
        let p = fit(&data, &FitParams::default()).unwrap();
        let mut buf = Vec::new();
        p.write_to(&mut buf).unwrap();
        let q = CanonicalProjection::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(p, q);
    }

    fn permuted_projections(seed: u64, d: usize, per_class: usize) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let means: Vec<Vec<f64>> = (0..3).map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        let data = gaussian_classes(&mut rng, &means, per_class);
        let mut perm: Vec<usize> = (0..d).collect();
        for i in (1..d).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let permute = |x: &Vec<f64>| -> Vec<f64> { perm.iter().map(|&j| x[j]).collect() };
        let permuted = LabeledDataset::new(
            data.classes().iter().map(|c| c.iter().map(permute).collect()).collect(),
        )
        .unwrap();
        let p = fit(&data, &FitParams::default()).unwrap();
        let q = fit(&permuted, &FitParams::default()).unwrap();
        let probes: Vec<Vec<f64>> = (0..5).map(|_| (0..d).map(|_| rng.random_range(-3.0..3.0)).collect()).collect();
        let a = probes.iter().map(|x| p.project(x).unwrap()).collect();
        let b = probes.iter().map(|x| q.project(&permute(x)).unwrap()).collect();
        (a, b)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn scatter_matrices_symmetric_psd(seed in 0u64..10_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let means: Vec<Vec<f64>> = (0..4).map(|_| (0..5).map(|_| rng.random_range(-3.0..3.0)).collect()).collect();
            let data = gaussian_classes(&mut rng, &means, 3);
            let s = class_stats(&data).unwrap();
            let beta = between_scatter(&s.class_means, &s.grand_mean).unwrap();
            let sigma = pooled_covariance(&data, &s.class_means).unwrap();
            prop_assert!((&beta - beta.transpose()).amax() < 1e-10);
            prop_assert!((&sigma - sigma.transpose()).amax() < 1e-10);
            let eig = canonical_eigen(&beta, &sigma, 1e-4).unwrap();
            let reg_min = SymmetricEigen::new(eig.sigma_reg.clone()).eigenvalues.min();
            prop_assert!(reg_min > 0.0);
            // retained pairs: the top C - 1
            for (i, &lambda) in eig.eigenvalues.iter().enumerate().take(3) {
                let vcol = eig.eigenvectors.column(i);
                let lhs = &beta * vcol;
                let rhs = &eig.sigma_reg * vcol * lambda;
                prop_assert!((&lhs - &rhs).norm() <= 1e-6 * lhs.norm().max(rhs.norm()));
            }
        }

        #[test]
        fn permutation_invariant_wide(seed in 0u64..10_000) {
            let (a, b) = permuted_projections(seed, 30, 4);
            for (ya, yb) in a.iter().zip(&b) {
                for (u, w) in ya.iter().zip(yb) {
                    prop_assert!((u - w).abs() < 1e-8, "{} vs {}", u, w);
                }
            }
        }

        #[test]
        fn permutation_invariant_tall(seed in 0u64..10_000) {
            let (a, b) = permuted_projections(seed, 4, 10);
            for (ya, yb) in a.iter().zip(&b) {
                for (u, w) in ya.iter().zip(yb) {
                    prop_assert!((u - w).abs() < 1e-8, "{} vs {}", u, w);
                }
            }
        }
    }
}
