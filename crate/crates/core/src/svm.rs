//! Binary soft-margin SVM trained by SMO.
//!
//! The solver follows the libsvm formulation: it minimizes
//! `½ αᵀQα - eᵀα` with `Q_ij = y_i y_j K(x_i, x_j)` subject to
//! `0 ≤ α_i ≤ C` and `yᵀα = 0`, picking the first index by maximal violation
//! and the second by the second-order gain.

use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::subspace::{read_f64s, read_json_header, write_f64s, write_json_header};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum KernelSpec {
    Linear,
    Rbf { sigma: f64 },
    Polynomial { degree: u32 },
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Rbf { sigma } if !(sigma > 0.0 && sigma.is_finite()) => {
                Err(Error::InvalidSvmKernel(format!("rbf sigma {sigma}")))
            }
            KernelSpec::Polynomial { degree: 0 } => {
                Err(Error::InvalidSvmKernel("polynomial degree 0".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn is_linear(&self) -> bool {
        matches!(self, KernelSpec::Linear)
    }

    #[inline]
    fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        match *self {
            KernelSpec::Linear => dot(x, y),
            KernelSpec::Rbf { sigma } => {
                let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                (-d2 / (2.0 * sigma * sigma)).exp()
            }
            KernelSpec::Polynomial { degree } => (dot(x, y) + 1.0).powi(degree as i32),
        }
    }
}

#[inline]
fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// `x·y`, `exp(-‖x-y‖²/(2σ²))` or `(x·y + 1)^n`.
pub fn kernel_eval(spec: &KernelSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    spec.validate()?;
    Ok(spec.eval_unchecked(x, y))
}

pub fn gram_matrix(spec: &KernelSpec, points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut k = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let v = spec.eval_unchecked(&points[i], &points[j]);
            k[i][j] = v;
            k[j][i] = v;
        }
    }
    k
}

/// Points with ±1 labels.
#[derive(Debug, Clone)]
pub struct TrainSet {
    points: Vec<Vec<f64>>,
    labels: Vec<f64>,
}

impl TrainSet {
    pub fn new(points: Vec<Vec<f64>>, labels: Vec<f64>) -> Result<Self> {
        if points.len() != labels.len() {
            return Err(Error::InvalidTrainSet(format!(
                "{} points, {} labels",
                points.len(),
                labels.len()
            )));
        }
        if let Some(l) = labels.iter().find(|&&l| l != 1.0 && l != -1.0) {
            return Err(Error::InvalidTrainSet(format!("label {l} not in {{-1, +1}}")));
        }
        if let Some(first) = points.first() {
            let d = first.len();
            if let Some(p) = points.iter().find(|p| p.len() != d) {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: p.len(),
                });
            }
        }
        Ok(Self { points, labels })
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.first().map_or(0, Vec::len)
    }

    fn subset(&self, idx: &[usize]) -> TrainSet {
        TrainSet {
            points: idx.iter().map(|&i| self.points[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    pub c: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self {
            c: 10.0,
            tol: 1e-3,
            max_iter: 1_000_000,
        }
    }
}

/// Full dual solution over every training point.
#[derive(Debug, Clone)]
pub struct DualSolution {
    pub alphas: Vec<f64>,
    pub bias: f64,
    /// `Σα - ½ ΣΣ α_i α_j y_i y_j K_ij`.
    pub dual_objective: f64,
    pub iterations: usize,
}

const TAU: f64 = 1e-12;

struct Smo<'a> {
    labels: &'a [f64],
    gram: Vec<Vec<f64>>,
    c: f64,
    alpha: Vec<f64>,
    grad: Vec<f64>,
}

impl Smo<'_> {
    fn q(&self, i: usize, j: usize) -> f64 {
        self.labels[i] * self.labels[j] * self.gram[i][j]
    }

    fn in_up(&self, t: usize) -> bool {
        if self.labels[t] > 0.0 {
            self.alpha[t] < self.c
        } else {
            self.alpha[t] > 0.0
        }
    }

    fn in_low(&self, t: usize) -> bool {
        if self.labels[t] > 0.0 {
            self.alpha[t] > 0.0
        } else {
            self.alpha[t] < self.c
        }
    }

    /// Returns the pair to optimize, or `None` once the maximal violation is
    /// within `tol`.
    fn select(&self, tol: f64) -> Option<(usize, usize)> {
        let n = self.alpha.len();
        let mut gmax = f64::NEG_INFINITY;
        let mut i = None;
        for t in 0..n {
            if self.in_up(t) {
                let v = -self.labels[t] * self.grad[t];
                if v >= gmax {
                    gmax = v;
                    i = Some(t);
                }
            }
        }
        let i = i?;
        let mut gmin = f64::INFINITY;
        let mut best = None;
        let mut best_obj = f64::INFINITY;
        for t in 0..n {
            if !self.in_low(t) {
                continue;
            }
            let v = -self.labels[t] * self.grad[t];
            gmin = gmin.min(v);
            let diff = gmax - v;
            if diff > 0.0 {
                let mut quad = self.gram[i][i] + self.gram[t][t] - 2.0 * self.gram[i][t];
                if quad <= 0.0 {
                    quad = TAU;
                }
                let obj = -(diff * diff) / quad;
                if obj <= best_obj {
                    best_obj = obj;
                    best = Some(t);
                }
            }
        }
        if gmax - gmin < tol {
            return None;
        }
        best.map(|j| (i, j))
    }

    fn update(&mut self, i: usize, j: usize) {
        let c = self.c;
        let (old_i, old_j) = (self.alpha[i], self.alpha[j]);
        let (mut ai, mut aj) = (old_i, old_j);
        let mut quad = self.gram[i][i] + self.gram[j][j] - 2.0 * self.gram[i][j];
        if quad <= 0.0 {
            quad = TAU;
        }
        if self.labels[i] != self.labels[j] {
            let delta = (-self.grad[i] - self.grad[j]) / quad;
            let diff = ai - aj;
            ai += delta;
            aj += delta;
            if diff > 0.0 {
                if aj < 0.0 {
                    aj = 0.0;
                    ai = diff;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = -diff;
            }
            if diff > 0.0 {
                if ai > c {
                    ai = c;
                    aj = c - diff;
                }
            } else if aj > c {
                aj = c;
                ai = c + diff;
            }
        } else {
            let delta = (self.grad[i] - self.grad[j]) / quad;
            let sum = ai + aj;
            ai -= delta;
            aj += delta;
            if sum > c {
                if ai > c {
                    ai = c;
                    aj = sum - c;
                }
            } else if aj < 0.0 {
                aj = 0.0;
                ai = sum;
            }
            if sum > c {
                if aj > c {
                    aj = c;
                    ai = sum - c;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = sum;
            }
        }
        self.alpha[i] = ai;
        self.alpha[j] = aj;
        let (di, dj) = (ai - old_i, aj - old_j);
        for t in 0..self.alpha.len() {
            self.grad[t] += self.q(t, i) * di + self.q(t, j) * dj;
        }
    }

    /// Bias from free vectors, midpoint of the feasible interval otherwise.
    fn bias(&self) -> f64 {
        let mut ub = f64::INFINITY;
        let mut lb = f64::NEG_INFINITY;
        let mut free = 0usize;
        let mut sum = 0.0;
        for t in 0..self.alpha.len() {
            let yg = self.labels[t] * self.grad[t];
            let y = self.labels[t];
            if self.alpha[t] >= self.c {
                if y < 0.0 {
                    ub = ub.min(yg);
                } else {
                    lb = lb.max(yg);
                }
            } else if self.alpha[t] <= 0.0 {
                if y > 0.0 {
                    ub = ub.min(yg);
                } else {
                    lb = lb.max(yg);
                }
            } else {
                free += 1;
                sum += yg;
            }
        }
        let rho = if free > 0 {
            sum / free as f64
        } else {
            (ub + lb) / 2.0
        };
        -rho
    }

    fn dual_objective(&self) -> f64 {
        // -(½ αᵀQα - eᵀα) = -½ Σ α_t (G_t - 1)
        -0.5 * self
            .alpha
            .iter()
            .zip(&self.grad)
            .map(|(a, g)| a * (g - 1.0))
            .sum::<f64>()
    }
}

/// Solve the SVM dual for all training points.
pub fn solve_dual(data: &TrainSet, kernel: &KernelSpec, params: &SvmParams) -> Result<DualSolution> {
    kernel.validate()?;
    if !(params.c > 0.0 && params.tol > 0.0) {
        return Err(Error::Config(format!(
            "svm needs C > 0 and tol > 0 (C = {}, tol = {})",
            params.c, params.tol
        )));
    }
    if data.len() < 2 {
        return Err(Error::InvalidTrainSet("need at least two points".into()));
    }
    let has_pos = data.labels.iter().any(|&l| l > 0.0);
    let has_neg = data.labels.iter().any(|&l| l < 0.0);
    if !(has_pos && has_neg) {
        return Err(Error::SingleClass);
    }
    let n = data.len();
    let mut smo = Smo {
        labels: &data.labels,
        gram: gram_matrix(kernel, &data.points),
        c: params.c,
        alpha: vec![0.0; n],
        grad: vec![-1.0; n],
    };
    let mut iterations = 0;
    loop {
        let Some((i, j)) = smo.select(params.tol) else {
            break;
        };
        if iterations >= params.max_iter {
            return Err(Error::NoConvergence {
                iterations,
                dual_objective: smo.dual_objective(),
            });
        }
        smo.update(i, j);
        iterations += 1;
    }
    Ok(DualSolution {
        bias: smo.bias(),
        dual_objective: smo.dual_objective(),
        alphas: smo.alpha,
        iterations,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    kernel: KernelSpec,
    c: f64,
    bias: f64,
    support_vectors: Vec<Vec<f64>>,
    /// α_i · y_i per support vector.
    coef: Vec<f64>,
}

pub fn train(data: &TrainSet, kernel: &KernelSpec, params: &SvmParams) -> Result<SvmModel> {
    let sol = solve_dual(data, kernel, params)?;
    Ok(SvmModel::from_solution(data, kernel, params.c, &sol))
}

/// `sign(v)` with `sign(0) = +1`.
pub fn sign(v: f64) -> f64 {
    if v >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

impl SvmModel {
    pub fn from_solution(data: &TrainSet, kernel: &KernelSpec, c: f64, sol: &DualSolution) -> Self {
        let (support_vectors, coef) = sol
            .alphas
            .iter()
            .enumerate()
            .filter(|(_, &a)| a > 0.0)
            .map(|(i, &a)| (data.points[i].clone(), a * data.labels[i]))
            .unzip();
        Self {
            kernel: *kernel,
            c,
            bias: sol.bias,
            support_vectors,
            coef,
        }
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn support_vectors(&self) -> &[Vec<f64>] {
        &self.support_vectors
    }

    pub fn alphas(&self) -> Vec<f64> {
        self.coef.iter().map(|c| c.abs()).collect()
    }

    pub fn sv_labels(&self) -> Vec<f64> {
        self.coef.iter().map(|&c| sign(c)).collect()
    }

    pub fn dim(&self) -> usize {
        self.support_vectors.first().map_or(0, Vec::len)
    }

    /// `Σ α_i y_i K(x_i, x) + b`, the pre-sign decision function.
    pub fn decision_value(&self, x: &[f64]) -> Result<f64> {
        if !self.support_vectors.is_empty() && x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(self
            .support_vectors
            .iter()
            .zip(&self.coef)
            .map(|(sv, c)| c * self.kernel.eval_unchecked(sv, x))
            .sum::<f64>()
            + self.bias)
    }

    pub fn classify(&self, x: &[f64]) -> Result<f64> {
        self.decision_value(x).map(sign)
    }

    /// `w = Σ α_i y_i x_i`, defined for linear kernels only.
    pub fn linear_weight(&self) -> Result<Vec<f64>> {
        if !self.kernel.is_linear() {
            return Err(Error::NonLinearKernel);
        }
        let mut w = vec![0.0; self.dim()];
        for (sv, c) in self.support_vectors.iter().zip(&self.coef) {
            for (wi, xi) in w.iter_mut().zip(sv) {
                *wi += c * xi;
            }
        }
        Ok(w)
    }

    /// JSON header `{kernel, C, b, n_sv, dim}` then little-endian f64 blocks:
    /// support vectors (row-major) and `α·y` products.
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        write_json_header(
            w,
            &ModelHeader {
                kernel: self.kernel,
                c: self.c,
                b: self.bias,
                n_sv: self.support_vectors.len(),
                dim: self.dim(),
            },
        )?;
        for sv in &self.support_vectors {
            write_f64s(w, sv)?;
        }
        write_f64s(w, &self.coef)
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let h: ModelHeader = read_json_header(r)?;
        h.kernel.validate()?;
        let flat = read_f64s(r, h.n_sv * h.dim)?;
        let support_vectors = if h.dim == 0 {
            vec![Vec::new(); h.n_sv]
        } else {
            flat.chunks_exact(h.dim).map(<[f64]>::to_vec).collect()
        };
        let coef = read_f64s(r, h.n_sv)?;
        Ok(Self {
            kernel: h.kernel,
            c: h.c,
            bias: h.b,
            support_vectors,
            coef,
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelHeader {
    kernel: KernelSpec,
    #[serde(rename = "C")]
    c: f64,
    b: f64,
    n_sv: usize,
    dim: usize,
}

/// Default RBF width: `σ² = k · (mean per-feature variance)`.
pub fn default_rbf_sigma(points: &[Vec<f64>]) -> f64 {
    let n = points.len();
    let k = points.first().map_or(0, Vec::len);
    if n < 2 || k == 0 {
        return 1.0;
    }
    let mut total = 0.0;
    for j in 0..k {
        let mean = points.iter().map(|p| p[j]).sum::<f64>() / n as f64;
        total += points.iter().map(|p| (p[j] - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    }
    let mean_var = total / k as f64;
    let sigma2 = k as f64 * mean_var;
    if sigma2 > 0.0 {
        sigma2.sqrt()
    } else {
        1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridChoice {
    pub c: f64,
    pub kernel: KernelSpec,
    pub cv_accuracy: f64,
}

/// Pick `(C, kernel)` by k-fold cross-validated accuracy; ties keep the
/// earliest candidate.
pub fn grid_search(
    data: &TrainSet,
    kernels: &[KernelSpec],
    cs: &[f64],
    folds: usize,
    base: &SvmParams,
    seed: u64,
) -> Result<GridChoice> {
    if kernels.is_empty() || cs.is_empty() || folds < 2 {
        return Err(Error::Config("grid search needs candidates and >= 2 folds".into()));
    }
    // Stratified fold assignment so each training fold keeps both labels.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold_of = vec![0usize; data.len()];
    for label in [1.0, -1.0] {
        let mut idx: Vec<usize> = (0..data.len()).filter(|&i| data.labels[i] == label).collect();
        idx.shuffle(&mut rng);
        for (pos, i) in idx.into_iter().enumerate() {
            fold_of[i] = pos % folds;
        }
    }
    let mut best: Option<GridChoice> = None;
    for kernel in kernels {
        for &c in cs {
            let params = SvmParams { c, ..*base };
            let mut correct = 0usize;
            let mut total = 0usize;
            for f in 0..folds {
                let train_idx: Vec<usize> = (0..data.len()).filter(|&i| fold_of[i] != f).collect();
                let test_idx: Vec<usize> = (0..data.len()).filter(|&i| fold_of[i] == f).collect();
                if test_idx.is_empty() {
                    continue;
                }
                let model = match train(&data.subset(&train_idx), kernel, &params) {
                    Ok(m) => m,
                    Err(Error::SingleClass) => continue,
                    Err(e) => return Err(e),
                };
                for &i in &test_idx {
                    total += 1;
                    if model.classify(&data.points[i])? == data.labels[i] {
                        correct += 1;
                    }
                }
            }
            let acc = if total > 0 { correct as f64 / total as f64 } else { 0.0 };
            if best.is_none_or(|b| acc > b.cv_accuracy) {
                best = Some(GridChoice {
                    c,
                    kernel: *kernel,
                    cv_accuracy: acc,
                });
            }
        }
    }
    Ok(best.expect("non-empty grid"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn two_point() -> TrainSet {
        TrainSet::new(vec![vec![0.0, 0.0], vec![2.0, 0.0]], vec![-1.0, 1.0]).unwrap()
    }

    #[test]
    fn kernel_values() {
        let x = [1.0, 2.0];
        assert_eq!(kernel_eval(&KernelSpec::Rbf { sigma: 0.3 }, &x, &x).unwrap(), 1.0);
        assert_eq!(kernel_eval(&KernelSpec::Linear, &[1.0, 2.0], &[3.0, 4.0]).unwrap(), 11.0);
        assert_eq!(
            kernel_eval(&KernelSpec::Polynomial { degree: 2 }, &[1.0, 0.0], &[1.0, 0.0]).unwrap(),
            4.0
        );
        assert!(matches!(
            kernel_eval(&KernelSpec::Linear, &[1.0], &[1.0, 2.0]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(kernel_eval(&KernelSpec::Rbf { sigma: 0.0 }, &x, &x).is_err());
    }

    #[test]
    fn two_point_analytic() {
        let data = two_point();
        let sol = solve_dual(&data, &KernelSpec::Linear, &SvmParams::default()).unwrap();
        assert!((sol.alphas[0] - 0.5).abs() < 1e-9);
        assert!((sol.alphas[1] - 0.5).abs() < 1e-9);
        assert!((sol.bias + 1.0).abs() < 1e-9);
        let model = SvmModel::from_solution(&data, &KernelSpec::Linear, 10.0, &sol);
        let w = model.linear_weight().unwrap();
        assert!((w[0] - 1.0).abs() < 1e-9 && w[1].abs() < 1e-12);
        assert!((model.decision_value(&[2.0, 0.0]).unwrap() - 1.0).abs() < 1e-9);
        assert!(model.decision_value(&[1.0, 0.0]).unwrap().abs() < 1e-9);
        assert!((sol.dual_objective - 0.5).abs() < 1e-9);
    }

    #[test]
    fn tie_resolves_positive() {
        assert_eq!(sign(0.0), 1.0);
        assert_eq!(sign(-0.0), 1.0);
        let model = SvmModel {
            kernel: KernelSpec::Linear,
            c: 1.0,
            bias: 0.0,
            support_vectors: vec![vec![1.0]],
            coef: vec![1.0],
        };
        assert_eq!(model.classify(&[0.0]).unwrap(), 1.0);
    }

    #[test]
    fn identical_points_hit_the_box() {
        let data = TrainSet::new(vec![vec![1.0, 1.0]; 4], vec![1.0, -1.0, 1.0, -1.0]).unwrap();
        for kernel in [KernelSpec::Linear, KernelSpec::Rbf { sigma: 1.0 }] {
            let sol = solve_dual(&data, &kernel, &SvmParams { c: 1.0, ..Default::default() }).unwrap();
            assert!(sol.alphas.iter().all(|&a| (a - 1.0).abs() < 1e-12), "{:?}", sol.alphas);
        }
    }

    #[test]
    fn separable_four_points() {
        let data = TrainSet::new(
            vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![3.0, 0.0], vec![3.0, 1.0]],
            vec![-1.0, -1.0, 1.0, 1.0],
        )
        .unwrap();
        let model = train(&data, &KernelSpec::Linear, &SvmParams::default()).unwrap();
        for (x, y) in data.points().iter().zip(data.labels()) {
            assert_eq!(model.classify(x).unwrap(), *y);
        }
        let w = model.linear_weight().unwrap();
        assert!((w[0] - 2.0 / 3.0).abs() < 1e-6 && w[1].abs() < 1e-6);
    }

    #[test]
    fn non_support_points_have_zero_alpha() {
        let data = TrainSet::new(
            vec![vec![0.0], vec![-5.0], vec![2.0], vec![7.0]],
            vec![-1.0, -1.0, 1.0, 1.0],
        )
        .unwrap();
        let sol = solve_dual(&data, &KernelSpec::Linear, &SvmParams::default()).unwrap();
        assert_eq!(sol.alphas[1], 0.0);
        assert_eq!(sol.alphas[3], 0.0);
        assert!((sol.alphas[0] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn single_class_rejected() {
        let data = TrainSet::new(vec![vec![0.0], vec![1.0]], vec![1.0, 1.0]).unwrap();
        assert!(matches!(
            train(&data, &KernelSpec::Linear, &SvmParams::default()),
            Err(Error::SingleClass)
        ));
        assert!(TrainSet::new(vec![vec![0.0]], vec![0.5]).is_err());
    }

    #[test]
    fn iteration_cap_reports_dual() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let points: Vec<Vec<f64>> = (0..30).map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
        let labels = (0..30).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let data = TrainSet::new(points, labels).unwrap();
        let err = train(&data, &KernelSpec::Rbf { sigma: 0.5 }, &SvmParams { max_iter: 2, ..Default::default() }).unwrap_err();
        assert!(matches!(err, Error::NoConvergence { iterations: 2, dual_objective } if dual_objective > 0.0));
    }

    #[test]
    fn linear_weight_rejects_rbf_and_empty_sum() {
        let model = train(&two_point(), &KernelSpec::Rbf { sigma: 1.0 }, &SvmParams::default()).unwrap();
        assert!(matches!(model.linear_weight(), Err(Error::NonLinearKernel)));
        let empty = SvmModel {
            kernel: KernelSpec::Linear,
            c: 1.0,
            bias: 0.3,
            support_vectors: vec![],
            coef: vec![],
        };
        assert!(empty.linear_weight().unwrap().is_empty());
    }

    #[test]
    fn model_round_trip() {
        let model = train(&two_point(), &KernelSpec::Linear, &SvmParams::default()).unwrap();
        let mut buf = Vec::new();
        model.write_to(&mut buf).unwrap();
        let back = SvmModel::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(back, model);
        assert_eq!(back.alphas(), model.alphas());
    }

    #[test]
    fn grid_search_prefers_working_kernel() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        // circle inside ring: linear cannot separate it
        let mut points = Vec::new();
        let mut labels = Vec::new();
        for i in 0..60 {
            let r = if i % 2 == 0 { rng.random_range(0.0..1.0) } else { rng.random_range(2.0..3.0) };
            let t: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            points.push(vec![r * t.cos(), r * t.sin()]);
            labels.push(if i % 2 == 0 { 1.0 } else { -1.0 });
        }
        let data = TrainSet::new(points, labels).unwrap();
        let choice = grid_search(
            &data,
            &[KernelSpec::Linear, KernelSpec::Rbf { sigma: 1.0 }],
            &[1.0, 10.0],
            5,
            &SvmParams::default(),
            0,
        )
        .unwrap();
        assert!(matches!(choice.kernel, KernelSpec::Rbf { .. }));
        assert!(choice.cv_accuracy > 0.9);
    }

    fn random_set(seed: u64, n: usize, d: usize) -> TrainSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let labels: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let points = labels
            .iter()
            .map(|&y| (0..d).map(|_| rng.random_range(-1.0..1.0) + 0.8 * y).collect())
            .collect();
        TrainSet::new(points, labels).unwrap()
    }

    fn kkt_holds(data: &TrainSet, kernel: &KernelSpec, params: &SvmParams) -> std::result::Result<(), String> {
        let sol = solve_dual(data, kernel, params).map_err(|e| e.to_string())?;
        let model = SvmModel::from_solution(data, kernel, params.c, &sol);
        let balance: f64 = sol.alphas.iter().zip(data.labels()).map(|(a, y)| a * y).sum();
        if balance.abs() >= 1e-8 {
            return Err(format!("Σαy = {balance}"));
        }
        let tol = params.tol;
        for ((x, &y), &a) in data.points().iter().zip(data.labels()).zip(&sol.alphas) {
            if !(0.0..=params.c).contains(&a) {
                return Err(format!("α = {a} out of box"));
            }
            let m = y * model.decision_value(x).unwrap();
            let ok = if a == 0.0 {
                m >= 1.0 - tol
            } else if a == params.c {
                m <= 1.0 + tol
            } else {
                (m - 1.0).abs() <= tol
            };
            if !ok {
                return Err(format!("KKT violated: α = {a}, y f = {m}"));
            }
        }
        Ok(())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn kkt_after_training(seed in 0u64..100_000, n in 2usize..40, c in 0.1f64..20.0, which in 0usize..3) {
            let data = random_set(seed, n, 3);
            let kernel = [KernelSpec::Linear, KernelSpec::Rbf { sigma: 0.7 }, KernelSpec::Polynomial { degree: 2 }][which];
            let params = SvmParams { c, ..Default::default() };
            prop_assert_eq!(kkt_holds(&data, &kernel, &params), Ok(()));
        }

        #[test]
        fn gram_is_symmetric_psd(seed in 0u64..100_000, which in 0usize..3) {
            let data = random_set(seed, 12, 4);
            let kernel = [KernelSpec::Linear, KernelSpec::Rbf { sigma: 0.9 }, KernelSpec::Polynomial { degree: 3 }][which];
            let g = gram_matrix(&kernel, data.points());
            let m = nalgebra::DMatrix::from_fn(12, 12, |i, j| g[i][j]);
            prop_assert!((&m - m.transpose()).amax() == 0.0);
            let min = nalgebra::SymmetricEigen::new(m.clone()).eigenvalues.min();
            prop_assert!(min > -1e-8 * m.amax().max(1.0));
        }

        #[test]
        fn linear_weight_matches_decision(seed in 0u64..100_000) {
            let data = random_set(seed, 20, 3);
            let model = train(&data, &KernelSpec::Linear, &SvmParams::default()).unwrap();
            let w = model.linear_weight().unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
            for _ in 0..100 {
                let x: Vec<f64> = (0..3).map(|_| rng.random_range(-3.0..3.0)).collect();
                let primal = dot(&w, &x) + model.bias();
                prop_assert!((primal - model.decision_value(&x).unwrap()).abs() < 1e-10);
            }
        }

        #[test]
        fn duplicating_a_point_keeps_predictions(seed in 0u64..100_000, dup in 0usize..16) {
            // well separated classes, hard-margin regime
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let labels: Vec<f64> = (0..16).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
            let points: Vec<Vec<f64>> = labels.iter().map(|&y| vec![3.0 * y + rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
            let base = TrainSet::new(points.clone(), labels.clone()).unwrap();
            let mut p2 = points;
            let mut l2 = labels;
            p2.push(p2[dup].clone());
            l2.push(l2[dup]);
            let doubled = TrainSet::new(p2, l2).unwrap();
            let params = SvmParams { c: 1e3, tol: 1e-6, ..Default::default() };
            let m1 = train(&base, &KernelSpec::Linear, &params).unwrap();
            let m2 = train(&doubled, &KernelSpec::Linear, &params).unwrap();
            for _ in 0..50 {
                let x = vec![rng.random_range(-6.0..6.0), rng.random_range(-3.0..3.0)];
                let f1 = m1.decision_value(&x).unwrap();
                if f1.abs() > 1e-3 {
                    prop_assert_eq!(sign(f1), sign(m2.decision_value(&x).unwrap()));
                }
            }
        }
    }
}
