//! Template attack: one multivariate Gaussian per class, classified by
//! likelihood.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::classifiers::{Classifier, ClassifierError, PixelProbe};
use crate::dataset::Dataset;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Regularization {
    /// Shrinkage toward the diagonal.
    pub lambda: f64,
    /// Ridge added to the diagonal.
    pub epsilon: f64,
}

impl Default for Regularization {
    fn default() -> Self {
        Regularization { lambda: 0.1, epsilon: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassTemplate {
    pub mean: Vec<f64>,
    /// Regularized covariance, row-major `n x n`.
    pub covariance: Vec<f64>,
    /// Lower Cholesky factor of `covariance`, row-major.
    pub cholesky: Vec<f64>,
    pub log_det: f64,
    pub prior: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateModel {
    pub n: usize,
    pub classes: Vec<ClassTemplate>,
    pub regularization: Regularization,
}

impl ClassTemplate {
    /// Template from an already regularized covariance; `None` when it is not
    /// positive definite.
    pub fn from_covariance(mean: Vec<f64>, covariance: Vec<f64>, prior: f64) -> Option<Self> {
        let n = mean.len();
        if covariance.len() != n * n {
            return None;
        }
        let chol = cholesky(&covariance, n)?;
        let log_det = 2.0 * (0..n).map(|i| libm::log(chol[i * n + i])).sum::<f64>();
        Some(ClassTemplate { mean, covariance, cholesky: chol, log_det, prior })
    }
}

/// Unbiased sample mean and covariance of the given rows.
pub fn mean_and_covariance<'a>(rows: impl Iterator<Item = &'a [f64]> + Clone, n: usize) -> (Vec<f64>, Vec<f64>, usize) {
    let mut mean = vec![0.0; n];
    let mut count = 0usize;
    for r in rows.clone() {
        mean.iter_mut().zip(r).for_each(|(m, x)| *m += x);
        count += 1;
    }
    mean.iter_mut().for_each(|m| *m /= count as f64);
    let mut cov = vec![0.0; n * n];
    let mut centered = vec![0.0; n];
    for r in rows {
        centered.iter_mut().zip(r).zip(&mean).for_each(|((c, x), m)| *c = x - m);
        for i in 0..n {
            let ci = centered[i];
            if ci == 0.0 {
                continue;
            }
            for (s, &cj) in cov[i * n + i..(i + 1) * n].iter_mut().zip(&centered[i..]) {
                *s += ci * cj;
            }
        }
    }
    let denom = count.saturating_sub(1).max(1) as f64;
    for i in 0..n {
        for j in i..n {
            let v = cov[i * n + j] / denom;
            cov[i * n + j] = v;
            cov[j * n + i] = v;
        }
    }
    (mean, cov, count)
}

/// In-place lower Cholesky factor of a row-major SPD matrix; `None` when a
/// pivot is not positive.
pub fn cholesky(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let (ri, rj) = (&l[i * n..i * n + j], &l[j * n..j * n + j]);
            let s = a[i * n + j] - ri.iter().zip(rj).map(|(x, y)| x * y).sum::<f64>();
            if i == j {
                if s <= 0.0 || !s.is_finite() {
                    return None;
                }
                l[i * n + i] = libm::sqrt(s);
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Some(l)
}

/// `|| L^{-1} v ||^2` by forward substitution.
fn mahalanobis(l: &[f64], n: usize, v: &mut [f64]) -> f64 {
    for i in 0..n {
        let s: f64 = l[i * n..i * n + i].iter().zip(&v[..i]).map(|(a, b)| a * b).sum();
        v[i] = (v[i] - s) / l[i * n + i];
    }
    v.iter().map(|x| x * x).sum()
}

/// Class templates from a standardized profiling set; priors are the class
/// frequencies.
pub fn fit_templates(dataset: &Dataset, reg: Regularization) -> Result<TemplateModel, ClassifierError> {
    let n = dataset.trace_len;
    let classes = dataset.class_count();
    let labels = dataset.labels();
    let mut out = Vec::with_capacity(classes);
    for c in 0..classes {
        let members: Vec<usize> = (0..dataset.len()).filter(|&i| labels[i] == c).collect();
        let (mean, mut cov, count) = mean_and_covariance(members.iter().map(|&i| dataset.trace(i)), n);
        if count < 2 {
            return Err(ClassifierError::SparseClass { class: c, have: count, need: 2 });
        }
        for i in 0..n {
            for j in 0..n {
                let v = &mut cov[i * n + j];
                if i == j {
                    *v += reg.epsilon;
                } else {
                    *v *= 1.0 - reg.lambda;
                }
            }
        }
        let prior = count as f64 / dataset.len() as f64;
        out.push(ClassTemplate::from_covariance(mean, cov, prior).ok_or(ClassifierError::Singular { class: c })?);
    }
    Ok(TemplateModel { n, classes: out, regularization: reg })
}

impl TemplateModel {
    /// Log of the Gaussian density of `trace` under `class`.
    pub fn log_likelihood(&self, trace: &[f64], class: usize) -> f64 {
        let t = &self.classes[class];
        let mut v: Vec<f64> = trace.iter().zip(&t.mean).map(|(x, m)| x - m).collect();
        let q = mahalanobis(&t.cholesky, self.n, &mut v);
        -0.5 * (self.n as f64 * libm::log(2.0 * PI) + t.log_det + q)
    }

    /// Posterior over classes.
    pub fn classify(&self, trace: &[f64]) -> Vec<f64> {
        let scores: Vec<f64> =
            (0..self.classes.len()).map(|c| self.log_likelihood(trace, c) + libm::log(self.classes[c].prior)).collect();
        crate::classifiers::softmax(&scores)
    }
}

impl Classifier for TemplateModel {
    fn class_count(&self) -> usize {
        self.classes.len()
    }

    fn input_len(&self) -> usize {
        self.n
    }

    fn predict(&self, trace: &[f64]) -> Result<Vec<f64>, ClassifierError> {
        if trace.len() != self.n {
            return Err(ClassifierError::LengthMismatch { expected: self.n, got: trace.len() });
        }
        Ok(self.classify(trace))
    }

    fn probe<'a>(&'a self, trace: &'a [f64]) -> Result<Box<dyn PixelProbe + 'a>, ClassifierError> {
        if trace.len() != self.n {
            return Err(ClassifierError::LengthMismatch { expected: self.n, got: trace.len() });
        }
        Ok(Box::new(TemplateProbe { model: self, x: trace.to_vec() }))
    }
}

struct TemplateProbe<'a> {
    model: &'a TemplateModel,
    x: Vec<f64>,
}

impl PixelProbe for TemplateProbe<'_> {
    fn with_pixel(&mut self, position: usize, value: f64) -> Vec<f64> {
        let old = core::mem::replace(&mut self.x[position], value);
        let p = self.model.classify(&self.x);
        self.x[position] = old;
        p
    }
}
