//! Linear SVM trained with the Pegasos stochastic subgradient method.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ClassifierError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SvmParams {
    #[serde(default = "default_c")]
    pub c: f64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
}

fn default_c() -> f64 {
    1.0
}

fn default_epochs() -> usize {
    200
}

impl Default for SvmParams {
    fn default() -> Self {
        Self { c: 1.0, epochs: 200 }
    }
}

/// Weights live in standardized feature space; the last weight is the bias
/// (trained as a constant feature).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSvm {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    pub weights: Vec<f64>,
}

impl LinearSvm {
    /// `y` true = weak (+1).
    pub fn fit(x: &[Vec<f64>], y: &[bool], params: &SvmParams, seed: u64) -> Result<Self, ClassifierError> {
        if x.is_empty() {
            return Err(ClassifierError::Empty);
        }
        let d = x[0].len();
        if d == 0 {
            return Err(ClassifierError::NoFeatures);
        }
        if !(params.c > 0.0) {
            return Err(ClassifierError::InvalidSpec(format!("C must be positive, got {}", params.c)));
        }
        if y.iter().all(|&v| v) || y.iter().all(|&v| !v) {
            return Err(ClassifierError::SingleClass);
        }
        let n = x.len();
        let mut mean = vec![0.0; d];
        let mut scale = vec![0.0; d];
        for j in 0..d {
            mean[j] = x.iter().map(|r| r[j]).sum::<f64>() / n as f64;
            let var = x.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n as f64;
            scale[j] = if var > 0.0 { var.sqrt() } else { 1.0 };
        }
        let z: Vec<Vec<f64>> = x
            .iter()
            .map(|r| {
                let mut v: Vec<f64> = (0..d).map(|j| (r[j] - mean[j]) / scale[j]).collect();
                v.push(1.0);
                v
            })
            .collect();
        let lambda = 1.0 / (params.c * n as f64);
        let mut w = vec![0.0; d + 1];
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut t = 0u64;
        for _ in 0..params.epochs {
            order.shuffle(&mut rng);
            for &i in &order {
                t += 1;
                let eta = 1.0 / (lambda * t as f64);
                let yi = if y[i] { 1.0 } else { -1.0 };
                let margin = yi * dot(&w, &z[i]);
                let shrink = 1.0 - eta * lambda;
                w.iter_mut().for_each(|wj| *wj *= shrink);
                if margin < 1.0 {
                    for (wj, zj) in w.iter_mut().zip(&z[i]) {
                        *wj += eta * yi * zj;
                    }
                }
            }
        }
        Ok(Self { mean, scale, weights: w })
    }

    pub fn decision(&self, x: &[f64]) -> f64 {
        let d = self.mean.len();
        let mut s = self.weights[d];
        for j in 0..d {
            s += self.weights[j] * (x[j] - self.mean[j]) / self.scale[j];
        }
        s
    }

    /// Non-negative margins predict weak.
    pub fn predict(&self, x: &[f64]) -> bool {
        self.decision(x) >= 0.0
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separable_2d() {
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..30 {
            let t = i as f64 / 10.0;
            x.push(vec![t, 2.0 + t]);
            y.push(true);
            x.push(vec![t, -2.0 + t]);
            y.push(false);
        }
        let svm = LinearSvm::fit(&x, &y, &SvmParams::default(), 11).unwrap();
        let acc = x.iter().zip(&y).filter(|(xi, yi)| svm.predict(xi) == **yi).count();
        assert_eq!(acc, x.len());
    }

    #[test]
    fn rejects_bad_c() {
        let x = vec![vec![0.0], vec![1.0]];
        let p = SvmParams { c: 0.0, epochs: 1 };
        assert!(matches!(LinearSvm::fit(&x, &[true, false], &p, 0), Err(ClassifierError::InvalidSpec(_))));
    }
}
