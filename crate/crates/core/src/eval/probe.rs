use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Splits;
use crate::linalg::DenseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    /// Penalty `λ/2 ‖W‖²` on the weights; the bias is not penalized.
    pub l2_strength: f64,
    pub max_iters: usize,
    /// Stop once the gradient norm falls below this.
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            l2_strength: 1e-2,
            max_iters: 500,
            tolerance: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeResult {
    pub train_accuracy: f64,
    /// `None` when the split is empty.
    pub val_accuracy: Option<f64>,
    pub test_accuracy: Option<f64>,
    pub iterations: usize,
    /// Training loss after each accepted step, starting with the initial loss.
    #[serde(skip)]
    pub loss_trace: Vec<f64>,
}

struct Softmax {
    points: Vec<Vec<f64>>,
    targets: Vec<usize>,
    classes: usize,
    dim: usize,
    l2: f64,
}

impl Softmax {
    fn num_params(&self) -> usize {
        self.classes * (self.dim + 1)
    }

    fn logits(&self, theta: &[f64], x: &[f64]) -> Vec<f64> {
        let (w, b) = theta.split_at(self.classes * self.dim);
        (0..self.classes)
            .map(|k| b[k] + w[k * self.dim..(k + 1) * self.dim].iter().zip(x).map(|(a, v)| a * v).sum::<f64>())
            .collect()
    }

    fn loss_and_grad(&self, theta: &[f64], want_grad: bool) -> (f64, Vec<f64>) {
        let n = self.points.len() as f64;
        let kd = self.classes * self.dim;
        let mut grad = vec![0.0; if want_grad { self.num_params() } else { 0 }];
        let mut loss = 0.0;
        for (x, &y) in self.points.iter().zip(&self.targets) {
            let logits = self.logits(theta, x);
            let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
            let sum: f64 = exps.iter().sum();
            loss += sum.ln() + max - logits[y];
            if want_grad {
                for k in 0..self.classes {
                    let r = (exps[k] / sum - f64::from(u8::from(k == y))) / n;
                    for (g, v) in grad[k * self.dim..(k + 1) * self.dim].iter_mut().zip(x) {
                        *g += r * v;
                    }
                    grad[kd + k] += r;
                }
            }
        }
        let w = &theta[..kd];
        loss = loss / n + 0.5 * self.l2 * w.iter().map(|v| v * v).sum::<f64>();
        if want_grad {
            for (g, v) in grad[..kd].iter_mut().zip(w) {
                *g += self.l2 * v;
            }
        }
        (loss, grad)
    }

    fn predict(&self, theta: &[f64], x: &[f64]) -> usize {
        let logits = self.logits(theta, x);
        let mut best = 0;
        for k in 1..logits.len() {
            if logits[k] > logits[best] {
                best = k;
            }
        }
        best
    }
}

/// Multinomial logistic regression on the training columns of `z`, fit by
/// full-batch gradient descent with step halving.
pub fn linear_probe(z: &DenseMatrix, labels: &[usize], splits: &Splits, cfg: &ProbeConfig) -> Result<ProbeResult> {
    let n = z.cols();
    if labels.len() != n {
        return Err(Error::shape("linear_probe labels", n, labels.len()));
    }
    if !(cfg.l2_strength >= 0.0 && cfg.tolerance >= 0.0) {
        return Err(Error::InvalidArgument("l2_strength and tolerance must be non-negative".into()));
    }
    if let Some(&bad) = splits.train.iter().chain(&splits.val).chain(&splits.test).find(|&&i| i >= n) {
        return Err(Error::InconsistentDimensions(format!("split references node {bad} of {n}")));
    }
    if splits.train.is_empty() {
        return Err(Error::InvalidArgument("training split is empty".into()));
    }
    let first = labels[splits.train[0]];
    if splits.train.iter().all(|&i| labels[i] == first) {
        return Err(Error::DegenerateTrainSplit);
    }

    let model = Softmax {
        points: splits.train.iter().map(|&i| z.column(i)).collect(),
        targets: splits.train.iter().map(|&i| labels[i]).collect(),
        classes: labels.iter().max().map_or(0, |m| m + 1),
        dim: z.rows(),
        l2: cfg.l2_strength,
    };
    let mut theta = vec![0.0; model.num_params()];
    let (mut loss, mut grad) = model.loss_and_grad(&theta, true);
    let mut trace = vec![loss];
    let mut step = 1.0;
    let mut iterations = 0;
    while iterations < cfg.max_iters {
        let gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if gnorm < cfg.tolerance {
            break;
        }
        iterations += 1;
        let mut accepted = None;
        for _ in 0..60 {
            let candidate: Vec<f64> = theta.iter().zip(&grad).map(|(t, g)| t - step * g).collect();
            let (l, _) = model.loss_and_grad(&candidate, false);
            if l <= loss {
                accepted = Some((candidate, l));
                break;
            }
            step *= 0.5;
        }
        let Some((next, l)) = accepted else { break };
        theta = next;
        loss = l;
        trace.push(loss);
        grad = model.loss_and_grad(&theta, true).1;
        step = (step * 2.0).min(1e4);
    }

    let accuracy = |nodes: &[usize]| -> Option<f64> {
        if nodes.is_empty() {
            return None;
        }
        let hits = nodes
            .iter()
            .filter(|&&i| model.predict(&theta, &z.column(i)) == labels[i])
            .count();
        Some(hits as f64 / nodes.len() as f64)
    };
    Ok(ProbeResult {
        train_accuracy: accuracy(&splits.train).unwrap_or(0.0),
        val_accuracy: accuracy(&splits.val),
        test_accuracy: accuracy(&splits.test),
        iterations,
        loss_trace: trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeded_rng;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn clouds(n_per: usize, seed: u64) -> (DenseMatrix, Vec<usize>) {
        let mut rng = seeded_rng(seed, 0);
        let n = 2 * n_per;
        let labels: Vec<usize> = (0..n).map(|i| i / n_per).collect();
        let z = DenseMatrix::from_fn(2, n, |r, c| {
            let centre = if r == 0 { if labels[c] == 0 { -10.0 } else { 10.0 } } else { 0.0 };
            centre + rng.sample::<f64, _>(StandardNormal)
        });
        (z, labels)
    }

    #[test]
    fn separable_clouds_are_classified_perfectly() {
        let (z, labels) = clouds(50, 1);
        let splits = Splits::random(100, 0.6, 0.2, 0).unwrap();
        let r = linear_probe(&z, &labels, &splits, &ProbeConfig::default()).unwrap();
        assert_eq!(r.test_accuracy, Some(1.0));
        assert_eq!(r.train_accuracy, 1.0);
    }

    #[test]
    fn loss_never_increases() {
        let (z, mut labels) = clouds(30, 2);
        labels[3] = 1;
        labels[40] = 0;
        let splits = Splits::random(60, 0.8, 0.0, 1).unwrap();
        let r = linear_probe(&z, &labels, &splits, &ProbeConfig::default()).unwrap();
        assert!(r.loss_trace.windows(2).all(|w| w[1] <= w[0]));
        assert!(r.loss_trace.len() > 2);
    }

    #[test]
    fn single_class_train_split_is_rejected() {
        let (z, _) = clouds(5, 3);
        let labels = vec![2; 10];
        let splits = Splits::random(10, 0.5, 0.0, 0).unwrap();
        assert!(matches!(
            linear_probe(&z, &labels, &splits, &ProbeConfig::default()),
            Err(Error::DegenerateTrainSplit)
        ));
    }

    #[test]
    fn probe_is_deterministic() {
        let (z, labels) = clouds(20, 4);
        let splits = Splits::random(40, 0.5, 0.25, 2).unwrap();
        let a = linear_probe(&z, &labels, &splits, &ProbeConfig::default()).unwrap();
        let b = linear_probe(&z, &labels, &splits, &ProbeConfig::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (z, labels) = clouds(4, 5);
        let model = Softmax {
            points: (0..8).map(|i| z.column(i).iter().map(|v| v / 10.0).collect()).collect(),
            targets: labels.clone(),
            classes: 3,
            dim: 2,
            l2: 0.3,
            };
        let mut rng = seeded_rng(6, 0);
        let theta: Vec<f64> = (0..model.num_params()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (_, grad) = model.loss_and_grad(&theta, true);
        for i in 0..theta.len() {
            let h = 1e-6;
            let mut p = theta.clone();
            p[i] += h;
            let mut m = theta.clone();
            m[i] -= h;
            let fd = (model.loss_and_grad(&p, false).0 - model.loss_and_grad(&m, false).0) / (2.0 * h);
            assert!((fd - grad[i]).abs() < 1e-7);
        }
    }
}
