//! Adam ascent on the rate-reduction objective.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::encoder::{backward, forward, init_params, propagation_matrix, EncoderDims, EncoderKind, EncoderParams};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::objective::{build_memberships, rate_reduction_grad, rate_reduction_terms, MembershipGroup, RateParams};
use crate::{seeded_rng, streams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    fn validate(&self) -> Result<()> {
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2) && self.eps > 0.0) {
            return Err(Error::InvalidArgument(format!("invalid Adam settings {self:?}")));
        }
        Ok(())
    }
}

/// First and second moments plus the number of steps taken so far.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
        }
    }
}

/// One bias-corrected Adam step in the ascent direction. The step index used
/// for bias correction is `state.step + 1`.
pub fn adam_step(
    params: &[f64],
    grads: &[f64],
    state: &AdamState,
    cfg: &AdamConfig,
    lr: f64,
) -> Result<(Vec<f64>, AdamState)> {
    let n = params.len();
    if grads.len() != n || state.m.len() != n || state.v.len() != n {
        return Err(Error::shape("adam_step", n, format!("grads {} / moments {}", grads.len(), state.m.len())));
    }
    let t = state.step + 1;
    let c1 = 1.0 - cfg.beta1.powi(t as i32);
    let c2 = 1.0 - cfg.beta2.powi(t as i32);
    let mut next = AdamState {
        m: Vec::with_capacity(n),
        v: Vec::with_capacity(n),
        step: t,
    };
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let g = grads[i];
        let m = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        let v = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        out.push(params[i] + lr * (m / c1) / ((v / c2).sqrt() + cfg.eps));
        next.m.push(m);
        next.v.push(v);
    }
    Ok((out, next))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Membership rows sampled per epoch; `None` means `min(N, 1024)`,
    /// capped at the number of eligible nodes.
    pub n_samples: Option<usize>,
    pub rate: RateParams,
    pub include_self: bool,
    pub seed: u64,
    pub adam: AdamConfig,
    pub hidden_dim: usize,
    pub output_dim: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            learning_rate: 1e-3,
            n_samples: None,
            rate: RateParams::default(),
            include_self: true,
            seed: 0,
            adam: AdamConfig::default(),
            hidden_dim: 512,
            output_dim: 512,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        if self.n_samples == Some(0) {
            return Err(Error::InvalidArgument("n_samples must be at least 1".into()));
        }
        if self.hidden_dim == 0 || self.output_dim == 0 {
            return Err(Error::InvalidArgument("hidden_dim and output_dim must be positive".into()));
        }
        self.rate.validate()?;
        self.adam.validate()
    }

    /// The sample size actually used on `g`.
    pub fn resolved_samples(&self, g: &Graph) -> usize {
        self.n_samples
            .unwrap_or_else(|| g.num_nodes().min(1024).min(eligible_count(g, self.include_self)))
    }
}

fn eligible_count(g: &Graph, include_self: bool) -> usize {
    (0..g.num_nodes())
        .filter(|&i| MembershipGroup::from_adjacency(g, i, include_self).is_some())
        .count()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Objective at the parameters entering this epoch.
    pub objective: f64,
    pub term1: f64,
    pub term2: f64,
    /// Euclidean norm of the parameter gradient.
    pub grad_norm: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn objectives(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.objective).collect()
    }

    pub fn to_tsv(&self) -> String {
        let mut s = String::from("epoch\tobjective\tterm1\tterm2\tgrad_norm\tseconds\n");
        for r in &self.records {
            let _ = writeln!(
                s,
                "{}\t{}\t{}\t{}\t{}\t{}",
                r.epoch, r.objective, r.term1, r.term2, r.grad_norm, r.seconds
            );
        }
        s
    }

    pub fn write_tsv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }
}

fn first_non_finite(params: &EncoderParams, flat: &[f64]) -> Option<Error> {
    let i = flat.iter().position(|v| !v.is_finite())?;
    let h = params.dims().hidden;
    let n1 = params.w1().rows() * h;
    let (row, col) = if i < n1 {
        (i / h, i % h)
    } else {
        let j = i - n1;
        let d = params.dims().output;
        (j / d, j % d)
    };
    Some(Error::NonFinite { row, col })
}

/// Trains an encoder of `kind` on `g`. Deterministic for a given `cfg`
/// apart from the `seconds` column of the history.
pub fn train(g: &Graph, kind: EncoderKind, cfg: &TrainConfig) -> Result<(EncoderParams, TrainHistory)> {
    cfg.validate()?;
    if g.num_nodes() == 0 {
        return Err(Error::InvalidArgument("graph has no nodes".into()));
    }
    let eligible = eligible_count(g, cfg.include_self);
    if eligible == 0 {
        return Err(Error::NoEligibleNodes);
    }
    let n_samples = cfg.resolved_samples(g);
    if n_samples > eligible {
        return Err(Error::InvalidArgument(format!(
            "n_samples = {n_samples} exceeds the {eligible} nodes with a non-empty membership row"
        )));
    }
    let dims = EncoderDims::new(g.feature_dim(), cfg.hidden_dim, cfg.output_dim);
    let mut params = init_params(kind, dims, cfg.seed)?;
    let a_hat = propagation_matrix(g, kind);
    let mut rng = seeded_rng(cfg.seed, streams::MEMBERSHIPS);
    let mut state = AdamState::new(dims.num_params());
    let mut history = TrainHistory::default();

    for epoch in 0..cfg.epochs {
        let start = Instant::now();
        let wrap = |e: Error| Error::Training {
            epoch,
            source: Box::new(e),
        };
        let sample = build_memberships(g, n_samples, cfg.include_self, &mut rng).map_err(wrap)?;
        let (z, cache) = forward(&params, &a_hat, g.features()).map_err(wrap)?;
        let terms = rate_reduction_terms(&z, &sample, &cfg.rate).map_err(wrap)?;
        let dz = rate_reduction_grad(&z, &sample, &cfg.rate).map_err(wrap)?;
        let grads = backward(&params, &cache, &dz).map_err(wrap)?.to_flat();
        let grad_norm = grads.iter().map(|v| v * v).sum::<f64>().sqrt();

        let (flat, next) = adam_step(&params.to_flat(), &grads, &state, &cfg.adam, cfg.learning_rate).map_err(wrap)?;
        if let Some(e) = first_non_finite(&params, &flat) {
            return Err(wrap(e));
        }
        params = params.with_flat(&flat).map_err(wrap)?;
        state = next;
        history.records.push(EpochRecord {
            epoch,
            objective: terms.value(),
            term1: terms.expansion,
            term2: terms.compression,
            grad_norm,
            seconds: start.elapsed().as_secs_f64(),
        });
    }
    Ok((params, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{gen_gaussian_partition, SyntheticConfig};
    use crate::objective::rate_reduction;

    fn small() -> Graph {
        gen_gaussian_partition(&SyntheticConfig {
            num_communities: 2,
            nodes_per_community: 8,
            p_in: 0.6,
            p_out: 0.05,
            feature_dim: 5,
            seed: 3,
        })
        .unwrap()
    }

    fn cfg(epochs: usize) -> TrainConfig {
        TrainConfig {
            epochs,
            hidden_dim: 8,
            output_dim: 3,
            ..TrainConfig::default()
        }
    }

    /// Straight-line scalar Adam, written independently of `adam_step`.
    fn scalar_adam(mut x: f64, grads: &[f64], lr: f64) -> Vec<f64> {
        let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
        let (mut m, mut v) = (0.0, 0.0);
        let mut xs = Vec::new();
        for (k, &g) in grads.iter().enumerate() {
            let t = (k + 1) as i32;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mhat = m / (1.0 - b1.powi(t));
            let vhat = v / (1.0 - b2.powi(t));
            x += lr * mhat / (vhat.sqrt() + eps);
            xs.push(x);
        }
        xs
    }

    #[test]
    fn adam_matches_scalar_trace() {
        let grads = [0.5, -2.0, 0.25];
        let expected = scalar_adam(1.0, &grads, 0.1);
        let mut x = vec![1.0];
        let mut state = AdamState::new(1);
        for (g, want) in grads.iter().zip(expected) {
            let (nx, ns) = adam_step(&x, &[*g], &state, &AdamConfig::default(), 0.1).unwrap();
            assert_eq!(nx[0], want);
            x = nx;
            state = ns;
        }
        assert_eq!(state.step, 3);
    }

    #[test]
    fn adam_first_step_is_lr_times_sign() {
        let (x, _) = adam_step(&[0.0, 0.0], &[3.0, -0.2], &AdamState::new(2), &AdamConfig::default(), 0.01).unwrap();
        assert!((x[0] - 0.01).abs() < 1e-10);
        assert!((x[1] + 0.01).abs() < 1e-9);
    }

    #[test]
    fn adam_zero_gradient_is_identity() {
        let p = [1.0, -2.0, 3.5];
        let (x, _) = adam_step(&p, &[0.0; 3], &AdamState::new(3), &AdamConfig::default(), 1.0).unwrap();
        assert_eq!(x, p);
        assert!(adam_step(&p, &[0.0; 2], &AdamState::new(3), &AdamConfig::default(), 1.0).is_err());
    }

    #[test]
    fn zero_epochs_returns_init() {
        let g = small();
        let (p, h) = train(&g, EncoderKind::Gcn, &cfg(0)).unwrap();
        assert!(h.is_empty());
        assert_eq!(p, init_params(EncoderKind::Gcn, EncoderDims::new(5, 8, 3), 0).unwrap());
    }

    #[test]
    fn training_is_deterministic() {
        let g = small();
        let mut c = cfg(5);
        c.n_samples = Some(6);
        let (p1, h1) = train(&g, EncoderKind::Gcn, &c).unwrap();
        let (p2, h2) = train(&g, EncoderKind::Gcn, &c).unwrap();
        assert_eq!(p1, p2);
        let strip = |h: &TrainHistory| h.records.iter().map(|r| (r.objective, r.term1, r.term2, r.grad_norm)).collect::<Vec<_>>();
        assert_eq!(strip(&h1), strip(&h2));
    }

    #[test]
    fn logged_objective_matches_recomputation() {
        let g = small();
        let mut c = cfg(6);
        c.n_samples = Some(5);
        let (_, full) = train(&g, EncoderKind::Gcn, &c).unwrap();
        let a = propagation_matrix(&g, EncoderKind::Gcn);
        for k in [0usize, 3, 5] {
            let (pk, _) = train(&g, EncoderKind::Gcn, &TrainConfig { epochs: k, ..c.clone() }).unwrap();
            let mut rng = seeded_rng(c.seed, streams::MEMBERSHIPS);
            let mut sample = None;
            for _ in 0..=k {
                sample = Some(build_memberships(&g, 5, true, &mut rng).unwrap());
            }
            let (z, _) = forward(&pk, &a, g.features()).unwrap();
            let v = rate_reduction(&z, &sample.unwrap(), &c.rate).unwrap();
            assert!((v - full.records[k].objective).abs() < 1e-10);
        }
    }

    #[test]
    fn tiny_learning_rate_barely_moves() {
        let g = small();
        let k = 4;
        let c = TrainConfig {
            learning_rate: 1e-12,
            ..cfg(k)
        };
        let (p, _) = train(&g, EncoderKind::Gcn, &c).unwrap();
        let init = init_params(EncoderKind::Gcn, EncoderDims::new(5, 8, 3), 0).unwrap();
        let delta = p.to_flat().iter().zip(init.to_flat()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        // each Adam step moves an entry by at most lr·(1 + small)
        assert!(delta <= k as f64 * 1e-12 * 1.01, "{delta}");
    }

    #[test]
    fn history_tsv_layout() {
        let g = small();
        let (_, h) = train(&g, EncoderKind::Mlp, &cfg(3)).unwrap();
        let tsv = h.to_tsv();
        let lines: Vec<&str> = tsv.lines().collect();
        assert_eq!(lines[0], "epoch\tobjective\tterm1\tterm2\tgrad_norm\tseconds");
        assert_eq!(lines.len(), 4);
        assert!(lines[1..].iter().all(|l| l.split('\t').count() == 6));
    }

    #[test]
    fn invalid_configs_rejected() {
        let g = small();
        for bad in [
            TrainConfig { learning_rate: 0.0, ..cfg(1) },
            TrainConfig { n_samples: Some(0), ..cfg(1) },
            TrainConfig { n_samples: Some(100), ..cfg(1) },
        ] {
            assert!(train(&g, EncoderKind::Gcn, &bad).is_err());
        }
        let empty = Graph::new(4, [], crate::DenseMatrix::zeros(2, 4), None, None).unwrap();
        let c = TrainConfig { include_self: false, ..cfg(1) };
        assert!(matches!(train(&empty, EncoderKind::Gcn, &c), Err(Error::NoEligibleNodes)));
    }
}
