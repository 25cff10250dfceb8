//! Two-layer encoder with hand-written backpropagation.
//!
//! Column convention: features `X` are `d0 × N`, embeddings `Z` are `d × N`.
//!
//! ```text
//! H  = relu(W1ᵀ X Âᵀ)        (h × N)
//! Z0 = W2ᵀ H Âᵀ              (d × N)
//! Z  = Z0 with every column scaled to unit norm
//! ```
//!
//! The MLP variant is the same computation with `Â = I`.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{gcn_normalize, Graph};
use crate::linalg::{dot, CsrMatrix, DenseMatrix};
use crate::{seeded_rng, streams};

/// Columns whose pre-normalization norm falls below this stay zero.
pub const ZERO_NORM: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderKind {
    Gcn,
    Mlp,
}

impl fmt::Display for EncoderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EncoderKind::Gcn => "gcn",
            EncoderKind::Mlp => "mlp",
        })
    }
}

impl FromStr for EncoderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gcn" => Ok(EncoderKind::Gcn),
            "mlp" => Ok(EncoderKind::Mlp),
            other => Err(Error::InvalidArgument(format!("unknown encoder kind {other:?}"))),
        }
    }
}

/// Layer widths `(d0, h, d)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "[usize; 3]", into = "[usize; 3]")]
pub struct EncoderDims {
    pub input: usize,
    pub hidden: usize,
    pub output: usize,
}

impl From<[usize; 3]> for EncoderDims {
    fn from([input, hidden, output]: [usize; 3]) -> Self {
        Self { input, hidden, output }
    }
}

impl From<EncoderDims> for [usize; 3] {
    fn from(d: EncoderDims) -> Self {
        [d.input, d.hidden, d.output]
    }
}

impl EncoderDims {
    pub fn new(input: usize, hidden: usize, output: usize) -> Self {
        Self { input, hidden, output }
    }

    fn validate(&self) -> Result<()> {
        if self.input == 0 || self.hidden == 0 || self.output == 0 {
            return Err(Error::InvalidArgument(format!(
                "encoder dims must be positive, got ({}, {}, {})",
                self.input, self.hidden, self.output
            )));
        }
        Ok(())
    }

    pub fn num_params(&self) -> usize {
        self.input * self.hidden + self.hidden * self.output
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    kind: EncoderKind,
    w1: DenseMatrix,
    w2: DenseMatrix,
}

impl EncoderParams {
    /// `w1` is `d0 × h`, `w2` is `h × d`.
    pub fn from_weights(kind: EncoderKind, w1: DenseMatrix, w2: DenseMatrix) -> Result<Self> {
        if w1.cols() != w2.rows() {
            return Err(Error::shape("encoder weights", format!("w2 with {} rows", w1.cols()), w2.rows()));
        }
        let params = Self { kind, w1, w2 };
        params.dims().validate()?;
        for w in [&params.w1, &params.w2] {
            if !w.is_finite() {
                return Err(Error::InvalidArgument("encoder weights must be finite".into()));
            }
        }
        Ok(params)
    }

    pub fn kind(&self) -> EncoderKind {
        self.kind
    }

    pub fn dims(&self) -> EncoderDims {
        EncoderDims::new(self.w1.rows(), self.w1.cols(), self.w2.cols())
    }

    pub fn w1(&self) -> &DenseMatrix {
        &self.w1
    }

    pub fn w2(&self) -> &DenseMatrix {
        &self.w2
    }

    /// `w1` then `w2`, each row-major.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dims().num_params());
        v.extend_from_slice(self.w1.as_slice());
        v.extend_from_slice(self.w2.as_slice());
        v
    }

    /// Inverse of [`to_flat`](Self::to_flat) for the same kind and dims.
    pub fn with_flat(&self, flat: &[f64]) -> Result<Self> {
        let dims = self.dims();
        if flat.len() != dims.num_params() {
            return Err(Error::shape("with_flat", dims.num_params(), flat.len()));
        }
        let (a, b) = flat.split_at(dims.input * dims.hidden);
        Self::from_weights(
            self.kind,
            DenseMatrix::new(dims.input, dims.hidden, a.to_vec())?,
            DenseMatrix::new(dims.hidden, dims.output, b.to_vec())?,
        )
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let ckpt = Checkpoint {
            kind: self.kind,
            dims: self.dims(),
            w1: self.w1.as_slice().to_vec(),
            w2: self.w2.as_slice().to_vec(),
        };
        let text = serde_json::to_string(&ckpt).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ckpt: Checkpoint = serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
        let d = ckpt.dims;
        let w1 = DenseMatrix::new(d.input, d.hidden, ckpt.w1)
            .map_err(|_| Error::InconsistentDimensions(format!("w1 does not hold {}x{} values", d.input, d.hidden)))?;
        let w2 = DenseMatrix::new(d.hidden, d.output, ckpt.w2)
            .map_err(|_| Error::InconsistentDimensions(format!("w2 does not hold {}x{} values", d.hidden, d.output)))?;
        Self::from_weights(ckpt.kind, w1, w2)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Checkpoint {
    kind: EncoderKind,
    dims: EncoderDims,
    w1: Vec<f64>,
    w2: Vec<f64>,
}

/// Xavier-uniform weights, entries in `±√(6/(fan_in + fan_out))`.
pub fn init_params(kind: EncoderKind, dims: EncoderDims, seed: u64) -> Result<EncoderParams> {
    dims.validate()?;
    let mut rng = seeded_rng(seed, streams::ENCODER_INIT);
    let mut xavier = |fan_in: usize, fan_out: usize| {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        DenseMatrix::from_fn(fan_in, fan_out, |_, _| rng.random_range(-bound..=bound))
    };
    let w1 = xavier(dims.input, dims.hidden);
    let w2 = xavier(dims.hidden, dims.output);
    EncoderParams::from_weights(kind, w1, w2)
}

/// The propagation matrix the encoder kind expects: `Â` for GCN, `I` for MLP.
pub fn propagation_matrix(g: &Graph, kind: EncoderKind) -> DenseMatrix {
    match kind {
        EncoderKind::Gcn => gcn_normalize(g),
        EncoderKind::Mlp => DenseMatrix::identity(g.num_nodes()),
    }
}

/// Activations kept for [`backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    x: DenseMatrix,
    a_hat: CsrMatrix,
    pre1: DenseMatrix,
    hidden: DenseMatrix,
    z0: DenseMatrix,
    norms: Vec<f64>,
    z: DenseMatrix,
}

impl ForwardCache {
    pub fn pre_activation(&self) -> &DenseMatrix {
        &self.pre1
    }

    pub fn hidden(&self) -> &DenseMatrix {
        &self.hidden
    }

    pub fn unnormalized(&self) -> &DenseMatrix {
        &self.z0
    }

    pub fn column_norms(&self) -> &[f64] {
        &self.norms
    }

    pub fn num_nodes(&self) -> usize {
        self.z.cols()
    }
}

pub fn forward(params: &EncoderParams, a_hat: &DenseMatrix, x: &DenseMatrix) -> Result<(DenseMatrix, ForwardCache)> {
    let dims = params.dims();
    let n = x.cols();
    if x.rows() != dims.input {
        return Err(Error::shape("forward features", format!("{} rows", dims.input), x.rows()));
    }
    if a_hat.shape() != (n, n) {
        return Err(Error::shape("forward propagation", format!("{n}x{n}"), format!("{}x{}", a_hat.rows(), a_hat.cols())));
    }
    let a = CsrMatrix::from_dense(a_hat);

    let pre1 = a.left_mul_transposed(&params.w1.tr_matmul(x));
    let mut hidden = pre1.clone();
    hidden.as_mut_slice().iter_mut().for_each(|v| *v = v.max(0.0));
    let z0 = a.left_mul_transposed(&params.w2.tr_matmul(&hidden));

    let norms = z0.column_norms();
    let z = DenseMatrix::from_fn(z0.rows(), n, |r, c| {
        if norms[c] < ZERO_NORM {
            0.0
        } else {
            z0[(r, c)] / norms[c]
        }
    });
    let cache = ForwardCache {
        x: x.clone(),
        a_hat: a,
        pre1,
        hidden,
        z0,
        norms,
        z: z.clone(),
    };
    Ok((z, cache))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderGrads {
    pub w1: DenseMatrix,
    pub w2: DenseMatrix,
}

impl EncoderGrads {
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = self.w1.as_slice().to_vec();
        v.extend_from_slice(self.w2.as_slice());
        v
    }
}

/// Parameter gradients of a loss whose gradient with respect to `Z` is
/// `upstream`.
pub fn backward(params: &EncoderParams, cache: &ForwardCache, upstream: &DenseMatrix) -> Result<EncoderGrads> {
    let (d, n) = cache.z.shape();
    if params.dims().output != d || params.dims().hidden != cache.hidden.rows() {
        return Err(Error::shape("backward", "cache from these params", "mismatched cache"));
    }
    if upstream.shape() != (d, n) {
        return Err(Error::shape("backward upstream", format!("{d}x{n}"), format!("{}x{}", upstream.rows(), upstream.cols())));
    }

    // d(v/|v|) = (I - v̂v̂ᵀ)/|v|
    let mut dz0 = DenseMatrix::zeros(d, n);
    for c in 0..n {
        let norm = cache.norms[c];
        if norm < ZERO_NORM {
            continue;
        }
        let zc = cache.z.column(c);
        let gc = upstream.column(c);
        let proj = dot(&zc, &gc);
        for r in 0..d {
            dz0[(r, c)] = (gc[r] - zc[r] * proj) / norm;
        }
    }

    let dp2 = cache.a_hat.left_mul(&dz0);
    let w2 = cache.hidden.matmul_tr(&dp2);
    let mut dpre1 = params.w2.matmul(&dp2);
    for (g, &p) in dpre1.as_mut_slice().iter_mut().zip(cache.pre1.as_slice()) {
        if p <= 0.0 {
            *g = 0.0;
        }
    }
    let dp1 = cache.a_hat.left_mul(&dpre1);
    let w1 = cache.x.matmul_tr(&dp1);
    Ok(EncoderGrads { w1, w2 })
}

/// Writes embeddings as TSV, one line per node: the node id, then its `d`
/// values.
pub fn save_embeddings(z: &DenseMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = String::new();
    for c in 0..z.cols() {
        text.push_str(&c.to_string());
        for r in 0..z.rows() {
            text.push('\t');
            text.push_str(&z[(r, c)].to_string());
        }
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Reads the format written by [`save_embeddings`]. Every node id in
/// `0..N` must appear exactly once; lines may come in any order.
pub fn load_embeddings(path: impl AsRef<Path>) -> Result<DenseMatrix> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let parse = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut rows: Vec<(usize, Vec<f64>)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut toks = line.split_whitespace();
        let id: usize = toks
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| parse(i + 1, "expected a node id".into()))?;
        let values = toks
            .map(|t| t.parse::<f64>().map_err(|_| parse(i + 1, format!("bad value {t:?}"))))
            .collect::<Result<Vec<f64>>>()?;
        if let Some((_, first)) = rows.first() {
            if first.len() != values.len() {
                return Err(parse(i + 1, format!("expected {} values, found {}", first.len(), values.len())));
            }
        }
        rows.push((id, values));
    }
    let n = rows.len();
    let d = rows.first().map_or(0, |r| r.1.len());
    if n == 0 || d == 0 {
        return Err(Error::InconsistentDimensions(format!("{} holds no embeddings", path.display())));
    }
    let mut z = DenseMatrix::zeros(d, n);
    let mut seen = vec![false; n];
    for (id, values) in rows {
        if id >= n || seen[id] {
            return Err(Error::InconsistentDimensions(format!(
                "{}: node ids must be 0..{n} without repeats (got {id})",
                path.display()
            )));
        }
        seen[id] = true;
        for (r, v) in values.into_iter().enumerate() {
            z[(r, id)] = v;
        }
    }
    if !z.is_finite() {
        return Err(Error::InvalidArgument(format!("{} contains non-finite values", path.display())));
    }
    Ok(z)
}
