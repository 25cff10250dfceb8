//! Subspace geometry: principal angles, volumes, the orthogonality lift, the
//! two-community decomposition of the rate reduction, cosine Gram matrices
//! and PCA projections.

use std::fmt::Write as _;

use rand::Rng as _;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{dot, logdet_psd, psd_sqrt, svd, DenseMatrix, GramSide};
use crate::objective::{coding_rate, group_coding_rate};
use crate::{seeded_rng, Rng};

/// Relative singular-value cutoff when extracting a subspace basis.
pub const RANK_TOL: f64 = 1e-10;

/// Orthonormal basis of the column span, `EmptySpan` if numerically rank 0.
fn span_basis(m: &DenseMatrix) -> Result<DenseMatrix> {
    let s = svd(m)?;
    let r = s.rank(RANK_TOL);
    if r == 0 {
        return Err(Error::EmptySpan);
    }
    Ok(s.u.select_columns(&(0..r).collect::<Vec<_>>()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrincipalSines {
    /// One sine per principal angle, largest angle first.
    pub sines: Vec<f64>,
    pub product: f64,
}

/// Sines of the principal angles between the column spans of `a` and `b`.
///
/// The sines are the singular values of the smaller basis after projecting
/// out the larger span, which stays accurate for small angles where
/// `√(1 − cos²)` would not.
pub fn principal_sines(a: &DenseMatrix, b: &DenseMatrix) -> Result<PrincipalSines> {
    if a.rows() != b.rows() {
        return Err(Error::shape("principal_sines", format!("{} rows", a.rows()), b.rows()));
    }
    let ua = span_basis(a)?;
    let ub = span_basis(b)?;
    let (big, small) = if ua.cols() >= ub.cols() { (ua, ub) } else { (ub, ua) };
    let residual = small.sub(&big.matmul(&big.tr_matmul(&small)));
    let sines: Vec<f64> = svd(&residual)?.singular_values.iter().map(|s| s.clamp(0.0, 1.0)).collect();
    let product = sines.iter().product();
    Ok(PrincipalSines { sines, product })
}

/// `√det(MᵀM)`, the volume of the parallelotope spanned by the columns.
pub fn volume(m: &DenseMatrix) -> Result<f64> {
    let (rows, cols) = m.shape();
    if cols == 0 || cols > rows {
        return Err(Error::RankDeficient);
    }
    let s = svd(m)?;
    if s.rank(RANK_TOL) < cols {
        return Err(Error::RankDeficient);
    }
    Ok((0.5 * logdet_psd(&crate::linalg::gram(m, GramSide::NodeSide))?).exp())
}

/// `|vol(A₁|A₂) − vol(A₁)·vol(A₂)·Π sin θ| / vol(A₁|A₂)`
pub fn check_volume_theorem(a1: &DenseMatrix, a2: &DenseMatrix) -> Result<f64> {
    let joint = volume(&a1.hstack(a2))?;
    let sines = principal_sines(a1, a2)?;
    Ok((joint - volume(a1)? * volume(a2)? * sines.product).abs() / joint)
}

/// Largest off-diagonal magnitude of `Z̃ᵀZ̃`, where `Z̃` is the PSD square
/// root of `I + α ZᵀZ`.
pub fn check_orthogonality_lift(z: &DenseMatrix, alpha: f64) -> Result<f64> {
    if alpha.is_nan() || alpha <= 0.0 {
        return Err(Error::InvalidArgument(format!("alpha must be positive, got {alpha}")));
    }
    let lifted = orthogonality_lift(z, alpha)?;
    let p = lifted.tr_matmul(&lifted);
    let n = p.rows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                worst = worst.max(p[(i, j)].abs());
            }
        }
    }
    Ok(worst)
}

/// `Z̃ = (I + α ZᵀZ)^{1/2}`, `N × N`.
pub fn orthogonality_lift(z: &DenseMatrix, alpha: f64) -> Result<DenseMatrix> {
    psd_sqrt(&crate::linalg::gram(z, GramSide::NodeSide).identity_plus_scaled(alpha))
}

/// Two planted communities of size `M`; columns `0..M` of `z` belong to the
/// first, `M..2M` to the second.
#[derive(Debug, Clone)]
pub struct TwoCommunityCase {
    pub community_size: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub z: DenseMatrix,
    pub epsilon: f64,
}

impl TwoCommunityCase {
    fn validate(&self) -> Result<()> {
        let m = self.community_size;
        if m == 0 || self.z.cols() != 2 * m {
            return Err(Error::shape("two-community case", format!("{} columns", 2 * m), self.z.cols()));
        }
        if !(0.0..=1.0).contains(&self.p_out) || !(self.p_out..=1.0).contains(&self.p_in) {
            return Err(Error::InvalidArgument(format!(
                "need 0 <= p_out <= p_in <= 1, got p_in={} p_out={}",
                self.p_in, self.p_out
            )));
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return Err(Error::InvalidArgument("epsilon must be positive".into()));
        }
        for (c, n) in self.z.column_norms().into_iter().enumerate() {
            if n != 0.0 && (n - 1.0).abs() > 1e-8 {
                return Err(Error::InvalidArgument(format!("column {c} has norm {n}, expected 1 or 0")));
            }
        }
        Ok(())
    }

    fn block(&self, j: usize) -> DenseMatrix {
        let m = self.community_size;
        self.z.select_columns(&(j * m..(j + 1) * m).collect::<Vec<_>>())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TwoCommunityReport {
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
    pub beta: f64,
    /// The decomposition with `¼` block exponents and `½ log β`; kept for
    /// comparison, it does not match `lhs` in general.
    pub rhs_quarter_form: f64,
}

/// Evaluates the rate reduction under the two soft community memberships
/// directly, and through its split into per-community terms plus `log β`:
///
/// ```text
/// ΔR = Σ_j [ ½ logdet(I + α Z_jᵀZ_j) − (pⁱ−pᵒ)/(2N) logdet(I + d/(Mε²) Z_jᵀZ_j) ] + log β
/// ```
///
/// with `α = d/(Nε²)` and `β` the product of principal sines between the
/// column blocks of the lift `Z̃`.
pub fn check_two_community_identity(case: &TwoCommunityCase) -> Result<TwoCommunityReport> {
    case.validate()?;
    let m = case.community_size;
    let n = 2 * m;
    let d = case.z.rows();
    let eps2 = case.epsilon * case.epsilon;
    let c = case.p_in - case.p_out;

    // direct: R(Z) − (1/M) Σ_j R(Z | Cʲ), where Cʲ puts weight pⁱ−pᵒ on community j
    let mut lhs = coding_rate(&case.z, case.epsilon)?;
    if c > 0.0 {
        for j in 0..2 {
            let weights: Vec<f64> = (0..n).map(|i| if i / m == j { c } else { 0.0 }).collect();
            lhs -= group_coding_rate(&case.z, &weights, case.epsilon)? / m as f64;
        }
    }

    let alpha = d as f64 / (n as f64 * eps2);
    let lifted = orthogonality_lift(&case.z, alpha)?;
    let first: Vec<usize> = (0..m).collect();
    let second: Vec<usize> = (m..n).collect();
    let beta = principal_sines(&lifted.select_columns(&first), &lifted.select_columns(&second))?.product;

    let mut whole = 0.0;
    let mut group = 0.0;
    for j in 0..2 {
        let zj = case.block(j);
        let g = crate::linalg::gram(&zj, GramSide::NodeSide);
        whole += logdet_psd(&g.identity_plus_scaled(alpha))?;
        group += c / (2.0 * n as f64) * logdet_psd(&g.identity_plus_scaled(d as f64 / (m as f64 * eps2)))?;
    }
    let rhs = 0.5 * whole - group + beta.ln();
    let rhs_quarter_form = 0.25 * whole - group + 0.5 * beta.ln();
    Ok(TwoCommunityReport {
        lhs,
        rhs,
        residual: (lhs - rhs).abs() / lhs.abs().max(1.0),
        beta,
        rhs_quarter_form,
    })
}

/// Pairwise cosine similarity of the columns; rows and columns belonging to
/// zero columns are 0.
pub fn cosine_gram(z: &DenseMatrix) -> DenseMatrix {
    let n = z.cols();
    let norms = z.column_norms();
    let cols: Vec<Option<Vec<f64>>> = (0..n)
        .map(|c| {
            (norms[c] >= 1e-12).then(|| z.column(c).into_iter().map(|v| v / norms[c]).collect())
        })
        .collect();
    let mut g = DenseMatrix::zeros(n, n);
    for i in 0..n {
        let Some(ci) = &cols[i] else { continue };
        g[(i, i)] = 1.0;
        for j in i + 1..n {
            if let Some(cj) = &cols[j] {
                let v = dot(ci, cj).clamp(-1.0, 1.0);
                g[(i, j)] = v;
                g[(j, i)] = v;
            }
        }
    }
    g
}

/// Projects the mean-centred columns onto the top `k` principal directions.
/// Each direction is signed so its largest-magnitude entry is positive.
pub fn pca_project(z: &DenseMatrix, k: usize) -> Result<DenseMatrix> {
    let (d, n) = z.shape();
    if k == 0 || k > d.min(n) {
        return Err(Error::InvalidArgument(format!("k must be in 1..={}, got {k}", d.min(n))));
    }
    let means: Vec<f64> = (0..d).map(|r| z.row(r).iter().sum::<f64>() / n as f64).collect();
    let centred = DenseMatrix::from_fn(d, n, |r, c| z[(r, c)] - means[r]);
    let s = svd(&centred)?;
    let mut dirs = s.u.select_columns(&(0..k).collect::<Vec<_>>());
    for c in 0..k {
        let col = dirs.column(c);
        let pivot = col
            .iter()
            .copied()
            .reduce(|best, v| if v.abs() > best.abs() { v } else { best })
            .unwrap_or(0.0);
        if pivot < 0.0 {
            for r in 0..d {
                dirs[(r, c)] = -dirs[(r, c)];
            }
        }
    }
    Ok(dirs.tr_matmul(&centred))
}

/// Principal-sine product between the dominant subspaces of two classes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassPairSines {
    pub class_a: usize,
    pub class_b: usize,
    pub rank_a: usize,
    pub rank_b: usize,
    pub product: f64,
}

/// Basis of the directions whose singular value is at least
/// `rel_tol · σ_max`.
fn dominant_basis(m: &DenseMatrix, rel_tol: f64) -> Result<DenseMatrix> {
    let s = svd(m)?;
    let r = s.rank(rel_tol.max(RANK_TOL));
    if r == 0 {
        return Err(Error::EmptySpan);
    }
    Ok(s.u.select_columns(&(0..r).collect::<Vec<_>>()))
}

/// Every pair of classes, `class_a < class_b`. Each class is represented by
/// the span of its dominant directions (singular values at least
/// `rel_tol · σ_max` of that class's embedding block); with `rel_tol` at the
/// numerical floor, small noise makes every class span the whole space and
/// the products collapse to zero.
pub fn class_pair_sines(z: &DenseMatrix, labels: &[usize], rel_tol: f64) -> Result<Vec<ClassPairSines>> {
    if labels.len() != z.cols() {
        return Err(Error::shape("class_pair_sines", z.cols(), labels.len()));
    }
    if !(0.0..1.0).contains(&rel_tol) {
        return Err(Error::InvalidArgument(format!("rel_tol must be in [0, 1), got {rel_tol}")));
    }
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let bases: Vec<Option<DenseMatrix>> = (0..k)
        .map(|c| {
            let members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
            if members.is_empty() {
                Ok(None)
            } else {
                dominant_basis(&z.select_columns(&members), rel_tol).map(Some)
            }
        })
        .collect::<Result<_>>()?;
    let mut out = Vec::new();
    for a in 0..k {
        for b in a + 1..k {
            if let (Some(ua), Some(ub)) = (&bases[a], &bases[b]) {
                out.push(ClassPairSines {
                    class_a: a,
                    class_b: b,
                    rank_a: ua.cols(),
                    rank_b: ub.cols(),
                    product: principal_sines(ua, ub)?.product,
                });
            }
        }
    }
    Ok(out)
}

/// CSV with one row per column of `m` (one per node): `node,<names...>`.
pub fn node_rows_csv(m: &DenseMatrix, names: &[String]) -> String {
    assert_eq!(names.len(), m.rows(), "one name per row of m");
    let mut s = String::from("node");
    for name in names {
        s.push(',');
        s.push_str(name);
    }
    s.push('\n');
    for c in 0..m.cols() {
        let _ = write!(s, "{c}");
        for r in 0..m.rows() {
            let _ = write!(s, ",{}", m[(r, c)]);
        }
        s.push('\n');
    }
    s
}

fn uniform_matrix(rows: usize, cols: usize, rng: &mut Rng) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

fn unit_columns(rows: usize, cols: usize, rng: &mut Rng) -> DenseMatrix {
    let mut z = uniform_matrix(rows, cols, rng);
    let norms = z.column_norms();
    for r in 0..rows {
        for c in 0..cols {
            z[(r, c)] /= norms[c];
        }
    }
    z
}

/// Random instance for [`check_volume_theorem`]: two blocks in `ℝⁿ`,
/// `n ≤ 12`, together at most `n` columns.
pub fn random_volume_instance(rng: &mut Rng) -> (DenseMatrix, DenseMatrix) {
    let n = rng.random_range(2..=12);
    let k1 = rng.random_range(1..n);
    let k2 = rng.random_range(1..=n - k1);
    (uniform_matrix(n, k1, rng), uniform_matrix(n, k2, rng))
}

/// Random `d × N` matrix with mutually orthogonal, randomly scaled columns.
pub fn random_orthogonal_columns(d: usize, n: usize, rng: &mut Rng) -> Result<DenseMatrix> {
    if n > d {
        return Err(Error::InvalidArgument(format!("cannot fit {n} orthogonal columns in dimension {d}")));
    }
    let mut q = svd(&uniform_matrix(d, n, rng))?.u;
    for c in 0..n {
        let s = rng.random_range(0.5..2.0);
        for r in 0..d {
            q[(r, c)] *= s;
        }
    }
    Ok(q)
}

/// Random case with `M ≤ 6`, `d ≤ 8`, unit columns and `pᵒ < pⁱ`.
pub fn random_two_community_case(rng: &mut Rng) -> TwoCommunityCase {
    let m = rng.random_range(1..=6);
    let d = rng.random_range(2..=8);
    let p_in = rng.random_range(0.2..=1.0);
    let p_out = rng.random_range(0.0..p_in);
    let epsilon = [0.05, 0.1, 0.5, 1.0][rng.random_range(0..4)];
    TwoCommunityCase {
        community_size: m,
        p_in,
        p_out,
        z: unit_columns(d, 2 * m, rng),
        epsilon,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatteryResult {
    pub name: &'static str,
    pub trials: usize,
    pub max_residual: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoryReport {
    pub seed: u64,
    pub batteries: Vec<BatteryResult>,
    pub max_residual: f64,
    pub passed: bool,
}

fn battery(name: &'static str, tolerance: f64, residuals: Vec<f64>) -> BatteryResult {
    let max_residual = residuals.iter().copied().fold(0.0, f64::max);
    BatteryResult {
        name,
        trials: residuals.len(),
        max_residual,
        tolerance,
        passed: residuals.iter().all(|r| r.is_finite() && *r < tolerance),
    }
}

/// Runs `trials` random instances of each theory check.
pub fn verify_theory(trials: usize, seed: u64) -> Result<TheoryReport> {
    let mut rng = seeded_rng(seed, 0);
    let mut volume = Vec::with_capacity(trials);
    let mut lift = Vec::with_capacity(trials);
    let mut two = Vec::with_capacity(trials);
    for _ in 0..trials {
        let (a1, a2) = random_volume_instance(&mut rng);
        volume.push(check_volume_theorem(&a1, &a2)?);
        let z = random_orthogonal_columns(8, 5, &mut rng)?;
        lift.push(check_orthogonality_lift(&z, 8.0 / (5.0 * 0.05 * 0.05))?);
        two.push(check_two_community_identity(&random_two_community_case(&mut rng))?.residual);
    }
    let batteries = vec![
        battery("volume_theorem", 1e-8, volume),
        battery("orthogonality_lift", 1e-10, lift),
        battery("two_community_identity", 1e-6, two),
    ];
    let max_residual = batteries.iter().map(|b| b.max_residual).fold(0.0, f64::max);
    let passed = batteries.iter().all(|b| b.passed);
    Ok(TheoryReport {
        seed,
        batteries,
        max_residual,
        passed,
    })
}
