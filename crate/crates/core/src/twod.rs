//! Exact two-dimensional linear-Gaussian system for (observable, field).
//!
//! Continuous model: `dX = A (X - m) dt + Σ dW` with
//! `A = [[-θ_ψ, β_ψ], [β_v, -θ_v]]` and diffusion `D = ΣΣᵀ`. Over one
//! interval the exact law is a VAR(1) with `Φ = e^{AΔ}` and
//! `Q = ∫₀^Δ e^{As} D e^{Aᵀs} ds`. Restricting the off-diagonals of `Φ`
//! gives the decoupled, feedforward (field drives observable) and
//! bidirectional structures.

use alloc::string::String;
use alloc::vec::Vec;
use alloc::{format, vec};

use nalgebra::{DMatrix, Matrix2, Matrix4, Vector2, Vector4};

use crate::error::{Error, Result};
use crate::model::LikelihoodFit;
use crate::series::AlignedPair;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Structure {
    Decoupled,
    Feedforward,
    Bidirectional,
}

impl Structure {
    pub const ALL: [Structure; 3] = [Structure::Decoupled, Structure::Feedforward, Structure::Bidirectional];

    pub fn n_params(&self) -> usize {
        match self {
            Structure::Decoupled => 7,
            Structure::Feedforward => 8,
            Structure::Bidirectional => 9,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Structure::Decoupled => "decoupled",
            Structure::Feedforward => "feedforward",
            Structure::Bidirectional => "bidirectional",
        }
    }

    /// Does the observable equation load on the lagged field / the field
    /// equation on the lagged observable.
    fn couplings(&self) -> (bool, bool) {
        match self {
            Structure::Decoupled => (false, false),
            Structure::Feedforward => (true, false),
            Structure::Bidirectional => (true, true),
        }
    }
}

/// Matrix exponential by scaling and squaring with a Taylor core.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let norm = (0..n).map(|i| (0..n).map(|j| a[(i, j)].abs()).sum::<f64>()).fold(0.0, f64::max);
    let mut s = 0u32;
    let mut scale = 1.0;
    while norm * scale > 0.25 {
        scale *= 0.5;
        s += 1;
    }
    let b = a * scale;
    let mut term = DMatrix::<f64>::identity(n, n);
    let mut sum = term.clone();
    for k in 1..=24 {
        term = &term * &b / k as f64;
        sum += &term;
        if term.abs().max() < 1e-18 * sum.abs().max() {
            break;
        }
    }
    for _ in 0..s {
        sum = &sum * &sum;
    }
    sum
}

pub fn expm2(a: &Matrix2<f64>) -> Matrix2<f64> {
    let d = expm(&DMatrix::from_row_slice(2, 2, a.transpose().as_slice()));
    Matrix2::new(d[(0, 0)], d[(0, 1)], d[(1, 0)], d[(1, 1)])
}

/// Principal real logarithm of a 2×2 matrix.
///
/// Every analytic function of a 2×2 matrix is `a I + b Φ`, with `(a, b)`
/// fixed by interpolating the function at the eigenvalues.
pub fn logm2(phi: &Matrix2<f64>) -> Result<Matrix2<f64>> {
    let tr = phi.trace();
    let det = phi.determinant();
    let delta = tr * tr - 4.0 * det;
    let scale = tr.abs().max(1e-300);
    let (a, b) = if delta < -1e-14 * scale * scale {
        // Complex pair r e^{±iω}.
        let half_im = libm::sqrt(-delta) / 2.0;
        let re = tr / 2.0;
        let r = libm::sqrt(det);
        let w = libm::atan2(half_im, re);
        let b = w / half_im;
        (libm::log(r) - b * re, b)
    } else {
        let sq = libm::sqrt(delta.max(0.0));
        let l1 = (tr + sq) / 2.0;
        let l2 = (tr - sq) / 2.0;
        if !(l1 > 0.0 && l2 > 0.0) {
            return Err(Error::NoRealLogarithm);
        }
        let d = l1 - l2;
        let b = if d > 1e-12 * l1 { libm::log1p(d / l2) / d } else { 1.0 / (0.5 * (l1 + l2)) };
        (libm::log(l1) - b * l1, b)
    };
    Ok(Matrix2::identity() * a + phi * b)
}

/// `vec(A X + X Aᵀ) = (A ⊕ A) vec(X)` for column-major `vec`.
fn kron_sum(a: &Matrix2<f64>) -> Matrix4<f64> {
    let mut m = Matrix4::zeros();
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                // I ⊗ A block (j, j) holds A; A ⊗ I places a[i][k] on the diagonals.
                m[(j * 2 + i, j * 2 + k)] += a[(i, k)];
                m[(i * 2 + j, k * 2 + j)] += a[(i, k)];
            }
        }
    }
    m
}

fn vec2(x: &Matrix2<f64>) -> Vector4<f64> {
    Vector4::new(x[(0, 0)], x[(1, 0)], x[(0, 1)], x[(1, 1)])
}

fn unvec2(v: &Vector4<f64>) -> Matrix2<f64> {
    Matrix2::new(v[0], v[2], v[1], v[3])
}

/// `∫₀^dt e^{Ms} ds` from the top-right block of `exp([[M, I], [0, 0]] dt)`.
fn integrated_exp(m: &Matrix4<f64>, dt: f64) -> Matrix4<f64> {
    let mut big = DMatrix::<f64>::zeros(8, 8);
    for i in 0..4 {
        for j in 0..4 {
            big[(i, j)] = m[(i, j)] * dt;
        }
        big[(i, 4 + i)] = dt;
    }
    let e = expm(&big);
    Matrix4::from_fn(|i, j| e[(i, 4 + j)])
}

/// Continuous-time system.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LinearSystem2D {
    pub drift: [[f64; 2]; 2],
    /// Stationary means `(m_ψ, m_v)`.
    pub mean: [f64; 2],
    pub diffusion: [[f64; 2]; 2],
}

fn to_m2(a: &[[f64; 2]; 2]) -> Matrix2<f64> {
    Matrix2::new(a[0][0], a[0][1], a[1][0], a[1][1])
}

fn from_m2(m: &Matrix2<f64>) -> [[f64; 2]; 2] {
    [[m[(0, 0)], m[(0, 1)]], [m[(1, 0)], m[(1, 1)]]]
}

impl LinearSystem2D {
    /// Builds the system from named rates, with the sign convention of the
    /// drift matrix: the diagonal stores `-θ`.
    pub fn from_rates(theta_psi: f64, beta_psi: f64, beta_v: f64, theta_v: f64, mean: [f64; 2], diffusion: [[f64; 2]; 2]) -> Self {
        Self { drift: [[-theta_psi, beta_psi], [beta_v, -theta_v]], mean, diffusion }
    }

    pub fn theta_psi(&self) -> f64 {
        -self.drift[0][0]
    }
    pub fn beta_psi(&self) -> f64 {
        self.drift[0][1]
    }
    pub fn beta_v(&self) -> f64 {
        self.drift[1][0]
    }
    pub fn theta_v(&self) -> f64 {
        -self.drift[1][1]
    }

    /// All eigenvalues of the drift have negative real part.
    pub fn is_stable(&self) -> bool {
        let a = to_m2(&self.drift);
        a.trace() < 0.0 && a.determinant() > 0.0
    }

    /// Exact one-interval transition, innovation covariance and intercept.
    pub fn discretize(&self, dt: f64) -> Discrete2D {
        let a = to_m2(&self.drift);
        let phi = expm2(&(a * dt));
        let s = integrated_exp(&kron_sum(&a), dt);
        let q = unvec2(&(s * vec2(&to_m2(&self.diffusion))));
        let q = (q + q.transpose()) * 0.5;
        let m = Vector2::new(self.mean[0], self.mean[1]);
        let c = (Matrix2::identity() - phi) * m;
        Discrete2D { transition: from_m2(&phi), innovation_cov: from_m2(&q), intercept: [c[0], c[1]] }
    }

    /// Stationary covariance: solves `A X + X Aᵀ + D = 0`.
    pub fn stationary_cov(&self) -> Result<[[f64; 2]; 2]> {
        if !self.is_stable() {
            return Err(Error::Unstable);
        }
        let m = kron_sum(&to_m2(&self.drift));
        let rhs = -vec2(&to_m2(&self.diffusion));
        let x = m.lu().solve(&rhs).ok_or_else(|| Error::Singular("Lyapunov operator".into()))?;
        Ok(from_m2(&unvec2(&x)))
    }
}

/// Discrete one-interval law `X' = c + Φ X + η`, `η ~ N(0, Q)`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Discrete2D {
    pub transition: [[f64; 2]; 2],
    pub innovation_cov: [[f64; 2]; 2],
    pub intercept: [f64; 2],
}

/// Maps a discrete law back to continuous time.
pub fn continuous_from_discrete(d: &Discrete2D, dt: f64) -> Result<LinearSystem2D> {
    let phi = to_m2(&d.transition);
    let a = logm2(&phi)? / dt;
    let s = integrated_exp(&kron_sum(&a), dt);
    let dv = s
        .lu()
        .solve(&vec2(&to_m2(&d.innovation_cov)))
        .ok_or_else(|| Error::Singular("integrated covariance operator".into()))?;
    let dm = unvec2(&dv);
    let dm = (dm + dm.transpose()) * 0.5;
    let min_eig = {
        let t = dm.trace() / 2.0;
        let det = dm.determinant();
        t - libm::sqrt((t * t - det).max(0.0))
    };
    if min_eig < -1e-8 {
        return Err(Error::InconsistentDiffusion(min_eig));
    }
    let i_phi = Matrix2::identity() - phi;
    let c = Vector2::new(d.intercept[0], d.intercept[1]);
    let m = i_phi.lu().solve(&c).ok_or(Error::Unstable)?;
    Ok(LinearSystem2D { drift: from_m2(&a), mean: [m[0], m[1]], diffusion: from_m2(&dm) })
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Var1Fit {
    pub structure: Structure,
    pub intercepts: [f64; 2],
    pub transition: [[f64; 2]; 2],
    pub innovation_cov: [[f64; 2]; 2],
    /// Standard errors of `transition` (zero for restricted entries).
    pub transition_se: [[f64; 2]; 2],
    pub loglik: f64,
    pub aic: f64,
    pub bic: f64,
    pub n_trans: usize,
    pub gls_rounds: usize,
}

impl Var1Fit {
    pub fn discrete(&self) -> Discrete2D {
        Discrete2D { transition: self.transition, innovation_cov: self.innovation_cov, intercept: self.intercepts }
    }
}

impl LikelihoodFit for Var1Fit {
    fn name(&self) -> String {
        String::from(self.structure.name())
    }
    fn loglik(&self) -> f64 {
        self.loglik
    }
    fn n_params(&self) -> usize {
        self.structure.n_params()
    }
    fn n_trans(&self) -> usize {
        self.n_trans
    }
}

fn var_loglik(n: usize, q: &Matrix2<f64>) -> f64 {
    let nf = n as f64;
    -nf * (LN_2PI + 1.0) - 0.5 * nf * libm::log(q.determinant())
}

/// Exact Gaussian VAR(1) MLE under the structure's zero restrictions.
///
/// The bidirectional model has identical regressors in both equations, so
/// equation-by-equation least squares is the MLE. Restricted structures use
/// iterated feasible GLS (seemingly unrelated regressions) until the log
/// likelihood changes by less than 1e-12.
pub fn fit_var1(pair: &AlignedPair, structure: Structure) -> Result<Var1Fit> {
    let n_obs = pair.len();
    if n_obs < 20 {
        return Err(Error::InsufficientData { needed: 20, got: n_obs });
    }
    let n = n_obs - 1;
    let x = &pair.x;
    let y = &pair.y;
    // Candidate regressor columns: 1, x_lag, y_lag.
    let ones = vec![1.0; n];
    let cols: [&[f64]; 3] = [&ones, &x[..n], &y[..n]];
    let (psi_on_v, v_on_psi) = structure.couplings();
    let idx: [Vec<usize>; 2] = [
        if psi_on_v { vec![0, 1, 2] } else { vec![0, 1] },
        if v_on_psi { vec![0, 1, 2] } else { vec![0, 2] },
    ];
    let targets: [&[f64]; 2] = [&x[1..], &y[1..]];
    // Cross products, computed once.
    let dot = |a: &[f64], b: &[f64]| crate::stats::compensated_sum(a.iter().zip(b).map(|(u, v)| u * v));
    let zz: [[f64; 3]; 3] = core::array::from_fn(|i| core::array::from_fn(|j| dot(cols[i], cols[j])));
    let zy: [[f64; 2]; 3] = core::array::from_fn(|i| core::array::from_fn(|e| dot(cols[i], targets[e])));
    let yy: [[f64; 2]; 2] = core::array::from_fn(|a| core::array::from_fn(|b| dot(targets[a], targets[b])));
    let k = [idx[0].len(), idx[1].len()];
    let kt = k[0] + k[1];
    let pos = |e: usize, r: usize| if e == 0 { r } else { k[0] + r };

    // Residual covariance implied by stacked coefficients, from the cross
    // products: E_aᵀE_b = y_aᵀy_b − b_aᵀZ_aᵀy_b − y_aᵀZ_b b_b + b_aᵀZ_aᵀZ_b b_b.
    let resid_cov = |b: &[f64]| -> Matrix2<f64> {
        let mut s = Matrix2::zeros();
        for ea in 0..2 {
            for eb in 0..2 {
                let mut v = yy[ea][eb];
                for (ra, &ia) in idx[ea].iter().enumerate() {
                    v -= b[pos(ea, ra)] * zy[ia][eb];
                }
                for (rb, &ib) in idx[eb].iter().enumerate() {
                    v -= b[pos(eb, rb)] * zy[ib][ea];
                }
                for (ra, &ia) in idx[ea].iter().enumerate() {
                    for (rb, &ib) in idx[eb].iter().enumerate() {
                        v += b[pos(ea, ra)] * zz[ia][ib] * b[pos(eb, rb)];
                    }
                }
                s[(ea, eb)] = v / n as f64;
            }
        }
        (s + s.transpose()) * 0.5
    };
    // GLS step under weight W = Q⁻¹.
    let gls = |w: &Matrix2<f64>| -> Result<(Vec<f64>, DMatrix<f64>)> {
        let mut lhs = DMatrix::<f64>::zeros(kt, kt);
        let mut rhs = DMatrix::<f64>::zeros(kt, 1);
        for ea in 0..2 {
            for (ra, &ia) in idx[ea].iter().enumerate() {
                for eb in 0..2 {
                    rhs[(pos(ea, ra), 0)] += w[(ea, eb)] * zy[ia][eb];
                    for (rb, &ib) in idx[eb].iter().enumerate() {
                        lhs[(pos(ea, ra), pos(eb, rb))] += w[(ea, eb)] * zz[ia][ib];
                    }
                }
            }
        }
        let inv = lhs.clone().try_inverse().ok_or_else(|| Error::Singular("VAR design".into()))?;
        let b = &inv * rhs;
        Ok((b.iter().copied().collect(), inv))
    };

    // Equation-by-equation least squares start (the MLE when unrestricted).
    let mut b = Vec::with_capacity(kt);
    for e in 0..2 {
        let c: Vec<&[f64]> = idx[e].iter().map(|&i| cols[i]).collect();
        let ols = crate::stats::Ols::fit(&c, targets[e])?;
        b.extend(ols.coef);
    }
    let mut q = resid_cov(&b);
    if !(q.determinant() > 0.0) {
        return Err(Error::Degenerate("singular innovation covariance".into()));
    }
    let mut ll = var_loglik(n, &q);
    let mut rounds = 0;
    let mut cov_b;
    if structure == Structure::Bidirectional {
        let w = q.try_inverse().ok_or_else(|| Error::Singular("innovation covariance".into()))?;
        cov_b = gls(&w)?.1;
    } else {
        loop {
            rounds += 1;
            let w = q.try_inverse().ok_or_else(|| Error::Singular("innovation covariance".into()))?;
            let (nb, cb) = gls(&w)?;
            let nq = resid_cov(&nb);
            let nll = var_loglik(n, &nq);
            let change = (nll - ll).abs();
            b = nb;
            q = nq;
            ll = nll;
            cov_b = cb;
            if change < 1e-12 * ll.abs().max(1.0) {
                break;
            }
            if rounds >= 500 {
                return Err(Error::NoConvergence(rounds));
            }
        }
    }
    let mut phi = [[0.0; 2]; 2];
    let mut se = [[0.0; 2]; 2];
    let mut c = [0.0; 2];
    for e in 0..2 {
        for (r, &i) in idx[e].iter().enumerate() {
            let p = pos(e, r);
            match i {
                0 => c[e] = b[p],
                j => {
                    phi[e][j - 1] = b[p];
                    se[e][j - 1] = libm::sqrt(cov_b[(p, p)].max(0.0));
                }
            }
        }
    }
    let kp = structure.n_params();
    Ok(Var1Fit {
        structure,
        intercepts: c,
        transition: phi,
        innovation_cov: from_m2(&q),
        transition_se: se,
        loglik: ll,
        aic: crate::model::aic(kp, ll),
        bic: crate::model::bic(kp, ll, n),
        n_trans: n,
        gls_rounds: rounds,
    })
}

/// Continuous-time system implied by a fitted VAR(1).
pub fn to_continuous(fit: &Var1Fit, dt: f64) -> Result<LinearSystem2D> {
    continuous_from_discrete(&fit.discrete(), dt)
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct KernelSummary {
    /// `β_ψ β_v`, per day squared.
    pub amplitude: f64,
    /// `1/θ_v` in trading days.
    pub timescale: f64,
    /// False when the kernel vanishes identically.
    pub defined: bool,
}

/// Self-memory kernel `K(t) = β_ψ β_v e^{-θ_v t}` left on the observable
/// after eliminating the field coordinate.
pub fn projected_kernel(system: &LinearSystem2D) -> Result<KernelSummary> {
    let theta_v = system.theta_v();
    if !(theta_v > 0.0) {
        return Err(Error::NonRelaxingField(theta_v));
    }
    let amplitude = system.beta_psi() * system.beta_v();
    Ok(KernelSummary { amplitude, timescale: 1.0 / theta_v, defined: amplitude != 0.0 })
}

impl KernelSummary {
    pub fn at(&self, t: f64) -> f64 {
        self.amplitude * libm::exp(-t / self.timescale)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StructureComparison {
    /// Fits in `Structure::ALL` order.
    pub fits: Vec<Var1Fit>,
    pub winner: Structure,
    /// BIC of the runner-up minus BIC of the winner.
    pub dbic_next: f64,
    /// BIC of the decoupled fit minus BIC of the winner.
    pub dbic_vs_decoupled: f64,
    /// Kernel of the bidirectional fit's continuous-time map, or the reason
    /// it could not be formed.
    pub kernel: core::result::Result<KernelSummary, Error>,
}

impl StructureComparison {
    pub fn fit(&self, s: Structure) -> &Var1Fit {
        &self.fits[s as usize]
    }

    /// BIC gain of the best coupled structure over the decoupled one.
    pub fn coupling_gain(&self) -> f64 {
        let d = self.fit(Structure::Decoupled).bic;
        let best = self.fit(Structure::Feedforward).bic.min(self.fit(Structure::Bidirectional).bic);
        d - best
    }
}

/// Fits all three structures and ranks them by BIC, breaking ties toward
/// fewer parameters.
pub fn compare_structures(pair: &AlignedPair) -> Result<StructureComparison> {
    let fits = Structure::ALL.iter().map(|s| fit_var1(pair, *s)).collect::<Result<Vec<_>>>()?;
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| fits[a].bic.total_cmp(&fits[b].bic).then(a.cmp(&b)));
    let winner = Structure::ALL[order[0]];
    let kernel = to_continuous(&fits[2], 1.0).and_then(|s| projected_kernel(&s));
    Ok(StructureComparison {
        winner,
        dbic_next: fits[order[1]].bic - fits[order[0]].bic,
        dbic_vs_decoupled: fits[0].bic - fits[order[0]].bic,
        kernel,
        fits,
    })
}

/// `‖Q − ∫₀^dt e^{As} D e^{Aᵀs} ds‖_∞` with the integral evaluated by
/// composite Simpson quadrature; used to validate the Kronecker-sum solver.
pub fn lyapunov_quadrature(system: &LinearSystem2D, dt: f64, intervals: usize) -> [[f64; 2]; 2] {
    let a = to_m2(&system.drift);
    let d = to_m2(&system.diffusion);
    let m = intervals + intervals % 2;
    let h = dt / m as f64;
    let step = expm2(&(a * h));
    let mut e = Matrix2::identity();
    let mut acc = Matrix2::zeros();
    for i in 0..=m {
        let w = if i == 0 || i == m {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        acc += (e * d * e.transpose()) * w;
        e = step * e;
    }
    from_m2(&(acc * (h / 3.0)))
}

impl core::fmt::Display for Structure {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

/// Human-readable label for the comparison winner with its margin.
pub fn describe(c: &StructureComparison) -> String {
    format!("{} (dBIC {:.2} over next)", c.winner, c.dbic_next)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sys() -> LinearSystem2D {
        LinearSystem2D::from_rates(0.05, 0.01, 0.02, 0.03, [0.4, 3.0], [[1e-4, 2e-5], [2e-5, 4e-3]])
    }

    #[test]
    fn expm_of_diagonal_and_rotation() {
        let e = expm2(&Matrix2::new(-0.3, 0.0, 0.0, 0.2));
        assert!((e[(0, 0)] - (-0.3f64).exp()).abs() < 1e-15);
        assert!((e[(1, 1)] - (0.2f64).exp()).abs() < 1e-15);
        let r = expm2(&Matrix2::new(0.0, -1.0, 1.0, 0.0));
        assert!((r[(0, 0)] - 1f64.cos()).abs() < 1e-14 && (r[(1, 0)] - 1f64.sin()).abs() < 1e-14);
    }

    #[test]
    fn log_inverts_exp_in_all_eigen_cases() {
        for a in [
            Matrix2::new(-0.05, 0.01, 0.02, -0.03),     // real distinct
            Matrix2::new(-0.05, 1.0, 0.0, -0.05),       // defective double
            Matrix2::new(-0.02, -0.4, 0.4, -0.02),      // complex pair
            Matrix2::new(-0.04, 0.0, 0.0, -0.04),       // scalar
            Matrix2::new(-0.040_000_1, 0.0, 0.0, -0.04), // nearly equal
        ] {
            let back = logm2(&expm2(&a)).unwrap();
            assert!((back - a).abs().max() < 1e-12, "{a} -> {back}");
        }
    }

    #[test]
    fn diagonal_transition_gives_diagonal_drift() {
        let phi = Matrix2::new((-0.1f64).exp(), 0.0, 0.0, (-0.02f64).exp());
        let a = logm2(&phi).unwrap();
        assert!((a[(0, 0)] + 0.1).abs() < 1e-14 && (a[(1, 1)] + 0.02).abs() < 1e-14);
        assert!(a[(0, 1)] == 0.0 && a[(1, 0)] == 0.0);
    }

    #[test]
    fn negative_eigenvalue_has_no_real_log() {
        assert_eq!(logm2(&Matrix2::new(-0.5, 0.0, 0.0, 0.9)), Err(Error::NoRealLogarithm));
    }

    #[test]
    fn round_trip_through_discretization() {
        let s = sys();
        let back = continuous_from_discrete(&s.discretize(1.0), 1.0).unwrap();
        for i in 0..2 {
            assert!((back.mean[i] - s.mean[i]).abs() < 1e-8);
            for j in 0..2 {
                assert!((back.drift[i][j] - s.drift[i][j]).abs() < 1e-8);
                assert!((back.diffusion[i][j] - s.diffusion[i][j]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn kronecker_covariance_matches_quadrature() {
        let s = sys();
        let q = s.discretize(1.0).innovation_cov;
        let quad = lyapunov_quadrature(&s, 1.0, 2000);
        for i in 0..2 {
            for j in 0..2 {
                assert!((q[i][j] - quad[i][j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn stationary_covariance_solves_lyapunov() {
        let s = sys();
        let x = to_m2(&s.stationary_cov().unwrap());
        let a = to_m2(&s.drift);
        let r = a * x + x * a.transpose() + to_m2(&s.diffusion);
        assert!(r.abs().max() < 1e-15);
    }

    #[test]
    fn kernel_vanishes_without_feedback() {
        let s = LinearSystem2D::from_rates(0.05, 0.01, 0.0, 0.03, [0.0, 0.0], [[1.0, 0.0], [0.0, 1.0]]);
        let k = projected_kernel(&s).unwrap();
        assert!(!k.defined);
        assert_eq!(k.at(3.0), 0.0);
        let k = projected_kernel(&LinearSystem2D::from_rates(0.05, 0.01, 0.02, 1.0 / 36.46, [0.0; 2], [[1.0, 0.0], [0.0, 1.0]])).unwrap();
        assert!((k.timescale - 36.46).abs() < 1e-12);
        let bad = LinearSystem2D::from_rates(0.05, 0.01, 0.02, -0.01, [0.0; 2], [[1.0, 0.0], [0.0, 1.0]]);
        assert!(matches!(projected_kernel(&bad), Err(Error::NonRelaxingField(_))));
    }

    fn daily() -> LinearSystem2D {
        LinearSystem2D::from_rates(0.08, 0.02, 0.0, 1.0 / 30.0, [0.4, 0.0], [[4e-4, 0.0], [0.0, 0.02]])
    }

    #[test]
    fn likelihood_increases_with_structure() {
        let pair = crate::synth::simulate_var1(&daily(), 1500, 3).unwrap();
        let c = compare_structures(&pair).unwrap();
        let ll: Vec<f64> = c.fits.iter().map(|f| f.loglik).collect();
        assert!(ll[0] <= ll[1] + 1e-9 && ll[1] <= ll[2] + 1e-9, "{ll:?}");
        assert_eq!(c.fit(Structure::Decoupled).transition[0][1], 0.0);
        assert_eq!(c.fit(Structure::Feedforward).transition[1][0], 0.0);
        assert!(c.fit(Structure::Feedforward).gls_rounds >= 1);
        assert!(c.coupling_gain() > 10.0);
    }

    /// The iterated GLS estimate is a stationary point of the restricted
    /// likelihood: perturbing any free coefficient and re-profiling `Q` cannot
    /// raise the exact Gaussian log likelihood.
    #[test]
    fn restricted_fit_is_a_likelihood_maximum() {
        let pair = crate::synth::simulate_var1(&daily(), 800, 9).unwrap();
        let fit = fit_var1(&pair, Structure::Feedforward).unwrap();
        let profile = |c: [f64; 2], phi: [[f64; 2]; 2]| {
            let n = pair.len() - 1;
            let mut s = [[0.0; 2]; 2];
            for t in 0..n {
                let e = [
                    pair.x[t + 1] - c[0] - phi[0][0] * pair.x[t] - phi[0][1] * pair.y[t],
                    pair.y[t + 1] - c[1] - phi[1][0] * pair.x[t] - phi[1][1] * pair.y[t],
                ];
                for a in 0..2 {
                    for b in 0..2 {
                        s[a][b] += e[a] * e[b] / n as f64;
                    }
                }
            }
            let det = s[0][0] * s[1][1] - s[0][1] * s[1][0];
            -(n as f64) * (LN_2PI + 1.0) - 0.5 * n as f64 * det.ln()
        };
        let base = profile(fit.intercepts, fit.transition);
        assert!((base - fit.loglik).abs() < 1e-6 * base.abs());
        for (e, j) in [(0, 0), (0, 1), (1, 1)] {
            for h in [1e-4, -1e-4] {
                let mut phi = fit.transition;
                phi[e][j] += h;
                assert!(profile(fit.intercepts, phi) <= base + 1e-7);
            }
        }
    }

    #[test]
    fn fitted_bidirectional_map_recovers_rates() {
        let s = LinearSystem2D::from_rates(0.08, 0.02, 0.01, 1.0 / 30.0, [0.4, 0.0], [[4e-4, 0.0], [0.0, 0.02]]);
        let pair = crate::synth::simulate_var1(&s, 20_000, 1).unwrap();
        let fit = fit_var1(&pair, Structure::Bidirectional).unwrap();
        let back = to_continuous(&fit, 1.0).unwrap();
        assert!((back.theta_psi() - 0.08).abs() < 0.02);
        assert!((back.beta_psi() - 0.02).abs() < 0.006);
        assert!((projected_kernel(&back).unwrap().timescale - 30.0).abs() < 8.0);
    }
}
