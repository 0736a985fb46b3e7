//! Functionals of coupled particle systems and coupled random vectors:
//! coupling creation, the alignment inequalities, Hölder constants, moment
//! dynamics, condition-number moments and the two counterexample families.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

use crate::geometry::{dot, norm_sq, sample_unit};
use crate::quadrature::adaptive_simpson;
use crate::stats::RunningMean;
use crate::system::{sample_equilibrium, Configuration, CoupledState, TrajectoryRow};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("both covariances have rank one and the left side is positive")]
    RhsInfinite,
    #[error("precondition failed: {0}")]
    PreconditionFailed(String),
    #[error("bad parameters: {0}")]
    BadParams(String),
    #[error("condition-number moment of order {order} is not integrable for N = {n}, d = {d}")]
    MomentBlowup { order: f64, n: usize, d: usize },
    #[error("degenerate band: {0}")]
    DegenerateBand(String),
}

/// Dense `d × d` matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SquareMatrix {
    d: usize,
    data: Vec<f64>,
}

impl SquareMatrix {
    pub fn zeros(d: usize) -> Self {
        SquareMatrix { d, data: vec![0.0; d * d] }
    }

    pub fn from_rows(d: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), d * d, "expected {} entries", d * d);
        SquareMatrix { d, data }
    }

    pub fn diag(values: &[f64]) -> Self {
        let d = values.len();
        let mut m = Self::zeros(d);
        for (i, v) in values.iter().enumerate() {
            m.data[i * d + i] = *v;
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.d + j]
    }

    pub fn trace(&self) -> f64 {
        (0..self.d).map(|i| self.get(i, i)).sum()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.d, |i, j| self.get(j, i))
    }

    pub fn from_fn(d: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let data = (0..d * d).map(|k| f(k / d, k % d)).collect();
        SquareMatrix { d, data }
    }

    /// `Tr(A B)`.
    pub fn trace_product(&self, other: &SquareMatrix) -> f64 {
        let d = self.d;
        (0..d).flat_map(|i| (0..d).map(move |j| (i, j))).map(|(i, j)| self.get(i, j) * other.get(j, i)).sum()
    }

    pub fn sub(&self, other: &SquareMatrix) -> Self {
        Self::from_fn(self.d, |i, j| self.get(i, j) - other.get(i, j))
    }

    fn add_outer(&mut self, w: f64, a: &[f64], b: &[f64]) {
        for (i, ai) in a.iter().enumerate() {
            for (j, bj) in b.iter().enumerate() {
                self.data[i * self.d + j] += w * ai * bj;
            }
        }
    }
}

/// Symmetric `d × d` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SymmetricMatrix(SquareMatrix);

impl SymmetricMatrix {
    /// Accepts `m` if it is symmetric within `1e-12`, and symmetrizes it.
    pub fn new(m: SquareMatrix) -> Result<Self, AnalysisError> {
        let d = m.d;
        for i in 0..d {
            for j in 0..i {
                if (m.get(i, j) - m.get(j, i)).abs() > 1e-12 {
                    return Err(AnalysisError::BadParams(format!("matrix not symmetric at ({i}, {j})")));
                }
            }
        }
        let t = m.transpose();
        Ok(SymmetricMatrix(SquareMatrix::from_fn(d, |i, j| 0.5 * (m.get(i, j) + t.get(i, j)))))
    }

    pub fn identity_over_d(d: usize) -> Self {
        SymmetricMatrix(SquareMatrix::diag(&vec![1.0 / d as f64; d]))
    }

    /// `⟨v ⊗ v⟩_N`.
    pub fn second_moment(c: &Configuration) -> Self {
        let mut m = SquareMatrix::zeros(c.dim());
        let w = 1.0 / c.n() as f64;
        for p in c.particles() {
            m.add_outer(w, p, p);
        }
        SymmetricMatrix(m)
    }

    pub fn as_matrix(&self) -> &SquareMatrix {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.d
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    /// All eigenvalues in decreasing order, by cyclic Jacobi rotations.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let d = self.0.d;
        let mut a = self.0.data.clone();
        for _sweep in 0..100 {
            let off: f64 = (0..d).flat_map(|i| (0..d).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i * d + j].powi(2)).sum();
            let scale: f64 = a.iter().map(|x| x * x).sum();
            if off <= 1e-32 * scale || off == 0.0 {
                break;
            }
            for p in 0..d {
                for q in p + 1..d {
                    let apq = a[p * d + q];
                    if apq == 0.0 {
                        continue;
                    }
                    let tau = (a[q * d + q] - a[p * d + p]) / (2.0 * apq);
                    let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                    let t = if tau == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (1.0 + t * t).sqrt();
                    let s = t * c;
                    for k in 0..d {
                        let akp = a[k * d + p];
                        let akq = a[k * d + q];
                        a[k * d + p] = c * akp - s * akq;
                        a[k * d + q] = s * akp + c * akq;
                    }
                    for k in 0..d {
                        let apk = a[p * d + k];
                        let aqk = a[q * d + k];
                        a[p * d + k] = c * apk - s * aqk;
                        a[q * d + k] = s * apk + c * aqk;
                    }
                }
            }
        }
        let mut ev: Vec<f64> = (0..d).map(|i| a[i * d + i]).collect();
        ev.sort_by(|x, y| y.total_cmp(x));
        ev
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }
}

/// `(1 - λ_max(S))^{-1}` for a trace-one positive matrix; `+∞` once
/// `λ_max ≥ 1 - 1e-12`.
pub fn kappa(s: &SymmetricMatrix) -> f64 {
    let lambda = s.max_eigenvalue();
    if lambda >= 1.0 - 1e-12 {
        f64::INFINITY
    } else {
        1.0 / (1.0 - lambda)
    }
}

/// `|a||b| - a·b`, accurate when `a` and `b` are nearly aligned.
pub fn alignment_gap(a: &[f64], b: &[f64]) -> f64 {
    let ab = dot(a, b);
    let s = (norm_sq(a) * norm_sq(b)).sqrt();
    if ab > 0.0 {
        cross_norm_sq(a, b) / (s + ab)
    } else {
        s - ab
    }
}

/// `|a|²|b|² - (a·b)²` through the Lagrange identity.
pub fn cross_norm_sq(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..a.len() {
        for j in i + 1..a.len() {
            let w = a[i] * b[j] - a[j] * b[i];
            acc += w * w;
        }
    }
    acc
}

fn diff(a: &[f64], b: &[f64], out: &mut [f64]) {
    for ((o, x), y) in out.iter_mut().zip(a).zip(b) {
        *o = x - y;
    }
}

/// `(d-2)/(2d-2) ⟨|u - u_*||v - v_*| - (u - u_*)·(v - v_*)⟩_N` over all
/// ordered pairs; particle `i` of `u` is coupled with particle `i` of `v`.
pub fn coupling_creation(u: &Configuration, v: &Configuration) -> f64 {
    let (n, d) = (u.n(), u.dim());
    assert_eq!((n, d), (v.n(), v.dim()), "shape mismatch");
    let mut du = vec![0.0; d];
    let mut dv = vec![0.0; d];
    let mut acc = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            diff(u.particle(i), u.particle(j), &mut du);
            diff(v.particle(i), v.particle(j), &mut dv);
            acc += alignment_gap(&du, &dv);
        }
    }
    let df = d as f64;
    (df - 2.0) / (2.0 * df - 2.0) * 2.0 * acc / (n * n) as f64
}

/// `⟨|v - v_*|^e⟩_N` over all ordered pairs.
pub fn pair_moment(c: &Configuration, e: f64) -> f64 {
    let n = c.n();
    let mut acc = 0.0;
    let half = 0.5 * e;
    for i in 0..n {
        let a = c.particle(i);
        for j in i + 1..n {
            let b = c.particle(j);
            let r2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
            acc += r2.powf(half);
        }
    }
    2.0 * acc / (n * n) as f64
}

/// Finitely supported law of a coupled pair `(U, V)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiscreteCoupledDistribution {
    pub d: usize,
    pub u: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub normalized: bool,
}

impl DiscreteCoupledDistribution {
    pub fn new(u: Vec<Vec<f64>>, v: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self, AnalysisError> {
        let k = weights.len();
        if k == 0 || u.len() != k || v.len() != k {
            return Err(AnalysisError::BadParams("atom lists must be non-empty and of equal length".into()));
        }
        let d = u[0].len();
        if u.iter().chain(&v).any(|x| x.len() != d) {
            return Err(AnalysisError::BadParams("atoms of different dimensions".into()));
        }
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(AnalysisError::BadParams("negative weight".into()));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(AnalysisError::BadParams("zero total weight".into()));
        }
        let weights = weights.iter().map(|w| w / total).collect();
        let mut dist = DiscreteCoupledDistribution { d, u, v, weights, normalized: false };
        dist.normalized = dist.is_normalized();
        Ok(dist)
    }

    /// Uniform weights over the coupled particles `(u_i, v_i)`.
    pub fn from_configurations(u: &Configuration, v: &Configuration) -> Self {
        let n = u.n();
        DiscreteCoupledDistribution {
            d: u.dim(),
            u: u.particles().map(<[f64]>::to_vec).collect(),
            v: v.particles().map(<[f64]>::to_vec).collect(),
            weights: vec![1.0 / n as f64; n],
            normalized: true,
        }
    }

    /// Random atoms and weights, then centered and rescaled.
    pub fn random<R: Rng + ?Sized>(k: usize, d: usize, rng: &mut R) -> Self {
        loop {
            let gen = |rng: &mut R| (0..k).map(|_| (0..d).map(|_| rng.sample(StandardNormal)).collect()).collect::<Vec<Vec<f64>>>();
            let u = gen(rng);
            let v = gen(rng);
            let w = (0..k).map(|_| rng.random::<f64>() + 1e-3).collect();
            if let Ok(mut dist) = Self::new(u, v, w) {
                if dist.normalize().is_ok() {
                    return dist;
                }
            }
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    fn marginal_stats(xs: &[Vec<f64>], w: &[f64], d: usize) -> (Vec<f64>, f64) {
        let mut mean = vec![0.0; d];
        for (x, wi) in xs.iter().zip(w) {
            mean.iter_mut().zip(x).for_each(|(m, xi)| *m += wi * xi);
        }
        let e2 = xs.iter().zip(w).map(|(x, wi)| wi * norm_sq(x)).sum();
        (mean, e2)
    }

    pub fn is_normalized(&self) -> bool {
        [&self.u, &self.v].iter().all(|xs| {
            let (m, e2) = Self::marginal_stats(xs, &self.weights, self.d);
            m.iter().all(|x| x.abs() <= 1e-10) && (e2 - 1.0).abs() <= 1e-10
        })
    }

    /// Centers both marginals and scales them to unit second moment.
    pub fn normalize(&mut self) -> Result<(), AnalysisError> {
        for xs in [&mut self.u, &mut self.v] {
            let (m, _) = Self::marginal_stats(xs, &self.weights, self.d);
            xs.iter_mut().for_each(|x| x.iter_mut().zip(&m).for_each(|(a, b)| *a -= b));
            let (_, e2) = Self::marginal_stats(xs, &self.weights, self.d);
            if !(e2 > 1e-300) {
                return Err(AnalysisError::BadParams("marginal concentrated at its mean".into()));
            }
            let s = e2.sqrt().recip();
            xs.iter_mut().for_each(|x| x.iter_mut().for_each(|a| *a *= s));
        }
        self.normalized = true;
        Ok(())
    }

    /// `(C_UU, C_VV, C_UV)` with `C_XY = E(X ⊗ Y)`.
    pub fn covariances(&self) -> (SymmetricMatrix, SymmetricMatrix, SquareMatrix) {
        let d = self.d;
        let (mut cuu, mut cvv, mut cuv) = (SquareMatrix::zeros(d), SquareMatrix::zeros(d), SquareMatrix::zeros(d));
        for ((u, v), w) in self.u.iter().zip(&self.v).zip(&self.weights) {
            cuu.add_outer(*w, u, u);
            cvv.add_outer(*w, v, v);
            cuv.add_outer(*w, u, v);
        }
        (SymmetricMatrix(cuu), SymmetricMatrix(cvv), cuv)
    }

    /// `E(U · V)`.
    pub fn correlation(&self) -> f64 {
        self.u.iter().zip(&self.v).zip(&self.weights).map(|((u, v), w)| w * dot(u, v)).sum()
    }

    /// `E(|U - U_*|²|V - V_*|² - ((U - U_*)·(V - V_*))²)` summed exactly over
    /// atom pairs.
    pub fn mean_area(&self) -> f64 {
        let k = self.len();
        let mut du = vec![0.0; self.d];
        let mut dv = vec![0.0; self.d];
        let mut acc = 0.0;
        for i in 0..k {
            for j in i + 1..k {
                diff(&self.u[i], &self.u[j], &mut du);
                diff(&self.v[i], &self.v[j], &mut dv);
                acc += self.weights[i] * self.weights[j] * cross_norm_sq(&du, &dv);
            }
        }
        2.0 * acc
    }
}

/// `U = V`, isotropic, with `|U|` taking two values: `U` is uniform on
/// `{±r e_i}` for each radius, the radii having the given relative weights.
/// An equality case of [`fund_inequality_report`].
pub fn identical_two_radius(d: usize, radii: (f64, f64), weights: (f64, f64)) -> DiscreteCoupledDistribution {
    let mut atoms = vec![];
    let mut w = vec![];
    for (r, wr) in [(radii.0, weights.0), (radii.1, weights.1)] {
        for k in 0..2 * d {
            let mut e = vec![0.0; d];
            e[k / 2] = if k % 2 == 0 { r } else { -r };
            atoms.push(e);
            w.push(wr);
        }
    }
    let mut dist = DiscreteCoupledDistribution::new(atoms.clone(), atoms, w).expect("valid atoms");
    dist.normalize().expect("non-degenerate radii");
    dist
}

/// Outcome of checking `lhs ≤ rhs`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InequalityReport {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub aux: BTreeMap<String, f64>,
    pub n_samples: usize,
    pub stderr: f64,
}

impl InequalityReport {
    fn new(name: &str, lhs: f64, rhs: f64, aux: &[(&str, f64)]) -> Self {
        InequalityReport {
            name: name.to_string(),
            lhs,
            rhs,
            slack: rhs - lhs,
            aux: aux.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            n_samples: 1,
            stderr: 0.0,
        }
    }

    pub fn holds(&self, tol: f64) -> bool {
        self.slack >= -tol
    }
}

/// `1 - (E U·V)² ≤ min(κ_{E U⊗U}, κ_{E V⊗V}) E(|ΔU|²|ΔV|² - (ΔU·ΔV)²)`.
pub fn fund_inequality_report(dist: &DiscreteCoupledDistribution) -> Result<InequalityReport, AnalysisError> {
    if !dist.normalized {
        return Err(AnalysisError::PreconditionFailed("distribution is not normalized".into()));
    }
    let (cuu, cvv, _) = dist.covariances();
    let (ku, kv) = (kappa(&cuu), kappa(&cvv));
    let k = ku.min(kv);
    let corr = dist.correlation();
    let lhs = 1.0 - corr * corr;
    let area = dist.mean_area();
    let rhs = if k.is_infinite() {
        if lhs > 1e-12 {
            return Err(AnalysisError::RhsInfinite);
        }
        if area == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        k * area
    };
    Ok(InequalityReport::new(
        "fund_inequality",
        lhs,
        rhs,
        &[("kappa_u", ku), ("kappa_v", kv), ("correlation", corr), ("mean_area", area)],
    ))
}

/// `Tr(C_UU C_VV) - Tr(C_UV C_VU) ≤ min_X(λ_max(C_XX)/Tr C_XX) (Tr C_UU Tr C_VV - (Tr C_UV)²)`.
pub fn trace_inequality_report(
    c_uu: &SymmetricMatrix,
    c_vv: &SymmetricMatrix,
    c_uv: &SquareMatrix,
) -> Result<InequalityReport, AnalysisError> {
    let (tu, tv) = (c_uu.trace(), c_vv.trace());
    if !(tu > 0.0 && tv > 0.0) {
        return Err(AnalysisError::PreconditionFailed("covariance with zero trace".into()));
    }
    let c_vu = c_uv.transpose();
    let lhs = c_uu.as_matrix().trace_product(c_vv.as_matrix()) - c_uv.trace_product(&c_vu);
    let (ru, rv) = (c_uu.max_eigenvalue() / tu, c_vv.max_eigenvalue() / tv);
    let rhs = ru.min(rv) * (tu * tv - c_uv.trace().powi(2));
    Ok(InequalityReport::new("trace_inequality", lhs, rhs, &[("ratio_u", ru), ("ratio_v", rv)]))
}

/// The three summands of the expansion of the mean squared parallelogram
/// area, coefficients included, so that `total() == lhs` up to rounding.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AreaDecomposition {
    pub lhs: f64,
    /// `2 E(|U|²|V|² - (U·V)²)`.
    pub pointwise: f64,
    /// `Tr((C_UV - C_VU)(C_VU - C_UV))`.
    pub antisymmetric: f64,
    /// `2 (Tr C_UU Tr C_VV - (Tr C_UV)² - Tr(C_UU C_VV) + Tr(C_UV C_VU))`.
    pub spectral: f64,
}

impl AreaDecomposition {
    pub fn total(&self) -> f64 {
        self.pointwise + self.antisymmetric + self.spectral
    }

    pub fn residual(&self) -> f64 {
        (self.total() - self.lhs).abs()
    }
}

pub fn area_decomposition(dist: &DiscreteCoupledDistribution) -> Result<AreaDecomposition, AnalysisError> {
    let (mu, _) = DiscreteCoupledDistribution::marginal_stats(&dist.u, &dist.weights, dist.d);
    let (mv, _) = DiscreteCoupledDistribution::marginal_stats(&dist.v, &dist.weights, dist.d);
    if mu.iter().chain(&mv).any(|x| x.abs() > 1e-10) {
        return Err(AnalysisError::PreconditionFailed("marginals are not centered".into()));
    }
    let (cuu, cvv, cuv) = dist.covariances();
    let cvu = cuv.transpose();
    let pointwise = 2.0
        * dist.u.iter().zip(&dist.v).zip(&dist.weights).map(|((u, v), w)| w * cross_norm_sq(u, v)).sum::<f64>();
    let a = cuv.sub(&cvu);
    let antisymmetric = a.trace_product(&a.transpose());
    let spectral = 2.0
        * (cuu.trace() * cvv.trace() - cuv.trace().powi(2) - cuu.as_matrix().trace_product(cvv.as_matrix())
            + cuv.trace_product(&cvu));
    Ok(AreaDecomposition { lhs: dist.mean_area(), pointwise, antisymmetric, spectral })
}

/// Closed-form constants of the Hölder interpolation step. `k_main` and
/// `c_delta_n` are filled in by [`k_main_estimate`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HolderConstants {
    pub delta: f64,
    pub p: f64,
    pub q: f64,
    pub d: usize,
    pub k1: f64,
    pub k2: f64,
    pub k_main: Option<f64>,
    pub k_main_stderr: Option<f64>,
    pub c_delta_n: Option<f64>,
}

fn holder_common(delta: f64, d: usize) -> f64 {
    let df = d as f64;
    (df - 2.0) / (df - 1.0) * (1.0 + delta).powf(1.0 + 1.0 / delta) / (1.0 + 2.0 * delta).powf(1.0 + 0.5 / delta)
}

pub fn holder_constants(delta: f64, p: f64, d: usize) -> Result<HolderConstants, AnalysisError> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(AnalysisError::BadParams(format!("delta must be positive, got {delta}")));
    }
    if !(p > 1.0 && p.is_finite()) {
        return Err(AnalysisError::BadParams(format!("p must exceed 1, got {p}")));
    }
    if d < 3 {
        return Err(AnalysisError::BadParams(format!("need d >= 3, got {d}")));
    }
    let common = holder_common(delta, d);
    Ok(HolderConstants {
        delta,
        p,
        q: p / (p - 1.0),
        d,
        k1: 2f64.powf(-3.0 - 0.5 / delta) * common,
        k2: 2f64.powf(-4.5 - 2.0 / delta) * common,
        k_main: None,
        k_main_stderr: None,
        c_delta_n: None,
    })
}

/// `(p, q)` for which `2q(1 + δ) = 4`.
pub fn order4_exponents(delta: f64) -> (f64, f64) {
    (2.0 / (1.0 - delta), 2.0 / (1.0 + delta))
}

/// Checks `c_{δ,p}(u, v) ⟨|u - v|²⟩^{1 + 1/2δ} ≤ C₂(u, v) / 2`, the
/// multiplied-out form, so that `u = v` gives `0 ≤ 0`. Particle `i` of `u`
/// is coupled with particle `i` of `v`.
pub fn pathwise_weak_inequality(
    u: &Configuration,
    v: &Configuration,
    delta: f64,
    p: f64,
) -> Result<InequalityReport, AnalysisError> {
    let h = holder_constants(delta, p, u.dim())?;
    let n = u.n() as f64;
    let corr: f64 = u.particles().zip(v.particles()).map(|(a, b)| dot(a, b)).sum::<f64>() / n;
    if corr < -1e-12 {
        return Err(AnalysisError::PreconditionFailed(format!("negative correlation {corr}")));
    }
    let dist: f64 = u.particles().zip(v.particles()).map(|(a, b)| crate::geometry::dist_sq(a, b)).sum::<f64>() / n;
    let (ku, kv) = (kappa(&SymmetricMatrix::second_moment(u)), kappa(&SymmetricMatrix::second_moment(v)));
    let k = ku.min(kv);
    let c = if k.is_infinite() {
        0.0
    } else {
        let mu = pair_moment(u, 2.0 * p * (1.0 + delta));
        let mv = pair_moment(v, 2.0 * h.q * (1.0 + delta));
        h.k1 * k.powf(-1.0 - 0.5 / delta) * mu.powf(-0.5 / (p * delta)) * mv.powf(-0.5 / (h.q * delta))
    };
    let creation = coupling_creation(u, v);
    let lhs = c * dist.powf(1.0 + 0.5 / delta);
    let rhs = 0.5 * creation;
    Ok(InequalityReport::new(
        "pathwise_weak_inequality",
        lhs,
        rhs,
        &[
            ("c", c),
            ("kappa_u", ku),
            ("kappa_v", kv),
            ("mean_sq_distance", dist),
            ("creation", creation),
            ("degenerate", if dist == 0.0 { 1.0 } else { 0.0 }),
        ],
    ))
}

/// Mean change of `(|v|⁴ + |v_*|⁴)/2` per collision at full deviation,
/// averaged over post-collisional directions.
pub fn delta4(v: &[f64], v_star: &[f64], d: usize) -> f64 {
    let df = d as f64;
    let (a, b) = (norm_sq(v), norm_sq(v_star));
    let c = dot(v, v_star);
    -(a * a + b * b) / 4.0 + (df + 1.0) / (2.0 * (df - 1.0)) * a * b - c * c / (df - 1.0)
}

/// `(e^{-t/2}(m4_0 - (d+2)/d) + (d+2)/d, 2 ln⁺(d m4_0/(d+2) - 1))`.
pub fn order4_bound(m4_0: f64, d: usize, t: f64) -> (f64, f64) {
    let eq = (d as f64 + 2.0) / d as f64;
    let bound = (-0.5 * t).exp() * (m4_0 - eq) + eq;
    let arg = m4_0 / eq - 1.0;
    let t_star = if arg > 0.0 { 2.0 * arg.ln().max(0.0) } else { 0.0 };
    (bound, t_star)
}

/// Exponent used in the time-integral form of the order-4 bound.
pub fn order4_gamma(delta: f64) -> f64 {
    0.25 + 0.25 / delta
}

/// `((2d + 4)/d)^{-γ} (t - t_*)⁺`, the lower bound on `∫₀ᵗ m4^{-γ}`.
pub fn order4_integral_lower_bound(d: usize, gamma: f64, t: f64, t_star: f64) -> f64 {
    let df = d as f64;
    ((2.0 * df + 4.0) / df).powf(-gamma) * (t - t_star).max(0.0)
}

/// `E⟨|V|⁴⟩_N` for `V` uniform on the constraint sphere.
pub fn equilibrium_m4(n: usize, d: usize) -> f64 {
    let (n, d) = (n as f64, d as f64);
    (n - 1.0) * (d + 2.0) / ((n - 1.0) * d + 2.0)
}

/// `E|G|^{2k}` for `G` centered Gaussian in `R^d` with covariance `Id/d`.
pub fn gaussian_norm_moment(d: usize, k: f64) -> f64 {
    let h = 0.5 * d as f64;
    (k * (2.0 / d as f64).ln() + ln_gamma(h + k) - ln_gamma(h)).exp()
}

/// The power-law decay envelope `(D₀^{-1/δ} + c (t - t_*)⁺)^{-δ}`.
pub fn decay_envelope(d0: f64, c: f64, delta: f64, t: f64, t_star: f64) -> f64 {
    (d0.powf(-1.0 / delta) + c * (t - t_star).max(0.0)).powf(-delta)
}

/// Monte Carlo estimate with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
    pub samples: usize,
}

/// `E[X]^{-1/s}` with its delta-method standard error.
fn inverse_power_estimate(acc: &RunningMean, s: f64) -> Estimate {
    let m = acc.mean();
    Estimate { value: m.powf(-1.0 / s), stderr: m.powf(-1.0 / s - 1.0) / s * acc.stderr(), samples: acc.count() as usize }
}

fn largest_eigenvalue_of_equilibrium<R: Rng + ?Sized>(n: usize, d: usize, rng: &mut R) -> (Configuration, f64) {
    let c = sample_equilibrium(n, d, rng).expect("valid shape");
    let l = SymmetricMatrix::second_moment(&c).max_eigenvalue();
    (c, l)
}

/// `E[(1 - L)^{-p}]^{-1/p}` where `L` is the largest eigenvalue of `⟨u⊗u⟩_N`
/// under the uniform law on the constraint sphere.
pub fn wishart_kappa_moment<R: Rng + ?Sized>(
    n: usize,
    d: usize,
    p: f64,
    samples: usize,
    rng: &mut R,
) -> Result<Estimate, AnalysisError> {
    if !(p >= 1.0) || d < 3 || n < 2 || samples == 0 {
        return Err(AnalysisError::BadParams(format!("p = {p}, N = {n}, d = {d}, samples = {samples}")));
    }
    if n as f64 - 2.0 * p / (d as f64 - 1.0) <= d as f64 {
        return Err(AnalysisError::MomentBlowup { order: p, n, d });
    }
    let acc: RunningMean = (0..samples).map(|_| (1.0 - largest_eigenvalue_of_equilibrium(n, d, rng).1).powf(-p)).collect();
    Ok(inverse_power_estimate(&acc, p))
}

/// Large-`N` limit of the sampled factor in [`k_main_estimate`]:
/// `((d-1)/d)^{1+1/2δ} E(|G_d|^{2p(1+δ)})^{-1/2pδ}`.
pub fn k_main_gaussian_factor(delta: f64, p: f64, d: usize) -> f64 {
    let df = d as f64;
    ((df - 1.0) / df).powf(1.0 + 0.5 / delta) * gaussian_norm_moment(d, p * (1.0 + delta)).powf(-0.5 / (p * delta))
}

/// Estimates `k_main = k2 E[κ^{p(1+2δ)} ⟨|ΔU/√2|^{2p(1+δ)}⟩_N]^{-1/2pδ}` under
/// the equilibrium law and `c_{δ,N} = k_main ((2d+4)/d)^{-1/2-1/2δ}`.
pub fn k_main_estimate<R: Rng + ?Sized>(
    delta: f64,
    p: f64,
    q: f64,
    n: usize,
    d: usize,
    samples: usize,
    rng: &mut R,
) -> Result<HolderConstants, AnalysisError> {
    let mut h = holder_constants(delta, p, d)?;
    if (1.0 / p + 1.0 / q - 1.0).abs() > 1e-12 {
        return Err(AnalysisError::BadParams(format!("1/p + 1/q = {} != 1", 1.0 / p + 1.0 / q)));
    }
    if n < 2 || samples == 0 {
        return Err(AnalysisError::BadParams(format!("N = {n}, samples = {samples}")));
    }
    let order = p * (1.0 + 2.0 * delta);
    if n as f64 - 2.0 * order / (d as f64 - 1.0) <= d as f64 {
        return Err(AnalysisError::MomentBlowup { order, n, d });
    }
    let e = 2.0 * p * (1.0 + delta);
    let rescale = 2f64.powf(-0.5 * e);
    let acc: RunningMean = (0..samples)
        .map(|_| {
            let (c, l) = largest_eigenvalue_of_equilibrium(n, d, rng);
            (1.0 - l).powf(-order) * rescale * pair_moment(&c, e)
        })
        .collect();
    let est = inverse_power_estimate(&acc, 2.0 * p * delta);
    let k_main = h.k2 * est.value;
    let df = d as f64;
    h.q = q;
    h.k_main = Some(k_main);
    h.k_main_stderr = Some(h.k2 * est.stderr);
    h.c_delta_n = Some(k_main * ((2.0 * df + 4.0) / df).powf(-0.5 - 0.5 / delta));
    Ok(h)
}

/// One line of the heavy-tail table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HeavyTailRow {
    pub m: f64,
    pub eps: f64,
    pub prob_large: f64,
    pub m_q: f64,
    pub mean_sq_distance: f64,
    pub mean_sq_distance_stderr: f64,
    pub creation: f64,
    pub creation_stderr: f64,
}

/// `U ~ N(0, Id/d)` and an independent isotropic `V` with `|V| = 1/M` with
/// probability `1 - p` and `|V| = M` with probability `p`, `E|V|² = 1`.
/// Expectations are stratified over the radii of `V` and `V_*`.
pub fn counterexample_heavy_tail<R: Rng + ?Sized>(
    m_values: &[f64],
    q: f64,
    d: usize,
    samples: usize,
    rng: &mut R,
) -> Result<Vec<HeavyTailRow>, AnalysisError> {
    if !(q > 1.0 && q < 2.0) {
        return Err(AnalysisError::BadParams(format!("need 1 < q < 2, got {q}")));
    }
    if d < 3 || samples < 2 {
        return Err(AnalysisError::BadParams(format!("d = {d}, samples = {samples}")));
    }
    let gauss = |rng: &mut R| -> Vec<f64> {
        let s = (d as f64).sqrt().recip();
        (0..d).map(|_| s * rng.sample::<f64, _>(StandardNormal)).collect()
    };
    let mut rows = Vec::with_capacity(m_values.len());
    for &m in m_values {
        if !(m > 1.0) {
            return Err(AnalysisError::BadParams(format!("M must exceed 1, got {m}")));
        }
        let eps = 1.0 / m;
        let pl = (1.0 - eps * eps) / (m * m - eps * eps);
        let radii = [(eps, 1.0 - pl), (m, pl)];
        let m_q = (1.0 - pl) * eps.powf(q) + pl * m.powf(q);

        let (mut dist, mut dist_var) = (0.0, 0.0);
        for &(r, w) in &radii {
            let acc: RunningMean = (0..samples)
                .map(|_| {
                    let u = gauss(rng);
                    let v: Vec<f64> = sample_unit(d, rng).into_inner().into_iter().map(|x| r * x).collect();
                    crate::geometry::dist_sq(&u, &v)
                })
                .collect();
            dist += w * acc.mean();
            dist_var += (w * acc.stderr()).powi(2);
        }

        let (mut creation, mut creation_var) = (0.0, 0.0);
        for &(r1, w1) in &radii {
            for &(r2, w2) in &radii {
                let acc: RunningMean = (0..samples)
                    .map(|_| {
                        let du: Vec<f64> = gauss(rng).iter().zip(gauss(rng)).map(|(a, b)| a - b).collect();
                        let (a, b) = (sample_unit(d, rng), sample_unit(d, rng));
                        let dv: Vec<f64> = a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| r1 * x - r2 * y).collect();
                        alignment_gap(&du, &dv)
                    })
                    .collect();
                creation += w1 * w2 * acc.mean();
                creation_var += (w1 * w2 * acc.stderr()).powi(2);
            }
        }
        rows.push(HeavyTailRow {
            m,
            eps,
            prob_large: pl,
            m_q,
            mean_sq_distance: dist,
            mean_sq_distance_stderr: dist_var.sqrt(),
            creation,
            creation_stderr: creation_var.sqrt(),
        });
    }
    Ok(rows)
}

/// One line of the radial-band table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RadialBandRow {
    pub r_minus: f64,
    pub r_plus: f64,
    pub band_probability: f64,
    pub r_bar: f64,
    pub ratio: f64,
    pub ratio_stderr: f64,
}

/// `ln(r^{d-1} e^{-d r²/2})`, the unnormalized log-density of `|U|`.
fn radial_log_density(r: f64, d: usize) -> f64 {
    (d as f64 - 1.0) * r.ln() - 0.5 * d as f64 * r * r
}

/// Draws `|U|` conditioned on `[a, b]` by rejection from the uniform law.
fn sample_band_radius<R: Rng + ?Sized>(a: f64, b: f64, d: usize, log_max: f64, rng: &mut R) -> f64 {
    loop {
        let r = a + (b - a) * rng.random::<f64>();
        if rng.random::<f64>().ln() <= radial_log_density(r, d) - log_max {
            return r;
        }
    }
}

/// Co-linear coupling with `U ~ N(0, Id/d)` and `V = U` except for
/// `|U| ∈ [r_-, r_- + ε]`, where `V = r̄ U/|U|` with `r̄²` the conditional
/// mean of `|U|²` on the band. Tabulates the ratio of the creation integrand
/// `E(|ΔU||ΔV| - ΔU·ΔV)` to `E|U - V|²`.
pub fn counterexample_radial_band<R: Rng + ?Sized>(
    r_minus_values: &[f64],
    band_eps: f64,
    d: usize,
    samples: usize,
    rng: &mut R,
) -> Result<Vec<RadialBandRow>, AnalysisError> {
    if !(band_eps > 0.0) {
        return Err(AnalysisError::DegenerateBand(format!("band width {band_eps}")));
    }
    if d < 3 || samples < 2 {
        return Err(AnalysisError::BadParams(format!("d = {d}, samples = {samples}")));
    }
    let mut rows = Vec::with_capacity(r_minus_values.len());
    for &a in r_minus_values {
        if !(a > 0.0) {
            return Err(AnalysisError::BadParams(format!("r_minus must be positive, got {a}")));
        }
        let b = a + band_eps;
        let mode = ((d as f64 - 1.0) / d as f64).sqrt();
        let log_max = radial_log_density(mode.clamp(a, b), d);
        let f = |r: f64| (radial_log_density(r, d) - log_max).exp();
        let mass = adaptive_simpson(f, a, b, 1e-14 * band_eps);
        let second = adaptive_simpson(|r| r * r * f(r), a, b, 1e-14 * band_eps * b * b);
        let log_total = (0.5 * d as f64 - 1.0) * (2.0 / d as f64).ln() + ln_gamma(0.5 * d as f64) - 2f64.ln();
        let band_probability = (mass.ln() + log_max - log_total).exp();
        if !(band_probability > 0.0) || !(mass > 0.0) {
            return Err(AnalysisError::DegenerateBand(format!("band [{a}, {b}] has zero probability")));
        }
        let r_bar = (second / mass).sqrt();

        let in_band = |rng: &mut R| -> (Vec<f64>, Vec<f64>) {
            let r = sample_band_radius(a, b, d, log_max, rng);
            let w = sample_unit(d, rng).into_inner();
            (w.iter().map(|x| r * x).collect(), w.iter().map(|x| r_bar * x).collect())
        };
        let anywhere = |rng: &mut R| -> (Vec<f64>, Vec<f64>) {
            let s = (d as f64).sqrt().recip();
            let u: Vec<f64> = (0..d).map(|_| s * rng.sample::<f64, _>(StandardNormal)).collect();
            let r = norm_sq(&u).sqrt();
            let v = if r >= a && r <= b { u.iter().map(|x| x * r_bar / r).collect() } else { u.clone() };
            (u, v)
        };
        let gap = |x: &(Vec<f64>, Vec<f64>), y: &(Vec<f64>, Vec<f64>)| {
            let du: Vec<f64> = x.0.iter().zip(&y.0).map(|(s, t)| s - t).collect();
            let dv: Vec<f64> = x.1.iter().zip(&y.1).map(|(s, t)| s - t).collect();
            alignment_gap(&du, &dv)
        };

        // E[I] = 2 P(B) E[I | U ∈ B] - P(B)² E[I | U, U_* ∈ B]; the band
        // probability cancels against E|U - V|² = P(B) E[(|U| - r̄)² | B].
        let one: RunningMean = (0..samples).map(|_| gap(&in_band(rng), &anywhere(rng))).collect();
        let both: RunningMean = (0..samples).map(|_| gap(&in_band(rng), &in_band(rng))).collect();
        let spread = adaptive_simpson(|r| (r - r_bar).powi(2) * f(r), a, b, 1e-16 * band_eps) / mass;
        let numerator = 2.0 * one.mean() - band_probability * both.mean();
        let num_se = (4.0 * one.stderr().powi(2) + (band_probability * both.stderr()).powi(2)).sqrt();
        rows.push(RadialBandRow {
            r_minus: a,
            r_plus: b,
            band_probability,
            r_bar,
            ratio: numerator / spread,
            ratio_stderr: num_se / spread,
        });
    }
    Ok(rows)
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Per-sample functionals of a coupled run. With `weak = Some((δ, p))` the
/// pathwise weak inequality is evaluated too.
pub fn coupled_snapshot(t: f64, state: &CoupledState, weak: Option<(f64, f64)>) -> Result<TrajectoryRow, AnalysisError> {
    let v = state.v_paired();
    let dist = DiscreteCoupledDistribution::from_configurations(&state.u, &v);
    let fund = fund_inequality_report(&dist)?;
    let (weak_lhs, weak_rhs) = match weak {
        Some((delta, p)) => {
            let r = pathwise_weak_inequality(&state.u, &v, delta, p)?;
            (r.lhs, r.rhs)
        }
        None => (f64::NAN, f64::NAN),
    };
    Ok(TrajectoryRow {
        time: t,
        mean_sq_distance: state.mean_sq_distance(),
        m2: v.m2(),
        m4: v.m4(),
        creation: coupling_creation(&state.u, &v),
        fund_lhs: fund.lhs,
        fund_rhs: fund.rhs,
        min_corr: state.correlation(),
        weak_lhs,
        weak_rhs,
    })
}

/// Moments of an uncoupled run; coupling columns are NaN.
pub fn kac_snapshot(t: f64, config: &Configuration) -> TrajectoryRow {
    TrajectoryRow {
        time: t,
        mean_sq_distance: f64::NAN,
        m2: config.m2(),
        m4: config.m4(),
        creation: f64::NAN,
        fund_lhs: f64::NAN,
        fund_rhs: f64::NAN,
        min_corr: f64::NAN,
        weak_lhs: f64::NAN,
        weak_rhs: f64::NAN,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::project_to_constraint_sphere;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn eigenvalues_of_simple_matrices() {
        assert!((SymmetricMatrix::identity_over_d(4).max_eigenvalue() - 0.25).abs() < 1e-15);
        let s = SymmetricMatrix::new(SquareMatrix::diag(&[0.3, 0.5, 0.2])).unwrap();
        assert!((s.max_eigenvalue() - 0.5).abs() < 1e-15);
        let v = [0.3, -1.2, 0.7, 2.0];
        let s = SymmetricMatrix::new(SquareMatrix::from_fn(4, |i, j| v[i] * v[j])).unwrap();
        assert!((s.max_eigenvalue() - norm_sq(&v)).abs() < 1e-12);
    }

    #[test]
    fn eigenvalues_preserve_trace_and_determinant_of_2x2() {
        let s = SymmetricMatrix::new(SquareMatrix::from_rows(2, vec![2.0, 1.0, 1.0, 3.0])).unwrap();
        let ev = s.eigenvalues();
        let exact = 2.5 + (0.25f64 + 1.0).sqrt();
        assert!((ev[0] - exact).abs() < 1e-14);
        assert!((ev[0] + ev[1] - 5.0).abs() < 1e-14);
    }

    #[test]
    fn rejects_asymmetric() {
        assert!(SymmetricMatrix::new(SquareMatrix::from_rows(2, vec![1.0, 0.0, 1.0, 1.0])).is_err());
    }

    #[test]
    fn kappa_examples() {
        for d in 3..8 {
            let k = kappa(&SymmetricMatrix::identity_over_d(d));
            assert!((k - d as f64 / (d as f64 - 1.0)).abs() < 1e-14);
        }
        let s = SymmetricMatrix::new(SquareMatrix::diag(&[0.5, 0.3, 0.2])).unwrap();
        assert!((kappa(&s) - 2.0).abs() < 1e-14);
        let s = SymmetricMatrix::new(SquareMatrix::diag(&[1.0, 0.0, 0.0])).unwrap();
        assert_eq!(kappa(&s), f64::INFINITY);
    }

    #[test]
    fn creation_of_orthogonal_pairs() {
        let u = project_to_constraint_sphere(2, 3, vec![1.0, 0.0, 0.0, -1.0, 0.0, 0.0]).unwrap();
        let v = project_to_constraint_sphere(2, 3, vec![0.0, 1.0, 0.0, 0.0, -1.0, 0.0]).unwrap();
        assert!((coupling_creation(&u, &v) - 0.5).abs() < 1e-15);
        assert_eq!(coupling_creation(&u, &u), 0.0);
    }

    #[test]
    fn alignment_gap_is_stable() {
        let a = [1.0, 0.0, 0.0];
        let b = [1.0, 1e-9, 0.0];
        assert!((alignment_gap(&a, &b) - 5e-19).abs() < 1e-30);
        assert_eq!(alignment_gap(&a, &[-2.0, 0.0, 0.0]), 4.0);
    }

    #[test]
    fn fund_inequality_for_identical_isotropic() {
        let d = 3;
        let mut u = vec![];
        for i in 0..d {
            for s in [1.0, -1.0] {
                let mut e = vec![0.0; d];
                e[i] = s;
                u.push(e);
            }
        }
        let dist = DiscreteCoupledDistribution::new(u.clone(), u, vec![1.0; 2 * d]).unwrap();
        assert!(dist.normalized);
        let r = fund_inequality_report(&dist).unwrap();
        assert!(r.lhs.abs() < 1e-15 && r.rhs.abs() < 1e-15);
    }

    #[test]
    fn fund_inequality_rank_one() {
        let line = vec![vec![1.0, 0.0, 0.0], vec![-1.0, 0.0, 0.0]];
        let dist = DiscreteCoupledDistribution::new(line.clone(), line.clone(), vec![1.0, 1.0]).unwrap();
        let r = fund_inequality_report(&dist).unwrap();
        assert_eq!((r.lhs, r.rhs), (0.0, 0.0));
        let reversed: Vec<Vec<f64>> = line.iter().rev().cloned().collect();
        let dist = DiscreteCoupledDistribution::new(line, reversed, vec![1.0, 1.0]).unwrap();
        assert_eq!(fund_inequality_report(&dist).unwrap().lhs, 0.0);
    }

    #[test]
    fn rhs_infinite_error() {
        let u = vec![vec![1.0, 0.0, 0.0], vec![-1.0, 0.0, 0.0], vec![0.0, 0.0, 0.0]];
        let v = vec![vec![1.0, 0.0, 0.0], vec![0.0, 0.0, 0.0], vec![-1.0, 0.0, 0.0]];
        let mut dist = DiscreteCoupledDistribution::new(u, v, vec![1.0; 3]).unwrap();
        dist.normalize().unwrap();
        assert_eq!(fund_inequality_report(&dist), Err(AnalysisError::RhsInfinite));
    }

    #[test]
    fn trace_inequality_examples() {
        let id = SymmetricMatrix::identity_over_d(4);
        let r = trace_inequality_report(&id, &id, id.as_matrix()).unwrap();
        assert!(r.lhs.abs() < 1e-15 && r.rhs.abs() < 1e-15);
        let r = trace_inequality_report(&id, &id, &SquareMatrix::zeros(4)).unwrap();
        assert!((r.lhs - 0.25).abs() < 1e-15 && (r.rhs - 0.25).abs() < 1e-15);
    }

    #[test]
    fn area_decomposition_is_exact() {
        let mut r = rng(1);
        for _ in 0..50 {
            let dist = DiscreteCoupledDistribution::random(7, 4, &mut r);
            let a = area_decomposition(&dist).unwrap();
            assert!(a.residual() < 1e-11, "{a:?}");
            assert!(a.pointwise >= 0.0 && a.antisymmetric >= -1e-15);
        }
    }

    #[test]
    fn area_decomposition_identical_marginals() {
        let dist = DiscreteCoupledDistribution::random(6, 3, &mut rng(2));
        let same = DiscreteCoupledDistribution::new(dist.u.clone(), dist.u.clone(), dist.weights.clone()).unwrap();
        assert!(area_decomposition(&same).unwrap().antisymmetric.abs() < 1e-15);
    }

    #[test]
    fn holder_constants_positive_and_validated() {
        for d in 3..10 {
            for delta in [0.1, 0.5, 1.0, 4.0] {
                let h = holder_constants(delta, 2.0, d).unwrap();
                assert!(h.k1 > 0.0 && h.k2 > 0.0 && (1.0 / h.p + 1.0 / h.q - 1.0).abs() < 1e-15);
            }
        }
        assert!(holder_constants(0.0, 2.0, 3).is_err());
        assert!(holder_constants(0.5, 1.0, 3).is_err());
        assert!(holder_constants(0.5, 2.0, 2).is_err());
    }

    #[test]
    fn order4_bound_examples() {
        let (b, t) = order4_bound(5.0 / 3.0, 3, 7.0);
        assert!((b - 5.0 / 3.0).abs() < 1e-15 && t == 0.0);
        let (_, t) = order4_bound(5.0 / 3.0 * (1.0 + std::f64::consts::E), 3, 0.0);
        assert!((t - 2.0).abs() < 1e-14);
        assert_eq!(order4_bound(1.0, 3, 0.0).1, 0.0);
    }

    #[test]
    fn delta4_examples() {
        let v = [0.3, 0.4, -2.0];
        assert!(delta4(&v, &v, 3).abs() < 1e-14);
        assert!((delta4(&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], 3) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn equilibrium_m4_value() {
        assert!((equilibrium_m4(64, 3) - 315.0 / 191.0).abs() < 1e-15);
    }

    #[test]
    fn gaussian_moments() {
        assert!((gaussian_norm_moment(3, 1.0) - 1.0).abs() < 1e-14);
        assert!((gaussian_norm_moment(3, 2.0) - 5.0 / 3.0).abs() < 1e-13);
    }

    #[test]
    fn blowup_is_flagged() {
        let e = k_main_estimate(0.5, 4.0, 4.0 / 3.0, 5, 3, 10, &mut rng(3)).unwrap_err();
        assert!(matches!(e, AnalysisError::MomentBlowup { .. }));
        assert!(matches!(wishart_kappa_moment(4, 3, 2.0, 10, &mut rng(3)), Err(AnalysisError::MomentBlowup { .. })));
    }

    #[test]
    fn degenerate_band_is_flagged() {
        assert!(matches!(counterexample_radial_band(&[1.0], 0.0, 3, 10, &mut rng(4)), Err(AnalysisError::DegenerateBand(_))));
        assert!(matches!(counterexample_radial_band(&[60.0], 0.01, 3, 10, &mut rng(4)), Err(AnalysisError::DegenerateBand(_))));
    }

    #[test]
    fn envelope_at_origin() {
        assert!((decay_envelope(0.7, 0.1, 0.5, 0.0, 0.0) - 0.7).abs() < 1e-15);
        assert!(decay_envelope(0.7, 0.1, 0.5, 10.0, 1.0) < 0.7);
    }

    #[test]
    fn slope_of_power_law() {
        let x = [2.0, 4.0, 8.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(-2.0)).collect();
        assert!((log_log_slope(&x, &y) + 2.0).abs() < 1e-12);
    }
}
