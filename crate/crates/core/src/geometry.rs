//! Vector primitives, sphere sampling, the elastic collision mapping and the
//! parallel spherical coupling of post-collisional directions.
//!
//! Vectors are plain `[f64]` slices of length `d`; unit vectors are wrapped in
//! [`UnitVec`], which re-normalizes on every construction.

use rand::Rng;
use rand_distr::{Beta, Distribution, StandardNormal};

/// Below this value of `1 + n_u·n_v` the pair of directions is treated as
/// antipodal and the coupling plane is drawn at random.
pub const ANTIPODAL_EPS: f64 = 1e-9;

/// Orthogonal residuals shorter than this are treated as "same direction".
const COLLINEAR_EPS: f64 = 1e-14;

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    norm_sq(a).sqrt()
}

#[inline]
pub fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// A vector of Euclidean norm one.
#[derive(Clone, Debug, PartialEq)]
pub struct UnitVec(Vec<f64>);

impl UnitVec {
    /// Normalizes `v`; `None` if `v` is zero or not finite.
    pub fn new(mut v: Vec<f64>) -> Option<Self> {
        let n = norm(&v);
        if !(n > 0.0 && n.is_finite()) {
            return None;
        }
        v.iter_mut().for_each(|x| *x /= n);
        Some(UnitVec(v))
    }

    /// The `i`-th canonical basis vector of `R^d`.
    pub fn basis(d: usize, i: usize) -> Self {
        let mut v = vec![0.0; d];
        v[i] = 1.0;
        UnitVec(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn neg(&self) -> Self {
        UnitVec(self.0.iter().map(|x| -x).collect())
    }

    pub fn dot(&self, other: &UnitVec) -> f64 {
        dot(&self.0, &other.0)
    }
}

impl AsRef<[f64]> for UnitVec {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Spherical coordinates of a post-collisional direction around `n`.
#[derive(Clone, Debug)]
pub struct CollisionFrame {
    pub n: UnitVec,
    pub m: UnitVec,
    pub l: UnitVec,
    pub theta: f64,
    pub phi: f64,
}

impl CollisionFrame {
    /// Largest absolute pairwise inner product of `(n, m, l)`.
    pub fn orthogonality_defect(&self) -> f64 {
        self.n
            .dot(&self.m)
            .abs()
            .max(self.n.dot(&self.l).abs())
            .max(self.m.dot(&self.l).abs())
    }
}

/// Elastic collision mapping: returns `(v', v'_*)` for the post-collisional
/// direction `n_prime`.
pub fn post_collision_velocities(v: &[f64], v_star: &[f64], n_prime: &UnitVec) -> (Vec<f64>, Vec<f64>) {
    let half_speed = 0.5 * dist_sq(v, v_star).sqrt();
    let mut a = Vec::with_capacity(v.len());
    let mut b = Vec::with_capacity(v.len());
    for ((x, y), n) in v.iter().zip(v_star).zip(n_prime.as_slice()) {
        let s = 0.5 * (x + y);
        a.push(s + half_speed * n);
        b.push(s - half_speed * n);
    }
    (a, b)
}

/// `cosθ n + sinθ cosφ m + sinθ sinφ l`, re-normalized.
pub fn build_direction(frame: &CollisionFrame) -> UnitVec {
    let (st, ct) = frame.theta.sin_cos();
    let (sp, cp) = frame.phi.sin_cos();
    let out: Vec<f64> = frame
        .n
        .as_slice()
        .iter()
        .zip(frame.m.as_slice())
        .zip(frame.l.as_slice())
        .map(|((n, m), l)| ct * n + st * (cp * m + sp * l))
        .collect();
    UnitVec::new(out).expect("direction built from an orthonormal frame is nonzero")
}

/// Uniform unit vector of `R^d`.
pub fn sample_unit<R: Rng + ?Sized>(d: usize, rng: &mut R) -> UnitVec {
    loop {
        let g: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        if let Some(u) = UnitVec::new(g) {
            return u;
        }
    }
}

/// Uniform unit vector orthogonal to every vector of the orthonormal family
/// `against`. Requires `against.len() < d`.
pub fn sample_orthogonal_unit<R: Rng + ?Sized>(d: usize, against: &[&UnitVec], rng: &mut R) -> UnitVec {
    assert!(against.len() < d, "no room for an orthogonal direction");
    loop {
        let mut g: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        // Two Gram-Schmidt passes keep the result orthogonal to ~1e-16.
        for _ in 0..2 {
            for e in against {
                let c = dot(&g, e.as_slice());
                axpy(-c, e.as_slice(), &mut g);
            }
        }
        if norm(&g) > 1e-8 {
            return UnitVec::new(g).unwrap();
        }
    }
}

/// Azimuth on `[0, π]` with density proportional to `sin^{d-3} φ`, drawn as
/// `cos φ = 1 - 2B` with `B ~ Beta((d-2)/2, (d-2)/2)`.
pub fn sample_azimuth<R: Rng + ?Sized>(d: usize, rng: &mut R) -> f64 {
    assert!(d >= 3, "azimuth density degenerates for d < 3");
    let shape = 0.5 * (d as f64 - 2.0);
    let b: f64 = Beta::new(shape, shape).unwrap().sample(rng);
    (1.0 - 2.0 * b).clamp(-1.0, 1.0).acos()
}

/// Draws a post-collisional direction from the uniform law on
/// `{n' : n'·n = cos θ}`. Returns the full frame so that callers can record
/// the azimuth.
pub fn sample_post_frame<R: Rng + ?Sized>(n: &UnitVec, theta: f64, rng: &mut R) -> CollisionFrame {
    let d = n.dim();
    let m = sample_orthogonal_unit(d, &[n], rng);
    let l = sample_orthogonal_unit(d, &[n, &m], rng);
    let phi = sample_azimuth(d, rng);
    CollisionFrame { n: n.clone(), m, l, theta, phi }
}

pub fn sample_post_direction<R: Rng + ?Sized>(n: &UnitVec, theta: f64, rng: &mut R) -> UnitVec {
    build_direction(&sample_post_frame(n, theta, rng))
}

/// Rotation acting in the plane `span(e1, e2)` by `angle` (from `e1` towards
/// `e2`) and as the identity on the orthogonal complement.
#[derive(Clone, Debug)]
pub enum Rotation {
    Identity,
    Plane { e1: UnitVec, e2: UnitVec, angle: f64 },
}

impl Rotation {
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = x.to_vec();
        self.apply_in_place(&mut out);
        out
    }

    pub fn apply_in_place(&self, x: &mut [f64]) {
        if let Rotation::Plane { e1, e2, angle } = self {
            let (s, c) = angle.sin_cos();
            let a = dot(x, e1.as_slice());
            let b = dot(x, e2.as_slice());
            axpy((c - 1.0) * a - s * b, e1.as_slice(), x);
            axpy(s * a + (c - 1.0) * b, e2.as_slice(), x);
        }
    }

    pub fn apply_unit(&self, x: &UnitVec) -> UnitVec {
        UnitVec::new(self.apply(x.as_slice())).unwrap()
    }

    pub fn inverse(&self) -> Rotation {
        match self {
            Rotation::Identity => Rotation::Identity,
            Rotation::Plane { e1, e2, angle } => Rotation::Plane {
                e1: e1.clone(),
                e2: e2.clone(),
                angle: -angle,
            },
        }
    }
}

/// The elementary rotation bringing `n_u` onto `n_v` along the great circle
/// joining them. When the two directions are (numerically) antipodal the
/// rotation plane is `span(n_u, sigma)`; `sigma` is ignored otherwise.
pub fn parallel_transport_map(n_u: &UnitVec, n_v: &UnitVec, sigma: &UnitVec) -> Rotation {
    let c = n_u.dot(n_v);
    if 1.0 + c < ANTIPODAL_EPS {
        return antipodal_rotation(n_u, sigma);
    }
    let mut w = n_v.as_slice().to_vec();
    axpy(-c, n_u.as_slice(), &mut w);
    let s = norm(&w);
    if s < COLLINEAR_EPS {
        return Rotation::Identity;
    }
    Rotation::Plane {
        e1: n_u.clone(),
        e2: UnitVec::new(w).unwrap(),
        angle: s.atan2(c),
    }
}

fn antipodal_rotation(n_u: &UnitVec, sigma: &UnitVec) -> Rotation {
    let mut w = sigma.as_slice().to_vec();
    let c = dot(&w, n_u.as_slice());
    axpy(-c, n_u.as_slice(), &mut w);
    match UnitVec::new(w) {
        Some(e2) if norm(sigma.as_slice()) > 0.0 && (1.0 - c.abs()) > 1e-12 => Rotation::Plane {
            e1: n_u.clone(),
            e2,
            angle: std::f64::consts::PI,
        },
        // sigma parallel to n_u: any plane through n_u will do
        _ => {
            let e2 = first_orthogonal(n_u);
            Rotation::Plane { e1: n_u.clone(), e2, angle: std::f64::consts::PI }
        }
    }
}

/// Deterministic unit vector orthogonal to `n`.
fn first_orthogonal(n: &UnitVec) -> UnitVec {
    let d = n.dim();
    let (k, _) = n
        .as_slice()
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .unwrap();
    let mut w = UnitVec::basis(d, k).into_inner();
    let c = dot(&w, n.as_slice());
    axpy(-c, n.as_slice(), &mut w);
    UnitVec::new(w).unwrap()
}

/// One draw of the parallel spherical coupling.
#[derive(Clone, Debug)]
pub struct CoupledDirections {
    pub n_u_post: UnitVec,
    pub n_v_post: UnitVec,
    pub phi: f64,
    pub l: UnitVec,
}

/// Samples `(n'_u, n'_v)` with shared scattering angle, azimuth and
/// out-of-plane direction, so that `n'_v` is the image of `n'_u` under the
/// rotation carrying `n_u` to `n_v`.
pub fn coupled_post_directions<R: Rng + ?Sized>(
    n_u: &UnitVec,
    n_v: &UnitVec,
    theta: f64,
    rng: &mut R,
) -> CoupledDirections {
    let d = n_u.dim();
    assert!(d >= 3, "the parallel coupling needs d >= 3");
    let c = n_u.dot(n_v);
    let rotation = if 1.0 + c < ANTIPODAL_EPS {
        let sigma = sample_unit(d, rng);
        antipodal_rotation(n_u, &sigma)
    } else {
        parallel_transport_map(n_u, n_v, n_u)
    };
    let (m_u, m_v) = match &rotation {
        Rotation::Identity => {
            let m = sample_orthogonal_unit(d, &[n_u], rng);
            (m.clone(), m)
        }
        Rotation::Plane { e2, .. } => (e2.clone(), rotation.apply_unit(e2)),
    };
    let l = sample_orthogonal_unit(d, &[n_u, &m_u], rng);
    let phi = sample_azimuth(d, rng);

    let frame_u = CollisionFrame { n: n_u.clone(), m: m_u, l: l.clone(), theta, phi };
    let n_u_post = build_direction(&frame_u);
    let frame_v = CollisionFrame { n: n_v.clone(), m: m_v, l, theta, phi };
    let n_v_post = build_direction(&frame_v);
    CoupledDirections { n_u_post, n_v_post, phi, l: frame_v.l }
}
