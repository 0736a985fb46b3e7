//! Event-driven simulation of the Kac particle system and of its coupled
//! version.

use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::Serialize;
use thiserror::Error;

use crate::assignment::{solve_assignment, AssignmentError, CostMatrix};
use crate::geometry::{coupled_post_directions, dist_sq, dot, norm_sq, post_collision_velocities, sample_post_frame};
use crate::geometry::{build_direction, UnitVec};
use crate::kernels::AngularKernel;

/// Tolerance on the conservation laws of a valid [`Configuration`].
pub const CONSTRAINT_TOL: f64 = 1e-10;
/// Events between two re-projections onto the constraint sphere.
pub const REPROJECT_INTERVAL: u64 = 10_000;
/// Largest tolerated residual of the per-event contraction identity.
pub const RESIDUAL_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SystemError {
    #[error("degenerate input: all velocities are equal")]
    DegenerateInput,
    #[error("invalid shape: {0}")]
    InvalidShape(String),
    #[error("conservation laws violated: {0}")]
    ConstraintViolated(String),
    #[error("invariant violated at event {event_count}: {detail}")]
    InvariantViolation { event_count: u64, detail: String, event: Box<CollisionEvent> },
    #[error("observer failed: {0}")]
    Observer(String),
    #[error(transparent)]
    Assignment(#[from] AssignmentError),
}

/// `N` velocities in `R^d` with zero mean and unit mean energy.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Configuration {
    n: usize,
    d: usize,
    data: Vec<f64>,
}

fn check_shape(n: usize, d: usize, len: usize) -> Result<(), SystemError> {
    if n < 2 {
        return Err(SystemError::InvalidShape(format!("need N >= 2, got {n}")));
    }
    if d < 3 {
        return Err(SystemError::InvalidShape(format!("need d >= 3, got {d}")));
    }
    if len != n * d {
        return Err(SystemError::InvalidShape(format!("expected {} values, got {len}", n * d)));
    }
    Ok(())
}

impl Configuration {
    /// Wraps row-major velocities, checking the conservation laws.
    pub fn new(n: usize, d: usize, data: Vec<f64>) -> Result<Self, SystemError> {
        check_shape(n, d, data.len())?;
        let c = Configuration { n, d, data };
        let drift = c.mean().iter().fold(0.0f64, |a, x| a.max(x.abs()));
        let energy = c.m2();
        if drift > CONSTRAINT_TOL || (energy - 1.0).abs() > CONSTRAINT_TOL {
            return Err(SystemError::ConstraintViolated(format!("mean drift {drift:e}, energy {energy}")));
        }
        Ok(c)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn particle(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn particles(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.d)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    fn set_particle(&mut self, i: usize, v: &[f64]) {
        self.data[i * self.d..(i + 1) * self.d].copy_from_slice(v);
    }

    /// `⟨v⟩_N`.
    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.d];
        for p in self.particles() {
            m.iter_mut().zip(p).for_each(|(a, x)| *a += x);
        }
        m.iter_mut().for_each(|a| *a /= self.n as f64);
        m
    }

    /// `⟨|v|²⟩_N`.
    pub fn m2(&self) -> f64 {
        self.particles().map(norm_sq).sum::<f64>() / self.n as f64
    }

    /// `⟨|v|⁴⟩_N`.
    pub fn m4(&self) -> f64 {
        self.particles().map(|p| norm_sq(p).powi(2)).sum::<f64>() / self.n as f64
    }

    /// Particle `i` of the result is particle `sigma[i]` of `self`.
    pub fn permuted(&self, sigma: &[usize]) -> Configuration {
        let mut data = Vec::with_capacity(self.data.len());
        for &j in sigma {
            data.extend_from_slice(self.particle(j));
        }
        Configuration { n: self.n, d: self.d, data }
    }

    /// Removes accumulated floating point drift.
    pub fn reproject(&mut self) {
        if let Ok(c) = project_to_constraint_sphere(self.n, self.d, std::mem::take(&mut self.data)) {
            *self = c;
        }
    }
}

/// Centers and rescales raw row-major velocities so that `⟨v⟩_N = 0` and
/// `⟨|v|²⟩_N = 1`.
pub fn project_to_constraint_sphere(n: usize, d: usize, mut raw: Vec<f64>) -> Result<Configuration, SystemError> {
    check_shape(n, d, raw.len())?;
    let mut mean = vec![0.0; d];
    for p in raw.chunks_exact(d) {
        mean.iter_mut().zip(p).for_each(|(a, x)| *a += x);
    }
    mean.iter_mut().for_each(|a| *a /= n as f64);
    for p in raw.chunks_exact_mut(d) {
        p.iter_mut().zip(&mean).for_each(|(x, m)| *x -= m);
    }
    let energy = raw.iter().map(|x| x * x).sum::<f64>() / n as f64;
    if !(energy > 0.0 && energy.is_finite()) {
        return Err(SystemError::DegenerateInput);
    }
    let scale = energy.sqrt().recip();
    raw.iter_mut().for_each(|x| *x *= scale);
    Ok(Configuration { n, d, data: raw })
}

/// Uniform sample of the constraint sphere, obtained by projecting i.i.d.
/// standard Gaussian velocities.
pub fn sample_equilibrium<R: Rng + ?Sized>(n: usize, d: usize, rng: &mut R) -> Result<Configuration, SystemError> {
    check_shape(n, d, n * d)?;
    loop {
        let raw: Vec<f64> = (0..n * d).map(|_| rng.sample(StandardNormal)).collect();
        match project_to_constraint_sphere(n, d, raw) {
            Err(SystemError::DegenerateInput) => continue,
            other => return other,
        }
    }
}

/// Energy `b` of the cold half of a two-temperature Gaussian mixture whose
/// hot half has energy `hot`, chosen so that the normalized fourth moment of
/// the mixture equals `target_m4`. Requires `(d+2)/d ≤ target_m4 < 2(d+2)/d`.
pub fn two_temperature_cold_energy(d: usize, hot: f64, target_m4: f64) -> Result<f64, SystemError> {
    let eq = (d as f64 + 2.0) / d as f64;
    let tau = target_m4 / eq;
    if !(hot > 0.0) || !(1.0..2.0).contains(&tau) {
        return Err(SystemError::InvalidShape(format!(
            "fourth moment {target_m4} outside [{eq}, {})",
            2.0 * eq
        )));
    }
    // 2(1 + x²) = τ(1 + x)² with x = b/a, smaller root
    let x = (tau - (tau * tau - (2.0 - tau).powi(2)).sqrt()) / (2.0 - tau);
    Ok(hot * x)
}

/// Half the particles from `N(0, hot/d Id)`, the rest from
/// `N(0, cold/d Id)`, projected onto the constraint sphere.
pub fn sample_two_temperature<R: Rng + ?Sized>(
    n: usize,
    d: usize,
    hot: f64,
    cold: f64,
    rng: &mut R,
) -> Result<Configuration, SystemError> {
    check_shape(n, d, n * d)?;
    let (sh, sc) = ((hot / d as f64).sqrt(), (cold / d as f64).sqrt());
    loop {
        let raw: Vec<f64> = (0..n * d)
            .map(|k| {
                let g: f64 = rng.sample(StandardNormal);
                if k / d < n / 2 { sh * g } else { sc * g }
            })
            .collect();
        match project_to_constraint_sphere(n, d, raw) {
            Err(SystemError::DegenerateInput) => continue,
            other => return other,
        }
    }
}

/// One binary collision. `pair` indexes the (first) configuration.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CollisionEvent {
    pub time: f64,
    pub pair: (usize, usize),
    pub theta: f64,
    pub phi: f64,
    pub l: Vec<f64>,
}

/// Diagnostics of one event.
#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub event: CollisionEvent,
    /// Residual of the contraction identity (zero for uncoupled steps).
    pub residual: f64,
    /// Change of `|u - v|² + |u_* - v_*|²` over the colliding pair.
    pub distance_change: f64,
    /// Largest relative change of pair momentum or pair energy.
    pub conservation_defect: f64,
}

/// Total jump rate `(N - 1) b0 / 2` of the particle system.
pub fn total_rate(n: usize, kernel: &AngularKernel) -> f64 {
    0.5 * (n as f64 - 1.0) * kernel.total_rate()
}

fn uniform_pair<R: Rng + ?Sized>(n: usize, rng: &mut R) -> (usize, usize) {
    let i = rng.random_range(0..n);
    let mut j = rng.random_range(0..n - 1);
    if j >= i {
        j += 1;
    }
    (i, j)
}

fn pair_defect(a: &[f64], b: &[f64], a2: &[f64], b2: &[f64]) -> f64 {
    let scale = norm_sq(a) + norm_sq(b);
    if scale == 0.0 {
        return 0.0;
    }
    let e = (norm_sq(a2) + norm_sq(b2) - scale).abs() / scale;
    let p = a
        .iter()
        .zip(b)
        .zip(a2.iter().zip(b2))
        .map(|((x, y), (x2, y2))| ((x + y) - (x2 + y2)).abs())
        .fold(0.0, f64::max)
        / scale.sqrt();
    e.max(p)
}

/// Anything the simulation driver can advance event by event.
pub trait Process {
    fn clock(&self) -> f64;
    fn n(&self) -> usize;
    fn set_clock(&mut self, t: f64);
    /// Applies one collision at the current clock.
    fn collide<R: Rng + ?Sized>(&mut self, kernel: &AngularKernel, rng: &mut R) -> Result<StepOutcome, SystemError>;
}

fn draw_wait<R: Rng + ?Sized>(n: usize, kernel: &AngularKernel, rng: &mut R) -> f64 {
    Exp::new(total_rate(n, kernel)).expect("positive rate").sample(rng)
}

/// Uncoupled Kac particle system.
#[derive(Clone, Debug)]
pub struct KacState {
    pub config: Configuration,
    pub clock: f64,
    pub event_count: u64,
}

impl KacState {
    pub fn new(config: Configuration) -> Self {
        KacState { config, clock: 0.0, event_count: 0 }
    }
}

impl Process for KacState {
    fn clock(&self) -> f64 {
        self.clock
    }

    fn n(&self) -> usize {
        self.config.n
    }

    fn set_clock(&mut self, t: f64) {
        self.clock = t;
    }

    fn collide<R: Rng + ?Sized>(&mut self, kernel: &AngularKernel, rng: &mut R) -> Result<StepOutcome, SystemError> {
        let c = &mut self.config;
        let (i, j) = uniform_pair(c.n, rng);
        let theta = kernel.sample_theta(rng);
        let d = c.d;
        let rel: Vec<f64> = c.particle(i).iter().zip(c.particle(j)).map(|(a, b)| a - b).collect();
        let mut event = CollisionEvent { time: self.clock, pair: (i, j), theta, phi: 0.0, l: vec![0.0; d] };
        let mut defect = 0.0;
        if let Some(n_dir) = UnitVec::new(rel) {
            let frame = sample_post_frame(&n_dir, theta, rng);
            let n_post = build_direction(&frame);
            let (a, b) = post_collision_velocities(c.particle(i), c.particle(j), &n_post);
            defect = pair_defect(c.particle(i), c.particle(j), &a, &b);
            c.set_particle(i, &a);
            c.set_particle(j, &b);
            event.phi = frame.phi;
            event.l = frame.l.into_inner();
        }
        self.event_count += 1;
        if self.event_count % REPROJECT_INTERVAL == 0 {
            c.reproject();
        }
        Ok(StepOutcome { event, residual: 0.0, distance_change: 0.0, conservation_defect: defect })
    }
}

/// Advances the clock by an exponential waiting time and applies one event.
pub fn step_kac<R: Rng + ?Sized>(state: &mut KacState, kernel: &AngularKernel, rng: &mut R) -> StepOutcome {
    let t = state.clock + draw_wait(state.config.n, kernel, rng);
    state.clock = t;
    state.collide(kernel, rng).expect("uncoupled steps cannot fail")
}

/// Permutation `σ` minimizing `⟨|u - v∘σ|²⟩_N`.
pub fn initial_pairing(u: &Configuration, v: &Configuration) -> Result<Vec<usize>, SystemError> {
    if u.n != v.n || u.d != v.d {
        return Err(SystemError::InvalidShape(format!("({}, {}) vs ({}, {})", u.n, u.d, v.n, v.d)));
    }
    Ok(solve_assignment(&CostMatrix::squared_distances(u, v))?.permutation)
}

/// Two copies of the particle system driven by common collisions. Particle
/// `i` of `u` is coupled with particle `pairing[i]` of `v`.
#[derive(Clone, Debug)]
pub struct CoupledState {
    pub u: Configuration,
    pub v: Configuration,
    pub pairing: Vec<usize>,
    pub clock: f64,
    pub event_count: u64,
}

impl CoupledState {
    pub fn new(u: Configuration, v: Configuration, pairing: Vec<usize>) -> Result<Self, SystemError> {
        if u.n != v.n || u.d != v.d {
            return Err(SystemError::InvalidShape(format!("({}, {}) vs ({}, {})", u.n, u.d, v.n, v.d)));
        }
        let mut seen = vec![false; u.n];
        if pairing.len() != u.n || !pairing.iter().all(|&j| j < u.n && !std::mem::replace(&mut seen[j], true)) {
            return Err(SystemError::InvalidShape("pairing is not a permutation".into()));
        }
        Ok(CoupledState { u, v, pairing, clock: 0.0, event_count: 0 })
    }

    /// Couples `u` and `v` through an optimal pairing.
    pub fn with_optimal_pairing(u: Configuration, v: Configuration) -> Result<Self, SystemError> {
        let pairing = initial_pairing(&u, &v)?;
        Self::new(u, v, pairing)
    }

    /// `v` reordered along the pairing.
    pub fn v_paired(&self) -> Configuration {
        self.v.permuted(&self.pairing)
    }

    /// `⟨|u - v∘σ|²⟩_N`.
    pub fn mean_sq_distance(&self) -> f64 {
        (0..self.u.n)
            .map(|i| dist_sq(self.u.particle(i), self.v.particle(self.pairing[i])))
            .sum::<f64>()
            / self.u.n as f64
    }

    /// `⟨u · v∘σ⟩_N`.
    pub fn correlation(&self) -> f64 {
        (0..self.u.n)
            .map(|i| dot(self.u.particle(i), self.v.particle(self.pairing[i])))
            .sum::<f64>()
            / self.u.n as f64
    }
}

impl Process for CoupledState {
    fn clock(&self) -> f64 {
        self.clock
    }

    fn n(&self) -> usize {
        self.u.n
    }

    fn set_clock(&mut self, t: f64) {
        self.clock = t;
    }

    fn collide<R: Rng + ?Sized>(&mut self, kernel: &AngularKernel, rng: &mut R) -> Result<StepOutcome, SystemError> {
        let d = self.u.d;
        let (i, j) = uniform_pair(self.u.n, rng);
        let (si, sj) = (self.pairing[i], self.pairing[j]);
        let theta = kernel.sample_theta(rng);

        let (ui, uj) = (self.u.particle(i).to_vec(), self.u.particle(j).to_vec());
        let (vi, vj) = (self.v.particle(si).to_vec(), self.v.particle(sj).to_vec());
        let du: Vec<f64> = ui.iter().zip(&uj).map(|(a, b)| a - b).collect();
        let dv: Vec<f64> = vi.iter().zip(&vj).map(|(a, b)| a - b).collect();
        let area = (norm_sq(&du) * norm_sq(&dv)).sqrt() - dot(&du, &dv);
        let before = dist_sq(&ui, &vi) + dist_sq(&uj, &vj);

        let mut event = CollisionEvent { time: self.clock, pair: (i, j), theta, phi: 0.0, l: vec![0.0; d] };
        // A vanishing relative velocity leaves its copy unchanged whatever
        // the direction, so the other copy's direction is used.
        let (n_u, n_v) = match (UnitVec::new(du), UnitVec::new(dv)) {
            (Some(a), Some(b)) => (Some(a), Some(b)),
            (Some(a), None) => (Some(a.clone()), Some(a)),
            (None, Some(b)) => (Some(b.clone()), Some(b)),
            (None, None) => (None, None),
        };
        let (mut residual, mut change, mut defect) = (0.0, 0.0, 0.0);
        if let (Some(n_u), Some(n_v)) = (n_u, n_v) {
            let dirs = coupled_post_directions(&n_u, &n_v, theta, rng);
            let (ui2, uj2) = post_collision_velocities(&ui, &uj, &dirs.n_u_post);
            let (vi2, vj2) = post_collision_velocities(&vi, &vj, &dirs.n_v_post);
            let after = dist_sq(&ui2, &vi2) + dist_sq(&uj2, &vj2);
            change = after - before;
            let (st, sp) = (theta.sin(), dirs.phi.sin());
            residual = change + st * st * sp * sp * area;
            defect = pair_defect(&ui, &uj, &ui2, &uj2).max(pair_defect(&vi, &vj, &vi2, &vj2));
            event.phi = dirs.phi;
            event.l = dirs.l.into_inner();
            self.u.set_particle(i, &ui2);
            self.u.set_particle(j, &uj2);
            self.v.set_particle(si, &vi2);
            self.v.set_particle(sj, &vj2);
        }
        self.event_count += 1;

        let scale = before.max(1.0);
        if residual.abs() > RESIDUAL_TOL * scale || change > 1e-12 * scale {
            return Err(SystemError::InvariantViolation {
                event_count: self.event_count,
                detail: format!("residual {residual:e}, distance change {change:e}"),
                event: Box::new(event),
            });
        }
        if self.event_count % REPROJECT_INTERVAL == 0 {
            self.u.reproject();
            self.v.reproject();
        }
        Ok(StepOutcome { event, residual, distance_change: change, conservation_defect: defect })
    }
}

/// Advances the coupled clock and applies one common event to both copies.
pub fn step_coupled<R: Rng + ?Sized>(
    state: &mut CoupledState,
    kernel: &AngularKernel,
    rng: &mut R,
) -> Result<StepOutcome, SystemError> {
    let t = state.clock + draw_wait(state.u.n, kernel, rng);
    state.clock = t;
    state.collide(kernel, rng)
}

/// `n + 1` equally spaced times on `[0, horizon]`; just `[0]` when the
/// horizon is zero.
pub fn time_grid(horizon: f64, n: usize) -> Vec<f64> {
    if horizon <= 0.0 || n == 0 {
        return vec![0.0];
    }
    (0..=n).map(|k| horizon * k as f64 / n as f64).collect()
}

/// Runs `process` through the sample times in `grid` (non-decreasing,
/// starting at or after the current clock), calling `observe` with the
/// state at each time. `on_event` sees every event's diagnostics.
pub fn simulate<P, R, O, E>(
    process: &mut P,
    kernel: &AngularKernel,
    grid: &[f64],
    mut observe: O,
    mut on_event: E,
    rng: &mut R,
) -> Result<(), SystemError>
where
    P: Process,
    R: Rng + ?Sized,
    O: FnMut(f64, &P) -> Result<(), SystemError>,
    E: FnMut(&StepOutcome),
{
    let mut k = 0;
    while k < grid.len() {
        let next = process.clock() + draw_wait(process.n(), kernel, rng);
        while k < grid.len() && grid[k] < next {
            observe(grid[k], process)?;
            k += 1;
        }
        if k == grid.len() {
            break;
        }
        process.set_clock(next);
        let outcome = process.collide(kernel, rng)?;
        on_event(&outcome);
    }
    Ok(())
}

/// One sampled time of a trajectory. Columns that do not apply to a run are
/// NaN.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct TrajectoryRow {
    pub time: f64,
    pub mean_sq_distance: f64,
    pub m2: f64,
    pub m4: f64,
    pub creation: f64,
    pub fund_lhs: f64,
    pub fund_rhs: f64,
    /// Correlation `⟨u · v∘σ⟩_N`; aggregates keep the minimum over replicas.
    pub min_corr: f64,
    pub weak_lhs: f64,
    pub weak_rhs: f64,
}

pub const TRAJECTORY_COLUMNS: [&str; 10] = [
    "time",
    "mean_sq_distance",
    "m2",
    "m4",
    "creation",
    "fund_lhs",
    "fund_rhs",
    "min_corr",
    "weak_lhs",
    "weak_rhs",
];

impl TrajectoryRow {
    pub fn values(&self) -> [f64; 10] {
        [
            self.time,
            self.mean_sq_distance,
            self.m2,
            self.m4,
            self.creation,
            self.fund_lhs,
            self.fund_rhs,
            self.min_corr,
            self.weak_lhs,
            self.weak_rhs,
        ]
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct TrajectoryRecord {
    pub rows: Vec<TrajectoryRow>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn projection_of_two_particles() {
        let c = project_to_constraint_sphere(2, 3, vec![2.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(c.as_flat(), &[1.0, 0.0, 0.0, -1.0, 0.0, 0.0]);
    }

    #[test]
    fn projection_is_idempotent() {
        let c = sample_equilibrium(10, 4, &mut rng(1)).unwrap();
        let again = project_to_constraint_sphere(10, 4, c.as_flat().to_vec()).unwrap();
        for (a, b) in c.as_flat().iter().zip(again.as_flat()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn projection_rejects_equal_velocities() {
        let raw = [1.0, 2.0, 3.0].repeat(5);
        assert_eq!(project_to_constraint_sphere(5, 3, raw), Err(SystemError::DegenerateInput));
    }

    #[test]
    fn shape_errors() {
        assert!(matches!(project_to_constraint_sphere(1, 3, vec![0.0; 3]), Err(SystemError::InvalidShape(_))));
        assert!(matches!(project_to_constraint_sphere(2, 2, vec![0.0; 4]), Err(SystemError::InvalidShape(_))));
        assert!(matches!(Configuration::new(2, 3, vec![1.0; 6]), Err(SystemError::ConstraintViolated(_))));
    }

    #[test]
    fn equilibrium_satisfies_constraints() {
        let c = sample_equilibrium(50, 3, &mut rng(2)).unwrap();
        assert!(Configuration::new(50, 3, c.as_flat().to_vec()).is_ok());
    }

    #[test]
    fn two_temperature_mixture_has_target_moment() {
        let b = two_temperature_cold_energy(3, 3.0, 3.0).unwrap();
        let (a, eq) = (3.0, 5.0 / 3.0);
        let m4 = eq * (a * a + b * b) / 2.0 / ((a + b) / 2.0f64).powi(2);
        assert!((m4 - 3.0).abs() < 1e-12);
        assert!(b < a);
        assert!(two_temperature_cold_energy(3, 3.0, 4.0).is_err());
        let c = sample_two_temperature(400, 3, a, b, &mut rng(20)).unwrap();
        assert!((c.m4() - 3.0).abs() < 0.6);
    }

    #[test]
    fn zero_angle_kernel_freezes_configuration() {
        let kernel = AngularKernel::dirac_with_rate(0.0, 1.0).unwrap();
        let c = sample_equilibrium(8, 3, &mut rng(3)).unwrap();
        let mut s = KacState::new(c.clone());
        let mut r = rng(4);
        for _ in 0..1000 {
            step_kac(&mut s, &kernel, &mut r);
        }
        for (a, b) in c.as_flat().iter().zip(s.config.as_flat()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn kac_steps_conserve() {
        let kernel = AngularKernel::uniform(0.0).unwrap();
        let mut s = KacState::new(sample_equilibrium(16, 3, &mut rng(5)).unwrap());
        let mut r = rng(6);
        for _ in 0..5000 {
            let o = step_kac(&mut s, &kernel, &mut r);
            assert!(o.conservation_defect < 1e-12);
        }
        assert!(Configuration::new(16, 3, s.config.as_flat().to_vec()).is_ok());
    }

    #[test]
    fn identical_copies_stay_identical() {
        let kernel = AngularKernel::uniform(0.0).unwrap();
        let u = sample_equilibrium(12, 3, &mut rng(7)).unwrap();
        let mut s = CoupledState::with_optimal_pairing(u.clone(), u).unwrap();
        let mut r = rng(8);
        for _ in 0..2000 {
            step_coupled(&mut s, &kernel, &mut r).unwrap();
        }
        assert_eq!(s.u, s.v_paired());
    }

    #[test]
    fn zero_angle_leaves_both_copies() {
        let kernel = AngularKernel::dirac_with_rate(0.0, 1.0).unwrap();
        let u = sample_equilibrium(6, 3, &mut rng(9)).unwrap();
        let v = sample_equilibrium(6, 3, &mut rng(10)).unwrap();
        let mut s = CoupledState::with_optimal_pairing(u.clone(), v.clone()).unwrap();
        let mut r = rng(11);
        for _ in 0..200 {
            step_coupled(&mut s, &kernel, &mut r).unwrap();
        }
        let close = |a: &Configuration, b: &Configuration| a.as_flat().iter().zip(b.as_flat()).all(|(x, y)| (x - y).abs() < 1e-14);
        assert!(close(&s.u, &u) && close(&s.v, &v));
    }

    #[test]
    fn coupled_distance_is_monotone() {
        let kernel = AngularKernel::uniform(0.0).unwrap();
        let u = sample_equilibrium(20, 4, &mut rng(12)).unwrap();
        let v = sample_equilibrium(20, 4, &mut rng(13)).unwrap();
        let mut s = CoupledState::with_optimal_pairing(u, v).unwrap();
        let mut r = rng(14);
        let mut last = s.mean_sq_distance();
        for _ in 0..3000 {
            let o = step_coupled(&mut s, &kernel, &mut r).unwrap();
            assert!(o.residual.abs() < 1e-9);
            let now = s.mean_sq_distance();
            assert!(now <= last + 1e-12);
            last = now;
        }
    }

    #[test]
    fn optimal_pairing_has_nonnegative_correlation() {
        for seed in 0..20 {
            let u = sample_equilibrium(9, 3, &mut rng(100 + seed)).unwrap();
            let v = sample_equilibrium(9, 3, &mut rng(200 + seed)).unwrap();
            let s = CoupledState::with_optimal_pairing(u, v).unwrap();
            assert!(s.correlation() >= -1e-12);
        }
    }

    #[test]
    fn pairing_must_be_permutation() {
        let u = sample_equilibrium(3, 3, &mut rng(15)).unwrap();
        assert!(CoupledState::new(u.clone(), u, vec![0, 0, 1]).is_err());
    }

    #[test]
    fn zero_horizon_gives_initial_snapshot() {
        let kernel = AngularKernel::uniform(0.0).unwrap();
        let mut s = KacState::new(sample_equilibrium(4, 3, &mut rng(16)).unwrap());
        let mut times = vec![];
        simulate(&mut s, &kernel, &time_grid(0.0, 10), |t, _| { times.push(t); Ok(()) }, |_| {}, &mut rng(17)).unwrap();
        assert_eq!(times, vec![0.0]);
        assert_eq!(s.event_count, 0);
    }

    #[test]
    fn simulation_is_deterministic() {
        let kernel = AngularKernel::uniform(0.0).unwrap();
        let run = || {
            let mut s = KacState::new(sample_equilibrium(10, 3, &mut rng(18)).unwrap());
            let mut events = vec![];
            simulate(&mut s, &kernel, &time_grid(3.0, 6), |_, _| Ok(()), |o| events.push(o.event.clone()), &mut rng(19)).unwrap();
            events
        };
        let a = run();
        assert!(!a.is_empty());
        assert_eq!(a, run());
    }
}
