use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector, Matrix3, SMatrix, Vector2, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Reconstruction, SfmError};
use crate::geometry::{AffineCamera, GeometryError, Point3};

type Mat8 = SMatrix<f64, 8, 8>;
type Mat8x3 = SMatrix<f64, 8, 3>;
type Vec8 = SMatrix<f64, 8, 1>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossKind {
    Squared,
    Huber,
    Cauchy,
}

impl LossKind {
    /// `(rho(s), irls_weight(s))` for residual norm `s` and scale `delta`.
    /// `rho` is scaled so that all losses agree with `s^2 / 2` near zero.
    pub(crate) fn eval(self, s: f64, delta: f64) -> (f64, f64) {
        match self {
            LossKind::Squared => (0.5 * s * s, 1.0),
            LossKind::Huber => {
                if s <= delta {
                    (0.5 * s * s, 1.0)
                } else {
                    (delta * s - 0.5 * delta * delta, delta / s)
                }
            }
            LossKind::Cauchy => {
                let q = s * s / (delta * delta);
                (0.5 * delta * delta * q.ln_1p(), 1.0 / (1.0 + q))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaConfig {
    pub loss: LossKind,
    /// Loss scale in pixels.
    pub scale: f64,
    pub max_iterations: usize,
    /// Stop once an accepted step lowers the cost by less than this fraction.
    pub function_tolerance: f64,
    /// Number of most recently registered cameras freed by a local pass.
    pub local_window: usize,
    /// Observations whose residual exceeds this many pixels are rejected,
    /// both on entry and after each solve, which is then repeated.
    pub outlier_threshold: Option<f64>,
}

impl Default for BaConfig {
    fn default() -> Self {
        Self {
            loss: LossKind::Huber,
            scale: 1.0,
            max_iterations: 50,
            function_tolerance: 1e-9,
            local_window: 5,
            outlier_threshold: Some(4.0),
        }
    }
}

impl BaConfig {
    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(GeometryError::InvalidInput(format!(
                "loss scale must be positive, got {}",
                self.scale
            )));
        }
        if self.max_iterations == 0 {
            return Err(GeometryError::InvalidInput("max_iterations must be >= 1".into()));
        }
        if !(self.function_tolerance >= 0.0) {
            return Err(GeometryError::InvalidInput("function_tolerance must be >= 0".into()));
        }
        if let Some(t) = self.outlier_threshold {
            if !(t > 0.0) {
                return Err(GeometryError::InvalidInput("outlier_threshold must be positive".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BaScope {
    /// Every camera except the first registered one, and every point.
    Global,
    /// The last `local_window` registered cameras and the points they see.
    Local,
    /// Points only; all cameras frozen.
    PointsOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaReport {
    pub scope: BaScope,
    pub initial_cost: f64,
    pub final_cost: f64,
    /// Accepted plus rejected LM steps, summed over re-solves.
    pub iterations: usize,
    pub free_cameras: usize,
    pub free_points: usize,
    pub observations: usize,
    pub rejected_observations: usize,
    pub dropped_points: usize,
}

enum CamSlot {
    Free(usize),
    Fixed(AffineCamera),
}

struct Term {
    cam: CamSlot,
    point: usize,
    pixel: Vector2<f64>,
    track: usize,
    tile: String,
}

struct Problem {
    cam_ids: Vec<String>,
    /// Global parameter index of each of a free camera's 8 parameters,
    /// `None` where the parameter is held fixed.
    index: Vec<[Option<usize>; 8]>,
    n_params: usize,
    point_ids: Vec<usize>,
    terms: Vec<Term>,
    /// Terms of each point, as indices into `terms`.
    by_point: Vec<Vec<usize>>,
}

fn project(p: &[f64; 8], x: &Vector3<f64>) -> Vector2<f64> {
    Vector2::new(
        p[0] * x.x + p[1] * x.y + p[2] * x.z + p[6],
        p[3] * x.x + p[4] * x.y + p[5] * x.z + p[7],
    )
}

fn free_cameras(recon: &Reconstruction, scope: BaScope, window: usize) -> Vec<String> {
    let order: Vec<&String> = recon
        .registration_order
        .iter()
        .filter(|t| recon.cameras.contains_key(*t))
        .collect();
    match scope {
        BaScope::PointsOnly => Vec::new(),
        BaScope::Global => order.iter().skip(1).map(|s| s.to_string()).collect(),
        BaScope::Local => {
            let start = order.len().saturating_sub(window).max(1);
            order[start.min(order.len())..].iter().map(|s| s.to_string()).collect()
        }
    }
}

fn build_problem(recon: &Reconstruction, scope: BaScope, cfg: &BaConfig) -> Problem {
    let cam_ids = free_cameras(recon, scope, cfg.local_window);
    let cam_pos: std::collections::BTreeMap<&str, usize> =
        cam_ids.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();

    // With only the first camera fixed, 4 of the 12 affine gauge freedoms
    // remain. They act on the second camera as a change of one image row
    // (3 entries) and the matching translation, so holding those constant
    // removes them.
    let mut masks = vec![[true; 8]; cam_ids.len()];
    if recon.cameras.len() == cam_ids.len() + 1 && recon.registration_order.len() >= 2 {
        let first = &recon.cameras[&recon.registration_order[0]];
        if let Some(&k) = cam_pos.get(recon.registration_order[1].as_str()) {
            let second = &recon.cameras[&recon.registration_order[1]];
            let n = first.viewing_direction();
            let mn = second.m * n;
            let score = |r: usize| mn[r].abs() / second.m.row(r).norm().max(f64::MIN_POSITIVE);
            let row = if score(0) >= score(1) { 0 } else { 1 };
            for j in 0..3 {
                masks[k][3 * row + j] = false;
            }
            masks[k][6 + row] = false;
        }
    }
    let mut index = Vec::with_capacity(cam_ids.len());
    let mut n_params = 0;
    for mask in &masks {
        let mut idx = [None; 8];
        for (k, &free) in mask.iter().enumerate() {
            if free {
                idx[k] = Some(n_params);
                n_params += 1;
            }
        }
        index.push(idx);
    }

    let mut point_ids = Vec::new();
    let mut terms = Vec::new();
    let mut by_point = Vec::new();
    for &track in recon.points.keys() {
        let active = recon.active_observations(track);
        if scope == BaScope::Local && !active.iter().any(|(t, _)| cam_pos.contains_key(t)) {
            continue;
        }
        let pi = point_ids.len();
        point_ids.push(track);
        let mut mine = Vec::new();
        for (tile, px) in active {
            let cam = match cam_pos.get(tile) {
                Some(&c) => CamSlot::Free(c),
                None => CamSlot::Fixed(recon.cameras[tile]),
            };
            mine.push(terms.len());
            terms.push(Term {
                cam,
                point: pi,
                pixel: px.to_vector(),
                track,
                tile: tile.to_string(),
            });
        }
        by_point.push(mine);
    }
    Problem {
        cam_ids,
        index,
        n_params,
        point_ids,
        terms,
        by_point,
    }
}

struct State {
    cams: Vec<[f64; 8]>,
    points: Vec<Vector3<f64>>,
}

impl Problem {
    fn residual(&self, s: &State, term: &Term) -> Vector2<f64> {
        let x = &s.points[term.point];
        let proj = match &term.cam {
            CamSlot::Free(c) => project(&s.cams[*c], x),
            CamSlot::Fixed(cam) => cam.m * x + cam.t,
        };
        proj - term.pixel
    }

    fn cost(&self, s: &State, cfg: &BaConfig) -> f64 {
        // Per-term values are computed in parallel but summed in order, so the
        // result does not depend on the thread count.
        let parts: Vec<f64> = self
            .terms
            .par_iter()
            .map(|t| cfg.loss.eval(self.residual(s, t).norm(), cfg.scale).0)
            .collect();
        parts.iter().sum()
    }

    /// One damped Gauss-Newton step on the IRLS-weighted normal equations,
    /// with the point blocks eliminated by Schur complement.
    fn step(&self, s: &State, cfg: &BaConfig, lambda: f64) -> Option<State> {
        let nc = self.cam_ids.len();
        let np = self.point_ids.len();
        let mut u = vec![Mat8::zeros(); nc];
        let mut gc = vec![Vec8::zeros(); nc];
        let mut v = vec![Matrix3::zeros(); np];
        let mut gp = vec![Vector3::zeros(); np];
        let mut w_blocks: Vec<Option<Mat8x3>> = Vec::with_capacity(self.terms.len());

        for term in &self.terms {
            let r = self.residual(s, term);
            let (_, w) = cfg.loss.eval(r.norm(), cfg.scale);
            let x = &s.points[term.point];
            let m = match &term.cam {
                CamSlot::Free(c) => {
                    let p = &s.cams[*c];
                    nalgebra::Matrix2x3::new(p[0], p[1], p[2], p[3], p[4], p[5])
                }
                CamSlot::Fixed(cam) => cam.m,
            };
            v[term.point] += w * m.transpose() * m;
            gp[term.point] += w * m.transpose() * r;
            if let CamSlot::Free(c) = term.cam {
                let mut jc = SMatrix::<f64, 2, 8>::zeros();
                for k in 0..3 {
                    jc[(0, k)] = x[k];
                    jc[(1, 3 + k)] = x[k];
                }
                jc[(0, 6)] = 1.0;
                jc[(1, 7)] = 1.0;
                u[c] += w * jc.transpose() * jc;
                gc[c] += w * jc.transpose() * r;
                w_blocks.push(Some(w * jc.transpose() * m));
            } else {
                w_blocks.push(None);
            }
        }

        let damp = |d: f64| lambda * d.max(1e-9);
        let mut v_inv = Vec::with_capacity(np);
        for vp in &v {
            let mut d = *vp;
            for k in 0..3 {
                d[(k, k)] += damp(vp[(k, k)]);
            }
            v_inv.push(d.try_inverse()?);
        }

        let n = self.n_params;
        let mut dc = DVector::zeros(n);
        if n > 0 {
            let mut sys = DMatrix::zeros(n, n);
            let mut rhs = DVector::zeros(n);
            for c in 0..nc {
                let idx = &self.index[c];
                for a in 0..8 {
                    let Some(ga) = idx[a] else { continue };
                    rhs[ga] -= gc[c][a];
                    for b in 0..8 {
                        if let Some(gb) = idx[b] {
                            sys[(ga, gb)] += u[c][(a, b)];
                        }
                    }
                    sys[(ga, ga)] += damp(u[c][(a, a)]);
                }
            }
            for (p, terms) in self.by_point.iter().enumerate() {
                let free: Vec<(usize, Mat8x3)> = terms
                    .iter()
                    .filter_map(|&ti| match (&self.terms[ti].cam, &w_blocks[ti]) {
                        (CamSlot::Free(c), Some(wb)) => Some((*c, *wb)),
                        _ => None,
                    })
                    .collect();
                for &(c1, w1) in &free {
                    let wv = w1 * v_inv[p];
                    let corr = wv * gp[p];
                    for a in 0..8 {
                        if let Some(ga) = self.index[c1][a] {
                            rhs[ga] += corr[a];
                        }
                    }
                    for &(c2, w2) in &free {
                        let blk = wv * w2.transpose();
                        for a in 0..8 {
                            let Some(ga) = self.index[c1][a] else { continue };
                            for b in 0..8 {
                                if let Some(gb) = self.index[c2][b] {
                                    sys[(ga, gb)] -= blk[(a, b)];
                                }
                            }
                        }
                    }
                }
            }
            dc = match sys.clone().cholesky() {
                Some(ch) => ch.solve(&rhs),
                None => sys.lu().solve(&rhs)?,
            };
        }

        let mut cams = s.cams.clone();
        let mut cam_delta = vec![Vec8::zeros(); nc];
        for c in 0..nc {
            for a in 0..8 {
                if let Some(ga) = self.index[c][a] {
                    cam_delta[c][a] = dc[ga];
                    cams[c][a] += dc[ga];
                }
            }
        }
        let mut points = s.points.clone();
        for (p, terms) in self.by_point.iter().enumerate() {
            let mut rhs = -gp[p];
            for &ti in terms {
                if let (CamSlot::Free(c), Some(wb)) = (&self.terms[ti].cam, &w_blocks[ti]) {
                    rhs -= wb.transpose() * cam_delta[*c];
                }
            }
            points[p] += v_inv[p] * rhs;
        }
        Some(State { cams, points })
    }
}

/// Levenberg-Marquardt on the fixed problem. Returns the final state, its
/// cost and the number of iterations used.
fn solve(
    problem: &Problem,
    mut state: State,
    cfg: &BaConfig,
) -> Result<(State, f64, usize), SfmError> {
    let mut cost = problem.cost(&state, cfg);
    if !cost.is_finite() {
        return Err(SfmError::SolverDivergence(format!("initial cost is {cost}")));
    }
    let mut lambda = 1e-4;
    let mut iterations = 0;
    while iterations < cfg.max_iterations && cost > 0.0 {
        iterations += 1;
        let Some(candidate) = problem.step(&state, cfg, lambda) else {
            lambda *= 10.0;
            if lambda > 1e16 {
                break;
            }
            continue;
        };
        let new_cost = problem.cost(&candidate, cfg);
        if new_cost.is_finite() && new_cost < cost {
            let decrease = cost - new_cost;
            state = candidate;
            cost = new_cost;
            lambda = (lambda / 3.0).max(1e-12);
            if decrease <= cfg.function_tolerance * (cost + decrease) {
                break;
            }
        } else {
            lambda *= 10.0;
            if lambda > 1e16 {
                break;
            }
        }
    }
    Ok((state, cost, iterations))
}

fn current_state(recon: &Reconstruction, problem: &Problem) -> State {
    State {
        cams: problem.cam_ids.iter().map(|c| recon.cameras[c].to_params()).collect(),
        points: problem.point_ids.iter().map(|p| recon.points[p].to_vector()).collect(),
    }
}

/// Marks every observation whose residual at `state` exceeds `threshold` as
/// rejected and drops points left with fewer than two observations.
/// Returns whether anything was rejected.
fn reject_outliers(
    recon: &mut Reconstruction,
    problem: &Problem,
    state: &State,
    threshold: f64,
    report: &mut BaReport,
) -> bool {
    let newly: BTreeSet<(usize, String)> = problem
        .terms
        .iter()
        .filter(|term| problem.residual(state, term).norm() > threshold)
        .map(|term| (term.track, term.tile.clone()))
        .collect();
    if newly.is_empty() {
        return false;
    }
    report.rejected_observations += newly.len();
    let touched: BTreeSet<usize> = newly.iter().map(|(t, _)| *t).collect();
    recon.rejected.extend(newly);
    for track in touched {
        if recon.active_observations(track).len() < 2 {
            recon.points.remove(&track);
            report.dropped_points += 1;
        }
    }
    true
}

/// Robust bundle adjustment of `recon` in place.
///
/// Minimizes the sum of `loss(|M X + t - x|)` over the active observations
/// of the points in scope. The first registered camera never moves; in a
/// global pass the second registered camera additionally keeps one image
/// row fixed, which pins the remaining affine gauge. Observations already
/// beyond `cfg.outlier_threshold` are rejected before the first solve: a
/// gross outlier can pull the Huber optimum far enough that the residuals
/// of its inlier neighbours exceed its own. Steps are only accepted when
/// they lower the cost, so the final cost never exceeds the initial one.
pub fn bundle_adjust(
    recon: &mut Reconstruction,
    cfg: &BaConfig,
    scope: BaScope,
) -> Result<BaReport, SfmError> {
    cfg.validate()?;
    if scope != BaScope::PointsOnly && (recon.cameras.len() < 2 || recon.points.len() < 4) {
        return Err(SfmError::Geometry(GeometryError::InvalidInput(format!(
            "bundle adjustment needs 2 cameras and 4 points, have {} and {}",
            recon.cameras.len(),
            recon.points.len()
        ))));
    }
    let mut problem = build_problem(recon, scope, cfg);
    let mut report = BaReport {
        scope,
        initial_cost: 0.0,
        final_cost: 0.0,
        iterations: 0,
        free_cameras: problem.cam_ids.len(),
        free_points: problem.point_ids.len(),
        observations: problem.terms.len(),
        rejected_observations: 0,
        dropped_points: 0,
    };
    let state = current_state(recon, &problem);
    report.initial_cost = problem.cost(&state, cfg);
    if let Some(threshold) = cfg.outlier_threshold {
        if reject_outliers(recon, &problem, &state, threshold, &mut report) {
            problem = build_problem(recon, scope, cfg);
        }
    }
    while !problem.terms.is_empty() {
        let (state, cost, iters) = solve(&problem, current_state(recon, &problem), cfg)?;
        report.iterations += iters;
        report.final_cost = cost;
        for (c, id) in problem.cam_ids.iter().enumerate() {
            recon.cameras.insert(id.clone(), AffineCamera::from_params(&state.cams[c]));
        }
        for (p, id) in problem.point_ids.iter().enumerate() {
            recon.points.insert(*id, Point3::from_vector(&state.points[p]));
        }
        let Some(threshold) = cfg.outlier_threshold else { break };
        if !reject_outliers(recon, &problem, &state, threshold, &mut report) {
            break;
        }
        problem = build_problem(recon, scope, cfg);
        report.final_cost = 0.0;
    }
    Ok(report)
}

#[cfg(test)]
/// Robust cost of the current reconstruction over the scope's observations.
pub(crate) fn scope_cost(recon: &Reconstruction, cfg: &BaConfig, scope: BaScope) -> f64 {
    let problem = build_problem(recon, scope, cfg);
    let state = State {
        cams: problem.cam_ids.iter().map(|c| recon.cameras[c].to_params()).collect(),
        points: problem.point_ids.iter().map(|p| recon.points[p].to_vector()).collect(),
    };
    problem.cost(&state, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point2;
    use crate::test_support::synthetic_reconstruction;

    fn max_inlier_shift(before: &Reconstruction, after: &Reconstruction, skip: (usize, &str)) -> f64 {
        let mut worst: f64 = 0.0;
        for (&track, p) in &after.points {
            for (tile, _) in after.active_observations(track) {
                if (track, tile) == skip {
                    continue;
                }
                let a = after.cameras[tile].project(p);
                let b = before.cameras[tile].project(&before.points[&track]);
                worst = worst.max(a.distance(&b));
            }
        }
        worst
    }

    #[test]
    fn perturbed_cameras_recover() {
        let (mut recon, _) = synthetic_reconstruction(3, 6, 80, 0.0);
        assert!(recon.rms() < 1e-9);
        for (i, tile) in recon.registration_order.clone().iter().enumerate().skip(1) {
            let cam = recon.cameras.get_mut(tile).unwrap();
            let mut p = cam.to_params();
            for (k, v) in p.iter_mut().enumerate() {
                *v += 1e-3 * if (i + k) % 2 == 0 { 1.0 } else { -1.0 };
            }
            *cam = AffineCamera::from_params(&p);
        }
        let perturbed = recon.rms();
        assert!(perturbed > 1e-3);
        let report = bundle_adjust(&mut recon, &BaConfig::default(), BaScope::Global).unwrap();
        assert!(report.final_cost <= report.initial_cost);
        assert!(recon.rms() <= 1e-6, "rms {}", recon.rms());
        assert_eq!(report.rejected_observations, 0);
    }

    #[test]
    fn optimal_input_is_fixed_point() {
        let (mut recon, _) = synthetic_reconstruction(5, 4, 40, 0.0);
        let cfg = BaConfig::default();
        let report = bundle_adjust(&mut recon, &cfg, BaScope::Global).unwrap();
        assert!((report.initial_cost - report.final_cost).abs() <= cfg.function_tolerance);
    }

    #[test]
    fn planted_outlier_does_not_move_inliers() {
        let (mut recon, _) = synthetic_reconstruction(7, 4, 60, 0.0);
        let before = recon.clone();
        let track = *recon.points.keys().nth(10).unwrap();
        let tile = recon.active_observations(track)[1].0.to_string();
        let obs = recon.observations.get_mut(&track).unwrap();
        let slot = obs.iter_mut().find(|(t, _)| *t == tile).unwrap();
        slot.1 = Point2::new(slot.1.x + 50.0, slot.1.y);
        let report = bundle_adjust(&mut recon, &BaConfig::default(), BaScope::Global).unwrap();
        assert!(report.final_cost <= report.initial_cost);
        assert!(recon.rejected.contains(&(track, tile.clone())));
        assert!(max_inlier_shift(&before, &recon, (track, &tile)) <= 1e-3);
    }

    #[test]
    fn huber_without_rejection_stays_bounded() {
        let (mut recon, _) = synthetic_reconstruction(7, 4, 60, 0.0);
        let before = recon.clone();
        let track = *recon.points.keys().nth(3).unwrap();
        let tile = recon.active_observations(track)[0].0.to_string();
        let obs = recon.observations.get_mut(&track).unwrap();
        let slot = obs.iter_mut().find(|(t, _)| *t == tile).unwrap();
        slot.1 = Point2::new(slot.1.x, slot.1.y + 50.0);
        let cfg = BaConfig {
            outlier_threshold: None,
            ..BaConfig::default()
        };
        let report = bundle_adjust(&mut recon, &cfg, BaScope::Global).unwrap();
        assert!(report.final_cost <= report.initial_cost);
        // Huber bounds the pull of the outlier; a squared loss would spread
        // the 50 px error far more widely.
        let huber_shift = max_inlier_shift(&before, &recon, (track, &tile));
        assert!(huber_shift < 1.0, "shift {huber_shift}");
    }

    #[test]
    fn local_scope_moves_only_window() {
        let (mut recon, _) = synthetic_reconstruction(11, 8, 60, 0.0);
        for tile in recon.registration_order.clone() {
            let cam = recon.cameras.get_mut(&tile).unwrap();
            cam.t.x += 0.01;
        }
        let before = recon.clone();
        let cfg = BaConfig {
            local_window: 3,
            ..BaConfig::default()
        };
        let report = bundle_adjust(&mut recon, &cfg, BaScope::Local).unwrap();
        assert_eq!(report.free_cameras, 3);
        assert!(report.final_cost <= report.initial_cost);
        let order = &recon.registration_order;
        for tile in &order[..order.len() - 3] {
            assert_eq!(recon.cameras[tile], before.cameras[tile]);
        }
    }

    #[test]
    fn points_only_keeps_cameras() {
        let (mut recon, _) = synthetic_reconstruction(13, 3, 30, 0.5);
        let before = recon.clone();
        for p in recon.points.values_mut() {
            p.z += 0.1;
        }
        let cost0 = scope_cost(&recon, &BaConfig::default(), BaScope::PointsOnly);
        let report = bundle_adjust(&mut recon, &BaConfig::default(), BaScope::PointsOnly).unwrap();
        assert_eq!(recon.cameras, before.cameras);
        assert!(report.final_cost <= cost0);
    }

    #[test]
    fn noisy_cost_never_increases() {
        for seed in 0..10 {
            let (mut recon, _) = synthetic_reconstruction(100 + seed, 5, 50, 1.0);
            for scope in [BaScope::Local, BaScope::Global] {
                let r = bundle_adjust(&mut recon, &BaConfig::default(), scope).unwrap();
                assert!(r.final_cost <= r.initial_cost, "seed {seed} {scope:?}");
            }
        }
    }

    #[test]
    fn invalid_config_rejected() {
        let (mut recon, _) = synthetic_reconstruction(1, 3, 10, 0.0);
        let cfg = BaConfig {
            scale: 0.0,
            ..BaConfig::default()
        };
        assert!(bundle_adjust(&mut recon, &cfg, BaScope::Global).is_err());
    }

    #[test]
    fn loss_functions_agree_near_zero() {
        for loss in [LossKind::Squared, LossKind::Huber, LossKind::Cauchy] {
            let (rho, w) = loss.eval(1e-4, 1.0);
            assert!((rho - 0.5e-8).abs() < 1e-15);
            assert!((w - 1.0).abs() < 1e-7);
        }
        let (rho, w) = LossKind::Huber.eval(3.0, 1.0);
        assert_eq!((rho, w), (2.5, 1.0 / 3.0));
    }
}
