//! Dispersion objectives on the sphere and a norm-preserving optimizer.
//!
//! Two objectives are implemented:
//!
//! * [`mhe_energy`]: mean pairwise kernel energy
//!   `(1/(n(n-1))) * sum_{s != s'} exp(<s,s'>/sigma)` over ordered pairs.
//!   Minimizing it repels directions from one another.
//! * [`sliced_loss`]: directions are projected onto random great circles,
//!   where optimal (equidistant-angle) configurations are known in closed
//!   form; the loss is the mean squared circular deviation from the nearest
//!   equidistant configuration, averaged over circles.
//!
//! [`disperse`] runs projected gradient descent on either objective,
//! updating only directions: per-key gradients are taken with respect to
//! the raw key coordinates (so a key's norm scales its angular step),
//! projected onto the tangent space at the key's direction, and the
//! direction is renormalized after each step with the original norm
//! reapplied. Objective internals run in `f64` regardless of the store
//! scalar type.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{
    min_pairwise_angle, sample_great_circle, spherical_variance, Direction, GreatCircle,
};
use crate::scalar::Scalar;
use crate::store::VectorStore;

use std::f64::consts::TAU;

/// Which dispersion objective to optimize.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regularizer {
    Mhe,
    Sliced,
}

/// Deviation aggregation for [`circle_delta_mode`]. The squared form is the
/// default: it is differentiable everywhere and has the same minimizer
/// structure. The absolute form exists for fidelity checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeltaMode {
    Squared,
    Absolute,
}

/// Optimizer configuration.
#[derive(Debug, Clone)]
pub struct DispersionConfig {
    pub regularizer: Regularizer,
    /// Kernel scale for the MHE objective.
    pub sigma: f64,
    pub step_size: f64,
    pub steps: usize,
    /// Great circles drawn per step for the sliced objective.
    pub circles_per_step: usize,
    /// Weight multiplying the objective gradient.
    pub loss_weight: f64,
    pub seed: u64,
    /// Keys updated per step; when the store is larger, each step draws a
    /// fresh random batch.
    pub batch_size: usize,
    pub delta_mode: DeltaMode,
    /// Record the minimum pairwise angle in the trace. Quadratic in the
    /// store size; intended for small clouds.
    pub track_min_angle: bool,
}

pub const DEFAULT_BATCH_SIZE: usize = 4096;

impl Default for DispersionConfig {
    fn default() -> Self {
        Self {
            regularizer: Regularizer::Sliced,
            sigma: 1.0,
            step_size: 0.1,
            steps: 100,
            circles_per_step: 1,
            loss_weight: 1.0,
            seed: 0,
            batch_size: DEFAULT_BATCH_SIZE,
            delta_mode: DeltaMode::Squared,
            track_min_angle: false,
        }
    }
}

impl DispersionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) {
            return Err(Error::InvalidParameter(format!("sigma must be > 0, got {}", self.sigma)));
        }
        if !(self.step_size > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "step_size must be > 0, got {}",
                self.step_size
            )));
        }
        if self.circles_per_step < 1 {
            return Err(Error::InvalidParameter("circles_per_step must be >= 1".into()));
        }
        if self.loss_weight < 0.0 {
            return Err(Error::InvalidParameter("loss_weight must be >= 0".into()));
        }
        if self.batch_size < 1 {
            return Err(Error::InvalidParameter("batch_size must be >= 1".into()));
        }
        Ok(())
    }
}

/// One trace entry; `step` counts applied updates, so entry 0 is the
/// initial state.
#[derive(Debug, Clone)]
pub struct TraceRecord {
    pub step: usize,
    pub loss: f64,
    pub spherical_variance: f64,
    pub min_angle: Option<f64>,
}

/// Per-step optimization history, `steps + 1` records long.
#[derive(Debug, Clone, Default)]
pub struct DispersionTrace {
    pub records: Vec<TraceRecord>,
}

impl DispersionTrace {
    /// First step index at which spherical variance reached `threshold`.
    pub fn first_reaching(&self, threshold: f64) -> Option<usize> {
        self.records.iter().find(|r| r.spherical_variance >= threshold).map(|r| r.step)
    }
}

// ---------------------------------------------------------------------------
// MHE objective
// ---------------------------------------------------------------------------

/// Mean pairwise kernel energy over ordered pairs of distinct directions.
pub fn mhe_energy<S: Scalar>(dirs: &[Direction<S>], sigma: f64) -> Result<S> {
    let pts = widen_dirs(dirs);
    let (value, _) = mhe_value_grad(&pts, sigma, false)?;
    Ok(S::from_f64_lossy(value))
}

/// Euclidean gradient of [`mhe_energy`] with respect to each direction's
/// raw coordinates (not projected to the sphere's tangent space).
pub fn mhe_gradient<S: Scalar>(dirs: &[Direction<S>], sigma: f64) -> Result<Vec<Vec<S>>> {
    let pts = widen_dirs(dirs);
    let (_, grad) = mhe_value_grad(&pts, sigma, true)?;
    Ok(narrow_grads(grad.expect("gradient requested")))
}

fn mhe_value_grad(pts: &[Vec<f64>], sigma: f64, want_grad: bool) -> Result<(f64, Option<Vec<Vec<f64>>>)> {
    let n = pts.len();
    if n < 2 {
        return Err(Error::TooFewPoints { needed: 2, got: n });
    }
    let scale = 1.0 / (n as f64 * (n - 1) as f64);
    let partial: Vec<f64> = pts
        .par_iter()
        .enumerate()
        .map(|(i, a)| {
            let mut acc = 0.0;
            for (j, b) in pts.iter().enumerate() {
                if i < j {
                    acc += (dot64(a, b) / sigma).exp();
                }
            }
            acc
        })
        .collect();
    let value = 2.0 * scale * partial.iter().sum::<f64>();
    if !want_grad {
        return Ok((value, None));
    }
    let coef = 2.0 * scale / sigma;
    let grads: Vec<Vec<f64>> = pts
        .par_iter()
        .enumerate()
        .map(|(i, a)| {
            let mut g = vec![0.0f64; a.len()];
            for (j, b) in pts.iter().enumerate() {
                if i == j {
                    continue;
                }
                let w = coef * (dot64(a, b) / sigma).exp();
                for (gk, bk) in g.iter_mut().zip(b.iter()) {
                    *gk += w * bk;
                }
            }
            g
        })
        .collect();
    Ok((value, Some(grads)))
}

// ---------------------------------------------------------------------------
// Circle fitting
// ---------------------------------------------------------------------------

/// Squared circular deviation of a set of angles from the nearest
/// order-preserving equidistant configuration on the circle.
///
/// Sorted angles are matched to targets `offset + 2*pi*i/n`; all `n` cyclic
/// matchings are scanned (each corresponds to one branch interval of the
/// offset), with the offset chosen optimally within each branch, and the
/// minimum is returned. Empty and single-angle inputs score 0.
pub fn circle_delta<S: Scalar>(angles: &[S]) -> S {
    circle_delta_mode(angles, DeltaMode::Squared)
}

/// [`circle_delta`] with a selectable deviation aggregation.
pub fn circle_delta_mode<S: Scalar>(angles: &[S], mode: DeltaMode) -> S {
    let ang: Vec<f64> = angles.iter().map(|a| a.widen()).collect();
    let value = match mode {
        DeltaMode::Squared => fit_circle_squared(&ang).delta,
        DeltaMode::Absolute => fit_circle_absolute(&ang),
    };
    S::from_f64_lossy(value)
}

/// Result of fitting angles to the nearest equidistant configuration.
#[derive(Debug, Clone)]
pub(crate) struct CircleFit {
    /// Sum of squared circular deviations.
    pub delta: f64,
    /// Matched-target offset at the optimum.
    #[allow(dead_code)]
    pub offset: f64,
    /// Signed circular deviation of each input angle from its target, in
    /// input order.
    pub devs: Vec<f64>,
}

/// Wrap to `(-pi, pi]` up to the rounding convention at exactly `pi`.
#[inline]
fn wrap_angle(x: f64) -> f64 {
    x - TAU * (x / TAU).round()
}

fn dot64(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

pub(crate) fn fit_circle_squared(angles: &[f64]) -> CircleFit {
    let n = angles.len();
    if n == 0 {
        return CircleFit { delta: 0.0, offset: 0.0, devs: Vec::new() };
    }
    if n == 1 {
        return CircleFit { delta: 0.0, offset: angles[0], devs: vec![0.0] };
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.sort_by(|&a, &b| angles[a].partial_cmp(&angles[b]).expect("finite angles"));
    let spacing = TAU / n as f64;
    // Residual of sorted angle i relative to the zero-offset target grid.
    let resid: Vec<f64> = perm.iter().enumerate().map(|(i, &pi)| angles[pi] - spacing * i as f64).collect();

    // Minimize h(phi) = sum_i wrap(resid_i - phi)^2 over the circle.
    // Between branch events the wrapped values are affine in phi, so h is a
    // parabola; sweeping events left to right visits every cyclic matching
    // once with O(1) updates to the parabola coefficients.
    let mut v: Vec<f64> = resid.iter().map(|&r| wrap_angle(r)).collect();
    let mut events: Vec<(f64, usize)> =
        v.iter().enumerate().map(|(i, &vi)| (vi + std::f64::consts::PI, i)).collect();
    events.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite events"));

    let mut sum_v: f64 = v.iter().sum();
    let mut sum_v2: f64 = v.iter().map(|x| x * x).sum();
    let cross = |v: &mut [f64], sum_v: &mut f64, sum_v2: &mut f64, i: usize| {
        let old = v[i];
        let new = old + TAU;
        *sum_v += TAU;
        *sum_v2 += new * new - old * old;
        v[i] = new;
    };

    let mut ptr = 0;
    while ptr < n && events[ptr].0 <= 0.0 {
        cross(&mut v, &mut sum_v, &mut sum_v2, events[ptr].1);
        ptr += 1;
    }
    let nf = n as f64;
    let mut best_h = f64::INFINITY;
    let mut best_phi = 0.0;
    let mut lo = 0.0;
    loop {
        let hi = if ptr < n { events[ptr].0.min(TAU) } else { TAU };
        if hi >= lo {
            let phi = (sum_v / nf).clamp(lo, hi);
            let h = sum_v2 - 2.0 * phi * sum_v + nf * phi * phi;
            if h < best_h {
                best_h = h;
                best_phi = phi;
            }
        }
        if ptr >= n {
            break;
        }
        let at = events[ptr].0;
        while ptr < n && events[ptr].0 <= at {
            cross(&mut v, &mut sum_v, &mut sum_v2, events[ptr].1);
            ptr += 1;
        }
        lo = at;
        if lo >= TAU {
            break;
        }
    }

    // Recompute exactly at the winner and polish to the stationary point
    // (zero-mean wrapped deviations), which the gradient relies on.
    let mut phi = best_phi;
    for _ in 0..4 {
        let mean: f64 = resid.iter().map(|&r| wrap_angle(r - phi)).sum::<f64>() / nf;
        if mean.abs() < 1e-15 {
            break;
        }
        phi += mean;
    }
    let mut devs_sorted: Vec<f64> = resid.iter().map(|&r| wrap_angle(r - phi)).collect();
    let delta: f64 = devs_sorted.iter().map(|d| d * d).sum();
    let mut devs = vec![0.0f64; n];
    for (i, &pi) in perm.iter().enumerate() {
        devs[pi] = devs_sorted[i];
    }
    devs_sorted.clear();
    CircleFit { delta, offset: phi, devs }
}

fn fit_circle_absolute(angles: &[f64]) -> f64 {
    let n = angles.len();
    if n <= 1 {
        return 0.0;
    }
    let mut sorted: Vec<f64> = angles.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite angles"));
    let spacing = TAU / n as f64;
    let resid: Vec<f64> = sorted.iter().enumerate().map(|(i, &a)| a - spacing * i as f64).collect();

    let mut v: Vec<f64> = resid.iter().map(|&r| wrap_angle(r)).collect();
    let mut events: Vec<(f64, usize)> =
        v.iter().enumerate().map(|(i, &vi)| (vi + std::f64::consts::PI, i)).collect();
    events.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite events"));

    let mut ptr = 0;
    while ptr < n && events[ptr].0 <= 0.0 {
        v[events[ptr].1] += TAU;
        ptr += 1;
    }
    let mut best = f64::INFINITY;
    let mut lo = 0.0;
    loop {
        let hi = if ptr < n { events[ptr].0.min(TAU) } else { TAU };
        if hi >= lo {
            let mut vals = v.clone();
            vals.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
            let median = vals[n / 2].clamp(lo, hi);
            let h: f64 = v.iter().map(|x| (x - median).abs()).sum();
            best = best.min(h);
        }
        if ptr >= n {
            break;
        }
        let at = events[ptr].0;
        while ptr < n && events[ptr].0 <= at {
            v[events[ptr].1] += TAU;
            ptr += 1;
        }
        lo = at;
        if lo >= TAU {
            break;
        }
    }
    best
}

// ---------------------------------------------------------------------------
// Sliced objective
// ---------------------------------------------------------------------------

/// Mean [`circle_delta`] of the direction set projected onto each circle.
///
/// Circles on which every point projects degenerately are skipped; if that
/// happens on all circles the error is [`Error::AllPointsDegenerate`].
pub fn sliced_loss<S: Scalar>(dirs: &[Direction<S>], circles: &[GreatCircle<S>]) -> Result<S> {
    if circles.is_empty() {
        return Err(Error::InvalidParameter("need at least one circle".into()));
    }
    let pts = widen_dirs(dirs);
    let axes = widen_circles(circles);
    let (value, _) = sliced_value_grad(&pts, &axes, false)?;
    Ok(S::from_f64_lossy(value))
}

/// Euclidean gradient of [`sliced_loss`] with respect to each direction's
/// raw coordinates, for the given fixed circles.
pub fn sliced_gradient<S: Scalar>(
    dirs: &[Direction<S>],
    circles: &[GreatCircle<S>],
) -> Result<Vec<Vec<S>>> {
    if circles.is_empty() {
        return Err(Error::InvalidParameter("need at least one circle".into()));
    }
    let pts = widen_dirs(dirs);
    let axes = widen_circles(circles);
    let (_, grad) = sliced_value_grad(&pts, &axes, true)?;
    Ok(narrow_grads(grad.expect("gradient requested")))
}

fn sliced_value_grad(
    pts: &[Vec<f64>],
    circles: &[(Vec<f64>, Vec<f64>)],
    want_grad: bool,
) -> Result<(f64, Option<Vec<Vec<f64>>>)> {
    let dim = pts.first().map(|p| p.len()).unwrap_or(0);
    let mut total = 0.0f64;
    let mut used = 0usize;
    let mut grads = if want_grad { Some(vec![vec![0.0f64; dim]; pts.len()]) } else { None };

    for (p, q) in circles {
        let mut angles = Vec::with_capacity(pts.len());
        let mut kept = Vec::with_capacity(pts.len());
        let mut planar = Vec::with_capacity(pts.len());
        for (i, s) in pts.iter().enumerate() {
            let a = dot64(s, p);
            let b = dot64(s, q);
            if (a * a + b * b).sqrt() < crate::geometry::PROJECTION_EPS {
                continue;
            }
            let mut theta = b.atan2(a);
            if theta < 0.0 {
                theta += TAU;
            }
            angles.push(theta);
            kept.push(i);
            planar.push((a, b));
        }
        if kept.is_empty() {
            continue;
        }
        let fit = fit_circle_squared(&angles);
        total += fit.delta;
        used += 1;
        if let Some(grads) = grads.as_mut() {
            for ((&i, &(a, b)), &dev) in kept.iter().zip(planar.iter()).zip(fit.devs.iter()) {
                // d(theta)/ds = (-b p + a q) / (a^2 + b^2); d(delta)/d(theta) = 2 dev.
                let coef = 2.0 * dev / (a * a + b * b);
                let g = &mut grads[i];
                for k in 0..dim {
                    g[k] += coef * (-b * p[k] + a * q[k]);
                }
            }
        }
    }
    if used == 0 {
        return Err(Error::AllPointsDegenerate);
    }
    let inv = 1.0 / used as f64;
    if let Some(grads) = grads.as_mut() {
        for g in grads.iter_mut() {
            for x in g.iter_mut() {
                *x *= inv;
            }
        }
    }
    Ok((total * inv, grads))
}

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

/// Increase the angular dispersion of a store's keys without changing their
/// norms or labels.
///
/// Each step evaluates the configured objective on a batch of directions,
/// takes the gradient with respect to the raw key coordinates, projects it
/// onto the sphere's tangent space at each direction, steps against it, and
/// renormalizes with the original norm reapplied. The returned trace has
/// `steps + 1` records; the loss in each record is the batch objective seen
/// at that step, the spherical variance is over the full store.
pub fn disperse<S: Scalar>(
    store: &VectorStore<S>,
    cfg: &DispersionConfig,
) -> Result<(VectorStore<S>, DispersionTrace)> {
    cfg.validate()?;
    if store.is_empty() {
        return Err(Error::EmptyStore);
    }
    let n = store.len();
    let dim = store.dim();
    let mut dirs: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut norms: Vec<f64> = Vec::with_capacity(n);
    for key in store.iter_keys() {
        let wide: Vec<f64> = key.iter().map(|x| x.widen()).collect();
        let norm = dot64(&wide, &wide).sqrt();
        if norm <= crate::geometry::ZERO_NORM_EPS {
            return Err(Error::ZeroVector);
        }
        dirs.push(wide.iter().map(|x| x / norm).collect());
        norms.push(norm);
    }

    let mut rng = crate::seeded_rng(cfg.seed);
    let batch_size = cfg.batch_size.min(n);
    let mut trace = DispersionTrace::default();
    let mut touched = vec![false; n];

    for step in 0..cfg.steps {
        let batch = draw_batch(n, batch_size, &mut rng);
        let batch_pts: Vec<Vec<f64>> = batch.iter().map(|&i| dirs[i].clone()).collect();
        let (loss, grads) = evaluate(&batch_pts, cfg, dim, true, &mut rng)?;
        trace.records.push(record(step, loss, &dirs, cfg));

        let grads = grads.expect("gradient requested");
        for (&i, grad) in batch.iter().zip(grads.iter()) {
            touched[i] = true;
            // Gradient w.r.t. the key is the direction gradient scaled by
            // 1/norm; project onto the tangent space at the direction.
            let s = &mut dirs[i];
            let scale = cfg.loss_weight / norms[i];
            let radial: f64 = grad.iter().zip(s.iter()).map(|(g, x)| g * x).sum();
            let mut norm_sq = 0.0f64;
            for (x, g) in s.iter_mut().zip(grad.iter()) {
                let tangent = scale * (g - radial * *x);
                if !tangent.is_finite() {
                    return Err(Error::NonFiniteGradient { step });
                }
                *x -= cfg.step_size * tangent;
                norm_sq += *x * *x;
            }
            let inv = 1.0 / norm_sq.sqrt();
            for x in s.iter_mut() {
                *x *= inv;
            }
        }
    }

    // Closing record: evaluate the objective once more without stepping.
    let batch = draw_batch(n, batch_size, &mut rng);
    let batch_pts: Vec<Vec<f64>> = batch.iter().map(|&i| dirs[i].clone()).collect();
    let (loss, _) = evaluate(&batch_pts, cfg, dim, false, &mut rng)?;
    trace.records.push(record(cfg.steps, loss, &dirs, cfg));

    // Keys a batch never touched pass through bit-identical.
    let mut keys = Vec::with_capacity(n * dim);
    for (i, (dir, &norm)) in dirs.iter().zip(norms.iter()).enumerate() {
        if touched[i] {
            keys.extend(dir.iter().map(|&x| S::from_f64_lossy(x * norm)));
        } else {
            keys.extend_from_slice(store.key(i));
        }
    }
    let out = VectorStore::from_parts(dim, keys, store.labels().to_vec())?;
    Ok((out, trace))
}

/// Run [`disperse`] under both objectives from the same starting store.
///
/// The two configurations must agree on `steps` and `seed` so the traces
/// are step-for-step comparable. The input store is not modified.
pub fn compare_regularizers<S: Scalar>(
    store: &VectorStore<S>,
    cfg_mhe: &DispersionConfig,
    cfg_sliced: &DispersionConfig,
) -> Result<(DispersionTrace, DispersionTrace)> {
    if cfg_mhe.regularizer != Regularizer::Mhe || cfg_sliced.regularizer != Regularizer::Sliced {
        return Err(Error::ConfigMismatch("configs must select Mhe and Sliced respectively".into()));
    }
    if cfg_mhe.steps != cfg_sliced.steps || cfg_mhe.seed != cfg_sliced.seed {
        return Err(Error::ConfigMismatch("compared configs must share steps and seed".into()));
    }
    let (_, trace_mhe) = disperse(store, cfg_mhe)?;
    let (_, trace_sliced) = disperse(store, cfg_sliced)?;
    Ok((trace_mhe, trace_sliced))
}

fn draw_batch(n: usize, batch_size: usize, rng: &mut crate::Rng) -> Vec<usize> {
    if batch_size >= n {
        (0..n).collect()
    } else {
        rand::seq::index::sample(rng, n, batch_size).into_vec()
    }
}

fn evaluate(
    batch: &[Vec<f64>],
    cfg: &DispersionConfig,
    dim: usize,
    want_grad: bool,
    rng: &mut crate::Rng,
) -> Result<(f64, Option<Vec<Vec<f64>>>)> {
    match cfg.regularizer {
        Regularizer::Mhe => mhe_value_grad(batch, cfg.sigma, want_grad),
        Regularizer::Sliced => {
            let circles: Vec<(Vec<f64>, Vec<f64>)> = (0..cfg.circles_per_step)
                .map(|_| {
                    let c: GreatCircle<f64> = sample_great_circle(dim, rng)?;
                    let (p, q) = c.axes();
                    Ok((p.as_slice().to_vec(), q.as_slice().to_vec()))
                })
                .collect::<Result<_>>()?;
            sliced_value_grad(batch, &circles, want_grad)
        }
    }
}

fn record(step: usize, loss: f64, dirs: &[Vec<f64>], cfg: &DispersionConfig) -> TraceRecord {
    let wrapped: Vec<Direction<f64>> =
        dirs.iter().map(|d| Direction::new_unchecked(d.clone())).collect();
    let svar = spherical_variance(&wrapped).expect("nonempty set").widen();
    let min_angle = if cfg.track_min_angle && wrapped.len() >= 2 {
        Some(min_pairwise_angle(&wrapped).expect("two or more points"))
    } else {
        None
    };
    TraceRecord { step, loss, spherical_variance: svar, min_angle }
}

fn widen_dirs<S: Scalar>(dirs: &[Direction<S>]) -> Vec<Vec<f64>> {
    dirs.iter().map(|d| d.iter().map(|x| x.widen()).collect()).collect()
}

fn widen_circles<S: Scalar>(circles: &[GreatCircle<S>]) -> Vec<(Vec<f64>, Vec<f64>)> {
    circles
        .iter()
        .map(|c| {
            let (p, q) = c.axes();
            (p.iter().map(|x| x.widen()).collect(), q.iter().map(|x| x.widen()).collect())
        })
        .collect()
}

fn narrow_grads<S: Scalar>(grads: Vec<Vec<f64>>) -> Vec<Vec<S>> {
    grads.into_iter().map(|g| g.into_iter().map(S::from_f64_lossy).collect()).collect()
}
