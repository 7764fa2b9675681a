//! Directions on the unit sphere, norm/direction decomposition, and great
//! circles with their projections.
//!
//! Angular dispersion is measured and optimized on directions, so this
//! module is the substrate for everything in [`crate::dispersion`]. All
//! sampling draws standard-normal coordinates in `f64` (rotation-invariant
//! by construction) and casts to the target scalar at the end, so a given
//! seed produces the same geometry for every scalar instantiation.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::scalar::{dot, norm, Scalar};

/// Norm below which a vector is considered zero and cannot be normalized.
pub const ZERO_NORM_EPS: f64 = 1e-12;

/// Planar projection norm below which a point is dropped from a circle
/// slice: its angle is numerically meaningless and its gradient would be
/// explosive.
pub const PROJECTION_EPS: f64 = 1e-8;

/// Unit-norm vector in `R^d`, `d >= 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Direction<S>(Vec<S>);

impl<S: Scalar> Direction<S> {
    /// Validates dimensionality, finiteness and unit norm (within
    /// [`Scalar::UNIT_TOL`]).
    pub fn new(coords: Vec<S>) -> Result<Self> {
        if coords.len() < 2 {
            return Err(Error::BadShape(format!("direction dim must be >= 2, got {}", coords.len())));
        }
        if coords.iter().any(|x| !x.is_finite()) {
            return Err(Error::BadShape("non-finite direction coordinate".into()));
        }
        let n = norm(&coords);
        if (n - S::one()).abs() > S::UNIT_TOL {
            return Err(Error::BadShape(format!("direction norm {n} is not 1")));
        }
        Ok(Self(coords))
    }

    /// Skips validation. For perturbed evaluations (finite differences) and
    /// internal construction of vectors already normalized.
    pub fn new_unchecked(coords: Vec<S>) -> Self {
        Self(coords)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[S] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<S> {
        self.0
    }
}

impl<S> std::ops::Deref for Direction<S> {
    type Target = [S];
    fn deref(&self) -> &[S] {
        &self.0
    }
}

/// Great circle on the sphere, represented by an orthonormal pair spanning
/// its plane.
#[derive(Debug, Clone, PartialEq)]
pub struct GreatCircle<S> {
    p: Direction<S>,
    q: Direction<S>,
}

impl<S: Scalar> GreatCircle<S> {
    /// Validates that `p` and `q` are orthogonal within [`Scalar::UNIT_TOL`].
    pub fn new(p: Direction<S>, q: Direction<S>) -> Result<Self> {
        if p.dim() != q.dim() {
            return Err(Error::SizeMismatch { left: p.dim(), right: q.dim() });
        }
        if dot(&p, &q).abs() > S::UNIT_TOL {
            return Err(Error::BadShape("great-circle axes are not orthogonal".into()));
        }
        Ok(Self { p, q })
    }

    pub fn axes(&self) -> (&Direction<S>, &Direction<S>) {
        (&self.p, &self.q)
    }

    pub fn dim(&self) -> usize {
        self.p.dim()
    }
}

/// Split a nonzero vector into its direction and norm.
///
/// Errors with [`Error::ZeroVector`] when the norm is at most
/// [`ZERO_NORM_EPS`]. Multiplying the parts back reconstructs the input to
/// within the scalar's precision.
pub fn split_direction_norm<S: Scalar>(v: &[S]) -> Result<(Direction<S>, S)> {
    if v.len() < 2 {
        return Err(Error::BadShape(format!("vector dim must be >= 2, got {}", v.len())));
    }
    let n = norm(v);
    if n.widen() <= ZERO_NORM_EPS {
        return Err(Error::ZeroVector);
    }
    let dir: Vec<S> = v.iter().map(|&x| x / n).collect();
    Ok((Direction::new_unchecked(dir), n))
}

/// Smallest pairwise angle in a direction set, in radians in `[0, pi]`.
///
/// Dot products are clamped to `[-1, 1]` before `acos` so rounding can
/// never produce NaN. Computed as the min over all unordered pairs of the
/// per-pair angle, which keeps it bit-identical to the obvious double loop.
pub fn min_pairwise_angle<S: Scalar>(dirs: &[Direction<S>]) -> Result<S> {
    if dirs.len() < 2 {
        return Err(Error::TooFewPoints { needed: 2, got: dirs.len() });
    }
    let mut best = S::from_f64_lossy(std::f64::consts::PI);
    for i in 0..dirs.len() {
        for j in (i + 1)..dirs.len() {
            let c = clamp_unit(dot(&dirs[i], &dirs[j]));
            let angle = c.acos();
            if angle < best {
                best = angle;
            }
        }
    }
    Ok(best)
}

/// Spherical variance: `1 - ||mean of the directions||`, in `[0, 1]`.
///
/// Zero for identical directions. A value near 1 means the mean vector is
/// near the origin, which indicates balance, not necessarily uniformity:
/// the four-point set `{x, x, -x, -x}` already scores 1.
pub fn spherical_variance<S: Scalar>(dirs: &[Direction<S>]) -> Result<S> {
    if dirs.is_empty() {
        return Err(Error::EmptySet);
    }
    let d = dirs[0].dim();
    let mut mean = vec![0.0f64; d];
    for dir in dirs {
        for (m, &x) in mean.iter_mut().zip(dir.iter()) {
            *m += x.widen();
        }
    }
    let inv = 1.0 / dirs.len() as f64;
    let mut sq = 0.0f64;
    for m in &mean {
        let v = m * inv;
        sq += v * v;
    }
    Ok(S::from_f64_lossy(1.0 - sq.sqrt()))
}

/// Draw a uniformly random great circle in dimension `d >= 2`.
///
/// Both axes come from independent standard-normal draws: the first is
/// normalized, the second is Gram-Schmidt orthogonalized against it.
/// Degenerate second draws are retried internally.
pub fn sample_great_circle<S: Scalar, R: Rng>(d: usize, rng: &mut R) -> Result<GreatCircle<S>> {
    if d < 2 {
        return Err(Error::BadShape(format!("great circle needs dim >= 2, got {d}")));
    }
    let p = random_unit_f64(d, rng);
    loop {
        let mut q: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let along = dot(&q, &p);
        for (qi, pi) in q.iter_mut().zip(p.iter()) {
            *qi -= along * pi;
        }
        let n = norm(&q);
        if n < PROJECTION_EPS {
            continue;
        }
        for qi in q.iter_mut() {
            *qi /= n;
        }
        let p_s = Direction::new_unchecked(p.iter().map(|&x| S::from_f64_lossy(x)).collect());
        let q_s = Direction::new_unchecked(q.iter().map(|&x| S::from_f64_lossy(x)).collect());
        return Ok(GreatCircle { p: p_s, q: q_s });
    }
}

/// Projection of a direction set onto a great circle.
#[derive(Debug, Clone)]
pub struct CircleProjection<S> {
    /// Polar angle in `[0, 2*pi)` of each kept point.
    pub angles: Vec<S>,
    /// Indices into the input set for each kept point.
    pub kept: Vec<usize>,
    /// Planar coordinates `(<s,p>, <s,q>)` of each kept point.
    pub planar: Vec<(S, S)>,
}

/// Project directions onto the plane of a great circle, returning polar
/// angles for the points that project non-degenerately.
///
/// Points whose planar projection norm is below [`PROJECTION_EPS`] are
/// omitted; their indices are absent from `kept`.
pub fn project_to_circle<S: Scalar>(
    dirs: &[Direction<S>],
    circle: &GreatCircle<S>,
) -> CircleProjection<S> {
    let mut angles = Vec::with_capacity(dirs.len());
    let mut kept = Vec::with_capacity(dirs.len());
    let mut planar = Vec::with_capacity(dirs.len());
    let two_pi = S::from_f64_lossy(std::f64::consts::TAU);
    let eps = S::from_f64_lossy(PROJECTION_EPS);
    for (i, s) in dirs.iter().enumerate() {
        let a = dot(s, &circle.p);
        let b = dot(s, &circle.q);
        if (a * a + b * b).sqrt() < eps {
            continue;
        }
        let mut theta = b.atan2(a);
        if theta < S::zero() {
            theta += two_pi;
        }
        // atan2 can return exactly -0.0 -> TAU after the shift; fold back.
        if theta >= two_pi {
            theta = S::zero();
        }
        angles.push(theta);
        kept.push(i);
        planar.push((a, b));
    }
    CircleProjection { angles, kept, planar }
}

#[inline]
pub(crate) fn clamp_unit<S: Scalar>(x: S) -> S {
    if x > S::one() {
        S::one()
    } else if x < -S::one() {
        -S::one()
    } else {
        x
    }
}

pub(crate) fn random_unit_f64<R: Rng>(d: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let n = norm(&v);
        if n > ZERO_NORM_EPS {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Unit basis vector `e_i` in dimension `d`.
pub fn basis<S: Scalar>(d: usize, i: usize) -> Direction<S> {
    let mut v = vec![S::zero(); d];
    v[i] = S::one();
    Direction::new_unchecked(v)
}
