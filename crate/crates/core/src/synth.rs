//! Synthetic datastores sampled from mixtures of power spherical
//! distributions.
//!
//! Directions come from a mixture of `components` power spherical
//! distributions sharing one concentration `kappa`; component mean
//! directions are drawn uniformly on the sphere when the generator is
//! seeded. Each key is scaled by a length drawn uniformly from
//! `norm_range`, and labeled with its component id so the labels can serve
//! as ground-truth classes for clustering metrics.

use rand::Rng;
use rand_distr::{Beta, Distribution};

use crate::error::{Error, Result};
use crate::geometry::{random_unit_f64, Direction};
use crate::scalar::Scalar;
use crate::store::VectorStore;

/// Power spherical distribution parameters: mean direction and
/// concentration (`kappa = 0` is the uniform distribution on the sphere).
#[derive(Debug, Clone)]
pub struct PowerSphericalParams<S> {
    pub mu: Direction<S>,
    pub kappa: f64,
}

impl<S: Scalar> PowerSphericalParams<S> {
    pub fn new(mu: Direction<S>, kappa: f64) -> Result<Self> {
        if !(kappa >= 0.0) {
            return Err(Error::InvalidParameter(format!("kappa must be >= 0, got {kappa}")));
        }
        Ok(Self { mu, kappa })
    }
}

/// Generator specification for a synthetic datastore.
#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub dim: usize,
    pub count: usize,
    pub components: usize,
    pub kappa: f64,
    /// Inclusive key-length range `0 < lo <= hi`.
    pub norm_range: (f64, f64),
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self { dim: 128, count: 10_000, components: 5, kappa: 1.0, norm_range: (1.0, 100.0), seed: 0 }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.dim < 2 {
            return Err(Error::BadShape(format!("dim must be >= 2, got {}", self.dim)));
        }
        if self.components < 1 {
            return Err(Error::InvalidParameter("components must be >= 1".into()));
        }
        if !(self.kappa >= 0.0) {
            return Err(Error::InvalidParameter(format!("kappa must be >= 0, got {}", self.kappa)));
        }
        let (lo, hi) = self.norm_range;
        if !(lo > 0.0 && lo <= hi) {
            return Err(Error::InvalidParameter(format!(
                "norm range must satisfy 0 < lo <= hi, got [{lo}, {hi}]"
            )));
        }
        Ok(())
    }
}

/// One power spherical draw in `f64` coordinates.
///
/// Marginal along `mu`: `t = 2z - 1` with `z ~ Beta((d-1)/2 + kappa,
/// (d-1)/2)`; the orthogonal part is uniform on the `(d-2)`-sphere. The
/// sample `[t, sqrt(1-t^2) v]` is reflected so the first axis maps to `mu`
/// via the Householder transform with `u = normalize(e1 - mu)`.
fn sample_one<R: Rng>(mu: &[f64], kappa: f64, rng: &mut R) -> Vec<f64> {
    let d = mu.len();
    let half = (d - 1) as f64 / 2.0;
    let z = Beta::new(half + kappa, half).expect("valid beta parameters").sample(rng);
    let t = 2.0 * z - 1.0;
    let v = random_unit_f64(d - 1, rng);
    let radial = (1.0 - t * t).max(0.0).sqrt();
    let mut y = Vec::with_capacity(d);
    y.push(t);
    y.extend(v.iter().map(|x| x * radial));

    // Householder reflection mapping e1 onto mu; identity when mu == e1.
    let mut u = y.clone();
    u[0] = 1.0 - mu[0];
    for (ui, mi) in u.iter_mut().zip(mu.iter()).skip(1) {
        *ui = -mi;
    }
    let un: f64 = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    if un < 1e-12 {
        return y;
    }
    for x in u.iter_mut() {
        *x /= un;
    }
    let proj: f64 = u.iter().zip(y.iter()).map(|(a, b)| a * b).sum();
    y.iter().zip(u.iter()).map(|(yi, ui)| yi - 2.0 * proj * ui).collect()
}

/// Draw `n` unit directions from a power spherical distribution.
pub fn sample_power_spherical<S: Scalar, R: Rng>(
    params: &PowerSphericalParams<S>,
    n: usize,
    rng: &mut R,
) -> Vec<Direction<S>> {
    let mu: Vec<f64> = params.mu.iter().map(|x| x.widen()).collect();
    (0..n)
        .map(|_| {
            let y = sample_one(&mu, params.kappa, rng);
            Direction::new_unchecked(y.into_iter().map(S::from_f64_lossy).collect())
        })
        .collect()
}

/// Generate a labeled datastore from the mixture described by `spec`.
///
/// The RNG is seeded from `spec.seed`, so identical specs yield
/// bit-identical stores: component means first, then per key a uniformly
/// chosen component, a direction draw, and a uniform length.
pub fn make_synthetic_store<S: Scalar>(spec: &SynthSpec) -> Result<VectorStore<S>> {
    spec.validate()?;
    let mut rng = crate::seeded_rng(spec.seed);
    let means: Vec<Vec<f64>> =
        (0..spec.components).map(|_| random_unit_f64(spec.dim, &mut rng)).collect();
    let (lo, hi) = spec.norm_range;

    let mut keys: Vec<S> = Vec::with_capacity(spec.count * spec.dim);
    let mut labels: Vec<u32> = Vec::with_capacity(spec.count);
    for _ in 0..spec.count {
        let c = rng.random_range(0..spec.components);
        let dir = sample_one(&means[c], spec.kappa, &mut rng);
        let len = rng.random_range(lo..=hi);
        keys.extend(dir.iter().map(|&x| S::from_f64_lossy(x * len)));
        labels.push(c as u32);
    }
    VectorStore::from_parts(spec.dim, keys, labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::basis;
    use crate::seeded_rng;
    use crate::scalar::norm;

    fn resultant_length(dirs: &[Direction<f64>]) -> f64 {
        let d = dirs[0].dim();
        let mut mean = vec![0.0f64; d];
        for dir in dirs {
            for (m, x) in mean.iter_mut().zip(dir.iter()) {
                *m += x;
            }
        }
        let n = dirs.len() as f64;
        mean.iter().map(|x| (x / n) * (x / n)).sum::<f64>().sqrt()
    }

    #[test]
    fn kappa_zero_is_uniform() {
        let mu = basis::<f64>(8, 0);
        let params = PowerSphericalParams::new(mu, 0.0).unwrap();
        let mut rng = seeded_rng(101);
        let dirs = sample_power_spherical(&params, 10_000, &mut rng);
        assert!(resultant_length(&dirs) < 0.05);
        for d in dirs.iter().take(100) {
            assert!((norm(d.as_slice()) - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn high_kappa_aligns_with_mu() {
        let mut rng = seeded_rng(103);
        let mu = Direction::new_unchecked(random_unit_f64(3, &mut rng));
        let params = PowerSphericalParams::new(mu.clone(), 100.0).unwrap();
        let dirs = sample_power_spherical(&params, 10_000, &mut rng);
        let d = 3;
        let mut mean = vec![0.0f64; d];
        for dir in &dirs {
            for (m, x) in mean.iter_mut().zip(dir.iter()) {
                *m += x;
            }
        }
        let len = mean.iter().map(|x| x * x).sum::<f64>().sqrt();
        let cosine: f64 =
            mean.iter().zip(mu.iter()).map(|(a, b)| a * b).sum::<f64>() / len;
        let angle = cosine.clamp(-1.0, 1.0).acos().to_degrees();
        assert!(angle < 5.0, "mean direction is {angle} degrees from mu");
    }

    #[test]
    fn concentration_grows_with_kappa() {
        let mu = basis::<f64>(8, 0);
        let mut previous = -1.0;
        for kappa in [1.0, 10.0, 100.0] {
            let params = PowerSphericalParams::new(mu.clone(), kappa).unwrap();
            let mut rng = seeded_rng(107);
            let dirs = sample_power_spherical(&params, 10_000, &mut rng);
            let r = resultant_length(&dirs);
            assert!(r >= previous, "resultant length decreased at kappa={kappa}: {r} < {previous}");
            previous = r;
        }
    }

    #[test]
    fn store_is_deterministic_and_in_range() {
        let spec = SynthSpec { dim: 16, count: 2_000, components: 5, kappa: 10.0, ..Default::default() };
        let a: VectorStore<f32> = make_synthetic_store(&spec).unwrap();
        let b: VectorStore<f32> = make_synthetic_store(&spec).unwrap();
        assert_eq!(a, b);
        for i in 0..a.len() {
            let n = norm(a.key(i)).widen();
            assert!((1.0..=100.0).contains(&n), "norm {n} out of range");
            assert!(a.label(i) < 5);
        }
    }

    #[test]
    fn empty_store_is_allowed() {
        let spec = SynthSpec { count: 0, ..Default::default() };
        let store: VectorStore<f64> = make_synthetic_store(&spec).unwrap();
        assert!(store.is_empty());
        assert_eq!(store.dim(), 128);
    }

    #[test]
    fn key_lengths_are_uniform() {
        // Kolmogorov-Smirnov statistic against the uniform CDF on [1, 100].
        let spec = SynthSpec { dim: 8, count: 100_000, components: 5, kappa: 5.0, ..Default::default() };
        let store: VectorStore<f64> = make_synthetic_store(&spec).unwrap();
        let mut norms: Vec<f64> = (0..store.len()).map(|i| norm(store.key(i))).collect();
        norms.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = norms.len() as f64;
        let mut ks: f64 = 0.0;
        for (i, &x) in norms.iter().enumerate() {
            let cdf = ((x - 1.0) / 99.0).clamp(0.0, 1.0);
            let lo = i as f64 / n;
            let hi = (i + 1) as f64 / n;
            ks = ks.max((cdf - lo).abs()).max((hi - cdf).abs());
        }
        assert!(ks < 0.01, "KS statistic {ks}");
    }

    #[test]
    fn spherical_variance_decreases_with_kappa() {
        let mut previous = f64::INFINITY;
        for kappa in [1.0, 10.0, 50.0, 100.0, 1000.0] {
            let spec =
                SynthSpec { dim: 128, count: 10_000, components: 5, kappa, seed: 3, ..Default::default() };
            let store: VectorStore<f64> = make_synthetic_store(&spec).unwrap();
            let svar = crate::analysis::store_spherical_variance(&store).unwrap();
            assert!(svar < previous, "svar not decreasing at kappa={kappa}: {svar} vs {previous}");
            previous = svar;
        }
    }

    #[test]
    fn rejects_bad_norm_range() {
        let spec = SynthSpec { norm_range: (0.0, 1.0), ..Default::default() };
        assert!(make_synthetic_store::<f64>(&spec).is_err());
    }
}
