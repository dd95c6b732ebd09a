//! Unit-sphere primitives: vectors, inner products, uniform sampling, product
//! quadrature on the sphere and reproducible random streams.

use std::f64::consts::PI;
use std::ops::Neg;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::GeometryError;

/// Tolerance on `|v|² - 1` accepted by [`UnitVector::try_new`].
pub const NORM_TOLERANCE: f64 = 1e-12;

/// A point on the unit 2-sphere. Used for detector settings and for
/// vector-valued hidden variables.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 3]", into = "[f64; 3]")]
pub struct UnitVector {
    x: f64,
    y: f64,
    z: f64,
}

impl UnitVector {
    pub const X: UnitVector = UnitVector {
        x: 1.0,
        y: 0.0,
        z: 0.0,
    };
    pub const Y: UnitVector = UnitVector {
        x: 0.0,
        y: 1.0,
        z: 0.0,
    };
    pub const Z: UnitVector = UnitVector {
        x: 0.0,
        y: 0.0,
        z: 1.0,
    };

    /// Normalizes an arbitrary non-zero vector.
    pub fn normalize(x: f64, y: f64, z: f64) -> Result<Self, GeometryError> {
        let n = (x * x + y * y + z * z).sqrt();
        if !n.is_finite() || n < 1e-300 {
            return Err(GeometryError::Degenerate([x, y, z]));
        }
        Ok(UnitVector {
            x: x / n,
            y: y / n,
            z: z / n,
        })
    }

    /// Accepts components that already have unit norm.
    pub fn try_new(x: f64, y: f64, z: f64) -> Result<Self, GeometryError> {
        let n2 = x * x + y * y + z * z;
        if !n2.is_finite() || (n2 - 1.0).abs() > NORM_TOLERANCE {
            return Err(GeometryError::NotUnit {
                components: [x, y, z],
                norm: n2.sqrt(),
            });
        }
        Ok(UnitVector { x, y, z })
    }

    /// Spherical angles: `theta` from +z, `phi` azimuth from +x.
    pub fn from_angles(theta: f64, phi: f64) -> Self {
        let (st, ct) = theta.sin_cos();
        let (sp, cp) = phi.sin_cos();
        UnitVector {
            x: st * cp,
            y: st * sp,
            z: ct,
        }
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn components(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    /// Inner product with another unit vector, see [`dot`].
    pub fn dot(&self, other: &UnitVector) -> f64 {
        dot(self, other)
    }

    fn raw_dot(&self, other: &UnitVector) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    fn cross(&self, o: &UnitVector) -> [f64; 3] {
        [
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        ]
    }

    /// Some unit vector orthogonal to `self`.
    pub fn any_orthogonal(&self) -> UnitVector {
        // cross with the axis least aligned with self
        let axis = if self.x.abs() <= self.y.abs() && self.x.abs() <= self.z.abs() {
            UnitVector::X
        } else if self.y.abs() <= self.z.abs() {
            UnitVector::Y
        } else {
            UnitVector::Z
        };
        let [x, y, z] = self.cross(&axis);
        UnitVector::normalize(x, y, z).expect("cross product with least-aligned axis is non-zero")
    }

    /// The unit vector at inner product `cos` with `self`, in the plane spanned
    /// by `self` and the orthogonal unit vector `ortho`.
    pub fn at_inner_product(&self, ortho: &UnitVector, cos: f64) -> UnitVector {
        let c = cos.clamp(-1.0, 1.0);
        if c == 1.0 {
            return *self;
        }
        if c == -1.0 {
            return -*self;
        }
        let s = (1.0 - c * c).max(0.0).sqrt();
        UnitVector::normalize(
            c * self.x + s * ortho.x,
            c * self.y + s * ortho.y,
            c * self.z + s * ortho.z,
        )
        .expect("combination of orthonormal vectors is non-zero")
    }
}

impl Neg for UnitVector {
    type Output = UnitVector;

    fn neg(self) -> UnitVector {
        UnitVector {
            x: -self.x,
            y: -self.y,
            z: -self.z,
        }
    }
}

impl TryFrom<[f64; 3]> for UnitVector {
    type Error = GeometryError;

    fn try_from(c: [f64; 3]) -> Result<Self, Self::Error> {
        UnitVector::try_new(c[0], c[1], c[2])
    }
}

impl From<UnitVector> for [f64; 3] {
    fn from(v: UnitVector) -> Self {
        v.components()
    }
}

/// Euclidean inner product clamped to `[-1, 1]`.
///
/// Bitwise identical or exactly opposite arguments return exactly `±1`; those
/// are the coincident settings where the excess correlation must vanish, and
/// rounding in `x² + y² + z²` would otherwise leak into non-analytic
/// prefactors like `√(1 - (a·b)²)`.
pub fn dot(a: &UnitVector, b: &UnitVector) -> f64 {
    if a == b {
        return 1.0;
    }
    if *a == -*b {
        return -1.0;
    }
    a.raw_dot(b).clamp(-1.0, 1.0)
}

/// Uniform point on the sphere by inverse CDF: `z ~ U[-1, 1]`, `phi ~ U[0, 2π)`.
pub fn sample_uniform_sphere<R: Rng + ?Sized>(rng: &mut R) -> UnitVector {
    let z: f64 = rng.random::<f64>() * 2.0 - 1.0;
    let phi: f64 = rng.random::<f64>() * 2.0 * PI;
    let r = (1.0 - z * z).max(0.0).sqrt();
    let (s, c) = phi.sin_cos();
    // renormalize to absorb rounding in r
    UnitVector::normalize(r * c, r * s, z).expect("sphere sample is non-zero")
}

/// Tilts `a` towards `direction` by `epsilon`: returns `(a + δ)/√(1 + δ²)` with
/// `δ = epsilon · ê`, where `ê` is the normalized part of `direction`
/// orthogonal to `a`. Thus `a·b = 1/√(1 + ε²)`.
pub fn rotate_towards(
    a: &UnitVector,
    direction: &UnitVector,
    epsilon: f64,
) -> Result<UnitVector, GeometryError> {
    if !(epsilon > 0.0 && epsilon <= 0.1) {
        return Err(GeometryError::EpsilonOutOfRange(epsilon));
    }
    let p = a.raw_dot(direction);
    let ortho = [
        direction.x - p * a.x,
        direction.y - p * a.y,
        direction.z - p * a.z,
    ];
    let on = (ortho[0] * ortho[0] + ortho[1] * ortho[1] + ortho[2] * ortho[2]).sqrt();
    if on < 1e-9 {
        return Err(GeometryError::ParallelDirection);
    }
    let scale = 1.0 / (1.0 + epsilon * epsilon).sqrt();
    let e = [ortho[0] / on, ortho[1] / on, ortho[2] / on];
    UnitVector::normalize(
        (a.x + epsilon * e[0]) * scale,
        (a.y + epsilon * e[1]) * scale,
        (a.z + epsilon * e[2]) * scale,
    )
}

/// Gauss–Legendre nodes and weights on `[-1, 1]` (weights sum to 2).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0, "Gauss-Legendre rule needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut t = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, t);
            dp = d;
            let dt = p / d;
            t -= dt;
            if dt.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, t);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - t * t) * dp * dp);
        nodes[i] = -t;
        nodes[n - 1 - i] = t;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, t: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = t;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * t * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (t * p1 - p0) / (t * t - 1.0);
    (p1, d)
}

/// Product quadrature on the sphere: Gauss–Legendre in `cos θ` times the
/// uniform trapezoid rule in `φ`. Weights are normalized to the uniform
/// probability measure.
#[derive(Debug, Clone)]
pub struct SphereGrid {
    nodes: Vec<UnitVector>,
    weights: Vec<f64>,
}

impl SphereGrid {
    pub const DEFAULT_POLAR: usize = 64;
    pub const DEFAULT_AZIMUTHAL: usize = 128;

    pub fn new(n_polar: usize, n_azimuthal: usize) -> Self {
        assert!(n_polar >= 1 && n_azimuthal >= 1);
        let (t, w) = gauss_legendre(n_polar);
        let mut nodes = Vec::with_capacity(n_polar * n_azimuthal);
        let mut weights = Vec::with_capacity(n_polar * n_azimuthal);
        for (ti, wi) in t.iter().zip(&w) {
            let r = (1.0 - ti * ti).max(0.0).sqrt();
            for j in 0..n_azimuthal {
                let phi = 2.0 * PI * (j as f64 + 0.5) / n_azimuthal as f64;
                let (s, c) = phi.sin_cos();
                nodes
                    .push(UnitVector::normalize(r * c, r * s, *ti).expect("grid node is non-zero"));
                weights.push(wi / (2.0 * n_azimuthal as f64));
            }
        }
        SphereGrid { nodes, weights }
    }

    /// Grid with `n_polar` Gauss nodes and `2·n_polar` azimuthal nodes.
    pub fn with_polar(n_polar: usize) -> Self {
        SphereGrid::new(n_polar, 2 * n_polar)
    }

    pub fn nodes(&self) -> &[UnitVector] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate<F: Fn(&UnitVector) -> f64>(&self, f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(u, w)| w * f(u))
            .sum()
    }
}

impl Default for SphereGrid {
    fn default() -> Self {
        SphereGrid::new(Self::DEFAULT_POLAR, Self::DEFAULT_AZIMUTHAL)
    }
}

/// Reproducible random stream identified by `(seed, stream_id)`.
///
/// Backed by ChaCha8, whose 64-bit stream selector gives disjoint sequences
/// for distinct stream ids under the same seed.
#[derive(Debug, Clone)]
pub struct RandomStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RandomStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        RandomStream {
            seed,
            stream_id,
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// A fresh child stream. Depends only on `(seed, stream_id, child)`,
    /// never on how many numbers this stream has already produced.
    pub fn derive(&self, child: u64) -> RandomStream {
        RandomStream::new(
            self.seed,
            splitmix64(splitmix64(self.stream_id) ^ child.wrapping_add(0x9E37)),
        )
    }

    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn unit_vector(&mut self) -> UnitVector {
        sample_uniform_sphere(&mut self.rng)
    }
}

impl RngCore for RandomStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag() -> UnitVector {
        UnitVector::normalize(1.0, 0.0, 1.0).unwrap()
    }

    #[test]
    fn dot_examples() {
        assert_eq!(dot(&UnitVector::Z, &UnitVector::Z), 1.0);
        assert_eq!(dot(&UnitVector::Z, &UnitVector::X), 0.0);
        assert!((dot(&UnitVector::Z, &diag()) - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn dot_is_exact_for_identical_and_opposite() {
        let mut rng = RandomStream::new(3, 0);
        for _ in 0..1000 {
            let a = rng.unit_vector();
            assert_eq!(dot(&a, &a), 1.0);
            assert_eq!(dot(&a, &-a), -1.0);
        }
    }

    #[test]
    fn clamping_moves_values_by_less_than_1e12() {
        let mut rng = RandomStream::new(5, 0);
        for _ in 0..10_000 {
            let a = rng.unit_vector();
            let b = rng.unit_vector();
            assert!((dot(&a, &b) - a.raw_dot(&b)).abs() <= 1e-12);
            let n2 = a.raw_dot(&a);
            assert!((n2 - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn try_new_rejects_non_unit() {
        assert!(UnitVector::try_new(1.0, 1.0, 0.0).is_err());
        assert!(UnitVector::try_new(0.0, 0.0, 1.0).is_ok());
        assert!(UnitVector::normalize(0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn rotate_towards_examples() {
        let b = rotate_towards(&UnitVector::Z, &UnitVector::X, 1e-3).unwrap();
        assert!((dot(&UnitVector::Z, &b) - 0.9999995).abs() < 1e-10);
        assert!((dot(&UnitVector::Z, &b) - 1.0 / (1.0f64 + 1e-6).sqrt()).abs() < 1e-15);

        let tiny = rotate_towards(&UnitVector::Z, &UnitVector::X, 1e-9).unwrap();
        assert!((tiny.z() - 1.0).abs() < 1e-15 && tiny.x() < 2e-9);

        assert_eq!(
            rotate_towards(&UnitVector::Z, &UnitVector::Z, 1e-3),
            Err(GeometryError::ParallelDirection)
        );
        assert!(rotate_towards(&UnitVector::Z, &UnitVector::X, 0.5).is_err());
        assert!(rotate_towards(&UnitVector::Z, &UnitVector::X, 0.0).is_err());
    }

    #[test]
    fn rotate_towards_projects_direction() {
        // direction with a component along a: only the orthogonal part matters
        let dir = UnitVector::normalize(1.0, 0.0, 3.0).unwrap();
        let b = rotate_towards(&UnitVector::Z, &dir, 0.05).unwrap();
        assert!((dot(&UnitVector::Z, &b) - 1.0 / (1.0f64 + 0.0025).sqrt()).abs() < 1e-14);
        assert!(b.y().abs() < 1e-15 && b.x() > 0.0);
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        for n in [1usize, 2, 5, 16, 64] {
            let (t, w) = gauss_legendre(n);
            assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-13, "n={n}");
            // exact up to degree 2n-1
            for k in 0..(2 * n).min(12) {
                let got: f64 = t.iter().zip(&w).map(|(t, w)| w * t.powi(k as i32)).sum();
                let want = if k % 2 == 1 {
                    0.0
                } else {
                    2.0 / (k as f64 + 1.0)
                };
                assert!((got - want).abs() < 1e-13, "n={n} k={k}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn sphere_grid_invariants() {
        let g = SphereGrid::default();
        assert_eq!(g.len(), 64 * 128);
        assert!((g.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(g.weights().iter().all(|w| *w > 0.0));
        assert!((g.integrate(|_| 3.5) - 3.5).abs() < 1e-12);
        assert!(g.integrate(|u| u.x()).abs() < 1e-10);
        assert!(g.integrate(|u| u.y()).abs() < 1e-10);
        assert!(g.integrate(|u| u.z()).abs() < 1e-10);
        let a = diag();
        assert!((g.integrate(|u| dot(&a, u).powi(2)) - 1.0 / 3.0).abs() < 1e-6);
        // degree-4 moment: <(a·u)^4> = 1/5
        assert!((g.integrate(|u| dot(&a, u).powi(4)) - 0.2).abs() < 1e-12);
    }

    #[test]
    fn sphere_samples_are_unit_and_centered() {
        let mut rng = RandomStream::new(11, 0);
        let n = 1_000_000;
        let mut sum = [0.0; 3];
        let mut zs = Vec::with_capacity(n);
        for _ in 0..n {
            let u = rng.unit_vector();
            let n2 = u.raw_dot(&u);
            assert!((n2 - 1.0).abs() < 1e-12);
            for (s, c) in sum.iter_mut().zip(u.components()) {
                *s += c;
            }
            zs.push(u.z());
        }
        let se = (1.0 / 3.0f64).sqrt() / (n as f64).sqrt();
        for s in sum {
            assert!((s / n as f64).abs() < 5.0 * se);
        }
        // Kolmogorov-Smirnov distance of z against U[-1, 1]
        zs.sort_by(f64::total_cmp);
        let ks = zs
            .iter()
            .enumerate()
            .map(|(i, z)| {
                let cdf = (z + 1.0) / 2.0;
                let lo = i as f64 / n as f64;
                let hi = (i + 1) as f64 / n as f64;
                (cdf - lo).abs().max((hi - cdf).abs())
            })
            .fold(0.0, f64::max);
        assert!(ks < 0.002, "KS distance {ks}");
    }

    #[test]
    fn streams_are_reproducible_and_independent() {
        let mut s1 = RandomStream::new(42, 7);
        let mut s2 = RandomStream::new(42, 7);
        for _ in 0..100 {
            assert_eq!(s1.next_u64(), s2.next_u64());
        }
        // derive ignores consumed state
        let base = RandomStream::new(42, 7);
        let mut used = RandomStream::new(42, 7);
        used.next_u64();
        assert_eq!(base.derive(3).stream_id(), used.derive(3).stream_id());

        let n = 100_000;
        let mut a = RandomStream::new(42, 0);
        let mut b = RandomStream::new(42, 1);
        let (mut sxy, mut sx, mut sy, mut sxx, mut syy) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for _ in 0..n {
            let x = a.uniform();
            let y = b.uniform();
            sxy += x * y;
            sx += x;
            sy += y;
            sxx += x * x;
            syy += y * y;
        }
        let nf = n as f64;
        let cov = sxy / nf - sx / nf * sy / nf;
        let corr = cov / ((sxx / nf - (sx / nf).powi(2)) * (syy / nf - (sy / nf).powi(2))).sqrt();
        assert!(corr.abs() < 5.0 / nf.sqrt(), "cross-correlation {corr}");
    }
}
