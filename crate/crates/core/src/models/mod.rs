//! Hidden-variable model abstraction.
//!
//! A model is a measure over hidden variables λ (which never sees the
//! detector settings) plus a rule producing the four joint probabilities
//! `P(σ, τ | λ, a, b)`. Canonical models go through an excess-correlation
//! function `C(λ, a, b)`:
//!
//! ```text
//! P(σ, τ | λ, a, b) = (1 - σ τ (a·b - C(λ, a, b))) / 4
//! ```
//!
//! Direct models (the Cerf model) produce the table themselves.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::ModelError;
use crate::geometry::{dot, gauss_legendre, RandomStream, SphereGrid, UnitVector};

mod cerf;
mod families;
mod recipe;
mod registry;
mod spec;

pub use cerf::{cerf_model, cerf_prob, CerfRule};
pub use families::{
    family1_c, family1_model, family2_c, family2_model, qm_model, wrongtrial_c, wrongtrial_model,
    Family1, Family2, WrongTrial, ZeroExcess,
};
pub use recipe::{
    build_recipe_model, recipe_bound, recipe_model_with_scale, RecipeFn, RecipeInput,
    RecipeSummary, SupSearch,
};
pub use registry::{recipe_function, recipe_names, RecipeEntry};
pub use spec::{Family, ModelSpec, Parameters, ScalarMeasureKind, RECIPE_QUADRATURE};

/// Slack below zero tolerated on table entries before reporting a violation.
pub const NEGATIVITY_TOLERANCE: f64 = 1e-12;

/// Single-wing measurement outcome `±1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "i8", try_from = "i8")]
pub enum Outcome {
    Plus,
    Minus,
}

impl Outcome {
    pub const ALL: [Outcome; 2] = [Outcome::Plus, Outcome::Minus];

    pub fn value(self) -> f64 {
        match self {
            Outcome::Plus => 1.0,
            Outcome::Minus => -1.0,
        }
    }

    fn index(self) -> usize {
        match self {
            Outcome::Plus => 0,
            Outcome::Minus => 1,
        }
    }
}

impl From<Outcome> for i8 {
    fn from(o: Outcome) -> i8 {
        match o {
            Outcome::Plus => 1,
            Outcome::Minus => -1,
        }
    }
}

impl TryFrom<i8> for Outcome {
    type Error = String;

    fn try_from(v: i8) -> Result<Self, Self::Error> {
        match v {
            1 => Ok(Outcome::Plus),
            -1 => Ok(Outcome::Minus),
            _ => Err(format!("outcome must be +1 or -1, got {v}")),
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Outcome::Plus => "+1",
            Outcome::Minus => "-1",
        })
    }
}

/// QM singlet joint probability `(1 - σ τ a·b) / 4`.
pub fn qm_singlet_prob(sigma: Outcome, tau: Outcome, a: &UnitVector, b: &UnitVector) -> f64 {
    (1.0 - sigma.value() * tau.value() * dot(a, b)) / 4.0
}

/// The four joint probabilities at fixed λ and settings, indexed by outcome.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProbabilityTable {
    p: [[f64; 2]; 2],
}

impl ProbabilityTable {
    /// Entries in the order `(+,+), (+,-), (-,+), (-,-)`.
    pub fn from_entries(e: [f64; 4]) -> Self {
        ProbabilityTable {
            p: [[e[0], e[1]], [e[2], e[3]]],
        }
    }

    /// Canonical form for inner product `x = a·b` and excess correlation `c`.
    pub fn canonical(x: f64, c: f64) -> Self {
        let k = x - c;
        let same = (1.0 - k) / 4.0;
        let diff = (1.0 + k) / 4.0;
        ProbabilityTable {
            p: [[same, diff], [diff, same]],
        }
    }

    pub fn qm(x: f64) -> Self {
        Self::canonical(x, 0.0)
    }

    pub fn get(&self, sigma: Outcome, tau: Outcome) -> f64 {
        self.p[sigma.index()][tau.index()]
    }

    pub fn set(&mut self, sigma: Outcome, tau: Outcome, value: f64) {
        self.p[sigma.index()][tau.index()] = value;
    }

    pub fn entries(&self) -> [f64; 4] {
        [self.p[0][0], self.p[0][1], self.p[1][0], self.p[1][1]]
    }

    /// `(σ, τ, p)` for every cell.
    pub fn cells(&self) -> impl Iterator<Item = (Outcome, Outcome, f64)> + '_ {
        Outcome::ALL.into_iter().flat_map(move |s| {
            Outcome::ALL
                .into_iter()
                .map(move |t| (s, t, self.get(s, t)))
        })
    }

    pub fn sum(&self) -> f64 {
        self.entries().iter().sum()
    }

    pub fn min_cell(&self) -> (Outcome, Outcome, f64) {
        self.cells()
            .fold((Outcome::Plus, Outcome::Plus, f64::INFINITY), |best, c| {
                if c.2 < best.2 {
                    c
                } else {
                    best
                }
            })
    }

    pub fn max_cell(&self) -> (Outcome, Outcome, f64) {
        self.cells().fold(
            (Outcome::Plus, Outcome::Plus, f64::NEG_INFINITY),
            |best, c| {
                if c.2 > best.2 {
                    c
                } else {
                    best
                }
            },
        )
    }

    /// `Σ_τ P(σ, τ)`.
    pub fn marginal_first(&self, sigma: Outcome) -> f64 {
        self.get(sigma, Outcome::Plus) + self.get(sigma, Outcome::Minus)
    }

    /// `Σ_σ P(σ, τ)`.
    pub fn marginal_second(&self, tau: Outcome) -> f64 {
        self.get(Outcome::Plus, tau) + self.get(Outcome::Minus, tau)
    }

    /// `Σ σ τ P(σ, τ)`.
    pub fn correlator(&self) -> f64 {
        self.p[0][0] - self.p[0][1] - self.p[1][0] + self.p[1][1]
    }
}

/// One value of the hidden variable: scalars, unit vectors and discrete labels.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct LambdaPoint {
    pub scalars: SmallVec<[f64; 2]>,
    pub vectors: SmallVec<[UnitVector; 2]>,
    pub labels: SmallVec<[i64; 1]>,
}

impl LambdaPoint {
    pub fn new(scalars: &[f64], vectors: &[UnitVector], labels: &[i64]) -> Self {
        LambdaPoint {
            scalars: SmallVec::from_slice(scalars),
            vectors: SmallVec::from_slice(vectors),
            labels: SmallVec::from_slice(labels),
        }
    }

    pub fn scalar(g: f64) -> Self {
        Self::new(&[g], &[], &[])
    }

    pub fn shape(&self) -> LambdaShape {
        LambdaShape {
            scalars: self.scalars.len(),
            vectors: self.vectors.len(),
            labels: self.labels.len(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LambdaShape {
    pub scalars: usize,
    pub vectors: usize,
    pub labels: usize,
}

/// Distribution of one scalar component of λ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum ScalarMeasure {
    /// `+γ` with probability `weight_plus`, `-γ` otherwise.
    TwoPoint { gamma: f64, weight_plus: f64 },
    /// Uniform on `[-γ, γ]`.
    Uniform { gamma: f64 },
}

impl ScalarMeasure {
    pub fn two_point(gamma: f64) -> Self {
        ScalarMeasure::TwoPoint {
            gamma,
            weight_plus: 0.5,
        }
    }

    pub fn uniform(gamma: f64) -> Self {
        ScalarMeasure::Uniform { gamma }
    }

    pub fn gamma(&self) -> f64 {
        match *self {
            ScalarMeasure::TwoPoint { gamma, .. } | ScalarMeasure::Uniform { gamma } => gamma,
        }
    }

    /// Largest `|value|` in the support.
    pub fn support_bound(&self) -> f64 {
        self.gamma().abs()
    }

    fn validate(&self) -> Result<(), ModelError> {
        let g = self.gamma();
        if !g.is_finite() || g < 0.0 {
            return Err(ModelError::InvalidParameter(format!(
                "gamma must be finite and >= 0, got {g}"
            )));
        }
        if let ScalarMeasure::TwoPoint { weight_plus, .. } = *self {
            if !(weight_plus > 0.0 && weight_plus < 1.0) {
                return Err(ModelError::InvalidParameter(format!(
                    "two-point weight must lie in (0, 1), got {weight_plus}"
                )));
            }
        }
        Ok(())
    }

    pub fn sample(&self, rng: &mut RandomStream) -> f64 {
        match *self {
            ScalarMeasure::TwoPoint { gamma, weight_plus } => {
                if rng.uniform() < weight_plus {
                    gamma
                } else {
                    -gamma
                }
            }
            ScalarMeasure::Uniform { gamma } => gamma * (2.0 * rng.uniform() - 1.0),
        }
    }

    /// Quadrature nodes and weights (weights sum to 1).
    pub fn nodes(&self, gauss_nodes: usize) -> Vec<(f64, f64)> {
        match *self {
            ScalarMeasure::TwoPoint { gamma, weight_plus } => {
                vec![(gamma, weight_plus), (-gamma, 1.0 - weight_plus)]
            }
            ScalarMeasure::Uniform { gamma } => {
                let (t, w) = gauss_legendre(gauss_nodes);
                t.into_iter()
                    .zip(w)
                    .map(|(t, w)| (gamma * t, w / 2.0))
                    .collect()
            }
        }
    }

    /// Small move inside the support, used by local searches.
    pub fn perturb(&self, value: f64, step: f64, rng: &mut RandomStream) -> f64 {
        match *self {
            ScalarMeasure::TwoPoint { gamma, .. } => {
                if rng.uniform() < 0.5 {
                    -value
                } else if value >= 0.0 {
                    gamma
                } else {
                    -gamma
                }
            }
            ScalarMeasure::Uniform { gamma } => {
                (value + step * gamma * (2.0 * rng.uniform() - 1.0)).clamp(-gamma, gamma)
            }
        }
    }
}

/// Weighted node set representing the λ measure exactly or to quadrature
/// accuracy.
#[derive(Debug, Clone)]
pub struct Quadrature {
    pub points: Vec<LambdaPoint>,
    pub weights: Vec<f64>,
}

impl Quadrature {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn integrate<F: Fn(&LambdaPoint) -> f64>(&self, f: F) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(p, w)| w * f(p))
            .sum()
    }
}

/// Resolution of the deterministic λ quadrature.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuadratureConfig {
    /// Gauss–Legendre nodes for uniform scalar components.
    pub scalar_nodes: usize,
    /// Polar nodes of the sphere grid (azimuthal = 2 × polar).
    pub sphere_polar: usize,
    /// Product rules larger than this are not built.
    pub max_points: usize,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig {
            scalar_nodes: 16,
            sphere_polar: SphereGrid::DEFAULT_POLAR,
            max_points: 1 << 20,
        }
    }
}

/// The hidden-variable measure `dμ(λ)`. Nothing here takes a detector
/// setting, so the measure is setting-independent by construction.
#[derive(Debug, Clone)]
pub struct LambdaSpace {
    scalars: Vec<ScalarMeasure>,
    vectors: usize,
    label_cardinalities: Vec<u32>,
    quadrature: Option<Arc<Quadrature>>,
}

impl LambdaSpace {
    /// Independent components: each scalar by its measure, each vector
    /// uniform on the sphere, each label uniform on `0..k`.
    pub fn new(
        scalars: Vec<ScalarMeasure>,
        vectors: usize,
        label_cardinalities: Vec<u32>,
    ) -> Result<Self, ModelError> {
        for m in &scalars {
            m.validate()?;
        }
        if label_cardinalities.contains(&0) {
            return Err(ModelError::InvalidParameter(
                "label cardinality must be >= 1".into(),
            ));
        }
        Ok(LambdaSpace {
            scalars,
            vectors,
            label_cardinalities,
            quadrature: None,
        })
    }

    /// Attaches the product quadrature if it fits in `config.max_points`.
    pub fn with_quadrature(mut self, config: &QuadratureConfig) -> Self {
        self.quadrature = self.build_quadrature(config).map(Arc::new);
        self
    }

    pub fn without_quadrature(mut self) -> Self {
        self.quadrature = None;
        self
    }

    fn build_quadrature(&self, config: &QuadratureConfig) -> Option<Quadrature> {
        let scalar_rules: Vec<_> = self
            .scalars
            .iter()
            .map(|m| m.nodes(config.scalar_nodes))
            .collect();
        let grid_size = 2 * config.sphere_polar * config.sphere_polar;
        let mut size: usize = 1;
        for r in &scalar_rules {
            size = size.checked_mul(r.len())?;
        }
        for _ in 0..self.vectors {
            size = size.checked_mul(grid_size)?;
        }
        for k in &self.label_cardinalities {
            size = size.checked_mul(*k as usize)?;
        }
        if size > config.max_points {
            return None;
        }

        let mut points = vec![LambdaPoint::default()];
        let mut weights = vec![1.0];
        for rule in &scalar_rules {
            let mut np = Vec::with_capacity(points.len() * rule.len());
            let mut nw = Vec::with_capacity(points.len() * rule.len());
            for (p, w) in points.iter().zip(&weights) {
                for (v, vw) in rule {
                    let mut q = p.clone();
                    q.scalars.push(*v);
                    np.push(q);
                    nw.push(w * vw);
                }
            }
            points = np;
            weights = nw;
        }
        if self.vectors > 0 {
            let grid = SphereGrid::with_polar(config.sphere_polar);
            for _ in 0..self.vectors {
                let mut np = Vec::with_capacity(points.len() * grid.len());
                let mut nw = Vec::with_capacity(points.len() * grid.len());
                for (p, w) in points.iter().zip(&weights) {
                    for (u, uw) in grid.nodes().iter().zip(grid.weights()) {
                        let mut q = p.clone();
                        q.vectors.push(*u);
                        np.push(q);
                        nw.push(w * uw);
                    }
                }
                points = np;
                weights = nw;
            }
        }
        for &k in &self.label_cardinalities {
            let mut np = Vec::with_capacity(points.len() * k as usize);
            let mut nw = Vec::with_capacity(points.len() * k as usize);
            for (p, w) in points.iter().zip(&weights) {
                for l in 0..k {
                    let mut q = p.clone();
                    q.labels.push(l as i64);
                    np.push(q);
                    nw.push(w / k as f64);
                }
            }
            points = np;
            weights = nw;
        }
        Some(Quadrature { points, weights })
    }

    pub fn shape(&self) -> LambdaShape {
        LambdaShape {
            scalars: self.scalars.len(),
            vectors: self.vectors,
            labels: self.label_cardinalities.len(),
        }
    }

    pub fn scalar_measures(&self) -> &[ScalarMeasure] {
        &self.scalars
    }

    pub fn quadrature(&self) -> Option<&Quadrature> {
        self.quadrature.as_deref()
    }

    /// True when every component is discrete, so the quadrature is the
    /// measure itself rather than an approximation.
    pub fn is_discrete(&self) -> bool {
        self.vectors == 0
            && self
                .scalars
                .iter()
                .all(|m| matches!(m, ScalarMeasure::TwoPoint { .. }))
    }

    pub fn sample(&self, rng: &mut RandomStream) -> LambdaPoint {
        let mut p = LambdaPoint::default();
        for m in &self.scalars {
            p.scalars.push(m.sample(rng));
        }
        for _ in 0..self.vectors {
            p.vectors.push(rng.unit_vector());
        }
        for &k in &self.label_cardinalities {
            p.labels
                .push(((rng.uniform() * k as f64) as i64).min(k as i64 - 1));
        }
        p
    }

    /// A nearby point of the support, for local maximization.
    pub fn perturb(&self, p: &LambdaPoint, step: f64, rng: &mut RandomStream) -> LambdaPoint {
        let mut q = p.clone();
        for (v, m) in q.scalars.iter_mut().zip(&self.scalars) {
            *v = m.perturb(*v, step, rng);
        }
        for v in q.vectors.iter_mut() {
            *v = jitter(v, step, rng);
        }
        q
    }
}

pub(crate) fn jitter(v: &UnitVector, step: f64, rng: &mut RandomStream) -> UnitVector {
    let d = rng.unit_vector();
    UnitVector::normalize(
        v.x() + step * d.x(),
        v.y() + step * d.y(),
        v.z() + step * d.z(),
    )
    .unwrap_or(*v)
}

/// Declared Frobenius exponents: `C ∝ (1 + a·b)^plus (1 - a·b)^minus`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Exponents {
    pub plus: f64,
    pub minus: f64,
}

impl Exponents {
    pub fn symmetric(s: f64) -> Self {
        Exponents { plus: s, minus: s }
    }

    /// `(1 + x)^plus (1 - x)^minus`.
    pub fn prefactor(&self, x: f64) -> f64 {
        (1.0 + x).max(0.0).powf(self.plus) * (1.0 - x).max(0.0).powf(self.minus)
    }
}

/// λ-evaluator with settings-dependent work already done.
pub type BoundFn<'m> = Box<dyn Fn(&LambdaPoint) -> f64 + Send + Sync + 'm>;

/// Excess-correlation function `C(λ, a, b)`.
pub trait ExcessCorrelation: Send + Sync + fmt::Debug {
    fn eval(&self, lambda: &LambdaPoint, a: &UnitVector, b: &UnitVector) -> f64;

    /// Declared exponents, `None` for black-box functions.
    fn exponents(&self) -> Option<Exponents> {
        None
    }

    /// Fixes the settings. Implementations with expensive settings-dependent
    /// work (the recipe's inner average) override this.
    fn bind<'s>(&'s self, a: UnitVector, b: UnitVector) -> BoundFn<'s> {
        Box::new(move |l| self.eval(l, &a, &b))
    }
}

/// Rule that yields the joint table without going through `C`.
pub trait DirectRule: Send + Sync + fmt::Debug {
    /// `None` when λ sits on a measure-zero set where the rule is undefined.
    fn table(
        &self,
        lambda: &LambdaPoint,
        a: &UnitVector,
        b: &UnitVector,
    ) -> Option<ProbabilityTable>;
}

#[derive(Debug, Clone)]
pub enum ProbabilityRule {
    Canonical(Arc<dyn ExcessCorrelation>),
    Direct(Arc<dyn DirectRule>),
}

#[derive(Debug, Clone)]
pub struct HiddenVariableModel {
    name: String,
    space: LambdaSpace,
    rule: ProbabilityRule,
}

impl HiddenVariableModel {
    pub fn new(name: impl Into<String>, space: LambdaSpace, rule: ProbabilityRule) -> Self {
        HiddenVariableModel {
            name: name.into(),
            space,
            rule,
        }
    }

    pub fn canonical(
        name: impl Into<String>,
        space: LambdaSpace,
        c: impl ExcessCorrelation + 'static,
    ) -> Self {
        Self::new(name, space, ProbabilityRule::Canonical(Arc::new(c)))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn lambda_space(&self) -> &LambdaSpace {
        &self.space
    }

    pub fn rule(&self) -> &ProbabilityRule {
        &self.rule
    }

    pub fn is_canonical(&self) -> bool {
        matches!(self.rule, ProbabilityRule::Canonical(_))
    }

    pub fn exponents(&self) -> Option<Exponents> {
        match &self.rule {
            ProbabilityRule::Canonical(c) => c.exponents(),
            ProbabilityRule::Direct(_) => None,
        }
    }

    /// Replaces the λ measure, keeping the rule.
    pub fn with_lambda_space(mut self, space: LambdaSpace) -> Self {
        self.space = space;
        self
    }

    pub fn bind(&self, a: UnitVector, b: UnitVector) -> BoundModel<'_> {
        let x = dot(&a, &b);
        let kind = match &self.rule {
            ProbabilityRule::Canonical(c) => BoundKind::Canonical(c.bind(a, b)),
            ProbabilityRule::Direct(d) => BoundKind::Direct(d.as_ref()),
        };
        BoundModel { a, b, x, kind }
    }
}

enum BoundKind<'m> {
    Canonical(BoundFn<'m>),
    Direct(&'m dyn DirectRule),
}

/// A model at fixed settings `(a, b)`.
pub struct BoundModel<'m> {
    a: UnitVector,
    b: UnitVector,
    x: f64,
    kind: BoundKind<'m>,
}

impl BoundModel<'_> {
    pub fn a(&self) -> &UnitVector {
        &self.a
    }

    pub fn b(&self) -> &UnitVector {
        &self.b
    }

    /// `a·b`.
    pub fn inner(&self) -> f64 {
        self.x
    }

    /// Raw table, not checked for negativity.
    pub fn table(&self, lambda: &LambdaPoint) -> Option<ProbabilityTable> {
        match &self.kind {
            BoundKind::Canonical(c) => Some(ProbabilityTable::canonical(self.x, c(lambda))),
            BoundKind::Direct(d) => d.table(lambda, &self.a, &self.b),
        }
    }

    /// `C(λ, a, b)`; for direct models the equivalent `Corr(λ) + a·b`.
    pub fn excess(&self, lambda: &LambdaPoint) -> Option<f64> {
        match &self.kind {
            BoundKind::Canonical(c) => Some(c(lambda)),
            BoundKind::Direct(d) => d
                .table(lambda, &self.a, &self.b)
                .map(|t| t.correlator() + self.x),
        }
    }

    /// Fixed-λ spin-spin correlation `-a·b + C(λ, a, b)`.
    pub fn correlator(&self, lambda: &LambdaPoint) -> Option<f64> {
        match &self.kind {
            BoundKind::Canonical(c) => Some(-self.x + c(lambda)),
            BoundKind::Direct(d) => d.table(lambda, &self.a, &self.b).map(|t| t.correlator()),
        }
    }
}

/// Canonical table at λ, rejecting entries below `-1e-12`.
pub fn canonical_prob(
    model: &HiddenVariableModel,
    lambda: &LambdaPoint,
    a: &UnitVector,
    b: &UnitVector,
) -> Result<ProbabilityTable, ModelError> {
    let ProbabilityRule::Canonical(c) = model.rule() else {
        return Err(ModelError::NotCanonical);
    };
    let table = ProbabilityTable::canonical(dot(a, b), c.eval(lambda, a, b));
    let (sigma, tau, value) = table.min_cell();
    if value < -NEGATIVITY_TOLERANCE {
        return Err(ModelError::NegativeProbability {
            lambda: lambda.clone(),
            a: *a,
            b: *b,
            sigma,
            tau,
            value,
        });
    }
    Ok(table)
}

/// Fixed-λ correlator `-a·b + C(λ, a, b)` of a canonical model.
pub fn hv_correlator(
    model: &HiddenVariableModel,
    lambda: &LambdaPoint,
    a: &UnitVector,
    b: &UnitVector,
) -> Result<f64, ModelError> {
    match model.rule() {
        ProbabilityRule::Canonical(c) => Ok(-dot(a, b) + c.eval(lambda, a, b)),
        ProbabilityRule::Direct(_) => Err(ModelError::NotCanonical),
    }
}
