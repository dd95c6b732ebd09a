//! Numerical certification of the admissibility constraints.
//!
//! Every check returns a [`ConstraintReport`] carrying its tolerance, the
//! extremal value it found and, on failure, a concrete witness
//! `(λ, a, b, σ, τ, value)`. Checks draw randomness only from the stream they
//! are handed, and parallel work is reduced in a fixed order, so reports are
//! identical for any thread count.

use std::borrow::Cow;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::ModelError;
use crate::geometry::{dot, RandomStream, UnitVector};
use crate::models::{HiddenVariableModel, LambdaPoint, Outcome, ProbabilityTable};

mod frobenius;
mod scans;

pub use frobenius::{
    check_endpoint_g, check_expansion, check_exponent_bound, estimate_exponents, ExponentEstimate,
    ExponentFitError, DEFAULT_EPSILONS,
};
pub use scans::{
    check_coincident_zero, check_marginal_triviality, check_positivity, check_qm_reproduction,
    check_zero_average, check_zero_average_pairs, scan_tables,
};

/// Algebraic identities.
pub const ALGEBRAIC_TOLERANCE: f64 = 1e-12;
/// Identities that hold exactly under quadrature.
pub const QUADRATURE_TOLERANCE: f64 = 1e-10;
/// QM reproduction under quadrature.
pub const QM_QUADRATURE_TOLERANCE: f64 = 1e-9;
/// Monte Carlo agreement, in standard errors.
pub const MC_SIGMAS: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConstraintId {
    Positivity,
    HalfBound,
    Normalization,
    MarginalTriviality,
    ZeroAverage,
    CoincidentZero,
    ExponentBound,
    EndpointGBound,
    Expansion,
    QmReproduction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    NotApplicable,
    Inconclusive,
    Fail,
}

/// Where a constraint attains its worst value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Witness {
    pub lambda: LambdaPoint,
    pub a: UnitVector,
    pub b: UnitVector,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<Outcome>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau: Option<Outcome>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstraintReport {
    #[serde(rename = "constraint-id")]
    pub constraint_id: ConstraintId,
    pub status: Status,
    pub extremal_value: f64,
    pub witness: Option<Witness>,
    pub tolerance: f64,
    pub samples_used: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl ConstraintReport {
    fn new(
        id: ConstraintId,
        status: Status,
        extremal_value: f64,
        tolerance: f64,
        samples_used: u64,
    ) -> Self {
        ConstraintReport {
            constraint_id: id,
            status,
            extremal_value,
            witness: None,
            tolerance,
            samples_used,
            note: None,
        }
    }

    fn not_applicable(id: ConstraintId, why: &str) -> Self {
        let mut r = ConstraintReport::new(id, Status::NotApplicable, 0.0, 0.0, 0);
        r.note = Some(why.to_string());
        r
    }

    fn with_witness(mut self, w: Option<Witness>) -> Self {
        self.witness = w;
        self
    }

    fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }

    pub fn passed(&self) -> bool {
        self.status == Status::Pass
    }
}

/// Overall verdict: the worst individual status, with not-applicable
/// counting as a pass.
pub fn overall_status(reports: &[ConstraintReport]) -> Status {
    reports
        .iter()
        .map(|r| {
            if r.status == Status::NotApplicable {
                Status::Pass
            } else {
                r.status
            }
        })
        .max()
        .unwrap_or(Status::Pass)
}

/// `Δ(σ, τ) = σ A + τ B + σ τ C`, the deviation of a table from QM.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DeltaDecomposition {
    /// Coefficient of σ (first-wing marginal shift).
    pub a_term: f64,
    /// Coefficient of τ (second-wing marginal shift).
    pub b_term: f64,
    /// Coefficient of στ (excess correlation).
    pub c_term: f64,
}

impl DeltaDecomposition {
    /// Rebuilds `P = (1 - στ a·b + Δ)/4` for inner product `x`.
    pub fn reconstruct(&self, x: f64) -> ProbabilityTable {
        let mut t = ProbabilityTable::from_entries([0.0; 4]);
        for s in Outcome::ALL {
            for u in Outcome::ALL {
                let (sv, tv) = (s.value(), u.value());
                let delta = sv * self.a_term + tv * self.b_term + sv * tv * self.c_term;
                t.set(s, u, (1.0 - sv * tv * x + delta) / 4.0);
            }
        }
        t
    }
}

/// Splits a normalized table into marginal and correlation deviations.
pub fn decompose_delta(
    table: &ProbabilityTable,
    a: &UnitVector,
    b: &UnitVector,
) -> Result<DeltaDecomposition, ModelError> {
    let sum = table.sum();
    if (sum - 1.0).abs() > QUADRATURE_TOLERANCE {
        return Err(ModelError::NotNormalized(sum));
    }
    let x = dot(a, b);
    let (mut sa, mut sb, mut sc) = (0.0, 0.0, 0.0);
    for (s, t, p) in table.cells() {
        let (sv, tv) = (s.value(), t.value());
        let delta = 4.0 * p - (1.0 - sv * tv * x);
        sa += sv * delta;
        sb += tv * delta;
        sc += sv * tv * delta;
    }
    Ok(DeltaDecomposition {
        a_term: sa / 4.0,
        b_term: sb / 4.0,
        c_term: sc / 4.0,
    })
}

/// How a λ-average is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntegrationMode {
    Quadrature,
    MonteCarlo { samples: usize },
}

/// Sizes of the scans in [`run_full_suite`].
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteConfig {
    pub n_lambda: usize,
    pub n_settings: usize,
    pub n_coincident: usize,
    /// Setting pairs for zero-average and QM reproduction.
    pub n_pairs: usize,
    pub mc_samples: usize,
    pub epsilons: Vec<f64>,
    pub n_rays: usize,
    /// Use the λ quadrature whenever the model has one.
    pub prefer_quadrature: bool,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            n_lambda: 1000,
            n_settings: 1000,
            n_coincident: 200,
            n_pairs: 20,
            mc_samples: 1_000_000,
            epsilons: DEFAULT_EPSILONS.to_vec(),
            n_rays: 4,
            prefer_quadrature: true,
        }
    }
}

impl SuiteConfig {
    fn mode_for(&self, model: &HiddenVariableModel) -> IntegrationMode {
        if self.prefer_quadrature && model.lambda_space().quadrature().is_some() {
            IntegrationMode::Quadrature
        } else {
            IntegrationMode::MonteCarlo {
                samples: self.mc_samples,
            }
        }
    }
}

/// Runs every check. Check `k` uses `rng.derive(k)`, so the result does not
/// depend on scheduling.
pub fn run_full_suite(
    model: &HiddenVariableModel,
    config: &SuiteConfig,
    rng: &RandomStream,
) -> Vec<ConstraintReport> {
    let mode = config.mode_for(model);
    let exponents = if model.is_canonical() {
        Some(estimate_exponents(
            model,
            config.n_rays,
            config.n_lambda,
            &mut rng.derive(4),
        ))
    } else {
        None
    };

    let jobs: Vec<u64> = (0..8).collect();
    let mut out: Vec<Vec<ConstraintReport>> = jobs
        .par_iter()
        .map(|&k| {
            let mut r = rng.derive(k);
            match k {
                0 => scan_tables(model, config.n_lambda, config.n_settings, &mut r, true).to_vec(),
                1 => vec![check_marginal_triviality(
                    model,
                    config.n_lambda,
                    config.n_settings,
                    &mut r,
                )],
                2 => vec![check_zero_average_pairs(
                    model,
                    config.n_pairs,
                    mode,
                    &mut r,
                )],
                3 => vec![check_coincident_zero(
                    model,
                    config.n_coincident,
                    config.n_lambda,
                    &mut r,
                )],
                4 => match &exponents {
                    Some(e) => vec![check_exponent_bound(e)],
                    None => vec![ConstraintReport::not_applicable(
                        ConstraintId::ExponentBound,
                        "direct-rule model has no excess-correlation function",
                    )],
                },
                5 => vec![check_endpoint_g(
                    model,
                    exponents.as_ref(),
                    config.n_rays,
                    config.n_lambda,
                    &mut r,
                )],
                6 => vec![check_expansion(
                    model,
                    exponents.as_ref(),
                    &config.epsilons,
                    config.n_rays,
                    config.n_lambda,
                    &mut r,
                )],
                7 => vec![check_qm_reproduction(model, config.n_pairs, mode, &mut r)],
                _ => unreachable!(),
            }
        })
        .collect();
    out.drain(..).flatten().collect()
}

/// λ points with weights: the quadrature when present, else `n` samples.
pub(crate) struct LambdaSet<'m> {
    pub points: Cow<'m, [LambdaPoint]>,
    pub weights: Cow<'m, [f64]>,
}

impl<'m> LambdaSet<'m> {
    pub fn for_model(
        model: &'m HiddenVariableModel,
        n: usize,
        rng: &mut RandomStream,
        use_quadrature: bool,
    ) -> Self {
        match model.lambda_space().quadrature() {
            Some(q) if use_quadrature => LambdaSet {
                points: Cow::Borrowed(&q.points),
                weights: Cow::Borrowed(&q.weights),
            },
            _ => {
                let points: Vec<_> = (0..n).map(|_| model.lambda_space().sample(rng)).collect();
                let w = 1.0 / n as f64;
                LambdaSet {
                    points: Cow::Owned(points),
                    weights: Cow::Owned(vec![w; n]),
                }
            }
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }
}

/// Random direction orthogonal to `a`.
pub(crate) fn random_orthogonal(a: &UnitVector, rng: &mut RandomStream) -> UnitVector {
    loop {
        let d = rng.unit_vector();
        let p = dot(a, &d);
        if let Ok(e) =
            UnitVector::normalize(d.x() - p * a.x(), d.y() - p * a.y(), d.z() - p * a.z())
        {
            if (1.0 - p * p) > 1e-6 {
                return e;
            }
        }
    }
}
