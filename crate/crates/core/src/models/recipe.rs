//! Constructive recipe: turn any bounded `f(λ, a, b)` into an admissible
//! excess correlation `C = (1 - (a·b)²)^s · k · (f - ⟨f⟩_λ)`.

use std::fmt;
use std::sync::Arc;

use crate::error::ModelError;
use crate::geometry::{dot, RandomStream, UnitVector};
use crate::parallel::{map_chunks, MeanAccumulator};

use super::{
    jitter, BoundFn, ExcessCorrelation, Exponents, HiddenVariableModel, LambdaPoint, LambdaSpace,
};

pub type RecipeFn = Arc<dyn Fn(&LambdaPoint, &UnitVector, &UnitVector) -> f64 + Send + Sync>;

/// Samples used for `⟨f⟩_λ` when the λ space has no quadrature.
pub const MEAN_MC_SAMPLES: usize = 1_000_000;

/// Safety factor applied when the estimated extremes exceed the bound.
pub const SAFETY_FACTOR: f64 = 0.99;

/// Largest admissible `|g|` for symmetric exponent `s >= 1`:
/// `(s - 1/2)^(2s-1) / (s^s (s-1)^(s-1))`, with `0^0 = 1` at `s = 1`.
pub fn recipe_bound(s: f64) -> Result<f64, ModelError> {
    if !(s.is_finite() && s >= 1.0) {
        return Err(ModelError::InvalidParameter(format!(
            "recipe exponent s must be >= 1, got {s}"
        )));
    }
    // powf(0, 0) == 1 covers s = 1
    Ok((s - 0.5).powf(2.0 * s - 1.0) / (s.powf(s) * (s - 1.0).powf(s - 1.0)))
}

#[derive(Clone)]
pub struct RecipeInput {
    pub name: String,
    pub f: RecipeFn,
    /// Declared bound on `|f|`.
    pub f_bound: f64,
    pub s: f64,
    pub space: LambdaSpace,
}

impl fmt::Debug for RecipeInput {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RecipeInput")
            .field("name", &self.name)
            .field("f_bound", &self.f_bound)
            .field("s", &self.s)
            .finish_non_exhaustive()
    }
}

/// Dense random search over `(λ, a, b)` followed by hill climbing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupSearch {
    pub n_settings: usize,
    pub n_lambda: usize,
    pub refine_iters: usize,
}

impl Default for SupSearch {
    fn default() -> Self {
        SupSearch {
            n_settings: 1000,
            n_lambda: 1000,
            refine_iters: 400,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecipeSummary {
    /// Estimated `sup g` before scaling.
    pub sup_g: f64,
    /// Estimated `inf g` before scaling.
    pub inf_g: f64,
    pub bound: f64,
    /// Multiplier applied to `g` (1 when already within the bound).
    pub scale: f64,
}

struct RecipeExcess {
    f: RecipeFn,
    s: f64,
    scale: f64,
    space: LambdaSpace,
    mean_seed: u64,
}

impl fmt::Debug for RecipeExcess {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RecipeExcess")
            .field("s", &self.s)
            .field("scale", &self.scale)
            .finish()
    }
}

impl RecipeExcess {
    fn unscaled(&self) -> RecipeExcess {
        RecipeExcess {
            f: self.f.clone(),
            s: self.s,
            scale: 1.0,
            space: self.space.clone(),
            mean_seed: self.mean_seed,
        }
    }

    /// `g(·, a, b) = f(·, a, b) - ⟨f(·, a, b)⟩`.
    fn bind_g(
        &self,
        a: UnitVector,
        b: UnitVector,
    ) -> impl Fn(&LambdaPoint) -> f64 + Send + Sync + '_ {
        let mean = mean_f(&self.f, &self.space, &a, &b, self.mean_seed);
        move |l: &LambdaPoint| (self.f)(l, &a, &b) - mean
    }
}

fn mean_f(f: &RecipeFn, space: &LambdaSpace, a: &UnitVector, b: &UnitVector, seed: u64) -> f64 {
    match space.quadrature() {
        Some(q) => q.integrate(|l| f(l, a, b)),
        None => {
            // fixed stream so the same settings always give the same mean
            let mut rng = RandomStream::new(seed, 0x6d65_616e);
            let mut acc = MeanAccumulator::default();
            for _ in 0..MEAN_MC_SAMPLES {
                acc.push(f(&space.sample(&mut rng), a, b));
            }
            acc.mean()
        }
    }
}

impl ExcessCorrelation for RecipeExcess {
    fn eval(&self, l: &LambdaPoint, a: &UnitVector, b: &UnitVector) -> f64 {
        self.bind(*a, *b)(l)
    }

    fn exponents(&self) -> Option<Exponents> {
        Some(Exponents::symmetric(self.s))
    }

    fn bind<'s>(&'s self, a: UnitVector, b: UnitVector) -> BoundFn<'s> {
        let x = dot(&a, &b);
        let pre = (1.0 - x * x).max(0.0).powf(self.s) * self.scale;
        let g = self.bind_g(a, b);
        Box::new(move |l| pre * g(l))
    }
}

fn check_input(input: &RecipeInput) -> Result<f64, ModelError> {
    let bound = recipe_bound(input.s)?;
    if !(input.f_bound.is_finite() && input.f_bound > 0.0) {
        return Err(ModelError::InvalidParameter(format!(
            "declared bound on |f| must be positive and finite, got {}",
            input.f_bound
        )));
    }
    Ok(bound)
}

fn excess_for(input: &RecipeInput, scale: f64, seed: u64) -> RecipeExcess {
    RecipeExcess {
        f: input.f.clone(),
        s: input.s,
        scale,
        space: input.space.clone(),
        mean_seed: seed,
    }
}

/// Rebuilds a recipe model with a previously recorded scale factor.
pub fn recipe_model_with_scale(
    input: &RecipeInput,
    scale: f64,
    seed: u64,
) -> Result<HiddenVariableModel, ModelError> {
    check_input(input)?;
    if !(scale.is_finite() && scale > 0.0) {
        return Err(ModelError::InvalidParameter(format!(
            "recipe scale must be positive, got {scale}"
        )));
    }
    Ok(HiddenVariableModel::canonical(
        format!("recipe:{}", input.name),
        input.space.clone(),
        excess_for(input, scale, seed),
    ))
}

#[derive(Debug, Clone)]
struct Extreme {
    value: f64,
    lambda: LambdaPoint,
    a: UnitVector,
    b: UnitVector,
}

/// Builds the zero-mean `g`, estimates its extremes, rescales it into the
/// admissible band when needed and returns the canonical model.
pub fn build_recipe_model(
    input: &RecipeInput,
    search: &SupSearch,
    rng: &RandomStream,
) -> Result<(HiddenVariableModel, RecipeSummary), ModelError> {
    let bound = check_input(input)?;
    let probe = excess_for(input, 1.0, rng.seed());

    // dense scan: one chunk per settings pair
    let partials = map_chunks(
        search.n_settings,
        1,
        |k, _| -> Result<(Extreme, Extreme), ModelError> {
            let mut r = rng.derive(k as u64);
            let a = r.unit_vector();
            let b = match k % 10 {
                0 => a,
                1 => -a,
                _ => r.unit_vector(),
            };
            let mean = mean_f(&input.f, &input.space, &a, &b, rng.seed());
            if !mean.is_finite() {
                return Err(ModelError::DivergentMean);
            }
            let mut hi = Extreme {
                value: f64::NEG_INFINITY,
                lambda: LambdaPoint::default(),
                a,
                b,
            };
            let mut lo = Extreme {
                value: f64::INFINITY,
                lambda: LambdaPoint::default(),
                a,
                b,
            };
            for _ in 0..search.n_lambda {
                let l = input.space.sample(&mut r);
                let fv = (input.f)(&l, &a, &b);
                if !fv.is_finite() || fv.abs() > input.f_bound {
                    return Err(ModelError::Unbounded {
                        value: fv,
                        bound: input.f_bound,
                    });
                }
                let g = fv - mean;
                if g > hi.value {
                    hi = Extreme {
                        value: g,
                        lambda: l.clone(),
                        a,
                        b,
                    };
                }
                if g < lo.value {
                    lo = Extreme {
                        value: g,
                        lambda: l,
                        a,
                        b,
                    };
                }
            }
            Ok((hi, lo))
        },
    );

    let mut best_hi: Option<Extreme> = None;
    let mut best_lo: Option<Extreme> = None;
    for p in partials {
        let (hi, lo) = p?;
        if best_hi.as_ref().is_none_or(|b| hi.value > b.value) {
            best_hi = Some(hi);
        }
        if best_lo.as_ref().is_none_or(|b| lo.value < b.value) {
            best_lo = Some(lo);
        }
    }
    let (Some(hi), Some(lo)) = (best_hi, best_lo) else {
        return Err(ModelError::InvalidParameter(
            "sup search needs at least one sample".into(),
        ));
    };

    let mut refine_rng = rng.derive(u64::MAX);
    let sup_g = refine(&probe, input, hi, 1.0, search.refine_iters, &mut refine_rng)?;
    let inf_g = -refine(
        &probe,
        input,
        lo,
        -1.0,
        search.refine_iters,
        &mut refine_rng,
    )?;

    let extent = sup_g.abs().max(inf_g.abs());
    let scale = if extent > bound {
        SAFETY_FACTOR * bound / extent
    } else {
        1.0
    };
    let summary = RecipeSummary {
        sup_g,
        inf_g,
        bound,
        scale,
    };
    let model = HiddenVariableModel::canonical(
        format!("recipe:{}", input.name),
        input.space.clone(),
        excess_for(input, scale, rng.seed()),
    );
    Ok((model, summary))
}

/// Hill climbing on `direction · g`; returns the best value of `direction · g`.
fn refine(
    probe: &RecipeExcess,
    input: &RecipeInput,
    start: Extreme,
    direction: f64,
    iters: usize,
    rng: &mut RandomStream,
) -> Result<f64, ModelError> {
    let g0 = probe.unscaled();
    let mut best = start;
    let mut best_val = direction * best.value;
    let mut step = 0.1;
    for it in 0..iters {
        let move_settings = it % 3 == 2;
        let (a, b) = if move_settings {
            let a = jitter(&best.a, step, rng);
            // keep coincident/opposite pairs on their manifold
            let b = if best.b == best.a {
                a
            } else if best.b == -best.a {
                -a
            } else {
                jitter(&best.b, step, rng)
            };
            (a, b)
        } else {
            (best.a, best.b)
        };
        let lambda = input.space.perturb(&best.lambda, step, rng);
        let fv = (input.f)(&lambda, &a, &b);
        if !fv.is_finite() || fv.abs() > input.f_bound {
            return Err(ModelError::Unbounded {
                value: fv,
                bound: input.f_bound,
            });
        }
        let g = g0.bind_g(a, b)(&lambda);
        if direction * g > best_val {
            best_val = direction * g;
            best = Extreme {
                value: g,
                lambda,
                a,
                b,
            };
        } else if it % 20 == 19 {
            step = (step * 0.7).max(1e-6);
        }
    }
    Ok(best_val)
}
