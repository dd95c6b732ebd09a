//! Monte Carlo experiments: correlators with error bars, CHSH and Malus-law
//! comparisons.

use std::fmt;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::geometry::{dot, RandomStream, UnitVector};
use crate::models::{HiddenVariableModel, LambdaPoint, Outcome, ProbabilityTable};
use crate::parallel::mc_accumulate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorMode {
    /// Average the fixed-λ correlator over sampled λ.
    #[default]
    Analytic,
    /// Sample λ, then an outcome pair, and average `σ τ`.
    Sampling,
    /// Average the fixed-λ correlator over the λ quadrature (no noise).
    Quadrature,
}

impl EstimatorMode {
    pub fn as_str(self) -> &'static str {
        match self {
            EstimatorMode::Analytic => "analytic",
            EstimatorMode::Sampling => "sampling",
            EstimatorMode::Quadrature => "quadrature",
        }
    }
}

impl fmt::Display for EstimatorMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for EstimatorMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "analytic" => Ok(EstimatorMode::Analytic),
            "sampling" => Ok(EstimatorMode::Sampling),
            "quadrature" => Ok(EstimatorMode::Quadrature),
            _ => Err(format!(
                "unknown mode '{s}' (expected analytic, sampling or quadrature)"
            )),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub model: HiddenVariableModel,
    pub settings: Vec<(UnitVector, UnitVector)>,
    pub shots: usize,
    pub seed: u64,
    pub mode: EstimatorMode,
}

impl ExperimentConfig {
    pub fn new(
        model: HiddenVariableModel,
        settings: Vec<(UnitVector, UnitVector)>,
        shots: usize,
        seed: u64,
        mode: EstimatorMode,
    ) -> Result<Self, ModelError> {
        if shots == 0 {
            return Err(ModelError::InvalidParameter(
                "shots must be at least 1".into(),
            ));
        }
        Ok(ExperimentConfig {
            model,
            settings,
            shots,
            seed,
            mode,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationEstimate {
    pub a: UnitVector,
    pub b: UnitVector,
    pub e_est: f64,
    pub stderr: f64,
    pub e_qm: f64,
    /// λ draws (analytic), shots (sampling) or quadrature nodes.
    pub n_shots: u64,
    /// Mode actually used; quadrature falls back to analytic when the model
    /// has no λ quadrature.
    pub mode: EstimatorMode,
    pub seed: u64,
}

/// Draws `(σ, τ)` with probability `p[σ][τ]`.
pub fn sample_outcome(table: &ProbabilityTable, rng: &mut RandomStream) -> (Outcome, Outcome) {
    let u = rng.uniform();
    let mut acc = 0.0;
    let mut last = None;
    for (s, t, p) in table.cells() {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = Some((s, t));
        if u < acc {
            return (s, t);
        }
    }
    // rounding left u above the running sum: take the last possible cell
    last.unwrap_or((Outcome::Plus, Outcome::Minus))
}

/// A λ away from the measure-zero set where a direct rule is undefined.
fn draw_defined(
    model: &HiddenVariableModel,
    bound: &crate::models::BoundModel<'_>,
    rng: &mut RandomStream,
) -> (LambdaPoint, ProbabilityTable) {
    loop {
        let l = model.lambda_space().sample(rng);
        if let Some(t) = bound.table(&l) {
            return (l, t);
        }
    }
}

/// Correlator at settings pair `pair`. Shot chunk `k` draws from
/// `RandomStream::new(seed, pair).derive(k)`.
pub fn estimate_correlation(config: &ExperimentConfig, pair: usize) -> CorrelationEstimate {
    let (a, b) = config.settings[pair];
    let model = &config.model;
    let bound = model.bind(a, b);
    let base = RandomStream::new(config.seed, pair as u64);
    let mut mode = config.mode;
    if mode == EstimatorMode::Quadrature {
        if let Some(q) = model.lambda_space().quadrature() {
            let e = q.integrate(|l| bound.correlator(l).unwrap_or(0.0));
            return CorrelationEstimate {
                a,
                b,
                e_est: e,
                stderr: 0.0,
                e_qm: -dot(&a, &b),
                n_shots: q.len() as u64,
                mode,
                seed: config.seed,
            };
        }
        mode = EstimatorMode::Analytic;
    }
    let [acc] = match mode {
        EstimatorMode::Sampling => mc_accumulate::<1, _>(config.shots, &base, |r| {
            let (_, t) = draw_defined(model, &bound, r);
            let (s, u) = sample_outcome(&t, r);
            [s.value() * u.value()]
        }),
        _ => mc_accumulate::<1, _>(config.shots, &base, |r| {
            let (_, t) = draw_defined(model, &bound, r);
            [t.correlator()]
        }),
    };
    CorrelationEstimate {
        a,
        b,
        e_est: acc.mean(),
        stderr: acc.stderr(),
        e_qm: -dot(&a, &b),
        n_shots: acc.n,
        mode,
        seed: config.seed,
    }
}

pub fn estimate_all(config: &ExperimentConfig) -> Vec<CorrelationEstimate> {
    (0..config.settings.len())
        .map(|k| estimate_correlation(config, k))
        .collect()
}

/// `n` independent uniformly random settings pairs.
pub fn random_settings(n: usize, seed: u64) -> Vec<(UnitVector, UnitVector)> {
    let mut rng = RandomStream::new(seed, u64::MAX);
    (0..n)
        .map(|_| (rng.unit_vector(), rng.unit_vector()))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChshSettings {
    pub a0: UnitVector,
    pub a1: UnitVector,
    pub b0: UnitVector,
    pub b1: UnitVector,
}

impl ChshSettings {
    /// Coplanar settings at 45° steps, where the singlet reaches `2√2`.
    pub fn optimal() -> Self {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        ChshSettings {
            a0: UnitVector::Z,
            a1: UnitVector::X,
            b0: UnitVector::normalize(r, 0.0, r).expect("nonzero"),
            b1: UnitVector::normalize(-r, 0.0, r).expect("nonzero"),
        }
    }

    /// `(a0,b0), (a0,b1), (a1,b0), (a1,b1)`.
    pub fn pairs(&self) -> Vec<(UnitVector, UnitVector)> {
        vec![
            (self.a0, self.b0),
            (self.a0, self.b1),
            (self.a1, self.b0),
            (self.a1, self.b1),
        ]
    }

    fn from_pairs(p: &[(UnitVector, UnitVector)]) -> Option<Self> {
        if p.len() != 4
            || p[0].0 != p[1].0
            || p[2].0 != p[3].0
            || p[0].1 != p[2].1
            || p[1].1 != p[3].1
        {
            return None;
        }
        Some(ChshSettings {
            a0: p[0].0,
            a1: p[2].0,
            b0: p[0].1,
            b1: p[1].1,
        })
    }
}

/// `|E00 + E01 + E10 - E11|`.
pub fn chsh_value(e: [f64; 4]) -> f64 {
    (e[0] + e[1] + e[2] - e[3]).abs()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChshResult {
    pub settings: ChshSettings,
    pub correlators: [CorrelationEstimate; 4],
    pub s: f64,
    pub stderr: f64,
    pub s_qm: f64,
}

/// CHSH from a config whose settings are [`ChshSettings::pairs`].
pub fn chsh(config: &ExperimentConfig) -> Result<ChshResult, ModelError> {
    let settings = ChshSettings::from_pairs(&config.settings).ok_or_else(|| {
        ModelError::InvalidParameter("CHSH needs pairs (a0,b0), (a0,b1), (a1,b0), (a1,b1)".into())
    })?;
    let est = estimate_all(config);
    let correlators: [CorrelationEstimate; 4] = est.try_into().expect("four pairs");
    let e = [0, 1, 2, 3].map(|k| correlators[k].e_est);
    let q = [0, 1, 2, 3].map(|k| correlators[k].e_qm);
    let stderr = correlators
        .iter()
        .map(|c| c.stderr * c.stderr)
        .sum::<f64>()
        .sqrt();
    Ok(ChshResult {
        settings,
        s: chsh_value(e),
        stderr,
        s_qm: chsh_value(q),
        correlators,
    })
}

/// CHSH value at a single λ, from the fixed-λ correlators.
pub fn hv_chsh(
    model: &HiddenVariableModel,
    lambda: &LambdaPoint,
    settings: &ChshSettings,
) -> Option<f64> {
    let mut e = [0.0; 4];
    for (v, (a, b)) in e.iter_mut().zip(settings.pairs()) {
        *v = model.bind(a, b).correlator(lambda)?;
    }
    Some(chsh_value(e))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HvChshWitness {
    pub lambda: LambdaPoint,
    pub settings: ChshSettings,
    pub s: f64,
}

/// Largest fixed-λ CHSH value over the optimal preset and `n_trials`
/// random coplanar quadruples, each paired with quadrature nodes or
/// sampled λ.
pub fn find_hv_chsh_witness(
    model: &HiddenVariableModel,
    n_trials: usize,
    rng: &mut RandomStream,
) -> Option<HvChshWitness> {
    let lambdas: Vec<LambdaPoint> = match model.lambda_space().quadrature() {
        Some(q) if model.lambda_space().is_discrete() => q.points.clone(),
        _ => (0..64).map(|_| model.lambda_space().sample(rng)).collect(),
    };
    let mut candidates = vec![ChshSettings::optimal()];
    for _ in 0..n_trials {
        let a0 = rng.unit_vector();
        let e = a0.any_orthogonal();
        let at = |t: f64| a0.at_inner_product(&e, t.cos());
        let th = [0.0, 1.0, 2.0].map(|_| rng.uniform() * std::f64::consts::PI);
        candidates.push(ChshSettings {
            a0,
            a1: at(th[0]),
            b0: at(th[1]),
            b1: at(th[2]),
        });
    }
    let mut best: Option<HvChshWitness> = None;
    for settings in candidates {
        for l in &lambdas {
            let Some(s) = hv_chsh(model, l, &settings) else {
                continue;
            };
            if best.as_ref().is_none_or(|b| s > b.s) {
                best = Some(HvChshWitness {
                    lambda: l.clone(),
                    settings,
                    s,
                });
            }
        }
    }
    best
}

/// `(1 + σ a·u)/2`.
pub fn malus_marginal(u: &UnitVector, sigma: Outcome, a: &UnitVector) -> f64 {
    (1.0 + sigma.value() * dot(a, u)) / 2.0
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MalusReport {
    pub applicable: bool,
    pub max_gap: f64,
    pub witness: Option<(LambdaPoint, UnitVector, Outcome)>,
    pub samples_used: u64,
}

/// Largest gap between the model's λ-level marginal of the first wing and
/// the Malus-law marginal built from the first vector in λ.
pub fn malus_compliance_report(
    model: &HiddenVariableModel,
    n_lambda: usize,
    rng: &mut RandomStream,
) -> MalusReport {
    if model.lambda_space().shape().vectors == 0 {
        return MalusReport {
            applicable: false,
            max_gap: 0.0,
            witness: None,
            samples_used: 0,
        };
    }
    let mut best = MalusReport {
        applicable: true,
        max_gap: 0.0,
        witness: None,
        samples_used: 0,
    };
    for _ in 0..n_lambda {
        let a = rng.unit_vector();
        let b = rng.unit_vector();
        let bound = model.bind(a, b);
        let (l, t) = draw_defined(model, &bound, rng);
        best.samples_used += 1;
        for s in Outcome::ALL {
            let gap = (t.marginal_first(s) - malus_marginal(&l.vectors[0], s, &a)).abs();
            if gap > best.max_gap {
                best.max_gap = gap;
                best.witness = Some((l.clone(), a, s));
            }
        }
    }
    best
}

pub const CSV_HEADER: &str = "ax,ay,az,bx,by,bz,E_est,stderr,E_qm,n_shots,mode,seed";

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// Header, one row per estimate and an optional CHSH summary row.
pub fn write_csv<W: Write>(
    mut w: W,
    rows: &[CorrelationEstimate],
    chsh: Option<&ChshResult>,
) -> io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in rows {
        let [ax, ay, az] = r.a.components();
        let [bx, by, bz] = r.b.components();
        let cols = [ax, ay, az, bx, by, bz, r.e_est, r.stderr, r.e_qm].map(num);
        writeln!(w, "{},{},{},{}", cols.join(","), r.n_shots, r.mode, r.seed)?;
    }
    if let Some(c) = chsh {
        let shots: u64 = c.correlators.iter().map(|e| e.n_shots).sum();
        let first = &c.correlators[0];
        writeln!(
            w,
            "CHSH,,,,,,{},{},{},{},{},{}",
            num(c.s),
            num(c.stderr),
            num(c.s_qm),
            shots,
            first.mode,
            first.seed
        )?;
    }
    Ok(())
}
