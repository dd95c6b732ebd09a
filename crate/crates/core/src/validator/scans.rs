//! Table-level scans over random settings and hidden variables.

use crate::geometry::{dot, RandomStream, UnitVector};
use crate::models::{
    HiddenVariableModel, LambdaPoint, Outcome, ProbabilityTable, NEGATIVITY_TOLERANCE,
};
use crate::parallel::{map_chunks, mc_accumulate, MeanAccumulator};

use super::{
    random_orthogonal, ConstraintId, ConstraintReport, IntegrationMode, LambdaSet, Status, Witness,
    ALGEBRAIC_TOLERANCE, MC_SIGMAS, QM_QUADRATURE_TOLERANCE, QUADRATURE_TOLERANCE,
};

/// MC mode gives up when the standard error exceeds this.
pub const MAX_MC_STDERR: f64 = 1e-2;

const SETTINGS_PER_CHUNK: usize = 8;

/// Random settings pair. With `focus`, every other pair has `|a·b|` within
/// `1e-2` of 1, half of those log-uniform down to `1e-9`.
fn draw_settings(rng: &mut RandomStream, focus: bool, k: usize) -> (UnitVector, UnitVector) {
    let a = rng.unit_vector();
    if !focus || k % 2 == 0 {
        return (a, rng.unit_vector());
    }
    let eps = if k % 4 == 1 {
        1e-2 * rng.uniform()
    } else {
        10f64.powf(-9.0 + 7.0 * rng.uniform())
    };
    let sign = if rng.uniform() < 0.5 { 1.0 } else { -1.0 };
    let e = random_orthogonal(&a, rng);
    (a, a.at_inner_product(&e, sign * (1.0 - eps)))
}

#[derive(Debug, Clone)]
struct Extreme {
    value: f64,
    witness: Option<Witness>,
}

impl Extreme {
    fn lowest() -> Self {
        Extreme {
            value: f64::INFINITY,
            witness: None,
        }
    }

    fn highest() -> Self {
        Extreme {
            value: f64::NEG_INFINITY,
            witness: None,
        }
    }
}

#[derive(Debug, Clone)]
struct TableStats {
    min_entry: Extreme,
    max_entry: Extreme,
    norm_dev: Extreme,
    marginal_dev: Extreme,
    samples: u64,
}

impl TableStats {
    fn new() -> Self {
        TableStats {
            min_entry: Extreme::lowest(),
            max_entry: Extreme::highest(),
            norm_dev: Extreme::highest(),
            marginal_dev: Extreme::highest(),
            samples: 0,
        }
    }

    fn observe(&mut self, t: &ProbabilityTable, l: &LambdaPoint, a: &UnitVector, b: &UnitVector) {
        self.samples += 1;
        let wit = |s: Option<Outcome>, u: Option<Outcome>, v: f64| Witness {
            lambda: l.clone(),
            a: *a,
            b: *b,
            sigma: s,
            tau: u,
            value: v,
        };
        let (s, u, v) = t.min_cell();
        if v < self.min_entry.value {
            self.min_entry = Extreme {
                value: v,
                witness: Some(wit(Some(s), Some(u), v)),
            };
        }
        let (s, u, v) = t.max_cell();
        if v > self.max_entry.value {
            self.max_entry = Extreme {
                value: v,
                witness: Some(wit(Some(s), Some(u), v)),
            };
        }
        let nd = (t.sum() - 1.0).abs();
        if nd > self.norm_dev.value {
            self.norm_dev = Extreme {
                value: nd,
                witness: Some(wit(None, None, t.sum())),
            };
        }
        for o in Outcome::ALL {
            let d1 = (t.marginal_first(o) - 0.5).abs();
            if d1 > self.marginal_dev.value {
                self.marginal_dev = Extreme {
                    value: d1,
                    witness: Some(wit(Some(o), None, t.marginal_first(o))),
                };
            }
            let d2 = (t.marginal_second(o) - 0.5).abs();
            if d2 > self.marginal_dev.value {
                self.marginal_dev = Extreme {
                    value: d2,
                    witness: Some(wit(None, Some(o), t.marginal_second(o))),
                };
            }
        }
    }

    fn merge(&mut self, o: TableStats) {
        self.samples += o.samples;
        if o.min_entry.value < self.min_entry.value {
            self.min_entry = o.min_entry;
        }
        if o.max_entry.value > self.max_entry.value {
            self.max_entry = o.max_entry;
        }
        if o.norm_dev.value > self.norm_dev.value {
            self.norm_dev = o.norm_dev;
        }
        if o.marginal_dev.value > self.marginal_dev.value {
            self.marginal_dev = o.marginal_dev;
        }
    }
}

fn table_scan(
    model: &HiddenVariableModel,
    n_lambda: usize,
    n_settings: usize,
    rng: &mut RandomStream,
    focus: bool,
) -> TableStats {
    let base = rng.derive(0);
    let parts = map_chunks(n_settings, SETTINGS_PER_CHUNK, |_, range| {
        let mut stats = TableStats::new();
        for k in range {
            let mut r = base.derive(k as u64);
            let (a, b) = draw_settings(&mut r, focus, k);
            let bound = model.bind(a, b);
            for _ in 0..n_lambda {
                let l = model.lambda_space().sample(&mut r);
                if let Some(t) = bound.table(&l) {
                    stats.observe(&t, &l, &a, &b);
                }
            }
        }
        stats
    });
    let mut total = TableStats::new();
    for p in parts {
        total.merge(p);
    }
    total
}

fn status(ok: bool) -> Status {
    if ok {
        Status::Pass
    } else {
        Status::Fail
    }
}

/// Positivity, the `P <= 1/2` bound and normalization from one scan.
pub fn scan_tables(
    model: &HiddenVariableModel,
    n_lambda: usize,
    n_settings: usize,
    rng: &mut RandomStream,
    endpoint_focus: bool,
) -> [ConstraintReport; 3] {
    let s = table_scan(model, n_lambda, n_settings, rng, endpoint_focus);
    let positivity = ConstraintReport::new(
        ConstraintId::Positivity,
        status(s.min_entry.value >= -NEGATIVITY_TOLERANCE),
        s.min_entry.value,
        NEGATIVITY_TOLERANCE,
        s.samples,
    )
    .with_witness(s.min_entry.witness);
    let half = ConstraintReport::new(
        ConstraintId::HalfBound,
        status(s.max_entry.value <= 0.5 + ALGEBRAIC_TOLERANCE),
        s.max_entry.value,
        ALGEBRAIC_TOLERANCE,
        s.samples,
    )
    .with_witness(s.max_entry.witness);
    let norm = ConstraintReport::new(
        ConstraintId::Normalization,
        status(s.norm_dev.value <= ALGEBRAIC_TOLERANCE),
        s.norm_dev.value,
        ALGEBRAIC_TOLERANCE,
        s.samples,
    )
    .with_witness(s.norm_dev.witness);
    [positivity, half, norm]
}

/// Every table entry in `[-1e-12, 1/2 + 1e-12]`... the positivity half of it.
pub fn check_positivity(
    model: &HiddenVariableModel,
    n_lambda: usize,
    n_settings: usize,
    rng: &mut RandomStream,
    endpoint_focus: bool,
) -> ConstraintReport {
    let [p, _, _] = scan_tables(model, n_lambda, n_settings, rng, endpoint_focus);
    p
}

/// λ-level single-wing marginals equal 1/2.
pub fn check_marginal_triviality(
    model: &HiddenVariableModel,
    n_lambda: usize,
    n_settings: usize,
    rng: &mut RandomStream,
) -> ConstraintReport {
    let s = table_scan(model, n_lambda, n_settings, rng, false);
    ConstraintReport::new(
        ConstraintId::MarginalTriviality,
        status(s.marginal_dev.value < QUADRATURE_TOLERANCE),
        s.marginal_dev.value,
        QUADRATURE_TOLERANCE,
        s.samples,
    )
    .with_witness(s.marginal_dev.witness)
}

/// `C(λ, a, ±a) = 0`. Discrete measures are checked exactly at their atoms.
pub fn check_coincident_zero(
    model: &HiddenVariableModel,
    n_a: usize,
    n_lambda: usize,
    rng: &mut RandomStream,
) -> ConstraintReport {
    let discrete = model.lambda_space().is_discrete();
    let lambdas = LambdaSet::for_model(model, n_lambda, rng, discrete);
    let base = rng.derive(1);
    let parts = map_chunks(n_a, 1, |k, _| {
        let a = base.derive(k as u64).unit_vector();
        let mut worst = Extreme::highest();
        let mut n = 0u64;
        for b in [a, -a] {
            let bound = model.bind(a, b);
            for l in lambdas.points.iter() {
                let Some(c) = bound.excess(l) else { continue };
                n += 1;
                if c.abs() > worst.value {
                    worst = Extreme {
                        value: c.abs(),
                        witness: Some(Witness {
                            lambda: l.clone(),
                            a,
                            b,
                            sigma: None,
                            tau: None,
                            value: c,
                        }),
                    };
                }
            }
        }
        (worst, n)
    });
    let mut worst = Extreme::highest();
    let mut n = 0;
    for (w, k) in parts {
        n += k;
        if w.value > worst.value {
            worst = w;
        }
    }
    ConstraintReport::new(
        ConstraintId::CoincidentZero,
        status(worst.value < QUADRATURE_TOLERANCE),
        worst.value,
        QUADRATURE_TOLERANCE,
        n,
    )
    .with_witness(worst.witness)
}

struct PairOutcome {
    /// `|mean|` (quadrature) or `|mean| / stderr` (MC).
    score: f64,
    status: Status,
    samples: u64,
    a: UnitVector,
    b: UnitVector,
    value: f64,
    cell: Option<(Outcome, Outcome)>,
}

fn mc_excess(
    model: &HiddenVariableModel,
    a: &UnitVector,
    b: &UnitVector,
    samples: usize,
    rng: &RandomStream,
) -> MeanAccumulator {
    let bound = model.bind(*a, *b);
    let space = model.lambda_space();
    let [acc] = mc_accumulate::<1, _>(samples, rng, |r| loop {
        let l = space.sample(r);
        if let Some(c) = bound.excess(&l) {
            return [c];
        }
    });
    acc
}

fn zero_average_pair(
    model: &HiddenVariableModel,
    a: &UnitVector,
    b: &UnitVector,
    mode: IntegrationMode,
    rng: &mut RandomStream,
) -> PairOutcome {
    match (mode, model.lambda_space().quadrature()) {
        (IntegrationMode::Quadrature, Some(q)) => {
            let bound = model.bind(*a, *b);
            let mean = q.integrate(|l| bound.excess(l).unwrap_or(0.0));
            PairOutcome {
                score: mean.abs(),
                status: status(mean.abs() < QUADRATURE_TOLERANCE),
                samples: q.len() as u64,
                a: *a,
                b: *b,
                value: mean,
                cell: None,
            }
        }
        (mode, _) => {
            let samples = match mode {
                IntegrationMode::MonteCarlo { samples } => samples,
                IntegrationMode::Quadrature => 1_000_000,
            };
            let acc = mc_excess(model, a, b, samples, &rng.derive(0));
            let (mean, se) = (acc.mean(), acc.stderr());
            let (score, st) = if se > MAX_MC_STDERR {
                (f64::INFINITY, Status::Inconclusive)
            } else if se == 0.0 {
                let ok = mean.abs() < ALGEBRAIC_TOLERANCE;
                (if ok { 0.0 } else { f64::INFINITY }, status(ok))
            } else {
                let z = mean.abs() / se;
                (z, status(z < MC_SIGMAS))
            };
            PairOutcome {
                score,
                status: st,
                samples: acc.n,
                a: *a,
                b: *b,
                value: mean,
                cell: None,
            }
        }
    }
}

fn pair_report(
    id: ConstraintId,
    mode_used_quadrature: bool,
    tol_quad: f64,
    outcomes: Vec<PairOutcome>,
) -> ConstraintReport {
    let samples = outcomes.iter().map(|o| o.samples).sum();
    let st = outcomes
        .iter()
        .map(|o| o.status)
        .max()
        .unwrap_or(Status::Pass);
    let worst = outcomes
        .into_iter()
        .reduce(|w, o| if o.score > w.score { o } else { w });
    let tolerance = if mode_used_quadrature {
        tol_quad
    } else {
        MC_SIGMAS
    };
    let mut r = ConstraintReport::new(
        id,
        st,
        worst.as_ref().map_or(0.0, |w| w.score),
        tolerance,
        samples,
    );
    if let Some(w) = worst {
        r.witness = Some(Witness {
            lambda: LambdaPoint::default(),
            a: w.a,
            b: w.b,
            sigma: w.cell.map(|c| c.0),
            tau: w.cell.map(|c| c.1),
            value: w.value,
        });
    }
    r.note = Some(if mode_used_quadrature {
        "quadrature: extremal value is the largest absolute deviation".into()
    } else {
        "monte carlo: extremal value is the largest deviation in standard errors".into()
    });
    r
}

/// `∫ dμ(λ) C(λ, a, b) = 0` at one settings pair.
pub fn check_zero_average(
    model: &HiddenVariableModel,
    a: &UnitVector,
    b: &UnitVector,
    mode: IntegrationMode,
    rng: &mut RandomStream,
) -> ConstraintReport {
    let quad = mode == IntegrationMode::Quadrature && model.lambda_space().quadrature().is_some();
    let o = zero_average_pair(model, a, b, mode, rng);
    pair_report(
        ConstraintId::ZeroAverage,
        quad,
        QUADRATURE_TOLERANCE,
        vec![o],
    )
}

/// Zero average over `n_pairs` random settings pairs; reports the worst.
pub fn check_zero_average_pairs(
    model: &HiddenVariableModel,
    n_pairs: usize,
    mode: IntegrationMode,
    rng: &mut RandomStream,
) -> ConstraintReport {
    let quad = mode == IntegrationMode::Quadrature && model.lambda_space().quadrature().is_some();
    let outcomes = (0..n_pairs)
        .map(|k| {
            let mut r = rng.derive(k as u64);
            let (a, b) = (r.unit_vector(), r.unit_vector());
            zero_average_pair(model, &a, &b, mode, &mut r)
        })
        .collect();
    pair_report(
        ConstraintId::ZeroAverage,
        quad,
        QUADRATURE_TOLERANCE,
        outcomes,
    )
}

/// `∫ dμ(λ) P(σ, τ | λ, a, b)` against the singlet prediction for all four
/// cells at `n_settings` random pairs.
pub fn check_qm_reproduction(
    model: &HiddenVariableModel,
    n_settings: usize,
    mode: IntegrationMode,
    rng: &mut RandomStream,
) -> ConstraintReport {
    let quadrature = match mode {
        IntegrationMode::Quadrature => model.lambda_space().quadrature(),
        IntegrationMode::MonteCarlo { .. } => None,
    };
    let samples = match mode {
        IntegrationMode::MonteCarlo { samples } => samples,
        IntegrationMode::Quadrature => 1_000_000,
    };
    let outcomes = (0..n_settings)
        .map(|k| {
            let mut r = rng.derive(k as u64);
            let (a, b) = (r.unit_vector(), r.unit_vector());
            let qm = ProbabilityTable::qm(dot(&a, &b));
            let bound = model.bind(a, b);
            let cells: Vec<(Outcome, Outcome)> = qm.cells().map(|(s, t, _)| (s, t)).collect();
            let mut worst: Option<PairOutcome> = None;
            let mut push = |o: PairOutcome| {
                if worst
                    .as_ref()
                    .is_none_or(|w| o.score > w.score || o.status > w.status)
                {
                    worst = Some(o);
                }
            };
            match quadrature {
                Some(q) => {
                    let mut avg = [0.0; 4];
                    for (l, w) in q.points.iter().zip(&q.weights) {
                        if let Some(t) = bound.table(l) {
                            for (s, e) in avg.iter_mut().zip(t.entries()) {
                                *s += w * e;
                            }
                        }
                    }
                    for (i, &(s, t)) in cells.iter().enumerate() {
                        let dev = (avg[i] - qm.get(s, t)).abs();
                        push(PairOutcome {
                            score: dev,
                            status: status(dev < QM_QUADRATURE_TOLERANCE),
                            samples: q.len() as u64,
                            a,
                            b,
                            value: avg[i],
                            cell: Some((s, t)),
                        });
                    }
                }
                None => {
                    let space = model.lambda_space();
                    let acc = mc_accumulate::<4, _>(samples, &r.derive(0), |rr| loop {
                        let l = space.sample(rr);
                        if let Some(t) = bound.table(&l) {
                            return t.entries();
                        }
                    });
                    for (i, &(s, t)) in cells.iter().enumerate() {
                        let dev = (acc[i].mean() - qm.get(s, t)).abs();
                        let se = acc[i].stderr();
                        let (score, st) = if se == 0.0 {
                            let ok = dev < ALGEBRAIC_TOLERANCE;
                            (if ok { 0.0 } else { f64::INFINITY }, status(ok))
                        } else {
                            (dev / se, status(dev / se < MC_SIGMAS))
                        };
                        push(PairOutcome {
                            score,
                            status: st,
                            samples: acc[i].n,
                            a,
                            b,
                            value: acc[i].mean(),
                            cell: Some((s, t)),
                        });
                    }
                }
            }
            let mut w = worst.expect("four cells per pair");
            // count every cell's samples once per pair
            w.samples = match quadrature {
                Some(q) => q.len() as u64,
                None => samples as u64,
            };
            w
        })
        .collect();
    pair_report(
        ConstraintId::QmReproduction,
        quadrature.is_some(),
        QM_QUADRATURE_TOLERANCE,
        outcomes,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{
        cerf_model, family1_model, family2_model, wrongtrial_model, DirectRule, ProbabilityRule,
        QuadratureConfig, ScalarMeasure,
    };
    use std::sync::Arc;

    fn q() -> QuadratureConfig {
        QuadratureConfig::default()
    }

    #[test]
    fn family1_scans_pass() {
        let m = family1_model(ScalarMeasure::two_point(0.4), &q()).unwrap();
        let mut rng = RandomStream::new(1, 0);
        for r in scan_tables(&m, 200, 500, &mut rng, true) {
            assert_eq!(r.status, Status::Pass, "{r:?}");
        }
        let r = check_marginal_triviality(&m, 100, 200, &mut rng);
        assert_eq!(r.status, Status::Pass);
        assert!(r.extremal_value < 1e-15);
    }

    #[test]
    fn family2_positivity_passes() {
        let m = family2_model(ScalarMeasure::two_point(0.5), &q()).unwrap();
        let r = check_positivity(&m, 200, 500, &mut RandomStream::new(2, 0), true);
        assert_eq!(r.status, Status::Pass, "{r:?}");
    }

    #[test]
    fn wrongtrial_positivity_fails_near_coincidence() {
        let m = wrongtrial_model(ScalarMeasure::two_point(0.4), &q()).unwrap();
        let r = check_positivity(&m, 50, 200, &mut RandomStream::new(3, 0), true);
        assert_eq!(r.status, Status::Fail);
        let w = r.witness.unwrap();
        assert!(w.value < -1e-12);
        assert!(dot(&w.a, &w.b).abs() > 0.5);
    }

    #[test]
    fn wrongtrial_fails_in_narrow_endpoint_band() {
        // positivity scan restricted to a·b in [0.99, 1] with |g| = 0.4
        let m = wrongtrial_model(ScalarMeasure::two_point(0.4), &q()).unwrap();
        let mut rng = RandomStream::new(4, 0);
        let mut violations = 0;
        for _ in 0..1000 {
            let a = rng.unit_vector();
            let e = random_orthogonal(&a, &mut rng);
            let b = a.at_inner_product(&e, 0.99 + 0.01 * rng.uniform());
            let bound = m.bind(a, b);
            for g in [0.4, -0.4] {
                let t = bound.table(&LambdaPoint::scalar(g)).unwrap();
                if t.min_cell().2 < -NEGATIVITY_TOLERANCE {
                    violations += 1;
                }
            }
        }
        assert!(violations > 0);
    }

    #[derive(Debug)]
    struct Perturbed;

    impl DirectRule for Perturbed {
        fn table(
            &self,
            l: &LambdaPoint,
            a: &UnitVector,
            b: &UnitVector,
        ) -> Option<ProbabilityTable> {
            let mut t = ProbabilityTable::canonical(
                dot(a, b),
                crate::models::family1_c(l.scalars[0], a, b),
            );
            t.set(
                Outcome::Plus,
                Outcome::Plus,
                t.get(Outcome::Plus, Outcome::Plus) + 0.01,
            );
            t.set(
                Outcome::Minus,
                Outcome::Minus,
                t.get(Outcome::Minus, Outcome::Minus) - 0.01,
            );
            Some(t)
        }
    }

    #[test]
    fn perturbed_marginals_fail_with_witness() {
        let space = crate::models::LambdaSpace::new(vec![ScalarMeasure::two_point(0.2)], 0, vec![])
            .unwrap();
        let m = HiddenVariableModel::new(
            "perturbed",
            space,
            ProbabilityRule::Direct(Arc::new(Perturbed)),
        );
        let r = check_marginal_triviality(&m, 10, 10, &mut RandomStream::new(5, 0));
        assert_eq!(r.status, Status::Fail);
        assert!((r.extremal_value - 0.01).abs() < 1e-12);
        assert!(r.witness.is_some());
        // normalization is intact
        let [_, _, norm] = scan_tables(&m, 10, 10, &mut RandomStream::new(5, 0), false);
        assert_eq!(norm.status, Status::Pass);
    }

    #[test]
    fn cerf_marginals_pass() {
        let r = check_marginal_triviality(&cerf_model(), 100, 100, &mut RandomStream::new(6, 0));
        assert_eq!(r.status, Status::Pass);
        assert_eq!(r.extremal_value, 0.0);
    }

    #[test]
    fn zero_average_modes() {
        let a = UnitVector::Z;
        let b = UnitVector::normalize(0.2, 0.5, 0.7).unwrap();
        let mut rng = RandomStream::new(7, 0);
        let f1 = family1_model(ScalarMeasure::two_point(0.4), &q()).unwrap();
        let r = check_zero_average(&f1, &a, &b, IntegrationMode::Quadrature, &mut rng);
        assert_eq!(r.status, Status::Pass);
        assert_eq!(r.extremal_value, 0.0);

        let f2 = family2_model(ScalarMeasure::two_point(0.4), &q()).unwrap();
        let r = check_zero_average(
            &f2,
            &a,
            &b,
            IntegrationMode::MonteCarlo { samples: 1_000_000 },
            &mut rng,
        );
        assert_eq!(r.status, Status::Pass, "{r:?}");

        let skew = family1_model(
            ScalarMeasure::TwoPoint {
                gamma: 0.4,
                weight_plus: 0.6,
            },
            &q(),
        )
        .unwrap();
        let r = check_zero_average(&skew, &a, &b, IntegrationMode::Quadrature, &mut rng);
        assert_eq!(r.status, Status::Fail);
        let x = dot(&a, &b);
        assert!((r.witness.unwrap().value - 0.2 * 0.4 * (1.0 - x * x)).abs() < 1e-15);
    }

    #[test]
    fn coincident_zero_holds_for_all_builtins() {
        let mut rng = RandomStream::new(8, 0);
        for m in [
            family1_model(ScalarMeasure::two_point(0.4), &q()).unwrap(),
            family2_model(ScalarMeasure::uniform(0.5), &q()).unwrap(),
            wrongtrial_model(ScalarMeasure::two_point(0.4), &q()).unwrap(),
            cerf_model(),
        ] {
            let r = check_coincident_zero(&m, 50, 200, &mut rng);
            assert_eq!(r.status, Status::Pass, "{}: {r:?}", m.name());
        }
    }

    #[test]
    fn qm_reproduction_quadrature_and_failure() {
        let mut rng = RandomStream::new(9, 0);
        let f1 = family1_model(ScalarMeasure::two_point(0.4), &q()).unwrap();
        let r = check_qm_reproduction(&f1, 10, IntegrationMode::Quadrature, &mut rng);
        assert_eq!(r.status, Status::Pass);
        assert!(r.extremal_value < 1e-12);
        let skew = family1_model(
            ScalarMeasure::TwoPoint {
                gamma: 0.4,
                weight_plus: 0.6,
            },
            &q(),
        )
        .unwrap();
        let r = check_qm_reproduction(&skew, 10, IntegrationMode::Quadrature, &mut rng);
        assert_eq!(r.status, Status::Fail);
    }
}
