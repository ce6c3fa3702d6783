//! Sampling-based certificate checks: the barrier-chain feasibility
//! condition, least relative degree, and set containment. Sampling is a
//! desk-scale surrogate for the open-set quantifiers: a reported violation
//! is a sound counterexample; an empty report is evidence, not proof.

use nalgebra::DVector;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::chain::{BarrierChain, ConstraintProvider};
use crate::error::{Error, Result};
use crate::systems::SystemModel;

/// Row-norm threshold below which the constraint row counts as identically
/// zero (singular sample). Matches the filter's classification scale.
pub const SINGULAR_ROW_NORM: f64 = 1e-8;

/// Tolerance on a finite-difference Lie derivative that must vanish.
pub const LEAST_DEGREE_TOL: f64 = 1e-6;

const FD_STEP: f64 = 1e-5;

const HALTON_PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

/// How sample points are drawn from a box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SamplerKind {
    /// Pseudorandom uniform, seeded.
    #[default]
    Uniform,
    /// Low-discrepancy (Halton radical-inverse) sequence; the seed offsets
    /// the start index.
    Halton,
}

/// Axis-aligned sampling region with a deterministic point stream.
#[derive(Debug, Clone)]
pub struct SamplingBox {
    lower: DVector<f64>,
    upper: DVector<f64>,
    count: usize,
    seed: u64,
    sampler: SamplerKind,
}

impl SamplingBox {
    /// A degenerate box (lower = upper) is allowed and repeats the single
    /// point; a zero count yields a vacuous (empty) report downstream.
    pub fn new(
        lower: DVector<f64>,
        upper: DVector<f64>,
        count: usize,
        seed: u64,
        sampler: SamplerKind,
    ) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        if lower.is_empty() {
            return Err(Error::invalid("sampling box needs at least one dimension"));
        }
        if lower.iter().chain(upper.iter()).any(|v| !v.is_finite()) {
            return Err(Error::non_finite("sampling box bounds"));
        }
        if lower.iter().zip(upper.iter()).any(|(lo, hi)| lo > hi) {
            return Err(Error::invalid(
                "sampling box requires lower <= upper componentwise",
            ));
        }
        if sampler == SamplerKind::Halton && lower.len() > HALTON_PRIMES.len() {
            return Err(Error::invalid(format!(
                "low-discrepancy sampler supports up to {} dimensions",
                HALTON_PRIMES.len()
            )));
        }
        Ok(SamplingBox {
            lower,
            upper,
            count,
            seed,
            sampler,
        })
    }

    /// Single-point box: every sample is exactly `state`.
    pub fn degenerate(state: DVector<f64>, count: usize) -> Result<Self> {
        Self::new(state.clone(), state, count, 0, SamplerKind::Uniform)
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// The deterministic sample stream (same seed, same points).
    pub fn samples(&self) -> Vec<DVector<f64>> {
        let dim = self.dim();
        let span = &self.upper - &self.lower;
        match self.sampler {
            SamplerKind::Uniform => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                (0..self.count)
                    .map(|_| {
                        DVector::from_iterator(
                            dim,
                            (0..dim).map(|i| self.lower[i] + span[i] * rng.gen::<f64>()),
                        )
                    })
                    .collect()
            }
            SamplerKind::Halton => (0..self.count)
                .map(|k| {
                    let index = self.seed + 1 + k as u64;
                    DVector::from_iterator(
                        dim,
                        (0..dim).map(|i| {
                            self.lower[i] + span[i] * radical_inverse(index, HALTON_PRIMES[i])
                        }),
                    )
                })
                .collect(),
        }
    }
}

fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let inv_base = 1.0 / base as f64;
    let mut fraction = inv_base;
    let mut result = 0.0;
    while index > 0 {
        result += fraction * (index % base) as f64;
        index /= base;
        fraction *= inv_base;
    }
    result
}

/// One failed sample: the state, which quantity failed, and its value.
#[derive(Debug, Clone)]
pub struct Violation {
    pub state: DVector<f64>,
    pub quantity: String,
    pub value: f64,
}

/// Aggregate verdict of one certificate check. `min_slack` is the smallest
/// slack seen over the relevant samples (positive slack = satisfied with
/// margin); it is +inf when no sample was relevant.
#[derive(Debug, Clone)]
pub struct CertificateReport {
    pub checked: usize,
    pub violations: Vec<Violation>,
    pub min_slack: f64,
}

impl CertificateReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    fn from_slacks(
        checked: usize,
        slacks: Vec<(DVector<f64>, &'static str, f64)>,
    ) -> CertificateReport {
        let mut min_slack = f64::INFINITY;
        let mut violations = Vec::new();
        for (state, quantity, slack) in slacks {
            min_slack = min_slack.min(slack);
            if slack < 0.0 {
                violations.push(Violation {
                    state,
                    quantity: quantity.to_string(),
                    value: slack,
                });
            }
        }
        CertificateReport {
            checked,
            violations,
            min_slack,
        }
    }
}

/// Checks the chain condition sup_u psi_r(x, u) >= 0 with unbounded inputs:
/// whenever the input row is nonzero the supremum is +inf, so the only way
/// to fail is a (numerically) zero row with a negative offset.
pub fn check_hocbf_condition(chain: &BarrierChain, region: &SamplingBox) -> Result<CertificateReport> {
    let samples = region.samples();
    let mut slacks = Vec::new();
    for x in &samples {
        let (a, c) = chain.constraint_row(x)?;
        if a.norm() <= SINGULAR_ROW_NORM {
            slacks.push((x.clone(), "constraint_offset_at_singular_sample", c));
        }
    }
    Ok(CertificateReport::from_slacks(samples.len(), slacks))
}

/// Checks least relative degree 2 for the shipped systems: L_g b must vanish
/// on the region. L_g b is formed by central finite differences of b along
/// each actuation column; slack is the tolerance minus the row norm.
pub fn check_least_relative_degree(
    provider: &dyn ConstraintProvider,
    model: &dyn SystemModel,
    region: &SamplingBox,
) -> Result<CertificateReport> {
    if region.dim() != model.state_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.state_dim(),
            got: region.dim(),
        });
    }
    let samples = region.samples();
    let mut slacks = Vec::new();
    for x in &samples {
        let g = model.actuation(x)?;
        let mut row_norm2 = 0.0;
        for j in 0..g.ncols() {
            let direction = g.column(j).into_owned();
            let plus = provider.eval_b(&(x + &direction * FD_STEP))?;
            let minus = provider.eval_b(&(x - &direction * FD_STEP))?;
            let lg_b_j = (plus - minus) / (2.0 * FD_STEP);
            row_norm2 += lg_b_j * lg_b_j;
        }
        slacks.push((
            x.clone(),
            "lie_g_b_norm_slack",
            LEAST_DEGREE_TOL - row_norm2.sqrt(),
        ));
    }
    Ok(CertificateReport::from_slacks(samples.len(), slacks))
}

/// Checks the containment {inner_margin >= 0} subseteq {outer_b >= xi} over
/// the region: a violation is a sample inside the inner set whose outer
/// value falls short of xi.
pub fn check_containment<FI, FO>(
    inner_margin: FI,
    outer_b: FO,
    xi: f64,
    region: &SamplingBox,
) -> Result<CertificateReport>
where
    FI: Fn(&DVector<f64>) -> Result<f64>,
    FO: Fn(&DVector<f64>) -> Result<f64>,
{
    if !xi.is_finite() {
        return Err(Error::non_finite("containment level xi"));
    }
    let samples = region.samples();
    let mut slacks = Vec::new();
    for x in &samples {
        if inner_margin(x)? >= 0.0 {
            let b = outer_b(x)?;
            slacks.push((x.clone(), "outer_b_minus_xi", b - xi));
        }
    }
    Ok(CertificateReport::from_slacks(samples.len(), slacks))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{BarrierChain, ChiTruncation, LieTerms};
    use crate::classk::ExtendedClassK;
    use crate::systems::double_integrator::double_integrator_model;
    use std::sync::Arc;

    fn di_box(count: usize, seed: u64, sampler: SamplerKind) -> SamplingBox {
        SamplingBox::new(
            DVector::from_element(4, -3.0),
            DVector::from_element(4, 3.0),
            count,
            seed,
            sampler,
        )
        .unwrap()
    }

    fn truncated_di_chain(d: f64, xi: f64) -> BarrierChain {
        let (_, provider) = double_integrator_model(d).unwrap();
        BarrierChain::truncated(
            Arc::new(provider),
            ChiTruncation::cubic(),
            xi,
            vec![ExtendedClassK::identity(), ExtendedClassK::identity()],
        )
        .unwrap()
    }

    #[test]
    fn box_validation() {
        let bad = SamplingBox::new(
            DVector::from_vec(vec![1.0, 0.0]),
            DVector::from_vec(vec![0.0, 1.0]),
            10,
            0,
            SamplerKind::Uniform,
        );
        assert!(bad.is_err());
        let degenerate = SamplingBox::degenerate(DVector::from_vec(vec![1.0, 2.0]), 3).unwrap();
        let pts = degenerate.samples();
        assert_eq!(pts.len(), 3);
        assert!(pts.iter().all(|p| p == &pts[0]));
    }

    #[test]
    fn samples_are_deterministic_and_inside() {
        for sampler in [SamplerKind::Uniform, SamplerKind::Halton] {
            let region = di_box(200, 7, sampler);
            let a = region.samples();
            let b = region.samples();
            assert_eq!(a, b);
            assert!(a
                .iter()
                .flat_map(|x| x.iter())
                .all(|&v| (-3.0..=3.0).contains(&v)));
        }
    }

    #[test]
    fn halton_is_a_low_discrepancy_stream() {
        // First coordinates at base 2 follow the van der Corput ordering.
        let region = SamplingBox::new(
            DVector::from_vec(vec![0.0]),
            DVector::from_vec(vec![1.0]),
            4,
            0,
            SamplerKind::Halton,
        )
        .unwrap();
        let pts: Vec<f64> = region.samples().iter().map(|p| p[0]).collect();
        assert_eq!(pts, vec![0.5, 0.25, 0.75, 0.125]);
    }

    #[test]
    fn zero_sample_box_is_vacuous() {
        let chain = truncated_di_chain(2.0, 1.0);
        let report = check_hocbf_condition(&chain, &di_box(0, 0, SamplerKind::Uniform)).unwrap();
        assert_eq!(report.checked, 0);
        assert!(report.passed());
        assert_eq!(report.min_slack, f64::INFINITY);
    }

    #[test]
    fn truncated_chain_has_no_violations_on_a_box_covering_the_singular_set() {
        let chain = truncated_di_chain(2.0, 1.0);
        for sampler in [SamplerKind::Uniform, SamplerKind::Halton] {
            let report = check_hocbf_condition(&chain, &di_box(20_000, 11, sampler)).unwrap();
            assert_eq!(report.checked, 20_000);
            assert!(report.passed(), "violations: {:?}", report.violations.len());
        }
    }

    #[test]
    fn untruncated_chain_fails_at_an_inward_pushing_singular_state() {
        let (_, provider) = double_integrator_model(2.0).unwrap();
        let chain = BarrierChain::untruncated(
            Arc::new(provider),
            vec![ExtendedClassK::identity(), ExtendedClassK::identity()],
        )
        .unwrap();
        // p = 0 makes the row -2p vanish while, at v = (3, 0):
        // psi_0 = 4, psi_1 = -2 p.v + psi_0 = 4, and
        // c = -2|v|^2 + psi_1 = -18 + 4 = -14 < 0.
        let singular = DVector::from_vec(vec![0.0, 0.0, 3.0, 0.0]);
        let region = SamplingBox::degenerate(singular, 1).unwrap();
        let report = check_hocbf_condition(&chain, &region).unwrap();
        assert_eq!(report.checked, 1);
        assert_eq!(report.violations.len(), 1);
        assert!(report.min_slack < 0.0);
    }

    #[test]
    fn double_integrator_has_least_relative_degree_two() {
        let (model, provider) = double_integrator_model(2.0).unwrap();
        let report =
            check_least_relative_degree(&provider, &model, &di_box(2_000, 3, SamplerKind::Halton))
                .unwrap();
        assert!(report.passed());
        assert!(report.min_slack > 0.0);
    }

    #[test]
    fn velocity_dependent_constraint_fails_least_degree() {
        #[derive(Clone)]
        struct VelocityConstraint;
        impl ConstraintProvider for VelocityConstraint {
            fn relative_order(&self) -> usize {
                2
            }
            fn input_dim(&self) -> usize {
                2
            }
            fn eval_b(&self, x: &DVector<f64>) -> crate::error::Result<f64> {
                Ok(9.0 - x[2] * x[2] - x[3] * x[3])
            }
            fn lie_terms(&self, _x: &DVector<f64>) -> crate::error::Result<LieTerms> {
                unreachable!("not needed by the finite-difference check")
            }
        }
        let (model, _) = double_integrator_model(2.0).unwrap();
        let report = check_least_relative_degree(
            &VelocityConstraint,
            &model,
            &di_box(500, 5, SamplerKind::Uniform),
        )
        .unwrap();
        assert!(!report.passed());
        assert!(report.min_slack < 0.0);
    }

    #[test]
    fn nested_superlevel_sets_contain() {
        let (_, provider) = double_integrator_model(2.0).unwrap();
        let provider = Arc::new(provider);
        let b = {
            let p = provider.clone();
            move |x: &DVector<f64>| p.eval_b(x)
        };
        let inner = {
            let p = provider.clone();
            move |x: &DVector<f64>| Ok(p.eval_b(x)? - 1.5)
        };
        let report =
            check_containment(inner, &b, 1.0, &di_box(5_000, 13, SamplerKind::Halton)).unwrap();
        assert!(report.passed());

        let inner_loose = {
            let p = provider.clone();
            move |x: &DVector<f64>| Ok(p.eval_b(x)? - 0.5)
        };
        let report =
            check_containment(inner_loose, &b, 1.0, &di_box(5_000, 13, SamplerKind::Halton))
                .unwrap();
        assert!(!report.passed());
        assert!(report.min_slack >= -0.5 - 1e-12 && report.min_slack < 0.0);
    }

    #[test]
    fn singular_set_of_the_disk_barrier_sits_deep_inside() {
        let (_, constraint) = double_integrator_model(2.0).unwrap();
        let outer_constraint = constraint.clone();
        let inner = move |x: &DVector<f64>| {
            // Indicator margin of the singular set: nonnegative only where
            // the input row (-2 p) vanishes numerically.
            match constraint.lie_terms(x)? {
                LieTerms::SecondOrder { lg_lf_b, .. } => Ok(SINGULAR_ROW_NORM - lg_lf_b.norm()),
                LieTerms::FirstOrder { .. } => unreachable!(),
            }
        };
        let outer = move |x: &DVector<f64>| outer_constraint.eval_b(x);
        // Sample a sheet through p = 0 so the inner set is actually hit.
        let region = SamplingBox::new(
            DVector::from_vec(vec![0.0, 0.0, -3.0, -3.0]),
            DVector::from_vec(vec![0.0, 0.0, 3.0, 3.0]),
            1_000,
            17,
            SamplerKind::Uniform,
        )
        .unwrap();
        for xi in [0.5, 1.0, 3.9] {
            let report = check_containment(&inner, &outer, xi, &region).unwrap();
            assert!(report.passed());
            assert!(report.min_slack > 0.0);
        }
    }

    #[test]
    fn reports_are_deterministic_given_seed() {
        let chain = truncated_di_chain(2.0, 1.0);
        let r1 = check_hocbf_condition(&chain, &di_box(500, 99, SamplerKind::Uniform)).unwrap();
        let r2 = check_hocbf_condition(&chain, &di_box(500, 99, SamplerKind::Uniform)).unwrap();
        assert_eq!(r1.checked, r2.checked);
        assert_eq!(r1.min_slack, r2.min_slack);
    }
}
