//! The psi-series over a constraint function b, the saturating truncation
//! h = chi(b / xi), and the affine constraint row consumed by the safety
//! filter.
//!
//! For a relative-degree-2 constraint the chain is
//!
//! ```text
//! psi_0 = h = chi(b / xi)
//! psi_1 = L_f psi_0 + alpha_1(psi_0),  L_f psi_0 = (1/xi) chi'(b/xi) L_f b
//! L_f psi_1 = (1/xi) [ (1/xi) chi'' (L_f b)^2 + chi' L_f^2 b ] + alpha_1'(h) L_f h
//! L_g psi_1 = (1/xi) chi'(b/xi) L_g L_f b
//! ```
//!
//! Because chi is constant (= 1) for b >= xi, both chi' and chi'' vanish there
//! and the constraint row degenerates to `0 * u + alpha_r(alpha_1(1)) >= 0`
//! exactly: the filter is provably inactive on the deep interior, which is
//! also exactly where the raw row could become singular.

use std::sync::Arc;

use nalgebra::{DVector, RowDVector};

use crate::classk::ExtendedClassK;
use crate::error::{Error, Result};
use crate::jet::Jet2;

/// Lie derivatives of the constraint function along the plant dynamics, as
/// supplied by a [`ConstraintProvider`]. The shape depends on the relative
/// order of the constraint.
#[derive(Debug, Clone)]
pub enum LieTerms {
    /// Relative order 1: `(L_f b, L_g b)`.
    FirstOrder { lf_b: f64, lg_b: RowDVector<f64> },
    /// Relative order 2: `(L_f b, L_f^2 b, L_g L_f b)`; `L_g b` vanishes
    /// identically on the domain by the least-relative-degree hypothesis.
    SecondOrder {
        lf_b: f64,
        lf2_b: f64,
        lg_lf_b: RowDVector<f64>,
    },
}

/// Differentiation contract for a constraint function b over a control-affine
/// plant. Implementations may be analytic (closed forms) or jet-based
/// (forward differentiation); the verifier cross-validates either kind
/// against finite differences.
pub trait ConstraintProvider: Send + Sync {
    /// Relative order r of the constraint (1 or 2 for the shipped systems).
    fn relative_order(&self) -> usize;
    /// Number of plant inputs (length of the row vectors in [`LieTerms`]).
    fn input_dim(&self) -> usize;
    /// The constraint function b(x).
    fn eval_b(&self, x: &DVector<f64>) -> Result<f64>;
    /// Lie derivatives of b at x; shape per [`LieTerms`].
    fn lie_terms(&self, x: &DVector<f64>) -> Result<LieTerms>;
}

type ChiFn = Arc<dyn Fn(f64) -> (f64, f64, f64) + Send + Sync>;

/// A saturating monotone reshaping of the constraint scale: chi(0) = 0,
/// chi strictly increasing below 1, and chi == 1 for tau >= 1 with both
/// derivatives exactly zero there (the constant branch owns the boundary, so
/// the truncation-side zeros are exact in floating point, not approximate).
#[derive(Clone)]
pub struct ChiTruncation {
    kind: ChiKind,
}

#[derive(Clone)]
enum ChiKind {
    /// chi(tau) = (tau - 1)^3 + 1 for tau <= 1, else 1.
    Cubic,
    Custom(ChiFn),
}

impl ChiTruncation {
    /// The shipped default: chi(tau) = (tau - 1)^3 + 1 below 1, constant 1 above.
    pub fn cubic() -> Self {
        ChiTruncation {
            kind: ChiKind::Cubic,
        }
    }

    /// A user-supplied sub-unit branch returning (value, d1, d2) for tau <= 1.
    /// Spot-checked at construction: chi(0) = 0, the branch meets the constant
    /// branch C2-continuously at tau = 1 (value 1, zero derivatives within
    /// 1e-9), and d1 > 0 on a grid below 1.
    pub fn custom<F>(branch: F) -> Result<Self>
    where
        F: Fn(f64) -> (f64, f64, f64) + Send + Sync + 'static,
    {
        let (v0, _, _) = branch(0.0);
        if v0.abs() > 1e-12 {
            return Err(Error::invalid(format!(
                "chi truncation must satisfy chi(0) = 0, got {v0}"
            )));
        }
        let (v1, d1, d2) = branch(1.0);
        if (v1 - 1.0).abs() > 1e-9 || d1.abs() > 1e-9 || d2.abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "chi truncation must meet the constant branch C2-continuously at tau = 1, \
                 got ({v1}, {d1}, {d2})"
            )));
        }
        for k in -30..10 {
            let tau = 0.1 * k as f64;
            let (v, d, _) = branch(tau);
            if !v.is_finite() || !d.is_finite() {
                return Err(Error::invalid(format!(
                    "chi truncation returned a non-finite value at tau = {tau}"
                )));
            }
            if d <= 0.0 {
                return Err(Error::invalid(format!(
                    "chi truncation derivative must be positive below 1, got {d} at tau = {tau}"
                )));
            }
        }
        Ok(ChiTruncation {
            kind: ChiKind::Custom(Arc::new(branch)),
        })
    }

    /// Piecewise evaluation with both derivatives: (chi, chi', chi'').
    pub fn eval(&self, tau: f64) -> Result<(f64, f64, f64)> {
        if !tau.is_finite() {
            return Err(Error::invalid(format!(
                "chi truncation evaluated at non-finite tau = {tau}"
            )));
        }
        if tau >= 1.0 {
            return Ok((1.0, 0.0, 0.0));
        }
        Ok(match &self.kind {
            ChiKind::Cubic => {
                let w = tau - 1.0;
                (w * w * w + 1.0, 3.0 * w * w, 6.0 * w)
            }
            ChiKind::Custom(f) => f(tau),
        })
    }
}

impl std::fmt::Debug for ChiTruncation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.kind {
            ChiKind::Cubic => write!(f, "ChiTruncation::Cubic"),
            ChiKind::Custom(_) => write!(f, "ChiTruncation::Custom"),
        }
    }
}

/// Everything the chain knows at one state: the margins psi_0..psi_{r-1} and
/// the Lie derivatives of the last margin, from which the constraint row is
/// assembled.
#[derive(Debug, Clone)]
pub struct PsiChainEval {
    /// psi_0 .. psi_{r-1}.
    pub psi: DVector<f64>,
    /// L_f psi_{r-1}.
    pub lf_psi_last: f64,
    /// L_g psi_{r-1} (row vector of input dimension).
    pub lg_psi_last: RowDVector<f64>,
    /// Raw constraint value b(x), before truncation.
    pub b: f64,
}

/// The psi-series over one constraint provider. Immutable after construction;
/// evaluation is reentrant.
#[derive(Clone)]
pub struct BarrierChain {
    provider: Arc<dyn ConstraintProvider>,
    truncation: Option<(ChiTruncation, f64)>,
    alphas: Vec<ExtendedClassK>,
    delta_margin: f64,
}

impl BarrierChain {
    /// A chain over h = chi(b / xi). This is the construction that guarantees
    /// feasibility of the filter whenever the singular set of b sits inside
    /// the superlevel region b >= xi.
    pub fn truncated(
        provider: Arc<dyn ConstraintProvider>,
        chi: ChiTruncation,
        xi: f64,
        alphas: Vec<ExtendedClassK>,
    ) -> Result<Self> {
        if !xi.is_finite() || xi <= 0.0 {
            return Err(Error::invalid(format!(
                "truncation level xi must be a positive finite real, got {xi}"
            )));
        }
        Self::validate_order(provider.as_ref(), &alphas)?;
        Ok(BarrierChain {
            provider,
            truncation: Some((chi, xi)),
            alphas,
            delta_margin: 0.0,
        })
    }

    /// A raw chain over h = b, without truncation. Used to demonstrate what
    /// goes wrong at singular states (the verifier's negative certificates);
    /// it does not carry the feasibility guarantee.
    pub fn untruncated(
        provider: Arc<dyn ConstraintProvider>,
        alphas: Vec<ExtendedClassK>,
    ) -> Result<Self> {
        Self::validate_order(provider.as_ref(), &alphas)?;
        Ok(BarrierChain {
            provider,
            truncation: None,
            alphas,
            delta_margin: 0.0,
        })
    }

    fn validate_order(provider: &dyn ConstraintProvider, alphas: &[ExtendedClassK]) -> Result<()> {
        let r = provider.relative_order();
        if r != 1 && r != 2 {
            return Err(Error::invalid(format!(
                "shipped chains support relative order 1 or 2, got {r}"
            )));
        }
        if alphas.len() != r {
            return Err(Error::DimensionMismatch {
                expected: r,
                got: alphas.len(),
            });
        }
        Ok(())
    }

    /// Records the margin delta already folded into the provider's b (e.g.
    /// the attitude barrier ships b = sum s(r_i / eps) - delta). Metadata for
    /// reporting; it does not enter any chain formula.
    pub fn with_delta_margin(mut self, delta: f64) -> Self {
        self.delta_margin = delta;
        self
    }

    pub fn relative_order(&self) -> usize {
        self.provider.relative_order()
    }

    pub fn input_dim(&self) -> usize {
        self.provider.input_dim()
    }

    /// The truncation level xi, if this chain is truncated.
    pub fn xi(&self) -> Option<f64> {
        self.truncation.as_ref().map(|(_, xi)| *xi)
    }

    pub fn delta_margin(&self) -> f64 {
        self.delta_margin
    }

    pub fn alphas(&self) -> &[ExtendedClassK] {
        &self.alphas
    }

    pub fn provider(&self) -> &dyn ConstraintProvider {
        self.provider.as_ref()
    }

    /// Evaluates psi_0..psi_{r-1} and the Lie derivatives of the last margin.
    pub fn eval_psi_chain(&self, x: &DVector<f64>) -> Result<PsiChainEval> {
        let b = self.provider.eval_b(x)?;
        if !b.is_finite() {
            return Err(Error::non_finite("constraint provider output b"));
        }
        let r = self.provider.relative_order();
        let m = self.provider.input_dim();

        let (h, dchi_over_xi, lie_scale) = match &self.truncation {
            Some((chi, xi)) => {
                let tau = b / xi;
                let (h, d1, d2) = chi.eval(tau)?;
                if d1 == 0.0 && d2 == 0.0 {
                    // Constant branch (b >= xi, or a degenerate custom chi):
                    // every derivative term carries a factor of chi' or chi'',
                    // so the chain closes without querying lie_terms. The
                    // zeros here are exact, which is what makes the filter
                    // bit-exactly inactive on the deep interior.
                    let psi = match r {
                        1 => DVector::from_vec(vec![h]),
                        _ => {
                            let psi1 = self.alphas[0].eval(h)?;
                            DVector::from_vec(vec![h, psi1])
                        }
                    };
                    return Ok(PsiChainEval {
                        psi,
                        lf_psi_last: 0.0,
                        lg_psi_last: RowDVector::zeros(m),
                        b,
                    });
                }
                (h, d1 / xi, Some((d1, d2, *xi)))
            }
            None => (b, 1.0, None),
        };

        let terms = self.provider.lie_terms(x)?;
        match (r, terms) {
            (1, LieTerms::FirstOrder { lf_b, lg_b }) => {
                if lg_b.len() != m {
                    return Err(Error::DimensionMismatch {
                        expected: m,
                        got: lg_b.len(),
                    });
                }
                let eval = PsiChainEval {
                    psi: DVector::from_vec(vec![h]),
                    lf_psi_last: dchi_over_xi * lf_b,
                    lg_psi_last: lg_b * dchi_over_xi,
                    b,
                };
                self.check_finite(&eval)?;
                Ok(eval)
            }
            (
                2,
                LieTerms::SecondOrder {
                    lf_b,
                    lf2_b,
                    lg_lf_b,
                },
            ) => {
                if lg_lf_b.len() != m {
                    return Err(Error::DimensionMismatch {
                        expected: m,
                        got: lg_lf_b.len(),
                    });
                }
                let lf_h = dchi_over_xi * lf_b;
                let psi1 = lf_h + self.alphas[0].eval(h)?;
                let dalpha1 = self.alphas[0].derivative(h)?;
                let lf_psi1 = match lie_scale {
                    Some((d1, d2, xi)) => (d2 * lf_b * lf_b / xi + d1 * lf2_b) / xi,
                    None => lf2_b,
                } + dalpha1 * lf_h;
                let eval = PsiChainEval {
                    psi: DVector::from_vec(vec![h, psi1]),
                    lf_psi_last: lf_psi1,
                    lg_psi_last: lg_lf_b * dchi_over_xi,
                    b,
                };
                self.check_finite(&eval)?;
                Ok(eval)
            }
            (r, terms) => Err(Error::invalid(format!(
                "constraint provider of order {r} returned mismatched lie terms {terms:?}"
            ))),
        }
    }

    fn check_finite(&self, eval: &PsiChainEval) -> Result<()> {
        let ok = eval.psi.iter().all(|v| v.is_finite())
            && eval.lf_psi_last.is_finite()
            && eval.lg_psi_last.iter().all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::non_finite("psi chain evaluation"))
        }
    }

    /// The affine constraint row: the admissible input set at x is
    /// `{u : a u + c >= 0}` with a = L_g psi_{r-1} and
    /// c = L_f psi_{r-1} + alpha_r(psi_{r-1}).
    pub fn constraint_row(&self, x: &DVector<f64>) -> Result<(RowDVector<f64>, f64)> {
        let eval = self.eval_psi_chain(x)?;
        self.row_from_eval(&eval)
    }

    /// Assembles the constraint row from an existing chain evaluation,
    /// letting callers that also need the psi values avoid evaluating twice.
    pub fn row_from_eval(&self, eval: &PsiChainEval) -> Result<(RowDVector<f64>, f64)> {
        let r = self.relative_order();
        let c = eval.lf_psi_last + self.alphas[r - 1].eval(eval.psi[r - 1])?;
        Ok((eval.lg_psi_last.clone(), c))
    }

    /// The constraint row hardened against a matched disturbance channel with
    /// Lie row `lp_psi_last` and magnitude bound `omega_bar`: c is reduced by
    /// the worst-case disturbance contribution `|lp_psi_last| * omega_bar`.
    pub fn robustified_constraint_row(
        &self,
        x: &DVector<f64>,
        lp_psi_last: &RowDVector<f64>,
        omega_bar: f64,
    ) -> Result<(RowDVector<f64>, f64)> {
        if !omega_bar.is_finite() || omega_bar < 0.0 {
            return Err(Error::invalid(format!(
                "disturbance bound omega_bar must be a nonnegative finite real, got {omega_bar}"
            )));
        }
        let (a, c) = self.constraint_row(x)?;
        Ok((a, c - lp_psi_last.norm() * omega_bar))
    }

    /// Membership in the intersection set C: margins are psi_0..psi_{r-1};
    /// inside iff all are >= 0 (C is closed).
    pub fn membership(&self, x: &DVector<f64>) -> Result<(bool, DVector<f64>)> {
        let eval = self.eval_psi_chain(x)?;
        let inside = eval.psi.iter().all(|&v| v >= 0.0);
        Ok((inside, eval.psi))
    }
}

impl std::fmt::Debug for BarrierChain {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BarrierChain")
            .field("relative_order", &self.relative_order())
            .field("truncation", &self.truncation.as_ref().map(|(_, xi)| *xi))
            .field("delta_margin", &self.delta_margin)
            .finish()
    }
}

type FlowJetFn = Arc<dyn Fn(&[Jet2], &DVector<f64>) -> Vec<Jet2> + Send + Sync>;
type BarrierJetFn = Arc<dyn Fn(&[Jet2]) -> Jet2 + Send + Sync>;

/// A [`ConstraintProvider`] that computes Lie derivatives by forward
/// differentiation: the plant flow and the barrier are evaluated on order-2
/// jets along the drift and along drift-plus-actuation-column directions.
///
/// For relative order 2 this relies on the least-relative-degree hypothesis
/// `L_g b == 0` identically (the barrier must not depend on the actuated
/// state components); under it, the second time derivative of b along the
/// constant-input flow `f + g e_j` equals `L_f^2 b + L_{g_j} L_f b`, so the
/// mixed term is recovered by subtracting the drift-only second derivative.
/// The hypothesis itself is checked by the verifier, not assumed silently.
pub struct JetLieProvider {
    state_dim: usize,
    input_dim: usize,
    relative_order: usize,
    /// Evaluates f(x) + g(x) u on jets for a constant input u.
    flow: FlowJetFn,
    /// Evaluates b(x) on jets.
    barrier: BarrierJetFn,
}

impl JetLieProvider {
    pub fn new(
        state_dim: usize,
        input_dim: usize,
        relative_order: usize,
        flow: FlowJetFn,
        barrier: BarrierJetFn,
    ) -> Result<Self> {
        if relative_order != 1 && relative_order != 2 {
            return Err(Error::invalid(format!(
                "jet provider supports relative order 1 or 2, got {relative_order}"
            )));
        }
        Ok(JetLieProvider {
            state_dim,
            input_dim,
            relative_order,
            flow,
            barrier,
        })
    }

    fn check_dim(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.state_dim {
            return Err(Error::DimensionMismatch {
                expected: self.state_dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// (b, L_F b, L_F^2 b) along the constant-input flow F = f + g u.
    fn second_jet(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<(f64, f64, f64)> {
        let constants: Vec<Jet2> = x.iter().map(|&v| Jet2::constant(v)).collect();
        let velocity = (self.flow)(&constants, u);
        let first: Vec<Jet2> = x
            .iter()
            .zip(&velocity)
            .map(|(&v, dv)| Jet2::new(v, dv.value, 0.0))
            .collect();
        let accel = (self.flow)(&first, u);
        let seeded: Vec<Jet2> = x
            .iter()
            .zip(&velocity)
            .zip(&accel)
            .map(|((&v, dv), ddv)| Jet2::new(v, dv.value, ddv.d1))
            .collect();
        let bj = (self.barrier)(&seeded);
        if !bj.is_finite() {
            return Err(Error::non_finite("jet barrier evaluation"));
        }
        Ok((bj.value, bj.d1, bj.d2))
    }

    /// Directional derivative of b along a frozen direction.
    fn directional(&self, x: &DVector<f64>, direction: &[Jet2]) -> Result<f64> {
        let seeded: Vec<Jet2> = x
            .iter()
            .zip(direction)
            .map(|(&v, d)| Jet2::new(v, d.value, 0.0))
            .collect();
        let bj = (self.barrier)(&seeded);
        if !bj.is_finite() {
            return Err(Error::non_finite("jet barrier evaluation"));
        }
        Ok(bj.d1)
    }
}

impl ConstraintProvider for JetLieProvider {
    fn relative_order(&self) -> usize {
        self.relative_order
    }

    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn eval_b(&self, x: &DVector<f64>) -> Result<f64> {
        self.check_dim(x)?;
        let constants: Vec<Jet2> = x.iter().map(|&v| Jet2::constant(v)).collect();
        let bj = (self.barrier)(&constants);
        if !bj.value.is_finite() {
            return Err(Error::non_finite("jet barrier evaluation"));
        }
        Ok(bj.value)
    }

    fn lie_terms(&self, x: &DVector<f64>) -> Result<LieTerms> {
        self.check_dim(x)?;
        let zero_u = DVector::zeros(self.input_dim);
        match self.relative_order {
            1 => {
                let constants: Vec<Jet2> = x.iter().map(|&v| Jet2::constant(v)).collect();
                let drift = (self.flow)(&constants, &zero_u);
                let lf_b = self.directional(x, &drift)?;
                let mut lg_b = RowDVector::zeros(self.input_dim);
                for j in 0..self.input_dim {
                    let mut ej = DVector::zeros(self.input_dim);
                    ej[j] = 1.0;
                    let forced = (self.flow)(&constants, &ej);
                    let column: Vec<Jet2> = forced
                        .iter()
                        .zip(&drift)
                        .map(|(a, b)| Jet2::constant(a.value - b.value))
                        .collect();
                    lg_b[j] = self.directional(x, &column)?;
                }
                Ok(LieTerms::FirstOrder { lf_b, lg_b })
            }
            _ => {
                let (_, lf_b, lf2_b) = self.second_jet(x, &zero_u)?;
                let mut lg_lf_b = RowDVector::zeros(self.input_dim);
                for j in 0..self.input_dim {
                    let mut ej = DVector::zeros(self.input_dim);
                    ej[j] = 1.0;
                    let (_, _, forced_second) = self.second_jet(x, &ej)?;
                    lg_lf_b[j] = forced_second - lf2_b;
                }
                Ok(LieTerms::SecondOrder {
                    lf_b,
                    lf2_b,
                    lg_lf_b,
                })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Closed-form provider for the planar double integrator with disk
    /// constraint b = d^2 - |p|^2 (state layout p1, p2, v1, v2).
    struct DiskProvider {
        d: f64,
    }

    impl ConstraintProvider for DiskProvider {
        fn relative_order(&self) -> usize {
            2
        }
        fn input_dim(&self) -> usize {
            2
        }
        fn eval_b(&self, x: &DVector<f64>) -> Result<f64> {
            Ok(self.d * self.d - x[0] * x[0] - x[1] * x[1])
        }
        fn lie_terms(&self, x: &DVector<f64>) -> Result<LieTerms> {
            let (p1, p2, v1, v2) = (x[0], x[1], x[2], x[3]);
            Ok(LieTerms::SecondOrder {
                lf_b: -2.0 * (p1 * v1 + p2 * v2),
                lf2_b: -2.0 * (v1 * v1 + v2 * v2),
                lg_lf_b: RowDVector::from_row_slice(&[-2.0 * p1, -2.0 * p2]),
            })
        }
    }

    fn disk_chain(d: f64, xi: f64) -> BarrierChain {
        BarrierChain::truncated(
            Arc::new(DiskProvider { d }),
            ChiTruncation::cubic(),
            xi,
            vec![ExtendedClassK::identity(), ExtendedClassK::identity()],
        )
        .unwrap()
    }

    #[test]
    fn cubic_chi_values() {
        let chi = ChiTruncation::cubic();
        assert_eq!(chi.eval(1.0).unwrap(), (1.0, 0.0, 0.0));
        assert_eq!(chi.eval(0.0).unwrap(), (0.0, 3.0, -6.0));
        assert_eq!(chi.eval(2.0).unwrap(), (1.0, 0.0, 0.0));
    }

    #[test]
    fn cubic_chi_derivatives_match_finite_differences() {
        let chi = ChiTruncation::cubic();
        let h = 1e-6;
        for &tau in &[-2.0, -0.3, 0.1, 0.5, 0.9] {
            let (_, d1, d2) = chi.eval(tau).unwrap();
            let (vp, dp, _) = chi.eval(tau + h).unwrap();
            let (vm, dm, _) = chi.eval(tau - h).unwrap();
            assert!((d1 - (vp - vm) / (2.0 * h)).abs() < 1e-8 * d1.abs().max(1.0));
            assert!((d2 - (dp - dm) / (2.0 * h)).abs() < 1e-8 * d2.abs().max(1.0));
        }
    }

    #[test]
    fn chi_rejects_non_finite() {
        let chi = ChiTruncation::cubic();
        assert!(chi.eval(f64::NAN).is_err());
        assert!(chi.eval(f64::INFINITY).is_err());
    }

    #[test]
    fn custom_chi_validation() {
        // Quintic with the same seam behavior as the cubic: still C2 at 1.
        let quintic = ChiTruncation::custom(|tau| {
            let w = tau - 1.0;
            (w.powi(5) + 1.0, 5.0 * w.powi(4), 20.0 * w.powi(3))
        });
        assert!(quintic.is_ok());

        // Identity branch fails the seam condition chi'(1) = 0.
        assert!(ChiTruncation::custom(|tau| (tau, 1.0, 0.0)).is_err());
        // Offset branch fails chi(0) = 0.
        assert!(ChiTruncation::custom(|tau| {
            let w = tau - 1.0;
            (w * w * w + 1.1, 3.0 * w * w, 6.0 * w)
        })
        .is_err());
    }

    #[test]
    fn truncation_branch_example() {
        // p = (1, 0), v = (0, 1), d = 2, xi = 1: b = 3 >= xi, so psi_0 = 1,
        // L_f h = 0, psi_1 = alpha_1(1) = 1.
        let chain = disk_chain(2.0, 1.0);
        let x = DVector::from_vec(vec![1.0, 0.0, 0.0, 1.0]);
        let eval = chain.eval_psi_chain(&x).unwrap();
        assert_eq!(eval.b, 3.0);
        assert_eq!(eval.psi[0], 1.0);
        assert_eq!(eval.psi[1], 1.0);
        assert_eq!(eval.lf_psi_last, 0.0);
        assert!(eval.lg_psi_last.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_fixpoint_of_the_chain() {
        // A state with b = 0 and L_f b = 0: psi_0 = chi(0) = 0 and
        // psi_1 = (1/xi) chi'(0) * 0 + alpha_1(0) = 0, both exactly.
        // p = (d, 0), v = (0, w) gives b = 0 and p.v = 0.
        let chain = disk_chain(2.0, 1.0);
        let x = DVector::from_vec(vec![2.0, 0.0, 0.0, 0.7]);
        let eval = chain.eval_psi_chain(&x).unwrap();
        assert_eq!(eval.psi[0], 0.0);
        assert_eq!(eval.psi[1], 0.0);
    }

    #[test]
    fn deep_interior_row_is_exactly_trivial() {
        let chain = disk_chain(2.0, 1.0);
        let x = DVector::from_vec(vec![0.5, -0.3, 2.0, 1.0]);
        assert!(chain.eval_psi_chain(&x).unwrap().b >= 1.0);
        let (a, c) = chain.constraint_row(&x).unwrap();
        assert!(a.iter().all(|&v| v == 0.0));
        // c = alpha_2(alpha_1(1)) = 1 for identity alphas.
        assert_eq!(c, 1.0);
        let (inside, margins) = chain.membership(&x).unwrap();
        assert!(inside);
        assert!(margins.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn negative_b_is_outside() {
        let chain = disk_chain(2.0, 1.0);
        let x = DVector::from_vec(vec![2.5, 0.0, 0.0, 0.0]);
        let (inside, margins) = chain.membership(&x).unwrap();
        assert!(!inside);
        assert!(margins[0] < 0.0);
    }

    #[test]
    fn boundary_membership_is_closed() {
        let chain = disk_chain(2.0, 1.0);
        // b = 0 and L_f b = 0 at this state (p orthogonal to v), so both
        // margins vanish exactly and the state still belongs to C.
        let x = DVector::from_vec(vec![2.0, 0.0, 0.0, 0.4]);
        let (inside, margins) = chain.membership(&x).unwrap();
        assert!(inside);
        assert_eq!(margins[0], 0.0);
        assert_eq!(margins[1], 0.0);
    }

    #[test]
    fn constraint_row_matches_finite_difference_psi_dot() {
        // Integrate the plant under a frozen input and compare the analytic
        // psi_1 derivative lf + a.u against a central difference of psi_1.
        let chain = disk_chain(2.0, 1.0);
        let x = DVector::from_vec(vec![1.99, 0.0, 0.1, 0.0]);
        let u = DVector::from_vec(vec![0.3, -0.2]);

        let eval = chain.eval_psi_chain(&x).unwrap();
        let (a, c) = chain.constraint_row(&x).unwrap();
        let alpha2_term = eval.psi[1]; // identity alpha_2
        let psi1_dot = (a.clone() * &u)[0] + (c - alpha2_term);

        let rhs = |x: &DVector<f64>| {
            DVector::from_vec(vec![x[2], x[3], u[0], u[1]])
        };
        let h = 1e-5;
        let step = |x0: &DVector<f64>, h: f64| {
            let k1 = rhs(x0);
            let k2 = rhs(&(x0 + &k1 * (h / 2.0)));
            let k3 = rhs(&(x0 + &k2 * (h / 2.0)));
            let k4 = rhs(&(x0 + &k3 * h));
            x0 + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
        };
        let psi1 = |x: &DVector<f64>| chain.eval_psi_chain(x).unwrap().psi[1];
        let fd = (psi1(&step(&x, h)) - psi1(&step(&x, -h))) / (2.0 * h);
        assert!(
            (fd - psi1_dot).abs() < 1e-6 * psi1_dot.abs().max(1.0),
            "fd = {fd}, analytic = {psi1_dot}"
        );

        // The half-space is nonempty: the closed-form projection satisfies it
        // with equality.
        let norm2 = a.norm_squared();
        assert!(norm2 > 0.0);
        let u_star = a.transpose() * (-c / norm2);
        assert!(((a * u_star)[0] + c).abs() < 1e-12);
    }

    #[test]
    fn robustified_row() {
        let chain = disk_chain(2.0, 1.0);
        let x = DVector::from_vec(vec![1.99, 0.0, 0.1, 0.0]);
        let (a0, c0) = chain.constraint_row(&x).unwrap();

        let zero_lp = RowDVector::zeros(2);
        let (a, c) = chain.robustified_constraint_row(&x, &zero_lp, 0.7).unwrap();
        assert_eq!(a, a0);
        assert_eq!(c, c0);

        let lp = RowDVector::from_row_slice(&[3.0, 4.0]);
        let (a, c) = chain.robustified_constraint_row(&x, &lp, 0.0).unwrap();
        assert_eq!(a, a0);
        assert_eq!(c, c0);

        let (_, c) = chain.robustified_constraint_row(&x, &lp, 1.0).unwrap();
        assert_relative_eq!(c, c0 - 5.0, max_relative = 1e-15);

        assert!(chain.robustified_constraint_row(&x, &lp, -0.1).is_err());
    }

    #[test]
    fn alphas_length_must_match_order() {
        let provider: Arc<dyn ConstraintProvider> = Arc::new(DiskProvider { d: 2.0 });
        let result = BarrierChain::truncated(
            provider,
            ChiTruncation::cubic(),
            1.0,
            vec![ExtendedClassK::identity()],
        );
        assert!(result.is_err());
    }

    #[test]
    fn jet_provider_matches_closed_forms_on_the_disk() {
        // Double-integrator flow and barrier on jets.
        let flow: FlowJetFn = Arc::new(|x: &[Jet2], u: &DVector<f64>| {
            vec![
                x[2],
                x[3],
                Jet2::constant(u[0]),
                Jet2::constant(u[1]),
            ]
        });
        let d = 2.0;
        let barrier: BarrierJetFn =
            Arc::new(move |x: &[Jet2]| d * d - x[0] * x[0] - x[1] * x[1]);
        let jet = JetLieProvider::new(4, 2, 2, flow, barrier).unwrap();
        let analytic = DiskProvider { d };

        let states = [
            DVector::from_vec(vec![1.0, 0.0, 0.0, 1.0]),
            DVector::from_vec(vec![0.3, -1.2, 0.8, 0.4]),
            DVector::from_vec(vec![-1.7, 0.9, -0.2, -2.0]),
        ];
        for x in &states {
            assert_relative_eq!(
                jet.eval_b(x).unwrap(),
                analytic.eval_b(x).unwrap(),
                max_relative = 1e-14
            );
            let (jt, at) = (jet.lie_terms(x).unwrap(), analytic.lie_terms(x).unwrap());
            let LieTerms::SecondOrder {
                lf_b: jf,
                lf2_b: jf2,
                lg_lf_b: jg,
            } = jt
            else {
                panic!("expected second-order terms")
            };
            let LieTerms::SecondOrder {
                lf_b: af,
                lf2_b: af2,
                lg_lf_b: ag,
            } = at
            else {
                panic!("expected second-order terms")
            };
            assert_relative_eq!(jf, af, epsilon = 1e-12, max_relative = 1e-10);
            assert_relative_eq!(jf2, af2, epsilon = 1e-12, max_relative = 1e-10);
            for j in 0..2 {
                assert_relative_eq!(jg[j], ag[j], epsilon = 1e-12, max_relative = 1e-10);
            }
        }
    }

    #[test]
    fn jet_provider_first_order() {
        // Scalar plant x' = -x + u with b = 1 - x^2: L_f b = 2x^2, L_g b = -2x.
        let flow: FlowJetFn =
            Arc::new(|x: &[Jet2], u: &DVector<f64>| vec![-x[0] + u[0]]);
        let barrier: BarrierJetFn = Arc::new(|x: &[Jet2]| 1.0 - x[0] * x[0]);
        let jet = JetLieProvider::new(1, 1, 1, flow, barrier).unwrap();
        let x = DVector::from_vec(vec![0.4]);
        let LieTerms::FirstOrder { lf_b, lg_b } = jet.lie_terms(&x).unwrap() else {
            panic!("expected first-order terms")
        };
        assert_relative_eq!(lf_b, 2.0 * 0.4 * 0.4, max_relative = 1e-12);
        assert_relative_eq!(lg_b[0], -0.8, max_relative = 1e-12);
    }
}
