//! Arc cost families.
//!
//! Every family is nonnegative and non-decreasing on `[0, inf)`. Besides the
//! plain value `tau(x)` each family exposes its right derivative, the marginal
//! cost `tau(x) + x * tau'(x)` used by system-optimum subproblems and the
//! Beckmann integral `int_0^x tau` used by the equilibrium objective. All
//! integrals are closed form.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default number of breakpoints the piecewise recursion may grow to.
pub const DEFAULT_MAX_INDEX: usize = 64;

/// Two exponents closer than this are treated as the same degree.
const DEGREE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CostError {
    #[error("cost evaluated at invalid flow {0} (must be finite and >= 0)")]
    InvalidFlow(f64),
    #[error("invalid cost parameter: {0}")]
    InvalidParameter(String),
    #[error("flow {x} lies beyond breakpoint index {max_index} of the piecewise recursion")]
    BeyondRecursion { x: f64, max_index: usize },
    #[error("scaling divisor must be positive, got {0}")]
    NonPositiveScale(f64),
    #[error("piecewise costs have no closed-form limit")]
    NoClosedFormLimit,
}

/// One term `coefficient * x^exponent` of a polynomial cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub coefficient: f64,
    pub exponent: f64,
}

impl Term {
    pub fn new(coefficient: f64, exponent: f64) -> Self {
        Self {
            coefficient,
            exponent,
        }
    }
}

/// Continuous non-decreasing function built from alternating linear and flat
/// pieces on a breakpoint sequence `0 = b_0 < b_1 < ...`:
///
/// * `tau = 1` on `[b_0, b_1)`
/// * `tau = ((x - b_{2i+1}) + 1) * tau(b_{2i})` on `[b_{2i+1}, b_{2i+2})`
/// * `tau = tau(b_{2i})` on `[b_{2i}, b_{2i+1})` for `i >= 1`
///
/// Only a prefix of the sequence is stored. Past it the sequence is extended
/// with ratios `b_{n+1} / b_n = b_n / b_{n-1} + 1` (ratio 2 after `b_1`), up to
/// `max_index`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Piecewise {
    pub breakpoints: Vec<f64>,
    #[serde(default = "default_max_index")]
    pub max_index: usize,
}

fn default_max_index() -> usize {
    DEFAULT_MAX_INDEX
}

impl Piecewise {
    pub fn new(breakpoints: Vec<f64>) -> Self {
        Self {
            breakpoints,
            max_index: DEFAULT_MAX_INDEX,
        }
    }

    fn validate(&self) -> Result<(), CostError> {
        let b = &self.breakpoints;
        if b.len() < 2 {
            return Err(CostError::InvalidParameter(
                "piecewise cost needs at least breakpoints b_0 and b_1".into(),
            ));
        }
        if b[0] != 0.0 {
            return Err(CostError::InvalidParameter("piecewise b_0 must be 0".into()));
        }
        if b.iter().any(|v| !v.is_finite()) {
            return Err(CostError::InvalidParameter("non-finite breakpoint".into()));
        }
        if b.windows(2).any(|w| w[1] <= w[0]) {
            return Err(CostError::InvalidParameter(
                "piecewise breakpoints must be strictly increasing".into(),
            ));
        }
        let ratios: Vec<f64> = b[1..].windows(2).map(|w| w[1] / w[0]).collect();
        if ratios.windows(2).any(|r| r[1] <= r[0]) {
            return Err(CostError::InvalidParameter(
                "piecewise breakpoint ratios b_{i+1}/b_i must be strictly increasing".into(),
            ));
        }
        if self.max_index + 1 < b.len() {
            return Err(CostError::InvalidParameter(format!(
                "max_index {} is below the {} stored breakpoints",
                self.max_index,
                b.len()
            )));
        }
        Ok(())
    }

    /// Breakpoint `b_i`, extending the stored prefix when needed.
    fn breakpoint(&self, i: usize, extended: &mut Vec<f64>) -> f64 {
        if i < self.breakpoints.len() {
            return self.breakpoints[i];
        }
        if extended.is_empty() {
            extended.extend_from_slice(&self.breakpoints);
        }
        while extended.len() <= i {
            let n = extended.len();
            let ratio = if n >= 3 {
                extended[n - 1] / extended[n - 2] + 1.0
            } else {
                2.0
            };
            extended.push(extended[n - 1] * ratio);
        }
        extended[i]
    }

    /// Walks the pieces up to the one containing `x` and returns
    /// `(value, right slope, integral)` at `x`.
    fn walk(&self, x: f64) -> Result<(f64, f64, f64), CostError> {
        let mut extended = Vec::new();
        let mut tau_even = 1.0;
        let mut integral = 0.0;
        let mut i = 0;
        loop {
            if i + 1 > self.max_index {
                return Err(CostError::BeyondRecursion {
                    x,
                    max_index: self.max_index,
                });
            }
            let lo = self.breakpoint(i, &mut extended);
            let hi = self.breakpoint(i + 1, &mut extended);
            if i >= 2 && i % 2 == 0 {
                let prev = self.breakpoint(i - 1, &mut extended);
                tau_even *= (lo - prev) + 1.0;
            }
            let sloped = i % 2 == 1;
            if x < hi {
                let s = x - lo;
                return Ok(if sloped {
                    (
                        (s + 1.0) * tau_even,
                        tau_even,
                        integral + tau_even * (s + 0.5 * s * s),
                    )
                } else {
                    (tau_even, 0.0, integral + tau_even * s)
                });
            }
            let len = hi - lo;
            integral += if sloped {
                tau_even * (len + 0.5 * len * len)
            } else {
                tau_even * len
            };
            i += 1;
        }
    }
}

/// A cost-function family attached to an arc.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum CostSpec {
    /// `t0 * (1 + alpha * (x / capacity)^beta)`.
    Bpr {
        t0: f64,
        capacity: f64,
        alpha: f64,
        beta: f64,
    },
    Polynomial {
        terms: Vec<Term>,
    },
    Affine {
        slope: f64,
        intercept: f64,
    },
    Constant {
        value: f64,
    },
    RecursivePiecewise(Piecewise),
}

/// Leading monomial `gamma * x^beta` of a cost under power scaling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitCost {
    pub gamma: f64,
    pub beta: f64,
}

/// Outcome of taking `lim tau(T x) / T^beta_ref`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LimitForm {
    Finite(LimitCost),
    /// Degree below the reference exponent: the arc becomes free in the limit.
    Vanishing,
    /// Degree above the reference exponent: the limit price is `+inf`.
    Divergent,
}

fn pow(x: f64, e: f64) -> f64 {
    if e.fract() == 0.0 && e.abs() <= 64.0 {
        x.powi(e as i32)
    } else {
        x.powf(e)
    }
}

fn mono_value(g: f64, e: f64, x: f64) -> f64 {
    if g == 0.0 {
        0.0
    } else if e == 0.0 {
        g
    } else if x == 0.0 {
        0.0
    } else {
        g * pow(x, e)
    }
}

fn mono_derivative(g: f64, e: f64, x: f64) -> f64 {
    if g == 0.0 || e == 0.0 {
        0.0
    } else if x == 0.0 {
        match e.partial_cmp(&1.0) {
            Some(std::cmp::Ordering::Less) => f64::INFINITY,
            Some(std::cmp::Ordering::Equal) => g,
            _ => 0.0,
        }
    } else {
        e * g * pow(x, e - 1.0)
    }
}

fn mono_marginal(g: f64, e: f64, x: f64) -> f64 {
    (1.0 + e) * mono_value(g, e, x)
}

fn mono_integral(g: f64, e: f64, x: f64) -> f64 {
    if g == 0.0 || x == 0.0 {
        0.0
    } else {
        g * pow(x, e + 1.0) / (e + 1.0)
    }
}

fn check_flow(x: f64) -> Result<(), CostError> {
    if x >= 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(CostError::InvalidFlow(x))
    }
}

fn nonneg(name: &str, v: f64) -> Result<(), CostError> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(CostError::InvalidParameter(format!("{name} must be finite and >= 0, got {v}")))
    }
}

fn positive(name: &str, v: f64) -> Result<(), CostError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(CostError::InvalidParameter(format!("{name} must be finite and > 0, got {v}")))
    }
}

impl CostSpec {
    pub fn bpr(t0: f64, capacity: f64, alpha: f64, beta: f64) -> Self {
        CostSpec::Bpr {
            t0,
            capacity,
            alpha,
            beta,
        }
    }

    /// `coefficient * x^exponent`.
    pub fn monomial(coefficient: f64, exponent: f64) -> Self {
        CostSpec::Polynomial {
            terms: vec![Term::new(coefficient, exponent)],
        }
    }

    pub fn polynomial(terms: impl IntoIterator<Item = (f64, f64)>) -> Self {
        CostSpec::Polynomial {
            terms: terms.into_iter().map(|(c, e)| Term::new(c, e)).collect(),
        }
    }

    pub fn affine(slope: f64, intercept: f64) -> Self {
        CostSpec::Affine { slope, intercept }
    }

    pub fn constant(value: f64) -> Self {
        CostSpec::Constant { value }
    }

    pub fn piecewise(breakpoints: Vec<f64>) -> Self {
        CostSpec::RecursivePiecewise(Piecewise::new(breakpoints))
    }

    /// Checks family parameters and that the cost is finite and nonnegative
    /// at zero flow.
    pub fn validate(&self) -> Result<(), CostError> {
        match self {
            CostSpec::Bpr {
                t0,
                capacity,
                alpha,
                beta,
            } => {
                positive("BPR free-flow time", *t0)?;
                positive("BPR capacity", *capacity)?;
                nonneg("BPR alpha", *alpha)?;
                nonneg("BPR beta", *beta)?;
            }
            CostSpec::Polynomial { terms } => {
                for t in terms {
                    nonneg("polynomial coefficient", t.coefficient)?;
                    nonneg("polynomial exponent", t.exponent)?;
                }
            }
            CostSpec::Affine { slope, intercept } => {
                nonneg("affine slope", *slope)?;
                nonneg("affine intercept", *intercept)?;
            }
            CostSpec::Constant { value } => nonneg("constant value", *value)?,
            CostSpec::RecursivePiecewise(p) => p.validate()?,
        }
        let at_zero = self.eval(0.0)?;
        if !at_zero.is_finite() || at_zero < 0.0 {
            return Err(CostError::InvalidParameter(format!(
                "cost at zero flow is {at_zero}"
            )));
        }
        Ok(())
    }

    /// BPR coefficient `gamma = alpha * t0 / u^beta`.
    fn bpr_gamma(t0: f64, capacity: f64, alpha: f64, beta: f64) -> f64 {
        alpha * t0 / pow(capacity, beta)
    }

    /// Travel time `tau(x)`.
    pub fn eval(&self, x: f64) -> Result<f64, CostError> {
        check_flow(x)?;
        Ok(match self {
            CostSpec::Bpr {
                t0,
                capacity,
                alpha,
                beta,
            } => {
                let ratio = if *beta == 0.0 { 1.0 } else { pow(x / capacity, *beta) };
                t0 * (1.0 + alpha * ratio)
            }
            CostSpec::Polynomial { terms } => terms
                .iter()
                .map(|t| mono_value(t.coefficient, t.exponent, x))
                .sum(),
            CostSpec::Affine { slope, intercept } => slope * x + intercept,
            CostSpec::Constant { value } => *value,
            CostSpec::RecursivePiecewise(p) => p.walk(x)?.0,
        })
    }

    /// Right derivative `tau'(x)`.
    pub fn derivative(&self, x: f64) -> Result<f64, CostError> {
        check_flow(x)?;
        Ok(match self {
            CostSpec::Bpr {
                t0,
                capacity,
                alpha,
                beta,
            } => mono_derivative(Self::bpr_gamma(*t0, *capacity, *alpha, *beta), *beta, x),
            CostSpec::Polynomial { terms } => terms
                .iter()
                .map(|t| mono_derivative(t.coefficient, t.exponent, x))
                .sum(),
            CostSpec::Affine { slope, .. } => *slope,
            CostSpec::Constant { .. } => 0.0,
            CostSpec::RecursivePiecewise(p) => p.walk(x)?.1,
        })
    }

    /// Marginal cost `tau(x) + x * tau'(x)`, the derivative of `x * tau(x)`.
    pub fn marginal_cost(&self, x: f64) -> Result<f64, CostError> {
        check_flow(x)?;
        Ok(match self {
            CostSpec::Bpr {
                t0,
                capacity,
                alpha,
                beta,
            } => t0 + mono_marginal(Self::bpr_gamma(*t0, *capacity, *alpha, *beta), *beta, x),
            CostSpec::Polynomial { terms } => terms
                .iter()
                .map(|t| mono_marginal(t.coefficient, t.exponent, x))
                .sum(),
            CostSpec::Affine { slope, intercept } => 2.0 * slope * x + intercept,
            CostSpec::Constant { value } => *value,
            CostSpec::RecursivePiecewise(p) => {
                let (v, d, _) = p.walk(x)?;
                v + x * d
            }
        })
    }

    /// Beckmann integral `int_0^x tau(s) ds`.
    pub fn integral(&self, x: f64) -> Result<f64, CostError> {
        check_flow(x)?;
        Ok(match self {
            CostSpec::Bpr {
                t0,
                capacity,
                alpha,
                beta,
            } => t0 * x + mono_integral(Self::bpr_gamma(*t0, *capacity, *alpha, *beta), *beta, x),
            CostSpec::Polynomial { terms } => terms
                .iter()
                .map(|t| mono_integral(t.coefficient, t.exponent, x))
                .sum(),
            CostSpec::Affine { slope, intercept } => 0.5 * slope * x * x + intercept * x,
            CostSpec::Constant { value } => value * x,
            CostSpec::RecursivePiecewise(p) => p.walk(x)?.2,
        })
    }

    /// Cost of the normalized game: `tau(T * x) / g`.
    pub fn scaled_cost(&self, total: f64, scale: f64, x: f64) -> Result<f64, CostError> {
        if !(scale > 0.0) {
            return Err(CostError::NonPositiveScale(scale));
        }
        check_flow(x)?;
        if !(total >= 0.0) {
            return Err(CostError::InvalidFlow(total));
        }
        Ok(self.eval(total * x)? / scale)
    }

    /// Monomial terms `(gamma, exponent)` with positive coefficient, or
    /// `None` for the piecewise family.
    pub fn monomials(&self) -> Option<Vec<(f64, f64)>> {
        let raw: Vec<(f64, f64)> = match self {
            CostSpec::Bpr {
                t0,
                capacity,
                alpha,
                beta,
            } => vec![
                (Self::bpr_gamma(*t0, *capacity, *alpha, *beta), *beta),
                (*t0, 0.0),
            ],
            CostSpec::Polynomial { terms } => {
                terms.iter().map(|t| (t.coefficient, t.exponent)).collect()
            }
            CostSpec::Affine { slope, intercept } => vec![(*slope, 1.0), (*intercept, 0.0)],
            CostSpec::Constant { value } => vec![(*value, 0.0)],
            CostSpec::RecursivePiecewise(_) => return None,
        };
        Some(raw.into_iter().filter(|(g, _)| *g > 0.0).collect())
    }

    /// Limit of `tau(T x) / T^beta_ref` as `T -> inf`.
    pub fn limit_cost(&self, beta_ref: f64) -> Result<LimitForm, CostError> {
        let terms = self.monomials().ok_or(CostError::NoClosedFormLimit)?;
        let degree = terms.iter().map(|(_, e)| *e).fold(f64::NEG_INFINITY, f64::max);
        if terms.is_empty() || degree < beta_ref - DEGREE_EPS {
            return Ok(LimitForm::Vanishing);
        }
        if degree > beta_ref + DEGREE_EPS {
            return Ok(LimitForm::Divergent);
        }
        let gamma = terms
            .iter()
            .filter(|(_, e)| (e - beta_ref).abs() <= DEGREE_EPS)
            .map(|(g, _)| g)
            .sum();
        Ok(LimitForm::Finite(LimitCost {
            gamma,
            beta: beta_ref,
        }))
    }

    /// Convexity of `tau`, which makes both the Beckmann and the total-cost
    /// objective convex.
    pub fn is_convex(&self) -> bool {
        match self.monomials() {
            Some(terms) => terms.iter().all(|(_, e)| *e == 0.0 || *e >= 1.0),
            None => false,
        }
    }
}

impl LimitCost {
    pub fn to_cost_spec(self) -> CostSpec {
        CostSpec::monomial(self.gamma, self.beta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn bpr_default() -> CostSpec {
        CostSpec::bpr(10.0, 100.0, 0.15, 4.0)
    }

    #[test]
    fn bpr_values() {
        let c = bpr_default();
        assert_eq!(c.eval(0.0).unwrap(), 10.0);
        assert_relative_eq!(c.eval(100.0).unwrap(), 11.5, max_relative = 1e-15);
        assert_relative_eq!(c.derivative(100.0).unwrap(), 0.06, max_relative = 1e-12);
        assert_relative_eq!(c.integral(100.0).unwrap(), 1030.0, max_relative = 1e-12);
    }

    #[test]
    fn bpr_derivative_matches_central_difference() {
        let c = bpr_default();
        let h = 1e-4;
        let fd = (c.eval(100.0 + h).unwrap() - c.eval(100.0 - h).unwrap()) / (2.0 * h);
        assert_relative_eq!(c.derivative(100.0).unwrap(), fd, max_relative = 1e-6);
    }

    #[test]
    fn polynomial_and_constant() {
        let p = CostSpec::monomial(1.0, 4.0);
        assert_eq!(p.derivative(2.0).unwrap(), 32.0);
        assert_eq!(p.marginal_cost(1.0).unwrap(), 5.0);
        assert_eq!(CostSpec::constant(5.0).derivative(3.0).unwrap(), 0.0);
        assert_eq!(CostSpec::constant(1.0).marginal_cost(7.0).unwrap(), 1.0);
    }

    #[test]
    fn affine_values() {
        let a = CostSpec::affine(1.0, 0.0);
        assert_eq!(a.marginal_cost(1.75).unwrap(), 3.5);
        assert_eq!(a.integral(2.0).unwrap(), 2.0);
        assert_eq!(CostSpec::affine(1.0, 1.0).integral(1.0).unwrap(), 1.5);
    }

    #[test]
    fn negative_flow_rejected() {
        let c = bpr_default();
        assert!(matches!(c.eval(-1.0), Err(CostError::InvalidFlow(_))));
        assert!(c.derivative(-1e-9).is_err());
        assert!(c.marginal_cost(f64::NAN).is_err());
        assert!(c.integral(-3.0).is_err());
    }

    #[test]
    fn scaled_cost_cases() {
        let p = CostSpec::monomial(1.0, 4.0);
        assert_relative_eq!(p.scaled_cost(10.0, 1e4, 0.5).unwrap(), 0.0625, max_relative = 1e-15);
        assert_eq!(CostSpec::constant(2.5).scaled_cost(123.0, 1.0, 0.3).unwrap(), 2.5);
        let c = bpr_default();
        let direct = c.eval(1e4).unwrap() / 1e16;
        assert_relative_eq!(c.scaled_cost(1e4, 1e16, 1.0).unwrap(), direct, max_relative = 1e-15);
        assert_relative_eq!(direct, 1.5e-8 + 1e-15, max_relative = 1e-12);
        assert!(matches!(p.scaled_cost(1.0, 0.0, 1.0), Err(CostError::NonPositiveScale(_))));
    }

    #[test]
    fn limit_forms() {
        match bpr_default().limit_cost(4.0).unwrap() {
            LimitForm::Finite(l) => {
                assert_relative_eq!(l.gamma, 1.5e-8, max_relative = 1e-12);
                assert_eq!(l.beta, 4.0);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(CostSpec::constant(1.0).limit_cost(4.0).unwrap(), LimitForm::Vanishing);
        assert_eq!(
            CostSpec::polynomial([(4.0, 2.0), (1.0, 0.0)]).limit_cost(1.0).unwrap(),
            LimitForm::Divergent
        );
        assert_eq!(
            CostSpec::piecewise(vec![0.0, 1.0, 3.0]).limit_cost(1.0),
            Err(CostError::NoClosedFormLimit)
        );
    }

    #[test]
    fn piecewise_follows_recursion() {
        let c = CostSpec::piecewise(vec![0.0, 1.0, 3.0, 10.0]);
        c.validate().unwrap();
        assert_eq!(c.eval(0.5).unwrap(), 1.0);
        assert_eq!(c.eval(2.0).unwrap(), 2.0);
        // flat at tau(b_2) = (3 - 1) + 1 = 3
        assert_eq!(c.eval(3.0).unwrap(), 3.0);
        assert_eq!(c.eval(9.9).unwrap(), 3.0);
        // next sloped piece starts at b_3 = 10 with slope tau(b_2) = 3
        assert_eq!(c.eval(12.0).unwrap(), 9.0);
        assert_eq!(c.derivative(10.0).unwrap(), 3.0);
        assert_eq!(c.derivative(3.0).unwrap(), 0.0);
        // int_0^3 = 1 + (2 + 0.5*4)
        assert_eq!(c.integral(3.0).unwrap(), 5.0);
    }

    #[test]
    fn piecewise_extends_and_stops() {
        let c = CostSpec::piecewise(vec![0.0, 1.0]);
        // extension: b_2 = 2, b_3 = 2 * 3 = 6, b_4 = 6 * 4 = 24
        assert_eq!(c.eval(1.5).unwrap(), 1.5);
        assert_eq!(c.eval(5.0).unwrap(), 2.0);
        assert_eq!(c.eval(7.0).unwrap(), 4.0);
        let short = CostSpec::RecursivePiecewise(Piecewise {
            breakpoints: vec![0.0, 1.0],
            max_index: 3,
        });
        assert!(short.eval(5.0).is_ok());
        assert!(matches!(short.eval(7.0), Err(CostError::BeyondRecursion { .. })));
    }

    #[test]
    fn piecewise_validation() {
        assert!(CostSpec::piecewise(vec![0.0, 1.0, 3.0, 9.0]).validate().is_err());
        assert!(CostSpec::piecewise(vec![0.5, 1.0]).validate().is_err());
        assert!(CostSpec::piecewise(vec![0.0, 2.0, 1.0]).validate().is_err());
        assert!(CostSpec::piecewise(vec![0.0]).validate().is_err());
    }

    #[test]
    fn beta_zero_is_constant() {
        let c = CostSpec::bpr(2.0, 10.0, 0.5, 0.0);
        assert_eq!(c.eval(0.0).unwrap(), 3.0);
        assert_eq!(c.eval(1e6).unwrap(), 3.0);
        assert_eq!(c.derivative(4.0).unwrap(), 0.0);
        assert_eq!(c.marginal_cost(4.0).unwrap(), 3.0);
        assert_eq!(c.integral(2.0).unwrap(), 6.0);
    }

    #[test]
    fn serde_tagging() {
        let c = bpr_default();
        let s = serde_json::to_string(&c).unwrap();
        assert!(s.contains("\"family\":\"bpr\""));
        assert_eq!(serde_json::from_str::<CostSpec>(&s).unwrap(), c);
        let p: CostSpec =
            serde_json::from_str(r#"{"family":"recursive_piecewise","breakpoints":[0,1,3]}"#).unwrap();
        assert_eq!(p, CostSpec::piecewise(vec![0.0, 1.0, 3.0]));
    }
}
