//! Truncated-power penalized splines for varying coefficients.
//!
//! A coefficient `beta(u)` of degree `d` with knots `u_1 < ... < u_k` is
//!
//! ```text
//! beta(u) = sum_{j=0..d} c_j u^j + sum_{k=1..K} c_{d+k} (u - u_k)_+^d
//! ```
//!
//! and `(u - u_k)_+^d` is exactly zero whenever `u <= u_k`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `(u - knot)_+^degree`; zero on `u <= knot`, and 1 above the knot when
/// `degree == 0`.
#[inline]
pub fn truncated_power(u: f64, knot: f64, degree: usize) -> f64 {
    if u <= knot {
        0.0
    } else {
        (u - knot).powi(degree as i32)
    }
}

/// Basis values in design order: `1, u, .., u^d, b_1(u), .., b_K(u)`.
fn basis(degree: usize, knots: &[f64], u: f64) -> impl Iterator<Item = f64> + '_ {
    (0..=degree)
        .map(move |j| u.powi(j as i32))
        .chain(knots.iter().map(move |&k| truncated_power(u, k, degree)))
}

pub fn design_row(degree: usize, knots: &[f64], u: f64) -> Vec<f64> {
    basis(degree, knots, u).collect()
}

/// A varying coefficient: degree, knots and one coefficient per basis
/// function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineSpec {
    pub degree: usize,
    pub knots: Vec<f64>,
    pub coefficients: Vec<f64>,
}

impl SplineSpec {
    pub fn new(degree: usize, knots: Vec<f64>, coefficients: Vec<f64>) -> Result<Self> {
        let spec = SplineSpec {
            degree,
            knots,
            coefficients,
        };
        spec.check()?;
        Ok(spec)
    }

    pub fn constant(value: f64) -> Self {
        SplineSpec {
            degree: 0,
            knots: Vec::new(),
            coefficients: vec![value],
        }
    }

    /// Zero coefficients for the given layout.
    pub fn zeros(degree: usize, knots: Vec<f64>) -> Self {
        let n = basis_len(degree, knots.len());
        SplineSpec {
            degree,
            knots,
            coefficients: vec![0.0; n],
        }
    }

    pub fn check(&self) -> Result<()> {
        check_knots(&self.knots)?;
        let want = basis_len(self.degree, self.knots.len());
        if self.coefficients.len() != want {
            return Err(Error::InvalidParameter(format!(
                "spline of degree {} with {} knots needs {} coefficients, got {}",
                self.degree,
                self.knots.len(),
                want,
                self.coefficients.len()
            )));
        }
        Ok(())
    }

    pub fn basis_len(&self) -> usize {
        basis_len(self.degree, self.knots.len())
    }

    pub fn eval(&self, u: f64) -> f64 {
        eval_coefficient(self, u)
    }
}

pub fn basis_len(degree: usize, knot_count: usize) -> usize {
    degree + knot_count + 1
}

fn check_knots(knots: &[f64]) -> Result<()> {
    if knots.iter().any(|k| !k.is_finite()) {
        return Err(Error::InvalidParameter("knots must be finite".into()));
    }
    if knots.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter(
            "knots must be strictly increasing".into(),
        ));
    }
    Ok(())
}

/// Evaluates the coefficient; bitwise equal to `dot(design_row, coefficients)`
/// accumulated left to right.
pub fn eval_coefficient(spec: &SplineSpec, u: f64) -> f64 {
    basis(spec.degree, &spec.knots, u)
        .zip(&spec.coefficients)
        .fold(0.0, |acc, (b, c)| acc + b * c)
}

/// Knots at the `k/(K+1)` quantiles of `samples` (linear interpolation
/// between order statistics, position `1 + q(N-1)`).
pub fn choose_knots(samples: &[f64], count: usize) -> Result<Vec<f64>> {
    if count == 0 {
        return Ok(Vec::new());
    }
    if samples.len() < 2 {
        return Err(Error::InvalidParameter(
            "knot placement needs at least two samples".into(),
        ));
    }
    if samples.iter().any(|s| !s.is_finite()) {
        return Err(Error::InvalidParameter("samples must be finite".into()));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let knots: Vec<f64> = (1..=count)
        .map(|k| {
            let q = k as f64 / (count + 1) as f64;
            let h = q * (n - 1) as f64;
            let lo = h.floor() as usize;
            let frac = h - lo as f64;
            if lo + 1 < n {
                sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
            } else {
                sorted[n - 1]
            }
        })
        .collect();
    if knots.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::DegenerateKnots { count });
    }
    Ok(knots)
}

/// Ridge penalty on the knot coefficients only: `diag(0, .., 0, l, .., l)`.
pub fn penalty_matrix(degree: usize, knot_count: usize, lambda: f64) -> Result<DMatrix<f64>> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "penalty weight must be finite and nonnegative, got {lambda}"
        )));
    }
    let n = basis_len(degree, knot_count);
    Ok(DMatrix::from_fn(n, n, |i, j| {
        if i == j && i > degree {
            lambda
        } else {
            0.0
        }
    }))
}

/// How a spline's knots are obtained when fitting.
#[derive(Debug, Clone, PartialEq)]
pub enum KnotRule {
    /// Quantile knots over the gaps seen in the data.
    Auto {
        count: usize,
    },
    Fixed(Vec<f64>),
}

/// Spline layout declared in a model spec (no coefficient values).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSplineConfig", into = "RawSplineConfig")]
pub struct SplineConfig {
    pub degree: usize,
    pub knots: KnotRule,
}

impl SplineConfig {
    pub fn constant() -> Self {
        SplineConfig {
            degree: 0,
            knots: KnotRule::Fixed(Vec::new()),
        }
    }

    pub fn auto(degree: usize, count: usize) -> Self {
        SplineConfig {
            degree,
            knots: KnotRule::Auto { count },
        }
    }

    pub fn fixed(degree: usize, knots: Vec<f64>) -> Self {
        SplineConfig {
            degree,
            knots: KnotRule::Fixed(knots),
        }
    }

    pub fn knot_count(&self) -> usize {
        match &self.knots {
            KnotRule::Auto { count } => *count,
            KnotRule::Fixed(k) => k.len(),
        }
    }

    pub fn basis_len(&self) -> usize {
        basis_len(self.degree, self.knot_count())
    }

    pub fn resolve_knots(&self, samples: &[f64]) -> Result<Vec<f64>> {
        match &self.knots {
            KnotRule::Auto { count } => choose_knots(samples, *count),
            KnotRule::Fixed(k) => {
                check_knots(k)?;
                Ok(k.clone())
            }
        }
    }
}

#[derive(Serialize, Deserialize)]
struct RawSplineConfig {
    degree: usize,
    #[serde(default = "KnotsField::empty")]
    knots: KnotsField,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    count: Option<usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum KnotsField {
    Keyword(String),
    List(Vec<f64>),
}

impl KnotsField {
    fn empty() -> Self {
        KnotsField::List(Vec::new())
    }
}

impl TryFrom<RawSplineConfig> for SplineConfig {
    type Error = String;

    fn try_from(raw: RawSplineConfig) -> std::result::Result<Self, String> {
        let knots = match raw.knots {
            KnotsField::Keyword(k) if k == "auto" => KnotRule::Auto {
                count: raw.count.ok_or("`knots: \"auto\"` requires `count`")?,
            },
            KnotsField::Keyword(k) => return Err(format!("unknown knots keyword `{k}`")),
            KnotsField::List(list) => KnotRule::Fixed(list),
        };
        Ok(SplineConfig {
            degree: raw.degree,
            knots,
        })
    }
}

impl From<SplineConfig> for RawSplineConfig {
    fn from(c: SplineConfig) -> Self {
        match c.knots {
            KnotRule::Auto { count } => RawSplineConfig {
                degree: c.degree,
                knots: KnotsField::Keyword("auto".into()),
                count: Some(count),
            },
            KnotRule::Fixed(list) => RawSplineConfig {
                degree: c.degree,
                knots: KnotsField::List(list),
                count: None,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn truncated_power_examples() {
        assert_eq!(truncated_power(2.0, 3.0, 1), 0.0);
        assert_eq!(truncated_power(5.0, 3.0, 1), 2.0);
        assert_eq!(truncated_power(3.0, 3.0, 2), 0.0);
        assert_eq!(truncated_power(3.5, 3.0, 0), 1.0);
        assert_eq!(truncated_power(3.0, 3.0, 0), 0.0);
    }

    #[test]
    fn design_row_examples() {
        assert_eq!(design_row(1, &[2.0], 4.0), vec![1.0, 4.0, 2.0]);
        assert_eq!(design_row(0, &[], 7.0), vec![1.0]);
        assert_eq!(
            design_row(2, &[0.0, 1.0], 0.5),
            vec![1.0, 0.5, 0.25, 0.25, 0.0]
        );
    }

    #[test]
    fn eval_examples() {
        let s = SplineSpec::new(1, vec![2.0], vec![1.0, 0.5, -0.25]).unwrap();
        assert_eq!(s.eval(4.0), 2.5);
        let z = SplineSpec::zeros(2, vec![0.0, 1.0]);
        assert_eq!(z.eval(0.7), 0.0);
        assert_eq!(SplineSpec::constant(3.25).eval(-11.0), 3.25);
    }

    #[test]
    fn spec_rejects_bad_layout() {
        assert!(SplineSpec::new(1, vec![2.0], vec![1.0]).is_err());
        assert!(SplineSpec::new(1, vec![2.0, 1.0], vec![0.0; 4]).is_err());
    }

    #[test]
    fn knot_examples() {
        let s: Vec<f64> = (0..=10).map(f64::from).collect();
        assert_eq!(choose_knots(&s, 1).unwrap(), vec![5.0]);
        assert!(choose_knots(&s, 0).unwrap().is_empty());
        assert_eq!(
            choose_knots(&[1.0, 2.0, 3.0, 4.0], 3).unwrap(),
            vec![1.75, 2.5, 3.25]
        );
    }

    #[test]
    fn knots_collide_on_repeated_samples() {
        let s = [1.0, 1.0, 1.0, 1.0, 1.0, 2.0];
        assert!(matches!(
            choose_knots(&s, 2),
            Err(Error::DegenerateKnots { count: 2 })
        ));
        assert!(choose_knots(&[1.0], 1).is_err());
    }

    #[test]
    fn penalty_examples() {
        let p = penalty_matrix(1, 2, 0.5).unwrap();
        assert_eq!(
            p,
            DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0.0, 0.0, 0.5, 0.5]))
        );
        assert_eq!(penalty_matrix(2, 3, 0.0).unwrap(), DMatrix::zeros(6, 6));
        assert_eq!(penalty_matrix(3, 0, 7.0).unwrap(), DMatrix::zeros(4, 4));
        assert!(penalty_matrix(1, 1, -1.0).is_err());
        assert!(penalty_matrix(1, 1, f64::NAN).is_err());
    }

    #[test]
    fn config_json_forms() {
        let a: SplineConfig =
            serde_json::from_str(r#"{"degree":1,"knots":"auto","count":2}"#).unwrap();
        assert_eq!(a, SplineConfig::auto(1, 2));
        let f: SplineConfig = serde_json::from_str(r#"{"degree":0,"knots":[1.5]}"#).unwrap();
        assert_eq!(f, SplineConfig::fixed(0, vec![1.5]));
        let c: SplineConfig = serde_json::from_str(r#"{"degree":0}"#).unwrap();
        assert_eq!(c, SplineConfig::constant());
        assert!(serde_json::from_str::<SplineConfig>(r#"{"degree":1,"knots":"auto"}"#).is_err());
        let back: SplineConfig = serde_json::from_str(&serde_json::to_string(&a).unwrap()).unwrap();
        assert_eq!(back, a);
    }

    fn spec_strategy() -> impl Strategy<Value = SplineSpec> {
        (0usize..4, prop::collection::vec(-5.0f64..5.0, 0..5)).prop_flat_map(|(d, mut knots)| {
            knots.sort_by(f64::total_cmp);
            knots.dedup();
            let n = basis_len(d, knots.len());
            prop::collection::vec(-3.0f64..3.0, n)
                .prop_map(move |c| SplineSpec::new(d, knots.clone(), c).unwrap())
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn zero_branch_is_exact(k in -10.0f64..10.0, below in 0.0f64..10.0, d in 0usize..5) {
            prop_assert_eq!(truncated_power(k - below, k, d), 0.0);
        }

        #[test]
        fn eval_matches_design_row_dot(spec in spec_strategy(), u in -8.0f64..8.0) {
            let row = design_row(spec.degree, &spec.knots, u);
            let dot = row.iter().zip(&spec.coefficients).fold(0.0, |a, (b, c)| a + b * c);
            prop_assert_eq!(eval_coefficient(&spec, u), dot);
        }

        #[test]
        fn knot_permutation_invariance(mut s in prop::collection::vec(-100.0f64..100.0, 8..40), k in 0usize..4) {
            let a = choose_knots(&s, k);
            s.reverse();
            s.rotate_left(3);
            let b = choose_knots(&s, k);
            prop_assert_eq!(a.ok(), b.ok());
        }
    }
}
