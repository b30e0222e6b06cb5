//! Mamdani fuzzy inference: min conjunction and implication, max aggregation, discrete
//! centroid defuzzification.

mod color;

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use color::{ColorDetector, DEFAULT_COLOR_RULES};

use crate::scalar::Scalar;

pub const RULES_SCHEMA: &str = "idclass.fuzzy/v1";
pub const DEFAULT_GRID_POINTS: usize = 1001;

#[derive(Debug, Error)]
pub enum FuzzyError {
    #[error("no rule fired")]
    NoRuleFired,
    #[error("no colour rule fired for this pixel")]
    UnknownColor,
    #[error("invalid rule base: {0}")]
    Schema(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MembershipFunction<T> {
    Trapezoid(T, T, T, T),
    Triangle(T, T, T),
}

impl<T: Scalar> MembershipFunction<T> {
    /// Checks `a <= b <= c (<= d)`.
    pub fn new_trapezoid(a: T, b: T, c: T, d: T) -> Result<Self, FuzzyError> {
        if a <= b && b <= c && c <= d {
            Ok(MembershipFunction::Trapezoid(a, b, c, d))
        } else {
            Err(FuzzyError::Schema(format!(
                "trapezoid parameters out of order: {a} {b} {c} {d}"
            )))
        }
    }

    pub fn new_triangle(a: T, b: T, c: T) -> Result<Self, FuzzyError> {
        if a <= b && b <= c {
            Ok(MembershipFunction::Triangle(a, b, c))
        } else {
            Err(FuzzyError::Schema(format!(
                "triangle parameters out of order: {a} {b} {c}"
            )))
        }
    }

    pub fn eval(&self, x: T) -> T {
        match *self {
            MembershipFunction::Trapezoid(a, b, c, d) => trapezoid(x, a, b, c, d),
            MembershipFunction::Triangle(a, b, c) => trapezoid(x, a, b, b, c),
        }
    }

    /// Closed interval outside which the membership is zero.
    pub fn support(&self) -> (T, T) {
        match *self {
            MembershipFunction::Trapezoid(a, _, _, d) => (a, d),
            MembershipFunction::Triangle(a, _, c) => (a, c),
        }
    }

    /// Interval where the membership is one.
    pub fn core(&self) -> (T, T) {
        match *self {
            MembershipFunction::Trapezoid(_, b, c, _) => (b, c),
            MembershipFunction::Triangle(_, b, _) => (b, b),
        }
    }

    /// Point of the core closest to its middle: the apex of a triangle.
    pub fn peak(&self) -> T {
        match *self {
            MembershipFunction::Trapezoid(_, b, c, _) => (b + c) / T::lit(2.0),
            MembershipFunction::Triangle(_, b, _) => b,
        }
    }
}

#[inline]
fn trapezoid<T: Scalar>(x: T, a: T, b: T, c: T, d: T) -> T {
    if x.is_nan() || x < a || x > d {
        T::zero()
    } else if x >= b && x <= c {
        T::one()
    } else if x < b {
        (x - a) / (b - a)
    } else {
        (d - x) / (d - c)
    }
}

pub fn eval_membership<T: Scalar>(mf: &MembershipFunction<T>, x: T) -> T {
    mf.eval(x)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Term<T> {
    pub name: String,
    pub mf: MembershipFunction<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinguisticVariable<T> {
    pub name: String,
    pub domain: (T, T),
    pub terms: Vec<Term<T>>,
}

impl<T: Scalar> LinguisticVariable<T> {
    pub fn new(name: &str, domain: (T, T), terms: Vec<Term<T>>) -> Result<Self, FuzzyError> {
        if domain.0 >= domain.1 {
            return Err(FuzzyError::Schema(format!("{name}: empty domain")));
        }
        for (i, t) in terms.iter().enumerate() {
            if terms[..i].iter().any(|o| o.name == t.name) {
                return Err(FuzzyError::Schema(format!("{name}: duplicate term {}", t.name)));
            }
            let (lo, hi) = t.mf.support();
            if lo < domain.0 || hi > domain.1 {
                return Err(FuzzyError::Schema(format!(
                    "{name}: term {} extends outside the domain",
                    t.name
                )));
            }
        }
        if terms.is_empty() {
            return Err(FuzzyError::Schema(format!("{name}: no terms")));
        }
        Ok(LinguisticVariable {
            name: name.to_string(),
            domain,
            terms,
        })
    }

    pub fn term_index(&self, name: &str) -> Option<usize> {
        self.terms.iter().position(|t| t.name == name)
    }
}

/// Conjunction of one optional term per input. `None` means the input is ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct FuzzyRule<T> {
    pub antecedent: Vec<Option<usize>>,
    pub consequent: usize,
    pub weight: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MamdaniSystem<T> {
    inputs: Vec<LinguisticVariable<T>>,
    output: LinguisticVariable<T>,
    rules: Vec<FuzzyRule<T>>,
    grid_points: usize,
}

impl<T: Scalar> MamdaniSystem<T> {
    pub fn new(
        inputs: Vec<LinguisticVariable<T>>,
        output: LinguisticVariable<T>,
        rules: Vec<FuzzyRule<T>>,
        grid_points: usize,
    ) -> Result<Self, FuzzyError> {
        if rules.is_empty() {
            return Err(FuzzyError::Schema("rule base is empty".into()));
        }
        if grid_points < 2 {
            return Err(FuzzyError::Schema("grid needs at least 2 points".into()));
        }
        for (i, r) in rules.iter().enumerate() {
            if r.antecedent.len() != inputs.len() {
                return Err(FuzzyError::Schema(format!(
                    "rule {i}: {} antecedent terms for {} inputs",
                    r.antecedent.len(),
                    inputs.len()
                )));
            }
            for (v, t) in inputs.iter().zip(&r.antecedent) {
                if t.is_some_and(|t| t >= v.terms.len()) {
                    return Err(FuzzyError::Schema(format!("rule {i}: unknown {} term", v.name)));
                }
            }
            if r.consequent >= output.terms.len() {
                return Err(FuzzyError::Schema(format!("rule {i}: unknown output term")));
            }
            if !(r.weight > T::zero() && r.weight <= T::one()) {
                return Err(FuzzyError::Schema(format!("rule {i}: weight outside (0, 1]")));
            }
        }
        Ok(MamdaniSystem {
            inputs,
            output,
            rules,
            grid_points,
        })
    }

    pub fn inputs(&self) -> &[LinguisticVariable<T>] {
        &self.inputs
    }

    pub fn output(&self) -> &LinguisticVariable<T> {
        &self.output
    }

    pub fn rules(&self) -> &[FuzzyRule<T>] {
        &self.rules
    }

    /// Rule firing strengths: weighted minimum of the antecedent memberships.
    pub fn firing_strengths(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.inputs.len(), "input count");
        self.rules
            .iter()
            .map(|r| {
                let mut s = T::one();
                for ((var, term), &xi) in self.inputs.iter().zip(&r.antecedent).zip(x) {
                    if let Some(t) = term {
                        s = s.min(var.terms[*t].mf.eval(xi));
                    }
                }
                s * r.weight
            })
            .collect()
    }

    /// Crisp output: centroid of the aggregated output set sampled on a uniform grid.
    pub fn infer(&self, x: &[T]) -> Result<T, FuzzyError> {
        let strengths = self.firing_strengths(x);
        // max over rules sharing a consequent commutes with the min clipping
        let mut clip = vec![T::zero(); self.output.terms.len()];
        for (r, &s) in self.rules.iter().zip(&strengths) {
            clip[r.consequent] = clip[r.consequent].max(s);
        }
        let fired: Vec<(usize, T)> = clip
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > T::zero())
            .map(|(i, &c)| (i, c))
            .collect();
        if fired.is_empty() {
            return Err(FuzzyError::NoRuleFired);
        }
        let (lo, hi) = self.output.domain;
        let step = (hi - lo) / T::from_usize_lossy(self.grid_points - 1);
        let mut num = T::zero();
        let mut den = T::zero();
        for i in 0..self.grid_points {
            let y = lo + step * T::from_usize_lossy(i);
            let mut mu = T::zero();
            for &(t, c) in &fired {
                mu = mu.max(self.output.terms[t].mf.eval(y).min(c));
            }
            num = num + y * mu;
            den = den + mu;
        }
        if den <= T::zero() {
            return Err(FuzzyError::NoRuleFired);
        }
        Ok(num / den)
    }

    /// Output term whose peak is closest to `y`; the earlier term wins ties.
    pub fn nearest_output_term(&self, y: T) -> usize {
        let mut best = 0;
        let mut best_d = T::infinity();
        for (i, t) in self.output.terms.iter().enumerate() {
            let d = (t.mf.peak() - y).abs();
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }

    pub fn from_json(text: &str) -> Result<Self, FuzzyError> {
        let file: RuleFile = serde_json::from_str(text).map_err(|e| FuzzyError::Schema(e.to_string()))?;
        file.into_system()
    }

    pub fn load(path: &Path) -> Result<Self, FuzzyError> {
        let text = std::fs::read_to_string(path).map_err(|e| FuzzyError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Self::from_json(&text)
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TermSpec {
    name: String,
    kind: String,
    params: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VariableSpec {
    name: String,
    domain: [f64; 2],
    terms: Vec<TermSpec>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RuleSpec {
    #[serde(rename = "if")]
    antecedent: Vec<Option<usize>>,
    then: usize,
    #[serde(default = "one")]
    weight: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RuleFile {
    schema: String,
    #[serde(default = "default_grid")]
    grid_points: usize,
    inputs: Vec<VariableSpec>,
    output: VariableSpec,
    rules: Vec<RuleSpec>,
}

fn default_grid() -> usize {
    DEFAULT_GRID_POINTS
}

fn conv<T: Scalar>(v: f64) -> T {
    T::lit(v)
}

impl VariableSpec {
    fn build<T: Scalar>(&self) -> Result<LinguisticVariable<T>, FuzzyError> {
        let terms = self
            .terms
            .iter()
            .map(|t| {
                let p: Vec<T> = t.params.iter().map(|&v| conv(v)).collect();
                let mf = match (t.kind.as_str(), p.as_slice()) {
                    ("trapezoid", &[a, b, c, d]) => MembershipFunction::new_trapezoid(a, b, c, d)?,
                    ("triangle", &[a, b, c]) => MembershipFunction::new_triangle(a, b, c)?,
                    (k, p) => {
                        return Err(FuzzyError::Schema(format!(
                            "term {}: kind {k:?} with {} parameters",
                            t.name,
                            p.len()
                        )))
                    }
                };
                Ok(Term {
                    name: t.name.clone(),
                    mf,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        LinguisticVariable::new(&self.name, (conv(self.domain[0]), conv(self.domain[1])), terms)
    }
}

impl RuleFile {
    fn into_system<T: Scalar>(self) -> Result<MamdaniSystem<T>, FuzzyError> {
        if self.schema != RULES_SCHEMA {
            return Err(FuzzyError::Schema(format!("unsupported schema {:?}", self.schema)));
        }
        let inputs = self
            .inputs
            .iter()
            .map(VariableSpec::build)
            .collect::<Result<Vec<_>, _>>()?;
        let output = self.output.build()?;
        let rules = self
            .rules
            .into_iter()
            .map(|r| FuzzyRule {
                antecedent: r.antecedent,
                consequent: r.then,
                weight: conv(r.weight),
            })
            .collect();
        MamdaniSystem::new(inputs, output, rules, self.grid_points)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tri(a: f64, b: f64, c: f64) -> MembershipFunction<f64> {
        MembershipFunction::new_triangle(a, b, c).unwrap()
    }

    fn var(name: &str, mfs: &[MembershipFunction<f64>]) -> LinguisticVariable<f64> {
        let terms = mfs
            .iter()
            .enumerate()
            .map(|(i, &mf)| Term {
                name: format!("t{i}"),
                mf,
            })
            .collect();
        LinguisticVariable::new(name, (0.0, 1.0), terms).unwrap()
    }

    /// One input with a ramp term, rules mapping it onto the given output triangles.
    fn system(outputs: &[MembershipFunction<f64>], weights: &[f64]) -> MamdaniSystem<f64> {
        let input = var("x", &[MembershipFunction::new_trapezoid(0.0, 1.0, 1.0, 1.0).unwrap()]);
        let rules = weights
            .iter()
            .enumerate()
            .map(|(i, &w)| FuzzyRule {
                antecedent: vec![Some(0)],
                consequent: i,
                weight: w,
            })
            .collect();
        MamdaniSystem::new(vec![input], var("y", outputs), rules, DEFAULT_GRID_POINTS).unwrap()
    }

    #[test]
    fn membership_cases() {
        let t = MembershipFunction::new_trapezoid(0.0, 1.0, 2.0, 3.0).unwrap();
        assert_eq!(t.eval(1.5), 1.0);
        assert_eq!(t.eval(-1.0), 0.0);
        assert_eq!(t.eval(2.5), 0.5);
        let r = tri(0.0, 1.0, 2.0);
        assert_eq!(r.eval(1.0), 1.0);
        assert_eq!(r.eval(0.5), 0.5);
        assert_eq!(eval_membership(&r, 3.0), 0.0);
        let shoulder = MembershipFunction::new_trapezoid(0.0, 0.0, 0.2, 0.4).unwrap();
        assert_eq!(shoulder.eval(0.0), 1.0);
        assert!(MembershipFunction::new_trapezoid(0.0, 2.0, 1.0, 3.0).is_err());
    }

    #[test]
    fn symmetric_consequent_centroid() {
        let sys = system(&[tri(0.2, 0.4, 0.6)], &[1.0]);
        assert!((sys.infer(&[1.0]).unwrap() - 0.4).abs() < 1e-6);
        // input 0.5 fires the rule at strength 0.5
        assert!((sys.infer(&[0.5]).unwrap() - 0.4).abs() < 1e-6);
        assert!(matches!(sys.infer(&[0.0]), Err(FuzzyError::NoRuleFired)));
    }

    #[test]
    fn two_disjoint_triangles_match_analytic_centroid() {
        let sys = system(&[tri(0.1, 0.2, 0.3), tri(0.6, 0.75, 0.9)], &[1.0, 0.5]);
        let y = sys.infer(&[1.0]).unwrap();
        // full triangle area 0.1; triangle of half-width 0.15 clipped at 0.5 keeps 3/4 of 0.15
        let (a1, a2) = (0.1, 0.15 * 0.75);
        let expected = (a1 * 0.2 + a2 * 0.75) / (a1 + a2);
        assert!((y - expected).abs() < 1e-3, "{y} vs {expected}");
    }

    #[test]
    fn schema_errors() {
        assert!(MamdaniSystem::<f64>::from_json("{}").is_err());
        let bad = DEFAULT_COLOR_RULES.replace("\"then\": 12", "\"then\": 99");
        assert!(matches!(MamdaniSystem::<f64>::from_json(&bad), Err(FuzzyError::Schema(_))));
        let bad = DEFAULT_COLOR_RULES.replace("idclass.fuzzy/v1", "other");
        assert!(MamdaniSystem::<f64>::from_json(&bad).is_err());
    }

    #[test]
    fn f32_system_loads() {
        let sys = MamdaniSystem::<f32>::from_json(DEFAULT_COLOR_RULES).unwrap();
        assert_eq!(sys.rules().len(), 54);
    }

    proptest! {
        #[test]
        fn membership_in_unit_interval(x in -10.0f64..10.0, a in -2.0f64..2.0, w in prop::array::uniform3(0.0f64..2.0)) {
            let (b, c) = (a + w[0], a + w[0] + w[1]);
            let mf = MembershipFunction::new_trapezoid(a, b, c, c + w[2]).unwrap();
            let m = mf.eval(x);
            prop_assert!((0.0..=1.0).contains(&m));
            let eps = 1e-7;
            // piecewise linear with slopes at most 1/min(width), so no jumps
            let slope_bound = 1.0 / w.iter().cloned().fold(f64::INFINITY, f64::min).max(1e-3);
            prop_assert!((mf.eval(x + eps) - m).abs() <= slope_bound * eps + 1e-12 || w.iter().any(|&v| v < 1e-3));
        }

        #[test]
        fn output_stays_in_domain(x in 0.0f64..=1.0, s1 in 0.05f64..1.0, s2 in 0.05f64..1.0) {
            let sys = system(&[tri(0.0, 0.1, 0.3), tri(0.5, 0.9, 1.0)], &[s1, s2]);
            if let Ok(y) = sys.infer(&[x]) {
                prop_assert!((0.0..=1.0).contains(&y));
            }
        }

        #[test]
        fn common_scaling_keeps_single_rule_centroid(k in 0.01f64..=1.0) {
            let sys = system(&[tri(0.3, 0.5, 0.7)], &[k]);
            prop_assert!((sys.infer(&[1.0]).unwrap() - 0.5).abs() < 1e-6);
        }
    }
}
