//! Custom problems from a JSON descriptor with expression-valued data.
//!
//! Expressions may use `x`, `y`, `r = |(x, y)|`, `eps`, `pi`, the operators
//! `+ - * / ^` and comparisons, and the functions `exp`, `ln`, `sqrt`,
//! `abs`, `sin`, `cos`, `tan`, `sinh`, `cosh`, `tanh`, `min`, `max`,
//! `atan2(y, x)` and `if(cond, a, b)`. Integer literals are read as
//! floats. A field may also be a list of `{"when": cond, "value": expr}`
//! pieces; the first piece whose condition holds wins, and a piece without
//! `when` is the fallback. The literal string `"inf"` means no obstacle.
//!
//! ```json
//! {
//!   "name": "disk",
//!   "domain": { "polygon": [[-1,-1],[1,-1],[1,1],[-1,1]], "tags": ["D"] },
//!   "initial_refinements": 3,
//!   "f": [{ "when": "r < 0.5", "value": "-1" }, { "value": "1" }],
//!   "obstacle": "0.1 + 0 * x",
//!   "dirichlet": "0"
//! }
//! ```

use std::path::Path;
use std::sync::Arc;

use evalexpr::error::EvalexprResultValue;
use evalexpr::{build_operator_tree, Context, DefaultNumericTypes, EvalexprError, EvalexprResult, Node, Value};
use serde::Deserialize;

use crate::benchmarks::{ExactSolution, ProblemDefinition};
use crate::error::{Error, Result};
use crate::fem::{constant, Field, ProblemData};
use crate::mesh::{build_mesh, BoundaryTag, Mesh, MeshSnapshot, Point};

/// Variables visible to an expression at one point.
struct PointContext {
    vars: [Value; 5],
}

const NAMES: [&str; 5] = ["x", "y", "r", "eps", "pi"];

impl PointContext {
    fn new(p: Point, eps: f64) -> Self {
        PointContext {
            vars: [
                Value::Float(p[0]),
                Value::Float(p[1]),
                Value::Float(p[0].hypot(p[1])),
                Value::Float(eps),
                Value::Float(std::f64::consts::PI),
            ],
        }
    }
}

fn unary(argument: &Value, f: fn(f64) -> f64) -> EvalexprResultValue {
    Ok(Value::Float(f(argument.as_number()?)))
}

fn binary(argument: &Value, f: fn(f64, f64) -> f64) -> EvalexprResultValue {
    let args = argument.as_fixed_len_tuple(2)?;
    Ok(Value::Float(f(args[0].as_number()?, args[1].as_number()?)))
}

impl Context for PointContext {
    type NumericTypes = DefaultNumericTypes;

    fn get_value(&self, identifier: &str) -> Option<&Value> {
        NAMES.iter().position(|n| *n == identifier).map(|i| &self.vars[i])
    }

    fn call_function(&self, identifier: &str, argument: &Value) -> EvalexprResultValue {
        match identifier {
            "exp" => unary(argument, f64::exp),
            "ln" => unary(argument, f64::ln),
            "sqrt" => unary(argument, f64::sqrt),
            "abs" => unary(argument, f64::abs),
            "sin" => unary(argument, f64::sin),
            "cos" => unary(argument, f64::cos),
            "tan" => unary(argument, f64::tan),
            "tanh" => unary(argument, f64::tanh),
            "cosh" => unary(argument, f64::cosh),
            "sinh" => unary(argument, f64::sinh),
            "atan2" => binary(argument, f64::atan2),
            "min" => binary(argument, f64::min),
            "max" => binary(argument, f64::max),
            _ => Err(EvalexprError::FunctionIdentifierNotFound(identifier.to_string())),
        }
    }

    fn are_builtin_functions_disabled(&self) -> bool {
        false
    }

    fn set_builtin_functions_disabled(&mut self, _disabled: bool) -> EvalexprResult<(), DefaultNumericTypes> {
        Err(EvalexprError::ContextNotMutable)
    }
}

/// Rewrites integer literals as float literals so that `1/2` is `0.5`.
fn floatify(src: &str) -> String {
    let chars: Vec<char> = src.chars().collect();
    let mut out = String::with_capacity(src.len() + 8);
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let prev_ident = i > 0 && (chars[i - 1].is_alphanumeric() || chars[i - 1] == '_' || chars[i - 1] == '.');
        if c.is_ascii_digit() && !prev_ident {
            let start = i;
            let digits = |i: &mut usize| {
                while *i < chars.len() && chars[*i].is_ascii_digit() {
                    *i += 1;
                }
            };
            digits(&mut i);
            let mut float = false;
            if chars.get(i) == Some(&'.') {
                float = true;
                i += 1;
                digits(&mut i);
            }
            if matches!(chars.get(i), Some('e') | Some('E')) {
                let mut j = i + 1;
                if matches!(chars.get(j), Some('+') | Some('-')) {
                    j += 1;
                }
                if chars.get(j).is_some_and(|c| c.is_ascii_digit()) {
                    float = true;
                    i = j;
                    digits(&mut i);
                }
            }
            out.extend(&chars[start..i]);
            if !float {
                out.push_str(".0");
            }
            continue;
        }
        out.push(c);
        i += 1;
    }
    out
}

/// A compiled scalar expression in `x`, `y`, `r`, `eps`.
#[derive(Clone, Debug)]
pub struct Expression {
    source: String,
    tree: Arc<Node>,
}

impl Expression {
    pub fn parse(source: &str) -> Result<Self> {
        let tree = build_operator_tree::<DefaultNumericTypes>(&floatify(source)).map_err(|e| Error::Expression {
            expr: source.to_string(),
            message: e.to_string(),
        })?;
        Ok(Expression {
            source: source.to_string(),
            tree: Arc::new(tree),
        })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    fn eval_value(&self, p: Point, eps: f64) -> Result<Value> {
        self.tree
            .eval_with_context(&PointContext::new(p, eps))
            .map_err(|e| Error::Expression {
                expr: self.source.clone(),
                message: e.to_string(),
            })
    }

    pub fn eval(&self, p: Point, eps: f64) -> Result<f64> {
        match self.eval_value(p, eps)? {
            Value::Float(v) => Ok(v),
            Value::Int(v) => Ok(v as f64),
            other => Err(Error::Expression {
                expr: self.source.clone(),
                message: format!("expected a number, got {other:?}"),
            }),
        }
    }

    pub fn eval_bool(&self, p: Point, eps: f64) -> Result<bool> {
        match self.eval_value(p, eps)? {
            Value::Boolean(b) => Ok(b),
            other => Err(Error::Expression {
                expr: self.source.clone(),
                message: format!("expected a condition, got {other:?}"),
            }),
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
pub struct PieceSpec {
    pub when: Option<String>,
    pub value: FieldSpec,
}

/// Field as written in the descriptor.
#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum FieldSpec {
    Number(f64),
    Expr(String),
    Pieces(Vec<PieceSpec>),
}

/// Compiled piecewise field.
#[derive(Clone, Debug)]
pub enum FieldExpr {
    Constant(f64),
    Expr(Expression),
    Pieces(Vec<(Option<Expression>, FieldExpr)>),
}

impl FieldExpr {
    pub fn compile(spec: &FieldSpec) -> Result<Self> {
        Ok(match spec {
            FieldSpec::Number(v) => FieldExpr::Constant(*v),
            FieldSpec::Expr(s) if s.trim() == "inf" => FieldExpr::Constant(f64::INFINITY),
            FieldSpec::Expr(s) => FieldExpr::Expr(Expression::parse(s)?),
            FieldSpec::Pieces(pieces) => {
                if pieces.is_empty() {
                    return Err(Error::Config("piecewise field needs at least one piece".into()));
                }
                FieldExpr::Pieces(
                    pieces
                        .iter()
                        .map(|p| Ok((p.when.as_deref().map(Expression::parse).transpose()?, FieldExpr::compile(&p.value)?)))
                        .collect::<Result<_>>()?,
                )
            }
        })
    }

    pub fn eval(&self, p: Point, eps: f64) -> Result<f64> {
        match self {
            FieldExpr::Constant(v) => Ok(*v),
            FieldExpr::Expr(e) => e.eval(p, eps),
            FieldExpr::Pieces(pieces) => {
                for (when, value) in pieces {
                    let hit = match when {
                        None => true,
                        Some(c) => c.eval_bool(p, eps)?,
                    };
                    if hit {
                        return value.eval(p, eps);
                    }
                }
                Err(Error::Expression {
                    expr: "piecewise field".into(),
                    message: format!("no piece applies at ({}, {})", p[0], p[1]),
                })
            }
        }
    }

    /// Evaluates at a few probe points to surface errors before solving.
    pub fn check(&self, probes: &[Point], eps: f64) -> Result<()> {
        for &p in probes {
            self.eval(p, eps)?;
        }
        Ok(())
    }

    /// Turns the expression into a [`Field`]; evaluation errors become NaN
    /// (they are ruled out beforehand with [`FieldExpr::check`]).
    pub fn into_field(self, eps: f64, sign: f64) -> Field {
        if let FieldExpr::Constant(c) = self {
            return constant(sign * c);
        }
        Arc::new(move |p| self.eval(p, eps).map(|v| sign * v).unwrap_or(f64::NAN))
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum DomainSpec {
    /// Polygon triangulated as a fan from its vertex centroid. `tags` holds
    /// one tag per side, or a single tag for all sides.
    Polygon { polygon: Vec<Point>, tags: Vec<BoundaryTag> },
    Mesh { mesh: MeshSnapshot },
}

#[derive(Clone, Debug, Deserialize)]
pub struct ExactSpec {
    pub value: FieldSpec,
    pub gradient: [FieldSpec; 2],
    /// Level-set expression whose sign change marks where the solution is
    /// not smooth (used to refine the error quadrature there).
    pub kink: Option<String>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemDescriptor {
    pub name: String,
    pub eps: Option<f64>,
    pub domain: DomainSpec,
    #[serde(default)]
    pub initial_refinements: usize,
    pub f: FieldSpec,
    pub neumann: Option<FieldSpec>,
    pub obstacle: Option<FieldSpec>,
    pub dirichlet: Option<FieldSpec>,
    pub exact: Option<ExactSpec>,
    /// The data describe a lower-obstacle problem `u ≥ ψ` and are negated.
    #[serde(default)]
    pub lower_obstacle: bool,
}

struct ExprSolution {
    value: FieldExpr,
    gradient: [FieldExpr; 2],
    kink: Option<Expression>,
    eps: f64,
}

impl ExactSolution for ExprSolution {
    fn value(&self, p: Point) -> f64 {
        self.value.eval(p, self.eps).unwrap_or(f64::NAN)
    }

    fn gradient(&self, p: Point) -> [f64; 2] {
        [0, 1].map(|k| self.gradient[k].eval(p, self.eps).unwrap_or(f64::NAN))
    }

    fn crosses_kink(&self, x: &[Point; 3]) -> bool {
        let Some(k) = &self.kink else { return false };
        let s: Vec<f64> = x.iter().map(|&p| k.eval(p, self.eps).unwrap_or(0.0)).collect();
        s.iter().any(|v| *v < 0.0) && s.iter().any(|v| *v > 0.0)
    }
}

/// Fan triangulation of a polygon that is star-shaped about its vertex
/// centroid.
pub fn polygon_mesh(polygon: &[Point], tags: &[BoundaryTag]) -> Result<Mesh> {
    let n = polygon.len();
    if n < 3 {
        return Err(Error::Config("polygon needs at least three vertices".into()));
    }
    let tags: Vec<BoundaryTag> = match tags.len() {
        1 => vec![tags[0]; n],
        m if m == n => tags.to_vec(),
        m => return Err(Error::Config(format!("polygon has {n} sides but {m} boundary tags"))),
    };
    let c = [
        polygon.iter().map(|p| p[0]).sum::<f64>() / n as f64,
        polygon.iter().map(|p| p[1]).sum::<f64>() / n as f64,
    ];
    let mut vertices = polygon.to_vec();
    vertices.push(c);
    let orientation: f64 = (0..n).map(|i| crate::mesh::signed_area(c, polygon[i], polygon[(i + 1) % n])).sum();
    let triangles: Vec<[usize; 3]> = (0..n).map(|i| [n, i, (i + 1) % n]).collect();
    for t in &triangles {
        let a = crate::mesh::signed_area(vertices[t[0]], vertices[t[1]], vertices[t[2]]);
        if a * orientation <= 0.0 {
            return Err(Error::Config("polygon is not star-shaped about its vertex centroid".into()));
        }
    }
    let boundary: Vec<([usize; 2], BoundaryTag)> = (0..n).map(|i| ([i, (i + 1) % n], tags[i])).collect();
    build_mesh(vertices, &triangles, &boundary)
}

impl ProblemDescriptor {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("problem descriptor: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Builds the problem for a given `ε` (falling back to the descriptor's own).
    pub fn build(&self, eps: Option<f64>) -> Result<ProblemDefinition> {
        let eps = eps
            .or(self.eps)
            .ok_or_else(|| Error::Config(format!("problem {}: no eps given", self.name)))?;
        let mesh = match &self.domain {
            DomainSpec::Polygon { polygon, tags } => polygon_mesh(polygon, tags)?,
            DomainSpec::Mesh { mesh } => Mesh::from_snapshot(mesh)?,
        };
        let probes: Vec<Point> = mesh.vertices().to_vec();
        let sign = if self.lower_obstacle { -1.0 } else { 1.0 };
        let compile = |spec: Option<&FieldSpec>, default: f64| -> Result<Field> {
            let fe = match spec {
                Some(s) => FieldExpr::compile(s)?,
                None => FieldExpr::Constant(default),
            };
            fe.check(&probes, eps)?;
            Ok(fe.into_field(eps, sign))
        };
        let obstacle_default = if self.lower_obstacle { f64::NEG_INFINITY } else { f64::INFINITY };
        let data = ProblemData::new(eps, compile(Some(&self.f), 0.0)?)
            .with_neumann(compile(self.neumann.as_ref(), 0.0)?)
            .with_obstacle(compile(self.obstacle.as_ref(), obstacle_default)?)
            .with_dirichlet(compile(self.dirichlet.as_ref(), 0.0)?);
        data.validate()?;
        let exact = match &self.exact {
            None => None,
            Some(spec) => {
                let value = FieldExpr::compile(&spec.value)?;
                let gradient = [FieldExpr::compile(&spec.gradient[0])?, FieldExpr::compile(&spec.gradient[1])?];
                value.check(&probes, eps)?;
                for g in &gradient {
                    g.check(&probes, eps)?;
                }
                let kink = spec.kink.as_deref().map(Expression::parse).transpose()?;
                Some(Arc::new(ExprSolution {
                    value,
                    gradient,
                    kink,
                    eps,
                }) as Arc<dyn ExactSolution>)
            }
        };
        Ok(ProblemDefinition {
            name: self.name.clone(),
            eps,
            mesh,
            initial_refinements: self.initial_refinements,
            data,
            exact,
            negated: self.lower_obstacle,
            initial_mesh: match self.domain {
                DomainSpec::Polygon { .. } => "polygon fan about the vertex centroid".into(),
                DomainSpec::Mesh { .. } => "mesh given in the descriptor".into(),
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integer_literals_become_floats() {
        assert_eq!(floatify("1/2 + x2 * 3.5 - 1e-3 + 2E5"), "1.0/2.0 + x2 * 3.5 - 1e-3 + 2E5");
        let e = Expression::parse("1/2").unwrap();
        assert_eq!(e.eval([0.0, 0.0], 1.0).unwrap(), 0.5);
    }

    #[test]
    fn grammar() {
        let p = [3.0, 4.0];
        let cases = [
            ("x + y", 7.0),
            ("r", 5.0),
            ("r^2/2 - ln(r) - 1/2", 12.5 - 5f64.ln() - 0.5),
            ("exp(0) + sqrt(16) + abs(-2)", 7.0),
            ("-2*eps^2 + x", 3.0 - 2.0 * 0.01),
            ("if(r >= 1, 1, -1)", 1.0),
            ("min(x, y) * max(x, y)", 12.0),
            ("sin(pi/2) + cos(0) + tan(0)", 2.0),
            ("cosh(0) + 2*sinh(0) + tanh(0)", 1.0),
            ("atan2(y, x)", 4f64.atan2(3.0)),
        ];
        for (src, want) in cases {
            let got = Expression::parse(src).unwrap().eval(p, 0.1).unwrap();
            assert!((got - want).abs() < 1e-14, "{src}: {got} vs {want}");
        }
    }

    #[test]
    fn errors_are_reported() {
        assert!(matches!(Expression::parse("(x"), Err(Error::Expression { .. })));
        let e = Expression::parse("foo(x)").unwrap();
        assert!(e.eval([0.0, 0.0], 1.0).is_err());
        let e = Expression::parse("z").unwrap();
        assert!(e.eval([0.0, 0.0], 1.0).is_err());
    }

    #[test]
    fn piecewise_fields() {
        let spec: FieldSpec = serde_json::from_str(r#"[{"when": "r < 1", "value": "-1"}, {"value": 2}]"#).unwrap();
        let f = FieldExpr::compile(&spec).unwrap();
        assert_eq!(f.eval([0.5, 0.0], 1.0).unwrap(), -1.0);
        assert_eq!(f.eval([1.5, 0.0], 1.0).unwrap(), 2.0);
        let spec: FieldSpec = serde_json::from_str(r#"[{"when": "x < 0", "value": "1"}]"#).unwrap();
        let f = FieldExpr::compile(&spec).unwrap();
        assert!(f.eval([1.0, 0.0], 1.0).is_err());
        let inf: FieldSpec = serde_json::from_str(r#""inf""#).unwrap();
        assert_eq!(FieldExpr::compile(&inf).unwrap().eval([0.0; 2], 1.0).unwrap(), f64::INFINITY);
    }

    #[test]
    fn polygon_fan() {
        let m = polygon_mesh(&[[0.0, 0.0], [2.0, 0.0], [2.0, 1.0], [0.0, 1.0]], &[BoundaryTag::Dirichlet]).unwrap();
        assert_eq!(m.n_elements(), 4);
        assert!((m.total_area() - 2.0).abs() < 1e-15);
        // clockwise input works too
        let m = polygon_mesh(&[[0.0, 0.0], [0.0, 1.0], [1.0, 0.0]], &[BoundaryTag::Neumann]).unwrap();
        assert!((m.total_area() - 0.5).abs() < 1e-15);
        // an arrow shape is not star-shaped about its vertex centroid
        let arrow = [[0.0, 0.0], [10.0, 0.0], [10.0, 1.0], [1.0, 1.0], [1.0, 10.0], [0.0, 10.0]];
        assert!(polygon_mesh(&arrow, &[BoundaryTag::Neumann]).is_err());
        assert!(polygon_mesh(&arrow[..3], &[BoundaryTag::Neumann, BoundaryTag::Neumann]).is_err());
    }

    #[test]
    fn descriptor_builds_example2_copy() {
        let json = r#"{
            "name": "radial",
            "eps": 0.1,
            "domain": {"polygon": [[-1,-1],[1,-1],[1,1],[-1,1]], "tags": ["D"]},
            "initial_refinements": 2,
            "f": [{"when": "r >= 1", "value": "-2*eps^2 + r^2/2 - ln(r) - 1/2"},
                  {"value": "-2*eps^2 + (r^2 - 1)/2"}],
            "obstacle": 0,
            "dirichlet": "r^2/2 - ln(r) - 1/2",
            "exact": {"value": "if(r >= 1, r^2/2 - ln(r) - 1/2, 0)",
                      "gradient": ["if(r >= 1, (1 - 1/r^2) * x, 0)", "if(r >= 1, (1 - 1/r^2) * y, 0)"],
                      "kink": "r - 1"},
            "lower_obstacle": true
        }"#;
        let d = ProblemDescriptor::from_json(json).unwrap();
        let p = d.build(None).unwrap();
        let reference = crate::benchmarks::example2(0.1);
        for q in [[0.3, 0.2], [0.9, 0.8], [-1.0, 0.5]] {
            assert!(((p.data.f)(q) - (reference.data.f)(q)).abs() < 1e-14);
            assert_eq!((p.data.obstacle)(q), 0.0);
            let (a, b) = (p.canonical_exact().unwrap(), reference.canonical_exact().unwrap());
            assert!((a.value(q) - b.value(q)).abs() < 1e-14);
            assert!((a.gradient(q)[1] - b.gradient(q)[1]).abs() < 1e-14);
        }
        for q in [[1.0, 0.3], [-0.2, -1.0]] {
            assert!(((p.data.dirichlet)(q) - (reference.data.dirichlet)(q)).abs() < 1e-14);
        }
        assert!(p.exact.as_ref().unwrap().crosses_kink(&[[0.9, 0.0], [1.1, 0.0], [1.0, 0.1]]));
        assert_eq!(p.initial_mesh().n_elements(), 64);
        assert!(ProblemDescriptor::from_json(r#"{"name": "x"}"#).is_err());
        let mut d2 = d.clone();
        d2.eps = None;
        assert!(d2.build(None).is_err());
        assert_eq!(d2.build(Some(0.3)).unwrap().eps, 0.3);
    }
}
