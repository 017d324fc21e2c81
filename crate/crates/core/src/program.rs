//! Solver-agnostic mixed-integer conic program.
//!
//! Rows are sparse affine expressions with a sense and a right-hand side;
//! cones are `||tail|| <= head` with affine head and tail entries. The
//! objective is a list of named terms grouped into stages, combined either
//! one stage at a time or as a weighted sum (see [`ObjectiveMode`]).

use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VarId(pub usize);

impl fmt::Display for VarId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "x{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarKind {
    Continuous,
    Binary,
    Integer,
}

impl VarKind {
    pub fn is_discrete(self) -> bool {
        self != VarKind::Continuous
    }

    fn as_str(self) -> &'static str {
        match self {
            VarKind::Continuous => "continuous",
            VarKind::Binary => "binary",
            VarKind::Integer => "integer",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "continuous" => Some(VarKind::Continuous),
            "binary" => Some(VarKind::Binary),
            "integer" => Some(VarKind::Integer),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
    pub lower: f64,
    pub upper: f64,
    /// Position in the horizon for time-indexed quantities.
    pub time: Option<usize>,
    /// Continuous variable that is integral at every integral feasible point.
    pub implied_integral: bool,
}

impl Variable {
    pub fn is_fixed(&self) -> bool {
        self.lower == self.upper
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LinExpr {
    pub terms: Vec<(VarId, f64)>,
    pub constant: f64,
}

impl LinExpr {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        Self {
            terms: Vec::new(),
            constant: c,
        }
    }

    pub fn var(v: VarId) -> Self {
        Self::term(v, 1.0)
    }

    pub fn term(v: VarId, c: f64) -> Self {
        Self {
            terms: vec![(v, c)],
            constant: 0.0,
        }
    }

    pub fn add(mut self, v: VarId, c: f64) -> Self {
        self.push(v, c);
        self
    }

    pub fn push(&mut self, v: VarId, c: f64) {
        if c != 0.0 {
            self.terms.push((v, c));
        }
    }

    pub fn plus_const(mut self, c: f64) -> Self {
        self.constant += c;
        self
    }

    /// `self += c * other`
    pub fn add_scaled(&mut self, other: &LinExpr, c: f64) {
        for &(v, a) in &other.terms {
            self.push(v, a * c);
        }
        self.constant += other.constant * c;
    }

    pub fn scaled(&self, c: f64) -> LinExpr {
        let mut e = LinExpr::new();
        e.add_scaled(self, c);
        e
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(v, c)| c * x[v.0]).sum::<f64>() + self.constant
    }

    /// Merges repeated variables and drops zero coefficients, keeping first-seen order.
    pub fn compact(&mut self) {
        let mut out: Vec<(VarId, f64)> = Vec::with_capacity(self.terms.len());
        for &(v, c) in &self.terms {
            match out.iter_mut().find(|(w, _)| *w == v) {
                Some(slot) => slot.1 += c,
                None => out.push((v, c)),
            }
        }
        out.retain(|&(_, c)| c != 0.0);
        self.terms = out;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

impl Sense {
    fn as_str(self) -> &'static str {
        match self {
            Sense::Le => "<=",
            Sense::Ge => ">=",
            Sense::Eq => "==",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "<=" => Some(Sense::Le),
            ">=" => Some(Sense::Ge),
            "==" => Some(Sense::Eq),
            _ => None,
        }
    }
}

/// `expr (sense) rhs`
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearRow {
    pub name: String,
    pub expr: LinExpr,
    pub sense: Sense,
    pub rhs: f64,
}

impl LinearRow {
    pub fn new(name: impl Into<String>, expr: LinExpr, sense: Sense, rhs: f64) -> Self {
        Self {
            name: name.into(),
            expr,
            sense,
            rhs,
        }
    }

    /// Amount by which `x` violates the row (0 when satisfied).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let lhs = self.expr.eval(x);
        match self.sense {
            Sense::Le => (lhs - self.rhs).max(0.0),
            Sense::Ge => (self.rhs - lhs).max(0.0),
            Sense::Eq => (lhs - self.rhs).abs(),
        }
    }
}

/// `||tail||_2 <= head`
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cone {
    pub name: String,
    pub head: LinExpr,
    pub tail: Vec<LinExpr>,
}

impl Cone {
    pub fn violation(&self, x: &[f64]) -> f64 {
        let norm = self.tail.iter().map(|e| e.eval(x).powi(2)).sum::<f64>().sqrt();
        (norm - self.head.eval(x)).max(0.0)
    }
}

/// At most one member may be nonzero; `weights` order the members for branching.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sos1 {
    pub name: String,
    pub vars: Vec<VarId>,
    pub weights: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveTerm {
    pub name: String,
    pub expr: LinExpr,
    /// Weight inside the stage.
    pub weight: f64,
    /// Normalization constant; the term contributes `weight * expr / norm`.
    pub norm: f64,
    pub stage: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub name: String,
    /// Whether the stage is optimized over the discrete variables. Stages
    /// that are not only refine continuous variables once the plan is fixed.
    pub discrete: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ObjectiveMode {
    Stage(usize),
    /// One weight per stage; missing entries count as zero.
    Weighted(Vec<f64>),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProgramStats {
    pub variables: usize,
    pub continuous: usize,
    pub binaries: usize,
    pub integers: usize,
    pub rows: usize,
    pub equalities: usize,
    pub cones: usize,
    pub sos1: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConicProgram {
    pub variables: Vec<Variable>,
    pub rows: Vec<LinearRow>,
    pub cones: Vec<Cone>,
    pub sos1: Vec<Sos1>,
    pub stages: Vec<Stage>,
    pub objective: Vec<ObjectiveTerm>,
    pub mode: ObjectiveMode,
    /// Stage weights used when the stages are combined into one objective.
    pub stage_weights: Vec<f64>,
}

impl Default for ConicProgram {
    fn default() -> Self {
        Self {
            variables: Vec::new(),
            rows: Vec::new(),
            cones: Vec::new(),
            sos1: Vec::new(),
            stages: Vec::new(),
            objective: Vec::new(),
            mode: ObjectiveMode::Stage(0),
            stage_weights: Vec::new(),
        }
    }
}

impl ConicProgram {
    pub fn add_var(&mut self, name: impl Into<String>, kind: VarKind, lower: f64, upper: f64) -> VarId {
        self.variables.push(Variable {
            name: name.into(),
            kind,
            lower,
            upper,
            time: None,
            implied_integral: false,
        });
        VarId(self.variables.len() - 1)
    }

    pub fn var(&self, v: VarId) -> &Variable {
        &self.variables[v.0]
    }

    pub fn var_mut(&mut self, v: VarId) -> &mut Variable {
        &mut self.variables[v.0]
    }

    pub fn add_row(&mut self, row: LinearRow) {
        self.rows.push(row);
    }

    pub fn discrete_vars(&self) -> Vec<VarId> {
        (0..self.variables.len())
            .filter(|&i| self.variables[i].kind.is_discrete())
            .map(VarId)
            .collect()
    }

    /// Weighted objective of one stage.
    pub fn stage_expr(&self, stage: usize) -> LinExpr {
        let mut e = LinExpr::new();
        for t in self.objective.iter().filter(|t| t.stage == stage) {
            e.add_scaled(&t.expr, t.weight / t.norm);
        }
        e.compact();
        e
    }

    pub fn stage_value(&self, stage: usize, x: &[f64]) -> f64 {
        self.objective
            .iter()
            .filter(|t| t.stage == stage)
            .map(|t| t.weight * t.expr.eval(x) / t.norm)
            .sum()
    }

    pub fn term_value(&self, name: &str, x: &[f64]) -> Option<f64> {
        self.objective.iter().find(|t| t.name == name).map(|t| t.expr.eval(x))
    }

    /// Expression minimized under the current [`ObjectiveMode`].
    pub fn objective_expr(&self) -> LinExpr {
        match &self.mode {
            ObjectiveMode::Stage(k) => self.stage_expr(*k),
            ObjectiveMode::Weighted(w) => {
                let mut e = LinExpr::new();
                for (k, &wk) in w.iter().enumerate() {
                    if wk != 0.0 {
                        e.add_scaled(&self.stage_expr(k), wk);
                    }
                }
                e.compact();
                e
            }
        }
    }

    pub fn stats(&self) -> ProgramStats {
        let count = |k: VarKind| self.variables.iter().filter(|v| v.kind == k).count();
        ProgramStats {
            variables: self.variables.len(),
            continuous: count(VarKind::Continuous),
            binaries: count(VarKind::Binary),
            integers: count(VarKind::Integer),
            rows: self.rows.len(),
            equalities: self.rows.iter().filter(|r| r.sense == Sense::Eq).count(),
            cones: self.cones.len(),
            sos1: self.sos1.len(),
        }
    }

    /// Largest violation of bounds, rows and cones at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let bounds = self
            .variables
            .iter()
            .zip(x)
            .map(|(v, &xi)| (v.lower - xi).max(xi - v.upper).max(0.0))
            .fold(0.0, f64::max);
        let rows = self.rows.iter().map(|r| r.violation(x)).fold(0.0, f64::max);
        let cones = self.cones.iter().map(|c| c.violation(x)).fold(0.0, f64::max);
        bounds.max(rows).max(cones)
    }

    pub fn max_integrality_violation(&self, x: &[f64]) -> f64 {
        self.variables
            .iter()
            .zip(x)
            .filter(|(v, _)| v.kind.is_discrete())
            .map(|(_, &xi)| (xi - xi.round()).abs())
            .fold(0.0, f64::max)
    }

    /// Structural checks: references in range, SOS members binary, bounds ordered.
    pub fn validate(&self) -> Result<()> {
        let n = self.variables.len();
        let check = |e: &LinExpr, what: &str| -> Result<()> {
            match e.terms.iter().find(|(v, _)| v.0 >= n) {
                Some((v, _)) => Err(Error::Build(format!("{what} references missing variable {v}"))),
                None => Ok(()),
            }
        };
        for v in &self.variables {
            if v.lower > v.upper || v.lower.is_nan() || v.upper.is_nan() {
                return Err(Error::Build(format!("variable `{}` has empty bounds", v.name)));
            }
        }
        for r in &self.rows {
            check(&r.expr, &format!("row `{}`", r.name))?;
        }
        for c in &self.cones {
            check(&c.head, &format!("cone `{}`", c.name))?;
            for e in &c.tail {
                check(e, &format!("cone `{}`", c.name))?;
            }
        }
        for s in &self.sos1 {
            if s.vars.len() != s.weights.len() {
                return Err(Error::Build(format!("SOS1 `{}` weights do not match members", s.name)));
            }
            for v in &s.vars {
                if v.0 >= n || self.variables[v.0].kind != VarKind::Binary {
                    return Err(Error::Build(format!("SOS1 `{}` member {v} is not a binary", s.name)));
                }
            }
        }
        for t in &self.objective {
            check(&t.expr, &format!("objective term `{}`", t.name))?;
            if t.stage >= self.stages.len() {
                return Err(Error::Build(format!("objective term `{}` has no stage", t.name)));
            }
        }
        Ok(())
    }

    /// Line-oriented text listing with stable ordering. Fields are tab separated;
    /// expressions read `constant;index:coef,index:coef,...`.
    pub fn to_text(&self) -> String {
        let mut out = String::from("# conic program\n");
        for s in &self.stages {
            let _ = writeln!(out, "stage\t{}\t{}", clean(&s.name), u8::from(s.discrete));
        }
        let sw: Vec<String> = self.stage_weights.iter().map(|x| format!("{x:?}")).collect();
        let _ = writeln!(out, "weights\t{}", sw.join(","));
        match &self.mode {
            ObjectiveMode::Stage(k) => {
                let _ = writeln!(out, "mode\tstage\t{k}");
            }
            ObjectiveMode::Weighted(w) => {
                let w: Vec<String> = w.iter().map(|x| format!("{x:?}")).collect();
                let _ = writeln!(out, "mode\tweighted\t{}", w.join(","));
            }
        }
        for v in &self.variables {
            let time = v.time.map_or("-".to_string(), |t| t.to_string());
            let _ = writeln!(
                out,
                "var\t{}\t{:?}\t{:?}\t{}\t{}\t{}",
                v.kind.as_str(),
                v.lower,
                v.upper,
                time,
                u8::from(v.implied_integral),
                clean(&v.name)
            );
        }
        for r in &self.rows {
            let _ = writeln!(
                out,
                "row\t{}\t{:?}\t{}\t{}",
                r.sense.as_str(),
                r.rhs,
                expr_text(&r.expr),
                clean(&r.name)
            );
        }
        for c in &self.cones {
            let mut parts = vec![expr_text(&c.head)];
            parts.extend(c.tail.iter().map(expr_text));
            let _ = writeln!(out, "cone\t{}\t{}", parts.join("|"), clean(&c.name));
        }
        for s in &self.sos1 {
            let members: Vec<String> = s
                .vars
                .iter()
                .zip(&s.weights)
                .map(|(v, w)| format!("{}:{w:?}", v.0))
                .collect();
            let _ = writeln!(out, "sos1\t{}\t{}", members.join(","), clean(&s.name));
        }
        for t in &self.objective {
            let _ = writeln!(
                out,
                "obj\t{}\t{:?}\t{:?}\t{}\t{}",
                t.stage,
                t.weight,
                t.norm,
                expr_text(&t.expr),
                clean(&t.name)
            );
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut p = ConicProgram {
            mode: ObjectiveMode::Stage(0),
            ..Default::default()
        };
        for (no, line) in text.lines().enumerate() {
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |what: &str| Error::Schema(format!("program line {}: {what}", no + 1));
            let f: Vec<&str> = line.split('\t').collect();
            let field = |i: usize| f.get(i).copied().ok_or_else(|| bad("missing field"));
            let num = |i: usize| -> Result<f64> {
                field(i)?.parse::<f64>().map_err(|_| bad("bad number"))
            };
            match f[0] {
                "stage" => p.stages.push(Stage {
                    name: field(1)?.to_string(),
                    discrete: field(2)? == "1",
                }),
                "weights" => {
                    p.stage_weights = field(1)?
                        .split(',')
                        .filter(|s| !s.is_empty())
                        .map(|s| s.parse::<f64>().map_err(|_| bad("bad weight")))
                        .collect::<Result<_>>()?
                }
                "mode" => {
                    p.mode = match field(1)? {
                        "stage" => ObjectiveMode::Stage(field(2)?.parse().map_err(|_| bad("bad stage"))?),
                        "weighted" => ObjectiveMode::Weighted(
                            field(2)?
                                .split(',')
                                .filter(|s| !s.is_empty())
                                .map(|s| s.parse::<f64>().map_err(|_| bad("bad weight")))
                                .collect::<Result<_>>()?,
                        ),
                        _ => return Err(bad("unknown mode")),
                    }
                }
                "var" => {
                    let time = match field(4)? {
                        "-" => None,
                        t => Some(t.parse().map_err(|_| bad("bad time"))?),
                    };
                    p.variables.push(Variable {
                        kind: VarKind::parse(field(1)?).ok_or_else(|| bad("bad kind"))?,
                        lower: num(2)?,
                        upper: num(3)?,
                        time,
                        implied_integral: field(5)? == "1",
                        name: field(6)?.to_string(),
                    });
                }
                "row" => p.rows.push(LinearRow {
                    sense: Sense::parse(field(1)?).ok_or_else(|| bad("bad sense"))?,
                    rhs: num(2)?,
                    expr: parse_expr(field(3)?).ok_or_else(|| bad("bad expression"))?,
                    name: field(4)?.to_string(),
                }),
                "cone" => {
                    let mut exprs = field(1)?
                        .split('|')
                        .map(|s| parse_expr(s).ok_or_else(|| bad("bad expression")))
                        .collect::<Result<Vec<_>>>()?;
                    let head = exprs.remove(0);
                    p.cones.push(Cone {
                        name: field(2)?.to_string(),
                        head,
                        tail: exprs,
                    });
                }
                "sos1" => {
                    let mut vars = Vec::new();
                    let mut weights = Vec::new();
                    for m in field(1)?.split(',').filter(|s| !s.is_empty()) {
                        let (v, w) = m.split_once(':').ok_or_else(|| bad("bad SOS1 member"))?;
                        vars.push(VarId(v.parse().map_err(|_| bad("bad index"))?));
                        weights.push(w.parse().map_err(|_| bad("bad weight"))?);
                    }
                    p.sos1.push(Sos1 {
                        name: field(2)?.to_string(),
                        vars,
                        weights,
                    });
                }
                "obj" => p.objective.push(ObjectiveTerm {
                    stage: field(1)?.parse().map_err(|_| bad("bad stage"))?,
                    weight: num(2)?,
                    norm: num(3)?,
                    expr: parse_expr(field(4)?).ok_or_else(|| bad("bad expression"))?,
                    name: field(5)?.to_string(),
                }),
                other => return Err(bad(&format!("unknown record `{other}`"))),
            }
        }
        p.validate()?;
        Ok(p)
    }
}

fn clean(name: &str) -> String {
    name.replace(['\t', '\n', '\r'], " ")
}

fn expr_text(e: &LinExpr) -> String {
    let terms: Vec<String> = e.terms.iter().map(|(v, c)| format!("{}:{c:?}", v.0)).collect();
    format!("{:?};{}", e.constant, terms.join(","))
}

fn parse_expr(s: &str) -> Option<LinExpr> {
    let (c, rest) = s.split_once(';')?;
    let mut e = LinExpr::constant(c.parse().ok()?);
    for t in rest.split(',').filter(|t| !t.is_empty()) {
        let (v, c) = t.split_once(':')?;
        e.terms.push((VarId(v.parse().ok()?), c.parse().ok()?));
    }
    Some(e)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ConicProgram {
        let mut p = ConicProgram::default();
        p.stages.push(Stage {
            name: "main".into(),
            discrete: true,
        });
        let y = p.add_var("y", VarKind::Binary, 0.0, 1.0);
        let x = p.add_var("x[t0]", VarKind::Continuous, f64::NEG_INFINITY, 2.5);
        p.var_mut(x).time = Some(0);
        p.add_row(LinearRow::new("link", LinExpr::var(x).add(y, -0.1), Sense::Le, 0.0));
        p.cones.push(Cone {
            name: "c".into(),
            head: LinExpr::constant(1.0).add(y, 1.0),
            tail: vec![LinExpr::var(x)],
        });
        p.objective.push(ObjectiveTerm {
            name: "cost".into(),
            expr: LinExpr::term(x, -1.0),
            weight: 1.0,
            norm: 3.0,
            stage: 0,
        });
        p
    }

    #[test]
    fn text_dump_round_trips() {
        let p = sample();
        let again = ConicProgram::from_text(&p.to_text()).unwrap();
        assert_eq!(again, p);
    }

    #[test]
    fn violations() {
        let p = sample();
        assert_eq!(p.max_violation(&[1.0, 0.1]), 0.0);
        assert!((p.max_violation(&[0.0, 0.5]) - 0.5).abs() < 1e-12);
        assert!((p.stage_value(0, &[0.0, 0.3]) + 0.1).abs() < 1e-12);
    }

    #[test]
    fn compact_merges_terms() {
        let mut e = LinExpr::var(VarId(1)).add(VarId(0), 2.0).add(VarId(1), -1.0);
        e.compact();
        assert_eq!(e.terms, vec![(VarId(0), 2.0)]);
    }
}
