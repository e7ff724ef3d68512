use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::expr::Expr;
use crate::error::{Error, EvalError, Result};

/// Tolerance on `|f(0,0)|` accepted at registration.
pub const EQUILIBRIUM_TOL: f64 = 1e-12;

/// Closed interval `[lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Interval { lo, hi }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }
}

impl From<[f64; 2]> for Interval {
    fn from([lo, hi]: [f64; 2]) -> Self {
        Interval { lo, hi }
    }
}

impl From<Interval> for [f64; 2] {
    fn from(i: Interval) -> Self {
        [i.lo, i.hi]
    }
}

/// Writes `f(x, u)` into the output slice.
pub type NativeMap = dyn Fn(&[f64], &[f64], &mut [f64]) + Send + Sync;
/// Returns `(∂f/∂x, ∂f/∂u)` at `(x, u)`.
pub type JacobianFn = dyn Fn(&[f64], &[f64]) -> (DMatrix<f64>, DMatrix<f64>) + Send + Sync;

#[derive(Clone)]
enum Map {
    Expr(Vec<Expr>),
    Native(Arc<NativeMap>),
}

/// A discrete-time system `x(t+1) = f(x(t), u(t))` restricted to a state
/// box and an input box. Immutable once built.
#[derive(Clone)]
pub struct SystemModel {
    name: String,
    n: usize,
    m: usize,
    state_box: Vec<Interval>,
    input_box: Vec<Interval>,
    map: Map,
    jacobian: Option<Arc<JacobianFn>>,
}

impl fmt::Debug for SystemModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut d = f.debug_struct("SystemModel");
        d.field("name", &self.name)
            .field("n", &self.n)
            .field("m", &self.m)
            .field("state_box", &self.state_box)
            .field("input_box", &self.input_box);
        if let Map::Expr(exprs) = &self.map {
            let text: Vec<String> = exprs.iter().map(ToString::to_string).collect();
            d.field("f", &text);
        }
        d.field("analytic_jacobian", &self.jacobian.is_some()).finish()
    }
}

impl SystemModel {
    /// Builds a model from parsed expressions, one per state component.
    pub fn from_exprs(
        name: impl Into<String>,
        m: usize,
        exprs: Vec<Expr>,
        state_box: Vec<Interval>,
        input_box: Vec<Interval>,
    ) -> Result<Self> {
        let n = exprs.len();
        for (i, e) in exprs.iter().enumerate() {
            let (xi, ui) = e.max_indices();
            if xi > n || ui > m {
                return Err(Error::InvalidModel(format!(
                    "f{} references a variable beyond n={n}, m={m}",
                    i + 1
                )));
            }
        }
        Self::register(name.into(), n, m, state_box, input_box, Map::Expr(exprs), None)
    }

    /// Builds a model from a hand-written map.
    pub fn from_fn<F>(
        name: impl Into<String>,
        n: usize,
        m: usize,
        state_box: Vec<Interval>,
        input_box: Vec<Interval>,
        f: F,
    ) -> Result<Self>
    where
        F: Fn(&[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
    {
        Self::register(name.into(), n, m, state_box, input_box, Map::Native(Arc::new(f)), None)
    }

    /// Linear system `x⁺ = A x + B u` with its exact Jacobians attached.
    pub fn linear(
        name: impl Into<String>,
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        state_box: Vec<Interval>,
        input_box: Vec<Interval>,
    ) -> Result<Self> {
        let n = a.nrows();
        let m = b.ncols();
        if a.ncols() != n || b.nrows() != n {
            return Err(Error::InvalidModel(format!(
                "A is {}x{}, B is {}x{}",
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols()
            )));
        }
        let (fa, fb) = (a.clone(), b.clone());
        let model = Self::from_fn(name, n, m, state_box, input_box, move |x, u, out| {
            for (i, o) in out.iter_mut().enumerate() {
                let mut acc = 0.0;
                for j in 0..n {
                    acc += fa[(i, j)] * x[j];
                }
                for j in 0..m {
                    acc += fb[(i, j)] * u[j];
                }
                *o = acc;
            }
        })?;
        Ok(model.with_jacobian(move |_, _| (a.clone(), b.clone())))
    }

    /// Attaches closed-form partial Jacobians `(∂f/∂x, ∂f/∂u)`.
    pub fn with_jacobian<J>(mut self, j: J) -> Self
    where
        J: Fn(&[f64], &[f64]) -> (DMatrix<f64>, DMatrix<f64>) + Send + Sync + 'static,
    {
        self.jacobian = Some(Arc::new(j));
        self
    }

    /// Drops any attached closed-form Jacobian.
    pub fn without_jacobian(mut self) -> Self {
        self.jacobian = None;
        self
    }

    fn register(
        name: String,
        n: usize,
        m: usize,
        state_box: Vec<Interval>,
        input_box: Vec<Interval>,
        map: Map,
        jacobian: Option<Arc<JacobianFn>>,
    ) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(Error::InvalidModel(format!(
                "dimensions must be positive (n={n}, m={m})"
            )));
        }
        check_box("state_box", &state_box, n)?;
        check_box("input_box", &input_box, m)?;
        let model = SystemModel {
            name,
            n,
            m,
            state_box,
            input_box,
            map,
            jacobian,
        };
        let mut out = vec![0.0; n];
        model.evaluate_into(&vec![0.0; n], &vec![0.0; m], &mut out)?;
        let norm = out.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > EQUILIBRIUM_TOL {
            return Err(Error::EquilibriumViolation { norm });
        }
        Ok(model)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn state_box(&self) -> &[Interval] {
        &self.state_box
    }

    pub fn input_box(&self) -> &[Interval] {
        &self.input_box
    }

    pub fn expressions(&self) -> Option<&[Expr]> {
        match &self.map {
            Map::Expr(e) => Some(e),
            Map::Native(_) => None,
        }
    }

    pub fn has_jacobian(&self) -> bool {
        self.jacobian.is_some()
    }

    /// Closed-form `(∂f/∂x, ∂f/∂u)` if the model carries one.
    pub fn partials(&self, x: &[f64], u: &[f64]) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
        self.jacobian.as_ref().map(|j| j(x, u))
    }

    /// Evaluates `f(x, u)` into `out` without allocating.
    pub fn evaluate_into(&self, x: &[f64], u: &[f64], out: &mut [f64]) -> Result<(), EvalError> {
        check_len("state", self.n, x.len())?;
        check_len("input", self.m, u.len())?;
        check_len("output", self.n, out.len())?;
        match &self.map {
            Map::Expr(exprs) => {
                for (o, e) in out.iter_mut().zip(exprs) {
                    *o = e.eval(x, u);
                }
            }
            Map::Native(f) => f(x, u, out),
        }
        match out.iter().position(|v| !v.is_finite()) {
            Some(component) => Err(EvalError::NonFiniteResult {
                component,
                value: out[component],
            }),
            None => Ok(()),
        }
    }

    pub fn evaluate(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>, EvalError> {
        let mut out = vec![0.0; self.n];
        self.evaluate_into(x, u, &mut out)?;
        Ok(out)
    }

    /// Runs the open loop from `x0` (initial time 0) under `inputs`.
    pub fn flow<I>(&self, x0: &[f64], inputs: I) -> Result<Trajectory>
    where
        I: IntoIterator,
        I::Item: AsRef<[f64]>,
    {
        check_len("state", self.n, x0.len())?;
        let mut states = vec![x0.to_vec()];
        let mut used = Vec::new();
        for (step, u) in inputs.into_iter().enumerate() {
            let u = u.as_ref();
            let next = self
                .evaluate(states.last().unwrap(), u)
                .map_err(|source| Error::FlowStep { step, source })?;
            used.push(u.to_vec());
            states.push(next);
        }
        Ok(Trajectory {
            states,
            inputs: used,
        })
    }

    /// Final state of the flow driven by a stacked input vector
    /// `(u(0), u(1), …, u(N-1))`.
    pub fn flow_stacked(&self, x0: &[f64], stacked: &[f64]) -> Result<Vec<f64>> {
        if !stacked.len().is_multiple_of(self.m) {
            return Err(Error::InvalidArgument(format!(
                "stacked input length {} is not a multiple of m={}",
                stacked.len(),
                self.m
            )));
        }
        check_len("state", self.n, x0.len())?;
        let mut x = x0.to_vec();
        let mut next = vec![0.0; self.n];
        for (step, u) in stacked.chunks(self.m).enumerate() {
            self.evaluate_into(&x, u, &mut next)
                .map_err(|source| Error::FlowStep { step, source })?;
            std::mem::swap(&mut x, &mut next);
        }
        Ok(x)
    }
}

fn check_len(what: &'static str, expected: usize, found: usize) -> Result<(), EvalError> {
    if expected == found {
        Ok(())
    } else {
        Err(EvalError::DimensionMismatch {
            what,
            expected,
            found,
        })
    }
}

fn check_box(what: &str, bounds: &[Interval], dim: usize) -> Result<()> {
    if bounds.len() != dim {
        return Err(Error::InvalidModel(format!(
            "{what} has {} intervals, expected {dim}",
            bounds.len()
        )));
    }
    for (i, b) in bounds.iter().enumerate() {
        if !(b.lo.is_finite() && b.hi.is_finite() && b.lo < 0.0 && 0.0 < b.hi) {
            return Err(Error::InvalidModel(format!(
                "{what}[{i}] = [{}, {}] must be finite and contain 0 in its interior",
                b.lo, b.hi
            )));
        }
    }
    Ok(())
}

/// States and inputs of a run started at time 0; `states` is one longer
/// than `inputs`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub states: Vec<Vec<f64>>,
    pub inputs: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("trajectory has an initial state")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::registry;

    #[test]
    fn equilibrium_and_boxes_checked() {
        let r = SystemModel::from_fn("bad", 1, 1, vec![Interval::new(-1.0, 1.0)], vec![Interval::new(-1.0, 1.0)], |x, u, o| {
            o[0] = x[0] + u[0] + 1.0
        });
        assert!(matches!(r, Err(Error::EquilibriumViolation { .. })));
        let r = SystemModel::from_fn("bad", 1, 1, vec![Interval::new(0.0, 1.0)], vec![Interval::new(-1.0, 1.0)], |x, u, o| {
            o[0] = x[0] + u[0]
        });
        assert!(matches!(r, Err(Error::InvalidModel(_))));
    }

    #[test]
    fn evaluate_examples() {
        let si = registry::builtin("scalar-integrator").unwrap();
        assert_eq!(si.evaluate(&[0.0], &[0.0]).unwrap(), vec![0.0]);
        let di = registry::builtin("double-integrator").unwrap();
        assert_eq!(di.evaluate(&[1.0, 0.0], &[0.0]).unwrap(), vec![1.0, 0.0]);
        let c = registry::builtin("cubic-contraction").unwrap();
        assert_eq!(c.evaluate(&[1.0], &[0.0]).unwrap(), vec![0.5]);
    }

    #[test]
    fn evaluate_errors() {
        let si = registry::builtin("scalar-integrator").unwrap();
        assert!(matches!(
            si.evaluate(&[0.0, 1.0], &[0.0]),
            Err(EvalError::DimensionMismatch { what: "state", .. })
        ));
        let recip = SystemModel::from_fn("recip", 1, 1, vec![Interval::new(-1.0, 1.0)], vec![Interval::new(-1.0, 1.0)], |x, u, o| {
            o[0] = u[0] / (x[0] - 0.5)
        })
        .unwrap();
        assert!(matches!(
            recip.evaluate(&[0.5], &[0.0]),
            Err(EvalError::NonFiniteResult { component: 0, .. })
        ));
    }

    #[test]
    fn flow_examples() {
        let si = registry::builtin("scalar-integrator").unwrap();
        let t = si.flow(&[1.0], [[-1.0]]).unwrap();
        assert_eq!(t.states, vec![vec![1.0], vec![0.0]]);
        let t = si.flow(&[0.3], Vec::<Vec<f64>>::new()).unwrap();
        assert_eq!(t.states, vec![vec![0.3]]);
        assert!(t.is_empty());

        // [A·B, B] (u0, u1) = -A² x0 with x0 = (1, 0): u = (-1, 1)
        let di = registry::builtin("double-integrator").unwrap();
        let t = di.flow(&[1.0, 0.0], [[-1.0], [1.0]]).unwrap();
        assert_eq!(t.final_state(), &[0.0, 0.0]);
        assert_eq!(di.flow_stacked(&[1.0, 0.0], &[-1.0, 1.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn flow_reports_failing_step() {
        let m = SystemModel::from_fn("blowup", 1, 1, vec![Interval::new(-1.0, 1.0)], vec![Interval::new(-1.0, 1.0)], |x, u, o| {
            o[0] = x[0] * 1e200 + u[0]
        })
        .unwrap();
        let err = m.flow(&[0.0], [[1.0], [0.0], [0.0]]).unwrap_err();
        assert!(matches!(err, Error::FlowStep { step: 2, .. }), "{err}");
    }
}
