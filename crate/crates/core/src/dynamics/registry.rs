//! Built-in systems, each available hand-coded (with closed-form Jacobians)
//! and as equivalent definition text.

use nalgebra::{dmatrix, DMatrix};

use super::model::{Interval, SystemModel};

const SYSTEMS: &[(&str, &str)] = &[
    (
        "scalar-integrator",
        "name = scalar-integrator\nstate_box = [-1, 1]\ninput_box = [-1, 1]\nf1 = x1 + u1\n",
    ),
    (
        "double-integrator",
        "name = double-integrator\nstate_box = [-1, 1], [-1, 1]\ninput_box = [-2, 2]\nf1 = x1 + x2 + 0.5*u1\nf2 = x2 + u1\n",
    ),
    (
        "cubic-contraction",
        "name = cubic-contraction\nstate_box = [-1, 1]\ninput_box = [-1, 1]\nf1 = x1/2 + u1^3\n",
    ),
    (
        "square-sum",
        "name = square-sum\nstate_box = [-2, 2]\ninput_box = [-1, 1]\nf1 = x1^2 + u1^2\n",
    ),
];

pub fn names() -> impl Iterator<Item = &'static str> {
    SYSTEMS.iter().map(|(n, _)| *n)
}

/// Definition text equivalent to the hand-coded model.
pub fn source(name: &str) -> Option<&'static str> {
    SYSTEMS.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

fn unit() -> Vec<Interval> {
    vec![Interval::new(-1.0, 1.0)]
}

pub fn builtin(name: &str) -> Option<SystemModel> {
    let model = match name {
        "scalar-integrator" => SystemModel::linear(name, dmatrix![1.0], dmatrix![1.0], unit(), unit()),
        "double-integrator" => SystemModel::linear(
            name,
            dmatrix![1.0, 1.0; 0.0, 1.0],
            dmatrix![0.5; 1.0],
            vec![Interval::new(-1.0, 1.0); 2],
            vec![Interval::new(-2.0, 2.0)],
        ),
        "cubic-contraction" => SystemModel::from_fn(name, 1, 1, unit(), unit(), |x, u, o| {
            o[0] = x[0] / 2.0 + u[0].powi(3)
        })
        .map(|m| {
            m.with_jacobian(|_, u| (dmatrix![0.5], dmatrix![3.0 * u[0] * u[0]]))
        }),
        // |x| > 1 grows under x² + u² and can never reach the origin
        "square-sum" => SystemModel::from_fn(name, 1, 1, vec![Interval::new(-2.0, 2.0)], unit(), |x, u, o| {
            o[0] = x[0].powi(2) + u[0].powi(2)
        })
        .map(|m| {
            m.with_jacobian(|x, u| (DMatrix::from_element(1, 1, 2.0 * x[0]), DMatrix::from_element(1, 1, 2.0 * u[0])))
        }),
        _ => return None,
    };
    Some(model.expect("built-in systems are well formed"))
}
