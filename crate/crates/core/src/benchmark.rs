//! The second-order benchmark instance: three uncertain parameters in
//! `[0, 0.75]`, state limits `|x_1| <= 5`, `-5 <= x_2 <= 1.5`, input limit
//! `|u| <= 6`, horizon 10.

use nalgebra::{dmatrix, dvector, DMatrix, DVector};

use crate::geometry::HPolytope;
use crate::model::{AffineParamSystem, ConstraintSet, StageCost};

pub const HORIZON: usize = 10;

pub fn theta_set() -> HPolytope<f64> {
    HPolytope::from_box(&DVector::zeros(3), &DVector::from_element(3, 0.75))
}

pub fn system() -> AffineParamSystem<f64> {
    let a = vec![
        dmatrix![0.9, 0.3; 0.0, -0.3],
        DMatrix::zeros(2, 2),
        dmatrix![0.143, -0.025; -0.041, 0.298],
        dmatrix![0.282, 0.134; 0.283, -0.242],
    ];
    let b = vec![
        dmatrix![0.4; 0.0],
        dmatrix![0.5; 0.0],
        dmatrix![-0.12; -0.30],
        DMatrix::zeros(2, 1),
    ];
    AffineParamSystem::new(a, b, theta_set()).expect("benchmark system is well formed")
}

pub fn constraints() -> ConstraintSet<f64> {
    let f = dmatrix![
        0.2, 0.0;
        -0.2, 0.0;
        0.0, 1.0 / 1.5;
        0.0, -0.2;
        0.0, 0.0;
        0.0, 0.0
    ];
    let g = dmatrix![0.0; 0.0; 0.0; 0.0; 1.0 / 6.0; -1.0 / 6.0];
    ConstraintSet::new(f, g).expect("benchmark constraints are bounded")
}

pub fn weights() -> StageCost<f64> {
    StageCost::new(DMatrix::identity(2, 2), dmatrix![1.0]).expect("weights are definite")
}

pub fn gain() -> DMatrix<f64> {
    dmatrix![-1.58, -0.57]
}

pub fn terminal_weight() -> DMatrix<f64> {
    dmatrix![13.34, 2.54; 2.54, 2.28]
}

pub fn x0() -> DVector<f64> {
    dvector![-3.0, -1.0]
}

pub fn theta_star() -> DVector<f64> {
    dvector![0.5, 0.5, 0.75]
}
