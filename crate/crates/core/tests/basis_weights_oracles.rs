//! Spline bases against textbook constructions, and the simplex property of
//! every weight construction.

mod oracles;

use depmix_core::basis::{knots_from_quantiles, Bspline};
use depmix_core::{BasisKind, BasisSpec, RngStream};
use nalgebra::{DMatrix, DVector};
use rand::Rng as _;

/// Cox–de Boor recursion on the full clamped knot vector, right-continuous
/// except at the upper boundary.
fn cox_de_boor(knots: &[f64], i: usize, k: usize, x: f64) -> f64 {
    if k == 0 {
        let last = knots[knots.len() - 1];
        let inside = knots[i] <= x && x < knots[i + 1];
        let at_end = x == last && knots[i] < knots[i + 1] && knots[i + 1] == last;
        return if inside || at_end { 1.0 } else { 0.0 };
    }
    let mut v = 0.0;
    let d1 = knots[i + k] - knots[i];
    if d1 > 0.0 {
        v += (x - knots[i]) / d1 * cox_de_boor(knots, i, k - 1, x);
    }
    let d2 = knots[i + k + 1] - knots[i + 1];
    if d2 > 0.0 {
        v += (knots[i + k + 1] - x) / d2 * cox_de_boor(knots, i + 1, k - 1, x);
    }
    v
}

fn full_values(b: &Bspline, x: f64) -> Vec<f64> {
    let mut out = [0.0; 4];
    let first = b.eval_nonzero(x, &mut out);
    let mut v = vec![0.0; b.count()];
    v[first..first + 4].copy_from_slice(&out);
    v
}

/// Max residual of the least-squares fit of `target` on the columns of `design`.
fn ls_residual(design: &DMatrix<f64>, target: &DVector<f64>) -> f64 {
    let svd = design.clone().svd(true, true);
    let coef = svd.solve(target, 1e-12).unwrap();
    (design * coef - target).amax()
}

#[test]
fn bspline_matches_cox_de_boor() {
    let mut rng = RngStream::new(3, 0).rng();
    for interior in [
        vec![],
        vec![0.1],
        vec![-1.2, -0.4, 0.4, 1.2],
        vec![-1.9, -1.8, 0.0, 1.99],
    ] {
        let b = Bspline::new((-2.0, 2.0), &interior);
        for _ in 0..500 {
            let x = rng.random_range(-2.0..2.0);
            let ours = full_values(&b, x);
            for (i, v) in ours.iter().enumerate() {
                let reference = cox_de_boor(b.knots(), i, 3, x);
                assert!((v - reference).abs() < 1e-12, "x={x} i={i}: {v} vs {reference}");
            }
        }
        // both ends
        for x in [-2.0, 2.0] {
            let ours = full_values(&b, x);
            for (i, v) in ours.iter().enumerate() {
                assert!((v - cox_de_boor(b.knots(), i, 3, x)).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn bspline_partition_of_unity() {
    let mut rng = RngStream::new(4, 0).rng();
    for interior in [vec![], vec![-0.5, 0.7], vec![-1.5, -0.2, 0.0, 0.3, 1.1]] {
        let b = Bspline::new((-2.0, 2.0), &interior);
        for _ in 0..1000 {
            let x = rng.random_range(-2.0..2.0);
            let s: f64 = full_values(&b, x).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn bspline_design_spans_truncated_power_basis() {
    let interior = vec![-1.0, 0.2, 0.9];
    let spec = BasisSpec {
        kind: BasisKind::CubicBspline,
        covariates: 1,
        boundary: vec![(-2.0, 2.0)],
        interior: vec![interior.clone()],
        intercept: true,
    };
    let basis = spec.compile().unwrap();
    assert_eq!(basis.dim(), 1 + interior.len() + 3);
    let xs: Vec<f64> = (0..400).map(|k| -2.0 + 4.0 * k as f64 / 399.0).collect();
    let design = basis.design(&DMatrix::from_column_slice(xs.len(), 1, &xs)).unwrap();

    let mut targets: Vec<Box<dyn Fn(f64) -> f64>> = vec![
        Box::new(|_| 1.0),
        Box::new(|x| x),
        Box::new(|x| x * x),
        Box::new(|x| x * x * x),
    ];
    for k in interior {
        targets.push(Box::new(move |x: f64| (x - k).max(0.0).powi(3)));
    }
    assert_eq!(targets.len(), basis.dim());
    for f in &targets {
        let t = DVector::from_iterator(xs.len(), xs.iter().map(|&x| f(x)));
        assert!(ls_residual(&design, &t) < 1e-9);
    }
}

#[test]
fn natural_spline_is_linear_at_the_boundary() {
    let spec = BasisSpec {
        kind: BasisKind::NaturalCubicSpline,
        covariates: 1,
        boundary: vec![(0.0, 10.0)],
        interior: vec![vec![2.0, 5.0, 7.5]],
        intercept: true,
    };
    let basis = spec.compile().unwrap();
    assert_eq!(basis.dim(), 5);
    let h = 1e-3;
    for edge in [0.0 + 2.0 * h, 10.0 - 2.0 * h] {
        let f = |x: f64| basis.eval(&[x]).unwrap();
        let (a, b, c) = (f(edge - h), f(edge), f(edge + h));
        for j in 0..basis.dim() {
            let second = (a[j] - 2.0 * b[j] + c[j]) / (h * h);
            assert!(second.abs() < 1e-2, "column {j} at {edge}: {second}");
        }
    }
    // the span contains every straight line but no pure quadratic
    let xs: Vec<f64> = (0..300).map(|k| 10.0 * k as f64 / 299.0).collect();
    let design = basis.design(&DMatrix::from_column_slice(xs.len(), 1, &xs)).unwrap();
    let line = DVector::from_iterator(xs.len(), xs.iter().map(|x| 3.0 - 0.5 * x));
    assert!(ls_residual(&design, &line) < 1e-9);
    let quad = DVector::from_iterator(xs.len(), xs.iter().map(|x| x * x));
    assert!(ls_residual(&design, &quad) > 1e-3);
}

#[test]
fn quantile_knots_on_uniform_sample() {
    let mut rng = RngStream::new(8, 0).rng();
    let col: Vec<f64> = (0..600).map(|_| rng.random_range(-2.0..2.0)).collect();
    let knots = knots_from_quantiles(&col, 4).unwrap();
    for (k, target) in knots.iter().zip([-1.2, -0.4, 0.4, 1.2]) {
        // sd of a sample quantile here is below 0.07
        assert!((k - target).abs() < 0.2, "{knots:?}");
    }
}

#[test]
fn every_weight_construction_is_a_simplex() {
    let dev = oracles::simplex_deviation(1000);
    assert!(dev < 1e-12, "{dev}");
}
