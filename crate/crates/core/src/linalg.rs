//! Small dense linear-algebra helpers shared across modules.

use nalgebra::{DMatrix, DVector};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

pub fn vector(xs: &[f64]) -> Vector {
    DVector::from_column_slice(xs)
}

pub fn unit(n: usize, i: usize) -> Vector {
    let mut e = DVector::zeros(n);
    e[i] = 1.0;
    e
}

/// `a^T g b`.
pub fn inner(g: &Matrix, a: &Vector, b: &Vector) -> f64 {
    let n = a.len();
    let mut acc = 0.0;
    for i in 0..n {
        let mut row = 0.0;
        for j in 0..n {
            row += g[(i, j)] * b[j];
        }
        acc += a[i] * row;
    }
    acc
}

pub fn norm(g: &Matrix, a: &Vector) -> f64 {
    inner(g, a, a).max(0.0).sqrt()
}

/// Gram-Schmidt in the inner product `g`. Seeds whose residual falls below
/// `1e-10` of their original norm are skipped.
pub fn gram_schmidt(g: &Matrix, seeds: &[Vector]) -> Vec<Vector> {
    let mut basis: Vec<Vector> = Vec::new();
    for s in seeds {
        let mut r = s.clone();
        for _ in 0..2 {
            for b in &basis {
                let c = inner(g, b, &r);
                r -= b * c;
            }
        }
        let nr = norm(g, &r);
        if nr > 1e-10 * norm(g, s).max(1e-300) {
            basis.push(r / nr);
        }
    }
    basis
}

/// Completes `first` (already g-orthonormal) with ambient axes to a g-orthonormal
/// basis of the g-orthogonal complement of `exclude`.
pub fn orthonormal_complement(g: &Matrix, exclude: &[Vector], first: &[Vector]) -> Vec<Vector> {
    let n = g.nrows();
    let mut seeds: Vec<Vector> = exclude.to_vec();
    seeds.extend(first.iter().cloned());
    seeds.extend((0..n).map(|i| unit(n, i)));
    let full = gram_schmidt(g, &seeds);
    full.into_iter().skip(exclude.len()).take(n - exclude.len()).collect()
}

pub fn min_eigenvalue(m: &Matrix) -> f64 {
    let e = nalgebra::SymmetricEigen::new(m.clone());
    e.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Least-squares / minimum-norm solution through a truncated SVD.
pub fn solve_lstsq(a: &Matrix, b: &Vector, rcond: f64) -> Vector {
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let u = svd.u.as_ref().expect("u requested");
    let vt = svd.v_t.as_ref().expect("v_t requested");
    let mut x = DVector::zeros(a.ncols());
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > rcond * smax && s > 0.0 {
            let coef = u.column(k).dot(b) / s;
            x += vt.row(k).transpose() * coef;
        }
    }
    x
}

pub fn max_abs_diff(a: &Matrix, b: &Matrix) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Fourth-order central difference of a vector-valued map along one axis.
pub fn central_diff4<F>(f: &mut F, x: &Vector, axis: usize, h: f64) -> Vector
where
    F: FnMut(&Vector) -> Vector,
{
    let shifted = |k: f64| {
        let mut y = x.clone();
        y[axis] += k * h;
        y
    };
    let fp1 = f(&shifted(1.0));
    let fm1 = f(&shifted(-1.0));
    let fp2 = f(&shifted(2.0));
    let fm2 = f(&shifted(-2.0));
    (fm2 - fp2 + (fp1 - fm1) * 8.0) / (12.0 * h)
}
