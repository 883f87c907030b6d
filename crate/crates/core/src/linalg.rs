//! Fixed-size 4×4 dense helpers for the anchor solve.

#![allow(clippy::needless_range_loop)]

use nalgebra::Matrix4;

pub type Mat4 = [[f64; 4]; 4];

pub fn identity() -> Mat4 {
    let mut m = [[0.0; 4]; 4];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    m
}

pub fn mul(a: &Mat4, b: &Mat4) -> Mat4 {
    let mut out = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            let mut acc = 0.0;
            for k in 0..4 {
                acc += a[i][k] * b[k][j];
            }
            out[i][j] = acc;
        }
    }
    out
}

pub fn max_abs_diff(a: &Mat4, b: &Mat4) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn pivot_row(a: &Mat4, col: usize) -> usize {
    let mut best = col;
    for r in col + 1..4 {
        if a[r][col].abs() > a[best][col].abs() {
            best = r;
        }
    }
    best
}

/// Determinant by Gaussian elimination with partial pivoting.
pub fn determinant(a: &Mat4) -> f64 {
    let mut a = *a;
    let mut det = 1.0;
    for col in 0..4 {
        let p = pivot_row(&a, col);
        if a[p][col] == 0.0 {
            return 0.0;
        }
        if p != col {
            a.swap(p, col);
            det = -det;
        }
        det *= a[col][col];
        for r in col + 1..4 {
            let f = a[r][col] / a[col][col];
            for c in col..4 {
                a[r][c] -= f * a[col][c];
            }
        }
    }
    det
}

/// Solves `a · x = b` by partial-pivot elimination. `None` on an exactly zero pivot.
pub fn solve(a: &Mat4, b: &Mat4) -> Option<Mat4> {
    let mut a = *a;
    let mut b = *b;
    for col in 0..4 {
        let p = pivot_row(&a, col);
        if a[p][col] == 0.0 {
            return None;
        }
        a.swap(p, col);
        b.swap(p, col);
        for r in col + 1..4 {
            let f = a[r][col] / a[col][col];
            for c in col..4 {
                a[r][c] -= f * a[col][c];
            }
            for c in 0..4 {
                b[r][c] -= f * b[col][c];
            }
        }
    }
    let mut x = [[0.0; 4]; 4];
    for j in 0..4 {
        for i in (0..4).rev() {
            let mut acc = b[i][j];
            for k in i + 1..4 {
                acc -= a[i][k] * x[k][j];
            }
            x[i][j] = acc / a[i][i];
        }
    }
    x.iter().flatten().all(|v| v.is_finite()).then_some(x)
}

/// Minimum-norm least-squares solution of `a · x ≈ b` via SVD.
pub fn least_squares(a: &Mat4, b: &Mat4) -> Option<Mat4> {
    let am = Matrix4::from_fn(|i, j| a[i][j]);
    let bm = Matrix4::from_fn(|i, j| b[i][j]);
    let eps = 1e-14 * am.amax().max(1.0);
    let x = am.svd(true, true).solve(&bm, eps).ok()?;
    let mut out = [[0.0; 4]; 4];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = x[(i, j)];
        }
    }
    out.iter().flatten().all(|v| v.is_finite()).then_some(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn determinant_matches_cofactor_expansion() {
        let a = [
            [2.0, -1.0, 0.0, 3.0],
            [1.0, 4.0, 2.0, 0.0],
            [0.0, 1.0, -3.0, 1.0],
            [5.0, 0.0, 1.0, 2.0],
        ];
        // numpy.linalg.det
        assert!(
            (determinant(&a) - 146.0).abs() < 1e-9,
            "{}",
            determinant(&a)
        );
    }

    #[test]
    fn solve_recovers_known_solution() {
        let a = [
            [0.0, 2.0, 1.0, 1.0],
            [3.0, 0.5, 0.0, 1.0],
            [1.0, 1.0, 4.0, 1.0],
            [2.0, -1.0, 0.5, 1.0],
        ];
        let x = [
            [1.0, 0.0, 2.0, 0.0],
            [0.5, -1.0, 0.0, 0.0],
            [0.0, 3.0, 1.0, 0.0],
            [0.2, 0.1, -0.4, 1.0],
        ];
        let b = mul(&a, &x);
        let solved = solve(&a, &b).unwrap();
        assert!(max_abs_diff(&solved, &x) < 1e-12);
        assert!(max_abs_diff(&least_squares(&a, &b).unwrap(), &x) < 1e-10);
    }

    #[test]
    fn singular_systems() {
        let a = [[1.0, 2.0, 3.0, 1.0]; 4];
        assert_eq!(determinant(&a), 0.0);
        assert!(solve(&a, &identity()).is_none());
        // least squares still answers, but cannot reproduce the identity
        let x = least_squares(&a, &identity()).unwrap();
        assert!(max_abs_diff(&mul(&a, &x), &identity()) > 0.1);
    }
}
