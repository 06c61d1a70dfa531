//! Dense linear algebra kernels for small symmetric systems.
//!
//! The systems solved here are modest (lag grids of a few hundred rows,
//! channel counts below one hundred), so self-contained kernels beat pulling
//! in an external LAPACK binding: a Cholesky factorization for symmetric
//! positive-definite solves, and a cyclic Jacobi eigensolver for symmetric
//! eigendecompositions. The generalized symmetric-definite problem
//! `A v = lambda B v` is reduced to standard form through the Cholesky factor
//! of `B`.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

// ---------------------------------------------------------------------------
// Cholesky
// ---------------------------------------------------------------------------

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
pub fn cholesky(a: &Array2<f64>) -> Result<Array2<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::InvalidParam(format!(
            "cholesky requires a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let mut l = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[[i, j]];
            for k in 0..j {
                sum -= l[[i, k]] * l[[j, k]];
            }
            if i == j {
                if sum <= 0.0 || !sum.is_finite() {
                    return Err(Error::EigSolverFailure(format!(
                        "matrix is not positive definite (pivot {sum:.3e} at row {i})"
                    )));
                }
                l[[i, j]] = sum.sqrt();
            } else {
                l[[i, j]] = sum / l[[j, j]];
            }
        }
    }
    Ok(l)
}

/// Squared ratio of extreme Cholesky pivots: a cheap condition estimate for
/// the factored matrix.
pub fn cholesky_condition_estimate(l: &Array2<f64>) -> f64 {
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for i in 0..l.nrows() {
        let d = l[[i, i]];
        lo = lo.min(d);
        hi = hi.max(d);
    }
    if lo <= 0.0 {
        return f64::INFINITY;
    }
    (hi / lo) * (hi / lo)
}

/// Solve `L y = b` for lower-triangular `L`.
pub fn solve_lower(l: &Array2<f64>, b: &Array1<f64>) -> Array1<f64> {
    let n = l.nrows();
    let mut y = Array1::<f64>::zeros(n);
    for i in 0..n {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l[[i, k]] * y[k];
        }
        y[i] = sum / l[[i, i]];
    }
    y
}

/// Solve `L^T x = y` for lower-triangular `L`.
pub fn solve_lower_transpose(l: &Array2<f64>, y: &Array1<f64>) -> Array1<f64> {
    let n = l.nrows();
    let mut x = Array1::<f64>::zeros(n);
    for i in (0..n).rev() {
        let mut sum = y[i];
        for k in i + 1..n {
            sum -= l[[k, i]] * x[k];
        }
        x[i] = sum / l[[i, i]];
    }
    x
}

/// Solve the symmetric positive-definite system `A x = b` given the Cholesky
/// factor of `A`.
pub fn solve_with_cholesky(l: &Array2<f64>, b: &Array1<f64>) -> Array1<f64> {
    solve_lower_transpose(l, &solve_lower(l, b))
}

// ---------------------------------------------------------------------------
// Symmetric eigendecomposition (cyclic Jacobi)
// ---------------------------------------------------------------------------

/// Eigenvalues and eigenvectors of a symmetric matrix, sorted by descending
/// eigenvalue. Columns of the returned matrix are unit-norm eigenvectors.
pub fn eigh(a: &Array2<f64>) -> Result<(Vec<f64>, Array2<f64>)> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::InvalidParam("eigh requires a square matrix".into()));
    }
    let mut m = a.clone();
    let mut v = Array2::<f64>::eye(n);
    let max_sweeps = 64;
    for _ in 0..max_sweeps {
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off += m[[p, q]] * m[[p, q]];
            }
        }
        let scale: f64 = (0..n).map(|i| m[[i, i]].abs()).fold(1e-300, f64::max);
        if off.sqrt() <= 1e-14 * scale * n as f64 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[[p, q]];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let theta = (m[[q, q]] - m[[p, p]]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[[k, p]];
                    let mkq = m[[k, q]];
                    m[[k, p]] = c * mkp - s * mkq;
                    m[[k, q]] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[[p, k]];
                    let mqk = m[[q, k]];
                    m[[p, k]] = c * mpk - s * mqk;
                    m[[q, k]] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        m[[j, j]].partial_cmp(&m[[i, i]]).unwrap_or(std::cmp::Ordering::Equal)
    });
    let values: Vec<f64> = order.iter().map(|&i| m[[i, i]]).collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::EigSolverFailure("non-finite eigenvalue".into()));
    }
    let mut vectors = Array2::<f64>::zeros((n, n));
    for (dst, &src) in order.iter().enumerate() {
        for k in 0..n {
            vectors[[k, dst]] = v[[k, src]];
        }
    }
    Ok((values, vectors))
}

/// Generalized symmetric-definite eigenproblem `A w = lambda B w` with
/// symmetric `A` and positive-definite `B`.
///
/// Returns eigenvalues in descending order and the matching eigenvectors as
/// columns. Vectors are normalized to unit Euclidean length with the largest
/// magnitude entry positive, which fixes the sign convention.
pub fn eigh_generalized(a: &Array2<f64>, b: &Array2<f64>) -> Result<(Vec<f64>, Array2<f64>)> {
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n || b.ncols() != n {
        return Err(Error::InvalidParam("eigh_generalized: dimension mismatch".into()));
    }
    let l = cholesky(b)?;
    // C = L^-1 A L^-T, built column by column.
    let mut c = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let col = Array1::from_iter((0..n).map(|i| a[[i, j]]));
        let y = solve_lower(&l, &col);
        for i in 0..n {
            c[[i, j]] = y[i];
        }
    }
    let mut ct = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let row = Array1::from_iter((0..n).map(|i| c[[j, i]]));
        let y = solve_lower(&l, &row);
        for i in 0..n {
            ct[[j, i]] = y[i];
        }
    }
    // Symmetrize to flush rounding asymmetry before Jacobi.
    let sym = (&ct + &ct.t()) * 0.5;
    let (values, u) = eigh(&sym)?;
    let mut w = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let uj = Array1::from_iter((0..n).map(|i| u[[i, j]]));
        let wj = solve_lower_transpose(&l, &uj);
        let norm = wj.iter().map(|v| v * v).sum::<f64>().sqrt();
        let (mut best_abs, mut best_sign) = (0.0, 1.0);
        for &v in wj.iter() {
            if v.abs() > best_abs {
                best_abs = v.abs();
                best_sign = v.signum();
            }
        }
        let scale = if norm > 0.0 { best_sign / norm } else { 1.0 };
        for i in 0..n {
            w[[i, j]] = wj[i] * scale;
        }
    }
    Ok((values, w))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn random_spd(n: usize, seed: u64) -> Array2<f64> {
        use crate::rng::{KeyedStream, StreamKind};
        let mut rng = KeyedStream::new(seed, 0, StreamKind::Fixture);
        let g = Array2::from_shape_fn((n, n), |_| rng.gaussian());
        g.dot(&g.t()) + Array2::<f64>::eye(n) * 0.5
    }

    #[test]
    fn cholesky_reconstructs_input() {
        let a = random_spd(12, 1);
        let l = cholesky(&a).unwrap();
        let back = l.dot(&l.t());
        for (x, y) in a.iter().zip(back.iter()) {
            assert!((x - y).abs() < 1e-10, "reconstruction error {x} vs {y}");
        }
    }

    #[test]
    fn cholesky_rejects_indefinite_matrix() {
        let a = array![[1.0, 2.0], [2.0, 1.0]];
        assert!(cholesky(&a).is_err());
    }

    #[test]
    fn spd_solve_matches_known_solution() {
        let a = random_spd(9, 2);
        let x_true = Array1::from_iter((0..9).map(|i| (i as f64) - 4.0));
        let b = a.dot(&x_true);
        let l = cholesky(&a).unwrap();
        let x = solve_with_cholesky(&l, &b);
        for (u, v) in x.iter().zip(x_true.iter()) {
            assert!((u - v).abs() < 1e-9, "solve error {u} vs {v}");
        }
    }

    #[test]
    fn eigh_matches_hand_computed_two_by_two() {
        // Eigenvalues of [[2,1],[1,2]] are 3 and 1.
        let a = array![[2.0, 1.0], [1.0, 2.0]];
        let (vals, vecs) = eigh(&a).unwrap();
        assert!((vals[0] - 3.0).abs() < 1e-12);
        assert!((vals[1] - 1.0).abs() < 1e-12);
        let r = 1.0 / 2.0f64.sqrt();
        assert!((vecs[[0, 0]].abs() - r).abs() < 1e-12);
        assert!((vecs[[1, 0]].abs() - r).abs() < 1e-12);
    }

    #[test]
    fn eigh_satisfies_definition_on_random_matrix() {
        let a = {
            let g = random_spd(8, 3);
            (&g + &g.t()) * 0.5
        };
        let (vals, vecs) = eigh(&a).unwrap();
        for j in 0..8 {
            let v = vecs.column(j).to_owned();
            let av = a.dot(&v);
            for i in 0..8 {
                assert!(
                    (av[i] - vals[j] * v[i]).abs() < 1e-9,
                    "A v != lambda v at ({i},{j})"
                );
            }
        }
        for w in vals.windows(2) {
            assert!(w[0] >= w[1] - 1e-12, "eigenvalues not descending: {vals:?}");
        }
    }

    #[test]
    fn generalized_problem_satisfies_definition() {
        let a = {
            let g = random_spd(6, 4);
            (&g + &g.t()) * 0.5
        };
        let b = random_spd(6, 5);
        let (vals, w) = eigh_generalized(&a, &b).unwrap();
        for j in 0..6 {
            let v = w.column(j).to_owned();
            let av = a.dot(&v);
            let bv = b.dot(&v);
            for i in 0..6 {
                assert!(
                    (av[i] - vals[j] * bv[i]).abs() < 1e-8,
                    "A w != lambda B w at ({i},{j}): {} vs {}",
                    av[i],
                    vals[j] * bv[i]
                );
            }
        }
    }

    #[test]
    fn generalized_reduces_to_standard_with_identity_b() {
        let a = array![[4.0, 0.0], [0.0, 9.0]];
        let b = Array2::<f64>::eye(2);
        let (vals, _) = eigh_generalized(&a, &b).unwrap();
        assert!((vals[0] - 9.0).abs() < 1e-12);
        assert!((vals[1] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn condition_estimate_tracks_scaling() {
        let a = array![[1.0, 0.0], [0.0, 1e-8]];
        let l = cholesky(&a).unwrap();
        let cond = cholesky_condition_estimate(&l);
        assert!((cond - 1e8).abs() / 1e8 < 1e-6, "estimate {cond}");
    }
}
