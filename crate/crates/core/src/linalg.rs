//! Small dense least squares through the normal equations.

use crate::error::{Error, Result};

/// Relative pivot tolerance below which the Gram matrix is treated as singular.
const PIVOT_TOL: f64 = 1e-12;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Gram matrix `G[i][j] = <cols[i], cols[j]>`.
pub fn gram(cols: &[&[f64]]) -> Vec<Vec<f64>> {
    let k = cols.len();
    let mut g = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in 0..=i {
            let v = dot(cols[i], cols[j]);
            g[i][j] = v;
            g[j][i] = v;
        }
    }
    g
}

/// Solves `G x = b` for symmetric positive definite `G` by Cholesky.
pub fn cholesky_solve(g: &[Vec<f64>], b: &[f64]) -> Result<Vec<f64>> {
    let k = g.len();
    let scale = (0..k).fold(0.0f64, |m, i| m.max(g[i][i].abs()));
    if scale == 0.0 {
        return Err(Error::Degenerate("all columns are zero".into()));
    }
    let mut l = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in 0..=i {
            let mut sum = g[i][j];
            for p in 0..j {
                sum -= l[i][p] * l[j][p];
            }
            if i == j {
                if sum <= PIVOT_TOL * scale {
                    return Err(Error::Degenerate(format!(
                        "column {i} is linearly dependent on the preceding columns"
                    )));
                }
                l[i][i] = sum.sqrt();
            } else {
                l[i][j] = sum / l[j][j];
            }
        }
    }
    let mut y = vec![0.0; k];
    for i in 0..k {
        let mut sum = b[i];
        for p in 0..i {
            sum -= l[i][p] * y[p];
        }
        y[i] = sum / l[i][i];
    }
    let mut x = vec![0.0; k];
    for i in (0..k).rev() {
        let mut sum = y[i];
        for p in i + 1..k {
            sum -= l[p][i] * x[p];
        }
        x[i] = sum / l[i][i];
    }
    Ok(x)
}

/// Coefficients `c` minimising `||target - sum_k c_k cols[k]||^2`.
pub fn least_squares(cols: &[&[f64]], target: &[f64]) -> Result<Vec<f64>> {
    if cols.is_empty() {
        return Err(Error::invalid("least squares needs at least one column"));
    }
    for c in cols {
        if c.len() != target.len() {
            return Err(Error::invalid(format!(
                "column length {} differs from target length {}",
                c.len(),
                target.len()
            )));
        }
    }
    let g = gram(cols);
    let rhs: Vec<f64> = cols.iter().map(|c| dot(c, target)).collect();
    cholesky_solve(&g, &rhs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_system() {
        let g = vec![vec![4.0, 2.0], vec![2.0, 3.0]];
        let x = cholesky_solve(&g, &[2.0, 1.0]).unwrap();
        assert!((4.0 * x[0] + 2.0 * x[1] - 2.0).abs() < 1e-14);
        assert!((2.0 * x[0] + 3.0 * x[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn rank_deficient_rejected() {
        let a = [1.0, 2.0, 3.0];
        let b = [2.0, 4.0, 6.0];
        let err = least_squares(&[&a, &b], &[1.0, 1.0, 1.0]).unwrap_err();
        assert!(matches!(err, Error::Degenerate(_)));
        let z = [0.0; 3];
        assert!(least_squares(&[&z], &[1.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn exact_fit_recovered() {
        let a = [1.0, 0.0, 1.0, 2.0];
        let b = [0.0, 1.0, -1.0, 0.5];
        let t: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 1.5 * x - 0.25 * y).collect();
        let c = least_squares(&[&a, &b], &t).unwrap();
        assert!((c[0] - 1.5).abs() < 1e-12);
        assert!((c[1] + 0.25).abs() < 1e-12);
    }
}
