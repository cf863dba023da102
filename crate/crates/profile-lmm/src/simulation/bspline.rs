//! B-spline basis over a closed interval with clamped uniform knots.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Clamped uniform knot vector for `n_basis` functions of the given degree.
fn knot_vector(degree: usize, n_basis: usize, lo: f64, hi: f64) -> Vec<f64> {
    let n_internal = n_basis - degree - 1;
    let mut knots = Vec::with_capacity(n_basis + degree + 1);
    for _ in 0..=degree {
        knots.push(lo);
    }
    for k in 1..=n_internal {
        knots.push(lo + (hi - lo) * k as f64 / (n_internal + 1) as f64);
    }
    for _ in 0..=degree {
        knots.push(hi);
    }
    knots
}

fn find_span(knots: &[f64], degree: usize, n_basis: usize, t: f64) -> usize {
    if t >= knots[n_basis] {
        // Right boundary: close the final interval.
        return n_basis - 1;
    }
    let mut lo = degree;
    let mut hi = n_basis;
    while lo + 1 < hi {
        let mid = (lo + hi) / 2;
        if t < knots[mid] {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    lo
}

/// The `degree + 1` basis values that are nonzero on the span, by the
/// triangular Cox-de Boor recurrence.
fn nonzero_basis(knots: &[f64], span: usize, degree: usize, t: f64) -> Vec<f64> {
    let mut values = vec![0.0; degree + 1];
    values[0] = 1.0;
    let mut left = vec![0.0; degree + 1];
    let mut right = vec![0.0; degree + 1];
    for j in 1..=degree {
        left[j] = t - knots[span + 1 - j];
        right[j] = knots[span + j] - t;
        let mut saved = 0.0;
        for r in 0..j {
            let temp = values[r] / (right[r + 1] + left[j - r]);
            values[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        values[j] = saved;
    }
    values
}

/// Evaluate the B-spline basis matrix (one row per time, one column per
/// basis function). Rows sum to one on the interior of the domain; the
/// right endpoint is included by closing the last interval.
pub fn bspline_basis(
    times: &[f64],
    degree: usize,
    n_basis: usize,
    domain: (f64, f64),
) -> Result<DMatrix<f64>> {
    let (lo, hi) = domain;
    if n_basis < degree + 1 {
        return Err(Error::Parameter(format!(
            "bspline: n_basis {n_basis} must be at least degree+1 = {}",
            degree + 1
        )));
    }
    if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::Parameter(format!(
            "bspline: invalid domain [{lo}, {hi}]"
        )));
    }
    let knots = knot_vector(degree, n_basis, lo, hi);
    let mut basis = DMatrix::zeros(times.len(), n_basis);
    for (row, &t) in times.iter().enumerate() {
        if !(t >= lo && t <= hi) {
            return Err(Error::Parameter(format!(
                "bspline: time {t} outside domain [{lo}, {hi}]"
            )));
        }
        let span = find_span(&knots, degree, n_basis, t);
        let values = nonzero_basis(&knots, span, degree, t);
        for (j, &v) in values.iter().enumerate() {
            basis[(row, span - degree + j)] = v;
        }
    }
    Ok(basis)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Textbook recursive definition, used as an independent oracle on
    /// interior points (half-open intervals, 0/0 := 0).
    fn recursive_basis(knots: &[f64], i: usize, k: usize, t: f64) -> f64 {
        if k == 0 {
            return if knots[i] <= t && t < knots[i + 1] { 1.0 } else { 0.0 };
        }
        let mut value = 0.0;
        let denom_left = knots[i + k] - knots[i];
        if denom_left > 0.0 {
            value += (t - knots[i]) / denom_left * recursive_basis(knots, i, k - 1, t);
        }
        let denom_right = knots[i + k + 1] - knots[i + 1];
        if denom_right > 0.0 {
            value +=
                (knots[i + k + 1] - t) / denom_right * recursive_basis(knots, i + 1, k - 1, t);
        }
        value
    }

    #[test]
    fn degree_zero_is_indicator() {
        let basis = bspline_basis(&[0.5], 0, 2, (0.0, 2.0)).unwrap();
        assert_eq!(basis[(0, 0)], 1.0);
        assert_eq!(basis[(0, 1)], 0.0);
        let basis = bspline_basis(&[1.5], 0, 2, (0.0, 2.0)).unwrap();
        assert_eq!(basis[(0, 0)], 0.0);
        assert_eq!(basis[(0, 1)], 1.0);
    }

    #[test]
    fn partition_of_unity_on_interior() {
        let times: Vec<f64> = (1..200).map(|k| 0.02 * k as f64).collect();
        for (degree, n_basis) in [(1, 3), (2, 3), (2, 5), (3, 7)] {
            let basis = bspline_basis(&times, degree, n_basis, (0.0, 4.0)).unwrap();
            for r in 0..times.len() {
                let s: f64 = basis.row(r).iter().sum();
                assert!((s - 1.0).abs() < 1e-12, "degree {degree} row {r}: {s}");
            }
        }
    }

    #[test]
    fn matches_recursive_oracle() {
        for (degree, n_basis) in [(2usize, 3usize), (2, 6), (3, 5)] {
            let knots = knot_vector(degree, n_basis, 1.0, 4.0);
            let times: Vec<f64> = (1..300).map(|k| 1.0 + 3.0 * k as f64 / 300.0).collect();
            let basis = bspline_basis(&times, degree, n_basis, (1.0, 4.0)).unwrap();
            for (r, &t) in times.iter().enumerate() {
                for i in 0..n_basis {
                    let oracle = recursive_basis(&knots, i, degree, t);
                    assert!(
                        (basis[(r, i)] - oracle).abs() < 1e-12,
                        "degree {degree}, t {t}, basis {i}: {} vs {oracle}",
                        basis[(r, i)]
                    );
                }
            }
        }
    }

    #[test]
    fn right_endpoint_is_included() {
        let basis = bspline_basis(&[4.0], 2, 5, (1.0, 4.0)).unwrap();
        let s: f64 = basis.row(0).iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
        assert!((basis[(0, 4)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn out_of_domain_and_bad_config_error() {
        assert!(bspline_basis(&[5.0], 2, 4, (0.0, 4.0)).is_err());
        assert!(bspline_basis(&[-0.1], 2, 4, (0.0, 4.0)).is_err());
        assert!(bspline_basis(&[0.5], 2, 2, (0.0, 1.0)).is_err());
    }
}
