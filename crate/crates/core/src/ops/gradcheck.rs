//! Central finite-difference gradient checks.

/// Outcome of comparing an analytic gradient with central differences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

/// Denominator floor for the relative error, so coordinates whose true
/// derivative is ~0 are judged on absolute error instead.
pub const REL_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Checks every coordinate of `point`.
pub fn grad_check(
    f: impl FnMut(&[f64]) -> f64,
    point: &[f64],
    analytic: &[f64],
    h: f64,
) -> GradCheck {
    let coords: Vec<usize> = (0..point.len()).collect();
    grad_check_coords(f, point, analytic, &coords, h)
}

/// Checks only the listed coordinates; `analytic` is indexed like `point`.
pub fn grad_check_coords(
    mut f: impl FnMut(&[f64]) -> f64,
    point: &[f64],
    analytic: &[f64],
    coords: &[usize],
    h: f64,
) -> GradCheck {
    assert_eq!(point.len(), analytic.len(), "gradient length must match point");
    let mut x = point.to_vec();
    let mut worst = GradCheck {
        max_rel_error: 0.0,
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
    };
    for &i in coords {
        let orig = x[i];
        x[i] = orig + h;
        let up = f(&x);
        x[i] = orig - h;
        let down = f(&x);
        x[i] = orig;
        let numeric = (up - down) / (2.0 * h);
        let err = relative_error(analytic[i], numeric);
        if err > worst.max_rel_error || coords.len() == 1 {
            worst = GradCheck {
                max_rel_error: err,
                worst_index: i,
                analytic: analytic[i],
                numeric,
            };
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_function_is_exact() {
        let w = [0.5, -1.25, 3.0, 2.0];
        let f = |x: &[f64]| x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
        let report = grad_check(f, &[0.1, 0.2, -0.3, 4.0], &w, 1e-5);
        assert!(report.max_rel_error < 1e-9, "{report:?}");
    }

    #[test]
    fn detects_wrong_gradient() {
        let f = |x: &[f64]| x[0] * x[0];
        let report = grad_check(f, &[1.0], &[3.0], 1e-5);
        assert!(report.max_rel_error > 0.3);
    }
}
