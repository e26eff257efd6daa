//! Derivative checking by central finite differences.
//!
//! The comparison metric is a floored relative error,
//! `|a - n| / max(floor, |a|, |n|)`, so coordinates where both sides are
//! tiny compare in absolute terms instead of amplifying roundoff.

use crate::error::Result;

/// Relative error between an analytic and a numeric derivative. The floor
/// keeps the denominator away from zero.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / floor.max(analytic.abs()).max(numeric.abs())
}

/// Central difference `(f(x0 + eps) - f(x0 - eps)) / (2 eps)`.
///
/// `eval_at` must evaluate the objective with the probed coordinate set to
/// the given value. The caller restores the original value afterwards.
pub fn central_difference(
    mut eval_at: impl FnMut(f64) -> Result<f64>,
    x0: f64,
    eps: f64,
) -> Result<f64> {
    let plus = eval_at(x0 + eps)?;
    let minus = eval_at(x0 - eps)?;
    Ok((plus - minus) / (2.0 * eps))
}

/// Worst coordinate seen by a derivative check.
#[derive(Debug, Clone, Default)]
pub struct WorstCoord {
    pub rel_err: f64,
    pub analytic: f64,
    pub numeric: f64,
    pub coord: usize,
}

impl WorstCoord {
    /// Fold in one coordinate, keeping whichever disagrees more.
    pub fn update(&mut self, coord: usize, analytic: f64, numeric: f64, floor: f64) {
        let rel = relative_error(analytic, numeric, floor);
        if rel > self.rel_err {
            *self = WorstCoord {
                rel_err: rel,
                analytic,
                numeric,
                coord,
            };
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_error_uses_floor_for_tiny_values() {
        // Both sides below the floor: error is measured against the floor.
        let e = relative_error(1e-12, 0.0, 1e-8);
        assert!((e - 1e-4).abs() < 1e-12);
    }

    #[test]
    fn relative_error_symmetric_in_arguments() {
        let a = relative_error(2.0, 1.0, 1e-8);
        let b = relative_error(1.0, 2.0, 1e-8);
        assert_eq!(a, b);
        assert_eq!(a, 0.5);
    }

    #[test]
    fn central_difference_is_exact_for_quadratics() {
        // f(x) = x^2 has no third derivative, so central differences are
        // exact up to roundoff.
        let d = central_difference(|x| Ok(x * x), 3.0, 1e-5).unwrap();
        assert!((d - 6.0).abs() < 1e-9);
    }

    #[test]
    fn central_difference_matches_cosine() {
        let d = central_difference(|x| Ok(x.sin()), 1.0, 1e-5).unwrap();
        assert!((d - 1.0f64.cos()).abs() < 1e-10);
    }

    #[test]
    fn worst_coord_tracks_maximum() {
        let mut w = WorstCoord::default();
        w.update(0, 1.0, 1.0, 1e-8);
        w.update(1, 1.0, 1.5, 1e-8);
        w.update(2, 1.0, 1.1, 1e-8);
        assert_eq!(w.coord, 1);
        assert!((w.rel_err - 0.5 / 1.5).abs() < 1e-15);
    }
}
