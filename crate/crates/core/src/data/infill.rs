use super::record::{is_missing, BasinRecord};
use crate::error::{Error, Result};

/// Fewest observed points a series needs before its gaps can be filled.
pub const MIN_KNOTS: usize = 2;

/// Natural cubic spline through strictly increasing knots.
#[derive(Clone, Debug)]
pub struct NaturalSpline {
    x: Vec<f64>,
    y: Vec<f64>,
    /// Second derivatives at the knots; zero at both ends.
    m: Vec<f64>,
}

impl NaturalSpline {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let n = x.len();
        if n != y.len() || n < 2 {
            return Err(Error::Contract(format!(
                "spline needs ≥ 2 paired knots, got {n}"
            )));
        }
        if x.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Contract(
                "spline knots must be strictly increasing".into(),
            ));
        }
        let mut m = vec![0.0; n];
        if n > 2 {
            // Tridiagonal system for the interior second derivatives,
            // solved with the Thomas algorithm.
            let k = n - 2;
            let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
            let mut diag = vec![0.0; k];
            let mut upper = vec![0.0; k];
            let mut rhs = vec![0.0; k];
            for i in 0..k {
                diag[i] = 2.0 * (h[i] + h[i + 1]);
                upper[i] = h[i + 1];
                rhs[i] = 6.0 * ((y[i + 2] - y[i + 1]) / h[i + 1] - (y[i + 1] - y[i]) / h[i]);
            }
            for i in 1..k {
                let w = h[i] / diag[i - 1];
                diag[i] -= w * upper[i - 1];
                rhs[i] -= w * rhs[i - 1];
            }
            m[k] = rhs[k - 1] / diag[k - 1];
            for i in (0..k - 1).rev() {
                m[i + 1] = (rhs[i] - upper[i] * m[i + 2]) / diag[i];
            }
        }
        Ok(Self { x, y, m })
    }

    /// Value at `t`, which must lie within the knot range.
    pub fn eval(&self, t: f64) -> f64 {
        let n = self.x.len();
        let i = match self.x.binary_search_by(|v| v.total_cmp(&t)) {
            Ok(i) => return self.y[i],
            Err(i) => i.clamp(1, n - 1) - 1,
        };
        let h = self.x[i + 1] - self.x[i];
        let a = (self.x[i + 1] - t) / h;
        let b = (t - self.x[i]) / h;
        a * self.y[i]
            + b * self.y[i + 1]
            + ((a * a * a - a) * self.m[i] + (b * b * b - b) * self.m[i + 1]) * h * h / 6.0
    }
}

/// Fills the missing entries of one series. Interior gaps come from a
/// natural cubic spline through every observed point; leading and trailing
/// gaps repeat the nearest observation. Observed values are never changed.
pub fn infill_series(name: &str, values: &[f64]) -> Result<Vec<f64>> {
    let known: Vec<usize> = (0..values.len())
        .filter(|&i| !is_missing(values[i]))
        .collect();
    if known.len() == values.len() {
        return Ok(values.to_vec());
    }
    if known.len() < MIN_KNOTS {
        return Err(Error::Infill {
            variable: name.to_string(),
            message: format!("{} observed points, need at least {MIN_KNOTS}", known.len()),
        });
    }
    let spline = NaturalSpline::new(
        known.iter().map(|&i| i as f64).collect(),
        known.iter().map(|&i| values[i]).collect(),
    )?;
    let (first, last) = (known[0], known[known.len() - 1]);
    Ok(values
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            if !is_missing(v) {
                v
            } else if i < first {
                values[first]
            } else if i > last {
                values[last]
            } else {
                spline.eval(i as f64)
            }
        })
        .collect())
}

/// Fills every missing value of every series of the record.
pub fn infill(record: &BasinRecord) -> Result<BasinRecord> {
    let mut out = record.clone();
    for (col, name) in out.dynamic.iter_mut().zip(&record.dynamic_names) {
        *col = infill_series(name, col)?;
    }
    out.target = infill_series(&record.target_name, &record.target)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::record::MISSING;
    use proptest::prelude::*;

    #[test]
    fn two_knots_degenerate_to_linear() {
        assert_eq!(
            infill_series("x", &[0.0, MISSING, 2.0]).unwrap(),
            vec![0.0, 1.0, 2.0]
        );
    }

    #[test]
    fn no_missing_values_is_identity() {
        let v = vec![3.0, -1.0, 7.5];
        assert_eq!(infill_series("x", &v).unwrap(), v);
    }

    #[test]
    fn ends_repeat_nearest_observation() {
        let m = MISSING;
        assert_eq!(
            infill_series("x", &[m, m, 1.0, 2.0, 4.0, m]).unwrap(),
            vec![1.0, 1.0, 1.0, 2.0, 4.0, 4.0]
        );
    }

    #[test]
    fn too_few_points_is_an_error() {
        let m = MISSING;
        assert!(
            matches!(infill_series("q", &[m, 1.0, m]), Err(Error::Infill { variable, .. }) if variable == "q")
        );
    }

    #[test]
    fn spline_reproduces_natural_conditions() {
        // A natural spline through (0,0), (1,1), (2,0) has m₁ = −3 and is
        // symmetric, so s(0.5) = 0.5 + (0.125 − 0.5)(−3)/6 = 0.6875.
        let s = NaturalSpline::new(vec![0.0, 1.0, 2.0], vec![0.0, 1.0, 0.0]).unwrap();
        assert!((s.eval(0.5) - 0.6875).abs() < 1e-15);
        assert!((s.eval(1.5) - 0.6875).abs() < 1e-15);
    }

    #[test]
    fn cubic_is_recovered_between_dense_knots() {
        // The natural end condition is only wrong near the ends, and its
        // error decays geometrically inward, so interior gaps far from the
        // ends recover a cubic to near machine precision.
        let f = |t: f64| 0.001 * t * t * t - 0.05 * t * t + 0.3 * t - 2.0;
        let n = 400;
        let truth: Vec<f64> = (0..n).map(|i| f(i as f64 / 10.0)).collect();
        let mut holed = truth.clone();
        for gap in [(150, 155), (200, 229), (260, 261)] {
            for v in &mut holed[gap.0..gap.1] {
                *v = MISSING;
            }
        }
        let filled = infill_series("c", &holed).unwrap();
        for i in 150..261 {
            assert!(
                (filled[i] - truth[i]).abs() < 1e-8,
                "i={i}: {} vs {}",
                filled[i],
                truth[i]
            );
        }
    }

    proptest! {
        #[test]
        fn observed_values_are_untouched(
            values in prop::collection::vec(prop::option::weighted(0.7, -50.0f64..50.0), 2..80)
        ) {
            let series: Vec<f64> = values.iter().map(|v| v.unwrap_or(MISSING)).collect();
            let known = series.iter().filter(|v| !is_missing(**v)).count();
            match infill_series("x", &series) {
                Ok(filled) => {
                    prop_assert!(filled.iter().all(|v| v.is_finite()));
                    for (a, b) in series.iter().zip(&filled) {
                        if !is_missing(*a) {
                            prop_assert_eq!(a.to_bits(), b.to_bits());
                        }
                    }
                }
                Err(_) => prop_assert!(known < MIN_KNOTS),
            }
        }
    }
}
