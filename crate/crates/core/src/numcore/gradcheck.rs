//! Central-difference gradient checking.

use super::{Graph, Real, Tape, Tensor, Var};
use crate::error::Result;

/// `|a − n| / (|a| + |n| + 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs() + 1e-8)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Which input tensor and flat index produced the worst error.
    pub worst: (usize, usize),
    pub analytic: f64,
    pub numeric: f64,
    pub coordinates: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_error < tol
    }
}

/// Compares a supplied gradient against central differences of `f` around
/// `point`. Used directly when the analytic side does not come from a tape.
pub fn compare_gradient(
    analytic: &[f64],
    point: &[f64],
    step: f64,
    mut f: impl FnMut(&[f64]) -> f64,
) -> GradCheckReport {
    assert_eq!(analytic.len(), point.len());
    let mut x = point.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: (0, 0),
        analytic: 0.0,
        numeric: 0.0,
        coordinates: point.len(),
    };
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + step;
        let plus = f(&x);
        x[i] = orig - step;
        let minus = f(&x);
        x[i] = orig;
        let numeric = (plus - minus) / (2.0 * step);
        let err = relative_error(analytic[i], numeric);
        if i == 0 || err > report.max_rel_error {
            report.max_rel_error = err;
            report.worst = (0, i);
            report.analytic = analytic[i];
            report.numeric = numeric;
        }
    }
    report
}

/// Checks the tape gradient of a scalar function of several tensors.
///
/// `f` receives a fresh tape and one differentiable leaf per input and must
/// return a scalar node.
pub fn gradcheck<T, F>(f: F, inputs: &[Tensor<T>], step: f64) -> Result<GradCheckReport>
where
    T: Real,
    F: Fn(&mut Tape<T>, &[Var]) -> Result<Var>,
{
    let eval = |values: &[Tensor<T>]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|v| tape.param(v)).collect();
        let out = f(&mut tape, &vars)?;
        Ok(tape.value(&out).item().as_f64())
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|v| tape.param(v)).collect();
    let out = f(&mut tape, &vars)?;
    tape.backward(out)?;

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: (0, 0),
        analytic: 0.0,
        numeric: 0.0,
        coordinates: 0,
    };
    let mut work: Vec<Tensor<T>> = inputs.to_vec();
    for (which, var) in vars.iter().enumerate() {
        let analytic = tape
            .grad(*var)
            .map(|g| g.to_f64_vec())
            .unwrap_or_else(|| vec![0.0; inputs[which].len()]);
        for (i, &a) in analytic.iter().enumerate() {
            let orig = work[which].data()[i];
            work[which].data_mut()[i] = T::lit(orig.as_f64() + step);
            let plus = eval(&work)?;
            work[which].data_mut()[i] = T::lit(orig.as_f64() - step);
            let minus = eval(&work)?;
            work[which].data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * step);
            let err = relative_error(a, numeric);
            report.coordinates += 1;
            if err > report.max_rel_error || report.coordinates == 1 {
                report.max_rel_error = err;
                report.worst = (which, i);
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_of_squares_is_exact() {
        let x = Tensor::<f64>::from_f64([4], &[0.3, -1.2, 2.5, 0.01]).unwrap();
        let report = gradcheck(
            |t, v| {
                let sq = t.mul(&v[0], &v[0])?;
                Ok(t.sum(&sq))
            },
            &[x],
            1e-4,
        )
        .unwrap();
        assert!(report.max_rel_error < 1e-8, "{report:?}");
        assert_eq!(report.coordinates, 4);
    }

    #[test]
    fn corrupted_gradient_is_caught() {
        let point = [0.3, -1.2, 2.5];
        let analytic: Vec<f64> = point.iter().map(|x| 2.0 * x * 1.01).collect();
        let report = compare_gradient(&analytic, &point, 1e-4, |x| x.iter().map(|v| v * v).sum());
        assert!(report.max_rel_error > 1e-3, "{report:?}");
        let honest: Vec<f64> = point.iter().map(|x| 2.0 * x).collect();
        let report = compare_gradient(&honest, &point, 1e-4, |x| x.iter().map(|v| v * v).sum());
        assert!(report.max_rel_error < 1e-8);
    }

    #[test]
    fn relative_error_is_symmetric_and_bounded() {
        assert_eq!(relative_error(1.0, 1.0), 0.0);
        assert!(relative_error(1.0, -1.0) < 1.0 + 1e-12);
        assert_eq!(relative_error(2.0, 3.0), relative_error(3.0, 2.0));
    }
}
