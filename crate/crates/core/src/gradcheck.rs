//! Central finite-difference validation of analytic gradients.

use crate::error::{Result, SpanerError};
use crate::param::Parameter;

/// A scalar objective over a named set of [`Parameter`]s.
pub trait Objective {
    /// Loss at the current parameter values, without touching gradients.
    fn loss(&self) -> Result<f64>;

    /// Zero all gradients, then fill them with `∂loss/∂θ`. Returns the loss.
    fn loss_and_grad(&mut self) -> Result<f64>;

    fn parameter_names(&self) -> Vec<String>;

    fn parameter(&self, name: &str) -> Option<&Parameter>;

    fn parameter_mut(&mut self, name: &str) -> Option<&mut Parameter>;
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter and flat coordinate with the largest relative error.
    pub worst: Option<(String, usize)>,
    /// Largest relative error per checked parameter.
    pub per_parameter: Vec<(String, f64)>,
    pub coordinates_checked: usize,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compare analytic gradients against `(f(θ+h) − f(θ−h)) / 2h` for every
/// coordinate of every non-frozen parameter. Frozen parameters must carry an
/// all-zero gradient and are otherwise skipped.
pub fn grad_check<O: Objective>(obj: &mut O, h: f64) -> Result<GradCheckReport> {
    if !(h > 0.0) {
        return Err(SpanerError::Argument(format!("step h must be positive, got {h}")));
    }
    let base = obj.loss_and_grad()?;
    if !base.is_finite() {
        return Err(SpanerError::Numeric {
            step: 0,
            message: format!("loss is {base}"),
        });
    }
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        per_parameter: Vec::new(),
        coordinates_checked: 0,
    };
    for name in obj.parameter_names() {
        let param = obj.parameter(&name).expect("listed parameter exists");
        if param.frozen {
            if param.grad.data().iter().any(|&g| g != 0.0) {
                return Err(SpanerError::Numeric {
                    step: 0,
                    message: format!("frozen parameter {name} received a gradient"),
                });
            }
            continue;
        }
        let analytic = param.grad.clone();
        let mut worst_here: f64 = 0.0;
        for i in 0..analytic.len() {
            let orig = obj.parameter(&name).unwrap().value.data()[i];
            obj.parameter_mut(&name).unwrap().value.data_mut()[i] = orig + h;
            let plus = obj.loss()?;
            obj.parameter_mut(&name).unwrap().value.data_mut()[i] = orig - h;
            let minus = obj.loss()?;
            obj.parameter_mut(&name).unwrap().value.data_mut()[i] = orig;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(SpanerError::Numeric {
                    step: 0,
                    message: format!("non-finite loss perturbing {name}[{i}]"),
                });
            }
            let numeric = (plus - minus) / (2.0 * h);
            let err = relative_error(analytic.data()[i], numeric);
            report.coordinates_checked += 1;
            worst_here = worst_here.max(err);
            if report.worst.is_none() || err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = Some((name.clone(), i));
            }
        }
        report.per_parameter.push((name, worst_here));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    /// ½‖θ‖² over two parameters, one optionally frozen.
    struct Quadratic {
        a: Parameter,
        b: Parameter,
        corrupt: bool,
    }

    impl Objective for Quadratic {
        fn loss(&self) -> Result<f64> {
            Ok(0.5
                * self
                    .a
                    .value
                    .data()
                    .iter()
                    .chain(self.b.value.data())
                    .map(|v| v * v)
                    .sum::<f64>())
        }

        fn loss_and_grad(&mut self) -> Result<f64> {
            self.a.zero_grad();
            self.b.zero_grad();
            let ga: Vec<f64> = self.a.value.data().to_vec();
            let mut gb: Vec<f64> = self.b.value.data().to_vec();
            if self.corrupt {
                gb[0] *= 1.1;
            }
            self.a.accumulate(&ga);
            self.b.accumulate(&gb);
            self.loss()
        }

        fn parameter_names(&self) -> Vec<String> {
            vec!["a".into(), "b".into()]
        }

        fn parameter(&self, name: &str) -> Option<&Parameter> {
            match name {
                "a" => Some(&self.a),
                "b" => Some(&self.b),
                _ => None,
            }
        }

        fn parameter_mut(&mut self, name: &str) -> Option<&mut Parameter> {
            match name {
                "a" => Some(&mut self.a),
                "b" => Some(&mut self.b),
                _ => None,
            }
        }
    }

    fn quad(corrupt: bool) -> Quadratic {
        Quadratic {
            a: Parameter::new(Tensor::new(vec![2], vec![1.0, 2.0]).unwrap()),
            b: Parameter::new(Tensor::new(vec![1], vec![-0.5]).unwrap()),
            corrupt,
        }
    }

    #[test]
    fn quadratic_passes() {
        let mut q = quad(false);
        let r = grad_check(&mut q, 1e-4).unwrap();
        assert!(r.max_rel_error < 1e-9, "{r:?}");
        assert_eq!(q.a.grad.data(), &[1.0, 2.0]);
        assert_eq!(r.coordinates_checked, 3);
    }

    #[test]
    fn frozen_parameter_is_skipped() {
        let mut q = quad(false);
        q.b.frozen = true;
        let r = grad_check(&mut q, 1e-4).unwrap();
        assert_eq!(r.coordinates_checked, 2);
        assert!(q.b.grad.data().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn corrupted_gradient_is_flagged() {
        let mut q = quad(true);
        let r = grad_check(&mut q, 1e-4).unwrap();
        assert!(r.max_rel_error > 0.05);
        assert_eq!(r.worst, Some(("b".to_string(), 0)));
    }

    #[test]
    fn rejects_nonpositive_step() {
        assert!(grad_check(&mut quad(false), 0.0).is_err());
    }
}
