use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

/// Sample mean with the half-width of its 95% Student-t confidence interval.
///
/// `half_width` is NaN when it is undefined: fewer than two samples, or a
/// non-finite sample (e.g. an infinite energy figure from a round that
/// delivered nothing).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub half_width: f64,
    pub n: usize,
}

impl Estimate {
    pub fn is_defined(&self) -> bool {
        self.half_width.is_finite()
    }
}

/// Two-sided 97.5% quantile of Student's t with `dof` degrees of freedom.
pub fn t_quantile_975(dof: usize) -> f64 {
    StudentsT::new(0.0, 1.0, dof as f64)
        .expect("dof is positive")
        .inverse_cdf(0.975)
}

pub fn confidence_interval(samples: &[f64]) -> Estimate {
    let n = samples.len();
    let mean = if n == 0 {
        f64::NAN
    } else {
        samples.iter().sum::<f64>() / n as f64
    };
    if n < 2 || !samples.iter().all(|x| x.is_finite()) {
        return Estimate {
            mean,
            half_width: f64::NAN,
            n,
        };
    }
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    Estimate {
        mean,
        half_width: t_quantile_975(n - 1) * var.sqrt() / (n as f64).sqrt(),
        n,
    }
}
