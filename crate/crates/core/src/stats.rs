//! Tail probabilities for the Student t and F distributions, computed
//! through the regularized incomplete beta function.

use statrs::function::beta::beta_reg;

use crate::error::{Error, Result};

/// Upper-tail probability `P(T >= t)` for Student's t with `df` degrees of freedom.
pub fn student_t_upper_p(t: f64, df: f64) -> Result<f64> {
    if !(df >= 1.0 && df.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "degrees of freedom {df} must be >= 1"
        )));
    }
    if t.is_nan() {
        return Err(Error::InvalidParameter("t statistic is NaN".into()));
    }
    if t == 0.0 {
        return Ok(0.5);
    }
    let x = df / (df + t * t);
    let half_tail = 0.5 * beta_reg(df / 2.0, 0.5, x);
    Ok(if t > 0.0 { half_tail } else { 1.0 - half_tail })
}

/// Upper-tail probability `P(F >= f)` for the F distribution with `(df1, df2)`.
pub fn f_upper_p(f: f64, df1: f64, df2: f64) -> Result<f64> {
    if !(df1 >= 1.0 && df2 >= 1.0 && df1.is_finite() && df2.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "degrees of freedom ({df1}, {df2}) must both be >= 1"
        )));
    }
    if f.is_nan() || f < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "F statistic {f} must be >= 0"
        )));
    }
    if f == 0.0 {
        return Ok(1.0);
    }
    let x = df2 / (df2 + df1 * f);
    Ok(beta_reg(df2 / 2.0, df1 / 2.0, x))
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample variance with the `n - 1` denominator; `None` for fewer than two values.
pub fn sample_variance(xs: &[f64]) -> Option<f64> {
    if xs.len() < 2 {
        return None;
    }
    let m = mean(xs);
    Some(xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64)
}

pub fn sample_std_dev(xs: &[f64]) -> Option<f64> {
    sample_variance(xs).map(f64::sqrt)
}
