//! Student-t tail probabilities via the regularized incomplete beta function.

use statrs::function::beta::beta_reg;

/// Two-sided tail probability `P(|T| ≥ |t|)` for Student's t with `df` degrees of freedom.
pub fn student_t_two_sided_p(t: f64, df: f64) -> f64 {
    if t.is_nan() {
        return f64::NAN;
    }
    if t.is_infinite() {
        return 0.0;
    }
    let x = df / (df + t * t);
    beta_reg(df / 2.0, 0.5, x).clamp(0.0, 1.0)
}

/// CDF of Student's t with `df` degrees of freedom.
pub fn student_t_cdf(t: f64, df: f64) -> f64 {
    let tail = 0.5 * student_t_two_sided_p(t, df);
    if t >= 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    #[test]
    fn t_distribution_closed_forms() {
        // df = 1 is Cauchy: P(|T| ≥ t) = 1 - 2 atan(t) / π
        for &t in &[0.1, 1.0, 3.0, 25.0] {
            let expected = 1.0 - 2.0 * f64::atan(t) / PI;
            assert_abs_diff_eq!(student_t_two_sided_p(t, 1.0), expected, epsilon = 1e-12);
        }
        // df = 2: P(|T| ≥ t) = 1 - t / sqrt(2 + t²)
        for &t in &[0.5f64, 2.0, 10.0] {
            let expected = 1.0 - t / (2.0 + t * t).sqrt();
            assert_abs_diff_eq!(student_t_two_sided_p(t, 2.0), expected, epsilon = 1e-12);
        }
        assert_eq!(student_t_two_sided_p(0.0, 5.0), 1.0);
        assert_eq!(student_t_two_sided_p(f64::INFINITY, 5.0), 0.0);
        assert_abs_diff_eq!(student_t_cdf(0.0, 9.0), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(
            student_t_cdf(-1.3, 9.0) + student_t_cdf(1.3, 9.0),
            1.0,
            epsilon = 1e-14
        );
    }
}
