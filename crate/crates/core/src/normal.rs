//! Standard normal distribution function and quantile.

use crate::{Error, Result};

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Acklam's rational approximation followed by one Newton step.
pub fn normal_quantile(q: f64) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::Domain(format!("quantile level must lie in (0, 1), got {q}")));
    }
    const A: [f64; 6] = [
        -3.969683028665376e1,
        2.209460984245205e2,
        -2.759285104469687e2,
        1.383577518672690e2,
        -3.066479806614716e1,
        2.506628277459239,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e1,
        1.615858368580409e2,
        -1.556989798598866e2,
        6.680131188771972e1,
        -1.328068155288572e1,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-3,
        -3.223964580411365e-1,
        -2.400758277161838,
        -2.549732539343734,
        4.374664141464968,
        2.938163982698783,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-3,
        3.224671290700398e-1,
        2.445134137142996,
        3.754408661907416,
    ];
    const LOW: f64 = 0.02425;

    let tail = |r: f64| {
        let s = (-2.0 * r.ln()).sqrt();
        (((((C[0] * s + C[1]) * s + C[2]) * s + C[3]) * s + C[4]) * s + C[5])
            / ((((D[0] * s + D[1]) * s + D[2]) * s + D[3]) * s + 1.0)
    };
    let x = if q < LOW {
        tail(q)
    } else if q > 1.0 - LOW {
        -tail(1.0 - q)
    } else {
        let r = q - 0.5;
        let s = r * r;
        (((((A[0] * s + A[1]) * s + A[2]) * s + A[3]) * s + A[4]) * s + A[5]) * r
            / (((((B[0] * s + B[1]) * s + B[2]) * s + B[3]) * s + B[4]) * s + 1.0)
    };
    // Newton on Phi(x) - q, using the upper tail where it is more accurate
    let err = if q > 0.5 {
        (1.0 - q) - 0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
    } else {
        normal_cdf(x) - q
    };
    Ok(x - err / normal_pdf(x))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_values() {
        assert_eq!(normal_quantile(0.5).unwrap(), 0.0);
        assert!((normal_quantile(0.95).unwrap() - 1.6448536269514715).abs() < 1e-12);
        assert!((normal_quantile(0.975).unwrap() - 1.959963984540054).abs() < 1e-12);
        assert!((normal_quantile(1e-6).unwrap() + 4.753424308822899).abs() < 1e-9);
        assert!((normal_cdf(1.0) - 0.8413447460685429).abs() < 1e-15);
        assert_eq!(normal_cdf(0.0), 0.5);
    }

    #[test]
    fn round_trip_on_percentiles() {
        for k in 1..100 {
            let q = k as f64 / 100.0;
            assert!((normal_cdf(normal_quantile(q).unwrap()) - q).abs() < 1e-9, "{q}");
        }
    }

    #[test]
    fn symmetry() {
        for q in [1e-10, 0.001, 0.02, 0.3, 0.49] {
            let a = normal_quantile(q).unwrap();
            let b = normal_quantile(1.0 - q).unwrap();
            assert!((a + b).abs() < 1e-8 * (1.0 + a.abs()), "{q}: {a} {b}");
        }
    }

    #[test]
    fn domain() {
        for q in [0.0, 1.0, -0.1, f64::NAN] {
            assert!(matches!(normal_quantile(q), Err(Error::Domain(_))));
        }
    }
}
