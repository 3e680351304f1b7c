//! Numeric utilities: order statistics and the Student-t quantile.
//!
//! The t quantile is computed through the inverse regularized incomplete
//! beta function (continued fraction for the forward direction, Newton with
//! a bisection safeguard for the inverse), giving better than 1e-8 accuracy
//! over the degrees of freedom this crate uses.

/// Median using the lower middle element for even lengths, so the result is
/// always a member of the sample. Input may be unsorted.
pub fn median_lower(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let mut sorted = xs.to_vec();
    sorted.sort_unstable_by(|a, b| a.partial_cmp(b).expect("non-finite sample"));
    Some(sorted[(sorted.len() - 1) / 2])
}

/// Linear-interpolated percentile of raw values, `pct` in (0, 100).
pub fn percentile_linear(xs: &[f64], pct: f64) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let mut sorted = xs.to_vec();
    sorted.sort_unstable_by(|a, b| a.partial_cmp(b).expect("non-finite sample"));
    if sorted.len() == 1 {
        return Some(sorted[0]);
    }
    let h = pct / 100.0 * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = h - lo as f64;
    Some(sorted[lo] + frac * (sorted[hi] - sorted[lo]))
}

/// Natural log of the gamma function (Lanczos approximation, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    const COEFFS: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // Reflection formula.
        let pi = std::f64::consts::PI;
        return pi.ln() - (pi * x).sin().ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEFFS[0];
    for (i, &c) in COEFFS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Regularized incomplete beta function I_x(a, b), via the Lentz continued
/// fraction with the symmetry transform for fast convergence.
pub fn betainc_regularized(a: f64, b: f64, x: f64) -> f64 {
    assert!(a > 0.0 && b > 0.0, "beta parameters must be positive");
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const MAX_ITER: usize = 500;
    const EPS: f64 = 1e-15;
    const TINY: f64 = 1e-300;

    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        // Even step.
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        // Odd step.
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Inverse of [`betainc_regularized`] in x for fixed (a, b): returns x with
/// I_x(a, b) = p. Newton iteration with bisection fallback.
pub fn betainc_inv(a: f64, b: f64, p: f64) -> f64 {
    assert!((0.0..=1.0).contains(&p), "probability out of range");
    if p == 0.0 {
        return 0.0;
    }
    if p == 1.0 {
        return 1.0;
    }
    let ln_beta = ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b);

    let mut lo = 0.0_f64;
    let mut hi = 1.0_f64;
    let mut x = 0.5_f64;
    for _ in 0..300 {
        let f = betainc_regularized(a, b, x) - p;
        if f.abs() < 1e-14 {
            return x;
        }
        if f > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        if hi - lo < f64::EPSILON * hi.max(f64::MIN_POSITIVE) {
            return (lo + hi) / 2.0;
        }
        // Newton step off the beta density; near the interval edges the
        // density can vanish or blow up, so fall back to bisection whenever
        // the step leaves the bracket.
        let ln_pdf = (a - 1.0) * x.ln() + (b - 1.0) * (1.0 - x).ln() - ln_beta;
        let pdf = ln_pdf.exp();
        let mut next = if pdf > 0.0 && pdf.is_finite() {
            x - f / pdf
        } else {
            (lo + hi) / 2.0
        };
        if !(next > lo && next < hi) {
            next = (lo + hi) / 2.0;
        }
        x = next;
    }
    x
}

/// Quantile of the Student-t distribution with `dof` degrees of freedom:
/// returns t with CDF(t) = p.
pub fn student_t_quantile(p: f64, dof: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "probability out of range");
    assert!(dof > 0.0, "degrees of freedom must be positive");
    if (p - 0.5).abs() < 1e-16 {
        return 0.0;
    }
    if p < 0.5 {
        return -student_t_quantile(1.0 - p, dof);
    }
    // For t >= 0: 1 - CDF(t) = 0.5 * I_u(dof/2, 1/2) with u = dof/(dof+t^2),
    // so u = betainc_inv(dof/2, 1/2, 2*(1-p)) and t = sqrt(dof*(1-u)/u).
    let tail2 = 2.0 * (1.0 - p);
    let u = betainc_inv(dof / 2.0, 0.5, tail2);
    if u <= 0.0 {
        return f64::INFINITY;
    }
    (dof * (1.0 - u) / u).sqrt()
}
