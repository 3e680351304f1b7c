//! LOESS: locally weighted linear regression with tricube weights over
//! equally spaced samples, with optional per-point robustness weights.

/// Fit the local linear model at position `x0` (which may lie outside the
/// sample range, giving local extrapolation) using the `span` nearest
/// points. `exclude` removes one sample from the fit, giving a
/// leave-one-out prediction.
pub(crate) fn loess_at(values: &[f64], x0: f64, span: usize, exclude: Option<usize>) -> f64 {
    let n = values.len();
    match n {
        0 => return 0.0,
        1 => return values[0],
        _ => {}
    }
    let q = span.max(2);
    let q_eff = q.min(n);

    // Window of the q_eff nearest integer positions, clamped to the sample.
    let half = (q_eff - 1) as f64 / 2.0;
    let lo = (x0 - half).round() as isize;
    let lo = lo.clamp(0, (n - q_eff) as isize) as usize;
    let hi = lo + q_eff; // exclusive

    let mut d_max = 0.0_f64;
    for i in lo..hi {
        d_max = d_max.max((i as f64 - x0).abs());
    }
    if q > n {
        // Classic span handling: widen the bandwidth when the requested span
        // exceeds the sample.
        d_max *= q as f64 / n as f64;
    }

    let fit = |honor_exclude: bool| -> (f64, f64, f64, f64, f64) {
        let (mut sw, mut st, mut stt, mut sy, mut sty) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for i in lo..hi {
            if honor_exclude && exclude == Some(i) {
                continue;
            }
            let t = i as f64 - x0;
            let u = if d_max > 0.0 { t.abs() / d_max } else { 0.0 };
            let w = if u < 1.0 {
                let c = 1.0 - u * u * u;
                c * c * c
            } else {
                0.0
            };
            if w == 0.0 {
                continue;
            }
            sw += w;
            st += w * t;
            stt += w * t * t;
            sy += w * values[i];
            sty += w * t * values[i];
        }
        (sw, st, stt, sy, sty)
    };

    let (mut sw, mut st, mut stt, mut sy, mut sty) = fit(true);
    if sw == 0.0 && exclude.is_some() {
        // The excluded point was the only one carrying weight; refit with it
        // rather than dividing by nothing.
        (sw, st, stt, sy, sty) = fit(false);
    }
    if sw == 0.0 {
        // All window weights vanished (tiny spans at symmetric distances):
        // fall back to the plain window mean.
        let sum: f64 = values[lo..hi].iter().sum();
        return sum / q_eff as f64;
    }
    let det = sw * stt - st * st;
    if det.abs() <= 1e-12 * (sw * stt).abs() || stt == 0.0 {
        return sy / sw;
    }
    (stt * sy - st * sty) / det
}

/// Smooth the whole series, evaluating the local fit at every position.
pub(crate) fn loess_smooth(values: &[f64], span: usize) -> Vec<f64> {
    (0..values.len())
        .map(|i| loess_at(values, i as f64, span, None))
        .collect()
}

pub(crate) fn next_odd(x: usize) -> usize {
    if x.is_multiple_of(2) {
        x + 1
    } else {
        x
    }
}
