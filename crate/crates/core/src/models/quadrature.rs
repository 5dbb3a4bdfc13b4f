//! Globally adaptive Gauss–Kronrod (7/15) quadrature.

use crate::error::{Result, SpocError};

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
// Gauss weights for the odd Kronrod nodes XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// One 15-point Kronrod rule on `[a, b]`: `(integral, |K15 - G7|)`.
pub fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self {
            abs_tol: 1e-14,
            rel_tol: 1e-12,
            max_intervals: 2000,
        }
    }
}

/// `int_a^b f`, bisecting the interval with the largest error estimate until
/// the summed estimate meets `max(abs_tol, rel_tol * |I|)`.
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, opts: QuadOptions) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let mut parts = vec![{
        let (v, e) = gk15(&mut f, a, b);
        (a, b, v, e)
    }];
    loop {
        let total: f64 = parts.iter().map(|p| p.2).sum();
        let err: f64 = parts.iter().map(|p| p.3).sum();
        if !total.is_finite() {
            return Err(SpocError::Numeric(format!("non-finite integrand on [{a}, {b}]")));
        }
        if err <= opts.abs_tol.max(opts.rel_tol * total.abs()) {
            return Ok(total);
        }
        if parts.len() >= opts.max_intervals {
            return Err(SpocError::Numeric(format!(
                "quadrature on [{a}, {b}] did not converge: estimate {total}, error {err}"
            )));
        }
        let (worst, _) = parts
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("non-empty");
        let (lo, hi, _, _) = parts.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = gk15(&mut f, lo, mid);
        let (v2, e2) = gk15(&mut f, mid, hi);
        parts.push((lo, mid, v1, e1));
        parts.push((mid, hi, v2, e2));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomials_are_exact() {
        let (v, _) = gk15(&mut |x: f64| x.powi(20) - 3.0 * x.powi(7), -1.0, 2.0);
        let exact = (2f64.powi(21) + 1.0) / 21.0 - 3.0 * (2f64.powi(8) - 1.0) / 8.0;
        assert!((v - exact).abs() < 1e-12 * exact.abs());
    }

    #[test]
    fn adaptive_handles_peaks_and_singular_slopes() {
        let v = integrate(|x| (-1e4 * (x - 0.3) * (x - 0.3)).exp(), 0.0, 1.0, QuadOptions::default())
            .unwrap();
        assert!((v - (std::f64::consts::PI / 1e4).sqrt()).abs() < 1e-13);
        let v = integrate(f64::sqrt, 0.0, 1.0, QuadOptions::default()).unwrap();
        assert!((v - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn reports_non_convergence() {
        let opts = QuadOptions {
            max_intervals: 5,
            ..Default::default()
        };
        assert!(integrate(|x| (1.0 / x).sin(), 1e-6, 1.0, opts).is_err());
    }
}
