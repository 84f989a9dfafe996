//! Real-root solver for the compressibility-factor cubic.

/// Roots of Z³ + c2·Z² + c1·Z + c0 = 0, ascending. One or three real roots
/// (a double root is reported twice by the trigonometric branch).
pub fn cubic_roots(c2: f64, c1: f64, c0: f64) -> Vec<f64> {
    // depressed cubic t³ + p t + q with Z = t - c2/3
    let shift = c2 / 3.0;
    let p = c1 - c2 * c2 / 3.0;
    let q = 2.0 * c2 * c2 * c2 / 27.0 - c2 * c1 / 3.0 + c0;
    let disc = 0.25 * q * q + p * p * p / 27.0;

    let mut roots = if disc > 0.0 {
        let s = disc.sqrt();
        let u = (-0.5 * q + s).cbrt();
        let v = (-0.5 * q - s).cbrt();
        vec![u + v - shift]
    } else {
        let r = (-p / 3.0).sqrt();
        let arg = (-0.5 * q / (r * r * r)).clamp(-1.0, 1.0);
        let phi = arg.acos();
        (0..3)
            .map(|k| 2.0 * r * ((phi + 2.0 * std::f64::consts::PI * k as f64) / 3.0).cos() - shift)
            .collect()
    };

    for z in roots.iter_mut() {
        *z = polish(*z, c2, c1, c0);
    }
    roots.sort_by(|a, b| a.partial_cmp(b).unwrap());
    roots
}

// a few Newton steps to bring trig/Cardano roots to full precision
fn polish(mut z: f64, c2: f64, c1: f64, c0: f64) -> f64 {
    for _ in 0..3 {
        let f = ((z + c2) * z + c1) * z + c0;
        let df = (3.0 * z + 2.0 * c2) * z + c1;
        if df == 0.0 {
            break;
        }
        let step = f / df;
        z -= step;
        if step.abs() <= 1e-15 * z.abs().max(1.0) {
            break;
        }
    }
    z
}
