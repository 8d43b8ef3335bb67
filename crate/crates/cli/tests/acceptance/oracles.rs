//! Independent spectral oracles for the acceptance suite, written with a
//! direct DFT so they share no code with the solvers.

use std::f64::consts::PI;

/// Fourier coefficients `(re, im)` of node samples.
fn dft(f: &[f64]) -> Vec<(f64, f64)> {
    let n = f.len();
    (0..n)
        .map(|k| {
            f.iter().enumerate().fold((0.0, 0.0), |(re, im), (j, v)| {
                let a = -2.0 * PI * (k * j) as f64 / n as f64;
                (re + v * a.cos(), im + v * a.sin())
            })
        })
        .collect()
}

/// Applies the Fourier multiplier `mult(w)` (complex, as `(re, im)`) at
/// angular wave number `w = 2πk/L`, with signed `k`.
fn apply(f: &[f64], length: f64, mult: impl Fn(f64) -> (f64, f64)) -> Vec<f64> {
    let n = f.len();
    let coef = dft(f);
    let mut out = vec![0.0; n];
    for (k, &(re, im)) in coef.iter().enumerate() {
        let kk = if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
        let (mr, mi) = mult(2.0 * PI * kk / length);
        let (re, im) = (re * mr - im * mi, re * mi + im * mr);
        for (j, o) in out.iter_mut().enumerate() {
            let a = 2.0 * PI * (k * j) as f64 / n as f64;
            *o += (re * a.cos() - im * a.sin()) / n as f64;
        }
    }
    out
}

/// Solution of `∂_t m + c·∂_x m = ∂²_x m` at time `t`.
pub fn drift_heat(m0: &[f64], length: f64, c: f64, t: f64) -> Vec<f64> {
    apply(m0, length, |w| {
        let damp = (-w * w * t).exp();
        (damp * (w * c * t).cos(), -damp * (w * c * t).sin())
    })
}

/// Cole–Hopf solution of `−∂_t u + ½|∂_x u|² = ∂²_x u`, `u(T) = g`, at the
/// remaining time `s = T − t`: `u = −2 log P_s e^{−g/2}`.
pub fn cole_hopf(g: &[f64], length: f64, s: f64) -> Vec<f64> {
    let w: Vec<f64> = g.iter().map(|v| (-v / 2.0).exp()).collect();
    drift_heat(&w, length, 0.0, s).iter().map(|v| -2.0 * v.ln()).collect()
}
