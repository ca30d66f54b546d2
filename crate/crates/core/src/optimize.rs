//! Derivative-free minimization: Nelder–Mead simplex with multistart.
//!
//! Objectives are minimized; likelihood fits pass the negative log
//! likelihood. Non-finite objective values are treated as `+inf`, which lets
//! callers encode hard constraints by returning NaN or infinity.

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;


use crate::rng::{stream_rng, uniform};

#[derive(Debug, Clone, Copy)]
pub struct NelderMeadOptions {
    /// Relative spread of simplex values at which a run stops.
    pub tol: f64,
    /// Iteration budget per start (restarts included).
    pub max_iter: usize,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 2000 }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn eval<F: FnMut(&[f64]) -> f64>(f: &mut F, x: &[f64]) -> f64 {
    let v = f(x);
    if v.is_finite() {
        v
    } else {
        f64::INFINITY
    }
}

fn nm_run<F: FnMut(&[f64]) -> f64>(
    f: &mut F,
    x0: &[f64],
    steps: &[f64],
    tol: f64,
    budget: usize,
) -> Minimum {
    let d = x0.len();
    let df = d as f64;
    // Dimension-adaptive coefficients (Gao & Han) behave better for d >= 4.
    let alpha = 1.0;
    let gamma = 1.0 + 2.0 / df;
    let rho = 0.75 - 1.0 / (2.0 * df);
    let shrink = 1.0 - 1.0 / df;

    let mut pts: Vec<Vec<f64>> = Vec::with_capacity(d + 1);
    pts.push(x0.to_vec());
    for i in 0..d {
        let mut p = x0.to_vec();
        p[i] += steps[i];
        pts.push(p);
    }
    let mut vals: Vec<f64> = pts.iter().map(|p| eval(f, p)).collect();
    let mut iterations = 0;
    let mut converged = false;
    let mut order: Vec<usize> = (0..=d).collect();

    while iterations < budget {
        order.sort_by(|&a, &b| vals[a].partial_cmp(&vals[b]).unwrap_or(Ordering::Equal));
        let best = order[0];
        let worst = order[d];
        let second = order[d - 1];
        let fb = vals[best];
        let fw = vals[worst];
        if fb.is_finite() && fw.is_finite() && (fw - fb).abs() <= tol * (fb.abs() + 1e-12) {
            converged = true;
            break;
        }
        iterations += 1;

        let mut centroid = vec![0.0; d];
        for &i in order.iter().take(d) {
            for (c, v) in centroid.iter_mut().zip(&pts[i]) {
                *c += v / df;
            }
        }
        let point = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&pts[worst])
                .map(|(c, w)| c + t * (w - c))
                .collect()
        };
        let xr = point(-alpha);
        let fr = eval(f, &xr);
        if fr < fb {
            let xe = point(-alpha * gamma);
            let fe = eval(f, &xe);
            if fe < fr {
                pts[worst] = xe;
                vals[worst] = fe;
            } else {
                pts[worst] = xr;
                vals[worst] = fr;
            }
            continue;
        }
        if fr < vals[second] {
            pts[worst] = xr;
            vals[worst] = fr;
            continue;
        }
        let (xc, fc) = if fr < fw {
            let xc = point(-alpha * rho);
            let fc = eval(f, &xc);
            (xc, fc)
        } else {
            let xc = point(rho);
            let fc = eval(f, &xc);
            (xc, fc)
        };
        if fc < fw.min(fr) {
            pts[worst] = xc;
            vals[worst] = fc;
            continue;
        }
        let xb = pts[best].clone();
        for &i in order.iter().skip(1) {
            for (p, b) in pts[i].iter_mut().zip(&xb) {
                *p = b + shrink * (*p - b);
            }
            vals[i] = eval(f, &pts[i]);
        }
    }
    let (ib, _) = vals
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap_or(Ordering::Equal))
        .expect("simplex is non-empty");
    Minimum { x: pts[ib].clone(), f: vals[ib], iterations, converged }
}

/// Nelder–Mead from `x0` with initial edge lengths `steps`.
///
/// After the simplex collapses the search is restarted once from the best
/// vertex; a collapsed simplex is a common false stop on elongated valleys.
pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    x0: &[f64],
    steps: &[f64],
    opts: NelderMeadOptions,
) -> Minimum {
    assert_eq!(x0.len(), steps.len());
    let mut result = nm_run(&mut f, x0, steps, opts.tol, opts.max_iter);
    let mut used = result.iterations;
    for _ in 0..3 {
        if !result.converged || used >= opts.max_iter {
            break;
        }
        let again = nm_run(&mut f, &result.x, steps, opts.tol, opts.max_iter - used);
        used += again.iterations;
        let improved = again.f < result.f - opts.tol * (result.f.abs() + 1e-12);
        let converged = again.converged;
        if again.f <= result.f {
            result.x = again.x;
            result.f = again.f;
        }
        result.converged = converged;
        if !improved {
            break;
        }
    }
    result.iterations = used;
    result
}

/// Orders minima by value, then lexicographically by parameters, so the
/// winner of a multistart is independent of evaluation order.
pub fn compare_minima(a: &Minimum, b: &Minimum) -> Ordering {
    match a.f.total_cmp(&b.f) {
        Ordering::Equal => {
            for (x, y) in a.x.iter().zip(&b.x) {
                match x.total_cmp(y) {
                    Ordering::Equal => continue,
                    o => return o,
                }
            }
            Ordering::Equal
        }
        o => o,
    }
}

/// Runs Nelder–Mead from every start and returns the best finite minimum.
pub fn multistart<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    starts: &[Vec<f64>],
    steps: &[f64],
    opts: NelderMeadOptions,
) -> Option<Minimum> {
    let mut best: Option<Minimum> = None;
    for s in starts {
        if !eval(&mut f, s).is_finite() {
            continue;
        }
        let m = nelder_mead(&mut f, s, steps, opts);
        if !m.f.is_finite() {
            continue;
        }
        best = match best {
            None => Some(m),
            Some(b) => {
                if compare_minima(&m, &b) == Ordering::Less {
                    Some(m)
                } else {
                    Some(b)
                }
            }
        };
    }
    best
}

const PRIMES: [u32; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];

fn radical_inverse(mut i: u64, base: u32) -> f64 {
    let b = base as u64;
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % b) as f64;
        i /= b;
        f *= inv;
    }
    r
}

/// `count` points of a Halton sequence in `[0,1)^dim`, randomly shifted
/// (Cranley–Patterson rotation) by `seed`.
pub fn halton_points(dim: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    assert!(dim <= PRIMES.len(), "halton dimension too large");
    let mut rng = stream_rng(seed, 0x4841_4c54);
    let shift: Vec<f64> = (0..dim).map(|_| uniform(&mut rng)).collect();
    (1..=count as u64)
        .map(|i| {
            (0..dim)
                .map(|j| {
                    let u = radical_inverse(i, PRIMES[j]) + shift[j];
                    u - libm::floor(u)
                })
                .collect()
        })
        .collect()
}
