//! Torus geodesics by RK4 shooting.
//!
//! Metric in angle coordinates: `ds² = R(φ)² dθ² + b² dφ²`, `R = a + b cos φ`.

use std::f64::consts::PI;

use nalgebra::DVector;

pub(super) fn point(a: f64, b: f64, th: f64, ph: f64) -> DVector<f64> {
    let r = a + b * ph.cos();
    DVector::from_vec(vec![r * th.cos(), r * th.sin(), b * ph.sin()])
}

pub(super) fn angles(a: f64, y: &DVector<f64>) -> (f64, f64) {
    let rxy = y[0].hypot(y[1]);
    (y[1].atan2(y[0]), y[2].atan2(rxy - a))
}

fn wrap(x: f64) -> f64 {
    let y = (x + PI).rem_euclid(2.0 * PI) - PI;
    if y == -PI {
        PI
    } else {
        y
    }
}

type State = [f64; 4];

fn rhs(a: f64, b: f64, s: &State) -> State {
    let (sp, cp) = s[1].sin_cos();
    let r = a + b * cp;
    [s[2], s[3], 2.0 * b * sp / r * s[2] * s[3], -r * sp / b * s[2] * s[2]]
}

/// End point `(θ, φ)` of the unit-speed geodesic of length `len` leaving
/// `(θ0, φ0)` at angle `beta` against `∂θ` in an orthonormal frame.
fn shoot(a: f64, b: f64, th0: f64, ph0: f64, beta: f64, len: f64) -> (f64, f64) {
    let r0 = a + b * ph0.cos();
    let mut s: State = [th0, ph0, beta.cos() / r0, beta.sin() / b];
    let n = ((len.abs() * 200.0 / b).ceil() as usize).max(16);
    let h = len / n as f64;
    for _ in 0..n {
        let k1 = rhs(a, b, &s);
        let k2 = rhs(a, b, &add(&s, &k1, 0.5 * h));
        let k3 = rhs(a, b, &add(&s, &k2, 0.5 * h));
        let k4 = rhs(a, b, &add(&s, &k3, h));
        for i in 0..4 {
            s[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    (s[0], s[1])
}

fn add(s: &State, k: &State, h: f64) -> State {
    [s[0] + h * k[0], s[1] + h * k[1], s[2] + h * k[2], s[3] + h * k[3]]
}

/// Newton iteration on `(β, L)` toward the lifted target `(θ0+dθ, φ0+dφ)`.
fn solve(a: f64, b: f64, th0: f64, ph0: f64, dth: f64, dph: f64) -> Option<f64> {
    let pm = ph0 + 0.5 * dph;
    let rm = a + b * pm.cos();
    let (mut beta, mut len) = ((b * dph).atan2(rm * dth), (rm * dth).hypot(b * dph));
    let target = (th0 + dth, ph0 + dph);
    let resid = |beta: f64, len: f64| {
        let (t, p) = shoot(a, b, th0, ph0, beta, len);
        (t - target.0, p - target.1)
    };
    let norm = |r: (f64, f64)| ((a + b) * r.0).hypot(b * r.1);
    let mut r = resid(beta, len);
    for _ in 0..60 {
        if norm(r) < 1e-13 * (a + b) {
            return Some(len);
        }
        let hb = 1e-7;
        let hl = 1e-7 * len.max(b);
        let rb = resid(beta + hb, len);
        let rl = resid(beta, len + hl);
        let j = [
            [(rb.0 - r.0) / hb, (rl.0 - r.0) / hl],
            [(rb.1 - r.1) / hb, (rl.1 - r.1) / hl],
        ];
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        if det == 0.0 || !det.is_finite() {
            return None;
        }
        let db = (j[1][1] * r.0 - j[0][1] * r.1) / det;
        let dl = (-j[1][0] * r.0 + j[0][0] * r.1) / det;
        let mut step = 1.0;
        loop {
            let (nb, nl) = (beta - step * db, len - step * dl);
            if nl > 0.0 {
                let nr = resid(nb, nl);
                if norm(nr) < norm(r) {
                    beta = nb;
                    len = nl;
                    r = nr;
                    break;
                }
            }
            step *= 0.5;
            if step < 1e-6 {
                return (norm(r) < 1e-9 * (a + b)).then_some(len);
            }
        }
    }
    (norm(r) < 1e-9 * (a + b)).then_some(len)
}

/// Length of the chart-straight path, an upper bound on the distance.
fn chart_path_length(a: f64, b: f64, ph0: f64, dth: f64, dph: f64) -> f64 {
    let n = 512;
    (0..n)
        .map(|k| {
            let ph = ph0 + dph * (k as f64 + 0.5) / n as f64;
            ((a + b * ph.cos()) * dth).hypot(b * dph) / n as f64
        })
        .sum()
}

pub(super) fn geodesic(a: f64, b: f64, p: &DVector<f64>, q: &DVector<f64>) -> f64 {
    let chord = (p - q).norm();
    if chord == 0.0 {
        return 0.0;
    }
    let (t0, p0) = angles(a, p);
    let (t1, p1) = angles(a, q);
    let (dt, dp) = (wrap(t1 - t0), wrap(p1 - p0));
    let reach = b.min(a - b);
    let lifts: &[i32] = if chord < 0.5 * reach { &[0] } else { &[0, -1, 1] };
    let mut best = f64::INFINITY;
    let mut bound = f64::INFINITY;
    for &i in lifts {
        for &j in lifts {
            let (x, y) = (dt + 2.0 * PI * i as f64, dp + 2.0 * PI * j as f64);
            bound = bound.min(chart_path_length(a, b, p0, x, y));
            if let Some(l) = solve(a, b, t0, p0, x, y) {
                best = best.min(l);
            }
        }
    }
    // A shot geodesic is never longer than the chart path it was seeded from
    // unless it converged to a non-minimal branch.
    best.min(bound).max(chord)
}
