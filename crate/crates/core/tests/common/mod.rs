//! Test-only reference routines that do not go through the library's builders or solvers.
#![allow(dead_code)]

use dimerwork::numerics::{Mat4, C64};

/// The dimer matrix written out entry by entry (J = 1), antisymmetric or general site amplitudes.
pub fn literal_dimer(u: f64, d1: f64, d2: f64) -> [[f64; 4]; 4] {
    [
        [u + d1, -1.0, 1.0, 0.0],
        [-1.0, 0.0, 0.0, -1.0],
        [1.0, 0.0, 0.0, 1.0],
        [0.0, -1.0, 1.0, u + d2],
    ]
}

pub fn to_complex(a: &[[f64; 4]; 4]) -> Mat4 {
    Mat4::from_fn(|i, j| C64::new(a[i][j], 0.0))
}

/// `det(A - x I)` by Gaussian elimination with partial pivoting.
pub fn char_poly(a: &[[f64; 4]; 4], x: f64) -> f64 {
    let mut m = *a;
    for (i, row) in m.iter_mut().enumerate() {
        row[i] -= x;
    }
    let mut det = 1.0;
    for col in 0..4 {
        let piv = (col..4)
            .max_by(|&r, &s| m[r][col].abs().total_cmp(&m[s][col].abs()))
            .unwrap();
        if m[piv][col] == 0.0 {
            return 0.0;
        }
        if piv != col {
            m.swap(piv, col);
            det = -det;
        }
        det *= m[col][col];
        for r in col + 1..4 {
            let f = m[r][col] / m[col][col];
            for c in col..4 {
                m[r][c] -= f * m[col][c];
            }
        }
    }
    det
}

fn bisect_sign_changes(f: impl Fn(f64) -> f64, bound: f64) -> Vec<f64> {
    let n = 40_000;
    let mut roots = Vec::new();
    let mut x0 = -bound;
    let mut f0 = f(x0);
    for k in 1..=n {
        let x1 = -bound + 2.0 * bound * k as f64 / n as f64;
        let f1 = f(x1);
        if f0 == 0.0 {
            roots.push(x0);
        } else if f0 * f1 < 0.0 {
            let (mut lo, mut hi, mut flo) = (x0, x1, f0);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                let fm = f(mid);
                if fm * flo <= 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                    flo = fm;
                }
            }
            roots.push(0.5 * (lo + hi));
        }
        x0 = x1;
        f0 = f1;
    }
    roots
}

/// Roots of the characteristic polynomial, ascending with multiplicity.
///
/// Odd-multiplicity roots are bracketed by sign changes; double roots are
/// found as critical points where the polynomial vanishes.
pub fn char_poly_roots(a: &[[f64; 4]; 4]) -> Vec<f64> {
    let bound = a
        .iter()
        .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
        + 1.0;
    let p = |x: f64| char_poly(a, x);
    let h = 1e-6;
    let dp = |x: f64| (p(x + h) - p(x - h)) / (2.0 * h);
    let mut roots = Vec::new();
    for r in bisect_sign_changes(p, bound) {
        // a grid point landing exactly on a double root shows up once
        let times = if dp(r).abs() < 1e-6 { 2 } else { 1 };
        roots.extend(std::iter::repeat_n(r, times));
    }
    for c in bisect_sign_changes(dp, bound) {
        if p(c).abs() < 1e-9 && roots.iter().all(|r| (r - c).abs() > 1e-6) {
            roots.push(c);
            roots.push(c);
        }
    }
    roots.sort_by(f64::total_cmp);
    roots
}

/// Truncated Taylor series `sum_{k <= order} A^k / k!`.
pub fn taylor_exp(a: &Mat4, order: usize) -> Mat4 {
    let mut term = Mat4::identity();
    let mut sum = Mat4::identity();
    for k in 1..=order {
        term = term * a / C64::new(k as f64, 0.0);
        sum += term;
    }
    sum
}

/// `exp(A)` by scaling and squaring around a 20th-order Taylor series.
pub fn expm(a: &Mat4) -> Mat4 {
    let norm = a.iter().map(|z| z.norm()).sum::<f64>();
    let s = (norm.max(1.0).log2().ceil() as i32 + 4).max(0);
    let scaled = a / C64::new(2f64.powi(s), 0.0);
    let mut e = taylor_exp(&scaled, 20);
    for _ in 0..s {
        e = e * e;
    }
    e
}

/// Classical RK4 for `dU/dt = -i H(t) U` with a fixed step.
pub fn rk4_propagator(h: impl Fn(f64) -> Mat4, t_end: f64, dt: f64) -> Mat4 {
    let steps = (t_end / dt).round() as usize;
    let dt = t_end / steps as f64;
    let mi = C64::new(0.0, -1.0);
    let mut u = Mat4::identity();
    for k in 0..steps {
        let t = k as f64 * dt;
        let hm = h(t + 0.5 * dt);
        let k1 = h(t) * u * mi;
        let k2 = hm * (u + k1 * C64::new(0.5 * dt, 0.0)) * mi;
        let k3 = hm * (u + k2 * C64::new(0.5 * dt, 0.0)) * mi;
        let k4 = h(t + dt) * (u + k3 * C64::new(dt, 0.0)) * mi;
        u +=
            (k1 + k2 * C64::new(2.0, 0.0) + k3 * C64::new(2.0, 0.0) + k4) * C64::new(dt / 6.0, 0.0);
    }
    u
}

pub fn max_diff(a: &Mat4, b: &Mat4) -> f64 {
    (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Site-1 occupation operator in the fixed basis.
pub fn n1_diag() -> [f64; 4] {
    [2.0, 1.0, 1.0, 0.0]
}

/// `Tr[rho diag(d)]`.
pub fn diag_expectation(rho: &Mat4, d: [f64; 4]) -> f64 {
    (0..4).map(|i| rho[(i, i)].re * d[i]).sum()
}
