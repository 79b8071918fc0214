//! Studentized range distribution by nested Gauss–Legendre quadrature.

use std::sync::OnceLock;

use super::special::{ln_gamma, normal_cdf, normal_pdf};
use super::StatsError;

const GL_ORDER: usize = 16;
const TOLERANCE: f64 = 1e-9;
const MAX_PANELS: usize = 1 << 12;
/// Normal location range for the inner integral; φ is below 1e-19 outside.
const Z_LIMIT: f64 = 9.0;

/// Gauss–Legendre nodes and weights on [-1, 1], found by Newton iteration on
/// the Legendre polynomial.
fn gauss_legendre() -> &'static [(f64, f64)] {
    static RULE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    RULE.get_or_init(|| {
        let n = GL_ORDER;
        let mut rule = Vec::with_capacity(n);
        for i in 0..n {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            rule.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
        }
        rule
    })
}

fn panels<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64, n: usize) -> f64 {
    let h = (hi - lo) / n as f64;
    let mut sum = 0.0;
    for p in 0..n {
        let mid = lo + (p as f64 + 0.5) * h;
        for &(x, w) in gauss_legendre() {
            sum += w * f(mid + 0.5 * h * x);
        }
    }
    sum * 0.5 * h
}

/// Composite rule with panel doubling until successive estimates agree.
fn integrate<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, what: &str) -> Result<f64, StatsError> {
    let mut n = 4;
    let mut prev = panels(&f, lo, hi, n);
    while n < MAX_PANELS {
        n *= 2;
        let next = panels(&f, lo, hi, n);
        if (next - prev).abs() <= TOLERANCE {
            return Ok(next);
        }
        prev = next;
    }
    let last = panels(&f, lo, hi, 2 * n);
    Err(StatsError::NoConvergence(format!(
        "{what}: achieved tolerance {:.3e} with {n} panels",
        (last - prev).abs()
    )))
}

/// `P(range of k standard normals ≤ w)`.
fn range_cdf(w: f64, k: usize) -> Result<f64, StatsError> {
    if w <= 0.0 {
        return Ok(0.0);
    }
    if w >= 2.0 * Z_LIMIT + 10.0 {
        return Ok(1.0);
    }
    let kf = k as f64;
    let v = integrate(
        |z| {
            let inner = normal_cdf(z) - normal_cdf(z - w);
            kf * normal_pdf(z) * inner.max(0.0).powi(k as i32 - 1)
        },
        -Z_LIMIT,
        Z_LIMIT,
        "normal-range integral",
    )?;
    Ok(v.clamp(0.0, 1.0))
}

/// CDF of the studentized range `Q(k, df)`; `df = ∞` gives the range of
/// `k` standard normals.
pub fn studentized_range_cdf(q: f64, k: usize, df: f64) -> Result<f64, StatsError> {
    if k < 2 {
        return Err(StatsError::Domain(format!("k = {k} must be at least 2")));
    }
    if !(df >= 1.0) {
        return Err(StatsError::Domain(format!("df = {df} must be at least 1")));
    }
    if !(q >= 0.0) {
        return Err(StatsError::Domain(format!("q = {q} must be non-negative")));
    }
    if q == 0.0 {
        return Ok(0.0);
    }
    if q.is_infinite() {
        return Ok(1.0);
    }
    if df.is_infinite() {
        return range_cdf(q, k);
    }
    // s = sqrt(χ²_df / df) has density
    // df^{df/2} s^{df-1} exp(-df s²/2) / (Γ(df/2) 2^{df/2-1})
    let half = df / 2.0;
    let ln_norm = half * df.ln() - ln_gamma(half) - (half - 1.0) * 2f64.ln();
    let spread = 12.0 / (2.0 * df).sqrt();
    let lo = (1.0 - spread).max(0.0);
    let hi = 1.0 + spread + if df < 4.0 { 6.0 } else { 0.0 };
    let failure = std::cell::RefCell::new(None);
    let v = integrate(
        |s| {
            if s <= 0.0 {
                return 0.0;
            }
            let ln_f = ln_norm + (df - 1.0) * s.ln() - 0.5 * df * s * s;
            let dens = ln_f.exp();
            if dens < 1e-300 {
                return 0.0;
            }
            match range_cdf(q * s, k) {
                Ok(w) => dens * w,
                Err(e) => {
                    failure.borrow_mut().get_or_insert(e);
                    0.0
                }
            }
        },
        lo,
        hi,
        "studentized-range scale integral",
    );
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    Ok(v?.clamp(0.0, 1.0))
}

/// Upper tail `P(Q ≥ q)`.
pub fn studentized_range_sf(q: f64, k: usize, df: f64) -> Result<f64, StatsError> {
    Ok((1.0 - studentized_range_cdf(q, k, df)?).clamp(0.0, 1.0))
}
