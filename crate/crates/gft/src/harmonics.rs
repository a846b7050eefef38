//! Spherical special functions: normalized associated Legendre values,
//! spherical harmonics, spherical Bessel functions, Gauss–Legendre
//! quadrature, and the projection of a plane wave onto spherical waves.

use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};

use num_complex::Complex64;

use crate::error::{GftError, Result};

/// Degree/order pair (ℓ, m) with |m| ≤ ℓ.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SphericalHarmonicIndex {
    pub ell: u32,
    pub m: i32,
}

impl SphericalHarmonicIndex {
    pub fn new(ell: u32, m: i32) -> Result<Self> {
        if m.unsigned_abs() > ell {
            return Err(GftError::IndexInvalid { ell, m });
        }
        Ok(SphericalHarmonicIndex { ell, m })
    }
}

/// Gauss–Legendre nodes and weights on [−1, 1]: Newton iteration on P_n from
/// the standard cosine initial guesses. Exact for polynomials of degree
/// 2n − 1.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_and_derivative(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_and_derivative(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        // the guesses walk down from the largest root; fill symmetrically
        nodes[n - 1 - i] = x;
        nodes[i] = -x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// (P_n(x), P_n'(x)) by the three-term recurrence.
pub(crate) fn legendre_and_derivative(n: usize, x: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    let mut pm1 = 1.0f64;
    let mut p = x;
    for k in 2..=n {
        let kf = k as f64;
        let next = ((2.0 * kf - 1.0) * x * p - (kf - 1.0) * pm1) / kf;
        pm1 = p;
        p = next;
    }
    let dp = (n as f64) * (x * p - pm1) / (x * x - 1.0);
    (p, dp)
}

/// Fully normalized associated Legendre values P̄_{ℓm}(x) for all ℓ ≤ lmax,
/// 0 ≤ m ≤ ℓ, flattened as ℓ(ℓ+1)/2 + m. Normalization absorbs the
/// √((2ℓ+1)/4π · (ℓ−m)!/(ℓ+m)!) factor into the recurrence (no factorials
/// ever form, so ℓ = 100 stays finite) and the Condon–Shortley sign lives in
/// the sectoral step, so Y_{ℓm} = P̄_{ℓm}(cos θ) e^{imφ} for m ≥ 0.
pub(crate) fn normalized_assoc_legendre_table(lmax: usize, x: f64) -> Vec<f64> {
    let s = (1.0 - x * x).max(0.0).sqrt();
    let idx = |l: usize, m: usize| l * (l + 1) / 2 + m;
    let mut t = vec![0.0; (lmax + 1) * (lmax + 2) / 2];
    t[0] = 0.5 / PI.sqrt();
    for m in 1..=lmax {
        t[idx(m, m)] = -((2 * m + 1) as f64 / (2 * m) as f64).sqrt() * s * t[idx(m - 1, m - 1)];
    }
    for m in 0..lmax {
        t[idx(m + 1, m)] = ((2 * m + 3) as f64).sqrt() * x * t[idx(m, m)];
    }
    for m in 0..=lmax {
        for l in (m + 2)..=lmax {
            let (lf, mf) = (l as f64, m as f64);
            let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
            let b =
                (((lf - 1.0) * (lf - 1.0) - mf * mf) / (4.0 * (lf - 1.0) * (lf - 1.0) - 1.0)).sqrt();
            t[idx(l, m)] = a * (x * t[idx(l - 1, m)] - b * t[idx(l - 2, m)]);
        }
    }
    t
}

/// Y_{ℓm}(θ, φ). Negative orders follow Y_{ℓ,−m} = (−1)^m conj(Y_{ℓm}).
pub fn sph_harm(idx: SphericalHarmonicIndex, theta: f64, phi: f64) -> Complex64 {
    let ell = idx.ell as usize;
    let ma = idx.m.unsigned_abs() as usize;
    let table = normalized_assoc_legendre_table(ell, theta.cos());
    let p = table[ell * (ell + 1) / 2 + ma];
    let phase = Complex64::from_polar(1.0, idx.m as f64 * phi);
    let sign = if idx.m < 0 && ma % 2 == 1 { -1.0 } else { 1.0 };
    sign * p * phase
}

/// Spherical Bessel function j_ℓ(x) of the first kind, x ≥ 0: Miller's
/// downward recurrence seeded above the turning point and normalized by
/// j₀ = sin x / x, with mid-recurrence rescaling so deep evanescent values
/// (large ℓ, small x) never overflow the descent.
pub fn sph_bessel_j(ell: usize, x: f64) -> f64 {
    debug_assert!(x >= 0.0);
    if x == 0.0 {
        return if ell == 0 { 1.0 } else { 0.0 };
    }
    if ell == 0 {
        return x.sin() / x;
    }
    let start = ell + 30 + (1.5 * x) as usize;
    let mut above = 0.0f64; // j_{n+1}, unnormalized
    let mut here = 1e-30f64; // j_n
    let mut captured = 0.0f64;
    for n in (1..=start).rev() {
        let below = (2 * n + 1) as f64 / x * here - above;
        above = here;
        here = below;
        if n - 1 == ell {
            captured = here;
        }
        if here.abs() > 1e250 {
            here *= 1e-250;
            above *= 1e-250;
            captured *= 1e-250;
        }
    }
    captured * (x.sin() / x) / here
}

/// Coefficients c_{ℓm} = ∫_{S²} conj(Y_{ℓm}) e^{i k·x} dΩ of the plane wave
/// restricted to the sphere of radius r, through degree `ell_max`, keyed by
/// (ℓ, m). Quadrature is Gauss–Legendre in cos θ crossed with the uniform
/// (spectrally exact) φ rule. The measure is plain solid angle, so the total
/// power Σ |c_{ℓm}|² of the unit-modulus wave approaches 4π as ell_max grows.
pub fn rayleigh_coefficients(
    k_vec: [f64; 3],
    r: f64,
    ell_max: usize,
) -> BTreeMap<(u32, i32), Complex64> {
    assert!(ell_max <= 50, "ell_max capped at 50");
    let k_norm = (k_vec[0] * k_vec[0] + k_vec[1] * k_vec[1] + k_vec[2] * k_vec[2]).sqrt();
    assert!(k_norm > 0.0 && r > 0.0, "need a propagating wave and a real sphere");

    // polynomial degree ℓmax plus enough headroom for the e^{ikr cosθ}
    // oscillation to integrate below roundoff
    let n_theta = ell_max + (1.5 * k_norm * r) as usize + 32;
    let n_phi = (4 * (ell_max + 1)).max(16);
    let (nodes, weights) = gauss_legendre(n_theta);

    let idx = |l: usize, m: usize| l * (l + 1) / 2 + m;
    let mut acc = vec![Complex64::new(0.0, 0.0); (ell_max + 1) * (ell_max + 1)];
    // c_{ℓm} lives at ℓ² + (m + ℓ)
    let slot = |l: usize, m: i32| l * l + (m + l as i32) as usize;

    let mut phases = vec![Complex64::new(0.0, 0.0); ell_max + 1];
    for (&u, &w) in nodes.iter().zip(&weights) {
        let s = (1.0 - u * u).max(0.0).sqrt();
        let table = normalized_assoc_legendre_table(ell_max, u);
        for jp in 0..n_phi {
            let phi = TAU * jp as f64 / n_phi as f64;
            let pos = [r * s * phi.cos(), r * s * phi.sin(), r * u];
            let wave = Complex64::from_polar(
                1.0,
                k_vec[0] * pos[0] + k_vec[1] * pos[1] + k_vec[2] * pos[2],
            );
            let weighted = wave * (w * TAU / n_phi as f64);
            for (m, ph) in phases.iter_mut().enumerate() {
                *ph = Complex64::from_polar(1.0, m as f64 * phi);
            }
            for l in 0..=ell_max {
                for m in 0..=l {
                    let p = table[idx(l, m)];
                    // conj(Y_{ℓm}) = P̄ e^{−imφ}; conj(Y_{ℓ,−m}) = (−1)^m P̄ e^{imφ}
                    acc[slot(l, m as i32)] += p * phases[m].conj() * weighted;
                    if m > 0 {
                        let sign = if m % 2 == 1 { -1.0 } else { 1.0 };
                        acc[slot(l, -(m as i32))] += sign * p * phases[m] * weighted;
                    }
                }
            }
        }
    }

    let mut out = BTreeMap::new();
    for l in 0..=ell_max {
        for m in -(l as i32)..=(l as i32) {
            out.insert((l as u32, m), acc[slot(l, m)]);
        }
    }
    out
}
