//! Linear flows on the flat 2-torus: the constant field (cos ε, sin ε)
//! integrates in closed form, so the work here is orbit-closure detection
//! through continued-fraction convergents, the Poincaré return map on the
//! section θ = θ₀, and the matching rotation of integer wave labels.

use std::f64::consts::TAU;

/// Sample intervals along one traced orbit.
const FLOW_SAMPLES: usize = 2048;

/// Convergents accept a slope as rational only this close.
const CLOSURE_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct FlowTrace {
    pub slope_tan_eps: f64,
    /// (t, θ, φ) along the orbit, angles wrapped into [0, 2π). Covers one
    /// period when closed, `max_wraps` θ-wraps otherwise.
    pub points: Vec<(f64, f64, f64)>,
    pub closed: bool,
    /// tan ε = p/q in lowest terms when the orbit closes: p azimuthal wraps
    /// per q polar wraps.
    pub winding: Option<(i64, i64)>,
    /// Gaps between φ-returns on the section θ = θ₀ (sorted by φ; the last
    /// entry closes the circle). They sum to 2π.
    pub section_gaps: Vec<f64>,
}

/// First continued-fraction convergent p/q of `x` with q ≤ `max_q` and
/// |x − p/q| ≤ `tol`. Convergents arrive in lowest terms; negative slopes
/// keep the sign in p.
fn rational_approx(x: f64, max_q: usize, tol: f64) -> Option<(i64, i64)> {
    let (mut p0, mut q0) = (1i64, 0i64);
    let (mut p1, mut q1) = (x.floor() as i64, 1i64);
    let mut frac = x - x.floor();
    loop {
        if q1 < 0 || q1 as usize > max_q {
            return None;
        }
        if (x - p1 as f64 / q1 as f64).abs() <= tol {
            return Some((p1, q1));
        }
        // the expansion terminated without meeting tol: x is not rational
        // at this precision
        if frac < 1e-15 {
            return None;
        }
        let inv = 1.0 / frac;
        let a = inv.floor();
        frac = inv - a;
        let (p2, q2) = (a as i64 * p1 + p0, a as i64 * q1 + q0);
        p0 = p1;
        q0 = q1;
        p1 = p2;
        q1 = q2;
    }
}

fn wrap(a: f64) -> f64 {
    a.rem_euclid(TAU)
}

/// Trace the orbit of slope tan ε from `start`, following at most
/// `max_wraps` polar wraps. A slope within 1e-12 of a rational p/q with
/// q ≤ `max_wraps` is snapped to it, so closed orbits return to `start`
/// exactly (to roundoff) after the period 2π√(p² + q²).
pub fn integrate_flow(slope_tan_eps: f64, start: (f64, f64), max_wraps: usize) -> FlowTrace {
    let max_wraps = max_wraps.max(1);
    let rational = rational_approx(slope_tan_eps, max_wraps, CLOSURE_TOL);
    let (cos_e, sin_e, wraps) = match rational {
        Some((p, q)) => {
            let hyp = ((p * p + q * q) as f64).sqrt();
            (q as f64 / hyp, p as f64 / hyp, q as usize)
        }
        None => {
            let hyp = (1.0 + slope_tan_eps * slope_tan_eps).sqrt();
            (1.0 / hyp, slope_tan_eps / hyp, max_wraps)
        }
    };
    let period = TAU * wraps as f64 / cos_e;

    let mut points = Vec::with_capacity(FLOW_SAMPLES + 1);
    for k in 0..=FLOW_SAMPLES {
        let t = period * k as f64 / FLOW_SAMPLES as f64;
        points.push((t, wrap(start.0 + t * cos_e), wrap(start.1 + t * sin_e)));
    }

    // the k-th return to the section θ = θ₀ advances φ by 2πk tan ε; a
    // closed orbit has exactly q distinct returns
    let mut phis: Vec<f64> = (0..wraps)
        .map(|k| wrap(start.1 + TAU * k as f64 * sin_e / cos_e))
        .collect();
    phis.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut section_gaps: Vec<f64> = phis.windows(2).map(|w| w[1] - w[0]).collect();
    section_gaps.push(phis[0] + TAU - phis[wraps - 1]);

    FlowTrace {
        slope_tan_eps,
        points,
        closed: rational.is_some(),
        winding: rational,
        section_gaps,
    }
}

/// Integer wave label carried into the frame rotated by ε.
#[derive(Debug, Clone, Copy)]
pub struct RotatedLabel {
    pub m: f64,
    pub n: f64,
    pub lambda: f64,
}

/// Rotate (m, n) labels by ε: m' = m cos ε + n sin ε, n' = −m sin ε + n cos ε.
/// Eigenvalues ride along unchanged — the rotation is an isometry, so the
/// label-norm m² + n² is preserved even though individual labels leave the
/// integer lattice.
pub fn rotated_masa_labels(eps: f64, labels: &[(i64, i64, f64)]) -> Vec<RotatedLabel> {
    let (s, c) = eps.sin_cos();
    labels
        .iter()
        .map(|&(m, n, lambda)| {
            let (mf, nf) = (m as f64, n as f64);
            RotatedLabel {
                m: mf * c + nf * s,
                n: -mf * s + nf * c,
                lambda,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Section gaps by explicit marching: step along the orbit, detect polar
    /// wraps from the unwrapped θ, interpolate the crossing time, and read φ
    /// there. Shares no code with the return-map formula above.
    fn marched_section_gaps(slope: f64, start: (f64, f64), n_cross: usize) -> Vec<f64> {
        let hyp = (1.0 + slope * slope).sqrt();
        let (c, s) = (1.0 / hyp, slope / hyp);
        // odd step count so crossings fall between nodes
        let dt = TAU / c / 997.0;
        let mut phis = vec![start.1.rem_euclid(TAU)];
        let (mut t_prev, mut th_prev) = (0.0f64, 0.0f64);
        while phis.len() < n_cross {
            let t = t_prev + dt;
            let th = t * c;
            let k = (th / TAU).floor();
            if k > (th_prev / TAU).floor() {
                let t_star = t_prev + dt * (k * TAU - th_prev) / (th - th_prev);
                phis.push((start.1 + t_star * s).rem_euclid(TAU));
            }
            t_prev = t;
            th_prev = th;
        }
        phis.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut gaps: Vec<f64> = phis.windows(2).map(|w| w[1] - w[0]).collect();
        gaps.push(phis[0] + TAU - phis[n_cross - 1]);
        gaps.sort_by(|a, b| a.partial_cmp(b).unwrap());
        gaps
    }

    #[test]
    fn section_gaps_match_a_direct_marching_oracle() {
        let start = (1.0, 2.5);
        for (slope, wraps) in [
            (std::f64::consts::FRAC_1_SQRT_2, 40usize),
            (1.0 / std::f64::consts::PI, 33),
            (1.618033988749895, 25),
            (0.75, 8), // closes at q = 4: both sides see 4 distinct returns
        ] {
            let trace = integrate_flow(slope, start, wraps);
            let n = trace.section_gaps.len();
            let oracle = marched_section_gaps(slope, start, n);
            let mut got = trace.section_gaps.clone();
            got.sort_by(|a, b| a.partial_cmp(b).unwrap());
            assert_eq!(got.len(), oracle.len());
            for (g, o) in got.iter().zip(&oracle) {
                assert_relative_eq!(g, o, epsilon = 1e-9);
            }
        }
    }

    fn mod_distance(a: f64, b: f64) -> f64 {
        let d = (a - b).rem_euclid(TAU);
        d.min(TAU - d)
    }

    #[test]
    fn rational_slopes_close_with_the_expected_winding() {
        let start = (0.3, 4.0);
        for (slope, p, q) in [
            (0.75, 3i64, 4i64),
            (0.0, 0, 1),
            (-0.75, -3, 4),
            (5.0 / 3.0, 5, 3),
            (0.1 + 0.2, 3, 10), // arrives with float slop, still snaps
        ] {
            let trace = integrate_flow(slope, start, 100);
            assert!(trace.closed, "slope {slope}");
            assert_eq!(trace.winding, Some((p, q)));
            let period = TAU * ((p * p + q * q) as f64).sqrt();
            let last = *trace.points.last().unwrap();
            assert_relative_eq!(last.0, period, epsilon = 1e-9);
            assert!(mod_distance(last.1, start.0) <= 1e-9, "θ gap {:.3e}", mod_distance(last.1, start.0));
            assert!(mod_distance(last.2, start.1) <= 1e-9, "φ gap {:.3e}", mod_distance(last.2, start.1));
            // q equally spaced returns
            assert_eq!(trace.section_gaps.len(), q as usize);
            for g in &trace.section_gaps {
                assert_relative_eq!(*g, TAU / q as f64, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn every_reduced_rational_with_small_denominator_closes() {
        fn gcd(a: i64, b: i64) -> i64 {
            if b == 0 { a } else { gcd(b, a % b) }
        }
        for q in 1i64..=50 {
            for p in 0..=q {
                if gcd(p, q) != 1 {
                    continue;
                }
                let trace = integrate_flow(p as f64 / q as f64, (0.0, 0.0), 50);
                assert!(trace.closed, "{p}/{q}");
                assert_eq!(trace.winding, Some((p, q)), "{p}/{q}");
            }
        }
    }

    #[test]
    fn quadratic_irrationals_do_not_close() {
        let s2 = 2.0f64.sqrt();
        let s3 = 3.0f64.sqrt();
        let s5 = 5.0f64.sqrt();
        let slopes = [
            s2 - 1.0,
            s3 - 1.0,
            (s5 - 1.0) / 2.0,
            7.0f64.sqrt() - 2.0,
            1.0 / s2,
            s2,
            s3,
            (1.0 + s5) / 2.0,
            2.0 - s2,
            11.0f64.sqrt() - 3.0,
        ];
        for slope in slopes {
            let trace = integrate_flow(slope, (0.0, 0.0), 4000);
            assert!(!trace.closed, "slope {slope}");
            assert_eq!(trace.winding, None);
        }
    }

    #[test]
    fn irrational_orbits_fill_the_section_densely() {
        let trace = integrate_flow(std::f64::consts::FRAC_1_SQRT_2, (0.0, 0.0), 4000);
        let max_gap = trace.section_gaps.iter().cloned().fold(0.0, f64::max);
        assert!(max_gap < 0.01, "max gap {max_gap:.3e}");
        let total: f64 = trace.section_gaps.iter().sum();
        assert_relative_eq!(total, TAU, epsilon = 1e-9);
    }

    #[test]
    fn return_gaps_take_at_most_three_values() {
        // Steinhaus: a rotation by any angle splits the circle into gaps of
        // at most three distinct lengths
        for slope in [std::f64::consts::FRAC_1_SQRT_2, 1.618033988749895, 0.123456789] {
            let trace = integrate_flow(slope, (0.0, 0.0), 2000);
            let mut gaps = trace.section_gaps.clone();
            gaps.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let mut distinct = 1;
            for w in gaps.windows(2) {
                if w[1] - w[0] > 1e-9 {
                    distinct += 1;
                }
            }
            assert!(distinct <= 3, "slope {slope}: {distinct} gap lengths");
        }
    }

    #[test]
    fn rotation_by_zero_is_the_identity() {
        let labels = vec![(2i64, -1i64, 5.0), (0, 3, 9.0)];
        for (r, l) in rotated_masa_labels(0.0, &labels).iter().zip(&labels) {
            assert_eq!(r.m, l.0 as f64);
            assert_eq!(r.n, l.1 as f64);
            assert_eq!(r.lambda, l.2);
        }
    }

    #[test]
    fn rotated_label_has_the_expected_components() {
        // tan ε = 3/4 carries (1, 0) to (cos ε, −sin ε) = (0.8, −0.6)
        let out = rotated_masa_labels(0.75f64.atan(), &[(1, 0, 1.0)]);
        assert_relative_eq!(out[0].m, 0.8, epsilon = 1e-12);
        assert_relative_eq!(out[0].n, -0.6, epsilon = 1e-12);
    }

    #[test]
    fn rotation_preserves_the_label_norm_multiset() {
        let mut labels = Vec::new();
        for m in -3i64..=3 {
            for n in -3i64..=3 {
                labels.push((m, n, (m * m + n * n) as f64));
            }
        }
        let rotated = rotated_masa_labels(0.75f64.atan(), &labels);
        let mut before: Vec<i64> = labels.iter().map(|l| l.0 * l.0 + l.1 * l.1).collect();
        let mut after: Vec<i64> = rotated
            .iter()
            .map(|r| {
                let norm = r.m * r.m + r.n * r.n;
                assert!((norm - r.lambda).abs() <= 1e-12 * (1.0 + r.lambda));
                norm.round() as i64
            })
            .collect();
        before.sort_unstable();
        after.sort_unstable();
        assert_eq!(before, after);
    }
}
