use crate::problem::ProblemData;

/// Projects `x` onto `{x >= 0, ||x_l|| <= sqrt(P_max) for every AP}` in place.
///
/// Per AP: clamp negatives, then scale radially if the norm exceeds the cap.
/// The squared norm of the result never exceeds `P_max` in floating point, which
/// makes the projection bitwise idempotent.
pub fn project_in_place(x: &mut [f64], num_aps: usize, p_max: f64) {
    let cap = p_max.sqrt();
    for v in x.iter_mut() {
        if *v < 0.0 || v.is_nan() {
            *v = 0.0;
        }
    }
    for l in 0..num_aps {
        let norm2 = ap_norm2(x, num_aps, l);
        if norm2 <= p_max {
            continue;
        }
        let mut scale = cap / norm2.sqrt();
        while ap_norm2_scaled(x, num_aps, l, scale) > p_max {
            scale *= 1.0 - f64::EPSILON;
        }
        for v in x.iter_mut().skip(l).step_by(num_aps) {
            *v *= scale;
        }
    }
}

fn ap_norm2_scaled(x: &[f64], num_aps: usize, l: usize, scale: f64) -> f64 {
    x.iter().skip(l).step_by(num_aps).map(|v| (v * scale) * (v * scale)).sum()
}

fn ap_norm2(x: &[f64], num_aps: usize, l: usize) -> f64 {
    x.iter().skip(l).step_by(num_aps).map(|v| v * v).sum()
}

/// Projection onto the feasible set of the penalized subproblem.
pub fn project(x: &[f64], data: &ProblemData) -> Vec<f64> {
    let mut out = x.to_vec();
    project_in_place(&mut out, data.num_aps(), data.power.p_max);
    out
}
