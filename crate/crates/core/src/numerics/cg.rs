use super::{DVector, Real};
use crate::error::{Error, Result};

/// Curvature threshold: `pᵀHp <= BREAKDOWN_RATIO * |p|²` is treated as breakdown.
pub const BREAKDOWN_RATIO: f64 = 1e-14;

/// Plain conjugate gradient on `H v = b`, started at `v0`, for `n_steps` steps.
///
/// `H` is only touched through `hvp`. The iteration stops early once the
/// residual is at rounding level, since further steps cannot change the iterate.
pub fn conjugate_gradient<T: Real>(
    hvp: impl Fn(&DVector<T>) -> DVector<T>,
    b: &DVector<T>,
    n_steps: usize,
    v0: &DVector<T>,
) -> Result<DVector<T>> {
    if v0.len() != b.len() {
        return Err(Error::dims("conjugate_gradient", b.len(), v0.len()));
    }
    let mut v = v0.clone();
    let hv = hvp(&v);
    if hv.len() != b.len() {
        return Err(Error::dims("conjugate_gradient operator", b.len(), hv.len()));
    }
    let mut r = b - &hv;
    let mut p = r.clone();
    let mut rr = r.norm_squared();
    let floor = {
        let e = T::epsilon() * b.norm();
        e * e
    };
    for step in 0..n_steps {
        if rr <= floor {
            break;
        }
        let hp = hvp(&p);
        let curvature = p.dot(&hp);
        if curvature <= T::lit(BREAKDOWN_RATIO) * p.norm_squared() {
            return Err(Error::Breakdown { step, curvature: curvature.to_f64().unwrap_or(f64::NAN) });
        }
        let alpha = rr / curvature;
        v.axpy(alpha, &p);
        r.axpy(-alpha, &hp);
        let rr_next = r.norm_squared();
        let beta = rr_next / rr;
        p.scale(beta);
        p += &r;
        rr = rr_next;
    }
    Ok(v)
}
