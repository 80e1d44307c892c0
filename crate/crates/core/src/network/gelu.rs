//! Exact GELU, `a * Phi(a)`, and its first three derivatives.

use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GeluDerivs<S> {
    pub value: S,
    pub d1: S,
    pub d2: S,
    pub d3: S,
}

#[inline]
pub fn gelu<S: Scalar>(a: S) -> S {
    let half = S::c(0.5);
    a * half * (S::one() + (a * S::FRAC_1_SQRT_2()).erf())
}

#[inline]
pub fn gelu_derivs<S: Scalar>(a: S) -> GeluDerivs<S> {
    let half = S::c(0.5);
    let cdf = half * (S::one() + (a * S::FRAC_1_SQRT_2()).erf());
    // 1/sqrt(2 pi)
    let pdf = (-(a * a) * half).exp() * S::c(0.398_942_280_401_432_7);
    let a2 = a * a;
    GeluDerivs {
        value: a * cdf,
        d1: cdf + a * pdf,
        d2: pdf * (S::c(2.0) - a2),
        d3: a * pdf * (a2 - S::c(4.0)),
    }
}
