//! Coefficients of `c u_tt - Δu = a u + B·∇u + p(x) h(x, t)` with
//! `u(x, 0) = f`, `u_t(x, 0) = g`.
//!
//! Everything the inverse solver needs from h, f and g is closed form: the
//! auxiliary h̃ is differentiated analytically, never by finite differences.

/// Value, gradient and Laplacian of a scalar field at one point.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Jet {
    pub value: f64,
    pub grad: [f64; 2],
    pub laplacian: f64,
}

impl Jet {
    pub const ZERO: Jet = Jet { value: 0.0, grad: [0.0, 0.0], laplacian: 0.0 };
}

/// Time profile `h(x, t)` of the source.
pub trait Excitation: Send + Sync {
    fn h(&self, x: f64, y: f64, t: f64) -> f64;
    fn h_t(&self, x: f64, y: f64, t: f64) -> f64;
    fn h_tt(&self, x: f64, y: f64, t: f64) -> f64;
    /// Spatial jet of `h(·, 0)`.
    fn initial_jet(&self, x: f64, y: f64) -> Jet;
    /// Spatial jet of `h_t(·, 0)`.
    fn initial_rate_jet(&self, x: f64, y: f64) -> Jet;
    fn describe(&self) -> String;
}

/// `h(x, t) = 1 + exp(-(4 + |x|^2) t)`.
#[derive(Clone, Copy, Debug, Default)]
pub struct DecayingExcitation;

impl Excitation for DecayingExcitation {
    fn h(&self, x: f64, y: f64, t: f64) -> f64 {
        1.0 + (-(4.0 + x * x + y * y) * t).exp()
    }

    fn h_t(&self, x: f64, y: f64, t: f64) -> f64 {
        let k = 4.0 + x * x + y * y;
        -k * (-k * t).exp()
    }

    fn h_tt(&self, x: f64, y: f64, t: f64) -> f64 {
        let k = 4.0 + x * x + y * y;
        k * k * (-k * t).exp()
    }

    fn initial_jet(&self, _x: f64, _y: f64) -> Jet {
        Jet { value: 2.0, grad: [0.0, 0.0], laplacian: 0.0 }
    }

    fn initial_rate_jet(&self, x: f64, y: f64) -> Jet {
        Jet { value: -(4.0 + x * x + y * y), grad: [-2.0 * x, -2.0 * y], laplacian: -4.0 }
    }

    fn describe(&self) -> String {
        "h(x,t) = 1 + exp(-(4 + |x|^2) t)".into()
    }
}

/// Known medium coefficients and initial state. Defaults give the
/// homogeneous problem `c = 1`, `a = 0`, `B = 0`, `f = g = 0`.
pub trait Medium: Send + Sync {
    fn c(&self, _x: f64, _y: f64) -> f64 {
        1.0
    }
    fn a(&self, _x: f64, _y: f64) -> f64 {
        0.0
    }
    fn b(&self, _x: f64, _y: f64) -> [f64; 2] {
        [0.0, 0.0]
    }
    /// Jet of the initial displacement `f`.
    fn f(&self, _x: f64, _y: f64) -> Jet {
        Jet::ZERO
    }
    /// Jet of the initial velocity `g`.
    fn g(&self, _x: f64, _y: f64) -> Jet {
        Jet::ZERO
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct HomogeneousMedium;

impl Medium for HomogeneousMedium {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decaying_excitation_derivatives() {
        let h = DecayingExcitation;
        let (x, y, t) = (0.3, -0.2, 0.4);
        let d = 1e-5;
        let fd_t = (h.h(x, y, t + d) - h.h(x, y, t - d)) / (2.0 * d);
        let fd_tt = (h.h_t(x, y, t + d) - h.h_t(x, y, t - d)) / (2.0 * d);
        assert!((fd_t - h.h_t(x, y, t)).abs() < 1e-8);
        assert!((fd_tt - h.h_tt(x, y, t)).abs() < 1e-6);
        assert_eq!(h.h(x, y, 0.0), 2.0);
        let r = h.initial_rate_jet(x, y);
        assert!((r.value - h.h_t(x, y, 0.0)).abs() < 1e-15);
        let fd_gx = (h.h_t(x + d, y, 0.0) - h.h_t(x - d, y, 0.0)) / (2.0 * d);
        assert!((fd_gx - r.grad[0]).abs() < 1e-8);
    }
}
