//! Smooth reference flows: the Taylor-Green vortex with its manufactured
//! forcing, and the helical initial field with nonzero helicity.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};

/// An analytically known velocity/pressure pair on the unit torus.
pub trait SmoothFlow: Send + Sync {
    fn velocity(&self, x: &Vector3<f64>, t: f64) -> Vector3<f64>;
    /// Entry `(p, q)` is `d u_p / d x_q`.
    fn velocity_gradient(&self, x: &Vector3<f64>, t: f64) -> Matrix3<f64>;
    fn velocity_dt(&self, x: &Vector3<f64>, t: f64) -> Vector3<f64>;
    fn velocity_laplacian(&self, x: &Vector3<f64>, t: f64) -> Vector3<f64>;
    fn pressure(&self, x: &Vector3<f64>, t: f64) -> f64;
    fn pressure_gradient(&self, x: &Vector3<f64>, t: f64) -> Vector3<f64>;
    /// `int_Omega p(., t)`.
    fn pressure_mean(&self, t: f64) -> f64;

    fn vorticity(&self, x: &Vector3<f64>, t: f64) -> Vector3<f64> {
        curl_from_gradient(&self.velocity_gradient(x, t))
    }
}

pub fn curl_from_gradient(g: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(g[(2, 1)] - g[(1, 2)], g[(0, 2)] - g[(2, 0)], g[(1, 0)] - g[(0, 1)])
}

/// `f = du/dt - nu lap u + (curl u) x u + grad p` for the rotational form of
/// the momentum equation.
pub fn manufactured_forcing<'a, F: SmoothFlow + ?Sized>(
    flow: &'a F,
    nu: f64,
) -> impl Fn(&Vector3<f64>, f64) -> Vector3<f64> + 'a {
    move |x, t| {
        let u = flow.velocity(x, t);
        flow.velocity_dt(x, t) - flow.velocity_laplacian(x, t) * nu + flow.vorticity(x, t).cross(&u) + flow.pressure_gradient(x, t)
    }
}

/// `u = e^{-2 nu t} (sin 2pi x cos 2pi y, -cos 2pi x sin 2pi y, 0)` with
/// `p = e^{-4 nu t} (cos 4pi x + cos 4pi y) / 4 + |u|^2 / 2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TaylorGreen {
    pub nu: f64,
}

impl TaylorGreen {
    pub fn new(nu: f64) -> Self {
        Self { nu }
    }

    fn decay(&self, t: f64) -> f64 {
        (-2.0 * self.nu * t).exp()
    }
}

impl SmoothFlow for TaylorGreen {
    fn velocity(&self, x: &Vector3<f64>, t: f64) -> Vector3<f64> {
        let (sx, cx) = (2.0 * PI * x.x).sin_cos();
        let (sy, cy) = (2.0 * PI * x.y).sin_cos();
        Vector3::new(sx * cy, -cx * sy, 0.0) * self.decay(t)
    }

    fn velocity_gradient(&self, x: &Vector3<f64>, t: f64) -> Matrix3<f64> {
        let (sx, cx) = (2.0 * PI * x.x).sin_cos();
        let (sy, cy) = (2.0 * PI * x.y).sin_cos();
        let e = 2.0 * PI * self.decay(t);
        Matrix3::new(
            e * cx * cy, -e * sx * sy, 0.0, //
            e * sx * sy, -e * cx * cy, 0.0, //
            0.0, 0.0, 0.0,
        )
    }

    fn velocity_dt(&self, x: &Vector3<f64>, t: f64) -> Vector3<f64> {
        self.velocity(x, t) * (-2.0 * self.nu)
    }

    fn velocity_laplacian(&self, x: &Vector3<f64>, t: f64) -> Vector3<f64> {
        self.velocity(x, t) * (-8.0 * PI * PI)
    }

    fn pressure(&self, x: &Vector3<f64>, t: f64) -> f64 {
        let base = 0.25 * (-4.0 * self.nu * t).exp() * ((4.0 * PI * x.x).cos() + (4.0 * PI * x.y).cos());
        base + 0.5 * self.velocity(x, t).norm_squared()
    }

    fn pressure_gradient(&self, x: &Vector3<f64>, t: f64) -> Vector3<f64> {
        let e4 = (-4.0 * self.nu * t).exp();
        let base = Vector3::new(-PI * e4 * (4.0 * PI * x.x).sin(), -PI * e4 * (4.0 * PI * x.y).sin(), 0.0);
        // grad |u|^2 / 2 = (grad u)^T u
        base + self.velocity_gradient(x, t).transpose() * self.velocity(x, t)
    }

    fn pressure_mean(&self, t: f64) -> f64 {
        0.25 * (-4.0 * self.nu * t).exp()
    }
}

/// `g = (cos 2pi z, sin 2pi z, sin 2pi x)`: divergence free, kinetic energy
/// `1/2 int |g|^2 = 3/4` and helicity `int g . curl g = -2pi`.
pub fn helical(x: &Vector3<f64>) -> Vector3<f64> {
    let (sz, cz) = (2.0 * PI * x.z).sin_cos();
    Vector3::new(cz, sz, (2.0 * PI * x.x).sin())
}

pub fn helical_curl(x: &Vector3<f64>) -> Vector3<f64> {
    let (sz, cz) = (2.0 * PI * x.z).sin_cos();
    Vector3::new(-2.0 * PI * cz, -2.0 * PI * sz - 2.0 * PI * (2.0 * PI * x.x).cos(), 0.0)
}

pub const HELICAL_ENERGY: f64 = 0.75;
pub const HELICAL_HELICITY: f64 = -2.0 * PI;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn taylor_green_forcing_closed_form() {
        let tg = TaylorGreen::new(0.3);
        let f = manufactured_forcing(&tg, tg.nu);
        for (i, t) in [0.0, 0.4, 1.0].into_iter().enumerate() {
            let x = Vector3::new(0.13 + 0.2 * i as f64, 0.71, 0.05);
            let expect = tg.velocity(&x, t) * (tg.nu * (8.0 * PI * PI - 2.0));
            assert!((f(&x, t) - expect).norm() < 1e-12);
        }
    }

    #[test]
    fn helical_curl_matches_gradient() {
        let x = Vector3::new(0.3, 0.1, 0.8);
        let h = 1e-6;
        let g = Matrix3::from_fn(|p, q| {
            let e = Vector3::ith(q, h);
            (helical(&(x + e))[p] - helical(&(x - e))[p]) / (2.0 * h)
        });
        assert!((curl_from_gradient(&g) - helical_curl(&x)).norm() < 1e-7);
    }
}
