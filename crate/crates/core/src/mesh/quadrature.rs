//! Quadrature on the reference tetrahedron and triangle.
//!
//! Points are stored in barycentric coordinates so that a rule can be pushed
//! onto any affine simplex without knowing its reference map. Degrees 1 and 2
//! use the classical closed-form rules; higher degrees use collapsed
//! (Duffy-transformed) Gauss-Legendre product rules, which have strictly
//! positive weights for every degree.

use crate::error::{Error, Result};

/// Highest polynomial degree for which a rule is available.
pub const MAX_DEGREE: usize = 20;

/// A quadrature rule on a reference simplex with `N` vertices.
///
/// Weights sum to the measure of the reference simplex (1/6 for the unit
/// tetrahedron, 1/2 for the unit triangle).
#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureRule<const N: usize> {
    pub points: Vec<[f64; N]>,
    pub weights: Vec<f64>,
    pub degree: usize,
}

pub type TetRule = QuadratureRule<4>;
pub type TriangleRule = QuadratureRule<3>;

impl<const N: usize> QuadratureRule<N> {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Iterate over `(barycentric point, weight)` pairs.
    pub fn iter(&self) -> impl Iterator<Item = (&[f64; N], f64)> + '_ {
        self.points.iter().zip(self.weights.iter().copied())
    }
}

/// Rule on the unit tetrahedron exact for polynomials of total degree `degree`.
pub fn tet_rule(degree: usize) -> Result<TetRule> {
    match degree {
        1 => Ok(QuadratureRule {
            points: vec![[0.25; 4]],
            weights: vec![1.0 / 6.0],
            degree: 1,
        }),
        2 => {
            let a = (5.0 + 3.0 * 5f64.sqrt()) / 20.0;
            let b = (5.0 - 5f64.sqrt()) / 20.0;
            let points = (0..4)
                .map(|i| {
                    let mut p = [b; 4];
                    p[i] = a;
                    p
                })
                .collect();
            Ok(QuadratureRule {
                points,
                weights: vec![1.0 / 24.0; 4],
                degree: 2,
            })
        }
        3..=MAX_DEGREE => Ok(collapsed_tet(degree)),
        _ => Err(Error::UnsupportedQuadrature {
            domain: "tetrahedron",
            degree,
        }),
    }
}

/// Rule on the unit triangle exact for polynomials of total degree `degree`.
pub fn triangle_rule(degree: usize) -> Result<TriangleRule> {
    match degree {
        1 => Ok(QuadratureRule {
            points: vec![[1.0 / 3.0; 3]],
            weights: vec![0.5],
            degree: 1,
        }),
        2 => {
            let points = (0..3)
                .map(|i| {
                    let mut p = [1.0 / 6.0; 3];
                    p[i] = 2.0 / 3.0;
                    p
                })
                .collect();
            Ok(QuadratureRule {
                points,
                weights: vec![1.0 / 6.0; 3],
                degree: 2,
            })
        }
        3..=MAX_DEGREE => Ok(collapsed_triangle(degree)),
        _ => Err(Error::UnsupportedQuadrature {
            domain: "triangle",
            degree,
        }),
    }
}

fn collapsed_tet(degree: usize) -> TetRule {
    // x = u, y = v(1-u), z = w(1-u)(1-v); the Jacobian (1-u)^2 (1-v) raises
    // the degree in u by two.
    let n = (degree + 4) / 2;
    let (nodes, weights) = gauss_legendre(n);
    let mut points = Vec::with_capacity(n * n * n);
    let mut w = Vec::with_capacity(n * n * n);
    for (&u, &wu) in nodes.iter().zip(&weights) {
        for (&v, &wv) in nodes.iter().zip(&weights) {
            for (&s, &ws) in nodes.iter().zip(&weights) {
                let x = u;
                let y = v * (1.0 - u);
                let z = s * (1.0 - u) * (1.0 - v);
                points.push([1.0 - x - y - z, x, y, z]);
                w.push(wu * wv * ws * (1.0 - u) * (1.0 - u) * (1.0 - v));
            }
        }
    }
    QuadratureRule {
        points,
        weights: w,
        degree,
    }
}

fn collapsed_triangle(degree: usize) -> TriangleRule {
    let n = (degree + 3) / 2;
    let (nodes, weights) = gauss_legendre(n);
    let mut points = Vec::with_capacity(n * n);
    let mut w = Vec::with_capacity(n * n);
    for (&u, &wu) in nodes.iter().zip(&weights) {
        for (&v, &wv) in nodes.iter().zip(&weights) {
            let x = u;
            let y = v * (1.0 - u);
            points.push([1.0 - x - y, x, y]);
            w.push(wu * wv * (1.0 - u));
        }
    }
    QuadratureRule {
        points,
        weights: w,
        degree,
    }
}

/// Gauss-Legendre nodes and weights on [0, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        if d != 0.0 {
            dp = d;
        }
        nodes[i] = 0.5 * (1.0 - x);
        weights[i] = 1.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

// Legendre polynomial P_n and its derivative at x.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn factorial(n: u32) -> f64 {
        (1..=n).map(f64::from).product()
    }

    // int_T x^a y^b z^c = a! b! c! / (a+b+c+3)!
    fn tet_monomial(a: u32, b: u32, c: u32) -> f64 {
        factorial(a) * factorial(b) * factorial(c) / factorial(a + b + c + 3)
    }

    fn tri_monomial(a: u32, b: u32) -> f64 {
        factorial(a) * factorial(b) / factorial(a + b + 2)
    }

    #[test]
    fn weights_sum_to_reference_measure() {
        for d in 1..=MAX_DEGREE {
            let t = tet_rule(d).unwrap();
            assert!((t.weights.iter().sum::<f64>() - 1.0 / 6.0).abs() < 1e-15);
            assert!(t.weights.iter().all(|&w| w > 0.0));
            let f = triangle_rule(d).unwrap();
            assert!((f.weights.iter().sum::<f64>() - 0.5).abs() < 1e-15);
            assert!(f.weights.iter().all(|&w| w > 0.0));
        }
    }

    #[test]
    fn degree_two_barycentric_moment() {
        let rule = tet_rule(2).unwrap();
        let v: f64 = rule.iter().map(|(p, w)| w * p[1] * p[2]).sum();
        assert!((v - 1.0 / 120.0).abs() < 1e-16);
        let v: f64 = rule.iter().map(|(p, w)| w * p[1] * p[1]).sum();
        assert!((v - 2.0 / 120.0).abs() < 1e-16);
    }

    #[test]
    fn degree_four_x2y2() {
        let rule = tet_rule(4).unwrap();
        let v: f64 = rule.iter().map(|(p, w)| w * p[1].powi(2) * p[2].powi(2)).sum();
        assert!((v - tet_monomial(2, 2, 0)).abs() < 1e-14, "{v}");
    }

    #[test]
    fn monomial_exactness_all_degrees() {
        for d in 1..=8usize {
            let t = tet_rule(d).unwrap();
            let f = triangle_rule(d).unwrap();
            for a in 0..=d as u32 {
                for b in 0..=(d as u32 - a) {
                    for c in 0..=(d as u32 - a - b) {
                        let v: f64 = t
                            .iter()
                            .map(|(p, w)| w * p[1].powi(a as i32) * p[2].powi(b as i32) * p[3].powi(c as i32))
                            .sum();
                        assert!((v - tet_monomial(a, b, c)).abs() < 1e-15, "tet d={d} {a}{b}{c}");
                    }
                    let v: f64 = f
                        .iter()
                        .map(|(p, w)| w * p[1].powi(a as i32) * p[2].powi(b as i32))
                        .sum();
                    assert!((v - tri_monomial(a, b)).abs() < 1e-15, "tri d={d} {a}{b}");
                }
            }
        }
    }

    #[test]
    fn unsupported_degrees_rejected() {
        assert!(tet_rule(0).is_err());
        assert!(triangle_rule(0).is_err());
        assert!(tet_rule(MAX_DEGREE + 1).is_err());
    }
}
