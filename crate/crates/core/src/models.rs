//! Reference Lagrangians used by the examples, the CLI and the test suites.

use nalgebra::DVector;

use crate::discrete1::DiscreteLagrangian1;
use crate::groupoid::Backend;
use crate::second_order::DiscreteLagrangian2;

/// `‖q₁ − q₀‖²/(2h̄)` on the pair groupoid over ℝᵐ, with exact derivatives.
pub fn free_particle(dim: usize, hbar: f64) -> DiscreteLagrangian1 {
    let vel = move |g: &crate::groupoid::GroupoidElement| (g.target() - g.source()) / hbar;
    DiscreteLagrangian1::new(Backend::Pair { dim }, move |g| (g.target() - g.source()).norm_squared() / (2.0 * hbar))
        .with_derivatives(vel, vel)
}

/// Midpoint discretization of the unit harmonic oscillator,
/// `h̄[‖(q₁−q₀)/h̄‖²/2 − ‖(q₀+q₁)/2‖²/2]`, with exact derivatives.
pub fn harmonic_oscillator(dim: usize, hbar: f64) -> DiscreteLagrangian1 {
    let parts = move |g: &crate::groupoid::GroupoidElement| {
        let (a, b) = (g.source(), g.target());
        ((&b - &a) / hbar, (a + b) * (hbar / 4.0))
    };
    DiscreteLagrangian1::new(Backend::Pair { dim }, move |g| {
        let (a, b) = (g.source(), g.target());
        hbar * (((&b - &a) / hbar).norm_squared() / 2.0 - ((a + b) / 2.0).norm_squared() / 2.0)
    })
    .with_derivatives(
        move |g| {
            let (v, m) = parts(g);
            v - m
        },
        move |g| {
            let (v, m) = parts(g);
            v + m
        },
    )
}

/// Cubic-spline Lagrangian `½‖q₂ − 2q₁ + q₀‖²` on the pair groupoid over ℝᵐ.
pub fn spline(dim: usize) -> DiscreteLagrangian2 {
    DiscreteLagrangian2::pair_triple(dim, |a: &DVector<f64>, b: &DVector<f64>, c: &DVector<f64>| {
        0.5 * (c - b * 2.0 + a).norm_squared()
    })
}
