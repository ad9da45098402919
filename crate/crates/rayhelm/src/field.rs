//! Media and wavefields: wave-speed coefficient fields, evaluable complex
//! waves with radial derivatives, the closed-form benchmark fields and
//! synthetic test waves.
//!
//! A wavefield here is anything that can be evaluated (with its gradient)
//! at a point; the probing machinery only ever asks for values and radial
//! derivatives on circles. Benchmark fields are defined by closed-form
//! phases and amplitudes; phase gradients are taken either in closed form
//! or by sixth-order central differences of the closed-form phase, which
//! keeps them accurate to ~1e-11 without hand algebra.

use crate::geom::Rect;
use crate::{dir, wrap_angle, Error, Point, Result, C64};
use std::sync::Arc;

type ScalarFn = Arc<dyn Fn(Point) -> f64 + Send + Sync>;
type VecFn = Arc<dyn Fn(Point) -> [f64; 2] + Send + Sync>;
type CxFn = Arc<dyn Fn(Point) -> C64 + Send + Sync>;
type CxGradFn = Arc<dyn Fn(Point) -> [C64; 2] + Send + Sync>;

/// Wave-speed field c(r) with the derived slowness-squared xi = 1/c^2.
#[derive(Clone)]
pub struct Medium {
    c_fn: ScalarFn,
    grad_xi_fn: Option<VecFn>,
}

impl Medium {
    pub fn from_speed(c: impl Fn(Point) -> f64 + Send + Sync + 'static) -> Self {
        Self { c_fn: Arc::new(c), grad_xi_fn: None }
    }

    pub fn from_xi(xi: impl Fn(Point) -> f64 + Send + Sync + 'static) -> Self {
        Self { c_fn: Arc::new(move |r| 1.0 / xi(r).sqrt()), grad_xi_fn: None }
    }

    pub fn homogeneous(c: f64) -> Self {
        Self::from_speed(move |_| c)
    }

    pub fn with_grad_xi(mut self, g: impl Fn(Point) -> [f64; 2] + Send + Sync + 'static) -> Self {
        self.grad_xi_fn = Some(Arc::new(g));
        self
    }

    pub fn c(&self, r: Point) -> f64 {
        (self.c_fn)(r)
    }

    pub fn xi(&self, r: Point) -> f64 {
        let c = self.c(r);
        1.0 / (c * c)
    }

    pub fn kappa(&self, omega: f64, r: Point) -> f64 {
        omega * self.xi(r).sqrt()
    }

    pub fn grad_xi(&self, r: Point) -> Option<[f64; 2]> {
        self.grad_xi_fn.as_ref().map(|g| g(r))
    }
}

/// An evaluable complex wave with gradient, at a fixed frequency.
pub trait Wavefield: Send + Sync {
    fn omega(&self) -> f64;
    fn value(&self, r: Point) -> C64;
    fn gradient(&self, r: Point) -> [C64; 2];

    /// d/dr u(center + r d_theta) at r = radius.
    fn radial_derivative(&self, center: Point, radius: f64, theta: f64) -> C64 {
        let d = dir(theta);
        let p = [center[0] + radius * d[0], center[1] + radius * d[1]];
        let g = self.gradient(p);
        g[0] * d[0] + g[1] * d[1]
    }
}

/// One geometric-optics term A(r) e^{i omega phi(r)}.
#[derive(Clone)]
pub struct Ray {
    pub phase: ScalarFn,
    pub phase_grad: VecFn,
    pub amplitude: CxFn,
    pub amplitude_grad: CxGradFn,
}

/// Finite sum of geometric-optics terms with closed-form evaluation.
#[derive(Clone)]
pub struct AnalyticWave {
    omega: f64,
    rays: Vec<Ray>,
}

impl AnalyticWave {
    pub fn new(omega: f64, rays: Vec<Ray>) -> Self {
        Self { omega, rays }
    }

    pub fn rays(&self) -> &[Ray] {
        &self.rays
    }

    /// Exact local ray angles at r: directions of the phase gradients.
    pub fn exact_angles(&self, r: Point) -> Vec<f64> {
        self.rays
            .iter()
            .map(|ray| {
                let g = (ray.phase_grad)(r);
                wrap_angle(g[1].atan2(g[0]))
            })
            .collect()
    }

    /// max_n | |grad phi_n|^2 - xi | at r.
    pub fn eikonal_residual(&self, medium: &Medium, r: Point) -> f64 {
        let xi = medium.xi(r);
        self.rays
            .iter()
            .map(|ray| {
                let g = (ray.phase_grad)(r);
                ((g[0] * g[0] + g[1] * g[1]) - xi).abs()
            })
            .fold(0.0, f64::max)
    }
}

impl Wavefield for AnalyticWave {
    fn omega(&self) -> f64 {
        self.omega
    }

    fn value(&self, r: Point) -> C64 {
        let mut u = C64::new(0.0, 0.0);
        for ray in &self.rays {
            let ph = C64::new(0.0, self.omega * (ray.phase)(r)).exp();
            u += (ray.amplitude)(r) * ph;
        }
        u
    }

    fn gradient(&self, r: Point) -> [C64; 2] {
        let mut g = [C64::new(0.0, 0.0); 2];
        for ray in &self.rays {
            let ph = C64::new(0.0, self.omega * (ray.phase)(r)).exp();
            let a = (ray.amplitude)(r);
            let ga = (ray.amplitude_grad)(r);
            let gp = (ray.phase_grad)(r);
            let iw = C64::new(0.0, self.omega);
            g[0] += (ga[0] + iw * a * gp[0]) * ph;
            g[1] += (ga[1] + iw * a * gp[1]) * ph;
        }
        g
    }
}

/// Plane wave a e^{i omega d_theta . r} in a homogeneous unit-speed medium.
pub fn plane_wave(omega: f64, theta: f64, amplitude: C64) -> AnalyticWave {
    let d = dir(theta);
    AnalyticWave::new(
        omega,
        vec![Ray {
            phase: Arc::new(move |r| d[0] * r[0] + d[1] * r[1]),
            phase_grad: Arc::new(move |_| d),
            amplitude: Arc::new(move |_| amplitude),
            amplitude_grad: Arc::new(|_| [C64::new(0.0, 0.0); 2]),
        }],
    )
}

/// Sixth-order central difference gradient of a scalar field.
pub fn fd6_gradient(f: &dyn Fn(Point) -> f64, r: Point, h: f64) -> [f64; 2] {
    let mut g = [0.0; 2];
    for (i, gi) in g.iter_mut().enumerate() {
        let ev = |s: f64| {
            let mut p = r;
            p[i] += s * h;
            f(p)
        };
        *gi = (-ev(-3.0) + 9.0 * ev(-2.0) - 45.0 * ev(-1.0) + 45.0 * ev(1.0) - 9.0 * ev(2.0)
            + ev(3.0))
            / (60.0 * h);
    }
    g
}

/// A benchmark problem: printed medium, analytic wave and oracles.
pub struct Benchmark {
    /// The coefficient field as printed in the problem statement.
    pub medium: Medium,
    /// The medium the wave's phases actually satisfy the eikonal equation
    /// for; probing and basis construction use this one. Identical to
    /// `medium` whenever the benchmark solution is a true geometric-optics
    /// field of the printed medium.
    pub ray_medium: Medium,
    pub wave: AnalyticWave,
    pub domain: Rect,
    /// How far beyond the domain the closed forms stay evaluable; sampling
    /// circles may use this margin.
    pub eval_margin: f64,
    /// Exact ray angles at a point (the error oracle).
    pub exact_angles: Arc<dyn Fn(Point) -> Vec<f64> + Send + Sync>,
    /// Expected ray count in the domain interior.
    pub ray_count: usize,
}

// ---------------------------------------------------------------------
// Example 1: Gaussian-lens velocity, single wave u = c(x,y) e^{i omega xy}
// ---------------------------------------------------------------------

fn lens_c(r: Point) -> f64 {
    let dx = r[0] - 0.5;
    let dy = r[1] - 0.5;
    4.0 / 3.0 * (1.0 - 0.125 * (-32.0 * (dx * dx + dy * dy)).exp())
}

fn lens_grad_c(r: Point) -> [f64; 2] {
    let dx = r[0] - 0.5;
    let dy = r[1] - 0.5;
    let e = (-32.0 * (dx * dx + dy * dy)).exp();
    [32.0 / 3.0 * e * dx, 32.0 / 3.0 * e * dy]
}

fn lens_laplacian_c(r: Point) -> f64 {
    let dx = r[0] - 0.5;
    let dy = r[1] - 0.5;
    let rho2 = dx * dx + dy * dy;
    let e = (-32.0 * rho2).exp();
    64.0 / 3.0 * e * (1.0 - 32.0 * rho2)
}

/// Example 1 bundle: benchmark field plus manufactured data.
pub struct Example1 {
    pub bench: Benchmark,
    /// Impedance boundary data g = (d/dn + i omega) u on the domain boundary.
    pub boundary_g: Arc<dyn Fn(Point, [f64; 2]) -> C64 + Send + Sync>,
    /// Manufactured source f = -Delta u - omega^2 xi u (lens medium).
    pub source_f: Arc<dyn Fn(Point) -> C64 + Send + Sync>,
}

/// Example 1: heterogeneous Gaussian-lens medium with the manufactured
/// single-wave solution u = c(x, y) e^{i omega x y} on the unit square.
///
/// The manufactured phase x y satisfies the eikonal equation for
/// xi_eff = x^2 + y^2, not for the lens medium, so `ray_medium` carries
/// the phase-consistent field; the lens is kept as the printed `medium`.
pub fn example1_field(omega: f64) -> Example1 {
    let phase = |r: Point| r[0] * r[1];
    let wave = AnalyticWave::new(
        omega,
        vec![Ray {
            phase: Arc::new(phase),
            phase_grad: Arc::new(|r| [r[1], r[0]]),
            amplitude: Arc::new(|r| C64::new(lens_c(r), 0.0)),
            amplitude_grad: Arc::new(|r| {
                let g = lens_grad_c(r);
                [C64::new(g[0], 0.0), C64::new(g[1], 0.0)]
            }),
        }],
    );
    let medium = Medium::from_speed(lens_c);
    let ray_medium = Medium::from_xi(|r| r[0] * r[0] + r[1] * r[1]);
    let exact_angles = Arc::new(|r: Point| vec![wrap_angle(r[0].atan2(r[1]))]);

    let g_wave = wave.clone();
    let boundary_g = Arc::new(move |p: Point, n: [f64; 2]| {
        let grad = g_wave.gradient(p);
        grad[0] * n[0] + grad[1] * n[1] + C64::new(0.0, omega) * g_wave.value(p)
    });

    let source_f = Arc::new(move |r: Point| {
        // Delta u = [Delta c + 2 i w grad c . (y, x) - w^2 c (x^2 + y^2)] e^{i w x y}
        let c = lens_c(r);
        let gc = lens_grad_c(r);
        let e = C64::new(0.0, omega * r[0] * r[1]).exp();
        let lap = C64::new(lens_laplacian_c(r), 0.0)
            + C64::new(0.0, 2.0 * omega * (gc[0] * r[1] + gc[1] * r[0]))
            - C64::new(omega * omega * c * (r[0] * r[0] + r[1] * r[1]), 0.0);
        let xi = 1.0 / (c * c);
        -(lap * e) - C64::new(omega * omega * xi, 0.0) * (C64::new(c, 0.0) * e)
    });

    Example1 {
        bench: Benchmark {
            medium,
            ray_medium,
            wave,
            domain: Rect::UNIT,
            eval_margin: 2.0,
            exact_angles,
            ray_count: 1,
        },
        boundary_g,
        source_f,
    }
}

// ---------------------------------------------------------------------
// Example 2: constant gradient of slowness squared, two crossing waves
// ---------------------------------------------------------------------

const EX2_C0: f64 = 1.0;
const EX2_G0: [f64; 2] = [0.1, -0.2];
const EX2_R0: [f64; 2] = [-0.1, -0.1];

fn ex2_g2() -> f64 {
    EX2_G0[0] * EX2_G0[0] + EX2_G0[1] * EX2_G0[1]
}

/// xi(r) = c0^2 + 2 G0 . (r - r0).
pub fn ex2_xi(r: Point) -> f64 {
    EX2_C0 * EX2_C0 + 2.0 * (EX2_G0[0] * (r[0] - EX2_R0[0]) + EX2_G0[1] * (r[1] - EX2_R0[1]))
}

/// Two-point traveltime phases phi_j, j in {1, 2}.
///
/// sigma_j = sqrt(2 (cbar + (-1)^j sqrt(cbar^2 - |G0|^2 |r - r0|^2))) / |G0|
/// and phi_j = cbar sigma_j - |G0|^2 sigma_j^3 / 6. The |G0| power in the
/// sigma denominator is fixed against the eikonal equation
/// |grad phi_j|^2 = xi, which pins it uniquely.
pub fn ex2_phase(r: Point, j: usize) -> Result<f64> {
    let g2 = ex2_g2();
    let dx = r[0] - EX2_R0[0];
    let dy = r[1] - EX2_R0[1];
    let cbar = EX2_C0 + EX2_G0[0] * dx + EX2_G0[1] * dy;
    let disc = cbar * cbar - g2 * (dx * dx + dy * dy);
    if disc < 0.0 {
        return Err(Error::Domain(format!(
            "example 2 phase undefined at ({}, {}): negative discriminant {disc}",
            r[0], r[1]
        )));
    }
    let sign = if j % 2 == 1 { -1.0 } else { 1.0 };
    let sigma = (2.0 * (cbar + sign * disc.sqrt())).sqrt() / g2.sqrt();
    Ok(cbar * sigma - g2 / 6.0 * sigma * sigma * sigma)
}

fn ex2_phase_grad(r: Point, j: usize) -> [f64; 2] {
    fd6_gradient(&|p| ex2_phase(p, j).expect("phase domain"), r, 1e-4)
}

/// Example 2: xi with constant gradient, two crossing waves
/// u = e^{i omega phi_1} / (xy + i) + e^{i omega phi_2} / (x^2 + y^2 + i).
pub fn example2_field(omega: f64) -> Benchmark {
    let mk_ray = |j: usize| -> Ray {
        let amplitude: CxFn = if j == 1 {
            Arc::new(|r: Point| 1.0 / C64::new(r[0] * r[1], 1.0))
        } else {
            Arc::new(|r: Point| 1.0 / C64::new(r[0] * r[0] + r[1] * r[1], 1.0))
        };
        let amplitude_grad: CxGradFn = if j == 1 {
            Arc::new(|r: Point| {
                let d = C64::new(r[0] * r[1], 1.0);
                let d2 = d * d;
                [-C64::new(r[1], 0.0) / d2, -C64::new(r[0], 0.0) / d2]
            })
        } else {
            Arc::new(|r: Point| {
                let d = C64::new(r[0] * r[0] + r[1] * r[1], 1.0);
                let d2 = d * d;
                [-C64::new(2.0 * r[0], 0.0) / d2, -C64::new(2.0 * r[1], 0.0) / d2]
            })
        };
        Ray {
            phase: Arc::new(move |r| ex2_phase(r, j).expect("phase domain")),
            phase_grad: Arc::new(move |r| ex2_phase_grad(r, j)),
            amplitude,
            amplitude_grad,
        }
    };
    let wave = AnalyticWave::new(omega, vec![mk_ray(1), mk_ray(2)]);
    let medium = Medium::from_xi(ex2_xi).with_grad_xi(|_| [2.0 * EX2_G0[0], 2.0 * EX2_G0[1]]);
    let exact_angles = Arc::new(|r: Point| {
        (1..=2)
            .map(|j| {
                let g = ex2_phase_grad(r, j);
                wrap_angle(g[1].atan2(g[0]))
            })
            .collect()
    });
    Benchmark {
        ray_medium: medium.clone(),
        medium,
        wave,
        domain: Rect::UNIT,
        eval_margin: 0.6,
        exact_angles,
        ray_count: 2,
    }
}

// ---------------------------------------------------------------------
// Synthetic test fields
// ---------------------------------------------------------------------

/// One term of a quadratic-phase synthetic wave: phi = d_theta . dr +
/// dr^T H dr / 2 around `origin`, amplitude a + g . dr (unit-speed eikonal
/// holds exactly at the origin).
#[derive(Debug, Clone)]
pub struct QuadRay {
    pub theta: f64,
    pub amp: C64,
    pub amp_grad: [C64; 2],
    pub hessian: [[f64; 2]; 2],
}

/// Multi-wave field with exactly quadratic phases and linear amplitudes;
/// the model-oracle construction with every jet known in closed form.
pub fn synthetic_quadratic_wave(omega: f64, origin: Point, rays: &[QuadRay]) -> AnalyticWave {
    let terms = rays
        .iter()
        .map(|q| {
            let d = dir(q.theta);
            let h = q.hessian;
            let (amp, grad) = (q.amp, q.amp_grad);
            Ray {
                phase: Arc::new(move |r: Point| {
                    let dr = [r[0] - origin[0], r[1] - origin[1]];
                    d[0] * dr[0] + d[1] * dr[1]
                        + 0.5
                            * (h[0][0] * dr[0] * dr[0]
                                + 2.0 * h[0][1] * dr[0] * dr[1]
                                + h[1][1] * dr[1] * dr[1])
                }),
                phase_grad: Arc::new(move |r: Point| {
                    let dr = [r[0] - origin[0], r[1] - origin[1]];
                    [
                        d[0] + h[0][0] * dr[0] + h[0][1] * dr[1],
                        d[1] + h[0][1] * dr[0] + h[1][1] * dr[1],
                    ]
                }),
                amplitude: Arc::new(move |r: Point| {
                    let dr = [r[0] - origin[0], r[1] - origin[1]];
                    amp + grad[0] * dr[0] + grad[1] * dr[1]
                }),
                amplitude_grad: Arc::new(move |_| grad),
            }
        })
        .collect();
    AnalyticWave::new(omega, terms)
}

/// Point-source circular wave phi = |r - src| (unit speed) with an
/// arbitrary smooth amplitude factor; `asymmetry != 0` multiplies the
/// amplitude by a linear complex factor that breaks the mirror symmetry
/// about the ray axis.
pub fn curved_wave(omega: f64, src: Point, asymmetry: f64) -> AnalyticWave {
    let base = move |r: Point| {
        C64::new(1.0 + asymmetry * (r[0] - r[1]), 0.625 * asymmetry * (r[0] + 2.0 * r[1]))
    };
    let base_grad = move |_: Point| {
        [
            C64::new(asymmetry, 0.625 * asymmetry),
            C64::new(-asymmetry, 1.25 * asymmetry),
        ]
    };
    AnalyticWave::new(
        omega,
        vec![Ray {
            phase: Arc::new(move |r| {
                let dx = r[0] - src[0];
                let dy = r[1] - src[1];
                (dx * dx + dy * dy).sqrt()
            }),
            phase_grad: Arc::new(move |r| {
                let dx = r[0] - src[0];
                let dy = r[1] - src[1];
                let n = (dx * dx + dy * dy).sqrt();
                [dx / n, dy / n]
            }),
            amplitude: Arc::new(move |r| {
                let dx = r[0] - src[0];
                let dy = r[1] - src[1];
                let spread = 1.0 / (2.0 + (dx * dx + dy * dy).sqrt()).sqrt();
                base(r) * spread
            }),
            amplitude_grad: Arc::new(move |r| {
                let dx = r[0] - src[0];
                let dy = r[1] - src[1];
                let n = (dx * dx + dy * dy).sqrt();
                let s = 2.0 + n;
                let spread = 1.0 / s.sqrt();
                let dspread = [-0.5 * dx / (n * s.sqrt() * s), -0.5 * dy / (n * s.sqrt() * s)];
                let b = base(r);
                let gb = base_grad(r);
                [
                    gb[0] * spread + b * dspread[0],
                    gb[1] * spread + b * dspread[1],
                ]
            }),
        }],
    )
}

/// Unit-amplitude wave whose phase is the distance to the parabola
/// s -> (s, -1.2 - 0.35 s^2); |grad phi| = 1 exactly, and the wavefront
/// curvature varies along the front, so nothing is mirror-symmetric about
/// the ray axis. The curved-phase single-wave test field.
pub fn parabola_front_wave(omega: f64) -> AnalyticWave {
    fn foot(r: Point) -> f64 {
        let mut s = 0.0_f64;
        for _ in 0..60 {
            let (gx, gy) = (s, -1.2 - 0.35 * s * s);
            let dgy = -0.7 * s;
            let f = (r[0] - gx) + (r[1] - gy) * dgy;
            let df = -(1.0 + dgy * dgy) + (r[1] - gy) * (-0.7);
            let step = f / df;
            s -= step;
            if step.abs() < 1e-14 {
                break;
            }
        }
        s
    }
    fn phi(r: Point) -> f64 {
        let s = foot(r);
        let (gx, gy) = (s, -1.2 - 0.35 * s * s);
        ((r[0] - gx).powi(2) + (r[1] - gy).powi(2)).sqrt()
    }
    fn grad_phi(r: Point) -> [f64; 2] {
        let s = foot(r);
        let (gx, gy) = (s, -1.2 - 0.35 * s * s);
        let n = ((r[0] - gx).powi(2) + (r[1] - gy).powi(2)).sqrt();
        [(r[0] - gx) / n, (r[1] - gy) / n]
    }
    AnalyticWave::new(
        omega,
        vec![Ray {
            phase: Arc::new(phi),
            phase_grad: Arc::new(grad_phi),
            amplitude: Arc::new(|_| C64::new(1.0, 0.0)),
            amplitude_grad: Arc::new(|_| [C64::new(0.0, 0.0); 2]),
        }],
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn parabola_front_satisfies_unit_eikonal() {
        let w = parabola_front_wave(10.0);
        let medium = Medium::homogeneous(1.0);
        for p in [[0.0, 0.0], [0.3, 0.1], [-0.25, 0.15]] {
            assert!(w.eikonal_residual(&medium, p) < 1e-10);
        }
    }

    #[test]
    fn plane_wave_values() {
        let w = plane_wave(10.0, 0.0, C64::new(1.0, 0.0));
        let v = w.value([1.0, 0.0]);
        let want = C64::new(0.0, 10.0).exp();
        assert_relative_eq!(v.re, want.re, epsilon = 1e-14);
        assert_relative_eq!(v.im, want.im, epsilon = 1e-14);

        // radial derivative along the ray axis: i w u
        let du = w.radial_derivative([0.0, 0.0], 0.3, 0.0);
        let u = w.value([0.3, 0.0]);
        let want = C64::new(0.0, 10.0) * u;
        assert_relative_eq!(du.re, want.re, epsilon = 1e-12);
        assert_relative_eq!(du.im, want.im, epsilon = 1e-12);

        // theta = pi/2: constant along x at fixed y
        let w = plane_wave(10.0, std::f64::consts::FRAC_PI_2, C64::new(1.0, 0.0));
        let a = w.value([0.1, 0.7]);
        let b = w.value([0.9, 0.7]);
        assert_relative_eq!(a.re, b.re, epsilon = 1e-13);
        assert_relative_eq!(a.im, b.im, epsilon = 1e-13);
    }

    #[test]
    fn radial_derivative_matches_finite_differences() {
        let ex = example1_field(40.0);
        let f = &ex.bench.wave;
        let center = [19.0 / 20.0, 3.0 / 20.0];
        for &theta in &[0.0, 1.1, 2.7, 4.9] {
            let rad = 0.07;
            let du = f.radial_derivative(center, rad, theta);
            let h = 1e-6;
            let at = |s: f64| {
                let d = dir(theta);
                f.value([center[0] + (rad + s) * d[0], center[1] + (rad + s) * d[1]])
            };
            let fd = (at(h) - at(-h)) / (2.0 * h);
            assert!((du - fd).norm() <= 1e-4 * du.norm().max(1e-12));
        }
    }

    #[test]
    fn example1_medium_values() {
        let ex = example1_field(100.0);
        assert_relative_eq!(ex.bench.medium.c([0.5, 0.5]), 7.0 / 6.0, epsilon = 1e-15);
        // u(0, y) = c(0, y): phase vanishes at x = 0
        let u = ex.bench.wave.value([0.0, 0.37]);
        assert_relative_eq!(u.re, lens_c([0.0, 0.37]), epsilon = 1e-14);
        assert_relative_eq!(u.im, 0.0, epsilon = 1e-14);
        // xi * c^2 = 1
        for p in [[0.1, 0.9], [0.6, 0.2]] {
            let c = ex.bench.medium.c(p);
            assert_relative_eq!(ex.bench.medium.xi(p) * c * c, 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn example1_wave_satisfies_effective_eikonal() {
        let ex = example1_field(50.0);
        for p in [[0.3, 0.8], [0.9, 0.15], [0.5, 0.5]] {
            assert!(ex.bench.wave.eikonal_residual(&ex.bench.ray_medium, p) < 1e-10);
        }
    }

    #[test]
    fn example1_source_against_fd_laplacian() {
        // f = -Delta u - w^2 xi u with a 4th-order finite-difference Laplacian
        let omega = 25.0;
        let ex = example1_field(omega);
        let u = |p: Point| ex.bench.wave.value(p);
        let h = 2e-4;
        for p in [[0.4, 0.6], [0.75, 0.3]] {
            let lap4 = |f: &dyn Fn(Point) -> C64, r: Point| {
                let mut acc = C64::new(0.0, 0.0);
                for axis in 0..2 {
                    let ev = |s: f64| {
                        let mut q = r;
                        q[axis] += s * h;
                        f(q)
                    };
                    acc += (-ev(2.0) + 16.0 * ev(1.0) - 30.0 * ev(0.0) + 16.0 * ev(-1.0)
                        - ev(-2.0))
                        / (12.0 * h * h);
                }
                acc
            };
            let want = -lap4(&u, p)
                - C64::new(omega * omega * ex.bench.medium.xi(p), 0.0) * u(p);
            let got = (ex.source_f)(p);
            assert!(
                (got - want).norm() <= 1e-6 * want.norm().max(1.0),
                "f mismatch at {p:?}: {got} vs {want}"
            );
        }
    }

    #[test]
    fn example2_medium_and_phases() {
        let b = example2_field(100.0);
        // cbar at r0 is c0 = 1, so xi(r0) = 1
        assert_relative_eq!(ex2_xi([-0.1, -0.1]), 1.0, epsilon = 1e-15);
        // frozen phase values at the domain center
        assert_relative_eq!(ex2_phase([0.5, 0.5], 1).unwrap(), 0.821271137207, epsilon = 1e-9);
        assert_relative_eq!(ex2_phase([0.5, 0.5], 2).unwrap(), 2.758782812778, epsilon = 1e-9);
        // eikonal residual via the FD6 gradients embedded in the rays
        for p in [[0.5, 0.5], [0.1, 0.9], [0.9, 0.1]] {
            assert!(
                b.wave.eikonal_residual(&b.medium, p) < 1e-8,
                "eikonal residual too large at {p:?}"
            );
        }
    }

    #[test]
    fn example2_two_distinct_directions() {
        let b = example2_field(60.0);
        for p in [[0.3, 0.3], [0.5, 0.5], [0.8, 0.2], [0.2, 0.8]] {
            let th = (b.exact_angles)(p);
            assert_eq!(th.len(), 2);
            assert!(crate::angle_dist(th[0], th[1]) > 0.3, "rays nearly parallel at {p:?}");
        }
        let th = (b.exact_angles)([0.5, 0.5]);
        assert_relative_eq!(th[0], 0.685765358495, epsilon = 1e-6);
        assert_relative_eq!(th[1], 5.275669394285, epsilon = 1e-6);
    }

    #[test]
    fn example2_domain_violation_is_error() {
        assert!(ex2_phase([-1.44, 2.58], 1).is_err());
    }

    #[test]
    fn synthetic_quadratic_eikonal_at_origin() {
        let rays = [QuadRay {
            theta: 1.0,
            amp: C64::new(1.0, 0.3),
            amp_grad: [C64::new(0.2, -0.1), C64::new(-0.15, 0.05)],
            hessian: [[0.3, 0.1], [0.1, -0.2]],
        }];
        let w = synthetic_quadratic_wave(40.0, [0.0, 0.0], &rays);
        let medium = Medium::homogeneous(1.0);
        assert!(w.eikonal_residual(&medium, [0.0, 0.0]) < 1e-14);
        assert_relative_eq!(w.exact_angles([0.0, 0.0])[0], 1.0, epsilon = 1e-14);
    }
}
