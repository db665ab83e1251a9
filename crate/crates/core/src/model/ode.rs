//! Closed-form solution of the linear two-compartment system
//!
//! ```text
//! dP/dt = -(mu_P + rho) P + pi R
//! dR/dt = lambda + 2 rho P - (mu_R + pi) R
//! ```
//!
//! Coordinates are ordered `(p, r)` throughout. With constant `pi` the system
//! is affine with constant coefficients, so the flow over `t` days is an affine
//! map `z -> E(t) z + c(t)` built from the eigen-decomposition of the system
//! matrix. The off-diagonal entries are positive, so the eigenvalues are real
//! and distinct; the determinant turns negative under strong injections (the
//! growth phase), which is why the forcing term goes through `expm1(l t) / l`
//! instead of an equilibrium shift.

use super::params::PatientParams;

/// Affine map `z -> m z + c` on `(p, r)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Affine2 {
    pub m: [[f64; 2]; 2],
    pub c: [f64; 2],
}

impl Affine2 {
    pub const IDENTITY: Affine2 = Affine2 {
        m: [[1.0, 0.0], [0.0, 1.0]],
        c: [0.0, 0.0],
    };

    #[inline]
    pub fn apply(&self, p: f64, r: f64) -> (f64, f64) {
        (
            self.m[0][0] * p + self.m[0][1] * r + self.c[0],
            self.m[1][0] * p + self.m[1][1] * r + self.c[1],
        )
    }

    /// `next ∘ self`: apply `self` first, then `next`.
    pub fn then(&self, next: &Affine2) -> Affine2 {
        let m = mat_mul(&next.m, &self.m);
        let (c0, c1) = next.apply(self.c[0], self.c[1]);
        Affine2 { m, c: [c0, c1] }
    }
}

fn mat_mul(a: &[[f64; 2]; 2], b: &[[f64; 2]; 2]) -> [[f64; 2]; 2] {
    [
        [
            a[0][0] * b[0][0] + a[0][1] * b[1][0],
            a[0][0] * b[0][1] + a[0][1] * b[1][1],
        ],
        [
            a[1][0] * b[0][0] + a[1][1] * b[1][0],
            a[1][0] * b[0][1] + a[1][1] * b[1][1],
        ],
    ]
}

/// Eigenvalue gap below which the closed form is abandoned for RK4.
const EIGEN_GAP_MIN: f64 = 1e-10;
/// Largest RK4 step used by the fallback integrator (days).
const RK4_MAX_STEP: f64 = 1e-2;

#[derive(Debug, Clone, Copy)]
enum Solution {
    /// Spectral projectors `P1`, `P2` and eigenvalues `l1 > l2`.
    Spectral {
        l1: f64,
        l2: f64,
        p1: [[f64; 2]; 2],
        p2: [[f64; 2]; 2],
    },
    Rk4,
}

/// Linear flow of the (p, r) compartments at a fixed proliferation rate.
#[derive(Debug, Clone, Copy)]
pub struct LinearFlow {
    a: [[f64; 2]; 2],
    b: [f64; 2],
    solution: Solution,
}

impl LinearFlow {
    pub fn new(params: &PatientParams, pi: f64) -> Self {
        let a = [
            [-(params.mu_p + params.rho), pi],
            [2.0 * params.rho, -(params.mu_r + pi)],
        ];
        let b = [0.0, params.lambda];
        let half_trace = 0.5 * (a[0][0] + a[1][1]);
        let half_diff = 0.5 * (a[0][0] - a[1][1]);
        let disc = half_diff * half_diff + a[0][1] * a[1][0];
        let solution = if disc > 0.0 && 2.0 * disc.sqrt() >= EIGEN_GAP_MIN {
            let s = disc.sqrt();
            let (l1, l2) = (half_trace + s, half_trace - s);
            let gap = l1 - l2;
            let p1 = [
                [(a[0][0] - l2) / gap, a[0][1] / gap],
                [a[1][0] / gap, (a[1][1] - l2) / gap],
            ];
            let p2 = [
                [(l1 - a[0][0]) / gap, -a[0][1] / gap],
                [-a[1][0] / gap, (l1 - a[1][1]) / gap],
            ];
            Solution::Spectral { l1, l2, p1, p2 }
        } else {
            Solution::Rk4
        };
        LinearFlow { a, b, solution }
    }

    /// Right-hand side `(dp/dt, dr/dt)`.
    #[inline]
    pub fn rates(&self, p: f64, r: f64) -> (f64, f64) {
        (
            self.a[0][0] * p + self.a[0][1] * r + self.b[0],
            self.a[1][0] * p + self.a[1][1] * r + self.b[1],
        )
    }

    /// Eigenvalues `(l1, l2)` with `l1 >= l2`, when the closed form is in use.
    pub fn eigenvalues(&self) -> Option<(f64, f64)> {
        match self.solution {
            Solution::Spectral { l1, l2, .. } => Some((l1, l2)),
            Solution::Rk4 => None,
        }
    }

    /// Affine propagator over `t >= 0` days.
    pub fn propagator(&self, t: f64) -> Affine2 {
        match self.solution {
            Solution::Spectral { l1, l2, p1, p2 } => {
                let (e1, e2) = ((l1 * t).exp(), (l2 * t).exp());
                let (f1, f2) = (phi1(l1, t), phi1(l2, t));
                let mut m = [[0.0; 2]; 2];
                let mut f = [[0.0; 2]; 2];
                for i in 0..2 {
                    for j in 0..2 {
                        m[i][j] = e1 * p1[i][j] + e2 * p2[i][j];
                        f[i][j] = f1 * p1[i][j] + f2 * p2[i][j];
                    }
                }
                let c = [
                    f[0][0] * self.b[0] + f[0][1] * self.b[1],
                    f[1][0] * self.b[0] + f[1][1] * self.b[1],
                ];
                Affine2 { m, c }
            }
            Solution::Rk4 => {
                // Columns of the propagator are the flows of the unit vectors
                // minus the flow of the origin.
                let (c0, c1) = self.rk4(0.0, 0.0, t);
                let (ep0, ep1) = self.rk4(1.0, 0.0, t);
                let (er0, er1) = self.rk4(0.0, 1.0, t);
                Affine2 {
                    m: [[ep0 - c0, er0 - c0], [ep1 - c1, er1 - c1]],
                    c: [c0, c1],
                }
            }
        }
    }

    #[inline]
    pub fn advance(&self, p: f64, r: f64, t: f64) -> (f64, f64) {
        if t == 0.0 {
            return (p, r);
        }
        self.propagator(t).apply(p, r)
    }

    fn rk4(&self, mut p: f64, mut r: f64, t: f64) -> (f64, f64) {
        if t <= 0.0 {
            return (p, r);
        }
        let steps = (t / RK4_MAX_STEP).ceil().max(1.0) as usize;
        let h = t / steps as f64;
        for _ in 0..steps {
            let k1 = self.rates(p, r);
            let k2 = self.rates(p + 0.5 * h * k1.0, r + 0.5 * h * k1.1);
            let k3 = self.rates(p + 0.5 * h * k2.0, r + 0.5 * h * k2.1);
            let k4 = self.rates(p + h * k3.0, r + h * k3.1);
            p += h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
            r += h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
        }
        (p, r)
    }
}

/// `(exp(l t) - 1) / l`, continuous at `l = 0`.
#[inline]
fn phi1(l: f64, t: f64) -> f64 {
    let x = l * t;
    if x.abs() < 1e-12 {
        t
    } else {
        x.exp_m1() / l
    }
}
