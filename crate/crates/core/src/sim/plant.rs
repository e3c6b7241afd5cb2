//! Continuous-time plants, their Jacobians and zero-order-hold discretization.

use nalgebra::{DMatrix, DVector};

/// Mass-spring-damper with a hardening spring `kx + ka²x³`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MsdParams {
    pub mass: f64,
    pub damping: f64,
    pub stiffness: f64,
    pub hardening: f64,
}

impl MsdParams {
    pub const TABLE: MsdParams = MsdParams {
        mass: 1.0,
        damping: 1.6,
        stiffness: 1.0,
        hardening: 0.2,
    };
}

/// Plant dynamics `ẋ = f(x, u) + w`.
#[derive(Clone, Debug, PartialEq)]
pub enum PlantModel {
    Msd(MsdParams),
    /// Planar vehicle with state `(p_x, p_y, θ)` and input `(v, ω)`.
    Unicycle,
    /// `ẋ = A_c x + B_c u`.
    Linear { a: DMatrix<f64>, b: DMatrix<f64> },
}

pub fn msd_derivative(x: &DVector<f64>, u: f64, w: &DVector<f64>, p: &MsdParams) -> DVector<f64> {
    let (pos, vel) = (x[0], x[1]);
    let spring = p.stiffness * pos + p.stiffness * p.hardening * p.hardening * pos.powi(3);
    DVector::from_vec(vec![vel, (u - p.damping * vel - spring) / p.mass]) + w
}

pub fn unicycle_derivative(x: &DVector<f64>, u: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
    let th = x[2];
    DVector::from_vec(vec![u[0] * th.cos(), u[0] * th.sin(), u[1]]) + w
}

impl PlantModel {
    pub fn state_dim(&self) -> usize {
        match self {
            PlantModel::Msd(_) => 2,
            PlantModel::Unicycle => 3,
            PlantModel::Linear { a, .. } => a.nrows(),
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            PlantModel::Msd(_) => 1,
            PlantModel::Unicycle => 2,
            PlantModel::Linear { b, .. } => b.ncols(),
        }
    }

    pub fn derivative(&self, x: &DVector<f64>, u: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        match self {
            PlantModel::Msd(p) => msd_derivative(x, u[0], w, p),
            PlantModel::Unicycle => unicycle_derivative(x, u, w),
            PlantModel::Linear { a, b } => a * x + b * u + w,
        }
    }

    /// Jacobians `(∂f/∂x, ∂f/∂u)` at an operating point.
    pub fn linearize(&self, x: &DVector<f64>, u: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        match self {
            PlantModel::Msd(p) => {
                let dspring = p.stiffness + 3.0 * p.stiffness * p.hardening * p.hardening * x[0] * x[0];
                let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -dspring / p.mass, -p.damping / p.mass]);
                let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0 / p.mass]);
                (a, b)
            }
            PlantModel::Unicycle => {
                let (s, c) = x[2].sin_cos();
                let v = u[0];
                #[rustfmt::skip]
                let a = DMatrix::from_row_slice(3, 3, &[
                    0.0, 0.0, -v * s,
                    0.0, 0.0, v * c,
                    0.0, 0.0, 0.0,
                ]);
                #[rustfmt::skip]
                let b = DMatrix::from_row_slice(3, 2, &[
                    c, 0.0,
                    s, 0.0,
                    0.0, 1.0,
                ]);
                (a, b)
            }
            PlantModel::Linear { a, b } => (a.clone(), b.clone()),
        }
    }

    /// One sampling period of the true plant with inputs and disturbance held
    /// constant, integrated by classical RK4 on `substeps` equal steps.
    pub fn propagate(
        &self,
        x: &DVector<f64>,
        u: &DVector<f64>,
        w: &DVector<f64>,
        ts: f64,
        substeps: usize,
    ) -> DVector<f64> {
        let h = ts / substeps as f64;
        let mut x = x.clone();
        for _ in 0..substeps {
            let k1 = self.derivative(&x, u, w);
            let k2 = self.derivative(&(&x + &k1 * (0.5 * h)), u, w);
            let k3 = self.derivative(&(&x + &k2 * (0.5 * h)), u, w);
            let k4 = self.derivative(&(&x + &k3 * h), u, w);
            x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        }
        x
    }
}

/// Zero-order-hold discretization.
#[derive(Clone, Debug, PartialEq)]
pub struct Discretized {
    /// `e^{A_c T}`.
    pub a: DMatrix<f64>,
    /// `∫₀^T e^{A_c s} ds · B_c`.
    pub b: DMatrix<f64>,
    /// `∫₀^T e^{A_c s} ds`, the map of a held additive disturbance.
    pub f: DMatrix<f64>,
}

/// All three blocks come from one exponential of the augmented matrix
/// `[[A_c, B_c, I], [0, 0, 0], [0, 0, 0]]·T`.
pub fn discretize_zoh(a_c: &DMatrix<f64>, b_c: &DMatrix<f64>, ts: f64) -> Discretized {
    assert!(ts > 0.0, "sampling period must be positive");
    let n = a_c.nrows();
    let m = b_c.ncols();
    let size = 2 * n + m;
    let mut aug = DMatrix::zeros(size, size);
    aug.view_mut((0, 0), (n, n)).copy_from(a_c);
    aug.view_mut((0, n), (n, m)).copy_from(b_c);
    aug.view_mut((0, n + m), (n, n)).fill_with_identity();
    let e = (aug * ts).exp();
    Discretized {
        a: e.view((0, 0), (n, n)).into_owned(),
        b: e.view((0, n), (n, m)).into_owned(),
        f: e.view((0, n + m), (n, n)).into_owned(),
    }
}
