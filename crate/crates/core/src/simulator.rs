//! Explicit RK4 integration of the semi-discrete nonlocal SIS system
//!
//! ```text
//! S' = d_S(∫J(x−y)S(y)dy − S∫J(x−y)dy) − βSI/(m+S+I) + γI
//! I' = d_I(∫J(x−y)I(y)dy − I∫J(x−y)dy) + βSI/(m+S+I) − γI
//! ```
//!
//! The quadrature of `S + I` is conserved to rounding for any step size;
//! nonnegativity needs `dt` below [`Simulator::stable_dt`].

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{kernel_matrix, kernel_row_masses};
use crate::sis::SisParameters;

/// Densities below `-NEGATIVE_TOL` abort a run.
pub const NEGATIVE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationState {
    pub s: DVector<f64>,
    pub i: DVector<f64>,
    pub t: f64,
    pub dt: f64,
    /// `∫(S + I)` of the initial data.
    pub total0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub t: f64,
    pub integral_s: f64,
    pub integral_i: f64,
    pub min_i: f64,
    pub max_i: f64,
    /// `|∫(S+I) − total0| / total0`.
    pub drift: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub rows: Vec<TrajectoryRow>,
    /// Mean total density of the initial data.
    pub k_total: f64,
    pub final_state: SimulationState,
}

impl Trajectory {
    pub fn max_drift(&self) -> f64 {
        self.rows.iter().map(|r| r.drift).fold(0.0, f64::max)
    }
}

/// Precomputed dispersal data for repeated steps.
#[derive(Debug, Clone)]
pub struct Simulator<'a> {
    params: &'a SisParameters,
    kernel: DMatrix<f64>,
    masses: DVector<f64>,
}

impl<'a> Simulator<'a> {
    pub fn new(params: &'a SisParameters) -> Result<Self> {
        params.validate()?;
        Ok(Simulator {
            params,
            kernel: kernel_matrix(&params.grid, &params.kernel)?,
            masses: kernel_row_masses(&params.grid, &params.kernel)?,
        })
    }

    /// `0.1 / (max(d_S, d_I)·max row mass + max γ + max β)`.
    pub fn stable_dt(&self) -> f64 {
        let p = self.params;
        let rate = p.d_s.max(p.d_i) * self.masses.max() + p.gamma.max() + p.beta.max();
        if rate > 0.0 {
            0.1 / rate
        } else {
            f64::INFINITY
        }
    }

    pub fn integral(&self, v: &DVector<f64>) -> f64 {
        self.params.grid.integrate(v.as_slice())
    }

    /// Initial state with `dt` checked against [`Self::stable_dt`].
    pub fn initial_state(&self, s: DVector<f64>, i: DVector<f64>, dt: f64) -> Result<SimulationState> {
        let n = self.params.grid.len();
        if s.len() != n || i.len() != n {
            return Err(Error::SizeMismatch(format!(
                "initial data has lengths ({}, {}), grid has {n} nodes",
                s.len(),
                i.len()
            )));
        }
        if let Some(j) = s.iter().chain(i.iter()).position(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::InvalidField(format!(
                "initial densities must be nonnegative and finite (entry {j})"
            )));
        }
        let bound = self.stable_dt();
        if !(dt > 0.0 && dt <= bound) {
            return Err(Error::InvalidParameter {
                name: "dt",
                reason: format!("must lie in (0, {bound:e}], got {dt}"),
            });
        }
        let total0 = self.integral(&s) + self.integral(&i);
        Ok(SimulationState {
            s,
            i,
            t: 0.0,
            dt,
            total0,
        })
    }

    fn dispersal(&self, d: f64, u: &DVector<f64>) -> DVector<f64> {
        if d == 0.0 {
            return DVector::zeros(u.len());
        }
        (&self.kernel * u - self.masses.component_mul(u)) * d
    }

    /// Time derivatives `(S', I')`.
    pub fn rhs(&self, s: &DVector<f64>, i: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let p = self.params;
        let n = s.len();
        let mut ds = self.dispersal(p.d_s, s);
        let mut di = self.dispersal(p.d_i, i);
        for j in 0..n {
            let den = p.m_sat.samples()[j] + s[j] + i[j];
            let incidence = if den > 0.0 {
                p.beta.samples()[j] * s[j] * i[j] / den
            } else {
                0.0
            };
            let recovery = p.gamma.samples()[j] * i[j];
            ds[j] += recovery - incidence;
            di[j] += incidence - recovery;
        }
        (ds, di)
    }

    /// One classical RK4 step.
    pub fn step(&self, state: &SimulationState) -> Result<SimulationState> {
        let h = state.dt;
        let (s, i) = (&state.s, &state.i);
        let (k1s, k1i) = self.rhs(s, i);
        let (k2s, k2i) = self.rhs(&(s + &k1s * (h / 2.0)), &(i + &k1i * (h / 2.0)));
        let (k3s, k3i) = self.rhs(&(s + &k2s * (h / 2.0)), &(i + &k2i * (h / 2.0)));
        let (k4s, k4i) = self.rhs(&(s + &k3s * h), &(i + &k3i * h));
        let mut s_new = s + (k1s + k2s * 2.0 + k3s * 2.0 + k4s) * (h / 6.0);
        let mut i_new = i + (k1i + k2i * 2.0 + k3i * 2.0 + k4i) * (h / 6.0);
        for v in [&mut s_new, &mut i_new] {
            for (j, x) in v.iter_mut().enumerate() {
                if *x < -NEGATIVE_TOL {
                    return Err(Error::DtTooLarge { node: j, value: *x });
                }
                if *x < 0.0 {
                    *x = 0.0;
                }
            }
        }
        Ok(SimulationState {
            s: s_new,
            i: i_new,
            t: state.t + h,
            dt: h,
            total0: state.total0,
        })
    }

    fn row(&self, state: &SimulationState) -> TrajectoryRow {
        let is = self.integral(&state.s);
        let ii = self.integral(&state.i);
        let drift = if state.total0 > 0.0 {
            ((is + ii) - state.total0).abs() / state.total0
        } else {
            0.0
        };
        TrajectoryRow {
            t: state.t,
            integral_s: is,
            integral_i: ii,
            min_i: state.i.min(),
            max_i: state.i.max(),
            drift,
        }
    }

    /// Integrates to `t_end` with steps of at most `dt`, shortened evenly so
    /// the last step lands on `t_end`. One row is recorded per step.
    pub fn run(&self, s0: DVector<f64>, i0: DVector<f64>, t_end: f64, dt: f64) -> Result<Trajectory> {
        if !(t_end > 0.0 && t_end.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "t_end",
                reason: format!("must be positive, got {t_end}"),
            });
        }
        let steps = (t_end / dt - 1e-9).ceil().max(1.0) as usize;
        let h = t_end / steps as f64;
        let mut state = self.initial_state(s0, i0, h.min(dt))?;
        state.dt = h;
        let k_total = state.total0 / self.params.grid.measure();
        let mut rows = Vec::with_capacity(steps + 1);
        rows.push(self.row(&state));
        for k in 1..=steps {
            state = self.step(&state)?;
            state.t = k as f64 * h;
            rows.push(self.row(&state));
        }
        Ok(Trajectory {
            rows,
            k_total,
            final_state: state,
        })
    }
}

/// One RK4 step without reusing precomputed dispersal data.
pub fn step(state: &SimulationState, params: &SisParameters) -> Result<SimulationState> {
    Simulator::new(params)?.step(state)
}

/// Integrates from `(S₀, I₀)` to `t_end`.
pub fn run(s0: DVector<f64>, i0: DVector<f64>, params: &SisParameters, t_end: f64, dt: f64) -> Result<Trajectory> {
    Simulator::new(params)?.run(s0, i0, t_end, dt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::ScalarField;
    use crate::grid::{build_grid, Bounds, Kernel};

    fn params(beta: f64, gamma: f64, m: f64) -> SisParameters {
        let g = build_grid(Bounds::interval(0.0, 1.0), 16).unwrap();
        SisParameters::new(
            g.clone(),
            Kernel::tent(0.3, 1).unwrap(),
            0.5,
            0.2,
            ScalarField::constant(&g, beta).unwrap(),
            ScalarField::constant(&g, gamma).unwrap(),
            ScalarField::constant(&g, m).unwrap(),
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn disease_free_state_is_fixed() {
        let p = params(3.0, 1.0, 0.5);
        let sim = Simulator::new(&p).unwrap();
        let st = sim
            .initial_state(DVector::from_element(16, 1.0), DVector::zeros(16), sim.stable_dt())
            .unwrap();
        let next = sim.step(&st).unwrap();
        assert!((next.s.add_scalar(-1.0)).amax() < 1e-14);
        assert_eq!(next.i.amax(), 0.0);
    }

    #[test]
    fn rejects_large_dt() {
        let p = params(3.0, 1.0, 0.5);
        let sim = Simulator::new(&p).unwrap();
        let dt = 2.0 * sim.stable_dt();
        assert!(sim.initial_state(DVector::from_element(16, 1.0), DVector::zeros(16), dt).is_err());
    }

    #[test]
    fn incidence_vanishes_when_empty_and_unsaturated() {
        let p = params(3.0, 1.0, 0.0);
        let sim = Simulator::new(&p).unwrap();
        let (ds, di) = sim.rhs(&DVector::zeros(16), &DVector::zeros(16));
        assert_eq!(ds.amax(), 0.0);
        assert_eq!(di.amax(), 0.0);
    }

    #[test]
    fn conserves_total() {
        let p = params(3.0, 1.0, 0.5);
        let sim = Simulator::new(&p).unwrap();
        let s0 = DVector::from_fn(16, |j, _| 1.0 + 0.3 * (j as f64 * 0.7).sin());
        let i0 = DVector::from_fn(16, |j, _| 0.01 * (1.0 + (j as f64).cos()));
        let traj = sim.run(s0, i0, 5.0, sim.stable_dt()).unwrap();
        assert!(traj.max_drift() < 1e-12);
        assert!(traj.rows.iter().all(|r| r.min_i >= 0.0));
        assert!((traj.rows.last().unwrap().t - 5.0).abs() < 1e-12);
    }
}
