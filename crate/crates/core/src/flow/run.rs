use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::diagnostics::{gram_schmidt_frame, FunctionalSnapshot};
use super::state::{Dynamics, FlowState};
use crate::error::{Error, Result};
use crate::geometry::{AnalyticFamily, ContinuumState, Resolution};
use crate::spectral::{assemble_forms, lowest_eigenpairs, SpectralResult, DEFAULT_TOLERANCE};

/// Integration and output settings of a flow run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowConfig {
    /// Output spacing unit; the integrator may subdivide it.
    pub dt: f64,
    pub max_dt: f64,
    pub horizon: f64,
    /// Record every this many `dt` steps (the final time is always kept).
    pub output_every: usize,
    /// Highest Fourier mode kept in circle fields.
    pub mode_cutoff: usize,
    /// Number of nonzero eigenvalues tracked.
    pub eigen_count: usize,
    pub solver_tolerance: f64,
    /// Step-doubling error bound that triggers halving.
    pub step_tolerance: f64,
    pub max_halvings: u32,
    /// Number of eigenfunctions at t₀ evolved by `u_t = ℒu + ½u`.
    pub tracked_scalars: usize,
    /// Relative floor below which circle Fourier coefficients are dropped.
    pub noise_floor: f64,
    /// Allowed growth of circle fluctuation energy before aborting.
    pub growth_limit: f64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            max_dt: 1e-2,
            horizon: 1.0,
            output_every: 1,
            mode_cutoff: 32,
            eigen_count: 2,
            solver_tolerance: DEFAULT_TOLERANCE,
            step_tolerance: 1e-9,
            max_halvings: 10,
            tracked_scalars: 0,
            noise_floor: 1e-13,
            growth_limit: 1e8,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(what.to_string()));
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return bad("dt must be positive");
        }
        if self.dt > self.max_dt {
            return bad("dt exceeds the configured maximum");
        }
        if !(self.horizon >= 0.0) || !self.horizon.is_finite() {
            return bad("horizon must be finite and nonnegative");
        }
        if self.output_every == 0 {
            return bad("output_every must be at least 1");
        }
        if self.mode_cutoff == 0 {
            return bad("mode_cutoff must be at least 1");
        }
        if self.eigen_count == 0 {
            return bad("eigen_count must be at least 1");
        }
        if self.tracked_scalars > self.eigen_count {
            return bad("tracked_scalars cannot exceed eigen_count");
        }
        if !(self.solver_tolerance > 0.0) || !(self.step_tolerance > 0.0) {
            return bad("tolerances must be positive");
        }
        if !(self.noise_floor >= 0.0) || !(self.growth_limit > 1.0) {
            return bad("noise_floor must be ≥ 0 and growth_limit > 1");
        }
        Ok(())
    }

    /// Number of steps and the step actually used: at most `dt`, landing
    /// on the horizon, with a whole number of output intervals so that
    /// outputs are equally spaced.
    pub fn steps(&self) -> (usize, f64) {
        if self.horizon == 0.0 {
            return (0, self.dt);
        }
        let span = self.dt * self.output_every as f64;
        let chunks = (self.horizon / span * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        let n = chunks * self.output_every;
        (n, self.horizon / n as f64)
    }
}

/// Time series of states, spectra and tracked scalars at output times.
#[derive(Debug, Clone)]
pub struct FlowTrajectory {
    pub config: FlowConfig,
    pub resolution: Resolution,
    pub states: Vec<FlowState>,
    pub spectra: Vec<SpectralResult>,
    /// `scalars[output][i]` are node samples of the i-th tracked scalar.
    pub scalars: Vec<Vec<Vec<f64>>>,
    pub functionals: Vec<FunctionalSnapshot>,
    /// Closed-form eigenvalues when the run started from a family.
    pub analytic: Option<Vec<Vec<f64>>>,
    pub internal_steps: usize,
    pub output_dt: f64,
}

impl FlowTrajectory {
    pub fn times(&self) -> Vec<f64> {
        self.states.iter().map(FlowState::time).collect()
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn t0(&self) -> f64 {
        self.states[0].time()
    }

    pub fn t1(&self) -> f64 {
        self.states[self.states.len() - 1].time()
    }

    /// Series of `λ_k` over output times.
    pub fn lambda(&self, k: usize) -> Vec<f64> {
        self.spectra.iter().map(|s| s.eigenvalues[k]).collect()
    }

    pub fn volumes(&self) -> Vec<f64> {
        self.states.iter().map(FlowState::volume).collect()
    }

    /// Index of the output time closest to `t`.
    pub fn index_of(&self, t: f64) -> usize {
        let mut best = 0;
        for (i, s) in self.states.iter().enumerate() {
            if (s.time() - t).abs() < (self.states[best].time() - t).abs() {
                best = i;
            }
        }
        best
    }
}

/// One explicit RK4 step of the truncated flow, followed by the cutoff and
/// noise filter and the breakdown checks.
pub fn step_modified_flow(state: &FlowState, dt: f64, config: &FlowConfig) -> Result<FlowState> {
    if !(dt > 0.0) || dt > config.max_dt {
        return Err(Error::Usage(format!(
            "step {dt} outside (0, {}]",
            config.max_dt
        )));
    }
    let dynamics = Dynamics {
        grid: state.grid(),
        cutoff: config.mode_cutoff,
        scalars: 0,
    };
    let y = dynamics.pack(state.geometry(), &[]);
    let mut next = dynamics.rk4(&y, state.time(), dt)?;
    dynamics.filter(&mut next, config.noise_floor);
    let (geometry, _) = dynamics.unpack(&next);
    Ok(FlowState::new(dynamics.manifold(geometry, state.time() + dt)?))
}

struct Integrator<'a> {
    dynamics: Dynamics<'a>,
    config: &'a FlowConfig,
    baseline: f64,
    steps: usize,
}

impl Integrator<'_> {
    fn advance(&mut self, y: &[f64], t: f64, h: f64, depth: u32) -> Result<Vec<f64>> {
        let full = self.dynamics.rk4(y, t, h)?;
        let mid = self.dynamics.rk4(y, t, 0.5 * h)?;
        let half = self.dynamics.rk4(&mid, t + 0.5 * h, 0.5 * h)?;
        let err = full
            .iter()
            .zip(&half)
            .map(|(a, b)| (a - b).abs() / (1.0 + b.abs()))
            .fold(0.0, f64::max);
        if err <= self.config.step_tolerance || depth >= self.config.max_halvings {
            let mut out = half;
            self.dynamics.filter(&mut out, self.config.noise_floor);
            self.monitor(&out, t + h)?;
            self.steps += 1;
            return Ok(out);
        }
        let left = self.advance(y, t, 0.5 * h, depth + 1)?;
        self.advance(&left, t + 0.5 * h, 0.5 * h, depth + 1)
    }

    fn monitor(&self, y: &[f64], t: f64) -> Result<()> {
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Stability {
                time: t,
                reason: "non-finite state".into(),
            });
        }
        let (mean, fluct, high) = self.dynamics.mode_energy(y);
        let floor = self.config.noise_floor.powi(2) * mean.max(1.0);
        if fluct > self.config.growth_limit * self.baseline.max(floor) {
            return Err(Error::Stability {
                time: t,
                reason: format!(
                    "circle mode energy grew by more than {:e}",
                    self.config.growth_limit
                ),
            });
        }
        if high > 1e-2 * fluct.max(floor) && high > floor {
            return Err(Error::Stability {
                time: t,
                reason: "energy accumulating near the mode cutoff".into(),
            });
        }
        Ok(())
    }
}

/// Integrates `initial` together with `scalars`, calling `on_output` at every
/// output time.
pub(crate) fn integrate(
    initial: &FlowState,
    scalars: Vec<Vec<f64>>,
    config: &FlowConfig,
    mut on_output: impl FnMut(&FlowState, &[Vec<f64>]) -> Result<()>,
) -> Result<usize> {
    config.validate()?;
    for s in &scalars {
        initial.manifold().check_field(s, "scalar")?;
    }
    let dynamics = Dynamics {
        grid: initial.grid(),
        cutoff: config.mode_cutoff,
        scalars: scalars.len(),
    };
    let mut y = dynamics.pack(initial.geometry(), &scalars);
    dynamics.filter(&mut y, config.noise_floor);
    let (_, fluct, _) = dynamics.mode_energy(&y);
    let mut integ = Integrator {
        dynamics,
        config,
        baseline: fluct,
        steps: 0,
    };
    on_output(initial, &scalars)?;
    let (n, dt) = config.steps();
    let t0 = initial.time();
    for step in 1..=n {
        let t = t0 + (step - 1) as f64 * dt;
        let (geometry, _) = integ.dynamics.unpack(&y);
        let h_max = 2.5 / integ.dynamics.spectral_radius(&geometry).max(1e-300);
        let sub = (dt / h_max).ceil().max(1.0) as usize;
        let h = dt / sub as f64;
        for j in 0..sub {
            y = integ.advance(&y, t + j as f64 * h, h, 0)?;
        }
        if step % config.output_every == 0 || step == n {
            let time = t0 + step as f64 * dt;
            let (geometry, fields) = integ.dynamics.unpack(&y);
            let state = FlowState::new(integ.dynamics.manifold(geometry, time)?);
            on_output(&state, &fields)?;
        }
    }
    Ok(integ.steps)
}

/// Runs the flow from `initial`, recording spectra, tracked scalars and
/// their functionals at every output time.
pub fn run_flow(initial: &ContinuumState, resolution: Resolution, config: &FlowConfig) -> Result<FlowTrajectory> {
    config.validate()?;
    let start = FlowState::from_continuum(initial, resolution)?;
    let spectrum0 = spectrum(&start, config)?;
    let scalars: Vec<Vec<f64>> = (1..=config.tracked_scalars)
        .map(|i| spectrum0.eigenfunctions[i].clone())
        .collect();
    let mut traj = FlowTrajectory {
        config: config.clone(),
        resolution,
        states: Vec::new(),
        spectra: Vec::new(),
        scalars: Vec::new(),
        functionals: Vec::new(),
        analytic: None,
        internal_steps: 0,
        output_dt: config.steps().1 * config.output_every as f64,
    };
    let mut first = Some(spectrum0);
    traj.internal_steps = integrate(&start, scalars, config, |state, fields| {
        let spec = match first.take() {
            Some(s) => s,
            None => spectrum(state, config)?,
        };
        traj.functionals.push(FunctionalSnapshot::compute(fields, state.manifold())?);
        traj.states.push(state.clone());
        traj.spectra.push(spec);
        traj.scalars.push(fields.to_vec());
        Ok(())
    })?;
    Ok(traj)
}

/// Runs the flow from a closed-form family evaluated at its reference time
/// and attaches the closed-form spectrum at every output time.
pub fn run_family(family: &AnalyticFamily, resolution: Resolution, config: &FlowConfig) -> Result<FlowTrajectory> {
    let initial = family.evaluate(family.t0)?;
    let mut traj = run_flow(&initial, resolution, config)?;
    let analytic = traj
        .times()
        .iter()
        .map(|&t| family.eigenvalues(t, config.eigen_count + 1))
        .collect::<Result<Vec<_>>>()?;
    traj.analytic = Some(analytic);
    Ok(traj)
}

fn spectrum(state: &FlowState, config: &FlowConfig) -> Result<SpectralResult> {
    let forms = assemble_forms(state.manifold())?;
    lowest_eigenpairs(&forms, config.eigen_count, config.solver_tolerance)
}

/// Evolves `u0` by `u_t = ℒu + ½u` along the geometry of `traj`, returning
/// samples at the trajectory's output times.
pub fn evolve_scalar(u0: &[f64], traj: &FlowTrajectory) -> Result<Vec<Vec<f64>>> {
    let Some(start) = traj.states.first() else {
        return Err(Error::Usage("empty trajectory".into()));
    };
    let mut out = Vec::with_capacity(traj.len());
    integrate(start, vec![u0.to_vec()], &traj.config, |_, fields| {
        out.push(fields[0].clone());
        Ok(())
    })?;
    Ok(out)
}

/// Mixing matrices of the tracked scalars at each output time.
pub fn mixing_series(traj: &FlowTrajectory) -> Result<Vec<DMatrix<f64>>> {
    traj.scalars
        .iter()
        .zip(&traj.states)
        .map(|(fields, state)| gram_schmidt_frame(fields, state.manifold()).map(|f| f.mixing))
        .collect()
}
