//! Controlled Lorenz system: dynamics, fixed-grid RK4 integration, RMSE
//! objectives and an experiment server over the evaluation protocol.

use std::fmt;
use std::io::Write;
use std::net::TcpListener;
use std::str::FromStr;

use rayon::prelude::*;

use crate::assessment::FitnessFunction;
use crate::expr::{build_pset, parse_prefix, Constants, ExprError, Expression, PrimitiveSet, Program};
use crate::protocol::{serve, ConfigReply, ExperimentHandler, ProtocolError};

pub type State = [f64; 3];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LorenzParams {
    /// Prandtl number.
    pub s: f64,
    /// Rayleigh number.
    pub r: f64,
    pub b: f64,
}

impl Default for LorenzParams {
    fn default() -> Self {
        Self {
            s: 10.0,
            r: 28.0,
            b: 8.0 / 3.0,
        }
    }
}

/// Equation receiving the actuation term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Channel {
    Y,
    Z,
    None,
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Channel::Y => "y",
            Channel::Z => "z",
            Channel::None => "none",
        })
    }
}

impl FromStr for Channel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "y" => Ok(Channel::Y),
            "z" => Ok(Channel::Z),
            "none" => Ok(Channel::None),
            _ => Err(format!("unknown channel `{s}` (expected y, z or none)")),
        }
    }
}

/// Simulation setup. Samples are taken on `n` evenly spaced points of
/// `[t0, tn]`; each sample interval is integrated with `substeps` RK4 steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimSetup {
    pub params: LorenzParams,
    pub initial_state: State,
    pub t0: f64,
    pub tn: f64,
    pub n: usize,
    pub channel: Channel,
    pub substeps: usize,
}

impl Default for SimSetup {
    fn default() -> Self {
        Self {
            params: LorenzParams::default(),
            initial_state: [10.0, 1.0, 5.0],
            t0: 0.0,
            tn: 100.0,
            n: 5000,
            channel: Channel::Y,
            substeps: 4,
        }
    }
}

impl SimSetup {
    pub fn with_channel(channel: Channel) -> Self {
        Self {
            channel,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let finite = [self.params.s, self.params.r, self.params.b, self.t0, self.tn]
            .iter()
            .chain(&self.initial_state)
            .all(|v| v.is_finite());
        if !finite {
            return Err("simulation parameters must be finite".into());
        }
        if self.tn <= self.t0 {
            return Err(format!("tn ({}) must exceed t0 ({})", self.tn, self.t0));
        }
        if self.n < 2 {
            return Err("at least two samples are required".into());
        }
        if self.substeps == 0 {
            return Err("substeps must be positive".into());
        }
        Ok(())
    }

    /// Sample spacing.
    pub fn sample_step(&self) -> f64 {
        (self.tn - self.t0) / (self.n - 1) as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<State>,
}

impl Trajectory {
    pub fn final_state(&self) -> State {
        *self.states.last().expect("trajectories are never empty")
    }

    /// Root mean square of each component over all samples; `+inf` for a
    /// component that went non-finite.
    pub fn rmse(&self) -> [f64; 3] {
        let mut sums = [0.0; 3];
        for s in &self.states {
            for (acc, v) in sums.iter_mut().zip(s) {
                *acc += v * v;
            }
        }
        sums.map(|sum| {
            let r = (sum / self.states.len() as f64).sqrt();
            if r.is_finite() {
                r
            } else {
                f64::INFINITY
            }
        })
    }

    /// Writes `t,x,y,z` rows with a header line.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "x", "y", "z"])?;
        for (t, s) in self.times.iter().zip(&self.states) {
            w.write_record([t, &s[0], &s[1], &s[2]].map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Time derivative of the controlled system; `u` enters the `channel`
/// equation additively.
pub fn rhs(state: State, params: &LorenzParams, u: f64, channel: Channel) -> State {
    let [x, y, z] = state;
    let mut d = [
        params.s * (y - x),
        params.r * x - y - x * z,
        x * y - params.b * z,
    ];
    match channel {
        Channel::Y => d[1] += u,
        Channel::Z => d[2] += u,
        Channel::None => {}
    }
    d
}

fn axpy(a: f64, x: &State, y: &State) -> State {
    [y[0] + a * x[0], y[1] + a * x[1], y[2] + a * x[2]]
}

/// One classical fourth-order Runge-Kutta step.
pub fn rk4_step<F: FnMut(&State) -> State>(f: &mut F, state: &State, h: f64) -> State {
    let k1 = f(state);
    let k2 = f(&axpy(h / 2.0, &k1, state));
    let k3 = f(&axpy(h / 2.0, &k2, state));
    let k4 = f(&axpy(h, &k3, state));
    std::array::from_fn(|i| state[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
}

/// Integrates the system under `control(x, y, z)`. Once the state turns
/// non-finite the remaining samples are NaN.
pub fn integrate<C: FnMut(f64, f64, f64) -> f64>(setup: &SimSetup, mut control: C) -> Trajectory {
    let params = setup.params;
    let channel = setup.channel;
    let mut f = |s: &State| {
        let u = if channel == Channel::None { 0.0 } else { control(s[0], s[1], s[2]) };
        rhs(*s, &params, u, channel)
    };
    let dt = setup.sample_step();
    let h = dt / setup.substeps as f64;
    let mut times = Vec::with_capacity(setup.n);
    let mut states = Vec::with_capacity(setup.n);
    let mut state = setup.initial_state;
    times.push(setup.t0);
    states.push(state);
    let mut finite = state.iter().all(|v| v.is_finite());
    for i in 1..setup.n {
        times.push(setup.t0 + i as f64 * dt);
        if finite {
            for _ in 0..setup.substeps {
                state = rk4_step(&mut f, &state, h);
            }
            finite = state.iter().all(|v| v.is_finite());
        }
        states.push(if finite { state } else { [f64::NAN; 3] });
    }
    // Land exactly on tn regardless of rounding in the grid.
    if let Some(t) = times.last_mut() {
        *t = setup.tn;
    }
    Trajectory { times, states }
}

/// The Lorenz primitive set: arithmetic, `Exp` and `Sin` over `x, y, z`
/// plus one symbolic constant `k`.
pub fn lorenz_pset() -> PrimitiveSet {
    build_pset(
        &[("Add", 2), ("Sub", 2), ("Mul", 2), ("Neg", 1), ("Exp", 1), ("Sin", 1)],
        &["x", "y", "z"],
        &["k"],
    )
    .expect("static primitive set is valid")
}

pub const OBJECTIVE_NAMES: [&str; 4] = ["rmse_x", "rmse_y", "rmse_z", "length"];

/// Default value for constants not given explicitly.
pub const DEFAULT_CONSTANT: f64 = 1.0;

/// Simulates `expr` as the control law (constants missing from `constants`
/// take [`DEFAULT_CONSTANT`]) and returns the three RMSE values and the
/// expression length.
pub fn objectives(expr: &Expression, constants: &Constants, setup: &SimSetup) -> Result<[f64; 4], ExprError> {
    let mut all = expr.default_constants(DEFAULT_CONSTANT);
    all.extend(constants.iter().map(|(k, v)| (k.clone(), *v)));
    let program = Program::compile(expr, &["x", "y", "z"], &all)?;
    let [gx, gy, gz] = simulate(&program, setup).rmse();
    Ok([gx, gy, gz, expr.len() as f64])
}

/// Trajectory under a compiled control law.
pub fn simulate(program: &Program, setup: &SimSetup) -> Trajectory {
    integrate(setup, |x, y, z| program.eval3(x, y, z))
}

/// Trajectory of `expr` with constants resolved as in [`objectives`].
pub fn trajectory(expr: &Expression, constants: &Constants, setup: &SimSetup) -> Result<Trajectory, ExprError> {
    let mut all = expr.default_constants(DEFAULT_CONSTANT);
    all.extend(constants.iter().map(|(k, v)| (k.clone(), *v)));
    Ok(simulate(&Program::compile(expr, &["x", "y", "z"], &all)?, setup))
}

/// [`objectives`] as a fitness function. Only the RMSE values take part in
/// constant optimization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LorenzObjectives {
    pub setup: SimSetup,
}

impl FitnessFunction for LorenzObjectives {
    fn objective_names(&self) -> Vec<String> {
        OBJECTIVE_NAMES.iter().map(|s| s.to_string()).collect()
    }

    fn evaluate(&self, expr: &Expression, constants: &Constants) -> Result<Vec<f64>, String> {
        objectives(expr, constants, &self.setup)
            .map(Vec::from)
            .map_err(|e| e.to_string())
    }

    fn residual_objectives(&self) -> Vec<usize> {
        vec![0, 1, 2]
    }
}

/// Serves Lorenz simulations to protocol clients.
pub struct LorenzHandler {
    pub setup: SimSetup,
    pset: PrimitiveSet,
    /// Evaluate batch entries concurrently.
    pub parallel: bool,
}

impl LorenzHandler {
    pub fn new(setup: SimSetup) -> Self {
        Self {
            setup,
            pset: lorenz_pset(),
            parallel: false,
        }
    }

    fn evaluate(&self, text: &str) -> Result<Vec<f64>, String> {
        let expr = parse_prefix(text, &self.pset).map_err(|e| e.to_string())?;
        objectives(&expr, &Constants::new(), &self.setup)
            .map(Vec::from)
            .map_err(|e| e.to_string())
    }
}

impl ExperimentHandler for LorenzHandler {
    fn on_config(&mut self) -> ConfigReply {
        ConfigReply {
            primitives: self
                .pset
                .arities()
                .into_iter()
                .map(|(n, a)| (n.to_string(), a))
                .collect(),
            constants: self.pset.constants().iter().map(|c| c.to_string()).collect(),
            options: Default::default(),
        }
    }

    fn on_experiment(&mut self, expressions: &[String]) -> Vec<Result<Vec<f64>, String>> {
        if self.parallel {
            expressions.par_iter().map(|e| self.evaluate(e)).collect()
        } else {
            expressions.iter().map(|e| self.evaluate(e)).collect()
        }
    }

    fn objective_count(&self) -> usize {
        OBJECTIVE_NAMES.len()
    }

    fn on_shutdown(&mut self) {
        log::info!("shutdown requested; experiment stopped");
    }
}

/// Serves the Lorenz experiment on `listener` until a client sends
/// SHUTDOWN.
pub fn lorenz_server(listener: &TcpListener, setup: SimSetup, parallel: bool) -> Result<(), ProtocolError> {
    let mut handler = LorenzHandler::new(setup);
    handler.parallel = parallel;
    serve(listener, &mut handler)
}
