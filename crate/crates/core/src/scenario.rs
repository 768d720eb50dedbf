//! Scenario files.
//!
//! A scenario is a TOML document with the sections `[game]`,
//! `[topology]`, `[schedule]`, `[initial]` and an optional `[integrator]`.
//! Unknown keys are rejected. Player and node indices are zero-based. See
//! `scenarios/power5.toml` for a complete example and the README for the
//! full key reference.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::dynamics::{GainSchedule, SeekerState};
use crate::error::{Error, Result};
use crate::game::{Coupling, PlayerCost, QuadraticGame};
use crate::integrator::{IntegratorConfig, QCapPolicy};
use crate::network::Graph;

const POWER5: &str = include_str!("../scenarios/power5.toml");
const POWER5_COUPLED: &str = include_str!("../scenarios/power5-coupled.toml");

/// Names accepted by [`Scenario::builtin`].
pub const BUILTIN_SCENARIOS: [&str; 2] = ["power5", "power5-coupled"];

/// Amplitude used when a seed is given without one.
pub const DEFAULT_AMPLITUDE: f64 = 5.0;

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum OneOrMany {
    One(f64),
    Many(Vec<f64>),
}

impl OneOrMany {
    fn expand(&self, len: usize, key: &str) -> Result<DVector<f64>> {
        match self {
            OneOrMany::One(v) => Ok(DVector::from_element(len, *v)),
            OneOrMany::Many(v) if v.len() == len => Ok(DVector::from_column_slice(v)),
            OneOrMany::Many(v) => Err(Error::Scenario(format!(
                "{key}: expected {len} values, found {}",
                v.len()
            ))),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    name: Option<String>,
    game: GameSection,
    topology: TopologySection,
    schedule: ScheduleSection,
    initial: InitialSection,
    #[serde(default)]
    integrator: IntegratorSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GameSection {
    players: Vec<PlayerSection>,
    /// `C_ij = coupling_scale · I` for every ordered pair with equal dims.
    #[serde(default)]
    coupling_scale: f64,
    #[serde(default)]
    coupling: Vec<CouplingSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlayerSection {
    quad: Option<Vec<Vec<f64>>>,
    quad_diag: Option<Vec<f64>>,
    linear: Vec<f64>,
    constraint: Option<Vec<f64>>,
    offset: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CouplingSection {
    player: usize,
    other: usize,
    matrix: Vec<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TopologySection {
    nodes: usize,
    /// `[i, j]` or `[i, j, weight]`.
    edges: Vec<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScheduleSection {
    tp: f64,
    q0: f64,
    gamma: OneOrMany,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct InitialSection {
    sigma: OneOrMany,
    omega: OneOrMany,
    x: Option<Vec<f64>>,
    seed: Option<u64>,
    amplitude: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct IntegratorSection {
    rel_tol: Option<f64>,
    abs_tol: Option<f64>,
    s_max: Option<f64>,
    max_steps: Option<usize>,
    q_cap: Option<f64>,
    q_cap_policy: Option<String>,
    samples: Option<usize>,
    converge_tol: Option<f64>,
}

/// Where the initial estimates come from.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialEstimates {
    Explicit(DVector<f64>),
    /// Every entry of `X` uniform in `[−amplitude, amplitude]`.
    Random { seed: u64, amplitude: f64 },
}

/// A fully validated scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub game: QuadraticGame,
    pub graph: Graph,
    pub schedule: GainSchedule,
    pub sigma0: DVector<f64>,
    pub omega0: DVector<f64>,
    pub estimates: InitialEstimates,
    pub integrator: IntegratorConfig,
}

fn matrix_from_rows(rows: &[Vec<f64>], key: &str) -> Result<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if r == 0 || rows.iter().any(|row| row.len() != c) {
        return Err(Error::Scenario(format!("{key}: ragged or empty matrix")));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

fn node_index(v: f64, key: &str) -> Result<usize> {
    if v < 0.0 || v.fract() != 0.0 {
        return Err(Error::Scenario(format!("{key}: node index {v} is not a nonnegative integer")));
    }
    Ok(v as usize)
}

impl Scenario {
    /// Parses and validates a scenario document. `origin` names the source
    /// in error messages.
    pub fn from_toml(text: &str, origin: &str) -> Result<Self> {
        let file: ScenarioFile =
            toml::from_str(text).map_err(|e| Error::Scenario(format!("{origin}: {e}")))?;
        Self::from_file(file, origin)
    }

    /// One of [`BUILTIN_SCENARIOS`].
    pub fn builtin(name: &str) -> Result<Self> {
        let text = match name {
            "power5" => POWER5,
            "power5-coupled" => POWER5_COUPLED,
            _ => return Err(Error::Scenario(format!("unknown builtin scenario '{name}'"))),
        };
        Self::from_toml(text, name)
    }

    /// A path to a scenario file, or a builtin name if no such file exists.
    pub fn resolve(arg: &str) -> Result<Self> {
        let path = Path::new(arg);
        if !path.exists() && BUILTIN_SCENARIOS.contains(&arg) {
            return Self::builtin(arg);
        }
        load_scenario(path)
    }

    fn from_file(file: ScenarioFile, origin: &str) -> Result<Self> {
        let players = file.game.players.len();
        let mut costs = Vec::with_capacity(players);
        for (i, p) in file.game.players.iter().enumerate() {
            let key = format!("game.players[{i}]");
            let d = p.linear.len();
            let quad = match (&p.quad, &p.quad_diag) {
                (Some(q), None) => matrix_from_rows(q, &format!("{key}.quad"))?,
                (None, Some(diag)) => DMatrix::from_diagonal(&DVector::from_column_slice(diag)),
                _ => {
                    return Err(Error::Scenario(format!(
                        "{key}: exactly one of 'quad' or 'quad_diag' is required"
                    )))
                }
            };
            if quad.shape() != (d, d) {
                return Err(Error::Scenario(format!(
                    "{key}: quadratic term must be {d}x{d} to match 'linear'"
                )));
            }
            let mut cost = PlayerCost::new(quad, DVector::from_column_slice(&p.linear));
            match (&p.constraint, p.offset) {
                (Some(a), Some(beta)) => {
                    cost = cost.with_constraint(DVector::from_column_slice(a), beta);
                }
                (None, None) => {}
                _ => {
                    return Err(Error::Scenario(format!(
                        "{key}: 'constraint' and 'offset' must be given together"
                    )))
                }
            }
            costs.push(cost);
        }

        let mut couplings = Vec::new();
        if file.game.coupling_scale != 0.0 {
            for i in 0..players {
                for j in (0..players).filter(|&j| j != i) {
                    let (di, dj) = (file.game.players[i].linear.len(), file.game.players[j].linear.len());
                    if di != dj {
                        return Err(Error::Scenario(
                            "game.coupling_scale needs equal action dimensions".into(),
                        ));
                    }
                    couplings.push(Coupling {
                        player: i,
                        other: j,
                        matrix: DMatrix::identity(di, di) * file.game.coupling_scale,
                    });
                }
            }
        }
        for (k, c) in file.game.coupling.iter().enumerate() {
            couplings.push(Coupling {
                player: c.player,
                other: c.other,
                matrix: matrix_from_rows(&c.matrix, &format!("game.coupling[{k}].matrix"))?,
            });
        }
        let game = QuadraticGame::new(costs, couplings)?;

        if file.topology.nodes != players {
            return Err(Error::Scenario(format!(
                "topology.nodes = {} but the game has {players} players",
                file.topology.nodes
            )));
        }
        let mut edges = Vec::with_capacity(file.topology.edges.len());
        for (k, e) in file.topology.edges.iter().enumerate() {
            let key = format!("topology.edges[{k}]");
            let (i, j, w) = match e.as_slice() {
                [i, j] => (node_index(*i, &key)?, node_index(*j, &key)?, 1.0),
                [i, j, w] => (node_index(*i, &key)?, node_index(*j, &key)?, *w),
                _ => return Err(Error::Scenario(format!("{key}: expected [i, j] or [i, j, weight]"))),
            };
            edges.push((i, j, w));
        }
        let graph = Graph::from_edges(players, &edges)?;
        if !graph.is_connected() {
            return Err(Error::GraphDisconnected);
        }

        let s = &file.schedule;
        let schedule = GainSchedule::new(s.tp, s.q0, s.gamma.expand(players, "schedule.gamma")?)?;

        let init = &file.initial;
        let sigma0 = init.sigma.expand(players, "initial.sigma")?;
        let omega0 = init.omega.expand(players, "initial.omega")?;
        if sigma0.iter().chain(omega0.iter()).any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Scenario("initial sigma and omega must be nonnegative".into()));
        }
        let n = game.total_dim();
        let estimates = match (&init.x, init.seed) {
            (Some(x), None) if init.amplitude.is_none() => {
                let expected = players * n;
                if x.len() == n {
                    InitialEstimates::Explicit(SeekerState::consensus(
                        &DVector::from_column_slice(x),
                        sigma0.clone(),
                        omega0.clone(),
                        1.0,
                    ).x)
                } else if x.len() == expected {
                    InitialEstimates::Explicit(DVector::from_column_slice(x))
                } else {
                    return Err(Error::Scenario(format!(
                        "initial.x: expected {n} or {expected} values, found {}",
                        x.len()
                    )));
                }
            }
            (None, Some(seed)) => {
                let amplitude = init.amplitude.unwrap_or(DEFAULT_AMPLITUDE);
                if !(amplitude >= 0.0 && amplitude.is_finite()) {
                    return Err(Error::Scenario("initial.amplitude must be nonnegative".into()));
                }
                InitialEstimates::Random { seed, amplitude }
            }
            _ => {
                return Err(Error::Scenario(
                    "initial: give either 'x' or 'seed' (with optional 'amplitude')".into(),
                ))
            }
        };

        let mut integrator = IntegratorConfig::default();
        let ig = &file.integrator;
        if let Some(v) = ig.rel_tol {
            integrator.rel_tol = v;
        }
        if let Some(v) = ig.abs_tol {
            integrator.abs_tol = v;
        }
        if let Some(v) = ig.s_max {
            integrator.s_max = v;
        }
        if let Some(v) = ig.max_steps {
            integrator.max_steps = v;
        }
        if let Some(v) = ig.q_cap {
            integrator.q_cap = v;
        }
        if let Some(v) = ig.samples {
            integrator.samples = v;
        }
        integrator.converge_tol = ig.converge_tol;
        integrator.q_cap_policy = match ig.q_cap_policy.as_deref() {
            None | Some("saturate") => QCapPolicy::Saturate,
            Some("stop") => QCapPolicy::Stop,
            Some(other) => {
                return Err(Error::Scenario(format!(
                    "integrator.q_cap_policy: expected 'saturate' or 'stop', found '{other}'"
                )))
            }
        };
        integrator.validate()?;

        Ok(Self {
            name: file.name.unwrap_or_else(|| origin.to_string()),
            game,
            graph,
            schedule,
            sigma0,
            omega0,
            estimates,
            integrator,
        })
    }

    /// The state at `t = 0`.
    pub fn initial_state(&self) -> SeekerState {
        let x = match &self.estimates {
            InitialEstimates::Explicit(x) => x.clone(),
            InitialEstimates::Random { seed, amplitude } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let len = self.game.n_players() * self.game.total_dim();
                DVector::from_fn(len, |_, _| {
                    if *amplitude == 0.0 {
                        0.0
                    } else {
                        rng.random_range(-amplitude..=*amplitude)
                    }
                })
            }
        };
        SeekerState {
            x,
            sigma: self.sigma0.clone(),
            omega: self.omega0.clone(),
            q: self.schedule.q0(),
        }
    }

    pub fn with_tp(mut self, tp: f64) -> Result<Self> {
        self.schedule = GainSchedule::new(tp, self.schedule.q0(), self.schedule.gamma().clone())?;
        Ok(self)
    }

    pub fn with_gamma_scale(mut self, scale: f64) -> Result<Self> {
        self.schedule = GainSchedule::new(self.schedule.tp(), self.schedule.q0(), self.schedule.gamma() * scale)?;
        Ok(self)
    }

    /// Switches to random initial estimates with the given seed, keeping the
    /// current amplitude.
    pub fn with_seed(mut self, seed: u64) -> Self {
        let amplitude = match self.estimates {
            InitialEstimates::Random { amplitude, .. } => amplitude,
            InitialEstimates::Explicit(_) => DEFAULT_AMPLITUDE,
        };
        self.estimates = InitialEstimates::Random { seed, amplitude };
        self
    }

    /// Scales explicit initial estimates, or sets the random amplitude.
    pub fn with_amplitude(mut self, amplitude: f64) -> Result<Self> {
        if !(amplitude >= 0.0 && amplitude.is_finite()) {
            return Err(Error::Scenario(format!("amplitude must be nonnegative, got {amplitude}")));
        }
        self.estimates = match self.estimates {
            InitialEstimates::Random { seed, .. } => InitialEstimates::Random { seed, amplitude },
            InitialEstimates::Explicit(x) => InitialEstimates::Explicit(x * amplitude),
        };
        Ok(self)
    }
}

/// Reads and validates a scenario file.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    Scenario::from_toml(&text, &path.display().to_string())
}
