//! Physics parameter estimation: fit mass, friction, damping, or initial
//! velocity by minimizing the discrepancy between simulated and observed
//! pose tracks with a bounded derivative-free search (seeded multi-start
//! plus coordinate-wise golden-section refinement).

use crate::dynamics::{simulate, DynamicsError, Environment, RigidState, RigidTrack, Wrench};
use crate::geometry::Pose;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EstimationError {
    #[error("invalid bounds for {name}: lower {lower}, upper {upper}, initial {init}")]
    InvalidBounds {
        name: String,
        lower: f64,
        upper: f64,
        init: f64,
    },
    #[error("budget {budget} is below the minimum {minimum} (10 × parameter count)")]
    BudgetTooSmall { budget: usize, minimum: usize },
    #[error("scenario cannot express parameter {name}: {reason}")]
    UnsupportedParameter { name: String, reason: String },
    #[error("track label {label} has no body in the scenario")]
    UnknownTrackLabel { label: u32 },
    #[error("observed track needs at least 3 samples, found {found}")]
    TooFewSamples { found: usize },
}

/// Weight of the squared geodesic orientation error relative to squared
/// position error, in m²/rad².
pub const ORIENTATION_WEIGHT: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParamKind {
    Mass,
    FrictionMu,
    LinearDamping,
    V0X,
    V0Y,
    V0Z,
}

impl ParamKind {
    pub fn name(&self) -> &'static str {
        match self {
            ParamKind::Mass => "mass",
            ParamKind::FrictionMu => "friction_mu",
            ParamKind::LinearDamping => "linear_damping",
            ParamKind::V0X => "v0_x",
            ParamKind::V0Y => "v0_y",
            ParamKind::V0Z => "v0_z",
        }
    }

    pub fn parse(s: &str) -> Option<ParamKind> {
        Some(match s {
            "mass" => ParamKind::Mass,
            "friction_mu" => ParamKind::FrictionMu,
            "linear_damping" => ParamKind::LinearDamping,
            "v0_x" => ParamKind::V0X,
            "v0_y" => ParamKind::V0Y,
            "v0_z" => ParamKind::V0Z,
            _ => return None,
        })
    }
}

/// One fitted parameter: bounds and the initial guess the search starts from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub kind: ParamKind,
    pub lower: f64,
    pub upper: f64,
    pub init: f64,
}

impl ParamSpec {
    pub fn validate(&self) -> Result<(), EstimationError> {
        if !(self.lower < self.upper) || self.init < self.lower || self.init > self.upper {
            return Err(EstimationError::InvalidBounds {
                name: self.kind.name().into(),
                lower: self.lower,
                upper: self.upper,
                init: self.init,
            });
        }
        Ok(())
    }
}

/// Observed pose track for one instance.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedTrack {
    pub label: u32,
    pub samples: Vec<(f64, Pose)>,
    pub noise_floor: Option<f64>,
}

impl ObservedTrack {
    pub fn from_rigid(track: RigidTrack) -> Self {
        ObservedTrack {
            label: track.label,
            samples: track.samples,
            noise_floor: None,
        }
    }

    pub fn validate(&self) -> Result<(), EstimationError> {
        if self.samples.len() < 3 {
            return Err(EstimationError::TooFewSamples {
                found: self.samples.len(),
            });
        }
        Ok(())
    }
}

/// The simulation setup a fit runs against: bodies, environment, constant
/// wrenches, and the step grid.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub initial: Vec<RigidState>,
    pub environment: Environment,
    pub wrenches: Vec<(u32, Wrench)>,
    pub dt: f64,
    pub n_steps: usize,
}

impl Scenario {
    fn with_params(&self, spec: &[ParamSpec], params: &[f64]) -> Result<Scenario, EstimationError> {
        let mut scenario = self.clone();
        for (p, &value) in spec.iter().zip(params) {
            match p.kind {
                ParamKind::Mass => {
                    for b in &mut scenario.initial {
                        b.mass = value;
                    }
                }
                ParamKind::V0X => {
                    for b in &mut scenario.initial {
                        b.linear_velocity.x = value;
                    }
                }
                ParamKind::V0Y => {
                    for b in &mut scenario.initial {
                        b.linear_velocity.y = value;
                    }
                }
                ParamKind::V0Z => {
                    for b in &mut scenario.initial {
                        b.linear_velocity.z = value;
                    }
                }
                ParamKind::FrictionMu | ParamKind::LinearDamping => {
                    let contact = scenario.environment.contact.as_mut().ok_or_else(|| {
                        EstimationError::UnsupportedParameter {
                            name: p.kind.name().into(),
                            reason: "scenario has no ground contact".into(),
                        }
                    })?;
                    if p.kind == ParamKind::FrictionMu {
                        contact.friction_mu = value;
                    } else {
                        contact.linear_damping = value;
                    }
                }
            }
        }
        Ok(scenario)
    }

    fn run(&self) -> Result<Vec<RigidTrack>, DynamicsError> {
        let schedule = |_t: f64, label: u32| {
            let mut w = Wrench::zero();
            for (l, entry) in &self.wrenches {
                if *l == label {
                    w.force += entry.force;
                    w.torque += entry.torque;
                }
            }
            w
        };
        simulate(&self.initial, schedule, &self.environment, self.dt, self.n_steps)
    }
}

fn geodesic_angle(a: &Pose, b: &Pose) -> f64 {
    let rel = a.rotation.transpose() * b.rotation;
    ((rel.trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos()
}

/// Mean over all track samples of squared position error plus
/// [`ORIENTATION_WEIGHT`] times squared geodesic orientation error, for the
/// scenario with `params` substituted. Simulation failures map to +∞.
pub fn trajectory_loss(
    params: &[f64],
    spec: &[ParamSpec],
    scenario: &Scenario,
    tracks: &[ObservedTrack],
) -> Result<f64, EstimationError> {
    let candidate = scenario.with_params(spec, params)?;
    for track in tracks {
        track.validate()?;
        if !candidate.initial.iter().any(|b| b.label == track.label) {
            return Err(EstimationError::UnknownTrackLabel { label: track.label });
        }
    }
    let simulated = match candidate.run() {
        Ok(t) => t,
        // A parameter set that blows up the integrator is simply a terrible
        // candidate, not a caller error.
        Err(_) => return Ok(f64::INFINITY),
    };
    let mut total = 0.0f64;
    let mut count = 0usize;
    for track in tracks {
        let sim = simulated
            .iter()
            .find(|t| t.label == track.label)
            .expect("label checked above");
        for &(t, ref obs_pose) in &track.samples {
            let idx = (t / candidate.dt).round() as usize;
            if idx >= sim.samples.len() {
                return Ok(f64::INFINITY);
            }
            let sim_pose = &sim.samples[idx].1;
            let dp = (sim_pose.translation - obs_pose.translation).norm_squared();
            let da = geodesic_angle(sim_pose, obs_pose);
            total += dp + ORIENTATION_WEIGHT * da * da;
            count += 1;
        }
    }
    Ok(if count == 0 { 0.0 } else { total / count as f64 })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Evaluation {
    pub params: Vec<f64>,
    pub loss: f64,
}

#[derive(Debug, Clone)]
pub struct EstimationResult {
    pub best_params: Vec<f64>,
    pub best_loss: f64,
    pub log: Vec<Evaluation>,
    /// Parameters whose ±10% perturbation moved the loss by less than 1e-10.
    pub unidentifiable: Vec<ParamKind>,
}

const GOLDEN: f64 = 0.618_033_988_749_894_9;
/// Loss change below this under ±10% perturbation flags a parameter as
/// unobservable in the given scenario.
const IDENTIFIABILITY_EPS: f64 = 1e-10;

struct Search<'a> {
    spec: &'a [ParamSpec],
    scenario: &'a Scenario,
    tracks: &'a [ObservedTrack],
    log: Vec<Evaluation>,
    budget: usize,
}

impl<'a> Search<'a> {
    fn eval(&mut self, params: &[f64]) -> Result<f64, EstimationError> {
        let loss = trajectory_loss(params, self.spec, self.scenario, self.tracks)?;
        self.log.push(Evaluation {
            params: params.to_vec(),
            loss,
        });
        Ok(loss)
    }

    fn remaining(&self) -> usize {
        self.budget.saturating_sub(self.log.len())
    }

    /// Golden-section refinement of coordinate `j` inside [lo, hi], seeded
    /// by a coarse scan. Returns the best value found for that coordinate.
    fn refine_coordinate(
        &mut self,
        params: &mut Vec<f64>,
        j: usize,
        evals: usize,
    ) -> Result<f64, EstimationError> {
        let (lo, hi) = (self.spec[j].lower, self.spec[j].upper);
        let scan = 5usize.min(evals);
        let mut best_v = params[j];
        let mut best_loss = f64::INFINITY;
        let mut used = 0usize;
        for k in 0..scan {
            let v = lo + (hi - lo) * (k as f64 + 0.5) / scan as f64;
            params[j] = v;
            let loss = self.eval(params)?;
            used += 1;
            if loss < best_loss {
                best_loss = loss;
                best_v = v;
            }
        }
        // Bracket around the best scan point, then contract.
        let step = (hi - lo) / scan as f64;
        let mut a = (best_v - step).max(lo);
        let mut b = (best_v + step).min(hi);
        let mut x1 = b - GOLDEN * (b - a);
        let mut x2 = a + GOLDEN * (b - a);
        params[j] = x1;
        let mut f1 = self.eval(params)?;
        params[j] = x2;
        let mut f2 = self.eval(params)?;
        used += 2;
        while used + 1 < evals {
            if f1 <= f2 {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - GOLDEN * (b - a);
                params[j] = x1;
                f1 = self.eval(params)?;
            } else {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + GOLDEN * (b - a);
                params[j] = x2;
                f2 = self.eval(params)?;
            }
            used += 1;
        }
        let (xb, fb) = if f1 <= f2 { (x1, f1) } else { (x2, f2) };
        if fb < best_loss {
            best_loss = fb;
            best_v = xb;
        }
        params[j] = best_v;
        Ok(best_loss)
    }
}

/// Bounded derivative-free fit. Deterministic for a given seed; the returned
/// log holds every evaluated point in order.
pub fn estimate_parameters(
    spec: &[ParamSpec],
    scenario: &Scenario,
    tracks: &[ObservedTrack],
    budget: usize,
    seed: u64,
) -> Result<EstimationResult, EstimationError> {
    let n = spec.len();
    if n == 0 {
        return Err(EstimationError::InvalidBounds {
            name: "(none)".into(),
            lower: 0.0,
            upper: 0.0,
            init: 0.0,
        });
    }
    for p in spec {
        p.validate()?;
    }
    let minimum = 10 * n;
    if budget < minimum {
        return Err(EstimationError::BudgetTooSmall { budget, minimum });
    }

    let mut search = Search {
        spec,
        scenario,
        tracks,
        log: Vec::new(),
        budget,
    };

    // Reserve the identifiability probes up front.
    let probe_budget = 2 * n;
    let search_budget = budget.saturating_sub(probe_budget);

    let init: Vec<f64> = spec.iter().map(|p| p.init).collect();
    let mut best = init.clone();
    let mut best_loss = search.eval(&init)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_starts = if search_budget > 60 * n { 3 } else { 1 };
    let mut starts = vec![init.clone()];
    for _ in 1..n_starts {
        starts.push(
            spec.iter()
                .map(|p| rng.gen_range(p.lower..p.upper))
                .collect(),
        );
    }

    let per_start = search_budget / starts.len();
    for start in starts {
        let mut params = start;
        let mut current = search.eval(&params)?;
        if current < best_loss {
            best_loss = current;
            best = params.clone();
        }
        let start_deadline = search.log.len() + per_start.saturating_sub(1);
        // Coordinate sweeps until this start's share is exhausted.
        'sweeps: loop {
            for j in 0..n {
                let left = start_deadline
                    .saturating_sub(search.log.len())
                    .min(search.remaining().saturating_sub(probe_budget));
                if left < 8 {
                    break 'sweeps;
                }
                let evals = (left / (n - j).max(1)).clamp(8, 24).min(left);
                current = search.refine_coordinate(&mut params, j, evals)?;
                if current < best_loss {
                    best_loss = current;
                    best = params.clone();
                }
            }
        }
    }

    // Identifiability probes at the optimum.
    let mut unidentifiable = Vec::new();
    for (j, p) in spec.iter().enumerate() {
        let scale = if best[j].abs() > 1e-9 {
            best[j].abs()
        } else {
            p.upper - p.lower
        };
        let mut max_change = 0.0f64;
        for sign in [-1.0, 1.0] {
            let mut probe = best.clone();
            probe[j] = (best[j] + sign * 0.1 * scale).clamp(p.lower, p.upper);
            if probe[j] == best[j] {
                continue;
            }
            let loss = search.eval(&probe)?;
            max_change = max_change.max((loss - best_loss).abs());
        }
        if max_change < IDENTIFIABILITY_EPS {
            unidentifiable.push(p.kind);
        }
    }

    Ok(EstimationResult {
        best_params: best,
        best_loss,
        log: search.log,
        unidentifiable,
    })
}
