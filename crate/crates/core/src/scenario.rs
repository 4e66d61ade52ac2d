//! Scenario configuration: JSON parsing, presets and resolution of initial states.
//!
//! A config document is a JSON object. Operators are either preset names
//! (`"sigma_x"`, `"sigma_y"`, `"sigma_z"`, `"identity"`, `"zero"`, optionally
//! scaled as `"0.5*sigma_x"`) or matrix literals written as rows of
//! `[re, im]` pairs. States are `"maximally_mixed"`, `"random_pure"`,
//! `"basis_<k>"` or a matrix literal. A `"preset"` key selects a shipped
//! scenario whose fields the remaining keys override.

use serde_json::{json, Map, Value};

use crate::error::{QestError, Result};
use crate::linalg::{
    c, eigh, ComplexMatrix, ComplexVector, DensityMatrix, Observable, PureState, Tolerances, MAX_DIM,
};
use crate::noise::NoiseStream;
use crate::sde::{Dynamics, IntegratorConfig, MeasurementChannel, StepState, DEFAULT_POSITIVITY_ABORT};

pub const PRESETS: [&str; 5] = ["qubit_rabi", "stuck_pair", "low_eff", "two_channel", "ensemble_n100"];

const DEFAULT_RECORD_EVERY: usize = 100;
const DEFAULT_HORIZON: f64 = 10.0;

/// How an initial state is produced for each trajectory.
#[derive(Debug, Clone, PartialEq)]
pub enum StateInit {
    MaximallyMixed,
    /// Haar-random pure state drawn from the trajectory's noise stream.
    RandomPure,
    Basis(usize),
    Matrix(DensityMatrix),
}

impl StateInit {
    /// Resolves to a concrete state, plus its state vector when pure.
    pub fn resolve(&self, d: usize, noise: &mut NoiseStream) -> Result<(DensityMatrix, Option<PureState>)> {
        match self {
            StateInit::MaximallyMixed => Ok((DensityMatrix::maximally_mixed(d), None)),
            StateInit::RandomPure => {
                let psi = crate::linalg::random_pure_state(d, noise)?;
                Ok((psi.projector(), Some(psi)))
            }
            StateInit::Basis(k) => {
                let psi = PureState::basis(d, *k)?;
                Ok((psi.projector(), Some(psi)))
            }
            StateInit::Matrix(m) => {
                let psi = if (m.purity() - 1.0).abs() < 1e-10 {
                    let spec = eigh(m.matrix());
                    let top = spec.vectors.column(d - 1).into_owned();
                    Some(PureState::normalized(top)?)
                } else {
                    None
                };
                Ok((m.clone(), psi))
            }
        }
    }

    fn to_json(&self) -> Value {
        match self {
            StateInit::MaximallyMixed => json!("maximally_mixed"),
            StateInit::RandomPure => json!("random_pure"),
            StateInit::Basis(k) => json!(format!("basis_{k}")),
            StateInit::Matrix(m) => matrix_to_json(m.matrix()),
        }
    }

    fn is_pure(&self) -> bool {
        match self {
            StateInit::MaximallyMixed => false,
            StateInit::RandomPure | StateInit::Basis(_) => true,
            StateInit::Matrix(m) => (m.purity() - 1.0).abs() < 1e-10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleSettings {
    pub sigma: f64,
    pub nu: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleSettings {
    pub n_copies: usize,
    pub gamma_c: f64,
}

/// A fully resolved simulation scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub name: Option<String>,
    pub dimension: usize,
    pub hamiltonian: Observable,
    pub channels: Vec<MeasurementChannel>,
    pub rho0: StateInit,
    pub rho_e0: StateInit,
    pub integrator: IntegratorConfig,
    pub horizon: f64,
    pub n_trajectories: usize,
    pub seed: u64,
    pub tolerances: Tolerances,
    /// Co-integrate a pure-state estimate through the stochastic Schrödinger equation.
    pub track_pure_estimate: bool,
    pub cycle: Option<CycleSettings>,
    pub ensemble: Option<EnsembleSettings>,
}

impl ScenarioSpec {
    pub fn gamma_max(&self) -> f64 {
        self.channels.iter().map(|c| c.gamma()).fold(0.0, f64::max)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dimension;
        if !(2..=MAX_DIM).contains(&d) {
            return Err(QestError::config("dimension", format!("must lie in 2..={MAX_DIM}, got {d}")));
        }
        if self.hamiltonian.dim() != d {
            return Err(QestError::config(
                "hamiltonian",
                format!("dimension {} does not match {d}", self.hamiltonian.dim()),
            ));
        }
        for (k, ch) in self.channels.iter().enumerate() {
            if ch.obs().dim() != d {
                return Err(QestError::config(
                    format!("channels[{k}].observable"),
                    format!("dimension {} does not match {d}", ch.obs().dim()),
                ));
            }
        }
        for (name, s) in [("rho0", &self.rho0), ("rho_e0", &self.rho_e0)] {
            match s {
                StateInit::Basis(k) if *k >= d => {
                    return Err(QestError::config(name, format!("basis index {k} out of range")))
                }
                StateInit::Matrix(m) if m.dim() != d => {
                    return Err(QestError::config(name, format!("dimension {} does not match {d}", m.dim())))
                }
                _ => {}
            }
        }
        self.integrator
            .validate(self.gamma_max())
            .map_err(|e| QestError::config("integrator", e.to_string()))?;
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(QestError::config("horizon", format!("must be > 0, got {}", self.horizon)));
        }
        if self.track_pure_estimate {
            if let Some(k) = self.channels.iter().position(|c| c.eta() != 1.0) {
                return Err(QestError::config(
                    format!("channels[{k}].eta"),
                    "pure-estimate tracking requires eta = 1",
                ));
            }
            if !self.rho_e0.is_pure() {
                return Err(QestError::config("rho_e0", "pure-estimate tracking requires a pure initial estimate"));
            }
        }
        if let Some(cy) = &self.cycle {
            if !(cy.sigma > 0.0 && cy.nu > 0.0 && cy.sigma.is_finite() && cy.nu.is_finite()) {
                return Err(QestError::config("cycle", "sigma and nu must be finite and > 0"));
            }
        }
        if let Some(en) = &self.ensemble {
            if en.n_copies == 0 {
                return Err(QestError::config("ensemble.n_copies", "must be >= 1"));
            }
            if !(en.gamma_c > 0.0 && en.gamma_c.is_finite()) {
                return Err(QestError::config("ensemble.gamma_c", "must be finite and > 0"));
            }
        }
        Ok(())
    }

    pub fn dynamics(&self) -> Result<Dynamics> {
        Dynamics::new(self.hamiltonian.clone(), self.channels.clone(), self.integrator)
    }

    /// Initial coupled state. Random presets draw from `noise`, true state first.
    pub fn initial_state(&self, noise: &mut NoiseStream) -> Result<StepState> {
        let (rho, _) = self.rho0.resolve(self.dimension, noise)?;
        let (rho_e, psi) = self.rho_e0.resolve(self.dimension, noise)?;
        let s = StepState::new(rho, rho_e, self.channels.len());
        if self.track_pure_estimate {
            let psi = psi.ok_or_else(|| QestError::config("rho_e0", "initial estimate is not pure"))?;
            let mut s = s.with_pure_estimate(psi.clone());
            s.rho_e = psi.projector();
            Ok(s)
        } else {
            Ok(s)
        }
    }

    /// Number of Euler steps to the horizon.
    pub fn n_steps(&self) -> usize {
        (self.horizon / self.integrator.dt).round() as usize
    }

    /// The resolved configuration with every default expanded.
    pub fn to_json(&self) -> Value {
        let mut obj = Map::new();
        if let Some(n) = &self.name {
            obj.insert("name".into(), json!(n));
        }
        obj.insert("dimension".into(), json!(self.dimension));
        obj.insert("hamiltonian".into(), matrix_to_json(self.hamiltonian.matrix()));
        obj.insert(
            "channels".into(),
            Value::Array(
                self.channels
                    .iter()
                    .map(|ch| {
                        json!({
                            "observable": matrix_to_json(ch.obs().matrix()),
                            "gamma": ch.gamma(),
                            "eta": ch.eta(),
                        })
                    })
                    .collect(),
            ),
        );
        obj.insert("rho0".into(), self.rho0.to_json());
        obj.insert("rho_e0".into(), self.rho_e0.to_json());
        obj.insert(
            "integrator".into(),
            json!({
                "dt": self.integrator.dt,
                "renormalize_each_step": self.integrator.renormalize_each_step,
                "positivity_abort": self.integrator.positivity_abort,
                "record_every": self.integrator.record_every,
            }),
        );
        obj.insert("horizon".into(), json!(self.horizon));
        obj.insert("n_trajectories".into(), json!(self.n_trajectories));
        obj.insert("seed".into(), json!(self.seed));
        obj.insert(
            "tolerances".into(),
            json!({"herm": self.tolerances.herm, "trace": self.tolerances.trace, "pos": self.tolerances.pos}),
        );
        obj.insert("track_pure_estimate".into(), json!(self.track_pure_estimate));
        if let Some(cy) = &self.cycle {
            obj.insert("cycle".into(), json!({"sigma": cy.sigma, "nu": cy.nu}));
        }
        if let Some(en) = &self.ensemble {
            obj.insert("ensemble".into(), json!({"n_copies": en.n_copies, "gamma_c": en.gamma_c}));
        }
        Value::Object(obj)
    }
}

pub fn matrix_to_json(m: &ComplexMatrix) -> Value {
    Value::Array(
        (0..m.nrows())
            .map(|i| Value::Array((0..m.ncols()).map(|j| json!([m[(i, j)].re, m[(i, j)].im])).collect()))
            .collect(),
    )
}

/// Partial JSON document of a shipped preset; missing fields take defaults.
pub fn preset_json(name: &str) -> Option<Value> {
    let rabi = json!({
        "name": "qubit_rabi",
        "dimension": 2,
        "hamiltonian": "0.5*sigma_x",
        "channels": [{"observable": "sigma_z", "gamma": 1.0, "eta": 1.0}],
        "rho0": "random_pure",
        "rho_e0": "maximally_mixed",
        "integrator": {"dt": 1e-3, "record_every": 100},
        "horizon": 30.0,
        "n_trajectories": 200,
        "seed": 42,
        "cycle": {"sigma": 100.0, "nu": 1e4},
    });
    let with = |base: &Value, patch: Value| {
        let mut v = base.clone();
        merge(&mut v, &patch);
        v
    };
    Some(match name {
        "qubit_rabi" => rabi,
        "stuck_pair" => json!({
            "name": "stuck_pair",
            "dimension": 2,
            "hamiltonian": "zero",
            "channels": [{"observable": "sigma_z", "gamma": 1.0, "eta": 1.0}],
            "rho0": "basis_0",
            "rho_e0": "basis_1",
            "integrator": {"dt": 1e-3, "record_every": 100},
            "horizon": 10.0,
            "n_trajectories": 1,
            "seed": 42,
        }),
        "low_eff" => with(
            &rabi,
            json!({
                "name": "low_eff",
                "channels": [{"observable": "sigma_z", "gamma": 1.0, "eta": 0.5}],
                "horizon": 60.0,
            }),
        ),
        "two_channel" => with(
            &rabi,
            json!({
                "name": "two_channel",
                "channels": [
                    {"observable": "sigma_z", "gamma": 1.0, "eta": 1.0},
                    {"observable": "sigma_x", "gamma": 1.0, "eta": 1.0}
                ],
            }),
        ),
        "ensemble_n100" => with(
            &rabi,
            json!({
                "name": "ensemble_n100",
                "integrator": {"dt": 1e-4, "record_every": 100},
                "horizon": 10.0,
                "n_trajectories": 100,
                "ensemble": {"n_copies": 100, "gamma_c": 1.0},
            }),
        ),
        _ => return None,
    })
}

pub fn preset(name: &str) -> Result<ScenarioSpec> {
    let v = preset_json(name)
        .ok_or_else(|| QestError::config("preset", format!("unknown preset {name:?}; known: {PRESETS:?}")))?;
    from_value(&v)
}

/// Object-level merge: keys of `patch` replace those of `base`, nested objects
/// are merged one level at a time.
fn merge(base: &mut Value, patch: &Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(k) {
                    Some(existing) if existing.is_object() && v.is_object() => merge(existing, v),
                    _ => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (b, p) => *b = p.clone(),
    }
}

/// Parses inline JSON text.
pub fn parse_config(text: &str) -> Result<ScenarioSpec> {
    let v: Value = serde_json::from_str(text).map_err(|e| QestError::config("$", e.to_string()))?;
    from_value(&v)
}

pub fn parse_config_file(path: &std::path::Path) -> Result<ScenarioSpec> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text)
}

const TOP_KEYS: [&str; 15] = [
    "preset",
    "name",
    "dimension",
    "hamiltonian",
    "channels",
    "rho0",
    "rho_e0",
    "integrator",
    "horizon",
    "n_trajectories",
    "seed",
    "tolerances",
    "track_pure_estimate",
    "cycle",
    "ensemble",
];

fn as_object<'a>(v: &'a Value, path: &str) -> Result<&'a Map<String, Value>> {
    v.as_object().ok_or_else(|| QestError::config(path, "expected an object"))
}

fn check_keys(obj: &Map<String, Value>, allowed: &[&str], path: &str) -> Result<()> {
    for k in obj.keys() {
        if !allowed.contains(&k.as_str()) {
            let p = if path == "$" { k.clone() } else { format!("{path}.{k}") };
            return Err(QestError::config(p, "unknown field"));
        }
    }
    Ok(())
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() || path == "$" {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

fn opt_f64(obj: &Map<String, Value>, key: &str, path: &str) -> Result<Option<f64>> {
    match obj.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(v) => v
            .as_f64()
            .map(Some)
            .ok_or_else(|| QestError::config(join(path, key), "expected a number")),
    }
}

fn opt_u64(obj: &Map<String, Value>, key: &str, path: &str) -> Result<Option<u64>> {
    match obj.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(v) => v
            .as_u64()
            .map(Some)
            .ok_or_else(|| QestError::config(join(path, key), "expected a non-negative integer")),
    }
}

fn opt_bool(obj: &Map<String, Value>, key: &str, path: &str) -> Result<Option<bool>> {
    match obj.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(v) => v
            .as_bool()
            .map(Some)
            .ok_or_else(|| QestError::config(join(path, key), "expected a boolean")),
    }
}

fn parse_number(v: &Value, path: &str) -> Result<f64> {
    v.as_f64().ok_or_else(|| QestError::config(path, "expected a number"))
}

/// Rows of `[re, im]` pairs; bare numbers are accepted as real entries.
pub fn parse_matrix(v: &Value, path: &str) -> Result<ComplexMatrix> {
    let rows = v.as_array().ok_or_else(|| QestError::config(path, "expected a matrix (array of rows)"))?;
    let n = rows.len();
    if n == 0 {
        return Err(QestError::config(path, "empty matrix"));
    }
    let mut m = ComplexMatrix::zeros(n, n);
    for (i, row) in rows.iter().enumerate() {
        let rp = format!("{path}[{i}]");
        let entries = row.as_array().ok_or_else(|| QestError::config(&rp, "expected an array row"))?;
        if entries.len() != n {
            return Err(QestError::config(&rp, format!("row has {} entries, matrix needs {n}", entries.len())));
        }
        for (j, e) in entries.iter().enumerate() {
            let ep = format!("{rp}[{j}]");
            m[(i, j)] = match e {
                Value::Array(pair) if pair.len() == 2 => {
                    c(parse_number(&pair[0], &format!("{ep}[0]"))?, parse_number(&pair[1], &format!("{ep}[1]"))?)
                }
                Value::Number(_) => c(parse_number(e, &ep)?, 0.0),
                _ => return Err(QestError::config(&ep, "expected [re, im] or a number")),
            };
        }
    }
    Ok(m)
}

fn named_operator(name: &str, d: Option<usize>) -> Option<Observable> {
    match name {
        "sigma_x" => Some(Observable::pauli_x()),
        "sigma_y" => Some(Observable::pauli_y()),
        "sigma_z" => Some(Observable::pauli_z()),
        "identity" => d.map(Observable::identity),
        "zero" => d.map(Observable::zero),
        _ => None,
    }
}

/// Dimension implied by an operator value, if it fixes one.
fn implied_dim(v: &Value) -> Option<usize> {
    match v {
        Value::Array(rows) => Some(rows.len()),
        Value::String(s) => {
            let name = s.rsplit('*').next().unwrap_or(s).trim();
            name.starts_with("sigma_").then_some(2)
        }
        _ => None,
    }
}

fn parse_operator(v: &Value, path: &str, d: usize, tol: f64) -> Result<Observable> {
    let op = match v {
        Value::String(s) => {
            let (scale, name) = match s.split_once('*') {
                Some((a, b)) => (
                    a.trim()
                        .parse::<f64>()
                        .map_err(|_| QestError::config(path, format!("bad scale factor in {s:?}")))?,
                    b.trim(),
                ),
                None => (1.0, s.trim()),
            };
            named_operator(name, Some(d))
                .ok_or_else(|| QestError::config(path, format!("unknown operator preset {name:?}")))?
                .scaled(scale)
        }
        Value::Array(_) => {
            let m = parse_matrix(v, path)?;
            Observable::with_tolerance(m, tol).map_err(|e| QestError::config(path, e.to_string()))?
        }
        _ => return Err(QestError::config(path, "expected an operator name or matrix literal")),
    };
    if op.dim() != d {
        return Err(QestError::config(path, format!("dimension {} does not match {d}", op.dim())));
    }
    Ok(op)
}

fn parse_state(v: &Value, path: &str, d: usize, tol: &Tolerances) -> Result<StateInit> {
    match v {
        Value::String(s) => match s.as_str() {
            "maximally_mixed" => Ok(StateInit::MaximallyMixed),
            "random_pure" => Ok(StateInit::RandomPure),
            other => {
                let k = other
                    .strip_prefix("basis_")
                    .and_then(|k| k.parse::<usize>().ok())
                    .ok_or_else(|| QestError::config(path, format!("unknown state preset {other:?}")))?;
                if k >= d {
                    return Err(QestError::config(path, format!("basis index {k} out of range for d={d}")));
                }
                Ok(StateInit::Basis(k))
            }
        },
        Value::Array(_) => {
            let m = parse_matrix(v, path)?;
            if m.nrows() != d {
                return Err(QestError::config(path, format!("dimension {} does not match {d}", m.nrows())));
            }
            DensityMatrix::with_tolerances(m, tol)
                .map(StateInit::Matrix)
                .map_err(|e| QestError::config(path, e.to_string()))
        }
        _ => Err(QestError::config(path, "expected a state preset or matrix literal")),
    }
}

/// Builds and validates a scenario from a parsed JSON document.
pub fn from_value(input: &Value) -> Result<ScenarioSpec> {
    let user = as_object(input, "$")?;
    check_keys(user, &TOP_KEYS, "$")?;
    let merged = match user.get("preset") {
        Some(Value::String(name)) => {
            let mut base = preset_json(name)
                .ok_or_else(|| QestError::config("preset", format!("unknown preset {name:?}; known: {PRESETS:?}")))?;
            let mut patch = input.clone();
            patch.as_object_mut().unwrap().remove("preset");
            merge(&mut base, &patch);
            base
        }
        Some(_) => return Err(QestError::config("preset", "expected a preset name")),
        None => input.clone(),
    };
    let obj = as_object(&merged, "$")?;

    let tolerances = match obj.get("tolerances") {
        None | Some(Value::Null) => Tolerances::default(),
        Some(v) => {
            let t = as_object(v, "tolerances")?;
            check_keys(t, &["herm", "trace", "pos"], "tolerances")?;
            let def = Tolerances::default();
            Tolerances {
                herm: opt_f64(t, "herm", "tolerances")?.unwrap_or(def.herm),
                trace: opt_f64(t, "trace", "tolerances")?.unwrap_or(def.trace),
                pos: opt_f64(t, "pos", "tolerances")?.unwrap_or(def.pos),
            }
        }
    };

    let channels_v = match obj.get("channels") {
        None => Vec::new(),
        Some(Value::Array(a)) => a.clone(),
        Some(_) => return Err(QestError::config("channels", "expected an array")),
    };

    let dimension = match opt_u64(obj, "dimension", "$")? {
        Some(d) => d as usize,
        None => obj
            .get("hamiltonian")
            .and_then(implied_dim)
            .or_else(|| channels_v.iter().find_map(|c| c.get("observable").and_then(implied_dim)))
            .ok_or_else(|| QestError::config("dimension", "missing and not implied by any operator"))?,
    };
    if !(2..=MAX_DIM).contains(&dimension) {
        return Err(QestError::config("dimension", format!("must lie in 2..={MAX_DIM}, got {dimension}")));
    }

    let hamiltonian = match obj.get("hamiltonian") {
        None | Some(Value::Null) => Observable::zero(dimension),
        Some(v) => parse_operator(v, "hamiltonian", dimension, tolerances.herm)?,
    };

    let mut channels = Vec::with_capacity(channels_v.len());
    for (k, cv) in channels_v.iter().enumerate() {
        let path = format!("channels[{k}]");
        let co = as_object(cv, &path)?;
        check_keys(co, &["observable", "gamma", "eta"], &path)?;
        let obs_v = co
            .get("observable")
            .ok_or_else(|| QestError::config(join(&path, "observable"), "missing"))?;
        let obs = parse_operator(obs_v, &join(&path, "observable"), dimension, tolerances.herm)?;
        let gamma = opt_f64(co, "gamma", &path)?.ok_or_else(|| QestError::config(join(&path, "gamma"), "missing"))?;
        let eta = opt_f64(co, "eta", &path)?.unwrap_or(1.0);
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(QestError::config(join(&path, "gamma"), format!("must be finite and > 0, got {gamma}")));
        }
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(QestError::config(join(&path, "eta"), format!("must lie in (0, 1], got {eta}")));
        }
        channels.push(MeasurementChannel::new(obs, gamma, eta)?);
    }

    let rho0 = match obj.get("rho0") {
        None | Some(Value::Null) => return Err(QestError::config("rho0", "missing")),
        Some(v) => parse_state(v, "rho0", dimension, &tolerances)?,
    };
    let rho_e0 = match obj.get("rho_e0") {
        None | Some(Value::Null) => StateInit::MaximallyMixed,
        Some(v) => parse_state(v, "rho_e0", dimension, &tolerances)?,
    };

    let gamma_max = channels.iter().map(|c| c.gamma()).fold(0.0, f64::max);
    let mut integrator = IntegratorConfig::for_gamma(if gamma_max > 0.0 { gamma_max } else { 1.0 })
        .with_record_every(DEFAULT_RECORD_EVERY);
    integrator.positivity_abort = DEFAULT_POSITIVITY_ABORT;
    if let Some(iv) = obj.get("integrator") {
        let io = as_object(iv, "integrator")?;
        check_keys(io, &["dt", "renormalize_each_step", "positivity_abort", "record_every"], "integrator")?;
        if let Some(dt) = opt_f64(io, "dt", "integrator")? {
            integrator.dt = dt;
        }
        if let Some(b) = opt_bool(io, "renormalize_each_step", "integrator")? {
            integrator.renormalize_each_step = b;
        }
        if let Some(p) = opt_f64(io, "positivity_abort", "integrator")? {
            integrator.positivity_abort = p;
        }
        if let Some(r) = opt_u64(io, "record_every", "integrator")? {
            integrator.record_every = r as usize;
        }
    }

    let cycle = match obj.get("cycle") {
        None | Some(Value::Null) => None,
        Some(v) => {
            let co = as_object(v, "cycle")?;
            check_keys(co, &["sigma", "nu"], "cycle")?;
            let sigma = opt_f64(co, "sigma", "cycle")?;
            let nu = opt_f64(co, "nu", "cycle")?;
            let g = channels.first().map(|c| c.gamma());
            let (sigma, nu) = match (sigma, nu, g) {
                (Some(s), Some(n), _) => (s, n),
                (Some(s), None, Some(g)) => (s, g * s * s),
                (None, Some(n), Some(g)) => ((n / g).sqrt(), n),
                _ => return Err(QestError::config("cycle", "needs sigma and nu (or one of them plus a channel)")),
            };
            Some(CycleSettings { sigma, nu })
        }
    };

    let ensemble = match obj.get("ensemble") {
        None | Some(Value::Null) => None,
        Some(v) => {
            let eo = as_object(v, "ensemble")?;
            check_keys(eo, &["n_copies", "gamma_c"], "ensemble")?;
            let n_copies = opt_u64(eo, "n_copies", "ensemble")?
                .ok_or_else(|| QestError::config("ensemble.n_copies", "missing"))? as usize;
            let gamma_c = match opt_f64(eo, "gamma_c", "ensemble")? {
                Some(g) => g,
                None => channels
                    .first()
                    .map(|c| c.gamma())
                    .ok_or_else(|| QestError::config("ensemble.gamma_c", "missing"))?,
            };
            Some(EnsembleSettings { n_copies, gamma_c })
        }
    };

    let spec = ScenarioSpec {
        name: match obj.get("name") {
            None | Some(Value::Null) => None,
            Some(Value::String(s)) => Some(s.clone()),
            Some(_) => return Err(QestError::config("name", "expected a string")),
        },
        dimension,
        hamiltonian,
        channels,
        rho0,
        rho_e0,
        integrator,
        horizon: opt_f64(obj, "horizon", "$")?.unwrap_or(DEFAULT_HORIZON),
        n_trajectories: opt_u64(obj, "n_trajectories", "$")?.unwrap_or(1) as usize,
        seed: opt_u64(obj, "seed", "$")?.unwrap_or(0),
        tolerances,
        track_pure_estimate: opt_bool(obj, "track_pure_estimate", "$")?.unwrap_or(false),
        cycle,
        ensemble,
    };
    spec.validate()?;
    Ok(spec)
}

/// State vector for a matrix literal known to be pure.
pub fn dominant_vector(m: &DensityMatrix) -> Result<PureState> {
    let spec = eigh(m.matrix());
    let d = m.dim();
    PureState::normalized(ComplexVector::from_fn(d, |i, _| spec.vectors[(i, d - 1)]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::frobenius;

    #[test]
    fn qubit_rabi_preset() {
        let s = preset("qubit_rabi").unwrap();
        assert_eq!(s.dimension, 2);
        assert!(frobenius(&(s.hamiltonian.matrix() - Observable::pauli_x().scaled(0.5).matrix())) == 0.0);
        assert_eq!(s.channels.len(), 1);
        assert_eq!(s.channels[0].obs(), &Observable::pauli_z());
        assert_eq!((s.channels[0].gamma(), s.channels[0].eta()), (1.0, 1.0));
        assert_eq!(s.rho_e0, StateInit::MaximallyMixed);
    }

    #[test]
    fn all_presets_parse() {
        for p in PRESETS {
            preset(p).unwrap();
        }
        assert!(preset("nope").is_err());
    }

    #[test]
    fn defaults_filled() {
        let s = parse_config(r#"{"dimension": 3, "channels": [{"observable": [[1,0,0],[0,0,0],[0,0,-1]], "gamma": 2.0}], "rho0": "basis_1"}"#).unwrap();
        assert_eq!(s.rho_e0, StateInit::MaximallyMixed);
        assert_eq!(s.channels[0].eta(), 1.0);
        assert_eq!(s.integrator.dt, 1e-3 / 2.0);
        assert!(s.hamiltonian.is_zero());
    }

    #[test]
    fn eta_out_of_range_has_field_path() {
        let err = parse_config(r#"{"preset": "qubit_rabi", "channels": [{"observable": "sigma_z", "gamma": 1.0, "eta": 1.5}]}"#)
            .unwrap_err();
        match err {
            QestError::Config { path, .. } => assert_eq!(path, "channels[0].eta"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_hermitian_rejected_with_path() {
        let err = parse_config(
            r#"{"dimension": 2, "hamiltonian": [[[0,0],[1,0]],[[0,0],[0,0]]], "channels": [], "rho0": "basis_0"}"#,
        )
        .unwrap_err();
        match err {
            QestError::Config { path, message } => {
                assert_eq!(path, "hamiltonian");
                assert!(message.contains("Hermitian"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let err = parse_config(
            r#"{"dimension": 3, "channels": [{"observable": "sigma_z", "gamma": 1}], "rho0": "basis_0"}"#,
        )
        .unwrap_err();
        assert!(matches!(err, QestError::Config { ref path, .. } if path == "channels[0].observable"));
    }

    #[test]
    fn unknown_field_rejected() {
        let err = parse_config(r#"{"preset": "qubit_rabi", "horizn": 3}"#).unwrap_err();
        assert!(matches!(err, QestError::Config { ref path, .. } if path == "horizn"));
    }

    #[test]
    fn stability_guard_enforced() {
        let err = parse_config(r#"{"preset": "qubit_rabi", "integrator": {"dt": 0.05}}"#).unwrap_err();
        assert!(matches!(err, QestError::Config { ref path, .. } if path == "integrator"));
    }

    #[test]
    fn resolved_config_round_trips() {
        for p in PRESETS {
            let s = preset(p).unwrap();
            let text = serde_json::to_string(&s.to_json()).unwrap();
            let back = parse_config(&text).unwrap();
            assert_eq!(back, s, "preset {p}");
        }
    }

    #[test]
    fn matrix_state_literal() {
        let s = parse_config(
            r#"{"dimension": 2, "channels": [], "rho0": [[[0.5,0],[0.5,0]],[[0.5,0],[0.5,0]]], "rho_e0": "basis_1", "track_pure_estimate": true}"#,
        )
        .unwrap();
        let mut noise = NoiseStream::new(0, 0);
        let st = s.initial_state(&mut noise).unwrap();
        assert!(st.psi_e.is_some());
        assert!((st.rho.purity() - 1.0).abs() < 1e-12);
        let psi = dominant_vector(&st.rho).unwrap();
        assert!(frobenius(&(psi.projector().matrix() - st.rho.matrix())) < 1e-12);
    }
}
