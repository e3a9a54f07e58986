//! Stationary event-log simulation by Poisson-cluster growth and by Ogata
//! thinning, plus the replicate runner used by the Monte Carlo harnesses.

use std::collections::{HashSet, VecDeque};
use std::fmt;
use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel::{Kernel, KernelError};
use crate::model::{HawkesModel, ModelError, ModelSummary};

pub const MAX_GENERATIONS: usize = 10_000;
pub const DEFAULT_BURN_IN_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("cluster exceeded {MAX_GENERATIONS} generations")]
    GenerationCap,
    #[error("thinning bound violated at t = {time}: intensity {intensity} > bound {bound}")]
    BoundViolated { time: f64, intensity: f64, bound: f64 },
}

impl SimError {
    pub fn is_hypothesis(&self) -> bool {
        matches!(self, SimError::Model(e) if e.is_hypothesis())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Simulator {
    #[default]
    Cluster,
    Thinning,
}

impl fmt::Display for Simulator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Simulator::Cluster => "cluster",
            Simulator::Thinning => "thinning",
        })
    }
}

/// Horizon, burn-in and RNG coordinates of one simulation run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunConfig {
    pub horizon: f64,
    /// `None` selects [`default_burn_in`].
    pub burn_in: Option<f64>,
    pub seed: u64,
    /// Independent stream index, normally the replicate number.
    pub stream: u64,
}

impl RunConfig {
    pub fn new(horizon: f64, seed: u64) -> Self {
        Self { horizon, burn_in: None, seed, stream: 0 }
    }

    pub fn burn_in(mut self, b: f64) -> Self {
        self.burn_in = Some(b);
        self
    }

    pub fn stream(mut self, stream: u64) -> Self {
        self.stream = stream;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventMeta {
    pub seed: u64,
    pub stream: u64,
    pub simulator: Simulator,
    pub burn_in: f64,
    pub horizon: f64,
}

/// Per-component event times on `[0, T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EventLog {
    pub events: Vec<Vec<f64>>,
    pub meta: EventMeta,
}

impl EventLog {
    pub fn dim(&self) -> usize {
        self.events.len()
    }

    pub fn horizon(&self) -> f64 {
        self.meta.horizon
    }

    pub fn total(&self) -> usize {
        self.events.iter().map(Vec::len).sum()
    }

    /// `N_i((a, b])`.
    pub fn count(&self, i: usize, a: f64, b: f64) -> Result<usize, SimError> {
        if i >= self.dim() {
            return Err(SimError::Domain(format!("component {i} out of range (d = {})", self.dim())));
        }
        if !(a >= 0.0 && b <= self.horizon() && a <= b) {
            return Err(SimError::Domain(format!(
                "interval ({a}, {b}] is not inside the window [0, {}]",
                self.horizon()
            )));
        }
        let times = &self.events[i];
        Ok(times.partition_point(|&t| t <= b) - times.partition_point(|&t| t <= a))
    }

    /// CSV rows `component,time` in time order, optionally preceded by a
    /// `# ` comment line.
    pub fn write_csv<W: Write>(&self, mut w: W, comment: Option<&str>) -> io::Result<()> {
        if let Some(c) = comment {
            writeln!(w, "# {c}")?;
        }
        writeln!(w, "component,time")?;
        let mut merged: Vec<(f64, usize)> = self
            .events
            .iter()
            .enumerate()
            .flat_map(|(i, ts)| ts.iter().map(move |&t| (t, i)))
            .collect();
        merged.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for (t, i) in merged {
            writeln!(w, "{i},{t}")?;
        }
        Ok(())
    }
}

/// One individual of a simulated cluster population.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceEntry {
    pub time: f64,
    pub component: usize,
    pub generation: usize,
    /// Index of the parent in the same trace, `None` for immigrants.
    pub parent: Option<usize>,
}

/// Full ancestry of a cluster simulation, including individuals outside the
/// observation window.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ClusterTrace {
    pub entries: Vec<TraceEntry>,
}

/// Deterministic RNG for `(seed, stream)`.
pub fn rng_for(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Burn-in with the default tail tolerance.
pub fn default_burn_in(model: &HawkesModel, summary: &ModelSummary) -> f64 {
    burn_in_with_tolerance(model, summary, DEFAULT_BURN_IN_TOLERANCE)
}

/// Larger of (a) the smallest `B` whose total kernel tail mass beyond `B` is
/// below `tolerance · min η` and (b) ten times the mean delay scaled by the
/// expected number of generations `1 / (1 - ρ)`.
pub fn burn_in_with_tolerance(model: &HawkesModel, summary: &ModelSummary, tolerance: f64) -> f64 {
    let kernels: Vec<&Kernel> = model.kernels.iter().flatten().filter(|k| !k.is_zero()).collect();
    if kernels.is_empty() {
        return 0.0;
    }
    let min_eta = model.eta.iter().copied().fold(f64::INFINITY, f64::min);
    let target = tolerance * min_eta;
    let tail = |b: f64| kernels.iter().map(|k| k.tail_mass(b)).sum::<f64>();
    let mut hi = 1.0;
    while tail(hi) >= target && hi < 1e15 {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if tail(mid) < target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let mean_delay = kernels
        .iter()
        .map(|k| k.moment(1.0).unwrap_or(f64::INFINITY))
        .fold(0.0, f64::max);
    hi.max(10.0 * mean_delay / (1.0 - summary.spectral_radius))
}

fn resolve_burn_in(model: &HawkesModel, summary: &ModelSummary, cfg: &RunConfig) -> Result<f64, SimError> {
    if !(cfg.horizon.is_finite() && cfg.horizon > 0.0) {
        return Err(SimError::Domain(format!("horizon must be finite and > 0, got {}", cfg.horizon)));
    }
    match cfg.burn_in {
        Some(b) if b.is_finite() && b >= 0.0 => Ok(b),
        Some(b) => Err(SimError::Domain(format!("burn-in must be finite and >= 0, got {b}"))),
        None => Ok(default_burn_in(model, summary)),
    }
}

fn record_time(seen: &mut HashSet<u64>, t: f64) -> bool {
    // +0.0 and -0.0 compare equal; store one representation.
    let t = if t == 0.0 { 0.0 } else { t };
    seen.insert(t.to_bits())
}

/// Grows every cluster rooted at `entries` (generation-0 individuals already
/// pushed) until extinction.
fn grow<R: Rng>(
    model: &HawkesModel,
    entries: &mut Vec<TraceEntry>,
    seen: &mut HashSet<u64>,
    rng: &mut R,
) -> Result<(), SimError> {
    let d = model.dim();
    let offspring: Vec<Vec<Option<Poisson<f64>>>> = model
        .kernels
        .iter()
        .map(|row| {
            row.iter()
                .map(|k| {
                    let mass = k.l1_norm();
                    (mass > 0.0).then(|| Poisson::new(mass).expect("positive finite mean"))
                })
                .collect()
        })
        .collect();
    let mut next = 0;
    while next < entries.len() {
        let parent = entries[next];
        let generation = parent.generation + 1;
        for j in 0..d {
            let Some(law) = &offspring[parent.component][j] else { continue };
            let kernel = &model.kernels[parent.component][j];
            let n = law.sample(rng) as u64;
            if n > 0 && generation > MAX_GENERATIONS {
                return Err(SimError::GenerationCap);
            }
            for _ in 0..n {
                let time = loop {
                    let t = parent.time + kernel.sample_inter_arrival(rng)?;
                    if record_time(seen, t) {
                        break t;
                    }
                };
                entries.push(TraceEntry { time, component: j, generation, parent: Some(next) });
            }
        }
        next += 1;
    }
    Ok(())
}

fn window_log(entries: &[TraceEntry], d: usize, meta: EventMeta) -> EventLog {
    let mut events = vec![Vec::new(); d];
    for e in entries {
        if e.time >= 0.0 && e.time <= meta.horizon {
            events[e.component].push(e.time);
        }
    }
    for ts in &mut events {
        ts.sort_by(f64::total_cmp);
    }
    EventLog { events, meta }
}

pub fn simulate_cluster(model: &HawkesModel, cfg: &RunConfig) -> Result<EventLog, SimError> {
    Ok(simulate_cluster_traced(model, cfg)?.0)
}

/// Poisson-cluster simulation returning the ancestry of every individual.
pub fn simulate_cluster_traced(model: &HawkesModel, cfg: &RunConfig) -> Result<(EventLog, ClusterTrace), SimError> {
    let summary = model.validate()?;
    let burn_in = resolve_burn_in(model, &summary, cfg)?;
    let mut rng = rng_for(cfg.seed, cfg.stream);
    let span = cfg.horizon + burn_in;
    let mut entries = Vec::new();
    let mut seen = HashSet::new();
    for (j, &eta) in model.eta.iter().enumerate() {
        let n = Poisson::new(eta * span)
            .map_err(|e| SimError::Domain(format!("immigrant count: {e}")))?
            .sample(&mut rng) as u64;
        for _ in 0..n {
            let time = loop {
                let t = -burn_in + span * rng.random::<f64>();
                if record_time(&mut seen, t) {
                    break t;
                }
            };
            entries.push(TraceEntry { time, component: j, generation: 0, parent: None });
        }
    }
    grow(model, &mut entries, &mut seen, &mut rng)?;
    let meta = EventMeta {
        seed: cfg.seed,
        stream: cfg.stream,
        simulator: Simulator::Cluster,
        burn_in,
        horizon: cfg.horizon,
    };
    let log = window_log(&entries, model.dim(), meta);
    Ok((log, ClusterTrace { entries }))
}

/// Descendants of a single type-`ancestor` individual born at time 0.
pub fn simulate_single_cluster<R: Rng>(
    model: &HawkesModel,
    ancestor: usize,
    rng: &mut R,
) -> Result<ClusterTrace, SimError> {
    model.validate()?;
    if ancestor >= model.dim() {
        return Err(SimError::Domain(format!("ancestor type {ancestor} out of range")));
    }
    let mut entries = vec![TraceEntry { time: 0.0, component: ancestor, generation: 0, parent: None }];
    let mut seen = HashSet::from([0.0f64.to_bits()]);
    grow(model, &mut entries, &mut seen, rng)?;
    Ok(ClusterTrace { entries })
}

/// Running contribution of one source component to one target intensity.
enum Excitation {
    None,
    Exponential { jump: f64, beta: f64, value: f64, last: f64 },
    Window { height: f64, support: f64, times: VecDeque<f64> },
    History { kernel: Kernel, times: Vec<f64> },
}

impl Excitation {
    fn new(kernel: &Kernel) -> Self {
        match *kernel {
            Kernel::Zero => Excitation::None,
            Kernel::Exponential { alpha, beta } => Excitation::Exponential {
                jump: alpha * beta,
                beta,
                value: 0.0,
                last: f64::NEG_INFINITY,
            },
            Kernel::Uniform { alpha, support } => Excitation::Window {
                height: alpha / support,
                support,
                times: VecDeque::new(),
            },
            Kernel::PowerLaw { .. } => Excitation::History { kernel: *kernel, times: Vec::new() },
        }
    }

    /// Contribution at `s`, counting events at times `≤ s`. Queries must come
    /// with nondecreasing `s`.
    fn value(&mut self, s: f64) -> f64 {
        match self {
            Excitation::None => 0.0,
            Excitation::Exponential { beta, value, last, .. } => {
                if *value == 0.0 {
                    0.0
                } else {
                    *value * (-*beta * (s - *last)).exp()
                }
            }
            Excitation::Window { height, support, times } => {
                while times.front().is_some_and(|&t| s - t > *support) {
                    times.pop_front();
                }
                *height * times.len() as f64
            }
            Excitation::History { kernel, times } => times.iter().map(|&t| kernel.density_unchecked(s - t)).sum(),
        }
    }

    fn push(&mut self, t: f64) {
        match self {
            Excitation::None => {}
            Excitation::Exponential { .. } => {
                let current = self.value(t);
                if let Excitation::Exponential { jump, value, last, .. } = self {
                    *value = current + *jump;
                    *last = t;
                }
            }
            Excitation::Window { times, .. } => times.push_back(t),
            Excitation::History { times, .. } => times.push(t),
        }
    }
}

/// Ogata thinning against the right-limit intensity at the last candidate,
/// which dominates the intensity until the next event because every kernel
/// is non-increasing.
pub fn simulate_thinning(model: &HawkesModel, cfg: &RunConfig) -> Result<EventLog, SimError> {
    let summary = model.validate()?;
    let burn_in = resolve_burn_in(model, &summary, cfg)?;
    let d = model.dim();
    let mut rng = rng_for(cfg.seed, cfg.stream);
    let mut exc: Vec<Vec<Excitation>> = model
        .kernels
        .iter()
        .map(|row| row.iter().map(Excitation::new).collect())
        .collect();
    let mut intensity = vec![0.0; d];
    let eval = |exc: &mut Vec<Vec<Excitation>>, s: f64, out: &mut Vec<f64>| -> f64 {
        let mut total = 0.0;
        for j in 0..d {
            let mut lam = model.eta[j];
            for row in exc.iter_mut() {
                lam += row[j].value(s);
            }
            out[j] = lam;
            total += lam;
        }
        total
    };
    let mut events = vec![Vec::new(); d];
    let mut t = -burn_in;
    let mut bound = eval(&mut exc, t, &mut intensity);
    loop {
        let wait = -(1.0 - rng.random::<f64>()).ln() / bound;
        let s = t + wait;
        if s > cfg.horizon {
            break;
        }
        let total = eval(&mut exc, s, &mut intensity);
        if total > bound * (1.0 + 1e-12) {
            return Err(SimError::BoundViolated { time: s, intensity: total, bound });
        }
        let u = rng.random::<f64>() * bound;
        let mut acc = 0.0;
        let mut accepted = None;
        for (j, &lam) in intensity.iter().enumerate() {
            acc += lam;
            if u < acc {
                accepted = Some(j);
                break;
            }
        }
        if let Some(j) = accepted {
            for row in exc[j].iter_mut() {
                row.push(s);
            }
            if s >= 0.0 {
                events[j].push(s);
            }
            bound = eval(&mut exc, s, &mut intensity);
        } else {
            bound = total;
        }
        t = s;
    }
    Ok(EventLog {
        events,
        meta: EventMeta {
            seed: cfg.seed,
            stream: cfg.stream,
            simulator: Simulator::Thinning,
            burn_in,
            horizon: cfg.horizon,
        },
    })
}

pub fn simulate(model: &HawkesModel, cfg: &RunConfig, simulator: Simulator) -> Result<EventLog, SimError> {
    match simulator {
        Simulator::Cluster => simulate_cluster(model, cfg),
        Simulator::Thinning => simulate_thinning(model, cfg),
    }
}

/// Runs `job(replicate)` for `0..replicates` on the rayon pool and returns
/// the results in replicate order.
pub fn run_replicates<T, E, F>(replicates: usize, job: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(u64) -> Result<T, E> + Sync + Send,
{
    (0..replicates as u64).into_par_iter().map(job).collect()
}
