//! Monte-Carlo simulation of handover counts and parameter sweeps.
//!
//! One iteration samples a deployment and the vehicle departures, moves
//! every vehicle tic by tic over a faded channel and runs one handover state
//! machine per [`Variant`] on the same channel draws. Sweeping
//! time-to-trigger values or predictors therefore compares them on
//! identical trajectories.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::deployment::{angular_difference, bearing, sample_ppp_deployment, screening_angle, Area, Deployment, ScnSite, SiteTemplate};
use crate::handover::{select_target, CandidateSets, FsmEvent, HandoverFsm, HandoverParams};
use crate::ml::{ModelKind, RoutePredictor, RouteQuery};
use crate::mobility::{build_route_network, sample_departures, Route, RouteNetwork, TimePeriodDemand, VuePlan, VueState};
use crate::radio::{LinkSnapshot, RadioParams};
use crate::{Error, Result, SiteId, NUM_ROUTES};

const DEPLOYMENT_STREAM: u64 = 1;
const DEPARTURE_STREAM: u64 = 2;
const FADING_STREAM: u64 = 1000;

/// Route predictor used for candidate screening. `None` is the
/// conventional scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PredictorKind {
    None,
    Svm,
    Dtc,
    Rfc,
    Oracle,
}

impl PredictorKind {
    pub fn name(&self) -> &'static str {
        match self {
            PredictorKind::None => "none",
            PredictorKind::Svm => "svm",
            PredictorKind::Dtc => "dtc",
            PredictorKind::Rfc => "rfc",
            PredictorKind::Oracle => "oracle",
        }
    }

    pub fn model_kind(&self) -> Option<ModelKind> {
        match self {
            PredictorKind::None => None,
            PredictorKind::Svm => Some(ModelKind::Svm),
            PredictorKind::Dtc => Some(ModelKind::Dtc),
            PredictorKind::Rfc => Some(ModelKind::Rfc),
            PredictorKind::Oracle => Some(ModelKind::Oracle),
        }
    }
}

impl fmt::Display for PredictorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PredictorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(PredictorKind::None),
            "svm" => Ok(PredictorKind::Svm),
            "dtc" => Ok(PredictorKind::Dtc),
            "rfc" => Ok(PredictorKind::Rfc),
            "oracle" => Ok(PredictorKind::Oracle),
            other => Err(Error::InvalidArgument(format!(
                "unknown predictor `{other}` (expected none, svm, dtc, rfc or oracle)"
            ))),
        }
    }
}

/// Everything a simulation run needs apart from the trained models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub area: Area,
    pub density_per_km2: f64,
    /// Evaluate links on the torus spanned by the area.
    pub wrap_around: bool,
    pub site: SiteTemplate,
    pub velocity_kmh: f64,
    pub predictor: PredictorKind,
    pub horizon_ms: u64,
    pub tic_ms: u64,
    pub iterations: usize,
    pub master_seed: u64,
    pub load_scale: f64,
    pub radio: RadioParams,
    pub handover: HandoverParams,
    pub demands: Vec<TimePeriodDemand>,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.area.validate()?;
        self.radio.validate()?;
        self.handover.validate()?;
        if !(self.density_per_km2 > 0.0) {
            return Err(Error::config("deployment.density_per_km2", "must be > 0"));
        }
        if !(self.velocity_kmh > 0.0) {
            return Err(Error::config("simulation.velocity_kmh", "must be > 0"));
        }
        if self.tic_ms == 0 || self.horizon_ms % self.tic_ms != 0 {
            return Err(Error::config("mobility.horizon_ms", "must be a positive multiple of tic_ms"));
        }
        if self.iterations < 1 {
            return Err(Error::config("simulation.iterations", "must be >= 1"));
        }
        if !(self.load_scale > 0.0) {
            return Err(Error::config("simulation.load_scale", "must be > 0"));
        }
        if self.demands.is_empty() {
            return Err(Error::config("mobility.demands", "at least one period is required"));
        }
        self.demands.iter().try_for_each(TimePeriodDemand::validate)
    }

    fn n_tics(&self) -> usize {
        (self.horizon_ms / self.tic_ms) as usize
    }

    /// Seed of iteration `i`.
    pub fn iteration_seed(&self, i: usize) -> u64 {
        self.master_seed ^ i as u64
    }
}

/// Trained route predictors by kind. The oracle is always available.
#[derive(Debug, Clone, Default)]
pub struct ModelSet {
    models: BTreeMap<ModelKind, RoutePredictor>,
}

impl ModelSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, model: RoutePredictor) {
        self.models.insert(model.kind(), model);
    }

    pub fn with(mut self, model: RoutePredictor) -> Self {
        self.insert(model);
        self
    }

    /// Predictor for `kind`; `None` for the conventional scheme.
    pub fn get(&self, kind: PredictorKind) -> Result<Option<RoutePredictor>> {
        match kind.model_kind() {
            None => Ok(None),
            Some(ModelKind::Oracle) => Ok(Some(RoutePredictor::oracle())),
            Some(k) => self
                .models
                .get(&k)
                .cloned()
                .map(Some)
                .ok_or_else(|| Error::InvalidArgument(format!("no trained {k} model was supplied"))),
        }
    }
}

/// One handover configuration evaluated on shared trajectories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Variant {
    pub predictor: PredictorKind,
    pub ttt_tics: u32,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct IterationResult {
    pub ho_times: u64,
    pub rlf_count: u64,
    /// Sum over executed handovers of the serving SINR right after execution.
    pub ho_sinr_sum_db: f64,
}

impl IterationResult {
    /// Mean post-handover SINR, undefined without handovers.
    pub fn ho_avg_sinr_db(&self) -> Option<f64> {
        (self.ho_times > 0).then(|| self.ho_sinr_sum_db / self.ho_times as f64)
    }

    fn add(&mut self, o: &IterationResult) {
        self.ho_times += o.ho_times;
        self.rlf_count += o.rlf_count;
        self.ho_sinr_sum_db += o.ho_sinr_sum_db;
    }
}

/// Predicted route and screening axis for every (period, true route, tic).
/// Vehicles on the same route at the same velocity share their trajectory,
/// so one table serves all vehicles of an iteration.
#[derive(Debug, Clone)]
pub struct PredictionTable {
    n_tics: usize,
    axis: Vec<f64>,
    routes: Vec<u8>,
}

impl PredictionTable {
    pub fn build(
        model: &RoutePredictor,
        network: &RouteNetwork,
        velocity_kmh: f64,
        periods: usize,
        n_tics: usize,
        tic_ms: u64,
    ) -> Result<Self> {
        let stride = n_tics + 1;
        let cells = periods * NUM_ROUTES;
        let chunks: Vec<(Vec<f64>, Vec<u8>)> = (0..cells)
            .into_par_iter()
            .map(|cell| {
                let (period, route_id) = ((cell / NUM_ROUTES) as u8, (cell % NUM_ROUTES) as u8);
                let route = network.route(route_id);
                let plan = VuePlan {
                    vue_id: 0,
                    route_id,
                    period,
                    depart_time_ms: 0,
                    velocity_kmh,
                };
                let mut vue = VueState::spawn(&plan, route);
                let mut axis = Vec::with_capacity(stride);
                let mut routes = Vec::with_capacity(stride);
                for tic in 0..stride {
                    if tic > 0 {
                        vue.advance(route, tic_ms)?;
                    }
                    let predicted = model.predict_route(&RouteQuery {
                        x: vue.position.x,
                        y: vue.position.y,
                        period,
                        t_ms: vue.elapsed_ms,
                        true_route: route_id,
                    });
                    let (_, _, heading) = network.route(predicted).nearest(vue.position);
                    axis.push(heading);
                    routes.push(predicted);
                }
                Ok((axis, routes))
            })
            .collect::<Result<_>>()?;
        let (mut axis, mut routes) = (Vec::with_capacity(cells * stride), Vec::with_capacity(cells * stride));
        for (a, r) in chunks {
            axis.extend(a);
            routes.extend(r);
        }
        Ok(Self { n_tics, axis, routes })
    }

    fn index(&self, period: u8, route: u8, tic: usize) -> usize {
        (period as usize * NUM_ROUTES + route as usize) * (self.n_tics + 1) + tic
    }

    pub fn predicted_route(&self, period: u8, route: u8, tic: usize) -> u8 {
        self.routes[self.index(period, route, tic)]
    }

    pub fn axis_heading(&self, period: u8, route: u8, tic: usize) -> f64 {
        self.axis[self.index(period, route, tic)]
    }
}

/// Mean in-range link powers and geometry along one route, per tic. All
/// vehicles on a route share the trajectory within an iteration, so only
/// the fading differs between them.
#[derive(Debug, Default)]
struct RouteLinks {
    start: Vec<usize>,
    ids: Vec<SiteId>,
    mean_mw: Vec<f64>,
    dist: Vec<f64>,
    bearing: Vec<f64>,
}

impl RouteLinks {
    fn build(
        route: &Route,
        velocity_kmh: f64,
        sites: &[ScnSite],
        radio: &RadioParams,
        wrap: Option<Area>,
        n_tics: usize,
        tic_ms: u64,
    ) -> Result<Self> {
        let plan = VuePlan {
            vue_id: 0,
            route_id: route.id(),
            period: 0,
            depart_time_ms: 0,
            velocity_kmh,
        };
        let mut vue = VueState::spawn(&plan, route);
        let mut snap = LinkSnapshot::new(wrap);
        let mut links = Self {
            start: vec![0],
            ..Self::default()
        };
        for tic in 0..=n_tics {
            if tic > 0 {
                vue.advance(route, tic_ms)?;
            }
            snap.refresh(vue.position, sites, radio, |_| 1.0);
            for id in snap.in_range() {
                let p = snap.site_position(vue.position, &sites[id]);
                links.ids.push(id);
                links.mean_mw.push(snap.rx_mw(id).expect("site is in range"));
                links.dist.push(vue.position.distance(&p));
                links.bearing.push(bearing(vue.position, p).unwrap_or(0.0));
            }
            links.start.push(links.ids.len());
            if vue.finished {
                break;
            }
        }
        Ok(links)
    }

    fn range(&self, tic: usize) -> std::ops::Range<usize> {
        self.start[tic]..self.start[tic + 1]
    }

    fn powers(&self, tic: usize) -> impl Iterator<Item = (SiteId, f64)> + '_ {
        let r = self.range(tic);
        self.ids[r.clone()].iter().copied().zip(self.mean_mw[r].iter().copied())
    }
}

/// Per-tic view of the in-range sites: SINR, 2D distance and bearing.
#[derive(Debug, Default)]
struct TicView {
    ids: Vec<SiteId>,
    sinr: Vec<f64>,
    dist: Vec<f64>,
    bearing: Vec<f64>,
}

impl TicView {
    fn rebuild(&mut self, snap: &LinkSnapshot, links: &RouteLinks, tic: usize) {
        let r = links.range(tic);
        self.ids.clear();
        self.ids.extend_from_slice(&links.ids[r.clone()]);
        self.dist.clear();
        self.dist.extend_from_slice(&links.dist[r.clone()]);
        self.bearing.clear();
        self.bearing.extend_from_slice(&links.bearing[r]);
        self.sinr.clear();
        self.sinr
            .extend(self.ids.iter().map(|&id| snap.in_range_sinr_db(id).expect("site is in range")));
    }

    fn slot(&self, id: SiteId) -> Option<usize> {
        self.ids.binary_search(&id).ok()
    }

    fn sinr_of(&self, id: SiteId) -> Option<f64> {
        self.slot(id).map(|k| self.sinr[k])
    }

    /// Highest-SINR site, ties to the lowest id.
    fn best(&self) -> Option<SiteId> {
        let mut best: Option<(SiteId, f64)> = None;
        for (&id, &v) in self.ids.iter().zip(&self.sinr) {
            if best.is_none_or(|(_, bv)| v > bv) {
                best = Some((id, v));
            }
        }
        best.map(|(id, _)| id)
    }

    fn in_cone(&self, id: SiteId, axis: f64, half: f64, radius: f64) -> bool {
        let k = self.slot(id).expect("candidate is in range");
        let d = self.dist[k];
        d <= radius && (d == 0.0 || angular_difference(self.bearing[k], axis) <= half)
    }
}

struct Agent {
    fsm: Option<HandoverFsm>,
    params: HandoverParams,
    low_tics: u32,
    result: IterationResult,
}

struct Cone {
    axis: f64,
    half: f64,
    radius: f64,
}

impl Agent {
    fn new(params: HandoverParams) -> Self {
        Self {
            fsm: None,
            params,
            low_tics: 0,
            result: IterationResult::default(),
        }
    }

    fn attach(&mut self, serving: SiteId, sinr_min: f64) -> Result<()> {
        self.fsm = Some(HandoverFsm::new(serving, self.params, sinr_min)?);
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn tick(
        &mut self,
        view: &TicView,
        snap: &LinkSnapshot,
        sites: &[ScnSite],
        vue: &VueState,
        radio: &RadioParams,
        cone: Option<&Cone>,
        cands: &mut CandidateSets,
    ) -> Result<Option<(SiteId, SiteId, f64, FsmEvent)>> {
        let Some(fsm) = self.fsm.as_mut() else {
            if let Some(best) = view.best() {
                self.attach(best, radio.sinr_min_db)?;
            }
            return Ok(None);
        };
        let serving = fsm.serving_scn;
        let serving_sinr = view
            .sinr_of(serving)
            .unwrap_or_else(|| snap.sinr_db(serving, sites, vue.position, radio));
        cands.fill_by(serving, view.ids.iter().copied(), |id| {
            cone.is_none_or(|c| view.in_cone(id, c.axis, c.half, c.radius))
        });
        let sel = select_target(cands, |id| view.sinr_of(id).expect("candidate is in range"), serving_sinr);
        let event = fsm.step(sel.target, sel.best_sinr, serving_sinr);
        if event == FsmEvent::Executed {
            self.result.ho_times += 1;
            self.result.ho_sinr_sum_db += view.sinr_of(fsm.serving_scn).expect("target is in range");
            self.low_tics = 0;
        } else if serving_sinr < radio.sinr_min_db {
            self.low_tics += 1;
            if self.low_tics >= self.params.rlf_tics {
                self.low_tics = 0;
                self.result.rlf_count += 1;
                if let Some(best) = view.best() {
                    fsm.reattach(best);
                }
            }
        } else {
            self.low_tics = 0;
        }
        Ok(Some((serving, sel.target, sel.best_sinr, event)))
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Simulation context shared by the iterations of a run: configuration,
/// route network and one prediction table per predictor and velocity.
pub struct Simulator {
    cfg: SimConfig,
    network: RouteNetwork,
    models: ModelSet,
    tables: BTreeMap<(PredictorKind, u64), PredictionTable>,
}

impl Simulator {
    pub fn new(cfg: SimConfig, models: ModelSet) -> Result<Self> {
        cfg.validate()?;
        let network = build_route_network(&cfg.area)?;
        Ok(Self {
            cfg,
            network,
            models,
            tables: BTreeMap::new(),
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn network(&self) -> &RouteNetwork {
        &self.network
    }

    /// Builds (once) the prediction tables needed for `variants` at
    /// `velocity_kmh`.
    pub fn prepare(&mut self, velocity_kmh: f64, variants: &[Variant]) -> Result<()> {
        for v in variants {
            let key = (v.predictor, velocity_kmh.to_bits());
            if self.tables.contains_key(&key) {
                continue;
            }
            if let Some(model) = self.models.get(v.predictor)? {
                let table = PredictionTable::build(
                    &model,
                    &self.network,
                    velocity_kmh,
                    self.cfg.demands.len(),
                    self.cfg.n_tics(),
                    self.cfg.tic_ms,
                )?;
                self.tables.insert(key, table);
            }
        }
        Ok(())
    }

    /// Deployment sampled for iteration `seed`.
    pub fn sample_deployment(&self, seed: u64) -> Result<Deployment> {
        let sites = sample_ppp_deployment(
            self.cfg.density_per_km2,
            self.cfg.area,
            &self.cfg.site,
            stream_seed(seed, DEPLOYMENT_STREAM),
        )?;
        Ok(sites)
    }

    /// Runs one iteration for every variant on shared trajectories and
    /// channel draws. `deployment` overrides the sampled one; `trace`
    /// receives per-tic rows of the first variant.
    pub fn run_iteration(
        &self,
        velocity_kmh: f64,
        variants: &[Variant],
        seed: u64,
        deployment: Option<&Deployment>,
        mut trace: Option<&mut dyn Write>,
    ) -> Result<Vec<IterationResult>> {
        if variants.is_empty() {
            return Err(Error::InvalidArgument("at least one variant is required".into()));
        }
        let cfg = &self.cfg;
        let mut tables = Vec::with_capacity(variants.len());
        for v in variants {
            if v.ttt_tics == 0 {
                return Err(Error::InvalidArgument("ttt must be >= 1".into()));
            }
            match v.predictor {
                PredictorKind::None => tables.push(None),
                p => tables.push(Some(self.tables.get(&(p, velocity_kmh.to_bits())).ok_or_else(|| {
                    Error::InvalidArgument(format!("prediction table for {p} at {velocity_kmh} km/h was not prepared"))
                })?)),
            }
        }
        let sampled;
        let deployment = match deployment {
            Some(d) => d,
            None => {
                sampled = self.sample_deployment(seed)?;
                &sampled
            }
        };
        let sites = deployment.sites();
        let radio = &cfg.radio;
        let half = screening_angle(velocity_kmh)? / 2.0;
        let radius = cfg.handover.screening_distance_m.min(radio.communication_range_m);
        let wrap = cfg.wrap_around.then_some(cfg.area);
        let links: Vec<RouteLinks> = self
            .network
            .routes()
            .iter()
            .map(|r| RouteLinks::build(r, velocity_kmh, sites, radio, wrap, cfg.n_tics(), cfg.tic_ms))
            .collect::<Result<_>>()?;

        if let Some(w) = trace.as_deref_mut() {
            writeln!(w, "{TRACE_HEADER}").map_err(|e| Error::io("trace", e))?;
        }

        let mut totals = vec![IterationResult::default(); variants.len()];
        let mut snap = LinkSnapshot::new(wrap);
        let mut view = TicView::default();
        let mut cands = CandidateSets::default();
        let mut next_id = 0;
        for (period, demand) in cfg.demands.iter().enumerate() {
            let plans = sample_departures(
                &demand.scaled(cfg.load_scale),
                period as u8,
                velocity_kmh,
                next_id,
                stream_seed(seed, DEPARTURE_STREAM + period as u64),
            );
            next_id += plans.len();
            for plan in &plans {
                let route = self.network.route(plan.route_id);
                let mut vue = VueState::spawn(plan, route);
                let mut fading = stream_rng(seed, FADING_STREAM + plan.vue_id as u64);
                let mut agents: Vec<Agent> = variants
                    .iter()
                    .map(|v| {
                        Agent::new(HandoverParams {
                            ttt_tics: v.ttt_tics,
                            ..cfg.handover
                        })
                    })
                    .collect();

                let route_links = &links[plan.route_id as usize];
                snap.load(radio, route_links.powers(0), |_| 1.0);
                view.rebuild(&snap, route_links, 0);
                if let Some(best) = view.best() {
                    for a in &mut agents {
                        a.attach(best, radio.sinr_min_db)?;
                    }
                }

                for tic in 1..=cfg.n_tics() {
                    vue.advance(route, cfg.tic_ms)?;
                    snap.load(radio, route_links.powers(tic), |_| radio.fading.sample_power_gain(&mut fading));
                    view.rebuild(&snap, route_links, tic);
                    for (k, agent) in agents.iter_mut().enumerate() {
                        let cone = tables[k].map(|t| Cone {
                            axis: t.axis_heading(plan.period, plan.route_id, tic),
                            half,
                            radius,
                        });
                        let step = agent.tick(&view, &snap, sites, &vue, radio, cone.as_ref(), &mut cands)?;
                        if k == 0 {
                            if let (Some(w), Some((serving, target, best, event))) = (trace.as_deref_mut(), step) {
                                writeln!(
                                    w,
                                    "{},{},{:.3},{:.3},{},{},{:.4},{}",
                                    vue.id,
                                    tic,
                                    vue.position.x,
                                    vue.position.y,
                                    serving,
                                    target,
                                    best,
                                    event.name()
                                )
                                .map_err(|e| Error::io("trace", e))?;
                            }
                        }
                    }
                    if vue.finished {
                        break;
                    }
                }
                for (t, a) in totals.iter_mut().zip(&agents) {
                    t.add(&a.result);
                }
            }
        }
        Ok(totals)
    }

    /// Runs `cfg.iterations` iterations of the configured velocity and
    /// predictor.
    pub fn simulate(&mut self) -> Result<SimReport> {
        let variant = Variant {
            predictor: self.cfg.predictor,
            ttt_tics: self.cfg.handover.ttt_tics,
        };
        let velocity = self.cfg.velocity_kmh;
        self.prepare(velocity, &[variant])?;
        let this = &*self;
        let per_iteration: Vec<IterationResult> = (0..self.cfg.iterations)
            .into_par_iter()
            .map(|i| Ok(this.run_iteration(velocity, &[variant], this.cfg.iteration_seed(i), None, None)?[0]))
            .collect::<Result<_>>()?;
        Ok(SimReport::new(&self.cfg, per_iteration))
    }
}

pub const TRACE_HEADER: &str = "vue_id,tic,x,y,serving,target,best_sinr_db,event";

fn stream_seed(seed: u64, stream: u64) -> u64 {
    use rand::RngCore;
    stream_rng(seed, stream).next_u64()
}

/// Convenience wrapper: one iteration of `cfg` with the given seed.
pub fn run_simulation(cfg: &SimConfig, models: &ModelSet, seed: u64) -> Result<IterationResult> {
    run_simulation_on(cfg, models, seed, None)
}

/// As [`run_simulation`] on a fixed deployment.
pub fn run_simulation_on(
    cfg: &SimConfig,
    models: &ModelSet,
    seed: u64,
    deployment: Option<&Deployment>,
) -> Result<IterationResult> {
    let mut sim = Simulator::new(cfg.clone(), models.clone())?;
    let variant = Variant {
        predictor: cfg.predictor,
        ttt_tics: cfg.handover.ttt_tics,
    };
    sim.prepare(cfg.velocity_kmh, &[variant])?;
    Ok(sim.run_iteration(cfg.velocity_kmh, &[variant], seed, deployment, None)?[0])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub velocity_kmh: f64,
    pub predictor: PredictorKind,
    pub ttt_tics: u32,
    pub iterations: usize,
    pub master_seed: u64,
    pub ho_times: u64,
    pub mean_ho_times: f64,
    pub rlf_count: u64,
    pub ho_avg_sinr_db: Option<f64>,
    pub per_iteration: Vec<IterationResult>,
}

impl SimReport {
    fn new(cfg: &SimConfig, per_iteration: Vec<IterationResult>) -> Self {
        let mut total = IterationResult::default();
        per_iteration.iter().for_each(|r| total.add(r));
        Self {
            velocity_kmh: cfg.velocity_kmh,
            predictor: cfg.predictor,
            ttt_tics: cfg.handover.ttt_tics,
            iterations: per_iteration.len(),
            master_seed: cfg.master_seed,
            ho_times: total.ho_times,
            mean_ho_times: total.ho_times as f64 / per_iteration.len() as f64,
            rlf_count: total.rlf_count,
            ho_avg_sinr_db: total.ho_avg_sinr_db(),
            per_iteration,
        }
    }
}

/// Percentage reduction of `with` relative to `baseline`.
pub fn reduction_ratio(baseline: f64, with: f64) -> Result<f64> {
    if baseline == 0.0 {
        return Err(Error::UndefinedRatio);
    }
    Ok(100.0 * (baseline - with) / baseline)
}

/// Axes of a campaign grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignGrid {
    pub velocities_kmh: Vec<f64>,
    pub ttt_tics: Vec<u32>,
    pub predictors: Vec<PredictorKind>,
    pub iterations: usize,
}

impl CampaignGrid {
    pub fn validate(&self) -> Result<()> {
        if self.velocities_kmh.is_empty() || self.ttt_tics.is_empty() || self.predictors.is_empty() {
            return Err(Error::InvalidArgument("campaign grid axes must be non-empty".into()));
        }
        if self.velocities_kmh.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::InvalidArgument("velocities must be > 0".into()));
        }
        if self.ttt_tics.contains(&0) {
            return Err(Error::InvalidArgument("ttt values must be >= 1".into()));
        }
        if self.iterations < 1 {
            return Err(Error::InvalidArgument("iterations must be >= 1".into()));
        }
        Ok(())
    }

    fn variants(&self) -> Vec<Variant> {
        let mut out = Vec::new();
        for &predictor in &self.predictors {
            for &ttt_tics in &self.ttt_tics {
                out.push(Variant { predictor, ttt_tics });
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CampaignRow {
    pub predictor: PredictorKind,
    pub velocity_kmh: f64,
    pub ttt_tics: u32,
    pub iteration: usize,
    pub result: IterationResult,
}

pub const CAMPAIGN_HEADER: &str = "predictor,velocity_kmh,ttt_tics,iteration,ho_times,rlf_count,ho_avg_sinr_db";
pub const SUMMARY_HEADER: &str = "predictor,mean_reduction_pct,pooled_reduction_pct";
pub const AGGREGATE_HEADER: &str =
    "predictor,velocity_kmh,ttt_tics,iterations,mean_ho_times,mean_rlf_count,ho_avg_sinr_db,reduction_pct";

/// Mean over iterations of one grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub predictor: PredictorKind,
    pub velocity_kmh: f64,
    pub ttt_tics: u32,
    pub iterations: usize,
    pub mean_ho_times: f64,
    pub mean_rlf_count: f64,
    pub ho_avg_sinr_db: Option<f64>,
    /// Reduction against the conventional scheme in the same cell.
    pub reduction_pct: Option<f64>,
}

/// Reduction of one predictor averaged over the grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictorSummary {
    pub predictor: PredictorKind,
    /// Mean of the per-cell reductions.
    pub mean_reduction_pct: f64,
    /// Reduction of the handover total pooled over all cells.
    pub pooled_reduction_pct: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CampaignTable {
    pub rows: Vec<CampaignRow>,
}

impl CampaignTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CAMPAIGN_HEADER);
        out.push('\n');
        for r in &self.rows {
            let avg = r.result.ho_avg_sinr_db().map(|v| v.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.predictor, r.velocity_kmh, r.ttt_tics, r.iteration, r.result.ho_times, r.result.rlf_count, avg
            ));
        }
        out
    }

    fn cell_totals(&self) -> BTreeMap<(PredictorKind, u64, u32), (usize, IterationResult)> {
        let mut cells: BTreeMap<(PredictorKind, u64, u32), (usize, IterationResult)> = BTreeMap::new();
        for r in &self.rows {
            let e = cells
                .entry((r.predictor, velocity_key(r.velocity_kmh), r.ttt_tics))
                .or_default();
            e.0 += 1;
            e.1.add(&r.result);
        }
        cells
    }

    /// One summary per (predictor, velocity, ttt) cell, sorted by predictor,
    /// velocity and ttt.
    pub fn aggregate(&self) -> Vec<CellSummary> {
        let cells = self.cell_totals();
        cells
            .iter()
            .map(|(&(predictor, vk, ttt_tics), &(n, total))| {
                let mean = total.ho_times as f64 / n as f64;
                let reduction_pct = match cells.get(&(PredictorKind::None, vk, ttt_tics)) {
                    Some(&(bn, base)) if predictor != PredictorKind::None => {
                        reduction_ratio(base.ho_times as f64 / bn as f64, mean).ok()
                    }
                    _ => None,
                };
                CellSummary {
                    predictor,
                    velocity_kmh: f64::from_bits(vk),
                    ttt_tics,
                    iterations: n,
                    mean_ho_times: mean,
                    mean_rlf_count: total.rlf_count as f64 / n as f64,
                    ho_avg_sinr_db: total.ho_avg_sinr_db(),
                    reduction_pct,
                }
            })
            .collect()
    }

    pub fn aggregate_csv(&self) -> String {
        let mut out = String::from(AGGREGATE_HEADER);
        out.push('\n');
        for c in self.aggregate() {
            let opt = |v: Option<f64>| v.map(|v| format!("{v:.4}")).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{:.4},{:.4},{},{}\n",
                c.predictor,
                c.velocity_kmh,
                c.ttt_tics,
                c.iterations,
                c.mean_ho_times,
                c.mean_rlf_count,
                opt(c.ho_avg_sinr_db),
                opt(c.reduction_pct)
            ));
        }
        out
    }

    /// Reductions of every non-conventional predictor over the cells that
    /// have a conventional baseline with at least one handover.
    pub fn predictor_summaries(&self) -> Vec<PredictorSummary> {
        let cells = self.cell_totals();
        let mut by_predictor: BTreeMap<PredictorKind, (Vec<f64>, f64, f64)> = BTreeMap::new();
        for (&(predictor, vk, ttt), &(n, total)) in &cells {
            if predictor == PredictorKind::None {
                continue;
            }
            let Some(&(bn, base)) = cells.get(&(PredictorKind::None, vk, ttt)) else {
                continue;
            };
            let (b, w) = (base.ho_times as f64 / bn as f64, total.ho_times as f64 / n as f64);
            if let Ok(r) = reduction_ratio(b, w) {
                let e = by_predictor.entry(predictor).or_default();
                e.0.push(r);
                e.1 += b;
                e.2 += w;
            }
        }
        by_predictor
            .into_iter()
            .map(|(predictor, (rs, b, w))| PredictorSummary {
                predictor,
                mean_reduction_pct: rs.iter().sum::<f64>() / rs.len() as f64,
                pooled_reduction_pct: 100.0 * (b - w) / b,
            })
            .collect()
    }

    /// Reduction over all trained predictors together: the mean of their
    /// per-predictor mean reductions and the pooled reduction of their
    /// summed handover counts.
    pub fn overall_reduction(&self) -> Option<PredictorSummary> {
        let trained = [PredictorKind::Svm, PredictorKind::Dtc, PredictorKind::Rfc];
        let per: Vec<PredictorSummary> = self
            .predictor_summaries()
            .into_iter()
            .filter(|s| trained.contains(&s.predictor))
            .collect();
        if per.is_empty() {
            return None;
        }
        let cells = self.cell_totals();
        let (mut b, mut w) = (0.0, 0.0);
        for (&(predictor, vk, ttt), &(n, total)) in &cells {
            if !trained.contains(&predictor) {
                continue;
            }
            if let Some(&(bn, base)) = cells.get(&(PredictorKind::None, vk, ttt)) {
                b += base.ho_times as f64 / bn as f64;
                w += total.ho_times as f64 / n as f64;
            }
        }
        Some(PredictorSummary {
            predictor: PredictorKind::None,
            mean_reduction_pct: per.iter().map(|s| s.mean_reduction_pct).sum::<f64>() / per.len() as f64,
            pooled_reduction_pct: 100.0 * (b - w) / b,
        })
    }

    /// Parses a table written by [`CampaignTable::to_csv`].
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let header = r.headers().map_err(|e| Error::format("campaign csv", e))?;
        if header.iter().collect::<Vec<_>>().join(",") != CAMPAIGN_HEADER {
            return Err(Error::format("campaign csv", format!("expected header `{CAMPAIGN_HEADER}`")));
        }
        let mut rows = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| Error::format("campaign csv", e))?;
            let bad = |what: &str| Error::format("campaign csv", format!("row {}: bad {what}", i + 1));
            let field = |k: usize| rec.get(k).unwrap_or("");
            let ho_times: u64 = field(4).parse().map_err(|_| bad("ho_times"))?;
            let avg: Option<f64> = match field(6) {
                "" => None,
                v => Some(v.parse().map_err(|_| bad("ho_avg_sinr_db"))?),
            };
            rows.push(CampaignRow {
                predictor: field(0).parse().map_err(|_| bad("predictor"))?,
                velocity_kmh: field(1).parse().map_err(|_| bad("velocity_kmh"))?,
                ttt_tics: field(2).parse().map_err(|_| bad("ttt_tics"))?,
                iteration: field(3).parse().map_err(|_| bad("iteration"))?,
                result: IterationResult {
                    ho_times,
                    rlf_count: field(5).parse().map_err(|_| bad("rlf_count"))?,
                    ho_sinr_sum_db: avg.unwrap_or(0.0) * ho_times as f64,
                },
            });
        }
        Ok(Self { rows })
    }

    /// Per-predictor reduction table, with an `overall` row for the trained
    /// predictors.
    pub fn summary_csv(&self) -> String {
        let mut out = String::from(SUMMARY_HEADER);
        out.push('\n');
        for s in self.predictor_summaries() {
            out.push_str(&format!("{},{:.4},{:.4}\n", s.predictor, s.mean_reduction_pct, s.pooled_reduction_pct));
        }
        if let Some(s) = self.overall_reduction() {
            out.push_str(&format!("overall,{:.4},{:.4}\n", s.mean_reduction_pct, s.pooled_reduction_pct));
        }
        out
    }

    /// Mean handover count of a cell, if present.
    pub fn cell_mean(&self, predictor: PredictorKind, velocity_kmh: f64, ttt_tics: u32) -> Option<f64> {
        self.cell_totals()
            .get(&(predictor, velocity_key(velocity_kmh), ttt_tics))
            .map(|&(n, t)| t.ho_times as f64 / n as f64)
    }
}

fn velocity_key(v: f64) -> u64 {
    // positive finite floats order like their bit patterns
    v.to_bits()
}

/// Runs every (velocity, predictor, ttt) cell of `grid` for
/// `grid.iterations` iterations. Iteration `i` uses the same seed, and so
/// the same deployment and traffic, in every cell.
pub fn run_campaign(sim: &mut Simulator, grid: &CampaignGrid) -> Result<CampaignTable> {
    grid.validate()?;
    let variants = grid.variants();
    let mut rows = Vec::new();
    for &velocity in &grid.velocities_kmh {
        sim.prepare(velocity, &variants)?;
        let this = &*sim;
        let results: Vec<Vec<IterationResult>> = (0..grid.iterations)
            .into_par_iter()
            .map(|i| this.run_iteration(velocity, &variants, this.cfg.iteration_seed(i), None, None))
            .collect::<Result<_>>()?;
        log::info!("campaign: {velocity} km/h done");
        for (k, v) in variants.iter().enumerate() {
            for (i, r) in results.iter().enumerate() {
                rows.push(CampaignRow {
                    predictor: v.predictor,
                    velocity_kmh: velocity,
                    ttt_tics: v.ttt_tics,
                    iteration: i,
                    result: r[k],
                });
            }
        }
    }
    Ok(CampaignTable { rows })
}
