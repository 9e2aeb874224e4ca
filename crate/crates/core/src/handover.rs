//! Handover candidate discovery, prediction-based target screening and the
//! time-to-trigger state machine.
//!
//! Without a route prediction every in-range neighbour is a candidate. With
//! one, neighbours inside a forward screening cone aligned with the
//! predicted route become *predicted* candidates and the rest *unpredicted*.
//! If an unpredicted neighbour has the best SINR, it is penalised by three
//! times its lead so a predicted neighbour (or the serving cell) wins.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::deployment::{Point, ScnSite, ScreeningCone};
use crate::mobility::{RouteNetwork, VueState};
use crate::radio::{LinkSnapshot, RadioParams};
use crate::{Error, Result, RouteId, SiteId};

/// Multiplier applied to the SINR lead of an unpredicted best candidate.
pub const PENALTY_FACTOR: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HandoverParams {
    /// Consecutive tics the trigger condition must hold.
    pub ttt_tics: u32,
    pub hysteresis_db: f64,
    pub best_cio_db: f64,
    pub current_cio_db: f64,
    pub exec_time_tics: u32,
    /// Serving SINR samples averaged for the trigger condition.
    pub history_len: usize,
    pub screening_distance_m: f64,
    /// Tics of serving SINR below the minimum before the link is declared
    /// failed and the vehicle re-attaches.
    pub rlf_tics: u32,
    /// Restart the time-to-trigger count when the target cell changes.
    pub ttt_per_target: bool,
}

impl Default for HandoverParams {
    fn default() -> Self {
        Self {
            ttt_tics: 4,
            hysteresis_db: 3.0,
            best_cio_db: 0.0,
            current_cio_db: 0.0,
            exec_time_tics: 25,
            history_len: 10,
            screening_distance_m: 300.0,
            rlf_tics: 50,
            ttt_per_target: true,
        }
    }
}

impl HandoverParams {
    pub fn validate(&self) -> Result<()> {
        if self.ttt_tics < 1 {
            return Err(Error::config("handover.ttt_tics", "must be >= 1"));
        }
        if self.history_len < 1 {
            return Err(Error::config("handover.history_len", "must be >= 1"));
        }
        if !(self.screening_distance_m > 0.0) {
            return Err(Error::config("handover.screening_distance_m", "must be > 0"));
        }
        if self.rlf_tics < 1 {
            return Err(Error::config("handover.rlf_tics", "must be >= 1"));
        }
        Ok(())
    }
}

/// Neighbours of the serving cell, split by the screening cone.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CandidateSets {
    pub predicted: Vec<SiteId>,
    pub unpredicted: Vec<SiteId>,
    pub serving: SiteId,
}

impl CandidateSets {
    /// Refills the sets from the in-range sites. With no cone every
    /// neighbour is predicted.
    pub fn fill<I: IntoIterator<Item = SiteId>>(
        &mut self,
        serving: SiteId,
        in_range: I,
        sites: &[ScnSite],
        cone: Option<&ScreeningCone>,
    ) {
        self.fill_by(serving, in_range, |id| {
            cone.is_none_or(|c| c.contains_point(sites[id].position()))
        });
    }

    /// Refills the sets using an arbitrary membership test for the
    /// predicted set.
    pub fn fill_by<I, F>(&mut self, serving: SiteId, in_range: I, is_predicted: F)
    where
        I: IntoIterator<Item = SiteId>,
        F: Fn(SiteId) -> bool,
    {
        self.serving = serving;
        self.predicted.clear();
        self.unpredicted.clear();
        for id in in_range {
            if id == serving {
                continue;
            }
            if is_predicted(id) {
                self.predicted.push(id);
            } else {
                self.unpredicted.push(id);
            }
        }
    }
}

/// Screening cone at the vehicle, pointing along the predicted route at the
/// point of that route nearest the vehicle.
pub fn prediction_cone(
    position: Point,
    velocity_kmh: f64,
    predicted: RouteId,
    network: &RouteNetwork,
    radius: f64,
) -> Result<ScreeningCone> {
    let (_, _, heading) = network.route(predicted).nearest(position);
    ScreeningCone::for_velocity(position, heading, velocity_kmh, radius)
}

/// Candidate sets for a vehicle using mean (unfaded) coverage.
pub fn candidate_sets(
    vue: &VueState,
    serving: SiteId,
    sites: &[ScnSite],
    prediction: Option<RouteId>,
    network: &RouteNetwork,
    radio: &RadioParams,
    handover: &HandoverParams,
) -> Result<CandidateSets> {
    if let Some(r) = prediction {
        if r as usize >= network.routes().len() {
            return Err(Error::InvalidArgument(format!("predicted route {r} does not exist")));
        }
    }
    let cone = prediction
        .map(|r| {
            let radius = handover.screening_distance_m.min(radio.communication_range_m);
            prediction_cone(vue.position, vue.velocity_kmh, r, network, radius)
        })
        .transpose()?;
    let snap = LinkSnapshot::mean(vue.position, sites, radio);
    let mut sets = CandidateSets::default();
    sets.fill(serving, snap.in_range(), sites, cone.as_ref());
    Ok(sets)
}

/// `(ki - max(kj, kx)) * 3`, all in dB.
pub fn sinr_offset(ki: f64, kj: f64, kx: f64) -> f64 {
    (ki - kj.max(kx)) * PENALTY_FACTOR
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Selection {
    pub target: SiteId,
    pub best_sinr: f64,
    /// Unpredicted site whose SINR was penalised, with its penalised value.
    pub penalized: Option<(SiteId, f64)>,
}

fn best_of<F: Fn(SiteId) -> f64>(ids: &[SiteId], sinr_of: &F) -> Option<(SiteId, f64)> {
    let mut best: Option<(SiteId, f64)> = None;
    for &id in ids {
        let v = sinr_of(id);
        if best.is_none_or(|(bid, bv)| v > bv || (v == bv && id < bid)) {
            best = Some((id, v));
        }
    }
    best
}

fn pick(options: &[(SiteId, f64)]) -> (SiteId, f64) {
    let mut best = options[0];
    for &(id, v) in &options[1..] {
        if v > best.1 || (v == best.1 && id < best.0) {
            best = (id, v);
        }
    }
    best
}

/// Chooses the handover target among the serving cell and the candidates.
/// Ties go to the lowest site id.
pub fn select_target<F: Fn(SiteId) -> f64>(cands: &CandidateSets, sinr_of: F, serving_sinr: f64) -> Selection {
    let serving = (cands.serving, serving_sinr);
    let kj = best_of(&cands.predicted, &sinr_of);
    let ki = best_of(&cands.unpredicted, &sinr_of);

    let (choice, penalized) = match (kj, ki) {
        (None, None) => (serving, None),
        (Some(j), None) => (pick(&[serving, j]), None),
        // nothing predicted: plain best-SINR selection
        (None, Some(i)) => (pick(&[serving, i]), None),
        (Some(j), Some(i)) => {
            if i.1 > j.1 && i.1 > serving.1 {
                let reduced = (i.0, i.1 - sinr_offset(i.1, j.1, serving.1));
                (pick(&[serving, j, reduced]), Some(reduced))
            } else {
                (pick(&[serving, j, i]), None)
            }
        }
    };
    Selection {
        target: choice.0,
        best_sinr: choice.1,
        penalized,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FsmEvent {
    None,
    Triggered,
    Executed,
    Blocked,
}

impl FsmEvent {
    pub fn name(&self) -> &'static str {
        match self {
            FsmEvent::None => "none",
            FsmEvent::Triggered => "triggered",
            FsmEvent::Executed => "executed",
            FsmEvent::Blocked => "blocked",
        }
    }
}

/// Per-vehicle handover triggering state.
#[derive(Debug, Clone, PartialEq)]
pub struct HandoverFsm {
    pub serving_scn: SiteId,
    pub ho_trigger: bool,
    pub ho_timer: u32,
    pub ho_exec_remaining: u32,
    pub ho_times: u64,
    pending_target: Option<SiteId>,
    history: VecDeque<f64>,
    sinr_min: f64,
    params: HandoverParams,
}

impl HandoverFsm {
    pub fn new(serving: SiteId, params: HandoverParams, sinr_min_db: f64) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            serving_scn: serving,
            ho_trigger: false,
            ho_timer: 0,
            ho_exec_remaining: 0,
            ho_times: 0,
            pending_target: None,
            history: VecDeque::with_capacity(params.history_len),
            sinr_min: sinr_min_db,
            params,
        })
    }

    pub fn params(&self) -> &HandoverParams {
        &self.params
    }

    /// Mean of the serving SINR history, defined once it is full.
    pub fn avg_sinr(&self) -> Option<f64> {
        (self.history.len() == self.params.history_len)
            .then(|| self.history.iter().sum::<f64>() / self.history.len() as f64)
    }

    pub fn history_len(&self) -> usize {
        self.history.len()
    }

    fn reset_timer(&mut self) {
        self.ho_trigger = false;
        self.ho_timer = 0;
        self.pending_target = None;
    }

    /// Points the vehicle at a new serving cell without counting a handover
    /// (initial attachment or recovery after link failure).
    pub fn reattach(&mut self, serving: SiteId) {
        self.serving_scn = serving;
        self.reset_timer();
        self.ho_exec_remaining = 0;
        self.history.clear();
    }

    /// Advances one tic. Must be called once per tic after target selection.
    pub fn step(&mut self, target: SiteId, best_sinr: f64, serving_sinr: f64) -> FsmEvent {
        if self.history.len() == self.params.history_len {
            self.history.pop_front();
        }
        self.history.push_back(serving_sinr);

        if self.ho_exec_remaining > 0 {
            self.ho_exec_remaining -= 1;
            return FsmEvent::Blocked;
        }
        let Some(avg) = self.avg_sinr() else {
            return FsmEvent::None;
        };
        if target == self.serving_scn {
            self.reset_timer();
            return FsmEvent::None;
        }

        let p = &self.params;
        let condition = best_sinr > self.sinr_min
            && best_sinr - avg + p.best_cio_db - p.current_cio_db > p.hysteresis_db;
        if !condition {
            self.reset_timer();
            return FsmEvent::None;
        }

        if p.ttt_per_target && self.pending_target != Some(target) {
            self.ho_timer = 0;
        }
        self.pending_target = Some(target);
        self.ho_trigger = true;
        self.ho_timer += 1;
        if self.ho_timer >= self.params.ttt_tics {
            self.serving_scn = target;
            self.ho_exec_remaining = self.params.exec_time_tics;
            self.ho_times += 1;
            self.reset_timer();
            self.history.clear();
            FsmEvent::Executed
        } else {
            FsmEvent::Triggered
        }
    }
}
