//! Three-route road network, constant-speed vehicle movement and labelled
//! trajectory datasets.
//!
//! All routes share an approach segment that ends at junction A. After the
//! junction route 0 continues straight east, route 1 bends north-east and
//! route 2 bends south-east.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::deployment::{bearing, Area, Point};
use crate::{Error, Result, RouteId, NUM_ROUTES};

/// Length of one demand period (one hour).
pub const PERIOD_MS: u64 = 3_600_000;

/// Waypoints of the default network on a 1000 m x 1000 m area, as fractions
/// of the area. The first two points are the shared approach.
const APPROACH: [(f64, f64); 2] = [(0.05, 0.5), (0.15, 0.5)];
const BRANCHES: [&[(f64, f64)]; NUM_ROUTES] = [
    &[(0.95, 0.5)],
    &[(0.45, 0.8), (0.95, 0.8)],
    &[(0.45, 0.2), (0.95, 0.2)],
];

const MIN_ROUTE_LENGTH: f64 = 800.0;
const MAX_ROUTE_LENGTH: f64 = 1500.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Route {
    id: RouteId,
    waypoints: Vec<Point>,
    /// Arc length at each waypoint; `cumulative[0] == 0`.
    cumulative: Vec<f64>,
    headings: Vec<f64>,
}

impl Route {
    pub fn new(id: RouteId, waypoints: Vec<Point>) -> Result<Self> {
        if waypoints.len() < 2 {
            return Err(Error::config("mobility.routes", format!("route {id} needs at least 2 waypoints")));
        }
        let mut cumulative = vec![0.0];
        let mut headings = Vec::with_capacity(waypoints.len() - 1);
        for w in waypoints.windows(2) {
            let h = bearing(w[0], w[1]).map_err(|_| {
                Error::config("mobility.routes", format!("route {id} repeats waypoint ({}, {})", w[0].x, w[0].y))
            })?;
            headings.push(h);
            cumulative.push(cumulative.last().unwrap() + w[0].distance(&w[1]));
        }
        Ok(Self {
            id,
            waypoints,
            cumulative,
            headings,
        })
    }

    pub fn id(&self) -> RouteId {
        self.id
    }

    pub fn waypoints(&self) -> &[Point] {
        &self.waypoints
    }

    pub fn length(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    pub fn start(&self) -> Point {
        self.waypoints[0]
    }

    fn segment_at(&self, s: f64) -> usize {
        // first segment whose end lies strictly beyond s, so a point sitting
        // exactly on a waypoint takes the outgoing heading
        let n = self.headings.len();
        let idx = self.cumulative[1..].partition_point(|&c| c <= s);
        idx.min(n - 1)
    }

    /// Position and heading after travelling `s` meters from the start,
    /// clamped to the route.
    pub fn point_at(&self, s: f64) -> (Point, f64) {
        let s = s.clamp(0.0, self.length());
        let seg = self.segment_at(s);
        let (a, b) = (self.waypoints[seg], self.waypoints[seg + 1]);
        let seg_len = self.cumulative[seg + 1] - self.cumulative[seg];
        let f = (s - self.cumulative[seg]) / seg_len;
        (
            Point::new(a.x + (b.x - a.x) * f, a.y + (b.y - a.y) * f),
            self.headings[seg],
        )
    }

    /// Nearest point of the polyline to `p`: (arc length, distance, heading of
    /// that segment). Ties resolve to the earliest segment.
    pub fn nearest(&self, p: Point) -> (f64, f64, f64) {
        let mut best = (0.0, f64::INFINITY, self.headings[0]);
        for seg in 0..self.headings.len() {
            let (a, b) = (self.waypoints[seg], self.waypoints[seg + 1]);
            let (ex, ey) = (b.x - a.x, b.y - a.y);
            let len2 = ex * ex + ey * ey;
            let t = (((p.x - a.x) * ex + (p.y - a.y) * ey) / len2).clamp(0.0, 1.0);
            let q = Point::new(a.x + ex * t, a.y + ey * t);
            let d = p.distance(&q);
            if d < best.1 {
                let seg_len = self.cumulative[seg + 1] - self.cumulative[seg];
                best = (self.cumulative[seg] + t * seg_len, d, self.headings[seg]);
            }
        }
        best
    }

    pub fn distance_to(&self, p: Point) -> f64 {
        self.nearest(p).1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RouteNetwork {
    routes: Vec<Route>,
    junction_a: Point,
    /// Arc length of junction A along every route.
    junction_offset: f64,
}

impl RouteNetwork {
    pub fn routes(&self) -> &[Route] {
        &self.routes
    }

    pub fn route(&self, id: RouteId) -> &Route {
        &self.routes[id as usize]
    }

    pub fn junction_a(&self) -> Point {
        self.junction_a
    }

    pub fn junction_offset(&self) -> f64 {
        self.junction_offset
    }
}

/// Builds the default three-route network scaled onto `area`.
pub fn build_route_network(area: &Area) -> Result<RouteNetwork> {
    area.validate()?;
    let scale = |&(fx, fy): &(f64, f64)| Point::new(fx * area.width, fy * area.height);
    let approach: Vec<Point> = APPROACH.iter().map(scale).collect();
    let junction_a = *approach.last().unwrap();

    let routes = BRANCHES
        .iter()
        .enumerate()
        .map(|(id, branch)| {
            let mut pts = approach.clone();
            pts.extend(branch.iter().map(scale));
            Route::new(id as RouteId, pts)
        })
        .collect::<Result<Vec<_>>>()?;

    for r in &routes {
        let len = r.length();
        if !(MIN_ROUTE_LENGTH..=MAX_ROUTE_LENGTH).contains(&len) {
            return Err(Error::config(
                "deployment.area",
                format!(
                    "route {} would be {len:.0} m long; the area must give routes of {MIN_ROUTE_LENGTH}-{MAX_ROUTE_LENGTH} m",
                    r.id
                ),
            ));
        }
    }
    let junction_offset = approach[0].distance(&junction_a);
    Ok(RouteNetwork {
        routes,
        junction_a,
        junction_offset,
    })
}

/// Vehicle counts per route for one time-of-day period.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimePeriodDemand {
    pub period: String,
    /// Indexed by route id.
    pub counts: [u32; NUM_ROUTES],
}

impl TimePeriodDemand {
    pub fn validate(&self) -> Result<()> {
        if self.counts.iter().all(|&c| c == 0) {
            return Err(Error::config(
                "mobility.demands.counts",
                format!("period {} has no vehicles", self.period),
            ));
        }
        Ok(())
    }

    pub fn total(&self) -> u32 {
        self.counts.iter().sum()
    }

    /// Route with the largest count (lowest id on ties).
    pub fn dominant_route(&self) -> RouteId {
        let mut best = 0;
        for r in 1..NUM_ROUTES {
            if self.counts[r] > self.counts[best] {
                best = r;
            }
        }
        best as RouteId
    }

    /// Counts multiplied by `factor` and rounded, keeping at least one
    /// vehicle on the dominant route.
    pub fn scaled(&self, factor: f64) -> TimePeriodDemand {
        let mut counts = self.counts.map(|c| (c as f64 * factor).round() as u32);
        if counts.iter().all(|&c| c == 0) {
            counts[self.dominant_route() as usize] = 1;
        }
        TimePeriodDemand {
            period: self.period.clone(),
            counts,
        }
    }
}

/// The three periods used throughout: morning school commute, morning work
/// commute and evening return.
pub fn default_demands() -> Vec<TimePeriodDemand> {
    vec![
        TimePeriodDemand {
            period: "07:00-08:00".into(),
            counts: [1400, 400, 200],
        },
        TimePeriodDemand {
            period: "08:00-09:00".into(),
            counts: [400, 1400, 200],
        },
        TimePeriodDemand {
            period: "17:00-18:00".into(),
            counts: [200, 400, 1400],
        },
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VuePlan {
    pub vue_id: usize,
    pub route_id: RouteId,
    pub period: u8,
    /// Departure offset within the period.
    pub depart_time_ms: u64,
    pub velocity_kmh: f64,
}

/// One plan per demanded vehicle, departures uniform over the period and
/// ids assigned in departure order starting at `first_id`.
pub fn sample_departures(
    demand: &TimePeriodDemand,
    period: u8,
    velocity_kmh: f64,
    first_id: usize,
    seed: u64,
) -> Vec<VuePlan> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut plans: Vec<(u64, RouteId)> = Vec::with_capacity(demand.total() as usize);
    for (route, &count) in demand.counts.iter().enumerate() {
        for _ in 0..count {
            plans.push((rng.random_range(0..PERIOD_MS), route as RouteId));
        }
    }
    plans.sort_unstable();
    plans
        .into_iter()
        .enumerate()
        .map(|(i, (depart_time_ms, route_id))| VuePlan {
            vue_id: first_id + i,
            route_id,
            period,
            depart_time_ms,
            velocity_kmh,
        })
        .collect()
}

/// Kinematic state of a vehicle on its route.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VueState {
    pub id: usize,
    pub route_id: RouteId,
    pub period: u8,
    pub velocity_kmh: f64,
    /// Time since departure.
    pub elapsed_ms: u64,
    pub position: Point,
    pub heading: f64,
    pub finished: bool,
}

impl VueState {
    pub fn spawn(plan: &VuePlan, route: &Route) -> Self {
        let (position, heading) = route.point_at(0.0);
        Self {
            id: plan.vue_id,
            route_id: plan.route_id,
            period: plan.period,
            velocity_kmh: plan.velocity_kmh,
            elapsed_ms: 0,
            position,
            heading,
            finished: false,
        }
    }

    pub fn speed_m_per_ms(&self) -> f64 {
        self.velocity_kmh / 3600.0
    }

    /// Distance covered so far, before clamping at the route end.
    pub fn travelled(&self) -> f64 {
        self.speed_m_per_ms() * self.elapsed_ms as f64
    }

    /// Moves the vehicle `dt_ms` along `route` in place.
    pub fn advance(&mut self, route: &Route, dt_ms: u64) -> Result<()> {
        if dt_ms == 0 {
            return Err(Error::InvalidArgument("advance step must be > 0 ms".into()));
        }
        if self.finished {
            return Ok(());
        }
        self.elapsed_ms += dt_ms;
        let s = self.travelled();
        let (p, h) = route.point_at(s);
        self.position = p;
        self.heading = h;
        self.finished = s >= route.length();
        Ok(())
    }
}

pub fn advance_vue(vue: &VueState, route: &Route, dt_ms: u64) -> Result<VueState> {
    let mut next = *vue;
    next.advance(route, dt_ms)?;
    Ok(next)
}

/// Parameters of a dataset generation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub velocity_kmh: f64,
    pub horizon_ms: u64,
    pub tic_ms: u64,
    pub sample_every_tics: u64,
    /// Standard deviation of the Gaussian jitter added to sampled
    /// coordinates.
    pub jitter_sigma_m: f64,
}

/// One labelled observation: `(x, y)` position, period index, elapsed time
/// since departure and the route the vehicle is on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub x: f64,
    pub y: f64,
    pub period: u8,
    pub t_ms: u64,
    pub route: RouteId,
}

impl Sample {
    pub fn features(&self) -> [f64; 4] {
        [self.x, self.y, self.period as f64, self.t_ms as f64]
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrajectoryDataset {
    pub rows: Vec<Sample>,
}

pub const DATASET_HEADER: &str = "x,y,period,t_ms,route";

impl TrajectoryDataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        if self.rows.is_empty() {
            w.write_record(DATASET_HEADER.split(','))
                .map_err(|e| Error::format("dataset csv", e))?;
        }
        for r in &self.rows {
            w.serialize(r).map_err(|e| Error::format("dataset csv", e))?;
        }
        w.flush().map_err(|e| Error::format("dataset csv", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let header = r.headers().map_err(|e| Error::format("dataset csv", e))?;
        if header.iter().collect::<Vec<_>>().join(",") != DATASET_HEADER {
            return Err(Error::format(
                "dataset csv",
                format!("expected header `{DATASET_HEADER}`"),
            ));
        }
        let rows = r
            .deserialize()
            .collect::<std::result::Result<Vec<Sample>, _>>()
            .map_err(|e| Error::format("dataset csv", e))?;
        for (i, s) in rows.iter().enumerate() {
            if s.route as usize >= NUM_ROUTES || !s.x.is_finite() || !s.y.is_finite() {
                return Err(Error::format("dataset csv", format!("row {} is invalid", i + 1)));
            }
        }
        Ok(Self { rows })
    }
}

/// Simulates every planned vehicle for up to `spec.horizon_ms` and samples
/// its jittered position every `sample_every_tics` tics.
pub fn generate_dataset(
    network: &RouteNetwork,
    demands: &[TimePeriodDemand],
    spec: &DatasetSpec,
    seed: u64,
) -> Result<TrajectoryDataset> {
    if spec.tic_ms == 0 || spec.sample_every_tics == 0 {
        return Err(Error::config("mobility.sample_every_tics", "tic and sampling interval must be > 0"));
    }
    if !(spec.velocity_kmh > 0.0) {
        return Err(Error::config("mobility.velocity_kmh", "must be > 0"));
    }
    let jitter = Normal::new(0.0, spec.jitter_sigma_m)
        .map_err(|e| Error::config("mobility.jitter_sigma_m", e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_tics = spec.horizon_ms / spec.tic_ms;

    let mut rows = Vec::new();
    let mut next_id = 0;
    for (period, demand) in demands.iter().enumerate() {
        demand.validate()?;
        let plans = sample_departures(demand, period as u8, spec.velocity_kmh, next_id, rng.random());
        next_id += plans.len();
        for plan in &plans {
            let route = network.route(plan.route_id);
            let mut vue = VueState::spawn(plan, route);
            for tic in 1..=n_tics {
                vue.advance(route, spec.tic_ms)?;
                if tic % spec.sample_every_tics == 0 {
                    rows.push(Sample {
                        x: vue.position.x + jitter.sample(&mut rng),
                        y: vue.position.y + jitter.sample(&mut rng),
                        period: plan.period,
                        t_ms: vue.elapsed_ms,
                        route: plan.route_id,
                    });
                }
                if vue.finished {
                    break;
                }
            }
        }
    }
    log::info!("generated {} trajectory samples", rows.len());
    Ok(TrajectoryDataset { rows })
}
