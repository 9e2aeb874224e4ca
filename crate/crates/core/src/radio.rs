//! Downlink link budget: pathloss, noise, received power and SINR.
//!
//! All SINR arithmetic happens in the linear milliwatt domain. Interference
//! at a vehicle is the sum of every other small cell within communication
//! range, each transmitting continuously at full power.

use std::sync::Once;

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::deployment::{wrapped_image, Area, Point, ScnSite};
use crate::{Error, Result, SiteId};

/// Thermal noise density, dBm/Hz.
pub const THERMAL_NOISE_DBM_PER_HZ: f64 = -174.0;

static CLAMP_WARNING: Once = Once::new();

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadioParams {
    /// Informational only; the pathloss model has no frequency term.
    pub carrier_frequency_ghz: f64,
    pub bandwidth_hz: f64,
    pub tx_power_dbm: f64,
    pub scn_antenna_gain_dbi: f64,
    pub rx_antenna_gain_dbi: f64,
    pub noise_figure_db: f64,
    pub communication_range_m: f64,
    pub sinr_min_db: f64,
    pub vue_height_m: f64,
    pub fading: Fading,
}

impl Default for RadioParams {
    fn default() -> Self {
        Self {
            carrier_frequency_ghz: 6.0,
            bandwidth_hz: 10e6,
            tx_power_dbm: 30.0,
            scn_antenna_gain_dbi: 15.0,
            rx_antenna_gain_dbi: 0.0,
            noise_figure_db: 7.0,
            communication_range_m: 300.0,
            sinr_min_db: -7.0,
            vue_height_m: 1.5,
            fading: Fading::Rayleigh,
        }
    }
}

impl RadioParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth_hz.is_finite() && self.bandwidth_hz > 0.0) {
            return Err(Error::config("radio.bandwidth_hz", "must be > 0"));
        }
        if !(self.communication_range_m.is_finite() && self.communication_range_m > 0.0) {
            return Err(Error::config("radio.communication_range_m", "must be > 0"));
        }
        if !(self.vue_height_m.is_finite() && self.vue_height_m >= 0.0) {
            return Err(Error::config("radio.vue_height_m", "must be >= 0"));
        }
        Ok(())
    }
}

/// Per-tic small-scale fading applied to every link power.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fading {
    /// Mean link budget only.
    None,
    /// Unit-mean exponential power gain, drawn independently per link and
    /// per tic (block Rayleigh fading).
    Rayleigh,
}

impl Fading {
    pub fn sample_power_gain<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Fading::None => 1.0,
            Fading::Rayleigh => Exp1.sample(rng),
        }
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(lin: f64) -> f64 {
    10.0 * lin.log10()
}

/// `128.1 + 37.6 log10(d_km)`. Distances under 1 m are clamped to 1 m.
pub fn pathloss_db(distance_m: f64) -> f64 {
    let d = if distance_m < 1.0 {
        CLAMP_WARNING.call_once(|| {
            log::warn!("pathloss distance {distance_m} m clamped to 1 m");
        });
        1.0
    } else {
        distance_m
    };
    128.1 + 37.6 * (d / 1000.0).log10()
}

/// `-174 dBm/Hz + 10 log10(bandwidth) + noise figure`.
pub fn noise_power_dbm(params: &RadioParams) -> f64 {
    THERMAL_NOISE_DBM_PER_HZ + 10.0 * params.bandwidth_hz.log10() + params.noise_figure_db
}

pub fn rx_power_dbm(params: &RadioParams, distance_m: f64) -> f64 {
    params.tx_power_dbm + params.scn_antenna_gain_dbi + params.rx_antenna_gain_dbi
        - pathloss_db(distance_m)
}

/// Slant distance between the vehicle antenna and the site antenna.
pub fn distance_3d(vue: Point, site: &ScnSite, params: &RadioParams) -> f64 {
    let ground = vue.distance(&site.position());
    ground.hypot(site.height - params.vue_height_m)
}

/// Mean received power from `site` at `vue`, using the site's own transmit
/// power and antenna gain.
pub fn site_rx_power_dbm(vue: Point, site: &ScnSite, params: &RadioParams) -> f64 {
    site.tx_power + site.gain + params.rx_antenna_gain_dbi
        - pathloss_db(distance_3d(vue, site, params))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkBudget {
    pub vue_id: usize,
    pub scn_id: SiteId,
    pub distance: f64,
    pub pathloss: f64,
    pub rx_power: f64,
    pub sinr: f64,
}

/// Downlink SINR (dB) at `vue_pos` when served by `serving`. Interferers are
/// the other sites within communication range.
pub fn sinr_db(
    vue_pos: Point,
    serving: SiteId,
    all_sites: &[ScnSite],
    params: &RadioParams,
) -> Result<f64> {
    if !all_sites.iter().any(|s| s.id == serving) {
        return Err(Error::InvalidArgument(format!(
            "serving site {serving} is not part of the deployment"
        )));
    }
    let snap = LinkSnapshot::mean(vue_pos, all_sites, params);
    Ok(snap.sinr_db(serving, all_sites, vue_pos, params))
}

/// Link budgets for every site within communication range of the vehicle,
/// each evaluated as if that site were serving.
pub fn link_budgets(
    vue_id: usize,
    vue_pos: Point,
    sites: &[ScnSite],
    params: &RadioParams,
) -> Vec<LinkBudget> {
    let snap = LinkSnapshot::mean(vue_pos, sites, params);
    snap.in_range
        .iter()
        .map(|&(id, _)| {
            let site = &sites[id];
            let d3 = distance_3d(vue_pos, site, params);
            LinkBudget {
                vue_id,
                scn_id: id,
                distance: d3,
                pathloss: pathloss_db(d3),
                rx_power: site_rx_power_dbm(vue_pos, site, params),
                sinr: snap.sinr_db(id, sites, vue_pos, params),
            }
        })
        .collect()
}

/// Received powers at one vehicle position for one tic. SINR for any
/// serving choice follows from the in-range total without re-evaluating
/// the link budget.
#[derive(Debug, Clone, Default)]
pub struct LinkSnapshot {
    noise_mw: f64,
    /// (site id, received power in mW), ascending by site id.
    in_range: Vec<(SiteId, f64)>,
    total_mw: f64,
    wrap: Option<Area>,
}

impl LinkSnapshot {
    /// Empty snapshot. With `wrap`, every site is evaluated at its copy
    /// nearest the vehicle on the torus spanned by the area.
    pub fn new(wrap: Option<Area>) -> Self {
        Self {
            wrap,
            ..Self::default()
        }
    }

    /// Where the vehicle sees `site`.
    pub fn site_position(&self, vue_pos: Point, site: &ScnSite) -> Point {
        match &self.wrap {
            Some(area) => wrapped_image(vue_pos, site.position(), area),
            None => site.position(),
        }
    }

    fn placed(&self, vue_pos: Point, site: &ScnSite) -> ScnSite {
        let p = self.site_position(vue_pos, site);
        ScnSite { x: p.x, y: p.y, ..*site }
    }

    /// Snapshot without fading.
    pub fn mean(vue_pos: Point, sites: &[ScnSite], params: &RadioParams) -> Self {
        let mut snap = Self::default();
        snap.refresh(vue_pos, sites, params, |_| 1.0);
        snap
    }

    /// Recomputes the snapshot in place. `gain_of` supplies a linear power
    /// gain for each in-range site, called in ascending site-id order.
    pub fn refresh<F: FnMut(SiteId) -> f64>(
        &mut self,
        vue_pos: Point,
        sites: &[ScnSite],
        params: &RadioParams,
        mut gain_of: F,
    ) {
        self.noise_mw = db_to_linear(noise_power_dbm(params));
        self.in_range.clear();
        self.total_mw = 0.0;
        let range = params.communication_range_m;
        for site in sites {
            let site = &self.placed(vue_pos, site);
            let dx = site.x - vue_pos.x;
            if dx.abs() > range {
                continue;
            }
            let dy = site.y - vue_pos.y;
            if dx * dx + dy * dy > range * range {
                continue;
            }
            let rx = db_to_linear(site_rx_power_dbm(vue_pos, site, params)) * gain_of(site.id);
            self.in_range.push((site.id, rx));
            self.total_mw += rx;
        }
    }

    /// Replaces the snapshot with precomputed mean powers, `(site id, mW)`
    /// ascending by id, each scaled by `gain_of` in that order.
    pub fn load<I, F>(&mut self, params: &RadioParams, powers: I, mut gain_of: F)
    where
        I: IntoIterator<Item = (SiteId, f64)>,
        F: FnMut(SiteId) -> f64,
    {
        self.noise_mw = db_to_linear(noise_power_dbm(params));
        self.in_range.clear();
        self.total_mw = 0.0;
        for (id, mean) in powers {
            let rx = mean * gain_of(id);
            self.in_range.push((id, rx));
            self.total_mw += rx;
        }
    }

    pub fn in_range(&self) -> impl Iterator<Item = SiteId> + '_ {
        self.in_range.iter().map(|&(id, _)| id)
    }

    pub fn in_range_count(&self) -> usize {
        self.in_range.len()
    }

    pub fn rx_mw(&self, site: SiteId) -> Option<f64> {
        self.in_range
            .binary_search_by_key(&site, |&(id, _)| id)
            .ok()
            .map(|i| self.in_range[i].1)
    }

    /// SINR of an in-range site, `None` if it is out of range.
    pub fn in_range_sinr_db(&self, site: SiteId) -> Option<f64> {
        self.rx_mw(site)
            .map(|s| linear_to_db(s / (self.noise_mw + (self.total_mw - s).max(0.0))))
    }

    /// SINR for any serving site. An out-of-range server is evaluated at its
    /// mean power against the full in-range interference.
    pub fn sinr_db(&self, site: SiteId, sites: &[ScnSite], vue_pos: Point, params: &RadioParams) -> f64 {
        match self.in_range_sinr_db(site) {
            Some(v) => v,
            None => {
                let s = db_to_linear(site_rx_power_dbm(vue_pos, &self.placed(vue_pos, &sites[site]), params));
                linear_to_db(s / (self.noise_mw + self.total_mw))
            }
        }
    }
}
