//! Small-cell layout sampled from a homogeneous Poisson point process, plus
//! the planar geometry used for candidate screening.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::{Error, Result, SiteId};

/// A point on the ground plane, in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// Rotates the point about the origin by a multiple of 90 degrees.
    /// Exact in floating point, unlike a general rotation.
    pub fn rotate_quarter_turns(&self, turns: i32) -> Point {
        match turns.rem_euclid(4) {
            0 => *self,
            1 => Point::new(-self.y, self.x),
            2 => Point::new(-self.x, -self.y),
            _ => Point::new(self.y, -self.x),
        }
    }
}

/// Rectangular simulation area anchored at the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Area {
    pub width: f64,
    pub height: f64,
}

impl Default for Area {
    fn default() -> Self {
        Self {
            width: 1000.0,
            height: 1000.0,
        }
    }
}

impl Area {
    pub fn new(width: f64, height: f64) -> Result<Self> {
        let area = Self { width, height };
        area.validate()?;
        Ok(area)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.width.is_finite() && self.width > 0.0) {
            return Err(Error::config("area.width", "must be finite and > 0"));
        }
        if !(self.height.is_finite() && self.height > 0.0) {
            return Err(Error::config("area.height", "must be finite and > 0"));
        }
        Ok(())
    }

    pub fn square_km(&self) -> f64 {
        self.width * self.height / 1e6
    }

    pub fn contains(&self, p: &Point) -> bool {
        (0.0..=self.width).contains(&p.x) && (0.0..=self.height).contains(&p.y)
    }
}

/// Radio hardware shared by every small cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SiteTemplate {
    pub height: f64,
    pub tx_power_dbm: f64,
    pub antenna_gain_dbi: f64,
}

impl Default for SiteTemplate {
    fn default() -> Self {
        Self {
            height: 15.0,
            tx_power_dbm: 30.0,
            antenna_gain_dbi: 15.0,
        }
    }
}

/// A small-cell node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScnSite {
    pub id: SiteId,
    pub x: f64,
    pub y: f64,
    pub height: f64,
    pub tx_power: f64,
    pub gain: f64,
}

impl ScnSite {
    pub fn position(&self) -> Point {
        Point::new(self.x, self.y)
    }
}

/// An immutable small-cell layout. Site ids are dense and equal to the
/// index into [`Deployment::sites`].
#[derive(Debug, Clone, PartialEq)]
pub struct Deployment {
    area: Area,
    sites: Vec<ScnSite>,
}

impl Deployment {
    /// Builds a deployment from explicit sites, checking the id and
    /// placement invariants.
    pub fn from_sites(area: Area, sites: Vec<ScnSite>) -> Result<Self> {
        area.validate()?;
        for (i, s) in sites.iter().enumerate() {
            if s.id != i {
                return Err(Error::InvalidArgument(format!(
                    "site ids must be contiguous from 0; position {i} holds id {}",
                    s.id
                )));
            }
            if !area.contains(&s.position()) {
                return Err(Error::InvalidArgument(format!(
                    "site {} at ({}, {}) lies outside the area",
                    s.id, s.x, s.y
                )));
            }
            if !(s.height > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "site {} has non-positive height",
                    s.id
                )));
            }
        }
        Ok(Self { area, sites })
    }

    pub fn area(&self) -> Area {
        self.area
    }

    pub fn sites(&self) -> &[ScnSite] {
        &self.sites
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    /// Writes the layout as comma-separated text, one row per site.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for s in &self.sites {
            w.serialize(s).map_err(|e| Error::format("deployment csv", e))?;
        }
        w.flush()
            .map_err(|e| Error::format("deployment csv", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(area: Area, input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let sites = r
            .deserialize()
            .collect::<std::result::Result<Vec<ScnSite>, _>>()
            .map_err(|e| Error::format("deployment csv", e))?;
        Self::from_sites(area, sites)
    }
}

/// Samples a homogeneous PPP layout: the site count is Poisson with mean
/// `density * area_km2` and each site is placed uniformly and
/// independently over the area.
pub fn sample_ppp_deployment(
    density_per_km2: f64,
    area: Area,
    template: &SiteTemplate,
    seed: u64,
) -> Result<Deployment> {
    if !(density_per_km2.is_finite() && density_per_km2 > 0.0) {
        return Err(Error::config("deployment.density_per_km2", "must be > 0"));
    }
    area.validate()?;
    if !(template.height > 0.0) {
        return Err(Error::config("deployment.scn_height_m", "must be > 0"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mean = density_per_km2 * area.square_km();
    let count = Poisson::new(mean)
        .map_err(|e| Error::config("deployment.density_per_km2", e.to_string()))?
        .sample(&mut rng) as usize;

    let sites = (0..count)
        .map(|id| ScnSite {
            id,
            x: rng.random_range(0.0..=area.width),
            y: rng.random_range(0.0..=area.height),
            height: template.height,
            tx_power: template.tx_power_dbm,
            gain: template.antenna_gain_dbi,
        })
        .collect();
    Ok(Deployment { area, sites })
}

/// Position of the copy of `site` nearest to `p` when the area is treated
/// as a torus, so that vehicles near an edge see the same site density as
/// vehicles in the centre.
pub fn wrapped_image(p: Point, site: Point, area: &Area) -> Point {
    let wrap = |d: f64, span: f64| {
        if d > span / 2.0 {
            d - span
        } else if d < -span / 2.0 {
            d + span
        } else {
            d
        }
    };
    Point::new(p.x + wrap(site.x - p.x, area.width), p.y + wrap(site.y - p.y, area.height))
}

/// Ground-plane distance between a point and a site.
pub fn distance_2d(p: Point, s: &ScnSite) -> f64 {
    p.distance(&s.position())
}

/// Direction of `to` seen from `from`, counterclockwise from +x, in [0, 360).
pub fn bearing(from: Point, to: Point) -> Result<f64> {
    let (dx, dy) = (to.x - from.x, to.y - from.y);
    if dx == 0.0 && dy == 0.0 {
        return Err(Error::DegenerateGeometry(format!(
            "bearing from ({}, {}) to itself",
            from.x, from.y
        )));
    }
    Ok(normalize_degrees(dy.atan2(dx).to_degrees()))
}

pub(crate) fn normalize_degrees(deg: f64) -> f64 {
    let d = deg.rem_euclid(360.0);
    // rem_euclid can round up to exactly 360 for tiny negative inputs
    if d >= 360.0 {
        0.0
    } else {
        d
    }
}

/// Absolute difference between two headings, wrapped into [0, 180].
pub fn angular_difference(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    if d > 180.0 {
        360.0 - d
    } else {
        d
    }
}

/// Full opening angle (degrees) of the screening cone for a vehicle moving
/// at `velocity_kmh`: 50 / sqrt(V) + 18.
pub fn screening_angle(velocity_kmh: f64) -> Result<f64> {
    if !(velocity_kmh.is_finite() && velocity_kmh > 0.0) {
        return Err(Error::config("velocity_kmh", "must be > 0"));
    }
    Ok(50.0 / velocity_kmh.sqrt() + 18.0)
}

/// Forward wedge used to pick predicted handover candidates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScreeningCone {
    apex: Point,
    axis_heading: f64,
    half_angle: f64,
    radius: f64,
}

impl ScreeningCone {
    /// `half_angle` may be 180 degrees, which makes the cone a full disc.
    pub fn new(apex: Point, axis_heading: f64, half_angle: f64, radius: f64) -> Result<Self> {
        if !(half_angle > 0.0 && half_angle <= 180.0) {
            return Err(Error::InvalidArgument(format!(
                "cone half-angle {half_angle} outside (0, 180]"
            )));
        }
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "cone radius {radius} must be > 0"
            )));
        }
        Ok(Self {
            apex,
            axis_heading: normalize_degrees(axis_heading),
            half_angle,
            radius,
        })
    }

    /// Cone for a vehicle at `velocity_kmh`: the half-angle is half of
    /// [`screening_angle`].
    pub fn for_velocity(apex: Point, axis_heading: f64, velocity_kmh: f64, radius: f64) -> Result<Self> {
        Self::new(apex, axis_heading, screening_angle(velocity_kmh)? / 2.0, radius)
    }

    pub fn apex(&self) -> Point {
        self.apex
    }

    pub fn axis_heading(&self) -> f64 {
        self.axis_heading
    }

    pub fn half_angle(&self) -> f64 {
        self.half_angle
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn contains_point(&self, p: Point) -> bool {
        if self.apex.distance(&p) > self.radius {
            return false;
        }
        match bearing(self.apex, p) {
            Ok(b) => angular_difference(b, self.axis_heading) <= self.half_angle,
            // the apex itself
            Err(_) => true,
        }
    }
}

pub fn in_screening_cone(cone: &ScreeningCone, s: &ScnSite) -> bool {
    cone.contains_point(s.position())
}
