//! Flip-chip stack geometry and ray-path solvers.
//!
//! Coordinates: `x`, `y` span the die plane with the origin at the die
//! centre. The antenna and every receiver sit at the same depth inside the
//! interconnect (SiO2) layer; bulk silicon lies above it, capped by the
//! metal heatsink.

use crate::{Error, Result};

/// Largest lateral residual the heatsink-crossing solver accepts, metres.
pub const CROSSING_TOLERANCE: f64 = 1e-9;
/// Iteration cap of the heatsink-crossing bisection.
pub const CROSSING_MAX_ITER: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PackageGeometry {
    /// Side of the square silicon die, m.
    pub die_side: f64,
    /// Side of the square package carrier, m.
    pub package_side: f64,
    /// Interconnect layer thickness, m.
    pub t_sio2: f64,
    /// Bulk silicon thickness, m.
    pub t_si: f64,
    /// Extra distance between the Si top surface and the reflecting plane, m.
    pub reflector_offset: f64,
    /// Antenna position in the die plane, m. Depth is mid-layer.
    pub antenna: Point,
}

impl Default for PackageGeometry {
    fn default() -> Self {
        Self {
            die_side: 22e-3,
            package_side: 33e-3,
            t_sio2: 13e-6,
            t_si: 0.7e-3,
            reflector_offset: 0.0,
            antenna: Point::new(0.0, 0.0),
        }
    }
}

impl PackageGeometry {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidInput(format!(
                    "{name} must be positive, got {v}"
                )))
            }
        };
        positive("die_side", self.die_side)?;
        positive("package_side", self.package_side)?;
        positive("t_sio2", self.t_sio2)?;
        positive("t_si", self.t_si)?;
        if self.die_side > self.package_side {
            return Err(Error::InvalidInput(format!(
                "die_side {} exceeds package_side {}",
                self.die_side, self.package_side
            )));
        }
        if !(self.reflector_offset.is_finite() && self.reflector_offset >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "reflector_offset must be >= 0, got {}",
                self.reflector_offset
            )));
        }
        if !self.contains_strictly(self.antenna) {
            return Err(Error::InvalidInput(format!(
                "antenna ({}, {}) is not strictly inside the die",
                self.antenna.x, self.antenna.y
            )));
        }
        Ok(())
    }

    pub fn half_side(&self) -> f64 {
        self.die_side / 2.0
    }

    pub fn contains_strictly(&self, p: Point) -> bool {
        let h = self.half_side();
        p.x.abs() < h && p.y.abs() < h
    }

    pub fn contains(&self, p: Point) -> bool {
        let h = self.half_side();
        p.x.abs() <= h && p.y.abs() <= h
    }

    /// Vertical distance from the antenna depth up to the SiO2/Si interface.
    pub fn sio2_leg_height(&self) -> f64 {
        self.t_sio2 / 2.0
    }

    /// Vertical distance from the SiO2/Si interface up to the reflector.
    pub fn si_leg_height(&self) -> f64 {
        self.t_si + self.reflector_offset
    }

    /// Height of the reflecting plane above the bottom of the SiO2 layer.
    pub fn heatsink_plane_z(&self) -> f64 {
        self.t_sio2 + self.si_leg_height()
    }
}

/// Lateral distance covered by a SiO2 -> Si -> reflector -> Si -> SiO2 path
/// launched at `theta1` from the vertical, or `None` when the SiO2/Si crossing
/// is totally reflected.
pub fn heatsink_lateral_coverage(
    theta1: f64,
    sio2_height: f64,
    si_height: f64,
    n_sio2: f64,
    n_si: f64,
) -> Option<f64> {
    let sin2 = n_sio2 / n_si * theta1.sin();
    if sin2 >= 1.0 {
        return None;
    }
    let tan2 = sin2 / (1.0 - sin2 * sin2).sqrt();
    Some(2.0 * (sio2_height * theta1.tan() + si_height * tan2))
}

/// Launch angle in SiO2 of the single heatsink bounce that lands
/// `lateral_separation` away at the source depth.
pub fn solve_heatsink_crossing(
    lateral_separation: f64,
    geo: &PackageGeometry,
    n_sio2: f64,
    n_si: f64,
) -> Result<f64> {
    if !(lateral_separation.is_finite() && lateral_separation >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "lateral separation must be >= 0, got {lateral_separation}"
        )));
    }
    if !(n_sio2 > 0.0 && n_si > 0.0) {
        return Err(Error::InvalidInput(
            "refractive indices must be positive".into(),
        ));
    }
    if lateral_separation == 0.0 {
        return Ok(0.0);
    }
    let h1 = geo.sio2_leg_height();
    let h2 = geo.si_leg_height();
    let coverage = |t: f64| heatsink_lateral_coverage(t, h1, h2, n_sio2, n_si);

    let mut lo = 0.0_f64;
    let mut hi = if n_sio2 > n_si {
        (n_si / n_sio2).asin()
    } else {
        std::f64::consts::FRAC_PI_2
    };
    let mut best = (f64::INFINITY, 0.0);
    for _ in 0..CROSSING_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let residual = match coverage(mid) {
            Some(c) => c - lateral_separation,
            None => f64::INFINITY,
        };
        if residual.abs() < best.0 {
            best = (residual.abs(), mid);
        }
        if residual == 0.0 {
            break;
        }
        if residual < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if best.0 <= CROSSING_TOLERANCE {
        return Ok(best.1);
    }
    Err(Error::NumericalFailure(format!(
        "heatsink crossing did not converge for separation {lateral_separation} m \
         (best residual {} m)",
        best.0
    )))
}

/// Die edge walls, in summation order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Wall {
    PosX,
    NegX,
    PosY,
    NegY,
}

impl Wall {
    pub const ALL: [Wall; 4] = [Wall::PosX, Wall::NegX, Wall::PosY, Wall::NegY];

    pub fn id(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Wall::PosX => "+x",
            Wall::NegX => "-x",
            Wall::PosY => "+y",
            Wall::NegY => "-y",
        }
    }

    /// Mirror `p` across this wall.
    pub fn mirror(self, p: Point, half_side: f64) -> Point {
        match self {
            Wall::PosX => Point::new(2.0 * half_side - p.x, p.y),
            Wall::NegX => Point::new(-2.0 * half_side - p.x, p.y),
            Wall::PosY => Point::new(p.x, 2.0 * half_side - p.y),
            Wall::NegY => Point::new(p.x, -2.0 * half_side - p.y),
        }
    }

    /// Point where the straight segment `from -> to` crosses the wall line,
    /// if the segment reaches it.
    pub fn crossing(self, from: Point, to: Point, half_side: f64) -> Option<Point> {
        let (a, b, c) = match self {
            Wall::PosX => (from.x, to.x, half_side),
            Wall::NegX => (from.x, to.x, -half_side),
            Wall::PosY => (from.y, to.y, half_side),
            Wall::NegY => (from.y, to.y, -half_side),
        };
        if a == b {
            return None;
        }
        let s = (c - a) / (b - a);
        if !(0.0..=1.0).contains(&s) {
            return None;
        }
        let p = Point::new(from.x + s * (to.x - from.x), from.y + s * (to.y - from.y));
        Some(match self {
            Wall::PosX | Wall::NegX => Point::new(c, p.y),
            Wall::PosY | Wall::NegY => Point::new(p.x, c),
        })
    }
}

/// Images of `src` across the four die edges, in [`Wall::ALL`] order.
pub fn image_sources_for_edges(src: Point, geo: &PackageGeometry) -> [Point; 4] {
    let h = geo.half_side();
    Wall::ALL.map(|w| w.mirror(src, h))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    /// Cell pitch, m.
    pub resolution: f64,
    /// Half-width of the square sampled region around the die centre, m.
    pub extent: f64,
}

impl GridSpec {
    /// Grid over the whole die at `resolution`.
    pub fn for_die(geo: &PackageGeometry, resolution: f64) -> Self {
        Self {
            resolution,
            extent: geo.half_side(),
        }
    }

    pub fn validate(&self, geo: &PackageGeometry) -> Result<()> {
        if !(self.resolution.is_finite() && self.resolution > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "resolution must be positive, got {}",
                self.resolution
            )));
        }
        if !(self.extent.is_finite() && self.extent > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "extent must be positive, got {}",
                self.extent
            )));
        }
        if self.resolution > geo.die_side {
            return Err(Error::InvalidGrid(format!(
                "resolution {} m is larger than the die ({} m)",
                self.resolution, geo.die_side
            )));
        }
        if self.extent > geo.half_side() * (1.0 + 1e-12) {
            return Err(Error::InvalidGrid(format!(
                "extent {} m reaches beyond the die half-side {} m",
                self.extent,
                geo.half_side()
            )));
        }
        Ok(())
    }

    /// Points per axis.
    pub fn dim(&self) -> usize {
        // 1e-9 absorbs representation error in ratios like 0.022 / 0.0001.
        (2.0 * self.extent / self.resolution + 1e-9).floor() as usize + 1
    }

    /// Coordinates along one axis, symmetric about the origin.
    pub fn axis(&self) -> Vec<f64> {
        let n = self.dim();
        let centre = (n as f64 - 1.0) / 2.0;
        (0..n)
            .map(|i| (i as f64 - centre) * self.resolution)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub x: f64,
    pub y: f64,
    /// Set on the cell holding the antenna; the field is undefined there.
    pub is_antenna_cell: bool,
}

impl GridPoint {
    pub fn point(&self) -> Point {
        Point::new(self.x, self.y)
    }
}

/// Row-major (y outer, x inner) evaluation points.
pub fn grid_points(spec: &GridSpec, geo: &PackageGeometry) -> Result<Vec<GridPoint>> {
    spec.validate(geo)?;
    let axis = spec.axis();
    let half = spec.resolution / 2.0;
    let a = geo.antenna;
    let mut out = Vec::with_capacity(axis.len() * axis.len());
    for &y in &axis {
        for &x in &axis {
            let is_antenna_cell = (x - a.x).abs() <= half && (y - a.y).abs() <= half;
            out.push(GridPoint {
                x,
                y,
                is_antenna_cell,
            });
        }
    }
    Ok(out)
}
