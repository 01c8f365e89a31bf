//! Per-receiver ray inventory.
//!
//! Four kinds of component reach a receiver in the SiO2 layer:
//!
//! * the direct ray, straight through SiO2;
//! * the heatsink ray, refracted into the bulk silicon, reflected by the
//!   metal plane and refracted back down (`t12 * R * t21` times the path
//!   attenuation);
//! * one ray per die edge, built from the mirror image of the source;
//! * an optional diffracted heatsink ray whose first transmission is
//!   replaced by a user-supplied scalar.
//!
//! Interface coefficients use the amplitude Fresnel formulas in the
//! convention where both polarizations give `r = (n1 - n2) / (n1 + n2)` at
//! normal incidence. Beyond the critical angle `|r| = 1`.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use num_complex::Complex64;

use crate::geometry::{self, PackageGeometry, Point, Wall};
use crate::materials::{
    attenuation_factor, propagation_constants_with, spreading, AlphaLambdaMode, MaterialProperties,
    PropagationConstants,
};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Polarization {
    /// E-field in the plane of incidence (p / TM).
    Parallel,
    /// E-field normal to the plane of incidence (s / TE).
    Perpendicular,
}

impl Polarization {
    pub fn as_str(self) -> &'static str {
        match self {
            Polarization::Parallel => "parallel",
            Polarization::Perpendicular => "perpendicular",
        }
    }
}

impl FromStr for Polarization {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "parallel" => Ok(Self::Parallel),
            "perpendicular" => Ok(Self::Perpendicular),
            other => Err(format!("expected parallel or perpendicular, got `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Transmitted {
    Angle(f64),
    TotalInternalReflection,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterfaceCoefficients {
    pub r: Complex64,
    /// Amplitude transmission; evanescent when totally reflected.
    pub t: Complex64,
    pub theta_t: Transmitted,
    pub polarization: Polarization,
}

impl InterfaceCoefficients {
    pub fn is_tir(&self) -> bool {
        self.theta_t == Transmitted::TotalInternalReflection
    }
}

pub fn critical_angle(n1: f64, n2: f64) -> Option<f64> {
    (n1 > n2).then(|| (n2 / n1).asin())
}

pub fn fresnel(theta_i: f64, n1: f64, n2: f64, pol: Polarization) -> Result<InterfaceCoefficients> {
    if !(0.0..FRAC_PI_2).contains(&theta_i) {
        return Err(Error::InvalidInput(format!(
            "incidence angle {theta_i} rad outside [0, pi/2)"
        )));
    }
    if !(n1 > 0.0 && n2 > 0.0 && n1.is_finite() && n2.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "refractive indices must be positive, got {n1} and {n2}"
        )));
    }
    let (sin_i, cos_i) = theta_i.sin_cos();
    let sin_t = n1 / n2 * sin_i;
    let (cos_t, theta_t) = if sin_t > 1.0 {
        // exp(-j k z) convention: the transmitted wave must decay away
        // from the interface, so cos_t = -j sqrt(sin_t^2 - 1).
        (
            Complex64::new(0.0, -(sin_t * sin_t - 1.0).sqrt()),
            Transmitted::TotalInternalReflection,
        )
    } else {
        let c = (1.0 - sin_t * sin_t).sqrt();
        (Complex64::new(c, 0.0), Transmitted::Angle(sin_t.asin()))
    };
    let a = Complex64::new(n1 * cos_i, 0.0);
    let two_a = 2.0 * a;
    let (r, t) = match pol {
        Polarization::Perpendicular => {
            let b = n2 * cos_t;
            ((a - b) / (a + b), two_a / (a + b))
        }
        Polarization::Parallel => {
            let p = n1 * cos_t;
            let q = Complex64::new(n2 * cos_i, 0.0);
            ((p - q) / (p + q), two_a / (p + q))
        }
    };
    Ok(InterfaceCoefficients {
        r,
        t,
        theta_t,
        polarization: pol,
    })
}

/// Metal heatsink reflection: `-magnitude` at every angle (PEC when 1).
pub fn reflector_coefficient(theta_i: f64, magnitude: f64) -> Complex64 {
    debug_assert!((0.0..FRAC_PI_2).contains(&theta_i));
    Complex64::new(-magnitude, 0.0)
}

/// Amplitude gain as a function of the polar angle from the +z axis (towards
/// the heatsink). In-plane rays leave at `pi/2`.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum AntennaPattern {
    #[default]
    Isotropic,
    Table(PatternTable),
}

/// Gain samples over `[0, pi]`, strictly increasing in angle.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternTable {
    angles: Vec<f64>,
    gains: Vec<f64>,
}

impl PatternTable {
    /// `entries` are (angle in radians, amplitude gain).
    pub fn new(entries: Vec<(f64, f64)>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidPattern("table is empty".into()));
        }
        for (i, &(a, g)) in entries.iter().enumerate() {
            if !(0.0..=std::f64::consts::PI + 1e-12).contains(&a) {
                return Err(Error::InvalidPattern(format!(
                    "entry {i}: angle {a} rad outside [0, pi]"
                )));
            }
            if !(g.is_finite() && g >= 0.0) {
                return Err(Error::InvalidPattern(format!(
                    "entry {i}: gain {g} is not >= 0"
                )));
            }
            if i > 0 && a <= entries[i - 1].0 {
                return Err(Error::InvalidPattern(format!(
                    "entry {i}: angles must be strictly ascending"
                )));
            }
        }
        let (angles, gains) = entries.into_iter().unzip();
        Ok(Self { angles, gains })
    }

    /// Two-column text, `angle_degrees gain` per line, whitespace or comma
    /// separated. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|s| !s.is_empty())
                .collect();
            if cols.len() != 2 {
                return Err(Error::InvalidPattern(format!(
                    "line {}: expected 2 columns, found {}",
                    i + 1,
                    cols.len()
                )));
            }
            let num = |s: &str| {
                s.parse::<f64>().map_err(|_| {
                    Error::InvalidPattern(format!("line {}: `{s}` is not a number", i + 1))
                })
            };
            entries.push((num(cols[0])?.to_radians(), num(cols[1])?));
        }
        Self::new(entries)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            Error::InvalidPattern(m) => Error::InvalidPattern(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn gain(&self, theta: f64) -> f64 {
        let n = self.angles.len();
        if theta <= self.angles[0] {
            return self.gains[0];
        }
        if theta >= self.angles[n - 1] {
            return self.gains[n - 1];
        }
        let hi = self.angles.partition_point(|&a| a <= theta);
        let lo = hi - 1;
        if self.angles[lo] == theta {
            return self.gains[lo];
        }
        let f = (theta - self.angles[lo]) / (self.angles[hi] - self.angles[lo]);
        self.gains[lo] + f * (self.gains[hi] - self.gains[lo])
    }
}

pub fn pattern_gain(theta: f64, pattern: &AntennaPattern) -> f64 {
    match pattern {
        AntennaPattern::Isotropic => 1.0,
        AntennaPattern::Table(t) => t.gain(theta),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Medium {
    SiO2,
    Si,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RayKind {
    Direct,
    HeatsinkReflect,
    EdgeReflect(Wall),
    DiffractHeatsink,
}

impl fmt::Display for RayKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RayKind::Direct => f.write_str("direct"),
            RayKind::HeatsinkReflect => f.write_str("heatsink"),
            RayKind::EdgeReflect(w) => write!(f, "edge{}", w.name()),
            RayKind::DiffractHeatsink => f.write_str("diffracted"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub medium: Medium,
    pub length: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RayComponent {
    pub kind: RayKind,
    pub path_segments: Vec<Segment>,
    /// Polar launch angle from +z, rad.
    pub launch_angle: f64,
    pub coefficient: Complex64,
    pub amplitude: Complex64,
}

impl RayComponent {
    pub fn path_length(&self) -> f64 {
        self.path_segments.iter().map(|s| s.length).sum()
    }
}

/// Knobs of the ray model that are not geometry or material data.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceOptions {
    pub polarization_heatsink: Polarization,
    pub polarization_edge: Polarization,
    pub reflector_magnitude: f64,
    /// Scalar replacing the SiO2->Si transmission of the diffracted ray;
    /// zero disables the component.
    pub diffraction_coeff: Complex64,
    pub spreading_exponent: f64,
    pub alpha_lambda_mode: AlphaLambdaMode,
}

impl Default for TraceOptions {
    fn default() -> Self {
        Self {
            polarization_heatsink: Polarization::Parallel,
            polarization_edge: Polarization::Perpendicular,
            reflector_magnitude: 1.0,
            diffraction_coeff: Complex64::new(0.0, 0.0),
            spreading_exponent: 0.0,
            alpha_lambda_mode: AlphaLambdaMode::FreeSpace,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Materials {
    pub sio2: MaterialProperties,
    pub si: MaterialProperties,
    /// Medium beyond the lateral die edges.
    pub edge: MaterialProperties,
}

impl Default for Materials {
    fn default() -> Self {
        Self {
            sio2: MaterialProperties::sio2(),
            si: MaterialProperties::si(),
            edge: MaterialProperties::air(),
        }
    }
}

/// Everything a trace needs, with propagation constants resolved once.
#[derive(Debug, Clone)]
pub struct Scene {
    pub geometry: PackageGeometry,
    pub materials: Materials,
    pub frequency: f64,
    pub pattern: AntennaPattern,
    pub options: TraceOptions,
    pub pc_sio2: PropagationConstants,
    pub pc_si: PropagationConstants,
    n_sio2: f64,
    n_si: f64,
    n_edge: f64,
}

impl Scene {
    pub fn new(
        geometry: PackageGeometry,
        materials: Materials,
        frequency: f64,
        pattern: AntennaPattern,
        options: TraceOptions,
    ) -> Result<Self> {
        geometry.validate()?;
        if materials.edge.is_conductor {
            return Err(Error::UnsupportedMaterial(materials.edge.name.clone()));
        }
        if !(options.reflector_magnitude.is_finite()
            && (0.0..=1.0).contains(&options.reflector_magnitude))
        {
            return Err(Error::InvalidInput(format!(
                "reflector magnitude must be in [0, 1], got {}",
                options.reflector_magnitude
            )));
        }
        if !(options.spreading_exponent.is_finite() && options.spreading_exponent >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "spreading exponent must be >= 0, got {}",
                options.spreading_exponent
            )));
        }
        if !(options.diffraction_coeff.re.is_finite() && options.diffraction_coeff.im.is_finite()) {
            return Err(Error::InvalidInput(
                "diffraction coefficient must be finite".into(),
            ));
        }
        let mode = options.alpha_lambda_mode;
        let pc_sio2 = propagation_constants_with(&materials.sio2, frequency, mode)?;
        let pc_si = propagation_constants_with(&materials.si, frequency, mode)?;
        Ok(Self {
            n_sio2: materials.sio2.refractive_index(),
            n_si: materials.si.refractive_index(),
            n_edge: materials.edge.refractive_index(),
            geometry,
            materials,
            frequency,
            pattern,
            options,
            pc_sio2,
            pc_si,
        })
    }

    /// Default package, materials and options at `frequency`.
    pub fn with_defaults(frequency: f64) -> Result<Self> {
        Self::new(
            PackageGeometry::default(),
            Materials::default(),
            frequency,
            AntennaPattern::Isotropic,
            TraceOptions::default(),
        )
    }

    pub fn n_sio2(&self) -> f64 {
        self.n_sio2
    }

    pub fn n_si(&self) -> f64 {
        self.n_si
    }

    pub fn n_edge(&self) -> f64 {
        self.n_edge
    }

    fn constants(&self, medium: Medium) -> &PropagationConstants {
        match medium {
            Medium::SiO2 => &self.pc_sio2,
            Medium::Si => &self.pc_si,
        }
    }

    /// Product of per-segment `exp(-gamma l)` times spreading over the total
    /// unfolded length.
    pub fn path_factor(&self, segments: &[Segment]) -> Complex64 {
        let mut f = Complex64::new(1.0, 0.0);
        let mut total = 0.0;
        for s in segments {
            f *= attenuation_factor(self.constants(s.medium), s.length);
            total += s.length;
        }
        f * spreading(total, self.options.spreading_exponent)
    }

    pub fn trace_direct(&self, src: Point, rx: Point) -> Result<RayComponent> {
        let d = src.distance(rx);
        if d.is_nan() || d <= 0.0 {
            return Err(Error::InvalidInput(
                "direct ray needs distinct source and receiver".into(),
            ));
        }
        let segments = vec![Segment {
            medium: Medium::SiO2,
            length: d,
        }];
        let launch_angle = FRAC_PI_2;
        let amplitude = pattern_gain(launch_angle, &self.pattern) * self.path_factor(&segments);
        Ok(RayComponent {
            kind: RayKind::Direct,
            path_segments: segments,
            launch_angle,
            coefficient: Complex64::new(1.0, 0.0),
            amplitude,
        })
    }

    pub fn trace_heatsink(&self, src: Point, rx: Point) -> Result<RayComponent> {
        self.heatsink_path(src, rx, None, RayKind::HeatsinkReflect)
    }

    /// Heatsink-shaped path whose SiO2->Si transmission is `d_coeff`;
    /// `None` when the coefficient is zero.
    pub fn trace_diffracted(
        &self,
        src: Point,
        rx: Point,
        d_coeff: Complex64,
    ) -> Result<Option<RayComponent>> {
        if d_coeff == Complex64::new(0.0, 0.0) {
            return Ok(None);
        }
        self.heatsink_path(src, rx, Some(d_coeff), RayKind::DiffractHeatsink)
            .map(Some)
    }

    fn heatsink_path(
        &self,
        src: Point,
        rx: Point,
        first_transmission: Option<Complex64>,
        kind: RayKind,
    ) -> Result<RayComponent> {
        let geo = &self.geometry;
        let sep = src.distance(rx);
        let theta1 = geometry::solve_heatsink_crossing(sep, geo, self.n_sio2, self.n_si)?;
        let pol = self.options.polarization_heatsink;
        let up = fresnel(theta1, self.n_sio2, self.n_si, pol)?;
        let theta2 = match up.theta_t {
            Transmitted::Angle(t) => t,
            Transmitted::TotalInternalReflection => {
                return Err(Error::NumericalFailure(format!(
                    "heatsink ray at {theta1} rad is totally reflected at SiO2/Si"
                )))
            }
        };
        let down = fresnel(theta2, self.n_si, self.n_sio2, pol)?;
        let t12 = first_transmission.unwrap_or(up.t);
        let coefficient =
            t12 * reflector_coefficient(theta2, self.options.reflector_magnitude) * down.t;

        let l1 = geo.sio2_leg_height() / theta1.cos();
        let l2 = geo.si_leg_height() / theta2.cos();
        let segments = vec![
            Segment {
                medium: Medium::SiO2,
                length: l1,
            },
            Segment {
                medium: Medium::Si,
                length: l2,
            },
            Segment {
                medium: Medium::Si,
                length: l2,
            },
            Segment {
                medium: Medium::SiO2,
                length: l1,
            },
        ];
        let amplitude =
            coefficient * pattern_gain(theta1, &self.pattern) * self.path_factor(&segments);
        Ok(RayComponent {
            kind,
            path_segments: segments,
            launch_angle: theta1,
            coefficient,
            amplitude,
        })
    }

    /// Single-bounce rays off the die edges, in wall order.
    pub fn trace_edges(&self, src: Point, rx: Point) -> Result<Vec<RayComponent>> {
        let half = self.geometry.half_side();
        let mut out = Vec::with_capacity(4);
        for wall in Wall::ALL {
            let image = wall.mirror(src, half);
            let Some(hit) = wall.crossing(image, rx, half) else {
                continue;
            };
            if hit.x.abs() > half || hit.y.abs() > half {
                continue;
            }
            let (normal, tangential) = match wall {
                Wall::PosX | Wall::NegX => ((rx.x - image.x).abs(), (rx.y - image.y).abs()),
                Wall::PosY | Wall::NegY => ((rx.y - image.y).abs(), (rx.x - image.x).abs()),
            };
            let theta = tangential.atan2(normal);
            let coefficient = fresnel(
                theta,
                self.n_sio2,
                self.n_edge,
                self.options.polarization_edge,
            )?
            .r;
            let segments: Vec<Segment> = [src.distance(hit), hit.distance(rx)]
                .into_iter()
                .filter(|&l| l > 0.0)
                .map(|length| Segment {
                    medium: Medium::SiO2,
                    length,
                })
                .collect();
            let launch_angle = FRAC_PI_2;
            let amplitude = coefficient
                * pattern_gain(launch_angle, &self.pattern)
                * self.path_factor(&segments);
            out.push(RayComponent {
                kind: RayKind::EdgeReflect(wall),
                path_segments: segments,
                launch_angle,
                coefficient,
                amplitude,
            });
        }
        Ok(out)
    }
}
