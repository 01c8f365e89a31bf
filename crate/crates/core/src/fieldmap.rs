//! Grid sweep and coherent summation.

use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::geometry::{grid_points, GridPoint, GridSpec, Point};
use crate::materials::spreading;
use crate::nearfield::{NearFieldModel, DEFAULT_NEAR_FIELD_RADIUS};
use crate::raytrace::{pattern_gain, RayComponent, RayKind, Scene};
use crate::{Error, Result};

pub const CSV_HEADER: &str = "x_mm,y_mm,mag_db,re,im";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ComponentToggles {
    pub direct: bool,
    pub heatsink: bool,
    pub edges: bool,
    /// Only effective when the scene's diffraction coefficient is non-zero.
    pub diffraction: bool,
}

impl Default for ComponentToggles {
    fn default() -> Self {
        Self {
            direct: true,
            heatsink: true,
            edges: true,
            diffraction: true,
        }
    }
}

impl ComponentToggles {
    pub fn direct_only() -> Self {
        Self {
            direct: true,
            heatsink: false,
            edges: false,
            diffraction: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DbReference {
    /// Strongest non-excluded cell sits at 0 dB.
    Peak,
    /// Fixed amplitude, for absolute maps.
    Absolute(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapOptions {
    pub components: ComponentToggles,
    /// Near-field radius in metres; `None` disables the correction.
    pub near_field_radius: Option<f64>,
    pub db_reference: DbReference,
    /// Worker threads for the sweep; 0 uses all available cores.
    pub workers: usize,
}

impl Default for MapOptions {
    fn default() -> Self {
        Self {
            components: ComponentToggles::default(),
            near_field_radius: Some(DEFAULT_NEAR_FIELD_RADIUS),
            db_reference: DbReference::Peak,
            workers: 0,
        }
    }
}

/// Scene plus the resolved near-field stitch, shared read-only by workers.
#[derive(Debug, Clone)]
pub struct FieldModel<'a> {
    scene: &'a Scene,
    components: ComponentToggles,
    near_field: Option<NearFieldModel>,
}

impl<'a> FieldModel<'a> {
    pub fn new(scene: &'a Scene, options: &MapOptions) -> Result<Self> {
        let near_field = match options.near_field_radius {
            Some(radius) => Some(NearFieldModel::new(scene.pc_sio2.beta, radius, |d| {
                direct_far_magnitude(scene, d)
            })?),
            None => None,
        };
        Ok(Self {
            scene,
            components: options.components,
            near_field,
        })
    }

    pub fn near_field(&self) -> Option<&NearFieldModel> {
        self.near_field.as_ref()
    }

    /// Components at `rx` in summation order: direct, heatsink, edge walls by
    /// id, diffracted.
    pub fn components(&self, src: Point, rx: Point) -> Result<Vec<RayComponent>> {
        let s = self.scene;
        let mut out = Vec::with_capacity(7);
        if self.components.direct {
            let mut direct = s.trace_direct(src, rx)?;
            if let Some(nf) = &self.near_field {
                let d = direct.path_length();
                if d < nf.d_nf {
                    let mag = nf.near_magnitude(d)?;
                    direct.amplitude = Complex64::from_polar(mag, -s.pc_sio2.beta * d);
                }
            }
            out.push(direct);
        }
        if self.components.heatsink {
            out.push(s.trace_heatsink(src, rx)?);
        }
        if self.components.edges {
            out.extend(s.trace_edges(src, rx)?);
        }
        if self.components.diffraction {
            if let Some(c) = s.trace_diffracted(src, rx, s.options.diffraction_coeff)? {
                out.push(c);
            }
        }
        Ok(out)
    }

    pub fn field_at(&self, src: Point, rx: Point) -> Result<Complex64> {
        Ok(sum_amplitudes(&self.components(src, rx)?))
    }
}

/// Magnitude of the direct ray on its far-field law.
pub fn direct_far_magnitude(scene: &Scene, d: f64) -> f64 {
    pattern_gain(std::f64::consts::FRAC_PI_2, &scene.pattern)
        * (-scene.pc_sio2.alpha * d).exp()
        * spreading(d, scene.options.spreading_exponent)
}

pub fn sum_amplitudes(components: &[RayComponent]) -> Complex64 {
    components
        .iter()
        .fold(Complex64::new(0.0, 0.0), |acc, c| acc + c.amplitude)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldGrid {
    pub spec: GridSpec,
    /// Coordinates along each axis, m.
    pub axis: Vec<f64>,
    /// Row-major (y outer) complex field; zero on excluded cells.
    pub values: Vec<Complex64>,
    /// `20 log10(|value| / reference)`; NaN on excluded cells.
    pub magnitudes_db: Vec<f64>,
    pub excluded: Vec<bool>,
    pub reference: f64,
}

impl FieldGrid {
    pub fn dim(&self) -> usize {
        self.axis.len()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn point(&self, index: usize) -> Point {
        let n = self.dim();
        Point::new(self.axis[index % n], self.axis[index / n])
    }

    pub fn excluded_cells(&self) -> impl Iterator<Item = usize> + '_ {
        self.excluded
            .iter()
            .enumerate()
            .filter_map(|(i, &e)| e.then_some(i))
    }

    /// Field map CSV, one row per non-excluded cell.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{CSV_HEADER}")?;
        for i in 0..self.len() {
            if self.excluded[i] {
                continue;
            }
            let p = self.point(i);
            let v = self.values[i];
            writeln!(
                w,
                "{},{},{},{},{}",
                format_sig9(p.x * 1e3),
                format_sig9(p.y * 1e3),
                format_sig9(self.magnitudes_db[i]),
                format_sig9(v.re),
                format_sig9(v.im)
            )?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)
            .expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("CSV output is ASCII")
    }
}

/// Decimal with nine significant digits; no exponent notation.
pub fn format_sig9(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    // The exponent of the 9-digit scientific form already includes any
    // rounding carry (9.999999999 -> 1.00000000e1).
    let sci = format!("{v:.8e}");
    let exponent: i32 = sci[sci.find('e').unwrap() + 1..].parse().unwrap();
    let decimals = (8 - exponent).max(0) as usize;
    format!("{v:.decimals$}")
}

pub fn compute_field_map(
    scene: &Scene,
    grid: &GridSpec,
    options: &MapOptions,
) -> Result<FieldGrid> {
    let model = FieldModel::new(scene, options)?;
    let points = grid_points(grid, &scene.geometry)?;
    let src = scene.geometry.antenna;

    let eval = |p: &GridPoint| -> Result<Complex64> {
        if p.is_antenna_cell {
            return Ok(Complex64::new(0.0, 0.0));
        }
        model.field_at(src, p.point()).map_err(|e| Error::Cell {
            x_mm: p.x * 1e3,
            y_mm: p.y * 1e3,
            source: Box::new(e),
        })
    };

    let workers = if options.workers == 0 {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    } else {
        options.workers
    };
    let values: Vec<Complex64> = if workers == 1 {
        points.iter().map(eval).collect::<Result<_>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::InvalidInput(format!("cannot start {workers} workers: {e}")))?;
        pool.install(|| points.par_iter().map(eval).collect::<Result<_>>())?
    };

    let excluded: Vec<bool> = points.iter().map(|p| p.is_antenna_cell).collect();
    let reference = match options.db_reference {
        DbReference::Absolute(a) => {
            if !(a.is_finite() && a > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "reference amplitude must be positive, got {a}"
                )));
            }
            a
        }
        DbReference::Peak => values
            .iter()
            .zip(&excluded)
            .filter(|(_, &e)| !e)
            .map(|(v, _)| v.norm())
            .fold(f64::NAN, f64::max),
    };
    if !(reference.is_finite() && reference > 0.0) {
        return Err(Error::InvalidGrid(
            "no cell with a non-zero field to reference".into(),
        ));
    }
    let magnitudes_db = values
        .iter()
        .zip(&excluded)
        .map(|(v, &e)| {
            if e {
                f64::NAN
            } else {
                20.0 * (v.norm() / reference).log10()
            }
        })
        .collect();

    Ok(FieldGrid {
        spec: *grid,
        axis: grid.axis(),
        values,
        magnitudes_db,
        excluded,
        reference,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkResult {
    pub total: Complex64,
    pub components: Vec<RayComponent>,
}

impl LinkResult {
    pub fn without(&self, kind: impl Fn(&RayKind) -> bool) -> Vec<&RayComponent> {
        self.components.iter().filter(|c| !kind(&c.kind)).collect()
    }
}

pub fn point_to_point_field(
    scene: &Scene,
    src: Point,
    rx: Point,
    options: &MapOptions,
) -> Result<LinkResult> {
    if src == rx {
        return Err(Error::InvalidInput("source and receiver coincide".into()));
    }
    for (name, p) in [("source", src), ("receiver", rx)] {
        if !scene.geometry.contains(p) {
            return Err(Error::InvalidInput(format!(
                "{name} ({}, {}) lies outside the die",
                p.x, p.y
            )));
        }
    }
    let model = FieldModel::new(scene, options)?;
    let components = model.components(src, rx)?;
    Ok(LinkResult {
        total: sum_amplitudes(&components),
        components,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig9_formatting() {
        assert_eq!(format_sig9(0.0), "0");
        assert_eq!(format_sig9(1.0), "1.00000000");
        assert_eq!(format_sig9(-12.345678912), "-12.3456789");
        assert_eq!(format_sig9(0.30000000000000004), "0.300000000");
        assert_eq!(format_sig9(1.23456789e-5), "0.0000123456789");
        assert_eq!(format_sig9(9.999999999), "10.0000000");
        assert_eq!(format_sig9(123456789012.0), "123456789012");
    }

    #[test]
    fn sig9_reparses_stably() {
        for v in [1.0e-7, -1.23456789012345, 2.5e3, 0.1 + 0.2, -99.9999999999] {
            let s = format_sig9(v);
            assert_eq!(format_sig9(s.parse().unwrap()), s);
        }
    }

    #[test]
    fn link_rejects_coincident_points() {
        let scene = Scene::with_defaults(60e9).unwrap();
        let p = Point::new(1e-3, 1e-3);
        assert!(point_to_point_field(&scene, p, p, &MapOptions::default()).is_err());
        let out = Point::new(20e-3, 0.0);
        assert!(point_to_point_field(&scene, p, out, &MapOptions::default()).is_err());
    }

    #[test]
    fn link_breakdown_resums() {
        let scene = Scene::with_defaults(60e9).unwrap();
        let r = point_to_point_field(
            &scene,
            Point::default(),
            Point::new(4e-3, -2e-3),
            &MapOptions::default(),
        )
        .unwrap();
        assert_eq!(r.components.len(), 6);
        assert_eq!(sum_amplitudes(&r.components), r.total);
    }

    #[test]
    fn disabling_edges_drops_only_edges() {
        let scene = Scene::with_defaults(60e9).unwrap();
        let rx = Point::new(3e-3, 5e-3);
        let all =
            point_to_point_field(&scene, Point::default(), rx, &MapOptions::default()).unwrap();
        let mut opts = MapOptions::default();
        opts.components.edges = false;
        let no_edges = point_to_point_field(&scene, Point::default(), rx, &opts).unwrap();
        let kept: Vec<_> = all
            .without(|k| matches!(k, RayKind::EdgeReflect(_)))
            .into_iter()
            .cloned()
            .collect();
        assert_eq!(kept, no_edges.components);
    }
}
