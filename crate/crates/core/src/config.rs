//! Run configuration: a flat `key = value` file with `[section]` headers.
//!
//! Values are kept in the units the file uses (mm, um, GHz) so a rendered
//! configuration parses back to an identical [`RunConfig`]. Conversion to SI
//! happens when the scene is built.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use num_complex::Complex64;

use crate::compare::Alignment;
use crate::fieldmap::{ComponentToggles, DbReference, MapOptions};
use crate::geometry::{GridSpec, PackageGeometry, Point};
use crate::materials::{AlphaLambdaMode, MaterialProperties, SPEED_OF_LIGHT};
use crate::raytrace::{AntennaPattern, Materials, PatternTable, Polarization, Scene, TraceOptions};
use crate::{Error, Result};

/// Every recognised key with its default, shown by `--help`.
pub const CONFIG_REFERENCE: &str = "\
Configuration keys (default in parentheses, * = required):
  [run]        mode* (map|link|compare), frequency_ghz*, workers (0 = all cores),
               out_dir (out), db_reference (peak | positive amplitude)
  [geometry]   die_side_mm*, package_side_mm*, t_sio2_um*, grid_resolution_mm*,
               t_si_mm (0.7), antenna_x_mm (0), antenna_y_mm (0), reflector_offset_mm (0)
  [materials.<id>]  epsilon_r*, tan_delta*, name (<id>)
               built in: sio2 (3.9, 0.098), si (11.9, 0.252), air (1, 0)
  [propagation] alpha_lambda_mode (free_space | in_medium), spreading_exponent (0)
  [raytrace]   polarization_heatsink (parallel), polarization_edge (perpendicular),
               reflector_magnitude (1), diffraction_coeff_re (0), diffraction_coeff_im (0),
               edge_material (air), pattern_path (isotropic when unset),
               enable_direct (true), enable_heatsink (true), enable_edges (true)
  [nearfield]  near_field_enabled (true), near_field_radius_mm (1.3 | auto)
  [link]       rx_x_mm*, rx_y_mm* (required in link mode)
  [compare]    reference_path* (required in compare mode), alignment (nearest | bilinear),
               fail_above_db (unset)
Relative paths are resolved against the configuration file's directory.";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Map,
    Link,
    Compare,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Map => "map",
            Mode::Link => "link",
            Mode::Compare => "compare",
        }
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "map" => Ok(Mode::Map),
            "link" => Ok(Mode::Link),
            "compare" => Ok(Mode::Compare),
            other => Err(format!("expected map, link or compare, got `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeometryConfig {
    pub die_side_mm: f64,
    pub package_side_mm: f64,
    pub t_sio2_um: f64,
    pub t_si_mm: f64,
    pub antenna_x_mm: f64,
    pub antenna_y_mm: f64,
    pub grid_resolution_mm: f64,
    pub reflector_offset_mm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaterialConfig {
    pub name: String,
    pub epsilon_r: f64,
    pub tan_delta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NearFieldRadius {
    Millimetres(f64),
    /// One in-medium wavelength in SiO2.
    Auto,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RaytraceConfig {
    pub polarization_heatsink: Polarization,
    pub polarization_edge: Polarization,
    pub reflector_magnitude: f64,
    pub diffraction_coeff_re: f64,
    pub diffraction_coeff_im: f64,
    pub edge_material: String,
    pub pattern_path: Option<PathBuf>,
    pub enable_direct: bool,
    pub enable_heatsink: bool,
    pub enable_edges: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mode: Mode,
    pub frequency_ghz: f64,
    pub workers: usize,
    pub out_dir: PathBuf,
    /// `None` references the map peak.
    pub db_reference: Option<f64>,
    pub geometry: GeometryConfig,
    pub materials: BTreeMap<String, MaterialConfig>,
    pub alpha_lambda_mode: AlphaLambdaMode,
    pub spreading_exponent: f64,
    pub raytrace: RaytraceConfig,
    pub near_field_enabled: bool,
    pub near_field_radius: NearFieldRadius,
    /// Receiver for link mode, mm.
    pub link_rx_mm: Option<(f64, f64)>,
    pub reference_path: Option<PathBuf>,
    pub alignment: Alignment,
    pub fail_above_db: Option<f64>,
}

fn builtin_materials() -> BTreeMap<String, MaterialConfig> {
    [
        MaterialProperties::sio2(),
        MaterialProperties::si(),
        MaterialProperties::air(),
    ]
    .into_iter()
    .map(|m| {
        (
            m.name.to_lowercase(),
            MaterialConfig {
                name: m.name,
                epsilon_r: m.epsilon_r,
                tan_delta: m.tan_delta,
            },
        )
    })
    .collect()
}

impl RunConfig {
    /// The 22 mm die in a 33 mm package at 60 GHz with a centred antenna.
    pub fn example() -> Self {
        Self {
            mode: Mode::Map,
            frequency_ghz: 60.0,
            workers: 0,
            out_dir: PathBuf::from("out"),
            db_reference: None,
            geometry: GeometryConfig {
                die_side_mm: 22.0,
                package_side_mm: 33.0,
                t_sio2_um: 13.0,
                t_si_mm: 0.7,
                antenna_x_mm: 0.0,
                antenna_y_mm: 0.0,
                grid_resolution_mm: 0.1,
                reflector_offset_mm: 0.0,
            },
            materials: builtin_materials(),
            alpha_lambda_mode: AlphaLambdaMode::FreeSpace,
            spreading_exponent: 0.0,
            raytrace: RaytraceConfig {
                polarization_heatsink: Polarization::Parallel,
                polarization_edge: Polarization::Perpendicular,
                reflector_magnitude: 1.0,
                diffraction_coeff_re: 0.0,
                diffraction_coeff_im: 0.0,
                edge_material: "air".into(),
                pattern_path: None,
                enable_direct: true,
                enable_heatsink: true,
                enable_edges: true,
            },
            near_field_enabled: true,
            near_field_radius: NearFieldRadius::Millimetres(1.3),
            link_rx_mm: None,
            reference_path: None,
            alignment: Alignment::Nearest,
            fail_above_db: None,
        }
    }

    pub fn frequency_hz(&self) -> f64 {
        self.frequency_ghz * 1e9
    }

    pub fn package_geometry(&self) -> PackageGeometry {
        let g = &self.geometry;
        PackageGeometry {
            die_side: g.die_side_mm * 1e-3,
            package_side: g.package_side_mm * 1e-3,
            t_sio2: g.t_sio2_um * 1e-6,
            t_si: g.t_si_mm * 1e-3,
            reflector_offset: g.reflector_offset_mm * 1e-3,
            antenna: Point::new(g.antenna_x_mm * 1e-3, g.antenna_y_mm * 1e-3),
        }
    }

    pub fn grid_spec(&self) -> GridSpec {
        GridSpec::for_die(
            &self.package_geometry(),
            self.geometry.grid_resolution_mm * 1e-3,
        )
    }

    fn material(&self, id: &str) -> Result<MaterialProperties> {
        let m = self
            .materials
            .get(id)
            .ok_or_else(|| Error::InvalidInput(format!("material `{id}` is not defined")))?;
        MaterialProperties::dielectric(m.name.clone(), m.epsilon_r, m.tan_delta)
    }

    pub fn scene(&self) -> Result<Scene> {
        let materials = Materials {
            sio2: self.material("sio2")?,
            si: self.material("si")?,
            edge: self.material(&self.raytrace.edge_material)?,
        };
        let pattern = match &self.raytrace.pattern_path {
            Some(p) => AntennaPattern::Table(PatternTable::load(p)?),
            None => AntennaPattern::Isotropic,
        };
        let r = &self.raytrace;
        let options = TraceOptions {
            polarization_heatsink: r.polarization_heatsink,
            polarization_edge: r.polarization_edge,
            reflector_magnitude: r.reflector_magnitude,
            diffraction_coeff: Complex64::new(r.diffraction_coeff_re, r.diffraction_coeff_im),
            spreading_exponent: self.spreading_exponent,
            alpha_lambda_mode: self.alpha_lambda_mode,
        };
        Scene::new(
            self.package_geometry(),
            materials,
            self.frequency_hz(),
            pattern,
            options,
        )
    }

    /// Near-field radius in metres, resolving `auto` against the SiO2 index.
    pub fn near_field_radius_m(&self) -> Result<Option<f64>> {
        if !self.near_field_enabled {
            return Ok(None);
        }
        Ok(Some(match self.near_field_radius {
            NearFieldRadius::Millimetres(mm) => mm * 1e-3,
            NearFieldRadius::Auto => {
                let n = self.material("sio2")?.refractive_index();
                SPEED_OF_LIGHT / self.frequency_hz() / n
            }
        }))
    }

    pub fn map_options(&self) -> Result<MapOptions> {
        Ok(MapOptions {
            components: ComponentToggles {
                direct: self.raytrace.enable_direct,
                heatsink: self.raytrace.enable_heatsink,
                edges: self.raytrace.enable_edges,
                diffraction: true,
            },
            near_field_radius: self.near_field_radius_m()?,
            db_reference: match self.db_reference {
                Some(a) => DbReference::Absolute(a),
                None => DbReference::Peak,
            },
            workers: self.workers,
        })
    }

    /// Render as a configuration file that parses back to `self`.
    pub fn to_config_string(&self) -> String {
        let mut s = String::new();
        let g = &self.geometry;
        let r = &self.raytrace;
        let _ = writeln!(s, "# chipfield configuration");
        let _ = writeln!(s, "# Lengths in mm unless the key says otherwise.\n");
        let _ = writeln!(s, "[run]");
        let _ = writeln!(s, "mode = {}", self.mode.as_str());
        let _ = writeln!(s, "frequency_ghz = {}", self.frequency_ghz);
        let _ = writeln!(s, "# 0 = all available cores");
        let _ = writeln!(s, "workers = {}", self.workers);
        let _ = writeln!(s, "out_dir = {}", self.out_dir.display());
        let _ = writeln!(s, "# peak, or an absolute amplitude that maps to 0 dB");
        match self.db_reference {
            Some(a) => {
                let _ = writeln!(s, "db_reference = {a}");
            }
            None => {
                let _ = writeln!(s, "db_reference = peak");
            }
        }
        let _ = writeln!(s, "\n[geometry]");
        let _ = writeln!(s, "die_side_mm = {}", g.die_side_mm);
        let _ = writeln!(s, "package_side_mm = {}", g.package_side_mm);
        let _ = writeln!(s, "t_sio2_um = {}", g.t_sio2_um);
        let _ = writeln!(s, "t_si_mm = {}", g.t_si_mm);
        let _ = writeln!(s, "antenna_x_mm = {}", g.antenna_x_mm);
        let _ = writeln!(s, "antenna_y_mm = {}", g.antenna_y_mm);
        let _ = writeln!(s, "grid_resolution_mm = {}", g.grid_resolution_mm);
        let _ = writeln!(
            s,
            "# gap between the Si top surface and the reflecting plane"
        );
        let _ = writeln!(s, "reflector_offset_mm = {}", g.reflector_offset_mm);
        for (id, m) in &self.materials {
            let _ = writeln!(s, "\n[materials.{id}]");
            let _ = writeln!(s, "name = {}", m.name);
            let _ = writeln!(s, "epsilon_r = {}", m.epsilon_r);
            let _ = writeln!(s, "tan_delta = {}", m.tan_delta);
        }
        let _ = writeln!(s, "\n[propagation]");
        let _ = writeln!(
            s,
            "# free_space | in_medium wavelength in the attenuation constant"
        );
        let _ = writeln!(s, "alpha_lambda_mode = {}", self.alpha_lambda_mode.as_str());
        let _ = writeln!(s, "spreading_exponent = {}", self.spreading_exponent);
        let _ = writeln!(s, "\n[raytrace]");
        let _ = writeln!(
            s,
            "polarization_heatsink = {}",
            r.polarization_heatsink.as_str()
        );
        let _ = writeln!(s, "polarization_edge = {}", r.polarization_edge.as_str());
        let _ = writeln!(s, "reflector_magnitude = {}", r.reflector_magnitude);
        let _ = writeln!(s, "# 0 + 0j disables the diffracted heatsink ray");
        let _ = writeln!(s, "diffraction_coeff_re = {}", r.diffraction_coeff_re);
        let _ = writeln!(s, "diffraction_coeff_im = {}", r.diffraction_coeff_im);
        let _ = writeln!(s, "edge_material = {}", r.edge_material);
        match &r.pattern_path {
            Some(p) => {
                let _ = writeln!(s, "pattern_path = {}", p.display());
            }
            None => {
                let _ = writeln!(
                    s,
                    "# pattern_path = pattern.txt  (two columns: angle_deg gain)"
                );
            }
        }
        let _ = writeln!(s, "enable_direct = {}", r.enable_direct);
        let _ = writeln!(s, "enable_heatsink = {}", r.enable_heatsink);
        let _ = writeln!(s, "enable_edges = {}", r.enable_edges);
        let _ = writeln!(s, "\n[nearfield]");
        let _ = writeln!(s, "near_field_enabled = {}", self.near_field_enabled);
        match self.near_field_radius {
            NearFieldRadius::Millimetres(mm) => {
                let _ = writeln!(s, "near_field_radius_mm = {mm}");
            }
            NearFieldRadius::Auto => {
                let _ = writeln!(s, "near_field_radius_mm = auto");
            }
        }
        let _ = writeln!(s, "\n[link]");
        match self.link_rx_mm {
            Some((x, y)) => {
                let _ = writeln!(s, "rx_x_mm = {x}\nrx_y_mm = {y}");
            }
            None => {
                let _ = writeln!(s, "# rx_x_mm = 5\n# rx_y_mm = 0");
            }
        }
        let _ = writeln!(s, "\n[compare]");
        match &self.reference_path {
            Some(p) => {
                let _ = writeln!(s, "reference_path = {}", p.display());
            }
            None => {
                let _ = writeln!(s, "# reference_path = reference.csv");
            }
        }
        let _ = writeln!(s, "alignment = {}", self.alignment);
        match self.fail_above_db {
            Some(v) => {
                let _ = writeln!(s, "fail_above_db = {v}");
            }
            None => {
                let _ = writeln!(s, "# fail_above_db = 1.7");
            }
        }
        s
    }
}

#[derive(Debug, Clone)]
struct Entry {
    value: String,
    line: usize,
}

const KEYS: &[(&str, &[&str])] = &[
    (
        "run",
        &[
            "mode",
            "frequency_ghz",
            "workers",
            "out_dir",
            "db_reference",
        ],
    ),
    (
        "geometry",
        &[
            "die_side_mm",
            "package_side_mm",
            "t_sio2_um",
            "t_si_mm",
            "antenna_x_mm",
            "antenna_y_mm",
            "grid_resolution_mm",
            "reflector_offset_mm",
        ],
    ),
    ("propagation", &["alpha_lambda_mode", "spreading_exponent"]),
    (
        "raytrace",
        &[
            "polarization_heatsink",
            "polarization_edge",
            "reflector_magnitude",
            "diffraction_coeff_re",
            "diffraction_coeff_im",
            "edge_material",
            "pattern_path",
            "enable_direct",
            "enable_heatsink",
            "enable_edges",
        ],
    ),
    ("nearfield", &["near_field_enabled", "near_field_radius_mm"]),
    ("link", &["rx_x_mm", "rx_y_mm"]),
    ("compare", &["reference_path", "alignment", "fail_above_db"]),
];
const MATERIAL_KEYS: &[&str] = &["name", "epsilon_r", "tan_delta"];

struct Parser<'a> {
    path: &'a Path,
    base_dir: PathBuf,
    sections: HashMap<String, HashMap<String, Entry>>,
    section_order: Vec<String>,
    missing: Vec<String>,
}

impl<'a> Parser<'a> {
    fn err(&self, line: Option<usize>, message: String) -> Error {
        match line {
            Some(line) => Error::Parse {
                path: self.path.to_path_buf(),
                line,
                message,
            },
            None => Error::Config {
                path: self.path.to_path_buf(),
                message,
            },
        }
    }

    fn tokenize(text: &str, path: &'a Path) -> Result<Self> {
        let base_dir = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        let mut p = Parser {
            path,
            base_dir,
            sections: HashMap::new(),
            section_order: Vec::new(),
            missing: Vec::new(),
        };
        let mut current: Option<String> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let l = raw.trim();
            if l.is_empty() || l.starts_with('#') || l.starts_with(';') {
                continue;
            }
            if let Some(rest) = l.strip_prefix('[') {
                let Some(name) = rest.strip_suffix(']') else {
                    return Err(p.err(Some(line), format!("malformed section header `{l}`")));
                };
                let name = name.trim().to_string();
                let known = KEYS.iter().any(|(s, _)| *s == name)
                    || name.strip_prefix("materials.").is_some_and(|id| {
                        !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
                    });
                if !known {
                    return Err(p.err(Some(line), format!("unknown section `[{name}]`")));
                }
                if !p.sections.contains_key(&name) {
                    p.section_order.push(name.clone());
                    p.sections.insert(name.clone(), HashMap::new());
                }
                current = Some(name);
                continue;
            }
            let Some((k, v)) = l.split_once('=') else {
                return Err(p.err(Some(line), format!("expected `key = value`, got `{l}`")));
            };
            let (k, v) = (k.trim(), v.trim());
            let Some(section) = current.clone() else {
                return Err(p.err(
                    Some(line),
                    format!("key `{k}` appears before any [section]"),
                ));
            };
            let allowed: &[&str] = if section.starts_with("materials.") {
                MATERIAL_KEYS
            } else {
                KEYS.iter().find(|(s, _)| *s == section).unwrap().1
            };
            if !allowed.contains(&k) {
                return Err(p.err(Some(line), format!("unknown key `{k}` in [{section}]")));
            }
            if let Some(prev) = p.entry(&section, k) {
                return Err(p.err(
                    Some(line),
                    format!(
                        "duplicate key `{section}.{k}` on lines {} and {line}",
                        prev.line
                    ),
                ));
            }
            p.sections.get_mut(&section).unwrap().insert(
                k.to_string(),
                Entry {
                    value: v.to_string(),
                    line,
                },
            );
        }
        Ok(p)
    }

    fn entry(&self, section: &str, key: &str) -> Option<&Entry> {
        self.sections.get(section).and_then(|s| s.get(key))
    }

    fn typed<T: FromStr>(&self, section: &str, key: &str, e: &Entry) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        e.value.parse::<T>().map_err(|err| {
            self.err(
                Some(e.line),
                format!("{section}.{key}: cannot parse `{}`: {err}", e.value),
            )
        })
    }

    fn optional<T: FromStr>(&self, section: &str, key: &str) -> Result<Option<(T, usize)>>
    where
        T::Err: std::fmt::Display,
    {
        match self.entry(section, key) {
            Some(e) => Ok(Some((self.typed(section, key, e)?, e.line))),
            None => Ok(None),
        }
    }

    fn or_default<T: FromStr>(
        &self,
        section: &str,
        key: &str,
        default: T,
    ) -> Result<(T, Option<usize>)>
    where
        T::Err: std::fmt::Display,
    {
        Ok(match self.optional(section, key)? {
            Some((v, line)) => (v, Some(line)),
            None => (default, None),
        })
    }

    fn required<T: FromStr>(
        &mut self,
        section: &str,
        key: &str,
        fallback: T,
    ) -> Result<(T, Option<usize>)>
    where
        T::Err: std::fmt::Display,
    {
        match self.optional(section, key)? {
            Some((v, line)) => Ok((v, Some(line))),
            None => {
                self.missing.push(format!("{section}.{key}"));
                Ok((fallback, None))
            }
        }
    }

    fn check(
        &self,
        ok: bool,
        key: &str,
        line: Option<usize>,
        rule: &str,
        value: f64,
    ) -> Result<()> {
        if ok {
            Ok(())
        } else {
            Err(self.err(line, format!("{key} = {value}: must be {rule}")))
        }
    }

    fn path_value(&self, section: &str, key: &str) -> Result<Option<PathBuf>> {
        let Some(e) = self.entry(section, key) else {
            return Ok(None);
        };
        let p = self.base_dir.join(&e.value);
        match p.canonicalize() {
            Ok(abs) if abs.is_file() => Ok(Some(abs)),
            _ => Err(self.err(
                Some(e.line),
                format!("{section}.{key}: file `{}` does not exist", p.display()),
            )),
        }
    }
}

pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config_str(&text, path)
}

/// Parse configuration text; `path` is used for messages and to resolve
/// relative file references.
pub fn parse_config_str(text: &str, path: &Path) -> Result<RunConfig> {
    let mut p = Parser::tokenize(text, path)?;
    let d = RunConfig::example();

    let (mode, _) = p.required::<Mode>("run", "mode", Mode::Map)?;
    let (frequency_ghz, l) = p.required("run", "frequency_ghz", 60.0)?;
    p.check(
        frequency_ghz > 0.0 && f64::is_finite(frequency_ghz),
        "run.frequency_ghz",
        l,
        "> 0",
        frequency_ghz,
    )?;
    let (workers, _) = p.or_default::<usize>("run", "workers", d.workers)?;
    let (out_dir, _) = p.or_default::<PathBuf>("run", "out_dir", d.out_dir.clone())?;
    let db_reference = match p.entry("run", "db_reference").cloned() {
        None => None,
        Some(e) if e.value == "peak" => None,
        Some(e) => {
            let v: f64 = p.typed("run", "db_reference", &e)?;
            p.check(
                v > 0.0 && v.is_finite(),
                "run.db_reference",
                Some(e.line),
                "`peak` or > 0",
                v,
            )?;
            Some(v)
        }
    };

    let (die_side_mm, l) = p.required("geometry", "die_side_mm", 22.0)?;
    p.check(
        die_side_mm > 0.0,
        "geometry.die_side_mm",
        l,
        "> 0",
        die_side_mm,
    )?;
    let (package_side_mm, l) = p.required("geometry", "package_side_mm", 33.0)?;
    p.check(
        package_side_mm >= die_side_mm,
        "geometry.package_side_mm",
        l,
        ">= die_side_mm",
        package_side_mm,
    )?;
    let (t_sio2_um, l) = p.required("geometry", "t_sio2_um", 13.0)?;
    p.check(t_sio2_um > 0.0, "geometry.t_sio2_um", l, "> 0", t_sio2_um)?;
    let (grid_resolution_mm, l) = p.required("geometry", "grid_resolution_mm", 0.1)?;
    p.check(
        grid_resolution_mm > 0.0 && grid_resolution_mm <= die_side_mm,
        "geometry.grid_resolution_mm",
        l,
        "> 0 and <= die_side_mm",
        grid_resolution_mm,
    )?;
    let (t_si_mm, l) = p.or_default("geometry", "t_si_mm", d.geometry.t_si_mm)?;
    p.check(t_si_mm > 0.0, "geometry.t_si_mm", l, "> 0", t_si_mm)?;
    let half = die_side_mm / 2.0;
    let (antenna_x_mm, l) = p.or_default("geometry", "antenna_x_mm", 0.0_f64)?;
    p.check(
        antenna_x_mm.abs() < half,
        "geometry.antenna_x_mm",
        l,
        "strictly inside the die",
        antenna_x_mm,
    )?;
    let (antenna_y_mm, l) = p.or_default("geometry", "antenna_y_mm", 0.0_f64)?;
    p.check(
        antenna_y_mm.abs() < half,
        "geometry.antenna_y_mm",
        l,
        "strictly inside the die",
        antenna_y_mm,
    )?;
    let (reflector_offset_mm, l) = p.or_default("geometry", "reflector_offset_mm", 0.0)?;
    p.check(
        reflector_offset_mm >= 0.0,
        "geometry.reflector_offset_mm",
        l,
        ">= 0",
        reflector_offset_mm,
    )?;

    let mut materials = builtin_materials();
    let material_sections: Vec<String> = p
        .section_order
        .iter()
        .filter(|s| s.starts_with("materials."))
        .cloned()
        .collect();
    for section in material_sections {
        let id = section.trim_start_matches("materials.").to_string();
        let (name, _) = p.or_default::<String>(&section, "name", id.clone())?;
        let (epsilon_r, l) = p.required(&section, "epsilon_r", 1.0)?;
        p.check(
            epsilon_r >= 1.0 && f64::is_finite(epsilon_r),
            &format!("{section}.epsilon_r"),
            l,
            ">= 1",
            epsilon_r,
        )?;
        let (tan_delta, l) = p.required(&section, "tan_delta", 0.0)?;
        p.check(
            tan_delta >= 0.0 && f64::is_finite(tan_delta),
            &format!("{section}.tan_delta"),
            l,
            ">= 0",
            tan_delta,
        )?;
        materials.insert(
            id,
            MaterialConfig {
                name,
                epsilon_r,
                tan_delta,
            },
        );
    }

    let (alpha_lambda_mode, _) =
        p.or_default::<AlphaLambdaMode>("propagation", "alpha_lambda_mode", d.alpha_lambda_mode)?;
    let (spreading_exponent, l) = p.or_default("propagation", "spreading_exponent", 0.0)?;
    p.check(
        spreading_exponent >= 0.0,
        "propagation.spreading_exponent",
        l,
        ">= 0",
        spreading_exponent,
    )?;

    let dr = &d.raytrace;
    let (polarization_heatsink, _) = p.or_default(
        "raytrace",
        "polarization_heatsink",
        dr.polarization_heatsink,
    )?;
    let (polarization_edge, _) =
        p.or_default("raytrace", "polarization_edge", dr.polarization_edge)?;
    let (reflector_magnitude, l) = p.or_default("raytrace", "reflector_magnitude", 1.0)?;
    p.check(
        (0.0..=1.0).contains(&reflector_magnitude),
        "raytrace.reflector_magnitude",
        l,
        "in [0, 1]",
        reflector_magnitude,
    )?;
    let (diffraction_coeff_re, l) = p.or_default("raytrace", "diffraction_coeff_re", 0.0)?;
    p.check(
        f64::is_finite(diffraction_coeff_re),
        "raytrace.diffraction_coeff_re",
        l,
        "finite",
        diffraction_coeff_re,
    )?;
    let (diffraction_coeff_im, l) = p.or_default("raytrace", "diffraction_coeff_im", 0.0)?;
    p.check(
        f64::is_finite(diffraction_coeff_im),
        "raytrace.diffraction_coeff_im",
        l,
        "finite",
        diffraction_coeff_im,
    )?;
    let (edge_material, l) =
        p.or_default::<String>("raytrace", "edge_material", dr.edge_material.clone())?;
    if !materials.contains_key(&edge_material) {
        return Err(p.err(
            l,
            format!("raytrace.edge_material: no material `{edge_material}`"),
        ));
    }
    let pattern_path = p.path_value("raytrace", "pattern_path")?;
    let (enable_direct, _) = p.or_default("raytrace", "enable_direct", true)?;
    let (enable_heatsink, _) = p.or_default("raytrace", "enable_heatsink", true)?;
    let (enable_edges, _) = p.or_default("raytrace", "enable_edges", true)?;

    let (near_field_enabled, _) = p.or_default("nearfield", "near_field_enabled", true)?;
    let near_field_radius = match p.entry("nearfield", "near_field_radius_mm").cloned() {
        None => d.near_field_radius,
        Some(e) if e.value == "auto" => NearFieldRadius::Auto,
        Some(e) => {
            let v: f64 = p.typed("nearfield", "near_field_radius_mm", &e)?;
            p.check(
                v > 0.0 && v.is_finite(),
                "nearfield.near_field_radius_mm",
                Some(e.line),
                "> 0 or `auto`",
                v,
            )?;
            NearFieldRadius::Millimetres(v)
        }
    };

    let link_rx_mm = if mode == Mode::Link || p.sections.get("link").is_some_and(|s| !s.is_empty())
    {
        let (x, lx) = p.required("link", "rx_x_mm", 0.0_f64)?;
        let (y, ly) = p.required("link", "rx_y_mm", 0.0_f64)?;
        p.check(x.abs() <= half, "link.rx_x_mm", lx, "inside the die", x)?;
        p.check(y.abs() <= half, "link.rx_y_mm", ly, "inside the die", y)?;
        if x == antenna_x_mm && y == antenna_y_mm && lx.is_some() {
            return Err(p.err(lx, "link receiver coincides with the antenna".into()));
        }
        Some((x, y))
    } else {
        None
    };

    let reference_path = p.path_value("compare", "reference_path")?;
    if mode == Mode::Compare && reference_path.is_none() {
        p.missing.push("compare.reference_path".into());
    }
    let (alignment, _) = p.or_default::<Alignment>("compare", "alignment", Alignment::Nearest)?;
    let fail_above_db = match p.optional::<f64>("compare", "fail_above_db")? {
        Some((v, l)) => {
            p.check(v >= 0.0, "compare.fail_above_db", Some(l), ">= 0", v)?;
            Some(v)
        }
        None => None,
    };

    if !p.missing.is_empty() {
        return Err(p.err(
            None,
            format!("missing required key(s): {}", p.missing.join(", ")),
        ));
    }

    Ok(RunConfig {
        mode,
        frequency_ghz,
        workers,
        out_dir,
        db_reference,
        geometry: GeometryConfig {
            die_side_mm,
            package_side_mm,
            t_sio2_um,
            t_si_mm,
            antenna_x_mm,
            antenna_y_mm,
            grid_resolution_mm,
            reflector_offset_mm,
        },
        materials,
        alpha_lambda_mode,
        spreading_exponent,
        raytrace: RaytraceConfig {
            polarization_heatsink,
            polarization_edge,
            reflector_magnitude,
            diffraction_coeff_re,
            diffraction_coeff_im,
            edge_material,
            pattern_path,
            enable_direct,
            enable_heatsink,
            enable_edges,
        },
        near_field_enabled,
        near_field_radius,
        link_rx_mm,
        reference_path,
        alignment,
        fail_above_db,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunConfig> {
        parse_config_str(text, Path::new("test.conf"))
    }

    const MINIMAL: &str = "\
[run]
mode = map
frequency_ghz = 60
[geometry]
die_side_mm = 22
package_side_mm = 33
t_sio2_um = 13
grid_resolution_mm = 0.1
";

    #[test]
    fn example_round_trips() {
        let ex = RunConfig::example();
        let parsed = parse(&ex.to_config_string()).unwrap();
        assert_eq!(parsed, ex);
    }

    #[test]
    fn minimal_matches_example() {
        assert_eq!(parse(MINIMAL).unwrap(), RunConfig::example());
    }

    #[test]
    fn example_describes_default_package() {
        let cfg = RunConfig::example();
        let g = cfg.package_geometry();
        assert_eq!(g.die_side, 22e-3);
        assert_eq!(g.package_side, 33e-3);
        assert_eq!(g.antenna, Point::new(0.0, 0.0));
        assert_eq!(cfg.frequency_hz(), 60e9);
        let scene = cfg.scene().unwrap();
        assert_eq!(scene.materials.sio2.tan_delta, 0.098);
        assert_eq!(scene.materials.si.tan_delta, 0.252);
        assert_eq!(cfg.grid_spec().dim(), 221);
    }

    #[test]
    fn empty_file_lists_missing_keys() {
        let err = parse("").unwrap_err().to_string();
        for key in [
            "run.mode",
            "run.frequency_ghz",
            "geometry.die_side_mm",
            "geometry.package_side_mm",
            "geometry.t_sio2_um",
            "geometry.grid_resolution_mm",
        ] {
            assert!(err.contains(key), "{err} lacks {key}");
        }
    }

    #[test]
    fn duplicate_key_names_both_lines() {
        let text = format!("{MINIMAL}t_sio2_um = 14\n");
        let err = parse(&text).unwrap_err().to_string();
        assert!(err.contains("lines 7 and 9"), "{err}");
    }

    #[test]
    fn unknown_key_and_section() {
        let err = parse(&format!("{MINIMAL}die_size_mm = 3\n")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 9, .. }), "{err}");
        let err = parse(&format!("{MINIMAL}[extras]\n")).unwrap_err();
        assert!(err.to_string().contains("unknown section"));
    }

    #[test]
    fn out_of_range_names_key() {
        let text = MINIMAL.replace("frequency_ghz = 60", "frequency_ghz = -5");
        let err = parse(&text).unwrap_err().to_string();
        assert!(
            err.contains("run.frequency_ghz") && err.contains(":3:"),
            "{err}"
        );
        let text = format!("{MINIMAL}antenna_x_mm = 11\n");
        assert!(parse(&text)
            .unwrap_err()
            .to_string()
            .contains("antenna_x_mm"));
        let text = format!("{MINIMAL}[materials.si]\nepsilon_r = 0.5\ntan_delta = 0\n");
        assert!(parse(&text)
            .unwrap_err()
            .to_string()
            .contains("materials.si.epsilon_r"));
    }

    #[test]
    fn material_override_and_custom_edge() {
        let text = format!(
            "{MINIMAL}[materials.mold]\nepsilon_r = 4.2\ntan_delta = 0.01\n[raytrace]\nedge_material = mold\n"
        );
        let cfg = parse(&text).unwrap();
        assert_eq!(cfg.scene().unwrap().materials.edge.epsilon_r, 4.2);
        let bad = format!("{MINIMAL}[raytrace]\nedge_material = unobtainium\n");
        assert!(parse(&bad).is_err());
    }

    #[test]
    fn mode_specific_requirements() {
        let link = MINIMAL.replace("mode = map", "mode = link");
        assert!(parse(&link)
            .unwrap_err()
            .to_string()
            .contains("link.rx_x_mm"));
        let ok = format!("{link}[link]\nrx_x_mm = 5\nrx_y_mm = 0\n");
        assert_eq!(parse(&ok).unwrap().link_rx_mm, Some((5.0, 0.0)));
        let cmp = MINIMAL.replace("mode = map", "mode = compare");
        assert!(parse(&cmp)
            .unwrap_err()
            .to_string()
            .contains("compare.reference_path"));
        let missing_file = format!("{cmp}[compare]\nreference_path = /nonexistent/ref.csv\n");
        assert!(parse(&missing_file)
            .unwrap_err()
            .to_string()
            .contains("does not exist"));
    }

    #[test]
    fn auto_near_field_radius() {
        let text = format!("{MINIMAL}[nearfield]\nnear_field_radius_mm = auto\n");
        let cfg = parse(&text).unwrap();
        let r = cfg.near_field_radius_m().unwrap().unwrap();
        assert!((r - 2.530096868094806e-3).abs() < 1e-15);
        let off = format!("{MINIMAL}[nearfield]\nnear_field_enabled = false\n");
        assert_eq!(parse(&off).unwrap().near_field_radius_m().unwrap(), None);
    }

    #[test]
    fn custom_values_round_trip() {
        let mut cfg = RunConfig::example();
        cfg.mode = Mode::Link;
        cfg.frequency_ghz = 140.0;
        cfg.geometry.t_si_mm = 0.3;
        cfg.db_reference = Some(2.5);
        cfg.link_rx_mm = Some((3.25, -1.5));
        cfg.near_field_radius = NearFieldRadius::Auto;
        cfg.raytrace.diffraction_coeff_im = -0.125;
        cfg.fail_above_db = Some(1.7);
        cfg.alignment = Alignment::Bilinear;
        cfg.alpha_lambda_mode = AlphaLambdaMode::InMedium;
        assert_eq!(parse(&cfg.to_config_string()).unwrap(), cfg);
    }
}
