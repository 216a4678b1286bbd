//! End-to-end pipelines: pump → SPDC → herald → field → polarimeter →
//! Stokes → topology, plus the figure suites that enumerate them.
//!
//! Suite case lists live in `suites/*.json` next to this crate's manifest.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::correlations::{self, BasisFringes, CorrelationError, FringeConfig, ImperfectionFit};
use crate::export::{self, ExportError, Manifest};
use crate::fields::{FieldError, GridSpec, ModeProfile, VectorField};
use crate::kets::{self, KetError, PolKet, PumpKind, PumpSpec, SpdcConfig};
use crate::numeric::sum;
use crate::polarimetry::{
    self, EllipseMap, FrameStack, PolarimeterConfig, PolarimetryError, StokesMap,
    DEFAULT_INTENSITY_THRESHOLD, DEFAULT_LINEAR_THRESHOLD,
};
use crate::polarization::{Basis, Pol};
use crate::qplate::{self, QPlateParams};
use crate::render;
use crate::topology::{self, SingularityReport, TopologyClass};

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("invalid scenario `{name}`: {msg}")]
    Config { name: String, msg: String },
    #[error("scenario `{name}`: heralded state vanishes ({source}); config: {config}")]
    ZeroHerald {
        name: String,
        config: String,
        #[source]
        source: KetError,
    },
    #[error("unknown suite `{0}` (expected fig2, fig3, fig4, fig5 or correlations)")]
    UnknownSuite(String),
    #[error(transparent)]
    Ket(#[from] KetError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Polarimetry(#[from] PolarimetryError),
    #[error(transparent)]
    Correlation(#[from] CorrelationError),
    #[error(transparent)]
    Export(#[from] ExportError),
    #[error("bad suite definition: {0}")]
    Suite(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridConfig {
    pub n: usize,
    pub half_width: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            n: 256,
            half_width: 3.0,
        }
    }
}

/// Which part of the state is displaced by the lateral offset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbTarget {
    /// The mode carrying the converted charge `ℓ_p`.
    #[default]
    Constituent,
    /// The horizontally polarized signal contribution (one crystal).
    Crystal,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Offset {
    pub dx: f64,
    pub dy: f64,
}

impl Offset {
    pub fn is_zero(&self) -> bool {
        self.dx == 0.0 && self.dy == 0.0
    }

    pub fn magnitude(&self) -> f64 {
        self.dx.hypot(self.dy)
    }
}

/// Pump prepared by sending `|input, 0⟩` through a q-plate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QPlateInput {
    pub plate: QPlateParams,
    pub input: Pol,
}

fn default_w0() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub pump: PumpSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qplate: Option<QPlateInput>,
    #[serde(default)]
    pub spdc: SpdcConfig,
    /// Idler projection; absent for a pump-only row.
    #[serde(default)]
    pub herald: Option<Pol>,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default = "default_w0")]
    pub w0: f64,
    #[serde(default)]
    pub profile: ModeProfile,
    #[serde(default)]
    pub polarimeter: PolarimeterConfig,
    /// Lateral displacement in units of `w0`.
    #[serde(default)]
    pub offset: Offset,
    #[serde(default)]
    pub perturb: PerturbTarget,
    #[serde(default)]
    pub export_frames: bool,
}

impl ScenarioConfig {
    pub fn new(name: &str, pump: PumpSpec, herald: Option<Pol>) -> Self {
        Self {
            name: name.to_string(),
            pump,
            qplate: None,
            spdc: SpdcConfig::default(),
            herald,
            grid: GridConfig::default(),
            w0: 1.0,
            profile: ModeProfile::default(),
            polarimeter: PolarimeterConfig::default(),
            offset: Offset::default(),
            perturb: PerturbTarget::default(),
            export_frames: false,
        }
    }

    fn invalid(&self, msg: impl Into<String>) -> ScenarioError {
        ScenarioError::Config {
            name: self.name.clone(),
            msg: msg.into(),
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.name.is_empty()
            || !self
                .name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || "._-".contains(c))
        {
            return Err(self.invalid("name must be non-empty and use [A-Za-z0-9._-]"));
        }
        self.pump.validate().map_err(|e| self.invalid(e.to_string()))?;
        if let Some(qp) = &self.qplate {
            qp.plate.validate().map_err(|e| self.invalid(e.to_string()))?;
            if (qp.plate.q - self.pump.q).abs() > 1e-12 {
                return Err(self.invalid("q-plate charge differs from pump q"));
            }
        }
        GridSpec::new(self.grid.n, self.grid.n, self.grid.half_width)
            .map_err(|e| self.invalid(e.to_string()))?;
        if !(self.w0 > 0.0 && self.w0.is_finite()) {
            return Err(self.invalid(format!("w0 must be positive, got {}", self.w0)));
        }
        self.polarimeter
            .validate()
            .map_err(|e| self.invalid(e.to_string()))?;
        let m = self.offset.magnitude();
        if !(m < 0.5) {
            return Err(self.invalid(format!("offset magnitude {m} must be below 0.5 w0")));
        }
        Ok(())
    }

    pub fn grid_spec(&self) -> Result<GridSpec, ScenarioError> {
        Ok(GridSpec::new(self.grid.n, self.grid.n, self.grid.half_width)?)
    }

    pub fn herald_label(&self) -> String {
        self.herald.map_or("pump".to_string(), |p| p.to_string())
    }
}

/// Everything a scenario produces.
#[derive(Debug, Clone)]
pub struct ScenarioResult {
    pub config: ScenarioConfig,
    pub pump_ket: PolKet,
    pub pump_field: VectorField,
    pub pump_stokes: StokesMap,
    pub herald_ket: Option<PolKet>,
    pub signal_field: VectorField,
    pub frames: FrameStack,
    pub analytic_stokes: StokesMap,
    pub stokes: StokesMap,
    pub ellipse: EllipseMap,
    pub singularities: Vec<SingularityReport>,
    /// Loop diagnostics about the beam axis.
    pub center: Option<SingularityReport>,
    pub class: Option<TopologyClass>,
    pub rotation: Option<f64>,
    pub homogeneity: f64,
    pub roundtrip_error: f64,
}

/// Spatial spread of the normalized Stokes components: the largest
/// population standard deviation of `S_k/S0`, k = 1..3, over pixels above
/// `mask_fraction` of the peak intensity.
pub fn homogeneity(s: &StokesMap, mask_fraction: f64) -> f64 {
    let mask = s.mask(mask_fraction);
    let idx: Vec<usize> = (0..s.grid.len()).filter(|&i| mask[i]).collect();
    if idx.is_empty() {
        return 0.0;
    }
    let n = idx.len() as f64;
    [&s.s1, &s.s2, &s.s3]
        .iter()
        .map(|comp| {
            let vals: Vec<f64> = idx.iter().map(|&i| comp[i] / s.s0[i]).collect();
            let mean = sum(vals.iter().copied()) / n;
            (sum(vals.iter().map(|v| (v - mean).powi(2))) / n).sqrt()
        })
        .fold(0.0, f64::max)
}

/// L2 distance between the normalized Stokes maps over pixels unmasked in
/// both.
pub fn deformation(a: &StokesMap, b: &StokesMap) -> Result<f64, PolarimetryError> {
    if a.grid != b.grid {
        return Err(PolarimetryError::GridMismatch);
    }
    let (ma, mb) = (
        a.mask(DEFAULT_INTENSITY_THRESHOLD),
        b.mask(DEFAULT_INTENSITY_THRESHOLD),
    );
    let total = sum((0..a.grid.len()).filter(|&i| ma[i] && mb[i]).map(|i| {
        let (pa, pb) = (a.at(i), b.at(i));
        (1..4)
            .map(|k| (pa[k] / pa[0] - pb[k] / pb[0]).powi(2))
            .sum::<f64>()
    }));
    Ok((total * a.grid.pixel_area()).sqrt())
}

/// Expected rigid rotation between the pump and the herald-A pattern,
/// `π/N` with `N = ℓ_p − ℓ_p′ + 2`.
pub fn expected_rotation(pump: &PumpSpec) -> f64 {
    let (lp, lpp) = pump.ells();
    PI / (lp - lpp + 2) as f64
}

fn pump_ket(cfg: &ScenarioConfig) -> Result<PolKet, ScenarioError> {
    match &cfg.qplate {
        Some(qp) => Ok(qplate::qplate_apply_ket(
            &PolKet::basis_state(qp.input, 0),
            &qp.plate,
        )),
        None => Ok(kets::pump_state(&cfg.pump)?),
    }
}

fn render_ket(
    cfg: &ScenarioConfig,
    ket: &PolKet,
    grid: &GridSpec,
) -> Result<VectorField, ScenarioError> {
    let (lp, _) = cfg.pump.ells();
    let (dx, dy) = (cfg.offset.dx * cfg.w0, cfg.offset.dy * cfg.w0);
    let shift = |hit: bool| if hit { (dx, dy) } else { (0.0, 0.0) };
    let field = match cfg.perturb {
        PerturbTarget::Constituent => {
            kets::synthesize(ket, grid, cfg.w0, cfg.profile, |_, ell| shift(ell == lp))?
        }
        PerturbTarget::Crystal => kets::synthesize(
            &ket.in_basis(Basis::HV),
            grid,
            cfg.w0,
            cfg.profile,
            |pol, _| shift(pol == Pol::H),
        )?,
    };
    Ok(field)
}

pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ScenarioResult, ScenarioError> {
    cfg.validate()?;
    let grid = cfg.grid_spec()?;
    let pump_ket = pump_ket(cfg)?;
    let pump_field = kets::synthesize(&pump_ket, &grid, cfg.w0, cfg.profile, |_, _| (0.0, 0.0))?;
    let pump_stokes = polarimetry::stokes_of_field(&pump_field);
    let herald_ket = match cfg.herald {
        None => None,
        Some(pol) => {
            let pair = kets::spdc_state(&pump_ket, &cfg.spdc)?;
            let conditioned = kets::project_idler_oam0(&pair)
                .and_then(|s| kets::herald(&s, pol))
                .map_err(|source| ScenarioError::ZeroHerald {
                    name: cfg.name.clone(),
                    config: serde_json::to_string(cfg).unwrap_or_default(),
                    source,
                })?;
            Some(conditioned)
        }
    };
    let signal_field = match &herald_ket {
        Some(k) => render_ket(cfg, k, &grid)?,
        None if cfg.offset.is_zero() => pump_field.clone(),
        None => render_ket(cfg, &pump_ket, &grid)?,
    };
    let frames = polarimetry::simulate_frames(&signal_field, &cfg.polarimeter);
    let stokes = polarimetry::reconstruct_stokes(&frames, &cfg.polarimeter)?;
    let analytic_stokes = polarimetry::stokes_of_field(&signal_field);
    let roundtrip_error = stokes.max_relative_error(&analytic_stokes)?;
    let ellipse = polarimetry::ellipse_map(
        &stokes,
        DEFAULT_LINEAR_THRESHOLD,
        DEFAULT_INTENSITY_THRESHOLD,
    )?;
    let singularities = topology::find_singularities(&stokes);
    let center = topology::analyze_point(&stokes, (0.0, 0.0), cfg.w0).ok();
    let class = center
        .as_ref()
        .and_then(|r| topology::classify(r, cfg.pump.q, cfg.pump.kind).ok());
    let rotation = topology::rotation_between(&pump_stokes, &stokes).ok();
    let homogeneity = homogeneity(&stokes, DEFAULT_INTENSITY_THRESHOLD);
    Ok(ScenarioResult {
        config: cfg.clone(),
        pump_ket,
        pump_field,
        pump_stokes,
        herald_ket,
        signal_field,
        frames,
        analytic_stokes,
        stokes,
        ellipse,
        singularities,
        center,
        class,
        rotation,
        homogeneity,
        roundtrip_error,
    })
}

/// One row of a suite summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub name: String,
    pub kind: PumpKind,
    pub q: f64,
    pub varphi: f64,
    pub herald: String,
    pub offset: f64,
    pub index: Option<f64>,
    pub index_raw: Option<f64>,
    pub class: Option<String>,
    pub singularities: usize,
    pub rotation: Option<f64>,
    pub homogeneity: f64,
    pub roundtrip_error: f64,
    pub deformation: Option<f64>,
}

impl ScenarioResult {
    pub fn metrics(&self) -> Metrics {
        let c = &self.config;
        Metrics {
            name: c.name.clone(),
            kind: c.pump.kind,
            q: c.pump.q,
            varphi: c.pump.varphi,
            herald: c.herald_label(),
            offset: c.offset.magnitude(),
            index: self.center.as_ref().map(|r| r.index.value()),
            index_raw: self.center.as_ref().map(|r| r.index.raw),
            class: self.class.map(|k| k.to_string()),
            singularities: self.singularities.len(),
            rotation: self.rotation,
            homogeneity: self.homogeneity,
            roundtrip_error: self.roundtrip_error,
            deformation: None,
        }
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| format!("{x:.9}"))
}

pub fn summary_csv(rows: &[Metrics]) -> String {
    let mut out = String::from(
        "name,kind,q,varphi,herald,offset,index,index_raw,class,singularities,rotation,homogeneity,roundtrip_error,deformation\n",
    );
    for m in rows {
        writeln!(
            out,
            "{},{},{},{:.9},{},{:.6},{},{},{},{},{},{:.6e},{:.3e},{}",
            m.name,
            m.kind,
            m.q,
            m.varphi,
            m.herald,
            m.offset,
            m.index.map_or(String::new(), |v| v.to_string()),
            opt(m.index_raw),
            m.class.clone().unwrap_or_default(),
            m.singularities,
            opt(m.rotation),
            m.homogeneity,
            m.roundtrip_error,
            m.deformation.map_or(String::new(), |v| format!("{v:.9e}")),
        )
        .unwrap();
    }
    out
}

#[derive(Serialize)]
struct TopologyJson<'a> {
    center: &'a Option<SingularityReport>,
    class: Option<String>,
    rotation_vs_pump: Option<f64>,
    singularities: &'a [SingularityReport],
}

/// Writes all artifacts of one scenario into `dir` and returns its manifest.
pub fn write_scenario(
    r: &ScenarioResult,
    dir: &Path,
    metrics: &Metrics,
) -> Result<Manifest, ScenarioError> {
    let mut names: Vec<String> = Vec::new();
    let mut put_json = |name: &str, value: serde_json::Value| -> Result<(), ScenarioError> {
        export::write_json(&dir.join(name), &value)?;
        names.push(name.to_string());
        Ok(())
    };
    put_json("config.json", serde_json::to_value(&r.config)?)?;
    put_json("pump_ket.json", serde_json::to_value(&r.pump_ket)?)?;
    if let Some(k) = &r.herald_ket {
        put_json("herald_ket.json", serde_json::to_value(k)?)?;
    }
    put_json(
        "topology.json",
        serde_json::to_value(TopologyJson {
            center: &r.center,
            class: r.class.map(|c| c.to_string()),
            rotation_vs_pump: r.rotation,
            singularities: &r.singularities,
        })?,
    )?;
    put_json("metrics.json", serde_json::to_value(metrics)?)?;
    names.extend(export::write_stokes(dir, &r.stokes)?);
    if r.config.export_frames {
        names.extend(
            export::write_frames(&dir.join("frames"), &r.frames)?
                .into_iter()
                .map(|n| format!("frames/{n}")),
        );
    }
    export::write_file(
        &dir.join("ellipse.csv"),
        export::ellipse_csv(&r.ellipse, render::GLYPH_STRIDE).as_bytes(),
    )?;
    names.push("ellipse.csv".into());
    let preview = render::render_preview(&r.stokes, &r.ellipse, render::GLYPH_STRIDE);
    export::write_file(&dir.join("preview.ppm"), &preview.to_ppm())?;
    names.push("preview.ppm".into());
    let pump_ellipse = polarimetry::ellipse_map(
        &r.pump_stokes,
        DEFAULT_LINEAR_THRESHOLD,
        DEFAULT_INTENSITY_THRESHOLD,
    )?;
    let pump_preview = render::render_preview(&r.pump_stokes, &pump_ellipse, render::GLYPH_STRIDE);
    export::write_file(&dir.join("pump_preview.ppm"), &pump_preview.to_ppm())?;
    names.push("pump_preview.ppm".into());
    let mut manifest = Manifest::new("scenario", &r.config)?;
    manifest.record(dir, &names)?;
    manifest.write(dir)?;
    Ok(manifest)
}

/// Known figure suites.
pub const SUITE_IDS: [&str; 5] = ["fig2", "fig3", "fig4", "fig5", "correlations"];

fn suite_source(id: &str) -> Option<&'static str> {
    Some(match id {
        "fig2" => include_str!("../suites/fig2.json"),
        "fig3" => include_str!("../suites/fig3.json"),
        "fig4" => include_str!("../suites/fig4.json"),
        "fig5" => include_str!("../suites/fig5.json"),
        "correlations" => include_str!("../suites/correlations.json"),
        _ => return None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationSpec {
    #[serde(default)]
    pub fringes: FringeConfig,
    pub target_hv: f64,
    pub target_da: f64,
}

/// A suite definition as shipped in `suites/`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteSpec {
    pub id: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub cases: Vec<ScenarioConfig>,
    /// Case whose Stokes map is the baseline for the deformation metric.
    #[serde(default)]
    pub deformation_reference: Option<String>,
    #[serde(default)]
    pub correlations: Option<CorrelationSpec>,
}

pub fn suite_spec(id: &str) -> Result<SuiteSpec, ScenarioError> {
    let src = suite_source(id).ok_or_else(|| ScenarioError::UnknownSuite(id.to_string()))?;
    Ok(serde_json::from_str(src)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub ideal: Vec<BasisFringes>,
    pub fitted: ImperfectionFit,
    pub imperfect: Vec<BasisFringes>,
}

pub fn run_correlations(spec: &CorrelationSpec) -> Result<CorrelationReport, ScenarioError> {
    let bases = [Basis::HV, Basis::DA];
    let ideal = bases
        .iter()
        .map(|&b| correlations::basis_fringes(&spec.fringes, b))
        .collect::<Result<_, _>>()?;
    let fitted = correlations::fit_imperfections(&spec.fringes, spec.target_hv, spec.target_da)?;
    let noisy = FringeConfig {
        noise: fitted.noise,
        phi_crystal: fitted.phi_crystal,
        ..spec.fringes
    };
    let imperfect = bases
        .iter()
        .map(|&b| correlations::basis_fringes(&noisy, b))
        .collect::<Result<_, _>>()?;
    Ok(CorrelationReport {
        ideal,
        fitted,
        imperfect,
    })
}

#[derive(Debug, Clone)]
pub struct SuiteRun {
    pub spec: SuiteSpec,
    pub results: Vec<ScenarioResult>,
    pub metrics: Vec<Metrics>,
    pub correlations: Option<CorrelationReport>,
}

pub fn run_suite(spec: SuiteSpec) -> Result<SuiteRun, ScenarioError> {
    let results: Vec<ScenarioResult> = spec
        .cases
        .par_iter()
        .map(run_scenario)
        .collect::<Result<_, _>>()?;
    let mut metrics: Vec<Metrics> = results.iter().map(ScenarioResult::metrics).collect();
    if let Some(reference) = &spec.deformation_reference {
        let base = results
            .iter()
            .find(|r| &r.config.name == reference)
            .ok_or_else(|| ScenarioError::Config {
                name: spec.id.clone(),
                msg: format!("deformation reference `{reference}` is not a case"),
            })?;
        for (m, r) in metrics.iter_mut().zip(&results) {
            m.deformation = Some(deformation(&base.stokes, &r.stokes)?);
        }
    }
    let correlations = spec.correlations.as_ref().map(run_correlations).transpose()?;
    Ok(SuiteRun {
        spec,
        results,
        metrics,
        correlations,
    })
}

pub fn run_figure_suite(id: &str) -> Result<SuiteRun, ScenarioError> {
    run_suite(suite_spec(id)?)
}

/// Writes one directory per case, `summary.csv`, the correlation report
/// when present, and a top-level manifest.
pub fn write_suite(run: &SuiteRun, out: &Path) -> Result<Manifest, ScenarioError> {
    let manifests: Vec<Manifest> = run
        .results
        .par_iter()
        .zip(&run.metrics)
        .map(|(r, m)| write_scenario(r, &out.join(&r.config.name), m))
        .collect::<Result<_, _>>()?;
    let mut names = Vec::new();
    export::write_file(&out.join("summary.csv"), summary_csv(&run.metrics).as_bytes())?;
    names.push("summary.csv".to_string());
    if let Some(c) = &run.correlations {
        export::write_json(&out.join("correlations.json"), c)?;
        names.push("correlations.json".to_string());
    }
    for (r, _) in run.results.iter().zip(&manifests) {
        names.push(format!("{}/manifest.json", r.config.name));
    }
    let mut manifest = Manifest::new("suite", &run.spec)?;
    manifest.record(out, &names)?;
    manifest.write(out)?;
    Ok(manifest)
}
