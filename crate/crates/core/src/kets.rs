//! Finite superpositions of `|polarization, ℓ⟩` states.
//!
//! This module carries the exact algebra of the source: pump preparation,
//! the dual-crystal type-I SPDC biphoton, idler OAM and polarization
//! projections, and coincidence probabilities.

use std::collections::BTreeMap;
use std::fmt;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_1_SQRT_2;

use crate::fields::{self, FieldError, GridSpec, ModeProfile, ScalarField, VectorField};
use crate::polarization::{Basis, Pol};

/// Amplitudes below this magnitude are dropped after canonicalization.
const PRUNE: f64 = 1e-15;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum KetError {
    #[error("projection onto idler {what} annihilates the state")]
    ZeroNorm { what: String },
    #[error("invalid pump: {0}")]
    BadPump(String),
    #[error("SPDC spectrum is empty")]
    EmptySpectrum,
    #[error("SPDC spectrum is not normalized (sum |c|^2 = {0})")]
    SpectrumNotNormalized(f64),
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// A single-photon state `∑ amp |pol, ℓ⟩`, with every label in one basis.
#[derive(Debug, Clone, PartialEq)]
pub struct PolKet {
    basis: Basis,
    terms: BTreeMap<(Pol, i32), C64>,
}

fn accumulate<K: Ord>(map: &mut BTreeMap<K, C64>, key: K, amp: C64) {
    *map.entry(key).or_insert(C64::new(0.0, 0.0)) += amp;
}

fn prune<K: Ord>(map: &mut BTreeMap<K, C64>) {
    map.retain(|_, a| a.norm() >= PRUNE);
}

impl PolKet {
    pub fn empty(basis: Basis) -> Self {
        Self {
            basis,
            terms: BTreeMap::new(),
        }
    }

    /// Single basis state `|pol, ell⟩`.
    pub fn basis_state(pol: Pol, ell: i32) -> Self {
        Self::from_terms([(pol, ell, C64::new(1.0, 0.0))])
    }

    /// Builds a ket from labelled terms. Duplicate keys are summed. When the
    /// labels span more than one basis the ket is stored in {H, V}.
    pub fn from_terms(terms: impl IntoIterator<Item = (Pol, i32, C64)>) -> Self {
        let terms: Vec<_> = terms.into_iter().collect();
        let basis = match terms.first() {
            Some((p, _, _)) if terms.iter().all(|(q, _, _)| q.basis() == p.basis()) => p.basis(),
            _ => Basis::HV,
        };
        let mut ket = Self::empty(basis);
        for (pol, ell, amp) in terms {
            ket.add_term(pol, ell, amp);
        }
        prune(&mut ket.terms);
        ket
    }

    fn add_term(&mut self, pol: Pol, ell: i32, amp: C64) {
        if pol.basis() == self.basis {
            accumulate(&mut self.terms, (pol, ell), amp);
        } else {
            let hv = pol.jones().map(|c| c * amp);
            let comps = self.basis.from_hv(hv);
            let [p0, p1] = self.basis.states();
            accumulate(&mut self.terms, (p0, ell), comps[0]);
            accumulate(&mut self.terms, (p1, ell), comps[1]);
        }
    }

    pub fn basis(&self) -> Basis {
        self.basis
    }

    pub fn terms(&self) -> impl Iterator<Item = (Pol, i32, C64)> + '_ {
        self.terms.iter().map(|(&(p, l), &a)| (p, l, a))
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Distinct OAM values present, ascending.
    pub fn ells(&self) -> Vec<i32> {
        let mut v: Vec<i32> = self.terms.keys().map(|&(_, l)| l).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Distinct polarization labels present.
    pub fn pols(&self) -> Vec<Pol> {
        let mut v: Vec<Pol> = self.terms.keys().map(|&(p, _)| p).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    pub fn norm_sqr(&self) -> f64 {
        self.terms.values().map(|a| a.norm_sqr()).sum()
    }

    pub fn scaled(&self, c: C64) -> Self {
        let mut out = self.clone();
        for a in out.terms.values_mut() {
            *a *= c;
        }
        prune(&mut out.terms);
        out
    }

    pub fn normalized(&self) -> Option<Self> {
        let n = self.norm_sqr();
        if n < PRUNE * PRUNE {
            return None;
        }
        Some(self.scaled(C64::new(1.0 / n.sqrt(), 0.0)))
    }

    /// The same state with every term re-expressed in `target`.
    pub fn in_basis(&self, target: Basis) -> Self {
        if target == self.basis {
            return self.clone();
        }
        let mut out = Self::empty(target);
        for (&(pol, ell), &amp) in &self.terms {
            out.add_term(pol, ell, amp);
        }
        prune(&mut out.terms);
        out
    }

    /// Amplitude `⟨pol, ell | self⟩`, for any label.
    pub fn amplitude(&self, pol: Pol, ell: i32) -> C64 {
        if pol.basis() == self.basis {
            return self.terms.get(&(pol, ell)).copied().unwrap_or_default();
        }
        let e = pol.jones();
        self.terms
            .iter()
            .filter(|((_, l), _)| *l == ell)
            .map(|(&(p, _), &a)| {
                let j = p.jones();
                (e[0].conj() * j[0] + e[1].conj() * j[1]) * a
            })
            .sum()
    }

    /// Inner product `⟨self|other⟩`.
    pub fn inner(&self, other: &PolKet) -> C64 {
        let other = other.in_basis(self.basis);
        self.terms
            .iter()
            .map(|(k, a)| a.conj() * other.terms.get(k).copied().unwrap_or_default())
            .sum()
    }

    /// Largest amplitude difference after converting both kets to {H, V}.
    pub fn max_abs_diff(&self, other: &PolKet) -> f64 {
        self.diff_with_phase(other, C64::new(1.0, 0.0))
    }

    /// Largest amplitude difference after removing the global phase of
    /// `other` relative to `self`.
    pub fn max_abs_diff_up_to_phase(&self, other: &PolKet) -> f64 {
        let ov = other.inner(self);
        let phase = if ov.norm() > 0.0 {
            ov / ov.norm()
        } else {
            C64::new(1.0, 0.0)
        };
        self.diff_with_phase(other, phase)
    }

    fn diff_with_phase(&self, other: &PolKet, phase: C64) -> f64 {
        let a = self.in_basis(Basis::HV);
        let b = other.in_basis(Basis::HV);
        let keys: std::collections::BTreeSet<_> = a.terms.keys().chain(b.terms.keys()).collect();
        keys.into_iter()
            .map(|k| {
                let x = a.terms.get(k).copied().unwrap_or_default();
                let y = b.terms.get(k).copied().unwrap_or_default();
                (x - phase * y).norm()
            })
            .fold(0.0, f64::max)
    }

    /// The state of the beam rigidly rotated by `angle` about the axis.
    ///
    /// `|L, ℓ⟩` picks up `exp(−i(ℓ+1)·angle)` and `|R, ℓ⟩` picks up
    /// `exp(−i(ℓ−1)·angle)`.
    pub fn rotated(&self, angle: f64) -> Self {
        let circ = self.in_basis(Basis::LR);
        let mut out = PolKet::empty(Basis::LR);
        for (&(pol, ell), &amp) in &circ.terms {
            let spin = if pol == Pol::L { 1 } else { -1 };
            let phase = C64::from_polar(1.0, -((ell + spin) as f64) * angle);
            out.terms.insert((pol, ell), amp * phase);
        }
        out.in_basis(self.basis)
    }

    /// Relabels polarization states within the ket's own basis, e.g. L↔R.
    pub fn relabel(&self, map: impl Fn(Pol) -> Pol) -> Self {
        Self::from_terms(self.terms().map(|(p, l, a)| (map(p), l, a)))
    }
}

/// Changes the labelling basis of a ket; the state itself is unchanged.
pub fn basis_change(k: &PolKet, target: Basis) -> PolKet {
    k.in_basis(target)
}

impl fmt::Display for PolKet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return f.write_str("0");
        }
        for (n, (&(pol, ell), amp)) in self.terms.iter().enumerate() {
            if n > 0 {
                f.write_str(" + ")?;
            }
            write!(f, "({:.6}{:+.6}i)|{pol},{ell}>", amp.re, amp.im)?;
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct TermJson {
    pol: Pol,
    ell: i32,
    re: f64,
    im: f64,
}

#[derive(Serialize, Deserialize)]
struct KetJson {
    terms: Vec<TermJson>,
}

impl Serialize for PolKet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        KetJson {
            terms: self
                .terms()
                .map(|(pol, ell, a)| TermJson {
                    pol,
                    ell,
                    re: a.re,
                    im: a.im,
                })
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for PolKet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = KetJson::deserialize(d)?;
        Ok(PolKet::from_terms(
            raw.terms.into_iter().map(|t| (t.pol, t.ell, C64::new(t.re, t.im))),
        ))
    }
}

/// Pump family prepared by the q-plate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PumpKind {
    /// Full Poincaré: `(|L, 2q⟩ + e^{iφ}|R, 0⟩)/√2`.
    FP,
    /// Vector vortex: `(|L, 2q⟩ + e^{iφ}|R, −2q⟩)/√2`.
    VV,
}

impl std::str::FromStr for PumpKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "FP" => Ok(PumpKind::FP),
            "VV" => Ok(PumpKind::VV),
            _ => Err(format!("unknown pump kind `{s}` (expected FP or VV)")),
        }
    }
}

impl fmt::Display for PumpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PumpKind::FP => "FP",
            PumpKind::VV => "VV",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PumpSpec {
    pub kind: PumpKind,
    pub q: f64,
    pub varphi: f64,
}

impl PumpSpec {
    pub fn new(kind: PumpKind, q: f64, varphi: f64) -> Result<Self, KetError> {
        let spec = Self { kind, q, varphi };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), KetError> {
        if !(self.q > 0.0 && self.q.is_finite()) {
            return Err(KetError::BadPump(format!("q must be positive, got {}", self.q)));
        }
        if ((2.0 * self.q).round() - 2.0 * self.q).abs() > 1e-9 {
            return Err(KetError::BadPump(format!(
                "q must be a half-integer, got {}",
                self.q
            )));
        }
        if !self.varphi.is_finite() {
            return Err(KetError::BadPump("varphi must be finite".into()));
        }
        Ok(())
    }

    /// `(ℓ_p, ℓ_p′)` carried by the L and R constituents.
    pub fn ells(&self) -> (i32, i32) {
        let two_q = (2.0 * self.q).round() as i32;
        match self.kind {
            PumpKind::FP => (two_q, 0),
            PumpKind::VV => (two_q, -two_q),
        }
    }
}

/// `(|L, ℓ_p⟩ + e^{iφ}|R, ℓ_p′⟩)/√2`.
pub fn pump_state(spec: &PumpSpec) -> Result<PolKet, KetError> {
    spec.validate()?;
    let (lp, lpp) = spec.ells();
    Ok(PolKet::from_terms([
        (Pol::L, lp, C64::new(FRAC_1_SQRT_2, 0.0)),
        (Pol::R, lpp, C64::from_polar(FRAC_1_SQRT_2, spec.varphi)),
    ]))
}

/// Idler OAM spectrum and inter-crystal phase of the dual-crystal source.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdcConfig {
    spectrum: BTreeMap<i32, C64>,
    phi_crystal: f64,
}

impl Default for SpdcConfig {
    fn default() -> Self {
        Self {
            spectrum: BTreeMap::from([(0, C64::new(1.0, 0.0))]),
            phi_crystal: 0.0,
        }
    }
}

impl SpdcConfig {
    pub fn new(spectrum: BTreeMap<i32, C64>, phi_crystal: f64) -> Result<Self, KetError> {
        if spectrum.is_empty() {
            return Err(KetError::EmptySpectrum);
        }
        let total: f64 = spectrum.values().map(|c| c.norm_sqr()).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(KetError::SpectrumNotNormalized(total));
        }
        Ok(Self {
            spectrum,
            phi_crystal,
        })
    }

    pub fn with_phi_crystal(mut self, phi: f64) -> Self {
        self.phi_crystal = phi;
        self
    }

    pub fn spectrum(&self) -> &BTreeMap<i32, C64> {
        &self.spectrum
    }

    pub fn phi_crystal(&self) -> f64 {
        self.phi_crystal
    }
}

#[derive(Serialize, Deserialize)]
struct SpectrumEntry {
    ell: i32,
    re: f64,
    #[serde(default)]
    im: f64,
}

#[derive(Serialize, Deserialize)]
struct SpdcJson {
    #[serde(default = "default_spectrum")]
    spectrum: Vec<SpectrumEntry>,
    #[serde(default)]
    phi_crystal: f64,
}

fn default_spectrum() -> Vec<SpectrumEntry> {
    vec![SpectrumEntry {
        ell: 0,
        re: 1.0,
        im: 0.0,
    }]
}

impl Serialize for SpdcConfig {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        SpdcJson {
            spectrum: self
                .spectrum
                .iter()
                .map(|(&ell, c)| SpectrumEntry { ell, re: c.re, im: c.im })
                .collect(),
            phi_crystal: self.phi_crystal,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for SpdcConfig {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = SpdcJson::deserialize(d)?;
        let mut spectrum = BTreeMap::new();
        for e in raw.spectrum {
            accumulate(&mut spectrum, e.ell, C64::new(e.re, e.im));
        }
        SpdcConfig::new(spectrum, raw.phi_crystal).map_err(serde::de::Error::custom)
    }
}

/// A `(polarization, ℓ)` single-photon mode.
pub type Mode = (Pol, i32);

/// Signal ⊗ idler state, stored with both photons in the {H, V} basis.
#[derive(Debug, Clone, PartialEq)]
pub struct BiphotonKet {
    terms: BTreeMap<(Mode, Mode), C64>,
}

impl BiphotonKet {
    pub fn from_terms(terms: impl IntoIterator<Item = (Mode, Mode, C64)>) -> Self {
        let mut map = BTreeMap::new();
        for ((sp, sl), (ip, il), amp) in terms {
            let sj = sp.jones();
            let ij = ip.jones();
            for (a, s_pol) in [Pol::H, Pol::V].into_iter().enumerate() {
                for (b, i_pol) in [Pol::H, Pol::V].into_iter().enumerate() {
                    let c = sj[a] * ij[b] * amp;
                    if c.norm() > 0.0 {
                        accumulate(&mut map, ((s_pol, sl), (i_pol, il)), c);
                    }
                }
            }
        }
        prune(&mut map);
        Self { terms: map }
    }

    /// Terms as `(signal, idler, amplitude)`, both modes in {H, V}.
    pub fn terms(&self) -> impl Iterator<Item = (Mode, Mode, C64)> + '_ {
        self.terms.iter().map(|(&(s, i), &a)| (s, i, a))
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.terms.values().map(|a| a.norm_sqr()).sum()
    }

    pub fn amplitude(&self, signal: Mode, idler: Mode) -> C64 {
        self.terms.get(&(signal, idler)).copied().unwrap_or_default()
    }

    fn normalized_or(self, what: &str) -> Result<Self, KetError> {
        let n = self.norm_sqr();
        if n < PRUNE * PRUNE {
            return Err(KetError::ZeroNorm { what: what.into() });
        }
        let s = 1.0 / n.sqrt();
        let mut out = self;
        for a in out.terms.values_mut() {
            *a *= s;
        }
        Ok(out)
    }

    pub fn max_abs_diff(&self, other: &BiphotonKet) -> f64 {
        let keys: std::collections::BTreeSet<_> =
            self.terms.keys().chain(other.terms.keys()).collect();
        keys.into_iter()
            .map(|k| {
                let x = self.terms.get(k).copied().unwrap_or_default();
                let y = other.terms.get(k).copied().unwrap_or_default();
                (x - y).norm()
            })
            .fold(0.0, f64::max)
    }
}

impl fmt::Display for BiphotonKet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return f.write_str("0");
        }
        for (n, (&((sp, sl), (ip, il)), amp)) in self.terms.iter().enumerate() {
            if n > 0 {
                f.write_str(" + ")?;
            }
            write!(f, "({:.6}{:+.6}i)|{sp},{sl}>s|{ip},{il}>i", amp.re, amp.im)?;
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct BiTermJson {
    signal: (Pol, i32),
    idler: (Pol, i32),
    re: f64,
    im: f64,
}

#[derive(Serialize, Deserialize)]
struct BiKetJson {
    terms: Vec<BiTermJson>,
}

impl Serialize for BiphotonKet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        BiKetJson {
            terms: self
                .terms()
                .map(|(signal, idler, a)| BiTermJson {
                    signal,
                    idler,
                    re: a.re,
                    im: a.im,
                })
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for BiphotonKet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = BiKetJson::deserialize(d)?;
        Ok(BiphotonKet::from_terms(
            raw.terms
                .into_iter()
                .map(|t| (t.signal, t.idler, C64::new(t.re, t.im))),
        ))
    }
}

/// Dual-crystal type-I downconversion.
///
/// A pump `|H, ℓ⟩` component converts in the first crystal into
/// `∑ c_{ℓi} |V, ℓ−ℓi⟩_s |V, ℓi⟩_i`; a pump `|V, ℓ⟩` component converts in
/// the second crystal into `e^{iφ_c} ∑ c_{ℓi} |H, ℓ−ℓi⟩_s |H, ℓi⟩_i`.
pub fn spdc_state(pump: &PolKet, cfg: &SpdcConfig) -> Result<BiphotonKet, KetError> {
    if cfg.spectrum.is_empty() {
        return Err(KetError::EmptySpectrum);
    }
    let pump = pump.in_basis(Basis::HV);
    let crystal2 = C64::from_polar(1.0, cfg.phi_crystal);
    let mut terms = BTreeMap::new();
    for (pol, ell, amp) in pump.terms() {
        for (&ell_i, &c) in &cfg.spectrum {
            let (pair, weight) = match pol {
                Pol::H => (Pol::V, amp * c),
                Pol::V => (Pol::H, amp * c * crystal2),
                _ => unreachable!("pump stored in the HV basis"),
            };
            accumulate(&mut terms, ((pair, ell - ell_i), (pair, ell_i)), weight);
        }
    }
    prune(&mut terms);
    BiphotonKet { terms }.normalized_or("(pump has zero norm)")
}

/// Keeps only the idler ℓ = 0 component and renormalizes.
pub fn project_idler_oam0(s: &BiphotonKet) -> Result<BiphotonKet, KetError> {
    let terms = s
        .terms
        .iter()
        .filter(|(((_, _), (_, il)), _)| *il == 0)
        .map(|(k, a)| (*k, *a))
        .collect();
    BiphotonKet { terms }.normalized_or("OAM 0")
}

/// Jones vector of the idler analyzer state for a label.
///
/// Circular idler labels are referenced to the idler arm's handedness,
/// which is opposite to the signal's: the idler analyzer `L` passes the
/// signal-convention `(H − iV)/√2`. Linear labels are shared.
pub fn idler_analyzer(pol: Pol) -> [C64; 2] {
    match pol {
        Pol::L => Pol::R.jones(),
        Pol::R => Pol::L.jones(),
        p => p.jones(),
    }
}

/// Projects the idler onto `|idler_pol, 0⟩` and returns the normalized
/// conditioned signal state in the {H, V} basis.
///
/// With `φ_c = 0`, an FP/VV pump `(|L, ℓp⟩ + e^{iφ}|R, ℓp′⟩)/√2` and
/// `φ′ = φ + π`, the heralded states are, up to a global phase,
///
/// ```text
/// A: (|L, ℓp⟩ + e^{iφ′}|R, ℓp′⟩)/√2     D: (|R, ℓp⟩ + e^{iφ′}|L, ℓp′⟩)/√2
/// L: (|D, ℓp⟩ + e^{iφ′}|A, ℓp′⟩)/√2     R: (|A, ℓp⟩ + e^{iφ′}|D, ℓp′⟩)/√2
/// ```
///
/// while H and V heralds leave a homogeneously polarized signal.
pub fn herald(s: &BiphotonKet, idler_pol: Pol) -> Result<PolKet, KetError> {
    let analyzer = idler_analyzer(idler_pol);
    let mut out = PolKet::empty(Basis::HV);
    for (&((sp, sl), (ip, il)), &amp) in &s.terms {
        if il != 0 {
            continue;
        }
        let idx = if ip == Pol::H { 0 } else { 1 };
        accumulate(&mut out.terms, (sp, sl), analyzer[idx].conj() * amp);
    }
    prune(&mut out.terms);
    out.normalized().ok_or_else(|| KetError::ZeroNorm {
        what: format!("|{idler_pol},0>"),
    })
}

/// Renders a ket as a unit-power vector field using Laguerre–Gauss modes.
pub fn ket_to_field(k: &PolKet, grid: &GridSpec, w0: f64) -> Result<VectorField, KetError> {
    synthesize(k, grid, w0, ModeProfile::LaguerreGauss, |_, _| (0.0, 0.0))
}

/// Renders a ket with a chosen radial profile. `offset(pol, ell)` gives the
/// lateral displacement of the mode carrying that term (pol is the ket's own
/// label). The field is expressed in the ket's basis and normalized.
pub fn synthesize(
    k: &PolKet,
    grid: &GridSpec,
    w0: f64,
    profile: ModeProfile,
    offset: impl Fn(Pol, i32) -> (f64, f64),
) -> Result<VectorField, KetError> {
    let [p0, _] = k.basis.states();
    let mut cache: Vec<((i32, u64, u64), ScalarField)> = Vec::new();
    let mut a = ScalarField::zeros(*grid);
    let mut b = ScalarField::zeros(*grid);
    for (pol, ell, amp) in k.terms() {
        let (dx, dy) = offset(pol, ell);
        let key = (ell, dx.to_bits(), dy.to_bits());
        let m = match cache.iter().find(|(k, _)| *k == key) {
            Some((_, m)) => m.clone(),
            None => {
                let centred = fields::mode(grid, ell, w0, profile)?;
                let m = fields::translate(&centred, dx, dy)?;
                cache.push((key, m.clone()));
                m
            }
        };
        if pol == p0 {
            a = a.add(&m.scaled(amp))?;
        } else {
            b = b.add(&m.scaled(amp))?;
        }
    }
    Ok(VectorField::new(k.basis, a, b)?.normalized()?)
}

/// Signal-side analyzer: a labelled state or a linear polarizer at `θ`
/// from horizontal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SignalAnalyzer {
    Label(Pol),
    Linear(f64),
}

impl SignalAnalyzer {
    pub fn jones(self) -> [C64; 2] {
        match self {
            SignalAnalyzer::Label(p) => p.jones(),
            SignalAnalyzer::Linear(theta) => {
                [C64::new(theta.cos(), 0.0), C64::new(theta.sin(), 0.0)]
            }
        }
    }
}

/// Joint detection probability `∑_ℓ |⟨θ_s|⟨e_i| s⟩|²`, summed over all OAM
/// labels of both photons.
pub fn coincidence_probability(s: &BiphotonKet, signal: SignalAnalyzer, idler: Pol) -> f64 {
    let sa = signal.jones();
    let ia = idler_analyzer(idler);
    let mut by_ell: BTreeMap<(i32, i32), C64> = BTreeMap::new();
    for (&((sp, sl), (ip, il)), &amp) in &s.terms {
        let si = if sp == Pol::H { 0 } else { 1 };
        let ii = if ip == Pol::H { 0 } else { 1 };
        accumulate(&mut by_ell, (sl, il), sa[si].conj() * ia[ii].conj() * amp);
    }
    by_ell.values().map(|a| a.norm_sqr()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn horizontal_in_diagonal_basis() {
        let k = PolKet::basis_state(Pol::H, 0).in_basis(Basis::DA);
        let expect = PolKet::from_terms([
            (Pol::D, 0, c(FRAC_1_SQRT_2, 0.0)),
            (Pol::A, 0, c(FRAC_1_SQRT_2, 0.0)),
        ]);
        assert!(k.max_abs_diff(&expect) < 1e-15);
        assert_eq!(k.basis(), Basis::DA);
    }

    #[test]
    fn left_circular_in_linear_basis() {
        let k = PolKet::basis_state(Pol::L, 1).in_basis(Basis::HV);
        assert!((k.amplitude(Pol::H, 1) - c(FRAC_1_SQRT_2, 0.0)).norm() < 1e-15);
        assert!((k.amplitude(Pol::V, 1) - c(0.0, FRAC_1_SQRT_2)).norm() < 1e-15);
    }

    #[test]
    fn double_basis_change_is_identity() {
        let k = PolKet::from_terms([
            (Pol::H, 1, c(0.3, 0.4)),
            (Pol::V, -2, c(-0.5, 0.1)),
            (Pol::V, 1, c(0.2, -0.6)),
        ]);
        let back = k.in_basis(Basis::LR).in_basis(Basis::HV);
        for (p, l, a) in k.terms() {
            assert!((back.amplitude(p, l) - a).norm() < 1e-15);
        }
    }

    #[test]
    fn mixed_labels_canonicalize_to_hv() {
        let k = PolKet::from_terms([(Pol::L, 0, c(1.0, 0.0)), (Pol::R, 0, c(1.0, 0.0))]);
        assert_eq!(k.basis(), Basis::LR);
        let m = PolKet::from_terms([(Pol::L, 0, c(1.0, 0.0)), (Pol::H, 0, c(1.0, 0.0))]);
        assert_eq!(m.basis(), Basis::HV);
        let dup = PolKet::from_terms([(Pol::H, 0, c(0.5, 0.0)), (Pol::H, 0, c(0.5, 0.0))]);
        assert_eq!(dup.len(), 1);
        assert_eq!(dup.amplitude(Pol::H, 0), c(1.0, 0.0));
    }

    #[test]
    fn pump_states_table_rows() {
        let fp = pump_state(&PumpSpec::new(PumpKind::FP, 0.5, 0.0).unwrap()).unwrap();
        let expect = PolKet::from_terms([
            (Pol::L, 1, c(FRAC_1_SQRT_2, 0.0)),
            (Pol::R, 0, c(FRAC_1_SQRT_2, 0.0)),
        ]);
        assert!(fp.max_abs_diff(&expect) < 1e-15);

        let vv = pump_state(&PumpSpec::new(PumpKind::VV, 1.0, PI).unwrap()).unwrap();
        let expect = PolKet::from_terms([
            (Pol::L, 2, c(FRAC_1_SQRT_2, 0.0)),
            (Pol::R, -2, c(-FRAC_1_SQRT_2, 0.0)),
        ]);
        assert!(vv.max_abs_diff(&expect) < 1e-15);

        let fp3 = pump_state(&PumpSpec::new(PumpKind::FP, 1.5, PI / 4.0).unwrap()).unwrap();
        let expect = PolKet::from_terms([
            (Pol::L, 3, c(FRAC_1_SQRT_2, 0.0)),
            (Pol::R, 0, C64::from_polar(FRAC_1_SQRT_2, PI / 4.0)),
        ]);
        assert!(fp3.max_abs_diff(&expect) < 1e-15);
    }

    #[test]
    fn pump_rejects_bad_q() {
        assert!(PumpSpec::new(PumpKind::FP, 0.0, 0.0).is_err());
        assert!(PumpSpec::new(PumpKind::FP, 0.3, 0.0).is_err());
        assert!(PumpSpec::new(PumpKind::VV, -1.0, 0.0).is_err());
        assert_eq!(PumpSpec::new(PumpKind::VV, 2.5, 0.0).unwrap().ells(), (5, -5));
    }

    #[test]
    fn spdc_single_term() {
        let s = spdc_state(&PolKet::basis_state(Pol::H, 0), &SpdcConfig::default()).unwrap();
        assert_eq!(s.len(), 1);
        assert!((s.amplitude((Pol::V, 0), (Pol::V, 0)) - 1.0).norm() < 1e-15);
    }

    #[test]
    fn spdc_diagonal_pump_is_entangled() {
        let s = spdc_state(&PolKet::basis_state(Pol::D, 0), &SpdcConfig::default()).unwrap();
        let expect = BiphotonKet::from_terms([
            ((Pol::V, 0), (Pol::V, 0), c(FRAC_1_SQRT_2, 0.0)),
            ((Pol::H, 0), (Pol::H, 0), c(FRAC_1_SQRT_2, 0.0)),
        ]);
        assert!(s.max_abs_diff(&expect) < 1e-15);
        let phased = spdc_state(
            &PolKet::basis_state(Pol::D, 0),
            &SpdcConfig::default().with_phi_crystal(PI / 2.0),
        )
        .unwrap();
        assert!((phased.amplitude((Pol::H, 0), (Pol::H, 0)) - c(0.0, FRAC_1_SQRT_2)).norm() < 1e-15);
    }

    #[test]
    fn spectrum_validation() {
        assert_eq!(SpdcConfig::new(BTreeMap::new(), 0.0), Err(KetError::EmptySpectrum));
        assert!(matches!(
            SpdcConfig::new(BTreeMap::from([(0, c(0.5, 0.0))]), 0.0),
            Err(KetError::SpectrumNotNormalized(_))
        ));
    }

    #[test]
    fn oam_projection() {
        let pump = PolKet::basis_state(Pol::H, 0);
        let wide = SpdcConfig::new(
            BTreeMap::from([(-1, c(0.6, 0.0)), (0, c(0.0, 0.8))]),
            0.0,
        )
        .unwrap();
        let s = spdc_state(&pump, &wide).unwrap();
        let p = project_idler_oam0(&s).unwrap();
        assert_eq!(p.len(), 1);
        // idempotent
        assert!(project_idler_oam0(&p).unwrap().max_abs_diff(&p) < 1e-15);

        let only_one = SpdcConfig::new(BTreeMap::from([(1, c(1.0, 0.0))]), 0.0).unwrap();
        let s = spdc_state(&pump, &only_one).unwrap();
        assert!(matches!(project_idler_oam0(&s), Err(KetError::ZeroNorm { .. })));
    }

    #[test]
    fn herald_zero_branch_is_an_error() {
        let s = spdc_state(&PolKet::basis_state(Pol::H, 0), &SpdcConfig::default()).unwrap();
        assert!(matches!(herald(&s, Pol::H), Err(KetError::ZeroNorm { .. })));
        let v = herald(&s, Pol::V).unwrap();
        assert!((v.amplitude(Pol::V, 0).norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rotation_by_full_turn_is_identity() {
        let k = pump_state(&PumpSpec::new(PumpKind::FP, 1.5, 0.3).unwrap()).unwrap();
        assert!(k.rotated(2.0 * PI).max_abs_diff(&k) < 1e-14);
        // (ℓp − ℓp′ + 2) = 5 ⇒ rotation by π/5 flips the relative phase
        let flipped = PolKet::from_terms(k.terms().map(|(p, l, a)| {
            (p, l, if p == Pol::R { -a } else { a })
        }));
        assert!(k.rotated(PI / 5.0).max_abs_diff_up_to_phase(&flipped) < 1e-14);
    }

    #[test]
    fn ket_json_roundtrip() {
        let k = pump_state(&PumpSpec::new(PumpKind::VV, 1.0, PI / 3.0).unwrap()).unwrap();
        let text = serde_json::to_string(&k).unwrap();
        assert!(text.starts_with("{\"terms\":["));
        let back: PolKet = serde_json::from_str(&text).unwrap();
        assert_eq!(back, k);
        let s = spdc_state(&k, &SpdcConfig::default()).unwrap();
        let back: BiphotonKet = serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
        assert!(back.max_abs_diff(&s) < 1e-15);
        let cfg: SpdcConfig =
            serde_json::from_str(r#"{"spectrum":[{"ell":0,"re":1.0}],"phi_crystal":0.5}"#).unwrap();
        assert_eq!(cfg.phi_crystal(), 0.5);
        assert!(serde_json::from_str::<SpdcConfig>(r#"{"spectrum":[]}"#).is_err());
    }

    #[test]
    fn product_state_is_dark_behind_crossed_idler() {
        let s = BiphotonKet::from_terms([((Pol::H, 0), (Pol::H, 0), c(1.0, 0.0))]);
        for k in 0..16 {
            let theta = PI * k as f64 / 16.0;
            assert_eq!(coincidence_probability(&s, SignalAnalyzer::Linear(theta), Pol::V), 0.0);
        }
    }
}
