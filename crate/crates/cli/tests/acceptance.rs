//! Acceptance criteria, one PASS/FAIL line each. Exits non-zero if any fail.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_4, PI, TAU};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use vortex_herald::correlations::{self, FringeConfig};
use vortex_herald::kets::{self, PumpKind};
use vortex_herald::polarimetry::{reconstruct_stokes, simulate_frames, stokes_of_field};
use vortex_herald::qplate::{qplate_apply_field, qplate_apply_ket};
use vortex_herald::scenarios::{self, ScenarioConfig, ScenarioResult};
use vortex_herald::{
    Basis, ModeProfile, Pol, PolKet, PolarimeterConfig, PumpSpec, QPlateParams, SpdcConfig,
    TopologyClass, C64,
};

type Outcome = Result<String, String>;

const HERALDS: [Pol; 4] = [Pol::D, Pol::A, Pol::L, Pol::R];

fn table_pumps() -> Vec<PumpSpec> {
    let mut out = Vec::new();
    for kind in [PumpKind::FP, PumpKind::VV] {
        for (q, varphi) in [(0.5, 0.0), (1.0, PI), (1.5, FRAC_PI_4)] {
            out.push(PumpSpec::new(kind, q, varphi).unwrap());
        }
    }
    out
}

fn label(p: &PumpSpec) -> String {
    format!("{} q={}", p.kind, p.q)
}

fn scenario(pump: PumpSpec, herald: Pol) -> Result<ScenarioResult, String> {
    let name = format!("{}_q{}_{}", pump.kind, pump.q, herald);
    scenarios::run_scenario(&ScenarioConfig::new(&name, pump, Some(herald)))
        .map_err(|e| format!("{name}: {e}"))
}

/// Tiny deterministic generator so draws do not depend on the core crate.
struct SplitMix(u64);

impl SplitMix {
    fn next(&mut self) -> f64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
        (z >> 11) as f64 / (1u64 << 53) as f64
    }
}

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Heralded signal written down by hand for `φ_c = 0`, with `φ′ = φ + π`.
fn closed_form(p: &PumpSpec, herald: Pol) -> PolKet {
    let (lp, lpp) = p.ells();
    let (first, second) = match herald {
        Pol::A => (Pol::L, Pol::R),
        Pol::D => (Pol::R, Pol::L),
        Pol::L => (Pol::D, Pol::A),
        Pol::R => (Pol::A, Pol::D),
        _ => unreachable!(),
    };
    PolKet::from_terms([
        (first, lp, c(FRAC_1_SQRT_2, 0.0)),
        (second, lpp, C64::from_polar(FRAC_1_SQRT_2, p.varphi + PI)),
    ])
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for p in table_pumps() {
        let pair = kets::spdc_state(&kets::pump_state(&p).unwrap(), &SpdcConfig::default())
            .map_err(|e| e.to_string())?;
        for h in HERALDS {
            let got = kets::herald(&pair, h).map_err(|e| e.to_string())?;
            let err = got.max_abs_diff_up_to_phase(&closed_form(&p, h));
            if err >= 1e-12 {
                return Err(format!("{} herald {h}: error {err:.3e}", label(&p)));
            }
            worst = worst.max(err);
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    if elapsed >= 1.0 {
        return Err(format!("took {elapsed:.3} s"));
    }
    Ok(format!("24 heralds, max error {worst:.2e}, {elapsed:.4} s"))
}

fn criterion_2() -> Outcome {
    let mut rng = SplitMix(0x5eed);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let q = 0.5 * (1.0 + (rng.next() * 8.0).floor());
        let plate = QPlateParams::new(q, rng.next() * TAU * 0.999, rng.next() * TAU).unwrap();
        let m = plate.jones_at(rng.next() * TAU - PI);
        for i in 0..2 {
            for j in 0..2 {
                let g = m[0][i].conj() * m[0][j] + m[1][i].conj() * m[1][j];
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g - c(target, 0.0)).norm());
            }
        }
    }
    if worst >= 1e-12 {
        return Err(format!("unitarity residual {worst:.3e}"));
    }
    let mut identity = 0.0f64;
    let mut reversal = 0.0f64;
    for q in [0.5, 1.0, 1.5] {
        for ell in -3..=3 {
            for pol in [Pol::L, Pol::R] {
                let input = PolKet::basis_state(pol, ell);
                let still = qplate_apply_ket(&input, &QPlateParams::new(q, 0.0, 0.3).unwrap());
                identity = identity.max(still.max_abs_diff(&input.in_basis(Basis::LR)));
                let plate = QPlateParams::new(q, PI, 0.3).unwrap();
                let out = qplate_apply_ket(&input, &plate);
                let shift = if pol == Pol::L { plate.two_q() } else { -plate.two_q() };
                let expect = PolKet::basis_state(pol.orthogonal(), ell + shift);
                reversal = reversal.max(out.max_abs_diff_up_to_phase(&expect));
            }
        }
    }
    if identity >= 1e-12 || reversal >= 1e-12 {
        return Err(format!("identity {identity:.3e}, reversal {reversal:.3e}"));
    }
    Ok(format!(
        "unitarity {worst:.2e} over 1000 draws, identity {identity:.2e}, reversal {reversal:.2e}"
    ))
}

fn criterion_3() -> Outcome {
    let grid = vortex_herald::GridSpec::new(256, 256, 3.0).map_err(|e| e.to_string())?;
    let plates = [
        QPlateParams::new(0.5, PI, 0.0).unwrap(),
        QPlateParams::new(1.0, PI / 2.0, 0.4).unwrap(),
        QPlateParams::new(1.5, 1.1, -0.7).unwrap(),
    ];
    let none = |_: Pol, _: i32| (0.0, 0.0);
    let mut worst = 0.0f64;
    for plate in &plates {
        for pol in [Pol::H, Pol::D, Pol::L, Pol::R] {
            for ell in -3..=3 {
                let input = PolKet::basis_state(pol, ell);
                let before = kets::synthesize(&input, &grid, 1.0, ModeProfile::PhaseOnly, none)
                    .map_err(|e| e.to_string())?;
                let by_field = qplate_apply_field(&before, plate);
                let by_ket = kets::synthesize(
                    &qplate_apply_ket(&input, plate),
                    &grid,
                    1.0,
                    ModeProfile::PhaseOnly,
                    none,
                )
                .map_err(|e| e.to_string())?;
                worst = worst.max(by_field.max_abs_diff(&by_ket).map_err(|e| e.to_string())?);
            }
        }
    }
    if worst >= 1e-9 {
        return Err(format!("max difference {worst:.3e}"));
    }
    Ok(format!("84 inputs on 256x256, max difference {worst:.2e}"))
}

fn criterion_4() -> Outcome {
    let grid = vortex_herald::GridSpec::new(256, 256, 3.0).map_err(|e| e.to_string())?;
    let cfg = PolarimeterConfig::default();
    let mut worst = 0.0f64;
    for p in table_pumps() {
        let pair = kets::spdc_state(&kets::pump_state(&p).unwrap(), &SpdcConfig::default())
            .map_err(|e| e.to_string())?;
        for h in HERALDS {
            let ket = kets::herald(&pair, h).map_err(|e| e.to_string())?;
            let field = kets::ket_to_field(&ket, &grid, 1.0).map_err(|e| e.to_string())?;
            let truth = stokes_of_field(&field);
            let rebuilt = reconstruct_stokes(&simulate_frames(&field, &cfg), &cfg)
                .map_err(|e| e.to_string())?;
            let err = truth.max_relative_error(&rebuilt).map_err(|e| e.to_string())?;
            if err >= 1e-9 {
                return Err(format!("{} herald {h}: error {err:.3e}", label(&p)));
            }
            worst = worst.max(err);
        }
    }
    Ok(format!("24 fields, 8 frames, max relative error {worst:.2e}"))
}

fn center(r: &ScenarioResult) -> Result<&vortex_herald::SingularityReport, String> {
    r.center
        .as_ref()
        .ok_or_else(|| format!("{}: no axis report", r.config.name))
}

fn criterion_5() -> Outcome {
    let fp = |q: f64, varphi: f64| PumpSpec::new(PumpKind::FP, q, varphi).unwrap();
    let mut notes = Vec::new();
    let mut worst_residual = 0.0f64;

    let d = scenario(fp(0.5, 0.0), Pol::D)?;
    let a = scenario(fp(0.5, 0.0), Pol::A)?;
    let (id, ia) = (center(&d)?.index, center(&a)?.index);
    if id.twice != 1 || ia.twice != -1 {
        return Err(format!("q=1/2: D gives {id}, A gives {ia}"));
    }
    notes.push(format!("q=1/2 D {id} A {ia}"));

    let mut checked = Vec::new();
    for (q, varphi) in [(0.5, 0.0), (1.0, PI), (1.5, FRAC_PI_4)] {
        for h in [Pol::D, Pol::A] {
            let r = scenario(fp(q, varphi), h)?;
            let rep = center(&r)?;
            worst_residual = worst_residual.max(rep.index.residual());
            let want_twice = (2.0 * q).round() as i32 * if h == Pol::D { 1 } else { -1 };
            if rep.index.twice != want_twice {
                return Err(format!("q={q} herald {h}: index {}", rep.index));
            }
            let n = (2.0 * (rep.index.value() - 1.0)).abs().round() as u32;
            if n > 0 && rep.radial_lines != n {
                return Err(format!(
                    "q={q} herald {h}: {} radial lines, expected {n}",
                    rep.radial_lines
                ));
            }
            checked.push((q, h, r.class));
        }
    }
    let class_of = |q: f64, h: Pol| {
        checked
            .iter()
            .find(|(cq, ch, _)| *cq == q && *ch == h)
            .and_then(|(_, _, k)| *k)
    };
    if class_of(1.0, Pol::A) != Some(TopologyClass::Hyperstar) {
        return Err(format!("q=1 herald A classified {:?}", class_of(1.0, Pol::A)));
    }
    if class_of(1.5, Pol::A) != Some(TopologyClass::Hyperstar) {
        return Err(format!("q=3/2 herald A classified {:?}", class_of(1.5, Pol::A)));
    }
    if worst_residual >= 0.05 {
        return Err(format!("index residual {worst_residual:.3e}"));
    }
    notes.push("|I_C|=1, 3/2 for q=1, 3/2".into());
    notes.push(format!("radial lines match, residual {worst_residual:.2e}"));
    Ok(notes.join("; "))
}

fn criterion_6() -> Outcome {
    let tol = TAU / 256.0;
    let mut notes = Vec::new();
    for (q, n) in [(0.5, 3.0), (1.5, 5.0)] {
        let r = scenario(PumpSpec::new(PumpKind::FP, q, 0.0).unwrap(), Pol::A)?;
        let got = r
            .rotation
            .ok_or_else(|| format!("q={q}: rotation not measured"))?;
        let want = PI / n;
        if (got - want).abs() > tol {
            return Err(format!("q={q}: rotation {got:.5}, expected {want:.5}"));
        }
        notes.push(format!("q={q}: {got:.5} vs pi/{n}"));
    }
    Ok(notes.join("; "))
}

fn criterion_7() -> Outcome {
    let pumps = [
        PumpSpec::new(PumpKind::FP, 0.5, 0.0).unwrap(),
        PumpSpec::new(PumpKind::VV, 1.0, PI).unwrap(),
    ];
    let (mut flat, mut textured) = (0.0f64, f64::INFINITY);
    for p in pumps {
        for h in [Pol::H, Pol::V] {
            let r = scenario(p, h)?;
            flat = flat.max(r.homogeneity);
        }
        for h in HERALDS {
            let r = scenario(p, h)?;
            textured = textured.min(r.homogeneity);
        }
    }
    if flat >= 1e-6 {
        return Err(format!("H/V heralds spread {flat:.3e}"));
    }
    if textured <= 0.1 {
        return Err(format!("A/D/L/R heralds spread only {textured:.3e}"));
    }
    Ok(format!("H/V max {flat:.2e}, A/D/L/R min {textured:.3}"))
}

fn criterion_8() -> Outcome {
    let ideal = FringeConfig::default();
    for basis in [Basis::HV, Basis::DA] {
        let v = correlations::basis_fringes(&ideal, basis)
            .map_err(|e| e.to_string())?
            .visibility();
        if (v - 1.0).abs() > 1e-6 {
            return Err(format!("ideal {basis:?} visibility {v:.9}"));
        }
    }
    let fit = correlations::fit_imperfections(&ideal, 0.9812, 0.9617).map_err(|e| e.to_string())?;
    if (fit.visibility_hv - 0.9812).abs() > 1e-6 || (fit.visibility_da - 0.9617).abs() > 1e-6 {
        return Err(format!(
            "fitted visibilities {:.6} / {:.6}",
            fit.visibility_hv, fit.visibility_da
        ));
    }
    // white noise p lowers both by (1 − p); dephasing scales D/A by cos φ_c
    let hv = 1.0 - fit.noise;
    let da = (1.0 - fit.noise) * fit.phi_crystal.cos();
    if (hv - 0.9812).abs() > 1e-6 || (da - 0.9617).abs() > 1e-6 {
        return Err(format!("model check {hv:.6} / {da:.6}"));
    }
    Ok(format!(
        "ideal 1 +/- 1e-6; p={:.5}, phi_c={:.5} give {:.4}% / {:.4}%",
        fit.noise,
        fit.phi_crystal,
        100.0 * fit.visibility_hv,
        100.0 * fit.visibility_da
    ))
}

fn criterion_9() -> Outcome {
    let run = scenarios::run_figure_suite("fig4").map_err(|e| e.to_string())?;
    let mut rows: Vec<(f64, f64)> = run
        .metrics
        .iter()
        .map(|m| (m.offset, m.deformation.unwrap_or(f64::NAN)))
        .collect();
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    let offsets: Vec<f64> = rows.iter().map(|r| r.0).collect();
    if offsets != [0.0, 0.05, 0.1, 0.15] {
        return Err(format!("offsets {offsets:?}"));
    }
    if rows[0].1 != 0.0 {
        return Err(format!("deformation at zero offset {:.3e}", rows[0].1));
    }
    if !rows.windows(2).all(|w| w[1].1 > w[0].1) {
        return Err(format!("not strictly increasing: {rows:?}"));
    }
    let list: Vec<String> = rows.iter().map(|r| format!("{:.4}", r.1)).collect();
    Ok(format!("deformation {}", list.join(" < ")))
}

fn collect_files(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
    let mut entries: Vec<_> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    entries.sort();
    for p in entries {
        if p.is_dir() {
            collect_files(root, &p, out);
        } else {
            out.insert(p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
        }
    }
}

fn criterion_10() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut trees = Vec::new();
    for k in 0..2 {
        let out = tmp.path().join(format!("run{k}"));
        let status = Command::new(env!("CARGO_BIN_EXE_vherald"))
            .args(["suite", "fig2", "--out"])
            .arg(&out)
            .status()
            .map_err(|e| e.to_string())?;
        if !status.success() {
            return Err(format!("run {k} exited with {status}"));
        }
        let mut files = BTreeMap::new();
        collect_files(&out, &out, &mut files);
        trees.push(files);
    }
    if trees[0].is_empty() {
        return Err("no artifacts written".into());
    }
    let names_a: Vec<_> = trees[0].keys().collect();
    let names_b: Vec<_> = trees[1].keys().collect();
    if names_a != names_b {
        return Err("file lists differ".into());
    }
    if let Some((name, _)) = trees[0].iter().find(|(k, v)| trees[1][*k] != **v) {
        return Err(format!("{} differs", name.display()));
    }
    let bytes: usize = trees[0].values().map(Vec::len).sum();
    Ok(format!("{} files, {bytes} bytes identical", trees[0].len()))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("herald closed forms", criterion_1),
        ("q-plate unitarity and limits", criterion_2),
        ("q-plate ket/field agreement", criterion_3),
        ("polarimeter round trip", criterion_4),
        ("disclination indices and line counts", criterion_5),
        ("pump-to-herald rotation", criterion_6),
        ("H/V homogeneity control", criterion_7),
        ("correlation visibilities", criterion_8),
        ("offset deformation", criterion_9),
        ("reproducible suite artifacts", criterion_10),
    ];
    let mut failed = 0;
    for (n, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("PASS criterion {:>2} {name}: {detail}", n + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {:>2} {name}: {detail}", n + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
