use std::f64::consts::{FRAC_PI_4, FRAC_PI_8, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use vortex_herald::export;
use vortex_herald::fields::ScalarField;
use vortex_herald::kets::{self, PumpKind};
use vortex_herald::polarimetry::{
    reconstruct_stokes, simulate_frames, stokes_of_field, PolarimetryError,
};
use vortex_herald::scenarios::{self, ScenarioConfig};
use vortex_herald::topology::{disclination_index, find_singularities, rotate_stokes, rotation_between};
use vortex_herald::{
    Basis, GridSpec, Pol, PolarimeterConfig, PumpSpec, SpdcConfig, StokesMap, VectorField, C64,
};

fn table_pumps() -> Vec<PumpSpec> {
    let mut out = Vec::new();
    for kind in [PumpKind::FP, PumpKind::VV] {
        for (q, varphi) in [(0.5, 0.0), (1.0, PI), (1.5, FRAC_PI_4)] {
            out.push(PumpSpec::new(kind, q, varphi).unwrap());
        }
    }
    out
}

fn herald_stokes(p: &PumpSpec, h: Pol, grid: &GridSpec) -> StokesMap {
    let pair = kets::spdc_state(&kets::pump_state(p).unwrap(), &SpdcConfig::default()).unwrap();
    let ket = kets::herald(&pair, h).unwrap();
    stokes_of_field(&kets::ket_to_field(&ket, grid, 1.0).unwrap())
}

fn grid() -> GridSpec {
    GridSpec::new(160, 160, 3.0).unwrap()
}

fn random_field(rng: &mut ChaCha8Rng, g: GridSpec) -> VectorField {
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut comp = || {
        let samples = (0..g.len())
            .map(|_| C64::new(normal.sample(rng), normal.sample(rng)))
            .collect();
        ScalarField::new(g, samples).unwrap()
    };
    VectorField::new(Basis::HV, comp(), comp()).unwrap()
}

#[test]
fn winding_is_quantized_and_radius_independent() {
    let g = grid();
    for p in table_pumps() {
        let scale = if p.kind == PumpKind::FP { 1 } else { 2 };
        let two_q = (2.0 * p.q).round() as i32;
        for (h, want) in [(Pol::D, scale * two_q), (Pol::A, -scale * two_q)] {
            let s = herald_stokes(&p, h, &g);
            for r in [0.75, 1.0, 1.5] {
                let c = disclination_index(&s, (0.0, 0.0), r).unwrap();
                assert_eq!(c.twice, want, "{} q={} {h} r={r}", p.kind, p.q);
                assert!(c.residual() < 0.05, "{} q={} {h} r={r}: {}", p.kind, p.q, c.raw);
            }
        }
        if p.kind == PumpKind::FP {
            // inside the ring where the two constituents balance, the axis is regular
            for h in [Pol::L, Pol::R] {
                let s = herald_stokes(&p, h, &g);
                assert_eq!(disclination_index(&s, (0.0, 0.0), 0.5).unwrap().twice, 0);
            }
        }
    }
}

#[test]
fn circular_heralds_permute_stokes_components_of_a() {
    // L herald = A herald with (L, R) relabelled as (D, A)
    let g = GridSpec::new(48, 48, 2.5).unwrap();
    for p in table_pumps() {
        let a = herald_stokes(&p, Pol::A, &g);
        let l = herald_stokes(&p, Pol::L, &g);
        for idx in 0..g.len() {
            let (sa, sl) = (a.at(idx), l.at(idx));
            let want = [sa[0], sa[1], sa[3], -sa[2]];
            for k in 0..4 {
                assert!((sl[k] - want[k]).abs() < 1e-12, "{} q={} idx {idx}", p.kind, p.q);
            }
        }
    }
}

#[test]
fn random_fields_survive_the_polarimeter() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let g = GridSpec::new(24, 24, 1.0).unwrap();
    let cfg = PolarimeterConfig::default();
    for _ in 0..10 {
        let f = random_field(&mut rng, g);
        let truth = stokes_of_field(&f);
        let got = reconstruct_stokes(&simulate_frames(&f, &cfg), &cfg).unwrap();
        assert!(truth.max_relative_error(&got).unwrap() < 1e-12);
    }
}

#[test]
fn random_angle_sets_reconstruct_when_well_posed() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let g = GridSpec::new(16, 16, 1.0).unwrap();
    let f = random_field(&mut rng, g);
    let truth = stokes_of_field(&f);
    for _ in 0..20 {
        let n = rng.random_range(5..12);
        let angles: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..PI)).collect();
        let Ok(cfg) = PolarimeterConfig::new(angles) else { continue };
        let got = reconstruct_stokes(&simulate_frames(&f, &cfg), &cfg).unwrap();
        assert!(truth.max_relative_error(&got).unwrap() < 1e-8);
    }
}

#[test]
fn angles_shifted_by_pi_give_identical_stokes() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let g = GridSpec::new(16, 16, 1.0).unwrap();
    let f = random_field(&mut rng, g);
    let base = PolarimeterConfig::default();
    let shifted = PolarimeterConfig::new(
        base.angles
            .iter()
            .enumerate()
            .map(|(k, a)| if k % 2 == 0 { a + PI } else { *a })
            .collect(),
    )
    .unwrap();
    let a = reconstruct_stokes(&simulate_frames(&f, &base), &base).unwrap();
    let b = reconstruct_stokes(&simulate_frames(&f, &shifted), &shifted).unwrap();
    assert!(a.max_relative_error(&b).unwrap() < 1e-12);
}

#[test]
fn duplicate_settings_modulo_pi_are_rejected_when_rank_drops() {
    let cfg = PolarimeterConfig::new(vec![0.0, PI, FRAC_PI_8, FRAC_PI_8 + PI]);
    assert!(matches!(
        cfg,
        Err(PolarimetryError::TooFewAngles(_)) | Err(PolarimetryError::RankDeficient(_))
    ));
}

#[test]
fn rotation_estimate_recovers_applied_rotations() {
    let g = grid();
    let p = PumpSpec::new(PumpKind::FP, 0.5, 0.0).unwrap();
    let s = herald_stokes(&p, Pol::A, &g);
    for angle in [0.2, -0.5, 0.9] {
        let rotated = rotate_stokes(&s, angle);
        let got = rotation_between(&s, &rotated).unwrap();
        // a star is 3-fold symmetric, so compare modulo 2π/3
        let period = 2.0 * PI / 3.0;
        let d = (got - angle).rem_euclid(period);
        assert!(d.min(period - d) < 2.0 * PI / 256.0, "{angle}: {got}");
    }
}

#[test]
fn singularity_search_finds_only_the_axis_for_fp_a() {
    let g = grid();
    for (q, varphi) in [(0.5, 0.0), (1.0, PI), (1.5, FRAC_PI_4)] {
        let p = PumpSpec::new(PumpKind::FP, q, varphi).unwrap();
        let found = find_singularities(&herald_stokes(&p, Pol::A, &g));
        assert_eq!(found.len(), 1, "q={q}: {found:?}");
        let (x, y) = found[0].location;
        assert!(x.hypot(y) < 2.0 * g.pitch_x());
        assert_eq!(found[0].index.twice, -(2.0 * q).round() as i32);
    }
}

#[test]
fn crystal_perturbation_also_deforms() {
    let p = PumpSpec::new(PumpKind::FP, 0.5, 0.0).unwrap();
    let mut base = ScenarioConfig::new("base", p, Some(Pol::A));
    base.grid.n = 96;
    let mut moved = base.clone();
    moved.name = "moved".into();
    moved.offset.dx = 0.1;
    moved.perturb = scenarios::PerturbTarget::Crystal;
    let a = scenarios::run_scenario(&base).unwrap();
    let b = scenarios::run_scenario(&moved).unwrap();
    assert!(scenarios::deformation(&a.stokes, &b.stokes).unwrap() > 0.01);
}

#[test]
fn exported_stokes_read_back_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let g = GridSpec::new(24, 16, 1.5).unwrap();
    let p = PumpSpec::new(PumpKind::VV, 1.0, PI).unwrap();
    let s = herald_stokes(&p, Pol::R, &g);
    export::write_stokes(dir.path(), &s).unwrap();
    let back = export::read_stokes(dir.path(), g).unwrap();
    assert_eq!(back, s);
}

#[test]
fn written_scenarios_are_listed_in_their_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let p = PumpSpec::new(PumpKind::FP, 1.0, PI).unwrap();
    let mut cfg = ScenarioConfig::new("fp_q1_A", p, Some(Pol::A));
    cfg.grid.n = 64;
    cfg.export_frames = true;
    let r = scenarios::run_scenario(&cfg).unwrap();
    scenarios::write_scenario(&r, dir.path(), &r.metrics()).unwrap();
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap())
            .unwrap();
    let files = manifest["files"].as_array().unwrap();
    assert!(files.len() > 10);
    for entry in files {
        let path = dir.path().join(entry["path"].as_str().unwrap());
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(entry["bytes"], bytes.len());
        assert_eq!(entry["sha256"], export::sha256_hex(&bytes));
    }
}
