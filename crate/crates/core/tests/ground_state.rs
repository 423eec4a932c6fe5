mod common;

use common::{free_fermion_energy, lowest_eigenvalue, pauli_chain, relative};
use ndarray::{linalg::kron, Array2};
use rlftn::config::ScalarKind;
use rlftn::mps::{sweep, GateSet, Stop};
use rlftn::observables::{correlation_length, energy, magnetization};
use rlftn::report::execute;
use rlftn::{GateForm, Method, Model, RsvdSettings, SectorRankPolicy, SymmetricMps, TebdConfig};

fn config(chi: usize, delta_e: f64) -> TebdConfig {
    TebdConfig {
        chi,
        delta_e,
        seed: 7,
        ..TebdConfig::default()
    }
}

#[test]
fn free_fermion_oracle_matches_exact_diagonalization() {
    for l in 2..=8 {
        for h in [0.0, 0.3, 1.0, 2.5] {
            let ed = lowest_eigenvalue(&pauli_chain(l, h));
            let ff = free_fermion_energy(l, h);
            assert!((ed - ff).abs() < 1e-11 * ed.abs().max(1.0), "L={l} h={h}: {ed} vs {ff}");
        }
    }
    assert!((free_fermion_energy(2, 1.0) + 5f64.sqrt()).abs() < 1e-14);
}

#[test]
fn free_fermion_reference_values() {
    assert!((free_fermion_energy(16, 1.0) - -20.016387900485142).abs() < 1e-12);
    assert!((free_fermion_energy(64, 1.0) - -81.1259801231435).abs() < 1e-11);
}

#[test]
fn spin_half_chain_is_the_pauli_chain() {
    let l = 6;
    let model = Model::chain(l, 0.8, 0.5).unwrap();
    let n = 1 << l;
    let mut h = Array2::<f64>::zeros((n, n));
    for (j, hb) in model.bond_hamiltonians().iter().enumerate() {
        let left = Array2::<f64>::eye(1 << j);
        let right = Array2::<f64>::eye(1 << (l - j - 2));
        h = h + kron(&kron(&left, hb), &right);
    }
    let want = pauli_chain(l, 0.8);
    assert!((&h - &want).iter().all(|x| x.abs() < 1e-13));
}

#[test]
fn small_chains_reach_the_free_fermion_energy() {
    for (l, h) in [(8, 1.0), (10, 0.5), (10, 1.6)] {
        let model = Model::chain(l, h, 0.5).unwrap();
        let r = execute(&model, &config(32, 1e-11), ScalarKind::Real).unwrap();
        assert_eq!(r.convergence.stop, Stop::Converged);
        let want = free_fermion_energy(l, h);
        assert!(
            relative(r.observables.energy, want) < 1e-8,
            "L={l} h={h}: {} vs {want}",
            r.observables.energy
        );
    }
}

#[test]
fn one_sweep_lowers_the_energy_of_a_random_state() {
    let model = Model::chain(8, 1.0, 0.5).unwrap();
    let mut mps = SymmetricMps::<f64>::random(&model, 8, 11).unwrap();
    let before = energy(&mps, &model);
    let gates = GateSet::<f64>::new(&model, 0.1, GateForm::Block, 1e-14).unwrap();
    sweep(&mut mps, &gates, 16, &SectorRankPolicy::estimate(16, 2), &Method::Tsvd).unwrap();
    let audit = mps.audit();
    assert!(audit.parity_ok);
    assert!(audit.norm_deviation < 1e-10, "{audit:?}");
    mps.canonicalize().unwrap();
    assert!(energy(&mps, &model) < before);
}

#[test]
fn methods_agree_on_a_spin_one_chain() {
    let model = Model::chain(12, 1.2, 1.0).unwrap();
    let t = execute(&model, &config(24, 1e-10), ScalarKind::Real).unwrap();
    let mut cfg = config(24, 1e-10);
    cfg.method = Method::Rsvd(RsvdSettings {
        min_dim: 8,
        ..RsvdSettings::default()
    });
    let r = execute(&model, &cfg, ScalarKind::Real).unwrap();
    assert!(r.compressions > 0);
    assert!(relative(r.observables.energy, t.observables.energy) < 1e-8);
    assert!(relative(r.observables.magnetization, t.observables.magnetization) < 1e-6);
}

#[test]
fn product_and_block_gates_agree_on_a_cylinder() {
    let model = Model::cylinder(4, 2, 2.0).unwrap();
    let b = execute(&model, &config(16, 1e-10), ScalarKind::Real).unwrap();
    let mut cfg = config(16, 1e-10);
    cfg.gate_form = GateForm::Product;
    let p = execute(&model, &cfg, ScalarKind::Real).unwrap();
    assert!(relative(p.observables.energy, b.observables.energy) < 1e-9);
}

#[test]
fn runs_reproduce_from_the_seed() {
    let model = Model::chain(10, 0.9, 0.5).unwrap();
    let mut cfg = config(16, 1e-9);
    cfg.method = Method::Rsvd(RsvdSettings {
        min_dim: 4,
        ..RsvdSettings::default()
    });
    let a = execute(&model, &cfg, ScalarKind::Real).unwrap();
    let b = execute(&model, &cfg, ScalarKind::Real).unwrap();
    assert_eq!(a.observables, b.observables);
    assert_eq!(a.convergence, b.convergence);
    assert_eq!(a.compressions, b.compressions);
}

#[test]
fn observables_survive_an_extra_canonicalization() {
    let model = Model::chain(10, 0.8, 0.5).unwrap();
    let mut mps = SymmetricMps::<f64>::random(&model, 16, 5).unwrap();
    let gates = GateSet::<f64>::new(&model, 0.2, GateForm::Block, 1e-14).unwrap();
    for _ in 0..20 {
        sweep(&mut mps, &gates, 16, &SectorRankPolicy::estimate(16, 2), &Method::Tsvd).unwrap();
    }
    mps.canonicalize().unwrap();
    let (m, xi) = (magnetization(&mps, &model), correlation_length(&mps, &model));
    mps.canonicalize().unwrap();
    assert!((magnetization(&mps, &model) - m).abs() < 1e-10);
    match (correlation_length(&mps, &model), xi) {
        (Some(a), Some(b)) => assert!((a - b).abs() < 1e-10),
        (a, b) => assert_eq!(a, b),
    }
}
