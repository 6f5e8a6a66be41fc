use num_complex::Complex64;
use proptest::prelude::*;

use simnet_core::cells::CellModel;
use simnet_core::io::touchstone::parse_touchstone_str;
use simnet_core::io::{StateManifest, TouchstoneFile, TouchstoneFormat};
use simnet_core::linalg::{rel_error, spectral_norm, DenseLu};
use simnet_core::random::{random_matrix, random_passive_scattering, random_phases};
use simnet_core::scenario::{capacity, estimate_parameter, synth_scattering, Geometry, Isolation};
use simnet_core::solvers::{core_inverse_ni, core_inverse_w, split_coupling, thomas_factorize};
use simnet_core::{
    assemble_gamma, solve_forward, BetaMode, BlockTridiagonal, CMatrix, CellCodebook, CellSource,
    CouplingModel, LossSpec, SimSystem, SimTopology, TuningState,
};

fn block_tridiagonal(q: usize, k: usize, seed: u64) -> BlockTridiagonal {
    let diag = (0..q)
        .map(|i| random_matrix(k, k, seed + i as u64))
        .collect();
    let lower = (1..q)
        .map(|i| random_matrix(k, k, seed + 100 + i as u64))
        .collect();
    let upper = (1..q)
        .map(|i| random_matrix(k, k, seed + 200 + i as u64))
        .collect();
    BlockTridiagonal::new(diag, lower, upper).unwrap()
}

fn small_geometry(layers: usize, ny: usize, nz: usize) -> Geometry {
    let mut g = Geometry {
        layers,
        array_shape: (ny, nz),
        probe_shape: (2, 1),
        ..Default::default()
    };
    g.tx_layout = g.planar_array(g.front_x() - 5.0 * g.wavelength, (2, 1));
    g
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn thomas_solve_matches_dense(q in 1usize..=6, k in 1usize..=8, seed in 0u64..10_000) {
        let m = block_tridiagonal(q, k, seed);
        let f = thomas_factorize(&m).unwrap();
        let dense = DenseLu::new(&m.to_dense()).unwrap();
        let b = random_matrix(q * k, 3, seed ^ 77);
        prop_assert!(rel_error(&f.solve(&b), &dense.solve(&b)) <= 1e-10);
        prop_assert!(rel_error(&f.solve_adjoint(&b), &dense.solve_adjoint(&b)) <= 1e-10);
        prop_assert!(rel_error(&f.full_inverse(), &dense.inverse()) <= 1e-10);
    }

    #[test]
    fn forward_waves_satisfy_both_port_relations(
        q in 1usize..=3, k in 1usize..=4, seed in 0u64..10_000, lossy in any::<bool>()
    ) {
        let t = SimTopology::new(q, k).unwrap();
        let s = random_passive_scattering(2, t.total_ports(), 2, 0.9, seed);
        let model = if lossy { CellModel::lossy(3.0, 12.0).unwrap() } else { CellModel::IdealPhase };
        let state = TuningState::Continuous(random_phases(t.total_cells(), seed));
        let gamma = assemble_gamma(&t, CellSource::Continuous(&model), &state).unwrap();
        let w = solve_forward(&s, &gamma, &random_matrix(2, 3, seed + 1)).unwrap();
        let (r1, r2) = w.residuals(&s, &gamma);
        prop_assert!(r1 <= 1e-10 && r2 <= 1e-10, "{r1:e} {r2:e}");
    }

    #[test]
    fn termination_inverse_is_blockwise(q in 1usize..=4, k in 1usize..=5, seed in 0u64..10_000) {
        let t = SimTopology::new(q, k).unwrap();
        let book = CellCodebook::quantized(&CellModel::lossy(4.0, 9.0).unwrap(), 6).unwrap();
        let levels: Vec<usize> = random_phases(t.total_cells(), seed)
            .iter()
            .map(|p| ((p + std::f64::consts::PI) * 6.0 / std::f64::consts::TAU) as usize % 6)
            .collect();
        let gamma = assemble_gamma(&t, CellSource::Discrete(&book), &TuningState::Discrete(levels)).unwrap();
        let product = gamma.inverse().unwrap().to_dense() * gamma.to_dense();
        let n = t.total_ports();
        prop_assert!(rel_error(&product, &CMatrix::identity(n, n)) <= 1e-12);
    }

    #[test]
    fn synthetic_networks_are_reciprocal_and_passive(
        layers in 1usize..=3, ny in 1usize..=4, seed in 0u64..1000, leak in prop::option::of(5.0f64..40.0)
    ) {
        let g = small_geometry(layers, ny, 1);
        let t = g.topology().unwrap();
        let iso = leak.map_or(Isolation::InfiniteGround, |leak_db| Isolation::FiniteGround { leak_db });
        let sc = synth_scattering(&g, &t, iso, seed).unwrap();
        let s = sc.scattering.assemble();
        prop_assert!(rel_error(&s.transpose(), &s) == 0.0);
        prop_assert!(spectral_norm(&s) <= 0.95 + 1e-12);
        let decomp = split_coupling(&sc.scattering.s_ee, &t).unwrap();
        prop_assert_eq!(decomp.is_isolated(), leak.is_none());
    }

    #[test]
    fn isolated_networks_make_the_models_coincide(layers in 1usize..=3, ny in 1usize..=3, seed in 0u64..1000) {
        let g = small_geometry(layers, ny, 2);
        let t = g.topology().unwrap();
        let sc = synth_scattering(&g, &t, Isolation::InfiniteGround, seed).unwrap();
        let sys = sc.system().unwrap();
        let state = TuningState::Continuous(random_phases(t.total_cells(), seed));
        let gamma = assemble_gamma(&t, CellSource::Continuous(&CellModel::IdealPhase), &state).unwrap();
        let reference = sys.channel(CouplingModel::Ni, &gamma).unwrap();
        for model in [CouplingModel::I, CouplingModel::W] {
            prop_assert!(rel_error(&sys.channel(model, &gamma).unwrap(), &reference) <= 1e-9);
        }
    }

    #[test]
    fn neumann_remainder_is_bounded(q in 2usize..=4, k in 1usize..=4, seed in 0u64..1000, eps in 0.01f64..0.3) {
        let t = SimTopology::new(q, k).unwrap();
        let s = random_passive_scattering(1, t.total_ports(), 1, 0.8, seed);
        let base = split_coupling(&s.s_ee, &t).unwrap();
        let s_ee = &base.s_ee_0 + &base.delta_s * Complex64::new(eps, 0.0);
        let decomp = split_coupling(&s_ee, &t).unwrap();
        let gamma = assemble_gamma(
            &t,
            CellSource::Continuous(&CellModel::IdealPhase),
            &TuningState::Continuous(random_phases(t.total_cells(), seed)),
        )
        .unwrap();
        let gi = gamma.inverse().unwrap();
        let w = core_inverse_w(&decomp, &gi).unwrap();
        let c = spectral_norm(&(&w.a_inv * &decomp.delta_s));
        prop_assume!(c < 0.9);
        let exact = core_inverse_ni(&gi, &s_ee).unwrap();
        let bound = c * c / (1.0 - c) * spectral_norm(&w.a_inv);
        prop_assert!(spectral_norm(&(exact - &w.t_approx)) <= bound * (1.0 + 1e-9) + 1e-14);
    }

    #[test]
    fn optimal_gain_minimizes_the_loss(m in 1usize..=4, l in 1usize..=4, seed in 0u64..10_000, dr in -1.0f64..1.0, di in -1.0f64..1.0) {
        let y = random_matrix(m, l, seed);
        let spec = LossSpec::new(random_matrix(m, l, seed + 1), BetaMode::OptimalRescale);
        let (best, beta) = spec.evaluate(&y).unwrap();
        let other = spec.residual(&y, beta + Complex64::new(dr, di) * 0.1).norm_squared();
        prop_assert!(best <= other * (1.0 + 1e-12));
    }

    #[test]
    fn estimation_ignores_a_common_signature_gain(
        seed in 0u64..10_000, gain_re in -3.0f64..3.0, gain_im in -3.0f64..3.0, mix in 0.0f64..1.0
    ) {
        let gain = Complex64::new(gain_re, gain_im);
        prop_assume!(gain.norm() > 1e-3);
        let sig = random_matrix(6, 5, seed);
        let params = [0.1, 0.2, 0.3, 0.4, 0.5];
        let obs: Vec<Complex64> = sig
            .column(1)
            .iter()
            .zip(sig.column(2).iter())
            .map(|(a, b)| a * (1.0 - mix) + b * mix)
            .collect();
        let a = estimate_parameter(&sig, &params, &obs).unwrap();
        let b = estimate_parameter(&(sig * gain), &params, &obs).unwrap();
        prop_assert!((a - b).abs() <= 1e-12, "{a} {b}");
    }

    #[test]
    fn capacity_grows_with_snr(seed in 0u64..10_000, snr in -10.0f64..40.0) {
        let y = random_matrix(3, 3, seed);
        prop_assert!(capacity(&y, snr).unwrap() <= capacity(&y, snr + 1.0).unwrap());
    }

    #[test]
    fn manifests_round_trip(q in 1usize..=3, k in 1usize..=6, p in 1usize..=8, seed in 0u64..10_000) {
        let t = SimTopology::new(q, k).unwrap();
        let book = CellCodebook::quantized(&CellModel::lossy(18.0, 6.0).unwrap(), p).unwrap();
        let levels: Vec<usize> = (0..t.total_cells()).map(|i| (seed as usize + 7 * i) % p).collect();
        let state = TuningState::Discrete(levels);
        let m = StateManifest::from_discrete(&t, &book, &state).unwrap();
        let text = serde_json::to_string(&m).unwrap();
        let back: StateManifest = serde_json::from_str(&text).unwrap();
        let gamma = assemble_gamma(&t, CellSource::Discrete(&book), &state).unwrap();
        prop_assert_eq!(back.termination().unwrap(), gamma);
        prop_assert_eq!(back.tuning_state().unwrap(), state);
    }

    #[test]
    fn touchstone_round_trip(n in 1usize..=9, seed in 0u64..10_000, fmt in 0usize..3, scale in 1e-6f64..1.0) {
        let format = [TouchstoneFormat::Ri, TouchstoneFormat::Ma, TouchstoneFormat::Db][fmt];
        let s = random_matrix(n, n, seed) * Complex64::new(scale, 0.0);
        let file = TouchstoneFile::single(s.clone(), 28e9, format).unwrap();
        let path = std::path::PathBuf::from(format!("x.s{n}p"));
        let back = parse_touchstone_str(&file.to_text(), n, &path).unwrap();
        prop_assert!(rel_error(&back.data[0], &s) <= 1e-12);
        prop_assert_eq!(back.frequencies, file.frequencies);
    }
}

#[test]
fn systems_reject_mismatched_topologies() {
    let t = SimTopology::new(2, 3).unwrap();
    let s = random_passive_scattering(1, 10, 1, 0.5, 1);
    assert!(SimSystem::new(s, t).is_err());
}
