use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

const B_TABLE: f64 = 10.9584e-3;

fn mg() -> HyperfineSystem {
    HyperfineSystem::magnesium_25()
}

#[test]
fn hamiltonian_structure() {
    let sys = mg();
    let ops = sys.operators();
    for b in [0.0, 3e-3, B_TABLE] {
        let h = build_hamiltonian(&sys, b);
        assert_eq!(h, h.transpose());
        for r in 0..12 {
            for c in 0..12 {
                if ops.two_mf[r] != ops.two_mf[c] {
                    assert_eq!(h[(r, c)], 0.0);
                }
            }
        }
    }
    let (mz, _) = sys.moment_operators(&ops);
    assert!(mz.trace().abs() < 1e-3);
}

#[test]
fn zero_field_manifolds() {
    let sys = mg();
    let es = eigensystem(&sys, 0.0).unwrap();
    let a = sys.hyperfine_constant;
    for (label, e) in es.labels.iter().zip(&es.energies) {
        let expected = if label.two_f == 6 { 1.25 * a } else { -1.75 * a };
        assert!((e - expected).abs() < 1e-6 * a.abs(), "{label}: {e}");
    }
    let n3 = es.labels.iter().filter(|l| l.two_f == 6).count();
    assert_eq!(n3, 7);
    assert_eq!(es.labels.len(), 12);
}

#[test]
fn trace_sum_rule() {
    let sys = mg();
    for b in [0.0, 1e-3, B_TABLE, 20e-3] {
        let es = eigensystem(&sys, b).unwrap();
        let sum: f64 = es.energies.iter().sum();
        let tr = build_hamiltonian(&sys, b).trace();
        assert!((sum - tr).abs() < 1e-10 * sys.hyperfine_constant.abs() * 12.0);
    }
}

#[test]
fn eigenvectors_orthonormal() {
    let es = eigensystem(&mg(), B_TABLE).unwrap();
    let g = es.eigenvectors.transpose() * &es.eigenvectors;
    assert!((g - DMatrix::identity(12, 12)).amax() < 1e-12);
}

#[test]
fn stretch_states_are_product_states() {
    let es = eigensystem(&mg(), B_TABLE).unwrap();
    let top = es.vector(StateLabel::new(3, 3)).unwrap();
    let bottom = es.vector(StateLabel::new(3, -3)).unwrap();
    assert_eq!(top[0].abs(), 1.0);
    assert_eq!(bottom[11].abs(), 1.0);
}

#[test]
fn breit_rabi_agrees_with_diagonalisation() {
    let sys = mg();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..100 {
        let b = rng.random_range(0.0..20e-3);
        let es = eigensystem(&sys, b).unwrap();
        for (label, e) in es.labels.iter().zip(&es.energies) {
            let branch = if label.two_f == 6 { Branch::Plus } else { Branch::Minus };
            let oracle = breit_rabi_oracle(&sys, b, label.two_mf, branch).unwrap();
            assert!(
                ((e - oracle) / oracle).abs() < 1e-9,
                "{label} at {b}: {e} vs {oracle}"
            );
        }
    }
}

#[test]
fn breit_rabi_limits() {
    let sys = mg();
    let plus = breit_rabi_oracle(&sys, 0.0, 2, Branch::Plus).unwrap();
    let minus = breit_rabi_oracle(&sys, 0.0, 2, Branch::Minus).unwrap();
    assert!(((plus - minus) - 3.0 * sys.hyperfine_constant).abs() < 1e-3);
    // stretch energies are exactly linear
    let e = |b| breit_rabi_oracle(&sys, b, 6, Branch::Plus).unwrap();
    let slope1 = (e(1e-3) - e(0.0)) / 1e-3;
    let slope2 = (e(2e-2) - e(1e-3)) / 19e-3;
    assert!(((slope1 - slope2) / slope1).abs() < 1e-9);
    assert!(matches!(
        breit_rabi_oracle(&sys, 0.0, 6, Branch::Minus),
        Err(HyperfineError::NotApplicable(_))
    ));
    let spin1 = HyperfineSystem::new(
        1.5,
        1.0,
        1e8,
        2.0,
        0.0,
        NuclearGConvention::BohrMagneton,
        BOHR_MAGNETON_HZ_PER_T,
    )
    .unwrap();
    assert!(matches!(
        breit_rabi_oracle(&spin1, 0.0, 1, Branch::Plus),
        Err(HyperfineError::NotApplicable(_))
    ));
}

#[test]
fn table_frequencies() {
    let sys = mg();
    let cases = [
        (TransitionTag::MW0, 1541.066e6, 5e3),
        (TransitionTag::MW1, 1655.815e6, 5e3),
        (TransitionTag::MW2, 1_762.973_811_6e6, 5e3),
        (TransitionTag::RF0, 55.260e6, 2e3),
    ];
    for (tag, nu, tol) in cases {
        let f = transition_frequency(&sys, B_TABLE, tag.labels()).unwrap();
        assert!((f - nu).abs() < tol, "{tag}: {f}");
    }
}

#[test]
fn table_sensitivities() {
    let sys = mg();
    let per_mt = |tag: TransitionTag| field_sensitivity(&sys, B_TABLE, tag.labels()).unwrap() * 1e-9;
    for (tag, s) in [
        (TransitionTag::MW0, -21.764),
        (TransitionTag::MW1, -10.116),
        (TransitionTag::RF0, 5.381),
    ] {
        assert!(((per_mt(tag) - s) / s).abs() < 5e-3, "{tag}");
    }
    assert!(per_mt(TransitionTag::MW2).abs() < 1e-4);
}

#[test]
fn hellmann_feynman_matches_finite_difference() {
    let sys = mg();
    for tag in TransitionTag::ALL {
        for b in [2e-3, B_TABLE, 15e-3] {
            let hf = field_sensitivity(&sys, b, tag.labels()).unwrap();
            let cd = field_sensitivity_numeric(&sys, b, tag.labels(), 1e-6).unwrap();
            let scale = hf.abs().max(1e6);
            assert!((hf - cd).abs() < 1e-6 * scale, "{tag} at {b}: {hf} vs {cd}");
        }
    }
}

#[test]
fn clock_field_and_curvature() {
    let sys = mg();
    let labels = TransitionTag::MW2.labels();
    let b_star = find_clock_field(&sys, labels, 10.9e-3).unwrap();
    assert!((b_star - 10.9584e-3).abs() < 0.02e-3, "{b_star}");
    assert!(field_sensitivity(&sys, b_star, labels).unwrap().abs() < 1e3);
    let below = field_sensitivity(&sys, b_star - 1e-4, labels).unwrap();
    let above = field_sensitivity(&sys, b_star + 1e-4, labels).unwrap();
    assert!(below.signum() != above.signum());

    let q = quadratic_coefficient(&sys, b_star, labels).unwrap() * 1e-6 * 1e-3;
    assert!(((q - 217.0) / 217.0).abs() < 0.02, "{q} kHz/mT²");

    // parabola through ±0.05 mT
    let h = 0.05e-3;
    let f0 = transition_frequency(&sys, b_star, labels).unwrap();
    let fp = transition_frequency(&sys, b_star + h, labels).unwrap();
    let fm = transition_frequency(&sys, b_star - h, labels).unwrap();
    let q_fit = 0.5 * (fp + fm - 2.0 * f0) / (h * h) * 1e-9;
    assert!(((q_fit - q) / q).abs() < 0.01);

    assert!(matches!(
        find_clock_field(&sys, TransitionTag::MW0.labels(), 10.9e-3),
        Err(HyperfineError::NoRootInBracket { .. })
    ));
}

#[test]
fn curvature_matches_closed_form_second_derivative() {
    // MW0 ends on the stretch state |3,3⟩, so its curvature is that of |2,2⟩ alone
    let sys = mg();
    let c0 = curvature(&sys, B_TABLE, TransitionTag::MW0.labels()).unwrap();
    let i = sys.nuclear_spin();
    let de = sys.hyperfine_constant * (i + 0.5);
    let k = (sys.electronic_g - sys.nuclear_g) * sys.bohr_magneton / de;
    let beta = 4.0 * 2.0 / (2.0 * i + 1.0);
    let x = k * B_TABLE;
    let q = 1.0 + beta * x + x * x;
    let dq = beta + 2.0 * x;
    let expected = -0.5 * de * k * k * (4.0 * q - dq * dq) / (4.0 * q.powf(1.5));
    assert!(((c0 - expected) / expected).abs() < 1e-5, "{c0} vs {expected}");
}

#[test]
fn detuning_curve_is_symmetric_parabola() {
    let sys = mg();
    let labels = TransitionTag::MW2.labels();
    let curve = detuning_curve(&sys, labels, 10.7e-3, 11.2e-3, 51).unwrap();
    let b_star = curve[0].field - curve[0].offset;
    let at = |db: f64| {
        transition_frequency(&sys, b_star + db, labels).unwrap()
            - transition_frequency(&sys, b_star, labels).unwrap()
    };
    let (p, m) = (at(0.2e-3), at(-0.2e-3));
    assert!((p - 8.7e3).abs() < 0.3e3, "{p}");
    assert!(((p - m) / p).abs() < 0.02);
    assert!(curve.iter().all(|pt| pt.detuning >= -1e-3));
}

#[test]
fn labels_stable_under_step_halving() {
    let sys = mg();
    for b in [5e-3, B_TABLE, 20e-3] {
        let coarse = eigensystem_with_step(&sys, b, 2e-4).unwrap();
        let fine = eigensystem_with_step(&sys, b, 1e-4).unwrap();
        assert_eq!(coarse.labels, fine.labels);
    }
}

#[test]
fn degenerate_zero_field_is_rejected() {
    let sys = HyperfineSystem::new(
        2.5,
        0.5,
        0.0,
        2.0,
        0.0,
        NuclearGConvention::BohrMagneton,
        BOHR_MAGNETON_HZ_PER_T,
    )
    .unwrap();
    assert!(matches!(
        eigensystem(&sys, 1e-3),
        Err(HyperfineError::DegenerateLabeling { .. })
    ));
}

#[test]
fn nuclear_magneton_convention_converts() {
    let a = HyperfineSystem::new(
        2.5,
        0.5,
        -596e6,
        2.0,
        1_836.152_673_43,
        NuclearGConvention::NuclearMagneton,
        BOHR_MAGNETON_HZ_PER_T,
    )
    .unwrap();
    assert!((a.nuclear_g - 1.0).abs() < 1e-12);
    assert!(HyperfineSystem::new(
        1.3,
        0.5,
        1.0,
        2.0,
        0.0,
        NuclearGConvention::BohrMagneton,
        1.0
    )
    .is_err());
}

#[test]
fn label_parsing_round_trip() {
    for text in ["|3,1⟩", "|2,-2⟩", "|5/2,-3/2⟩"] {
        let l: StateLabel = text.parse().unwrap();
        assert_eq!(l.to_string(), text);
    }
    assert_eq!("3,1".parse::<StateLabel>().unwrap(), StateLabel::new(3, 1));
    assert!("2,3".parse::<StateLabel>().is_err());
    assert!("5/2,1".parse::<StateLabel>().is_err());
    assert_eq!("mw2".parse::<TransitionTag>().unwrap(), TransitionTag::MW2);
}

#[test]
fn transition_spec_fields() {
    let spec = TransitionSpec::evaluate(&mg(), B_TABLE, TransitionTag::RF0, 286.0).unwrap();
    assert!(spec.frequency > 0.0);
    assert_eq!(spec.upper, StateLabel::new(2, 1));
    assert!(spec.curvature.is_finite());
}
