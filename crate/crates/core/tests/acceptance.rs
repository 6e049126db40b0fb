//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line; the
//! process exits non-zero if any criterion fails.

use std::f64::consts::PI;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use ionfield::ac_zeeman::{infer_bosc, spatial_shift_slope};
use ionfield::analysis::{fit_exp_decay, fit_quadratic_origin, fit_sinusoid, fit_sqrt_law};
use ionfield::config::Config;
use ionfield::dynamics::{
    calibrate_quasi_static, coherence_grid, echo_sequence, evolve_shot, ramsey_contrast_scan, stabilization_loop,
    CoherenceResult, NoiseModel, PulseModel, PulseSequence, RamseyScan, Segment, ShotNoise, NORM_TOLERANCE,
};
use ionfield::hyperfine::{
    breit_rabi_oracle, eigensystem, find_clock_field, quadratic_coefficient, Branch, TransitionTag,
};
use ionfield::magnetics::{assembly_field_3d, gradient_bound, homogeneity_dsv, tuning_slope, Vec3};

type Checks = Vec<(bool, String)>;

fn within(value: f64, target: f64, rel: f64) -> bool {
    (value - target).abs() <= rel * target.abs()
}

fn check(checks: &mut Checks, ok: bool, what: String) {
    checks.push((ok, what));
}

fn runtime(checks: &mut Checks, elapsed: Duration, limit: f64) {
    let s = elapsed.as_secs_f64();
    check(checks, s < limit, format!("runtime {s:.2} s < {limit} s"));
}

fn magnetics(cfg: &Config) -> Checks {
    let mut c = Checks::new();
    let start = Instant::now();
    let a = cfg.assembly().unwrap();
    let b0 = assembly_field_3d(&Vec3::zeros(), &a).unwrap().norm();
    check(&mut c, within(b0, 10.9e-3, 0.05), format!("centre field {:.4} mT", b0 * 1e3));
    let slope = tuning_slope(&a).unwrap().abs();
    check(&mut c, within(slope, 0.11e-3 / 1e-3, 0.10), format!("tuning slope {:.4} mT/mm", slope));
    let dsv = homogeneity_dsv(&a, 1e-6).unwrap();
    check(&mut c, within(dsv.d_dsv, 150e-6, 0.20), format!("d_dsv {:.1} um", dsv.d_dsv * 1e6));
    let g = gradient_bound(&a, 2e-3).unwrap();
    // 1 nT/um = 1e-3 T/m
    check(&mut c, g <= 11e-3, format!("gradient over 2 mm {:.3} nT/um", g / 1e-3));
    runtime(&mut c, start.elapsed(), 60.0);
    c
}

fn hyperfine(cfg: &Config) -> Checks {
    let mut c = Checks::new();
    let start = Instant::now();
    let sys = cfg.hyperfine_system().unwrap();
    let b = 10.9584e-3;
    let table = [
        (TransitionTag::MW0, 1541.066e6, -21.764),
        (TransitionTag::MW1, 1655.815e6, -10.116),
        (TransitionTag::MW2, 1_762.973_811_6e6, 0.0),
        (TransitionTag::RF0, 55.260e6, 5.381),
    ];
    for (tag, nu, s) in table {
        let t = cfg.transition(tag, b).unwrap();
        check(
            &mut c,
            (t.frequency - nu).abs() <= 5e3,
            format!("{tag} {:.6} MHz", t.frequency * 1e-6),
        );
        // Hz/T to MHz/mT
        let s_mhz = t.sensitivity * 1e-9;
        let ok = if s == 0.0 { s_mhz.abs() < 1e-3 } else { within(s_mhz, s, 0.005) };
        check(&mut c, ok, format!("{tag} dnu/dB {s_mhz:.4} MHz/mT"));
    }
    let labels = TransitionTag::MW2.labels();
    // Hz/T^2 to kHz/mT^2
    let q = quadratic_coefficient(&sys, b, labels).unwrap() * 1e-9;
    check(&mut c, within(q, 217.0, 0.02), format!("MW2 quadratic {q:.2} kHz/mT^2"));
    let bc = find_clock_field(&sys, labels, b).unwrap();
    check(
        &mut c,
        (bc - 10.958e-3).abs() <= 0.02e-3,
        format!("clock field {:.5} mT", bc * 1e3),
    );
    runtime(&mut c, start.elapsed(), 5.0);
    c
}

fn breit_rabi(cfg: &Config) -> Checks {
    let sys = cfg.hyperfine_system().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut worst = 0.0f64;
    let mut levels = 0;
    for _ in 0..100 {
        let b = rng.random_range(0.0..20e-3);
        let es = eigensystem(&sys, b).unwrap();
        for (label, e) in es.labels.iter().zip(&es.energies) {
            let branch = if label.two_f == sys.two_i() as i32 + 1 { Branch::Plus } else { Branch::Minus };
            let o = breit_rabi_oracle(&sys, b, label.two_mf, branch).unwrap();
            worst = worst.max(((e - o) / o).abs());
            levels += 1;
        }
    }
    vec![(
        levels == 1200 && worst < 1e-9,
        format!("{levels} level energies, worst relative error {worst:.2e}"),
    )]
}

fn ac_zeeman(cfg: &Config) -> Checks {
    let mut c = Checks::new();
    let start = Instant::now();
    // Hz/T^2 to Hz/uT^2
    let s = cfg.acz_sensitivity().unwrap().abs() * 1e-12;
    check(&mut c, within(s, 4.783, 0.05), format!("MW2 a.c. sensitivity {s:.4} Hz/uT^2"));
    let b = infer_bosc(20.77e-3, 79.5, 4.783e12).unwrap();
    check(
        &mut c,
        (b - 5.239e-6).abs() <= 0.01e-6,
        format!("B_osc from 20.77 mHz/V^2 at 79.5 V: {:.4} uT", b * 1e6),
    );
    // 0.262 uT/um^1/2 in T/m^1/2
    let k = 0.262e-6 / 1e-3;
    // Hz/m to Hz/um
    let g = spatial_shift_slope(s * 1e12, k) * 1e-6;
    check(&mut c, within(g, 0.327, 0.05), format!("spatial slope {g:.4} Hz/um"));
    runtime(&mut c, start.elapsed(), 5.0);
    c
}

fn dynamics(cfg: &Config) -> Checks {
    let mut c = Checks::new();
    let start = Instant::now();
    let b = cfg.operating_point.field.si();
    let mw2 = cfg.transition(TransitionTag::MW2, b).unwrap();
    let grid: Vec<f64> = (1..=8).map(|k| 1.5 * k as f64 / 8.0).collect();
    let sigma = calibrate_quasi_static(&mw2, 6.6, &grid).unwrap();
    let noise = cfg.noise_model(sigma);
    let scan = |tag: TransitionTag, seed: u64| -> CoherenceResult {
        let t = cfg.transition(tag, b).unwrap();
        let scan = RamseyScan {
            t_grid: coherence_grid(&t, &noise, 8, 1.5),
            phases: 12,
            shots: 200,
            float_baseline: true,
            pulse_model: PulseModel::Instantaneous,
            seed,
        };
        ramsey_contrast_scan(&t, &noise, &scan).unwrap()
    };
    let r2 = scan(TransitionTag::MW2, 1);
    check(
        &mut c,
        (5.7..=7.5).contains(&r2.tau),
        format!("MW2 tau {:.3} +- {:.3} s", r2.tau, r2.tau_err),
    );

    let linear: Vec<CoherenceResult> = [TransitionTag::MW0, TransitionTag::MW1, TransitionTag::RF0]
        .into_iter()
        .zip(2..)
        .map(|(tag, seed)| scan(tag, seed))
        .collect();
    let ratio = |r: &CoherenceResult| (r.gamma / r.sensitivity.abs(), r.gamma_err / r.sensitivity.abs());
    for i in 0..linear.len() {
        for j in i + 1..linear.len() {
            let (a, sa) = ratio(&linear[i]);
            let (b, sb) = ratio(&linear[j]);
            let comb = sa.hypot(sb);
            check(
                &mut c,
                (a - b).abs() <= 2.0 * comb,
                format!(
                    "Gamma/|s| {} vs {}: {:.4e} vs {:.4e} rad/s per Hz/T ({:.2} combined sigma)",
                    linear[i].transition,
                    linear[j].transition,
                    a,
                    b,
                    (a - b).abs() / comb
                ),
            );
        }
    }

    // identical constant offsets in both arms refocus to chi = 0
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let static_noise = NoiseModel::quasi_static(sigma);
    let mut worst_echo = 0.0f64;
    for t_p in [1e-3, 0.1, 0.6, 1.2] {
        for offset in [-250.0, 3.7, 131.3] {
            for (final_phase, expect) in [(0.0, 1.0), (PI / 2.0, 0.5)] {
                let seq = echo_sequence(1.0, t_p, offset, offset, final_phase, 1);
                let mut shot = ShotNoise::new(&static_noise, &mut rng);
                let p = evolve_shot(&seq, &mw2, &mut shot, None).unwrap().survival;
                worst_echo = worst_echo.max((p - expect).abs());
            }
        }
    }
    check(&mut c, worst_echo <= 1e-12, format!("echo phase residual {worst_echo:.1e}"));

    let mw0 = cfg.transition(TransitionTag::MW0, b).unwrap();
    let mut composite = noise;
    composite.ou_correlation_time = 1e-5;
    let mut worst_norm = 0.0f64;
    for _ in 0..200 {
        let segments: Vec<Segment> = (0..rng.random_range(1..40))
            .map(|_| {
                if rng.random_bool(0.5) {
                    Segment::Pulse {
                        area: rng.random_range(0.0..4.0 * PI),
                        phase: rng.random_range(0.0..2.0 * PI),
                        rabi_rate: 2.0 * PI * mw0.coupling_strength,
                    }
                } else {
                    Segment::Wait {
                        duration: rng.random_range(0.0..2e-5),
                    }
                }
            })
            .collect();
        let seq = PulseSequence::new(segments, 1, PulseModel::Finite);
        let mut shot = ShotNoise::new(&composite, &mut rng);
        let out = evolve_shot(&seq, &mw0, &mut shot, None).unwrap();
        worst_norm = worst_norm.max((out.norm - 1.0).abs());
    }
    check(
        &mut c,
        worst_norm <= NORM_TOLERANCE,
        format!("norm deviation {worst_norm:.1e}"),
    );
    runtime(&mut c, start.elapsed(), 180.0);
    c
}

fn stabilisation(cfg: &Config) -> Checks {
    let mut c = Checks::new();
    let start = Instant::now();
    let b = cfg.operating_point.field.si();
    let proxy = cfg.transition(TransitionTag::MW0, b).unwrap();
    let noise = cfg.noise_model(0.0);
    let base = cfg.stabilization();
    let open = stabilization_loop(
        &ionfield::dynamics::StabilizationConfig {
            closed_loop: false,
            ..base.clone()
        },
        &proxy,
        &noise,
    )
    .unwrap();
    let last = open.samples.last().unwrap();
    let hours = last.t / 3600.0;
    check(
        &mut c,
        within(open.open_loop_drift_per_hour, 1e-4, 1e-9)
            && (last.relative_deviation - 1e-4 * hours).abs() < 1e-5,
        format!(
            "open-loop drift {:.3e}/h, {:.3e} after {hours} h",
            open.open_loop_drift_per_hour, last.relative_deviation
        ),
    );
    let step = base.coil.current_resolution;
    for interval in [300.0, 600.0, 1200.0] {
        let cfg_i = ionfield::dynamics::StabilizationConfig { interval, ..base.clone() };
        let tr = stabilization_loop(&cfg_i, &proxy, &noise).unwrap();
        let quantised = tr.corrections.iter().all(|k| {
            let n = k.current / step;
            (n - n.round()).abs() < 1e-6
        });
        check(
            &mut c,
            tr.rms_relative_deviation <= 2e-5 && quantised,
            format!(
                "closed loop at {interval} s: rms {:.2e}, max {:.2e}, {} steps on the {:.0e} A grid",
                tr.rms_relative_deviation,
                tr.max_relative_deviation,
                tr.corrections.iter().filter(|k| k.applied).count(),
                step
            ),
        );
    }
    runtime(&mut c, start.elapsed(), 10.0);
    c
}

fn fitters() -> Checks {
    let mut c = Checks::new();
    let phases: Vec<f64> = (0..20).map(|i| 2.0 * PI * i as f64 / 20.0).collect();
    let fringe = |p: f64, contrast: f64| 0.5 - 0.5 * contrast * (p - 0.4).cos();
    let y: Vec<f64> = phases.iter().map(|&p| fringe(p, 0.948)).collect();
    let v = fit_sinusoid(&phases, &y, &[0.01; 20], true).unwrap().value("contrast");
    check(&mut c, within(v, 0.948, 1e-8), format!("contrast {v:.12}"));

    let t: Vec<f64> = (0..8).map(|i| 0.2 + 1.2 * i as f64).collect();
    let y: Vec<f64> = t.iter().map(|t| 0.9 * (-t / 6.6f64).exp()).collect();
    let v = fit_exp_decay(&t, &y, &[0.01; 8]).unwrap().value("tau");
    check(&mut c, within(v, 6.6, 1e-8), format!("decay {v:.12} s"));

    let u: Vec<f64> = (1..=9).map(|i| 10.0 * i as f64).collect();
    let y: Vec<f64> = u.iter().map(|u| 20.77e-3 * u * u).collect();
    let v = fit_quadratic_origin(&u, &y, &[1.0; 9], false).unwrap().value("a");
    check(&mut c, within(v, 20.77e-3, 1e-8), format!("quadratic {:.12} mHz/V^2", v * 1e3));

    let k = 0.262e-6 / 1e-3;
    let ys: Vec<f64> = (0..10).map(|i| i as f64 * 1e-6).collect();
    let bs: Vec<f64> = ys.iter().map(|y| k * y.sqrt()).collect();
    let v = fit_sqrt_law(&ys, &bs, &[1e-9; 10]).unwrap().value("k");
    check(&mut c, within(v, k, 1e-8), format!("sqrt law {:.12} uT/um^1/2", v * 1e3));

    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut coverage = |name: &str, hit: &mut dyn FnMut(&mut ChaCha8Rng) -> bool| {
        let n = 500;
        let f = (0..n).filter(|_| hit(&mut rng)).count() as f64 / n as f64;
        check(&mut c, (0.62..=0.74).contains(&f), format!("{name} 1-sigma coverage {f:.3}"));
    };
    let gauss = |rng: &mut ChaCha8Rng, s: f64| Normal::new(0.0, s).unwrap().sample(rng);
    coverage("contrast", &mut |rng| {
        let y: Vec<f64> = phases.iter().map(|&p| fringe(p, 0.948) + gauss(rng, 0.02)).collect();
        let f = fit_sinusoid(&phases, &y, &[0.02; 20], true).unwrap();
        (f.value("contrast") - 0.948).abs() <= f.sigma("contrast")
    });
    coverage("decay", &mut |rng| {
        let y: Vec<f64> = t.iter().map(|t| 0.9 * (-t / 6.6f64).exp() + gauss(rng, 0.01)).collect();
        let f = fit_exp_decay(&t, &y, &[0.01; 8]).unwrap();
        (f.value("tau") - 6.6).abs() <= f.sigma("tau")
    });
    coverage("quadratic", &mut |rng| {
        let y: Vec<f64> = u.iter().map(|u| 20.77e-3 * u * u + gauss(rng, 2.0)).collect();
        let f = fit_quadratic_origin(&u, &y, &[2.0; 9], false).unwrap();
        (f.value("a") - 20.77e-3).abs() <= f.sigma("a")
    });
    coverage("sqrt law", &mut |rng| {
        let b: Vec<f64> = ys.iter().map(|y| k * y.sqrt() + gauss(rng, 2e-9)).collect();
        let f = fit_sqrt_law(&ys, &b, &[2e-9; 10]).unwrap();
        (f.value("k") - k).abs() <= f.sigma("k")
    });
    c
}

fn run_cli(dir: &Path, tag: &str, args: &[&str]) -> (Vec<u8>, Vec<u8>, Option<Vec<u8>>) {
    let table = dir.join(format!("{tag}.csv"));
    let summary = dir.join(format!("{tag}.json"));
    let direct = Command::new(env!("CARGO_BIN_EXE_ionfield"))
        .args(args)
        .env("RUST_LOG", "off")
        .output()
        .unwrap();
    assert!(direct.status.success(), "{args:?}: {}", String::from_utf8_lossy(&direct.stderr));
    let files = Command::new(env!("CARGO_BIN_EXE_ionfield"))
        .args(args)
        .arg("--output")
        .arg(&table)
        .arg("--summary")
        .arg(&summary)
        .env("RUST_LOG", "off")
        .output()
        .unwrap();
    assert!(files.status.success());
    // subcommands without fit results write no summary
    (direct.stdout, std::fs::read(table).unwrap(), std::fs::read(summary).ok())
}

fn determinism() -> Checks {
    let dir = tempfile::tempdir().unwrap();
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../config/default.toml");
    let config = config.to_str().unwrap();
    let commands: [&[&str]; 8] = [
        &["field-map", "--axis", "z"],
        &["dsv"],
        &["transitions"],
        &["clock-field", "--transition", "MW2"],
        &["sense-acz"],
        &["ramsey-sim", "--seed", "5"],
        &["echo-sim", "--seed", "5"],
        &["stabilize-sim", "--seed", "5"],
    ];
    commands
        .iter()
        .map(|cmd| {
            let args: Vec<&str> = ["--config", config].iter().chain(cmd.iter()).copied().collect();
            let a = run_cli(dir.path(), &format!("{}-a", cmd[0]), &args);
            let b = run_cli(dir.path(), &format!("{}-b", cmd[0]), &args);
            (
                a == b && a.0 == a.1,
                format!("{} identical across runs ({} table bytes)", cmd[0], a.0.len()),
            )
        })
        .collect()
}

fn main() {
    let cfg = Config::default();
    let criteria: Vec<(&str, Checks)> = vec![
        ("magnetics", magnetics(&cfg)),
        ("hyperfine at the operating field", hyperfine(&cfg)),
        ("Breit-Rabi oracle", breit_rabi(&cfg)),
        ("a.c. Zeeman", ac_zeeman(&cfg)),
        ("dynamics", dynamics(&cfg)),
        ("stabilisation", stabilisation(&cfg)),
        ("fitters", fitters()),
        ("CLI determinism", determinism()),
    ];
    let mut failed = 0;
    for (n, (name, checks)) in criteria.iter().enumerate() {
        let ok = checks.iter().all(|(ok, _)| *ok);
        let detail: Vec<String> = checks
            .iter()
            .map(|(ok, what)| if *ok { what.clone() } else { format!("FAILED {what}") })
            .collect();
        println!(
            "{} criterion {}: {name}: {}",
            if ok { "PASS" } else { "FAIL" },
            n + 1,
            detail.join("; ")
        );
        failed += usize::from(!ok);
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
