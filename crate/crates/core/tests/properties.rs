//! Property-based checks of the invariants that do not depend on a specific domain.

use std::f64::consts::PI;

use abpole_core::branch::{fit_power, nearest_odd, split_verdict, Verdict};
use abpole_core::fem::{assemble, reduce, DofMap};
use abpole_core::geometry::{build_domain, generate_mesh, insert_crack, read_mesh, write_mesh, DomainSpec, MeshParams};
use abpole_core::localexp::{extract_expansion, f_alpha, gauge_to_real, ExtractOptions, LocalExpansion, PolarField};
use abpole_core::numeric::{richardson, wrap};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

proptest! {
    #[test]
    fn wrap_lands_in_period(x in -1e3f64..1e3, period in 0.1f64..20.0) {
        let w = wrap(x, period);
        prop_assert!((0.0..period).contains(&w));
        let k = ((x - w) / period).round();
        prop_assert!((x - w - k * period).abs() < 1e-9 * (1.0 + x.abs()));
    }

    #[test]
    fn f_alpha_sign_flips_across_the_crack(alpha in -PI..PI, t in 0.0f64..(2.0 * PI)) {
        let v = f_alpha(alpha, t);
        prop_assert!(v == 1.0 || v == -1.0);
        prop_assert_eq!(v, f_alpha(alpha, t + 2.0 * PI));
    }

    #[test]
    fn gauge_recovers_real_profiles(alpha in -PI..PI, c in prop::collection::vec(-2.0f64..2.0, 4)) {
        // u = e^{it/2} f_α(t) v(t) with a real profile v.
        let angles: Vec<f64> = (0..64).map(|j| (j as f64 + 0.5) * 2.0 * PI / 64.0).collect();
        let profile = |t: f64| c[0] * (t / 2.0).sin() + c[1] * (t / 2.0).cos() + c[2] * (1.5 * t).sin() + c[3] * (1.5 * t).cos();
        let samples: Vec<Complex64> = angles.iter().map(|&t| Complex64::from_polar(1.0, t / 2.0) * f_alpha(alpha, t) * profile(t)).collect();
        let (real, residue) = gauge_to_real(&samples, &angles, alpha, 1e-10).unwrap();
        prop_assert!(residue < 1e-10 * (1.0 + c.iter().map(|x| x.abs()).sum::<f64>()));
        for (v, &t) in real.iter().zip(&angles) {
            prop_assert!((v - profile(t)).abs() < 1e-12);
        }
    }

    #[test]
    fn synthetic_expansions_round_trip(k in prop::sample::select(vec![1u32, 3, 5, 7]), beta in 0.1f64..5.0, frac in 0.0f64..1.0, alpha in -PI..PI) {
        let omega = frac * 4.0 * PI / k as f64;
        let exact = LocalExpansion { k, beta, omega, radii: [0.0, 0.0], fit_residual: 0.0 };
        let field = PolarField(|r: f64, t: f64| exact.model(alpha, r, t));
        let e = extract_expansion(&field, alpha, [0.05, 0.1], &ExtractOptions::default()).unwrap();
        prop_assert_eq!(e.k, k);
        prop_assert!((e.beta - beta).abs() < 1e-9 * beta);
        let period = 4.0 * PI / k as f64;
        let d = wrap(e.omega - omega, period);
        prop_assert!(d.min(period - d) < 1e-9);
    }

    #[test]
    fn richardson_is_exact_for_pure_powers(v in -10.0f64..10.0, c in -10.0f64..10.0, p in 1.0f64..3.0) {
        let (q1, q2) = (0.2f64, 0.1f64);
        let r = richardson(v + c * q1.powf(p), v + c * q2.powf(p), q1, q2, p);
        prop_assert!((r - v).abs() < 1e-10 * (1.0 + v.abs() + c.abs()));
    }

    #[test]
    fn power_fits_recover_odd_laws(k in prop::sample::select(vec![1u32, 3]), c in prop::sample::select(vec![-3.0f64, -0.5, 0.7, 4.0]), l0 in 1.0f64..50.0) {
        let pts: Vec<(f64, f64, f64)> = [0.3, 0.2, 0.14, 0.1, 0.07].iter().map(|&t: &f64| (t, l0 + c * t.powi(k as i32), l0)).collect();
        let f = fit_power(&pts, 1e-12).unwrap();
        prop_assert!((f.k_fit - k as f64).abs() < 1e-8);
        prop_assert_eq!(nearest_odd(f.k_fit), k);
        prop_assert!((f.coeff - c).abs() < 1e-6 * c.abs());
    }

    #[test]
    fn verdicts_are_ordered(gap0 in 0.0f64..1e-3, lambda0 in 1.0f64..100.0, scale in 0.0f64..100.0) {
        let gap = scale * gap0.max(1e-9);
        let (v, threshold) = split_verdict(gap, gap0, lambda0, 1e-9);
        match v {
            Verdict::Split => prop_assert!(gap > threshold),
            Verdict::NoSplit => prop_assert!(gap <= 2.0 * gap0 + 5e-9 * lambda0),
            Verdict::Inconclusive => prop_assert!(gap <= threshold),
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn reduction_preserves_forms_on_random_cracks(alpha in -PI..PI, t in 0.0f64..0.5, seed in 0u64..1000) {
        let d = build_domain(&DomainSpec::disk(1.0)).unwrap();
        let c = insert_crack(&d, alpha, t).unwrap();
        let mesh = generate_mesh(&d, Some(&c), &MeshParams::new(0.15)).unwrap();
        let (k, m) = assemble(&mesh).unwrap();
        let map = DofMap::cracked(&mesh);
        let (kr, mr) = reduce(&k, &m, &map).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..kr.n()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let full = map.expand(&x);
        let scale = 1.0 + k.form(&full, &full).abs();
        prop_assert!((kr.form(&x, &x) - k.form(&full, &full)).abs() < 1e-12 * scale);
        prop_assert!((mr.form(&x, &x) - m.form(&full, &full)).abs() < 1e-12 * (1.0 + m.form(&full, &full)));
        // The expanded vector is anti-periodic across every crack pair.
        for &[p, q] in &mesh.crack_pairs {
            prop_assert!((full[p] + full[q]).abs() < 1e-15);
        }
    }

    #[test]
    fn meshes_round_trip_through_text(alpha in -PI..PI, t in 0.0f64..0.5) {
        let d = build_domain(&DomainSpec::rectangle(1.0, 0.6)).unwrap();
        let c = insert_crack(&d, alpha, t);
        prop_assume!(c.is_ok());
        let mesh = generate_mesh(&d, Some(&c.unwrap()), &MeshParams::new(0.2)).unwrap();
        let mut buf = Vec::new();
        write_mesh(&mesh, &mut buf).unwrap();
        let back = read_mesh(buf.as_slice()).unwrap();
        prop_assert_eq!(&back.vertices, &mesh.vertices);
        prop_assert_eq!(&back.triangles, &mesh.triangles);
        prop_assert_eq!(&back.crack_pairs, &mesh.crack_pairs);
        prop_assert_eq!(back.tip_node, mesh.tip_node);
    }
}
