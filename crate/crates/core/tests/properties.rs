use fibercavity::clicks::{self, Channel, ClickProbabilities};
use fibercavity::multiplex::{self, MultiplexPlan};
use fibercavity::presets;
use fibercavity::readout::{self, ControlWindow};
use proptest::prelude::*;

fn decaying_curve(len: usize, lifetime: f64, eta0: f64) -> Vec<f64> {
    (1..=len).map(|t| eta0 * (-(t as f64) / lifetime).exp()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn window_bounded_by_twice_amplitude(a in 0.0f64..3.0, tau in 1.0f64..30.0, zeta in 0.1f64..10.0, t in -200.0f64..200.0) {
        let w = ControlWindow::from_amplitude(a, tau, zeta);
        let x = w.xi(t);
        prop_assert!(x >= 0.0);
        prop_assert!(x <= 2.0 * a + 1e-12);
        prop_assert!((x - w.xi(-t)).abs() < 1e-12);
    }

    #[test]
    fn window_depends_on_time_over_duration(a in 0.1f64..3.0, tau in 1.0f64..30.0, zeta in 0.1f64..10.0, u in -5.0f64..5.0, k in 0.2f64..5.0) {
        let w = ControlWindow::from_amplitude(a, tau, zeta);
        let stretched = ControlWindow::from_amplitude(a, tau * k, zeta);
        prop_assert!((w.xi(u * tau) - stretched.xi(u * tau * k)).abs() < 1e-12);
    }

    #[test]
    fn readout_never_increases_with_delay(lifetime in 5.0f64..300.0, delta in 0.0f64..0.3, psi2 in 0.0f64..0.2) {
        let mut raw = presets::primary();
        raw.cavity.memory_lifetime_cycles = lifetime;
        raw.cavity.mismatch_delta_ps_per_cycle = delta;
        raw.cavity.dispersion_psi2_ps2_per_cycle = psi2;
        let cfg = raw.validate().unwrap();
        let curve = readout::readout_curve(&cfg, 40).unwrap();
        for w in curve.windows(2) {
            prop_assert!(w[1].total <= w[0].total + 1e-12);
        }
    }

    #[test]
    fn output_grows_with_herald_probability_and_readout(k in 1u32..60, p in 0.0f64..0.5, dp in 0.0f64..0.5, lifetime in 2.0f64..200.0, boost in 1.0f64..1.5) {
        let curve = decaying_curve(80, lifetime, 0.6);
        let plan = MultiplexPlan { k, bin_spacing: 1, p_herald: p, readout_curve: curve.clone(), switch_latency: 0 };
        let base = multiplex::multiplex_success(&plan).unwrap().p_out;
        let more_p = multiplex::multiplex_success(&MultiplexPlan { p_herald: (p + dp).min(1.0), ..plan.clone() }).unwrap().p_out;
        let better: Vec<f64> = curve.iter().map(|e| (e * boost).min(1.0)).collect();
        let more_eta = multiplex::multiplex_success(&MultiplexPlan { readout_curve: better, ..plan }).unwrap().p_out;
        prop_assert!(more_eta >= base - 1e-15);
        // first success is not monotone in p in general; it is while K·p ≤ 1 − p
        let q = (p + dp).min(1.0);
        if k as f64 * q <= 1.0 - q {
            prop_assert!(more_p >= base - 1e-15);
        }
    }

    #[test]
    fn enhancement_at_least_one_when_bins_compete(k in 1u32..80, p in 0.001f64..0.05, lifetime in 50.0f64..2000.0) {
        // condition: η(T_k) ≥ p·η(T_K) for every bin
        let curve = decaying_curve(100, lifetime, 0.8);
        prop_assume!(curve[k as usize - 1] >= p * curve[0]);
        let plan = MultiplexPlan { k, bin_spacing: 1, p_herald: p, readout_curve: curve, switch_latency: 0 };
        let o = multiplex::multiplex_success(&plan).unwrap();
        prop_assert!(o.enhancement >= 1.0 - 1e-12);
        prop_assert!((o.contributions.iter().sum::<f64>() - o.p_out).abs() <= 1e-15);
    }

    #[test]
    fn klyshko_ignores_the_monitor_arm_for_single_pairs(eta_h in 0.05f64..1.0, eta_s in 0.05f64..1.0, scale in 0.1f64..1.0) {
        // exactly one pair per trigger, no darks: p(H∧S)/p(S) = η_h for any η_s
        let klyshko = |es: f64| {
            let mut patterns = [0.0; 16];
            patterns[0b11] = eta_h * es;
            patterns[0b01] = eta_h * (1.0 - es);
            patterns[0b10] = (1.0 - eta_h) * es;
            patterns[0] = (1.0 - eta_h) * (1.0 - es);
            clicks::klyshko(&ClickProbabilities { patterns }).unwrap()
        };
        prop_assert!((klyshko(eta_s) - eta_h).abs() < 1e-12);
        prop_assert!((klyshko(eta_s * scale) - eta_h).abs() < 1e-12);
    }

    #[test]
    fn uncorrelated_background_subtracts_to_nothing(ph in 0.001f64..0.1, ps in 0.001f64..0.1, bh in 0.0f64..0.0009, bs in 0.0f64..0.0009) {
        // independent channels: after subtraction the coincidence is pure accidentals of the signal part
        let independent = |a: f64, b: f64| {
            let mut patterns = [0.0; 16];
            patterns[0b11] = a * b;
            patterns[0b01] = a * (1.0 - b);
            patterns[0b10] = (1.0 - a) * b;
            patterns[0] = (1.0 - a) * (1.0 - b);
            ClickProbabilities { patterns }
        };
        let run = independent(ph, ps);
        let background = independent(bh, bs);
        let g2 = clicks::g2_cross_subtracted(&run, &background, Channel::H, Channel::S).unwrap();
        prop_assert!((g2 - 1.0).abs() < 1e-9, "{}", g2);
    }
}
