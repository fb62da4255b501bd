use fins_cli::config::{DensityInit, RunConfig, VelocityInit};
use proptest::prelude::*;

proptest! {
    #[test]
    fn canonical_text_round_trips(
        n in prop::sample::select(vec![16usize, 32, 64, 128]),
        alpha in 0.5f64..0.99,
        nu in 1e-3f64..10.0,
        dt in 1e-5f64..1e-2,
        t_final in 0.0f64..1.0,
        amplitude in 0.0f64..2.0,
        seed in any::<u64>(),
        bump in any::<bool>(),
    ) {
        let cfg = RunConfig {
            n,
            alpha,
            nu,
            dt,
            t_final,
            seed,
            velocity: VelocityInit::Random { amplitude, modes: (1.0, 3.0) },
            density: if bump { DensityInit::Bump { amplitude: 0.1, width: 0.5 } } else { DensityInit::Uniform },
            ..RunConfig::default()
        };
        let back = RunConfig::parse_str(&cfg.to_text()).unwrap();
        prop_assert_eq!(back.to_text(), cfg.to_text());
        prop_assert_eq!(back.seed, seed);
        prop_assert_eq!(back.alpha, alpha);
    }

    #[test]
    fn garbage_lines_never_panic(text in "[a-z_ =0-9.#\n-]{0,200}") {
        let _ = RunConfig::parse_str(&text);
    }
}
