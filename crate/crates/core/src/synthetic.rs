//! Synthetic emitter tables with a planted nonlinear structure-property signal.
//!
//! Used by tests, benchmarks and the demo; values are plausible in range but
//! carry no chemical meaning.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{
    Dataset, FeatureKind, FeatureSchema, FeatureValue, Sample, Targets, CALC_KR, CALC_WAVELENGTH,
    COORDINATION_LEVELS,
};
use crate::physics::{kr_from_transition, TransitionRecord};

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// `n` samples over the default schema, deterministic in `seed`.
pub fn emitter_dataset(n: usize, seed: u64) -> Dataset {
    let schema = FeatureSchema::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(n);

    for i in 0..n {
        let mut numeric = std::collections::HashMap::<String, f64>::new();
        let calc_lambda = rng.gen_range(420.0..650.0);
        let f = 10f64.powf(rng.gen_range(-4.0..-2.0));
        let calc_kr = kr_from_transition(&TransitionRecord::from_wavelength(calc_lambda, f).unwrap());
        numeric.insert(CALC_WAVELENGTH.into(), calc_lambda);
        numeric.insert(CALC_KR.into(), calc_kr);
        numeric.insert("f".into(), f);
        numeric.insert("nu".into(), 1e7 / calc_lambda + 150.0 * normal(&mut rng));

        let mut lengths: Vec<f64> = (0..4).map(|_| rng.gen_range(1.95..2.15)).collect();
        lengths.sort_by(f64::total_cmp);
        for (k, l) in lengths.iter().enumerate() {
            numeric.insert(format!("coor_bond_length{}", k + 1), *l);
            numeric.insert(format!("rho_coor{}", k + 1), rng.gen_range(0.08..0.14));
        }
        numeric.insert("rho_Pt".into(), rng.gen_range(0.9..1.3));
        let h_t1_s0: f64 = rng.gen_range(0.0..400.0);
        numeric.insert("H_T1_S0".into(), h_t1_s0);
        numeric.insert("H_T1_S1".into(), rng.gen_range(0.0..900.0));
        for s in schema.excited_state_labels() {
            numeric.insert(format!("R_EH_{s}_a"), rng.gen_range(0.5..4.0));
            numeric.insert(format!("R_EH_{s}_b"), rng.gen_range(0.5..4.0));
            numeric.insert(format!("LAMBDA_{s}"), rng.gen_range(0.2..0.8));
            numeric.insert(format!("CT_{s}"), rng.gen_range(0.0..1.0));
        }
        let homo: f64 = rng.gen_range(-5.8..-4.8);
        let lumo: f64 = rng.gen_range(-2.6..-1.6);
        numeric.insert("HOMO".into(), homo);
        numeric.insert("LUMO".into(), lumo);
        numeric.insert("mu".into(), rng.gen_range(0.0..10.0));
        numeric.insert("refractive_index".into(), [1.42, 1.45, 1.50][rng.gen_range(0..3)]);

        let mut values = Vec::with_capacity(schema.features().len());
        for def in schema.features() {
            values.push(Some(match &def.kind {
                FeatureKind::Numeric => FeatureValue::Numeric(numeric[&def.name]),
                FeatureKind::Categorical { .. } => {
                    FeatureValue::Level(COORDINATION_LEVELS[rng.gen_range(0..COORDINATION_LEVELS.len())].to_string())
                }
            }));
        }

        let ct_t1 = numeric["CT_T1"];
        let ct_s1 = numeric["CT_S1"];
        let wavelength = 0.9 * calc_lambda + 60.0 + 15.0 * (3.0 * (homo + 5.3)).sin() + 30.0 * (ct_t1 - 0.5).powi(2)
            + 3.0 * normal(&mut rng);
        let log_kr = 0.5 * calc_kr.log10() + 2.4 + 0.3 * (h_t1_s0 / 200.0 - 1.0).tanh() + 0.08 * normal(&mut rng);
        let z = 2.0 * (lumo - homo - 3.2) + 1.5 * (ct_s1 - 0.5) + 0.004 * (h_t1_s0 - 200.0) + 0.3 * normal(&mut rng);
        let plqy = 1.0 / (1.0 + (-z).exp());

        samples.push(Sample {
            id: format!("Pt{:04}", i + 1),
            values,
            targets: Targets {
                wavelength_nm: Some(wavelength),
                kr_per_s: Some(10f64.powf(log_kr)),
                plqy: Some(plqy),
            },
        });
    }
    Dataset::new(schema, samples).expect("synthetic samples satisfy the schema")
}
