use digeco::recognition::*;
use digeco::rng::SeededRng;
use digeco::{description_difference, SemanticDescription};
use proptest::prelude::*;

#[test]
fn mlp_agrees_with_distance_on_held_out_variants() {
    for seed in 0..3 {
        let mut rng = SeededRng::new(seed).stream(&[]);
        let own = SemanticDescription::for_agent(&[(3, 40), (9, 12), (27, 88), (60, 50)]).unwrap();
        let set = TrainingSet::with_variants(&own, DEFAULT_VARIANTS, &mut rng);
        let rec = MlpRecognizer::train(&set, DEFAULT_EPOCHS, DEFAULT_LEARNING_RATE, &mut rng).unwrap();
        assert!(rec.recognize(&own));
        let held = TrainingSet::with_variants(&own, 200, &mut rng);
        let agree = held.examples.iter().filter(|(d, t)| rec.recognize(d) == (*t == 1.0)).count();
        assert!(agree as f64 >= 0.9 * held.examples.len() as f64, "seed {seed}: {agree}");
    }
}

#[test]
fn training_reduces_error() {
    let mut rng = SeededRng::new(9).stream(&[]);
    let own = SemanticDescription::for_agent(&[(5, 50), (6, 60), (7, 70)]).unwrap();
    let data = TrainingSet::with_variants(&own, 20, &mut rng).encoded();
    let mut net = Mlp::for_inputs(data[0].0.len(), DEFAULT_LEARNING_RATE, &mut rng);
    let start = net.mse(&data).unwrap();
    let hist = net.train(&data, 20, &mut rng).unwrap();
    assert!(*hist.last().unwrap() < start);
}

fn description() -> impl Strategy<Value = SemanticDescription> {
    prop::collection::btree_map(1u32..=100, 1u32..=100, 3..=6)
        .prop_map(|m| SemanticDescription::for_agent(&m.into_iter().collect::<Vec<_>>()).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn preprocessing_is_injective_within_shape(a in description(), b in description()) {
        let width = 12;
        prop_assert_eq!(preprocess(&a, width) == preprocess(&b, width), a == b);
    }

    #[test]
    fn distance_recognizers_accept_self(a in description()) {
        let distance = DistanceRecognizer { own: a.clone() };
        let control = FitnessControlRecognizer { own: a.clone() };
        prop_assert!(distance.recognize(&a));
        prop_assert!(control.recognize(&a));
    }

    #[test]
    fn distance_recognizer_matches_threshold(a in description(), b in description()) {
        let rec = DistanceRecognizer { own: a.clone() };
        prop_assert_eq!(rec.recognize(&b), description_difference(&a, &b) < VARIANT_DIFFERENCE);
    }

    #[test]
    fn updates_keep_output_in_unit_interval(seed in 0u64..1000, t in 0.0f64..=1.0) {
        let mut rng = SeededRng::new(seed).stream(&[]);
        let mut net = Mlp::new(4, 3, 0.5, &mut rng);
        let x = [1.0, 0.0, 1.0, 1.0];
        for _ in 0..50 {
            net.step(&x, t);
            let y = net.forward(&x).unwrap();
            prop_assert!(y > 0.0 && y < 1.0);
        }
    }
}
