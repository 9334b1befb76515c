mod common;

use std::f64::consts::FRAC_PI_2;

use common::*;
use hexpepo_core::pauli::{
    back_propagate, back_propagate_with, layerwise_conjugate, observable_library, z62_closed_form,
    PauliString, PauliSum, PauliTerm, PropagationLimits, TruncationPolicy,
};
use hexpepo_core::{CircuitSpec, Error, Lattice, Layer, Pauli};
use proptest::prelude::*;

fn ibm() -> Lattice {
    Lattice::ibm127().unwrap()
}

fn exact(obs: &PauliSum, theta: f64, steps: usize, extra_rx: bool, lat: &Lattice) -> PauliSum {
    let c = CircuitSpec::new(theta, steps, extra_rx).unwrap();
    back_propagate(obs, &c, lat, TruncationPolicy::None).unwrap()
}

#[test]
fn zero_steps_returns_observable() {
    let z62 = observable_library("Z62").unwrap();
    assert_eq!(exact(&z62, 0.7, 0, false, &ibm()), z62);
}

#[test]
fn z62_closed_forms_three_and_four_steps() {
    let lat = ibm();
    let z62 = observable_library("Z62").unwrap();
    for theta in theta_grid(33) {
        for steps in [3, 4] {
            let v = exact(&z62, theta, steps, false, &lat).zero_state_expectation();
            let expect = z62_closed_form(theta, steps).unwrap();
            assert!((v - expect).abs() <= 1e-12, "T={steps} θ={theta}: {v} vs {expect}");
        }
    }
}

fn four_step_layers(theta: f64) -> Vec<Layer> {
    let mut layers = Vec::new();
    for _ in 0..3 {
        layers.push(Layer::Rzz);
        layers.push(Layer::Rx(theta));
    }
    layers.push(Layer::Rzz);
    layers
}

#[test]
fn z62_four_step_operator_matches_reference_expansion() {
    let lat = ibm();
    let z62 = observable_library("Z62").unwrap();
    for theta in [0.13, 0.6, 1.1, 1.4] {
        let ours = layerwise_conjugate(&z62, &four_step_layers(theta), &lat).unwrap();
        let reference = z62_four_step_operator(theta);
        assert!(same_strings(&ours, &reference), "θ={theta}");
        assert!(max_coeff_diff(&ours, &reference) <= 1e-12, "θ={theta}");
        // one more R_X layer and the zero-state closure give the closed form
        let full = layerwise_conjugate(&ours, &[Layer::Rx(theta)], &lat).unwrap();
        let expect = z62_closed_form(theta, 4).unwrap();
        assert!((full.zero_state_expectation() - expect).abs() <= 1e-12);
    }
}

#[test]
fn w10_bracket_term_for_term() {
    let lat = ibm();
    let w10 = observable_library("W10").unwrap();
    for theta in [0.2, 0.77, 1.3] {
        let ours = layerwise_conjugate(&w10, &[Layer::Rzz, Layer::Rx(theta), Layer::Rzz], &lat).unwrap();
        let reference = w10_bracket(theta);
        assert_eq!(ours.len(), 32);
        assert!(same_strings(&ours, &reference));
        assert!(max_coeff_diff(&ours, &reference) <= 1e-12);
    }
}

#[test]
fn w17_single_rzz_layer() {
    let w17 = observable_library("W17").unwrap();
    let ours = layerwise_conjugate(&w17, &[Layer::Rzz], &ibm()).unwrap();
    assert_eq!(ours, w17_after_rzz());
}

#[test]
fn w17tilde_bracket_term_for_term() {
    let lat = ibm();
    let w = observable_library("W17tilde").unwrap();
    for theta in [0.3, 0.9] {
        let ours = layerwise_conjugate(&w, &[Layer::Rx(theta), Layer::Rzz], &lat).unwrap();
        let reference = w17tilde_bracket(theta);
        assert!(same_strings(&ours, &reference), "{} vs {} strings", ours.len(), reference.len());
        assert!(max_coeff_diff(&ours, &reference) <= 1e-12);
    }
}

#[test]
fn empty_layer_sequence_is_identity() {
    let w10 = observable_library("W10").unwrap();
    assert_eq!(layerwise_conjugate(&w10, &[], &ibm()).unwrap(), w10);
    let z62 = observable_library("Z62").unwrap();
    assert_eq!(layerwise_conjugate(&z62, &[Layer::Rzz], &ibm()).unwrap(), z62);
}

#[test]
fn norm_is_conserved_after_every_layer() {
    let lat = ibm();
    let z62 = observable_library("Z62").unwrap();
    for theta in [0.3, 0.8, 1.2] {
        let c = CircuitSpec::new(theta, 4, false).unwrap();
        let mut worst: f64 = 0.0;
        back_propagate_with(&z62, &c, &lat, TruncationPolicy::None, PropagationLimits::default(), |_, _, s| {
            worst = worst.max((s.norm_sq() - 1.0).abs());
        })
        .unwrap();
        assert!(worst <= 1e-12, "θ={theta}: {worst}");
    }
}

#[test]
fn clifford_point_keeps_a_single_string() {
    let lat = ibm();
    let z62 = observable_library("Z62").unwrap();
    let c = CircuitSpec::new(FRAC_PI_2, 20, false).unwrap();
    let mut sizes = Vec::new();
    let out = back_propagate_with(&z62, &c, &lat, TruncationPolicy::None, PropagationLimits::default(), |_, _, s| {
        sizes.push(s.len())
    })
    .unwrap();
    assert_eq!(sizes.len(), 40);
    assert!(sizes.iter().all(|&n| n == 1));
    assert_eq!(out.single_term().unwrap().coeff.abs(), 1.0);
}

#[test]
fn support_stays_in_the_light_cone() {
    let lat = ibm();
    let z62 = observable_library("Z62").unwrap();
    for t in 0..=4 {
        let sum = exact(&z62, 0.5, t, false, &lat);
        let ball = lat.ball(&[62], t).unwrap();
        assert!(sum.support().iter().all(|s| ball.contains(s)), "t={t}");
    }
}

#[test]
fn lightcone_extraction_is_sound() {
    let lat = ibm();
    let w10 = observable_library("W10").unwrap();
    let support = w10.support();
    let t = 2;
    let full = exact(&w10, 0.45, t, false, &lat);
    let (sub, map) = lat.extract_lightcone(&support, t).unwrap();
    let local = w10.relabel(|s| map.local(s)).unwrap();
    let on_sub = exact(&local, 0.45, t, false, &sub);
    let back = on_sub.relabel(|s| Some(map.parent(s))).unwrap();
    assert!(same_strings(&full, &back));
    assert!(max_coeff_diff(&full, &back) == 0.0);
}

#[test]
fn max_terms_truncation_is_monotone() {
    let lat = ibm();
    let z62 = observable_library("Z62").unwrap();
    let theta = 0.7;
    let exact_v = z62_closed_form(theta, 4).unwrap();
    let c = CircuitSpec::new(theta, 4, false).unwrap();
    let mut prev = f64::INFINITY;
    for m in [1, 2, 4, 8, 16, 64, 256, 1024, 4096] {
        let v = back_propagate(&z62, &c, &lat, TruncationPolicy::MaxTerms(m))
            .unwrap()
            .zero_state_expectation();
        let err = (v - exact_v).abs();
        assert!(err <= prev + 1e-15, "M={m}: {err} > {prev}");
        prev = err;
    }
    assert!(prev <= 1e-12);
}

#[test]
fn max_order_bounds_orders() {
    let lat = ibm();
    let z62 = observable_library("Z62").unwrap();
    let c = CircuitSpec::new(0.4, 4, false).unwrap();
    let out = back_propagate(&z62, &c, &lat, TruncationPolicy::MaxOrder(3)).unwrap();
    assert!(out.max_order() <= 3);
    let big = back_propagate(&z62, &c, &lat, TruncationPolicy::MaxOrder(100)).unwrap();
    assert_eq!(big, exact(&z62, 0.4, 4, false, &lat));
}

#[test]
fn coefficient_threshold_drops_small_terms() {
    let lat = ibm();
    let z62 = observable_library("Z62").unwrap();
    let c = CircuitSpec::new(0.4, 4, false).unwrap();
    let out = back_propagate(&z62, &c, &lat, TruncationPolicy::CoeffThreshold(1e-3)).unwrap();
    assert!(out.terms().iter().all(|t| t.coeff.abs() >= 1e-3));
    let bad = back_propagate(&z62, &c, &lat, TruncationPolicy::CoeffThreshold(-1.0));
    assert!(matches!(bad, Err(Error::InvalidArgument(_))));
}

#[test]
fn term_cap_is_a_hard_error() {
    let lat = ibm();
    let z62 = observable_library("Z62").unwrap();
    let c = CircuitSpec::new(0.4, 5, false).unwrap();
    let r = back_propagate_with(&z62, &c, &lat, TruncationPolicy::None, PropagationLimits { term_cap: 500 }, |_, _, _| {});
    assert!(matches!(r, Err(Error::ResourceLimit(_))));
}

#[test]
fn result_is_independent_of_worker_count() {
    let lat = ibm();
    let z62 = observable_library("Z62").unwrap();
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| exact(&z62, 0.37, 4, true, &lat))
    };
    let one = run(1);
    let four = run(4);
    assert_eq!(one.terms(), four.terms());
    assert_eq!(one.zero_state_expectation().to_bits(), four.zero_state_expectation().to_bits());
}

#[test]
fn observable_outside_lattice_is_rejected() {
    let patch = Lattice::patch(1, 1).unwrap();
    let z62 = observable_library("Z62").unwrap();
    let c = CircuitSpec::new(0.4, 1, false).unwrap();
    assert!(matches!(
        back_propagate(&z62, &c, &patch, TruncationPolicy::None),
        Err(Error::Observable(_))
    ));
}

fn arb_string(n: usize) -> impl Strategy<Value = PauliString> {
    proptest::collection::vec(0usize..4, n)
        .prop_map(|v| PauliString::from_ops(v.into_iter().enumerate().map(|(i, k)| (i, Pauli::from_index(k)))).unwrap())
}

proptest! {
    #[test]
    fn rzz_layer_is_a_signed_bijection(s in arb_string(12), theta in 0.0f64..1.5) {
        let lat = Lattice::patch(1, 1).unwrap();
        let sum = PauliSum::from_terms([PauliTerm { string: s, coeff: 1.0, order: 0 }]);
        let out = layerwise_conjugate(&sum, &[Layer::Rzz], &lat).unwrap();
        prop_assert_eq!(out.len(), 1);
        prop_assert_eq!(out.terms()[0].coeff.abs(), 1.0);
        let back = layerwise_conjugate(&out, &[Layer::Rx(theta), Layer::Rx(-theta)], &lat).unwrap();
        prop_assert!(max_coeff_diff(&back, &out) < 1e-12);
    }

    #[test]
    fn rx_layer_preserves_norm(s in arb_string(12), theta in -3.0f64..3.0) {
        let lat = Lattice::patch(1, 1).unwrap();
        let sum = PauliSum::from_terms([PauliTerm { string: s, coeff: 1.0, order: 0 }]);
        let out = layerwise_conjugate(&sum, &[Layer::Rx(theta)], &lat).unwrap();
        prop_assert!((out.norm_sq() - 1.0).abs() < 1e-12);
        prop_assert!(out.len() <= 1 << s.support().len());
    }
}

#[test]
fn folded_closure_matches_full_expansion() {
    use hexpepo_core::pauli::expectation;
    let lat = ibm();
    for name in ["Z62", "W10"] {
        let obs = observable_library(name).unwrap();
        for (steps, extra) in [(0, true), (1, false), (2, true), (3, false)] {
            if name == "W10" && steps > 1 {
                continue;
            }
            let c = CircuitSpec::new(0.55, steps, extra).unwrap();
            let full = back_propagate(&obs, &c, &lat, TruncationPolicy::None).unwrap();
            let (v, _) = expectation(&obs, &c, &lat, TruncationPolicy::None, PropagationLimits::default()).unwrap();
            assert!((v - full.zero_state_expectation()).abs() < 1e-13, "{name} T={steps}");
        }
    }
}
