use mfcsim::plants::{MatchedTerm, PerturbedChain};
use mfcsim::uncertainty::{aux_deltas, certify_theorem1, decompose_vector, phi_transformed};
use proptest::prelude::*;

fn vec_pair(max: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1..=max).prop_flat_map(|n| {
        (
            prop::collection::vec(-5.0f64..5.0, n),
            prop::collection::vec(-5.0f64..5.0, n),
        )
    })
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    let scale = 1.0 + a.iter().chain(b).fold(0.0f64, |m, v| m.max(v.abs()));
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol * scale)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn split_matches_projection_oracle((g, delta) in vec_pair(6)) {
        prop_assume!(dot(&g, &g) > 1e-4);
        let d = decompose_vector(&g, &delta).unwrap();
        let c = dot(&g, &delta) / dot(&g, &g);
        let proj: Vec<f64> = g.iter().map(|gi| c * gi).collect();
        let rest: Vec<f64> = delta.iter().zip(&proj).map(|(a, b)| a - b).collect();
        prop_assert!(close(&d.matched, &proj, 1e-12));
        prop_assert!(close(&d.unmatched, &rest, 1e-12));

        let sum: Vec<f64> = d.matched.iter().zip(&d.unmatched).map(|(a, b)| a + b).collect();
        prop_assert!(close(&sum, &delta, 1e-12));
        let gn = dot(&g, &g).sqrt();
        prop_assert!(dot(&g, &d.unmatched).abs() <= 1e-12 * (1.0 + gn) * (1.0 + dot(&delta, &delta).sqrt()));
    }

    #[test]
    fn split_is_idempotent((g, delta) in vec_pair(6)) {
        prop_assume!(dot(&g, &g) > 1e-4);
        let d = decompose_vector(&g, &delta).unwrap();
        let again = decompose_vector(&g, &d.matched).unwrap();
        prop_assert!(close(&again.matched, &d.matched, 1e-12));
        prop_assert!(close(&again.unmatched, &vec![0.0; g.len()], 1e-12));
        let again = decompose_vector(&g, &d.unmatched).unwrap();
        prop_assert!(close(&again.unmatched, &d.unmatched, 1e-12));
        prop_assert!(close(&again.matched, &vec![0.0; g.len()], 1e-12));
    }

    #[test]
    fn split_is_linear((g, a) in vec_pair(5), s in -3.0f64..3.0) {
        prop_assume!(dot(&g, &g) > 1e-4);
        let scaled: Vec<f64> = a.iter().map(|v| s * v).collect();
        let d = decompose_vector(&g, &a).unwrap();
        let ds = decompose_vector(&g, &scaled).unwrap();
        let expect: Vec<f64> = d.matched.iter().map(|v| s * v).collect();
        prop_assert!(close(&ds.matched, &expect, 1e-12));
    }

    #[test]
    fn chain_aux_terms_closed_form(x in prop::collection::vec(-2.0f64..2.0, 3)) {
        let plant = PerturbedChain::reference_instance().build().unwrap();
        let aux = aux_deltas(&plant.system, &x).unwrap();
        let phi = dot(&x, &x);
        prop_assert!((aux.d1 - 0.75 * phi).abs() <= 1e-12 * (1.0 + phi));
        prop_assert!((aux.d3 + 0.25).abs() <= 1e-15);
        prop_assert!(aux.d1.abs() <= plant.bounds.delta1(&x));
        prop_assert!(aux.d3.abs() <= plant.bounds.delta3(&x));
    }

    #[test]
    fn chain_phi_closed_form(x in prop::collection::vec(-2.0f64..2.0, 3)) {
        // 𝓛_Δ x_1 = α_1 x_2, 𝓛_Δ x_2 = α_2 x_3, 𝓛_Δ x_3 = φ_m.
        let plant = PerturbedChain::reference_instance().build().unwrap();
        let phi = phi_transformed(&plant.system, &x).unwrap();
        prop_assert!((phi.unmatched[0] - 0.5 * x[1]).abs() <= 1e-6);
        prop_assert!((phi.unmatched[1] + 0.5 * x[2]).abs() <= 1e-6);
        prop_assert_eq!(phi.unmatched[2], 0.0);
        prop_assert!((phi.matched - dot(&x, &x)).abs() <= 1e-6 * (1.0 + dot(&x, &x)));
    }
}

#[test]
fn matched_chain_certifies_everywhere() {
    let chain = PerturbedChain {
        n: 3,
        alpha: vec![0.0, 0.0],
        matched: MatchedTerm::Sine { amplitude: 0.8 },
        rho: 0.0,
    };
    let sys = chain.build().unwrap().system;
    let xs: Vec<Vec<f64>> = (0..300)
        .map(|i| {
            let t = i as f64 * 0.37;
            vec![2.0 * t.sin(), 1.5 * (1.3 * t).cos(), (0.7 * t).sin() - 0.2]
        })
        .collect();
    let rep = certify_theorem1(&sys, &xs).unwrap();
    assert_eq!(rep.matched, xs.len());
    assert!(rep.worst_matched_phi_u <= 1e-5);
}
