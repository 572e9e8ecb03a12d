//! Randomized invariants over small classical instances.

use chandisc::channel_div::classical_channel_divergence;
use chandisc::cli::output::round9;
use chandisc::divergences::{binary_entropy, dh_classical, kl_divergence};
use chandisc::exponents::{parallel_exponent_finite_classical, worst_case_iid_exponent, HypothesisSet};
use chandisc::model::{ClassicalChannel, ProbVector};
use proptest::prelude::*;

fn prob(d: usize) -> impl Strategy<Value = ProbVector> {
    prop::collection::vec(0.01f64..1.0, d).prop_map(|w| ProbVector::normalized(w).unwrap())
}

fn pair(max_dim: usize) -> impl Strategy<Value = (ProbVector, ProbVector)> {
    (2..=max_dim).prop_flat_map(|d| (prob(d), prob(d)))
}

fn channel(nx: usize, ny: usize) -> impl Strategy<Value = ClassicalChannel> {
    prop::collection::vec(prob(ny), nx).prop_map(|rows| ClassicalChannel::new(rows).unwrap())
}

fn kl(p: &ProbVector, q: &ProbVector) -> f64 {
    kl_divergence(p, q).unwrap().value()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn kl_is_nonnegative_and_vanishes_on_the_diagonal((p, q) in pair(6)) {
        prop_assert!(kl(&p, &q) >= -1e-12);
        prop_assert!(kl(&p, &p).abs() <= 1e-12);
    }

    #[test]
    fn kl_is_jointly_convex((p0, q0) in pair(4), t in 0.0f64..=1.0, seed in prop::collection::vec(0.01f64..1.0, 8)) {
        let d = p0.len();
        let p1 = ProbVector::normalized(seed[..d].to_vec()).unwrap();
        let q1 = ProbVector::normalized(seed[4..4 + d].to_vec()).unwrap();
        let w = [t, 1.0 - t];
        let pm = ProbVector::mixture(&w, &[p0.clone(), p1.clone()]).unwrap();
        let qm = ProbVector::mixture(&w, &[q0.clone(), q1.clone()]).unwrap();
        prop_assert!(kl(&pm, &qm) <= t * kl(&p0, &q0) + (1.0 - t) * kl(&p1, &q1) + 1e-10);
    }

    #[test]
    fn hypothesis_testing_divergence_grows_with_eps((p, q) in pair(6), a in 0.0f64..0.95, b in 0.0f64..0.95) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let d_lo = dh_classical(&p, &q, lo).unwrap().0.value();
        let d_hi = dh_classical(&p, &q, hi).unwrap().0.value();
        prop_assert!(d_lo <= d_hi + 1e-10, "{d_lo} > {d_hi}");
    }

    #[test]
    fn hypothesis_testing_divergence_obeys_the_entropy_bound((p, q) in pair(6), eps in 0.01f64..0.9) {
        let dh = dh_classical(&p, &q, eps).unwrap().0.value();
        let bound = (kl(&p, &q) + binary_entropy(eps).unwrap()) / (1.0 - eps);
        prop_assert!(dh <= bound + 1e-9);
    }

    #[test]
    fn channel_divergence_dominates_every_input(
        (e, f) in (2usize..=3, 2usize..=3).prop_flat_map(|(nx, ny)| (channel(nx, ny), channel(nx, ny))),
        weights in prop::collection::vec(0.01f64..1.0, 3),
    ) {
        let input = ProbVector::normalized(weights[..e.input_size()].to_vec()).unwrap();
        let joint = |ch: &ClassicalChannel| {
            let mut v = Vec::new();
            for x in 0..ch.input_size() {
                v.extend(ch.row(x).iter().map(|pyx| input.get(x) * pyx));
            }
            ProbVector::new(v).unwrap()
        };
        let conditional = kl(&joint(&e), &joint(&f));
        let sup = classical_channel_divergence(&e, &f).unwrap().value();
        prop_assert!(conditional <= sup + 1e-10);
        prop_assert!(kl(&e.apply(&input).unwrap(), &f.apply(&input).unwrap()) <= sup + 1e-10);
    }

    #[test]
    fn parallel_exponent_never_exceeds_the_worst_case_iid_one(
        (s, t) in (2usize..=3, 2usize..=3).prop_flat_map(|(nx, ny)| {
            (prop::collection::vec(channel(nx, ny), 1..=2), prop::collection::vec(channel(nx, ny), 1..=2))
        }),
    ) {
        let s = HypothesisSet::classical(s, false).unwrap();
        let t = HypothesisSet::classical(t, false).unwrap();
        let parallel = parallel_exponent_finite_classical(&s, &t).unwrap().value.value();
        let iid = worst_case_iid_exponent(&s, &t).unwrap().value.value();
        prop_assert!(parallel <= iid + 1e-6, "{parallel} > {iid}");
    }

    #[test]
    fn rounding_is_idempotent_and_keeps_nine_digits(x in -1e12f64..1e12) {
        let r = round9(x);
        prop_assert_eq!(round9(r), r);
        prop_assert!((r - x).abs() <= 5e-9 * x.abs());
    }
}
