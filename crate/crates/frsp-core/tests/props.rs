//! Property-based invariants: redistribution fractions are scale covariant,
//! selection is invariant under positive affine score maps, the add split is
//! exactly conserving, and schedules match their brute-force definition.

use frsp_core::graph::ChannelRef;
use frsp_core::lrp::{relevance_backward_affine, relevance_through_add, LrpConfig};
use frsp_core::schedule::{should_prune, PruneSchedule};
use frsp_core::scoring::{select_prune_set, Criterion, GlobalScoreTable};
use frsp_core::tensor::Tensor;
use proptest::prelude::*;

fn finite_vec(len: usize) -> impl Strategy<Value = Vec<f32>> {
    proptest::collection::vec(-2.0f32..2.0, len)
}

proptest! {
    // Multiplying all activations by a positive gamma scales every product
    // and both denominators alike, so the fractions -- and the downstream
    // relevance -- are unchanged.
    #[test]
    fn fractions_are_scale_covariant(
        a in finite_vec(6),
        w in finite_vec(12),
        r in proptest::collection::vec(0.0f32..1.0, 2),
        gamma in 0.25f32..4.0,
    ) {
        let cfg = LrpConfig::new(2.0, 1.0).unwrap();
        let at = Tensor::from_vec(&[1, 6], a.clone()).unwrap();
        let scaled: Vec<f32> = a.iter().map(|v| v * gamma).collect();
        let st = Tensor::from_vec(&[1, 6], scaled).unwrap();
        let wt = Tensor::from_vec(&[2, 6], w).unwrap();
        let rt = Tensor::from_vec(&[1, 2], r).unwrap();

        let base = relevance_backward_affine(&at, &wt, &rt, &cfg).unwrap();
        let after = relevance_backward_affine(&st, &wt, &rt, &cfg).unwrap();
        for (b, s) in base.data().iter().zip(after.data()) {
            prop_assert!((b - s).abs() <= 1e-4 * b.abs().max(1.0), "{b} vs {s}");
        }
    }

    // The add junction's proportional split conserves at every position,
    // including the degenerate 50/50 branch. Where the branches nearly
    // cancel, the shares themselves blow up (a/(a+b) is unbounded), so the
    // tolerance is rounding error at the scale of the shares.
    #[test]
    fn add_split_conserves(
        a in finite_vec(8),
        b in finite_vec(8),
        r in finite_vec(8),
    ) {
        let cfg = LrpConfig::default();
        let at = Tensor::from_vec(&[1, 2, 2, 2], a).unwrap();
        let bt = Tensor::from_vec(&[1, 2, 2, 2], b).unwrap();
        let rt = Tensor::from_vec(&[1, 2, 2, 2], r.clone()).unwrap();
        let (ra, rb) = relevance_through_add(&at, &bt, &rt, &cfg).unwrap();
        for i in 0..8 {
            let (sa, sb) = (ra.data()[i], rb.data()[i]);
            let scale = sa.abs().max(sb.abs()).max(1.0);
            prop_assert!((sa + sb - r[i]).abs() <= 1e-5 * scale);
        }
    }

    // Selection depends only on the score ordering: any positive affine map
    // of the scores picks the same victims.
    #[test]
    fn selection_invariant_under_positive_affine_scores(
        scores in proptest::collection::vec(-10i32..10, 4..24),
        scale in 0.1f32..5.0,
        shift in -3.0f32..3.0,
        x in 0usize..8,
    ) {
        // two layers, channels split evenly, integer-derived scores so the
        // affine map cannot perturb the ordering with rounding
        let entries: Vec<(ChannelRef, f32)> = scores
            .iter()
            .enumerate()
            .map(|(i, &s)| {
                (ChannelRef { layer: i % 2, channel: i / 2 }, s as f32)
            })
            .collect();
        let mapped: Vec<(ChannelRef, f32)> =
            entries.iter().map(|&(ch, s)| (ch, s * scale + shift)).collect();
        let t1 = GlobalScoreTable { criterion: Criterion::L1, entries };
        let t2 = GlobalScoreTable { criterion: Criterion::L1, entries: mapped };
        let r1 = select_prune_set(&t1, x);
        let r2 = select_prune_set(&t2, x);
        match (r1, r2) {
            (Ok(v1), Ok(v2)) => prop_assert_eq!(v1, v2),
            (Err(_), Err(_)) => {}
            other => prop_assert!(false, "divergent outcomes: {:?}", other),
        }
    }

    // should_prune agrees with the schedule's explicit event list.
    #[test]
    fn schedule_events_match_brute_force(
        epochs in 1usize..80,
        n1_frac in 0.1f64..1.0,
        every in 1usize..20,
    ) {
        let n1 = ((epochs as f64 * n1_frac) as usize).max(1);
        let s = PruneSchedule::new(epochs, n1, every, 1).unwrap();
        let listed = s.event_epochs();
        for epoch in 1..=epochs {
            let expected = epoch % every == 0 && epoch < n1;
            prop_assert_eq!(should_prune(epoch, &s), expected, "epoch {}", epoch);
            prop_assert_eq!(listed.contains(&epoch), expected);
        }
    }
}
