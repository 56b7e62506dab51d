//! Brute-force oracle for global prune-set selection.
//!
//! Documented tie-break: ascending score, then ascending (layer, channel).
//! A victim that would empty its layer is skipped, never substituted by a
//! later reordering.

use std::collections::BTreeMap;

use frsp_core::graph::ChannelRef;
use frsp_core::scoring::{select_prune_set, Criterion, GlobalScoreTable};
use frsp_core::Rng;
use rand::{Rng as _, SeedableRng};

fn brute_force(table: &GlobalScoreTable, x: usize) -> Option<Vec<ChannelRef>> {
    let mut rows: Vec<(f32, ChannelRef)> =
        table.entries.iter().map(|&(ch, s)| (s, ch)).collect();
    rows.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .unwrap()
            .then(a.1.layer.cmp(&b.1.layer))
            .then(a.1.channel.cmp(&b.1.channel))
    });
    let mut remaining: BTreeMap<usize, usize> = BTreeMap::new();
    for (_, ch) in &rows {
        *remaining.entry(ch.layer).or_insert(0) += 1;
    }
    let mut picked = Vec::new();
    for (_, ch) in rows {
        if picked.len() == x {
            break;
        }
        let left = remaining.get_mut(&ch.layer).unwrap();
        if *left <= 1 {
            continue; // would annihilate the layer
        }
        *left -= 1;
        picked.push(ch);
    }
    (picked.len() == x).then_some(picked)
}

#[test]
fn selection_equals_brute_force_on_random_tables() {
    let mut rng = Rng::seed_from_u64(0x5e1);
    for case in 0..1000 {
        let layers = rng.gen_range(1..=5usize);
        let mut entries = Vec::new();
        for layer in 0..layers {
            let channels = rng.gen_range(1..=6usize);
            for channel in 0..channels {
                // coarse grid so duplicate scores (ties) are common
                let score = (rng.gen_range(-4..=4) as f32) * 0.25;
                entries.push((ChannelRef { layer, channel }, score));
            }
        }
        let total = entries.len();
        let table = GlobalScoreTable { criterion: Criterion::FeatureRelevance, entries };
        let x = rng.gen_range(0..=total + 1);

        let got = select_prune_set(&table, x);
        let want = brute_force(&table, x);
        match want {
            Some(want) => {
                let got = got.unwrap_or_else(|e| panic!("case {case}: unexpected error {e}"));
                assert_eq!(got, want, "case {case} (x={x}, {total} entries)");
            }
            None => assert!(got.is_err(), "case {case}: expected too-large error (x={x})"),
        }
    }
}

#[test]
fn requesting_zero_is_empty() {
    let table = GlobalScoreTable {
        criterion: Criterion::L1,
        entries: vec![(ChannelRef { layer: 0, channel: 0 }, 1.0)],
    };
    assert_eq!(select_prune_set(&table, 0).unwrap(), vec![]);
}
