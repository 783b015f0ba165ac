use proptest::prelude::*;
use tokenrank::dump::{decode_token_dump, encode_token_dump};
use tokenrank::rerank::FusionConfig;
use tokenrank::tokensel::{pool_average_2x2, prune_divprune, sample_uniform_2x2};
use tokenrank::{fuse, two_token_similarity, Qrels, RankedItem, RankedList, TokenGrid};

fn grid_strategy() -> impl Strategy<Value = TokenGrid> {
    (1u16..8, 1u16..8, 1usize..6).prop_flat_map(|(r, c, d)| {
        prop::collection::vec(-100.0f32..100.0, r as usize * c as usize * d)
            .prop_map(move |v| TokenGrid::dense(v, d, r, c).unwrap())
    })
}

proptest! {
    #[test]
    fn dump_roundtrip_is_fp16_rounding(g in grid_strategy()) {
        let back = decode_token_dump(&encode_token_dump(&g)).unwrap();
        prop_assert_eq!(back.positions(), g.positions());
        for (a, b) in back.as_slice().iter().zip(g.as_slice()) {
            prop_assert_eq!(*a, half::f16::from_f32(*b).to_f32());
        }
    }

    #[test]
    fn selections_shrink_and_keep_valid_positions(g in grid_strategy(), t in 1usize..10) {
        let t = t.min(g.len());
        let p = prune_divprune(&g, t).unwrap();
        prop_assert_eq!(p.len(), t);
        let expected = g.grid_rows().div_ceil(2) as usize * g.grid_cols().div_ceil(2) as usize;
        prop_assert_eq!(sample_uniform_2x2(&g).unwrap().len(), expected);
        prop_assert_eq!(pool_average_2x2(&g).unwrap().len(), expected);
    }

    #[test]
    fn fused_scores_stay_in_unit_interval(sg in -1.0f64..=1.0, sr in 0.0f64..=1.0, l in 0.0f64..=1.0) {
        let f = fuse(sg, sr, &FusionConfig::new(l).unwrap()).unwrap();
        prop_assert!((0.0..=1.0).contains(&f));
    }

    #[test]
    fn similarity_is_a_probability(a in -800.0f64..800.0, b in -800.0f64..800.0) {
        let s = two_token_similarity(a, b).unwrap();
        prop_assert!(s > 0.0 && s <= 1.0);
        if a > b {
            prop_assert!(s >= 0.5);
        }
    }

    #[test]
    fn sorted_lists_are_sorted(scores in prop::collection::vec((0u8..5, 0u8..20), 1..40)) {
        let mut list = RankedList {
            query_id: "q".into(),
            items: scores
                .iter()
                .enumerate()
                .map(|(i, (s, id))| RankedItem {
                    image_id: format!("{id}-{i}"),
                    s_g: *s as f64 / 5.0,
                    s_r: None,
                    s_fused: None,
                })
                .collect(),
        };
        list.sort();
        prop_assert!(list.is_sorted());
    }

    #[test]
    fn qrels_text_roundtrip(pairs in prop::collection::vec(("[a-c][0-9]", "[x-z][0-9]{1,2}", prop::option::of("[gh]")), 1..30)) {
        let mut q = Qrels::new();
        for (qid, img, g) in &pairs {
            q.insert(qid, img, g.as_deref()).unwrap();
        }
        let back = Qrels::parse(&q.to_tsv()).unwrap();
        prop_assert_eq!(back, q);
    }
}
