mod common;

use common::{naive_lloyd, oracle_color, oracle_recall, oracle_tone};
use holocap_core::chunk::{parse_chunk, reduce_visual, render, ChunkFacets};
use holocap_core::gateway::{EmotionLabel, VisualAnnotation};
use holocap_core::retrieval::{recall_at_ks, SimilarityMatrix};
use holocap_core::style::kmeans::{kmeans_pp_init, lloyd, Rgb};
use holocap_core::style::{nearest_color_name, ColorTable};
use holocap_core::tone::aggregate_tone;
use proptest::prelude::*;
use rand::SeedableRng;

fn caption() -> impl Strategy<Value = String> {
    prop_oneof![
        "[a-z ,:()\\[\\]\"\\\\]{1,30}",
        ".{1,20}",
        "(frame[0-9]{1,3}: |, frame[0-9]{1,2}: |\\\\|\"|\\]|\\)|,| ){1,6}",
    ]
}

fn emotion() -> impl Strategy<Value = EmotionLabel> {
    (0..8usize).prop_map(|i| EmotionLabel::EMOTIONS[i])
}

fn label() -> impl Strategy<Value = EmotionLabel> {
    (0..9usize).prop_map(|i| EmotionLabel::ALL[i])
}

fn facets() -> impl Strategy<Value = ChunkFacets> {
    let names: Vec<String> = ColorTable::css3().entries().iter().map(|e| e.name.clone()).collect();
    (
        prop::collection::vec(caption(), 1..20),
        prop_oneof![Just(String::new()), caption(), ".{0,40}"],
        emotion(),
        prop::sample::subsequence(names, 1..=2),
    )
        .prop_map(|(captions, dialogue, tone, style)| ChunkFacets {
            visual: VisualAnnotation::from_captions(captions).unwrap(),
            dialogue,
            tone,
            style,
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn chunk_round_trips(f in facets()) {
        let text = render(&f);
        let back = parse_chunk(&text).map_err(|e| TestCaseError::fail(format!("{e}: {text}")))?;
        prop_assert_eq!(back, f);
    }

    #[test]
    fn reduced_visual_respects_cap(captions in prop::collection::vec("[ab]{1,2}", 1..80), cap in 1usize..20) {
        let v = VisualAnnotation::from_captions(captions.clone()).unwrap();
        let r = reduce_visual(v.entries(), cap).unwrap();
        prop_assert!(r.len() <= cap);
        prop_assert_eq!(&r.entries()[0].caption, &captions[0]);
        let mut deduped: Vec<&str> = captions.iter().map(String::as_str).collect();
        deduped.dedup();
        let kept: Vec<&str> = r.entries().iter().map(|e| e.caption.as_str()).collect();
        if cap >= 2 {
            prop_assert_eq!(kept.last(), deduped.last());
        }
        let mut rest = deduped.iter();
        prop_assert!(kept.iter().all(|k| rest.any(|d| d == k)), "not a subsequence");
    }

    #[test]
    fn recall_matches_full_sort(n in 1usize..25, seed in any::<u64>(), coarse in any::<bool>()) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let rows = common::random_rows(&mut rng, n, coarse);
        let m = SimilarityMatrix::from_rows(rows.clone()).unwrap();
        let ks: Vec<usize> = (1..=n).collect();
        let got = recall_at_ks(&m, &ks).unwrap();
        for (k, g) in ks.iter().zip(&got) {
            prop_assert_eq!(*g, oracle_recall(&rows, *k));
        }
        prop_assert!(got.windows(2).all(|w| w[0] <= w[1]));
        prop_assert_eq!(*got.last().unwrap(), 1.0);
    }

    #[test]
    fn color_lookup_matches_scan(rgb in any::<[u8; 3]>()) {
        let table = ColorTable::css3();
        prop_assert_eq!(nearest_color_name(rgb, table), oracle_color(rgb, table));
    }

    #[test]
    fn lloyd_monotone_and_matches_naive(
        points in prop::collection::vec(any::<[u8; 3]>(), 2..300),
        k in 1usize..5,
        seed in any::<u64>(),
    ) {
        let pts: Vec<Rgb<f64>> = points.iter().map(|p| p.map(f64::from)).collect();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let seeds = kmeans_pp_init(&pts, k, &mut rng);
        let fit = lloyd(&pts, &seeds, 30, 0.5);
        for w in fit.inertia_history.windows(2) {
            prop_assert!(w[1] <= w[0]);
        }
        let naive = naive_lloyd(&pts, &seeds, 30, 0.5);
        for (a, b) in fit.centroids.iter().zip(&naive) {
            prop_assert!((0..3).all(|i| (a[i] - b[i]).abs() < 1e-6), "{:?} vs {:?}", a, b);
        }
    }

    #[test]
    fn tone_ignores_order_and_no_face(mut labels in prop::collection::vec(label(), 0..40), rot in 0usize..40) {
        let t = aggregate_tone(&labels).tone;
        prop_assert!(t.is_emotion());
        prop_assert_eq!(t, oracle_tone(&labels));
        if !labels.is_empty() {
            let r = rot % labels.len();
            labels.rotate_left(r);
        }
        prop_assert_eq!(aggregate_tone(&labels).tone, t);
        labels.push(EmotionLabel::NoFace);
        prop_assert_eq!(aggregate_tone(&labels).tone, t);
    }
}
