mod common;

use common::{bx, corpus, row};
use openvik_core::annotation::{agreement_from_ratings, AnnotationStore};
use openvik_core::apps::{enrich_caption, enrich_vcr, gsr_score, DescriptorSet, KnowledgeIndex, MatchAdapter, SynonymMatch, VerbLists};
use openvik_core::corpus::{dedup_corpus, index_pair_relations, parse_corpus};
use openvik_core::diversify::{augment_entities, augment_relations, random_drop, score_table, tfidf_plus, DropConfig, KgEdge, ScoreGrid};
use openvik_core::eval::{bleu, cohens_kappa, diversity, freshness, meteor, parse_ratings, rouge_l, DiversityMode, RatingRecord};
use openvik_core::generator::{build_mask_prompt, generator_loss, variety_loss, variety_penalty, VarietyConfig};
use openvik_core::kg::{map_to_kg, overlap_report, parse_triplet, Triplet, CELL_NAMES};
use openvik_core::mock::{HashEmbedder, MockCommonsense, MockKnowledgeSource};
use openvik_core::region::{build_relational_regions, detector_loss, select_regions, union_box, RegionProposal};
use openvik_core::{AdapterError, BoundingBox, Corpus, KnowledgePhrase, PhraseOrigin, Provenance, Split};
use proptest::prelude::*;
use std::collections::BTreeMap;

const ENTITIES: [&str; 6] = ["man", "horse", "dog", "ball", "table", "cup"];
const RELATIONS: [&str; 5] = ["on", "riding", "near", "holding", "chasing"];

fn arb_box(w: u32, h: u32) -> impl Strategy<Value = BoundingBox> {
    (0..w, 0..h).prop_flat_map(move |(x, y)| (Just(x), Just(y), x + 1..=w, y + 1..=h)).prop_map(|(a, b, c, d)| bx(a, b, c, d))
}

fn arb_row() -> impl Strategy<Value = (String, String, String, String)> {
    (0..ENTITIES.len(), 0..RELATIONS.len(), 0..ENTITIES.len()).prop_map(|(s, r, o)| row(ENTITIES[s], RELATIONS[r], ENTITIES[o]))
}

fn arb_corpus() -> impl Strategy<Value = Corpus> {
    prop::collection::vec(prop::collection::vec(arb_row(), 0..8), 1..6).prop_map(|images| {
        let named: Vec<(String, Vec<_>)> = images.into_iter().enumerate().map(|(i, r)| (format!("img{i}"), r)).collect();
        let refs: Vec<(&str, Vec<_>)> = named.iter().map(|(id, r)| (id.as_str(), r.clone())).collect();
        corpus(&refs)
    })
}

fn arb_sentence() -> impl Strategy<Value = String> {
    let words = ["a", "man", "horse", "on", "the", "beach", "dog", "red", "riding"];
    prop::collection::vec(0..words.len(), 1..10).prop_map(move |ix| ix.iter().map(|i| words[*i]).collect::<Vec<_>>().join(" "))
}

fn edge(rel: &str, target: &str, weight: f64) -> KgEdge {
    KgEdge { relation: rel.into(), target: target.into(), weight }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn corpus_round_trips_through_jsonl(c in arb_corpus()) {
        let text = String::from_utf8(c.to_jsonl()).unwrap();
        prop_assert_eq!(parse_corpus(&text, Split::Train).unwrap(), c);
    }

    #[test]
    fn counters_match_contents(c in arb_corpus()) {
        let k = c.counters();
        let rels: std::collections::BTreeSet<_> = c.descriptors().map(|d| d.relation.clone()).collect();
        let ents: std::collections::BTreeSet<_> = c.descriptors().flat_map(|d| [d.subject.name.clone(), d.object.name.clone()]).collect();
        prop_assert_eq!(k.images, c.images().len());
        prop_assert_eq!(k.descriptors, c.descriptors().count());
        prop_assert_eq!(k.relations, rels.len());
        prop_assert_eq!(k.entities, ents.len());
    }

    #[test]
    fn dedup_is_idempotent(c in arb_corpus()) {
        let once = dedup_corpus(&c);
        prop_assert_eq!(dedup_corpus(&once), once);
    }

    #[test]
    fn pair_index_totals_cover_every_descriptor(c in arb_corpus()) {
        let idx = index_pair_relations(&c);
        let total: usize = idx.iter().flat_map(|(_, m)| m.values()).sum();
        prop_assert_eq!(total, c.descriptor_count());
    }

    #[test]
    fn union_box_laws(a in arb_box(300, 300), b in arb_box(300, 300), c in arb_box(300, 300)) {
        prop_assert_eq!(union_box(&a, &b), union_box(&b, &a));
        prop_assert_eq!(union_box(&union_box(&a, &b), &c), union_box(&a, &union_box(&b, &c)));
        prop_assert_eq!(union_box(&a, &a), a);
    }

    #[test]
    fn regions_contain_their_boxes(c in arb_corpus()) {
        for image in c.images() {
            for (r, d) in build_relational_regions(image).iter().zip(&image.descriptors) {
                prop_assert!(r.bbox.contains(&d.subject.bbox) && r.bbox.contains(&d.object.bbox));
            }
        }
    }

    #[test]
    fn detector_loss_monotone(a in 0.0..100.0f64, b in 0.0..100.0f64, da in 0.0..10.0f64, db in 0.0..10.0f64) {
        let base = detector_loss(a, b).unwrap();
        prop_assert!(detector_loss(a + da, b).unwrap() >= base);
        prop_assert!(detector_loss(a, b + db).unwrap() >= base);
    }

    #[test]
    fn selected_regions_sorted_and_capped(
        props in prop::collection::vec((arb_box(100, 100), 0.0..=1.0f64), 0..60),
        cap in 1usize..40,
    ) {
        let proposals: Vec<RegionProposal> = props.into_iter().map(|(b, c)| RegionProposal::new(b, c).unwrap()).collect();
        let out = select_regions(&proposals, cap);
        prop_assert!(out.len() <= cap && out.len() == proposals.len().min(cap));
        prop_assert!(out.windows(2).all(|w| w[0].confidence >= w[1].confidence));
    }

    #[test]
    fn variety_penalty_shape(s1 in -1.0..1.0f64, s2 in -1.0..1.0f64) {
        let phi = 0.01;
        let (lo, hi) = if s1 < s2 { (s1, s2) } else { (s2, s1) };
        if lo > phi && lo < hi {
            prop_assert!(variety_penalty(lo, phi).unwrap() < variety_penalty(hi, phi).unwrap());
        }
        if lo <= phi {
            prop_assert_eq!(variety_penalty(lo, phi).unwrap(), 0.0);
        }
    }

    #[test]
    fn variety_loss_ignores_order(mut phrases in prop::collection::vec(arb_sentence(), 0..7), seed in any::<u64>()) {
        let emb = HashEmbedder::default();
        let cfg = VarietyConfig::default();
        let before = variety_loss(&phrases, &emb, &cfg).unwrap();
        if phrases.len() < 2 {
            prop_assert_eq!(before, 0.0);
        }
        let n = phrases.len().max(1);
        phrases.rotate_left(seed as usize % n);
        phrases.reverse();
        prop_assert!((variety_loss(&phrases, &emb, &cfg).unwrap() - before).abs() < 1e-12);
    }

    #[test]
    fn generator_loss_slope_is_alpha(m in 0.0..10.0f64, v in 0.0..10.0f64, alpha in 0.0..=1.0f64) {
        let h = 1e-3;
        let slope = (generator_loss(m + h, v, alpha).unwrap() - generator_loss(m, v, alpha).unwrap()) / h;
        prop_assert!((slope - alpha).abs() < 1e-9);
    }

    #[test]
    fn mask_ones_grow_with_region(inner in arb_box(200, 150), grow in (0u32..40, 0u32..40, 0u32..40, 0u32..40), patch in 1u32..33) {
        let outer = bx(
            inner.x_min().saturating_sub(grow.0),
            inner.y_min().saturating_sub(grow.1),
            (inner.x_max() + grow.2).min(200),
            (inner.y_max() + grow.3).min(150),
        );
        let a = build_mask_prompt(&inner, 200, 150, patch).unwrap();
        let b = build_mask_prompt(&outer, 200, 150, patch).unwrap();
        prop_assert!(a.ones() <= b.ones());
        let grid = b.to_grid();
        prop_assert_eq!(grid.len(), 150usize.div_ceil(patch as usize));
        prop_assert!(grid.iter().all(|r| r.len() == 200usize.div_ceil(patch as usize) && r.iter().all(|c| *c <= 1)));
    }

    #[test]
    fn tfidf_non_increasing(n in 1usize..1_000_000, f in 0usize..1_000_000, df in 0usize..1000, a1 in 0.01..10.0f64, a2 in 0.01..4.0f64) {
        prop_assert!(tfidf_plus(n, f + df, a1, a2).unwrap() <= tfidf_plus(n, f, a1, a2).unwrap());
    }

    #[test]
    fn random_drop_contract(c in arb_corpus(), seed in any::<u64>(), rate in 0.0..=1.0f64) {
        let table = score_table(&dedup_corpus(&c), &ScoreGrid::default());
        let cfg = DropConfig { seed, drop_rate: rate, ..Default::default() };
        let out = random_drop(&c, &table, &cfg);
        prop_assert!(out.corpus.descriptor_count() <= c.descriptor_count());
        let deduped = dedup_corpus(&c);
        for (rel, s) in &table.relations {
            if s.normalized > cfg.low_threshold {
                let n = |x: &Corpus| x.descriptors().filter(|d| &d.relation == rel).count();
                prop_assert_eq!(n(&out.corpus), n(&deduped));
            }
        }
        prop_assert_eq!(random_drop(&c, &table, &cfg).corpus, out.corpus);
    }

    #[test]
    fn augmentation_leaves_input_alone(c in arb_corpus()) {
        let before = c.clone();
        let table = score_table(&c, &ScoreGrid::default());
        let mut kg = MockKnowledgeSource::default();
        kg.add_edge("man", edge("capable of", "horse", 2.0));
        kg.add_edge("horse", edge("related to", "pony", 2.0));
        kg.set_relatedness("horse", "pony", 0.9);
        let a = augment_relations(&c, &table, &kg, 0.0);
        let b = augment_entities(&c, &table, &kg, &MockCommonsense::default(), 0.85);
        prop_assert_eq!(&c, &before);
        prop_assert!(a.descriptors.iter().chain(&b.descriptors).all(|d| d.provenance != Provenance::Original));
    }

    #[test]
    fn metrics_in_range(c in arb_sentence(), r in arb_sentence()) {
        for v in [bleu(&c, &[&r], 4).unwrap(), rouge_l(&c, &r).unwrap(), meteor(&c, &r).unwrap()] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        prop_assert!((rouge_l(&c, &c).unwrap() - 1.0).abs() < 1e-12);
        // with add-one smoothing, orders longer than the sentence cost precision
        if c.split_whitespace().count() >= 4 {
            prop_assert!((bleu(&c, &[&c], 4).unwrap() - 1.0).abs() < 1e-12);
            prop_assert!(meteor(&c, &c).unwrap() >= 0.99);
        }
    }

    #[test]
    fn freshness_against_nothing_is_one(g in prop::collection::vec(arb_sentence(), 1..6)) {
        prop_assert_eq!(freshness(&g, &[]).unwrap(), 1.0);
    }

    #[test]
    fn exhaustive_diversity_ignores_order(mut phrases in prop::collection::vec(arb_sentence(), 2..8)) {
        let emb = HashEmbedder::default();
        let (d, pairs) = diversity(&phrases, &emb, DiversityMode::Exhaustive).unwrap();
        prop_assert_eq!(pairs, phrases.len() * (phrases.len() - 1) / 2);
        phrases.reverse();
        prop_assert!((diversity(&phrases, &emb, DiversityMode::Exhaustive).unwrap().0 - d).abs() < 1e-12);
    }

    #[test]
    fn kappa_of_self_is_one(a in prop::collection::vec(0u8..4, 2..30)) {
        if a.iter().any(|x| *x != a[0]) {
            prop_assert_eq!(cohens_kappa(&a, &a).unwrap(), 1.0);
        }
    }

    #[test]
    fn parsed_triplets_are_fixpoints(s in 0..ENTITIES.len(), r in 0..RELATIONS.len(), o in 0..ENTITIES.len(), det in any::<bool>(), adj in any::<bool>()) {
        let text = format!(
            "{}{}{} {} {}{}",
            if det { "the " } else { "" },
            if adj { "large " } else { "" },
            ENTITIES[s], RELATIONS[r], if det { "a " } else { "" }, ENTITIES[o],
        );
        let t = parse_triplet(&text).expect("relation between two nouns").triplet;
        prop_assert!(!t.subject.is_empty() && !t.relation.is_empty() && !t.object.is_empty());
        let again = parse_triplet(&t.render()).unwrap().triplet;
        prop_assert_eq!(again.key(), t.key());
    }

    #[test]
    fn mapping_threshold_extremes(r in 0..RELATIONS.len(), joined in any::<bool>()) {
        let mut kg = MockKnowledgeSource::default();
        kg.add_edge("man", edge("related to", if joined { "horse" } else { "dog" }, 1.0));
        kg.add_edge("horse", edge("related to", "dog", 1.0));
        let t = Triplet::new("man", RELATIONS[r], "horse").unwrap();
        let emb = HashEmbedder::default();
        prop_assert_eq!(map_to_kg(&t, &kg, &emb, 0.0).unwrap().matched, joined);
        prop_assert!(!map_to_kg(&t, &kg, &emb, 1.0 + 1e-9).unwrap().matched);
    }

    #[test]
    fn overlap_cells_sum(v in prop::collection::vec(arb_row(), 0..8), k in prop::collection::vec(arb_row(), 0..8), l in prop::collection::vec(arb_row(), 0..8)) {
        let t = |rows: Vec<(String, String, String, String)>| rows.into_iter().map(|(_, s, r, o)| Triplet::new(&s, &r, &o).unwrap()).collect::<Vec<_>>();
        let report = overlap_report(&t(v), &t(k), &t(l), &HashEmbedder::default(), 0.75).unwrap();
        prop_assert_eq!(CELL_NAMES.iter().map(|c| report.count(c)).sum::<usize>(), report.total);
    }

    #[test]
    fn enrichment_monotone_in_share(c in arb_corpus(), lo in 0.01..0.99f64, hi in 0.01..0.99f64) {
        let (lo, hi) = if lo < hi { (lo, hi) } else { (hi, lo) };
        let index = KnowledgeIndex::new(&c);
        let caption = "a man with a horse and a dog near a table";
        let (_, strict) = enrich_caption(caption, &index, hi).unwrap();
        let (_, loose) = enrich_caption(caption, &index, lo).unwrap();
        prop_assert!(strict.iter().all(|p| loose.contains(p)));
    }

    #[test]
    fn vcr_keeps_options(c in arb_corpus(), n in 2usize..5) {
        let index = KnowledgeIndex::new(&c);
        let options: Vec<String> = (0..n).map(|i| format!("the {} is riding the {}", ENTITIES[i], ENTITIES[i + 1])).collect();
        let out = enrich_vcr("why is the man here", &options, &index, &VerbLists::builtin(), None, 0.3).unwrap();
        prop_assert_eq!(out.len(), options.len());
        for ((enriched, _), original) in out.iter().zip(&options) {
            prop_assert!(enriched.starts_with(original.as_str()));
        }
    }

    #[test]
    fn singleton_gsr_is_adapter_score(score in -10.0..10.0f64) {
        struct One(f64);
        impl MatchAdapter for One {
            fn score(&self, _: &str, _: &str) -> Result<f64, AdapterError> {
                Ok(self.0)
            }
        }
        let set = DescriptorSet { verb: "riding".into(), descriptors: vec!["An image of riding".into()], matched: SynonymMatch::None };
        prop_assert_eq!(gsr_score("img", &set, &One(score)).unwrap(), score);
    }

    #[test]
    fn agreement_matrix_shape(ratings in prop::collection::vec((0usize..3, 0usize..6, 0i64..2, 0i64..4), 0..40)) {
        let raters: Vec<String> = (0..3).map(|r| format!("r{r}")).collect();
        let records: Vec<RatingRecord> = ratings
            .iter()
            .map(|(r, p, v, c)| RatingRecord {
                rater_id: format!("r{r}"),
                phrase_id: format!("p{p}"),
                image_id: "img".into(),
                validity: *v,
                conformity: *c,
            })
            .collect();
        let view = agreement_from_ratings(&raters, &records);
        for m in [&view.validity, &view.conformity] {
            for i in 0..3 {
                prop_assert_eq!(m.matrix[i][i], Some(1.0));
                for j in 0..3 {
                    prop_assert_eq!(m.matrix[i][j], m.matrix[j][i]);
                    if let Some(k) = m.matrix[i][j] {
                        prop_assert!((-1.0..=1.0).contains(&k));
                    }
                }
            }
        }
    }

    #[test]
    fn ratings_export_round_trips(ratings in prop::collection::vec((0usize..2, 0usize..4, 0i64..2, 0i64..4), 1..20)) {
        let phrases: Vec<KnowledgePhrase> = (0..4)
            .map(|p| KnowledgePhrase {
                phrase_id: format!("p{p}"),
                image_id: format!("img{}", p / 2),
                region: bx(0, 0, 5, 5),
                text: format!("phrase {p}"),
                confidence: Some(0.5),
                origin: PhraseOrigin::Generated,
            })
            .collect();
        let mut store = AnnotationStore::new(&phrases, &BTreeMap::new(), ["r0".to_string(), "r1".to_string()], None).unwrap();
        for (r, p, v, c) in ratings {
            store
                .submit_rating(RatingRecord { rater_id: format!("r{r}"), phrase_id: format!("p{p}"), image_id: format!("img{}", p / 2), validity: v, conformity: c })
                .unwrap();
        }
        let exported = String::from_utf8(store.export_jsonl()).unwrap();
        let back = parse_ratings(&exported).unwrap();
        prop_assert_eq!(&back, &store.ratings());
        prop_assert_eq!(agreement_from_ratings(&store.raters(), &back), store.agreement_view());
    }
}

#[test]
fn rouge_l_is_not_symmetric() {
    let (a, b) = ("a man", "a man riding a horse");
    assert!((rouge_l(a, b).unwrap() - rouge_l(b, a).unwrap()).abs() > 1e-3);
}
