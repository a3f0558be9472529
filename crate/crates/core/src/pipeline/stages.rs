use super::config::ConfigIssue;
use super::*;
use crate::apps::{enrich_caption, enrich_vcr, EnrichmentRecord, KnowledgeIndex, QueryFilter, VerbLists};
use crate::corpus::{parse_corpus, Corpus, KnowledgePhrase, Split};
use crate::diversify::enhance as run_enhance;
use crate::eval::{generation_scores, parse_ratings, quality_report, DiversityMode, QualityConfig};
use crate::generator::{build_mask_prompt, extract_knowledge, generator_loss, variety_loss, GeneratorAdapter};
use crate::io::{from_jsonl, to_jsonl};
use crate::kg::{build_llm_prompt, map_to_kg, overlap_report, parse_triplet, CassetteLlm, LlmClient, LlmRequest, Triplet};
use crate::mock::{HashEmbedder, MockCommonsense, MockDetector, MockKnowledgeSource, TableGenerator};
use crate::region::{build_relational_regions, detector_loss, union_box, DetectorAdapter};
use crate::diversify::KnowledgeSourceAdapter;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use std::collections::{BTreeMap, BTreeSet};

type StageResult = Result<Value, StageError>;

fn data<E: fmt::Display>(what: &str) -> impl FnOnce(E) -> StageError + '_ {
    move |e| StageError::Data(format!("{what}: {e}"))
}

fn load_corpus(ctx: &mut StageContext, name: &str) -> Result<Corpus, StageError> {
    let text = ctx.read_artifact(name)?;
    parse_corpus(&text, Split::Train).map_err(data(name))
}

fn load_phrases(ctx: &mut StageContext) -> Result<Vec<KnowledgePhrase>, StageError> {
    let text = ctx.read_artifact(KNOWLEDGE)?;
    from_jsonl(&text).map_err(|(line, e)| StageError::Data(format!("{KNOWLEDGE} line {line}: {e}")))
}

fn load_kg(ctx: &mut StageContext) -> Result<MockKnowledgeSource, StageError> {
    match ctx.config.paths.kg.clone() {
        None => Ok(MockKnowledgeSource::default()),
        Some(path) => serde_json::from_str(&ctx.read_input("kg", &path)?).map_err(data("knowledge graph fixture")),
    }
}

fn load_commonsense(ctx: &mut StageContext) -> Result<MockCommonsense, StageError> {
    match ctx.config.paths.commonsense.clone() {
        None => Ok(MockCommonsense::default()),
        Some(path) => serde_json::from_str(&ctx.read_input("commonsense", &path)?).map_err(data("commonsense fixture")),
    }
}

fn embedder(ctx: &StageContext) -> HashEmbedder {
    HashEmbedder::new(ctx.config.adapters.embedding_dim)
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

pub(super) fn ingest(ctx: &mut StageContext) -> StageResult {
    let path = ctx.config.paths.corpus.clone();
    let text = ctx.read_input("corpus", &path)?;
    let corpus = parse_corpus(&text, Split::Train).map_err(data("corpus"))?;
    ctx.write(CORPUS, &corpus.to_jsonl())?;
    Ok(json!(corpus.counters()))
}

pub(super) fn enhance(ctx: &mut StageContext) -> StageResult {
    let corpus = load_corpus(ctx, CORPUS)?;
    let kg = load_kg(ctx)?;
    let commonsense = load_commonsense(ctx)?;
    let mut config = ctx.config.enhance.clone();
    config.drop.seed = ctx.stage_seed;
    let out = run_enhance(&corpus, &kg, &commonsense, &config);
    ctx.write(ENHANCED, &out.corpus.to_jsonl())?;
    ctx.write_json(
        ENHANCEMENT_REPORT,
        &json!({ "report": out.report, "relations": out.table, "failures": out.failures }),
    )?;
    Ok(json!({
        "original": out.report.original_count,
        "enhanced": out.corpus.descriptor_count(),
        "failures": out.failures.len(),
    }))
}

fn epoch_order(n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order
}

pub(super) fn train_detector(ctx: &mut StageContext) -> StageResult {
    let corpus = load_corpus(ctx, CORPUS)?;
    let train = &ctx.config.detector.training;
    let images: Vec<_> = corpus.images().iter().filter(|i| !i.descriptors.is_empty()).collect();
    if images.is_empty() {
        return Err(StageError::Data("no image carries a descriptor to train on".into()));
    }
    let steps_per_epoch = images.len().div_ceil(train.batch_size);
    let total = steps_per_epoch * train.epochs;
    let mut detector = MockDetector::deriving(ctx.stage_seed);
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.stage_seed);
    let mut epochs = Vec::new();
    let mut step = 0;
    for epoch in 0..train.epochs {
        let lr = train.lr_at(step, total);
        let (mut rd, mut k, mut tot) = (Vec::new(), Vec::new(), Vec::new());
        for batch in epoch_order(images.len(), &mut rng).chunks(train.batch_size) {
            for &i in batch {
                let image = images[i];
                let regions = build_relational_regions(image);
                let texts: Vec<String> = image.descriptors.iter().map(|d| d.text.clone()).collect();
                let l = detector.train_step(image, &regions, &texts)?;
                rd.push(l.regression);
                k.push(l.knowledge);
                tot.push(detector_loss(l.regression, l.knowledge).map_err(data("detector loss"))?);
            }
            step += 1;
        }
        epochs.push(json!({ "epoch": epoch, "lr": lr, "l_rd": mean(&rd), "l_k": mean(&k), "loss": mean(&tot) }));
    }
    let final_loss = epochs.last().map(|e| e["loss"].clone()).unwrap_or(Value::Null);
    ctx.write_json(DETECTOR_TRAIN, &json!({ "steps": total, "epochs": epochs }))?;
    Ok(json!({ "images": images.len(), "steps": total, "final_loss": final_loss }))
}

pub(super) fn train_generator(ctx: &mut StageContext) -> StageResult {
    let corpus = load_corpus(ctx, ENHANCED)?;
    let section = &ctx.config.generator;
    let train = &section.training;
    let variety = section.variety();
    let emb = embedder(ctx);
    let images: Vec<_> = corpus.images().iter().filter(|i| !i.descriptors.is_empty()).collect();
    if images.is_empty() {
        return Err(StageError::Data("no image carries a descriptor to train on".into()));
    }
    let steps_per_epoch = images.len().div_ceil(train.batch_size);
    let total = steps_per_epoch * train.epochs;
    let mut generator = TableGenerator::from_corpus(&corpus, ctx.stage_seed);
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.stage_seed);
    let mut epochs = Vec::new();
    let mut step = 0;
    for epoch in 0..train.epochs {
        let lr = train.lr_at(step, total);
        let (mut mle, mut lv, mut tot) = (Vec::new(), Vec::new(), Vec::new());
        for batch in epoch_order(images.len(), &mut rng).chunks(train.batch_size) {
            for &i in batch {
                let image = images[i];
                let mut image_mle = Vec::new();
                for d in &image.descriptors {
                    let region = union_box(&d.subject.bbox, &d.object.bbox);
                    let mask = build_mask_prompt(&region, image.width, image.height, section.patch_size)
                        .map_err(data("mask prompt"))?;
                    image_mle.push(generator.mle_loss(image, &mask, &d.text)?);
                }
                let texts: Vec<String> = image.descriptors.iter().map(|d| d.text.clone()).collect();
                let l_v = variety_loss(&texts, &emb, &variety).map_err(|e| StageError::Adapter(e.to_string()))?;
                let l_mle = mean(&image_mle);
                mle.push(l_mle);
                lv.push(l_v);
                tot.push(generator_loss(l_mle, l_v, variety.alpha).map_err(data("generator loss"))?);
            }
            step += 1;
        }
        epochs.push(json!({ "epoch": epoch, "lr": lr, "l_mle": mean(&mle), "l_v": mean(&lv), "loss": mean(&tot) }));
    }
    let final_loss = epochs.last().map(|e| e["loss"].clone()).unwrap_or(Value::Null);
    ctx.write_json(GENERATOR_TRAIN, &json!({ "steps": total, "alpha": variety.alpha, "phi": variety.phi, "epochs": epochs }))?;
    Ok(json!({ "images": images.len(), "steps": total, "final_loss": final_loss }))
}

pub(super) fn extract(ctx: &mut StageContext) -> StageResult {
    let corpus = load_corpus(ctx, ENHANCED)?;
    let cap = ctx.config.detector.max_regions;
    let mut detector = MockDetector::deriving(ctx.stage_seed);
    let mut generator = TableGenerator::from_corpus(&corpus, ctx.stage_seed);
    let mut phrases = Vec::new();
    let mut failures = 0;
    let mut max_per_image = 0;
    for image in corpus.images() {
        let out = extract_knowledge(image, &mut detector, &mut generator, &ctx.config.decoding, ctx.config.generator.patch_size, cap)?;
        if out.phrases.len() > cap {
            return Err(StageError::Data(format!("{} produced {} phrases, cap is {cap}", image.image_id, out.phrases.len())));
        }
        max_per_image = max_per_image.max(out.phrases.len());
        failures += out.failures.len();
        phrases.extend(out.phrases);
    }
    ctx.write(KNOWLEDGE, &to_jsonl(&phrases).expect("phrases serialize"))?;
    Ok(json!({ "images": corpus.images().len(), "phrases": phrases.len(), "max_per_image": max_per_image, "region_failures": failures }))
}

pub(super) fn evaluate(ctx: &mut StageContext) -> StageResult {
    let phrases = load_phrases(ctx)?;
    let training = load_corpus(ctx, ENHANCED)?;
    let ratings = match ctx.config.paths.ratings.clone() {
        None => Vec::new(),
        Some(path) => parse_ratings(&ctx.read_input("ratings", &path)?).map_err(data("ratings"))?,
    };
    let generated: Vec<String> = phrases.iter().map(|p| p.text.clone()).collect();
    let training_texts: Vec<String> = training.descriptors().map(|d| d.text.clone()).collect();
    let mode = match ctx.config.evaluate.diversity.as_str() {
        "sampled" => DiversityMode::Sampled { n_pairs: ctx.config.evaluate.n_pairs, seed: ctx.stage_seed },
        _ => DiversityMode::Exhaustive,
    };
    let report = quality_report(&generated, &training_texts, &ratings, &embedder(ctx), &QualityConfig { diversity: mode })
        .map_err(data("quality report"))?;

    let mut refs: BTreeMap<(&str, [u32; 4]), Vec<String>> = BTreeMap::new();
    let mut by_image: BTreeMap<&str, Vec<String>> = BTreeMap::new();
    for image in training.images() {
        for d in &image.descriptors {
            let region = union_box(&d.subject.bbox, &d.object.bbox).as_array();
            refs.entry((&image.image_id, region)).or_default().push(d.text.clone());
            by_image.entry(&image.image_id).or_default().push(d.text.clone());
        }
    }
    let pairs: Vec<(String, Vec<String>)> = phrases
        .iter()
        .filter_map(|p| {
            let r = refs.get(&(p.image_id.as_str(), p.region.as_array())).or_else(|| by_image.get(p.image_id.as_str()))?;
            Some((p.text.clone(), r.clone()))
        })
        .collect();
    let generation = if pairs.is_empty() { None } else { Some(generation_scores(&pairs).map_err(data("generation scores"))?) };
    ctx.write_json(QUALITY_REPORT, &json!({ "quality": report, "generation": generation }))?;
    Ok(json!({ "phrases": generated.len(), "ratings": ratings.len(), "human_fields": !ratings.is_empty() }))
}

/// One LLM prompt per image, listing the subjects and objects parsed from
/// the image's knowledge phrases in order of first mention.
pub fn compare_prompts(phrases: &[KnowledgePhrase]) -> Vec<(String, String)> {
    let mut per_image: BTreeMap<&str, (Vec<String>, Vec<String>)> = BTreeMap::new();
    for p in phrases {
        if let Some(parsed) = parse_triplet(&p.text) {
            let (subjects, objects) = per_image.entry(&p.image_id).or_default();
            if !subjects.contains(&parsed.triplet.subject) {
                subjects.push(parsed.triplet.subject);
            }
            if !objects.contains(&parsed.triplet.object) {
                objects.push(parsed.triplet.object);
            }
        }
    }
    per_image
        .into_iter()
        .map(|(img, (s, o))| (img.to_string(), build_llm_prompt(&s, &o).expect("parsed triplets name entities")))
        .collect()
}

pub(super) fn compare_kg(ctx: &mut StageContext) -> StageResult {
    let phrases = load_phrases(ctx)?;
    let Some(cassette_path) = ctx.config.paths.llm_cassette.clone() else {
        return Err(StageError::Config(vec![ConfigIssue {
            key: "paths.llm_cassette".into(),
            message: "required by compare-kg".into(),
        }]));
    };
    let mut llm = CassetteLlm::parse(&ctx.read_input("llm_cassette", &cassette_path)?)?;
    let kg = load_kg(ctx)?;
    let sim = embedder(ctx);
    let threshold = ctx.config.compare.threshold;

    let mut visual = Vec::new();
    let mut unparsed = 0;
    for p in &phrases {
        match parse_triplet(&p.text) {
            Some(parsed) => visual.push(parsed.triplet.with_source(p.phrase_id.clone())),
            None => unparsed += 1,
        }
    }
    let kg_err = |e: crate::kg::KgError| StageError::Adapter(e.to_string());
    let mut matched = 0;
    for t in &visual {
        if map_to_kg(t, &kg, &sim, threshold).map_err(kg_err)?.matched {
            matched += 1;
        }
    }

    // graph knowledge: edges joining entities seen together in one image
    let image_of: BTreeMap<&str, &str> = phrases.iter().map(|p| (p.phrase_id.as_str(), p.image_id.as_str())).collect();
    let mut entities: BTreeMap<&str, BTreeSet<String>> = BTreeMap::new();
    for t in &visual {
        let img = t.source.as_deref().and_then(|s| image_of.get(s)).copied().unwrap_or_default();
        let e = entities.entry(img).or_default();
        e.insert(t.subject.clone());
        e.insert(t.object.clone());
    }
    let mut kg_set = Vec::new();
    for heads in entities.values() {
        for h in heads {
            if !kg.has_node(h)? {
                continue;
            }
            for edge in kg.edges(h)? {
                if heads.contains(&edge.target) {
                    if let Ok(t) = Triplet::new(h, &edge.relation, &edge.target) {
                        kg_set.push(t);
                    }
                }
            }
        }
    }

    let prompts = compare_prompts(&phrases);
    let mut llm_set = Vec::new();
    for (image_id, prompt) in &prompts {
        let response = llm.complete(&LlmRequest { prompt: prompt.clone() })?;
        for text in response.phrases {
            if let Some(parsed) = parse_triplet(&text) {
                llm_set.push(parsed.triplet.with_source(image_id.clone()));
            }
        }
    }
    let report = overlap_report(&visual, &kg_set, &llm_set, &sim, threshold).map_err(kg_err)?;
    ctx.write_json(
        OVERLAP_REPORT,
        &json!({
            "report": report,
            "visual_triplets": visual.len(),
            "unparsed_phrases": unparsed,
            "kg_matched": matched,
            "kg_triplets": kg_set.len(),
            "llm_triplets": llm_set.len(),
        }),
    )?;
    Ok(json!({ "visual": visual.len(), "kg_matched": matched, "llm": llm_set.len(), "distinct": report.total }))
}

/// One enrichment query. With `options` it is a multiple-choice item and
/// every option is enriched separately.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Query {
    pub query_id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub options: Option<Vec<String>>,
}

fn load_verbs(ctx: &mut StageContext) -> Result<VerbLists, StageError> {
    let builtin = VerbLists::builtin();
    let (exact, fuzzy) = (ctx.config.paths.verbs_exact.clone(), ctx.config.paths.verbs_fuzzy.clone());
    let exact = match exact {
        Some(p) => VerbLists::parse(&ctx.read_input("verbs_exact", &p)?, "").exact,
        None => builtin.exact,
    };
    let fuzzy = match fuzzy {
        Some(p) => VerbLists::parse("", &ctx.read_input("verbs_fuzzy", &p)?).fuzzy,
        None => builtin.fuzzy,
    };
    Ok(VerbLists { exact, fuzzy })
}

pub(super) fn enrich(ctx: &mut StageContext) -> StageResult {
    let knowledge = load_corpus(ctx, ENHANCED)?;
    let index = KnowledgeIndex::new(&knowledge);
    let queries: Vec<Query> = match ctx.config.paths.queries.clone() {
        Some(path) => from_jsonl(&ctx.read_input("queries", &path)?)
            .map_err(|(line, e)| StageError::Data(format!("queries line {line}: {e}")))?,
        None => load_corpus(ctx, CORPUS)?
            .images()
            .iter()
            .map(|i| Query {
                query_id: i.image_id.clone(),
                text: i.descriptors.iter().map(|d| d.text.as_str()).collect::<Vec<_>>().join(", "),
                options: None,
            })
            .collect(),
    };
    let verbs = load_verbs(ctx)?;
    let kg = load_kg(ctx)?;
    let section = &ctx.config.enrich;
    let filter = QueryFilter { min_nouns: section.min_nouns, min_relations: section.min_relations };
    let app_err = |e: crate::apps::AppError| match e {
        crate::apps::AppError::Adapter(a) => StageError::Adapter(a.to_string()),
        other => StageError::Data(other.to_string()),
    };

    let mut records = Vec::new();
    let mut skipped = 0;
    for q in &queries {
        if !filter.accepts(&q.text) {
            skipped += 1;
            continue;
        }
        match &q.options {
            None => {
                let (enriched, appended) = enrich_caption(&q.text, &index, section.min_share).map_err(app_err)?;
                records.push(EnrichmentRecord { query_id: q.query_id.clone(), original: q.text.clone(), enriched, appended });
            }
            Some(options) => {
                let out = enrich_vcr(&q.text, options, &index, &verbs, Some(&kg as &dyn KnowledgeSourceAdapter), section.min_share)
                    .map_err(app_err)?;
                for (k, (option, (enriched, appended))) in options.iter().zip(out).enumerate() {
                    records.push(EnrichmentRecord {
                        query_id: format!("{}/{k}", q.query_id),
                        original: option.clone(),
                        enriched,
                        appended,
                    });
                }
            }
        }
    }
    ctx.write(ENRICHMENT, &to_jsonl(&records).expect("records serialize"))?;
    let enriched = records.iter().filter(|r| !r.appended.is_empty()).count();
    Ok(json!({ "queries": queries.len(), "filtered_out": skipped, "records": records.len(), "enriched": enriched }))
}
