use super::{bleu, meteor, rouge_l, EvalError, RatingRecord};
use crate::generator::{checked_embed, cosine, SimilarityAdapter};
use crate::text::normalize;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashMap};

/// Share of generated phrases whose normalized text is absent from training.
pub fn freshness(generated: &[String], training: &[String]) -> Result<f64, EvalError> {
    if generated.is_empty() {
        return Err(EvalError::NoGenerated);
    }
    let seen: BTreeSet<String> = training.iter().map(|t| normalize(t)).collect();
    let fresh = generated.iter().filter(|g| !seen.contains(&normalize(g))).count();
    Ok(fresh as f64 / generated.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DiversityMode {
    /// Every unordered pair once.
    Exhaustive,
    /// `n_pairs` uniformly drawn unordered pairs, with replacement.
    Sampled { n_pairs: usize, seed: u64 },
}

/// Mean of `clamp(1 - cosine, 0, 1)` over phrase pairs. Returns the value and
/// the number of pairs evaluated.
pub fn diversity(phrases: &[String], adapter: &dyn SimilarityAdapter, mode: DiversityMode) -> Result<(f64, usize), EvalError> {
    let n = phrases.len();
    if n < 2 {
        return Err(EvalError::TooFewPhrases(n));
    }
    let mut cache: HashMap<&str, Vec<f64>> = HashMap::new();
    for p in phrases {
        if !cache.contains_key(p.as_str()) {
            if p.trim().is_empty() {
                return Err(EvalError::EmptyText);
            }
            cache.insert(p, checked_embed(adapter, p)?);
        }
    }
    let distance = |i: usize, j: usize| -> Result<f64, EvalError> {
        let s = cosine(&cache[phrases[i].as_str()], &cache[phrases[j].as_str()])?;
        Ok((1.0 - s).clamp(0.0, 1.0))
    };
    let mut total = 0.0;
    let mut count = 0;
    match mode {
        DiversityMode::Exhaustive => {
            for i in 0..n {
                for j in i + 1..n {
                    total += distance(i, j)?;
                    count += 1;
                }
            }
        }
        DiversityMode::Sampled { n_pairs, seed } => {
            if n_pairs == 0 {
                return Err(EvalError::InvalidParameter("n_pairs must be positive".into()));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..n_pairs {
                let i = rng.gen_range(0..n);
                let mut j = rng.gen_range(0..n - 1);
                if j >= i {
                    j += 1;
                }
                total += distance(i, j)?;
                count += 1;
            }
        }
    }
    Ok(((total / count as f64).clamp(0.0, 1.0), count))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QualityConfig {
    pub diversity: DiversityMode,
}

impl Default for QualityConfig {
    fn default() -> Self {
        QualityConfig { diversity: DiversityMode::Exhaustive }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSizes {
    pub generated: usize,
    pub training: usize,
    pub diversity_pairs: usize,
    pub ratings: usize,
    pub rated_phrases: usize,
    pub rated_images: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageQuality {
    pub phrases: usize,
    pub validity: f64,
    /// On [0, 1] (raw mean divided by 3).
    pub conformity: f64,
}

/// Human fields are present only when ratings were supplied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub validity: Option<f64>,
    /// Conformity on [0, 1].
    #[serde(skip_serializing_if = "Option::is_none")]
    pub conformity: Option<f64>,
    /// Conformity on the original 0..3 scale.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub conformity_raw: Option<f64>,
    /// Means over images of per-image phrase means.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub validity_by_image: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub conformity_by_image: Option<f64>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty", default)]
    pub per_image: BTreeMap<String, ImageQuality>,
    pub freshness: f64,
    pub diversity: f64,
    pub samples: SampleSizes,
}

fn mean(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (s, n) = xs.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

/// Aggregate the four quality perspectives. Ratings are averaged across
/// raters per phrase, then across phrases.
pub fn quality_report(
    generated: &[String],
    training: &[String],
    ratings: &[RatingRecord],
    adapter: &dyn SimilarityAdapter,
    config: &QualityConfig,
) -> Result<QualityReport, EvalError> {
    for r in ratings {
        r.validate()?;
    }
    let fresh = freshness(generated, training)?;
    let (div, pairs) = diversity(generated, adapter, config.diversity)?;

    // (image, phrase) -> (validity sum, conformity sum, count)
    let mut per_phrase: BTreeMap<(&str, &str), (f64, f64, usize)> = BTreeMap::new();
    for r in ratings {
        let e = per_phrase.entry((&r.image_id, &r.phrase_id)).or_default();
        e.0 += r.validity as f64;
        e.1 += r.conformity as f64;
        e.2 += 1;
    }
    let phrase_means: Vec<(&str, f64, f64)> =
        per_phrase.iter().map(|((img, _), (v, c, n))| (*img, v / *n as f64, c / *n as f64)).collect();

    let mut per_image: BTreeMap<String, ImageQuality> = BTreeMap::new();
    let mut report = QualityReport {
        validity: None,
        conformity: None,
        conformity_raw: None,
        validity_by_image: None,
        conformity_by_image: None,
        per_image: BTreeMap::new(),
        freshness: fresh,
        diversity: div,
        samples: SampleSizes {
            generated: generated.len(),
            training: training.len(),
            diversity_pairs: pairs,
            ratings: ratings.len(),
            rated_phrases: phrase_means.len(),
            rated_images: 0,
        },
    };
    if phrase_means.is_empty() {
        return Ok(report);
    }
    let raw = mean(phrase_means.iter().map(|p| p.2));
    report.validity = Some(mean(phrase_means.iter().map(|p| p.1)));
    report.conformity_raw = Some(raw);
    report.conformity = Some(raw / 3.0);

    let mut grouped: BTreeMap<&str, Vec<(f64, f64)>> = BTreeMap::new();
    for (img, v, c) in &phrase_means {
        grouped.entry(img).or_default().push((*v, *c));
    }
    for (img, rows) in grouped {
        per_image.insert(
            img.to_string(),
            ImageQuality {
                phrases: rows.len(),
                validity: mean(rows.iter().map(|r| r.0)),
                conformity: mean(rows.iter().map(|r| r.1)) / 3.0,
            },
        );
    }
    report.validity_by_image = Some(mean(per_image.values().map(|q| q.validity)));
    report.conformity_by_image = Some(mean(per_image.values().map(|q| q.conformity)));
    report.samples.rated_images = per_image.len();
    report.per_image = per_image;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationScores {
    pub bleu: f64,
    pub rouge_l: f64,
    pub meteor: f64,
    pub count: usize,
}

/// Mean BLEU-4, ROUGE-L and METEOR over (candidate, references) pairs.
/// ROUGE-L and METEOR take the best score over the references.
pub fn generation_scores(pairs: &[(String, Vec<String>)]) -> Result<GenerationScores, EvalError> {
    if pairs.is_empty() {
        return Err(EvalError::NoGenerated);
    }
    let (mut b, mut r, mut m) = (0.0, 0.0, 0.0);
    for (cand, refs) in pairs {
        let refs: Vec<&str> = refs.iter().map(String::as_str).collect();
        b += bleu(cand, &refs, 4)?;
        let mut best_r = 0.0f64;
        let mut best_m = 0.0f64;
        for rf in &refs {
            best_r = best_r.max(rouge_l(cand, rf)?);
            best_m = best_m.max(meteor(cand, rf)?);
        }
        r += best_r;
        m += best_m;
    }
    let n = pairs.len() as f64;
    Ok(GenerationScores { bleu: b / n, rouge_l: r / n, meteor: m / n, count: pairs.len() })
}
