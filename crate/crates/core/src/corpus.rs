// SPDX-License-Identifier: MIT OR Apache-2.0

//! Seeded synthetic data: images, object annotations and captions.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::eval::AnnotationRecord;
use crate::perturb::{hallucinate_caption_rule, CaptionPair, CaptionSource, HallucinationLexicon};
use crate::rng::XorShift64Star;
use crate::tensor::Tensor;
use crate::vlm::{default_objects, ToyVlmConfig};

/// `n` images with pixels uniform in `[0, 1)`.
pub fn synthetic_images(config: &ToyVlmConfig, n: usize, seed: u64) -> Result<Vec<Tensor>> {
    (0..n)
        .map(|i| {
            let mut rng = XorShift64Star::derived(seed, i as u64);
            let data = (0..config.image_h * config.image_w).map(|_| rng.next_f32()).collect();
            Tensor::new(vec![config.image_h, config.image_w], data)
        })
        .collect()
}

/// `n` images named `img{i}`, each holding between `min_objects` and
/// `max_objects` distinct objects drawn from `objects`.
pub fn synthetic_annotations(
    n: usize,
    objects: &[String],
    min_objects: usize,
    max_objects: usize,
    seed: u64,
) -> Result<Vec<AnnotationRecord>> {
    if min_objects == 0 || min_objects > max_objects || max_objects > objects.len() {
        return Err(Error::Config(format!(
            "cannot draw {min_objects}..={max_objects} objects from {}",
            objects.len()
        )));
    }
    Ok((0..n)
        .map(|i| {
            let mut rng = XorShift64Star::derived(seed, i as u64);
            let k = min_objects + rng.below(max_objects - min_objects + 1);
            let present: BTreeSet<String> =
                rng.choose_indices(objects.len(), k).into_iter().map(|j| objects[j].clone()).collect();
            AnnotationRecord {
                image_id: format!("img{i}"),
                present_objects: present,
            }
        })
        .collect())
}

/// The default object list as owned strings.
pub fn object_list() -> Vec<String> {
    default_objects().into_iter().map(str::to_string).collect()
}

/// "a dog and a cup in the image"
pub fn caption_for(record: &AnnotationRecord) -> String {
    let objs: Vec<String> = record.present_objects.iter().map(|o| format!("a {o}")).collect();
    format!("{} in the image", objs.join(" and "))
}

/// Caption pairs from annotations, hallucinated by the rule-based lexicon.
pub fn synthetic_caption_pairs(
    annotations: &[AnnotationRecord],
    lexicon: &HallucinationLexicon,
    seed: u64,
) -> Result<Vec<CaptionPair>> {
    annotations
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let original = caption_for(r);
            let hallucinated = hallucinate_caption_rule(&original, lexicon, XorShift64Star::derived(seed, i as u64).next_u64())?;
            CaptionPair::new(&original, &hallucinated, CaptionSource::Rule)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vlm::default_vocab;

    #[test]
    fn deterministic_and_in_vocab() {
        let objs = object_list();
        let a = synthetic_annotations(20, &objs, 2, 4, 3).unwrap();
        assert_eq!(a, synthetic_annotations(20, &objs, 2, 4, 3).unwrap());
        let vocab = default_vocab();
        for r in &a {
            r.validate(&vocab).unwrap();
            assert!((2..=4).contains(&r.present_objects.len()));
        }
        let pairs = synthetic_caption_pairs(&a, &HallucinationLexicon::default(), 1).unwrap();
        assert_eq!(pairs.len(), 20);
        let imgs = synthetic_images(&ToyVlmConfig::default(), 3, 0).unwrap();
        assert_ne!(imgs[0], imgs[1]);
    }
}
