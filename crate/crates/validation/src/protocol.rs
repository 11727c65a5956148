//! Checks one substitution plan end to end on a synthetic training set.

use mrforge::dataset::{self, AugmentationPlan};
use mrforge::mr::{LabeledSample, MetamorphicRelation, MrKind};
use mrforge::transforms::GrayImage;

/// `k` samples whose first pixel encodes their position, labels cycling 0–9.
pub fn synthetic_set(k: usize) -> Vec<LabeledSample> {
    (0..k)
        .map(|i| {
            let img = GrayImage::from_fn(6, 6, |r, c| {
                if r == 0 && c == 0 {
                    i as f32 / k as f32
                } else {
                    ((i + r * 6 + c) % 7) as f32 / 6.0
                }
            });
            LabeledSample::new(img, (i % 10) as u8).unwrap()
        })
        .collect()
}

pub fn check(k: usize, m: usize, kind: MrKind, seed: u64) -> Result<(), String> {
    let s = synthetic_set(k);
    let plan = AugmentationPlan::new(k, m, kind, seed).map_err(|e| e.to_string())?;
    let mr = MetamorphicRelation::with_defaults(kind);
    let split = dataset::build_augmented_set(&s, &plan, &mr).map_err(|e| e.to_string())?;
    let half = m / 2;
    let ensure = |ok: bool, what: &str| {
        if ok {
            Ok(())
        } else {
            Err(format!("k={k} m={m} {kind}: {what}"))
        }
    };

    ensure(split.s1.len() == k - m, "|S1| != k - m")?;
    ensure(split.s2.len() == m, "|S2| != m")?;
    ensure(split.s_prime.len() == k, "|S'| != k")?;
    ensure(split.groups.len() == half, "group count != m/2")?;
    for (n, g) in split.groups.iter().enumerate() {
        ensure(
            split.s2[n] == g.source,
            "S2 does not start with the sources",
        )?;
        ensure(
            split.s2[half + n] == g.followup,
            "S2 does not end with the follow-ups",
        )?;
        ensure(
            g.source == s[split.source_positions[n]],
            "source is not from S",
        )?;
        ensure(
            g.verify(&mr).map_err(|e| e.to_string())?,
            "follow-up fails its relation",
        )?;
    }
    let mut used = vec![0u8; k];
    for &p in split
        .s1_positions
        .iter()
        .chain(&split.source_positions)
        .chain(&split.discarded_positions)
    {
        used[p] += 1;
    }
    ensure(used.iter().all(|&u| u == 1), "positions do not partition S")?;
    ensure(
        split.discarded_positions.len() == half,
        "discarded count != m/2",
    )?;
    ensure(
        split.s_prime[..k - m] == split.s1[..] && split.s_prime[k - m..] == split.s2[..],
        "S' != S1 ++ S2",
    )?;
    let discarded: Vec<&LabeledSample> = split.discarded_positions.iter().map(|&p| &s[p]).collect();
    ensure(
        split.s_prime.iter().all(|x| !discarded.contains(&x)),
        "S' contains a discarded sample",
    )?;

    let again = dataset::build_augmented_set(&s, &plan, &mr).map_err(|e| e.to_string())?;
    ensure(
        again.s_prime == split.s_prime && again.groups == split.groups,
        "seed replay differs",
    )?;
    Ok(())
}
