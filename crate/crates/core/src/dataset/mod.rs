//! Labeled statement datasets.
//!
//! Factual statements come from [`TemplateTable`]s: each table pairs
//! positive sentence patterns with hand-written negated patterns, and a list
//! of entity rows whose filled-in positive sentence carries a known truth
//! label. Negations, contrast pairs, leave-one-out splits and chance-labeled
//! urn statements are all derived from these.

mod chance;
pub mod tables;
mod template;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::rng;

pub use chance::{generate_chance_set, random_urns, sample_urn_texts, Urn, CHANCE_DATASET, URN_COLORS};
pub use template::{EntityRow, Template, TemplateTable};

/// Suffix appended to the id of a negated statement.
pub const NEGATED_ID_SUFFIX: &str = "-neg";
/// Prefix of the dataset a negated statement belongs to (`Facts` → `NegFacts`).
pub const NEGATED_DATASET_PREFIX: &str = "Neg";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Negated,
}

/// An exact probability `num / den`, always stored in lowest terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Chance {
    num: u32,
    den: u32,
}

impl Chance {
    pub fn new(num: u32, den: u32) -> Result<Self> {
        if den == 0 {
            return Err(Error::Argument("chance denominator is zero".into()));
        }
        if num > den {
            return Err(Error::Argument(format!("chance {num}/{den} exceeds 1")));
        }
        let g = gcd(num, den);
        Ok(Self {
            num: num / g,
            den: den / g,
        })
    }

    pub fn numer(self) -> u32 {
        self.num
    }

    pub fn denom(self) -> u32 {
        self.den
    }

    pub fn to_f64(self) -> f64 {
        f64::from(self.num) / f64::from(self.den)
    }

    /// Recovers the exact fraction from its `f64` rendering, searching
    /// denominators up to `max_den` by continued fractions.
    pub fn from_f64(value: f64, max_den: u32) -> Option<Self> {
        if !(0.0..=1.0).contains(&value) {
            return None;
        }
        let (mut p0, mut q0, mut p1, mut q1) = (0u64, 1u64, 1u64, 0u64);
        let mut x = value;
        loop {
            let a = x.floor();
            let (p2, q2) = (a as u64 * p1 + p0, a as u64 * q1 + q0);
            if q2 > u64::from(max_den) {
                return None;
            }
            let candidate = Chance::new(p2 as u32, q2 as u32).ok()?;
            if candidate.to_f64() == value {
                return Some(candidate);
            }
            let frac = x - a;
            if frac == 0.0 {
                return None;
            }
            x = 1.0 / frac;
            (p0, q0, p1, q1) = (p1, q1, p2, q2);
        }
    }
}

impl fmt::Display for Chance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

impl Serialize for Chance {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_f64(self.to_f64())
    }
}

impl<'de> Deserialize<'de> for Chance {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let value = f64::deserialize(deserializer)?;
        Chance::from_f64(value, 1_000_000).ok_or_else(|| {
            serde::de::Error::custom(format!("chance {value} is not a small exact fraction in [0,1]"))
        })
    }
}

fn gcd(mut a: u32, mut b: u32) -> u32 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a.max(1)
}

mod label_bit {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(label: &Option<bool>, s: S) -> Result<S::Ok, S::Error> {
        match label {
            Some(b) => s.serialize_u8(u8::from(*b)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<bool>, D::Error> {
        match Option::<u8>::deserialize(d)? {
            None => Ok(None),
            Some(0) => Ok(Some(false)),
            Some(1) => Ok(Some(true)),
            Some(other) => Err(serde::de::Error::custom(format!("label must be 0 or 1, got {other}"))),
        }
    }
}

/// One labeled text item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Statement {
    pub id: String,
    pub text: String,
    #[serde(default, with = "label_bit", skip_serializing_if = "Option::is_none")]
    pub label: Option<bool>,
    pub dataset: String,
    pub polarity: Polarity,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chance: Option<Chance>,
}

impl Statement {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::Validation(format!("statement {:?}: {msg}", self.id)));
        if self.id.is_empty() {
            return fail("empty id");
        }
        if self.text.trim().is_empty() {
            return fail("empty text");
        }
        if !self.text.ends_with('.') {
            return fail("text must end with \".\"");
        }
        if self.label.is_some() == self.chance.is_some() {
            return fail("exactly one of label and chance must be present");
        }
        if self.polarity == Polarity::Negated && self.pair_id.is_none() {
            return fail("negated statement without pair_id");
        }
        Ok(())
    }

    /// Byte offset where the final sentence (the outcome clause of a chance
    /// statement) begins. Zero for single-sentence texts.
    pub fn outcome_offset(&self) -> usize {
        let body = &self.text[..self.text.len().saturating_sub(1)];
        body.rfind(". ").map_or(0, |i| i + 2)
    }

    /// Numeric training target: the truth label, or the chance value.
    pub fn target(&self) -> Option<f64> {
        match (self.label, self.chance) {
            (Some(l), _) => Some(if l { 1.0 } else { 0.0 }),
            (None, Some(c)) => Some(c.to_f64()),
            (None, None) => None,
        }
    }
}

/// Indices of a statement `x⁺` and its negation `x⁻` within one list or store.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContrastPair {
    pub pos_index: usize,
    pub neg_index: usize,
    /// Truth of `x⁺`. Evaluation only; CCS training never reads it.
    pub label: Option<bool>,
}

/// Samples `n` label-balanced positive statements from every
/// (template, row) combination of `table`. Deterministic in `seed`.
pub fn generate_facts(table: &TemplateTable, n: usize, seed: u64) -> Result<Vec<Statement>> {
    table.check()?;
    if n < 2 {
        return Err(Error::Argument(format!("generate_facts needs n >= 2, got {n}")));
    }
    if (n % 2) as f64 / n as f64 > 0.1 {
        return Err(Error::Argument(format!(
            "n = {n} cannot be split into true and false statements within 10%; use an even n or n >= 10"
        )));
    }
    let candidates = table.candidates();
    if n > candidates.len() {
        return Err(Error::Capacity {
            requested: n,
            available: candidates.len(),
        });
    }

    let (mut trues, mut falses): (Vec<_>, Vec<_>) = candidates.into_iter().partition(|c| c.label);
    let n_true_avail = trues.len();
    let n_false_avail = falses.len();
    let mut n_true = (n / 2).min(n_true_avail);
    let mut n_false = n - n_true;
    if n_false > n_false_avail {
        n_false = n_false_avail;
        n_true = n - n_false;
    }
    let imbalance = n_true.abs_diff(n_false) as f64 / n as f64;
    if n_true > n_true_avail || imbalance > 0.1 {
        return Err(Error::Capacity {
            requested: n,
            available: 2 * n_true_avail.min(n_false_avail),
        });
    }

    let mut rng = rng::stream(seed, &format!("dataset/{}", table.name));
    let mut pick = |pool: &mut Vec<template::Candidate>, k: usize| {
        // Pinned exemplars first, then a seeded sample of the rest.
        let (mut chosen, mut rest): (Vec<_>, Vec<_>) = pool.drain(..).partition(|c| c.pinned);
        chosen.truncate(k);
        rest.shuffle(&mut rng);
        let need = k - chosen.len();
        chosen.extend(rest.into_iter().take(need));
        chosen
    };
    let mut chosen = pick(&mut trues, n_true);
    chosen.extend(pick(&mut falses, n_false));
    chosen.shuffle(&mut rng);

    Ok(chosen
        .into_iter()
        .enumerate()
        .map(|(i, c)| Statement {
            id: format!("{}-{:04}", table.name, i),
            text: c.text,
            label: Some(c.label),
            dataset: table.name.clone(),
            polarity: Polarity::Positive,
            pair_id: None,
            chance: None,
        })
        .collect())
}

/// Maps a statement to its negation (and a negation back to its positive
/// form) by swapping the matching template pattern. The label flips; the
/// result carries a `pair_id` linking both members.
pub fn negate(s: &Statement, table: &TemplateTable) -> Result<Statement> {
    let label = s.label.ok_or_else(|| Error::Unnegatable(s.text.clone()))?;
    let text = table
        .swap_polarity(&s.text, s.polarity)
        .ok_or_else(|| Error::Unnegatable(s.text.clone()))?;
    let pair_id = s.pair_id.clone().unwrap_or_else(|| s.id.clone());
    let (id, dataset, polarity) = match s.polarity {
        Polarity::Positive => (
            format!("{}{NEGATED_ID_SUFFIX}", s.id),
            format!("{NEGATED_DATASET_PREFIX}{}", s.dataset),
            Polarity::Negated,
        ),
        Polarity::Negated => (
            s.id.strip_suffix(NEGATED_ID_SUFFIX).unwrap_or(&s.id).to_string(),
            s.dataset
                .strip_prefix(NEGATED_DATASET_PREFIX)
                .unwrap_or(&s.dataset)
                .to_string(),
            Polarity::Positive,
        ),
    };
    Ok(Statement {
        id,
        text,
        label: Some(!label),
        dataset,
        polarity,
        pair_id: Some(pair_id),
        chance: None,
    })
}

/// Negates every statement and returns `(positives with pair_id set, negations)`.
pub fn negate_all(statements: &[Statement], table: &TemplateTable) -> Result<(Vec<Statement>, Vec<Statement>)> {
    let mut positives = Vec::with_capacity(statements.len());
    let mut negations = Vec::with_capacity(statements.len());
    for s in statements {
        let neg = negate(s, table)?;
        let mut pos = s.clone();
        pos.pair_id = neg.pair_id.clone();
        positives.push(pos);
        negations.push(neg);
    }
    Ok((positives, negations))
}

/// Groups statements by `pair_id` into (positive, negated) index pairs, in
/// order of first appearance.
pub fn make_contrast_pairs(statements: &[Statement]) -> Result<Vec<ContrastPair>> {
    let mut order: Vec<&str> = Vec::new();
    let mut slots: HashMap<&str, (Vec<usize>, Vec<usize>)> = HashMap::new();
    let mut offenders = Vec::new();
    for (i, s) in statements.iter().enumerate() {
        let Some(pid) = s.pair_id.as_deref() else {
            offenders.push(s.id.clone());
            continue;
        };
        let entry = slots.entry(pid).or_insert_with(|| {
            order.push(pid);
            (Vec::new(), Vec::new())
        });
        match s.polarity {
            Polarity::Positive => entry.0.push(i),
            Polarity::Negated => entry.1.push(i),
        }
    }
    let mut pairs = Vec::with_capacity(order.len());
    for pid in order {
        match &slots[pid] {
            (p, n) if p.len() == 1 && n.len() == 1 => pairs.push(ContrastPair {
                pos_index: p[0],
                neg_index: n[0],
                label: statements[p[0]].label,
            }),
            _ => offenders.push(pid.to_string()),
        }
    }
    if offenders.is_empty() {
        Ok(pairs)
    } else {
        Err(Error::Pairing(offenders))
    }
}

/// Splits named datasets into (everything except `holdout`, `holdout`).
pub fn split_leave_one_out(
    datasets: &BTreeMap<String, Vec<Statement>>,
    holdout: &str,
) -> Result<(Vec<Statement>, Vec<Statement>)> {
    if datasets.len() < 2 {
        return Err(Error::Protocol(format!(
            "leave-one-out needs at least 2 datasets, got {}",
            datasets.len()
        )));
    }
    let test = datasets
        .get(holdout)
        .ok_or_else(|| Error::UnknownDataset(holdout.to_string()))?
        .clone();
    let train: Vec<Statement> = datasets
        .iter()
        .filter(|(name, _)| name.as_str() != holdout)
        .flat_map(|(_, v)| v.iter().cloned())
        .collect();
    let test_ids: HashSet<&str> = test.iter().map(|s| s.id.as_str()).collect();
    if let Some(dup) = train.iter().find(|s| test_ids.contains(s.id.as_str())) {
        return Err(Error::Data(format!("id {:?} appears in both train and test", dup.id)));
    }
    Ok((train, test))
}

/// LM training text: every true sentence the tables can express, in both
/// polarities, plus `draws` sampled outcomes per urn. Sorted, so the result
/// depends only on the inputs and `seed`.
pub fn lm_corpus(tables: &[TemplateTable], urns: &[Urn], draws: usize, seed: u64) -> Result<Vec<String>> {
    let mut out: Vec<String> = tables.iter().flat_map(TemplateTable::true_sentences).collect();
    out.extend(sample_urn_texts(urns, draws, seed)?);
    out.sort_unstable();
    Ok(out)
}

pub fn write_jsonl<W: Write>(mut w: W, statements: &[Statement]) -> Result<()> {
    for s in statements {
        serde_json::to_writer(&mut w, s)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_jsonl<R: BufRead>(r: R, origin: &Path) -> Result<Vec<Statement>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let s: Statement = serde_json::from_str(&line).map_err(|e| Error::Malformed {
            path: origin.to_path_buf(),
            line: i + 1,
            msg: e.to_string(),
        })?;
        s.validate().map_err(|e| Error::Malformed {
            path: origin.to_path_buf(),
            line: i + 1,
            msg: e.to_string(),
        })?;
        out.push(s);
    }
    Ok(out)
}

pub fn save_jsonl(path: &Path, statements: &[Statement]) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_jsonl(std::io::BufWriter::new(file), statements)
}

pub fn load_jsonl(path: &Path) -> Result<Vec<Statement>> {
    let file = std::fs::File::open(path)?;
    read_jsonl(std::io::BufReader::new(file), path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cities() -> TemplateTable {
        tables::cities()
    }

    fn stmt(id: &str, text: &str, label: bool) -> Statement {
        Statement {
            id: id.into(),
            text: text.into(),
            label: Some(label),
            dataset: "Facts".into(),
            polarity: Polarity::Positive,
            pair_id: None,
            chance: None,
        }
    }

    #[test]
    fn four_cities_are_balanced() {
        let out = generate_facts(&cities(), 4, 7).unwrap();
        assert_eq!(out.len(), 4);
        assert_eq!(out.iter().filter(|s| s.label == Some(true)).count(), 2);
        assert!(out.iter().all(|s| s.polarity == Polarity::Positive));
    }

    #[test]
    fn sampled_labels_agree_with_the_entity_table() {
        let table = cities();
        let truth: HashMap<String, bool> = table.candidates().into_iter().map(|c| (c.text, c.label)).collect();
        for s in generate_facts(&table, 40, 3).unwrap() {
            assert_eq!(Some(truth[&s.text]), s.label, "{}", s.text);
        }
    }

    #[test]
    fn zero_or_one_requested_is_rejected() {
        assert!(matches!(generate_facts(&cities(), 0, 1), Err(Error::Argument(_))));
        assert!(matches!(generate_facts(&cities(), 1, 1), Err(Error::Argument(_))));
    }

    #[test]
    fn too_many_requested_is_a_capacity_error() {
        let table = cities();
        let cap = table.candidates().len();
        assert!(matches!(
            generate_facts(&table, cap + 1, 1),
            Err(Error::Capacity { .. })
        ));
    }

    #[test]
    fn empty_table_is_a_configuration_error() {
        let table = TemplateTable::new("Empty", vec![], vec![]);
        assert!(matches!(generate_facts(&table, 4, 1), Err(Error::Config(_))));
    }

    #[test]
    fn tripoli_exemplar_always_present() {
        for seed in [1, 2, 3] {
            let out = generate_facts(&cities(), 2, seed).unwrap();
            let t = out.iter().find(|s| s.text == "Tripoli is a city in Libya.").unwrap();
            assert_eq!(t.label, Some(true));
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_jsonl(&mut a, &generate_facts(&cities(), 50, 11).unwrap()).unwrap();
        write_jsonl(&mut b, &generate_facts(&cities(), 50, 11).unwrap()).unwrap();
        assert_eq!(a, b);
        let mut c = Vec::new();
        write_jsonl(&mut c, &generate_facts(&cities(), 50, 12).unwrap()).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn earth_orbit_negation() {
        let table = tables::facts();
        let s = stmt("f1", "The earth orbits the sun.", true);
        let n = negate(&s, &table).unwrap();
        assert_eq!(n.text, "The earth doesn't orbit the sun.");
        assert_eq!(n.label, Some(false));
        assert_eq!(n.polarity, Polarity::Negated);
        assert_eq!(n.dataset, "NegFacts");
        assert_eq!(n.pair_id.as_deref(), Some("f1"));
        assert_eq!(s.pair_id, None, "original untouched");
    }

    #[test]
    fn tripoli_negation_and_double_negation() {
        let table = cities();
        let mut s = stmt("c1", "Tripoli is a city in Libya.", true);
        s.dataset = "Cities".into();
        let n = negate(&s, &table).unwrap();
        assert_eq!(n.text, "Tripoli is not a city in Libya.");
        assert_eq!(n.label, Some(false));
        let back = negate(&n, &table).unwrap();
        assert_eq!(back.text, s.text);
        assert_eq!(back.label, s.label);
        assert_eq!(back.id, s.id);
        assert_eq!(back.dataset, s.dataset);
    }

    #[test]
    fn unknown_sentence_is_unnegatable() {
        let s = stmt("x", "Colorless green ideas sleep furiously.", true);
        assert!(matches!(negate(&s, &cities()), Err(Error::Unnegatable(_))));
    }

    #[test]
    fn every_template_fill_negates_and_flips() {
        for table in tables::all() {
            for c in table.candidates() {
                let s = stmt("t", &c.text, c.label);
                let n = negate(&s, &table).unwrap_or_else(|e| panic!("{}: {e}", c.text));
                assert_eq!(n.label, Some(!c.label));
                let back = negate(&n, &table).unwrap();
                assert_eq!(back.text, c.text);
            }
        }
    }

    #[test]
    fn flat_earth_forms_one_pair() {
        let mut pos = stmt("e", "The earth is flat.", false);
        pos.pair_id = Some("p".into());
        let mut neg = stmt("e-neg", "The earth is not flat.", true);
        neg.polarity = Polarity::Negated;
        neg.pair_id = Some("p".into());
        let pairs = make_contrast_pairs(&[neg, pos]).unwrap();
        assert_eq!(
            pairs,
            vec![ContrastPair {
                pos_index: 1,
                neg_index: 0,
                label: Some(false)
            }]
        );
    }

    #[test]
    fn ten_positives_ten_negations_ten_pairs() {
        let facts = generate_facts(&cities(), 10, 5).unwrap();
        let (pos, neg) = negate_all(&facts, &cities()).unwrap();
        let all: Vec<_> = pos.into_iter().chain(neg).collect();
        let pairs = make_contrast_pairs(&all).unwrap();
        assert_eq!(pairs.len(), 10);
        for p in &pairs {
            assert_eq!(all[p.pos_index].polarity, Polarity::Positive);
            assert_eq!(all[p.neg_index].polarity, Polarity::Negated);
            assert_eq!(all[p.pos_index].pair_id, all[p.neg_index].pair_id);
        }
    }

    #[test]
    fn orphan_is_named() {
        let facts = generate_facts(&cities(), 4, 5).unwrap();
        let (pos, neg) = negate_all(&facts[..3], &cities()).unwrap();
        let orphan = pos[2].pair_id.clone().unwrap();
        let all: Vec<_> = pos.into_iter().chain(neg.into_iter().take(2)).collect();
        match make_contrast_pairs(&all) {
            Err(Error::Pairing(names)) => assert_eq!(names, vec![orphan]),
            other => panic!("expected pairing error, got {other:?}"),
        }
    }

    fn named(names: &[&str]) -> BTreeMap<String, Vec<Statement>> {
        names
            .iter()
            .map(|n| {
                let mut s = stmt(&format!("{n}-1"), "A thing is so.", true);
                s.dataset = n.to_string();
                (n.to_string(), vec![s])
            })
            .collect()
    }

    #[test]
    fn leave_animals_out() {
        let d = named(&["Cities", "Companies", "Elements", "Facts", "Inventions", "Animals"]);
        let (train, test) = split_leave_one_out(&d, "Animals").unwrap();
        assert_eq!(test.len(), 1);
        assert_eq!(test[0].dataset, "Animals");
        let mut names: Vec<_> = train.iter().map(|s| s.dataset.as_str()).collect();
        names.sort();
        assert_eq!(names, ["Cities", "Companies", "Elements", "Facts", "Inventions"]);
    }

    #[test]
    fn minimal_split_and_missing_key() {
        let d = named(&["A", "B"]);
        let (train, test) = split_leave_one_out(&d, "B").unwrap();
        assert_eq!((train[0].dataset.as_str(), test[0].dataset.as_str()), ("A", "B"));
        assert!(matches!(split_leave_one_out(&d, "Oceans"), Err(Error::UnknownDataset(_))));
    }

    #[test]
    fn chance_from_f64_recovers_small_fractions() {
        for (n, d) in [(2, 5), (0, 1), (1, 1), (3, 10), (7, 13), (1, 3)] {
            let c = Chance::new(n, d).unwrap();
            assert_eq!(Chance::from_f64(c.to_f64(), 1_000_000), Some(c));
        }
    }

    #[test]
    fn serialized_field_order_and_omission() {
        let mut s = stmt("a", "The earth orbits the sun.", true);
        s.pair_id = Some("a".into());
        let line = serde_json::to_string(&s).unwrap();
        assert_eq!(
            line,
            r#"{"id":"a","text":"The earth orbits the sun.","label":1,"dataset":"Facts","polarity":"positive","pair_id":"a"}"#
        );
        let back: Statement = serde_json::from_str(&line).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn validation_rules() {
        let mut s = stmt("a", "No period", true);
        assert!(s.validate().is_err());
        s.text = "Fine.".into();
        assert!(s.validate().is_ok());
        s.chance = Some(Chance::new(1, 2).unwrap());
        assert!(s.validate().is_err(), "label and chance both present");
        s.chance = None;
        s.polarity = Polarity::Negated;
        assert!(s.validate().is_err(), "negated without pair id");
    }
}
