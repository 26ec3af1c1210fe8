use std::collections::{BTreeMap, HashSet};

use regex::Regex;

use super::Polarity;
use crate::error::{Error, Result};

/// A positive sentence pattern and its negated counterpart, with `{slot}`
/// placeholders, e.g. `"{city} is a city in {country}."`.
#[derive(Debug, Clone)]
pub struct Template {
    pub positive: String,
    pub negated: String,
    pub slots: Vec<String>,
    positive_re: Regex,
    negated_re: Regex,
}

impl Template {
    pub fn new(positive: &str, negated: &str) -> Result<Self> {
        let slots = slot_names(positive);
        let mut neg_slots = slot_names(negated);
        let mut sorted = slots.clone();
        sorted.sort();
        neg_slots.sort();
        if sorted != neg_slots {
            return Err(Error::Config(format!(
                "template {positive:?} and its negation {negated:?} use different slots"
            )));
        }
        if slots.is_empty() {
            return Err(Error::Config(format!("template {positive:?} has no slots")));
        }
        Ok(Self {
            positive: positive.to_string(),
            negated: negated.to_string(),
            slots,
            positive_re: pattern_regex(positive)?,
            negated_re: pattern_regex(negated)?,
        })
    }

    pub fn fill(&self, polarity: Polarity, values: &BTreeMap<String, String>) -> String {
        let mut out = match polarity {
            Polarity::Positive => self.positive.clone(),
            Polarity::Negated => self.negated.clone(),
        };
        for (k, v) in values {
            out = out.replace(&format!("{{{k}}}"), v);
        }
        out
    }

    fn capture(&self, text: &str, polarity: Polarity) -> Option<BTreeMap<String, String>> {
        let re = match polarity {
            Polarity::Positive => &self.positive_re,
            Polarity::Negated => &self.negated_re,
        };
        let caps = re.captures(text)?;
        Some(
            self.slots
                .iter()
                .map(|s| (s.clone(), caps[s.as_str()].to_string()))
                .collect(),
        )
    }

    fn slot_set(&self) -> HashSet<&str> {
        self.slots.iter().map(String::as_str).collect()
    }
}

fn slot_names(pattern: &str) -> Vec<String> {
    let re = Regex::new(r"\{([a-z_]+)\}").expect("static regex");
    re.captures_iter(pattern).map(|c| c[1].to_string()).collect()
}

fn pattern_regex(pattern: &str) -> Result<Regex> {
    let slot = Regex::new(r"\{([a-z_]+)\}").expect("static regex");
    let mut re = String::from("^");
    let mut last = 0;
    for m in slot.captures_iter(pattern) {
        let whole = m.get(0).expect("group 0");
        re.push_str(&regex::escape(&pattern[last..whole.start()]));
        re.push_str(&format!("(?P<{}>.+?)", &m[1]));
        last = whole.end();
    }
    re.push_str(&regex::escape(&pattern[last..]));
    re.push('$');
    Regex::new(&re).map_err(|e| Error::Config(format!("bad template {pattern:?}: {e}")))
}

/// Slot fillers for one entity, tagged with the truth of the filled positive
/// pattern. `pinned` rows are always included by the sampler.
#[derive(Debug, Clone)]
pub struct EntityRow {
    pub values: BTreeMap<String, String>,
    pub label: bool,
    pub pinned: bool,
}

impl EntityRow {
    pub fn new(pairs: &[(&str, &str)], label: bool) -> Self {
        Self {
            values: pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
            label,
            pinned: false,
        }
    }

    pub fn pinned(mut self) -> Self {
        self.pinned = true;
        self
    }
}

#[derive(Debug, Clone)]
pub struct TemplateTable {
    pub name: String,
    pub templates: Vec<Template>,
    pub rows: Vec<EntityRow>,
}

#[derive(Debug, Clone)]
pub(crate) struct Candidate {
    pub text: String,
    pub label: bool,
    pub pinned: bool,
}

impl TemplateTable {
    pub fn new(name: &str, templates: Vec<Template>, rows: Vec<EntityRow>) -> Self {
        Self {
            name: name.to_string(),
            templates,
            rows,
        }
    }

    pub(crate) fn check(&self) -> Result<()> {
        if self.templates.is_empty() || self.rows.is_empty() {
            return Err(Error::Config(format!(
                "template table {:?} needs at least one template and one row",
                self.name
            )));
        }
        Ok(())
    }

    /// Every distinct (template, row) fill, in table order. A pinned row is
    /// pinned only for the first template it fills.
    pub(crate) fn candidates(&self) -> Vec<Candidate> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for row in &self.rows {
            let keys: HashSet<&str> = row.values.keys().map(String::as_str).collect();
            let mut first = true;
            for t in &self.templates {
                if t.slot_set() != keys {
                    continue;
                }
                let text = t.fill(Polarity::Positive, &row.values);
                if seen.insert(text.clone()) {
                    out.push(Candidate {
                        text,
                        label: row.label,
                        pinned: row.pinned && first,
                    });
                }
                first = false;
            }
        }
        out
    }

    /// All true sentences the table can express, in both polarities.
    pub fn true_sentences(&self) -> Vec<String> {
        let mut out = Vec::new();
        for row in &self.rows {
            let keys: HashSet<&str> = row.values.keys().map(String::as_str).collect();
            for t in self.templates.iter().filter(|t| t.slot_set() == keys) {
                let polarity = if row.label {
                    Polarity::Positive
                } else {
                    Polarity::Negated
                };
                out.push(t.fill(polarity, &row.values));
            }
        }
        out
    }

    pub(crate) fn swap_polarity(&self, text: &str, from: Polarity) -> Option<String> {
        let to = match from {
            Polarity::Positive => Polarity::Negated,
            Polarity::Negated => Polarity::Positive,
        };
        self.templates
            .iter()
            .find_map(|t| t.capture(text, from).map(|values| t.fill(to, &values)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mismatched_slots_rejected() {
        assert!(Template::new("{a} is {b}.", "{a} is not {c}.").is_err());
        assert!(Template::new("Nothing.", "Not nothing.").is_err());
    }

    #[test]
    fn capture_and_refill() {
        let t = Template::new("{x} orbits {y}.", "{x} doesn't orbit {y}.").unwrap();
        let caps = t.capture("The moon orbits the earth.", Polarity::Positive).unwrap();
        assert_eq!(caps["x"], "The moon");
        assert_eq!(t.fill(Polarity::Negated, &caps), "The moon doesn't orbit the earth.");
        assert!(t.capture("The moon circles the earth.", Polarity::Positive).is_none());
    }

    #[test]
    fn regex_metacharacters_in_literals_are_escaped() {
        let t = Template::new("{x} costs $5 (approx.).", "{x} does not cost $5 (approx.).").unwrap();
        let caps = t.capture("Tea costs $5 (approx.).", Polarity::Positive).unwrap();
        assert_eq!(caps["x"], "Tea");
    }
}
